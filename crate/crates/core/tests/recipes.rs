use lightpulse::config;
use lightpulse::sequences::geometry_by_name;
use std::path::PathBuf;

fn recipes() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../recipes");
    let mut v: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("recipes directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn every_recipe_loads_and_schedules() {
    let all = recipes();
    assert!(all.len() >= 10);
    for path in all {
        let cfg = config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if let Some(spec) = &cfg.sequence {
            spec.numerics.validate().unwrap();
            let g = geometry_by_name(&spec.geometry).unwrap();
            let sched = g.schedule(spec).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(sched.t_end > 0.0, "{}", path.display());
        }
        if cfg.gradiometer.is_some() {
            let g = cfg.gradiometer_spec().unwrap();
            assert!(g.delta_k.len() >= 3 && g.delta_k[0] == 0.0);
        }
        if cfg.trapped.is_some() {
            cfg.trapped_spec().unwrap();
        }
    }
}

#[test]
fn recipe_manifest_form_reloads() {
    for path in recipes() {
        let cfg = config::load(&path).unwrap();
        let again = config::from_value(cfg.to_value()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
    }
}
