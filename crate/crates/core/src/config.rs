//! Run configuration: TOML (or a JSON manifest) with optional unit strings.
//!
//! Any string of the form "<number> <unit>" is converted to SI before the
//! typed structures are deserialized, e.g. `omega = "1.0573 wr"`,
//! `sigma_p = "0.01 hk"`, `tau = "25 us"`. Recoil units refer to the
//! configured species.

use crate::calibration::{reference_grid, CalibrationProblem};
use crate::error::{Error, Result};
use crate::sequences::gradiometer::bragg_delta_k;
use crate::sequences::{GradiometerSpec, SequenceSpec, TrappedSpec};
use crate::units::{g1d_from_transverse, Species, ATOMIC_MASS_UNIT, BOHR_RADIUS, HBAR};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::f64::consts::PI;
use std::path::Path;

/// Tables that configure a subcommand rather than the sequence.
const COMMAND_TABLES: [&str; 6] = ["fringe", "calibrate", "gradiometer", "trapped", "converge", "benchmark"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FringeConfig {
    #[serde(default = "default_fringe_points")]
    pub points: usize,
    /// Index of the pulse that receives the scanned phase.
    #[serde(default)]
    pub phase_pulse: Option<usize>,
}

fn default_fringe_points() -> usize {
    24
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradiometerConfig {
    pub upper_offset: f64,
    #[serde(default)]
    pub lower_offset: f64,
    /// Absolute mirror corrections [1/m].
    #[serde(default)]
    pub delta_k: Option<Vec<f64>>,
    /// Corrections as fractions of Γ·k_eff·T²/2.
    #[serde(default)]
    pub delta_k_fraction: Option<Vec<f64>>,
    #[serde(default = "default_grad_points")]
    pub fringe_points: usize,
}

fn default_grad_points() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrappedConfig {
    pub imbalances: Vec<f64>,
    #[serde(default)]
    pub bracket: Option<(f64, f64)>,
    #[serde(default)]
    pub fringe_points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub dt: Vec<f64>,
    pub dx: Vec<f64>,
    /// Momentum class in ħk relative to the initial momentum.
    pub observable: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub sizes: Vec<usize>,
    #[serde(default = "default_bench_steps")]
    pub steps: u64,
    #[serde(default = "default_bench_repeats")]
    pub repeats: usize,
}

fn default_bench_steps() -> u64 {
    50
}

fn default_bench_repeats() -> usize {
    3
}

/// Fully resolved configuration; serializes to plain SI numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub species: Species,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fringe: Option<FringeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrationProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradiometer: Option<GradiometerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trapped: Option<TrappedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkConfig>,
}

impl Config {
    pub fn sequence(&self) -> Result<&SequenceSpec> {
        self.sequence.as_ref().ok_or_else(|| Error::config("geometry", "no sequence is configured"))
    }

    fn section<'a, T>(&self, v: &'a Option<T>, name: &str) -> Result<&'a T> {
        v.as_ref().ok_or_else(|| Error::config(name, format!("missing [{name}] table")))
    }

    pub fn gradiometer_spec(&self) -> Result<GradiometerSpec> {
        let g = self.section(&self.gradiometer, "gradiometer")?;
        let base = self.sequence()?.clone();
        let delta_k = match (&g.delta_k, &g.delta_k_fraction) {
            (Some(d), None) => d.clone(),
            (None, Some(f)) => {
                let unit = bragg_delta_k(&base);
                f.iter().map(|x| x * unit).collect()
            }
            _ => {
                return Err(Error::config(
                    "gradiometer.delta_k",
                    "give exactly one of delta_k and delta_k_fraction",
                ))
            }
        };
        Ok(GradiometerSpec {
            base,
            upper_offset: g.upper_offset,
            lower_offset: g.lower_offset,
            delta_k,
            fringe_points: g.fringe_points,
        })
    }

    pub fn trapped_spec(&self) -> Result<TrappedSpec> {
        let t = self.section(&self.trapped, "trapped")?;
        Ok(TrappedSpec {
            base: self.sequence()?.clone(),
            imbalances: t.imbalances.clone(),
            bracket: t.bracket.unwrap_or((0.7, 1.3)),
            fringe_points: t.fringe_points.unwrap_or(12),
        })
    }

    pub fn calibration(&self) -> Result<&CalibrationProblem> {
        self.section(&self.calibrate, "calibrate")
    }

    pub fn converge(&self) -> Result<&ConvergeConfig> {
        self.section(&self.converge, "converge")
    }

    pub fn benchmark(&self) -> Result<&BenchmarkConfig> {
        self.section(&self.benchmark, "benchmark")
    }

    /// JSON form written into run manifests and accepted by `load`.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Reads a TOML config, or a JSON manifest carrying a `config` object.
pub fn load(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    if path.extension().map_or(false, |e| e == "json") {
        let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
        if let Some(c) = v.get_mut("config") {
            v = c.take();
        }
        from_value(v)
    } else {
        parse_toml(&text)
    }
}

pub fn parse_toml(text: &str) -> Result<Config> {
    let t: toml::Value = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
    from_value(serde_json::to_value(t).map_err(|e| Error::config("config", e.to_string()))?)
}

fn typed<T: DeserializeOwned>(v: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        Error::config(path, e.into_inner().to_string())
    })
}

/// Resolves units and aliases and deserializes the typed configuration.
pub fn from_value(v: Value) -> Result<Config> {
    let Value::Object(mut root) = v else {
        return Err(Error::config("config", "top level must be a table"));
    };
    // Manifest form nests the sequence; lift it back to the top level.
    if let Some(Value::Object(seq)) = root.remove("sequence") {
        for (k, v) in seq {
            if k != "species" {
                root.insert(k, v);
            }
        }
    }
    let species = species_from(root.remove("species"))?;
    let mut root = Value::Object(root);
    convert_units(&mut root, &species, "")?;
    let Value::Object(mut root) = root else { unreachable!() };
    let mut tables = Map::new();
    for name in COMMAND_TABLES {
        if let Some(t) = root.remove(name) {
            tables.insert(name.into(), t);
        }
    }
    rename(&mut root, "initial_state", "initial");
    if let Some(Value::Object(mf)) = root.get_mut("mean_field") {
        resolve_mean_field(mf)?;
    }
    let species_value = serde_json::to_value(&species).expect("species serializes");
    let sequence = if root.is_empty() {
        None
    } else {
        root.insert("species".into(), species_value.clone());
        Some(typed::<SequenceSpec>(Value::Object(root), "")?)
    };
    let mut take = |name: &str| tables.remove(name);
    let fringe = take("fringe").map(|v| typed(v, "fringe")).transpose()?;
    let calibrate = match take("calibrate") {
        Some(Value::Object(mut c)) => {
            c.insert("species".into(), species_value.clone());
            if !c.contains_key("grid") {
                let order = c.get("order").and_then(Value::as_u64).unwrap_or(1) as u32;
                let grid = reference_grid(&species, order.max(2));
                c.insert("grid".into(), serde_json::to_value(grid).expect("grid serializes"));
            }
            Some(typed(Value::Object(c), "calibrate")?)
        }
        Some(_) => return Err(Error::config("calibrate", "must be a table")),
        None => None,
    };
    let gradiometer = take("gradiometer").map(|v| typed(v, "gradiometer")).transpose()?;
    let trapped = take("trapped").map(|v| typed(v, "trapped")).transpose()?;
    let converge = take("converge").map(|v| typed(v, "converge")).transpose()?;
    let benchmark = take("benchmark").map(|v| typed(v, "benchmark")).transpose()?;
    Ok(Config { species, sequence, fringe, calibrate, gradiometer, trapped, converge, benchmark })
}

fn rename(m: &mut Map<String, Value>, from: &str, to: &str) {
    if let Some(v) = m.remove(from) {
        m.insert(to.into(), v);
    }
}

/// Starts from Rb87 and overrides the given keys.
fn species_from(v: Option<Value>) -> Result<Species> {
    let mut base = serde_json::to_value(Species::rb87()).expect("species serializes");
    if let Some(mut v) = v {
        let rb = Species::rb87();
        convert_units(&mut v, &rb, "species")?;
        let Value::Object(over) = v else {
            return Err(Error::config("species", "must be a table"));
        };
        let Value::Object(b) = &mut base else { unreachable!() };
        for (k, val) in over {
            b.insert(k, val);
        }
    }
    typed(base, "species")
}

/// Accepts `a_eff` and `omega_perp` in place of `g1d`.
fn resolve_mean_field(mf: &mut Map<String, Value>) -> Result<()> {
    let a = mf.remove("a_eff");
    let w = mf.remove("omega_perp");
    match (a, w) {
        (None, None) => Ok(()),
        (Some(a), Some(w)) => {
            if mf.contains_key("g1d") {
                return Err(Error::config("mean_field.g1d", "give g1d or a_eff with omega_perp, not both"));
            }
            let num = |v: &Value, p: &str| v.as_f64().ok_or_else(|| Error::config(p, "expected a number"));
            let g = g1d_from_transverse(num(&a, "mean_field.a_eff")?, num(&w, "mean_field.omega_perp")?);
            mf.insert("g1d".into(), Value::from(g));
            Ok(())
        }
        _ => Err(Error::config("mean_field", "a_eff and omega_perp must be given together")),
    }
}

/// SI value of one unit symbol.
pub fn unit_factor(unit: &str, species: &Species) -> Option<f64> {
    let two_pi = 2.0 * PI;
    Some(match unit {
        "" | "s" | "m" | "rad" | "rad/s" | "1/m" | "m/s" | "m/s^2" | "1/s^2" | "kg" | "J" | "J*m" => 1.0,
        "ms" => 1e-3,
        "us" | "µs" => 1e-6,
        "ns" => 1e-9,
        "mm" => 1e-3,
        "um" | "µm" => 1e-6,
        "nm" => 1e-9,
        "lambda" => species.lambda_light,
        "Hz" => two_pi,
        "kHz" => two_pi * 1e3,
        "mrad" => 1e-3,
        "wr" => species.omega_r(),
        "hk" => species.hbar_k(),
        "vr" => species.v_r(),
        "mm/s" => 1e-3,
        "um/s" => 1e-6,
        "k" => species.k(),
        "u" => ATOMIC_MASS_UNIT,
        "a0" => BOHR_RADIUS,
        "a_s" => species.a_s,
        "hbar*wr" => HBAR * species.omega_r(),
        _ => return None,
    })
}

/// Parses "<number> <unit>"; `None` when the string does not start with a number.
pub fn parse_quantity(s: &str, species: &Species) -> Option<std::result::Result<f64, String>> {
    let s = s.trim();
    let (num, unit) = match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim()),
        None => (s, ""),
    };
    let x: f64 = num.parse().ok()?;
    Some(match unit_factor(unit, species) {
        Some(f) => Ok(x * f),
        None => Err(format!("unknown unit `{unit}` in \"{s}\"")),
    })
}

fn convert_units(v: &mut Value, species: &Species, path: &str) -> Result<()> {
    match v {
        Value::String(s) => {
            if let Some(r) = parse_quantity(s, species) {
                let x = r.map_err(|m| Error::config(path, m))?;
                *v = Value::from(x);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter_mut().enumerate() {
                convert_units(x, species, &format!("{path}[{i}]"))?;
            }
        }
        Value::Object(m) => {
            for (k, x) in m.iter_mut() {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                convert_units(x, species, &p)?;
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MZ: &str = r#"
geometry = "mach_zehnder"

[grid]
x_min = "-0.5 mm"
x_max = "1 mm"
n_points = 4096

[initial_state]
kind = "gaussian"
sigma_p = "0.01 hk"

[params]
order = 1
t_interrogation = "1 ms"
tof = "2 ms"
splitter = { omega = "1.0573 wr", tau = "25 us" }
mirror = { omega = "1.0573 wr", tau = "50 us" }

[numerics]
order = "strang"
dt_interaction = "1 us"
dt_free = "10 us"

[fringe]
points = 8
"#;

    #[test]
    fn units_resolve_against_species() {
        let c = parse_toml(MZ).unwrap();
        let s = c.sequence().unwrap();
        let wr = Species::rb87().omega_r();
        assert!((s.params.splitter.omega / wr - 1.0573).abs() < 1e-12);
        assert!((s.params.mirror.tau - 50e-6).abs() < 1e-18);
        assert!((s.grid.x_min + 0.5e-3).abs() < 1e-15);
        assert_eq!(c.fringe.as_ref().unwrap().points, 8);
        assert!((parse_quantity("2 Hz", &Species::rb87()).unwrap().unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!(parse_quantity("gaussian", &Species::rb87()).is_none());
    }

    #[test]
    fn manifest_form_round_trips() {
        let c = parse_toml(MZ).unwrap();
        let again = from_value(c.to_value()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = MZ.replace("n_points = 4096", "n_points = \"many\"");
        match parse_toml(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "grid.n_points"),
            other => panic!("{other:?}"),
        }
        let bad = MZ.replace("\"25 us\"", "\"25 fortnights\"");
        match parse_toml(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "params.splitter.tau");
                assert!(message.contains("fortnights"));
            }
            other => panic!("{other:?}"),
        }
        let bad = MZ.replace("points = 8", "points = 8\ncolour = 1");
        assert!(matches!(parse_toml(&bad), Err(Error::Config { path, .. }) if path.starts_with("fringe")));
    }

    #[test]
    fn mean_field_from_transverse_parameters() {
        let text = format!("{MZ}\n[mean_field]\nn_atoms = 6e4\na_eff = \"0.01 a_s\"\nomega_perp = \"50 Hz\"\n");
        let c = parse_toml(&text).unwrap();
        let mf = c.sequence().unwrap().mean_field.unwrap();
        let s = Species::rb87();
        assert!((mf.g1d - g1d_from_transverse(0.01 * s.a_s, 2.0 * PI * 50.0)).abs() < 1e-50);
    }

    #[test]
    fn calibrate_only_config() {
        let c = parse_toml(
            "[calibrate]\norder = 1\ntau = \"25 us\"\ntarget = \"half\"\nsigma_p = \"0.01 hk\"\nbracket = [\"0.5 wr\", \"1.6 wr\"]\nnumerics = { order = \"strang\", dt_interaction = \"1 us\", dt_free = \"1 us\" }\n",
        )
        .unwrap();
        assert!(c.sequence.is_none());
        let p = c.calibration().unwrap();
        assert_eq!(p.grid, reference_grid(&c.species, 2));
    }
}
