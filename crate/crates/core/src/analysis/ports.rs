use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::state::WaveFunction;
use serde::{Deserialize, Serialize};

/// Default lower bound on the summed raw port population before a warning is raised.
pub const DEFAULT_POPULATION_FLOOR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub label: String,
    /// Nominal momentum of the port in units of ħk.
    pub momentum_hk: f64,
    pub center: f64,
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortPopulations {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Σ raw fell below the configured floor.
    pub low_total: bool,
}

fn check_ports(grid: &Grid, ports: &[Port]) -> Result<()> {
    for p in ports {
        if !(p.half_width > 0.0) {
            return Err(Error::Measurement(format!("port `{}` has non-positive width", p.label)));
        }
        if p.center - p.half_width < grid.x_min() || p.center + p.half_width > grid.x_max() {
            return Err(Error::Measurement(format!(
                "port `{}` [{:e}, {:e}] leaves the grid",
                p.label,
                p.center - p.half_width,
                p.center + p.half_width
            )));
        }
    }
    let mut iv: Vec<(f64, f64, &str)> =
        ports.iter().map(|p| (p.center - p.half_width, p.center + p.half_width, p.label.as_str())).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in iv.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::Measurement(format!("ports `{}` and `{}` overlap", w[0].2, w[1].2)));
        }
    }
    Ok(())
}

/// Trapezoid integral of a sampled density over [a, b].
fn integrate(grid: &Grid, density: &[f64], a: f64, b: f64) -> f64 {
    let i0 = ((a - grid.x_min()) / grid.dx()).ceil().max(0.0) as usize;
    let i1 = (((b - grid.x_min()) / grid.dx()).floor() as usize).min(grid.n_points() - 1);
    if i1 <= i0 {
        return 0.0;
    }
    let s: f64 = density[i0..=i1].iter().sum();
    (s - 0.5 * (density[i0] + density[i1])) * grid.dx()
}

pub fn port_populations_density(
    grid: &Grid,
    density: &[f64],
    ports: &[Port],
    floor: f64,
) -> Result<PortPopulations> {
    check_ports(grid, ports)?;
    let raw: Vec<f64> = ports.iter().map(|p| integrate(grid, density, p.center - p.half_width, p.center + p.half_width)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Measurement("no population inside the port windows".into()));
    }
    let normalized = raw.iter().map(|r| r / total).collect();
    Ok(PortPopulations { raw, normalized, low_total: total < floor })
}

/// Raw and loss-normalized populations of position-space ports.
pub fn port_populations(psi: &WaveFunction, ports: &[Port]) -> Result<PortPopulations> {
    port_populations_density(psi.grid(), &psi.density(), ports, DEFAULT_POPULATION_FLOOR)
}

/// Snaps each predicted centre to the density maximum within ±half_width/2.
pub fn detect_ports(grid: &Grid, density: &[f64], predictions: &[Port]) -> Vec<Port> {
    predictions
        .iter()
        .map(|p| {
            let lo = grid.index_of(p.center - 0.5 * p.half_width);
            let hi = grid.index_of(p.center + 0.5 * p.half_width);
            let best = (lo..=hi).max_by(|&a, &b| density[a].total_cmp(&density[b])).unwrap_or(lo);
            let mut q = p.clone();
            if density[best] > 0.0 {
                q.center = grid.x()[best];
            }
            q
        })
        .collect()
}

/// Half of the smallest distance between a main port and any other endpoint.
pub fn default_half_width(main: &[f64], others: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &a) in main.iter().enumerate() {
        for (j, &b) in main.iter().enumerate() {
            if i != j {
                best = best.min((a - b).abs());
            }
        }
        for &b in others {
            best = best.min((a - b).abs());
        }
    }
    0.5 * best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::state::gaussian_packet;
    use crate::units::Species;
    use num_complex::Complex64;

    fn two_packets() -> WaveFunction {
        let s = Species::rb87();
        let g = make_grid(-100e-6, 100e-6, 4096).unwrap();
        let a = gaussian_packet(&g, 0.1 * s.hbar_k(), -40e-6, 0.0).unwrap();
        let b = gaussian_packet(&g, 0.1 * s.hbar_k(), 40e-6, 0.0).unwrap();
        let amps = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x + y).collect();
        let mut psi = WaveFunction::new(g, amps, 0.0).unwrap();
        psi.normalize();
        psi
    }

    fn port(label: &str, c: f64, w: f64) -> Port {
        Port { label: label.into(), momentum_hk: 0.0, center: c, half_width: w }
    }

    #[test]
    fn equal_packets_split_evenly() {
        let psi = two_packets();
        let r = port_populations(&psi, &[port("a", -40e-6, 30e-6), port("b", 40e-6, 30e-6)]).unwrap();
        assert!((r.normalized[0] - 0.5).abs() < 1e-12);
        assert!((r.raw[0] + r.raw[1] - 1.0).abs() < 1e-10);
        assert!(!r.low_total);
    }

    #[test]
    fn invariant_under_rescaling() {
        let psi = two_packets();
        let ports = [port("a", -40e-6, 30e-6), port("b", 45e-6, 30e-6)];
        let r1 = port_populations(&psi, &ports).unwrap();
        let mut scaled = psi.clone();
        scaled.amplitudes_mut().iter_mut().for_each(|z| *z *= Complex64::new(0.0, 3.7));
        let r2 = port_populations(&scaled, &ports).unwrap();
        for (a, b) in r1.normalized.iter().zip(&r2.normalized) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shifted_window_bounded_by_tail() {
        let psi = two_packets();
        let sym = port_populations(&psi, &[port("a", -40e-6, 30e-6), port("b", 40e-6, 30e-6)]).unwrap();
        let shifted = port_populations(&psi, &[port("a", -38e-6, 30e-6), port("b", 40e-6, 30e-6)]).unwrap();
        // Gaussian tail beyond 28 µm of a 0.62 µm packet is negligible.
        assert!((sym.raw[0] - shifted.raw[0]).abs() < 1e-12);
    }

    #[test]
    fn overlap_and_bounds_rejected() {
        let psi = two_packets();
        assert!(port_populations(&psi, &[port("a", 0.0, 30e-6), port("b", 40e-6, 30e-6)]).is_err());
        assert!(port_populations(&psi, &[port("a", 90e-6, 30e-6)]).is_err());
    }

    #[test]
    fn low_total_flag() {
        let psi = two_packets();
        let r = port_populations_density(psi.grid(), &psi.density(), &[port("a", -40e-6, 30e-6)], 0.9).unwrap();
        assert!(r.low_total);
        assert_eq!(r.normalized, vec![1.0]);
    }

    #[test]
    fn detection_snaps_to_peak() {
        let psi = two_packets();
        let found = detect_ports(psi.grid(), &psi.density(), &[port("a", -35e-6, 20e-6)]);
        assert!((found[0].center + 40e-6).abs() < psi.grid().dx());
    }

    #[test]
    fn half_width_rule() {
        assert_eq!(default_half_width(&[20.0, 60.0], &[0.0, 40.0, 80.0]), 10.0);
    }
}
