//! Discretization study of one momentum-class population over a (dt, dx) table.

use super::{run_prepared, Prepared, SequenceSpec};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCell {
    pub dt: f64,
    pub dx: f64,
    pub n_points: usize,
    pub value: f64,
    /// |value − value at the finest (dt, dx)|.
    pub deviation: f64,
    /// Resolution checks that failed on this grid.
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    /// Observed momentum class, in ħk relative to the initial momentum.
    pub observable_hk: f64,
    pub cells: Vec<ConvergenceCell>,
    /// Change between the two finest time steps at the finest dx.
    pub dt_pair_deviation: Option<f64>,
    /// Change between the two finest dx at the finest time step.
    pub dx_pair_deviation: Option<f64>,
}

impl ConvergenceTable {
    pub fn cell(&self, dt: f64, dx: f64) -> Option<&ConvergenceCell> {
        self.cells.iter().find(|c| c.dt == dt && c.dx == dx)
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup();
    s
}

/// Runs `spec` for every (dt, dx) and reports P(observable_hk) at the end.
///
/// `dt` sets the interaction step; the free step keeps its ratio to it.
/// Grids keep the configured extent and are rounded up to a power of two.
pub fn convergence_scan(spec: &SequenceSpec, dts: &[f64], dxs: &[f64], observable_hk: f64) -> Result<ConvergenceTable> {
    if dts.is_empty() || dxs.is_empty() {
        return Err(Error::config("converge", "dt and dx lists must be non-empty"));
    }
    if dts.iter().chain(dxs).any(|v| !(*v > 0.0)) {
        return Err(Error::config("converge", "dt and dx values must be positive"));
    }
    let ratio = spec.numerics.dt_free / spec.numerics.dt_interaction;
    let with = |dt: f64, dx: f64| {
        let mut s = spec.clone();
        s.grid = spec.grid.with_dx(dx);
        s.numerics.dt_interaction = dt;
        s.numerics.dt_free = dt * ratio;
        s
    };
    let hk = spec.species.hbar_k();
    let center = spec.initial.momentum() + observable_hk * hk;
    // One initial state per grid; the ground-state solve does not depend on dt.
    let per_dx: Vec<Vec<ConvergenceCell>> = dxs
        .par_iter()
        .map(|&dx| {
            let first = Prepared::new(&with(dts[0], dx))?;
            let initial = first.initial.clone();
            let flags: Vec<String> =
                first.resolution.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
            dts.par_iter()
                .map(|&dt| {
                    let s = with(dt, dx);
                    let prep = Prepared::with_initial(&s, Some(initial.clone()))?;
                    let r = run_prepared(&prep)?;
                    let value = r.final_state.momentum_spectrum().bin(center, 0.5 * hk);
                    Ok(ConvergenceCell {
                        dt,
                        dx,
                        n_points: s.grid.n_points,
                        value,
                        deviation: 0.0,
                        flags: flags.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut cells: Vec<ConvergenceCell> = per_dx.into_iter().flatten().collect();
    let (sdt, sdx) = (sorted(dts), sorted(dxs));
    let value = |dt: f64, dx: f64| cells.iter().find(|c| c.dt == dt && c.dx == dx).map(|c| c.value);
    let best = value(sdt[0], sdx[0]).expect("finest cell exists");
    let dt_pair_deviation = (sdt.len() > 1).then(|| (value(sdt[1], sdx[0]).unwrap() - best).abs());
    let dx_pair_deviation = (sdx.len() > 1).then(|| (value(sdt[0], sdx[1]).unwrap() - best).abs());
    for c in &mut cells {
        c.deviation = (c.value - best).abs();
    }
    Ok(ConvergenceTable { observable_hk, cells, dt_pair_deviation, dx_pair_deviation })
}
