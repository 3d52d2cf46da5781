//! Smallest eigenvalue of the cell Laplacian with zero values on solid cells.

use serde::{Deserialize, Serialize};

use super::fdm::{Axis1d, Fdm};
use super::krylov::pcg;
use super::ops::CellLaplacian;
use super::spectral::{AxisBc, SpectralPoisson};
use super::SolveReport;
use crate::error::{Error, Result};
use crate::geometry::{Masks, StaggeredGrid};
use crate::numeric;

/// Condition on the outer walls of a wall grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallCondition {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    /// Set when constants lie in the kernel (no solid cells, no Dirichlet walls).
    pub degenerate: bool,
    pub vector: Vec<f64>,
    pub report: SolveReport,
}

enum Precond {
    Spectral(SpectralPoisson),
    Fdm(Fdm),
}

fn preconditioner(grid: &StaggeredGrid, walls: WallCondition, shift: f64) -> Precond {
    let periodic = grid.is_periodic();
    if grid.is_uniform() {
        let bc = match (periodic, walls) {
            (true, _) => AxisBc::Periodic,
            (false, WallCondition::Dirichlet) => AxisBc::Dirichlet,
            (false, WallCondition::Neumann) => AxisBc::Neumann,
        };
        Precond::Spectral(SpectralPoisson::new(grid.dims(), grid.spacing(), [bc; 3], [1.0; 3], shift))
    } else {
        let m = grid.metrics();
        let axes = [0, 1, 2].map(|d| Axis1d::cells(&m[d], periodic, walls == WallCondition::Dirichlet));
        Precond::Fdm(Fdm::new(axes, shift))
    }
}

/// Smallest eigenvalue of `−Δ_h` (per unit volume) on fluid cells, by
/// inverse power iteration with an inner preconditioned CG.
///
/// Convergence is declared when `‖Lx − λMx‖_{M⁻¹} ≤ tol·λ‖x‖_M`.
pub fn smallest_eigenvalue(
    grid: &StaggeredGrid,
    masks: &Masks,
    walls: WallCondition,
    tol: f64,
    max_iter: usize,
) -> Result<Eigenpair> {
    let sw = numeric::Stopwatch::start();
    let n = grid.n_cells();
    let dirichlet = !grid.is_periodic() && walls == WallCondition::Dirichlet;
    if !masks.has_solid_cells() && !dirichlet {
        let report = SolveReport { method: "degenerate".into(), tolerance: tol, ..Default::default() };
        return Ok(Eigenpair { lambda: 0.0, degenerate: true, vector: vec![1.0; n], report });
    }
    if masks.n_fluid_cells() == 0 {
        return Err(Error::InvalidConfig("no fluid cells".into()));
    }
    let lap = CellLaplacian::new(grid, &masks.cells, dirichlet);
    let vol: Vec<f64> = (0..n)
        .map(|c| {
            let [i, j, k] = grid.cell_ijk(c);
            grid.cell_volume(i, j, k)
        })
        .collect();
    let fluid = &masks.cells;
    let mask = |x: &mut [f64]| {
        for (v, f) in x.iter_mut().zip(fluid) {
            if !f {
                *v = 0.0;
            }
        }
    };
    let mnorm = |x: &[f64]| numeric::sum_by(n, |i| x[i] * x[i] * vol[i]).sqrt();

    // smooth positive start: the ground state has one sign
    let mut x: Vec<f64> = vec![1.0; n];
    mask(&mut x);
    let s = mnorm(&x);
    x.iter_mut().for_each(|v| *v /= s);

    let ext = grid.extent();
    let mut lambda = 1.0 / (ext[0] * ext[0] + ext[1] * ext[1] + ext[2] * ext[2]);
    let mut pre = preconditioner(grid, walls, lambda);
    let mut inner_total = 0;
    let mut rel = f64::INFINITY;
    let mut lx = vec![0.0; n];
    for it in 1..=max_iter {
        let b: Vec<f64> = (0..n).map(|i| vol[i] * x[i]).collect();
        let mut y = x.clone();
        let res = pcg(
            |v, out| lap.apply(v, out),
            |r, z| {
                let rs: Vec<f64> = (0..n).map(|i| if fluid[i] { r[i] } else { 0.0 }).collect();
                match &pre {
                    Precond::Spectral(sp) => {
                        let strong: Vec<f64> = (0..n).map(|i| rs[i] / vol[i]).collect();
                        sp.solve(&strong, z);
                    }
                    Precond::Fdm(f) => f.apply(&rs, z),
                }
                mask(z);
            },
            |_| {},
            &b,
            &mut y,
            (0.01 * tol).max(1e-14),
            100 * n.max(10),
        );
        inner_total += res.iterations;
        if !res.converged {
            let report = SolveReport {
                method: "inverse-power".into(),
                iterations: it,
                residual_momentum: res.relative_residual,
                tolerance: tol,
                wall_time: sw.seconds(),
                ..Default::default()
            };
            return Err(Error::NoConvergence { what: "eigen inner solve".into(), report: Box::new(report) });
        }
        let s = mnorm(&y);
        x = y.iter().map(|v| v / s).collect();
        lap.apply(&x, &mut lx);
        lambda = numeric::dot(&x, &lx);
        let r: f64 = numeric::sum_by(n, |i| {
            if fluid[i] {
                let d = lx[i] - lambda * vol[i] * x[i];
                d * d / vol[i]
            } else {
                0.0
            }
        })
        .sqrt();
        rel = r / lambda.abs().max(f64::MIN_POSITIVE);
        log::debug!("inverse power {it}: λ = {lambda:.10e}, residual {rel:.3e}, inner {}", res.iterations);
        if rel <= tol {
            let report = SolveReport {
                method: "inverse-power".into(),
                iterations: it,
                residual_momentum: rel,
                residual_div: 0.0,
                tolerance: tol,
                wall_time: sw.seconds(),
                mean_force_removed: None,
            };
            log::debug!("eigen solve used {inner_total} inner iterations");
            return Ok(Eigenpair { lambda, degenerate: false, vector: x, report });
        }
        // shift the preconditioner towards the current estimate
        if it % 3 == 0 {
            pre = preconditioner(grid, walls, 0.5 * lambda);
        }
    }
    let report = SolveReport {
        method: "inverse-power".into(),
        iterations: max_iter,
        residual_momentum: rel,
        tolerance: tol,
        wall_time: sw.seconds(),
        ..Default::default()
    };
    Err(Error::NoConvergence { what: "inverse power iteration".into(), report: Box::new(report) })
}
