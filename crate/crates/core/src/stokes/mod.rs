//! Saddle-point and elliptic kernels on staggered grids.

pub mod aniso;
pub mod eigen;
pub mod fdm;
pub mod krylov;
pub mod ops;
pub mod periodic;
pub mod saddle;
pub mod spectral;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{face_volumes, ScalarField, VectorField};
use crate::geometry::{Masks, StaggeredGrid};
use crate::numeric;
use ops::Ops;

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub iterations: usize,
    /// Relative momentum (or elliptic) residual.
    pub residual_momentum: f64,
    /// Divergence residual, `‖div u‖ / ‖∇u‖` for Stokes solves.
    pub residual_div: f64,
    pub tolerance: f64,
    pub wall_time: f64,
    /// Per-component mean removed from a periodic force, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_force_removed: Option<[f64; 3]>,
}

/// Saddle-point iteration used by [`solve_stokes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// FFT on hole-free periodic grids, capacitance CG on perforated
    /// periodic grids, MINRES otherwise.
    #[default]
    Auto,
    Fft,
    Capacitance,
    Minres,
    Uzawa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StokesOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for StokesOptions {
    fn default() -> Self {
        StokesOptions { tol: 1e-8, max_iter: 10_000, method: Method::Auto }
    }
}

/// Stokes solution with its report.
#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub u: VectorField,
    pub p: ScalarField,
    pub report: SolveReport,
}

fn resolve_method(grid: &StaggeredGrid, masks: &Masks, m: Method) -> Result<Method> {
    let has_solid = masks.faces.iter().any(|f| f.iter().any(|x| !*x));
    let fft_ok = grid.is_periodic() && grid.is_uniform();
    let chosen = match m {
        Method::Auto if fft_ok && !has_solid => Method::Fft,
        Method::Auto if fft_ok => Method::Capacitance,
        Method::Auto => Method::Minres,
        other => other,
    };
    match chosen {
        Method::Fft if !fft_ok || has_solid => {
            Err(Error::InvalidConfig("FFT Stokes needs a hole-free uniform periodic grid".into()))
        }
        Method::Capacitance if !fft_ok => {
            Err(Error::InvalidConfig("capacitance Stokes needs a uniform periodic grid".into()))
        }
        Method::Uzawa if !has_solid => {
            Err(Error::InvalidConfig("Uzawa needs walls or holes to fix the velocity".into()))
        }
        Method::Minres if grid.is_periodic() && !has_solid => Ok(Method::Fft),
        c => Ok(c),
    }
}

/// Solves `-νΔu + ∇p = f`, `div u = 0` with `u = 0` on solid faces.
///
/// `force` is a force density sampled at faces. On periodic grids without
/// holes its per-component mean is removed (and recorded) and the mean
/// velocity is zero; with holes the obstacles carry the mean force. The
/// returned pressure has zero mean over fluid cells.
pub fn solve_stokes(
    grid: &StaggeredGrid,
    masks: &Masks,
    nu: f64,
    force: &VectorField,
    opts: &StokesOptions,
) -> Result<StokesSolution> {
    solve_stokes_lifted(grid, masks, nu, force, None, opts)
}

/// Boundary data for [`solve_stokes_lifted`]: a field whose values on solid
/// faces are the Dirichlet data, plus the tangential wall value per
/// component.
pub struct Lift<'a> {
    pub field: &'a VectorField,
    pub ghost: [f64; 3],
}

/// Inhomogeneous Dirichlet variant: the solution equals `lift.field` on solid
/// faces and `lift.ghost` on walls. Solved as a homogeneous problem for
/// `w = u − ℓ`.
pub fn solve_stokes_lifted(
    grid: &StaggeredGrid,
    masks: &Masks,
    nu: f64,
    force: &VectorField,
    lift: Option<&Lift>,
    opts: &StokesOptions,
) -> Result<StokesSolution> {
    force.check_grid(grid)?;
    if !(nu > 0.0) {
        return Err(Error::InvalidConfig(format!("viscosity must be positive, got {nu}")));
    }
    if masks.cells.len() != grid.n_cells() || (0..3).any(|a| masks.faces[a].len() != grid.n_faces(a)) {
        return Err(Error::GridMismatch("masks do not match the grid".into()));
    }
    if let Some(l) = lift {
        l.field.check_grid(grid)?;
    }
    masks.check_connected(grid)?;
    let method = resolve_method(grid, masks, opts.method)?;
    let sw = numeric::Stopwatch::start();
    let ops = Ops::new(grid, masks);
    let vols = face_volumes(grid);
    let mut f = force.clone();
    let mut mean_removed = None;
    if grid.is_periodic() && method == Method::Fft {
        let mut means = [0.0; 3];
        for a in 0..3 {
            means[a] = numeric::sum(&f.comps[a]) / f.comps[a].len() as f64;
            f.comps[a].iter_mut().for_each(|v| *v -= means[a]);
        }
        mean_removed = Some(means);
    }
    let o = ops.offsets();
    // momentum data b = M f - νK(ℓ), continuity data c = -D ℓ
    let mut b = vec![0.0; o[3]];
    for a in 0..3 {
        for i in 0..f.comps[a].len() {
            b[o[a] + i] = vols[a][i] * f.comps[a][i];
        }
    }
    let mut c = vec![0.0; grid.n_cells()];
    if let Some(l) = lift {
        let mut kl = VectorField::zeros(grid);
        ops.apply_k(l.field, l.ghost, &mut kl);
        for a in 0..3 {
            for i in 0..kl.comps[a].len() {
                b[o[a] + i] -= nu * kl.comps[a][i];
            }
        }
        ops.div_flat(&l.field.flatten(), &mut c);
        c.iter_mut().for_each(|v| *v = -*v);
    }
    ops.mask_faces(&mut b);
    saddle::project_continuity(&ops, &mut c);

    let (u_flat, p, iterations, converged, name) = match method {
        Method::Fft | Method::Capacitance => {
            if lift.is_some() {
                return Err(Error::InvalidConfig("lifted solves need a wall grid".into()));
            }
            let solver = periodic::PeriodicStokes::new(grid, nu)?;
            let fr = [&f.comps[0][..], &f.comps[1][..], &f.comps[2][..]];
            if method == Method::Fft {
                let (u, p) = solver.solve(&fr, [0.0; 3]);
                (u.concat(), p, 0, true, "fft")
            } else {
                let s = periodic::solve_with_holes(&solver, masks, &fr, opts.tol * 1e-2, opts.max_iter);
                (s.u.concat(), s.p, s.iterations, s.converged, "capacitance-cg")
            }
        }
        Method::Minres => {
            let s = saddle::solve_minres(&ops, nu, &b, &c, 0.1 * opts.tol, opts.max_iter);
            (s.u, s.p, s.iterations, s.converged, "minres")
        }
        Method::Uzawa => {
            let s = saddle::solve_uzawa(&ops, nu, &b, &c, 0.1 * opts.tol, opts.max_iter);
            (s.u, s.p, s.iterations, s.converged, "uzawa")
        }
        Method::Auto => unreachable!(),
    };
    let mut w = VectorField::from_flat(grid, &u_flat);
    w.apply_mask(masks);
    let mut p = ScalarField { dims: grid.dims(), data: p };
    p.remove_mean(grid, Some(masks));

    let (rm, _, ku) = saddle::residuals(&ops, nu, &w.flatten(), &p.data, &b, &c);
    let residual_momentum = rm / numeric::norm2(&b).max(ku).max(f64::MIN_POSITIVE);
    let mut u = w;
    let ghost = lift.map_or([0.0; 3], |l| l.ghost);
    if let Some(l) = lift {
        for a in 0..3 {
            for i in 0..u.comps[a].len() {
                u.comps[a][i] += l.field.comps[a][i];
                if !masks.faces[a][i] {
                    u.comps[a][i] = l.field.comps[a][i];
                }
            }
        }
    }
    let grad_norm = ops.energy(&u, &u, ghost, ghost).max(0.0).sqrt();
    let div = ops.div_l2(&u);
    // ‖∇u‖ ≲ L‖f‖/ν; a velocity at round-off of that scale (a pure gradient
    // force) is measured against the scale itself
    let ext = grid.extent();
    let reference = force.l2_norm(grid) * ext[0].max(ext[1]).max(ext[2]) / nu;
    let floor = f64::EPSILON.sqrt() * reference;
    let denom = grad_norm.max(floor);
    let residual_div = if denom > 0.0 { div / denom } else { div };
    let report = SolveReport {
        method: name.into(),
        iterations,
        residual_momentum,
        residual_div,
        tolerance: opts.tol,
        wall_time: sw.seconds(),
        mean_force_removed: mean_removed,
    };
    if !converged || residual_momentum > opts.tol || residual_div > opts.tol || u.has_non_finite() {
        return Err(Error::NoConvergence { what: format!("Stokes ({name})"), report: Box::new(report) });
    }
    Ok(StokesSolution { u, p, report })
}
