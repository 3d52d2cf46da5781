//! Density-dependent incompressible Darcy flow
//! `∂ₜρ + u·∇ρ = 0`, `u = ρAf − A∇p`, `div u = 0`.
//!
//! Each time level solves the elliptic problem for `p` from the current
//! density, rebuilds `u` on faces and transports `ρ` semi-Lagrangially.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::geometry::StaggeredGrid;
use crate::numeric;
use crate::stokes::aniso::{check_spd, solve_aniso_neumann, AnisoOperator};
use crate::stokes::SolveReport;

/// External force `f(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForceField {
    Zero,
    Constant {
        value: [f64; 3],
    },
    /// `amplitude · sin(2π k·x + phase)`.
    Sinusoidal {
        amplitude: [f64; 3],
        wavenumber: [f64; 3],
        #[serde(default)]
        phase: f64,
    },
    /// `∇φ` with `φ = amplitude · cos(2π k·x)`, sampled as the discrete face
    /// gradient of the cell values so that it is exactly conservative.
    Gradient {
        amplitude: f64,
        wavenumber: [f64; 3],
    },
    /// `base(x) · cos(ωt)`.
    Modulated {
        base: Box<ForceField>,
        omega: f64,
    },
    Sum {
        terms: Vec<ForceField>,
    },
    /// Sampled face frames, linear in time between `times`.
    Frames {
        times: Vec<f64>,
        frames: Vec<VectorField>,
    },
}

impl ForceField {
    pub fn validate(&self, grid: &StaggeredGrid, t_end: f64) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ForceField::Zero => Ok(()),
            ForceField::Constant { value } => check(finite(value), "force value"),
            ForceField::Sinusoidal { amplitude, wavenumber, phase } => {
                check(finite(amplitude) && finite(wavenumber) && phase.is_finite(), "sinusoidal force")
            }
            ForceField::Gradient { amplitude, wavenumber } => {
                check(amplitude.is_finite() && finite(wavenumber), "gradient force")
            }
            ForceField::Modulated { base, omega } => {
                check(omega.is_finite(), "force frequency")?;
                base.validate(grid, t_end)
            }
            ForceField::Sum { terms } => terms.iter().try_for_each(|t| t.validate(grid, t_end)),
            ForceField::Frames { times, frames } => {
                if times.is_empty() || times.len() != frames.len() {
                    return Err(Error::InvalidConfig("one time per force frame required".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidConfig("force frame times must increase".into()));
                }
                if times[0] > 0.0 || *times.last().unwrap() < t_end {
                    return Err(Error::InvalidConfig(format!(
                        "force frames cover [{}, {}], need [0, {t_end}]",
                        times[0],
                        times.last().unwrap()
                    )));
                }
                for f in frames {
                    f.check_grid(grid)?;
                    if f.has_non_finite() {
                        return Err(Error::NonFinite("force frame".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// The force on the faces of `grid` at time `t`.
    pub fn sample(&self, grid: &StaggeredGrid, t: f64) -> VectorField {
        match self {
            ForceField::Zero => VectorField::zeros(grid),
            ForceField::Constant { value } => VectorField::from_fn(grid, |_| *value),
            ForceField::Sinusoidal { amplitude, wavenumber, phase } => VectorField::from_fn(grid, |x| {
                let s = (2.0 * PI * dot3(*wavenumber, x) + phase).sin();
                amplitude.map(|a| a * s)
            }),
            ForceField::Gradient { amplitude, wavenumber } => {
                let phi = ScalarField::from_fn(grid, |x| amplitude * (2.0 * PI * dot3(*wavenumber, x)).cos());
                face_gradient(grid, &phi.data)
            }
            ForceField::Modulated { base, omega } => {
                let mut f = base.sample(grid, t);
                f.scale((omega * t).cos());
                f
            }
            ForceField::Sum { terms } => {
                let mut acc = VectorField::zeros(grid);
                for term in terms {
                    let f = term.sample(grid, t);
                    for a in 0..3 {
                        numeric::axpy(1.0, &f.comps[a], &mut acc.comps[a]);
                    }
                }
                acc
            }
            ForceField::Frames { times, frames } => {
                let k = times.partition_point(|s| *s <= t);
                if k == 0 {
                    return frames[0].clone();
                }
                if k == times.len() {
                    return frames[k - 1].clone();
                }
                let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                let mut f = frames[k - 1].clone();
                for a in 0..3 {
                    for (v, n) in f.comps[a].iter_mut().zip(&frames[k].comps[a]) {
                        *v += w * (n - *v);
                    }
                }
                f
            }
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Face differences of cell data on a uniform grid; wall faces are zero.
pub fn face_gradient(grid: &StaggeredGrid, p: &[f64]) -> VectorField {
    let h = grid.spacing();
    let comps = [0, 1, 2].map(|a| {
        (0..grid.n_faces(a))
            .map(|idx| match grid.face_cells(a, grid.face_ijk(a, idx)) {
                (Some(lo), Some(hi)) => (p[hi] - p[lo]) / h[a],
                _ => 0.0,
            })
            .collect()
    });
    VectorField { dims: grid.dims(), comps }
}

/// Initial density descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensityInit {
    Constant {
        value: f64,
    },
    /// `background + amplitude · exp(−|x − center|²/(2 width²))`, using the
    /// nearest periodic image on the torus.
    Gaussian {
        center: [f64; 3],
        width: f64,
        amplitude: f64,
        #[serde(default)]
        background: f64,
    },
}

impl DensityInit {
    pub fn sample(&self, grid: &StaggeredGrid) -> Result<ScalarField> {
        let rho = match self {
            DensityInit::Constant { value } => ScalarField::constant(grid, *value),
            DensityInit::Gaussian { center, width, amplitude, background } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidConfig(format!("gaussian width {width} must be positive")));
                }
                let ext = grid.extent();
                let periodic = grid.is_periodic();
                ScalarField::from_fn(grid, |x| {
                    let mut r2 = 0.0;
                    for d in 0..3 {
                        let mut dx = x[d] - center[d];
                        if periodic {
                            dx -= ext[d] * (dx / ext[d]).round();
                        }
                        r2 += dx * dx;
                    }
                    background + amplitude * (-r2 / (2.0 * width * width)).exp()
                })
            }
        };
        check_density(&rho)?;
        Ok(rho)
    }
}

fn check_density(rho: &ScalarField) -> Result<()> {
    if rho.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density".into()));
    }
    if let Some(v) = rho.data.iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidConfig(format!("density must be non-negative, found {v}")));
    }
    Ok(())
}

fn check_grid(grid: &StaggeredGrid) -> Result<()> {
    if !grid.is_uniform() {
        return Err(Error::InvalidConfig("the Darcy solver needs a uniform grid".into()));
    }
    if grid.dims().iter().any(|n| *n < 2) {
        return Err(Error::InvalidConfig("the Darcy grid needs at least two cells per axis".into()));
    }
    Ok(())
}

/// Face average of cell data (nearest cell on walls).
pub(crate) fn to_faces(grid: &StaggeredGrid, c: &[f64]) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|a| {
        (0..grid.n_faces(a))
            .map(|idx| match grid.face_cells(a, grid.face_ijk(a, idx)) {
                (Some(lo), Some(hi)) => 0.5 * (c[lo] + c[hi]),
                (Some(x), None) | (None, Some(x)) => c[x],
                (None, None) => 0.0,
            })
            .collect()
    })
}

/// `ρ·(A f)` on faces, with the same averaging as the elliptic operator.
pub fn density_flux(grid: &StaggeredGrid, rho: &ScalarField, f: &VectorField, a: [[f64; 3]; 3]) -> Result<VectorField> {
    rho.check_grid(grid)?;
    f.check_grid(grid)?;
    let op = AnisoOperator::new(grid, a)?;
    let mut flux = op.apply_matrix(f);
    let rf = to_faces(grid, &rho.data);
    for d in 0..3 {
        for (q, r) in flux.comps[d].iter_mut().zip(&rf[d]) {
            *q *= r;
        }
    }
    Ok(flux)
}

/// Solves `div(A∇p) = div(ρAf)` with zero total normal flux on walls.
/// Returns the mean-zero pressure and the solver report.
pub fn pressure_solve(
    grid: &StaggeredGrid,
    rho: &ScalarField,
    f_frame: &VectorField,
    a: [[f64; 3]; 3],
    tol: f64,
) -> Result<(ScalarField, SolveReport)> {
    check_grid(grid)?;
    check_density(rho)?;
    let flux = density_flux(grid, rho, f_frame, a)?;
    solve_aniso_neumann(grid, a, &flux, tol, 10 * grid.n_cells().max(100))
}

/// `u = ρAf − A∇p` on faces; wall faces are exactly zero.
pub fn assemble_velocity(
    grid: &StaggeredGrid,
    rho: &ScalarField,
    f_frame: &VectorField,
    p: &ScalarField,
    a: [[f64; 3]; 3],
) -> Result<VectorField> {
    p.check_grid(grid)?;
    let mut u = density_flux(grid, rho, f_frame, a)?;
    let op = AnisoOperator::new(grid, a)?;
    let g = op.flux(&p.data);
    for d in 0..3 {
        numeric::axpy(-1.0, &g.comps[d], &mut u.comps[d]);
    }
    Ok(u)
}

/// `‖div u‖₂ / ‖div(ρAf)‖₂`, or the absolute norm when the forcing is
/// already solenoidal.
pub fn divergence_residual(
    grid: &StaggeredGrid,
    u: &VectorField,
    forcing: &VectorField,
    a: [[f64; 3]; 3],
) -> Result<f64> {
    let op = AnisoOperator::new(grid, a)?;
    let vol = grid.spacing().iter().product::<f64>();
    let norm = |v: &[f64]| (vol * numeric::dot(v, v)).sqrt();
    let du = norm(&op.divergence(u));
    let df = norm(&op.divergence(forcing));
    Ok(if df > 0.0 { du / df } else { du })
}

/// Trilinear sampling on a uniform grid, wrapping on the torus and clamping
/// to the outermost nodes on walls.
struct Uniform {
    n: [usize; 3],
    h: [f64; 3],
    origin: [f64; 3],
    periodic: bool,
}

impl Uniform {
    fn new(grid: &StaggeredGrid) -> Self {
        Uniform { n: grid.dims(), h: grid.spacing(), origin: grid.origin(), periodic: grid.is_periodic() }
    }

    /// Node index pair and weight along one axis; `shift` is 0.5 for cell
    /// data and 0 for face data along their normal.
    fn axis(&self, d: usize, x: f64, shift: f64, faces: bool) -> (usize, usize, f64) {
        let s = (x - self.origin[d]) / self.h[d] - shift;
        let n = self.n[d];
        if self.periodic {
            let i0 = s.floor();
            let t = s - i0;
            let i = (i0 as i64).rem_euclid(n as i64) as usize;
            (i, (i + 1) % n, t)
        } else {
            let last = if faces { n } else { n - 1 };
            let s = s.clamp(0.0, last as f64);
            let i = (s.floor() as usize).min(last - 1);
            (i, i + 1, s - i as f64)
        }
    }

    /// Value and the range of the eight corner values.
    fn sample(&self, data: &[f64], dims: [usize; 3], x: [f64; 3], normal: Option<usize>) -> (f64, f64, f64) {
        let w = [0, 1, 2].map(|d| {
            if normal == Some(d) {
                self.axis(d, x[d], 0.0, true)
            } else {
                self.axis(d, x[d], 0.5, false)
            }
        });
        let idx = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut c = [[[0.0; 2]; 2]; 2];
        for (dk, k) in [w[2].0, w[2].1].into_iter().enumerate() {
            for (dj, j) in [w[1].0, w[1].1].into_iter().enumerate() {
                for (di, i) in [w[0].0, w[0].1].into_iter().enumerate() {
                    let v = data[idx(i, j, k)];
                    lo = lo.min(v);
                    hi = hi.max(v);
                    c[dk][dj][di] = v;
                }
            }
        }
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        let (tx, ty, tz) = (w[0].2, w[1].2, w[2].2);
        let plane = |k: usize| lerp(lerp(c[k][0][0], c[k][0][1], tx), lerp(c[k][1][0], c[k][1][1], tx), ty);
        let v = lerp(plane(0), plane(1), tz);
        // round-off must not leave the convex hull of the corners
        (v.clamp(lo, hi), lo, hi)
    }

    fn velocity(&self, grid: &StaggeredGrid, u: &VectorField, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.sample(&u.comps[a], grid.face_dims(a), x, Some(a)).0)
    }

    /// Wraps or clips a departure point into the domain.
    fn fold(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|d| {
            let len = self.h[d] * self.n[d] as f64;
            if self.periodic {
                self.origin[d] + (x[d] - self.origin[d]).rem_euclid(len)
            } else {
                x[d].clamp(self.origin[d], self.origin[d] + len)
            }
        })
    }
}

/// Largest `|u_a|·dt/h_a` over all faces.
pub fn cfl_number(grid: &StaggeredGrid, u: &VectorField, dt: f64) -> f64 {
    let h = grid.spacing();
    (0..3).map(|a| numeric::max_abs(&u.comps[a]) * dt / h[a]).fold(0.0, f64::max)
}

/// Semi-Lagrangian step with backward RK2 characteristics and trilinear
/// interpolation, followed by a bounds-preserving mass fix.
///
/// Each new value stays inside the range of its eight interpolation
/// corners. The fix moves the mass defect into the slack between each value
/// and those local bounds, so the total mass is restored without creating
/// new extrema.
pub fn transport_step(grid: &StaggeredGrid, rho: &ScalarField, u: &VectorField, dt: f64) -> Result<ScalarField> {
    check_grid(grid)?;
    rho.check_grid(grid)?;
    u.check_grid(grid)?;
    if u.has_non_finite() {
        return Err(Error::NonFinite("velocity".into()));
    }
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidConfig(format!("time step {dt} must be non-negative")));
    }
    if u.max_abs() == 0.0 || dt == 0.0 {
        return Ok(rho.clone());
    }
    let s = Uniform::new(grid);
    let dims = grid.dims();
    let traced: Vec<(f64, f64, f64)> = numeric::par_map(grid.n_cells(), |c| {
        let [i, j, k] = grid.cell_ijk(c);
        let x = grid.cell_center(i, j, k);
        let u0 = s.velocity(grid, u, x);
        let mid = s.fold([0, 1, 2].map(|d| x[d] - 0.5 * dt * u0[d]));
        let um = s.velocity(grid, u, mid);
        let dep = s.fold([0, 1, 2].map(|d| x[d] - dt * um[d]));
        s.sample(&rho.data, dims, dep, None)
    });
    let mut out: Vec<f64> = traced.iter().map(|t| t.0).collect();
    let target = numeric::sum(&rho.data);
    let defect = target - numeric::sum(&out);
    if defect != 0.0 {
        let slack: Vec<f64> = if defect > 0.0 {
            traced.iter().map(|(v, _, hi)| hi - v).collect()
        } else {
            traced.iter().map(|(v, lo, _)| v - lo).collect()
        };
        let capacity = numeric::sum(&slack);
        if capacity > 0.0 {
            let share = (defect.abs() / capacity).min(1.0) * defect.signum();
            for ((o, sl), (_, lo, hi)) in out.iter_mut().zip(&slack).zip(&traced) {
                *o = (*o + share * sl).clamp(*lo, *hi);
            }
        }
    }
    Ok(ScalarField { dims, data: out })
}

/// Tuning of a Darcy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DarcyOptions {
    pub tol: f64,
    pub cfl_max: f64,
    /// Keep every `stride`-th state (the last one is always kept).
    pub stride: usize,
    /// Exponents tracked in the ledger.
    pub q_list: Vec<f64>,
    pub picard: Option<PicardOptions>,
}

impl Default for DarcyOptions {
    fn default() -> Self {
        DarcyOptions { tol: 1e-8, cfl_max: 5.0, stride: 1, q_list: vec![2.0, 3.0], picard: None }
    }
}

/// Iterates each step with the velocity of the mid-step density until the
/// density change falls below `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcyState {
    pub step: usize,
    pub t: f64,
    pub rho: ScalarField,
    pub u: VectorField,
    pub p: ScalarField,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub l2: f64,
    /// `‖ρ‖_q` for each tracked `q`.
    pub lq: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub h1: f64,
    pub h2: f64,
    pub div_residual: f64,
    pub cfl: f64,
    pub pressure_iterations: usize,
    /// `‖p‖₂ / (‖ρ‖_∞ ‖f‖₂)`, the discrete pressure estimate constant.
    pub pressure_ratio: f64,
    pub picard_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step: usize,
    pub t: f64,
    pub message: String,
    pub solver: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: StaggeredGrid,
    pub a: [[f64; 3]; 3],
    pub dt: f64,
    pub q_list: Vec<f64>,
    pub states: Vec<DarcyState>,
    pub ledger: Vec<LedgerRow>,
    pub failure: Option<StepFailure>,
}

fn cell_volume(grid: &StaggeredGrid) -> f64 {
    grid.spacing().iter().product()
}

/// `(‖∇_h ρ‖₂, ‖Δ_h ρ‖₂)` with Neumann walls.
fn derivative_norms(grid: &StaggeredGrid, rho: &[f64]) -> (f64, f64) {
    let vol = cell_volume(grid);
    let h = grid.spacing();
    let mut grad2 = 0.0;
    let mut lap = vec![0.0; rho.len()];
    for a in 0..3 {
        for idx in 0..grid.n_faces(a) {
            if let (Some(lo), Some(hi)) = grid.face_cells(a, grid.face_ijk(a, idx)) {
                let g = (rho[hi] - rho[lo]) / h[a];
                grad2 += g * g * vol;
                lap[lo] += g / h[a];
                lap[hi] -= g / h[a];
            }
        }
    }
    (grad2.sqrt(), (vol * numeric::dot(&lap, &lap)).sqrt())
}

fn ledger_row(grid: &StaggeredGrid, step: usize, t: f64, rho: &ScalarField, q_list: &[f64]) -> LedgerRow {
    let vol = cell_volume(grid);
    let n = rho.data.len();
    let mass = vol * numeric::sum(&rho.data);
    let l2 = (vol * numeric::dot(&rho.data, &rho.data)).sqrt();
    let lq = q_list
        .iter()
        .map(|q| {
            if q.is_infinite() {
                numeric::max_abs(&rho.data)
            } else {
                (vol * numeric::sum_by(n, |i| rho.data[i].abs().powf(*q))).powf(1.0 / q)
            }
        })
        .collect();
    let (g, l) = derivative_norms(grid, &rho.data);
    LedgerRow {
        step,
        t,
        mass,
        l2,
        lq,
        min: rho.min(),
        max: rho.max(),
        h1: (l2 * l2 + g * g).sqrt(),
        h2: (l2 * l2 + g * g + l * l).sqrt(),
        div_residual: 0.0,
        cfl: 0.0,
        pressure_iterations: 0,
        pressure_ratio: 0.0,
        picard_iterations: 0,
    }
}

/// Pressure and velocity of one density.
pub struct Velocity {
    pub p: ScalarField,
    pub u: VectorField,
    pub report: SolveReport,
    pub div_residual: f64,
}

pub fn velocity_of(
    grid: &StaggeredGrid,
    rho: &ScalarField,
    f: &VectorField,
    a: [[f64; 3]; 3],
    tol: f64,
) -> Result<Velocity> {
    let (p, report) = pressure_solve(grid, rho, f, a, tol)?;
    let u = assemble_velocity(grid, rho, f, &p, a)?;
    let forcing = density_flux(grid, rho, f, a)?;
    let div_residual = divergence_residual(grid, &u, &forcing, a)?;
    Ok(Velocity { p, u, report, div_residual })
}

/// Time loop from `rho0` to `t_end` with step `dt`.
pub fn run(
    grid: &StaggeredGrid,
    rho0: &ScalarField,
    force: &ForceField,
    a: [[f64; 3]; 3],
    t_end: f64,
    dt: f64,
    opts: &DarcyOptions,
) -> Result<Trajectory> {
    check_grid(grid)?;
    check_spd(&a)?;
    rho0.check_grid(grid)?;
    check_density(rho0)?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidConfig(format!("final time {t_end} must be positive")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("time step {dt} must be positive")));
    }
    if !(opts.tol > 0.0) || opts.stride == 0 {
        return Err(Error::InvalidConfig("tolerance and stride must be positive".into()));
    }
    force.validate(grid, t_end)?;
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let vol = cell_volume(grid);
    let mut traj = Trajectory {
        grid: grid.clone(),
        a,
        dt,
        q_list: opts.q_list.clone(),
        states: Vec::new(),
        ledger: Vec::new(),
        failure: None,
    };
    let mut rho = rho0.clone();
    for step in 0..=steps {
        let t = step as f64 * dt;
        let f = force.sample(grid, t);
        let vel = match velocity_of(grid, &rho, &f, a, opts.tol) {
            Ok(v) => v,
            Err(e) => {
                traj.failure = Some(StepFailure { step, t, solver: e.is_solver_failure(), message: e.to_string() });
                return Ok(traj);
            }
        };
        let mut row = ledger_row(grid, step, t, &rho, &opts.q_list);
        row.div_residual = vel.div_residual;
        row.cfl = cfl_number(grid, &vel.u, dt);
        row.pressure_iterations = vel.report.iterations;
        let fnorm = (vol * (0..3).map(|d| numeric::dot(&f.comps[d], &f.comps[d])).sum::<f64>()).sqrt();
        let denom = numeric::max_abs(&rho.data) * fnorm;
        row.pressure_ratio = if denom > 0.0 { vel.p.l2_norm(grid) / denom } else { 0.0 };
        if step < steps && row.cfl > opts.cfl_max {
            let message = format!("CFL number {:.3} exceeds {}", row.cfl, opts.cfl_max);
            traj.ledger.push(row);
            traj.failure = Some(StepFailure { step, t, message, solver: false });
            return Ok(traj);
        }
        if step % opts.stride == 0 || step == steps {
            traj.states.push(DarcyState { step, t, rho: rho.clone(), u: vel.u.clone(), p: vel.p.clone() });
        }
        if step == steps {
            traj.ledger.push(row);
            break;
        }
        let next = match advance(grid, &rho, &vel.u, &f, a, dt, opts) {
            Ok((r, k)) => {
                row.picard_iterations = k;
                r
            }
            Err(e) => {
                traj.ledger.push(row);
                traj.failure = Some(StepFailure { step, t, solver: e.is_solver_failure(), message: e.to_string() });
                return Ok(traj);
            }
        };
        traj.ledger.push(row);
        rho = next;
    }
    Ok(traj)
}

fn advance(
    grid: &StaggeredGrid,
    rho: &ScalarField,
    u: &VectorField,
    f: &VectorField,
    a: [[f64; 3]; 3],
    dt: f64,
    opts: &DarcyOptions,
) -> Result<(ScalarField, usize)> {
    let first = transport_step(grid, rho, u, dt)?;
    let Some(pic) = opts.picard else {
        return Ok((first, 0));
    };
    let mut current = first;
    for k in 1..=pic.max_iter {
        let mid = ScalarField {
            dims: rho.dims,
            data: rho.data.iter().zip(&current.data).map(|(a, b)| 0.5 * (a + b)).collect(),
        };
        let vel = velocity_of(grid, &mid, f, a, opts.tol)?;
        let next = transport_step(grid, rho, &vel.u, dt)?;
        let change = numeric::sum_by(next.data.len(), |i| (next.data[i] - current.data[i]).powi(2)).sqrt();
        let scale = numeric::norm2(&next.data).max(f64::MIN_POSITIVE);
        current = next;
        if change <= pic.tol * scale {
            return Ok((current, k));
        }
    }
    Err(Error::NoConvergence {
        what: "Picard iteration".into(),
        report: Box::new(SolveReport { method: "picard".into(), iterations: pic.max_iter, ..Default::default() }),
    })
}

/// Drifts relative to the first stored state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub step: usize,
    pub t: f64,
    pub mass_drift: f64,
    /// Relative drift of `∫ρ^q` per requested `q`.
    pub moment_drift: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub h1: f64,
    pub h2: f64,
}

fn relative(now: f64, then: f64) -> f64 {
    if then != 0.0 {
        (now - then) / then.abs()
    } else {
        now - then
    }
}

pub fn conservation_report(traj: &Trajectory, q_list: &[f64]) -> Vec<ConservationRow> {
    let grid = &traj.grid;
    let vol = cell_volume(grid);
    let moments = |rho: &ScalarField| -> Vec<f64> {
        q_list.iter().map(|q| vol * numeric::sum_by(rho.data.len(), |i| rho.data[i].abs().powf(*q))).collect()
    };
    let Some(first) = traj.states.first() else {
        return Vec::new();
    };
    let m0 = vol * numeric::sum(&first.rho.data);
    let q0 = moments(&first.rho);
    traj.states
        .iter()
        .map(|s| {
            let row = ledger_row(grid, s.step, s.t, &s.rho, &[]);
            let qs = moments(&s.rho);
            ConservationRow {
                step: s.step,
                t: s.t,
                mass_drift: relative(row.mass, m0),
                moment_drift: qs.iter().zip(&q0).map(|(a, b)| relative(*a, *b)).collect(),
                min: row.min,
                max: row.max,
                h1: row.h1,
                h2: row.h2,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Boundary;

    #[test]
    fn zero_velocity_leaves_density_bitwise() {
        let g = StaggeredGrid::unit_torus(8);
        let rho = ScalarField::from_fn(&g, |x| x[0] + x[1] * x[2]);
        let out = transport_step(&g, &rho, &VectorField::zeros(&g), 0.1).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn constants_are_transported_to_themselves() {
        for b in [Boundary::Periodic, Boundary::Wall] {
            let g = StaggeredGrid::uniform([8; 3], [0.0; 3], [1.0; 3], b);
            let rho = ScalarField::constant(&g, 1.0);
            let u = VectorField::from_fn(&g, |x| [(x[1] * 6.0).sin(), x[0] * x[2], 0.3]);
            let out = transport_step(&g, &rho, &u, 0.07).unwrap();
            assert!(out.data.iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn nan_velocity_is_an_error() {
        let g = StaggeredGrid::unit_torus(4);
        let mut u = VectorField::zeros(&g);
        u.comps[0][3] = f64::NAN;
        let err = transport_step(&g, &ScalarField::constant(&g, 1.0), &u, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
