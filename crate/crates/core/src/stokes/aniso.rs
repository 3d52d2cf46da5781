//! Constant-coefficient anisotropic Poisson problems `div(A∇p) = div F` on
//! uniform cell-centred grids, with Neumann walls or periodic wrap.
//!
//! Fluxes live on faces. The normal part of `A∇p` uses the compact face
//! difference; the tangential parts average cell-centred central
//! differences onto the face. The central difference is built as the
//! face-to-cell average of the face gradient, which makes the operator
//! `−vol·div(A∇_h ·)` symmetric positive semidefinite with constants as
//! its only null space. Wall-adjacent central differences see a mirrored
//! ghost, so cross terms are second order when the normal derivative of
//! the solution vanishes on the walls and first order otherwise.

use nalgebra::{Matrix3, SymmetricEigen};

use super::krylov::pcg;
use super::spectral::{AxisBc, SpectralPoisson};
use super::SolveReport;
use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::geometry::StaggeredGrid;
use crate::numeric;

/// Checks symmetry and positive definiteness of a 3×3 matrix.
pub fn check_spd(a: &[[f64; 3]; 3]) -> Result<()> {
    let scale = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !a.iter().flatten().all(|v| v.is_finite()) || scale == 0.0 {
        return Err(Error::NotSpd("zero or non-finite entries".into()));
    }
    for i in 0..3 {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 * scale {
                return Err(Error::NotSpd(format!("asymmetric entry ({i},{j})")));
            }
        }
    }
    let m = Matrix3::from_fn(|i, j| 0.5 * (a[i][j] + a[j][i]));
    let min = SymmetricEigen::new(m).eigenvalues.min();
    if min <= 1e-14 * scale {
        return Err(Error::NotSpd(format!("smallest eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// The discrete operator for one grid and coefficient matrix.
pub struct AnisoOperator<'a> {
    pub grid: &'a StaggeredGrid,
    pub a: [[f64; 3]; 3],
    h: [f64; 3],
    periodic: bool,
}

impl<'a> AnisoOperator<'a> {
    pub fn new(grid: &'a StaggeredGrid, a: [[f64; 3]; 3]) -> Result<Self> {
        check_spd(&a)?;
        if !grid.is_uniform() {
            return Err(Error::InvalidConfig("anisotropic Poisson needs a uniform grid".into()));
        }
        Ok(AnisoOperator { grid, a, h: grid.spacing(), periodic: grid.is_periodic() })
    }

    fn neighbor(&self, ijk: [usize; 3], a: usize, up: bool) -> Option<[usize; 3]> {
        let n = self.grid.dims()[a];
        let mut o = ijk;
        if up {
            if ijk[a] + 1 < n {
                o[a] += 1;
            } else if self.periodic {
                o[a] = 0;
            } else {
                return None;
            }
        } else if ijk[a] > 0 {
            o[a] -= 1;
        } else if self.periodic {
            o[a] = n - 1;
        } else {
            return None;
        }
        Some(o)
    }

    /// Face gradient along `a` in face layout; wall faces are zero.
    fn face_gradient(&self, p: &[f64], a: usize) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.n_faces(a)];
        for (idx, o) in out.iter_mut().enumerate() {
            let ijk = g.face_ijk(a, idx);
            if let (Some(lo), Some(hi)) = g.face_cells(a, ijk) {
                *o = (p[hi] - p[lo]) / self.h[a];
            }
        }
        out
    }

    /// Cell average of the two faces normal to `a` (the central difference
    /// when applied to a face gradient).
    fn to_cells(&self, f: &[f64], a: usize) -> Vec<f64> {
        let g = self.grid;
        let n = g.dims();
        (0..g.n_cells())
            .map(|c| {
                let ijk = g.cell_ijk(c);
                let mut hi = ijk;
                hi[a] += 1;
                if self.periodic && hi[a] == n[a] {
                    hi[a] = 0;
                }
                0.5 * (f[g.face_index(a, ijk[0], ijk[1], ijk[2])] + f[g.face_index(a, hi[0], hi[1], hi[2])])
            })
            .collect()
    }

    /// Average of cell data onto interior faces normal to `a`.
    fn to_faces(&self, c: &[f64], a: usize) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.n_faces(a)];
        for (idx, o) in out.iter_mut().enumerate() {
            let ijk = g.face_ijk(a, idx);
            if let (Some(lo), Some(hi)) = g.face_cells(a, ijk) {
                *o = 0.5 * (c[lo] + c[hi]);
            }
        }
        out
    }

    /// Discrete `A∇p` on faces (component `a` on faces normal to `a`).
    pub fn flux(&self, p: &[f64]) -> VectorField {
        let grads = VectorField { dims: self.grid.dims(), comps: [0, 1, 2].map(|a| self.face_gradient(p, a)) };
        self.apply_matrix(&grads)
    }

    /// `A·g` for face data `g`: normal components are scaled in place,
    /// tangential ones reach the face through the cell average. Wall faces
    /// come out zero.
    pub fn apply_matrix(&self, g: &VectorField) -> VectorField {
        let central: [Vec<f64>; 3] = [0, 1, 2].map(|a| self.to_cells(&g.comps[a], a));
        let comps = [0, 1, 2].map(|a| {
            let mut q: Vec<f64> = g.comps[a].iter().map(|v| self.a[a][a] * v).collect();
            for b in 0..3 {
                if b != a && self.a[a][b] != 0.0 {
                    let t = self.to_faces(&central[b], a);
                    for (qv, tv) in q.iter_mut().zip(&t) {
                        *qv += self.a[a][b] * tv;
                    }
                }
            }
            if !self.periodic {
                let n = self.grid.dims()[a];
                for (idx, qv) in q.iter_mut().enumerate() {
                    let i = self.grid.face_ijk(a, idx)[a];
                    if i == 0 || i == n {
                        *qv = 0.0;
                    }
                }
            }
            q
        });
        VectorField { dims: self.grid.dims(), comps }
    }

    /// Strong-form divergence of face data, ignoring wall faces.
    pub fn divergence(&self, q: &VectorField) -> Vec<f64> {
        let g = self.grid;
        (0..g.n_cells())
            .map(|c| {
                let ijk = g.cell_ijk(c);
                let mut acc = 0.0;
                for a in 0..3 {
                    let lo_ok = self.neighbor(ijk, a, false).is_some();
                    let hi_ok = self.neighbor(ijk, a, true).is_some();
                    let mut hi = ijk;
                    hi[a] += 1;
                    if self.periodic && hi[a] == g.dims()[a] {
                        hi[a] = 0;
                    }
                    let qh = if hi_ok { q.comps[a][g.face_index(a, hi[0], hi[1], hi[2])] } else { 0.0 };
                    let ql = if lo_ok { q.comps[a][g.face_index(a, ijk[0], ijk[1], ijk[2])] } else { 0.0 };
                    acc += (qh - ql) / self.h[a];
                }
                acc
            })
            .collect()
    }

    /// `−div(A∇_h p)`, symmetric positive semidefinite.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let d = self.divergence(&self.flux(p));
        for (o, v) in out.iter_mut().zip(d) {
            *o = -v;
        }
    }
}

fn remove_mean(x: &mut [f64]) {
    let m = numeric::sum(x) / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Solves `div(A∇p) = div F` with zero normal total flux on walls (or
/// periodic wrap). Returns the mean-zero pressure.
pub fn solve_aniso_neumann(
    grid: &StaggeredGrid,
    a: [[f64; 3]; 3],
    flux_rhs: &VectorField,
    tol: f64,
    max_iter: usize,
) -> Result<(ScalarField, SolveReport)> {
    flux_rhs.check_grid(grid)?;
    let op = AnisoOperator::new(grid, a)?;
    let sw = numeric::Stopwatch::start();
    let mut rhs = op.divergence(flux_rhs);
    // discrete divergence theorem: the sum telescopes to zero
    let total = numeric::sum(&rhs);
    let scale = numeric::sum_by(rhs.len(), |i| rhs[i].abs()).max(f64::MIN_POSITIVE);
    debug_assert!(total.abs() <= 1e-10 * scale, "incompatible Neumann data: {total}");
    remove_mean(&mut rhs);
    rhs.iter_mut().for_each(|v| *v = -*v);
    let bc = if grid.is_periodic() { AxisBc::Periodic } else { AxisBc::Neumann };
    let pre = SpectralPoisson::new(grid.dims(), op.h, [bc; 3], [a[0][0], a[1][1], a[2][2]], 0.0);
    let mut p = vec![0.0; grid.n_cells()];
    let res = pcg(
        |x, y| op.apply(x, y),
        |r, z| {
            pre.solve(r, z);
            remove_mean(z);
        },
        remove_mean,
        &rhs,
        &mut p,
        tol,
        max_iter,
    );
    remove_mean(&mut p);
    let mut ap = vec![0.0; p.len()];
    op.apply(&p, &mut ap);
    let rn = numeric::sum_by(ap.len(), |i| (ap[i] - rhs[i]).powi(2)).sqrt();
    let bn = numeric::norm2(&rhs);
    let residual = if bn > 0.0 { rn / bn } else { rn };
    let report = SolveReport {
        method: "pcg-spectral".into(),
        iterations: res.iterations,
        residual_momentum: residual,
        residual_div: 0.0,
        tolerance: tol,
        wall_time: sw.seconds(),
        mean_force_removed: None,
    };
    if !res.converged || !residual.is_finite() || residual > 10.0 * tol {
        return Err(Error::NoConvergence { what: "anisotropic Poisson".into(), report: Box::new(report) });
    }
    Ok((ScalarField { dims: grid.dims(), data: p }, report))
}
