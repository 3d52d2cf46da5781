//! Masked saddle-point solves `νKu + Gp = b`, `Du = c`.
//!
//! Two iterations are provided. Block-preconditioned MINRES works on the
//! whole system with the exact unmasked viscous inverse (fast
//! diagonalization) on the velocity block and the scaled pressure mass on
//! the Schur block. Uzawa runs CG on the pressure Schur complement with an
//! inner CG for each velocity solve; it is slower but useful as a
//! cross-check.

use super::fdm::VelocityFdm;
use super::krylov::{minres, pcg};
use super::ops::Ops;
use crate::numeric;

/// Raw outcome of a saddle solve on flat storage.
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Zeroes the Euclidean mean of `c` over fluid cells.
pub fn project_continuity(ops: &Ops, c: &mut [f64]) {
    let fluid = &ops.masks.cells;
    let n = fluid.iter().filter(|f| **f).count();
    if n == 0 {
        return;
    }
    let mean = numeric::sum_by(c.len(), |i| if fluid[i] { c[i] } else { 0.0 }) / n as f64;
    for (v, f) in c.iter_mut().zip(fluid) {
        *v = if *f { *v - mean } else { 0.0 };
    }
}

/// True residuals `(‖νKu + Gp − b‖, ‖Du − c‖)` in the Euclidean norm over
/// fluid entries, plus `‖νKu‖`.
pub fn residuals(ops: &Ops, nu: f64, u: &[f64], p: &[f64], b: &[f64], c: &[f64]) -> (f64, f64, f64) {
    let o = ops.offsets();
    let mut ku = vec![0.0; o[3]];
    let mut gp = vec![0.0; o[3]];
    ops.k_flat(u, &mut ku);
    ops.grad_flat(p, &mut gp);
    let mut r = vec![0.0; o[3]];
    for i in 0..o[3] {
        r[i] = nu * ku[i] + gp[i] - b[i];
        ku[i] *= nu;
    }
    ops.mask_faces(&mut r);
    let mut d = vec![0.0; p.len()];
    ops.div_flat(u, &mut d);
    for i in 0..d.len() {
        d[i] -= c[i];
    }
    ops.mask_cells(&mut d);
    (numeric::norm2(&r), numeric::norm2(&d), numeric::norm2(&ku))
}

struct Blocks<'a> {
    ops: &'a Ops<'a>,
    nu: f64,
    fdm: VelocityFdm,
    inv_vol: Vec<f64>,
    nu_len: usize,
}

impl<'a> Blocks<'a> {
    fn new(ops: &'a Ops<'a>, nu: f64) -> Self {
        let inv_vol = ops.cell_volumes().iter().map(|v| 1.0 / v).collect();
        Blocks { ops, nu, fdm: VelocityFdm::new(ops.grid, 0.0), inv_vol, nu_len: ops.offsets()[3] }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (xu, xp) = x.split_at(self.nu_len);
        let (yu, yp) = y.split_at_mut(self.nu_len);
        let mut gp = vec![0.0; self.nu_len];
        self.ops.k_flat(xu, yu);
        self.ops.grad_flat(xp, &mut gp);
        for i in 0..self.nu_len {
            yu[i] = self.nu * yu[i] + gp[i];
        }
        self.ops.div_flat(xu, yp);
        yp.iter_mut().for_each(|v| *v = -*v);
        self.ops.mask_cells(yp);
    }

    /// Masked `(νK)⁻¹` of the unmasked operator.
    fn velocity_precond(&self, r: &[f64], z: &mut [f64]) {
        let o = self.ops.offsets();
        let mut rm = r.to_vec();
        self.ops.mask_faces(&mut rm);
        for a in 0..3 {
            self.fdm.apply_comp(a, &rm[o[a]..o[a + 1]], &mut z[o[a]..o[a + 1]]);
        }
        z.iter_mut().for_each(|v| *v /= self.nu);
        self.ops.mask_faces(z);
    }

    fn precond(&self, r: &[f64], z: &mut [f64]) {
        let (ru, rp) = r.split_at(self.nu_len);
        let (zu, zp) = z.split_at_mut(self.nu_len);
        self.velocity_precond(ru, zu);
        for i in 0..rp.len() {
            zp[i] = if self.ops.masks.cells[i] { self.nu * self.inv_vol[i] * rp[i] } else { 0.0 };
        }
    }
}

/// Block-preconditioned MINRES. `b` lives on faces, `c` on cells; both are
/// masked and `c` is projected to zero fluid sum. Restarts with a tighter
/// Krylov tolerance until the true relative residuals meet `tol`.
pub fn solve_minres(ops: &Ops, nu: f64, b: &[f64], c: &[f64], tol: f64, max_iter: usize) -> SaddleSolution {
    let blocks = Blocks::new(ops, nu);
    let nu_len = blocks.nu_len;
    let nc = c.len();
    let mut rhs = vec![0.0; nu_len + nc];
    rhs[..nu_len].copy_from_slice(b);
    ops.mask_faces(&mut rhs[..nu_len]);
    // continuity row is -D u = -c
    for i in 0..nc {
        rhs[nu_len + i] = -c[i];
    }
    project_continuity(ops, &mut rhs[nu_len..]);
    let mut cproj = rhs[nu_len..].iter().map(|v| -v).collect::<Vec<_>>();
    ops.mask_cells(&mut cproj);

    let mut x = vec![0.0; nu_len + nc];
    let mut iterations = 0;
    let mut krylov_tol = tol;
    let mut converged = false;
    for _ in 0..4 {
        let res = minres(
            |v, y| blocks.apply(v, y),
            |r, z| blocks.precond(r, z),
            &rhs,
            &mut x,
            krylov_tol,
            max_iter.saturating_sub(iterations).max(1),
        );
        iterations += res.iterations;
        let (rm, rd, ku) = residuals(ops, nu, &x[..nu_len], &x[nu_len..], &rhs[..nu_len], &cproj);
        let bn = numeric::norm2(&rhs[..nu_len]).max(ku).max(f64::MIN_POSITIVE);
        let dscale = ku.max(numeric::norm2(&cproj)).max(f64::MIN_POSITIVE);
        if rm / bn <= tol && rd / dscale <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        krylov_tol *= 0.01;
    }
    let p = x.split_off(nu_len);
    SaddleSolution { u: x, p, iterations, converged }
}

/// Uzawa iteration: CG on `S p = c − D(νK)⁻¹b` with `S = D(νK)⁻¹Dᵀ`.
/// Requires the masked viscous operator to be nonsingular (walls or holes).
pub fn solve_uzawa(ops: &Ops, nu: f64, b: &[f64], c: &[f64], tol: f64, max_iter: usize) -> SaddleSolution {
    let blocks = Blocks::new(ops, nu);
    let nu_len = blocks.nu_len;
    let nc = c.len();
    let inner_tol = tol * 1e-3;
    let velocity_solve = |rhs: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut r = rhs.to_vec();
        ops.mask_faces(&mut r);
        pcg(
            |x, y| {
                ops.k_flat(x, y);
                y.iter_mut().for_each(|v| *v *= nu);
            },
            |r, z| blocks.velocity_precond(r, z),
            |_| {},
            &r,
            out,
            inner_tol,
            10 * nu_len.max(100),
        )
        .iterations
    };
    let mut cp = c.to_vec();
    project_continuity(ops, &mut cp);

    let schur = |p: &[f64], out: &mut [f64]| {
        let mut gp = vec![0.0; nu_len];
        ops.grad_flat(p, &mut gp);
        // Dᵀp = -Gp
        gp.iter_mut().for_each(|v| *v = -*v);
        let mut w = vec![0.0; nu_len];
        velocity_solve(&gp, &mut w);
        ops.div_flat(&w, out);
        ops.mask_cells(out);
    };
    let mut u0 = vec![0.0; nu_len];
    velocity_solve(b, &mut u0);
    let mut rhs = vec![0.0; nc];
    ops.div_flat(&u0, &mut rhs);
    for i in 0..nc {
        rhs[i] = cp[i] - rhs[i];
    }
    project_continuity(ops, &mut rhs);
    let mut p = vec![0.0; nc];
    let res = pcg(
        schur,
        |r, z| {
            for i in 0..nc {
                z[i] = if ops.masks.cells[i] { nu * blocks.inv_vol[i] * r[i] } else { 0.0 };
            }
            project_continuity(ops, z);
        },
        |x| project_continuity(ops, x),
        &rhs,
        &mut p,
        tol,
        max_iter,
    );
    let mut gp = vec![0.0; nu_len];
    ops.grad_flat(&p, &mut gp);
    let mut rhs_u = b.to_vec();
    for i in 0..nu_len {
        rhs_u[i] -= gp[i];
    }
    let mut u = vec![0.0; nu_len];
    velocity_solve(&rhs_u, &mut u);
    SaddleSolution { u, p, iterations: res.iterations, converged: res.converged }
}
