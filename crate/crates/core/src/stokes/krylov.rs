//! Matrix-free Krylov solvers with reproducible reductions.

use crate::numeric::{axpy, dot};

#[derive(Debug, Clone, Copy)]
pub struct KrylovResult {
    pub iterations: usize,
    /// Final relative residual in the norm the method monitors.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for `A x = b`, starting from `x`.
///
/// `project` is applied to the residual and to every preconditioned
/// direction, which keeps the iteration in the orthogonal complement of a
/// known null space. Convergence is measured by `‖r‖₂ / ‖b‖₂`.
pub fn pcg<A, M, P>(
    apply: A,
    precond: M,
    project: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovResult
where
    A: Fn(&[f64], &mut [f64]),
    M: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovResult { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    project(&mut r);
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    if rel <= tol {
        return KrylovResult { iterations: 0, relative_residual: rel, converged: true };
    }
    for it in 1..=max_iter {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return KrylovResult { iterations: it, relative_residual: rel, converged: false };
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        project(&mut r);
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return KrylovResult { iterations: it, relative_residual: rel, converged: true };
        }
        precond(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    KrylovResult { iterations: max_iter, relative_residual: rel, converged: false }
}

/// Preconditioned MINRES for symmetric (possibly indefinite) `A` with an
/// SPD preconditioner. Monitors the preconditioned residual norm
/// `‖r‖_{M⁻¹}` relative to its initial value.
pub fn minres<A, M>(apply: A, precond: M, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> KrylovResult
where
    A: Fn(&[f64], &mut [f64]),
    M: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut r1 = vec![0.0; n];
    apply(x, &mut r1);
    for i in 0..n {
        r1[i] = b[i] - r1[i];
    }
    let mut y = vec![0.0; n];
    precond(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if beta1 < 0.0 {
        return KrylovResult { iterations: 0, relative_residual: f64::NAN, converged: false };
    }
    let beta1 = beta1.sqrt();
    if beta1 == 0.0 {
        return KrylovResult { iterations: 0, relative_residual: 0.0, converged: true };
    }
    // initial guess may already be good; report relative to ‖b‖ scale
    let bnorm = {
        let mut yb = vec![0.0; n];
        precond(b, &mut yb);
        dot(b, &yb).max(0.0).sqrt()
    };
    let scale = if bnorm > 0.0 { bnorm } else { beta1 };

    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut rel = phibar / scale;
    if rel <= tol {
        return KrylovResult { iterations: 0, relative_residual: rel, converged: true };
    }
    for it in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply(&v, &mut y);
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond(&r2, &mut y);
        oldb = beta;
        let bb = dot(&r2, &y);
        if bb < 0.0 {
            return KrylovResult { iterations: it, relative_residual: rel, converged: false };
        }
        beta = bb.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        // w_new = (v - oldeps*w_old_old - delta*w_old) / gamma
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        rel = phibar / scale;
        if rel <= tol {
            return KrylovResult { iterations: it, relative_residual: rel, converged: true };
        }
        if beta == 0.0 {
            return KrylovResult { iterations: it, relative_residual: rel, converged: true };
        }
    }
    KrylovResult { iterations: max_iter, relative_residual: rel, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(a: &[Vec<f64>]) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |x, y| {
            for (i, row) in a.iter().enumerate() {
                y[i] = row.iter().zip(x).map(|(p, q)| p * q).sum();
            }
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n: usize = 30;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            2.0 + i as f64 * 0.1
                        } else if i.abs_diff(j) == 1 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        dense_apply(&a)(&xs, &mut b);
        let mut x = vec![0.0; n];
        let diag: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        let res = pcg(
            dense_apply(&a),
            |r, z| z.iter_mut().zip(r).zip(&diag).for_each(|((z, r), d)| *z = r / d),
            |_| {},
            &b,
            &mut x,
            1e-12,
            200,
        );
        assert!(res.converged);
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn minres_solves_indefinite_saddle_system() {
        // [[K, Bᵀ], [B, 0]] with K SPD tridiagonal and B a row of ones-ish
        let nk = 12;
        let nb = 3;
        let n = nk + nb;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..nk {
            a[i][i] = 3.0;
            if i + 1 < nk {
                a[i][i + 1] = -1.0;
                a[i + 1][i] = -1.0;
            }
        }
        for r in 0..nb {
            for i in 0..nk {
                let v = ((r * 7 + i * 3) % 5) as f64 - 2.0;
                a[nk + r][i] = v;
                a[i][nk + r] = v;
            }
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut b = vec![0.0; n];
        dense_apply(&a)(&xs, &mut b);
        let mut x = vec![0.0; n];
        let res = minres(dense_apply(&a), |r, z| z.copy_from_slice(r), &b, &mut x, 1e-13, 500);
        assert!(res.converged, "{res:?}");
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-8, "{i}: {} vs {}", x[i], xs[i]);
        }
        // with a diagonal SPD preconditioner
        let mut x = vec![0.0; n];
        let res = minres(
            dense_apply(&a),
            |r, z| {
                for i in 0..n {
                    z[i] = if i < nk { r[i] / 3.0 } else { r[i] / 10.0 };
                }
            },
            &b,
            &mut x,
            1e-13,
            500,
        );
        assert!(res.converged);
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-8);
        }
    }
}
