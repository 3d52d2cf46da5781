//! Periodic Stokes on uniform grids: exact FFT solve for the hole-free
//! problem, and a capacitance method that adds holes through force
//! multipliers on solid faces.

use rustfft::num_complex::Complex64;

use super::krylov::pcg;
use super::spectral::Fft3;
use crate::error::{Error, Result};
use crate::geometry::{Masks, StaggeredGrid};
use crate::numeric;

/// Exact inverse of the periodic MAC Stokes operator
/// `-νΔ_h u + ∇_h p = f, ∇_h·u = 0` (strong form) with prescribed mean velocity.
pub struct PeriodicStokes {
    fft: Fft3,
    h: [f64; 3],
    nu: f64,
}

impl PeriodicStokes {
    pub fn new(grid: &StaggeredGrid, nu: f64) -> Result<Self> {
        if !grid.is_periodic() || !grid.is_uniform() {
            return Err(Error::InvalidConfig("FFT Stokes needs a uniform periodic grid".into()));
        }
        Ok(PeriodicStokes { fft: Fft3::new(grid.dims()), h: grid.spacing(), nu })
    }

    /// Solves for `(u, p)` given a force whose per-component mean is zero
    /// (any mean is ignored) and the mean velocity `mean_u`.
    pub fn solve(&self, f: &[&[f64]; 3], mean_u: [f64; 3]) -> ([Vec<f64>; 3], Vec<f64>) {
        let dims = self.fft.dims();
        let [n0, n1, n2] = dims;
        let n = self.fft.len();
        let mut fh: Vec<Vec<Complex64>> = (0..3)
            .map(|a| {
                let mut d: Vec<Complex64> = f[a].iter().map(|v| Complex64::new(*v, 0.0)).collect();
                self.fft.forward(&mut d);
                d
            })
            .collect();
        // per-axis difference symbols
        let sym = |a: usize| -> Vec<(Complex64, Complex64)> {
            (0..dims[a])
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / dims[a] as f64;
                    let e = Complex64::from_polar(1.0, th);
                    let g = (Complex64::new(1.0, 0.0) - e.conj()) / self.h[a];
                    let d = (e - Complex64::new(1.0, 0.0)) / self.h[a];
                    (g, d)
                })
                .collect()
        };
        let s = [sym(0), sym(1), sym(2)];
        let mut ph = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n2 {
            for j in 0..n1 {
                for i in 0..n0 {
                    let idx = i + n0 * (j + n1 * k);
                    if idx == 0 {
                        for (a, comp) in fh.iter_mut().enumerate() {
                            comp[0] = Complex64::new(mean_u[a] * n as f64, 0.0);
                        }
                        continue;
                    }
                    let g = [s[0][i].0, s[1][j].0, s[2][k].0];
                    let d = [s[0][i].1, s[1][j].1, s[2][k].1];
                    let l: f64 = g.iter().map(|x| x.norm_sqr()).sum();
                    let df = d[0] * fh[0][idx] + d[1] * fh[1][idx] + d[2] * fh[2][idx];
                    let p = -df / l;
                    ph[idx] = p;
                    for a in 0..3 {
                        fh[a][idx] = (fh[a][idx] - g[a] * p) / (self.nu * l);
                    }
                }
            }
        }
        let mut out: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            self.fft.inverse(&mut fh[a]);
            out[a] = fh[a].iter().map(|v| v.re).collect();
        }
        self.fft.inverse(&mut ph);
        (out, ph.iter().map(|v| v.re).collect())
    }
}

/// Result of the capacitance solve.
pub struct CapacitanceSolution {
    pub u: [Vec<f64>; 3],
    pub p: Vec<f64>,
    pub mean_u: [f64; 3],
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Largest velocity left on a solid face before it was zeroed.
    pub max_solid_velocity: f64,
}

/// Periodic Stokes with `u = 0` on the solid faces of `masks`.
///
/// The force may have a nonzero mean: the holes carry the reaction. Solid
/// face multipliers `λ` are found by projected CG on the capacitance system
/// `R P₀ Rᵀ λ = -R P₀ f` restricted to multipliers whose per-component sum
/// balances the mean force; the mean velocity then follows from the
/// no-slip condition.
pub fn solve_with_holes(
    solver: &PeriodicStokes,
    masks: &Masks,
    f: &[&[f64]; 3],
    tol: f64,
    max_iter: usize,
) -> CapacitanceSolution {
    let solid: [Vec<usize>; 3] =
        [0, 1, 2].map(|a| masks.faces[a].iter().enumerate().filter(|(_, fl)| !**fl).map(|(i, _)| i).collect());
    let offs = [0, solid[0].len(), solid[0].len() + solid[1].len()];
    let ns = offs[2] + solid[2].len();
    let nf = f[0].len();

    // particular multipliers balancing the mean force
    let lam_p: [f64; 3] = [0, 1, 2].map(|a| {
        let total = numeric::sum(f[a]);
        if solid[a].is_empty() {
            0.0
        } else {
            -total / solid[a].len() as f64
        }
    });

    let total_force = |lam: &[f64]| -> [Vec<f64>; 3] {
        [0, 1, 2].map(|a| {
            let mut t = f[a].to_vec();
            for (s, &idx) in solid[a].iter().enumerate() {
                t[idx] += lam_p[a] + lam[offs[a] + s];
            }
            t
        })
    };
    let zero_force: Vec<f64> = vec![0.0; nf];
    let project = |x: &mut [f64]| {
        for a in 0..3 {
            let seg = &mut x[offs[a]..offs[a] + solid[a].len()];
            if seg.is_empty() {
                continue;
            }
            let mean = numeric::sum(seg) / seg.len() as f64;
            seg.iter_mut().for_each(|v| *v -= mean);
        }
    };
    let restrict = |u: &[Vec<f64>; 3], out: &mut [f64]| {
        for a in 0..3 {
            for (s, &idx) in solid[a].iter().enumerate() {
                out[offs[a] + s] = u[a][idx];
            }
        }
    };

    let zero_lam = vec![0.0; ns];
    let tf = total_force(&zero_lam);
    let (u0, _) = solver.solve(&[&tf[0], &tf[1], &tf[2]], [0.0; 3]);
    let mut rhs = vec![0.0; ns];
    restrict(&u0, &mut rhs);
    rhs.iter_mut().for_each(|v| *v = -*v);
    project(&mut rhs);

    let apply = |x: &[f64], y: &mut [f64]| {
        let forces: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
            let mut t = zero_force.clone();
            for (s, &idx) in solid[a].iter().enumerate() {
                t[idx] = x[offs[a] + s];
            }
            t
        });
        let (u, _) = solver.solve(&[&forces[0], &forces[1], &forces[2]], [0.0; 3]);
        restrict(&u, y);
        project(y);
    };
    let mut lam = vec![0.0; ns];
    let res = pcg(apply, |r, z| z.copy_from_slice(r), project, &rhs, &mut lam, tol, max_iter);

    let tf = total_force(&lam);
    let (mut u, p) = solver.solve(&[&tf[0], &tf[1], &tf[2]], [0.0; 3]);
    let mut mean_u = [0.0; 3];
    for a in 0..3 {
        if !solid[a].is_empty() {
            mean_u[a] = -numeric::sum_by(solid[a].len(), |s| u[a][solid[a][s]]) / solid[a].len() as f64;
        }
    }
    let mut max_solid: f64 = 0.0;
    for a in 0..3 {
        for v in u[a].iter_mut() {
            *v += mean_u[a];
        }
        for &idx in &solid[a] {
            max_solid = max_solid.max(u[a][idx].abs());
            u[a][idx] = 0.0;
        }
    }
    CapacitanceSolution {
        u,
        p,
        mean_u,
        iterations: res.iterations,
        relative_residual: res.relative_residual,
        converged: res.converged,
        max_solid_velocity: max_solid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::VectorField;
    use crate::geometry::rasterize;
    use crate::geometry::{HoleSet, Obstacle, StaggeredGrid};
    use crate::stokes::ops::Ops;
    use std::f64::consts::PI;

    fn exact_u(x: [f64; 3]) -> [f64; 3] {
        let t = x.map(|v| 2.0 * PI * v);
        [t[1].sin() * t[2].cos(), t[2].sin() * t[0].cos(), t[0].sin() * t[1].cos()]
    }

    fn error(n: usize, nu: f64) -> (f64, f64) {
        let g = StaggeredGrid::unit_torus(n);
        let f = VectorField::from_fn(&g, |x| {
            let u = exact_u(x);
            let dp = 2.0 * PI * (2.0 * PI * x[0]).cos();
            [8.0 * PI * PI * nu * u[0] + dp, 8.0 * PI * PI * nu * u[1], 8.0 * PI * PI * nu * u[2]]
        });
        let s = PeriodicStokes::new(&g, nu).unwrap();
        let (u, p) = s.solve(&[&f.comps[0], &f.comps[1], &f.comps[2]], [0.0; 3]);
        let ue = VectorField::from_fn(&g, exact_u);
        let h3 = 1.0 / (n * n * n) as f64;
        let eu: f64 = (0..3).map(|a| u[a].iter().zip(&ue.comps[a]).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sum();
        let ep: f64 = (0..g.n_cells())
            .map(|c| {
                let ijk = g.cell_ijk(c);
                let x = g.cell_center(ijk[0], ijk[1], ijk[2]);
                (p[c] - (2.0 * PI * x[0]).sin()).powi(2)
            })
            .sum();
        ((eu * h3).sqrt(), (ep * h3).sqrt())
    }

    #[test]
    fn manufactured_solution_converges_second_order() {
        let (u1, p1) = error(16, 0.7);
        let (u2, p2) = error(32, 0.7);
        assert!((u1 / u2).log2() >= 1.7, "{u1} {u2}");
        assert!((p1 / p2).log2() >= 1.7, "{p1} {p2}");
    }

    #[test]
    fn capacitance_solution_satisfies_discrete_stokes() {
        let n = 24;
        let nu = 0.3;
        let g = StaggeredGrid::unit_torus(n);
        let holes = HoleSet::periodic_lattice(0.5, 0.8, Obstacle::Ball(0.125), [1.0; 3]).unwrap();
        let masks = rasterize(&holes, &g).unwrap();
        let f = VectorField::from_fn(&g, |x| [1.0 + (2.0 * PI * x[1]).sin(), 0.5, (2.0 * PI * x[0]).cos()]);
        let s = PeriodicStokes::new(&g, nu).unwrap();
        let sol = solve_with_holes(&s, &masks, &[&f.comps[0], &f.comps[1], &f.comps[2]], 1e-11, 2000);
        assert!(sol.converged);
        assert!(sol.max_solid_velocity < 1e-8, "{}", sol.max_solid_velocity);
        let ops = Ops::new(&g, &masks);
        let o = ops.offsets();
        let mut flat = vec![0.0; o[3]];
        for a in 0..3 {
            flat[o[a]..o[a + 1]].copy_from_slice(&sol.u[a]);
        }
        let mut ku = vec![0.0; o[3]];
        let mut gp = vec![0.0; o[3]];
        ops.k_flat(&flat, &mut ku);
        ops.grad_flat(&sol.p, &mut gp);
        let vol = g.volume() / g.n_cells() as f64;
        let ff = f.flatten();
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            for i in o[a]..o[a + 1] {
                if masks.faces[a][i - o[a]] {
                    worst = worst.max((nu * ku[i] + gp[i] - vol * ff[i]).abs() / vol);
                }
            }
        }
        assert!(worst < 1e-7, "momentum residual {worst}");
        let mut d = vec![0.0; g.n_cells()];
        ops.div_flat(&flat, &mut d);
        assert!(crate::numeric::max_abs(&d) < 1e-9);
        // mean flow runs with the force
        assert!(sol.mean_u[0] > 0.0 && sol.mean_u[1] > 0.0);
    }
}
