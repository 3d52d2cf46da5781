//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! before asserting, so `cargo test --test acceptance -- --nocapture`
//! doubles as a report.

use std::f64::consts::PI;
use std::time::Instant;

use homog_core::cell_problem::{compute_m0, extrapolate_m0, solve_cell, CellOptions, ResistanceMatrix};
use homog_core::corrector::{verify_corrector_estimates, CorrectorOptions};
use homog_core::darcy::{assemble_velocity, pressure_solve, run, DarcyOptions, DensityInit, ForceField};
use homog_core::fields::{ScalarField, VectorField};
use homog_core::geometry::{Boundary, Masks, Obstacle, PerforationConfig, StaggeredGrid};
use homog_core::micro::{cell_eigenvalue, micro_ladder, poincare_ladder, relative_energy, PoincareOptions};
use homog_core::stokes::ops::Ops;
use homog_core::stokes::{solve_stokes, Method, StokesOptions};

fn report(criterion: u32, pass: bool, detail: String, started: Instant) {
    println!(
        "criterion {criterion}: {} ({detail}; {:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

/// splitmix64 mapped to `[0, 1)`.
fn uniform(seed: u64) -> impl FnMut() -> f64 {
    let mut s = seed;
    move || {
        s = s.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn off_diagonal_ratio(m: &ResistanceMatrix) -> f64 {
    let diag = (0..3).map(|i| m.m0[i][i]).fold(f64::INFINITY, f64::min);
    let off = (0..3).flat_map(|i| (0..3).filter(move |j| *j != i).map(move |j| (i, j)));
    off.map(|(i, j)| m.m0[i][j].abs()).fold(0.0, f64::max) / diag
}

#[test]
fn criterion_1_ball_resistance_matches_stokes_drag() {
    let t = Instant::now();
    let m = extrapolate_m0(&Obstacle::Ball(0.1), &[2.0, 3.0, 4.0, 6.0], &[96], 1.0, &CellOptions::default()).unwrap();
    let drag = 6.0 * PI * 0.1;
    let worst = (0..3).map(|i| (m.m0[i][i] - drag).abs() / drag).fold(0.0, f64::max);
    let off = off_diagonal_ratio(&m);
    let pass = worst <= 0.10 && off <= 0.01;
    let d = [m.m0[0][0], m.m0[1][1], m.m0[2][2]];
    report(1, pass, format!("diag {d:.4?} vs {drag:.4}, worst rel {worst:.3}, off/diag {off:.2e}"), t);
    assert!(pass);
}

#[test]
fn criterion_2_resistance_is_symmetric_positive_definite() {
    let t = Instant::now();
    let opts = CellOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for ob in [Obstacle::Ball(0.1), Obstacle::Cube(0.06)] {
        let m = compute_m0(&solve_cell(&ob, 3.0, 48, &opts).unwrap(), 1.0).unwrap();
        let ok = m.asymmetry <= 1e-8 && m.eigenvalues.iter().all(|l| *l > 0.0);
        pass &= ok;
        lines.push(format!("{ob:?}: asym {:.1e}, min eig {:.4}", m.asymmetry, m.eigenvalues[0].min(m.eigenvalues[2])));
    }
    report(2, pass, lines.join("; "), t);
    assert!(pass);
}

#[test]
fn criterion_3_corrector_slopes_follow_the_estimates() {
    let t = Instant::now();
    let ob = Obstacle::Ball(0.1);
    let cell = solve_cell(&ob, 6.0, 64, &CellOptions::default()).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for alpha in [1.5, 2.0] {
        let configs: Vec<_> =
            [0.5, 0.25, 0.125].iter().map(|&e| PerforationConfig::torus(e, alpha, ob.clone())).collect();
        let rates =
            verify_corrector_estimates(&configs, &cell, &[2.0, f64::INFINITY], &CorrectorOptions::default(), None)
                .unwrap();
        let w2 = rates.fit("w_minus_id", 2.0).unwrap();
        let winf = rates.fit("w_minus_id", f64::INFINITY).unwrap();
        let expected_w = alpha - 1.0;
        let expected_g = 1.5 * (alpha - 1.0) - alpha;
        let mut ok = (w2.slope - expected_w).abs() <= 0.3 && winf.slope.abs() <= 0.2;
        let mut grads = Vec::new();
        for i in 1..=3 {
            let g = rates.fit(&format!("grad_v{i}"), 2.0).unwrap();
            ok &= (g.slope - expected_g).abs() <= 0.3;
            grads.push(g.slope);
        }
        pass &= ok;
        lines.push(format!(
            "α={alpha}: w L2 {:.3} (want {expected_w}), ∇v L2 {:.3?} (want {expected_g}), w Linf {:.3}",
            w2.slope, grads, winf.slope
        ));
    }
    report(3, pass, lines.join("; "), t);
    assert!(pass);
}

#[test]
fn criterion_4_poincare_constant_scales_like_sigma() {
    let t = Instant::now();
    let opts = PoincareOptions::default();
    let lad = poincare_ladder(2.0, &[0.25, 0.125, 0.0625], &Obstacle::Ball(0.125), &opts, 0.2).unwrap();
    let (lambda, _, _) = cell_eigenvalue(&Obstacle::Ball(0.05), 1.0, &opts).unwrap();
    let capacity = 4.0 * PI * 0.05;
    let rel = (lambda - capacity).abs() / capacity;
    let pass = (lad.fit.slope - 0.5).abs() <= 0.2 && rel <= 0.25;
    report(4, pass, format!("slope {:.4} (want 0.5), λ_min {lambda:.4} vs 4π·0.05 = {capacity:.4}", lad.fit.slope), t);
    assert!(pass);
}

#[test]
fn criterion_5_darcy_blob_run_keeps_its_invariants() {
    let t = Instant::now();
    let n = 64;
    let g = StaggeredGrid::unit_torus(n);
    let rho0 =
        DensityInit::Gaussian { center: [0.5; 3], width: 0.1, amplitude: 1.0, background: 1.0 }.sample(&g).unwrap();
    let k = 0.53;
    let a = [[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]];
    // unit background drift, so T = 0.25 moves the blob a quarter of the box
    let force = ForceField::Constant { value: [1.0 / k, 0.0, 0.0] };
    let opts = DarcyOptions::default();
    let traj = run(&g, &rho0, &force, a, 0.25, 1.0 / n as f64, &opts).unwrap();
    let l = &traj.ledger;
    let m0 = l[0].mass;
    let drift = l.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(0.0, f64::max);
    let range = l.windows(2).all(|w| w[1].max <= w[0].max && w[1].min >= w[0].min);
    let decay = 1.0 - l.last().unwrap().l2 / l[0].l2;
    let nonneg = l.iter().all(|r| r.min >= 0.0);
    let div = l.iter().map(|r| r.div_residual).fold(0.0, f64::max);
    let pass = traj.failure.is_none() && drift <= 1e-10 && range && decay <= 0.02 && nonneg && div <= 10.0 * opts.tol;
    report(
        5,
        pass,
        format!(
            "{} steps, mass drift {drift:.1e}, range ok {range}, L2 decay {decay:.2e}, min ≥ 0 {nonneg}, div {div:.1e}",
            l.len() - 1
        ),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_6_darcy_degenerate_oracles() {
    let t = Instant::now();
    let g = StaggeredGrid::unit_torus(64);
    let a = [[0.8, 0.1, 0.0], [0.1, 0.5, -0.05], [0.0, -0.05, 0.6]];
    let c = 2.5;
    let rho = ScalarField::constant(&g, c);
    let f = ForceField::Gradient { amplitude: 1.0, wavenumber: [1.0, 2.0, 0.0] }.sample(&g, 0.0);
    let (p, _) = pressure_solve(&g, &rho, &f, a, 1e-10).unwrap();
    let u = assemble_velocity(&g, &rho, &f, &p, a).unwrap();
    let ratio = u.l2_norm(&g) / (c * f.l2_norm(&g));

    let small = StaggeredGrid::unit_torus(16);
    let one = ScalarField::constant(&small, 1.0);
    let swirl = ForceField::Sinusoidal { amplitude: [1.0, 0.5, 0.0], wavenumber: [0.0, 1.0, 1.0], phase: 0.3 };
    let traj = run(&small, &one, &swirl, a, 0.5, 1.0 / 16.0, &DarcyOptions::default()).unwrap();
    let frozen = traj.states.iter().all(|s| s.rho.data.iter().all(|v| *v == 1.0));
    let pass = ratio <= 1e-6 && frozen && traj.failure.is_none();
    report(6, pass, format!("‖u‖/(c‖∇φ‖) = {ratio:.1e}, constant density frozen {frozen}"), t);
    assert!(pass);
}

#[test]
fn criterion_7_micro_flow_approaches_darcy() {
    let t = Instant::now();
    let lad = micro_ladder(1.5, &[0.5, 0.25, 0.125], &Obstacle::Ball(0.125), &Default::default()).unwrap();
    let errs: Vec<f64> = lad.rows.iter().map(|r| r.err_u).collect();
    let pass = lad.monotone && lad.fit.slope >= 0.2;
    report(7, pass, format!("err_u {errs:.3?}, slope {:.3}, violations {:?}", lad.fit.slope, lad.violations), t);
    assert!(pass);
}

fn manufactured_error(n: usize) -> f64 {
    let nu = 0.5;
    let g = StaggeredGrid::unit_torus(n);
    let m = Masks::all_fluid(&g);
    let exact = |x: [f64; 3]| {
        let t = x.map(|v| 2.0 * PI * v);
        [t[1].sin() * t[2].cos(), t[2].sin() * t[0].cos(), t[0].sin() * t[1].cos()]
    };
    // -νΔu = 8π²ν u for this field; p = sin 2πx
    let f = VectorField::from_fn(&g, |x| {
        let u = exact(x);
        let k = 8.0 * PI * PI * nu;
        [k * u[0] + 2.0 * PI * (2.0 * PI * x[0]).cos(), k * u[1], k * u[2]]
    });
    let s = solve_stokes(&g, &m, nu, &f, &StokesOptions::default()).unwrap();
    let ue = VectorField::from_fn(&g, exact);
    let pe = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
    let mut du = s.u;
    for a in 0..3 {
        du.comps[a].iter_mut().zip(&ue.comps[a]).for_each(|(v, e)| *v -= e);
    }
    let mut dp = s.p;
    dp.data.iter_mut().zip(&pe.data).for_each(|(v, e)| *v -= e);
    (du.l2_norm(&g).powi(2) + dp.l2_norm(&g).powi(2)).sqrt()
}

/// Largest relative `⟨Gp,u⟩ + ⟨p,Du⟩` over random masked fields.
fn adjointness_defect() -> f64 {
    let g = StaggeredGrid::unit_torus(12);
    let masks =
        Masks::from_predicate(&g, |x| (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2) < 0.2 * 0.2);
    let ops = Ops::new(&g, &masks);
    let mut next = uniform(3);
    let mut worst: f64 = 0.0;
    for _ in 0..8 {
        let mut u = VectorField::zeros(&g);
        for a in 0..3 {
            u.comps[a].iter_mut().for_each(|v| *v = next() - 0.5);
        }
        u.apply_mask(&masks);
        let mut p = ScalarField::zeros(&g);
        for (i, v) in p.data.iter_mut().enumerate() {
            *v = if masks.cells[i] { next() - 0.5 } else { 0.0 };
        }
        let mut gp = VectorField::zeros(&g);
        ops.grad(&p, &mut gp);
        let mut du = ScalarField::zeros(&g);
        ops.div(&u, &mut du);
        let lhs: f64 = (0..3).map(|a| gp.comps[a].iter().zip(&u.comps[a]).map(|(x, y)| x * y).sum::<f64>()).sum();
        let rhs: f64 = -p.data.iter().zip(&du.data).map(|(x, y)| x * y).sum::<f64>();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    worst
}

#[test]
fn criterion_8_stokes_kernel_order_adjointness_and_energy() {
    let t = Instant::now();
    let (e32, e64) = (manufactured_error(32), manufactured_error(64));
    let order = (e32 / e64).log2();
    let adj = adjointness_defect();

    let g = StaggeredGrid::uniform([20; 3], [-1.0; 3], [2.0; 3], Boundary::Wall);
    let m = Masks::from_predicate(&g, |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2] < 0.3 * 0.3);
    let f = VectorField::from_fn(&g, |x| [1.0 + (PI * x[1]).sin(), 0.5 * (2.0 * PI * x[2]).cos(), x[0] * x[1] + 0.3]);
    let o = StokesOptions { method: Method::Minres, ..Default::default() };
    let nu = 0.7;
    let s = solve_stokes(&g, &m, nu, &f, &o).unwrap();
    let dissipation = nu * Ops::new(&g, &m).energy(&s.u, &s.u, [0.0; 3], [0.0; 3]);
    let mut fm = f.clone();
    fm.apply_mask(&m);
    let work = fm.inner(&s.u, &g);
    let gap = (dissipation - work).abs() / work.abs();

    let pass = order >= 1.7 && adj <= 1e-12 && gap <= 10.0 * o.tol;
    report(
        8,
        pass,
        format!("order {order:.3} ({e32:.2e} -> {e64:.2e}), adjoint defect {adj:.1e}, energy gap {gap:.1e}"),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_9_relative_energy_functional() {
    let t = Instant::now();
    let mut zero_self = true;
    let mut min_e = f64::INFINITY;
    for seed in 0..64u64 {
        let g = if seed % 2 == 0 {
            StaggeredGrid::unit_torus(5)
        } else {
            StaggeredGrid::uniform([5, 4, 3], [0.0; 3], [1.0, 0.8, 0.6], Boundary::Wall)
        };
        let mut next = uniform(seed);
        let mut rho = ScalarField::zeros(&g);
        rho.data.iter_mut().for_each(|v| *v = 2.0 * next());
        let mut r = ScalarField::zeros(&g);
        r.data.iter_mut().for_each(|v| *v = 3.0 * next() - 1.0);
        let (mut u, mut big) = (VectorField::zeros(&g), VectorField::zeros(&g));
        for a in 0..3 {
            u.comps[a].iter_mut().for_each(|v| *v = next() - 0.5);
            big.comps[a].iter_mut().for_each(|v| *v = 4.0 * (next() - 0.5));
        }
        let sigma = 0.01 + next();
        zero_self &= relative_energy(&g, &rho, &u, &rho, &u, sigma, None).unwrap() == 0.0;
        min_e = min_e.min(relative_energy(&g, &rho, &u, &r, &big, sigma, None).unwrap());
    }

    // U = 0 on a periodic grid: σ⁴ Σ ½ρ_face u² + Σ ½(ρ − r)², face density the neighbour mean
    let n = [6, 5, 4];
    let g = StaggeredGrid::uniform(n, [0.0; 3], [1.0; 3], Boundary::Periodic);
    let mut next = uniform(99);
    let mut rho = ScalarField::zeros(&g);
    rho.data.iter_mut().for_each(|v| *v = 0.5 + next());
    let mut r = ScalarField::zeros(&g);
    r.data.iter_mut().for_each(|v| *v = next());
    let mut u = VectorField::zeros(&g);
    for a in 0..3 {
        u.comps[a].iter_mut().for_each(|v| *v = next() - 0.5);
    }
    let sigma: f64 = 0.4;
    let e = relative_energy(&g, &rho, &u, &r, &VectorField::zeros(&g), sigma, None).unwrap();
    let vol = 1.0 / (n[0] * n[1] * n[2]) as f64;
    let mut kinetic = 0.0;
    for a in 0..3 {
        for idx in 0..g.n_faces(a) {
            let [i, j, k] = g.face_ijk(a, idx);
            let mut lo = [i, j, k];
            lo[a] = (lo[a] + n[a] - 1) % n[a];
            let rf = 0.5 * (rho.data[g.cell_index(i, j, k)] + rho.data[g.cell_index(lo[0], lo[1], lo[2])]);
            kinetic += 0.5 * rf * u.comps[a][idx].powi(2) * vol;
        }
    }
    let potential: f64 = rho.data.iter().zip(&r.data).map(|(a, b)| 0.5 * (a - b).powi(2) * vol).sum();
    let direct = sigma.powi(4) * kinetic + potential;
    let rel = (e - direct).abs() / direct;

    let pass = zero_self && min_e >= 0.0 && rel <= 1e-13;
    report(9, pass, format!("self energy zero {zero_self}, min random E {min_e:.3e}, quadrature defect {rel:.1e}"), t);
    assert!(pass);
}
