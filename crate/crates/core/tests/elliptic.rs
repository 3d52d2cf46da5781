use std::f64::consts::PI;

use homog_core::fields::{ScalarField, VectorField};
use homog_core::geometry::{Boundary, Masks, StaggeredGrid};
use homog_core::stokes::aniso::solve_aniso_neumann;
use homog_core::stokes::eigen::{smallest_eigenvalue, WallCondition};

const A: [[f64; 3]; 3] = [[1.5, 0.4, 0.2], [0.4, 1.0, -0.1], [0.2, -0.1, 0.8]];

fn matvec(a: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

#[test]
fn zero_flux_gives_zero_pressure() {
    for b in [Boundary::Periodic, Boundary::Wall] {
        let g = StaggeredGrid::uniform([8; 3], [0.0; 3], [1.0; 3], b);
        let (p, _) = solve_aniso_neumann(&g, A, &VectorField::zeros(&g), 1e-10, 500).unwrap();
        assert!(p.data.iter().all(|v| *v == 0.0));
    }
}

/// Error of the recovered potential for `F = c·A∇φ`.
fn potential_error(n: usize, boundary: Boundary, phi: fn([f64; 3]) -> f64, grad: fn([f64; 3]) -> [f64; 3]) -> f64 {
    let c = 2.5;
    let g = StaggeredGrid::uniform([n; 3], [0.0; 3], [1.0; 3], boundary);
    let f = VectorField::from_fn(&g, |x| matvec(&A, grad(x)).map(|v| c * v));
    let (p, rep) = solve_aniso_neumann(&g, A, &f, 1e-11, 2000).unwrap();
    assert!(rep.residual_momentum <= 1e-10);
    let mut exact = ScalarField::from_fn(&g, |x| c * phi(x));
    exact.remove_mean(&g, None);
    let mean = p.integral(&g);
    assert!(mean.abs() < 1e-10);
    let mut d = p.clone();
    for (v, e) in d.data.iter_mut().zip(&exact.data) {
        *v -= e;
    }
    d.l2_norm(&g)
}

fn periodic_phi(x: [f64; 3]) -> f64 {
    (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + (2.0 * PI * x[2]).sin()
}

fn periodic_grad(x: [f64; 3]) -> [f64; 3] {
    let t = x.map(|v| 2.0 * PI * v);
    [2.0 * PI * t[0].cos() * t[1].cos(), -2.0 * PI * t[0].sin() * t[1].sin(), 2.0 * PI * t[2].cos()]
}

// zero normal derivative on the walls of the unit box
fn box_phi(x: [f64; 3]) -> f64 {
    (PI * x[0]).cos() * (PI * x[1]).cos() + (PI * x[2]).cos()
}

fn box_grad(x: [f64; 3]) -> [f64; 3] {
    let t = x.map(|v| PI * v);
    [-PI * t[0].sin() * t[1].cos(), -PI * t[0].cos() * t[1].sin(), -PI * t[2].sin()]
}

#[test]
fn gradient_flux_recovers_the_potential_at_second_order() {
    for (b, phi, grad) in [
        (Boundary::Periodic, periodic_phi as fn([f64; 3]) -> f64, periodic_grad as fn([f64; 3]) -> [f64; 3]),
        (Boundary::Wall, box_phi, box_grad),
    ] {
        let e1 = potential_error(16, b, phi, grad);
        let e2 = potential_error(32, b, phi, grad);
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "{b:?}: order {order} ({e1:.3e} -> {e2:.3e})");
    }
}

#[test]
fn non_spd_matrix_is_rejected() {
    let g = StaggeredGrid::unit_torus(4);
    let bad = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let err = solve_aniso_neumann(&g, bad, &VectorField::zeros(&g), 1e-8, 10).unwrap_err();
    assert!(err.to_string().starts_with("matrix not SPD"));
}

#[test]
fn dirichlet_box_eigenvalue_approaches_three_pi_squared() {
    let exact = 3.0 * PI * PI;
    let mut errs = Vec::new();
    for n in [16, 32] {
        let g = StaggeredGrid::uniform([n; 3], [0.0; 3], [1.0; 3], Boundary::Wall);
        let e = smallest_eigenvalue(&g, &Masks::all_fluid(&g), WallCondition::Dirichlet, 1e-9, 200).unwrap();
        errs.push((e.lambda - exact).abs() / exact);
    }
    assert!(errs[1] < 2e-3, "{errs:?}");
    assert!((errs[0] / errs[1]).log2() > 1.8, "{errs:?}");
}

#[test]
fn small_ball_eigenvalue_follows_capacity_asymptotics() {
    // one octant of the unit periodic cell, hole at the corner, mirror walls
    let r = 0.05;
    let n = 64;
    let g = StaggeredGrid::uniform([n; 3], [0.0; 3], [0.5; 3], Boundary::Wall);
    let m = Masks::from_predicate(&g, |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2] < r * r);
    let e = smallest_eigenvalue(&g, &m, WallCondition::Neumann, 1e-8, 200).unwrap();
    let oracle = 4.0 * PI * r;
    assert!((e.lambda - oracle).abs() <= 0.25 * oracle, "{} vs {}", e.lambda, oracle);
}
