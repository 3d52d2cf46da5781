use std::f64::consts::PI;

use homog_core::cell_problem::{compute_m0, extrapolate_m0, solve_cell, CellOptions, CellProbe};
use homog_core::geometry::Obstacle;
use homog_core::Error;

/// Haberman–Sayre wall factor for a sphere centred in a spherical container
/// with radius ratio `l`.
fn wall_factor(l: f64) -> f64 {
    (1.0 - 2.0 / 3.0 * l.powi(5)) / (1.0 - 2.25 * l + 2.5 * l.powi(3) - 2.25 * l.powi(5) + l.powi(6))
}

fn drag(obstacle: Obstacle, r: f64, n: usize) -> homog_core::cell_problem::ResistanceMatrix {
    let sol = solve_cell(&obstacle, r, n, &CellOptions::default()).unwrap();
    compute_m0(&sol, 1.0).unwrap()
}

#[test]
fn empty_obstacle_gives_the_far_field_and_a_degenerate_matrix() {
    let sol = solve_cell(&Obstacle::None, 2.0, 12, &CellOptions::default()).unwrap();
    for i in 0..3 {
        for a in 0..3 {
            let want = if i == a { 1.0 } else { 0.0 };
            assert!(sol.v[i].comps[a].iter().all(|v| *v == want));
        }
        assert!(sol.q[i].data.iter().all(|v| *v == 0.0));
    }
    let err = compute_m0(&sol, 1.0).unwrap_err();
    assert!(matches!(err, Error::DegenerateObstacle));
    assert!(err.to_string().contains("degenerate obstacle"));
}

#[test]
fn truncation_below_two_is_rejected() {
    let err = solve_cell(&Obstacle::Ball(0.1), 1.0, 32, &CellOptions::default()).unwrap_err();
    assert!(matches!(err, Error::TruncationTooSmall { .. }));
    let err = extrapolate_m0(&Obstacle::Ball(0.1), &[2.0, 3.0], &[16], 1.0, &CellOptions::default()).unwrap_err();
    assert!(matches!(err, Error::TooFewRadii(2)));
}

#[test]
fn ball_drag_lies_between_the_container_bounds() {
    // the cube [-R, R]³ sits between its inscribed and circumscribed spheres
    let (r0, big_r) = (0.1, 3.0);
    let m = drag(Obstacle::Ball(r0), big_r, 48);
    let stokes = 6.0 * PI * r0;
    let lo = stokes * wall_factor(r0 / (3f64.sqrt() * big_r));
    let hi = stokes * wall_factor(r0 / big_r);
    for i in 0..3 {
        let d = m.m0[i][i];
        assert!(d > 0.97 * lo && d < 1.03 * hi, "diagonal {d} outside [{lo}, {hi}]");
        for j in 0..3 {
            if i != j {
                assert!(m.m0[i][j].abs() <= 1e-6 * d);
            }
        }
    }
    assert!(m.asymmetry <= 1e-8);
    assert!(m.eigenvalues.iter().all(|e| *e > 0.0));
    // permeability is the inverse
    assert!(m.inverse_defect() < 1e-12);
}

#[test]
fn cube_matrix_is_isotropic_and_between_its_balls() {
    let w = 0.07;
    let cube = drag(Obstacle::Cube(w), 3.0, 48);
    let inner = drag(Obstacle::Ball(w), 3.0, 48);
    let outer = drag(Obstacle::Ball(w * 3f64.sqrt()), 3.0, 48);
    let c = cube.m0[0][0];
    for i in 0..3 {
        assert!((cube.m0[i][i] - c).abs() <= 1e-8 * c);
        for j in 0..3 {
            if i != j {
                assert!(cube.m0[i][j].abs() <= 0.01 * c);
            }
        }
    }
    assert!(cube.asymmetry <= 1e-8);
    assert!(inner.m0[0][0] < c && c < outer.m0[0][0], "{} < {c} < {}", inner.m0[0][0], outer.m0[0][0]);
}

#[test]
fn resistance_grows_roughly_linearly_with_radius() {
    let radii = [0.05, 0.075, 0.1];
    let d: Vec<f64> = radii.iter().map(|r| drag(Obstacle::Ball(*r), 3.0, 40).m0[0][0]).collect();
    assert!(d[0] < d[1] && d[1] < d[2], "{d:?}");
    for (r, m) in radii.iter().zip(&d) {
        let ratio = m / (6.0 * PI * r);
        assert!((ratio - 1.0).abs() < 0.15, "r = {r}: ratio {ratio}");
    }
}

#[test]
fn probe_reproduces_grid_values_and_far_field() {
    let sol = solve_cell(&Obstacle::Ball(0.1), 2.0, 32, &CellOptions::default()).unwrap();
    let probe = CellProbe::new(&sol);
    let g = &sol.grid;
    for idx in (0..g.n_faces(1)).step_by(97) {
        let ijk = g.face_ijk(1, idx);
        let y = g.face_center(1, ijk);
        let v = probe.velocity(2, y);
        assert!((v[1] - sol.v[2].comps[1][idx]).abs() < 1e-12);
    }
    assert_eq!(probe.velocity(0, [2.5, 0.0, 0.0]), [1.0, 0.0, 0.0]);
    assert_eq!(probe.pressure(0, [0.0, -3.0, 0.0]), 0.0);
    // inside the obstacle the velocity vanishes
    assert!(probe.velocity(1, [0.0; 3]).iter().all(|v| v.abs() < 1e-12));
}
