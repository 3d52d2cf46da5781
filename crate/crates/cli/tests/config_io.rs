use homog_cli::config::{self, parse_config, parse_obstacle, to_toml, DarcyDomain, DumpFormat, RunConfig};
use homog_cli::io::{read_raw, write_csv, write_raw, write_vtk_scalar, write_vtk_vector};
use homog_core::darcy::{DensityInit, ForceField, PicardOptions};
use homog_core::fields::{ScalarField, VectorField};
use homog_core::geometry::{Boundary, Obstacle, StaggeredGrid};
use homog_core::micro::CellGrid;
use homog_core::stokes::Method;
use proptest::prelude::*;

fn obstacle() -> impl Strategy<Value = Obstacle> {
    prop_oneof![
        Just(Obstacle::None),
        (0.01..0.125f64).prop_map(Obstacle::Ball),
        (0.01..0.07f64).prop_map(Obstacle::Cube),
    ]
}

fn method() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::Auto),
        Just(Method::Fft),
        Just(Method::Capacitance),
        Just(Method::Minres),
        Just(Method::Uzawa)
    ]
}

fn force() -> impl Strategy<Value = ForceField> {
    let leaf = prop_oneof![
        Just(ForceField::Zero),
        prop::array::uniform3(-5.0..5.0f64).prop_map(|value| ForceField::Constant { value }),
        (prop::array::uniform3(-2.0..2.0f64), prop::array::uniform3(-3.0..3.0f64), -3.0..3.0f64)
            .prop_map(|(amplitude, wavenumber, phase)| ForceField::Sinusoidal { amplitude, wavenumber, phase }),
        (-2.0..2.0f64, prop::array::uniform3(-3.0..3.0f64))
            .prop_map(|(amplitude, wavenumber)| ForceField::Gradient { amplitude, wavenumber }),
    ];
    leaf.prop_recursive(2, 6, 3, |inner| {
        prop_oneof![
            (inner.clone(), 0.0..10.0f64).prop_map(|(b, omega)| ForceField::Modulated { base: Box::new(b), omega }),
            prop::collection::vec(inner, 1..3).prop_map(|terms| ForceField::Sum { terms }),
        ]
    })
}

prop_compose! {
    fn run_config()(
        cell_obstacle in obstacle(),
        radii in prop::collection::vec(2.0..8.0f64, 1..5),
        n in prop::collection::vec(8usize..128, 1..3),
        mu in 0.1..10.0f64,
        tol in 1e-12..1e-4f64,
        m in method(),
        alpha in 1.01..2.99f64,
        eps in prop::collection::vec(prop::sample::select(vec![0.5, 0.25, 0.125, 0.0625]), 0..5),
        p in prop::collection::vec(prop::sample::select(vec!["2", "3", "inf"]), 1..3),
        band in prop::option::of(0.0..1.0f64),
        dn in 2usize..64,
        box_domain: bool,
        gaussian in prop::option::of((prop::array::uniform3(0.0..1.0f64), 0.01..0.5f64, 0.0..3.0f64, 0.0..2.0f64)),
        f in force(),
        k in prop::array::uniform3(0.1..2.0f64),
        t_end in 0.01..2.0f64,
        dt in prop::option::of(0.001..0.1f64),
        dump in (0usize..5, prop::sample::select(vec![DumpFormat::Vtk, DumpFormat::Raw, DumpFormat::Both])),
        picard in prop::option::of((1e-12..1e-6f64, 1usize..50)),
        octant: bool,
        cells in prop::collection::vec(20usize..120, 0..4),
    ) -> RunConfig {
        let mut c = RunConfig::default();
        c.cell.obstacle = cell_obstacle.clone();
        c.cell.radii = radii;
        c.cell.n = n;
        c.cell.mu = mu;
        c.cell.options.stokes.tol = tol;
        c.cell.options.stokes.method = m;
        c.corrector.obstacle = cell_obstacle.clone();
        c.corrector.alpha = alpha;
        c.corrector.epsilons = eps.clone();
        c.corrector.p = p.into_iter().map(String::from).collect();
        c.corrector.band = band;
        c.darcy.n = dn;
        c.darcy.domain = if box_domain { DarcyDomain::Box } else { DarcyDomain::Torus };
        if let Some((center, width, amplitude, background)) = gaussian {
            c.darcy.density = DensityInit::Gaussian { center, width, amplitude, background };
        } else {
            c.darcy.density = DensityInit::Constant { value: mu };
        }
        c.darcy.force = f;
        c.darcy.a = [[k[0], 0.0, 0.0], [0.0, k[1], 0.0], [0.0, 0.0, k[2]]];
        c.darcy.t_end = t_end;
        c.darcy.dt = dt;
        c.darcy.dump_every = dump.0;
        c.darcy.dump_format = dump.1;
        c.darcy.options.picard = picard.map(|(tol, max_iter)| PicardOptions { tol, max_iter });
        c.micro.obstacle = cell_obstacle.clone();
        c.micro.alpha = alpha;
        c.micro.epsilons = eps;
        c.micro.options.resistance_cells = cells;
        c.poincare.obstacle = cell_obstacle;
        c.poincare.options.grid = if octant {
            CellGrid::Octant { half_cells: dn, cells_across: mu }
        } else {
            CellGrid::Periodic { n: dn }
        };
        c
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(c in run_config()) {
        let text = serde_json::to_string_pretty(&c).unwrap();
        prop_assert_eq!(parse_config(&text, false).unwrap(), c);
    }

    #[test]
    fn toml_round_trip(c in run_config()) {
        let text = to_toml(&c).unwrap();
        prop_assert_eq!(parse_config(&text, true).unwrap(), c);
    }
}

#[test]
fn empty_config_is_the_default() {
    assert_eq!(parse_config("{}", false).unwrap(), RunConfig::default());
    assert_eq!(parse_config("", true).unwrap(), RunConfig::default());
}

#[test]
fn config_files_load_by_extension() {
    let t = tempfile::tempdir().unwrap();
    let json = t.path().join("a.json");
    let toml = t.path().join("a.toml");
    std::fs::write(&json, r#"{"poincare": {"alpha": 1.5}}"#).unwrap();
    std::fs::write(&toml, "[poincare]\nalpha = 1.5\n").unwrap();
    assert_eq!(config::load(&json).unwrap(), config::load(&toml).unwrap());
    assert_eq!(config::load(&json).unwrap().poincare.alpha, 1.5);
    assert!(config::load(&t.path().join("missing.json")).is_err());
}

#[test]
fn obstacle_strings() {
    assert_eq!(parse_obstacle("ball:0.1").unwrap(), Obstacle::Ball(0.1));
    assert_eq!(parse_obstacle(" Cube:0.05 ").unwrap(), Obstacle::Cube(0.05));
    assert_eq!(parse_obstacle("none").unwrap(), Obstacle::None);
    assert!(parse_obstacle("ball").is_err());
    assert!(parse_obstacle("ball:x").is_err());
    assert!(parse_obstacle("torus:0.1").is_err());
}

fn sample_grid() -> StaggeredGrid {
    StaggeredGrid::uniform([3, 4, 5], [0.5, -1.0, 2.0], [0.3, 0.8, 1.0], Boundary::Wall)
}

#[test]
fn raw_dump_reads_back_bitwise() {
    let t = tempfile::tempdir().unwrap();
    let g = sample_grid();
    let a: Vec<f64> = (0..g.n_cells()).map(|i| (i as f64).sin() * 1e-300).collect();
    let b: Vec<f64> = (0..g.n_cells()).map(|i| -(i as f64) / 7.0).collect();
    let path = t.path().join("f.raw");
    let sidecar = write_raw(&path, &g, "f", &[&a, &b]).unwrap();
    assert_eq!(sidecar, t.path().join("f.json"));
    let (h, data) = read_raw(&path).unwrap();
    assert_eq!(h.dims, [3, 4, 5]);
    assert_eq!(h.components, 2);
    assert_eq!(h.byte_order, "little");
    assert_eq!(h.spacing, g.spacing());
    assert_eq!(h.origin, [0.5, -1.0, 2.0]);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 * 2 * 60);
    for i in 0..g.n_cells() {
        assert_eq!(data[2 * i].to_bits(), a[i].to_bits());
        assert_eq!(data[2 * i + 1].to_bits(), b[i].to_bits());
    }
    // the first value is stored little-endian
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes[..8], a[0].to_le_bytes());
}

#[test]
fn vtk_dumps_follow_the_legacy_layout() {
    let t = tempfile::tempdir().unwrap();
    let g = sample_grid();
    let s = ScalarField::from_fn(&g, |x| x[0] + 10.0 * x[1]);
    write_vtk_scalar(&t.path().join("s.vtk"), &g, "rho", &s).unwrap();
    let text = std::fs::read_to_string(t.path().join("s.vtk")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert_eq!(lines[2], "ASCII");
    assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
    assert_eq!(lines[4], "DIMENSIONS 4 5 6");
    assert_eq!(lines[7], "CELL_DATA 60");
    assert_eq!(lines[8], "SCALARS rho double 1");
    let values: Vec<f64> = lines[10..].iter().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values, s.data);
    assert!(!text.contains('\r'));

    // a constant face field averages to the same constant in every cell
    let u = VectorField::from_fn(&g, |_| [1.0, -2.0, 0.5]);
    write_vtk_vector(&t.path().join("u.vtk"), &g, "u", &u).unwrap();
    let text = std::fs::read_to_string(t.path().join("u.vtk")).unwrap();
    let rows: Vec<&str> = text.lines().skip(9).collect();
    assert_eq!(rows.len(), 60);
    for r in rows {
        let v: Vec<f64> = r.split(' ').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v, vec![1.0, -2.0, 0.5]);
    }
}

#[test]
fn stretched_grids_are_not_dumped() {
    let t = tempfile::tempdir().unwrap();
    let g = homog_core::cell_problem::cell_grid(&Obstacle::Ball(0.1), 3.0, 32, &Default::default()).unwrap();
    let s = ScalarField::zeros(&g);
    assert!(write_vtk_scalar(&t.path().join("s.vtk"), &g, "s", &s).is_err());
}

#[test]
fn csv_uses_header_dot_decimals_and_lf() {
    #[derive(serde::Serialize)]
    struct Row {
        epsilon: f64,
        value: f64,
        tag: Option<f64>,
    }
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("t.csv");
    write_csv(
        &p,
        &[Row { epsilon: 0.5, value: 1.25e-12, tag: None }, Row { epsilon: 0.25, value: 3.0, tag: Some(1.0) }],
    )
    .unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "epsilon,value,tag\n0.5,1.25e-12,\n0.25,3.0,1.0\n");
}
