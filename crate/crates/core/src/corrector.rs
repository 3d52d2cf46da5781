//! Glued corrector fields `(W_ε, q_ε)` and their scaling estimates.
//!
//! Around each hole centre `x_k` the corrector has three zones: the rescaled
//! cell solution inside `B(x_k, ε/4)`, a Stokes solve in the annulus
//! `ε/4 ≤ |x − x_k| < ε/2` matching the cell trace to the identity, and the
//! identity outside. Holes are centred, so one annulus solve in units of ε
//! serves every hole.
//!
//! Norms are integrated zone by zone on the grid that resolves each zone:
//! the cell grid for the inner zone and the annulus grid for the annulus.
//! Every ε-cell of the torus contributes the same amount.

use serde::{Deserialize, Serialize};

use crate::cell_problem::{CellProbe, CellSolution};
use crate::error::{Error, Result};
use crate::fields::{cell_average, cell_gradient, Sampler, ScalarField, VectorField};
use crate::geometry::{build_perforation, Boundary, HoleSet, Masks, PerforationConfig, StaggeredGrid};
use crate::rates::{fit_rate, Band, RateReport};
use crate::stokes::{solve_stokes_lifted, Lift, SolveReport, StokesOptions};

/// Minimum annulus grid cells across the annulus width `ε/4`.
pub const MIN_ANNULUS_CELLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectorOptions {
    /// Annulus grid cells per ε (the annulus is `ε/4` wide).
    pub cells_per_eps: usize,
    pub stokes: StokesOptions,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        CorrectorOptions { cells_per_eps: 32, stokes: StokesOptions::default() }
    }
}

/// The annulus solutions in ε-units on `[-½, ½]³`.
#[derive(Debug, Clone)]
pub struct Annulus {
    pub grid: StaggeredGrid,
    pub masks: Masks,
    pub w: [VectorField; 3],
    /// Pressure in ε-units; the physical pressure is `q/ε`.
    pub q: [ScalarField; 3],
    pub reports: Vec<SolveReport>,
}

/// Which part of the gluing a point falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Hole,
    Inner,
    Annulus,
    Identity,
}

/// Corrector value at a point: `w[i]` is the column `vⁱ_ε`, `q[i]` is `qⁱ_ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectorValue {
    pub w: [[f64; 3]; 3],
    pub q: [f64; 3],
    pub zone: Zone,
}

fn identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// A glued corrector that can be evaluated anywhere on the torus.
pub struct Corrector<'a> {
    pub config: PerforationConfig,
    pub epsilon: f64,
    pub a_eps: f64,
    pub holes: HoleSet,
    pub annulus: Annulus,
    cell: CellProbe<'a>,
    annulus_sampler: Sampler,
}

/// Truncation needed to supply the trace at `|x − x_k| = ε/4`.
pub fn needed_truncation(epsilon: f64, alpha: f64) -> f64 {
    epsilon.powf(1.0 - alpha) / 4.0
}

/// Moves the net flux through the inner boundary faces (those selected by
/// `inner`) onto them uniformly so that the lifted data are compatible with
/// incompressibility.
fn make_compatible<F: Fn([f64; 3]) -> bool>(grid: &StaggeredGrid, masks: &Masks, lift: &mut VectorField, inner: F) {
    let mut faces = Vec::new();
    let mut total = 0.0;
    let mut area_sum = 0.0;
    for a in 0..3 {
        for idx in 0..grid.n_faces(a) {
            if masks.faces[a][idx] {
                continue;
            }
            let ijk = grid.face_ijk(a, idx);
            let sign = match grid.face_cells(a, ijk) {
                (Some(lo), Some(hi)) if masks.cells[lo] && !masks.cells[hi] => 1.0,
                (Some(lo), Some(hi)) if !masks.cells[lo] && masks.cells[hi] => -1.0,
                _ => continue,
            };
            if !inner(grid.face_center(a, ijk)) {
                continue;
            }
            let area: f64 = (0..3).filter(|b| *b != a).map(|b| grid.axes[b].width(ijk[b])).product();
            total += sign * area * lift.comps[a][idx];
            area_sum += area;
            faces.push((a, idx, sign));
        }
    }
    if area_sum == 0.0 {
        return;
    }
    let delta = -total / area_sum;
    for (a, idx, sign) in faces {
        lift.comps[a][idx] += sign * delta;
    }
}

fn solve_annulus(cell: &CellProbe, epsilon: f64, a_eps: f64, opts: &CorrectorOptions) -> Result<Annulus> {
    let n = opts.cells_per_eps;
    if n < 4 * MIN_ANNULUS_CELLS {
        return Err(Error::UnderResolved { cells: n as f64 / 4.0, required: MIN_ANNULUS_CELLS as f64 });
    }
    let grid = StaggeredGrid::uniform([n; 3], [-0.5; 3], [1.0; 3], Boundary::Wall);
    let r2 = |x: [f64; 3]| x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let masks = Masks::from_predicate(&grid, |x| {
        let r = r2(x);
        !(0.0625..0.25).contains(&r)
    });
    let zero = VectorField::zeros(&grid);
    let scale = epsilon / a_eps;
    let mut w = Vec::with_capacity(3);
    let mut q = Vec::with_capacity(3);
    let mut reports = Vec::with_capacity(3);
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let mut lift = VectorField::zeros(&grid);
        for a in 0..3 {
            for idx in 0..grid.n_faces(a) {
                let x = grid.face_center(a, grid.face_ijk(a, idx));
                lift.comps[a][idx] = if !masks.faces[a][idx] && r2(x) < 0.140625 {
                    cell.velocity_component(i, a, x.map(|v| v * scale))
                } else {
                    e[a]
                };
            }
        }
        make_compatible(&grid, &masks, &mut lift, |x| r2(x) < 0.140625);
        let s = solve_stokes_lifted(&grid, &masks, 1.0, &zero, Some(&Lift { field: &lift, ghost: e }), &opts.stokes)?;
        log::info!(
            "annulus e{} ε={epsilon}: {} iterations, div {:.2e}",
            i + 1,
            s.report.iterations,
            s.report.residual_div
        );
        w.push(s.u);
        q.push(s.p);
        reports.push(s.report);
    }
    Ok(Annulus { grid, masks, w: w.try_into().unwrap(), q: q.try_into().unwrap(), reports })
}

impl<'a> Corrector<'a> {
    /// Glues the corrector for a torus configuration.
    pub fn new(config: &PerforationConfig, cell: &'a CellSolution, opts: &CorrectorOptions) -> Result<Self> {
        config.validate()?;
        if !config.domain.is_periodic() {
            return Err(Error::InvalidConfig("the corrector is built on the torus".into()));
        }
        if cell.obstacle != config.obstacle {
            return Err(Error::InvalidConfig("cell solution is for a different obstacle".into()));
        }
        let epsilon = config.epsilon;
        let a_eps = config.scales().a_eps;
        let needed = needed_truncation(epsilon, config.alpha);
        if cell.r < needed {
            return Err(Error::CellTruncation { needed, have: cell.r });
        }
        let holes = build_perforation(config)?;
        let probe = CellProbe::new(cell);
        let annulus = solve_annulus(&probe, epsilon, a_eps, opts)?;
        let annulus_sampler = Sampler::new(&annulus.grid);
        Ok(Corrector { config: config.clone(), epsilon, a_eps, holes, annulus, cell: probe, annulus_sampler })
    }

    /// Offset of `x` from the centre of its ε-cell.
    fn local(&self, x: [f64; 3]) -> [f64; 3] {
        let e = self.epsilon;
        x.map(|v| {
            let s = v.rem_euclid(1.0);
            s - e * ((s / e).floor() + 0.5)
        })
    }

    pub fn zone(&self, x: [f64; 3]) -> Zone {
        if self.holes.contains(x) {
            return Zone::Hole;
        }
        let d = self.local(x);
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if r >= self.epsilon / 2.0 {
            Zone::Identity
        } else if r >= self.epsilon / 4.0 {
            Zone::Annulus
        } else {
            Zone::Inner
        }
    }

    pub fn evaluate(&self, x: [f64; 3]) -> CorrectorValue {
        let zone = self.zone(x);
        let d = self.local(x);
        match zone {
            Zone::Hole => CorrectorValue { w: [[0.0; 3]; 3], q: [0.0; 3], zone },
            Zone::Identity => CorrectorValue { w: identity(), q: [0.0; 3], zone },
            Zone::Inner => {
                let y = d.map(|v| v / self.a_eps);
                let w = [0, 1, 2].map(|i| self.cell.velocity(i, y));
                let q = [0, 1, 2].map(|i| self.cell.pressure(i, y) / self.a_eps);
                CorrectorValue { w, q, zone }
            }
            Zone::Annulus => {
                let y = d.map(|v| v / self.epsilon);
                let an = &self.annulus;
                let w = [0, 1, 2].map(|i| {
                    [0, 1, 2].map(|a| {
                        let ghost = if a == i { 1.0 } else { 0.0 };
                        self.annulus_sampler.face(a, &an.w[i].comps[a], ghost, y)
                    })
                });
                let q = [0, 1, 2].map(|i| self.annulus_sampler.cell(&an.q[i].data, y) / self.epsilon);
                CorrectorValue { w, q, zone }
            }
        }
    }

    /// Largest divergence residual over the cell and annulus solves.
    pub fn div_residual(&self) -> f64 {
        self.cell.sol.reports.iter().chain(&self.annulus.reports).map(|r| r.residual_div).fold(0.0, f64::max)
    }

    /// `‖W_ε − Id‖`, `‖∇vⁱ_ε‖` and `‖qⁱ_ε‖` in `L^p(𝕋³)`; `p = ∞` allowed.
    pub fn norms(&self, p: f64) -> CorrectorNorms {
        let eps = self.epsilon;
        let a = self.a_eps;
        let mut acc = ZoneSums::new(p);

        // inner zone on the cell grid, `x = x_k + a·y`
        let sol = self.cell.sol;
        let g = &sol.grid;
        let rho = eps / (4.0 * a);
        let avg: Vec<[Vec<f64>; 3]> = sol.v.iter().map(|v| cell_average(g, v)).collect();
        let grads: Vec<Vec<[[f64; 3]; 3]>> = (0..3)
            .map(|i| {
                let mut e = [0.0; 3];
                e[i] = 1.0;
                cell_gradient(g, &sol.v[i], e)
            })
            .collect();
        for c in 0..g.n_cells() {
            let [i, j, k] = g.cell_ijk(c);
            let y = g.cell_center(i, j, k);
            if y[0] * y[0] + y[1] * y[1] + y[2] * y[2] >= rho * rho {
                continue;
            }
            let vol = g.cell_volume(i, j, k) * a.powi(3);
            let w = [0, 1, 2].map(|col| [0, 1, 2].map(|r| avg[col][r][c]));
            acc.add(vol, &w, [0, 1, 2].map(|col| &grads[col][c]), [0, 1, 2].map(|col| sol.q[col].data[c]), 1.0 / a);
        }

        // annulus on its own grid, `x = x_k + ε·y`
        let an = &self.annulus;
        let g = &an.grid;
        let avg: Vec<[Vec<f64>; 3]> = an.w.iter().map(|v| cell_average(g, v)).collect();
        let grads: Vec<Vec<[[f64; 3]; 3]>> = (0..3)
            .map(|i| {
                let mut e = [0.0; 3];
                e[i] = 1.0;
                cell_gradient(g, &an.w[i], e)
            })
            .collect();
        for c in 0..g.n_cells() {
            let [i, j, k] = g.cell_ijk(c);
            let y = g.cell_center(i, j, k);
            let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
            if !(0.0625..0.25).contains(&r2) {
                continue;
            }
            let vol = g.cell_volume(i, j, k) * eps.powi(3);
            let w = [0, 1, 2].map(|col| [0, 1, 2].map(|r| avg[col][r][c]));
            acc.add(vol, &w, [0, 1, 2].map(|col| &grads[col][c]), [0, 1, 2].map(|col| an.q[col].data[c]), 1.0 / eps);
        }

        // every ε-cell of the unit torus contributes the same
        acc.finish(eps.powi(-3), eps, self.config.alpha)
    }
}

/// `L^p` norms of one corrector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorNorms {
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(with = "p_label")]
    pub p: f64,
    pub w_minus_id: f64,
    pub grad_v: [f64; 3],
    pub q: [f64; 3],
}

/// Running sums (or maxima for `p = ∞`) of the zone integrands.
struct ZoneSums {
    p: f64,
    w: f64,
    grad: [f64; 3],
    q: [f64; 3],
}

impl ZoneSums {
    fn new(p: f64) -> Self {
        ZoneSums { p, w: 0.0, grad: [0.0; 3], q: [0.0; 3] }
    }

    fn push(&self, acc: &mut f64, vol: f64, value: f64) {
        if self.p.is_infinite() {
            *acc = acc.max(value);
        } else {
            *acc += vol * value.powf(self.p);
        }
    }

    /// One cell of local data; `inv_len` converts local derivatives and
    /// pressures to physical units.
    fn add(&mut self, vol: f64, w: &[[f64; 3]; 3], grads: [&[[f64; 3]; 3]; 3], q: [f64; 3], inv_len: f64) {
        let mut dw = 0.0;
        for (i, col) in w.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                let d = v - if i == r { 1.0 } else { 0.0 };
                dw += d * d;
            }
        }
        let mut w_acc = self.w;
        self.push(&mut w_acc, vol, dw.sqrt());
        self.w = w_acc;
        for i in 0..3 {
            let gn = grads[i].iter().flatten().map(|v| v * v).sum::<f64>().sqrt() * inv_len;
            let mut g_acc = self.grad[i];
            self.push(&mut g_acc, vol, gn);
            self.grad[i] = g_acc;
            let mut q_acc = self.q[i];
            self.push(&mut q_acc, vol, q[i].abs() * inv_len);
            self.q[i] = q_acc;
        }
    }

    fn finish(self, copies: f64, epsilon: f64, alpha: f64) -> CorrectorNorms {
        let p = self.p;
        let root = |s: f64| if p.is_infinite() { s } else { (copies * s).powf(1.0 / p) };
        CorrectorNorms { epsilon, alpha, p, w_minus_id: root(self.w), grad_v: self.grad.map(root), q: self.q.map(root) }
    }
}

/// `"2"`, `"3"`, `"inf"`.
pub fn p_name(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

pub fn parse_p(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "Inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .ok()
            .filter(|p| *p >= 1.0)
            .ok_or_else(|| Error::InvalidConfig(format!("bad exponent {t}: need a number ≥ 1 or inf"))),
    }
}

mod p_label {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::p_name(*p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_p(&s).map_err(serde::de::Error::custom)
    }
}

/// Predicted slope of `‖W_ε − Id‖_{L^p}`.
pub fn w_exponent(p: f64, alpha: f64) -> f64 {
    (3.0 / p).min(1.0) * (alpha - 1.0)
}

/// Predicted slope of `‖∇vⁱ_ε‖_{L^p}` and `‖qⁱ_ε‖_{L^p}`.
pub fn grad_exponent(p: f64, alpha: f64) -> f64 {
    3.0 / p * (alpha - 1.0) - alpha
}

/// One CSV row of `corrector_rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorRow {
    pub epsilon: f64,
    pub alpha: f64,
    pub p: String,
    pub norm_kind: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub norm_kind: String,
    pub p: String,
    pub fit: RateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorRates {
    pub alpha: f64,
    pub rows: Vec<CorrectorRow>,
    pub fits: Vec<NamedFit>,
    /// Largest divergence residual over all zone solves.
    pub div_residual: f64,
}

impl CorrectorRates {
    pub fn passed(&self) -> bool {
        self.fits.iter().all(|f| f.fit.pass != Some(false))
    }

    pub fn fit(&self, norm_kind: &str, p: f64) -> Option<&RateReport> {
        let p = p_name(p);
        self.fits.iter().find(|f| f.norm_kind == norm_kind && f.p == p).map(|f| &f.fit)
    }
}

/// Default slope band for a norm kind and exponent. The pressure estimate
/// is an upper bound only, so its slope is checked from below.
pub fn default_band(norm_kind: &str, p: f64, alpha: f64) -> Band {
    if norm_kind == "w_minus_id" {
        if p.is_infinite() {
            Band::new(0.0, 0.2)
        } else {
            Band::new(w_exponent(p, alpha), 0.3)
        }
    } else if norm_kind.starts_with('q') {
        Band::at_least(grad_exponent(p, alpha), 0.3)
    } else {
        Band::new(grad_exponent(p, alpha), 0.3)
    }
}

/// Builds the corrector for each configuration and fits log–log slopes of
/// every norm against ε. `band` overrides the default half-widths.
pub fn verify_corrector_estimates(
    configs: &[PerforationConfig],
    cell: &CellSolution,
    p_list: &[f64],
    opts: &CorrectorOptions,
    band: Option<f64>,
) -> Result<CorrectorRates> {
    if configs.len() < 3 {
        return Err(Error::TooFewPoints(configs.len()));
    }
    let alpha = configs[0].alpha;
    if configs.iter().any(|c| (c.alpha - alpha).abs() > 1e-12) {
        return Err(Error::InvalidConfig("all configurations must share α".into()));
    }
    for p in p_list {
        if !(*p >= 1.0) {
            return Err(Error::InvalidConfig(format!("bad exponent {p}: need p ≥ 1")));
        }
    }
    let mut rows = Vec::new();
    let mut series: Vec<(String, f64, Vec<(f64, f64)>)> = Vec::new();
    let mut div_residual: f64 = 0.0;
    for config in configs {
        let corr = Corrector::new(config, cell, opts)?;
        div_residual = div_residual.max(corr.div_residual());
        for &p in p_list {
            let nm = corr.norms(p);
            let mut entries = vec![("w_minus_id".to_string(), nm.w_minus_id)];
            for i in 0..3 {
                entries.push((format!("grad_v{}", i + 1), nm.grad_v[i]));
                entries.push((format!("q{}", i + 1), nm.q[i]));
            }
            for (kind, value) in entries {
                rows.push(CorrectorRow {
                    epsilon: config.epsilon,
                    alpha,
                    p: p_name(p),
                    norm_kind: kind.clone(),
                    value,
                });
                match series.iter_mut().find(|s| s.0 == kind && s.1 == p) {
                    Some(s) => s.2.push((config.epsilon, value)),
                    None => series.push((kind, p, vec![(config.epsilon, value)])),
                }
            }
        }
    }
    let mut fits = Vec::new();
    for (kind, p, pts) in series {
        let mut b = default_band(&kind, p, alpha);
        if let Some(h) = band {
            b.half_width = h;
        }
        let fit = fit_rate(&pts)?.with_band(b);
        fits.push(NamedFit { norm_kind: kind, p: p_name(p), fit });
    }
    Ok(CorrectorRates { alpha, rows, fits, div_residual })
}

/// Corrector sampled at the cell centres of a grid.
#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub config: PerforationConfig,
    pub grid: StaggeredGrid,
    /// `w[c][i]` is the column `vⁱ_ε` at cell `c`.
    pub w: Vec<[[f64; 3]; 3]>,
    pub q: Vec<[f64; 3]>,
    pub zones: Vec<Zone>,
    pub div_residual: f64,
}

impl CorrectorField {
    /// One scalar component as a cell field, e.g. for export.
    pub fn component(&self, i: usize, a: usize) -> ScalarField {
        ScalarField { dims: self.grid.dims(), data: self.w.iter().map(|w| w[i][a]).collect() }
    }

    pub fn pressure(&self, i: usize) -> ScalarField {
        ScalarField { dims: self.grid.dims(), data: self.q.iter().map(|q| q[i]).collect() }
    }
}

/// Glues the corrector and samples it on the cell centres of `grid`.
pub fn build_corrector(
    config: &PerforationConfig,
    cell: &CellSolution,
    grid: &StaggeredGrid,
    opts: &CorrectorOptions,
) -> Result<CorrectorField> {
    if !grid.is_periodic() {
        return Err(Error::GridMismatch("the corrector is sampled on a torus grid".into()));
    }
    let corr = Corrector::new(config, cell, opts)?;
    let values = crate::numeric::par_map(grid.n_cells(), |c| {
        let [i, j, k] = grid.cell_ijk(c);
        corr.evaluate(grid.cell_center(i, j, k))
    });
    Ok(CorrectorField {
        config: config.clone(),
        grid: grid.clone(),
        w: values.iter().map(|v| v.w).collect(),
        q: values.iter().map(|v| v.q).collect(),
        zones: values.iter().map(|v| v.zone).collect(),
        div_residual: corr.div_residual(),
    })
}
