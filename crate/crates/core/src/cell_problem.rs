//! Exterior Stokes cell problem around the reference obstacle and the
//! resistance matrix `M₀`.
//!
//! The far field `vⁱ → eⁱ` is imposed on the walls of the box `[-R, R]³`,
//! discretized with a uniform core around the obstacle and geometric growth
//! outwards. The boundary data are lifted by a discretely solenoidal field
//! `ℓ = curl(½χ(|x|) eⁱ × x)` that vanishes near the obstacle and equals
//! `eⁱ` outside `B(0, R/2)`.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Sampler, ScalarField, VectorField};
use crate::geometry::{Axis, Boundary, Masks, Obstacle, StaggeredGrid};
use crate::stokes::ops::Ops;
use crate::stokes::{solve_stokes_lifted, Lift, SolveReport, StokesOptions};

/// Smallest admissible truncation half-width.
pub const MIN_TRUNCATION: f64 = 2.0;
/// Minimum grid cells across the obstacle diameter.
pub const MIN_CELLS_ACROSS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellOptions {
    /// Uniform core cells across the obstacle's bounding diameter.
    pub cells_across: f64,
    /// Core half-width as a multiple of the bounding radius.
    pub core_factor: f64,
    /// Solve one direction and rotate when the masks are invariant under the
    /// cyclic axis permutation.
    pub use_symmetry: bool,
    pub stokes: StokesOptions,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions { cells_across: 16.0, core_factor: 1.5, use_symmetry: true, stokes: StokesOptions::default() }
    }
}

/// The three cell solutions `(vⁱ, qⁱ)` on one truncated box.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub obstacle: Obstacle,
    pub r: f64,
    pub n: usize,
    pub grid: StaggeredGrid,
    pub masks: Masks,
    pub v: [VectorField; 3],
    pub q: [ScalarField; 3],
    pub reports: Vec<SolveReport>,
}

/// Where `M₀` came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub r: Vec<f64>,
    pub n: Vec<usize>,
    /// Relative RMS residual of the `M∞ + c/R` fit (zero for a single box).
    pub extrapolation_residual: f64,
    /// Raw matrices per truncation radius.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceMatrix {
    pub m0: [[f64; 3]; 3],
    /// Permeability `(μM₀)⁻¹`.
    pub a: [[f64; 3]; 3],
    pub mu: f64,
    /// `‖M − Mᵀ‖ / ‖M‖` before symmetrization.
    pub asymmetry: f64,
    pub eigenvalues: [f64; 3],
    pub provenance: Provenance,
}

fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn from_matrix(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

impl ResistanceMatrix {
    /// Symmetrizes `m`, checks definiteness and attaches `A = (μM₀)⁻¹`.
    pub fn from_raw(m: [[f64; 3]; 3], mu: f64, provenance: Provenance) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidConfig(format!("viscosity must be positive, got {mu}")));
        }
        let raw = to_matrix(&m);
        let norm = raw.norm();
        let asymmetry = if norm > 0.0 { (raw - raw.transpose()).norm() / norm } else { 0.0 };
        let sym = 0.5 * (raw + raw.transpose());
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let mut ev = [eig[0], eig[1], eig[2]];
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if ev.iter().all(|v| v.abs() < 1e-12) {
            return Err(Error::DegenerateObstacle);
        }
        if ev[0] <= 0.0 {
            return Err(Error::NotSpd(format!("resistance eigenvalues {ev:?}")));
        }
        let a = (sym * mu).try_inverse().ok_or(Error::DegenerateObstacle)?;
        Ok(ResistanceMatrix { m0: from_matrix(&sym), a: from_matrix(&a), mu, asymmetry, eigenvalues: ev, provenance })
    }

    /// Largest `|(A·μM₀ − I)_ij|`.
    pub fn inverse_defect(&self) -> f64 {
        let p = to_matrix(&self.a) * to_matrix(&self.m0) * self.mu - Matrix3::identity();
        p.abs().max()
    }
}

/// Stretched box grid for the cell problem.
pub fn cell_grid(obstacle: &Obstacle, r: f64, n: usize, opts: &CellOptions) -> Result<StaggeredGrid> {
    if obstacle.is_empty() {
        return Ok(StaggeredGrid::uniform([n; 3], [-r; 3], [2.0 * r; 3], Boundary::Wall));
    }
    let b = obstacle.bounding_radius();
    if opts.cells_across < MIN_CELLS_ACROSS {
        return Err(Error::UnderResolved { cells: opts.cells_across, required: MIN_CELLS_ACROSS });
    }
    let spacing = 2.0 * b / opts.cells_across;
    let core = (opts.core_factor * b).max(2.0 * spacing);
    let axis = Axis::stretched(r, core, spacing, n).map_err(|_| {
        // not enough cells to keep the requested core resolution
        let best = n as f64 * spacing * opts.cells_across / (2.0 * r);
        Error::UnderResolved { cells: best.min(opts.cells_across), required: MIN_CELLS_ACROSS }
    })?;
    StaggeredGrid::new([axis.clone(), axis.clone(), axis], Boundary::Wall)
}

/// Vector potential `½χ(|x|) e × x`.
fn potential(e: usize, r: f64, x: [f64; 3]) -> [f64; 3] {
    let rad = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let chi = smoothstep(0.3, 0.5 * r, rad);
    let mut ev = [0.0; 3];
    ev[e] = 1.0;
    let c = [ev[1] * x[2] - ev[2] * x[1], ev[2] * x[0] - ev[0] * x[2], ev[0] * x[1] - ev[1] * x[0]];
    c.map(|v| 0.5 * chi * v)
}

fn smoothstep(lo: f64, hi: f64, x: f64) -> f64 {
    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Face fluxes of `curl A` from edge circulations, divided by face areas.
/// The result has zero discrete divergence up to round-off.
pub fn curl_lift(grid: &StaggeredGrid, e: usize, r: f64) -> VectorField {
    let ax = &grid.axes;
    let comps = [0, 1, 2].map(|a| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        crate::numeric::par_map(grid.n_faces(a), |idx| {
            let ijk = grid.face_ijk(a, idx);
            let mut base = [0.0; 3];
            base[a] = ax[a].face(ijk[a]);
            base[b] = ax[b].center(ijk[b]);
            base[c] = ax[c].center(ijk[c]);
            let (wb, wc) = (ax[b].width(ijk[b]), ax[c].width(ijk[c]));
            let at = |d: usize, pos: f64| {
                let mut x = base;
                x[d] = pos;
                potential(e, r, x)
            };
            let ab_lo = at(c, ax[c].face(ijk[c]))[b];
            let ab_hi = at(c, ax[c].face(ijk[c] + 1))[b];
            let ac_lo = at(b, ax[b].face(ijk[b]))[c];
            let ac_hi = at(b, ax[b].face(ijk[b] + 1))[c];
            (wb * (ab_lo - ab_hi) + wc * (ac_hi - ac_lo)) / (wb * wc)
        })
    });
    VectorField { dims: grid.dims(), comps }
}

/// Whether the grid and masks are invariant under `(x, y, z) → (z, x, y)`.
fn cyclic_symmetric(grid: &StaggeredGrid, masks: &Masks) -> bool {
    if grid.axes[0] != grid.axes[1] || grid.axes[1] != grid.axes[2] {
        return false;
    }
    let idx = |ijk: [usize; 3], a: usize| grid.face_index(a, ijk[0], ijk[1], ijk[2]);
    for c in 0..grid.n_cells() {
        let [i, j, k] = grid.cell_ijk(c);
        if masks.cells[c] != masks.cells[grid.cell_index(j, k, i)] {
            return false;
        }
    }
    for a in 0..3 {
        let prev = (a + 2) % 3;
        for f in 0..grid.n_faces(a) {
            let ijk = grid.face_ijk(a, f);
            let old = [ijk[1], ijk[2], ijk[0]];
            if masks.faces[a][f] != masks.faces[prev][idx(old, prev)] {
                return false;
            }
        }
    }
    true
}

/// Rotates a solution for `eⁱ` into the one for `e^{i+1}`.
fn rotate(grid: &StaggeredGrid, v: &VectorField, q: &ScalarField) -> (VectorField, ScalarField) {
    let comps = [0, 1, 2].map(|a| {
        let prev = (a + 2) % 3;
        (0..grid.n_faces(a))
            .map(|f| {
                let ijk = grid.face_ijk(a, f);
                v.comps[prev][grid.face_index(prev, ijk[1], ijk[2], ijk[0])]
            })
            .collect()
    });
    let data = (0..grid.n_cells())
        .map(|c| {
            let [i, j, k] = grid.cell_ijk(c);
            q.data[grid.cell_index(j, k, i)]
        })
        .collect();
    (VectorField { dims: v.dims, comps }, ScalarField { dims: q.dims, data })
}

/// Solves the three cell problems on `[-R, R]³` with `n` cells per axis.
pub fn solve_cell(obstacle: &Obstacle, r: f64, n: usize, opts: &CellOptions) -> Result<CellSolution> {
    obstacle.validate()?;
    if !(r >= MIN_TRUNCATION) {
        return Err(Error::TruncationTooSmall { r });
    }
    let grid = cell_grid(obstacle, r, n, opts)?;
    let masks = Masks::from_predicate(&grid, |x| obstacle.contains(x));
    if obstacle.is_empty() || !masks.has_solid_cells() {
        // the constant field solves every equation
        let v = [0, 1, 2].map(|i| {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            VectorField::from_fn(&grid, move |_| e)
        });
        let q = [0, 1, 2].map(|_| ScalarField::zeros(&grid));
        return Ok(CellSolution { obstacle: obstacle.clone(), r, n, grid, masks, v, q, reports: Vec::new() });
    }
    let zero = VectorField::zeros(&grid);
    let symmetric = opts.use_symmetry && cyclic_symmetric(&grid, &masks);
    let solve = |i: usize| -> Result<(VectorField, ScalarField, SolveReport)> {
        let lift = curl_lift(&grid, i, r);
        let mut ghost = [0.0; 3];
        ghost[i] = 1.0;
        let s = solve_stokes_lifted(&grid, &masks, 1.0, &zero, Some(&Lift { field: &lift, ghost }), &opts.stokes)?;
        log::info!(
            "cell R={r} n={n} e{}: {} iterations, div {:.2e}, {:.1}s",
            i + 1,
            s.report.iterations,
            s.report.residual_div,
            s.report.wall_time
        );
        Ok((s.u, s.p, s.report))
    };
    let mut v: Vec<VectorField> = Vec::with_capacity(3);
    let mut q: Vec<ScalarField> = Vec::with_capacity(3);
    let mut reports = Vec::new();
    if symmetric {
        let (v0, q0, rep) = solve(0)?;
        let (v1, q1) = rotate(&grid, &v0, &q0);
        let (v2, q2) = rotate(&grid, &v1, &q1);
        v.extend([v0, v1, v2]);
        q.extend([q0, q1, q2]);
        reports.push(rep);
    } else {
        for i in 0..3 {
            let (vi, qi, rep) = solve(i)?;
            v.push(vi);
            q.push(qi);
            reports.push(rep);
        }
    }
    let v: [VectorField; 3] = v.try_into().unwrap();
    let q: [ScalarField; 3] = q.try_into().unwrap();
    Ok(CellSolution { obstacle: obstacle.clone(), r, n, grid, masks, v, q, reports })
}

/// Pointwise access to a cell solution; `eⁱ` and zero pressure outside the box.
#[derive(Debug, Clone)]
pub struct CellProbe<'a> {
    pub sol: &'a CellSolution,
    sampler: Sampler,
}

impl<'a> CellProbe<'a> {
    pub fn new(sol: &'a CellSolution) -> Self {
        CellProbe { sol, sampler: Sampler::new(&sol.grid) }
    }

    fn inside(&self, y: [f64; 3]) -> bool {
        y.iter().all(|v| v.abs() <= self.sol.r)
    }

    /// `vⁱ(y)` by trilinear interpolation.
    pub fn velocity(&self, i: usize, y: [f64; 3]) -> [f64; 3] {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        if !self.inside(y) {
            return e;
        }
        [0, 1, 2].map(|a| self.sampler.face(a, &self.sol.v[i].comps[a], e[a], y))
    }

    pub fn velocity_component(&self, i: usize, a: usize, y: [f64; 3]) -> f64 {
        let ghost = if i == a { 1.0 } else { 0.0 };
        if !self.inside(y) {
            return ghost;
        }
        self.sampler.face(a, &self.sol.v[i].comps[a], ghost, y)
    }

    pub fn pressure(&self, i: usize, y: [f64; 3]) -> f64 {
        if !self.inside(y) {
            return 0.0;
        }
        self.sampler.cell(&self.sol.q[i].data, y)
    }
}

/// Raw Gram matrix `∫∇vⁱ:∇vʲ` over the truncated fluid region.
pub fn gram_matrix(sol: &CellSolution) -> [[f64; 3]; 3] {
    let ops = Ops::new(&sol.grid, &sol.masks);
    let e = |i: usize| {
        let mut g = [0.0; 3];
        g[i] = 1.0;
        g
    };
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| ops.energy(&sol.v[i], &sol.v[j], e(i), e(j))))
}

/// `M₀` of one truncated solve.
pub fn compute_m0(sol: &CellSolution, mu: f64) -> Result<ResistanceMatrix> {
    let m = gram_matrix(sol);
    let prov = Provenance { r: vec![sol.r], n: vec![sol.n], extrapolation_residual: 0.0, samples: vec![m] };
    ResistanceMatrix::from_raw(m, mu, prov)
}

/// Least-squares fit `M(R) = M∞ + c/R` per entry. Returns `(M∞, c, relative
/// RMS residual)`.
pub fn fit_inverse_r(samples: &[(f64, [[f64; 3]; 3])]) -> Result<([[f64; 3]; 3], [[f64; 3]; 3], f64)> {
    if samples.len() < 3 {
        return Err(Error::TooFewRadii(samples.len()));
    }
    let xs: Vec<f64> = samples.iter().map(|(r, _)| 1.0 / r).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::TruncationInconsistent("truncation radii must differ".into()));
    }
    let mut m_inf = [[0.0; 3]; 3];
    let mut slope = [[0.0; 3]; 3];
    let mut ss = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let ys: Vec<f64> = samples.iter().map(|(_, m)| m[i][j]).collect();
            let my = ys.iter().sum::<f64>() / k;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let c = sxy / sxx;
            let a0 = my - c * mx;
            m_inf[i][j] = a0;
            slope[i][j] = c;
            ss += xs.iter().zip(&ys).map(|(x, y)| (y - a0 - c * x).powi(2)).sum::<f64>();
        }
    }
    let scale = (0..3).map(|i| m_inf[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    Ok((m_inf, slope, (ss / (9.0 * k)).sqrt() / scale))
}

/// Drops the `O(1/R)` truncation bias by fitting `M∞ + c/R` over a ladder
/// of boxes. `n_list` holds one resolution per radius (or a single value for
/// all of them).
pub fn extrapolate_m0(
    obstacle: &Obstacle,
    r_list: &[f64],
    n_list: &[usize],
    mu: f64,
    opts: &CellOptions,
) -> Result<ResistanceMatrix> {
    if r_list.len() < 3 {
        return Err(Error::TooFewRadii(r_list.len()));
    }
    if n_list.is_empty() || (n_list.len() != 1 && n_list.len() != r_list.len()) {
        return Err(Error::InvalidConfig("give one resolution or one per radius".into()));
    }
    let mut samples = Vec::new();
    for (k, &r) in r_list.iter().enumerate() {
        let n = if n_list.len() == 1 { n_list[0] } else { n_list[k] };
        let sol = solve_cell(obstacle, r, n, opts)?;
        samples.push((r, gram_matrix(&sol)));
    }
    extrapolate_samples(&samples, n_list, mu)
}

/// Fit and consistency checks on precomputed `(R, M(R))` pairs.
pub fn extrapolate_samples(samples: &[(f64, [[f64; 3]; 3])], n_list: &[usize], mu: f64) -> Result<ResistanceMatrix> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if sorted.iter().all(|(_, m)| (0..3).all(|i| m[i][i].abs() < 1e-12)) {
        return Err(Error::DegenerateObstacle);
    }
    for w in sorted.windows(2) {
        for i in 0..3 {
            let (a, b) = (w[0].1[i][i], w[1].1[i][i]);
            if b > a * (1.0 + 1e-3) {
                return Err(Error::TruncationInconsistent(format!(
                    "M[{i}][{i}] grows from {a:.6} at R={} to {b:.6} at R={}",
                    w[0].0, w[1].0
                )));
            }
        }
    }
    let (m_inf, _, residual) = fit_inverse_r(&sorted)?;
    let prov = Provenance {
        r: sorted.iter().map(|s| s.0).collect(),
        n: n_list.to_vec(),
        extrapolation_residual: residual,
        samples: sorted.iter().map(|s| s.1).collect(),
    };
    ResistanceMatrix::from_raw(m_inf, mu, prov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::ops::Ops;

    #[test]
    fn lift_is_solenoidal_and_matches_the_far_field() {
        let obstacle = Obstacle::Ball(0.1);
        let opts = CellOptions::default();
        let g = cell_grid(&obstacle, 2.0, 32, &opts).unwrap();
        let masks = Masks::all_fluid(&g);
        let ops = Ops::new(&g, &masks);
        for e in 0..3 {
            let l = curl_lift(&g, e, 2.0);
            let mut d = vec![0.0; g.n_cells()];
            ops.div_flat(&l.flatten(), &mut d);
            assert!(crate::numeric::max_abs(&d) < 1e-12);
            for a in 0..3 {
                for f in 0..g.n_faces(a) {
                    let x = g.face_center(a, g.face_ijk(a, f));
                    let rad = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                    let expect = if a == e { 1.0 } else { 0.0 };
                    if g.is_boundary_face(a, g.face_ijk(a, f)) {
                        assert!((l.comps[a][f] - expect).abs() < 1e-12);
                    }
                    if rad < 0.2 {
                        assert_eq!(l.comps[a][f], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn synthetic_inverse_r_data_is_recovered() {
        let m = |r: f64| [[2.0 + 1.0 / r, 0.0, 0.0], [0.0, 2.0 + 1.0 / r, 0.0], [0.0, 0.0, 2.0 + 1.0 / r]];
        let samples: Vec<_> = [2.0, 4.0, 8.0].iter().map(|r| (*r, m(*r))).collect();
        let (inf, c, res) = fit_inverse_r(&samples).unwrap();
        for i in 0..3 {
            assert!((inf[i][i] - 2.0).abs() < 1e-13);
            assert!((c[i][i] - 1.0).abs() < 1e-12);
        }
        assert!(res < 1e-13);
        assert!(matches!(fit_inverse_r(&samples[..2]), Err(Error::TooFewRadii(2))));
    }

    #[test]
    fn growing_diagonal_is_inconsistent() {
        let m = |v: f64| [[v, 0.0, 0.0], [0.0, v, 0.0], [0.0, 0.0, v]];
        let samples = vec![(2.0, m(2.0)), (3.0, m(2.5)), (4.0, m(2.2))];
        assert!(matches!(extrapolate_samples(&samples, &[8], 1.0), Err(Error::TruncationInconsistent(_))));
    }
}
