use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Masks, StaggeredGrid};
use crate::numeric;

/// Cell-centred values, x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

/// Face-centred values, one array per axis laid out like `StaggeredGrid::face_dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub dims: [usize; 3],
    pub comps: [Vec<f64>; 3],
}

impl ScalarField {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        ScalarField { dims: grid.dims(), data: vec![0.0; grid.n_cells()] }
    }

    pub fn constant(grid: &StaggeredGrid, value: f64) -> Self {
        ScalarField { dims: grid.dims(), data: vec![value; grid.n_cells()] }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64 + Sync + Send>(grid: &StaggeredGrid, f: F) -> Self {
        let data = numeric::par_map(grid.n_cells(), |idx| {
            let [i, j, k] = grid.cell_ijk(idx);
            f(grid.cell_center(i, j, k))
        });
        ScalarField { dims: grid.dims(), data }
    }

    pub fn check_grid(&self, grid: &StaggeredGrid) -> Result<()> {
        if self.dims != grid.dims() || self.data.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!("scalar field {:?} on grid {:?}", self.dims, grid.dims())));
        }
        Ok(())
    }

    /// Volume integral by midpoint quadrature.
    pub fn integral(&self, grid: &StaggeredGrid) -> f64 {
        numeric::sum_by(self.data.len(), |idx| {
            let [i, j, k] = grid.cell_ijk(idx);
            self.data[idx] * grid.cell_volume(i, j, k)
        })
    }

    pub fn l2_norm(&self, grid: &StaggeredGrid) -> f64 {
        numeric::sum_by(self.data.len(), |idx| {
            let [i, j, k] = grid.cell_ijk(idx);
            self.data[idx] * self.data[idx] * grid.cell_volume(i, j, k)
        })
        .sqrt()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Removes the volume-weighted mean over fluid cells and zeroes solid cells.
    pub fn remove_mean(&mut self, grid: &StaggeredGrid, masks: Option<&Masks>) {
        let fluid = |idx: usize| masks.is_none_or(|m| m.cells[idx]);
        let vol = numeric::sum_by(self.data.len(), |idx| {
            let [i, j, k] = grid.cell_ijk(idx);
            if fluid(idx) {
                grid.cell_volume(i, j, k)
            } else {
                0.0
            }
        });
        if vol == 0.0 {
            return;
        }
        let mean = numeric::sum_by(self.data.len(), |idx| {
            let [i, j, k] = grid.cell_ijk(idx);
            if fluid(idx) {
                self.data[idx] * grid.cell_volume(i, j, k)
            } else {
                0.0
            }
        }) / vol;
        for (idx, v) in self.data.iter_mut().enumerate() {
            *v = if fluid(idx) { *v - mean } else { 0.0 };
        }
    }
}

impl VectorField {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        VectorField { dims: grid.dims(), comps: [0, 1, 2].map(|a| vec![0.0; grid.n_faces(a)]) }
    }

    /// Samples component `a` of `f` at the centres of the faces normal to `a`.
    pub fn from_fn<F: Fn([f64; 3]) -> [f64; 3] + Sync + Send>(grid: &StaggeredGrid, f: F) -> Self {
        let comps = [0, 1, 2]
            .map(|a| numeric::par_map(grid.n_faces(a), |idx| f(grid.face_center(a, grid.face_ijk(a, idx)))[a]));
        VectorField { dims: grid.dims(), comps }
    }

    pub fn check_grid(&self, grid: &StaggeredGrid) -> Result<()> {
        let ok = self.dims == grid.dims() && (0..3).all(|a| self.comps[a].len() == grid.n_faces(a));
        if !ok {
            return Err(Error::GridMismatch(format!("vector field {:?} on grid {:?}", self.dims, grid.dims())));
        }
        Ok(())
    }

    /// Zeroes every solid face.
    pub fn apply_mask(&mut self, masks: &Masks) {
        for a in 0..3 {
            for (v, fluid) in self.comps[a].iter_mut().zip(&masks.faces[a]) {
                if !fluid {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.comps {
            c.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Concatenated storage, component 0 first.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.comps.iter().map(Vec::len).sum());
        for c in &self.comps {
            out.extend_from_slice(c);
        }
        out
    }

    pub fn from_flat(grid: &StaggeredGrid, flat: &[f64]) -> Self {
        let mut off = 0;
        let comps = [0, 1, 2].map(|a| {
            let n = grid.n_faces(a);
            let c = flat[off..off + n].to_vec();
            off += n;
            c
        });
        VectorField { dims: grid.dims(), comps }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| numeric::max_abs(c)).fold(0.0, f64::max)
    }

    pub fn has_non_finite(&self) -> bool {
        self.comps.iter().any(|c| c.iter().any(|v| !v.is_finite()))
    }

    /// L² norm with each face weighted by its control volume.
    pub fn l2_norm(&self, grid: &StaggeredGrid) -> f64 {
        let w = face_volumes(grid);
        (0..3)
            .map(|a| numeric::sum_by(self.comps[a].len(), |i| self.comps[a][i] * self.comps[a][i] * w[a][i]))
            .sum::<f64>()
            .sqrt()
    }

    /// Volume-weighted inner product.
    pub fn inner(&self, other: &VectorField, grid: &StaggeredGrid) -> f64 {
        let w = face_volumes(grid);
        (0..3).map(|a| numeric::sum_by(self.comps[a].len(), |i| self.comps[a][i] * other.comps[a][i] * w[a][i])).sum()
    }
}

/// Control volume of every face: centre spacing along the normal times the
/// transverse cell widths.
pub fn face_volumes(grid: &StaggeredGrid) -> [Vec<f64>; 3] {
    let m = grid.metrics();
    [0, 1, 2].map(|a| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        (0..grid.n_faces(a))
            .map(|idx| {
                let ijk = grid.face_ijk(a, idx);
                m[a].dc[ijk[a]] * m[b].w[ijk[b]] * m[c].w[ijk[c]]
            })
            .collect()
    })
}

/// Cell-centred velocity obtained by averaging the two faces of each cell.
pub fn cell_average(grid: &StaggeredGrid, u: &VectorField) -> [Vec<f64>; 3] {
    let d = grid.dims();
    [0, 1, 2].map(|a| {
        (0..grid.n_cells())
            .map(|idx| {
                let ijk = grid.cell_ijk(idx);
                let mut hi = ijk;
                hi[a] += 1;
                if hi[a] == d[a] && grid.is_periodic() {
                    hi[a] = 0;
                }
                let lo_v = u.comps[a][grid.face_index(a, ijk[0], ijk[1], ijk[2])];
                let hi_v = u.comps[a][grid.face_index(a, hi[0], hi[1], hi[2])];
                0.5 * (lo_v + hi_v)
            })
            .collect()
    })
}


/// Interpolation weights of `x` on sorted nodes: `(i, t)` with the value
/// `(1−t)·f[i] + t·f[i+1]`, clamped to the end nodes.
fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if n == 1 || x <= nodes[0] {
        return (0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 2, 1.0);
    }
    let i = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    };
    (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
}

/// Trilinear sampling of staggered data on wall grids.
///
/// Cell data are clamped at the outermost centres; face data use the
/// boundary faces along their normal and the tangential wall value `ghost`
/// between the last centre and the wall.
#[derive(Debug, Clone)]
pub struct Sampler {
    grid: StaggeredGrid,
    centers: [Vec<f64>; 3],
    /// Centres plus both wall coordinates.
    padded: [Vec<f64>; 3],
}

impl Sampler {
    pub fn new(grid: &StaggeredGrid) -> Self {
        let centers = [0, 1, 2].map(|d| (0..grid.axes[d].n()).map(|i| grid.axes[d].center(i)).collect::<Vec<_>>());
        let padded = [0, 1, 2].map(|d| {
            let ax = &grid.axes[d];
            let mut v = vec![ax.start()];
            v.extend_from_slice(&centers[d]);
            v.push(ax.start() + ax.length());
            v
        });
        Sampler { grid: grid.clone(), centers, padded }
    }

    pub fn cell(&self, data: &[f64], x: [f64; 3]) -> f64 {
        let w = [0, 1, 2].map(|d| bracket(&self.centers[d], x[d]));
        let n = self.grid.dims();
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut weight = 1.0;
            let mut ijk = [0; 3];
            for d in 0..3 {
                let up = (corner >> d) & 1 == 1;
                let (i, t) = w[d];
                ijk[d] = if up { (i + 1).min(n[d] - 1) } else { i };
                weight *= if up { t } else { 1.0 - t };
            }
            if weight != 0.0 {
                acc += weight * data[self.grid.cell_index(ijk[0], ijk[1], ijk[2])];
            }
        }
        acc
    }

    pub fn face(&self, a: usize, comp: &[f64], ghost: f64, x: [f64; 3]) -> f64 {
        let g = &self.grid;
        let n = g.dims();
        let w =
            [0, 1, 2].map(|d| if d == a { bracket(g.axes[d].faces(), x[d]) } else { bracket(&self.padded[d], x[d]) });
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut weight = 1.0;
            let mut ijk = [0usize; 3];
            let mut on_wall = false;
            for d in 0..3 {
                let up = (corner >> d) & 1 == 1;
                let (i, t) = w[d];
                let node = if up { i + 1 } else { i };
                weight *= if up { t } else { 1.0 - t };
                if d == a {
                    ijk[d] = node;
                } else if node == 0 || node == n[d] + 1 {
                    on_wall = true;
                } else {
                    ijk[d] = node - 1;
                }
            }
            if weight == 0.0 {
                continue;
            }
            acc += weight * if on_wall { ghost } else { comp[g.face_index(a, ijk[0], ijk[1], ijk[2])] };
        }
        acc
    }
}

/// Cell-centred velocity gradient `G[a][b] = ∂_b u_a` on a wall grid.
/// Normal derivatives are exact face differences; tangential ones are
/// central differences of cell averages with `ghost` at the walls.
pub fn cell_gradient(grid: &StaggeredGrid, u: &VectorField, ghost: [f64; 3]) -> Vec<[[f64; 3]; 3]> {
    let n = grid.dims();
    let avg = cell_average(grid, u);
    let ax = &grid.axes;
    numeric::par_map(grid.n_cells(), |c| {
        let ijk = grid.cell_ijk(c);
        let mut g = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                if a == b {
                    let mut hi = ijk;
                    hi[a] += 1;
                    if grid.is_periodic() && hi[a] == n[a] {
                        hi[a] = 0;
                    }
                    let lo_v = u.comps[a][grid.face_index(a, ijk[0], ijk[1], ijk[2])];
                    let hi_v = u.comps[a][grid.face_index(a, hi[0], hi[1], hi[2])];
                    g[a][a] = (hi_v - lo_v) / ax[a].width(ijk[a]);
                    continue;
                }
                let i = ijk[b];
                let value = |j: usize| {
                    let mut s = ijk;
                    s[b] = j;
                    avg[a][grid.cell_index(s[0], s[1], s[2])]
                };
                let (vl, xl) = if i > 0 {
                    (value(i - 1), ax[b].center(i - 1))
                } else if grid.is_periodic() {
                    (value(n[b] - 1), ax[b].center(i) - ax[b].width(i))
                } else {
                    (ghost[a], ax[b].start())
                };
                let (vh, xh) = if i + 1 < n[b] {
                    (value(i + 1), ax[b].center(i + 1))
                } else if grid.is_periodic() {
                    (value(0), ax[b].center(i) + ax[b].width(i))
                } else {
                    (ghost[a], ax[b].start() + ax[b].length())
                };
                g[a][b] = (vh - vl) / (xh - xl);
            }
        }
        g
    })
}
