//! Fast diagonalization of separable operators on tensor-product grids.
//!
//! An operator of the form `Σ_d M⊗…⊗K_d⊗…⊗M` with 1D stiffness `K_d` and
//! diagonal mass `M_d` is inverted exactly through the per-axis generalized
//! eigenproblems `K_d V = M_d V Λ`. The 3D contractions are dense GEMMs.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::geometry::{AxisMetric, StaggeredGrid};

/// One axis of a separable operator: symmetric tridiagonal (possibly with
/// periodic corner entries) stiffness and diagonal mass.
#[derive(Debug, Clone)]
pub struct Axis1d {
    pub diag: Vec<f64>,
    /// `off[i]` couples unknowns `i` and `i+1`; for periodic axes the last
    /// entry couples `m-1` and `0`.
    pub off: Vec<f64>,
    pub periodic: bool,
    pub mass: Vec<f64>,
}

impl Axis1d {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    /// Cell-centred unknowns: links through centre distances, Dirichlet at
    /// half-cell walls, or Neumann when `dirichlet` is false.
    pub fn cells(m: &AxisMetric, periodic: bool, dirichlet: bool) -> Self {
        let n = m.w.len();
        let mut diag = vec![0.0; n];
        let mut off = Vec::with_capacity(n);
        for j in 0..n {
            if j + 1 < n {
                let c = 1.0 / m.dc[j + 1];
                diag[j] += c;
                diag[j + 1] += c;
                off.push(-c);
            }
        }
        if periodic {
            let c = 1.0 / m.dc[0];
            diag[0] += c;
            diag[n - 1] += c;
            off.push(-c);
        } else if dirichlet {
            diag[0] += 1.0 / m.dc[0];
            diag[n - 1] += 1.0 / m.dc[n];
        }
        Axis1d { diag, off, periodic, mass: m.w.clone() }
    }

    /// Face-located unknowns along their own normal: interior faces with
    /// Dirichlet boundary faces, or every face for periodic axes.
    pub fn faces(m: &AxisMetric, periodic: bool) -> Self {
        let n = m.w.len();
        if periodic {
            let mut diag = vec![0.0; n];
            let mut off = Vec::with_capacity(n);
            for i in 0..n {
                // link between faces i and i+1 through cell i
                let c = 1.0 / m.w[i];
                diag[i] += c;
                diag[(i + 1) % n] += c;
                off.push(-c);
            }
            Axis1d { diag, off, periodic, mass: m.dc[..n].to_vec() }
        } else {
            let k = n - 1;
            let mut diag = vec![0.0; k];
            let mut off = Vec::with_capacity(k.saturating_sub(1));
            for f in 1..n {
                diag[f - 1] = 1.0 / m.w[f - 1] + 1.0 / m.w[f];
                if f + 1 < n {
                    off.push(-1.0 / m.w[f]);
                }
            }
            Axis1d { diag, off, periodic, mass: m.dc[1..n].to_vec() }
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut k = DMatrix::zeros(m, m);
        for i in 0..m {
            k[(i, i)] += self.diag[i];
        }
        for (i, &o) in self.off.iter().enumerate() {
            let j = (i + 1) % m;
            if i + 1 == m && !self.periodic {
                continue;
            }
            k[(i, j)] += o;
            k[(j, i)] += o;
        }
        k
    }
}

/// Exact inverse of a separable operator on an `m0 × m1 × m2` tensor.
#[derive(Debug, Clone)]
pub struct Fdm {
    dims: [usize; 3],
    /// Row-major `V` per axis (`V[r][c]` at `r·m + c`).
    v: [Vec<f64>; 3],
    lam: [Vec<f64>; 3],
    shift: f64,
    floor: f64,
}

impl Fdm {
    pub fn new(axes: [Axis1d; 3], shift: f64) -> Self {
        let dims = [axes[0].len(), axes[1].len(), axes[2].len()];
        let mut v: [Vec<f64>; 3] = Default::default();
        let mut lam: [Vec<f64>; 3] = Default::default();
        for d in 0..3 {
            let ax = &axes[d];
            let m = ax.len();
            let k = ax.dense();
            let s: Vec<f64> = ax.mass.iter().map(|x| 1.0 / x.sqrt()).collect();
            let mut a = k.clone();
            for i in 0..m {
                for j in 0..m {
                    a[(i, j)] *= s[i] * s[j];
                }
            }
            let eig = SymmetricEigen::new(a);
            let mut vd = vec![0.0; m * m];
            for r in 0..m {
                for c in 0..m {
                    vd[r * m + c] = s[r] * eig.eigenvectors[(r, c)];
                }
            }
            v[d] = vd;
            lam[d] = eig.eigenvalues.iter().map(|x| x.max(0.0)).collect();
        }
        // eigenvalue sums at or below this are treated as a null space
        let max_sum: f64 = lam.iter().map(|l| l.iter().cloned().fold(0.0, f64::max)).sum();
        Fdm { dims, v, lam, shift, floor: 1e-12 * max_sum }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Smallest positive eigenvalue sum; used to regularize null modes.
    fn null_replacement(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for k in 0..self.dims[2] {
                    let s = self.lam[0][i] + self.lam[1][j] + self.lam[2][k];
                    if s > self.floor && s < best {
                        best = s;
                    }
                }
            }
        }
        best
    }

    /// `out = (K + shift·M)⁻¹ x`, null modes mapped through the smallest
    /// positive eigenvalue.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let [m0, m1, m2] = self.dims;
        let mut t = vec![0.0; x.len()];
        let mut t2 = vec![0.0; x.len()];
        contract(&self.v[0], true, x, &mut t, self.dims, 0);
        contract(&self.v[1], true, &t, &mut t2, self.dims, 1);
        contract(&self.v[2], true, &t2, &mut t, self.dims, 2);
        let mut repl = None;
        for k in 0..m2 {
            for j in 0..m1 {
                let base = self.lam[1][j] + self.lam[2][k] + self.shift;
                let row = &mut t[m0 * (j + m1 * k)..m0 * (j + m1 * k) + m0];
                for (i, val) in row.iter_mut().enumerate() {
                    let mut s = base + self.lam[0][i];
                    if s <= self.floor {
                        s = *repl.get_or_insert_with(|| self.null_replacement());
                    }
                    *val /= s;
                }
            }
        }
        contract(&self.v[2], false, &t, &mut t2, self.dims, 2);
        contract(&self.v[1], false, &t2, &mut t, self.dims, 1);
        contract(&self.v[0], false, &t, out, self.dims, 0);
    }
}

/// `y = Q x` (or `Qᵀ x` when `transpose`) along `axis` of a column-major
/// `dims` tensor, `Q` stored row-major.
fn contract(q: &[f64], transpose: bool, x: &[f64], y: &mut [f64], dims: [usize; 3], axis: usize) {
    let [m0, m1, m2] = dims;
    let md = dims[axis];
    // row/column strides of the operator as applied
    let (qr, qc) = if transpose { (1isize, md as isize) } else { (md as isize, 1isize) };
    unsafe {
        match axis {
            0 => matrixmultiply::dgemm(
                m0,
                m0,
                m1 * m2,
                1.0,
                q.as_ptr(),
                qr,
                qc,
                x.as_ptr(),
                1,
                m0 as isize,
                0.0,
                y.as_mut_ptr(),
                1,
                m0 as isize,
            ),
            1 => {
                // Y_k = X_k Opᵀ with X_k an m0 × m1 slab
                for k in 0..m2 {
                    let off = k * m0 * m1;
                    matrixmultiply::dgemm(
                        m0,
                        m1,
                        m1,
                        1.0,
                        x.as_ptr().add(off),
                        1,
                        m0 as isize,
                        q.as_ptr(),
                        qc,
                        qr,
                        0.0,
                        y.as_mut_ptr().add(off),
                        1,
                        m0 as isize,
                    );
                }
            }
            _ => {
                let p = m0 * m1;
                matrixmultiply::dgemm(
                    p,
                    m2,
                    m2,
                    1.0,
                    x.as_ptr(),
                    1,
                    p as isize,
                    q.as_ptr(),
                    qc,
                    qr,
                    0.0,
                    y.as_mut_ptr(),
                    1,
                    p as isize,
                );
            }
        }
    }
}

/// Exact inverse of the unmasked viscous operator, one solver per velocity
/// component, on wall or periodic grids.
pub struct VelocityFdm {
    comps: [Fdm; 3],
    face_dims: [[usize; 3]; 3],
    periodic: bool,
}

impl VelocityFdm {
    pub fn new(grid: &StaggeredGrid, shift: f64) -> Self {
        let m = grid.metrics();
        let periodic = grid.is_periodic();
        let comps = [0, 1, 2].map(|a| {
            let axes = [0, 1, 2].map(|d| {
                if d == a {
                    Axis1d::faces(&m[d], periodic)
                } else {
                    Axis1d::cells(&m[d], periodic, true)
                }
            });
            Fdm::new(axes, shift)
        });
        VelocityFdm { comps, face_dims: [grid.face_dims(0), grid.face_dims(1), grid.face_dims(2)], periodic }
    }

    /// Applies the inverse to component `a` stored in face layout; wall
    /// boundary faces are left at zero.
    pub fn apply_comp(&self, a: usize, x: &[f64], out: &mut [f64]) {
        if self.periodic {
            self.comps[a].apply(x, out);
            return;
        }
        let fd = self.face_dims[a];
        let dims = self.comps[a].dims();
        let mut packed = vec![0.0; self.comps[a].len()];
        pack(a, fd, dims, x, &mut packed);
        let mut res = vec![0.0; packed.len()];
        self.comps[a].apply(&packed, &mut res);
        out.iter_mut().for_each(|v| *v = 0.0);
        unpack(a, fd, dims, &res, out);
    }
}

fn pack(a: usize, fd: [usize; 3], dims: [usize; 3], x: &[f64], out: &mut [f64]) {
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let mut s = [i, j, k];
                s[a] += 1;
                out[i + dims[0] * (j + dims[1] * k)] = x[s[0] + fd[0] * (s[1] + fd[1] * s[2])];
            }
        }
    }
}

fn unpack(a: usize, fd: [usize; 3], dims: [usize; 3], x: &[f64], out: &mut [f64]) {
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let mut s = [i, j, k];
                s[a] += 1;
                out[s[0] + fd[0] * (s[1] + fd[1] * s[2])] = x[i + dims[0] * (j + dims[1] * k)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::VectorField;
    use crate::geometry::{Axis, Boundary, Masks};
    use crate::stokes::ops::{CellLaplacian, Ops};

    fn grid(boundary: Boundary) -> StaggeredGrid {
        match boundary {
            Boundary::Wall => {
                let ax = Axis::stretched(2.0, 0.3, 0.1, 12).unwrap();
                StaggeredGrid::new(
                    [ax.clone(), Axis::uniform(-1.0, 2.0, 7), Axis::stretched(1.5, 0.2, 0.1, 10).unwrap()],
                    boundary,
                )
                .unwrap()
            }
            Boundary::Periodic => StaggeredGrid::uniform([6, 5, 4], [0.0; 3], [1.0, 0.8, 0.7], boundary),
        }
    }

    #[test]
    fn velocity_fdm_inverts_the_box_operator() {
        for b in [Boundary::Wall, Boundary::Periodic] {
            let g = grid(b);
            let masks = Masks::all_fluid(&g);
            let ops = Ops::new(&g, &masks);
            let fdm = VelocityFdm::new(&g, 0.0);
            let mut u = VectorField::from_fn(&g, |x| [x[0].sin() + x[1], (2.0 * x[2]).cos(), x[0] * x[1]]);
            u.apply_mask(&masks);
            if b == Boundary::Periodic {
                // remove constants, which are the null space
                for c in &mut u.comps {
                    let mean = c.iter().sum::<f64>() / c.len() as f64;
                    c.iter_mut().for_each(|v| *v -= mean);
                }
            }
            let mut ku = VectorField::zeros(&g);
            ops.apply_k(&u, [0.0; 3], &mut ku);
            for a in 0..3 {
                let mut back = vec![0.0; ku.comps[a].len()];
                fdm.apply_comp(a, &ku.comps[a], &mut back);
                if b == Boundary::Periodic {
                    let mean = back.iter().sum::<f64>() / back.len() as f64;
                    back.iter_mut().for_each(|v| *v -= mean);
                }
                for (x, y) in back.iter().zip(&u.comps[a]) {
                    assert!((x - y).abs() < 1e-10, "{b:?} comp {a}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn cell_fdm_inverts_the_laplacian() {
        let g = grid(Boundary::Wall);
        let m = g.metrics();
        let fluid = vec![true; g.n_cells()];
        for dirichlet in [true, false] {
            let lap = CellLaplacian::new(&g, &fluid, dirichlet);
            let axes = [0, 1, 2].map(|d| Axis1d::cells(&m[d], false, dirichlet));
            let shift = if dirichlet { 0.0 } else { 0.5 };
            let fdm = Fdm::new(axes, shift);
            let x: Vec<f64> = (0..g.n_cells()).map(|i| ((i * 37 % 11) as f64).sin()).collect();
            let mut y = vec![0.0; x.len()];
            lap.apply(&x, &mut y);
            if !dirichlet {
                let vol: Vec<f64> = (0..g.n_cells())
                    .map(|idx| {
                        let [i, j, k] = g.cell_ijk(idx);
                        g.cell_volume(i, j, k)
                    })
                    .collect();
                for i in 0..y.len() {
                    y[i] += shift * vol[i] * x[i];
                }
            }
            let mut back = vec![0.0; x.len()];
            fdm.apply(&y, &mut back);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
