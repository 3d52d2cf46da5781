//! Finite-volume MAC operators on rectilinear grids.
//!
//! All operators are volume-integrated: `K` is the positive viscous operator
//! on faces, `D` sums face fluxes per cell and `G = -Dᵀ`. Velocity arrays are
//! stored per component in the layout of `StaggeredGrid::face_dims`.

use crate::fields::{ScalarField, VectorField};
use crate::geometry::{AxisMetric, Masks, StaggeredGrid};
use crate::numeric;

pub struct Ops<'a> {
    pub grid: &'a StaggeredGrid,
    pub masks: &'a Masks,
    pub m: [AxisMetric; 3],
    periodic: bool,
}

impl<'a> Ops<'a> {
    pub fn new(grid: &'a StaggeredGrid, masks: &'a Masks) -> Self {
        Ops { grid, masks, m: grid.metrics(), periodic: grid.is_periodic() }
    }

    /// `out = K u` on fluid faces (zero elsewhere). Values at solid faces of
    /// `u` act as Dirichlet data; `ghost[a]` is the tangential wall value of
    /// component `a`.
    pub fn apply_k(&self, u: &VectorField, ghost: [f64; 3], out: &mut VectorField) {
        for a in 0..3 {
            self.apply_k_comp(a, &u.comps[a], ghost[a], &mut out.comps[a]);
        }
    }

    fn apply_k_comp(&self, a: usize, u: &[f64], ghost: f64, out: &mut [f64]) {
        let g = self.grid;
        let fd = g.face_dims(a);
        let n = g.dims();
        let m = &self.m;
        let fluid = &self.masks.faces[a];
        let periodic = self.periodic;
        let stride = [1, fd[0], fd[0] * fd[1]];
        let plane = fd[0] * fd[1];
        numeric::for_each_slab(out, plane, |k, slab| {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let local = i + fd[0] * j;
                    let idx = local + plane * k;
                    if !fluid[idx] {
                        slab[local] = 0.0;
                        continue;
                    }
                    let ijk = [i, j, k];
                    let uf = u[idx];
                    let mut acc = 0.0;
                    for d in 0..3 {
                        let (b, c) = ((d + 1) % 3, (d + 2) % 3);
                        let pos = ijk[d];
                        if d == a {
                            // links through the cells on either side of the face
                            let area = m[b].w[ijk[b]] * m[c].w[ijk[c]];
                            let (up, wu) = if periodic { ((pos + 1) % n[d], pos) } else { (pos + 1, pos) };
                            let (dn, wd) = if periodic {
                                ((pos + n[d] - 1) % n[d], (pos + n[d] - 1) % n[d])
                            } else {
                                (pos - 1, pos - 1)
                            };
                            let iu = idx + up * stride[d] - pos * stride[d];
                            let id = idx + dn * stride[d] - pos * stride[d];
                            acc += area / m[d].w[wu] * (uf - u[iu]);
                            acc += area / m[d].w[wd] * (uf - u[id]);
                        } else {
                            // transverse links between cell rows
                            let other = if b == a { c } else { b };
                            let area = m[a].dc[ijk[a]] * m[other].w[ijk[other]];
                            let nd = n[d];
                            if pos + 1 < nd {
                                acc += area / m[d].dc[pos + 1] * (uf - u[idx + stride[d]]);
                            } else if periodic {
                                acc += area / m[d].dc[nd] * (uf - u[idx - pos * stride[d]]);
                            } else {
                                acc += area / m[d].dc[nd] * (uf - ghost);
                            }
                            if pos > 0 {
                                acc += area / m[d].dc[pos] * (uf - u[idx - stride[d]]);
                            } else if periodic {
                                acc += area / m[d].dc[0] * (uf - u[idx + (nd - 1) * stride[d]]);
                            } else {
                                acc += area / m[d].dc[0] * (uf - ghost);
                            }
                        }
                    }
                    slab[local] = acc;
                }
            }
        });
    }

    /// Diagonal of `K` on fluid faces (one elsewhere).
    pub fn k_diagonal(&self) -> VectorField {
        let g = self.grid;
        let n = g.dims();
        let m = &self.m;
        let mut out = VectorField::zeros(g);
        for a in 0..3 {
            for idx in 0..g.n_faces(a) {
                if !self.masks.faces[a][idx] {
                    out.comps[a][idx] = 1.0;
                    continue;
                }
                let ijk = g.face_ijk(a, idx);
                let mut acc = 0.0;
                for d in 0..3 {
                    let (b, c) = ((d + 1) % 3, (d + 2) % 3);
                    let pos = ijk[d];
                    if d == a {
                        let area = m[b].w[ijk[b]] * m[c].w[ijk[c]];
                        let wd = if self.periodic { (pos + n[d] - 1) % n[d] } else { pos - 1 };
                        acc += area / m[d].w[pos % n[d]] + area / m[d].w[wd];
                    } else {
                        let other = if b == a { c } else { b };
                        let area = m[a].dc[ijk[a]] * m[other].w[ijk[other]];
                        acc += area / m[d].dc[pos + 1] + area / m[d].dc[pos];
                    }
                }
                out.comps[a][idx] = acc;
            }
        }
        out
    }

    /// `out = D u` on every cell (flux sum).
    pub fn div(&self, u: &VectorField, out: &mut ScalarField) {
        self.div_slices([&u.comps[0], &u.comps[1], &u.comps[2]], &mut out.data);
    }

    /// Start of each component in the flat face layout, plus the total.
    pub fn offsets(&self) -> [usize; 4] {
        let n = [0, 1, 2].map(|a| self.grid.n_faces(a));
        [0, n[0], n[0] + n[1], n[0] + n[1] + n[2]]
    }

    /// `K u` on flat storage with zero wall ghosts.
    pub fn k_flat(&self, u: &[f64], out: &mut [f64]) {
        let o = self.offsets();
        for a in 0..3 {
            self.apply_k_comp(a, &u[o[a]..o[a + 1]], 0.0, &mut out[o[a]..o[a + 1]]);
        }
    }

    pub fn div_flat(&self, u: &[f64], out: &mut [f64]) {
        let o = self.offsets();
        self.div_slices([&u[o[0]..o[1]], &u[o[1]..o[2]], &u[o[2]..o[3]]], out);
    }

    pub fn grad_flat(&self, p: &[f64], out: &mut [f64]) {
        let o = self.offsets();
        for a in 0..3 {
            self.grad_comp(a, p, &mut out[o[a]..o[a + 1]]);
        }
    }

    /// Zeroes solid faces of a flat face vector.
    pub fn mask_faces(&self, u: &mut [f64]) {
        let o = self.offsets();
        for a in 0..3 {
            for (v, f) in u[o[a]..o[a + 1]].iter_mut().zip(&self.masks.faces[a]) {
                if !f {
                    *v = 0.0;
                }
            }
        }
    }

    /// Zeroes solid cells.
    pub fn mask_cells(&self, p: &mut [f64]) {
        for (v, f) in p.iter_mut().zip(&self.masks.cells) {
            if !f {
                *v = 0.0;
            }
        }
    }

    fn div_slices(&self, u: [&[f64]; 3], out: &mut [f64]) {
        let g = self.grid;
        let n = g.dims();
        let m = &self.m;
        let periodic = self.periodic;
        let plane = n[0] * n[1];
        let fds = [g.face_dims(0), g.face_dims(1), g.face_dims(2)];
        numeric::for_each_slab(out, plane, |k, slab| {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let ijk = [i, j, k];
                    let mut acc = 0.0;
                    for a in 0..3 {
                        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                        let area = m[b].w[ijk[b]] * m[c].w[ijk[c]];
                        let fd = fds[a];
                        let lo = ijk[0] + fd[0] * (ijk[1] + fd[1] * ijk[2]);
                        let mut hi_ijk = ijk;
                        hi_ijk[a] += 1;
                        if periodic && hi_ijk[a] == n[a] {
                            hi_ijk[a] = 0;
                        }
                        let hi = hi_ijk[0] + fd[0] * (hi_ijk[1] + fd[1] * hi_ijk[2]);
                        acc += area * (u[a][hi] - u[a][lo]);
                    }
                    slab[i + n[0] * j] = acc;
                }
            }
        });
    }

    /// `out = G p` on fluid faces (zero elsewhere).
    pub fn grad(&self, p: &ScalarField, out: &mut VectorField) {
        for a in 0..3 {
            self.grad_comp(a, &p.data, &mut out.comps[a]);
        }
    }

    fn grad_comp(&self, a: usize, p: &[f64], comp: &mut [f64]) {
        let g = self.grid;
        let m = &self.m;
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let fluid = &self.masks.faces[a];
        for (idx, o) in comp.iter_mut().enumerate() {
            if !fluid[idx] {
                *o = 0.0;
                continue;
            }
            let ijk = g.face_ijk(a, idx);
            let (lo, hi) = g.face_cells(a, ijk);
            let area = m[b].w[ijk[b]] * m[c].w[ijk[c]];
            *o = area * (p[hi.unwrap()] - p[lo.unwrap()]);
        }
    }

    /// Discrete Dirichlet energy `Σ_links c·Δu·Δv` over all faces, with
    /// tangential wall ghosts `gu`, `gv`. Equals `uᵀKv` when both fields
    /// vanish on solid faces and the ghosts are zero.
    pub fn energy(&self, u: &VectorField, v: &VectorField, gu: [f64; 3], gv: [f64; 3]) -> f64 {
        let g = self.grid;
        let n = g.dims();
        let m = &self.m;
        let periodic = self.periodic;
        let mut total = 0.0;
        for a in 0..3 {
            let fd = g.face_dims(a);
            let uc = &u.comps[a];
            let vc = &v.comps[a];
            let stride = [1, fd[0], fd[0] * fd[1]];
            total += numeric::sum_by(g.n_faces(a), |idx| {
                let ijk = g.face_ijk(a, idx);
                let mut acc = 0.0;
                for d in 0..3 {
                    let (b, c) = ((d + 1) % 3, (d + 2) % 3);
                    let pos = ijk[d];
                    if d == a {
                        // link to the next face along the normal
                        let has = if periodic { true } else { pos < n[d] };
                        if has {
                            let up = if periodic { (pos + 1) % n[d] } else { pos + 1 };
                            let area = m[b].w[ijk[b]] * m[c].w[ijk[c]];
                            let iu = idx + up * stride[d] - pos * stride[d];
                            acc += area / m[d].w[pos] * (uc[idx] - uc[iu]) * (vc[idx] - vc[iu]);
                        }
                    } else {
                        let other = if b == a { c } else { b };
                        let area = m[a].dc[ijk[a]] * m[other].w[ijk[other]];
                        let nd = n[d];
                        if pos + 1 < nd {
                            let iu = idx + stride[d];
                            acc += area / m[d].dc[pos + 1] * (uc[idx] - uc[iu]) * (vc[idx] - vc[iu]);
                        } else if periodic {
                            let iu = idx - pos * stride[d];
                            acc += area / m[d].dc[nd] * (uc[idx] - uc[iu]) * (vc[idx] - vc[iu]);
                        } else {
                            acc += area / m[d].dc[nd] * (uc[idx] - gu[a]) * (vc[idx] - gv[a]);
                        }
                        if pos == 0 && !periodic {
                            acc += area / m[d].dc[0] * (uc[idx] - gu[a]) * (vc[idx] - gv[a]);
                        }
                    }
                }
                acc
            });
        }
        total
    }

    /// Cell volumes.
    pub fn cell_volumes(&self) -> Vec<f64> {
        let g = self.grid;
        (0..g.n_cells())
            .map(|idx| {
                let [i, j, k] = g.cell_ijk(idx);
                g.cell_volume(i, j, k)
            })
            .collect()
    }

    /// `‖div_h u‖_{L²}` over fluid cells, with `div_h = D / vol`.
    pub fn div_l2(&self, u: &VectorField) -> f64 {
        let mut d = ScalarField::zeros(self.grid);
        self.div(u, &mut d);
        let vol = self.cell_volumes();
        numeric::sum_by(d.data.len(), |i| if self.masks.cells[i] { d.data[i] * d.data[i] / vol[i] } else { 0.0 }).sqrt()
    }
}

/// Cell-centred scalar Laplacian `-∇·∇` in volume-integrated form.
///
/// Unknowns live on fluid cells; solid cells are Dirichlet zero at their
/// centres. Walls are Dirichlet at the face (`dirichlet_walls`) or Neumann.
pub struct CellLaplacian<'a> {
    pub grid: &'a StaggeredGrid,
    pub fluid: &'a [bool],
    pub dirichlet_walls: bool,
    m: [AxisMetric; 3],
}

impl<'a> CellLaplacian<'a> {
    pub fn new(grid: &'a StaggeredGrid, fluid: &'a [bool], dirichlet_walls: bool) -> Self {
        CellLaplacian { grid, fluid, dirichlet_walls, m: grid.metrics() }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let n = g.dims();
        let m = &self.m;
        let periodic = g.is_periodic();
        let dirichlet = self.dirichlet_walls;
        let fluid = self.fluid;
        let stride = [1, n[0], n[0] * n[1]];
        let plane = n[0] * n[1];
        numeric::for_each_slab(out, plane, |k, slab| {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let local = i + n[0] * j;
                    let idx = local + plane * k;
                    if !fluid[idx] {
                        slab[local] = 0.0;
                        continue;
                    }
                    let ijk = [i, j, k];
                    let xc = x[idx];
                    let mut acc = 0.0;
                    for d in 0..3 {
                        let (b, c) = ((d + 1) % 3, (d + 2) % 3);
                        let area = m[b].w[ijk[b]] * m[c].w[ijk[c]];
                        let pos = ijk[d];
                        let nd = n[d];
                        for (nb, dist) in [
                            (
                                if pos + 1 < nd {
                                    Some(idx + stride[d])
                                } else if periodic {
                                    Some(idx - pos * stride[d])
                                } else {
                                    None
                                },
                                m[d].dc[pos + 1],
                            ),
                            (
                                if pos > 0 {
                                    Some(idx - stride[d])
                                } else if periodic {
                                    Some(idx + (nd - 1) * stride[d])
                                } else {
                                    None
                                },
                                m[d].dc[pos],
                            ),
                        ] {
                            match nb {
                                Some(o) => {
                                    let xo = if fluid[o] { x[o] } else { 0.0 };
                                    acc += area / dist * (xc - xo);
                                }
                                None if dirichlet => acc += area / dist * xc,
                                None => {}
                            }
                        }
                    }
                    slab[local] = acc;
                }
            }
        });
    }
}
