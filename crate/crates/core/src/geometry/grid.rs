use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Face coordinates along one axis. Cell `i` spans `faces[i]..faces[i+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    faces: Vec<f64>,
}

impl Axis {
    pub fn uniform(origin: f64, length: f64, n: usize) -> Self {
        assert!(n > 0, "axis needs at least one cell");
        let h = length / n as f64;
        let faces = (0..=n).map(|i| origin + i as f64 * h).collect();
        Axis { faces }
    }

    pub fn from_faces(faces: Vec<f64>) -> Result<Self> {
        if faces.len() < 2 || faces.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("axis faces must be strictly increasing".into()));
        }
        Ok(Axis { faces })
    }

    /// Symmetric stretched axis on `[-half_width, half_width]`: uniform cells
    /// of size `core_spacing` on `[-core, core]`, then geometric growth out to
    /// the boundary. `n` is the total cell count and must be even.
    pub fn stretched(half_width: f64, core: f64, core_spacing: f64, n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) || core >= half_width || core_spacing <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "stretched axis needs even n and core < half-width (n={n}, core={core}, R={half_width})"
            )));
        }
        let core_cells = ((core / core_spacing).round() as usize).max(1);
        if 2 * core_cells >= n {
            return Err(Error::InvalidConfig(format!(
                "stretched axis: {n} cells cannot hold a core of {} cells",
                2 * core_cells
            )));
        }
        let core = core_cells as f64 * core_spacing;
        let outer = n / 2 - core_cells;
        let span = half_width - core;
        // growth factor q with core_spacing * (q + q² + ... + q^outer) = span
        let total = |q: f64| -> f64 {
            if (q - 1.0).abs() < 1e-12 {
                core_spacing * outer as f64
            } else {
                core_spacing * q * (q.powi(outer as i32) - 1.0) / (q - 1.0)
            }
        };
        if total(1.0) > span {
            return Err(Error::InvalidConfig(format!(
                "stretched axis: {outer} outer cells of size {core_spacing} overshoot {span}"
            )));
        }
        let (mut lo, mut hi) = (1.0, 2.0);
        while total(hi) < span {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < span {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = 0.5 * (lo + hi);
        let mut right = Vec::with_capacity(n / 2 + 1);
        for i in 0..=core_cells {
            right.push(i as f64 * core_spacing);
        }
        let mut x = core;
        let mut dx = core_spacing;
        for _ in 0..outer {
            dx *= q;
            x += dx;
            right.push(x);
        }
        *right.last_mut().unwrap() = half_width;
        let mut faces: Vec<f64> = right.iter().rev().map(|v| -v).collect();
        faces.pop();
        faces.extend_from_slice(&right);
        faces[n / 2] = 0.0;
        Ok(Axis { faces })
    }

    pub fn n(&self) -> usize {
        self.faces.len() - 1
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn face(&self, i: usize) -> f64 {
        self.faces[i]
    }

    pub fn width(&self, i: usize) -> f64 {
        self.faces[i + 1] - self.faces[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.faces[i] + self.faces[i + 1])
    }

    pub fn start(&self) -> f64 {
        self.faces[0]
    }

    pub fn length(&self) -> f64 {
        self.faces[self.n()] - self.faces[0]
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.width(0);
        (0..self.n()).all(|i| (self.width(i) - h).abs() <= 1e-12 * h.max(1.0))
    }

    pub fn max_width(&self) -> f64 {
        (0..self.n()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    /// Index of the cell containing `x` (clamped to the axis).
    pub fn locate(&self, x: f64) -> usize {
        let n = self.n();
        match self.faces.binary_search_by(|f| f.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 1),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 1),
        }
    }
}

/// Boundary treatment of a grid: fully periodic or walls on every side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Wall,
}

/// Tensor-product MAC grid. Pressure lives at cell centres, the `a`-component
/// of velocity on faces normal to axis `a`. Face `i` along axis `a` is the
/// low face of cell `i`; wall grids carry the extra boundary face `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaggeredGrid {
    pub axes: [Axis; 3],
    pub boundary: Boundary,
}

/// Per-axis spacing tables used by the stencils.
#[derive(Debug, Clone)]
pub struct AxisMetric {
    /// Cell widths, length n.
    pub w: Vec<f64>,
    /// Distance between centres `j-1` and `j`, length n+1. For walls the
    /// ends hold the half-cell distance to the boundary; for periodic axes
    /// `dc[0] == dc[n]` is the wrapped distance.
    pub dc: Vec<f64>,
}

impl StaggeredGrid {
    pub fn new(axes: [Axis; 3], boundary: Boundary) -> Result<Self> {
        if boundary == Boundary::Periodic && !axes.iter().all(Axis::is_uniform) {
            return Err(Error::InvalidConfig("periodic grids must be uniform".into()));
        }
        if axes.iter().any(|a| a.n() < 2) {
            return Err(Error::InvalidConfig("each axis needs at least two cells".into()));
        }
        Ok(StaggeredGrid { axes, boundary })
    }

    /// Uniform grid with `n` cells per axis on `[origin, origin + side)`.
    pub fn uniform(n: [usize; 3], origin: [f64; 3], side: [f64; 3], boundary: Boundary) -> Self {
        let axes = [0, 1, 2].map(|a| Axis::uniform(origin[a], side[a], n[a]));
        StaggeredGrid::new(axes, boundary).expect("uniform grid is always valid")
    }

    /// Unit torus with `n` cells per axis.
    pub fn unit_torus(n: usize) -> Self {
        StaggeredGrid::uniform([n; 3], [0.0; 3], [1.0; 3], Boundary::Periodic)
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.axes[0].n(), self.axes[1].n(), self.axes[2].n()]
    }

    pub fn n_cells(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn is_uniform(&self) -> bool {
        self.axes.iter().all(Axis::is_uniform)
    }

    /// Uniform spacing per axis (meaningful only when `is_uniform`).
    pub fn spacing(&self) -> [f64; 3] {
        [self.axes[0].width(0), self.axes[1].width(0), self.axes[2].width(0)]
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.axes[0].length(), self.axes[1].length(), self.axes[2].length()]
    }

    pub fn origin(&self) -> [f64; 3] {
        [self.axes[0].start(), self.axes[1].start(), self.axes[2].start()]
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.dims();
        i + d[0] * (j + d[1] * k)
    }

    pub fn cell_ijk(&self, idx: usize) -> [usize; 3] {
        let d = self.dims();
        [idx % d[0], (idx / d[0]) % d[1], idx / (d[0] * d[1])]
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.axes[0].center(i), self.axes[1].center(j), self.axes[2].center(k)]
    }

    pub fn cell_volume(&self, i: usize, j: usize, k: usize) -> f64 {
        self.axes[0].width(i) * self.axes[1].width(j) * self.axes[2].width(k)
    }

    /// Array dimensions of the faces normal to `axis`.
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims();
        if !self.is_periodic() {
            d[axis] += 1;
        }
        d
    }

    pub fn n_faces(&self, axis: usize) -> usize {
        let d = self.face_dims(axis);
        d[0] * d[1] * d[2]
    }

    pub fn face_index(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(axis);
        i + d[0] * (j + d[1] * k)
    }

    pub fn face_ijk(&self, axis: usize, idx: usize) -> [usize; 3] {
        let d = self.face_dims(axis);
        [idx % d[0], (idx / d[0]) % d[1], idx / (d[0] * d[1])]
    }

    pub fn face_center(&self, axis: usize, ijk: [usize; 3]) -> [f64; 3] {
        let mut x = self.cell_center(
            ijk[0].min(self.dims()[0] - 1),
            ijk[1].min(self.dims()[1] - 1),
            ijk[2].min(self.dims()[2] - 1),
        );
        x[axis] = self.axes[axis].face(ijk[axis]);
        x
    }

    /// True for faces lying on a wall.
    pub fn is_boundary_face(&self, axis: usize, ijk: [usize; 3]) -> bool {
        !self.is_periodic() && (ijk[axis] == 0 || ijk[axis] == self.dims()[axis])
    }

    /// The two cells sharing a face (low side, high side); `None` beyond a wall.
    pub fn face_cells(&self, axis: usize, ijk: [usize; 3]) -> (Option<usize>, Option<usize>) {
        let n = self.dims()[axis];
        let mut lo = ijk;
        let mut hi = ijk;
        let low = if ijk[axis] == 0 {
            if self.is_periodic() {
                lo[axis] = n - 1;
                Some(self.cell_index(lo[0], lo[1], lo[2]))
            } else {
                None
            }
        } else {
            lo[axis] -= 1;
            Some(self.cell_index(lo[0], lo[1], lo[2]))
        };
        let high = if ijk[axis] >= n {
            None
        } else {
            hi[axis] = ijk[axis];
            Some(self.cell_index(hi[0], hi[1], hi[2]))
        };
        (low, high)
    }

    pub fn metric(&self, axis: usize) -> AxisMetric {
        let ax = &self.axes[axis];
        let n = ax.n();
        let w: Vec<f64> = (0..n).map(|i| ax.width(i)).collect();
        let mut dc = vec![0.0; n + 1];
        for j in 1..n {
            dc[j] = 0.5 * (w[j - 1] + w[j]);
        }
        if self.is_periodic() {
            dc[0] = 0.5 * (w[n - 1] + w[0]);
            dc[n] = dc[0];
        } else {
            dc[0] = 0.5 * w[0];
            dc[n] = 0.5 * w[n - 1];
        }
        AxisMetric { w, dc }
    }

    pub fn metrics(&self) -> [AxisMetric; 3] {
        [self.metric(0), self.metric(1), self.metric(2)]
    }

    pub fn same_shape(&self, other: &StaggeredGrid) -> bool {
        self == other
    }

    pub fn check_same(&self, other: &StaggeredGrid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(what.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_axis_tiles_the_side() {
        let g = StaggeredGrid::uniform([8, 4, 2], [0.0; 3], [1.0, 0.5, 0.25], Boundary::Wall);
        for a in 0..3 {
            let ax = &g.axes[a];
            assert!((ax.n() as f64 * ax.width(0) - g.extent()[a]).abs() < 1e-15);
        }
        assert_eq!(g.face_dims(0), [9, 4, 2]);
        let p = StaggeredGrid::unit_torus(4);
        assert_eq!(p.face_dims(2), [4, 4, 4]);
    }

    #[test]
    fn stretched_axis_is_symmetric_and_reaches_the_box() {
        let ax = Axis::stretched(6.0, 0.16, 0.02, 64).unwrap();
        assert_eq!(ax.n(), 64);
        assert!((ax.face(0) + 6.0).abs() < 1e-12 && (ax.face(64) - 6.0).abs() < 1e-12);
        for i in 0..=64 {
            assert!((ax.face(i) + ax.face(64 - i)).abs() < 1e-12);
        }
        assert!((ax.width(32) - 0.02).abs() < 1e-12);
        // growth is monotone away from the core
        for i in 40..63 {
            assert!(ax.width(i + 1) >= ax.width(i) - 1e-12);
        }
    }

    #[test]
    fn periodic_faces_wrap() {
        let g = StaggeredGrid::unit_torus(4);
        let (lo, hi) = g.face_cells(0, [0, 1, 2]);
        assert_eq!(lo, Some(g.cell_index(3, 1, 2)));
        assert_eq!(hi, Some(g.cell_index(0, 1, 2)));
        let w = StaggeredGrid::uniform([4; 3], [0.0; 3], [1.0; 3], Boundary::Wall);
        assert_eq!(w.face_cells(1, [0, 0, 0]).0, None);
        assert_eq!(w.face_cells(1, [0, 4, 0]).1, None);
    }

    #[test]
    fn locate_finds_cells() {
        let ax = Axis::uniform(0.0, 1.0, 10);
        assert_eq!(ax.locate(0.05), 0);
        assert_eq!(ax.locate(0.95), 9);
        assert_eq!(ax.locate(1.0), 9);
        assert_eq!(ax.locate(-1.0), 0);
        assert_eq!(ax.locate(0.35), 3);
    }
}
