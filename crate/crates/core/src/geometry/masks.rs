use serde::{Deserialize, Serialize};

use super::config::{DomainKind, Obstacle, PerforationConfig};
use super::grid::StaggeredGrid;
use crate::error::{Error, Result};
use crate::numeric;

/// Holes placed at the centres of an ε-lattice of cells.
///
/// Lattice cell `k` spans `origin + ε·[k, k+1)` per axis; a hole, if present,
/// sits at the cell centre plus an optional offset and is the obstacle scaled
/// by `scale`. Holes stay strictly inside their own cell, so point queries
/// only need to look at one lattice cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleSet {
    pub epsilon: f64,
    pub scale: f64,
    pub shape: Obstacle,
    pub origin: [f64; 3],
    pub lattice: [usize; 3],
    /// Period per axis for periodic domains.
    pub period: Option<[f64; 3]>,
    present: Vec<bool>,
    offsets: Option<Vec<[f64; 3]>>,
}

impl HoleSet {
    pub fn empty() -> Self {
        HoleSet {
            epsilon: 1.0,
            scale: 0.0,
            shape: Obstacle::None,
            origin: [0.0; 3],
            lattice: [0; 3],
            period: None,
            present: Vec::new(),
            offsets: None,
        }
    }

    /// Fully populated periodic lattice on `[0, period)`; each period must be
    /// a whole number of ε-cells.
    pub fn periodic_lattice(epsilon: f64, scale: f64, shape: Obstacle, period: [f64; 3]) -> Result<Self> {
        let mut lattice = [0usize; 3];
        for a in 0..3 {
            let m = period[a] / epsilon;
            if (m - m.round()).abs() > 1e-9 * m.max(1.0) || m.round() < 1.0 {
                return Err(Error::InvalidConfig(format!("period {} is not a whole number of ε-cells", period[a])));
            }
            lattice[a] = m.round() as usize;
        }
        let count = lattice[0] * lattice[1] * lattice[2];
        let present = vec![!shape.is_empty(); count];
        Ok(HoleSet { epsilon, scale, shape, origin: [0.0; 3], lattice, period: Some(period), present, offsets: None })
    }

    /// Shifts every hole centre; each hole must stay inside `B(x_k, ε/4)`.
    pub fn with_offsets(mut self, offsets: Vec<[f64; 3]>) -> Result<Self> {
        if offsets.len() != self.present.len() {
            return Err(Error::InvalidConfig("one offset per lattice cell required".into()));
        }
        let r = self.scale * self.shape.bounding_radius();
        for o in &offsets {
            let d = super::config::norm3(*o);
            if d + r >= self.epsilon / 4.0 {
                return Err(Error::HoleTooLarge { radius: d + r, limit: self.epsilon / 4.0 });
            }
        }
        self.offsets = Some(offsets);
        Ok(self)
    }

    fn lattice_index(&self, k: [usize; 3]) -> usize {
        k[0] + self.lattice[0] * (k[1] + self.lattice[1] * k[2])
    }

    /// Number of holes.
    pub fn len(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hole centres in lattice order.
    pub fn centers(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for k2 in 0..self.lattice[2] {
            for k1 in 0..self.lattice[1] {
                for k0 in 0..self.lattice[0] {
                    let k = [k0, k1, k2];
                    let idx = self.lattice_index(k);
                    if self.present[idx] {
                        out.push(self.center_of(k, idx));
                    }
                }
            }
        }
        out
    }

    fn center_of(&self, k: [usize; 3], idx: usize) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + self.epsilon * (k[a] as f64 + 0.5);
        }
        if let Some(off) = &self.offsets {
            for a in 0..3 {
                c[a] += off[idx][a];
            }
        }
        c
    }

    /// Physical radius of the ball bounding each hole.
    pub fn hole_radius(&self) -> f64 {
        self.scale * self.shape.bounding_radius()
    }

    /// Point-in-hole test, wrapping periodically where applicable.
    pub fn contains(&self, x: [f64; 3]) -> bool {
        if self.present.is_empty() || self.shape.is_empty() {
            return false;
        }
        let mut k = [0usize; 3];
        let mut xr = x;
        for a in 0..3 {
            let mut s = x[a] - self.origin[a];
            if let Some(p) = self.period {
                s = s.rem_euclid(p[a]);
                xr[a] = self.origin[a] + s;
            }
            let ka = (s / self.epsilon).floor();
            if ka < 0.0 || ka >= self.lattice[a] as f64 {
                return false;
            }
            k[a] = ka as usize;
        }
        let idx = self.lattice_index(k);
        if !self.present[idx] {
            return false;
        }
        let c = self.center_of(k, idx);
        let y = [(xr[0] - c[0]) / self.scale, (xr[1] - c[1]) / self.scale, (xr[2] - c[2]) / self.scale];
        self.shape.contains(y)
    }
}

/// Builds the hole set of a validated configuration.
pub fn build_perforation(config: &PerforationConfig) -> Result<HoleSet> {
    config.validate()?;
    let eps = config.epsilon;
    let scale = config.scales().a_eps;
    match &config.domain {
        DomainKind::Torus3 => HoleSet::periodic_lattice(eps, scale, config.obstacle.clone(), [1.0; 3]),
        DomainKind::Box3 { side } => {
            let mut lattice = [0usize; 3];
            for a in 0..3 {
                lattice[a] = (side[a] / eps - 1e-9).ceil().max(0.0) as usize;
            }
            let mut present = Vec::with_capacity(lattice[0] * lattice[1] * lattice[2]);
            let tol = 1e-12;
            for k2 in 0..lattice[2] {
                for k1 in 0..lattice[1] {
                    for k0 in 0..lattice[0] {
                        let k = [k0, k1, k2];
                        // closure [εk, ε(k+1)] must lie in the open box (0, side)
                        let inside = (0..3).all(|a| {
                            let lo = eps * k[a] as f64;
                            let hi = eps * (k[a] + 1) as f64;
                            lo > tol && hi < side[a] - tol
                        });
                        present.push(inside && !config.obstacle.is_empty());
                    }
                }
            }
            Ok(HoleSet {
                epsilon: eps,
                scale,
                shape: config.obstacle.clone(),
                origin: [0.0; 3],
                lattice,
                period: None,
                present,
                offsets: None,
            })
        }
    }
}

/// Fluid flags; `true` means fluid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Masks {
    pub cells: Vec<bool>,
    pub faces: [Vec<bool>; 3],
}

/// Rasterization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterOptions {
    /// Minimum number of grid cells across a hole diameter.
    pub min_cells_across: f64,
    /// Escalate the resolution warning to an error.
    pub strict: bool,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions { min_cells_across: 4.0, strict: false }
    }
}

impl Masks {
    /// All cells and interior faces fluid; wall faces solid.
    pub fn all_fluid(grid: &StaggeredGrid) -> Self {
        Masks::from_predicate(grid, |_| false)
    }

    /// Masks from a point-in-solid predicate. A cell is solid when its
    /// centre is; a face is solid when its centre is or when either
    /// neighbouring cell is. Wall faces are always solid.
    pub fn from_predicate<F>(grid: &StaggeredGrid, solid: F) -> Self
    where
        F: Fn([f64; 3]) -> bool + Sync + Send,
    {
        let [n0, n1, _] = grid.dims();
        let cells = numeric::par_map(grid.n_cells(), |idx| {
            let [i, j, k] = [idx % n0, (idx / n0) % n1, idx / (n0 * n1)];
            !solid(grid.cell_center(i, j, k))
        });
        let faces = [0, 1, 2].map(|a| {
            numeric::par_map(grid.n_faces(a), |idx| {
                let ijk = grid.face_ijk(a, idx);
                if grid.is_boundary_face(a, ijk) {
                    return false;
                }
                let (lo, hi) = grid.face_cells(a, ijk);
                let cells_fluid = lo.is_none_or(|c| cells[c]) && hi.is_none_or(|c| cells[c]);
                cells_fluid && !solid(grid.face_center(a, ijk))
            })
        });
        Masks { cells, faces }
    }

    pub fn n_fluid_cells(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn n_solid_cells(&self) -> usize {
        self.cells.len() - self.n_fluid_cells()
    }

    pub fn has_solid_cells(&self) -> bool {
        self.cells.iter().any(|c| !*c)
    }

    /// Volume fraction of fluid cells.
    pub fn fluid_fraction(&self, grid: &StaggeredGrid) -> f64 {
        let fluid = numeric::sum_by(grid.n_cells(), |idx| {
            if self.cells[idx] {
                let [i, j, k] = grid.cell_ijk(idx);
                grid.cell_volume(i, j, k)
            } else {
                0.0
            }
        });
        fluid / grid.volume()
    }

    /// Number of connected fluid components, where two fluid cells are
    /// connected through a shared fluid face.
    pub fn fluid_components(&self, grid: &StaggeredGrid) -> usize {
        let n = grid.n_cells();
        let d = grid.dims();
        let mut label = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut count = 0;
        for seed in 0..n {
            if !self.cells[seed] || label[seed] != usize::MAX {
                continue;
            }
            label[seed] = count;
            stack.push(seed);
            while let Some(c) = stack.pop() {
                let ijk = grid.cell_ijk(c);
                for a in 0..3 {
                    // low face of this cell, then the low face of the next one
                    for side in 0..2 {
                        let mut f = ijk;
                        if side == 1 {
                            f[a] += 1;
                            if f[a] == d[a] {
                                if grid.is_periodic() {
                                    f[a] = 0;
                                } else {
                                    continue;
                                }
                            }
                        }
                        if !self.faces[a][grid.face_index(a, f[0], f[1], f[2])] {
                            continue;
                        }
                        let (lo, hi) = grid.face_cells(a, f);
                        let other = if side == 0 { lo } else { hi };
                        if let Some(o) = other {
                            if self.cells[o] && label[o] == usize::MAX {
                                label[o] = count;
                                stack.push(o);
                            }
                        }
                    }
                }
            }
            count += 1;
        }
        count
    }

    pub fn check_connected(&self, grid: &StaggeredGrid) -> Result<()> {
        match self.fluid_components(grid) {
            1 => Ok(()),
            0 => Err(Error::InvalidConfig("no fluid cells".into())),
            c => Err(Error::DisconnectedFluid { components: c }),
        }
    }
}

/// Rasterizes holes with the default options (warn when under-resolved).
pub fn rasterize(holes: &HoleSet, grid: &StaggeredGrid) -> Result<Masks> {
    rasterize_with(holes, grid, RasterOptions::default())
}

pub fn rasterize_with(holes: &HoleSet, grid: &StaggeredGrid, opts: RasterOptions) -> Result<Masks> {
    if !holes.is_empty() {
        let diameter = 2.0 * holes.hole_radius();
        let cells = diameter / grid.axes.iter().map(|a| a.max_width()).fold(0.0, f64::max);
        if cells < opts.min_cells_across {
            if opts.strict {
                return Err(Error::UnderResolved { cells, required: opts.min_cells_across });
            }
            log::warn!("under-resolved hole: {cells:.2} cells across the diameter, want {}", opts.min_cells_across);
        }
    }
    Ok(Masks::from_predicate(grid, |x| holes.contains(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Boundary;
    use std::f64::consts::PI;

    #[test]
    fn torus_half_has_eight_holes() {
        let cfg = PerforationConfig::torus(0.5, 2.0, Obstacle::Ball(0.1));
        let holes = build_perforation(&cfg).unwrap();
        assert_eq!(holes.len(), 8);
        for c in holes.centers() {
            for v in c {
                assert!((v - 0.25).abs() < 1e-15 || (v - 0.75).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn torus_count_is_inverse_cube() {
        for m in [1usize, 2, 4, 8] {
            let eps = 1.0 / (2.0 * m as f64);
            let cfg = PerforationConfig::torus(eps, 1.5, Obstacle::Ball(0.1));
            assert_eq!(build_perforation(&cfg).unwrap().len(), (2 * m).pow(3));
        }
    }

    #[test]
    fn box_keeps_only_interior_cells() {
        let cfg = PerforationConfig {
            domain: DomainKind::Box3 { side: [1.0; 3] },
            ..PerforationConfig::torus(0.25, 2.0, Obstacle::Ball(0.1))
        };
        let holes = build_perforation(&cfg).unwrap();
        // brute force: k with closure of [k/4, (k+1)/4] inside (0, 1)
        let per_axis = (0..4).filter(|k| *k >= 1 && k + 1 < 4).count();
        assert_eq!(holes.lattice, [4, 4, 4]);
        assert_eq!(holes.len(), per_axis.pow(3));
        assert_eq!(holes.len(), 8);
    }

    #[test]
    fn centers_are_at_least_epsilon_apart() {
        let cfg = PerforationConfig::torus(0.25, 2.0, Obstacle::Ball(0.1));
        let c = build_perforation(&cfg).unwrap().centers();
        for i in 0..c.len() {
            for j in 0..i {
                let d =
                    ((c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2) + (c[i][2] - c[j][2]).powi(2)).sqrt();
                assert!(d >= 0.25 - 1e-12);
            }
        }
    }

    #[test]
    fn no_holes_means_all_fluid() {
        let g = StaggeredGrid::unit_torus(8);
        let m = rasterize(&HoleSet::empty(), &g).unwrap();
        assert!(m.cells.iter().all(|c| *c));
        assert!(m.faces.iter().all(|f| f.iter().all(|v| *v)));
        let cfg = PerforationConfig::torus(0.25, 2.0, Obstacle::None);
        let m = rasterize(&build_perforation(&cfg).unwrap(), &g).unwrap();
        assert_eq!(m.n_solid_cells(), 0);
    }

    #[test]
    fn fluid_fraction_matches_ball_volume() {
        // one hole per ε-cell; physical radius r = a·r0
        let eps = 0.5;
        let cfg = PerforationConfig::torus(eps, 1.2, Obstacle::Ball(0.12));
        let holes = build_perforation(&cfg).unwrap();
        let r = holes.hole_radius();
        for n in [32, 64] {
            let g = StaggeredGrid::unit_torus(n);
            let m = rasterize(&holes, &g).unwrap();
            let exact = 1.0 - 4.0 / 3.0 * PI * r.powi(3) / eps.powi(3);
            let h = 1.0 / n as f64;
            let tol = 3.0 * h * 4.0 * PI * r * r / eps.powi(3);
            assert!((m.fluid_fraction(&g) - exact).abs() <= tol, "n={n}");
        }
    }

    #[test]
    fn strict_mode_rejects_coarse_grids() {
        let cfg = PerforationConfig::torus(0.5, 1.5, Obstacle::Ball(0.1));
        let holes = build_perforation(&cfg).unwrap();
        let g = StaggeredGrid::unit_torus(8);
        let err = rasterize_with(&holes, &g, RasterOptions { strict: true, ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("under-resolved hole"));
        assert!(rasterize(&holes, &g).is_ok());
    }

    #[test]
    fn seam_wrap_matches_translated_hole() {
        // a hole straddling the seam equals the same hole shifted by a period
        let a = HoleSet::periodic_lattice(1.0, 1.0, Obstacle::Ball(0.2), [1.0; 3])
            .unwrap()
            .with_offsets(vec![[0.0; 3]])
            .unwrap();
        let g = StaggeredGrid::unit_torus(16);
        let shifted = Masks::from_predicate(&g, |x| {
            let y = [x[0] + 0.5, x[1] + 0.5, x[2]];
            a.contains(y)
        });
        let direct = Masks::from_predicate(&g, |x| {
            let y = [x[0] - 0.5, x[1] - 0.5, x[2] + 1.0];
            a.contains(y)
        });
        assert_eq!(shifted, direct);
        assert!(shifted.has_solid_cells());
        // the hole centred at (0, 0, 1/2) wraps onto every corner cell column
        assert!(!shifted.cells[g.cell_index(0, 0, 8)]);
        assert!(!shifted.cells[g.cell_index(15, 15, 8)]);
    }

    #[test]
    fn isolated_bubble_is_detected() {
        let g = StaggeredGrid::uniform([12; 3], [0.0; 3], [1.0; 3], Boundary::Wall);
        let m = Masks::from_predicate(&g, |x| {
            let r = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2)).sqrt();
            (0.2..0.35).contains(&r)
        });
        let err = m.check_connected(&g).unwrap_err();
        assert!(err.to_string().contains("disconnected fluid region"));
        let clean = Masks::all_fluid(&g);
        assert!(clean.check_connected(&g).is_ok());
        let t = StaggeredGrid::unit_torus(8);
        assert_eq!(Masks::all_fluid(&t).fluid_components(&t), 1);
    }

    #[test]
    fn wall_faces_are_solid() {
        let g = StaggeredGrid::uniform([4; 3], [0.0; 3], [1.0; 3], Boundary::Wall);
        let m = Masks::all_fluid(&g);
        assert!(!m.faces[0][g.face_index(0, 0, 1, 1)]);
        assert!(!m.faces[0][g.face_index(0, 4, 1, 1)]);
        assert!(m.faces[0][g.face_index(0, 2, 1, 1)]);
    }
}
