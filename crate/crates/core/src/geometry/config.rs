use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius of the ball every reference obstacle must fit in.
pub const OBSTACLE_BOUND: f64 = 0.125;

/// Signed-distance samples on the node lattice of `[-half_width, half_width]³`.
///
/// `values` has `n³` entries, x fastest. A point is inside the obstacle when
/// the trilinear interpolant is negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfSamples {
    pub n: usize,
    pub half_width: f64,
    pub values: Vec<f64>,
}

impl SdfSamples {
    fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    fn sample(&self, y: [f64; 3]) -> f64 {
        let h = self.spacing();
        let n = self.n;
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = (y[a] + self.half_width) / h;
            if s < 0.0 || s > (n - 1) as f64 {
                return f64::INFINITY;
            }
            let i = (s.floor() as usize).min(n - 2);
            base[a] = i;
            t[a] = s - i as f64;
        }
        let at = |i: usize, j: usize, k: usize| self.values[i + n * (j + n * k)];
        let mut acc = 0.0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = (if di == 1 { t[0] } else { 1.0 - t[0] })
                        * (if dj == 1 { t[1] } else { 1.0 - t[1] })
                        * (if dk == 1 { t[2] } else { 1.0 - t[2] });
                    acc += w * at(base[0] + di, base[1] + dj, base[2] + dk);
                }
            }
        }
        acc
    }

    /// Samples a ball of the given radius; mostly useful in tests.
    pub fn ball(radius: f64, n: usize, half_width: f64) -> Self {
        let mut values = Vec::with_capacity(n * n * n);
        let h = 2.0 * half_width / (n - 1) as f64;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let p = [-half_width + i as f64 * h, -half_width + j as f64 * h, -half_width + k as f64 * h];
                    values.push(norm3(p) - radius);
                }
            }
        }
        SdfSamples { n, half_width, values }
    }
}

/// Reference obstacle `T₀`, expressed in unit-cell coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "lowercase")]
pub enum Obstacle {
    /// No obstacle at all; only meaningful to exercise degenerate paths.
    None,
    /// Ball of the given radius centred at the origin.
    Ball(f64),
    /// Axis-aligned cube of the given half-width centred at the origin.
    Cube(f64),
    Sdf(SdfSamples),
}

impl Obstacle {
    pub fn contains(&self, y: [f64; 3]) -> bool {
        match self {
            Obstacle::None => false,
            Obstacle::Ball(r) => y[0] * y[0] + y[1] * y[1] + y[2] * y[2] < r * r,
            Obstacle::Cube(w) => y.iter().all(|c| c.abs() < *w),
            Obstacle::Sdf(s) => s.sample(y) < 0.0,
        }
    }

    /// Radius of the smallest origin-centred ball containing the obstacle.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Obstacle::None => 0.0,
            Obstacle::Ball(r) => *r,
            Obstacle::Cube(w) => w * 3f64.sqrt(),
            Obstacle::Sdf(s) => {
                let n = s.n;
                let mut rmax: f64 = 0.0;
                for k in 0..n {
                    for j in 0..n {
                        for i in 0..n {
                            if s.values[i + n * (j + n * k)] <= 0.0 {
                                rmax = rmax.max(norm3([s.node(i), s.node(j), s.node(k)]));
                            }
                        }
                    }
                }
                rmax
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Obstacle::None => true,
            Obstacle::Ball(r) | Obstacle::Cube(r) => *r <= 0.0,
            Obstacle::Sdf(s) => s.values.iter().all(|v| *v >= 0.0),
        }
    }

    /// Analytic volume where available.
    pub fn volume(&self) -> Option<f64> {
        match self {
            Obstacle::None => Some(0.0),
            Obstacle::Ball(r) => Some(4.0 / 3.0 * std::f64::consts::PI * r.powi(3)),
            Obstacle::Cube(w) => Some(8.0 * w.powi(3)),
            Obstacle::Sdf(_) => None,
        }
    }

    /// Whether the shape is invariant under the three coordinate reflections.
    pub fn is_reflection_symmetric(&self) -> bool {
        matches!(self, Obstacle::None | Obstacle::Ball(_) | Obstacle::Cube(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Obstacle::Ball(r) | Obstacle::Cube(r) if !(r.is_finite() && *r >= 0.0) => {
                return Err(Error::InvalidConfig(format!("obstacle size {r} must be ≥ 0")));
            }
            Obstacle::Sdf(s) if s.n < 2 || s.values.len() != s.n.pow(3) || s.half_width <= 0.0 => {
                return Err(Error::InvalidConfig("sdf samples need n ≥ 2, n³ values and a positive half-width".into()));
            }
            _ => {}
        }
        let r = self.bounding_radius();
        if r > OBSTACLE_BOUND + 1e-12 {
            return Err(Error::ObstacleTooLarge(r));
        }
        Ok(())
    }
}

/// Macroscopic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    /// Unit torus `(ℝ/ℤ)³`.
    Torus3,
    /// Box `(0, side₀) × (0, side₁) × (0, side₂)` with walls.
    Box3 { side: [f64; 3] },
}

impl DomainKind {
    pub fn sides(&self) -> [f64; 3] {
        match self {
            DomainKind::Torus3 => [1.0; 3],
            DomainKind::Box3 { side } => *side,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, DomainKind::Torus3)
    }
}

/// Geometric ground truth of a perforated domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerforationConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub obstacle: Obstacle,
    pub domain: DomainKind,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    1.0
}

/// Hole size `a_ε = ε^α` and Poincaré scale `σ_ε = ε^{(3-α)/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub a_eps: f64,
    pub sigma_eps: f64,
}

impl PerforationConfig {
    pub fn torus(epsilon: f64, alpha: f64, obstacle: Obstacle) -> Self {
        PerforationConfig { epsilon, alpha, obstacle, domain: DomainKind::Torus3, mu: 1.0 }
    }

    /// Number of ε-cells per unit length when the torus tiling applies.
    pub fn cells_per_unit(&self) -> Option<usize> {
        let m = 1.0 / self.epsilon;
        let r = m.round();
        ((m - r).abs() < 1e-9 * m.max(1.0)).then_some(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 3.0) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::EpsilonOutOfRange(self.epsilon));
        }
        match &self.domain {
            DomainKind::Torus3 => {
                let half = 1.0 / (2.0 * self.epsilon);
                if (half - half.round()).abs() > 1e-9 * half {
                    return Err(Error::TorusTiling(self.epsilon));
                }
            }
            DomainKind::Box3 { side } => {
                if side.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::InvalidConfig(format!("box sides {side:?} must be positive")));
                }
            }
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidConfig(format!("viscosity {} must be positive", self.mu)));
        }
        self.obstacle.validate()?;
        let radius = self.epsilon.powf(self.alpha) * self.obstacle.bounding_radius();
        let limit = self.epsilon / 4.0;
        if radius >= limit {
            return Err(Error::HoleTooLarge { radius, limit });
        }
        Ok(())
    }

    pub fn scales(&self) -> Scales {
        Scales { a_eps: self.epsilon.powf(self.alpha), sigma_eps: self.epsilon.powf((3.0 - self.alpha) / 2.0) }
    }
}

/// Validates the configuration and returns `(a_ε, σ_ε)`.
pub fn derive_scales(config: &PerforationConfig) -> Result<Scales> {
    config.validate()?;
    Ok(config.scales())
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(eps: f64, alpha: f64) -> PerforationConfig {
        PerforationConfig::torus(eps, alpha, Obstacle::Ball(0.1))
    }

    #[test]
    fn scales_follow_the_power_laws() {
        let s = derive_scales(&cfg(0.25, 2.0)).unwrap();
        assert!((s.a_eps - 1.0 / 16.0).abs() < 1e-15);
        assert!((s.sigma_eps - 0.5).abs() < 1e-15);

        let s = derive_scales(&cfg(0.125, 1.5)).unwrap();
        assert!((s.a_eps - 0.044194).abs() < 1e-5);
        assert!((s.sigma_eps - 0.210224).abs() < 1e-5);
        assert!(s.a_eps < 1.0 && s.sigma_eps < 1.0);
    }

    #[test]
    fn alpha_must_be_strictly_inside() {
        for a in [1.0, 3.0, 0.5, 3.5] {
            let err = derive_scales(&cfg(0.25, a)).unwrap_err();
            assert!(err.to_string().contains("alpha out of range"), "{err}");
        }
    }

    #[test]
    fn torus_tiling_rejects_odd_cells() {
        let err = derive_scales(&cfg(1.0 / 3.0, 2.0)).unwrap_err();
        assert!(err.to_string().contains("(2ε)⁻¹ not integer"));
        let mut c = cfg(1.0 / 3.0, 2.0);
        c.domain = DomainKind::Box3 { side: [1.0; 3] };
        assert!(derive_scales(&c).is_ok());
    }

    #[test]
    fn obstacle_containment() {
        let c = PerforationConfig::torus(0.25, 2.0, Obstacle::Ball(0.3));
        assert!(matches!(c.validate(), Err(Error::ObstacleTooLarge(_))));
        // a cube of half-width 1/8 has its corners outside B(0, 1/8)
        let c = PerforationConfig::torus(0.25, 2.0, Obstacle::Cube(0.125));
        assert!(c.validate().is_err());
        let c = PerforationConfig::torus(0.25, 2.0, Obstacle::Cube(0.07));
        assert!(c.validate().is_ok());
        let sdf = SdfSamples::ball(0.1, 9, 0.15);
        assert!(Obstacle::Sdf(sdf.clone()).validate().is_ok());
        assert!(Obstacle::Sdf(sdf.clone()).contains([0.05, 0.0, 0.0]));
        assert!(!Obstacle::Sdf(sdf).contains([0.12, 0.0, 0.0]));
        assert!(Obstacle::Sdf(SdfSamples::ball(0.14, 9, 0.15)).validate().is_err());
    }

    #[test]
    fn config_json_shape() {
        let c = PerforationConfig {
            epsilon: 0.25,
            alpha: 2.0,
            obstacle: Obstacle::Ball(0.1),
            domain: DomainKind::Box3 { side: [1.0, 2.0, 1.0] },
            mu: 1.5,
        };
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(v["obstacle"]["kind"], "ball");
        assert_eq!(v["obstacle"]["param"], 0.1);
        assert_eq!(v["domain"]["kind"], "box3");
        assert_eq!(v["domain"]["side"][1], 2.0);
        let back: PerforationConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }
}
