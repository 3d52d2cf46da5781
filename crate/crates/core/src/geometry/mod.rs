//! Perforated-domain geometry: configuration, hole lattices, grids and masks.

pub mod config;
pub mod grid;
pub mod masks;

pub use config::{derive_scales, DomainKind, Obstacle, PerforationConfig, Scales, SdfSamples, OBSTACLE_BOUND};
pub use grid::{Axis, AxisMetric, Boundary, StaggeredGrid};
pub use masks::{build_perforation, rasterize, rasterize_with, HoleSet, Masks, RasterOptions};
