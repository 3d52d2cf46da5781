//! Browser bindings: a live Darcy density run, the single-cell Poincaré
//! eigenvalue and a log–log rate fit.
//!
//! The plain functions carry the logic and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use homog_core::darcy::{transport_step, velocity_of, DensityInit, ForceField};
use homog_core::fields::{ScalarField, VectorField};
use homog_core::geometry::{Obstacle, StaggeredGrid};
use homog_core::micro::{cell_eigenvalue, CellGrid, PoincareOptions};
use homog_core::rates::fit_rate;
use wasm_bindgen::prelude::*;

const PRESSURE_TOL: f64 = 1e-8;

/// Gaussian density blob transported by Darcy flow `u = ρAf − A∇p` on the
/// unit torus.
#[wasm_bindgen]
pub struct DarcyBlob {
    grid: StaggeredGrid,
    rho: ScalarField,
    force: VectorField,
    a: [[f64; 3]; 3],
    t: f64,
    mass0: f64,
    cfl: f64,
}

impl DarcyBlob {
    pub fn create(n: usize, amplitude: f64, width: f64, fx: f64, fy: f64, k: f64) -> Result<DarcyBlob, String> {
        if !(4..=64).contains(&n) {
            return Err(format!("grid size {n} outside 4..=64"));
        }
        if !(k > 0.0) {
            return Err(format!("permeability {k} must be positive"));
        }
        let grid = StaggeredGrid::unit_torus(n);
        let rho = DensityInit::Gaussian { center: [0.5; 3], width, amplitude, background: 1.0 }
            .sample(&grid)
            .map_err(|e| e.to_string())?;
        if rho.min() < 0.0 {
            return Err("density must stay non-negative".into());
        }
        let force = ForceField::Constant { value: [fx, fy, 0.0] }.sample(&grid, 0.0);
        let mass0 = rho.integral(&grid);
        Ok(DarcyBlob { grid, rho, force, a: [[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]], t: 0.0, mass0, cfl: 0.0 })
    }

    pub fn advance(&mut self, steps: usize, dt: f64) -> Result<(), String> {
        for _ in 0..steps {
            let v = velocity_of(&self.grid, &self.rho, &self.force, self.a, PRESSURE_TOL).map_err(|e| e.to_string())?;
            let h = 1.0 / self.grid.dims()[0] as f64;
            self.cfl = v.u.max_abs() * dt / h;
            self.rho = transport_step(&self.grid, &self.rho, &v.u, dt).map_err(|e| e.to_string())?;
            self.t += dt;
        }
        Ok(())
    }
}

#[wasm_bindgen]
impl DarcyBlob {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, amplitude: f64, width: f64, fx: f64, fy: f64, k: f64) -> Result<DarcyBlob, JsError> {
        DarcyBlob::create(n, amplitude, width, fx, fy, k).map_err(|e| JsError::new(&e))
    }

    /// Advances `steps` time steps of size `dt`.
    pub fn step(&mut self, steps: usize, dt: f64) -> Result<(), JsError> {
        self.advance(steps, dt).map_err(|e| JsError::new(&e))
    }

    /// Density on the mid plane `z = 1/2`, row-major in `y` then `x`.
    pub fn slice(&self) -> Vec<f64> {
        let n = self.grid.dims();
        let k = n[2] / 2;
        let mut out = Vec::with_capacity(n[0] * n[1]);
        for j in 0..n[1] {
            for i in 0..n[0] {
                out.push(self.rho.data[self.grid.cell_index(i, j, k)]);
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.grid.dims()[0]
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn min(&self) -> f64 {
        self.rho.min()
    }

    pub fn max(&self) -> f64 {
        self.rho.max()
    }

    /// Relative change of the total mass since the start.
    pub fn mass_drift(&self) -> f64 {
        (self.rho.integral(&self.grid) - self.mass0) / self.mass0
    }

    /// CFL number of the last step.
    pub fn cfl(&self) -> f64 {
        self.cfl
    }
}

/// Smallest Dirichlet-on-hole Laplace eigenvalue of the unit periodic cell
/// around a ball, with the capacity estimate `4πr` alongside.
pub fn ball_eigenvalue(radius: f64, half_cells: usize) -> Result<[f64; 2], String> {
    if !(radius > 0.0 && radius < 0.5) {
        return Err(format!("radius {radius} outside (0, 0.5)"));
    }
    if !(8..=48).contains(&half_cells) {
        return Err(format!("resolution {half_cells} outside 8..=48"));
    }
    let opts = PoincareOptions { grid: CellGrid::Octant { half_cells, cells_across: 8.0 }, ..Default::default() };
    let (lambda, _, _) = cell_eigenvalue(&Obstacle::Ball(radius), 1.0, &opts).map_err(|e| e.to_string())?;
    Ok([lambda, 4.0 * std::f64::consts::PI * radius])
}

/// `[λ_min, 4πr]` for a ball of radius `r` in the unit cell.
#[wasm_bindgen(js_name = ballEigenvalue)]
pub fn ball_eigenvalue_js(radius: f64, half_cells: usize) -> Result<Vec<f64>, JsError> {
    ball_eigenvalue(radius, half_cells).map(|v| v.to_vec()).map_err(|e| JsError::new(&e))
}

/// Least-squares fit of `log value = s·log ε + c`; returns `[s, c, R²]`.
pub fn rate_fit(eps: &[f64], values: &[f64]) -> Result<[f64; 3], String> {
    if eps.len() != values.len() {
        return Err(format!("{} step sizes but {} values", eps.len(), values.len()));
    }
    let rows: Vec<(f64, f64)> = eps.iter().copied().zip(values.iter().copied()).collect();
    let r = fit_rate(&rows).map_err(|e| e.to_string())?;
    Ok([r.slope, r.intercept, r.r_squared])
}

#[wasm_bindgen(js_name = rateFit)]
pub fn rate_fit_js(eps: Vec<f64>, values: Vec<f64>) -> Result<Vec<f64>, JsError> {
    rate_fit(&eps, &values).map(|v| v.to_vec()).map_err(|e| JsError::new(&e))
}
