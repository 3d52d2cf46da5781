//! Transform-based solvers on uniform grids.

use std::sync::Arc;

use rustdct::{Dct2, Dct3, DctPlanner, Dst2, Dst3};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Boundary condition of one axis for cell-centred unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisBc {
    Periodic,
    /// Zero normal derivative at the walls.
    Neumann,
    /// Zero value at the walls (half a cell from the first centre).
    Dirichlet,
}

/// In-place 3D complex FFT, unnormalized in both directions.
pub struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.map(|n| planner.plan_fft_forward(n));
        let inv = dims.map(|n| planner.plan_fft_inverse(n));
        Fft3 { dims, fwd, inv }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [n0, n1, n2] = self.dims;
        // axis 0: contiguous lines
        plans[0].process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); n1.max(n2)];
        for k in 0..n2 {
            for i in 0..n0 {
                let l = &mut line[..n1];
                for j in 0..n1 {
                    l[j] = data[i + n0 * (j + n1 * k)];
                }
                plans[1].process(l);
                for j in 0..n1 {
                    data[i + n0 * (j + n1 * k)] = l[j];
                }
            }
        }
        for j in 0..n1 {
            for i in 0..n0 {
                let l = &mut line[..n2];
                for k in 0..n2 {
                    l[k] = data[i + n0 * (j + n1 * k)];
                }
                plans[2].process(l);
                for k in 0..n2 {
                    data[i + n0 * (j + n1 * k)] = l[k];
                }
            }
        }
    }
}

/// Per-axis eigenvalues of the 1D second-difference operator `-δ²/h²`.
pub fn eigenvalues_1d(n: usize, h: f64, bc: AxisBc) -> Vec<f64> {
    let s = 4.0 / (h * h);
    let pi = std::f64::consts::PI;
    (0..n)
        .map(|k| {
            let t = match bc {
                AxisBc::Periodic => pi * k as f64 / n as f64,
                AxisBc::Neumann => pi * k as f64 / (2 * n) as f64,
                AxisBc::Dirichlet => pi * (k + 1) as f64 / (2 * n) as f64,
            };
            s * t.sin().powi(2)
        })
        .collect()
}

enum Transform {
    Fft(Fft3),
    Real {
        dct2: [Option<Arc<dyn Dct2<f64>>>; 3],
        dct3: [Option<Arc<dyn Dct3<f64>>>; 3],
        dst2: [Option<Arc<dyn Dst2<f64>>>; 3],
        dst3: [Option<Arc<dyn Dst3<f64>>>; 3],
    },
}

/// Solves `(Σ_a c_a (-δ²_a) + shift) x = b` for cell-centred data on a
/// uniform grid (strong form, per unit volume). Zero modes are dropped.
pub struct SpectralPoisson {
    dims: [usize; 3],
    bcs: [AxisBc; 3],
    lam: [Vec<f64>; 3],
    coef: [f64; 3],
    shift: f64,
    transform: Transform,
}

impl SpectralPoisson {
    pub fn new(dims: [usize; 3], h: [f64; 3], bcs: [AxisBc; 3], coef: [f64; 3], shift: f64) -> Self {
        let periodic = bcs.iter().filter(|b| **b == AxisBc::Periodic).count();
        assert!(periodic == 0 || periodic == 3, "mixed periodic and wall axes are not supported");
        let lam = [0, 1, 2].map(|a| eigenvalues_1d(dims[a], h[a], bcs[a]));
        let transform = if periodic == 3 {
            Transform::Fft(Fft3::new(dims))
        } else {
            let mut planner = DctPlanner::new();
            let mut dct2: [Option<Arc<dyn Dct2<f64>>>; 3] = [None, None, None];
            let mut dct3: [Option<Arc<dyn Dct3<f64>>>; 3] = [None, None, None];
            let mut dst2: [Option<Arc<dyn Dst2<f64>>>; 3] = [None, None, None];
            let mut dst3: [Option<Arc<dyn Dst3<f64>>>; 3] = [None, None, None];
            for a in 0..3 {
                match bcs[a] {
                    AxisBc::Neumann => {
                        dct2[a] = Some(planner.plan_dct2(dims[a]));
                        dct3[a] = Some(planner.plan_dct3(dims[a]));
                    }
                    AxisBc::Dirichlet => {
                        dst2[a] = Some(planner.plan_dst2(dims[a]));
                        dst3[a] = Some(planner.plan_dst3(dims[a]));
                    }
                    AxisBc::Periodic => unreachable!(),
                }
            }
            Transform::Real { dct2, dct3, dst2, dst3 }
        };
        SpectralPoisson { dims, bcs, lam, coef, shift, transform }
    }

    fn symbol(&self, i: usize, j: usize, k: usize) -> f64 {
        self.coef[0] * self.lam[0][i] + self.coef[1] * self.lam[1][j] + self.coef[2] * self.lam[2][k] + self.shift
    }

    fn smallest_positive(&self) -> f64 {
        let mut best = f64::INFINITY;
        let [n0, n1, n2] = self.dims;
        let floor = 1e-12
            * (self.coef.iter().sum::<f64>() * self.lam[0].iter().cloned().fold(0.0, f64::max) + self.shift.abs());
        for k in 0..n2.min(2) {
            for j in 0..n1.min(2) {
                for i in 0..n0.min(2) {
                    let s = self.symbol(i, j, k);
                    if s > floor {
                        best = best.min(s);
                    }
                }
            }
        }
        best
    }

    pub fn solve(&self, b: &[f64], out: &mut [f64]) {
        let [n0, n1, n2] = self.dims;
        let floor = 1e-12 * self.smallest_positive();
        match &self.transform {
            Transform::Fft(fft) => {
                let mut data: Vec<Complex64> = b.iter().map(|v| Complex64::new(*v, 0.0)).collect();
                fft.forward(&mut data);
                for k in 0..n2 {
                    for j in 0..n1 {
                        for i in 0..n0 {
                            let s = self.symbol(i, j, k);
                            let idx = i + n0 * (j + n1 * k);
                            if s <= floor {
                                data[idx] = Complex64::new(0.0, 0.0);
                            } else {
                                data[idx] /= s;
                            }
                        }
                    }
                }
                fft.inverse(&mut data);
                for (o, v) in out.iter_mut().zip(&data) {
                    *o = v.re;
                }
            }
            Transform::Real { dct2, dct3, dst2, dst3 } => {
                out.copy_from_slice(b);
                for a in 0..3 {
                    apply_lines(out, self.dims, a, |line| match self.bcs[a] {
                        AxisBc::Neumann => dct2[a].as_ref().unwrap().process_dct2(line),
                        _ => dst2[a].as_ref().unwrap().process_dst2(line),
                    });
                }
                for k in 0..n2 {
                    for j in 0..n1 {
                        for i in 0..n0 {
                            let s = self.symbol(i, j, k);
                            let idx = i + n0 * (j + n1 * k);
                            if s <= floor {
                                out[idx] = 0.0;
                            } else {
                                out[idx] /= s;
                            }
                        }
                    }
                }
                for a in 0..3 {
                    let scale = 2.0 / self.dims[a] as f64;
                    apply_lines(out, self.dims, a, |line| {
                        match self.bcs[a] {
                            AxisBc::Neumann => dct3[a].as_ref().unwrap().process_dct3(line),
                            _ => dst3[a].as_ref().unwrap().process_dst3(line),
                        }
                        line.iter_mut().for_each(|v| *v *= scale);
                    });
                }
            }
        }
    }
}

fn apply_lines<F: FnMut(&mut [f64])>(data: &mut [f64], dims: [usize; 3], axis: usize, mut f: F) {
    let [n0, n1, n2] = dims;
    match axis {
        0 => {
            for line in data.chunks_mut(n0) {
                f(line);
            }
        }
        1 => {
            let mut line = vec![0.0; n1];
            for k in 0..n2 {
                for i in 0..n0 {
                    for j in 0..n1 {
                        line[j] = data[i + n0 * (j + n1 * k)];
                    }
                    f(&mut line);
                    for j in 0..n1 {
                        data[i + n0 * (j + n1 * k)] = line[j];
                    }
                }
            }
        }
        _ => {
            let mut line = vec![0.0; n2];
            for j in 0..n1 {
                for i in 0..n0 {
                    for k in 0..n2 {
                        line[k] = data[i + n0 * (j + n1 * k)];
                    }
                    f(&mut line);
                    for k in 0..n2 {
                        data[i + n0 * (j + n1 * k)] = line[k];
                    }
                }
            }
        }
    }
}
