//! Reference solvers: NORMA (functional SGD with exact kernel evaluations,
//! stores its sampled points) and r-Pegasos (SGD over a fixed block of r
//! random features).
//!
//! Both reuse the trainer's schedule γ_t = θ/t and its seeded batch stream,
//! so comparisons differ only in the function representation.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{exact_kernel, featurize, sample_block, KernelSpec};
use crate::loss::LossSpec;
use crate::stream::{derive_salted, salt};
use crate::trainer::TrainConfig;

/// NORMA model: every sampled training point with its coefficient.
/// Memory grows as Θ(t·b·(d+1)) numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct NormaModel {
    pub kernel: KernelSpec<f64>,
    pub loss: LossSpec<f64>,
    pub dim: usize,
    pub outputs: usize,
    pub iteration_count: usize,
    /// Pending global decay multiplier for all coefficients.
    pub scale: f64,
    /// Stored points, row-major (t·b)×d.
    pub points: Vec<f64>,
    /// Per-point coefficients, (t·b)×C row-major, relative to `scale`.
    pub coeffs: Vec<f64>,
}

impl NormaModel {
    /// Numbers stored: coefficients plus the points themselves.
    pub fn storage_count(&self) -> usize {
        self.points.len() + self.coeffs.len()
    }

    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.dim {
            return Err(Error::DimensionMismatch {
                expected: batch * self.dim,
                got: x.len(),
            });
        }
        let c = self.outputs;
        let mut out = vec![0.0; batch * c];
        let m = self.coeffs.len() / c.max(1);
        for row in 0..batch {
            let xr = &x[row * self.dim..(row + 1) * self.dim];
            for j in 0..m {
                let pj = &self.points[j * self.dim..(j + 1) * self.dim];
                let k = exact_kernel(&self.kernel, pj, xr)?;
                if k == 0.0 {
                    continue;
                }
                for cc in 0..c {
                    out[row * c + cc] += self.scale * self.coeffs[j * c + cc] * k;
                }
            }
        }
        Ok(out)
    }
}

/// Kernel functional SGD with exact evaluations. Same batch sampling and
/// γ_t = θ/t schedule as the doubly stochastic trainer.
pub fn norma_train(
    data: &Dataset,
    config: &TrainConfig,
    kernel: KernelSpec<f64>,
    loss: LossSpec<f64>,
) -> Result<NormaModel> {
    config.validate()?;
    kernel.validate()?;
    loss.validate()?;
    if data.n == 0 {
        return Err(Error::InvalidParameter("dataset is empty".into()));
    }
    let (n, d) = (data.n, data.d);
    let c = loss.outputs();
    let b = config.batch_size;
    let mut stream = derive_salted(config.base_seed, salt::DATA, 0);

    let mut points: Vec<f64> = Vec::new();
    let mut coeffs: Vec<f64> = Vec::new();
    let mut scale = 1.0f64;
    // Incrementally tracked f values on the training set, n×C.
    let mut fvals = vec![0.0; n * c];
    let mut grad = vec![0.0; c];

    for t in 1..=config.iterations {
        let gamma = config.theta / t as f64;
        let idx: Vec<usize> = (0..b).map(|_| stream.below(n as u64) as usize).collect();

        // New per-point coefficients from the current iterate.
        let mut new_coeffs = Vec::with_capacity(b * c);
        for &i in &idx {
            let u = &fvals[i * c..(i + 1) * c];
            loss.loss_grad(u, data.target(i), &mut grad)?;
            for &g in &grad {
                new_coeffs.push(-gamma * g / b as f64);
            }
        }

        // Decay prior coefficients, then append the batch's points.
        let decay = 1.0 - gamma * config.nu;
        scale *= decay;
        if scale == 0.0 {
            coeffs.fill(0.0);
            scale = 1.0;
        } else if scale.abs() < 1e-12 {
            for v in coeffs.iter_mut() {
                *v *= scale;
            }
            scale = 1.0;
        }
        for (row, &i) in idx.iter().enumerate() {
            points.extend_from_slice(data.row(i));
            for cc in 0..c {
                coeffs.push(new_coeffs[row * c + cc] / scale);
            }
        }

        // f ← decay·f + Σ_batch coeff·k(x_batch, ·) over the training set.
        for i in 0..n {
            for v in &mut fvals[i * c..(i + 1) * c] {
                *v *= decay;
            }
        }
        for (row, &i) in idx.iter().enumerate() {
            let xi = data.row(i);
            for j in 0..n {
                let k = exact_kernel(&kernel, xi, data.row(j))?;
                for cc in 0..c {
                    fvals[j * c + cc] += new_coeffs[row * c + cc] * k;
                }
            }
        }
        if let Some(bad) = fvals.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: t,
                context: format!("non-finite f value {bad} in NORMA"),
            });
        }
    }

    Ok(NormaModel {
        kernel,
        loss,
        dim: d,
        outputs: c,
        iteration_count: config.iterations,
        scale,
        points,
        coeffs,
    })
}

/// r-Pegasos model: a single weight vector over one fixed feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct RPegasosModel {
    pub kernel: KernelSpec<f64>,
    pub base_seed: u64,
    pub r: usize,
    pub dim: usize,
    pub outputs: usize,
    /// C×r weights.
    pub w: Vec<f64>,
}

impl RPegasosModel {
    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.dim {
            return Err(Error::DimensionMismatch {
                expected: batch * self.dim,
                got: x.len(),
            });
        }
        let block = sample_block(&self.kernel, self.dim, self.r, self.base_seed, 0)?;
        let phi = featurize(&block, &self.kernel, x, batch)?;
        let c = self.outputs;
        let mut out = vec![0.0; batch * c];
        for row in 0..batch {
            let phi_row = &phi[row * self.r..(row + 1) * self.r];
            for cc in 0..c {
                let wr = &self.w[cc * self.r..(cc + 1) * self.r];
                out[row * c + cc] = wr.iter().zip(phi_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }
}

/// SGD on the fixed r-feature linearization: Pegasos-style with the
/// standard 1/√ν ball projection for the hinge loss, plain regularized SGD
/// otherwise. Shares feature generation with the doubly stochastic solver
/// (block index 0 of the same seed).
pub fn rpegasos_train(
    data: &Dataset,
    r: usize,
    config: &TrainConfig,
    kernel: KernelSpec<f64>,
    loss: LossSpec<f64>,
) -> Result<RPegasosModel> {
    config.validate()?;
    kernel.validate()?;
    loss.validate()?;
    if data.n == 0 {
        return Err(Error::InvalidParameter("dataset is empty".into()));
    }
    let (n, d) = (data.n, data.d);
    let c = loss.outputs();
    let b = config.batch_size;
    let project = matches!(loss, LossSpec::Hinge | LossSpec::SquaredHinge);
    let radius = 1.0 / config.nu.sqrt();

    let block = sample_block(&kernel, d, r, config.base_seed, 0)?;
    let phi_all = featurize(&block, &kernel, &data.x, n)?;
    let mut stream = derive_salted(config.base_seed, salt::DATA, 0);
    let mut w = vec![0.0; c * r];
    let mut grad = vec![0.0; c];

    for t in 1..=config.iterations {
        let gamma = config.theta / t as f64;
        let decay = 1.0 - gamma * config.nu;
        let idx: Vec<usize> = (0..b).map(|_| stream.below(n as u64) as usize).collect();

        // Accumulate the batch-mean loss gradient in feature space.
        let mut step = vec![0.0; c * r];
        for &i in &idx {
            let phi_row = &phi_all[i * r..(i + 1) * r];
            let mut u = vec![0.0; c];
            for cc in 0..c {
                let wr = &w[cc * r..(cc + 1) * r];
                u[cc] = wr.iter().zip(phi_row).map(|(a, b)| a * b).sum();
            }
            loss.loss_grad(&u, data.target(i), &mut grad)?;
            for (cc, &g) in grad.iter().enumerate() {
                if g != 0.0 {
                    let dst = &mut step[cc * r..(cc + 1) * r];
                    for (s, p) in dst.iter_mut().zip(phi_row) {
                        *s += g * p / b as f64;
                    }
                }
            }
        }

        for (wv, sv) in w.iter_mut().zip(&step) {
            *wv = decay * *wv - gamma * sv;
        }
        if project {
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let shrink = radius / norm;
                for wv in w.iter_mut() {
                    *wv *= shrink;
                }
            }
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: t,
                context: format!("non-finite weight {bad} in r-Pegasos"),
            });
        }
    }

    Ok(RPegasosModel {
        kernel,
        base_seed: config.base_seed,
        r,
        dim: d,
        outputs: c,
        w,
    })
}
