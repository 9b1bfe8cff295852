//! Gaussian process regression: the exact closed-form posterior as oracle,
//! and two doubly stochastic approximations (posterior mean via square-loss
//! training with ν = σ²/n, posterior variance via per-test-point functions
//! or the quadratic-memory variance operator).
//!
//! On the delegation constant: the trainer minimizes the expectation-form
//! objective E[(f(x)−y)²]/2 + (ν/2)‖f‖², whose fixed point is
//! K(K + nνI)⁻¹y. That equals the posterior mean k*ᵀ(K + σ²I)⁻¹y exactly
//! when ν = σ²/n, matching the σ²/n decay in the variance-operator
//! recursions and recovering the closed form at n = 1.

use ndarray::{Array2, ArrayView2};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{exact_kernel, featurize, sample_block, KernelSpec};
use crate::linalg::{cholesky_in_place, solve_lower, solve_lower_transpose};
use crate::loss::LossSpec;
use crate::stream::{derive_salted, salt};
use crate::trainer::{train, Model, TrainConfig};

/// Guard for the dense solve.
const MAX_CLOSED_FORM_N: usize = 1 << 14;
/// Quadratic-memory cap for the variance operator.
pub const OPERATOR_MAX_T: usize = 4096;

/// Exact posterior: mean k*ᵀ(K+σ²I)⁻¹y, variance k** − k*ᵀ(K+σ²I)⁻¹k*.
pub fn closed_form_posterior(
    x: &[f64],
    n: usize,
    y: &[f64],
    xstar: &[f64],
    m: usize,
    kernel: &KernelSpec<f64>,
    sigma2: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    if n == 0 || n > MAX_CLOSED_FORM_N {
        return Err(Error::InvalidParameter(format!(
            "closed form requires 1 <= n <= {MAX_CLOSED_FORM_N}, got {n}"
        )));
    }
    if y.len() != n || x.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let d = x.len() / n;
    if xstar.len() != m * d {
        return Err(Error::DimensionMismatch {
            expected: m * d,
            got: xstar.len(),
        });
    }

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = exact_kernel(kernel, &x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d])?;
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
        gram[i * n + i] += sigma2;
    }
    cholesky_in_place(&mut gram, n)?;

    // w = (K + σ²I)⁻¹ y
    let mut w = y.to_vec();
    solve_lower(&gram, n, &mut w, 1);
    solve_lower_transpose(&gram, n, &mut w, 1);

    // K*: n×m cross-kernel, row-major.
    let mut kstar = vec![0.0; n * m];
    for j in 0..n {
        for i in 0..m {
            kstar[j * m + i] = exact_kernel(
                kernel,
                &x[j * d..(j + 1) * d],
                &xstar[i * d..(i + 1) * d],
            )?;
        }
    }
    let mut means = vec![0.0; m];
    for j in 0..n {
        for i in 0..m {
            means[i] += kstar[j * m + i] * w[j];
        }
    }

    // L·V = K*, var_i = k** − ‖V column i‖².
    solve_lower(&gram, n, &mut kstar, m);
    let mut vars = vec![0.0; m];
    for i in 0..m {
        let xs = &xstar[i * d..(i + 1) * d];
        let mut v = exact_kernel(kernel, xs, xs)?;
        for j in 0..n {
            v -= kstar[j * m + i] * kstar[j * m + i];
        }
        vars[i] = v.max(0.0);
    }
    Ok((means, vars))
}

/// Posterior-mean estimation: square-loss doubly stochastic training with
/// ν = σ²/n (the config's ν is overridden).
pub fn ds_posterior_mean(
    data: &Dataset,
    mut config: TrainConfig,
    kernel: KernelSpec<f64>,
    sigma2: f64,
) -> Result<Model> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    config.nu = sigma2 / data.n as f64;
    train(data, config, kernel, LossSpec::Square)
}

/// Doubly stochastic variance-operator state: Â_t = Σ_{i≤j} θ_ij
/// φ_{ω_i}(·) ⊗ φ_{ω'_j}(·) with scalar (r = 1) paired feature streams.
/// Memory grows as Θ(t²).
#[derive(Debug, Clone)]
pub struct VarianceOperatorState {
    kernel: KernelSpec<f64>,
    dim: usize,
    base_seed: u64,
    sigma2: f64,
    /// Dataset size n in the (σ²/n) decay.
    n: usize,
    t: usize,
    /// Column j (0-based) holds θ_{ij} for i = 0..=j.
    theta: Vec<Vec<f64>>,
    /// Cached φ'_{ω'_j}(x_j)-stream features are regenerated on demand;
    /// only the coefficients persist.
    _private: (),
}

impl VarianceOperatorState {
    pub fn new(
        kernel: KernelSpec<f64>,
        dim: usize,
        base_seed: u64,
        sigma2: f64,
        n: usize,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(sigma2 > 0.0) || n == 0 || dim == 0 {
            return Err(Error::InvalidParameter(
                "sigma2 > 0, n >= 1, dim >= 1 required".into(),
            ));
        }
        Ok(Self {
            kernel,
            dim,
            base_seed,
            sigma2,
            n,
            t: 0,
            theta: Vec::new(),
            _private: (),
        })
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    /// θ_{ij} (0-based, i ≤ j).
    pub fn theta(&self, i: usize, j: usize) -> f64 {
        self.theta[j][i]
    }

    /// Scalar feature φ_{ω_j}(x) from the unprimed (salted) or primed
    /// stream.
    fn feature(&self, j: usize, x: &[f64], primed: bool) -> Result<f64> {
        let seed = if primed {
            self.base_seed ^ salt::FEATURES_PRIME
        } else {
            self.base_seed
        };
        let block = sample_block(&self.kernel, self.dim, 1, seed, j as u64)?;
        Ok(featurize(&block, &self.kernel, x, 1)?[0])
    }

    /// One Appendix-style recursion step: new column from pre-decay θ,
    /// then the (1 − (σ²/n)γ_t) decay, then the diagonal entry.
    pub fn step(&mut self, x_t: &[f64], gamma_t: f64) -> Result<()> {
        if x_t.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x_t.len(),
            });
        }
        if self.t >= OPERATOR_MAX_T {
            return Err(Error::InvalidParameter(format!(
                "variance operator capped at t <= {OPERATOR_MAX_T} (Θ(t²) memory)"
            )));
        }
        let t = self.t; // 0-based index of the new column
        let phi_prime_t = self.feature(t, x_t, true)?;
        let phi_t = self.feature(t, x_t, false)?;

        // θ_it = -γ_t Σ_{j≥i}^{t-1} θ_ij φ'_j(x_t) · φ'_t(x_t), from the
        // pre-decay values.
        let mut col = vec![0.0; t + 1];
        if t > 0 {
            let mut phi_prime: Vec<f64> = Vec::with_capacity(t);
            for j in 0..t {
                phi_prime.push(self.feature(j, x_t, true)?);
            }
            for i in 0..t {
                let mut s = 0.0;
                for j in i..t {
                    s += self.theta[j][i] * phi_prime[j];
                }
                col[i] = -gamma_t * s * phi_prime_t;
            }
        }
        // Decay all existing entries.
        let decay = 1.0 - (self.sigma2 / self.n as f64) * gamma_t;
        for column in &mut self.theta {
            for v in column.iter_mut() {
                *v *= decay;
            }
        }
        col[t] = gamma_t * phi_t * phi_prime_t;
        self.theta.push(col);
        self.t = t + 1;
        Ok(())
    }

    /// ⟨k(x*,·), Â k(x*,·)⟩ ≈ Σ_{i≤j} θ_ij φ_{ω_i}(x*) φ_{ω'_j}(x*).
    pub fn evaluate(&self, xstar: &[f64]) -> Result<f64> {
        let mut phi = Vec::with_capacity(self.t);
        let mut phi_prime = Vec::with_capacity(self.t);
        for j in 0..self.t {
            phi.push(self.feature(j, xstar, false)?);
            phi_prime.push(self.feature(j, xstar, true)?);
        }
        let mut acc = 0.0;
        for j in 0..self.t {
            for i in 0..=j {
                acc += self.theta[j][i] * phi[i] * phi_prime[j];
            }
        }
        Ok(acc)
    }

    /// Posterior variance estimate at x*, clamped to [0, k(x*,x*)].
    pub fn variance(&self, xstar: &[f64]) -> Result<f64> {
        let prior = exact_kernel(&self.kernel, xstar, xstar)?;
        Ok((prior - self.evaluate(xstar)?).clamp(0.0, prior))
    }
}

/// Result of the per-test-point variance method.
#[derive(Debug, Clone)]
pub struct VarianceRun {
    /// Final variance estimates, clamped to [0, k(x*,x*)].
    pub variances: Vec<f64>,
    /// How many estimates the final clamp touched.
    pub clamp_count: usize,
    /// (iteration, clamped variances) at each eval_schedule entry.
    pub checkpoints: Vec<(usize, Vec<f64>)>,
}

/// Per-test-point variance method: train one square-loss function per test
/// point with targets y_j = k(x*_i, x_j) and ν = σ²/n, all m functions
/// sharing the same feature blocks and batch schedule; the variance at x*_i
/// is k(x*_i, x*_i) − f_i(x*_i).
///
/// The m functions are trained jointly as one multi-output loop so each
/// feature block is sampled once; per-iteration cost is two gemms.
pub fn ds_variance_testpoints(
    data: &Dataset,
    xstar: &[f64],
    m: usize,
    config: &TrainConfig,
    kernel: &KernelSpec<f64>,
    sigma2: f64,
) -> Result<VarianceRun> {
    config.validate()?;
    kernel.validate()?;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let (n, d) = (data.n, data.d);
    if n == 0 || xstar.len() != m * d || m == 0 {
        return Err(Error::DimensionMismatch {
            expected: m * d,
            got: xstar.len(),
        });
    }
    let r = config.block_size;
    let b = config.batch_size;
    let nu = sigma2 / n as f64;

    // Targets Y[j][i] = k(x*_i, x_j) and prior variances k(x*_i, x*_i).
    let mut targets = Array2::<f64>::zeros((n, m));
    for j in 0..n {
        for i in 0..m {
            targets[[j, i]] =
                exact_kernel(kernel, &xstar[i * d..(i + 1) * d], data.row(j))?;
        }
    }
    let mut prior = vec![0.0; m];
    for i in 0..m {
        let xs = &xstar[i * d..(i + 1) * d];
        prior[i] = exact_kernel(kernel, xs, xs)?;
    }

    let mut stream = derive_salted(config.base_seed, salt::DATA, 0);
    let mut fvals = Array2::<f64>::zeros((n, m));
    // f_i(x*_i) tracked directly; only the diagonal matters.
    let mut diag = vec![0.0; m];
    let mut checkpoints = Vec::new();
    let mut next_ckpt = config.eval_schedule.iter().copied().peekable();

    let clamped = |diag: &[f64]| -> Vec<f64> {
        diag.iter()
            .zip(&prior)
            .map(|(&f, &p)| (p - f).clamp(0.0, p))
            .collect()
    };

    for t in 1..=config.iterations {
        let gamma = config.theta / t as f64;
        let decay = 1.0 - gamma * nu;
        let idx: Vec<usize> = (0..b).map(|_| stream.below(n as u64) as usize).collect();

        let block = sample_block(kernel, d, r, config.base_seed, (t - 1) as u64)?;
        let mut bx = Vec::with_capacity(b * d);
        for &i in &idx {
            bx.extend_from_slice(data.row(i));
        }
        let phi_batch = featurize(&block, kernel, &bx, b)?;
        let phi_batch = ArrayView2::from_shape((b, r), &phi_batch).unwrap();

        // α (m×r) = -(γ/b) residualᵀ · Φ_batch
        let mut resid = Array2::<f64>::zeros((b, m));
        for (row, &i) in idx.iter().enumerate() {
            for cc in 0..m {
                resid[[row, cc]] = fvals[[i, cc]] - targets[[i, cc]];
            }
        }
        let alpha = resid.t().dot(&phi_batch) * (-gamma / b as f64); // m×r

        // f ← decay·f + Φ_all·αᵀ on the training set; diagonal update on
        // the test grid.
        let phi_all = featurize(&block, kernel, &data.x, n)?;
        let phi_all = ArrayView2::from_shape((n, r), &phi_all).unwrap();
        let update = phi_all.dot(&alpha.t()); // n×m
        fvals *= decay;
        fvals += &update;

        let phi_star = featurize(&block, kernel, xstar, m)?;
        for i in 0..m {
            let phi_row = &phi_star[i * r..(i + 1) * r];
            let a_row = alpha.row(i);
            let mut acc = 0.0;
            for (av, pv) in a_row.iter().zip(phi_row) {
                acc += av * pv;
            }
            diag[i] = decay * diag[i] + acc;
        }

        if let Some(bad) = fvals.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: t,
                context: format!("non-finite f value {bad} in variance training"),
            });
        }
        while next_ckpt.peek() == Some(&t) {
            next_ckpt.next();
            checkpoints.push((t, clamped(&diag)));
        }
    }

    let variances = clamped(&diag);
    let clamp_count = diag
        .iter()
        .zip(&prior)
        .filter(|(&f, &p)| p - f < 0.0 || p - f > p)
        .count();
    Ok(VarianceRun {
        variances,
        clamp_count,
        checkpoints,
    })
}
