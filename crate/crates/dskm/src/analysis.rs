//! Empirical verification harness: convergence slopes, Monte Carlo kernel
//! error curves, and coefficient-bound audits.

use crate::error::{Error, Result};
use crate::kernel::{exact_kernel, featurize, sample_block, KernelSpec};
use crate::trainer::coefficient_weights;

/// Mean squared pointwise error of `f` against `reference` (same layout).
pub fn mean_squared_error(f: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(f.len(), reference.len());
    assert!(!f.is_empty());
    f.iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / f.len() as f64
}

/// Error series over recorded checkpoints: for each (t, f values on a fixed
/// grid), the mean squared pointwise error against the reference values.
pub fn convergence_curve(
    checkpoints: &[(usize, Vec<f64>)],
    reference: &[f64],
) -> Result<Vec<(usize, f64)>> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidParameter("no checkpoints recorded".into()));
    }
    let mut out = Vec::with_capacity(checkpoints.len());
    for (t, f) in checkpoints {
        if f.len() != reference.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.len(),
                got: f.len(),
            });
        }
        out.push((*t, mean_squared_error(f, reference)));
    }
    Ok(out)
}

/// Least-squares slope of log(value) vs log(t), excluding a burn-in prefix
/// (fraction of the series, default 0.1 via [`fit_loglog_slope`]).
pub fn fit_loglog_slope_with_burn_in(series: &[(usize, f64)], burn_in: f64) -> Result<f64> {
    let skip = (series.len() as f64 * burn_in).floor() as usize;
    let pts = &series[skip.min(series.len().saturating_sub(2))..];
    if pts.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "need at least 5 points after burn-in, have {}",
            pts.len()
        )));
    }
    if pts.iter().any(|&(t, v)| t == 0 || !(v > 0.0)) {
        return Err(Error::InvalidParameter(
            "log-log fit requires positive t and values".into(),
        ));
    }
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, v) in pts {
        let x = (t as f64).ln();
        let y = v.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// [`fit_loglog_slope_with_burn_in`] at the default 10% burn-in.
pub fn fit_loglog_slope(series: &[(usize, f64)]) -> Result<f64> {
    fit_loglog_slope_with_burn_in(series, 0.1)
}

/// For each r in `r_values` (ascending), the max over `pairs` of
/// |Monte Carlo kernel estimate − exact_kernel|. Each pair is (x, x').
pub fn mc_kernel_error(
    spec: &KernelSpec<f64>,
    pairs: &[(Vec<f64>, Vec<f64>)],
    r_values: &[usize],
    base_seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if !r_values.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter("r_values must be ascending".into()));
    }
    let mut out = Vec::with_capacity(r_values.len());
    for (ri, &r) in r_values.iter().enumerate() {
        let mut spec_r = spec.clone();
        if matches!(spec.family, crate::kernel::KernelFamily::PolynomialSketch) {
            spec_r.sketch_dim = r;
        }
        let mut worst = 0.0f64;
        for (pi, (x, y)) in pairs.iter().enumerate() {
            let d = x.len();
            // Fresh block address per (r, pair) so errors are independent.
            let block = sample_block(&spec_r, d, r, base_seed, (ri * pairs.len() + pi) as u64)?;
            let fx = featurize(&block, &spec_r, x, 1)?;
            let fy = featurize(&block, &spec_r, y, 1)?;
            let est: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
            let exact = exact_kernel(&spec_r, x, y)?;
            worst = worst.max((est - exact).abs());
        }
        out.push((r, worst));
    }
    Ok(out)
}

/// Worst ratio max_i |a_t^i|·t/θ over 1 ≤ t ≤ t_max. Coefficient-bound
/// audits expect ≤ 1 + 1e-12. Rejects schedules outside θν ∈ (1,2) ∪ Z₊.
pub fn coefficient_bound_audit(theta: f64, nu: f64, t_max: usize) -> Result<f64> {
    let tn = theta * nu;
    let is_integer = tn.fract() == 0.0 && tn >= 1.0;
    if !(is_integer || (1.0 < tn && tn < 2.0)) {
        return Err(Error::InvalidParameter(format!(
            "θν = {tn} outside (1,2) ∪ positive integers"
        )));
    }
    let mut worst: f64 = 0.0;
    for t in 1..=t_max {
        let w = coefficient_weights(t, theta, nu);
        let max_a = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(max_a * t as f64 / theta);
    }
    Ok(worst)
}
