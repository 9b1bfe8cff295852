//! Kernel specifications, seed-addressable random feature blocks, and
//! exact kernel evaluation oracles.
//!
//! A feature block is fully determined by `(base_seed, block_index,
//! KernelSpec, r, d)`: regenerating it yields bit-identical parameters,
//! which is what lets a trained model store only coefficients and seeds.
//!
//! Feature scaling convention: `featurize` output is normalized so that
//! `Φ(x) · Φ(x')ᵀ` over one block is an unbiased estimate of
//! `exact_kernel(x, x')`. For sampled-frequency families that means each
//! feature carries a `1/√r` factor; the tensor sketch is already unbiased
//! without it.

use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stream::{derive_stream, Stream};

/// Supported kernel families.
///
/// `Linear` is the degenerate exact feature map (`φ(x) = x`, `r = d`),
/// used to cross-check the stochastic solvers against plain linear SGD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Laplacian,
    Cauchy,
    Hellinger,
    ArcCosine,
    PolynomialSketch,
    Linear,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::Cauchy => "cauchy",
            KernelFamily::Hellinger => "hellinger",
            KernelFamily::ArcCosine => "arc_cosine",
            KernelFamily::PolynomialSketch => "polynomial_sketch",
            KernelFamily::Linear => "linear",
        }
    }
}

/// Which kernel to use plus its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec<F> {
    pub family: KernelFamily,
    /// Length scale for gaussian/laplacian/cauchy; inputs are divided by it
    /// before applying the unit-scale forms.
    pub bandwidth: F,
    /// Arc-cosine order n; only 0 and 1 are supported.
    pub order: u32,
    /// Polynomial degree p.
    pub degree: u32,
    /// Polynomial bias c, folded in by appending a √c coordinate.
    pub bias: F,
    /// Tensor sketch output dimension.
    pub sketch_dim: usize,
}

impl<F: Real> KernelSpec<F> {
    pub fn gaussian(bandwidth: F) -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth,
            order: 0,
            degree: 1,
            bias: F::zero(),
            sketch_dim: 1,
        }
    }

    pub fn laplacian(bandwidth: F) -> Self {
        Self {
            family: KernelFamily::Laplacian,
            ..Self::gaussian(bandwidth)
        }
    }

    pub fn cauchy(bandwidth: F) -> Self {
        Self {
            family: KernelFamily::Cauchy,
            ..Self::gaussian(bandwidth)
        }
    }

    pub fn hellinger() -> Self {
        Self {
            family: KernelFamily::Hellinger,
            ..Self::gaussian(F::one())
        }
    }

    pub fn arc_cosine(order: u32) -> Self {
        Self {
            family: KernelFamily::ArcCosine,
            order,
            ..Self::gaussian(F::one())
        }
    }

    pub fn polynomial(degree: u32, bias: F, sketch_dim: usize) -> Self {
        Self {
            family: KernelFamily::PolynomialSketch,
            degree,
            bias,
            sketch_dim,
            ..Self::gaussian(F::one())
        }
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            ..Self::gaussian(F::one())
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Gaussian | KernelFamily::Laplacian | KernelFamily::Cauchy => {
                if !(self.bandwidth > F::zero()) || !self.bandwidth.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "{} kernel requires bandwidth > 0, got {}",
                        self.family.name(),
                        self.bandwidth
                    )));
                }
            }
            KernelFamily::ArcCosine => {
                if self.order > 1 {
                    return Err(Error::InvalidParameter(format!(
                        "arc-cosine order must be 0 or 1, got {}",
                        self.order
                    )));
                }
            }
            KernelFamily::PolynomialSketch => {
                if self.degree < 1 {
                    return Err(Error::InvalidParameter("polynomial degree must be >= 1".into()));
                }
                if self.sketch_dim < 1 {
                    return Err(Error::InvalidParameter("sketch_dim must be >= 1".into()));
                }
                if self.bias < F::zero() {
                    return Err(Error::InvalidParameter("polynomial bias must be >= 0".into()));
                }
            }
            KernelFamily::Hellinger | KernelFamily::Linear => {}
        }
        Ok(())
    }

    /// Whether this family uses the √2·cos(ωᵀx + b) feature form.
    fn is_cosine(&self) -> bool {
        matches!(
            self.family,
            KernelFamily::Gaussian | KernelFamily::Laplacian | KernelFamily::Cauchy
        )
    }

    /// Per-feature amplitude so that the product expectation matches the
    /// kernel's value at zero distance. The Cauchy row of the kernel table
    /// has k(x,x) = 2^d, so its features carry a √(2^d) factor.
    fn cosine_amplitude(&self, d: usize) -> F {
        match self.family {
            KernelFamily::Cauchy => {
                F::cast(2.0f64.powi(d as i32 / 2) * if d % 2 == 1 { std::f64::consts::SQRT_2 } else { 1.0 })
            }
            _ => F::one(),
        }
    }
}

/// Per-factor count-sketch tables for the polynomial kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchTables {
    /// `hashes[j][i]`: bucket of input coordinate i under factor j.
    pub hashes: Vec<Vec<usize>>,
    /// `signs[j][i]`: Rademacher sign of coordinate i under factor j.
    pub signs: Vec<Vec<f64>>,
}

/// Materialized parameters of one block of `r` random features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock<F> {
    pub block_index: u64,
    pub r: usize,
    pub d: usize,
    /// ω rows, r×d row-major (cosine and arc-cosine families).
    pub frequencies: Vec<F>,
    /// b offsets in [0, 2π), length r (cosine families).
    pub offsets: Vec<F>,
    /// ±1 entries, r×d row-major (Hellinger).
    pub sign_rows: Vec<F>,
    /// Hash/sign tables (polynomial sketch).
    pub sketch: Option<SketchTables>,
}

/// Sample the feature-block parameters for `(spec, d, r)` at the given
/// stream address. Pure function of its arguments.
pub fn sample_block<F: Real>(
    spec: &KernelSpec<F>,
    d: usize,
    r: usize,
    base_seed: u64,
    block_index: u64,
) -> Result<FeatureBlock<F>> {
    spec.validate()?;
    if d == 0 || r == 0 {
        return Err(Error::InvalidParameter("r >= 1 and d >= 1 required".into()));
    }
    let mut stream = derive_stream(base_seed, block_index);
    let mut block = FeatureBlock {
        block_index,
        r,
        d,
        frequencies: Vec::new(),
        offsets: Vec::new(),
        sign_rows: Vec::new(),
        sketch: None,
    };
    match spec.family {
        KernelFamily::Gaussian | KernelFamily::ArcCosine => {
            block.frequencies = (0..r * d).map(|_| F::cast(stream.normal())).collect();
        }
        KernelFamily::Laplacian => {
            block.frequencies = (0..r * d).map(|_| F::cast(stream.cauchy())).collect();
        }
        KernelFamily::Cauchy => {
            block.frequencies = (0..r * d).map(|_| F::cast(stream.laplace())).collect();
        }
        KernelFamily::Hellinger => {
            block.sign_rows = (0..r * d).map(|_| F::cast(stream.sign())).collect();
        }
        KernelFamily::PolynomialSketch => {
            if r != spec.sketch_dim {
                return Err(Error::InvalidParameter(format!(
                    "polynomial sketch blocks must have r = sketch_dim ({}), got {}",
                    spec.sketch_dim, r
                )));
            }
            // One hash/sign pair per polynomial factor, shared between
            // train- and test-time featurization of the same block.
            let width = d + 1; // trailing slot for the √c bias coordinate
            let p = spec.degree as usize;
            let mut hashes = Vec::with_capacity(p);
            let mut signs = Vec::with_capacity(p);
            for _ in 0..p {
                hashes.push((0..width).map(|_| stream.below(r as u64) as usize).collect());
                signs.push((0..width).map(|_| stream.sign()).collect());
            }
            block.sketch = Some(SketchTables { hashes, signs });
        }
        KernelFamily::Linear => {
            if r != d {
                return Err(Error::InvalidParameter(format!(
                    "linear feature map requires r = d ({d}), got {r}"
                )));
            }
        }
    }
    if spec.is_cosine() {
        block.offsets = (0..r)
            .map(|_| F::cast(stream.uniform() * 2.0 * std::f64::consts::PI))
            .collect();
    }
    Ok(block)
}

/// Featurize a batch: row i, column j holds feature j of `X` row i, scaled
/// so the block's feature products are unbiased for the kernel.
pub fn featurize<F: Real + FftNum>(
    block: &FeatureBlock<F>,
    spec: &KernelSpec<F>,
    x: &[F],
    batch: usize,
) -> Result<Vec<F>> {
    if x.len() != batch * block.d {
        return Err(Error::DimensionMismatch {
            expected: batch * block.d,
            got: x.len(),
        });
    }
    let (r, d) = (block.r, block.d);
    let mut out = vec![F::zero(); batch * r];
    match spec.family {
        KernelFamily::Gaussian | KernelFamily::Laplacian | KernelFamily::Cauchy => {
            let inv_bw = F::one() / spec.bandwidth;
            let amp = spec.cosine_amplitude(d) * F::cast(std::f64::consts::SQRT_2)
                / F::cast(r as f64).sqrt();
            for (row, chunk) in x.chunks_exact(d).enumerate() {
                let dst = &mut out[row * r..(row + 1) * r];
                for j in 0..r {
                    let w = &block.frequencies[j * d..(j + 1) * d];
                    let mut acc = block.offsets[j];
                    for (wi, xi) in w.iter().zip(chunk) {
                        acc = acc + *wi * *xi * inv_bw;
                    }
                    dst[j] = amp * acc.cos();
                }
            }
        }
        KernelFamily::Hellinger => {
            let amp = F::one() / F::cast(r as f64).sqrt();
            let mut sqrt_x = vec![F::zero(); d];
            for (row, chunk) in x.chunks_exact(d).enumerate() {
                for (s, v) in sqrt_x.iter_mut().zip(chunk) {
                    if *v < F::zero() {
                        return Err(Error::InvalidParameter(
                            "hellinger kernel requires nonnegative inputs".into(),
                        ));
                    }
                    *s = v.sqrt();
                }
                let dst = &mut out[row * r..(row + 1) * r];
                for j in 0..r {
                    let signs = &block.sign_rows[j * d..(j + 1) * d];
                    let mut acc = F::zero();
                    for (si, xi) in signs.iter().zip(&sqrt_x) {
                        acc = acc + *si * *xi;
                    }
                    dst[j] = amp * acc;
                }
            }
        }
        KernelFamily::ArcCosine => {
            let amp = F::cast(std::f64::consts::SQRT_2) / F::cast(r as f64).sqrt();
            for (row, chunk) in x.chunks_exact(d).enumerate() {
                let dst = &mut out[row * r..(row + 1) * r];
                for j in 0..r {
                    let w = &block.frequencies[j * d..(j + 1) * d];
                    let mut u = F::zero();
                    for (wi, xi) in w.iter().zip(chunk) {
                        u = u + *wi * *xi;
                    }
                    dst[j] = if u > F::zero() {
                        if spec.order == 0 {
                            amp
                        } else {
                            amp * u
                        }
                    } else {
                        F::zero()
                    };
                }
            }
        }
        KernelFamily::PolynomialSketch => {
            let mut ctx = SketchContext::new(r);
            for (row, chunk) in x.chunks_exact(d).enumerate() {
                let s = tensor_sketch_with(chunk, spec, block, &mut ctx)?;
                out[row * r..(row + 1) * r].copy_from_slice(&s);
            }
        }
        KernelFamily::Linear => {
            out.copy_from_slice(x);
        }
    }
    Ok(out)
}

/// FFT plan cache for repeated sketches of the same dimension.
struct SketchContext<F: FftNum> {
    planner: FftPlanner<F>,
    len: usize,
}

impl<F: FftNum> SketchContext<F> {
    fn new(len: usize) -> Self {
        Self {
            planner: FftPlanner::new(),
            len,
        }
    }
}

/// Count-sketch composition for the polynomial kernel: p independent count
/// sketches of x (with √c appended) combined by circular convolution.
pub fn tensor_sketch<F: Real + FftNum>(
    x: &[F],
    spec: &KernelSpec<F>,
    block: &FeatureBlock<F>,
) -> Result<Vec<F>> {
    let mut ctx = SketchContext::new(block.r);
    tensor_sketch_with(x, spec, block, &mut ctx)
}

fn tensor_sketch_with<F: Real + FftNum>(
    x: &[F],
    spec: &KernelSpec<F>,
    block: &FeatureBlock<F>,
    ctx: &mut SketchContext<F>,
) -> Result<Vec<F>> {
    if spec.family != KernelFamily::PolynomialSketch {
        return Err(Error::UnsupportedFamily(format!(
            "tensor_sketch requires polynomial_sketch, got {}",
            spec.family.name()
        )));
    }
    if x.len() != block.d {
        return Err(Error::DimensionMismatch {
            expected: block.d,
            got: x.len(),
        });
    }
    let tables = block
        .sketch
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("block has no sketch tables".into()))?;
    let dim = block.r;
    debug_assert_eq!(ctx.len, dim);
    let sqrt_bias = spec.bias.sqrt();
    let p = spec.degree as usize;

    let count_sketch = |factor: usize| -> Vec<F> {
        let mut cs = vec![F::zero(); dim];
        let (h, s) = (&tables.hashes[factor], &tables.signs[factor]);
        for (i, xi) in x.iter().enumerate() {
            cs[h[i]] = cs[h[i]] + F::cast(s[i]) * *xi;
        }
        let bias_slot = x.len();
        cs[h[bias_slot]] = cs[h[bias_slot]] + F::cast(s[bias_slot]) * sqrt_bias;
        cs
    };

    if p == 1 {
        return Ok(count_sketch(0));
    }

    // Multiply the sketches in the Fourier domain; the product of spectra
    // is the circular convolution of the sketches.
    let fft = ctx.planner.plan_fft_forward(dim);
    let mut acc: Vec<Complex<F>> = count_sketch(0)
        .into_iter()
        .map(|v| Complex::new(v, F::zero()))
        .collect();
    fft.process(&mut acc);
    for factor in 1..p {
        let mut buf: Vec<Complex<F>> = count_sketch(factor)
            .into_iter()
            .map(|v| Complex::new(v, F::zero()))
            .collect();
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a = *a * *b;
        }
    }
    let ifft = ctx.planner.plan_fft_inverse(dim);
    ifft.process(&mut acc);
    let scale = F::one() / F::cast(dim as f64);
    Ok(acc.into_iter().map(|c| c.re * scale).collect())
}

/// Closed-form kernel value after bandwidth scaling.
pub fn exact_kernel<F: Real>(spec: &KernelSpec<F>, x: &[F], y: &[F]) -> Result<F> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    spec.validate()?;
    let k = match spec.family {
        KernelFamily::Gaussian => {
            let inv_bw = F::one() / spec.bandwidth;
            let mut sq = F::zero();
            for (a, b) in x.iter().zip(y) {
                let diff = (*a - *b) * inv_bw;
                sq = sq + diff * diff;
            }
            (-sq / F::TWO).exp()
        }
        KernelFamily::Laplacian => {
            let inv_bw = F::one() / spec.bandwidth;
            let mut l1 = F::zero();
            for (a, b) in x.iter().zip(y) {
                l1 = l1 + ((*a - *b) * inv_bw).abs();
            }
            (-l1).exp()
        }
        KernelFamily::Cauchy => {
            let inv_bw = F::one() / spec.bandwidth;
            let mut prod = F::one();
            for (a, b) in x.iter().zip(y) {
                let diff = (*a - *b) * inv_bw;
                prod = prod * F::TWO / (F::one() + diff * diff);
            }
            prod
        }
        KernelFamily::Hellinger => {
            let mut acc = F::zero();
            for (a, b) in x.iter().zip(y) {
                if *a < F::zero() || *b < F::zero() {
                    return Err(Error::InvalidParameter(
                        "hellinger kernel requires nonnegative inputs".into(),
                    ));
                }
                acc = acc + (*a * *b).sqrt();
            }
            acc
        }
        KernelFamily::ArcCosine => {
            let nx = norm2(x);
            let ny = norm2(y);
            if nx == F::zero() || ny == F::zero() {
                // Features vanish on the zero vector (step(0) = 0).
                return Ok(F::zero());
            }
            let cos_theta = (dot(x, y) / (nx * ny)).max(-F::one()).min(F::one());
            let theta = cos_theta.acos();
            let j = match spec.order {
                0 => F::PI - theta,
                1 => theta.sin() + (F::PI - theta) * cos_theta,
                _ => unreachable!("validated above"),
            };
            let pow = |v: F| if spec.order == 0 { F::one() } else { v };
            pow(nx) * pow(ny) * j / F::PI
        }
        KernelFamily::PolynomialSketch => {
            let base = dot(x, y) + spec.bias;
            let mut acc = F::one();
            for _ in 0..spec.degree {
                acc = acc * base;
            }
            acc
        }
        KernelFamily::Linear => dot(x, y),
    };
    Ok(k)
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm2<F: Real>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Median of Euclidean distances over up to `pair_budget` uniformly sampled
/// distinct pairs. The caller applies any multiplier (0.1x, 4x).
pub fn median_heuristic<F: Real>(
    x: &[F],
    n: usize,
    d: usize,
    pair_budget: usize,
    stream: &mut Stream,
) -> Result<F> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "median heuristic needs at least 2 points".into(),
        ));
    }
    if x.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            got: x.len(),
        });
    }
    let total_pairs = n * (n - 1) / 2;
    let count = pair_budget.min(total_pairs).max(1);
    let mut dists: Vec<F> = Vec::with_capacity(count);
    for _ in 0..count {
        let i = stream.below(n as u64) as usize;
        let mut j = stream.below((n - 1) as u64) as usize;
        if j >= i {
            j += 1;
        }
        let (a, b) = (&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
        let mut sq = F::zero();
        for (ai, bi) in a.iter().zip(b) {
            let diff = *ai - *bi;
            sq = sq + diff * diff;
        }
        dists.push(sq.sqrt());
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    Ok(if m % 2 == 1 {
        dists[m / 2]
    } else {
        (dists[m / 2 - 1] + dists[m / 2]) / F::TWO
    })
}
