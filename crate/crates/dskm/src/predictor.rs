//! Prediction by feature regeneration, and the binary model file format.
//!
//! A model never stores feature parameters: prediction re-derives each
//! block's stream from `(base_seed, block_index)` and accumulates
//! `f(x) += α_iᵀ φ_{ω_i}(x)` over blocks in index order (fixed reduction
//! order, so results are bit-stable).

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{featurize, sample_block, KernelFamily, KernelSpec};
use crate::loss::LossSpec;
use crate::trainer::Model;

/// Evaluate the last iterate on a row-major batch×d input.
/// Returns batch×C scores row-major (C = 1 except multiclass).
pub fn predict(model: &Model, x: &[f64], batch: usize) -> Result<Vec<f64>> {
    predict_with(model, x, batch, Coefficients::Last)
}

/// Evaluate the averaged iterate; rejected if the model was trained
/// without averaging.
pub fn predict_averaged(model: &Model, x: &[f64], batch: usize) -> Result<Vec<f64>> {
    if model.avg_coeff_blocks.is_none() {
        return Err(Error::InvalidParameter(
            "model was trained without averaging".into(),
        ));
    }
    predict_with(model, x, batch, Coefficients::Averaged)
}

#[derive(Clone, Copy)]
enum Coefficients {
    Last,
    Averaged,
}

fn predict_with(model: &Model, x: &[f64], batch: usize, which: Coefficients) -> Result<Vec<f64>> {
    if x.len() != batch * model.dim {
        return Err(Error::DimensionMismatch {
            expected: batch * model.dim,
            got: x.len(),
        });
    }
    let (r, c) = (model.block_size, model.outputs);
    let mut out = vec![0.0; batch * c];
    if batch == 0 {
        return Ok(out);
    }
    for (i, stored) in model.coeff_blocks.iter().enumerate() {
        let coeffs_scale = match which {
            Coefficients::Last => (stored.as_slice(), model.scale),
            Coefficients::Averaged => (
                model.avg_coeff_blocks.as_ref().unwrap()[i].as_slice(),
                1.0,
            ),
        };
        let (coeffs, scale) = coeffs_scale;
        if coeffs.iter().all(|&v| v == 0.0) || scale == 0.0 {
            continue;
        }
        let block = sample_block(&model.kernel, model.dim, r, model.base_seed, i as u64)?;
        let phi = featurize(&block, &model.kernel, x, batch)?;
        for row in 0..batch {
            let phi_row = &phi[row * r..(row + 1) * r];
            for cc in 0..c {
                let a = &coeffs[cc * r..(cc + 1) * r];
                let mut acc = 0.0;
                for (av, pv) in a.iter().zip(phi_row) {
                    acc += av * pv;
                }
                out[row * c + cc] += scale * acc;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Model file format
//
// magic "DSKM" | u32 version | u8 endianness tag (1 = little endian)
// | kernel spec | loss spec | scalars | coefficient blocks (LE f64)
// | sha256 of everything before it
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"DSKM";
const VERSION: u32 = 1;
const LITTLE_ENDIAN_TAG: u8 = 1;

struct CountingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }
    fn put_u8(&mut self, v: u8) -> Result<()> {
        self.put(&[v])
    }
    fn put_u32(&mut self, v: u32) -> Result<()> {
        self.put(&v.to_le_bytes())
    }
    fn put_u64(&mut self, v: u64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }
    fn put_f64(&mut self, v: f64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }
}

struct HashingReader<R: Read> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> HashingReader<R> {
    fn take(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| Error::ModelFile(format!("truncated model file: {e}")))?;
        self.hasher.update(&*buf);
        Ok(())
    }
    fn take_u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.take(&mut b)?;
        Ok(b[0])
    }
    fn take_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn take_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.take(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn take_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.take(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

fn kernel_tag(f: KernelFamily) -> u8 {
    match f {
        KernelFamily::Gaussian => 0,
        KernelFamily::Laplacian => 1,
        KernelFamily::Cauchy => 2,
        KernelFamily::Hellinger => 3,
        KernelFamily::ArcCosine => 4,
        KernelFamily::PolynomialSketch => 5,
        KernelFamily::Linear => 6,
    }
}

fn kernel_from_tag(tag: u8) -> Result<KernelFamily> {
    Ok(match tag {
        0 => KernelFamily::Gaussian,
        1 => KernelFamily::Laplacian,
        2 => KernelFamily::Cauchy,
        3 => KernelFamily::Hellinger,
        4 => KernelFamily::ArcCosine,
        5 => KernelFamily::PolynomialSketch,
        6 => KernelFamily::Linear,
        _ => return Err(Error::ModelFile(format!("unknown kernel tag {tag}"))),
    })
}

fn loss_tag(l: &LossSpec<f64>) -> (u8, f64, u64) {
    match l {
        LossSpec::Hinge => (0, 0.0, 0),
        LossSpec::SquaredHinge => (1, 0.0, 0),
        LossSpec::Logistic => (2, 0.0, 0),
        LossSpec::MulticlassLogistic { classes } => (3, 0.0, *classes as u64),
        LossSpec::Square => (4, 0.0, 0),
        LossSpec::Huber => (5, 0.0, 0),
        LossSpec::EpsInsensitive { eps } => (6, *eps, 0),
        LossSpec::Quantile { tau } => (7, *tau, 0),
        LossSpec::Novelty => (8, 0.0, 0),
        LossSpec::KlDensityRatio => (9, 0.0, 0),
    }
}

fn loss_from_tag(tag: u8, param: f64, count: u64) -> Result<LossSpec<f64>> {
    Ok(match tag {
        0 => LossSpec::Hinge,
        1 => LossSpec::SquaredHinge,
        2 => LossSpec::Logistic,
        3 => LossSpec::MulticlassLogistic {
            classes: count as usize,
        },
        4 => LossSpec::Square,
        5 => LossSpec::Huber,
        6 => LossSpec::EpsInsensitive { eps: param },
        7 => LossSpec::Quantile { tau: param },
        8 => LossSpec::Novelty,
        9 => LossSpec::KlDensityRatio,
        _ => return Err(Error::ModelFile(format!("unknown loss tag {tag}"))),
    })
}

/// Serialize a model; the round trip is bit-exact.
pub fn save<W: Write>(model: &Model, sink: W) -> Result<()> {
    let mut w = CountingWriter {
        inner: sink,
        hasher: Sha256::new(),
    };
    w.put(MAGIC)?;
    w.put_u32(VERSION)?;
    w.put_u8(LITTLE_ENDIAN_TAG)?;

    let k = &model.kernel;
    w.put_u8(kernel_tag(k.family))?;
    w.put_f64(k.bandwidth)?;
    w.put_u32(k.order)?;
    w.put_u32(k.degree)?;
    w.put_f64(k.bias)?;
    w.put_u64(k.sketch_dim as u64)?;

    let (lt, lp, lc) = loss_tag(&model.loss);
    w.put_u8(lt)?;
    w.put_f64(lp)?;
    w.put_u64(lc)?;

    w.put_u64(model.base_seed)?;
    w.put_f64(model.theta)?;
    w.put_f64(model.nu)?;
    w.put_u64(model.block_size as u64)?;
    w.put_u64(model.dim as u64)?;
    w.put_u64(model.outputs as u64)?;
    w.put_u64(model.iteration_count as u64)?;
    w.put_f64(model.scale)?;
    w.put_u8(model.tau.is_some() as u8)?;
    w.put_f64(model.tau.unwrap_or(0.0))?;
    w.put_u8(model.avg_coeff_blocks.is_some() as u8)?;

    w.put_u64(model.coeff_blocks.len() as u64)?;
    for block in &model.coeff_blocks {
        w.put_u64(block.len() as u64)?;
        for v in block {
            w.put_f64(*v)?;
        }
    }
    if let Some(avg) = &model.avg_coeff_blocks {
        w.put_u64(avg.len() as u64)?;
        for block in avg {
            w.put_u64(block.len() as u64)?;
            for v in block {
                w.put_f64(*v)?;
            }
        }
    }
    let digest = w.hasher.finalize();
    w.inner.write_all(&digest)?;
    Ok(())
}

/// Deserialize a model, verifying version and checksum.
pub fn load<R: Read>(source: R) -> Result<Model> {
    let mut r = HashingReader {
        inner: source,
        hasher: Sha256::new(),
    };
    let mut magic = [0u8; 4];
    r.take(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ModelFile("bad magic (not a model file)".into()));
    }
    let version = r.take_u32()?;
    if version != VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported model version {version} (expected {VERSION})"
        )));
    }
    let endian = r.take_u8()?;
    if endian != LITTLE_ENDIAN_TAG {
        return Err(Error::ModelFile(format!("unknown endianness tag {endian}")));
    }

    let family = kernel_from_tag(r.take_u8()?)?;
    let kernel = KernelSpec {
        family,
        bandwidth: r.take_f64()?,
        order: r.take_u32()?,
        degree: r.take_u32()?,
        bias: r.take_f64()?,
        sketch_dim: r.take_u64()? as usize,
    };
    let (lt, lp, lc) = (r.take_u8()?, r.take_f64()?, r.take_u64()?);
    let loss = loss_from_tag(lt, lp, lc)?;

    let base_seed = r.take_u64()?;
    let theta = r.take_f64()?;
    let nu = r.take_f64()?;
    let block_size = r.take_u64()? as usize;
    let dim = r.take_u64()? as usize;
    let outputs = r.take_u64()? as usize;
    let iteration_count = r.take_u64()? as usize;
    let scale = r.take_f64()?;
    let has_tau = r.take_u8()? != 0;
    let tau_val = r.take_f64()?;
    let has_avg = r.take_u8()? != 0;

    let sane = |n: u64| -> Result<usize> {
        if n > (1u64 << 40) {
            return Err(Error::ModelFile(format!("implausible block count {n}")));
        }
        Ok(n as usize)
    };
    let read_blocks = |r: &mut HashingReader<R>| -> Result<Vec<Vec<f64>>> {
        let count = sane(r.take_u64()?)?;
        let mut blocks = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = sane(r.take_u64()?)?;
            let mut b = Vec::with_capacity(len.min(1 << 20));
            for _ in 0..len {
                b.push(r.take_f64()?);
            }
            blocks.push(b);
        }
        Ok(blocks)
    };
    let coeff_blocks = read_blocks(&mut r)?;
    let avg_coeff_blocks = if has_avg { Some(read_blocks(&mut r)?) } else { None };

    let expected = r.hasher.clone().finalize();
    let mut stored = [0u8; 32];
    r.inner
        .read_exact(&mut stored)
        .map_err(|e| Error::ModelFile(format!("missing checksum: {e}")))?;
    if stored != expected[..] {
        return Err(Error::ModelFile("checksum mismatch (corrupted file)".into()));
    }

    let model = Model {
        kernel,
        loss,
        base_seed,
        theta,
        nu,
        block_size,
        dim,
        outputs,
        iteration_count,
        scale,
        coeff_blocks,
        avg_coeff_blocks,
        tau: has_tau.then_some(tau_val),
    };
    if model.coeff_blocks.len() != model.iteration_count {
        return Err(Error::ModelFile(format!(
            "block count {} does not match iteration count {}",
            model.coeff_blocks.len(),
            model.iteration_count
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_regression;
    use crate::trainer::{train, TrainConfig};

    fn small_model(averaging: bool) -> Model {
        let ds = synth_regression(24, 5, false).unwrap();
        let config = TrainConfig {
            theta: 1.0,
            nu: 0.2,
            batch_size: 4,
            block_size: 3,
            iterations: 12,
            base_seed: 11,
            eval_schedule: vec![],
            averaging,
        };
        train(&ds, config, KernelSpec::gaussian(2.0), LossSpec::Square).unwrap()
    }

    #[test]
    fn empty_model_predicts_zero() {
        let ds = synth_regression(4, 1, false).unwrap();
        let config = TrainConfig {
            theta: 1.0,
            nu: 0.5,
            batch_size: 1,
            block_size: 2,
            iterations: 0,
            base_seed: 1,
            eval_schedule: vec![],
            averaging: false,
        };
        let m = train(&ds, config, KernelSpec::gaussian(1.0), LossSpec::Square).unwrap();
        let p = predict(&m, &ds.x, ds.n).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_is_deterministic() {
        let m = small_model(false);
        let x = [0.3, -1.0, 2.0, 0.5];
        let a = predict(&m, &x, 2).unwrap();
        let b = predict(&m, &x, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_block_matches_hand_dot_product() {
        // r = 2, d = 1: f(x) = scale · (c₀ φ₀(x) + c₁ φ₁(x)).
        let mut m = small_model(false);
        m.coeff_blocks.truncate(1);
        m.iteration_count = 1;
        m.coeff_blocks[0] = vec![0.25, -0.5, 1.5];
        m.scale = 0.8;
        let x = [1.3, -0.2];
        let block = sample_block(&m.kernel, 2, 3, m.base_seed, 0).unwrap();
        let phi = featurize(&block, &m.kernel, &x, 1).unwrap();
        let hand: f64 = 0.8 * (0.25 * phi[0] - 0.5 * phi[1] + 1.5 * phi[2]);
        let got = predict(&m, &x, 1).unwrap()[0];
        assert!((got - hand).abs() < 1e-15);
    }

    #[test]
    fn prediction_matches_tracked_train_values() {
        // The trainer's incremental f values must agree with regeneration-
        // based prediction, which cross-checks the scale trick end to end.
        let ds = synth_regression(16, 8, false).unwrap();
        let config = TrainConfig {
            theta: 2.0,
            nu: 0.6,
            batch_size: 2,
            block_size: 2,
            iterations: 40,
            base_seed: 21,
            eval_schedule: vec![],
            averaging: false,
        };
        let mut tr = crate::trainer::Trainer::new(
            &ds,
            config,
            KernelSpec::gaussian(1.0),
            LossSpec::Square,
        )
        .unwrap();
        tr.run(|_| {}).unwrap();
        let tracked = tr.train_values().to_vec();
        let m = tr.finish();
        let p = predict(&m, &ds.x, ds.n).unwrap();
        for (a, b) in p.iter().zip(&tracked) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn predict_linearity_in_coefficients() {
        let m1 = small_model(false);
        let mut m2 = m1.clone();
        for b in &mut m2.coeff_blocks {
            for v in b.iter_mut() {
                *v *= -0.3;
            }
        }
        let mut msum = m1.clone();
        for (bs, (b1, b2)) in msum
            .coeff_blocks
            .iter_mut()
            .zip(m1.coeff_blocks.iter().zip(&m2.coeff_blocks))
        {
            for (s, (a, b)) in bs.iter_mut().zip(b1.iter().zip(b2)) {
                *s = a + b;
            }
        }
        let x = [0.1, 0.9, -2.0, 0.4];
        let p1 = predict(&m1, &x, 2).unwrap();
        let p2 = predict(&m2, &x, 2).unwrap();
        let ps = predict(&msum, &x, 2).unwrap();
        for i in 0..ps.len() {
            assert!((ps[i] - (p1[i] + p2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn averaged_requires_averaging() {
        let m = small_model(false);
        assert!(predict_averaged(&m, &[0.0, 0.0], 1).is_err());
        let m = small_model(true);
        assert!(predict_averaged(&m, &[0.0, 0.0], 1).is_ok());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = small_model(false);
        assert!(predict(&m, &[0.0; 3], 1).is_err());
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        for averaging in [false, true] {
            let m = small_model(averaging);
            let mut buf = Vec::new();
            save(&m, &mut buf).unwrap();
            let back = load(buf.as_slice()).unwrap();
            assert_eq!(m, back);
            let x = [0.2, 0.7, -1.1, 0.0];
            assert_eq!(predict(&m, &x, 2).unwrap(), predict(&back, &x, 2).unwrap());
        }
    }

    #[test]
    fn corrupted_byte_is_rejected() {
        let m = small_model(false);
        let mut buf = Vec::new();
        save(&m, &mut buf).unwrap();
        let mid = buf.len() / 2;
        buf[mid] ^= 0x40;
        assert!(load(buf.as_slice()).is_err());
    }

    #[test]
    fn truncation_is_rejected() {
        let m = small_model(false);
        let mut buf = Vec::new();
        save(&m, &mut buf).unwrap();
        buf.truncate(buf.len() - 7);
        assert!(load(buf.as_slice()).is_err());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let m = small_model(false);
        let mut buf = Vec::new();
        save(&m, &mut buf).unwrap();
        buf[4] = 99; // version field
        let err = load(buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
