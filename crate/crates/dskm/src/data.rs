//! Dataset ingestion (libsvm, CSV), the synthetic regression generator,
//! and seeded train/holdout splitting.
//!
//! Sparse libsvm rows are densified on read: every supported feature map
//! consumes dense vectors, and desk-scale dimensions (d ≤ 1e5) make that
//! safe.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::loss::Target;
use crate::stream::{derive_salted, salt};

/// Documented densification limit.
pub const MAX_DIMENSION: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    /// ±1 labels.
    Binary,
    Multiclass { classes: usize },
}

/// An in-memory dense dataset. Rows are row-major n×d; targets are kept
/// as f64 and interpreted through [`Dataset::target`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize, task: Task) -> Result<Self> {
        if d == 0 || d > MAX_DIMENSION {
            return Err(Error::InvalidParameter(format!(
                "dimension {d} outside 1..={MAX_DIMENSION}"
            )));
        }
        if x.len() % d != 0 || x.len() / d != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len() * d,
                got: x.len(),
            });
        }
        let ds = Dataset {
            n: y.len(),
            x,
            y,
            d,
            task,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if let Some(v) = self.x.iter().chain(&self.y).find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry {v} in dataset"
            )));
        }
        match self.task {
            Task::Binary => {
                if self.y.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return Err(Error::TargetMismatch(
                        "binary task requires ±1 labels".into(),
                    ));
                }
            }
            Task::Multiclass { classes } => {
                if self
                    .y
                    .iter()
                    .any(|&y| y < 0.0 || y.fract() != 0.0 || y as usize >= classes)
                {
                    return Err(Error::TargetMismatch(format!(
                        "multiclass task requires integer labels in 0..{classes}"
                    )));
                }
            }
            Task::Regression => {}
        }
        Ok(())
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Target of row i in the form the losses consume.
    #[inline]
    pub fn target(&self, i: usize) -> Target<f64> {
        match self.task {
            Task::Regression => Target::Real(self.y[i]),
            Task::Binary => Target::Sign(self.y[i]),
            Task::Multiclass { .. } => Target::Class(self.y[i] as usize),
        }
    }

    /// Reinterpret targets under a different task tag (e.g. treating ±1
    /// labels as regression targets for a square-loss run).
    pub fn with_task(mut self, task: Task) -> Result<Self> {
        self.task = task;
        self.validate()?;
        Ok(self)
    }
}

/// Parse libsvm-format lines: `label idx:val ...` with 1-based, strictly
/// ascending indices. Missing entries are zero; d is the max index seen.
/// The task is Binary when every label is ±1, Regression otherwise.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut sparse: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut d = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut parts = line.split_ascii_whitespace();
        let Some(label_tok) = parts.next() else {
            continue; // blank line
        };
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad label {label_tok:?}"),
        })?;
        let mut entries = Vec::new();
        let mut last_idx = 0usize;
        for tok in parts {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad index {idx_s:?}"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad value {val_s:?}"),
            })?;
            if idx == 0 || idx <= last_idx {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("indices must be 1-based ascending, got {idx}"),
                });
            }
            last_idx = idx;
            entries.push((idx, val));
            d = d.max(idx);
        }
        sparse.push((label, entries));
    }
    if sparse.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "empty input".into(),
        });
    }
    // All-empty rows still need a dimension to densify into.
    let d = d.max(1);
    let n = sparse.len();
    let mut x = vec![0.0; n * d];
    let mut y = Vec::with_capacity(n);
    for (i, (label, entries)) in sparse.into_iter().enumerate() {
        y.push(label);
        for (idx, val) in entries {
            x[i * d + (idx - 1)] = val;
        }
    }
    let task = if y.iter().all(|&l| l == 1.0 || l == -1.0) {
        Task::Binary
    } else {
        Task::Regression
    };
    Dataset::new(x, y, d, task)
}

/// Write libsvm format (all entries, including zeros, for lossless round
/// trips; `{}` formatting is shortest-round-trip in Rust).
pub fn write_libsvm<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    for i in 0..ds.n {
        write!(w, "{}", ds.y[i])?;
        for (j, v) in ds.row(i).iter().enumerate() {
            write!(w, " {}:{}", j + 1, v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parse CSV with header `y,x1,...,xd`.
pub fn parse_csv<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or(Error::Parse {
        line: 0,
        message: "empty input".into(),
    })?;
    let cols = header.split(',').count();
    if cols < 2 || !header.starts_with('y') {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header y,x1,...,xd, got {header:?}"),
        });
    }
    let d = cols - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let lineno = lineno + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut parse_next = |what: &str| -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("missing {what}"),
                })?
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad {what}"),
                })
        };
        y.push(parse_next("label")?);
        for j in 0..d {
            x.push(parse_next(&format!("x{}", j + 1))?);
        }
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {cols} fields"),
            });
        }
    }
    if y.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let task = if y.iter().all(|&l| l == 1.0 || l == -1.0) {
        Task::Binary
    } else {
        Task::Regression
    };
    Dataset::new(x, y, d, task)
}

/// Write CSV with header `y,x1,...,xd`.
pub fn write_csv<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    write!(w, "y")?;
    for j in 0..ds.d {
        write!(w, ",x{}", j + 1)?;
    }
    writeln!(w)?;
    for i in 0..ds.n {
        write!(w, "{}", ds.y[i])?;
        for v in ds.row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Noiseless regression surface: cos(0.5π‖x‖) exp(-0.1π‖x‖).
pub fn synth_target(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    (0.5 * std::f64::consts::PI * norm).cos() * (-0.1 * std::f64::consts::PI * norm).exp()
}

/// Synthetic regression dataset: x uniform on [-5,5]², y the surface above
/// plus 0.1·N(0,1) noise unless `noiseless`.
pub fn synth_regression(n: usize, seed: u64, noiseless: bool) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let d = 2;
    let mut s = derive_salted(seed, salt::SYNTH, 0);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = [10.0 * s.uniform() - 5.0, 10.0 * s.uniform() - 5.0];
        let mut t = synth_target(&xi);
        if !noiseless {
            t += 0.1 * s.normal();
        }
        x.extend_from_slice(&xi);
        y.push(t);
    }
    Dataset::new(x, y, d, Task::Regression)
}

/// Seeded disjoint partition into (train, holdout); the holdout gets
/// round(n·fraction) rows, clamped so both sides are nonempty.
pub fn split(ds: &Dataset, holdout_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction {holdout_fraction} outside (0,1)"
        )));
    }
    if ds.n < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 rows to split".into(),
        ));
    }
    let k = ((ds.n as f64 * holdout_fraction).round() as usize).clamp(1, ds.n - 1);
    let mut idx: Vec<usize> = (0..ds.n).collect();
    let mut s = derive_salted(seed, salt::SPLIT, 0);
    // Fisher-Yates
    for i in (1..ds.n).rev() {
        let j = s.below(i as u64 + 1) as usize;
        idx.swap(i, j);
    }
    let take = |ids: &[usize]| -> Dataset {
        let mut x = Vec::with_capacity(ids.len() * ds.d);
        let mut y = Vec::with_capacity(ids.len());
        for &i in ids {
            x.extend_from_slice(ds.row(i));
            y.push(ds.y[i]);
        }
        Dataset {
            x,
            y,
            n: ids.len(),
            d: ds.d,
            task: ds.task,
        }
    };
    Ok((take(&idx[k..]), take(&idx[..k])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn libsvm_basic_row() {
        let ds = parse_libsvm(Cursor::new("1 1:0.5 3:2.0\n")).unwrap();
        assert_eq!(ds.d, 3);
        assert_eq!(ds.row(0), &[0.5, 0.0, 2.0]);
        assert_eq!(ds.y[0], 1.0);
        assert_eq!(ds.task, Task::Binary);
    }

    #[test]
    fn libsvm_empty_feature_list() {
        let ds = parse_libsvm(Cursor::new("-1\n1 1:2\n")).unwrap();
        assert_eq!(ds.row(0), &[0.0]);
        assert_eq!(ds.y[0], -1.0);
    }

    #[test]
    fn libsvm_rejects_nonascending_indices() {
        let err = parse_libsvm(Cursor::new("1 2:1 1:1\n")).unwrap_err();
        match err {
            crate::error::Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn libsvm_round_trip_is_lossless() {
        let ds = synth_regression(17, 5, false).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        let back = parse_libsvm(Cursor::new(buf)).unwrap();
        assert_eq!(ds.x, back.x);
        assert_eq!(ds.y, back.y);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let ds = synth_regression(23, 9, false).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = parse_csv(Cursor::new(buf)).unwrap();
        assert_eq!(ds.x, back.x);
        assert_eq!(ds.y, back.y);
        assert_eq!(back.d, 2);
    }

    #[test]
    fn synth_known_values() {
        assert_eq!(synth_target(&[0.0, 0.0]), 1.0);
        let v = synth_target(&[2.0, 0.0]);
        assert!((v - (-(-0.2 * std::f64::consts::PI).exp())).abs() < 1e-12);
        assert!((v + 0.533488).abs() < 1e-5);
    }

    #[test]
    fn synth_targets_in_expected_band() {
        let ds = synth_regression(5000, 3, true).unwrap();
        for (&y, i) in ds.y.iter().zip(0..) {
            assert!(y >= -1.0 - 1e-12 && y <= 1.3, "y[{i}] = {y}");
            assert!(ds.row(i).iter().all(|&v| (-5.0..=5.0).contains(&v)));
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_regression(64, 11, false).unwrap();
        let b = synth_regression(64, 11, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_is_disjoint_seeded_partition() {
        let ds = synth_regression(10, 2, false).unwrap();
        let (tr, ho) = split(&ds, 0.5, 7).unwrap();
        assert_eq!((tr.n, ho.n), (5, 5));
        let (tr2, ho2) = split(&ds, 0.5, 7).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(ho, ho2);
        // union preserves the multiset of targets
        let mut all: Vec<f64> = tr.y.iter().chain(&ho.y).copied().collect();
        let mut orig = ds.y.clone();
        all.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(all, orig);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = synth_regression(10, 2, false).unwrap();
        assert!(split(&ds, 0.0, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn task_validation() {
        let ds = Dataset::new(vec![1.0, 2.0], vec![0.0, 2.0], 1, Task::Regression).unwrap();
        assert!(ds.clone().with_task(Task::Binary).is_err());
        assert!(ds
            .clone()
            .with_task(Task::Multiclass { classes: 3 })
            .is_ok());
        assert!(ds.with_task(Task::Multiclass { classes: 2 }).is_err());
    }
}
