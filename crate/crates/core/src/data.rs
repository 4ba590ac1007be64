//! Binary classification datasets with per-sample uncertainty radii.
//!
//! Features are stored densely in row-major order. Sample `i` keeps index `i`
//! through every transformation in this module.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, Neumaier};

/// One labelled sample with its uncertainty radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: i8,
    pub radius: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: i8, radius: f64) -> Self {
        Sample {
            features,
            label,
            radius,
        }
    }

    pub fn view(&self) -> SampleView<'_> {
        SampleView {
            features: &self.features,
            label: self.label,
            radius: self.radius,
        }
    }
}

/// Borrowed view of a sample, either standalone or inside a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    pub features: &'a [f64],
    pub label: i8,
    pub radius: f64,
}

impl SampleView<'_> {
    #[inline]
    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

/// Immutable dense dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    rows: Vec<f64>,
    labels: Vec<i8>,
    radii: Vec<f64>,
    row_norms: Vec<f64>,
}

/// Uncertainty radius specification.
#[derive(Debug, Clone, PartialEq)]
pub enum Rho {
    Uniform(f64),
    PerSample(Vec<f64>),
}

/// Per-feature statistics removed by [`Dataset::standardize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    pub std: f64,
}

/// Maps any positive label to +1 and everything else to -1.
pub fn coerce_label(raw: f64) -> i8 {
    if raw > 0.0 {
        1
    } else {
        -1
    }
}

impl Dataset {
    /// Builds a dataset from row-major features.
    pub fn from_parts(dim: usize, rows: Vec<f64>, labels: Vec<i8>, radii: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dataset has no features".into()));
        }
        if rows.len() != n * dim {
            return Err(Error::LengthMismatch {
                expected: n * dim,
                found: rows.len(),
            });
        }
        if radii.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: radii.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&y| y != 1 && y != -1) {
            return Err(Error::InvalidParameter(format!(
                "label of sample {i} is {}, expected -1 or +1",
                labels[i]
            )));
        }
        if let Some(k) = rows.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("feature {} of sample {}", k % dim, k / dim)));
        }
        validate_radii(&radii)?;
        let row_norms = rows.chunks_exact(dim).map(numeric::norm2).collect();
        Ok(Dataset {
            dim,
            rows,
            labels,
            radii,
            row_norms,
        })
    }

    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyInput)?;
        let dim = first.features.len();
        let mut rows = Vec::with_capacity(samples.len() * dim);
        for s in samples {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.features.len(),
                });
            }
            rows.extend_from_slice(&s.features);
        }
        Dataset::from_parts(
            dim,
            rows,
            samples.iter().map(|s| s.label).collect(),
            samples.iter().map(|s| s.radius).collect(),
        )
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        f64::from(self.labels[i])
    }

    #[inline]
    pub fn radius(&self, i: usize) -> f64 {
        self.radii[i]
    }

    /// Cached Euclidean norm of the nominal feature vector.
    #[inline]
    pub fn row_norm(&self, i: usize) -> f64 {
        self.row_norms[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn sample(&self, i: usize) -> SampleView<'_> {
        SampleView {
            features: self.row(i),
            label: self.labels[i],
            radius: self.radii[i],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = SampleView<'_>> + '_ {
        (0..self.n()).map(|i| self.sample(i))
    }

    /// Appends a constant 1.0 feature to every sample. Radii are unchanged,
    /// so the uncertainty ball also covers the constant coordinate.
    pub fn augment_bias(&self) -> Dataset {
        let dim = self.dim + 1;
        let mut rows = Vec::with_capacity(self.n() * dim);
        for i in 0..self.n() {
            rows.extend_from_slice(self.row(i));
            rows.push(1.0);
        }
        Dataset::from_parts(dim, rows, self.labels.clone(), self.radii.clone())
            .expect("augmenting a valid dataset keeps it valid")
    }

    /// Centers every feature and scales it to unit population standard
    /// deviation. Zero-variance features are only centered.
    pub fn standardize(&self) -> Result<(Dataset, Vec<FeatureScale>)> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "standardize needs at least 2 samples, got {n}"
            )));
        }
        let scales: Vec<FeatureScale> = (0..self.dim)
            .map(|j| {
                let mean = numeric::sum((0..n).map(|i| self.row(i)[j])) / n as f64;
                let var = numeric::sum((0..n).map(|i| {
                    let c = self.row(i)[j] - mean;
                    c * c
                })) / n as f64;
                FeatureScale { mean, std: var.sqrt() }
            })
            .collect();
        let mut rows = self.rows.clone();
        for row in rows.chunks_exact_mut(self.dim) {
            for (x, sc) in row.iter_mut().zip(&scales) {
                *x -= sc.mean;
                if sc.std > f64::EPSILON * sc.mean.abs().max(1.0) {
                    *x /= sc.std;
                }
            }
        }
        let ds = Dataset::from_parts(self.dim, rows, self.labels.clone(), self.radii.clone())?;
        Ok((ds, scales))
    }

    /// Returns a copy with the uncertainty radii replaced.
    pub fn with_radii(&self, rho: &Rho) -> Result<Dataset> {
        let radii = match rho {
            Rho::Uniform(r) => vec![*r; self.n()],
            Rho::PerSample(list) => {
                if list.len() != self.n() {
                    return Err(Error::LengthMismatch {
                        expected: self.n(),
                        found: list.len(),
                    });
                }
                list.clone()
            }
        };
        validate_radii(&radii)?;
        Ok(Dataset { radii, ..self.clone() })
    }

    /// Serializes to LIBSVM text. Zero entries are omitted except the last
    /// coordinate, which is always written so the dimension survives a
    /// round trip.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            out.push_str(if self.labels[i] > 0 { "+1" } else { "-1" });
            let row = self.row(i);
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 || j + 1 == self.dim {
                    let _ = write!(out, " {}:{}", j + 1, v);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    match radii.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
        Some(i) => Err(Error::InvalidParameter(format!(
            "radius of sample {i} is {}, expected a finite value >= 0",
            radii[i]
        ))),
        None => Ok(()),
    }
}

/// Parses LIBSVM sparse text (`label idx:val ...`, 1-based increasing
/// indices) into a dense dataset with zero radii.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::Malformed { line, reason };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| malformed(format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(malformed(format!("bad label {label_tok:?}")));
        }
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| malformed(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| malformed(format!("bad index in {tok:?}")))?;
            let val: f64 = val.parse().map_err(|_| malformed(format!("bad value in {tok:?}")))?;
            if idx == 0 || idx <= last {
                return Err(malformed(format!(
                    "indices must be 1-based and strictly increasing, got {idx} after {last}"
                )));
            }
            if !val.is_finite() {
                return Err(malformed(format!("non-finite value in {tok:?}")));
            }
            last = idx;
            row.push((idx, val));
        }
        dim = dim.max(last);
        labels.push(coerce_label(label));
        entries.push(row);
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rows = vec![0.0; labels.len() * dim];
    for (i, row) in entries.iter().enumerate() {
        for &(idx, val) in row {
            rows[i * dim + idx - 1] = val;
        }
    }
    let n = labels.len();
    Dataset::from_parts(dim, rows, labels, vec![0.0; n])
}

/// Parses numeric CSV. `label_column` is 0-based; all other columns become
/// features in their original order.
pub fn parse_csv(text: &str, label_column: usize, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Malformed {
                    line,
                    reason: format!("ragged row: expected {expected_len} fields, found {len}"),
                },
                _ => Error::Malformed {
                    line,
                    reason: e.to_string(),
                },
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Malformed {
                line,
                reason: format!("ragged row: expected {w} fields, found {}", record.len()),
            });
        }
        if label_column >= w {
            return Err(Error::InvalidParameter(format!(
                "label column {label_column} out of range for {w} columns"
            )));
        }
        for (column, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::MalformedCell {
                line,
                column: column + 1,
                reason: format!("non-numeric cell {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::MalformedCell {
                    line,
                    column: column + 1,
                    reason: format!("non-finite cell {cell:?}"),
                });
            }
            if column == label_column {
                labels.push(coerce_label(value));
            } else {
                rows.push(value);
            }
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let dim = width.unwrap_or(1) - 1;
    Dataset::from_parts(dim, rows, labels, vec![0.0; n])
}

/// Reads one nonnegative radius per nonempty line.
pub fn parse_radii(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let r: f64 = l.trim().parse().map_err(|_| Error::Malformed {
                line: k + 1,
                reason: format!("bad radius {:?}", l.trim()),
            })?;
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "line {}: radius {r} must be finite and >= 0",
                    k + 1
                )));
            }
            Ok(r)
        })
        .collect()
}

/// Two isotropic Gaussian classes centred at `±(separation/2)·e₁`.
///
/// Samples alternate +1, -1, +1, ... Draws come from ChaCha8 seeded with
/// `seed`, so output is identical across platforms.
pub fn gen_gaussian(n: usize, d: usize, separation: f64, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("n must be positive and even, got {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    if !(noise_std.is_finite() && noise_std > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise_std must be > 0, got {noise_std}"
        )));
    }
    if !separation.is_finite() {
        return Err(Error::InvalidParameter("separation must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let center = if j == 0 {
                f64::from(label) * separation / 2.0
            } else {
                0.0
            };
            rows.push(center + noise_std * z);
        }
        labels.push(label);
    }
    Dataset::from_parts(d, rows, labels, vec![0.0; n])
}

/// Column means of the dataset features, compensated.
pub fn column_means(ds: &Dataset) -> Vec<f64> {
    (0..ds.dim())
        .map(|j| {
            let acc: Neumaier = (0..ds.n()).map(|i| ds.row(i)[j]).collect();
            acc.value() / ds.n() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libsvm_dense_layout() {
        let ds = parse_libsvm("+1 1:1.0 3:2.0\n-1 2:0.5").unwrap();
        assert_eq!((ds.n(), ds.dim()), (2, 3));
        assert_eq!(ds.row(0), &[1.0, 0.0, 2.0]);
        assert_eq!(ds.row(1), &[0.0, 0.5, 0.0]);
        assert_eq!(ds.labels(), &[1, -1]);
        assert_eq!(ds.radii(), &[0.0, 0.0]);
    }

    #[test]
    fn libsvm_errors() {
        assert!(matches!(parse_libsvm(""), Err(Error::EmptyInput)));
        assert!(matches!(parse_libsvm("\n  \n"), Err(Error::EmptyInput)));
        assert!(matches!(parse_libsvm("1 2:abc"), Err(Error::Malformed { line: 1, .. })));
        assert!(matches!(
            parse_libsvm("1 1:1\n1 3:1 2:1"),
            Err(Error::Malformed { line: 2, .. })
        ));
        assert!(matches!(parse_libsvm("1 0:1"), Err(Error::Malformed { line: 1, .. })));
        assert!(matches!(parse_libsvm("x 1:1"), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn libsvm_label_coercion() {
        let ds = parse_libsvm("0 1:1\n2 1:1\n-3 1:1\n1 1:1").unwrap();
        assert_eq!(ds.labels(), &[-1, 1, -1, 1]);
    }

    #[test]
    fn csv_parsing() {
        let ds = parse_csv("1,2.0,3.0\n-1,0.0,1.0", 0, false).unwrap();
        assert_eq!((ds.n(), ds.dim()), (2, 2));
        assert_eq!(ds.row(0), &[2.0, 3.0]);
        assert_eq!(ds.labels(), &[1, -1]);

        let ds = parse_csv("0,1.0", 0, false).unwrap();
        assert_eq!(ds.labels(), &[-1]);

        let ds = parse_csv("a,b,label\n1,2,1\n3,4,0\n", 2, true).unwrap();
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(ds.labels(), &[1, -1]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv("1,2,3\n1,2", 0, false),
            Err(Error::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("1,2\n1,zz", 0, false),
            Err(Error::MalformedCell { line: 2, column: 2, .. })
        ));
        assert!(matches!(parse_csv("", 0, false), Err(Error::EmptyInput)));
        assert!(parse_csv("1,2", 5, false).is_err());
    }

    #[test]
    fn bias_augmentation() {
        let ds = Dataset::from_samples(&[Sample::new(vec![2.0], 1, 0.1)]).unwrap();
        let aug = ds.augment_bias();
        assert_eq!(aug.row(0), &[2.0, 1.0]);
        assert_eq!(aug.radii(), &[0.1]);
        let twice = aug.augment_bias();
        assert_eq!(twice.row(0), &[2.0, 1.0, 1.0]);

        let ds3 = gen_gaussian(4, 3, 1.0, 1.0, 0).unwrap();
        assert_eq!(ds3.augment_bias().dim(), 4);
    }

    #[test]
    fn standardize_rules() {
        let ds = Dataset::from_samples(&[
            Sample::new(vec![0.0, 5.0], 1, 0.0),
            Sample::new(vec![2.0, 5.0], -1, 0.0),
        ])
        .unwrap();
        let (std_ds, scales) = ds.standardize().unwrap();
        assert_eq!(std_ds.row(0), &[-1.0, 0.0]);
        assert_eq!(std_ds.row(1), &[1.0, 0.0]);
        assert_eq!(scales[0], FeatureScale { mean: 1.0, std: 1.0 });
        assert_eq!(scales[1].std, 0.0);

        let one = Dataset::from_samples(&[Sample::new(vec![1.0], 1, 0.0)]).unwrap();
        assert!(one.standardize().is_err());
    }

    #[test]
    fn standardized_columns_are_centered() {
        let ds = gen_gaussian(200, 5, 3.0, 2.0, 11).unwrap();
        let (s, _) = ds.standardize().unwrap();
        for m in column_means(&s) {
            assert!(m.abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn gaussian_generator() {
        let a = gen_gaussian(50, 4, 2.0, 1.0, 7).unwrap();
        let b = gen_gaussian(50, 4, 2.0, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_gaussian(50, 4, 2.0, 1.0, 8).unwrap();
        assert_ne!(a, c);

        let small = gen_gaussian(4, 2, 1.0, 1.0, 1).unwrap();
        assert_eq!(small.labels().iter().filter(|&&y| y == 1).count(), 2);
        assert_eq!(small.labels().iter().filter(|&&y| y == -1).count(), 2);

        assert!(gen_gaussian(3, 2, 1.0, 1.0, 1).is_err());
        assert!(gen_gaussian(4, 0, 1.0, 1.0, 1).is_err());
        assert!(gen_gaussian(4, 2, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn zero_separation_shares_class_mean() {
        // With no separation, both classes come from the same distribution:
        // the empirical class means of e₁ agree within sampling noise.
        let ds = gen_gaussian(20_000, 1, 0.0, 1.0, 3).unwrap();
        let mean = |label: i8| {
            let v: Vec<f64> = (0..ds.n())
                .filter(|&i| ds.labels()[i] == label)
                .map(|i| ds.row(i)[0])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean(1) - mean(-1)).abs() < 0.06);
    }

    #[test]
    fn radii_assignment() {
        let ds = gen_gaussian(4, 2, 1.0, 1.0, 1).unwrap();
        let r = ds.with_radii(&Rho::Uniform(0.02)).unwrap();
        assert!(r.radii().iter().all(|&x| x == 0.02));
        let z = ds.with_radii(&Rho::Uniform(0.0)).unwrap();
        assert!(z.radii().iter().all(|&x| x == 0.0));
        assert!(ds.with_radii(&Rho::PerSample(vec![-1.0])).is_err());
        assert!(matches!(
            ds.with_radii(&Rho::PerSample(vec![0.1, 0.2])),
            Err(Error::LengthMismatch { expected: 4, found: 2 })
        ));
        assert!(ds.with_radii(&Rho::Uniform(-1.0)).is_err());
        let per = ds.with_radii(&Rho::PerSample(vec![0.0, 0.1, 0.2, 0.3])).unwrap();
        assert_eq!(per.radius(3), 0.3);
    }

    #[test]
    fn radii_file() {
        assert_eq!(parse_radii("0.1\n0.2\n\n0\n").unwrap(), vec![0.1, 0.2, 0.0]);
        assert!(parse_radii("0.1\n-1\n").is_err());
        assert!(matches!(parse_radii("abc"), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn libsvm_keeps_trailing_zero_dimension() {
        let ds = parse_libsvm("1 1:1\n-1 1:2 4:0").unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(parse_libsvm(&ds.to_libsvm()).unwrap(), ds);
    }
}
