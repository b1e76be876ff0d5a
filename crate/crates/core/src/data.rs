//! Multi-label datasets: validation, seeded splitting and summary statistics.
//!
//! Splits and synthetic data draw from `ChaCha8Rng::seed_from_u64(seed)`
//! (`rand_chacha` 0.9) and index shuffles use the Fisher-Yates shuffle of
//! `rand::seq::SliceRandom` (`rand` 0.9). Both are portable, so the same seed
//! yields the same partition on every platform.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Features plus the complete binary label matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelDataset<T> {
    features: Array2<T>,
    labels: Array2<u8>,
    label_names: Vec<String>,
}

pub fn default_label_names(num_labels: usize) -> Vec<String> {
    (0..num_labels).map(|j| format!("label_{j}")).collect()
}

impl<T: Scalar> MultiLabelDataset<T> {
    /// Builds a dataset, checking that labels are binary, features finite,
    /// `n >= 1`, `d >= 1` and `L >= 2`.
    pub fn new(
        features: Array2<T>,
        labels: Array2<u8>,
        label_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        let (n_labels_rows, num_labels) = labels.dim();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no instances".into()));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("feature dimension must be >= 1".into()));
        }
        if num_labels < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 labels, got {num_labels}"
            )));
        }
        if n_labels_rows != n {
            return Err(Error::DimensionMismatch {
                context: "label rows",
                expected: n,
                actual: n_labels_rows,
            });
        }
        if let Some(((i, j), v)) = labels.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidDataset(format!(
                "label entry ({i}, {j}) is {v}, expected 0 or 1"
            )));
        }
        if let Some(((i, j), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "feature entry ({i}, {j}) is not finite"
            )));
        }
        let label_names = match label_names {
            Some(names) if names.len() != num_labels => {
                return Err(Error::DimensionMismatch {
                    context: "label names",
                    expected: num_labels,
                    actual: names.len(),
                })
            }
            Some(names) => names,
            None => default_label_names(num_labels),
        };
        Ok(Self {
            features,
            labels,
            label_names,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.ncols()
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn instance(&self, i: usize) -> ArrayView1<'_, T> {
        self.features.row(i)
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: self.labels.select(Axis(0), indices),
            label_names: self.label_names.clone(),
        }
    }

    /// Per-feature min-max scaling to `[0, 1]`; constant columns map to 0.
    ///
    /// Returns the scaled dataset and the `(min, max)` of each column so the
    /// same transform can be applied to held-out splits.
    pub fn minmax_scaled(&self) -> (Self, Vec<(T, T)>) {
        let ranges: Vec<(T, T)> = self
            .features
            .axis_iter(Axis(1))
            .map(|col| {
                col.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
            })
            .collect();
        (self.apply_minmax(&ranges), ranges)
    }

    pub fn apply_minmax(&self, ranges: &[(T, T)]) -> Self {
        let mut features = self.features.clone();
        for (mut col, &(lo, hi)) in features.axis_iter_mut(Axis(1)).zip(ranges) {
            let span = hi - lo;
            col.mapv_inplace(|v| {
                if span > T::zero() {
                    (v - lo) / span
                } else {
                    T::zero()
                }
            });
        }
        Self {
            features,
            labels: self.labels.clone(),
            label_names: self.label_names.clone(),
        }
    }
}

/// Mean number of positive labels per instance.
pub fn label_cardinality<T: Scalar>(ds: &MultiLabelDataset<T>) -> f64 {
    let positives: usize = ds.labels.iter().map(|&v| v as usize).sum();
    positives as f64 / ds.n() as f64
}

/// Fraction of instances carrying each label.
pub fn label_frequencies<T: Scalar>(ds: &MultiLabelDataset<T>) -> Array1<f64> {
    ds.labels
        .map(|&v| v as f64)
        .mean_axis(Axis(0))
        .expect("dataset has at least one instance")
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train_frac),
            ("val", self.val_frac),
            ("test", self.test_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidSplit(format!(
                    "{name} fraction {f} is outside (0, 1)"
                )));
            }
        }
        let total = self.train_frac + self.val_frac + self.test_frac;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!(
                "fractions sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` instances: floors for val and test,
    /// every leftover instance goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |frac: f64| ((n as f64) * frac + 1e-9).floor() as usize;
        let val = floor(self.val_frac);
        let test = floor(self.test_frac);
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded partition of `0..n`; each part is returned in ascending order.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if n < 10 {
        return Err(Error::InvalidSplit(format!(
            "need at least 10 instances to split, got {n}"
        )));
    }
    let (n_train, n_val, n_test) = spec.sizes(n);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidSplit(format!(
            "{n} instances give an empty split ({n_train}/{n_val}/{n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let take = |range: std::ops::Range<usize>| {
        let mut part = order[range].to_vec();
        part.sort_unstable();
        part
    };
    Ok(SplitIndices {
        train: take(0..n_train),
        val: take(n_train..n_train + n_val),
        test: take(n_train + n_val..n),
    })
}

pub fn split_dataset<T: Scalar>(
    ds: &MultiLabelDataset<T>,
    spec: &SplitSpec,
) -> Result<(MultiLabelDataset<T>, MultiLabelDataset<T>, MultiLabelDataset<T>)> {
    let idx = split_indices(ds.n(), spec)?;
    Ok((ds.select(&idx.train), ds.select(&idx.val), ds.select(&idx.test)))
}

/// Parameters of the bundled synthetic generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub num_labels: usize,
    /// Target mean number of positives per instance.
    pub cardinality: f64,
    /// Probability of flipping each generated label.
    pub label_noise: f64,
    pub seed: u64,
}

/// Linearly generated multi-label data.
///
/// Features are uniform on `[-1, 1]`. Each label is the sign of a random
/// linear score, thresholded at a per-label quantile so that label
/// frequencies average out to `cardinality / L`. Labels then flip with
/// probability `label_noise`. Instances therefore are learnable by a linear
/// model up to the noise level.
pub fn synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<MultiLabelDataset<T>> {
    let SyntheticSpec {
        n,
        d,
        num_labels,
        cardinality,
        label_noise,
        seed,
    } = *spec;
    if n == 0 || d == 0 || num_labels < 2 {
        return Err(Error::InvalidDataset(format!(
            "synthetic spec needs n >= 1, d >= 1, L >= 2 (got {n}, {d}, {num_labels})"
        )));
    }
    if !(cardinality > 0.0 && cardinality < num_labels as f64) {
        return Err(Error::InvalidDataset(format!(
            "cardinality {cardinality} must lie in (0, L)"
        )));
    }
    if !(0.0..0.5).contains(&label_noise) {
        return Err(Error::InvalidDataset(format!(
            "label noise {label_noise} must lie in [0, 0.5)"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..=1.0));
    let directions = Array2::from_shape_fn((num_labels, d), |_| rng.random_range(-1.0..=1.0));
    let scores = features.dot(&directions.t());

    let base_rate = cardinality / num_labels as f64;
    let mut labels = Array2::<u8>::zeros((n, num_labels));
    for j in 0..num_labels {
        // Spread label frequencies around the base rate.
        // At least one positive per label, unless n is too small for the cap.
        let floor = (1.0 / n as f64).min(0.95);
        let rate = (base_rate * rng.random_range(0.5..1.5)).clamp(floor, 0.95);
        let mut col: Vec<f64> = scores.column(j).to_vec();
        col.sort_by(|a, b| b.total_cmp(a));
        let k = ((rate * n as f64).round() as usize).clamp(1, n);
        let cut = col[k - 1];
        for i in 0..n {
            let mut z = scores[[i, j]] >= cut;
            if rng.random_bool(label_noise) {
                z = !z;
            }
            labels[[i, j]] = z as u8;
        }
    }
    MultiLabelDataset::new(features.mapv(T::of), labels, None)
}
