//! Single-layer linear classifier with one sigmoid output per label.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    /// `L x d`.
    pub weights: Array2<T>,
    /// Length `L`.
    pub bias: Array1<T>,
}

impl<T: Scalar> LinearModel<T> {
    /// Weights uniform on `[-1/sqrt(d), 1/sqrt(d)]`, zero bias.
    pub fn init(d: usize, num_labels: usize, seed: u64) -> Self {
        assert!(d >= 1 && num_labels >= 1, "model needs d >= 1 and L >= 1");
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: Array2::from_shape_fn((num_labels, d), |_| {
                T::of(rng.random_range(-bound..=bound))
            }),
            bias: Array1::zeros(num_labels),
        }
    }

    pub fn zeros(d: usize, num_labels: usize) -> Self {
        Self {
            weights: Array2::zeros((num_labels, d)),
            bias: Array1::zeros(num_labels),
        }
    }

    pub fn d(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_labels(&self) -> usize {
        self.weights.nrows()
    }

    /// `n x L` logits for an `n x d` batch.
    pub fn logits(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.ncols() != self.d() {
            return Err(Error::DimensionMismatch {
                context: "feature dimension",
                expected: self.d(),
                actual: x.ncols(),
            });
        }
        let mut out = x.dot(&self.weights.t());
        out += &self.bias;
        Ok(out)
    }

    /// `n x L` label probabilities for an `n x d` batch.
    pub fn predict_probs_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("feature batch"));
        }
        Ok(self.logits(x)?.mapv(sigmoid))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Probabilities for a single instance.
pub fn predict_probs<T: Scalar>(model: &LinearModel<T>, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
    if x.len() != model.d() {
        return Err(Error::DimensionMismatch {
            context: "feature dimension",
            expected: model.d(),
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("feature vector"));
    }
    Ok((model.weights.dot(&x) + &model.bias).mapv(sigmoid))
}

/// `1` where `p >= threshold`.
pub fn predict_labels<T: Scalar>(probs: ArrayView1<'_, T>, threshold: T) -> Array1<u8> {
    probs.mapv(|p| (p >= threshold) as u8)
}

pub fn predict_labels_batch<T: Scalar>(probs: ArrayView2<'_, T>, threshold: T) -> Array2<u8> {
    probs.mapv(|p| (p >= threshold) as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub loss_mode: String,
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// JSON checkpoint: `{d, L, W (row-major), b, metadata}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub d: usize,
    #[serde(rename = "L")]
    pub num_labels: usize,
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
    pub b: Vec<f64>,
    pub metadata: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &LinearModel<T>, metadata: CheckpointMeta) -> Self {
        Self {
            d: model.d(),
            num_labels: model.num_labels(),
            weights: model.weights.iter().map(|v| v.to_f64_lossy()).collect(),
            b: model.bias.iter().map(|v| v.to_f64_lossy()).collect(),
            metadata,
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<LinearModel<T>> {
        if self.weights.len() != self.d * self.num_labels {
            return Err(Error::DimensionMismatch {
                context: "checkpoint weights",
                expected: self.d * self.num_labels,
                actual: self.weights.len(),
            });
        }
        if self.b.len() != self.num_labels {
            return Err(Error::DimensionMismatch {
                context: "checkpoint bias",
                expected: self.num_labels,
                actual: self.b.len(),
            });
        }
        let weights = Array2::from_shape_vec(
            (self.num_labels, self.d),
            self.weights.iter().map(|&v| T::of(v)).collect(),
        )
        .expect("length checked");
        let model = LinearModel {
            weights,
            bias: self.b.iter().map(|&v| T::of(v)).collect(),
        };
        if !model.is_finite() {
            return Err(Error::NonFiniteInput("checkpoint parameters"));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_respects_bound_and_seed() {
        let m: LinearModel<f64> = LinearModel::init(103, 14, 1);
        assert_eq!(m.weights.dim(), (14, 103));
        let bound = 1.0 / 103f64.sqrt();
        assert!(m.weights.iter().all(|w| w.abs() <= bound));
        assert!(m.bias.iter().all(|&b| b == 0.0));
        assert_eq!(m, LinearModel::init(103, 14, 1));
        assert_ne!(m, LinearModel::init(103, 14, 2));

        let tiny: LinearModel<f32> = LinearModel::init(1, 1, 4);
        assert!(tiny.weights[[0, 0]].abs() <= 1.0);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LinearModel::<f64>::zeros(3, 4);
        let p = predict_probs(&m, array![1.0, -2.0, 7.0].view()).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn saturated_bias_does_not_overflow() {
        let mut m = LinearModel::<f64>::zeros(2, 1);
        m.bias[0] = 30.0;
        let p = predict_probs(&m, array![0.0, 0.0].view()).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9 && p[0] < 1.0);
    }

    #[test]
    fn sigmoid_of_ln3() {
        let m = LinearModel {
            weights: array![[1.0f64]],
            bias: array![0.0],
        };
        let p = predict_probs(&m, array![3f64.ln()].view()).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn prediction_errors() {
        let m = LinearModel::<f64>::zeros(2, 1);
        assert!(matches!(
            predict_probs(&m, array![1.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            predict_probs(&m, array![1.0, f64::INFINITY].view()),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(predict_labels(array![0.5f64].view(), 0.5), array![1u8]);
        assert_eq!(predict_labels(array![0.2f64, 0.8].view(), 0.5), array![0u8, 1]);
        assert_eq!(predict_labels(array![0.49999f64].view(), 0.5), array![0u8]);
    }

    #[test]
    fn batch_matches_single_instance() {
        let m: LinearModel<f64> = LinearModel::init(4, 3, 8);
        let x = array![[0.1, 0.2, -0.3, 1.0], [2.0, -1.0, 0.0, 0.5]];
        let batch = m.predict_probs_batch(x.view()).unwrap();
        for i in 0..2 {
            let single = predict_probs(&m, x.row(i)).unwrap();
            for j in 0..3 {
                assert!((batch[[i, j]] - single[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn checkpoint_json_layout() {
        let m = LinearModel {
            weights: array![[1.0f64, 2.0], [3.0, 4.0]],
            bias: array![0.5, -0.5],
        };
        let ck = Checkpoint::from_model(&m, CheckpointMeta::default());
        let v: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        assert_eq!(v["W"], serde_json::json!([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(v["L"], 2);
        let back: LinearModel<f64> = Checkpoint::from_json(&ck.to_json().unwrap())
            .unwrap()
            .to_model()
            .unwrap();
        assert_eq!(back, m);
    }
}
