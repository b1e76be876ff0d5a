//! Minibatch SGD with weight decay and a step learning-rate schedule.

use std::cmp::Ordering;

use ndarray::{Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conceal::ConcealedDataset;
use crate::error::{Error, Result};
use crate::losses::{
    bce_loss, clplu_risk, LossMode, LossResult, ObservedBatch, ScenarioCounts, ScenarioPreference,
    UnitBatch,
};
use crate::metrics::{evaluate_visible, MetricsReport};
use crate::model::LinearModel;
use crate::scalar::Scalar;

const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// 1-based epochs after which the learning rate is multiplied by
    /// `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub weight_decay: f64,
    pub loss_mode: LossMode,
    pub seed: u64,
    pub threshold: f64,
    pub bias: bool,
    pub scenario_preference: ScenarioPreference,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            batch_size: 32,
            lr: 0.1,
            lr_decay_epochs: vec![40, 60, 100],
            lr_decay_factor: 0.1,
            weight_decay: 1e-4,
            loss_mode: LossMode::Plul,
            seed: 0,
            threshold: 0.5,
            bias: true,
            scenario_preference: ScenarioPreference::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return fail(format!(
                "lr_decay_factor must lie in (0, 1], got {}",
                self.lr_decay_factor
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if self.lr_decay_epochs.windows(2).any(|w| w[0] > w[1]) {
            return fail("lr_decay_epochs must be sorted".into());
        }
        self.scenario_preference.validate()
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&d| d < epoch).count();
        self.lr * self.lr_decay_factor.powi(decays as i32)
    }

    /// Key used to order otherwise equal candidates.
    fn order_key(&self) -> (f64, usize, f64, usize, u64) {
        (self.lr, self.batch_size, self.weight_decay, self.epochs, self.seed)
    }

    fn cmp_order(&self, other: &Self) -> Ordering {
        let (a, b) = (self.order_key(), other.order_key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.cmp(&b.3))
            .then(a.4.cmp(&b.4))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_metrics: Option<MetricsReport>,
    pub scenario_counts: ScenarioCounts,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn final_val_metrics(&self) -> Option<&MetricsReport> {
        self.last().and_then(|r| r.val_metrics.as_ref())
    }

    /// One JSON object per line, one line per epoch.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.epochs {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn check_compatible<T: Scalar>(a: &ConcealedDataset<T>, b: &ConcealedDataset<T>) -> Result<()> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch {
            context: "validation feature dimension",
            expected: a.d(),
            actual: b.d(),
        });
    }
    if a.scheme().num_labels != b.scheme().num_labels || a.scheme().units.len() != b.scheme().units.len() {
        return Err(Error::InvalidDataset(
            "training and validation data use different PLU schemes".into(),
        ));
    }
    if a.scheme().mode == crate::conceal::PairingMode::DatasetFixed && a.scheme() != b.scheme() {
        return Err(Error::InvalidDataset(
            "training and validation data use different PLU schemes".into(),
        ));
    }
    Ok(())
}

fn batch_loss<T: Scalar>(
    batch: &ConcealedDataset<T>,
    probs: ndarray::ArrayView2<'_, T>,
    cfg: &TrainConfig,
) -> Result<LossResult<T>> {
    match cfg.loss_mode {
        LossMode::FullBce => bce_loss(probs, batch.observed_labels().view()),
        mode => clplu_risk(
            probs,
            ObservedBatch {
                index: batch.observed_index().view(),
                labels: batch.observed_labels().view(),
            },
            UnitBatch {
                members: batch.unit_members().view(),
                values: batch.plu_values().view(),
            },
            mode,
            &cfg.scenario_preference,
        ),
    }
}

/// Trains from the seeded initialisation `LinearModel::init(d, L, cfg.seed)`.
///
/// `train_set` and `val` are read through their training-visible accessors
/// only; validation metrics come from [`evaluate_visible`].
pub fn train<T: Scalar>(
    train_set: &ConcealedDataset<T>,
    val: Option<&ConcealedDataset<T>>,
    cfg: &TrainConfig,
) -> Result<(LinearModel<T>, TrainHistory)> {
    let model = LinearModel::init(train_set.d(), train_set.num_labels(), cfg.seed);
    train_from(model, train_set, val, cfg)
}

/// Same as [`train`] but starting from a given model.
pub fn train_from<T: Scalar>(
    mut model: LinearModel<T>,
    train_set: &ConcealedDataset<T>,
    val: Option<&ConcealedDataset<T>>,
    cfg: &TrainConfig,
) -> Result<(LinearModel<T>, TrainHistory)> {
    cfg.validate()?;
    if model.d() != train_set.d() || model.num_labels() != train_set.num_labels() {
        return Err(Error::DimensionMismatch {
            context: "model shape",
            expected: train_set.d() * train_set.num_labels(),
            actual: model.d() * model.num_labels(),
        });
    }
    if let Some(v) = val {
        check_compatible(train_set, v)?;
    }
    if cfg.loss_mode == LossMode::FullBce {
        let identity = train_set
            .observed_index()
            .outer_iter()
            .all(|row| row.iter().enumerate().all(|(k, &j)| k == j));
        if train_set.m() != 0 || !identity {
            return Err(Error::InvalidConfig(
                "full_bce needs fully observed labels (no PLUs)".into(),
            ));
        }
    }

    let n = train_set.n();
    let threshold = T::of(cfg.threshold);
    let weight_decay = T::of(cfg.weight_decay);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let lr_f64 = cfg.lr_at(epoch);
        let lr = T::of(lr_f64);
        order.shuffle(&mut rng);
        let mut loss_sum = T::zero();
        let mut counts = ScenarioCounts::default();

        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.select(chunk);
            let x = batch.features();
            let probs = model.predict_probs_batch(x.view())?;
            let loss = batch_loss(&batch, probs.view(), cfg)?;
            if !loss.value.is_finite() || loss.grad_logits.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            counts.merge(&loss.scenario_counts());
            loss_sum += loss.value * T::of(chunk.len() as f64);

            let grad_w = loss.grad_logits.t().dot(x);
            Zip::from(&mut model.weights)
                .and(&grad_w)
                .for_each(|w, &g| *w -= lr * (g + weight_decay * *w));
            if cfg.bias {
                let grad_b = loss.grad_logits.sum_axis(Axis(0));
                Zip::from(&mut model.bias)
                    .and(&grad_b)
                    .for_each(|b, &g| *b -= lr * g);
            }
            if !model.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
        }

        let val_metrics = val
            .map(|v| evaluate_visible(&model, v, threshold))
            .transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            lr: lr_f64,
            train_loss: (loss_sum / T::of(n as f64)).to_f64_lossy(),
            val_metrics,
            scenario_counts: counts,
        });
    }
    Ok((model, history))
}

/// A finished run offered to [`model_select`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: TrainConfig,
    pub val: MetricsReport,
}

/// Index of the candidate with the highest validation average precision;
/// ties go to the lower ranking loss, then to the smaller config in
/// `(lr, batch_size, weight_decay, epochs, seed)` order.
pub fn model_select(candidates: &[Candidate]) -> Result<usize> {
    candidates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            b.val
                .average_precision
                .total_cmp(&a.val.average_precision)
                .then(a.val.ranking_loss.total_cmp(&b.val.ranking_loss))
                .then(a.config.cmp_order(&b.config))
        })
        .map(|(i, _)| i)
        .ok_or(Error::EmptySelection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conceal::{build_scheme, conceal, PairingMode};
    use crate::data::MultiLabelDataset;
    use ndarray::Array2;

    fn report(ap: f64, rl: f64) -> MetricsReport {
        MetricsReport {
            average_precision: ap,
            hamming_loss: 0.0,
            one_error: 0.0,
            coverage: 0.0,
            ranking_loss: rl,
            plu_label_accuracy: None,
            n_evaluated: 1,
            n_skipped: 0,
        }
    }

    #[test]
    fn schedule_matches_step_rule() {
        let cfg = TrainConfig::default();
        for (epochs, expected) in [(1..=40, 0.1), (41..=60, 0.01), (61..=100, 0.001), (101..=120, 0.0001)] {
            for e in epochs {
                let lr = cfg.lr_at(e);
                assert!((lr - expected).abs() <= expected * 1e-12, "epoch {e}: {lr}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { lr_decay_factor: 1.5, ..Default::default() },
            TrainConfig { weight_decay: -1.0, ..Default::default() },
            TrainConfig { lr_decay_epochs: vec![60, 40], ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn selection_rules() {
        let cfg = TrainConfig::default();
        assert!(model_select(&[]).is_err());
        let single = [Candidate { config: cfg.clone(), val: report(0.5, 0.3) }];
        assert_eq!(model_select(&single).unwrap(), 0);

        let two = [
            Candidate { config: cfg.clone(), val: report(0.70, 0.1) },
            Candidate { config: cfg.clone(), val: report(0.75, 0.2) },
        ];
        assert_eq!(model_select(&two).unwrap(), 1);

        let tie = [
            Candidate { config: cfg.clone(), val: report(0.75, 0.20) },
            Candidate { config: cfg.clone(), val: report(0.75, 0.15) },
        ];
        assert_eq!(model_select(&tie).unwrap(), 1);

        let full_tie = [
            Candidate { config: TrainConfig { lr: 0.1, ..cfg.clone() }, val: report(0.75, 0.15) },
            Candidate { config: TrainConfig { lr: 0.01, ..cfg.clone() }, val: report(0.75, 0.15) },
        ];
        assert_eq!(model_select(&full_tie).unwrap(), 1);
    }

    fn zero_feature_set() -> ConcealedDataset<f64> {
        let ds = MultiLabelDataset::new(
            Array2::zeros((20, 3)),
            Array2::from_shape_fn((20, 4), |(i, j)| ((i + j) % 3 == 0) as u8),
            None,
        )
        .unwrap();
        ConcealedDataset::fully_observed(&ds)
    }

    #[test]
    fn weight_decay_skips_bias() {
        let cd = zero_feature_set();
        let base = TrainConfig {
            epochs: 3,
            batch_size: 5,
            lr: 0.1,
            loss_mode: LossMode::FullBce,
            ..Default::default()
        };
        let (no_decay, _) = train(&cd, None, &TrainConfig { weight_decay: 0.0, ..base.clone() }).unwrap();
        let (decay, _) = train(&cd, None, &TrainConfig { weight_decay: 0.5, ..base.clone() }).unwrap();
        let init = LinearModel::<f64>::init(3, 4, base.seed);
        // Zero features: weights only feel the decay; bias only the gradient.
        assert_eq!(no_decay.weights, init.weights);
        assert_eq!(decay.bias, no_decay.bias);
        assert!(decay.bias.iter().any(|&b| b != 0.0));
        let shrink = (1.0 - 0.1 * 0.5f64).powi(12);
        for (w, w0) in decay.weights.iter().zip(init.weights.iter()) {
            assert!((w - w0 * shrink).abs() < 1e-12);
        }

        let zero_start = LinearModel::<f64>::zeros(3, 4);
        let (m, _) = train_from(zero_start, &cd, None, &TrainConfig { weight_decay: 0.5, ..base }).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert!(m.bias.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn full_bce_rejects_concealed_data() {
        let ds = MultiLabelDataset::new(
            Array2::<f64>::ones((10, 2)),
            Array2::from_shape_fn((10, 4), |(i, j)| ((i + j) % 2) as u8),
            None,
        )
        .unwrap();
        let scheme = build_scheme(4, &[0], PairingMode::DatasetFixed, 1).unwrap();
        let cd = conceal(&ds, &scheme).unwrap();
        let cfg = TrainConfig { loss_mode: LossMode::FullBce, epochs: 1, ..Default::default() };
        assert!(matches!(train(&cd, None, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn non_finite_loss_aborts_with_context() {
        let ds = MultiLabelDataset::new(
            Array2::from_elem((10, 1), 1e300f64),
            Array2::from_shape_fn((10, 2), |(i, j)| ((i + j) % 2) as u8),
            None,
        )
        .unwrap();
        let cd = ConcealedDataset::fully_observed(&ds);
        let cfg = TrainConfig { lr: 1e10, epochs: 5, batch_size: 10, ..Default::default() };
        let err = train(&cd, None, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }), "{err}");
    }
}
