//! Multi-label evaluation: five ranking/threshold metrics and the accuracy
//! on concealed PLU members.
//!
//! Conventions used throughout:
//!
//! * `rank(j) = |{k : s_k >= s_j}|`, so ties rank pessimistically (this
//!   makes `average_precision == 1` exactly when `ranking_loss == 0`).
//! * Ranking loss counts a tied (positive, negative) pair as one half.
//! * One-error breaks ties for the top label towards the lowest index.
//! * Coverage is `(max positive rank - 1) / (L - 1)`, i.e. in `[0, 1]`.
//! * Instances with no positive or no negative label are skipped by all four
//!   ranking metrics and counted in `n_skipped`. Hamming loss uses every
//!   instance.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::conceal::ConcealedDataset;
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub average_precision: f64,
    pub hamming_loss: f64,
    pub one_error: f64,
    pub coverage: f64,
    pub ranking_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plu_label_accuracy: Option<f64>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
}

fn check_shapes(a: (usize, usize), b: (usize, usize), context: &'static str) -> Result<()> {
    if a.0 != b.0 {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.0,
            actual: b.0,
        });
    }
    if a.1 != b.1 {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.1,
            actual: b.1,
        });
    }
    Ok(())
}

/// Whether an instance takes part in the ranking metrics.
pub fn is_rankable(truth: ArrayView1<'_, u8>) -> bool {
    let pos = truth.iter().filter(|&&z| z == 1).count();
    pos > 0 && pos < truth.len()
}

/// Mean of `per_instance` over rankable rows; 0 when none qualify.
fn mean_over_rankable<T: Scalar>(
    scores: ArrayView2<'_, T>,
    truth: ArrayView2<'_, u8>,
    per_instance: impl Fn(ArrayView1<'_, T>, ArrayView1<'_, u8>) -> f64,
) -> Result<f64> {
    check_shapes(scores.dim(), truth.dim(), "score/truth shape")?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, z) in scores.outer_iter().zip(truth.outer_iter()) {
        if is_rankable(z) {
            total += per_instance(s, z);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Fraction of label positions where prediction and truth differ.
pub fn hamming_loss(preds: ArrayView2<'_, u8>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    check_shapes(preds.dim(), truth.dim(), "prediction/truth shape")?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let wrong = preds.iter().zip(truth.iter()).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / preds.len() as f64)
}

fn sorted_desc<T: Scalar>(values: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = values.collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Number of entries of a descending slice that are `> x` and `== x`.
fn count_above_and_equal<T: Scalar>(desc: &[T], x: T) -> (usize, usize) {
    let above = desc.partition_point(|&v| v > x);
    let at_least = desc.partition_point(|&v| v >= x);
    (above, at_least - above)
}

fn instance_ranking_loss<T: Scalar>(s: ArrayView1<'_, T>, z: ArrayView1<'_, u8>) -> f64 {
    let negatives = sorted_desc(s.iter().zip(z).filter(|(_, &z)| z == 0).map(|(&v, _)| v));
    let mut wrong = 0usize;
    let mut ties = 0usize;
    let mut n_pos = 0usize;
    for (&v, _) in s.iter().zip(z).filter(|(_, &z)| z == 1) {
        let (above, equal) = count_above_and_equal(&negatives, v);
        wrong += above;
        ties += equal;
        n_pos += 1;
    }
    (wrong as f64 + 0.5 * ties as f64) / (n_pos * negatives.len()) as f64
}

/// Mean fraction of mis-ordered (positive, negative) pairs.
pub fn ranking_loss<T: Scalar>(scores: ArrayView2<'_, T>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    mean_over_rankable(scores, truth, instance_ranking_loss)
}

/// Index of the highest score, lowest index on ties.
pub fn top_label<T: Scalar>(s: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (j, &v) in s.iter().enumerate().skip(1) {
        if v > s[best] {
            best = j;
        }
    }
    best
}

/// Fraction of instances whose top-ranked label is not relevant.
pub fn one_error<T: Scalar>(scores: ArrayView2<'_, T>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    mean_over_rankable(scores, truth, |s, z| (z[top_label(s)] == 0) as u8 as f64)
}

fn instance_coverage<T: Scalar>(s: ArrayView1<'_, T>, z: ArrayView1<'_, u8>) -> f64 {
    let min_pos = s
        .iter()
        .zip(z)
        .filter(|(_, &z)| z == 1)
        .map(|(&v, _)| v)
        .fold(T::infinity(), |a, b| a.min(b));
    let max_rank = s.iter().filter(|&&v| v >= min_pos).count();
    (max_rank - 1) as f64 / (s.len() - 1) as f64
}

/// Normalised depth needed to cover every relevant label.
pub fn coverage<T: Scalar>(scores: ArrayView2<'_, T>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    mean_over_rankable(scores, truth, instance_coverage)
}

fn instance_average_precision<T: Scalar>(s: ArrayView1<'_, T>, z: ArrayView1<'_, u8>) -> f64 {
    let all = sorted_desc(s.iter().copied());
    let positives = sorted_desc(s.iter().zip(z).filter(|(_, &z)| z == 1).map(|(&v, _)| v));
    let mut sum = 0.0;
    for (&v, _) in s.iter().zip(z).filter(|(_, &z)| z == 1) {
        let rank = all.partition_point(|&x| x >= v);
        let pos_at_or_above = positives.partition_point(|&x| x >= v);
        sum += pos_at_or_above as f64 / rank as f64;
    }
    sum / positives.len() as f64
}

/// Mean over positives of the precision at that positive's rank.
pub fn average_precision<T: Scalar>(
    scores: ArrayView2<'_, T>,
    truth: ArrayView2<'_, u8>,
) -> Result<f64> {
    mean_over_rankable(scores, truth, instance_average_precision)
}

/// All five metrics for a score matrix, thresholding at `threshold` for
/// Hamming loss. `plu_label_accuracy` is left empty.
pub fn metrics_report<T: Scalar>(
    scores: ArrayView2<'_, T>,
    truth: ArrayView2<'_, u8>,
    threshold: T,
) -> Result<MetricsReport> {
    check_shapes(scores.dim(), truth.dim(), "score/truth shape")?;
    let preds = scores.mapv(|p| (p >= threshold) as u8);
    let n_evaluated = truth.outer_iter().filter(|z| is_rankable(*z)).count();
    Ok(MetricsReport {
        average_precision: average_precision(scores, truth)?,
        hamming_loss: hamming_loss(preds.view(), truth)?,
        one_error: one_error(scores, truth)?,
        coverage: coverage(scores, truth)?,
        ranking_loss: ranking_loss(scores, truth)?,
        plu_label_accuracy: None,
        n_evaluated,
        n_skipped: truth.nrows() - n_evaluated,
    })
}

/// Reconstructs the full `n x L` label matrix from the observed labels and
/// the sealed channel. Evaluation only.
pub fn evaluation_labels<T: Scalar>(cd: &ConcealedDataset<T>) -> Result<Array2<u8>> {
    let sealed = cd.sealed().ok_or(Error::SealedTruthMissing)?;
    let mut full = Array2::<u8>::zeros((cd.n(), cd.num_labels()));
    for i in 0..cd.n() {
        for (&j, &y) in cd.observed_index().row(i).iter().zip(cd.observed_labels().row(i)) {
            full[[i, j]] = y;
        }
        for (u, &[s, p]) in cd.unit_members().row(i).iter().enumerate() {
            full[[i, s]] = sealed.values[[i, 2 * u]];
            full[[i, p]] = sealed.values[[i, 2 * u + 1]];
        }
    }
    Ok(full)
}

/// Accuracy of thresholded predictions on the `n x 2m` hidden member labels.
pub fn plu_label_accuracy<T: Scalar>(
    probs: ArrayView2<'_, T>,
    cd: &ConcealedDataset<T>,
    threshold: T,
) -> Result<f64> {
    let sealed = cd.sealed().ok_or(Error::SealedTruthMissing)?;
    check_shapes(probs.dim(), (cd.n(), cd.num_labels()), "probability shape")?;
    if cd.m() == 0 {
        return Err(Error::InvalidDataset("dataset has no PLU members".into()));
    }
    let mut correct = 0usize;
    for i in 0..cd.n() {
        for (u, &[s, p]) in cd.unit_members().row(i).iter().enumerate() {
            for (slot, j) in [(2 * u, s), (2 * u + 1, p)] {
                let pred = (probs[[i, j]] >= threshold) as u8;
                correct += (pred == sealed.values[[i, slot]]) as usize;
            }
        }
    }
    Ok(correct as f64 / (cd.n() * 2 * cd.m()) as f64)
}

/// Scores and labels that training code is allowed to see: every observed
/// label, followed by one column per unit whose truth is the unit value and
/// whose score is `1 - (1 - p_s)(1 - p_p)`, the modelled probability that
/// the unit is positive.
pub fn visible_targets<T: Scalar>(
    probs: ArrayView2<'_, T>,
    cd: &ConcealedDataset<T>,
) -> Result<(Array2<T>, Array2<u8>)> {
    check_shapes(probs.dim(), (cd.n(), cd.num_labels()), "probability shape")?;
    let (c, m) = (cd.c(), cd.m());
    let mut scores = Array2::zeros((cd.n(), c + m));
    let mut truth = Array2::zeros((cd.n(), c + m));
    for i in 0..cd.n() {
        for (k, (&j, &y)) in cd
            .observed_index()
            .row(i)
            .iter()
            .zip(cd.observed_labels().row(i))
            .enumerate()
        {
            scores[[i, k]] = probs[[i, j]];
            truth[[i, k]] = y;
        }
        for (u, &[s, p]) in cd.unit_members().row(i).iter().enumerate() {
            scores[[i, c + u]] =
                T::one() - (T::one() - probs[[i, s]]) * (T::one() - probs[[i, p]]);
            truth[[i, c + u]] = cd.plu_values()[[i, u]];
        }
    }
    Ok((scores, truth))
}

/// Metrics computed from training-visible supervision only (no sealed truth).
pub fn evaluate_visible<T: Scalar>(
    model: &LinearModel<T>,
    cd: &ConcealedDataset<T>,
    threshold: T,
) -> Result<MetricsReport> {
    let probs = model.predict_probs_batch(cd.features().view())?;
    let (scores, truth) = visible_targets(probs.view(), cd)?;
    metrics_report(scores.view(), truth.view(), threshold)
}

/// Full evaluation against ground truth, including PLU-member accuracy when
/// the dataset has units. Without a sealed channel this falls back to
/// [`evaluate_visible`].
pub fn evaluate<T: Scalar>(
    model: &LinearModel<T>,
    cd: &ConcealedDataset<T>,
    threshold: T,
) -> Result<MetricsReport> {
    if !cd.has_sealed_truth() {
        return evaluate_visible(model, cd, threshold);
    }
    let probs = model.predict_probs_batch(cd.features().view())?;
    let truth = evaluation_labels(cd)?;
    let mut report = metrics_report(probs.view(), truth.view(), threshold)?;
    if cd.m() > 0 {
        report.plu_label_accuracy = Some(plu_label_accuracy(probs.view(), cd, threshold)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conceal::{conceal, PairingMode, PluScheme, PluUnit};
    use crate::data::MultiLabelDataset;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn hamming_examples() {
        let t = array![[1u8, 0], [0, 1]];
        assert_eq!(hamming_loss(t.view(), t.view()).unwrap(), 0.0);
        let comp = t.mapv(|v| 1 - v);
        assert_eq!(hamming_loss(comp.view(), t.view()).unwrap(), 1.0);
        let one_off = array![[1u8, 1], [0, 1]];
        assert_eq!(hamming_loss(one_off.view(), t.view()).unwrap(), 0.25);
        assert!(hamming_loss(one_off.view(), array![[1u8]].view()).is_err());
    }

    #[test]
    fn ranking_loss_examples() {
        let t = array![[1u8, 0, 1, 0]];
        assert_eq!(ranking_loss(array![[0.9, 0.1, 0.8, 0.2]].view(), t.view()).unwrap(), 0.0);
        assert_eq!(ranking_loss(array![[0.5, 0.5, 0.5, 0.5]].view(), t.view()).unwrap(), 0.5);
        assert_eq!(ranking_loss(array![[0.1, 0.9, 0.2, 0.8]].view(), t.view()).unwrap(), 1.0);
    }

    #[test]
    fn one_error_examples() {
        let t = array![[0u8, 1, 0], [1, 0, 0]];
        assert_eq!(one_error(array![[0.1, 0.9, 0.2], [0.7, 0.1, 0.3]].view(), t.view()).unwrap(), 0.0);
        assert_eq!(one_error(array![[0.9, 0.1, 0.2], [0.1, 0.8, 0.3]].view(), t.view()).unwrap(), 1.0);
        // Tie at the top resolves to label 0.
        assert_eq!(one_error(array![[0.5, 0.5, 0.1]].view(), array![[1u8, 0, 0]].view()).unwrap(), 0.0);
    }

    #[test]
    fn coverage_examples() {
        let t = array![[1u8, 1, 0, 0, 0]];
        let best = coverage(array![[0.9, 0.8, 0.1, 0.2, 0.3]].view(), t.view()).unwrap();
        assert_eq!(best, 1.0 / 4.0);
        let worst = coverage(array![[0.1, 0.9, 0.8, 0.7]].view(), array![[1u8, 0, 0, 0]].view()).unwrap();
        assert_eq!(worst, 1.0);
    }

    #[test]
    fn average_precision_examples() {
        let perfect = average_precision(array![[0.9, 0.1, 0.8]].view(), array![[1u8, 0, 1]].view());
        assert_eq!(perfect.unwrap(), 1.0);
        let third = average_precision(array![[0.1, 0.9, 0.5]].view(), array![[1u8, 0, 0]].view());
        assert_abs_diff_eq!(third.unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ties_between_positive_and_negative_cost_precision() {
        let s = array![[0.5, 0.5]];
        let t = array![[1u8, 0]];
        assert_eq!(average_precision(s.view(), t.view()).unwrap(), 0.5);
        assert_eq!(ranking_loss(s.view(), t.view()).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_rows_are_skipped() {
        let s = array![[0.9, 0.1], [0.2, 0.8], [0.3, 0.4]];
        let t = array![[0u8, 0], [1, 1], [1, 0]];
        let r = metrics_report(s.view(), t.view(), 0.5).unwrap();
        assert_eq!((r.n_evaluated, r.n_skipped), (1, 2));
        assert_eq!(r.one_error, 1.0);
        assert_eq!(r.average_precision, 0.5);
    }

    fn concealed() -> ConcealedDataset<f64> {
        let ds = MultiLabelDataset::new(
            array![[1.0], [-1.0]],
            array![[1u8, 0, 1, 0], [0, 1, 0, 0]],
            None,
        )
        .unwrap();
        let scheme = PluScheme {
            num_labels: 4,
            mode: PairingMode::DatasetFixed,
            seed: 0,
            units: vec![PluUnit { s: 3, p: 2 }],
        };
        conceal(&ds, &scheme).unwrap()
    }

    #[test]
    fn evaluation_labels_restore_ground_truth() {
        let cd = concealed();
        assert_eq!(evaluation_labels(&cd).unwrap(), array![[1u8, 0, 1, 0], [0, 1, 0, 0]]);
        assert!(matches!(
            evaluation_labels(&cd.without_truth()),
            Err(Error::SealedTruthMissing)
        ));
    }

    #[test]
    fn plu_accuracy_examples() {
        let cd = concealed();
        // Hidden members are labels 3 (s) and 2 (p): truths [0,1] and [0,0].
        let perfect = array![[0.5, 0.5, 0.9, 0.1], [0.5, 0.5, 0.1, 0.1]];
        assert_eq!(plu_label_accuracy(perfect.view(), &cd, 0.5).unwrap(), 1.0);
        let negative = Array2::from_elem((2, 4), 0.1);
        assert_eq!(plu_label_accuracy(negative.view(), &cd, 0.5).unwrap(), 0.75);
        assert!(plu_label_accuracy(negative.view(), &cd.without_truth(), 0.5).is_err());
    }

    #[test]
    fn visible_targets_use_unit_values() {
        let cd = concealed();
        let probs = array![[0.9, 0.1, 0.5, 0.5], [0.2, 0.7, 0.1, 0.0]];
        let (scores, truth) = visible_targets(probs.view(), &cd).unwrap();
        assert_eq!(truth, array![[1u8, 0, 1], [0, 1, 0]]);
        assert_abs_diff_eq!(scores[[0, 2]], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(scores[[1, 2]], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn report_json_uses_exact_names() {
        let r = MetricsReport {
            average_precision: 0.5,
            hamming_loss: 0.1,
            one_error: 0.2,
            coverage: 0.3,
            ranking_loss: 0.4,
            plu_label_accuracy: None,
            n_evaluated: 3,
            n_skipped: 0,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["average_precision", "hamming_loss", "one_error", "coverage", "ranking_loss"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("plu_label_accuracy").is_none());
        let with = MetricsReport {
            plu_label_accuracy: Some(0.9),
            ..r
        };
        assert_eq!(serde_json::to_value(&with).unwrap()["plu_label_accuracy"], 0.9);
    }
}
