//! Ranking and threshold metrics against definitional brute force.
//!
//! The oracles enumerate label pairs directly and rank by counting
//! `#{k : s_k >= s_j}`, so ties rank every tied label at the bottom of its
//! tie group.

use clplu::metrics::{
    average_precision, coverage, hamming_loss, is_rankable, metrics_report, one_error,
    ranking_loss,
};
use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rank(s: ArrayView1<'_, f64>, j: usize) -> usize {
    s.iter().filter(|&&v| v >= s[j]).count()
}

fn positives(z: ArrayView1<'_, u8>) -> Vec<usize> {
    (0..z.len()).filter(|&j| z[j] == 1).collect()
}

fn negatives(z: ArrayView1<'_, u8>) -> Vec<usize> {
    (0..z.len()).filter(|&j| z[j] == 0).collect()
}

fn rankable_mean(
    scores: &Array2<f64>,
    truth: &Array2<u8>,
    f: impl Fn(ArrayView1<'_, f64>, ArrayView1<'_, u8>) -> f64,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..scores.nrows() {
        let (s, z) = (scores.row(i), truth.row(i));
        let n_pos = z.iter().filter(|&&v| v == 1).count();
        if n_pos == 0 || n_pos == z.len() {
            continue;
        }
        total += f(s, z);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn oracle_ranking_loss(scores: &Array2<f64>, truth: &Array2<u8>) -> f64 {
    rankable_mean(scores, truth, |s, z| {
        let (pos, neg) = (positives(z), negatives(z));
        let mut wrong = 0usize;
        let mut ties = 0usize;
        for &a in &pos {
            for &b in &neg {
                if s[a] < s[b] {
                    wrong += 1;
                } else if s[a] == s[b] {
                    ties += 1;
                }
            }
        }
        (wrong as f64 + 0.5 * ties as f64) / (pos.len() * neg.len()) as f64
    })
}

fn oracle_one_error(scores: &Array2<f64>, truth: &Array2<u8>) -> f64 {
    rankable_mean(scores, truth, |s, z| {
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let top = (0..s.len()).find(|&j| s[j] == max).unwrap();
        if z[top] == 1 {
            0.0
        } else {
            1.0
        }
    })
}

fn oracle_coverage(scores: &Array2<f64>, truth: &Array2<u8>) -> f64 {
    rankable_mean(scores, truth, |s, z| {
        let deepest = positives(z).into_iter().map(|j| rank(s, j)).max().unwrap();
        (deepest - 1) as f64 / (s.len() - 1) as f64
    })
}

fn oracle_average_precision(scores: &Array2<f64>, truth: &Array2<u8>) -> f64 {
    rankable_mean(scores, truth, |s, z| {
        let pos = positives(z);
        let mut sum = 0.0;
        for &j in &pos {
            let above = pos.iter().filter(|&&k| s[k] >= s[j]).count();
            sum += above as f64 / rank(s, j) as f64;
        }
        sum / pos.len() as f64
    })
}

fn oracle_hamming(preds: &Array2<u8>, truth: &Array2<u8>) -> f64 {
    let mut wrong = 0;
    for i in 0..truth.nrows() {
        for j in 0..truth.ncols() {
            if preds[[i, j]] != truth[[i, j]] {
                wrong += 1;
            }
        }
    }
    wrong as f64 / truth.len() as f64
}

/// 200 instances with `L <= 10`. Scores come from a coarse grid a third of
/// the time so that ties are common.
fn random_problem(rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<u8>) {
    let num_labels = rng.random_range(2..=10);
    let coarse = rng.random_bool(0.33);
    let scores = Array2::from_shape_fn((200, num_labels), |_| {
        if coarse {
            rng.random_range(0..5) as f64 / 4.0
        } else {
            rng.random::<f64>()
        }
    });
    let truth = Array2::from_shape_fn((200, num_labels), |_| rng.random_bool(0.35) as u8);
    (scores, truth)
}

#[test]
fn metrics_equal_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..25 {
        let (s, z) = random_problem(&mut rng);
        let preds = s.mapv(|p| (p >= 0.5) as u8);
        assert_eq!(hamming_loss(preds.view(), z.view()).unwrap(), oracle_hamming(&preds, &z));
        assert_eq!(ranking_loss(s.view(), z.view()).unwrap(), oracle_ranking_loss(&s, &z));
        assert_eq!(one_error(s.view(), z.view()).unwrap(), oracle_one_error(&s, &z));
        assert_eq!(coverage(s.view(), z.view()).unwrap(), oracle_coverage(&s, &z));
        assert_eq!(
            average_precision(s.view(), z.view()).unwrap(),
            oracle_average_precision(&s, &z)
        );
    }
}

#[test]
fn report_counts_rankable_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (s, mut z) = random_problem(&mut rng);
    z.row_mut(0).fill(0);
    z.row_mut(1).fill(1);
    let report = metrics_report(s.view(), z.view(), 0.5).unwrap();
    let rankable = z.outer_iter().filter(|r| is_rankable(*r)).count();
    assert_eq!(report.n_evaluated, rankable);
    assert_eq!(report.n_skipped, 200 - rankable);
    assert!(report.n_skipped >= 2);
    assert_eq!(report.plu_label_accuracy, None);
}

#[test]
fn ranking_metrics_ignore_monotone_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let transforms: [fn(f64) -> f64; 3] = [|x| 3.0 * x - 7.0, f64::exp, |x| x * x * x + x];
    for _ in 0..25 {
        let (s, z) = random_problem(&mut rng);
        let base = metrics_report(s.view(), z.view(), 0.5).unwrap();
        for f in transforms {
            let t = s.mapv(f);
            assert_eq!(ranking_loss(t.view(), z.view()).unwrap(), base.ranking_loss);
            assert_eq!(one_error(t.view(), z.view()).unwrap(), base.one_error);
            assert_eq!(coverage(t.view(), z.view()).unwrap(), base.coverage);
            assert_eq!(average_precision(t.view(), z.view()).unwrap(), base.average_precision);
        }
    }
}

#[test]
fn perfect_rankings_hit_the_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (_, z) = random_problem(&mut rng);
    let s = z.mapv(|v| v as f64 * 0.5 + 0.25);
    assert_eq!(average_precision(s.view(), z.view()).unwrap(), 1.0);
    assert_eq!(ranking_loss(s.view(), z.view()).unwrap(), 0.0);
    assert_eq!(one_error(s.view(), z.view()).unwrap(), 0.0);
    let flipped = s.mapv(|v| 1.0 - v);
    assert_eq!(ranking_loss(flipped.view(), z.view()).unwrap(), 1.0);
    assert_eq!(one_error(flipped.view(), z.view()).unwrap(), 1.0);
}
