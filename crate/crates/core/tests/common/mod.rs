//! Random batches shared by the oracle suites.

#![allow(dead_code)]

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A batch of logits plus observed and unit supervision on a random
/// partition of `0..L` into observed labels and `m` member pairs.
pub struct RandomBatch {
    pub logits: Array2<f64>,
    pub full_labels: Array2<u8>,
    pub index: Array2<usize>,
    pub observed: Array2<u8>,
    pub members: Array2<[usize; 2]>,
    pub values: Array2<u8>,
}

pub fn random_batch(rng: &mut ChaCha8Rng) -> RandomBatch {
    let n_b = rng.random_range(1..=8);
    let num_labels = rng.random_range(2..=9);
    let m = rng.random_range(1..=num_labels / 2);
    let c = num_labels - 2 * m;
    let logits = Array2::from_shape_fn((n_b, num_labels), |_| rng.random_range(-4.0..4.0));
    let full_labels = Array2::from_shape_fn((n_b, num_labels), |_| rng.random_bool(0.4) as u8);
    let mut index = Array2::zeros((n_b, c));
    let mut observed = Array2::zeros((n_b, c));
    let mut members = Array2::from_elem((n_b, m), [0, 0]);
    let mut values = Array2::zeros((n_b, m));
    for i in 0..n_b {
        let mut perm: Vec<usize> = (0..num_labels).collect();
        perm.shuffle(rng);
        for u in 0..m {
            let (s, p) = (perm[2 * u], perm[2 * u + 1]);
            members[[i, u]] = [s, p];
            values[[i, u]] = full_labels[[i, s]] | full_labels[[i, p]];
        }
        for k in 0..c {
            let j = perm[2 * m + k];
            index[[i, k]] = j;
            observed[[i, k]] = full_labels[[i, j]];
        }
    }
    RandomBatch {
        logits,
        full_labels,
        index,
        observed,
        members,
        values,
    }
}

pub fn sigmoid_oracle(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
