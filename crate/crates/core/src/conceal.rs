//! Privacy-label units: scheme construction, concealment and leak auditing.
//!
//! A unit joins one privacy label `p` with one non-privacy partner `s` and
//! exposes only `z_s OR z_p`. Both member labels disappear from the
//! observed label set. The hidden member values are kept in a
//! [`SealedTruth`] that has no public accessor; only the evaluation code in
//! [`crate::metrics`] and the truth-file writer in [`crate::io`] read it.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MultiLabelDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

// RNG streams derived from the scheme seed.
const PARTNER_STREAM: u64 = 0;
const PRIVACY_STREAM: u64 = 1;
const PER_INSTANCE_STREAM: u64 = 2;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// One pairing shared by every instance.
    #[default]
    DatasetFixed,
    /// Each instance draws its own partners from the non-privacy pool.
    PerInstance,
}

impl std::str::FromStr for PairingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset_fixed" | "fixed" => Ok(Self::DatasetFixed),
            "per_instance" => Ok(Self::PerInstance),
            other => Err(Error::InvalidScheme(format!("unknown pairing mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for PairingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::DatasetFixed => "dataset_fixed",
            Self::PerInstance => "per_instance",
        })
    }
}

/// One `(s, p)` pair: `s` the non-privacy partner, `p` the privacy label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluUnit {
    pub s: usize,
    pub p: usize,
}

/// Which labels are private and how they are paired.
///
/// Serialises as `{L, mode, seed, units: [{s, p}]}`. In per-instance mode the
/// `s` of each unit is the dataset-level draw; concealment replaces it with a
/// fresh draw per instance and records the result in the concealed dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluScheme {
    #[serde(rename = "L")]
    pub num_labels: usize,
    pub mode: PairingMode,
    pub seed: u64,
    pub units: Vec<PluUnit>,
}

impl PluScheme {
    /// A scheme with no units; every label stays observed.
    pub fn empty(num_labels: usize) -> Self {
        Self {
            num_labels,
            mode: PairingMode::DatasetFixed,
            seed: 0,
            units: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.units.len()
    }

    /// Number of observed labels, `L - 2m`.
    pub fn c(&self) -> usize {
        self.num_labels - 2 * self.m()
    }

    pub fn privacy_indices(&self) -> Vec<usize> {
        self.units.iter().map(|u| u.p).collect()
    }

    pub fn partner_indices(&self) -> Vec<usize> {
        self.units.iter().map(|u| u.s).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Err(Error::InvalidScheme("a scheme needs at least one unit".into()));
        }
        if 2 * m > self.num_labels {
            return Err(Error::InvalidScheme(format!(
                "{m} units need 2m = {} labels but only L = {} exist",
                2 * m,
                self.num_labels
            )));
        }
        let mut seen = BTreeSet::new();
        for u in &self.units {
            for idx in [u.s, u.p] {
                if idx >= self.num_labels {
                    return Err(Error::InvalidScheme(format!(
                        "label index {idx} out of range for L = {}",
                        self.num_labels
                    )));
                }
                if !seen.insert(idx) {
                    return Err(Error::InvalidScheme(format!(
                        "label index {idx} used more than once"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scheme: Self = serde_json::from_str(text)?;
        scheme.validate()?;
        Ok(scheme)
    }
}

/// The observed value of a unit: 0 iff both member labels are 0.
pub fn plu_truth(z_s: u8, z_p: u8) -> u8 {
    debug_assert!(z_s <= 1 && z_p <= 1);
    z_s | z_p
}

/// Uniformly samples `count` distinct privacy labels out of `num_labels`,
/// returned in ascending order.
pub fn sample_privacy_indices(num_labels: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count == 0 || 2 * count > num_labels {
        return Err(Error::InvalidScheme(format!(
            "PLU count {count} requires 1 <= count and 2 * count <= L = {num_labels}"
        )));
    }
    let mut pool: Vec<usize> = (0..num_labels).collect();
    pool.shuffle(&mut seeded(seed, PRIVACY_STREAM));
    let mut picked = pool[..count].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Pairs each privacy label with a distinct non-privacy partner drawn
/// uniformly without replacement.
pub fn build_scheme(
    num_labels: usize,
    privacy: &[usize],
    mode: PairingMode,
    seed: u64,
) -> Result<PluScheme> {
    let m = privacy.len();
    if m == 0 {
        return Err(Error::InvalidScheme("no privacy labels given".into()));
    }
    let mut distinct = BTreeSet::new();
    for &p in privacy {
        if p >= num_labels {
            return Err(Error::InvalidScheme(format!(
                "privacy index {p} out of range for L = {num_labels}"
            )));
        }
        if !distinct.insert(p) {
            return Err(Error::InvalidScheme(format!("duplicate privacy index {p}")));
        }
    }
    if 2 * m > num_labels {
        return Err(Error::InvalidScheme(format!(
            "too few non-privacy labels: {m} privacy labels need 2m = {} <= L = {num_labels}",
            2 * m
        )));
    }
    let partners = draw_partners(num_labels, &distinct, m, &mut seeded(seed, PARTNER_STREAM));
    let scheme = PluScheme {
        num_labels,
        mode,
        seed,
        units: partners
            .into_iter()
            .zip(privacy)
            .map(|(s, &p)| PluUnit { s, p })
            .collect(),
    };
    scheme.validate()?;
    Ok(scheme)
}

fn draw_partners(
    num_labels: usize,
    privacy: &BTreeSet<usize>,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..num_labels).filter(|j| !privacy.contains(j)).collect();
    let (picked, _) = pool.partial_shuffle(rng, m);
    picked.to_vec()
}

/// Hidden member values, `n x 2m`, columns ordered `s_0, p_0, s_1, p_1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct SealedTruth {
    pub(crate) values: Array2<u8>,
}

impl SealedTruth {
    pub(crate) fn new(values: Array2<u8>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// A dataset whose privacy labels have been folded into PLUs.
///
/// Training code sees features, the observed labels (with their positions
/// in the original label space), the unit members and the unit values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcealedDataset<T> {
    features: Array2<T>,
    scheme: PluScheme,
    members: Array2<[usize; 2]>,
    observed_index: Array2<usize>,
    observed: Array2<u8>,
    plu_values: Array2<u8>,
    sealed: Option<SealedTruth>,
}

impl<T: Scalar> ConcealedDataset<T> {
    /// Assembles a concealed dataset from stored parts. Shapes are checked;
    /// index content is not, so use [`audit_no_leak`] on anything read from
    /// outside.
    pub fn from_parts(
        features: Array2<T>,
        scheme: PluScheme,
        members: Array2<[usize; 2]>,
        observed_index: Array2<usize>,
        observed: Array2<u8>,
        plu_values: Array2<u8>,
        sealed: Option<SealedTruth>,
    ) -> Result<Self> {
        let n = features.nrows();
        let m = scheme.m();
        let check = |context: &'static str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                })
            }
        };
        check("unit member rows", n, members.nrows())?;
        check("unit member columns", m, members.ncols())?;
        check("observed index rows", n, observed_index.nrows())?;
        check("observed label rows", n, observed.nrows())?;
        check("observed label columns", observed_index.ncols(), observed.ncols())?;
        check("PLU value rows", n, plu_values.nrows())?;
        check("PLU value columns", m, plu_values.ncols())?;
        if let Some(truth) = &sealed {
            check("sealed truth rows", n, truth.values.nrows())?;
            check("sealed truth columns", 2 * m, truth.values.ncols())?;
        }
        if observed.iter().chain(plu_values.iter()).any(|&v| v > 1) {
            return Err(Error::InvalidDataset("label values must be 0 or 1".into()));
        }
        Ok(Self {
            features,
            scheme,
            members,
            observed_index,
            observed,
            plu_values,
            sealed,
        })
    }

    /// Wraps a dataset with no units: all `L` labels are observed.
    pub fn fully_observed(ds: &MultiLabelDataset<T>) -> Self {
        let n = ds.n();
        let num_labels = ds.num_labels();
        Self {
            features: ds.features().clone(),
            scheme: PluScheme::empty(num_labels),
            members: Array2::from_elem((n, 0), [0, 0]),
            observed_index: Array2::from_shape_fn((n, num_labels), |(_, j)| j),
            observed: ds.labels().clone(),
            plu_values: Array2::zeros((n, 0)),
            sealed: Some(SealedTruth::new(Array2::zeros((n, 0)))),
        }
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_labels(&self) -> usize {
        self.scheme.num_labels
    }

    pub fn m(&self) -> usize {
        self.scheme.m()
    }

    pub fn c(&self) -> usize {
        self.observed_index.ncols()
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn scheme(&self) -> &PluScheme {
        &self.scheme
    }

    /// `n x m` array of `[s, p]` label indices per instance and unit.
    pub fn unit_members(&self) -> &Array2<[usize; 2]> {
        &self.members
    }

    /// `n x c` positions of the observed labels in the original label space.
    pub fn observed_index(&self) -> &Array2<usize> {
        &self.observed_index
    }

    pub fn observed_labels(&self) -> &Array2<u8> {
        &self.observed
    }

    pub fn plu_values(&self) -> &Array2<u8> {
        &self.plu_values
    }

    pub fn has_sealed_truth(&self) -> bool {
        self.sealed.is_some()
    }

    pub(crate) fn sealed(&self) -> Option<&SealedTruth> {
        self.sealed.as_ref()
    }

    /// Same dataset without its sealed channel.
    pub fn without_truth(&self) -> Self {
        Self {
            sealed: None,
            ..self.clone()
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            scheme: self.scheme.clone(),
            members: self.members.select(Axis(0), indices),
            observed_index: self.observed_index.select(Axis(0), indices),
            observed: self.observed.select(Axis(0), indices),
            plu_values: self.plu_values.select(Axis(0), indices),
            sealed: self
                .sealed
                .as_ref()
                .map(|t| SealedTruth::new(t.values.select(Axis(0), indices))),
        }
    }
}

fn conceal_row(
    labels: ArrayView1<'_, u8>,
    members: &[[usize; 2]],
    observed_index: &mut Vec<usize>,
    observed: &mut Vec<u8>,
    plu_values: &mut Vec<u8>,
    sealed: &mut Vec<u8>,
) {
    let hidden: BTreeSet<usize> = members.iter().flatten().copied().collect();
    for (j, &z) in labels.iter().enumerate() {
        if !hidden.contains(&j) {
            observed_index.push(j);
            observed.push(z);
        }
    }
    for &[s, p] in members {
        plu_values.push(plu_truth(labels[s], labels[p]));
        sealed.push(labels[s]);
        sealed.push(labels[p]);
    }
}

/// Folds the scheme's privacy labels into PLUs.
pub fn conceal<T: Scalar>(
    ds: &MultiLabelDataset<T>,
    scheme: &PluScheme,
) -> Result<ConcealedDataset<T>> {
    scheme.validate()?;
    if scheme.num_labels != ds.num_labels() {
        return Err(Error::DimensionMismatch {
            context: "scheme label count",
            expected: ds.num_labels(),
            actual: scheme.num_labels,
        });
    }
    let n = ds.n();
    let m = scheme.m();
    let c = scheme.c();
    let privacy: BTreeSet<usize> = scheme.privacy_indices().into_iter().collect();
    let fixed: Vec<[usize; 2]> = scheme.units.iter().map(|u| [u.s, u.p]).collect();
    let mut rng = seeded(scheme.seed, PER_INSTANCE_STREAM);

    let mut members = Vec::with_capacity(n * m);
    let mut observed_index = Vec::with_capacity(n * c);
    let mut observed = Vec::with_capacity(n * c);
    let mut plu_values = Vec::with_capacity(n * m);
    let mut sealed = Vec::with_capacity(n * 2 * m);
    for (i, row) in ds.labels().outer_iter().enumerate() {
        let row_members = match scheme.mode {
            PairingMode::DatasetFixed => fixed.clone(),
            PairingMode::PerInstance => draw_partners(scheme.num_labels, &privacy, m, &mut rng)
                .into_iter()
                .zip(&scheme.units)
                .map(|(s, u)| [s, u.p])
                .collect(),
        };
        conceal_row(
            row,
            &row_members,
            &mut observed_index,
            &mut observed,
            &mut plu_values,
            &mut sealed,
        );
        debug_assert_eq!(observed_index.len(), (i + 1) * c);
        members.extend(row_members);
    }
    let shape = |cols: usize| (n, cols);
    ConcealedDataset::from_parts(
        ds.features().clone(),
        scheme.clone(),
        Array2::from_shape_vec(shape(m), members).expect("m members per row"),
        Array2::from_shape_vec(shape(c), observed_index).expect("c observed per row"),
        Array2::from_shape_vec(shape(c), observed).expect("c observed per row"),
        Array2::from_shape_vec(shape(m), plu_values).expect("m units per row"),
        Some(SealedTruth::new(
            Array2::from_shape_vec(shape(2 * m), sealed).expect("2m hidden per row"),
        )),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeakViolation {
    /// A privacy label appears in the observed index map.
    PrivacyLabelObserved { instance: usize, label: usize },
    /// A unit member other than the privacy label is also observed.
    MemberObserved { instance: usize, label: usize },
    /// A unit's privacy slot does not hold the scheme's privacy label.
    UnitMismatch { instance: usize, unit: usize },
    /// `c + 2m != L` for an instance.
    LabelCount { instance: usize, observed: usize },
    /// Observed index out of range or repeated.
    BadObservedIndex { instance: usize, label: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub passed: bool,
    pub violations: Vec<LeakViolation>,
}

impl AuditReport {
    /// Privacy label indices that leaked into the observed map.
    pub fn leaked_privacy_labels(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .violations
            .iter()
            .filter_map(|v| match v {
                LeakViolation::PrivacyLabelObserved { label, .. } => Some(*label),
                _ => None,
            })
            .collect();
        set.into_iter().collect()
    }
}

/// Checks every training-visible accessor for privacy-label exposure.
pub fn audit_no_leak<T: Scalar>(cd: &ConcealedDataset<T>) -> AuditReport {
    let privacy: BTreeSet<usize> = cd.scheme.privacy_indices().into_iter().collect();
    let num_labels = cd.num_labels();
    let mut violations = Vec::new();
    for i in 0..cd.n() {
        let row_members = cd.members.row(i);
        let members: BTreeSet<usize> = row_members.iter().flatten().copied().collect();
        for (u, (pair, unit)) in row_members.iter().zip(&cd.scheme.units).enumerate() {
            if pair[1] != unit.p {
                violations.push(LeakViolation::UnitMismatch { instance: i, unit: u });
            }
        }
        let mut seen = BTreeSet::new();
        for &j in cd.observed_index.row(i) {
            if privacy.contains(&j) {
                violations.push(LeakViolation::PrivacyLabelObserved { instance: i, label: j });
            } else if members.contains(&j) {
                violations.push(LeakViolation::MemberObserved { instance: i, label: j });
            }
            if j >= num_labels || !seen.insert(j) {
                violations.push(LeakViolation::BadObservedIndex { instance: i, label: j });
            }
        }
        if cd.c() + 2 * cd.m() != num_labels {
            violations.push(LeakViolation::LabelCount {
                instance: i,
                observed: cd.c(),
            });
        }
    }
    AuditReport {
        passed: violations.is_empty(),
        violations,
    }
}
