//! Training losses over a minibatch and their gradients with respect to the
//! logits.
//!
//! Every loss takes the full `n_b x L` probability matrix produced by the
//! model and returns the batch mean of a per-instance sum, together with an
//! `n_b x L` gradient. Probabilities are clamped to `[eps, 1 - eps]` before
//! any logarithm (see [`Scalar::prob_eps`]). For `t = logit` and `p =
//! sigmoid(t)`, `d/dt -log p = p - 1` and `d/dt -log(1 - p) = p`, so every
//! gradient entry is `(p - target) / n_b`.
//!
//! Unit losses:
//!
//! * AN: both unit members are treated as negative, whatever the unit value.
//! * AP: both members take the unit value.
//! * PLUL: a negative unit makes both members negative. A positive unit is
//!   scored under each of the three assignments consistent with `OR = 1`
//!   (a: `s=1, p=0`; b: `s=0, p=1`; c: `s=1, p=1`) and only the cheapest is
//!   kept. The gradient flows through that assignment alone.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    FullBce,
    An,
    Ap,
    Plul,
}

impl LossMode {
    pub const ALL: [LossMode; 4] = [Self::FullBce, Self::An, Self::Ap, Self::Plul];

    pub fn name(self) -> &'static str {
        match self {
            Self::FullBce => "full_bce",
            Self::An => "an",
            Self::Ap => "ap",
            Self::Plul => "plul",
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full_bce" | "bce" => Ok(Self::FullBce),
            "an" => Ok(Self::An),
            "ap" => Ok(Self::Ap),
            "plul" => Ok(Self::Plul),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss mode '{other}' (expected full_bce, an, ap or plul)"
            ))),
        }
    }
}

/// Label assignment hypothesised for a positive unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Partner positive, privacy label negative.
    A,
    /// Partner negative, privacy label positive.
    B,
    /// Both positive.
    C,
}

impl Scenario {
    /// `(target_s, target_p)`.
    pub fn targets(self) -> (u8, u8) {
        match self {
            Self::A => (1, 0),
            Self::B => (0, 1),
            Self::C => (1, 1),
        }
    }
}

/// Order in which tied scenarios win the PLUL minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioPreference(pub [Scenario; 3]);

impl Default for ScenarioPreference {
    fn default() -> Self {
        Self([Scenario::C, Scenario::A, Scenario::B])
    }
}

impl ScenarioPreference {
    pub fn validate(&self) -> Result<()> {
        let mut order = self.0;
        order.sort();
        if order != [Scenario::A, Scenario::B, Scenario::C] {
            return Err(Error::InvalidConfig(
                "scenario preference must list a, b and c exactly once".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl ScenarioCounts {
    pub fn total(&self) -> usize {
        self.a + self.b + self.c
    }

    pub fn record(&mut self, s: Scenario) {
        match s {
            Scenario::A => self.a += 1,
            Scenario::B => self.b += 1,
            Scenario::C => self.c += 1,
        }
    }

    pub fn merge(&mut self, other: &ScenarioCounts) {
        self.a += other.a;
        self.b += other.b;
        self.c += other.c;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<T> {
    /// Batch mean of the per-instance loss.
    pub value: T,
    /// `n_b x L`, zero outside the labels the loss touches.
    pub grad_logits: Array2<T>,
    /// `n_b x m` winning scenario for each positive unit (PLUL only).
    pub scenarios: Option<Array2<Option<Scenario>>>,
}

impl<T: Scalar> LossResult<T> {
    pub fn scenario_counts(&self) -> ScenarioCounts {
        let mut counts = ScenarioCounts::default();
        if let Some(s) = &self.scenarios {
            s.iter().flatten().for_each(|&sc| counts.record(sc));
        }
        counts
    }
}

/// Observed-label supervision for a batch: positions in label space and values.
#[derive(Debug, Clone, Copy)]
pub struct ObservedBatch<'a> {
    pub index: ArrayView2<'a, usize>,
    pub labels: ArrayView2<'a, u8>,
}

/// PLU supervision for a batch: `[s, p]` members and unit values.
#[derive(Debug, Clone, Copy)]
pub struct UnitBatch<'a> {
    pub members: ArrayView2<'a, [usize; 2]>,
    pub values: ArrayView2<'a, u8>,
}

#[inline]
fn clamp<T: Scalar>(p: T) -> T {
    let eps = T::prob_eps();
    p.max(eps).min(T::one() - eps)
}

/// `-log p` (label assumed positive).
#[inline]
fn pos_term<T: Scalar>(p: T) -> T {
    -clamp(p).ln()
}

/// `-log(1 - p)` (label assumed negative).
#[inline]
fn neg_term<T: Scalar>(p: T) -> T {
    -(T::one() - clamp(p)).ln()
}

#[inline]
fn bce_term<T: Scalar>(p: T, z: u8) -> T {
    if z == 1 {
        pos_term(p)
    } else {
        neg_term(p)
    }
}

fn batch_scale<T: Scalar>(n_b: usize) -> T {
    T::one() / T::of(n_b.max(1) as f64)
}

fn mismatch(context: &'static str, expected: usize, actual: usize) -> Error {
    Error::DimensionMismatch {
        context,
        expected,
        actual,
    }
}

fn check_observed<T>(probs: &ArrayView2<'_, T>, obs: &ObservedBatch<'_>) -> Result<()> {
    let (n_b, num_labels) = probs.dim();
    if obs.index.nrows() != n_b {
        return Err(mismatch("observed index rows", n_b, obs.index.nrows()));
    }
    if obs.labels.dim() != obs.index.dim() {
        return Err(mismatch("observed label columns", obs.index.ncols(), obs.labels.ncols()));
    }
    if let Some(&j) = obs.index.iter().find(|&&j| j >= num_labels) {
        return Err(mismatch("observed label index bound", num_labels, j));
    }
    Ok(())
}

fn check_units<T>(probs: &ArrayView2<'_, T>, units: &UnitBatch<'_>) -> Result<()> {
    let (n_b, num_labels) = probs.dim();
    if units.members.nrows() != n_b {
        return Err(mismatch("unit member rows", n_b, units.members.nrows()));
    }
    if units.values.dim() != units.members.dim() {
        return Err(mismatch("unit value columns", units.members.ncols(), units.values.ncols()));
    }
    if let Some(&j) = units.members.iter().flatten().find(|&&j| j >= num_labels) {
        return Err(mismatch("unit member index bound", num_labels, j));
    }
    Ok(())
}

/// Adds the BCE of `(index, label)` pairs to `grad` and returns the summed
/// (unscaled) loss. Shared by [`bce_loss`] and [`fu_loss`] so both reduce in
/// the same order.
fn accumulate_bce<T: Scalar>(
    probs: &ArrayView2<'_, T>,
    index: impl Fn(usize, usize) -> usize,
    labels: &ArrayView2<'_, u8>,
    grad: &mut Array2<T>,
) -> T {
    let scale = batch_scale::<T>(probs.nrows());
    let mut total = T::zero();
    for (i, row) in labels.outer_iter().enumerate() {
        let mut inst = T::zero();
        for (k, &z) in row.iter().enumerate() {
            let j = index(i, k);
            let p = probs[[i, j]];
            inst += bce_term(p, z);
            grad[[i, j]] = (p - T::of(z as f64)) * scale;
        }
        total += inst;
    }
    total
}

/// Binary cross-entropy over every label.
pub fn bce_loss<T: Scalar>(probs: ArrayView2<'_, T>, labels: ArrayView2<'_, u8>) -> Result<LossResult<T>> {
    if probs.dim() != labels.dim() {
        return Err(mismatch("BCE label shape", probs.len(), labels.len()));
    }
    let mut grad = Array2::zeros(probs.dim());
    let total = accumulate_bce(&probs, |_, k| k, &labels, &mut grad);
    Ok(LossResult {
        value: total * batch_scale(probs.nrows()),
        grad_logits: grad,
        scenarios: None,
    })
}

/// Binary cross-entropy over the observed labels only.
pub fn fu_loss<T: Scalar>(probs: ArrayView2<'_, T>, observed: ObservedBatch<'_>) -> Result<LossResult<T>> {
    check_observed(&probs, &observed)?;
    let mut grad = Array2::zeros(probs.dim());
    let total = accumulate_bce(&probs, |i, k| observed.index[[i, k]], &observed.labels, &mut grad);
    Ok(LossResult {
        value: total * batch_scale(probs.nrows()),
        grad_logits: grad,
        scenarios: None,
    })
}

/// Unit-level loss for one PLU: the value and the member targets that
/// produce its gradient.
#[derive(Debug, Clone, Copy)]
struct UnitChoice<T> {
    value: T,
    targets: (u8, u8),
    scenario: Option<Scenario>,
}

fn an_unit<T: Scalar>(ps: T, pp: T, _v: u8) -> UnitChoice<T> {
    UnitChoice {
        value: neg_term(ps) + neg_term(pp),
        targets: (0, 0),
        scenario: None,
    }
}

fn ap_unit<T: Scalar>(ps: T, pp: T, v: u8) -> UnitChoice<T> {
    if v == 0 {
        an_unit(ps, pp, v)
    } else {
        UnitChoice {
            value: pos_term(ps) + pos_term(pp),
            targets: (1, 1),
            scenario: None,
        }
    }
}

/// Value of a positive unit under one scenario.
pub fn scenario_value<T: Scalar>(scenario: Scenario, ps: T, pp: T) -> T {
    let (ts, tp) = scenario.targets();
    bce_term(ps, ts) + bce_term(pp, tp)
}

fn plul_unit<T: Scalar>(ps: T, pp: T, v: u8, pref: &ScenarioPreference) -> UnitChoice<T> {
    if v == 0 {
        return an_unit(ps, pp, v);
    }
    let mut best = pref.0[0];
    let mut best_value = scenario_value(best, ps, pp);
    for &cand in &pref.0[1..] {
        let value = scenario_value(cand, ps, pp);
        if value < best_value {
            best = cand;
            best_value = value;
        }
    }
    UnitChoice {
        value: best_value,
        targets: best.targets(),
        scenario: Some(best),
    }
}

/// Adds a unit loss to `grad` and returns the summed (unscaled) value.
fn accumulate_units<T: Scalar>(
    probs: &ArrayView2<'_, T>,
    units: &UnitBatch<'_>,
    grad: &mut Array2<T>,
    mut scenarios: Option<&mut Array2<Option<Scenario>>>,
    unit_loss: impl Fn(T, T, u8) -> UnitChoice<T>,
) -> T {
    let scale = batch_scale::<T>(probs.nrows());
    let mut total = T::zero();
    for (i, (members, values)) in units
        .members
        .outer_iter()
        .zip(units.values.outer_iter())
        .enumerate()
    {
        let mut inst = T::zero();
        for (u, (&[s, p], &v)) in members.iter().zip(values.iter()).enumerate() {
            let (ps, pp) = (probs[[i, s]], probs[[i, p]]);
            let choice = unit_loss(ps, pp, v);
            inst += choice.value;
            grad[[i, s]] += (ps - T::of(choice.targets.0 as f64)) * scale;
            grad[[i, p]] += (pp - T::of(choice.targets.1 as f64)) * scale;
            if let Some(s) = scenarios.as_deref_mut() {
                s[[i, u]] = choice.scenario;
            }
        }
        total += inst;
    }
    total
}

fn unit_loss_result<T: Scalar>(
    probs: ArrayView2<'_, T>,
    units: UnitBatch<'_>,
    record: bool,
    unit_loss: impl Fn(T, T, u8) -> UnitChoice<T>,
) -> Result<LossResult<T>> {
    check_units(&probs, &units)?;
    let mut grad = Array2::zeros(probs.dim());
    let mut scenarios = record.then(|| Array2::from_elem(units.members.dim(), None));
    let total = accumulate_units(&probs, &units, &mut grad, scenarios.as_mut(), unit_loss);
    Ok(LossResult {
        value: total * batch_scale(probs.nrows()),
        grad_logits: grad,
        scenarios,
    })
}

/// Assume-negative loss over the PLU members.
pub fn an_loss<T: Scalar>(probs: ArrayView2<'_, T>, units: UnitBatch<'_>) -> Result<LossResult<T>> {
    unit_loss_result(probs, units, false, an_unit)
}

/// Assume-positive loss: both members copy the unit value.
pub fn ap_loss<T: Scalar>(probs: ArrayView2<'_, T>, units: UnitBatch<'_>) -> Result<LossResult<T>> {
    unit_loss_result(probs, units, false, ap_unit)
}

/// Privacy-label unit loss: minimum over the consistent assignments.
pub fn plul_loss<T: Scalar>(
    probs: ArrayView2<'_, T>,
    units: UnitBatch<'_>,
    pref: &ScenarioPreference,
) -> Result<LossResult<T>> {
    unit_loss_result(probs, units, true, |ps, pp, v| plul_unit(ps, pp, v, pref))
}

/// Observed-label BCE plus the selected unit loss.
pub fn clplu_risk<T: Scalar>(
    probs: ArrayView2<'_, T>,
    observed: ObservedBatch<'_>,
    units: UnitBatch<'_>,
    mode: LossMode,
    pref: &ScenarioPreference,
) -> Result<LossResult<T>> {
    let unit_loss: fn(T, T, u8, &ScenarioPreference) -> UnitChoice<T> = match mode {
        LossMode::An => |ps, pp, v, _| an_unit(ps, pp, v),
        LossMode::Ap => |ps, pp, v, _| ap_unit(ps, pp, v),
        LossMode::Plul => plul_unit,
        LossMode::FullBce => {
            return Err(Error::InvalidConfig(
                "full_bce is not a PLU loss; use bce_loss on fully observed labels".into(),
            ))
        }
    };
    check_units(&probs, &units)?;
    let mut result = fu_loss(probs, observed)?;
    if units.members.ncols() == 0 {
        return Ok(result);
    }
    let mut scenarios =
        (mode == LossMode::Plul).then(|| Array2::from_elem(units.members.dim(), None));
    let total = accumulate_units(
        &probs,
        &units,
        &mut result.grad_logits,
        scenarios.as_mut(),
        |ps, pp, v| unit_loss(ps, pp, v, pref),
    );
    result.value += total * batch_scale(probs.nrows());
    result.scenarios = scenarios;
    Ok(result)
}
