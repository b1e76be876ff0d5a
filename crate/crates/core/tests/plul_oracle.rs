//! The unit losses against hand-written scenario formulas.

mod common;

use clplu::losses::{ap_loss, plul_loss, Scenario, ScenarioPreference, UnitBatch};
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_batch, sigmoid_oracle};

fn grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// `[a, b, c]` scenario risks written out from the definition.
fn scenario_risks(ps: f64, pp: f64) -> [f64; 3] {
    [
        -ps.ln() + -(1.0 - pp).ln(),
        -(1.0 - ps).ln() + -pp.ln(),
        -ps.ln() + -pp.ln(),
    ]
}

fn single_unit(ps: f64, pp: f64, v: u8, pref: &ScenarioPreference) -> (f64, Option<Scenario>) {
    let probs = array![[ps, pp]];
    let members = Array2::from_elem((1, 1), [0usize, 1]);
    let values = array![[v]];
    let r = plul_loss(
        probs.view(),
        UnitBatch {
            members: members.view(),
            values: values.view(),
        },
        pref,
    )
    .unwrap();
    (r.value, r.scenarios.unwrap()[[0, 0]])
}

#[test]
fn positive_units_take_the_brute_force_minimum() {
    let pref = ScenarioPreference::default();
    for &ps in &grid() {
        for &pp in &grid() {
            let risks = scenario_risks(ps, pp);
            let oracle = risks.iter().copied().fold(f64::INFINITY, f64::min);
            let (value, scenario) = single_unit(ps, pp, 1, &pref);
            assert_eq!(value, oracle, "ps={ps} pp={pp}");
            let chosen = match scenario.unwrap() {
                Scenario::A => risks[0],
                Scenario::B => risks[1],
                Scenario::C => risks[2],
            };
            assert_eq!(chosen, oracle);
        }
    }
}

#[test]
fn negative_units_are_both_negative() {
    let pref = ScenarioPreference::default();
    for &ps in &grid() {
        for &pp in &grid() {
            let (value, scenario) = single_unit(ps, pp, 0, &pref);
            assert_eq!(value, -(1.0 - ps).ln() + -(1.0 - pp).ln());
            assert_eq!(scenario, None);
        }
    }
}

#[test]
fn ties_follow_the_preference_order() {
    // At ps = pp = 0.5 every scenario costs 2 ln 2.
    for order in [
        [Scenario::C, Scenario::A, Scenario::B],
        [Scenario::A, Scenario::B, Scenario::C],
        [Scenario::B, Scenario::C, Scenario::A],
    ] {
        let (_, chosen) = single_unit(0.5, 0.5, 1, &ScenarioPreference(order));
        assert_eq!(chosen, Some(order[0]));
    }
}

#[test]
fn plul_never_exceeds_ap_on_random_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pref = ScenarioPreference::default();
    for _ in 0..100 {
        let b = random_batch(&mut rng);
        let probs = b.logits.mapv(sigmoid_oracle);
        let units = UnitBatch {
            members: b.members.view(),
            values: b.values.view(),
        };
        let plul = plul_loss(probs.view(), units, &pref).unwrap().value;
        let ap = ap_loss(probs.view(), units).unwrap().value;
        assert!(plul <= ap, "plul {plul} > ap {ap}");
    }
}
