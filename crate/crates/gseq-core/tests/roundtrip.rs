//! Persistence and refit invariants on randomized datasets.

use proptest::prelude::*;

use gseq_core::dataset::{load_dataset, save_dataset, Dataset, OutcomeValue, Support, Unit};
use gseq_core::dgp::{simulate, DgpConfig};
use gseq_core::learners::{fit_t_learner, ConditionalModel, OutcomeField, Signature};

fn arb_unit(l_levels: usize) -> impl Strategy<Value = Unit> {
    (
        0u8..2,
        0..l_levels,
        0u8..2,
        -1e6f64..1e6,
    )
        .prop_map(|(a0, l1, a1, y)| Unit {
            a0,
            l1: OutcomeValue::Categorical(l1),
            a1,
            y: OutcomeValue::Continuous(y),
        })
}

proptest! {
    #[test]
    fn save_load_is_identity(units in prop::collection::vec(arb_unit(3), 1..60)) {
        let d = Dataset::new(units, Support::Categorical { levels: 3 }, Support::Continuous).unwrap();
        let mut buf = Vec::new();
        save_dataset(&d, &mut buf).unwrap();
        let d2 = load_dataset(&buf[..], d.l_support(), d.y_support()).unwrap();
        prop_assert_eq!(d, d2);
    }

    #[test]
    fn model_json_round_trip_is_stable(units in prop::collection::vec(arb_unit(2), 16..60), extra in prop::collection::vec(arb_unit(2), 4..8)) {
        // guarantee all four arms appear
        let mut all = units;
        for (i, mut u) in extra.into_iter().enumerate() {
            u.a0 = (i % 2) as u8;
            u.a1 = ((i / 2) % 2) as u8;
            all.push(u);
        }
        let d = Dataset::new(all, Support::Categorical { levels: 2 }, Support::Continuous).unwrap();
        let m = fit_t_learner(&d, OutcomeField::Y, Signature::OUTCOME).unwrap();
        let json = m.to_json().unwrap();
        let m2 = ConditionalModel::from_json(&json).unwrap();
        prop_assert_eq!(&m, &m2);
        prop_assert_eq!(json, m2.to_json().unwrap());
    }
}

#[test]
fn simulated_fixture_round_trips() {
    let cfg = DgpConfig {
        n: 1000,
        delta: 0.2,
        eta: 0.05,
        noise_l: 0.5,
        noise_y: 1.0,
        seed: 123,
        ..DgpConfig::default()
    };
    let d = simulate(&cfg).unwrap();
    let mut buf = Vec::new();
    save_dataset(&d, &mut buf).unwrap();
    let d2 = load_dataset(&buf[..], d.l_support(), d.y_support()).unwrap();
    assert_eq!(d, d2);
    assert_eq!(d.fingerprint(), d2.fingerprint());
}

#[test]
fn continuous_l_round_trips() {
    let cfg = DgpConfig {
        n: 500,
        delta: -0.1,
        eta: 0.02,
        alpha_l: 0.7,
        noise_l: 1.3,
        noise_y: 0.4,
        l_kind: gseq_core::dgp::LKind::Continuous,
        seed: 9,
        ..DgpConfig::default()
    };
    let d = simulate(&cfg).unwrap();
    let mut buf = Vec::new();
    save_dataset(&d, &mut buf).unwrap();
    let d2 = load_dataset(&buf[..], d.l_support(), d.y_support()).unwrap();
    assert_eq!(d, d2);
}
