use proptest::prelude::*;

use shrinknet::signal::{iq_to_ap, stratified_split, DatasetSpec, Modulation, Split};

proptest! {
    #[test]
    fn amplitude_and_phase_reconstruct_iq(values in prop::collection::vec(-10.0f64..10.0, 2..128)) {
        let mut iq = values;
        if iq.len() % 2 == 1 {
            iq.pop();
        }
        let l = iq.len() / 2;
        let ap = iq_to_ap(&iq);
        for t in 0..l {
            let (a, p) = (ap[t], ap[l + t]);
            prop_assert!(a >= 0.0);
            prop_assert!((-std::f64::consts::PI..=std::f64::consts::PI).contains(&p));
            prop_assert!((a * p.sin() - iq[t]).abs() < 1e-9);
            prop_assert!((a * p.cos() - iq[l + t]).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_captures_are_finite(
        class in 0usize..Modulation::ALL.len(),
        snr in -20i16..=30,
        length in 16usize..300,
        index in 0usize..1000,
        seed in any::<u64>(),
    ) {
        let spec = DatasetSpec {
            classes: Modulation::ALL.to_vec(),
            snr_grid: vec![snr],
            length,
            master_seed: seed,
            ..DatasetSpec::default()
        };
        let s = spec.generate(class, snr, index, true).unwrap();
        prop_assert_eq!(s.iq.len(), 2 * length);
        prop_assert!(s.iq.iter().all(|v| v.is_finite()));
        let iq: Vec<f64> = s.iq.iter().map(|&v| f64::from(v)).collect();
        prop_assert!(iq_to_ap(&iq)[..length].iter().all(|&a| a >= 0.0));
        prop_assert_eq!(&spec.generate(class, snr, index, true).unwrap(), &s);
    }
}

#[test]
fn build_is_deterministic_and_complete() {
    let spec = DatasetSpec {
        samples_per_cell: 5,
        snr_grid: vec![-10, 0, 10],
        length: 64,
        ..DatasetSpec::default()
    };
    let a = spec.build().unwrap();
    assert_eq!(a, spec.build().unwrap());
    assert_eq!(a.len(), 8 * 3 * 5);
    assert_ne!(a.samples[0].iq, a.samples[1].iq);
}

#[test]
fn splits_are_stratified() {
    let spec = DatasetSpec {
        samples_per_cell: 10,
        snr_grid: vec![0, 8],
        length: 32,
        ..DatasetSpec::default()
    };
    let ds = spec.build().unwrap();
    let splits = spec.split();
    assert_eq!(splits, stratified_split(&ds.samples));
    for class in 0..8u16 {
        for snr in [0i16, 8] {
            let count = |which: Split| {
                ds.samples
                    .iter()
                    .zip(&splits)
                    .filter(|(s, &sp)| s.class_id == class && s.snr_db == snr && sp == which)
                    .count()
            };
            assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (6, 2, 2));
        }
    }
}
