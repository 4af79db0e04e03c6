use proptest::prelude::*;

use shrinknet::model::{AmcModel, ModelConfig};
use shrinknet::shrinkage::{combine_threshold, garrote, soft, ThresholdPaths, GARROTE_EPS};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn kill_region_is_exactly_zero(tau in 1e-6f64..10.0, frac in -0.999_999f64..0.999_999) {
        let x = frac * tau;
        prop_assert_eq!(garrote(x, tau), 0.0);
        prop_assert_eq!(soft(x, tau), 0.0);
    }
}

proptest! {
    #[test]
    fn garrote_shrinks_toward_zero_keeping_sign(tau in 1e-3f64..10.0, excess in 0.0f64..50.0, negative: bool) {
        let mag = tau * (1.0 + excess);
        let x = if negative { -mag } else { mag };
        let y = garrote(x, tau);
        prop_assert!(y.abs() < x.abs());
        if mag > tau * (1.0 + 1e-6) {
            prop_assert_eq!(y.signum(), x.signum());
        }
    }

    #[test]
    fn garrote_dominates_soft_above_threshold(tau in 1e-3f64..10.0, excess in 1e-6f64..1e4) {
        let x = tau * (1.0 + excess);
        let (g, s) = (garrote(x, tau), soft(x, tau));
        prop_assert!(g > s);
        // The gap is τ − τ²/(x + ε), approaching τ for large x.
        let gap = tau - tau * tau / (x + GARROTE_EPS);
        prop_assert!(((g - s) - gap).abs() <= 1e-9 * x.max(1.0));
    }

    #[test]
    fn mixed_threshold_lies_between_paths(alpha in 1e-6f64..1.0, beta in 1e-6f64..1.0, gamma in 1e-6f64..0.999_999) {
        let t = combine_threshold(alpha, beta, gamma, 1.0);
        prop_assert!(alpha.min(beta) - 1e-15 <= t && t <= alpha.max(beta) + 1e-15);
    }

    #[test]
    fn soft_is_odd_and_shifted(tau in 0.0f64..5.0, x in -20.0f64..20.0) {
        prop_assert_eq!(soft(-x, tau), -soft(x, tau));
        if x.abs() >= tau {
            prop_assert!((soft(x, tau).abs() - (x.abs() - tau)).abs() < 1e-12);
        }
    }
}

#[test]
fn garrote_is_continuous_at_the_threshold() {
    assert!(garrote(1.0 + 1e-9, 1.0).abs() < 1e-5);
    for tau in [0.01, 0.5, 1.0, 3.0] {
        let limit = tau * tau * GARROTE_EPS / (tau * (tau + GARROTE_EPS));
        assert!((garrote(tau, tau) - limit).abs() < 1e-12);
    }
}

#[test]
fn gap_tends_to_tau() {
    let tau = 1.5;
    let gap = |x: f64| garrote(x, tau) - soft(x, tau);
    assert!((gap(1e3) - tau).abs() < 3e-3);
    assert!((gap(1e6) - tau).abs() < 3e-6);
}

#[test]
fn single_path_blocks_have_fewer_parameters() {
    for classes in [4, 11, 24] {
        let config = ModelConfig::new(128, classes);
        let dual = AmcModel::<f32>::new(config.clone(), 0).unwrap().param_count();
        let single = AmcModel::<f32>::new(config.with_paths(ThresholdPaths::Single), 0).unwrap().param_count();
        assert!(single < dual);
    }
}
