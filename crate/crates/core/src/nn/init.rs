use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::{Real, Tensor};

/// I.i.d. `N(0, 2/fan_in)` samples.
pub fn he_normal<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    assert!(fan_in >= 1, "fan_in must be >= 1");
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
    Tensor::from_fn(shape, |_| T::of(normal.sample(rng)))
}

/// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let uniform = Uniform::new_inclusive(-limit, limit).expect("valid range");
    Tensor::from_fn(shape, |_| T::of(uniform.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_std(t: &Tensor<f64>) -> f64 {
        let n = t.numel() as f64;
        let mean = t.sum() / n;
        (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn he_normal_std_matches_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t: Tensor<f64> = he_normal(&[100_000], 50, &mut rng);
        let std = sample_std(&t);
        assert!((std - 0.2).abs() / 0.2 < 0.02, "std {std}");
        assert!((t.sum() / 1e5).abs() < 0.005);
        for (fan_in, sigma) in [(2, 1.0), (8, 0.5)] {
            let t: Tensor<f64> = he_normal(&[50_000], fan_in, &mut rng);
            assert!((sample_std(&t) - sigma).abs() / sigma < 0.02);
        }
    }

    #[test]
    fn glorot_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Tensor<f64> = glorot_uniform(&[1000], 2, 16, &mut rng);
        let limit = (6.0f64 / 18.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= limit));
    }
}
