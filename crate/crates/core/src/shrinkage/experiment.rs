use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::threshold::{garrote, soft};
use crate::error::{Error, Result};

/// Monte-Carlo bias and mean squared error of both estimators at one point.
///
/// Bias is reported as `θ − E[estimate]`, so shrinkage toward zero is positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasMse {
    pub bias_soft: f64,
    pub bias_garrote: f64,
    pub mse_soft: f64,
    pub mse_garrote: f64,
}

/// Estimates the bias and MSE of soft and garrote thresholding of
/// `x = θ + ε`, `ε ~ N(0, σ²)`, with a fixed threshold.
pub fn bias_mse_experiment(theta: f64, tau: f64, noise_sigma: f64, n_trials: usize, seed: u64) -> Result<BiasMse> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials must be positive"));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(format!("noise_sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum_s, mut sum_g, mut sq_s, mut sq_g) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_trials {
        let x = theta + noise.sample(&mut rng);
        let (es, eg) = (soft(x, tau) - theta, garrote(x, tau) - theta);
        sum_s += es;
        sum_g += eg;
        sq_s += es * es;
        sq_g += eg * eg;
    }
    let n = n_trials as f64;
    Ok(BiasMse {
        bias_soft: -sum_s / n,
        bias_garrote: -sum_g / n,
        mse_soft: sq_s / n,
        mse_garrote: sq_g / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn garrote_has_smaller_bias_and_mse() {
        let r = bias_mse_experiment(5.0, 1.0, 0.1, 100_000, 0).unwrap();
        assert!((r.bias_soft - 1.0).abs() < 0.05, "{r:?}");
        assert!((r.bias_garrote - 0.2).abs() < 0.02, "{r:?}");
        assert!(r.mse_garrote < r.mse_soft);
    }

    #[test]
    fn zero_trials_is_an_error() {
        assert!(bias_mse_experiment(5.0, 1.0, 0.1, 0, 0).is_err());
    }
}
