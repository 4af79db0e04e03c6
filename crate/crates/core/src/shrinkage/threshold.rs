use crate::autodiff::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Denominator regularizer of the garrote estimator.
pub const GARROTE_EPS: f64 = 1e-6;

/// Which estimator a shrinkage block applies to its residual features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Thresholding {
    Garrote,
    Soft,
}

impl Thresholding {
    pub fn apply(self, x: f64, tau: f64) -> f64 {
        match self {
            Thresholding::Garrote => garrote(x, tau),
            Thresholding::Soft => soft(x, tau),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Thresholding::Garrote => "garrote",
            Thresholding::Soft => "soft",
        }
    }
}

impl std::str::FromStr for Thresholding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "garrote" => Ok(Thresholding::Garrote),
            "soft" => Ok(Thresholding::Soft),
            _ => Err(Error::invalid(format!("thresholding must be `garrote` or `soft`, got `{s}`"))),
        }
    }
}

/// Non-negative garrote: `0` for `|x| < τ`, else `x − τ²/(x + 1e−6)`.
///
/// The denominator is singular at `x = −1e−6`, which lies inside the kill
/// region for any `τ > 1e−6`.
pub fn garrote(x: f64, tau: f64) -> f64 {
    if x.abs() < tau {
        0.0
    } else {
        x - tau * tau / (x + GARROTE_EPS)
    }
}

/// Soft thresholding: `sign(x)·max(|x| − τ, 0)`.
pub fn soft(x: f64, tau: f64) -> f64 {
    if x.abs() < tau {
        0.0
    } else {
        x.signum() * (x.abs() - tau)
    }
}

/// `κ·(γ·α + (1 − γ)·β)`.
pub fn combine_threshold(alpha: f64, beta: f64, gamma: f64, kappa: f64) -> f64 {
    kappa * (gamma * alpha + (1.0 - gamma) * beta)
}

struct ThresholdOp {
    kind: Thresholding,
    channels: usize,
    /// Elements per sample.
    per_sample: usize,
}

impl<T: Real> Function<T> for ThresholdOp {
    fn name(&self) -> &'static str {
        match self.kind {
            Thresholding::Garrote => "garrote_threshold",
            Thresholding::Soft => "soft_threshold",
        }
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let c = self.channels;
        let x = ctx.inputs[0].data();
        let thr = ctx.inputs[1].data();
        let g = ctx.grad.data();
        let eps = T::of(GARROTE_EPS);
        let mut gx = vec![T::zero(); x.len()];
        let mut gt = vec![T::zero(); thr.len()];
        for (i, ((&xv, &gv), gxv)) in x.iter().zip(g).zip(gx.iter_mut()).enumerate() {
            let sample = i / self.per_sample;
            let k = sample * c + i % c;
            let tau = thr[k];
            if xv.abs() < tau {
                continue;
            }
            match self.kind {
                Thresholding::Garrote => {
                    let d = xv + eps;
                    *gxv = gv * (T::one() + tau * tau / (d * d));
                    gt[k] -= gv * (tau + tau) / d;
                }
                Thresholding::Soft => {
                    *gxv = gv;
                    gt[k] -= gv * xv.signum();
                }
            }
        }
        vec![
            ctx.needs[0].then(|| Tensor::from_parts(ctx.inputs[0].shape().to_vec(), gx)),
            ctx.needs[1].then(|| Tensor::from_parts(ctx.inputs[1].shape().to_vec(), gt)),
        ]
    }
}

/// Applies `kind` to `x: [N, S.., C]` with one threshold per sample and
/// channel, `threshold: [N, C]`. The kill-region mask carries no gradient.
pub fn threshold<'t, T: Real>(kind: Thresholding, x: Var<'t, T>, threshold: Var<'t, T>) -> Result<Var<'t, T>> {
    let xv = x.value();
    let tv = threshold.value();
    let (n, c) = match (xv.shape(), tv.shape()) {
        (xs, &[n, c]) if xs.len() >= 2 && xs[0] == n && xs[xs.len() - 1] == c => (n, c),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "threshold",
                lhs: xv.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            })
        }
    };
    let per_sample = xv.numel() / n;
    let eps = T::of(GARROTE_EPS);
    let thr = tv.data();
    let mut out = Vec::with_capacity(xv.numel());
    for (i, &v) in xv.data().iter().enumerate() {
        let tau = thr[(i / per_sample) * c + i % c];
        out.push(if v.abs() < tau {
            T::zero()
        } else {
            match kind {
                Thresholding::Garrote => v - tau * tau / (v + eps),
                Thresholding::Soft => v.signum() * (v.abs() - tau),
            }
        });
    }
    x.tape().record_kinks(xv.data().iter().enumerate().map(|(i, &v)| {
        let tau = thr[(i / per_sample) * c + i % c];
        u64::from(v.abs() < tau) | (u64::from(v < T::zero()) << 1)
    }));
    let op = ThresholdOp {
        kind,
        channels: c,
        per_sample,
    };
    Ok(x.tape()
        .apply(Tensor::from_parts(xv.shape().to_vec(), out), &[x, threshold], op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::gradcheck::{check_gradients, random_tensor};

    #[test]
    fn garrote_examples() {
        assert_eq!(garrote(0.5, 1.0), 0.0);
        assert!((garrote(2.0, 1.0) - (2.0 - 1.0 / 2.000001)).abs() < 1e-12);
        assert!((garrote(2.0, 1.0) - 1.5000002).abs() < 1e-7);
        assert!((garrote(-2.0, 1.0) - (-2.0 - 1.0 / -1.999999)).abs() < 1e-12);
        assert!((garrote(-2.0, 1.0) + 1.49999975).abs() < 1e-8);
        assert!((garrote(-2.0, 1.0) + 1.5000003).abs() < 1e-6);
    }

    #[test]
    fn soft_examples() {
        assert_eq!(soft(2.0, 1.0), 1.0);
        assert_eq!(soft(-0.3, 1.0), 0.0);
        assert_eq!(soft(-2.0, 1.0), -1.0);
    }

    #[test]
    fn combined_threshold_examples() {
        assert!((combine_threshold(0.4, 0.8, 0.5, 2.0) - 1.2).abs() < 1e-12);
        assert!((combine_threshold(0.3, 0.9, 1.0, 3.0) - 0.9).abs() < 1e-12);
        assert!((combine_threshold(0.3, 0.9, 0.0, 1.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn tensor_op_matches_scalar_functions() {
        let tape = Tape::<f64>::new();
        let x = random_tensor(&[2, 3, 1, 2], 1, 3.0);
        let thr = Tensor::from_f64(&[2, 2], &[0.5, 1.0, 1.5, 2.0]).unwrap();
        for kind in [Thresholding::Garrote, Thresholding::Soft] {
            let y = threshold(kind, tape.constant(x.clone()), tape.constant(thr.clone()))
                .unwrap()
                .value();
            for (i, (&xv, &yv)) in x.data().iter().zip(y.data()).enumerate() {
                let tau = thr.data()[(i / 6) * 2 + i % 2];
                assert_eq!(yv, kind.apply(xv, tau));
            }
        }
    }

    #[test]
    fn zero_threshold_garrote_is_near_identity() {
        let tape = Tape::<f64>::new();
        let x = random_tensor(&[1, 5, 1, 1], 2, 1.0);
        let y = threshold(Thresholding::Garrote, tape.constant(x.clone()), tape.constant(Tensor::zeros(&[1, 1])))
            .unwrap()
            .value();
        assert_eq!(*y, x);
    }

    #[test]
    fn gradients_away_from_the_threshold() {
        // Inputs kept more than 0.05 away from |x| = τ.
        let x = Tensor::from_f64(&[2, 3, 2], &[1.5, -0.2, -1.8, 0.9, 0.1, 2.5, -2.2, 0.3, 0.6, -1.4, 3.0, -0.4]).unwrap();
        let thr = Tensor::from_f64(&[2, 2], &[0.8, 0.5, 1.0, 0.7]).unwrap();
        for kind in [Thresholding::Garrote, Thresholding::Soft] {
            check_gradients(&[x.clone(), thr.clone()], 1e-5, 1e-6, |tape, v| {
                let w = tape.constant(random_tensor(&[2, 3, 2], 3, 1.0));
                Ok(threshold(kind, v[0], v[1])?.mul(&w)?.sum())
            })
            .unwrap();
        }
    }

    #[test]
    fn mismatched_threshold_shape() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[2, 3, 4]));
        assert!(threshold(Thresholding::Soft, x, tape.constant(Tensor::zeros(&[2, 3]))).is_err());
    }
}
