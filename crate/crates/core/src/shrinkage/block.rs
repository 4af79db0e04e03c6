use rand::Rng;

use super::threshold::{threshold, Thresholding};
use crate::autodiff::{softplus, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv2d, Dense, ParamId, ParamKind, ParamStore, Session};
use crate::tensor::{Real, Tensor};

/// Whether the threshold is a learned mix of the mean (GAP) and max (GMP)
/// paths, or comes from the mean path alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ThresholdPaths {
    Dual,
    Single,
}

impl ThresholdPaths {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdPaths::Dual => "dual",
            ThresholdPaths::Single => "single",
        }
    }
}

impl std::str::FromStr for ThresholdPaths {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(ThresholdPaths::Dual),
            "single" => Ok(ThresholdPaths::Single),
            _ => Err(Error::invalid(format!("threshold paths must be `dual` or `single`, got `{s}`"))),
        }
    }
}

/// `σ(fc2(relu(bn(fc1(v)))))`, one scaling coefficient in (0, 1) per channel.
#[derive(Clone, Debug)]
pub struct ScalingPath {
    pub fc1: Dense,
    pub bn: BatchNorm,
    pub fc2: Dense,
}

impl ScalingPath {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            fc1: Dense::new(store, &format!("{name}/fc1"), channels, channels, rng)?,
            bn: BatchNorm::new(store, &format!("{name}/bn"), channels)?,
            fc2: Dense::new(store, &format!("{name}/fc2"), channels, channels, rng)?,
        })
    }

    fn param_count(&self) -> usize {
        self.fc1.param_count() + self.bn.param_count() + self.fc2.param_count()
    }

    fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, v: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.fc1.forward(s, v)?;
        let h = self.bn.forward(s, h)?.relu();
        Ok(self.fc2.forward(s, h)?.sigmoid())
    }
}

/// Intermediate values of the threshold subnetwork, all `[N, C]`.
#[derive(Clone, Copy, Debug)]
pub struct ThresholdVars<'t, T: Real> {
    pub mean_abs: Var<'t, T>,
    pub max_abs: Option<Var<'t, T>>,
    pub alpha: Var<'t, T>,
    pub beta: Option<Var<'t, T>>,
    pub mix: Var<'t, T>,
    pub threshold: Var<'t, T>,
}

/// Plain-tensor copy of [`ThresholdVars`].
#[derive(Clone, Debug)]
pub struct ThresholdStats<T> {
    pub mean_abs: Tensor<T>,
    pub max_abs: Option<Tensor<T>>,
    pub alpha: Tensor<T>,
    pub beta: Option<Tensor<T>>,
    pub mix: Tensor<T>,
    pub threshold: Tensor<T>,
}

impl<T: Real> ThresholdVars<'_, T> {
    pub fn stats(&self) -> ThresholdStats<T> {
        ThresholdStats {
            mean_abs: (*self.mean_abs.value()).clone(),
            max_abs: self.max_abs.map(|v| (*v.value()).clone()),
            alpha: (*self.alpha.value()).clone(),
            beta: self.beta.map(|v| (*v.value()).clone()),
            mix: (*self.mix.value()).clone(),
            threshold: (*self.threshold.value()).clone(),
        }
    }
}

/// Pre-activation residual block whose residual branch is denoised by a
/// learned per-channel threshold.
#[derive(Clone, Debug)]
pub struct ShrinkageBlock {
    pub name: String,
    pub bn1: BatchNorm,
    pub conv1: Conv2d,
    pub bn2: BatchNorm,
    pub conv2: Conv2d,
    pub mean_path: ScalingPath,
    pub max_path: Option<ScalingPath>,
    /// Mixing weight before the sigmoid; absent with a single path.
    pub gamma_raw: Option<ParamId>,
    /// Threshold scale before the softplus.
    pub kappa_raw: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub downsample: bool,
    pub thresholding: Thresholding,
    pub paths: ThresholdPaths,
}

/// `softplus⁻¹(1)`, so the threshold scale starts at 1.
pub const KAPPA_RAW_INIT: f64 = 0.541_324_854_612_918_1;

impl ShrinkageBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        downsample: bool,
        thresholding: Thresholding,
        paths: ThresholdPaths,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if out_channels < in_channels {
            return Err(Error::invalid(format!(
                "block `{name}` cannot reduce channels ({in_channels} -> {out_channels})"
            )));
        }
        let stride = if downsample { (2, 1) } else { (1, 1) };
        let bn1 = BatchNorm::new(store, &format!("{name}/bn1"), in_channels)?;
        let conv1 = Conv2d::new(store, &format!("{name}/conv1"), (3, 3), in_channels, out_channels, stride, (1, 1), rng)?;
        let bn2 = BatchNorm::new(store, &format!("{name}/bn2"), out_channels)?;
        let conv2 = Conv2d::new(store, &format!("{name}/conv2"), (3, 3), out_channels, out_channels, (1, 1), (1, 1), rng)?;
        let mean_path = ScalingPath::new(store, &format!("{name}/mean_path"), out_channels, rng)?;
        let (max_path, gamma_raw) = match paths {
            ThresholdPaths::Dual => (
                Some(ScalingPath::new(store, &format!("{name}/max_path"), out_channels, rng)?),
                Some(store.add(format!("{name}/gamma_raw"), Tensor::zeros(&[1]), ParamKind::Scalar)?),
            ),
            ThresholdPaths::Single => (None, None),
        };
        let kappa_raw = store.add(
            format!("{name}/kappa_raw"),
            Tensor::full(&[1], T::of(KAPPA_RAW_INIT)),
            ParamKind::Scalar,
        )?;
        Ok(Self {
            name: name.to_string(),
            bn1,
            conv1,
            bn2,
            conv2,
            mean_path,
            max_path,
            gamma_raw,
            kappa_raw,
            in_channels,
            out_channels,
            downsample,
            thresholding,
            paths,
        })
    }

    pub fn param_count(&self) -> usize {
        self.bn1.param_count()
            + self.conv1.param_count()
            + self.bn2.param_count()
            + self.conv2.param_count()
            + self.mean_path.param_count()
            + self.max_path.as_ref().map_or(0, ScalingPath::param_count)
            + usize::from(self.gamma_raw.is_some())
            + 1
    }

    /// Current `γ = σ(gamma_raw)`; 1 with a single path.
    pub fn gamma<T: Real>(&self, store: &ParamStore<T>) -> f64 {
        self.gamma_raw
            .map_or(1.0, |id| crate::autodiff::sigmoid(store.value(id).item().f64()))
    }

    /// Current `κ = softplus(kappa_raw)`.
    pub fn kappa<T: Real>(&self, store: &ParamStore<T>) -> f64 {
        softplus(store.value(self.kappa_raw).item().f64())
    }

    /// Per-channel thresholds for the residual features `r: [N, S.., C]`.
    pub fn compute_threshold<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, r: Var<'t, T>) -> Result<ThresholdVars<'t, T>> {
        let a = r.abs();
        let mean_abs = a.global_avg_pool()?;
        let alpha = self.mean_path.forward(s, mean_abs)?;
        let kappa = s.param(self.kappa_raw).softplus();
        let (max_abs, beta, mix) = match (&self.max_path, self.gamma_raw) {
            (Some(path), Some(gamma_raw)) => {
                let max_abs = a.global_max_pool()?;
                let beta = path.forward(s, max_abs)?;
                let gamma = s.param(gamma_raw).sigmoid();
                // γα + (1 − γ)β = β + γ(α − β)
                let mix = beta.add(&alpha.sub(&beta)?.mul(&gamma)?)?;
                (Some(max_abs), Some(beta), mix)
            }
            _ => (None, None, alpha),
        };
        let threshold = mix.mul(&kappa)?;
        Ok(ThresholdVars {
            mean_abs,
            max_abs,
            alpha,
            beta,
            mix,
            threshold,
        })
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(self.forward_with_stats(s, x)?.0)
    }

    pub fn forward_with_stats<'t, T: Real>(
        &self,
        s: &mut Session<'t, '_, T>,
        x: Var<'t, T>,
    ) -> Result<(Var<'t, T>, ThresholdVars<'t, T>)> {
        let h = self.bn1.forward(s, x)?.relu();
        let r1 = self.conv1.forward(s, h)?;
        let h = self.bn2.forward(s, r1)?.relu();
        let r2 = self.conv2.forward(s, h)?;
        let stats = self.compute_threshold(s, r2)?;
        let denoised = threshold(self.thresholding, r2, stats.threshold)?;

        let mut identity = x;
        if self.downsample {
            identity = identity.avg_pool2d((2, 1), (2, 1))?;
        }
        if self.out_channels != self.in_channels {
            identity = identity.pad_channels(self.out_channels)?;
        }
        if identity.shape() != denoised.shape() {
            return Err(Error::ShapeMismatch {
                op: "residual_add",
                lhs: denoised.shape(),
                rhs: identity.shape(),
            });
        }
        Ok((denoised.add(&identity)?, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::gradcheck::{compare_with_finite_differences, random_tensor, GRAD_TOL};
    use crate::nn::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(paths: ThresholdPaths, thresholding: Thresholding, cin: usize, cout: usize, down: bool) -> (ShrinkageBlock, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = ShrinkageBlock::new(&mut store, "block", cin, cout, down, thresholding, paths, &mut rng).unwrap();
        (b, store)
    }

    #[test]
    fn initial_scalars() {
        let (b, store) = block(ThresholdPaths::Dual, Thresholding::Garrote, 4, 4, false);
        assert!((b.gamma(&store) - 0.5).abs() < 1e-15);
        assert!((b.kappa(&store) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_path_is_smaller() {
        let (dual, _) = block(ThresholdPaths::Dual, Thresholding::Garrote, 8, 16, true);
        let (single, store) = block(ThresholdPaths::Single, Thresholding::Garrote, 8, 16, true);
        assert!(single.param_count() < dual.param_count());
        assert_eq!(single.param_count(), store.trainable_count());
        assert!(single.max_path.is_none() && single.gamma_raw.is_none());
    }

    #[test]
    fn zero_convolutions_pass_the_identity() {
        for down in [false, true] {
            let (b, mut store) = block(ThresholdPaths::Dual, Thresholding::Garrote, 2, 4, down);
            for conv in [&b.conv1, &b.conv2] {
                store.get_mut(conv.kernel).value.fill(0.0);
            }
            let x = random_tensor(&[2, 6, 3, 2], 4, 1.0);
            let tape = Tape::new();
            let mut s = Session::new(&tape, &mut store, Mode::Train);
            let y = b.forward(&mut s, tape.constant(x.clone())).unwrap();
            let ident = tape.constant(x);
            let ident = if down { ident.avg_pool2d((2, 1), (2, 1)).unwrap() } else { ident };
            let ident = ident.pad_channels(4).unwrap();
            assert_eq!(*y.value(), *ident.value());
        }
    }

    #[test]
    fn output_shapes() {
        let (b, mut store) = block(ThresholdPaths::Single, Thresholding::Soft, 4, 8, true);
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Train);
        let y = b.forward(&mut s, tape.constant(random_tensor(&[3, 9, 4, 4], 5, 1.0))).unwrap();
        assert_eq!(y.shape(), vec![3, 5, 4, 8]);
    }

    #[test]
    fn thresholds_are_a_convex_mix() {
        let (b, mut store) = block(ThresholdPaths::Dual, Thresholding::Garrote, 4, 4, false);
        store.get_mut(b.gamma_raw.unwrap()).value = Tensor::full(&[1], 0.7);
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Train);
        let (_, vars) = b.forward_with_stats(&mut s, tape.constant(random_tensor(&[4, 6, 3, 4], 6, 1.0))).unwrap();
        let st = vars.stats();
        let beta = st.beta.unwrap();
        for ((&a, &bt), &m) in st.alpha.data().iter().zip(beta.data()).zip(st.mix.data()) {
            assert!(a > 0.0 && a < 1.0 && bt > 0.0 && bt < 1.0);
            assert!(a.min(bt) <= m && m <= a.max(bt));
        }
        assert!(st.threshold.data().iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn scalar_gradients_match_finite_differences() {
        for thresholding in [Thresholding::Garrote, Thresholding::Soft] {
            let (b, store) = block(ThresholdPaths::Dual, thresholding, 2, 2, false);
            let x = random_tensor(&[2, 5, 3, 2], 7, 1.5);
            let ids = [b.gamma_raw.unwrap(), b.kappa_raw];
            let run = |store: &mut ParamStore<f64>, tape: &Tape<f64>| -> Result<f64> {
                let mut s = Session::new(tape, store, Mode::Train).with_grad(false);
                let y = b.forward(&mut s, tape.constant(x.clone()))?;
                let w = tape.constant(random_tensor(&y.shape(), 8, 1.0));
                Ok(y.mul(&w)?.sum().value().item())
            };
            let mut train_store = store.clone();
            let tape = Tape::with_kink_tracking();
            let mut s = Session::new(&tape, &mut train_store, Mode::Train);
            let y = b.forward(&mut s, tape.constant(x.clone())).unwrap();
            let w = tape.constant(random_tensor(&y.shape(), 8, 1.0));
            let loss = y.mul(&w).unwrap().sum();
            let base = tape.kink_signature();
            let grads = tape.backward(loss).unwrap();
            s.accumulate_grads(&grads);
            let analytic: Vec<f64> = ids.iter().map(|&id| train_store.get(id).grad.item()).collect();
            let report = compare_with_finite_differences(&analytic, 1e-5, 1e-6, base, |i, delta| {
                let mut probe = store.clone();
                probe.get_mut(ids[i]).value.data_mut()[0] += delta;
                let tape = Tape::with_kink_tracking();
                let loss = run(&mut probe, &tape)?;
                Ok((loss, tape.kink_signature()))
            })
            .unwrap();
            assert_eq!(report.checked, 2, "{report:?}");
            assert!(report.max_rel_err < GRAD_TOL, "{report:?}");
        }
    }
}
