use super::params::{Mode, ParamId, ParamKind, ParamStore, Session};
use crate::autodiff::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

/// Batch normalization over every axis but the last (channel) axis.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    /// Count of running-statistic updates; zero means the statistics were
    /// never collected.
    pub updates: ParamId,
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
}

struct BatchNormOp<T> {
    channels: usize,
    /// Normalized input x̂.
    normalized: Vec<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

impl<T: Real> Function<T> for BatchNormOp<T> {
    fn name(&self) -> &'static str {
        "batch_norm"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let c = self.channels;
        let g = ctx.grad.data();
        let gamma = ctx.inputs[1].data();
        let xhat = &self.normalized;
        let rows = g.len() / c;

        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
            for j in 0..c {
                sum_g[j] += gr[j];
                sum_gx[j] += gr[j] * xr[j];
            }
        }
        let gx = ctx.needs[0].then(|| {
            let mut out = Vec::with_capacity(g.len());
            if self.batch_stats {
                let m = T::of(rows as f64);
                for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for j in 0..c {
                        let k = gamma[j] * self.inv_std[j] / m;
                        out.push(k * (m * gr[j] - sum_g[j] - xr[j] * sum_gx[j]));
                    }
                }
            } else {
                for gr in g.chunks_exact(c) {
                    for j in 0..c {
                        out.push(gr[j] * gamma[j] * self.inv_std[j]);
                    }
                }
            }
            Tensor::from_parts(ctx.inputs[0].shape().to_vec(), out)
        });
        let ggamma = ctx.needs[1].then(|| Tensor::from_parts(vec![c], sum_gx.clone()));
        let gbeta = ctx.needs[2].then(|| Tensor::from_parts(vec![c], sum_g.clone()));
        vec![gx, ggamma, gbeta]
    }
}

/// Normalizes `x` with batch statistics (returned for the running update)
/// or with the given fixed statistics.
pub(crate) fn batch_norm<'t, T: Real>(
    x: Var<'t, T>,
    gamma: Var<'t, T>,
    beta: Var<'t, T>,
    fixed: Option<(&[T], &[T])>,
    eps: f64,
) -> Result<(Var<'t, T>, Option<(Vec<T>, Vec<T>)>)> {
    let xv = x.value();
    let c = gamma.value().numel();
    if xv.shape().last() != Some(&c) {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            lhs: xv.shape().to_vec(),
            rhs: vec![c],
        });
    }
    let (mean, var, batch) = match fixed {
        Some((m, v)) => (m.to_vec(), v.to_vec(), None),
        None => {
            let inv_rows = T::one() / T::of((xv.numel() / c) as f64);
            let mut mean = vec![T::zero(); c];
            for row in xv.data().chunks_exact(c) {
                for j in 0..c {
                    mean[j] += row[j];
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv_rows);
            let mut var = vec![T::zero(); c];
            for row in xv.data().chunks_exact(c) {
                for j in 0..c {
                    let d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v *= inv_rows);
            (mean.clone(), var.clone(), Some((mean, var)))
        }
    };
    let eps = T::of(eps);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let (gv, bv) = (gamma.value(), beta.value());
    let (g, b) = (gv.data(), bv.data());
    let mut normalized = Vec::with_capacity(xv.numel());
    let mut y = Vec::with_capacity(xv.numel());
    for row in xv.data().chunks_exact(c) {
        for j in 0..c {
            let h = (row[j] - mean[j]) * inv_std[j];
            normalized.push(h);
            y.push(g[j] * h + b[j]);
        }
    }
    let op = BatchNormOp {
        channels: c,
        normalized,
        inv_std,
        batch_stats: batch.is_some(),
    };
    let value = Tensor::from_parts(xv.shape().to_vec(), y);
    Ok((x.tape().apply(value, &[x, gamma, beta], op), batch))
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            name: name.to_string(),
            gamma: store.add(format!("{name}/gamma"), Tensor::ones(&[channels]), ParamKind::Norm)?,
            beta: store.add(format!("{name}/beta"), Tensor::zeros(&[channels]), ParamKind::Norm)?,
            running_mean: store.add(
                format!("{name}/running_mean"),
                Tensor::zeros(&[channels]),
                ParamKind::Buffer,
            )?,
            running_var: store.add(
                format!("{name}/running_var"),
                Tensor::ones(&[channels]),
                ParamKind::Buffer,
            )?,
            updates: store.add(format!("{name}/updates"), Tensor::zeros(&[1]), ParamKind::Buffer)?,
            channels,
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
        })
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let gamma = s.param(self.gamma);
        let beta = s.param(self.beta);
        match s.mode() {
            Mode::Train => {
                let (y, stats) = batch_norm(x, gamma, beta, None, self.eps)?;
                let (mean, var) = stats.expect("batch statistics");
                self.update_running(s.store_mut(), &mean, &var);
                Ok(y)
            }
            Mode::Infer => {
                let store = s.store();
                if store.value(self.updates).item() == T::zero() {
                    return Err(Error::UninitializedStatistics(self.name.clone()));
                }
                let mean = store.value(self.running_mean).data();
                let var = store.value(self.running_var).data();
                Ok(batch_norm(x, gamma, beta, Some((mean, var)), self.eps)?.0)
            }
        }
    }

    /// `running = m·running + (1 − m)·batch`.
    pub fn update_running<T: Real>(&self, store: &mut ParamStore<T>, mean: &[T], var: &[T]) {
        let m = T::of(self.momentum);
        let one_m = T::one() - m;
        for (r, &b) in store.get_mut(self.running_mean).value.data_mut().iter_mut().zip(mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in store.get_mut(self.running_var).value.data_mut().iter_mut().zip(var) {
            *r = m * *r + one_m * b;
        }
        store.get_mut(self.updates).value.data_mut()[0] += T::one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::gradcheck::{check_gradients, random_tensor};

    fn channel_stats(y: &Tensor<f64>, c: usize) -> Vec<(f64, f64)> {
        let rows = y.numel() / c;
        (0..c)
            .map(|j| {
                let vals: Vec<f64> = y.data().iter().skip(j).step_by(c).copied().collect();
                let mean = vals.iter().sum::<f64>() / rows as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
                (mean, var)
            })
            .collect()
    }

    #[test]
    fn train_mode_output_statistics() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "bn", 3).unwrap();
        store.get_mut(bn.gamma).value = Tensor::from_f64(&[3], &[2.0, 0.5, -1.5]).unwrap();
        store.get_mut(bn.beta).value = Tensor::from_f64(&[3], &[1.0, -2.0, 0.0]).unwrap();
        let x = random_tensor(&[64, 4, 3], 3, 5.0).map(|v| 3.0 * v + 7.0);
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Train);
        let y = bn.forward(&mut s, tape.constant(x)).unwrap().value();
        for ((mean, var), (g, b)) in channel_stats(&y, 3).into_iter().zip([(2.0, 1.0), (0.5, -2.0), (-1.5, 0.0)]) {
            assert!((mean - b).abs() < 1e-5, "mean {mean}");
            assert!((var - g * g).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn standardized_batch_passes_through() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "bn", 1).unwrap();
        let x = Tensor::from_f64(&[4, 1], &[-1.0, 1.0, -1.0, 1.0]).unwrap();
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Train);
        let y = bn.forward(&mut s, tape.constant(x.clone())).unwrap().value();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn running_mean_update_from_zero() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "bn", 1).unwrap();
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Train);
        bn.forward(&mut s, tape.constant(Tensor::full(&[8, 1], 1.0))).unwrap();
        assert!((store.value(bn.running_mean).item() - 0.01).abs() < 1e-15);
        // var of a constant batch is 0, so the running variance decays toward it.
        assert!((store.value(bn.running_var).item() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn infer_before_training_is_an_error() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "blk/bn1", 2).unwrap();
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Infer);
        let err = bn.forward(&mut s, tape.constant(Tensor::zeros(&[3, 2]))).unwrap_err();
        assert!(matches!(err, Error::UninitializedStatistics(ref n) if n == "blk/bn1"));
    }

    #[test]
    fn gradients_with_batch_and_fixed_statistics() {
        let x = random_tensor(&[6, 2, 3], 7, 2.0);
        let gamma = random_tensor(&[3], 8, 1.0);
        let beta = random_tensor(&[3], 9, 1.0);
        let mean = [0.3, -0.2, 0.1];
        let var = [0.7, 1.2, 0.4];
        for fixed in [None, Some((&mean[..], &var[..]))] {
            check_gradients(&[x.clone(), gamma.clone(), beta.clone()], 1e-4, 1e-6, |tape, v| {
                let (y, _) = batch_norm(v[0], v[1], v[2], fixed, BN_EPSILON)?;
                let w = tape.constant(random_tensor(&[6, 2, 3], 11, 1.0));
                Ok(y.mul(&w)?.sum())
            })
            .unwrap();
        }
    }
}
