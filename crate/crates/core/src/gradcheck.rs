//! Central finite-difference gradient checking in 64-bit arithmetic.
//!
//! Every evaluation runs on a kink-tracking [`Tape`]; a coordinate whose
//! `+ε` or `−ε` probe crosses a relu, abs, max-pool or threshold branch is
//! skipped instead of compared, since the function is not differentiable on
//! that interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvGeometry, Padding, Tape, Var};
use crate::error::{Error, Result};
use crate::model::AmcModel;
use crate::nn::{Mode, Session, BN_EPSILON};
use crate::shrinkage::{threshold, Thresholding};
use crate::tensor::Tensor;
use crate::train::cce_loss;

/// Relative error bound for 64-bit checks.
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Flat coordinate of the worst comparison and its (analytic, numeric) pair.
    pub worst: Option<(usize, f64, f64)>,
}

impl GradReport {
    fn merge(&mut self, other: &GradReport, offset: usize) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel_err > self.max_rel_err || self.worst.is_none() && other.worst.is_some() {
            self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
            self.worst = other.worst.map(|(i, a, n)| (i + offset, a, n));
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic[i]` against `(f(+ε) − f(−ε)) / 2ε` for every `i`.
///
/// `eval(i, delta)` must evaluate the loss with coordinate `i` shifted by
/// `delta` (restoring it afterwards) and return the loss together with the
/// tape's kink signature. `base_signature` is the signature of the
/// unperturbed pass.
pub fn compare_with_finite_differences(
    analytic: &[f64],
    eps: f64,
    floor: f64,
    base_signature: u64,
    mut eval: impl FnMut(usize, f64) -> Result<(f64, u64)>,
) -> Result<GradReport> {
    let mut report = GradReport::default();
    for (i, &a) in analytic.iter().enumerate() {
        let (plus, sig_p) = eval(i, eps)?;
        let (minus, sig_m) = eval(i, -eps)?;
        if sig_p != base_signature || sig_m != base_signature {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(a, numeric, floor);
        report.checked += 1;
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = Some((i, a, numeric));
        }
    }
    Ok(report)
}

/// Gradient report for a scalar function of several tensors.
pub fn gradient_report<F>(inputs: &[Tensor<f64>], eps: f64, floor: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::with_kink_tracking();
    let vars: Vec<_> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let base = tape.kink_signature();
    let grads = tape.backward(loss)?;

    let mut report = GradReport::default();
    let mut offset = 0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .map(|g| g.to_f64_vec())
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let mut probe = inputs.to_vec();
        let part = compare_with_finite_differences(&analytic, eps, floor, base, |i, delta| {
            probe[k].data_mut()[i] += delta;
            let tape = Tape::with_kink_tracking();
            let vars: Vec<_> = probe.iter().map(|t| tape.constant(t.clone())).collect();
            let loss = f(&tape, &vars)?.value().item();
            probe[k].data_mut()[i] -= delta;
            Ok((loss, tape.kink_signature()))
        })?;
        report.merge(&part, offset);
        offset += input.numel();
    }
    Ok(report)
}

/// Like [`gradient_report`] but fails when the worst relative error reaches
/// [`GRAD_TOL`] or nothing could be checked.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], eps: f64, floor: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let report = gradient_report(inputs, eps, floor, f)?;
    if report.checked == 0 || report.max_rel_err >= GRAD_TOL {
        return Err(Error::invalid(format!("gradient check failed: {report:?}")));
    }
    Ok(report)
}

fn model_loss<'t, 'm>(
    model: &'m mut AmcModel<f64>,
    tape: &'t Tape<f64>,
    iq: &Tensor<f64>,
    ap: &Tensor<f64>,
    targets: &Tensor<f64>,
    grad: bool,
) -> Result<(Var<'t, f64>, Session<'t, 'm, f64>)> {
    let lambda = model.config.l2_lambda;
    let mut s = Session::new(tape, &mut model.store, Mode::Train).with_grad(grad);
    let out = model.net.forward(&mut s, tape.constant(iq.clone()), tape.constant(ap.clone()))?;
    let loss = cce_loss(out.probabilities, targets)?.add(&s.l2_penalty(lambda)?)?;
    Ok((loss, s))
}

/// Checks d(cross-entropy + L2)/d(parameter) of a whole model in training
/// mode. `per_tensor` caps the coordinates probed in each trainable tensor
/// (chosen at random with `seed`); `None` probes all of them.
#[allow(clippy::too_many_arguments)]
pub fn model_gradient_report(
    model: &mut AmcModel<f64>,
    iq: &Tensor<f64>,
    ap: &Tensor<f64>,
    labels: &[usize],
    eps: f64,
    floor: f64,
    per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradReport> {
    let classes = model.config.num_classes;
    if labels.len() != iq.shape()[0] || labels.iter().any(|&l| l >= classes) {
        return Err(Error::invalid("labels must match the batch and the class count"));
    }
    let targets = Tensor::from_fn(&[labels.len(), classes], |i| {
        if labels[i / classes] == i % classes { 1.0 } else { 0.0 }
    });
    model.store.zero_grad();
    let tape = Tape::with_kink_tracking();
    let (loss, mut s) = model_loss(model, &tape, iq, ap, &targets, true)?;
    let base = tape.kink_signature();
    let grads = tape.backward(loss)?;
    s.accumulate_grads(&grads);
    drop(s);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model
        .store
        .iter()
        .filter(|(_, p)| p.kind.trainable())
        .map(|(id, _)| id)
        .collect();
    let mut report = GradReport::default();
    let mut offset = 0;
    for id in ids {
        let p = model.store.get(id);
        let n = p.value.numel();
        let coords: Vec<usize> = match per_tensor {
            Some(k) if k < n => rand::seq::index::sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        let analytic: Vec<f64> = coords.iter().map(|&i| p.grad.data()[i]).collect();
        let part = compare_with_finite_differences(&analytic, eps, floor, base, |j, delta| {
            let i = coords[j];
            model.store.get_mut(id).value.data_mut()[i] += delta;
            let tape = Tape::with_kink_tracking();
            let value = model_loss(model, &tape, iq, ap, &targets, false).map(|(l, _)| l.value().item());
            model.store.get_mut(id).value.data_mut()[i] -= delta;
            Ok((value?, tape.kink_signature()))
        })?;
        report.merge(&part, offset);
        offset += n;
    }
    Ok(report)
}

type OpCheck = fn() -> Result<GradReport>;

/// Weighted sum of `y` against fixed random weights, so every output
/// element gets a distinct upstream gradient.
fn probe<'t>(tape: &'t Tape<f64>, y: Var<'t, f64>) -> Result<Var<'t, f64>> {
    let w = tape.constant(random_tensor(&y.shape(), 999, 1.0));
    Ok(y.mul(&w)?.sum())
}

fn positive(shape: &[usize], seed: u64) -> Tensor<f64> {
    random_tensor(shape, seed, 1.0).map(|v| v.abs() + 0.5)
}

fn conv_geom(kernel: (usize, usize), cin: usize, cout: usize, stride: (usize, usize), dilation: (usize, usize)) -> ConvGeometry {
    ConvGeometry {
        kernel,
        in_channels: cin,
        out_channels: cout,
        stride,
        dilation,
        padding: Padding::Same,
    }
}

const EPS: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn unary(f: for<'t> fn(Var<'t, f64>) -> Var<'t, f64>, positive_input: bool) -> Result<GradReport> {
    let x = if positive_input { positive(&[3, 5], 1) } else { random_tensor(&[3, 5], 1, 2.0) };
    gradient_report(&[x], EPS, FLOOR, |tape, v| probe(tape, f(v[0])))
}

fn binary(f: for<'t> fn(Var<'t, f64>, Var<'t, f64>) -> Result<Var<'t, f64>>) -> Result<GradReport> {
    // Second operand broadcasts along the leading axis.
    let a = random_tensor(&[4, 3], 2, 1.5);
    let b = positive(&[3], 3);
    gradient_report(&[a, b], EPS, FLOOR, |tape, v| probe(tape, f(v[0], v[1])?))
}

const OPERATIONS: &[(&str, OpCheck)] = &[
    ("add", || binary(|a, b| a.add(&b))),
    ("sub", || binary(|a, b| a.sub(&b))),
    ("mul", || binary(|a, b| a.mul(&b))),
    ("div", || binary(|a, b| a.div(&b))),
    ("neg", || unary(|x| x.neg(), false)),
    ("abs", || unary(|x| x.abs(), false)),
    ("relu", || unary(|x| x.relu(), false)),
    ("sigmoid", || unary(|x| x.sigmoid(), false)),
    ("tanh", || unary(|x| x.tanh(), false)),
    ("exp", || unary(|x| x.exp(), false)),
    ("ln", || unary(|x| x.ln(), true)),
    ("softplus", || unary(|x| x.softplus(), false)),
    ("sqrt", || unary(|x| x.sqrt(), true)),
    ("scale", || unary(|x| x.scale(-1.7), false)),
    ("add_scalar", || unary(|x| x.add_scalar(0.3), false)),
    ("rsub_scalar", || unary(|x| x.rsub_scalar(1.0), false)),
    ("sum", || gradient_report(&[random_tensor(&[2, 3], 4, 1.0)], EPS, FLOOR, |_, v| Ok(v[0].sum().scale(1.3)))),
    ("mean", || gradient_report(&[random_tensor(&[2, 3], 5, 1.0)], EPS, FLOOR, |_, v| Ok(v[0].mean().scale(1.3)))),
    ("matmul", || {
        let a = random_tensor(&[3, 4], 6, 1.0);
        let b = random_tensor(&[4, 2], 7, 1.0);
        gradient_report(&[a, b], EPS, FLOOR, |tape, v| probe(tape, v[0].matmul(&v[1])?))
    }),
    ("softmax", || {
        gradient_report(&[random_tensor(&[3, 5], 8, 2.0)], EPS, FLOOR, |tape, v| probe(tape, v[0].softmax()?))
    }),
    ("conv2d", || {
        let cases = [
            conv_geom((3, 3), 2, 3, (1, 1), (1, 1)),
            conv_geom((3, 3), 3, 2, (2, 1), (1, 1)),
            conv_geom((3, 1), 1, 2, (1, 1), (2, 2)),
            conv_geom((1, 3), 1, 2, (1, 1), (2, 2)),
        ];
        let mut total = GradReport::default();
        for (i, g) in cases.into_iter().enumerate() {
            let seed = 10 + 3 * i as u64;
            let x = random_tensor(&[2, 6, 3, g.in_channels], seed, 1.0);
            let k = random_tensor(&[g.kernel.0, g.kernel.1, g.in_channels, g.out_channels], seed + 1, 1.0);
            let b = random_tensor(&[g.out_channels], seed + 2, 1.0);
            let r = gradient_report(&[x, k, b], EPS, FLOOR, |tape, v| probe(tape, v[0].conv2d(&v[1], &v[2], g)?))?;
            total.merge(&r, 0);
        }
        Ok(total)
    }),
    ("global_avg_pool", || {
        gradient_report(&[random_tensor(&[2, 4, 3, 2], 20, 1.0)], EPS, FLOOR, |tape, v| {
            probe(tape, v[0].global_avg_pool()?)
        })
    }),
    ("global_max_pool", || {
        gradient_report(&[random_tensor(&[2, 4, 3, 2], 21, 1.0)], EPS, FLOOR, |tape, v| {
            probe(tape, v[0].global_max_pool()?)
        })
    }),
    ("avg_pool2d", || {
        gradient_report(&[random_tensor(&[2, 5, 3, 2], 22, 1.0)], EPS, FLOOR, |tape, v| {
            probe(tape, v[0].avg_pool2d((2, 1), (2, 1))?)
        })
    }),
    ("reshape", || {
        gradient_report(&[random_tensor(&[2, 6], 23, 1.0)], EPS, FLOOR, |tape, v| probe(tape, v[0].reshape(&[3, 4])?))
    }),
    ("concat", || {
        let a = random_tensor(&[2, 3, 2], 24, 1.0);
        let b = random_tensor(&[2, 3, 1], 25, 1.0);
        gradient_report(&[a, b], EPS, FLOOR, |tape, v| probe(tape, Var::concat(&[v[0], v[1]], 2)?))
    }),
    ("pad_channels", || {
        gradient_report(&[random_tensor(&[2, 3, 2], 26, 1.0)], EPS, FLOOR, |tape, v| {
            probe(tape, v[0].pad_channels(5)?)
        })
    }),
    ("batch_norm", || {
        let x = random_tensor(&[6, 2, 3], 27, 2.0);
        let gamma = random_tensor(&[3], 28, 1.0);
        let beta = random_tensor(&[3], 29, 1.0);
        let (mean, var) = ([0.3, -0.2, 0.1], [0.7, 1.2, 0.4]);
        let mut total = GradReport::default();
        for fixed in [None, Some((&mean[..], &var[..]))] {
            let r = gradient_report(&[x.clone(), gamma.clone(), beta.clone()], EPS, FLOOR, |tape, v| {
                probe(tape, crate::nn::batch_norm(v[0], v[1], v[2], fixed, BN_EPSILON)?.0)
            })?;
            total.merge(&r, 0);
        }
        Ok(total)
    }),
    ("lstm", || {
        let x = random_tensor(&[2, 6, 2], 30, 1.0);
        let wi = random_tensor(&[2, 16], 31, 0.6);
        let wh = random_tensor(&[4, 16], 32, 0.6);
        let b = random_tensor(&[16], 33, 0.3);
        gradient_report(&[x, wi, wh, b], EPS, FLOOR, |tape, v| probe(tape, crate::nn::lstm(v[0], v[1], v[2], v[3])?))
    }),
    ("garrote_threshold", || threshold_check(Thresholding::Garrote)),
    ("soft_threshold", || threshold_check(Thresholding::Soft)),
    ("cross_entropy", || {
        let logits = random_tensor(&[3, 4], 36, 2.0);
        let targets = Tensor::from_fn(&[3, 4], |i| if i % 4 == (i / 4 + 1) % 4 { 1.0 } else { 0.0 });
        gradient_report(&[logits], EPS, FLOOR, |_, v| cce_loss(v[0].softmax()?, &targets))
    }),
];

fn threshold_check(kind: Thresholding) -> Result<GradReport> {
    let x = random_tensor(&[2, 4, 2, 3], 34, 2.0);
    let thr = positive(&[2, 3], 35).map(|v| v - 0.3);
    gradient_report(&[x, thr], EPS, FLOOR, |tape, v| probe(tape, threshold(kind, v[0], v[1])?))
}

/// Names of the operations covered by [`operation_reports`].
pub fn operation_names() -> Vec<&'static str> {
    OPERATIONS.iter().map(|(n, _)| *n).collect()
}

/// Finite-difference reports (ε = 1e-4) for every differentiable operation.
pub fn operation_reports() -> Result<Vec<(&'static str, GradReport)>> {
    OPERATIONS.iter().map(|(name, check)| Ok((*name, check()?))).collect()
}

/// Uniform samples in `[-scale, scale]`.
pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-scale..=scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_operation_matches_finite_differences() {
        for (name, r) in operation_reports().unwrap() {
            assert!(r.checked > 0, "{name}: nothing checked");
            assert!(r.max_rel_err < GRAD_TOL, "{name}: {r:?}");
        }
    }
}
