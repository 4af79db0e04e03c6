use super::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{broadcast_shape, for_each_broadcast, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

struct Binary {
    kind: BinaryKind,
}

impl<T: Real> Function<T> for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (ctx.inputs[0], ctx.inputs[1]);
        let g = ctx.grad.data();
        let mut ga = ctx.needs[0].then(|| Tensor::zeros(a.shape()));
        let mut gb = ctx.needs[1].then(|| Tensor::zeros(b.shape()));
        let (ad, bd) = (a.data(), b.data());
        {
            let mut ga_d = ga.as_mut().map(|t| t.data_mut());
            let mut gb_d = gb.as_mut().map(|t| t.data_mut());
            for_each_broadcast(ctx.output.shape(), a.shape(), b.shape(), |o, ia, ib| {
                let go = g[o];
                let (da, db) = match self.kind {
                    BinaryKind::Add => (go, go),
                    BinaryKind::Sub => (go, -go),
                    BinaryKind::Mul => (go * bd[ib], go * ad[ia]),
                    BinaryKind::Div => (go / bd[ib], -go * ad[ia] / (bd[ib] * bd[ib])),
                };
                if let Some(ga) = ga_d.as_deref_mut() {
                    ga[ia] += da;
                }
                if let Some(gb) = gb_d.as_deref_mut() {
                    gb[ib] += db;
                }
            });
        }
        vec![ga, gb]
    }
}

fn binary<'t, T: Real>(kind: BinaryKind, a: &Var<'t, T>, b: &Var<'t, T>) -> Result<Var<'t, T>> {
    let (av, bv) = (a.value(), b.value());
    let out_shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| Error::ShapeMismatch {
        op: <Binary as Function<T>>::name(&Binary { kind }),
        lhs: av.shape().to_vec(),
        rhs: bv.shape().to_vec(),
    })?;
    let mut out = Tensor::zeros(&out_shape);
    {
        let (ad, bd) = (av.data(), bv.data());
        let od = out.data_mut();
        for_each_broadcast(&out_shape, av.shape(), bv.shape(), |o, ia, ib| {
            od[o] = match kind {
                BinaryKind::Add => ad[ia] + bd[ib],
                BinaryKind::Sub => ad[ia] - bd[ib],
                BinaryKind::Mul => ad[ia] * bd[ib],
                BinaryKind::Div => ad[ia] / bd[ib],
            };
        });
    }
    Ok(a.tape().apply(out, &[*a, *b], Binary { kind }))
}

/// Elementwise unary operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Neg,
    Abs,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Softplus,
    Sqrt,
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl UnaryKind {
    fn eval<T: Real>(self, x: T) -> T {
        match self {
            UnaryKind::Neg => -x,
            UnaryKind::Abs => x.abs(),
            UnaryKind::Relu => x.max(T::zero()),
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::Tanh => x.tanh(),
            UnaryKind::Exp => x.exp(),
            UnaryKind::Log => x.ln(),
            UnaryKind::Softplus => softplus(x),
            UnaryKind::Sqrt => x.sqrt(),
        }
    }

    /// dy/dx from the input `x` and output `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self {
            UnaryKind::Neg => -one,
            UnaryKind::Abs => {
                if x > zero {
                    one
                } else if x < zero {
                    -one
                } else {
                    zero
                }
            }
            // Subgradient 0 at the kink.
            UnaryKind::Relu => {
                if x > zero {
                    one
                } else {
                    zero
                }
            }
            UnaryKind::Sigmoid => y * (one - y),
            UnaryKind::Tanh => one - y * y,
            UnaryKind::Exp => y,
            UnaryKind::Log => one / x,
            UnaryKind::Softplus => sigmoid(x),
            UnaryKind::Sqrt => one / (T::of(2.0) * y),
        }
    }

    fn is_kinked(self) -> bool {
        matches!(self, UnaryKind::Abs | UnaryKind::Relu)
    }
}

struct Unary {
    kind: UnaryKind,
}

impl<T: Real> Function<T> for Unary {
    fn name(&self) -> &'static str {
        "unary"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0].data();
        let y = ctx.output.data();
        let g = ctx.grad.data();
        let data = (0..x.len())
            .map(|i| g[i] * self.kind.derivative(x[i], y[i]))
            .collect();
        vec![Some(Tensor::from_parts(ctx.output.shape().to_vec(), data))]
    }
}

struct AffineScalar<T> {
    mul: T,
}

impl<T: Real> Function<T> for AffineScalar<T> {
    fn name(&self) -> &'static str {
        "affine_scalar"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let m = self.mul;
        vec![Some(ctx.grad.map(|g| g * m))]
    }
}

struct SumAll {
    shape: Vec<usize>,
    scale: f64,
}

impl<T: Real> Function<T> for SumAll {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let g = ctx.grad.item() * T::of(self.scale);
        vec![Some(Tensor::full(&self.shape, g))]
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        binary(BinaryKind::Add, self, other)
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        binary(BinaryKind::Sub, self, other)
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        binary(BinaryKind::Mul, self, other)
    }

    pub fn div(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        binary(BinaryKind::Div, self, other)
    }

    pub fn unary(&self, kind: UnaryKind) -> Var<'t, T> {
        let x = self.value();
        let out = x.map(|v| kind.eval(v));
        if kind.is_kinked() {
            let zero = T::zero();
            self.tape().record_kinks(x.data().iter().map(|&v| {
                if v > zero {
                    1
                } else if v < zero {
                    2
                } else {
                    3
                }
            }));
        }
        self.tape().apply(out, &[*self], Unary { kind })
    }

    pub fn neg(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Neg)
    }

    pub fn abs(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Abs)
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Relu)
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn tanh(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Tanh)
    }

    pub fn exp(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Exp)
    }

    pub fn ln(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Log)
    }

    pub fn softplus(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Softplus)
    }

    pub fn sqrt(&self) -> Var<'t, T> {
        self.unary(UnaryKind::Sqrt)
    }

    /// `self · c`.
    pub fn scale(&self, c: f64) -> Var<'t, T> {
        let c = T::of(c);
        let out = self.value().map(|v| v * c);
        self.tape().apply(out, &[*self], AffineScalar { mul: c })
    }

    /// `self + c`.
    pub fn add_scalar(&self, c: f64) -> Var<'t, T> {
        let c = T::of(c);
        let out = self.value().map(|v| v + c);
        self.tape().apply(out, &[*self], AffineScalar { mul: T::one() })
    }

    /// `c − self`.
    pub fn rsub_scalar(&self, c: f64) -> Var<'t, T> {
        let c = T::of(c);
        let out = self.value().map(|v| c - v);
        self.tape().apply(out, &[*self], AffineScalar { mul: -T::one() })
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Var<'t, T> {
        let x = self.value();
        let out = Tensor::scalar(x.sum());
        let shape = x.shape().to_vec();
        self.tape().apply(out, &[*self], SumAll { shape, scale: 1.0 })
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean(&self) -> Var<'t, T> {
        let x = self.value();
        let n = x.numel() as f64;
        let out = Tensor::scalar(x.sum() / T::of(n));
        let shape = x.shape().to_vec();
        self.tape().apply(out, &[*self], SumAll { shape, scale: 1.0 / n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::gradcheck::{check_gradients, random_tensor};

    #[test]
    fn pointwise_values() {
        let tape = Tape::<f64>::new();
        let x = tape.var(Tensor::from_f64(&[3], &[0.0, -3.0, -2.5]).unwrap());
        assert_eq!(x.sigmoid().value().data()[0], 0.5);
        assert_eq!(x.relu().value().data()[1], 0.0);
        assert_eq!(x.abs().value().data()[2], 2.5);
        let loss = x.abs().sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data()[2], -1.0);
    }

    #[test]
    fn abs_gradient_matches_finite_difference() {
        let x = Tensor::<f64>::from_f64(&[1], &[-2.5]).unwrap();
        check_gradients(&[x], 1e-4, 1e-6, |_, v| Ok(v[0].abs().sum())).unwrap();
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let tape = Tape::<f64>::new();
        let a = tape.var(Tensor::zeros(&[4, 3]));
        let b = tape.var(Tensor::zeros(&[4]));
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("[4, 3]") && err.contains("[4]"), "{err}");
    }

    #[test]
    fn broadcast_gradients_sum_over_broadcast_axes() {
        let a = random_tensor(&[3, 2, 4], 1, 1.0);
        let b = random_tensor(&[2, 1], 2, 1.0).map(|v| v + 3.0);
        for kind in 0..4 {
            check_gradients(&[a.clone(), b.clone()], 1e-4, 1e-6, |_, v| {
                let y = match kind {
                    0 => v[0].add(&v[1])?,
                    1 => v[0].sub(&v[1])?,
                    2 => v[0].mul(&v[1])?,
                    _ => v[0].div(&v[1])?,
                };
                // Weight outputs so the check is not blind to permutations.
                let w = v[0].tape().constant(random_tensor(&[3, 2, 4], 9, 1.0));
                Ok(y.mul(&w)?.sum())
            })
            .unwrap();
        }
    }

    #[test]
    fn smooth_unary_gradients() {
        let x = random_tensor(&[5, 3], 4, 1.0);
        let kinds = [
            UnaryKind::Sigmoid,
            UnaryKind::Tanh,
            UnaryKind::Exp,
            UnaryKind::Softplus,
            UnaryKind::Neg,
        ];
        for kind in kinds {
            check_gradients(&[x.clone()], 1e-4, 1e-6, |_, v| {
                let w = v[0].tape().constant(random_tensor(&[5, 3], 5, 1.0));
                Ok(v[0].unary(kind).mul(&w)?.sum())
            })
            .unwrap();
        }
        let pos = x.map(|v| v.abs() + 0.5);
        for kind in [UnaryKind::Log, UnaryKind::Sqrt] {
            check_gradients(&[pos.clone()], 1e-4, 1e-6, |_, v| Ok(v[0].unary(kind).sum())).unwrap();
        }
    }

    #[test]
    fn kinked_unary_gradients_away_from_kinks() {
        // Keep every element at least 10·ε from zero.
        let x = random_tensor(&[20], 6, 1.0).map(|v| if v.abs() < 1e-3 { 0.5 } else { v });
        for kind in [UnaryKind::Relu, UnaryKind::Abs] {
            check_gradients(&[x.clone()], 1e-4, 1e-6, |_, v| {
                let w = v[0].tape().constant(random_tensor(&[20], 7, 1.0));
                Ok(v[0].unary(kind).mul(&w)?.sum())
            })
            .unwrap();
        }
    }

    #[test]
    fn scalar_affine_and_mean() {
        let x = random_tensor(&[4], 8, 1.0);
        check_gradients(&[x], 1e-4, 1e-6, |_, v| {
            Ok(v[0].scale(3.0).add_scalar(1.0).rsub_scalar(2.0).mul(&v[0])?.mean())
        })
        .unwrap();
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }
}
