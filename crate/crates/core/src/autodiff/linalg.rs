use super::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

struct MatMul {
    m: usize,
    k: usize,
    n: usize,
}

impl<T: Real> Function<T> for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let (a, b) = (ctx.inputs[0].data(), ctx.inputs[1].data());
        let g = ctx.grad.data();
        // dA = dC·Bᵀ
        let ga = ctx.needs[0].then(|| {
            let mut out = vec![T::zero(); m * k];
            T::gemm(m, n, k, g, (n, 1), b, (1, n), T::zero(), &mut out);
            Tensor::from_parts(vec![m, k], out)
        });
        // dB = Aᵀ·dC
        let gb = ctx.needs[1].then(|| {
            let mut out = vec![T::zero(); k * n];
            T::gemm(k, m, n, a, (1, k), g, (n, 1), T::zero(), &mut out);
            Tensor::from_parts(vec![k, n], out)
        });
        vec![ga, gb]
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// Matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        };
        let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
            return Err(mismatch());
        };
        if k != k2 {
            return Err(mismatch());
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, a.data(), (k, 1), b.data(), (n, 1), T::zero(), &mut out);
        Ok(self
            .tape()
            .apply(Tensor::from_parts(vec![m, n], out), &[*self, *other], MatMul { m, k, n }))
    }
}

struct Softmax {
    width: usize,
}

impl<T: Real> Function<T> for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let mut out = Vec::with_capacity(ctx.output.numel());
        for (p, g) in ctx
            .output
            .data()
            .chunks_exact(self.width)
            .zip(ctx.grad.data().chunks_exact(self.width))
        {
            let dot: T = p.iter().zip(g).map(|(&p, &g)| p * g).sum();
            out.extend(p.iter().zip(g).map(|(&p, &g)| p * (g - dot)));
        }
        vec![Some(Tensor::from_parts(ctx.output.shape().to_vec(), out))]
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let width = *x
            .shape()
            .last()
            .ok_or_else(|| Error::invalid("softmax of a scalar"))?;
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks_exact(width) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = out.len();
            out.extend(row.iter().map(|&v| (v - max).exp()));
            let total: T = out[start..].iter().copied().sum();
            out[start..].iter_mut().for_each(|v| *v /= total);
        }
        let value = Tensor::from_parts(x.shape().to_vec(), out);
        Ok(self.tape().apply(value, &[*self], Softmax { width }))
    }
}
