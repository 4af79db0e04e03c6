use super::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{numel, Real, Tensor};

struct Reshape;

impl<T: Real> Function<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let shape = ctx.inputs[0].shape().to_vec();
        vec![Some(Tensor::from_parts(shape, ctx.grad.data().to_vec()))]
    }
}

/// Memory layout of a concatenation along one axis: `outer` blocks, each
/// laid out as consecutive per-input runs of `len_i · inner` elements.
struct Concat {
    outer: usize,
    runs: Vec<usize>,
}

impl<T: Real> Function<T> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let g = ctx.grad.data();
        let mut parts: Vec<Vec<T>> = self.runs.iter().map(|r| Vec::with_capacity(r * self.outer)).collect();
        let block: usize = self.runs.iter().sum();
        for o in 0..self.outer {
            let mut off = o * block;
            for (part, &run) in parts.iter_mut().zip(&self.runs) {
                part.extend_from_slice(&g[off..off + run]);
                off += run;
            }
        }
        parts
            .into_iter()
            .zip(ctx.inputs)
            .zip(ctx.needs)
            .map(|((p, x), &need)| need.then(|| Tensor::from_parts(x.shape().to_vec(), p)))
            .collect()
    }
}

struct PadChannels {
    low: usize,
    channels: usize,
    target: usize,
}

impl<T: Real> Function<T> for PadChannels {
    fn name(&self) -> &'static str {
        "pad_channels"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let data = ctx
            .grad
            .data()
            .chunks_exact(self.target)
            .flat_map(|row| row[self.low..self.low + self.channels].iter().copied())
            .collect();
        vec![Some(Tensor::from_parts(ctx.inputs[0].shape().to_vec(), data))]
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let value = self.value().reshape(shape)?;
        Ok(self.tape().apply(value, &[*self], Reshape))
    }

    /// Concatenates `parts` along `axis`; all other axes must agree.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidShape(format!(
                "concat axis {axis} out of range for rank {}",
                base.len()
            )));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let outer = numel(&base[..axis]);
        let inner = numel(&base[axis + 1..]);
        let runs: Vec<usize> = values.iter().map(|v| v.shape()[axis] * inner).collect();
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for (v, &run) in values.iter().zip(&runs) {
                data.extend_from_slice(&v.data()[o * run..(o + 1) * run]);
            }
        }
        let value = Tensor::from_parts(out_shape, data);
        Ok(first.tape().apply(value, parts, Concat { outer, runs }))
    }

    /// Zero-pads the last axis to `target` channels, splitting the padding
    /// evenly with the extra channel on the high side.
    pub fn pad_channels(&self, target: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape();
        let channels = *shape.last().ok_or_else(|| Error::invalid("pad_channels on a scalar"))?;
        if target < channels {
            return Err(Error::invalid(format!(
                "cannot pad {channels} channels down to {target}"
            )));
        }
        let low = (target - channels) / 2;
        let mut data = Vec::with_capacity(x.numel() / channels * target);
        for row in x.data().chunks_exact(channels) {
            data.extend(std::iter::repeat_n(T::zero(), low));
            data.extend_from_slice(row);
            data.extend(std::iter::repeat_n(T::zero(), target - channels - low));
        }
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().unwrap() = target;
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.tape().apply(value, &[*self], PadChannels { low, channels, target }))
    }
}
