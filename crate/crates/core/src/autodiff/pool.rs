use super::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `[N, S.., C]` viewed as `(N, S, C)`.
fn spatial_view(shape: &[usize], op: &str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::InvalidShape(format!(
            "{op} expects [N, .., C] input, got {shape:?}"
        )));
    }
    let n = shape[0];
    let c = shape[shape.len() - 1];
    let s = shape[1..shape.len() - 1].iter().product();
    Ok((n, s, c))
}

struct GlobalAvg {
    view: (usize, usize, usize),
}

impl<T: Real> Function<T> for GlobalAvg {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (n, s, c) = self.view;
        let g = ctx.grad.data();
        let inv = T::one() / T::of(s as f64);
        let mut out = Vec::with_capacity(n * s * c);
        for b in 0..n {
            for _ in 0..s {
                out.extend(g[b * c..(b + 1) * c].iter().map(|&v| v * inv));
            }
        }
        vec![Some(Tensor::from_parts(ctx.inputs[0].shape().to_vec(), out))]
    }
}

struct GlobalMax {
    /// Flat input offset of the selected element per output.
    argmax: Vec<usize>,
}

impl<T: Real> Function<T> for GlobalMax {
    fn name(&self) -> &'static str {
        "global_max_pool"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let mut out = Tensor::zeros(ctx.inputs[0].shape());
        let od = out.data_mut();
        for (&src, &g) in self.argmax.iter().zip(ctx.grad.data()) {
            od[src] += g;
        }
        vec![Some(out)]
    }
}

#[derive(Clone, Copy)]
struct AvgPoolGeom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
    window: (usize, usize),
    stride: (usize, usize),
}

impl AvgPoolGeom {
    /// Input row/column range of one output position, truncated at the edge.
    fn window_at(&self, oy: usize, ox: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let y0 = oy * self.stride.0;
        let x0 = ox * self.stride.1;
        (y0..(y0 + self.window.0).min(self.h), x0..(x0 + self.window.1).min(self.w))
    }
}

fn pooled_len(input: usize, window: usize, stride: usize) -> usize {
    if input <= window {
        1
    } else {
        (input - window).div_ceil(stride) + 1
    }
}

struct AvgPool {
    geom: AvgPoolGeom,
}

impl<T: Real> Function<T> for AvgPool {
    fn name(&self) -> &'static str {
        "avg_pool2d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let p = self.geom;
        let g = ctx.grad.data();
        let mut out = Tensor::zeros(ctx.inputs[0].shape());
        let od = out.data_mut();
        for b in 0..p.n {
            for oy in 0..p.oh {
                for ox in 0..p.ow {
                    let (ys, xs) = p.window_at(oy, ox);
                    let inv = T::one() / T::of((ys.len() * xs.len()) as f64);
                    let go = &g[((b * p.oh + oy) * p.ow + ox) * p.c..][..p.c];
                    for y in ys {
                        for x in xs.clone() {
                            let dst = &mut od[((b * p.h + y) * p.w + x) * p.c..][..p.c];
                            for (d, &v) in dst.iter_mut().zip(go) {
                                *d += v * inv;
                            }
                        }
                    }
                }
            }
        }
        vec![Some(out)]
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// Global average pooling `[N, S.., C] → [N, C]`.
    pub fn global_avg_pool(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, s, c) = spatial_view(x.shape(), "global_avg_pool")?;
        let xd = x.data();
        let inv = T::one() / T::of(s as f64);
        let mut out = vec![T::zero(); n * c];
        for b in 0..n {
            let acc = &mut out[b * c..(b + 1) * c];
            for row in xd[b * s * c..(b + 1) * s * c].chunks_exact(c) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        Ok(self
            .tape()
            .apply(Tensor::from_parts(vec![n, c], out), &[*self], GlobalAvg { view: (n, s, c) }))
    }

    /// Global max pooling `[N, S.., C] → [N, C]`; gradient goes to the first maximal position.
    pub fn global_max_pool(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, s, c) = spatial_view(x.shape(), "global_max_pool")?;
        let xd = x.data();
        let mut out = vec![T::zero(); n * c];
        let mut argmax = vec![0usize; n * c];
        for b in 0..n {
            for ch in 0..c {
                let base = b * s * c + ch;
                let mut best = base;
                for pos in 1..s {
                    let off = base + pos * c;
                    if xd[off] > xd[best] {
                        best = off;
                    }
                }
                out[b * c + ch] = xd[best];
                argmax[b * c + ch] = best;
            }
        }
        self.tape().record_kinks(argmax.iter().map(|&i| i as u64));
        Ok(self
            .tape()
            .apply(Tensor::from_parts(vec![n, c], out), &[*self], GlobalMax { argmax }))
    }

    /// Average pooling over `[N, H, W, C]`; a final partial window is
    /// averaged over the elements it actually covers.
    pub fn avg_pool2d(&self, window: (usize, usize), stride: (usize, usize)) -> Result<Var<'t, T>> {
        let x = self.value();
        let &[n, h, w, c] = x.shape() else {
            return Err(Error::InvalidShape(format!(
                "avg_pool2d expects [N, H, W, C], got {:?}",
                x.shape()
            )));
        };
        if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::invalid("pool window and stride must be >= 1"));
        }
        if window.0 > h || window.1 > w {
            return Err(Error::invalid(format!(
                "pool window {window:?} exceeds spatial extent ({h}, {w})"
            )));
        }
        let geom = AvgPoolGeom {
            n,
            h,
            w,
            c,
            oh: pooled_len(h, window.0, stride.0),
            ow: pooled_len(w, window.1, stride.1),
            window,
            stride,
        };
        let xd = x.data();
        let mut out = vec![T::zero(); n * geom.oh * geom.ow * c];
        for b in 0..n {
            for oy in 0..geom.oh {
                for ox in 0..geom.ow {
                    let (ys, xs) = geom.window_at(oy, ox);
                    let inv = T::one() / T::of((ys.len() * xs.len()) as f64);
                    let dst = &mut out[((b * geom.oh + oy) * geom.ow + ox) * c..][..c];
                    for y in ys {
                        for xx in xs.clone() {
                            let src = &xd[((b * h + y) * w + xx) * c..][..c];
                            for (d, &v) in dst.iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                    }
                    dst.iter_mut().for_each(|d| *d *= inv);
                }
            }
        }
        let value = Tensor::from_parts(vec![n, geom.oh, geom.ow, c], out);
        Ok(self.tape().apply(value, &[*self], AvgPool { geom }))
    }
}
