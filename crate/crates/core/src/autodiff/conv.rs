//! 2-D convolution over channels-last `[N, H, W, C]` feature maps, lowered
//! to a single GEMM through an im2col patch matrix.

use super::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that stride 1 preserves the spatial extent.
    Same,
    Valid,
}

/// Output extent and leading pad along one axis.
pub fn conv_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 || dilation == 0 || kernel == 0 {
        return Err(Error::invalid("kernel, stride and dilation must be >= 1"));
    }
    let span = (kernel - 1) * dilation + 1;
    match padding {
        Padding::Valid => {
            if span > input {
                return Err(Error::invalid(format!(
                    "effective kernel span {span} exceeds input extent {input} with valid padding"
                )));
            }
            Ok(((input - span) / stride + 1, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + span).saturating_sub(input);
            Ok((out, total / 2))
        }
    }
}

/// Static shape information of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: Padding,
}

#[derive(Clone, Copy, Debug)]
struct Resolved {
    n: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    pad_h: usize,
    pad_w: usize,
}

impl ConvGeometry {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (oh, _) = conv_output_len(h, self.kernel.0, self.stride.0, self.dilation.0, self.padding)?;
        let (ow, _) = conv_output_len(w, self.kernel.1, self.stride.1, self.dilation.1, self.padding)?;
        Ok((oh, ow))
    }

    /// Columns of the patch matrix: `kh·kw·Cin`.
    pub fn patch_len(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.in_channels
    }

    fn resolve(&self, input: &[usize]) -> Result<Resolved> {
        let &[n, h, w, c] = input else {
            return Err(Error::InvalidShape(format!(
                "conv2d expects [N, H, W, C] input, got {input:?}"
            )));
        };
        if c != self.in_channels {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: vec![self.kernel.0, self.kernel.1, self.in_channels, self.out_channels],
            });
        }
        let (oh, pad_h) = conv_output_len(h, self.kernel.0, self.stride.0, self.dilation.0, self.padding)?;
        let (ow, pad_w) = conv_output_len(w, self.kernel.1, self.stride.1, self.dilation.1, self.padding)?;
        Ok(Resolved {
            n,
            h,
            w,
            oh,
            ow,
            pad_h,
            pad_w,
        })
    }

    /// Visits `(patch_offset, input_offset, len)` for every in-bounds run of
    /// taps; taps adjacent along W are merged when the W dilation is 1.
    fn for_each_tap(&self, r: &Resolved, mut f: impl FnMut(usize, usize, usize)) {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (dh, dw) = self.dilation;
        let c = self.in_channels;
        let k = self.patch_len();
        for n in 0..r.n {
            for oy in 0..r.oh {
                for ox in 0..r.ow {
                    let row = (n * r.oh + oy) * r.ow + ox;
                    // In-bounds kx range for this output column.
                    let x0 = (ox * sw) as isize - r.pad_w as isize;
                    let kx_lo = if x0 >= 0 { 0 } else { ((-x0) as usize).div_ceil(dw) };
                    let kx_hi = if x0 >= r.w as isize {
                        0
                    } else {
                        kw.min((r.w as isize - 1 - x0) as usize / dw + 1)
                    };
                    if kx_lo >= kx_hi {
                        continue;
                    }
                    for ky in 0..kh {
                        let iy = (oy * sh + ky * dh) as isize - r.pad_h as isize;
                        if iy < 0 || iy >= r.h as isize {
                            continue;
                        }
                        let base = (n * r.h + iy as usize) * r.w;
                        let ix = |kx: usize| (x0 + (kx * dw) as isize) as usize;
                        if dw == 1 {
                            let col = (ky * kw + kx_lo) * c;
                            f(row * k + col, (base + ix(kx_lo)) * c, (kx_hi - kx_lo) * c);
                        } else {
                            for kx in kx_lo..kx_hi {
                                f(row * k + (ky * kw + kx) * c, (base + ix(kx)) * c, c);
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Real>(&self, r: &Resolved, x: &[T]) -> Vec<T> {
        let mut patches = vec![T::zero(); r.n * r.oh * r.ow * self.patch_len()];
        self.for_each_tap(r, |dst, src, c| {
            patches[dst..dst + c].copy_from_slice(&x[src..src + c]);
        });
        patches
    }

    fn col2im<T: Real>(&self, r: &Resolved, cols: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); r.n * r.h * r.w * self.in_channels];
        self.for_each_tap(r, |dst, src, c| {
            for (o, &v) in out[src..src + c].iter_mut().zip(&cols[dst..dst + c]) {
                *o += v;
            }
        });
        out
    }
}

struct Conv2d<T> {
    geom: ConvGeometry,
    resolved: Resolved,
    patches: Vec<T>,
}

impl<T: Real> Function<T> for Conv2d<T> {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let r = &self.resolved;
        let rows = r.n * r.oh * r.ow;
        let k = self.geom.patch_len();
        let cout = self.geom.out_channels;
        let g = ctx.grad.data();

        let gx = ctx.needs[0].then(|| {
            let mut cols = vec![T::zero(); rows * k];
            // dPatches = dY · Kᵀ
            T::gemm(rows, cout, k, g, (cout, 1), ctx.inputs[1].data(), (1, cout), T::zero(), &mut cols);
            let x = self.geom.col2im(r, &cols);
            Tensor::from_parts(ctx.inputs[0].shape().to_vec(), x)
        });
        let gk = ctx.needs[1].then(|| {
            let mut out = vec![T::zero(); k * cout];
            // dK = Patchesᵀ · dY
            T::gemm(k, rows, cout, &self.patches, (1, k), g, (cout, 1), T::zero(), &mut out);
            Tensor::from_parts(ctx.inputs[1].shape().to_vec(), out)
        });
        let gb = ctx.needs[2].then(|| {
            let mut out = vec![T::zero(); cout];
            for row in g.chunks_exact(cout) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            Tensor::from_parts(vec![cout], out)
        });
        vec![gx, gk, gb]
    }
}

impl<'t, T: Real> Var<'t, T> {
    /// Convolution of `[N, H, W, Cin]` with a `[kh, kw, Cin, Cout]` kernel and
    /// a `[Cout]` bias.
    pub fn conv2d(&self, kernel: &Var<'t, T>, bias: &Var<'t, T>, geom: ConvGeometry) -> Result<Var<'t, T>> {
        let x = self.value();
        let kv = kernel.value();
        let bv = bias.value();
        let expected_k = [geom.kernel.0, geom.kernel.1, geom.in_channels, geom.out_channels];
        if kv.shape() != expected_k {
            return Err(Error::ShapeMismatch {
                op: "conv2d kernel",
                lhs: kv.shape().to_vec(),
                rhs: expected_k.to_vec(),
            });
        }
        if bv.shape() != [geom.out_channels] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                lhs: bv.shape().to_vec(),
                rhs: vec![geom.out_channels],
            });
        }
        let r = geom.resolve(x.shape())?;
        let patches = geom.im2col(&r, x.data());
        let rows = r.n * r.oh * r.ow;
        let cout = geom.out_channels;
        let mut out = Vec::with_capacity(rows * cout);
        for _ in 0..rows {
            out.extend_from_slice(bv.data());
        }
        T::gemm(rows, geom.patch_len(), cout, &patches, (geom.patch_len(), 1), kv.data(), (cout, 1), T::one(), &mut out);
        let value = Tensor::from_parts(vec![r.n, r.oh, r.ow, cout], out);
        let needs_patches = kernel.requires_grad();
        let func = Conv2d {
            geom,
            resolved: r,
            patches: if needs_patches { patches } else { Vec::new() },
        };
        Ok(self.tape().apply(value, &[*self, *kernel, *bias], func))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::gradcheck::{check_gradients, random_tensor};

    fn geom(kernel: (usize, usize), cin: usize, cout: usize, stride: (usize, usize), dilation: (usize, usize), padding: Padding) -> ConvGeometry {
        ConvGeometry {
            kernel,
            in_channels: cin,
            out_channels: cout,
            stride,
            dilation,
            padding,
        }
    }

    #[test]
    fn same_padding_with_dilation_keeps_shape() {
        let tape = Tape::<f32>::new();
        let g = geom((3, 1), 1, 4, (1, 1), (2, 2), Padding::Same);
        let x = tape.constant(Tensor::ones(&[1, 128, 2, 1]));
        let k = tape.constant(Tensor::ones(&[3, 1, 1, 4]));
        let b = tape.constant(Tensor::zeros(&[4]));
        assert_eq!(x.conv2d(&k, &b, g).unwrap().shape(), vec![1, 128, 2, 4]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let tape = Tape::<f64>::new();
        let data = random_tensor(&[2, 5, 3, 1], 1, 1.0);
        let x = tape.constant(data.clone());
        let k = tape.constant(Tensor::ones(&[1, 1, 1, 1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = x.conv2d(&k, &b, geom((1, 1), 1, 1, (1, 1), (1, 1), Padding::Same)).unwrap();
        assert_eq!(y.value().data(), data.data());
    }

    #[test]
    fn dilated_valid_convolution_by_hand() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[1, 5, 1, 1], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let k = tape.constant(Tensor::ones(&[3, 1, 1, 1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = x.conv2d(&k, &b, geom((3, 1), 1, 1, (1, 1), (2, 1), Padding::Valid)).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 1, 1]);
        assert_eq!(y.value().data(), &[9.0]);
    }

    #[test]
    fn valid_padding_rejects_oversized_span() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[1, 4, 1, 1]));
        let k = tape.constant(Tensor::ones(&[3, 1, 1, 1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(x.conv2d(&k, &b, geom((3, 1), 1, 1, (1, 1), (2, 1), Padding::Valid)).is_err());
    }

    #[test]
    fn strided_same_output_is_ceiling() {
        assert_eq!(conv_output_len(128, 3, 2, 1, Padding::Same).unwrap().0, 64);
        assert_eq!(conv_output_len(5, 3, 2, 1, Padding::Same).unwrap().0, 3);
        assert_eq!(conv_output_len(2, 3, 1, 2, Padding::Same).unwrap(), (2, 2));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            geom((3, 3), 2, 3, (1, 1), (1, 1), Padding::Same),
            geom((3, 3), 2, 3, (2, 1), (1, 1), Padding::Same),
            geom((3, 1), 2, 2, (1, 1), (2, 2), Padding::Same),
            geom((1, 3), 1, 2, (1, 1), (2, 2), Padding::Same),
            geom((2, 2), 2, 2, (1, 1), (1, 1), Padding::Valid),
        ];
        for (i, g) in cases.into_iter().enumerate() {
            let x = random_tensor(&[2, 7, 3, g.in_channels], 20 + i as u64, 1.0);
            let k = random_tensor(&[g.kernel.0, g.kernel.1, g.in_channels, g.out_channels], 30 + i as u64, 1.0);
            let b = random_tensor(&[g.out_channels], 40 + i as u64, 1.0);
            check_gradients(&[x, k, b], 1e-4, 1e-6, |tape, v| {
                let y = v[0].conv2d(&v[1], &v[2], g)?;
                let w = tape.constant(random_tensor(&y.shape(), 50, 1.0));
                Ok(y.mul(&w)?.sum())
            })
            .unwrap_or_else(|e| panic!("case {i}: {e}"));
        }
    }
}
