use rand::Rng;

use super::init::glorot_uniform;
use super::params::{ParamId, ParamKind, ParamStore, Session};
use crate::autodiff::{sigmoid, BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Single-layer LSTM returning the full hidden sequence.
///
/// Gates are packed `[i | f | g | o]` along the last weight axis; the
/// initial hidden and cell states are zero.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_weights: ParamId,
    pub recurrent_weights: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

struct LstmOp<T> {
    batch: usize,
    steps: usize,
    input: usize,
    hidden: usize,
    /// Activated gates per step, `[N, 4U]` each.
    gates: Vec<Vec<T>>,
    /// Cell state per step, `[N, U]` each.
    cells: Vec<Vec<T>>,
    tanh_cells: Vec<Vec<T>>,
}

impl<T: Real> Function<T> for LstmOp<T> {
    fn name(&self) -> &'static str {
        "lstm"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (n, l, d, u) = (self.batch, self.steps, self.input, self.hidden);
        let u4 = 4 * u;
        let x = ctx.inputs[0].data();
        let w_ih = ctx.inputs[1].data();
        let w_hh = ctx.inputs[2].data();
        let h_all = ctx.output.data();
        let g_out = ctx.grad.data();

        let mut dx = ctx.needs[0].then(|| vec![T::zero(); n * l * d]);
        let mut dw_ih = vec![T::zero(); d * u4];
        let mut dw_hh = vec![T::zero(); u * u4];
        let mut db = vec![T::zero(); u4];
        let mut dh_next = vec![T::zero(); n * u];
        let mut dc_next = vec![T::zero(); n * u];
        let mut dz = vec![T::zero(); n * u4];
        let mut dx_t = vec![T::zero(); n * d];

        for t in (0..l).rev() {
            let gates = &self.gates[t];
            let tanh_c = &self.tanh_cells[t];
            for b in 0..n {
                let row = &gates[b * u4..(b + 1) * u4];
                for j in 0..u {
                    let (i, f, g, o) = (row[j], row[u + j], row[2 * u + j], row[3 * u + j]);
                    let k = b * u + j;
                    let dh = g_out[(b * l + t) * u + j] + dh_next[k];
                    let tc = tanh_c[k];
                    let dc = dh * o * (T::one() - tc * tc) + dc_next[k];
                    let c_prev = if t > 0 { self.cells[t - 1][k] } else { T::zero() };
                    let z = &mut dz[b * u4..(b + 1) * u4];
                    z[j] = dc * g * i * (T::one() - i);
                    z[u + j] = dc * c_prev * f * (T::one() - f);
                    z[2 * u + j] = dc * i * (T::one() - g * g);
                    z[3 * u + j] = dh * tc * o * (T::one() - o);
                    dc_next[k] = dc * f;
                }
            }
            for row in dz.chunks_exact(u4) {
                for (acc, &v) in db.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            // dW_ih += x_tᵀ·dz
            T::gemm(d, n, u4, &x[t * d..], (1, l * d), &dz, (u4, 1), T::one(), &mut dw_ih);
            if t > 0 {
                // dW_hh += h_{t-1}ᵀ·dz
                T::gemm(u, n, u4, &h_all[(t - 1) * u..], (1, l * u), &dz, (u4, 1), T::one(), &mut dw_hh);
            }
            if let Some(dx) = dx.as_mut() {
                T::gemm(n, u4, d, &dz, (u4, 1), w_ih, (1, u4), T::zero(), &mut dx_t);
                for b in 0..n {
                    dx[(b * l + t) * d..(b * l + t + 1) * d].copy_from_slice(&dx_t[b * d..(b + 1) * d]);
                }
            }
            T::gemm(n, u4, u, &dz, (u4, 1), w_hh, (1, u4), T::zero(), &mut dh_next);
        }

        vec![
            dx.map(|v| Tensor::from_parts(vec![n, l, d], v)),
            ctx.needs[1].then(|| Tensor::from_parts(vec![d, u4], dw_ih)),
            ctx.needs[2].then(|| Tensor::from_parts(vec![u, u4], dw_hh)),
            ctx.needs[3].then(|| Tensor::from_parts(vec![u4], db)),
        ]
    }
}

/// Runs the recurrence over `x: [N, L, D]`, returning `[N, L, U]`.
pub(crate) fn lstm<'t, T: Real>(
    x: Var<'t, T>,
    w_ih: Var<'t, T>,
    w_hh: Var<'t, T>,
    bias: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let xv = x.value();
    let (wi, wh, bv) = (w_ih.value(), w_hh.value(), bias.value());
    let &[n, l, d] = xv.shape() else {
        return Err(Error::InvalidShape(format!("lstm expects [N, L, D], got {:?}", xv.shape())));
    };
    let u4 = bv.numel();
    let u = u4 / 4;
    if wi.shape() != [d, u4] || wh.shape() != [u, u4] || u4 % 4 != 0 {
        return Err(Error::ShapeMismatch {
            op: "lstm",
            lhs: xv.shape().to_vec(),
            rhs: wi.shape().to_vec(),
        });
    }
    let xd = xv.data();
    let mut out = vec![T::zero(); n * l * u];
    let mut gates = Vec::with_capacity(l);
    let mut cells: Vec<Vec<T>> = Vec::with_capacity(l);
    let mut tanh_cells = Vec::with_capacity(l);
    let mut h = vec![T::zero(); n * u];
    let mut z = vec![T::zero(); n * u4];

    for t in 0..l {
        for row in z.chunks_exact_mut(u4) {
            row.copy_from_slice(bv.data());
        }
        T::gemm(n, d, u4, &xd[t * d..], (l * d, 1), wi.data(), (u4, 1), T::one(), &mut z);
        if t > 0 {
            T::gemm(n, u, u4, &h, (u, 1), wh.data(), (u4, 1), T::one(), &mut z);
        }
        let mut c = vec![T::zero(); n * u];
        let mut tc = vec![T::zero(); n * u];
        for b in 0..n {
            let row = &mut z[b * u4..(b + 1) * u4];
            for j in 0..u {
                row[j] = sigmoid(row[j]);
                row[u + j] = sigmoid(row[u + j]);
                row[2 * u + j] = row[2 * u + j].tanh();
                row[3 * u + j] = sigmoid(row[3 * u + j]);
                let k = b * u + j;
                let c_prev = if t > 0 { cells[t - 1][k] } else { T::zero() };
                c[k] = row[u + j] * c_prev + row[j] * row[2 * u + j];
                tc[k] = c[k].tanh();
                h[k] = row[3 * u + j] * tc[k];
                out[(b * l + t) * u + j] = h[k];
            }
        }
        gates.push(z.clone());
        cells.push(c);
        tanh_cells.push(tc);
    }

    let op = LstmOp {
        batch: n,
        steps: l,
        input: d,
        hidden: u,
        gates,
        cells,
        tanh_cells,
    };
    Ok(x.tape()
        .apply(Tensor::from_parts(vec![n, l, u], out), &[x, w_ih, w_hh, bias], op))
}

impl Lstm {
    /// Glorot-uniform weights; the forget-gate bias starts at 1.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let u4 = 4 * hidden_size;
        let input_weights = store.add(
            format!("{name}/input_weights"),
            glorot_uniform(&[input_size, u4], input_size, u4, rng),
            ParamKind::Recurrent,
        )?;
        let recurrent_weights = store.add(
            format!("{name}/recurrent_weights"),
            glorot_uniform(&[hidden_size, u4], hidden_size, u4, rng),
            ParamKind::Recurrent,
        )?;
        let bias = Tensor::from_fn(&[u4], |i| {
            if (hidden_size..2 * hidden_size).contains(&i) {
                T::one()
            } else {
                T::zero()
            }
        });
        let bias = store.add(format!("{name}/bias"), bias, ParamKind::Bias)?;
        Ok(Self {
            input_weights,
            recurrent_weights,
            bias,
            input_size,
            hidden_size,
        })
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden_size * (self.input_size + self.hidden_size + 1)
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let wi = s.param(self.input_weights);
        let wh = s.param(self.recurrent_weights);
        let b = s.param(self.bias);
        lstm(x, wi, wh, b)
    }
}
