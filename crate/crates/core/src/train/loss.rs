use crate::autodiff::{BackwardCtx, Function, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Floor added to probabilities inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

struct CrossEntropy {
    batch: usize,
}

impl<T: Real> Function<T> for CrossEntropy {
    fn name(&self) -> &'static str {
        "categorical_cross_entropy"
    }

    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let g = ctx.grad.item() / T::of(self.batch as f64);
        let floor = T::of(PROB_FLOOR);
        let p = ctx.inputs[0];
        let y = ctx.inputs[1];
        let gp = ctx.needs[0].then(|| {
            let data = p
                .data()
                .iter()
                .zip(y.data())
                .map(|(&p, &y)| if y == T::zero() { T::zero() } else { -g * y / (p + floor) })
                .collect();
            Tensor::from_parts(p.shape().to_vec(), data)
        });
        vec![gp, None]
    }
}

/// Mean over the batch of `−Σ_c y_c·log(p_c + 1e−12)`.
///
/// `targets` must hold one-hot rows shaped like `probabilities`.
pub fn cce_loss<'t, T: Real>(probabilities: Var<'t, T>, targets: &Tensor<T>) -> Result<Var<'t, T>> {
    let p = probabilities.value();
    let &[b, c] = p.shape() else {
        return Err(Error::InvalidShape(format!("cce_loss expects [B, C], got {:?}", p.shape())));
    };
    if targets.shape() != p.shape() {
        return Err(Error::ShapeMismatch {
            op: "cce_loss",
            lhs: p.shape().to_vec(),
            rhs: targets.shape().to_vec(),
        });
    }
    for (i, row) in targets.data().chunks_exact(c).enumerate() {
        let ones = row.iter().filter(|&&v| v == T::one()).count();
        let zeros = row.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || ones + zeros != c {
            return Err(Error::invalid(format!("target row {i} is not one-hot")));
        }
    }
    let floor = T::of(PROB_FLOOR);
    let total: T = p
        .data()
        .iter()
        .zip(targets.data())
        .filter(|(_, &y)| y != T::zero())
        .map(|(&p, &y)| -y * (p + floor).ln())
        .sum();
    let value = Tensor::scalar(total / T::of(b as f64));
    let tape = probabilities.tape();
    Ok(tape.apply(value, &[probabilities, tape.constant(targets.clone())], CrossEntropy { batch: b }))
}
