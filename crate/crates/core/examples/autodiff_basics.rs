//! Reverse-mode gradients of a small two-layer network, checked against
//! central finite differences.
//!
//! ```text
//! cargo run --example autodiff_basics
//! ```

use shrinknet::autodiff::{Tape, Var};
use shrinknet::gradcheck::{gradient_report, random_tensor};
use shrinknet::Tensor;

/// Mean negative log-probability of a 3-5-2 tanh network on a fixed batch.
fn mlp<'t>(tape: &'t Tape<f64>, v: &[Var<'t, f64>]) -> shrinknet::Result<Var<'t, f64>> {
    let x = tape.constant(random_tensor(&[4, 3], 1, 1.0));
    let hidden = x.matmul(&v[0])?.add(&v[1])?.tanh();
    let probs = hidden.matmul(&v[2])?.softmax()?;
    Ok(probs.ln().scale(-1.0).mean())
}

fn main() -> shrinknet::Result<()> {
    // f(w) = Σ w², df/dw = 2w.
    let tape = Tape::<f64>::new();
    let w = tape.var(Tensor::from_f64(&[3], &[1.0, -2.0, 0.5])?);
    let loss = w.mul(&w)?.sum();
    let grads = tape.backward(loss)?;
    println!("f(w) = {}", loss.value().item());
    println!("df/dw = {:?}", grads.get(w).expect("w requires grad").data());

    // A two-layer perceptron with softmax output.
    let w1 = random_tensor(&[3, 5], 2, 0.8);
    let b1 = random_tensor(&[5], 3, 0.1);
    let w2 = random_tensor(&[5, 2], 4, 0.8);
    let tape = Tape::new();
    let vars: Vec<_> = [&w1, &b1, &w2].iter().map(|t| tape.var((*t).clone())).collect();
    let loss = mlp(&tape, &vars)?;
    println!("\nmlp loss {:.6}, {} tape nodes", loss.value().item(), tape.len());

    let report = gradient_report(&[w1, b1, w2], 1e-4, 1e-6, mlp)?;
    println!(
        "finite differences: {} coordinates checked, max relative error {:.2e}",
        report.checked, report.max_rel_err
    );
    Ok(())
}
