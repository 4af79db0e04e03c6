//! Monte-Carlo bias and MSE of soft vs garrote thresholding of a noisy
//! constant.
//!
//! ```text
//! cargo run --example bias_experiment -- [theta] [tau] [sigma] [n]
//! ```

use shrinknet::shrinkage::bias_mse_experiment;

fn main() -> shrinknet::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().expect("numeric argument"));
    let theta = args.next().unwrap_or(5.0);
    let tau = args.next().unwrap_or(1.0);
    let sigma = args.next().unwrap_or(0.1);
    let n = args.next().unwrap_or(1e5) as usize;

    let r = bias_mse_experiment(theta, tau, sigma, n, 0)?;
    println!("theta {theta}, tau {tau}, sigma {sigma}, {n} trials");
    println!("{:<8} {:>10} {:>10}", "", "bias", "mse");
    println!("{:<8} {:>10.5} {:>10.5}", "soft", r.bias_soft, r.mse_soft);
    println!("{:<8} {:>10.5} {:>10.5}", "garrote", r.bias_garrote, r.mse_garrote);
    println!("\nexpected bias: soft {tau}, garrote {:.5}", tau * tau / theta);
    Ok(())
}
