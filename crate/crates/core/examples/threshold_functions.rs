//! Garrote and soft thresholding side by side.
//!
//! ```text
//! cargo run --example threshold_functions -- [tau]
//! ```

use shrinknet::shrinkage::{garrote, soft};

fn main() {
    let tau: f64 = std::env::args().nth(1).map_or(1.0, |s| s.parse().expect("tau"));
    println!("tau = {tau}");
    println!("{:>6} {:>12} {:>12}", "x", "garrote", "soft");
    for i in -8..=8 {
        let x = f64::from(i) * 0.5;
        println!("{x:>6.2} {:>12.7} {:>12.7}", garrote(x, tau), soft(x, tau));
    }

    // Inside |x| < tau both functions are exactly zero; outside, garrote
    // keeps more of the input (smaller bias) than soft.
    let killed = (1..100).map(|k| tau * (f64::from(k) / 50.0 - 1.0)).all(|x| garrote(x, tau) == 0.0 && soft(x, tau) == 0.0);
    println!("\nzero on (-tau, tau): {killed}");
    for x in [1.5 * tau, 3.0 * tau, 10.0 * tau] {
        println!("x = {x:>5.1}: x - garrote = {:.4}, x - soft = {:.4}", x - garrote(x, tau), x - soft(x, tau));
    }
}
