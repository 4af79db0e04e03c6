//! Parameter and FLOP tables for the default configuration.
//!
//! ```text
//! cargo run --example model_accounting -- [num_classes] [length]
//! ```

use shrinknet::model::{count_flops, count_params, AmcModel, ModelConfig};
use shrinknet::shrinkage::ThresholdPaths;

fn main() -> shrinknet::Result<()> {
    let mut args = std::env::args().skip(1);
    let classes: usize = args.next().map_or(Ok(24), |s| s.parse()).expect("num_classes");
    let length: usize = args.next().map_or(Ok(128), |s| s.parse()).expect("length");

    let config = ModelConfig::new(length, classes);
    let dual = AmcModel::<f32>::new(config.clone(), 0)?;
    let single = AmcModel::<f32>::new(config.clone().with_paths(ThresholdPaths::Single), 0)?;

    println!("parameters by module (dual path, {classes} classes)");
    println!("{}\n", count_params(&dual).grouped());

    let flops = count_flops(&config, length)?;
    println!("FLOPs by module at L = {length}");
    println!("{}\n", flops.grouped());

    let (pd, ps) = (dual.param_count(), single.param_count());
    println!("dual-path parameters:   {pd}");
    println!("single-path parameters: {ps} ({:.1}% fewer)", 100.0 * (pd - ps) as f64 / pd as f64);
    let fs = count_flops(&config.clone().with_paths(ThresholdPaths::Single), length)?.total();
    println!("dual-path FLOPs:   {}", flops.total());
    println!("single-path FLOPs: {fs}");
    let long = count_flops(&config, 1024)?.total();
    println!("FLOPs(L=1024) / FLOPs(L=128): {:.3}", long as f64 / count_flops(&config, 128)?.total() as f64);
    Ok(())
}
