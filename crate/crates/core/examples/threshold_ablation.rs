//! Garrote vs soft thresholding, and dual vs single scaling paths, trained
//! with matched seeds on the same synthetic data.
//!
//! ```text
//! cargo run --release --example threshold_ablation -- [epochs] [per_cell]
//! ```

use shrinknet::model::{AmcModel, ModelConfig};
use shrinknet::shrinkage::{ThresholdPaths, Thresholding};
use shrinknet::signal::{DatasetSpec, Split};
use shrinknet::train::{evaluate, Examples, ModelTrainer, TrainConfig};

fn main() -> shrinknet::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(10, |s| s.parse().expect("epochs"));
    let per_cell: usize = args.next().map_or(200, |s| s.parse().expect("per_cell"));

    let spec = DatasetSpec {
        samples_per_cell: per_cell,
        ..DatasetSpec::default()
    };
    let dataset = spec.build()?;
    let splits = spec.split();
    let train = Examples::from_split(&dataset, &splits, Split::Train)?;
    let val = Examples::from_split(&dataset, &splits, Split::Val)?;
    let test = Examples::from_split(&dataset, &splits, Split::Test)?;
    let cfg = TrainConfig {
        max_epochs: epochs,
        ..TrainConfig::default()
    };

    println!("{:<16} {:>8} {:>10} {:>10} {:>10}", "variant", "params", "average", "-4..6 dB", ">=10 dB");
    for (paths, kind) in [
        (ThresholdPaths::Dual, Thresholding::Garrote),
        (ThresholdPaths::Dual, Thresholding::Soft),
        (ThresholdPaths::Single, Thresholding::Garrote),
    ] {
        let config = ModelConfig::new(spec.length, spec.classes.len()).with_paths(paths).with_thresholding(kind);
        let model = AmcModel::new(config, 0)?;
        let params = model.param_count();
        let mut trainer = ModelTrainer::new(model, &train, &val, &cfg)?;
        trainer.fit(&cfg, |_| {})?;
        let report = evaluate(&mut trainer.model, &test, &dataset.classes)?;
        let band = report.accuracy_between(-4, 6).unwrap_or(f64::NAN);
        let high = report.accuracy_between(10, i16::MAX).unwrap_or(f64::NAN);
        println!(
            "{:<16} {params:>8} {:>10.4} {band:>10.4} {high:>10.4}",
            format!("{}/{}", paths.name(), kind.name()),
            report.average_accuracy
        );
    }
    Ok(())
}
