//! Trains the dual-path garrote classifier on the default synthetic
//! dataset, evaluates it per SNR on the held-out split and writes the
//! report files.
//!
//! ```text
//! cargo run --release --example train_desk_scale -- [epochs] [per_cell] [out_dir]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use shrinknet::model::{save_checkpoint, AmcModel, Checkpoint, ModelConfig};
use shrinknet::signal::{DatasetSpec, Split};
use shrinknet::train::{evaluate, write_eval_report, write_history, Examples, ModelTrainer, TrainConfig};

fn main() -> shrinknet::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(20, |s| s.parse().expect("epochs"));
    let per_cell: usize = args.next().map_or(500, |s| s.parse().expect("per_cell"));
    let out = args.next().map_or_else(|| std::env::temp_dir().join("desk_run"), PathBuf::from);

    let spec = DatasetSpec {
        samples_per_cell: per_cell,
        ..DatasetSpec::default()
    };
    let dataset = spec.build()?;
    let splits = spec.split();
    let train = Examples::from_split(&dataset, &splits, Split::Train)?;
    let val = Examples::from_split(&dataset, &splits, Split::Val)?;
    let test = Examples::from_split(&dataset, &splits, Split::Test)?;
    println!("{} train / {} val / {} test captures", train.len(), val.len(), test.len());

    let model = AmcModel::new(ModelConfig::new(spec.length, spec.classes.len()), 0)?;
    let cfg = TrainConfig {
        max_epochs: epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let mut trainer = ModelTrainer::new(model, &train, &val, &cfg)?;
    let history = trainer.fit(&cfg, |e| {
        println!(
            "epoch {:>3}  lr {:.1e}  train {:.4} / {:.3}  val {:.4} / {:.3}  ({:.0} s)",
            e.epoch,
            e.lr,
            e.train_loss,
            e.train_accuracy,
            e.val_loss,
            e.val_accuracy,
            start.elapsed().as_secs_f64()
        );
    })?;
    let mut model = trainer.model;

    let report = evaluate(&mut model, &test, &dataset.classes)?;
    println!("\nbest epoch {}; test accuracy by SNR:", history.best_epoch);
    for r in &report.per_snr {
        println!("{:>5} dB  {:.3}", r.snr_db, r.accuracy);
    }
    println!("average {:.4}, maximum {:.4}", report.average_accuracy, report.max_accuracy);

    write_history(&out, &history)?;
    write_eval_report(&out, &report, &[])?;
    let meta = Checkpoint {
        classes: dataset.classes.clone(),
        summary: vec![("best_epoch".into(), history.best_epoch.to_string())],
    };
    save_checkpoint(&out.join("model.amcw"), &model, &meta)?;
    println!("reports and checkpoint in {}", out.display());
    Ok(())
}
