//! Synthesizes a small labeled dataset, round-trips it through a SIGSET
//! file and shows the amplitude/phase view of one capture.
//!
//! ```text
//! cargo run --example synthesize_signals -- [out.sigset]
//! ```

use std::path::PathBuf;

use shrinknet::signal::{iq_to_ap, read_sigset, write_sigset, DatasetSpec, Split};

fn main() -> shrinknet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("synthetic.sigset"), PathBuf::from);
    let spec = DatasetSpec {
        snr_grid: vec![-10, 0, 10],
        samples_per_cell: 20,
        ..DatasetSpec::default()
    };
    let dataset = spec.build()?;
    println!("{} samples, {} classes, SNRs {:?}, length {}", dataset.len(), dataset.classes.len(), dataset.snr_levels(), dataset.length);

    write_sigset(&out, &dataset)?;
    let back = read_sigset(&out)?;
    let bytes = std::fs::metadata(&out)?.len();
    println!("wrote {} ({bytes} bytes); read back identical: {}", out.display(), back.samples == dataset.samples);

    let splits = spec.split();
    let count = |s| splits.iter().filter(|&&x| x == s).count();
    println!("split: {} train / {} val / {} test", count(Split::Train), count(Split::Val), count(Split::Test));

    println!("\n{:<6} {:>10} {:>12}", "class", "power", "amp. spread");
    let l = dataset.length;
    for (c, name) in dataset.classes.iter().enumerate() {
        // Noise-free twin of the first capture of each class at 10 dB.
        let clean = spec.generate(c, 10, 0, false)?;
        let rows: Vec<f64> = clean.iq.iter().map(|&v| f64::from(v)).collect();
        let power = rows[..l].iter().zip(&rows[l..]).map(|(i, q)| i * i + q * q).sum::<f64>() / l as f64;
        let ap = iq_to_ap(&rows);
        let amp = &ap[..l];
        let mean = amp.iter().sum::<f64>() / l as f64;
        let spread = (amp.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / l as f64).sqrt() / mean;
        println!("{name:<6} {power:>10.4} {spread:>12.4}");
    }
    Ok(())
}
