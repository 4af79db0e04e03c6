//! Finite-difference gradient checks of every differentiable operation and
//! of the complete classifier in 64-bit arithmetic.
//!
//! ```text
//! cargo run --example gradient_check -- [coordinates_per_tensor]
//! ```

use shrinknet::gradcheck::{model_gradient_report, operation_reports, GRAD_TOL};
use shrinknet::model::{AmcModel, ModelConfig};
use shrinknet::signal::{DatasetSpec, Modulation};
use shrinknet::train::Examples;

fn main() -> shrinknet::Result<()> {
    let per_tensor: usize = std::env::args().nth(1).map_or(16, |s| s.parse().expect("count"));

    println!("{:<18} {:>8} {:>8} {:>12}", "operation", "checked", "skipped", "max rel err");
    for (name, r) in operation_reports()? {
        println!("{name:<18} {:>8} {:>8} {:>12.2e}", r.checked, r.skipped, r.max_rel_err);
    }

    let spec = DatasetSpec {
        classes: vec![Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16, Modulation::Gfsk],
        snr_grid: vec![10],
        samples_per_cell: 1,
        length: 32,
        ..DatasetSpec::default()
    };
    let data = Examples::from_indices(&spec.build()?, &[0, 1, 2, 3])?;
    let (iq, ap, labels) = data.batch(&[0, 1, 2, 3]);
    let mut model = AmcModel::<f64>::new(ModelConfig::new(32, 4), 0)?;
    let r = model_gradient_report(&mut model, &iq.cast(), &ap.cast(), &labels, 1e-4, 1e-6, Some(per_tensor), 0)?;
    println!(
        "\nfull model ({} parameters): {} checked, {} skipped near kinks, max relative error {:.2e} (bound {GRAD_TOL:e})",
        model.param_count(),
        r.checked,
        r.skipped,
        r.max_rel_err
    );
    Ok(())
}
