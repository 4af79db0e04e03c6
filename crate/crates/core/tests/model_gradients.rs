use std::time::Instant;

use shrinknet::gradcheck::{model_gradient_report, GRAD_TOL};
use shrinknet::model::{AmcModel, ModelConfig};
use shrinknet::shrinkage::{ThresholdPaths, Thresholding};
use shrinknet::signal::{DatasetSpec, Modulation};
use shrinknet::train::Examples;
use shrinknet::Tensor;

fn batch(length: usize) -> (Tensor<f64>, Tensor<f64>, Vec<usize>) {
    let spec = DatasetSpec {
        classes: vec![Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16, Modulation::Gfsk],
        snr_grid: vec![10],
        samples_per_cell: 1,
        length,
        ..DatasetSpec::default()
    };
    let ds = spec.build().unwrap();
    let ex = Examples::from_indices(&ds, &[0, 1, 2, 3]).unwrap();
    let (iq, ap, labels) = ex.batch(&[0, 1, 2, 3]);
    (iq.cast(), ap.cast(), labels)
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let (iq, ap, labels) = batch(32);
    for (paths, kind) in [
        (ThresholdPaths::Dual, Thresholding::Garrote),
        (ThresholdPaths::Single, Thresholding::Soft),
    ] {
        let config = ModelConfig::new(32, 4).with_paths(paths).with_thresholding(kind);
        let mut model = AmcModel::<f64>::new(config, 3).unwrap();
        let start = Instant::now();
        let r = model_gradient_report(&mut model, &iq, &ap, &labels, 1e-4, 1e-6, Some(12), 0).unwrap();
        println!("{paths:?}/{kind:?}: {r:?} in {:?}", start.elapsed());
        assert!(r.checked > 500, "{r:?}");
        assert!(r.max_rel_err < GRAD_TOL, "{r:?}");
    }
}
