use shrinknet::model::{load_checkpoint, save_checkpoint, AmcModel, Checkpoint, ModelConfig};
use shrinknet::signal::{read_sigset, write_sigset, DatasetSpec};
use shrinknet::train::{train_step, Adam, Examples};
use shrinknet::Error;

fn small_set() -> shrinknet::signal::Dataset {
    DatasetSpec {
        samples_per_cell: 3,
        snr_grid: vec![-4, 8],
        length: 64,
        ..DatasetSpec::default()
    }
    .build()
    .unwrap()
}

#[test]
fn reloaded_checkpoint_reproduces_logits() {
    let ds = small_set();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let data = Examples::from_indices(&ds, &rows).unwrap();
    let mut model = AmcModel::<f32>::new(ModelConfig::new(64, 8), 3).unwrap();
    let mut adam = Adam::new(&model.store);
    for chunk in rows.chunks(16) {
        let (iq, ap, labels) = data.batch(chunk);
        train_step(&mut model, &mut adam, iq, ap, &labels, 1e-3).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.amcw");
    let meta = Checkpoint {
        classes: ds.classes.clone(),
        summary: vec![("epochs_run".into(), "1".into())],
    };
    save_checkpoint(&path, &model, &meta).unwrap();
    let (mut back, back_meta) = load_checkpoint(&path).unwrap();
    assert_eq!(back_meta, meta);
    assert_eq!(back.config, model.config);

    let (iq, ap, _) = data.batch(&rows);
    let before = model.logits(&iq, &ap).unwrap();
    let after = back.logits(&iq, &ap).unwrap();
    for (a, b) in before.data().iter().zip(after.data()) {
        assert!((a - b).abs() <= 1e-7, "{a} vs {b}");
    }
}

#[test]
fn checkpoint_version_mismatch_is_reported() {
    let model = AmcModel::<f32>::new(ModelConfig::new(32, 4), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.amcw");
    save_checkpoint(&path, &model, &Checkpoint::default()).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4..6].copy_from_slice(&9u16.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    let err = load_checkpoint(&path).err().expect("version 9 must be rejected");
    assert!(matches!(err, Error::UnsupportedVersion { found: 9, .. }), "{err}");

    bytes.truncate(bytes.len() - 3);
    bytes[4..6].copy_from_slice(&1u16.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path).err(), Some(Error::Truncated { .. })));
}

#[test]
fn sigset_round_trip_is_bit_exact() {
    let ds = small_set();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.sigset");
    write_sigset(&path, &ds).unwrap();
    let back = read_sigset(&path).unwrap();
    assert_eq!(back.classes, ds.classes);
    assert_eq!(back.length, ds.length);
    assert_eq!(back.samples.len(), ds.samples.len());
    for (a, b) in ds.samples.iter().zip(&back.samples) {
        assert_eq!((a.class_id, a.snr_db), (b.class_id, b.snr_db));
        assert!(a.iq.iter().zip(&b.iq).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let bytes = std::fs::read(&path).unwrap();
    write_sigset(&path, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}
