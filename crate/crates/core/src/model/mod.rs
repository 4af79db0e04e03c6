//! The dual-input classifier: per-input feature extraction, a stack of
//! shrinkage blocks per input, and a shared softmax head.

mod accounting;
pub mod checkpoint;
mod config;

pub use accounting::{conv_flops, count_flops, count_params, dense_flops, lstm_step_flops, AccountingTable};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ModelConfig, MIN_LENGTH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv2d, Dense, Lstm, Mode, ParamStore, Session};
use crate::shrinkage::ShrinkageBlock;
use crate::tensor::{Real, Tensor};

/// Layers applied to one input representation (I/Q or amplitude/phase).
#[derive(Clone, Debug)]
pub struct InputPath {
    pub name: String,
    pub lstm: Lstm,
    /// 3×1 kernel along time.
    pub conv_time: Conv2d,
    /// 1×3 kernel across the two components.
    pub conv_cross: Conv2d,
    pub blocks: Vec<ShrinkageBlock>,
    pub bn_out: BatchNorm,
}

impl InputPath {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let f = cfg.cnn_filters;
        let lstm = Lstm::new(store, &format!("{name}/lstm"), 2, cfg.lstm_units, rng)?;
        let conv_time = Conv2d::new(store, &format!("{name}/conv_time"), (3, 1), 1, f, (1, 1), (2, 2), rng)?;
        let conv_cross = Conv2d::new(store, &format!("{name}/conv_cross"), (1, 3), 1, f, (1, 1), (2, 2), rng)?;
        let mut blocks = Vec::with_capacity(cfg.block_channels.len());
        let mut c = f + 1;
        for (k, (&out, &down)) in cfg.block_channels.iter().zip(&cfg.block_downsample).enumerate() {
            blocks.push(ShrinkageBlock::new(
                store,
                &format!("{name}/block{}", k + 1),
                c,
                out,
                down,
                cfg.thresholding,
                cfg.paths,
                rng,
            )?);
            c = out;
        }
        let bn_out = BatchNorm::new(store, &format!("{name}/bn_out"), c)?;
        Ok(Self {
            name: name.to_string(),
            lstm,
            conv_time,
            conv_cross,
            blocks,
            bn_out,
        })
    }

    /// `[N, L, 2] → [N, L, 4, filters + 1]`.
    pub fn extract<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = x.shape();
        let &[n, l, 2] = &shape[..] else {
            return Err(Error::InvalidShape(format!("{} input must be [N, L, 2], got {shape:?}", self.name)));
        };
        if l < MIN_LENGTH {
            return Err(Error::invalid(format!("capture length {l} is shorter than the minimum {MIN_LENGTH}")));
        }
        let h_lstm = self.lstm.forward(s, x)?;
        let u = self.lstm.hidden_size;
        let h_lstm = h_lstm.reshape(&[n, l, u, 1])?;
        let img = x.reshape(&[n, l, 2, 1])?;
        let f1 = self.conv_time.forward(s, img)?;
        let f2 = self.conv_cross.forward(s, img)?;
        let h_cnn = Var::concat(&[f1, f2], 2)?;
        Var::concat(&[h_cnn, h_lstm], 3)
    }

    /// Pooled features `[N, last block channels]`.
    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = self.extract(s, x)?;
        for block in &self.blocks {
            h = block.forward(s, h)?;
        }
        self.bn_out.forward(s, h)?.relu().global_avg_pool()
    }
}

/// Layer structure of the classifier; parameter values live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AmcNet {
    pub iq: InputPath,
    pub ap: InputPath,
    pub classifier: Dense,
}

/// Outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward<'t, T: Real> {
    pub iq_features: Var<'t, T>,
    pub ap_features: Var<'t, T>,
    pub logits: Var<'t, T>,
    pub probabilities: Var<'t, T>,
}

impl AmcNet {
    pub fn forward<'t, T: Real>(
        &self,
        s: &mut Session<'t, '_, T>,
        iq: Var<'t, T>,
        ap: Var<'t, T>,
    ) -> Result<Forward<'t, T>> {
        let iq_features = self.iq.forward(s, iq)?;
        let ap_features = self.ap.forward(s, ap)?;
        let joined = Var::concat(&[iq_features, ap_features], 1)?;
        let logits = self.classifier.forward(s, joined)?;
        let probabilities = logits.softmax()?;
        Ok(Forward {
            iq_features,
            ap_features,
            logits,
            probabilities,
        })
    }
}

/// Architecture plus parameters.
#[derive(Clone, Debug)]
pub struct AmcModel<T: Real> {
    pub config: ModelConfig,
    pub net: AmcNet,
    pub store: ParamStore<T>,
}

impl<T: Real> AmcModel<T> {
    /// Builds a freshly initialized model; `seed` fixes every initializer.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let iq = InputPath::new(&mut store, "iq", &config, &mut rng)?;
        let ap = InputPath::new(&mut store, "ap", &config, &mut rng)?;
        let classifier = Dense::new(&mut store, "classifier", config.feature_width(), config.num_classes, &mut rng)?;
        Ok(Self {
            config,
            net: AmcNet { iq, ap, classifier },
            store,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Runs a batch `iq, ap: [N, L, 2]` on `tape`.
    pub fn forward<'t>(&mut self, tape: &'t Tape<T>, mode: Mode, iq: Var<'t, T>, ap: Var<'t, T>) -> Result<Forward<'t, T>> {
        let mut s = Session::new(tape, &mut self.store, mode);
        self.net.forward(&mut s, iq, ap)
    }

    /// Inference-mode logits `[N, num_classes]` without recording a graph.
    pub fn logits(&mut self, iq: &Tensor<T>, ap: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut self.store, Mode::Infer);
        let out = self.net.forward(&mut s, tape.constant(iq.clone()), tape.constant(ap.clone()))?;
        Ok((*out.logits.value()).clone())
    }

    /// Same model at another precision.
    pub fn cast<U: Real>(&self) -> AmcModel<U> {
        AmcModel {
            config: self.config.clone(),
            net: self.net.clone(),
            store: self.store.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::random_tensor;
    use crate::nn::ParamKind;

    fn run(model: &mut AmcModel<f64>, n: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>, Tensor<f64>) {
        let l = model.config.length;
        let tape = Tape::new();
        let iq = tape.constant(random_tensor(&[n, l, 2], seed, 1.0));
        let ap = tape.constant(random_tensor(&[n, l, 2], seed + 1, 1.0));
        let out = model.forward(&tape, Mode::Train, iq, ap).unwrap();
        let get = |v: Var<'_, f64>| (*v.value()).clone();
        (get(out.iq_features), get(out.ap_features), get(out.logits), get(out.probabilities))
    }

    #[test]
    fn feature_extraction_shape() {
        for l in [128, 1024] {
            let mut model = AmcModel::<f64>::new(ModelConfig::new(l, 8), 0).unwrap();
            let tape = Tape::new();
            let mut s = Session::new(&tape, &mut model.store, Mode::Train);
            let h = model.net.iq.extract(&mut s, tape.constant(random_tensor(&[1, l, 2], 1, 1.0))).unwrap();
            assert_eq!(h.shape(), vec![1, l, 4, 5]);
        }
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let mut model = AmcModel::<f64>::new(ModelConfig::new(32, 4), 0).unwrap();
        let ids: Vec<_> = model
            .store
            .iter()
            .filter(|(_, p)| p.name.starts_with("iq/lstm") || p.name.starts_with("iq/conv_"))
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            model.store.get_mut(id).value.fill(0.0);
        }
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut model.store, Mode::Train);
        let h = model.net.iq.extract(&mut s, tape.constant(random_tensor(&[2, 32, 2], 1, 1.0))).unwrap();
        assert!(h.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_input_is_an_error() {
        let mut model = AmcModel::<f64>::new(ModelConfig::new(16, 4), 0).unwrap();
        let tape = Tape::new();
        let x = tape.constant(random_tensor(&[1, 4, 2], 1, 1.0));
        assert!(model.forward(&tape, Mode::Train, x, x).is_err());
    }

    #[test]
    fn head_shape_and_probabilities() {
        let mut model = AmcModel::<f64>::new(ModelConfig::new(128, 11), 3).unwrap();
        let (_, _, logits, probs) = run(&mut model, 3, 5);
        assert_eq!(logits.shape(), &[3, 11]);
        for (p, z) in probs.data().chunks(11).zip(logits.data().chunks(11)) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert_eq!(crate::tensor::argmax(p), crate::tensor::argmax(z));
        }
    }

    #[test]
    fn any_length_from_sixteen_works() {
        for l in [16, 17, 33, 100] {
            let mut model = AmcModel::<f64>::new(ModelConfig::new(l, 5), 1).unwrap();
            let (_, _, logits, _) = run(&mut model, 2, 7);
            assert_eq!(logits.shape(), &[2, 5]);
        }
    }

    #[test]
    fn paths_are_independent() {
        let mut model = AmcModel::<f64>::new(ModelConfig::new(32, 4), 2).unwrap();
        let (iq_a, _, _, _) = run(&mut model, 4, 9);
        let ap_ids: Vec<_> = model
            .store
            .iter()
            .filter(|(_, p)| p.name.starts_with("ap/") && p.kind.trainable())
            .map(|(id, _)| id)
            .collect();
        let mut zeroed = AmcModel::<f64>::new(ModelConfig::new(32, 4), 2).unwrap();
        for id in ap_ids {
            zeroed.store.get_mut(id).value.fill(0.0);
        }
        let (iq_b, ap_b, _, _) = run(&mut zeroed, 4, 9);
        assert_eq!(iq_a, iq_b);
        let first = ap_b.data()[0];
        assert!(ap_b.data().iter().all(|&v| v == first));
    }

    #[test]
    fn buffers_are_not_trainable() {
        let model = AmcModel::<f32>::new(ModelConfig::new(128, 24), 0).unwrap();
        let buffers = model.store.iter().filter(|(_, p)| p.kind == ParamKind::Buffer).count();
        assert!(buffers > 0);
        assert!(model.store.iter().all(|(_, p)| !p.name.is_empty()));
    }
}
