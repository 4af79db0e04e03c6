use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{one_hot, Examples};
use super::loss::cce_loss;
use super::optim::Adam;
use super::schedule::{fit, EpochRecord, History, Learner, TrainConfig};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::AmcModel;
use crate::nn::{Mode, Session};
use crate::tensor::{argmax, Tensor};

/// Rows per inference batch during validation and evaluation.
pub const EVAL_BATCH: usize = 64;

/// Loss and accuracy of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Cross-entropy plus the L2 penalty.
    pub loss: f64,
    pub correct: usize,
}

/// Forward, backward and one Adam update on a single batch.
pub fn train_step(
    model: &mut AmcModel<f32>,
    adam: &mut Adam<f32>,
    iq: Tensor<f32>,
    ap: Tensor<f32>,
    labels: &[usize],
    lr: f64,
) -> Result<StepStats> {
    let targets = one_hot(labels, model.config.num_classes);
    let lambda = model.config.l2_lambda;
    model.store.zero_grad();
    let tape = Tape::new();
    let mut s = Session::new(&tape, &mut model.store, Mode::Train);
    let out = model.net.forward(&mut s, tape.constant(iq), tape.constant(ap))?;
    let cce = cce_loss(out.probabilities, &targets)?;
    let loss = cce.add(&s.l2_penalty(lambda)?)?;
    let value = f64::from(loss.value().item());
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let grads = tape.backward(loss)?;
    s.accumulate_grads(&grads);
    let probs = out.probabilities.value();
    let correct = count_correct(&probs, labels);
    drop(s);
    adam.update(&mut model.store, lr)?;
    Ok(StepStats { loss: value, correct })
}

fn count_correct(probs: &Tensor<f32>, labels: &[usize]) -> usize {
    let c = probs.shape()[1];
    probs
        .data()
        .chunks_exact(c)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count()
}

/// Inference-mode `(mean loss, accuracy)` where the loss includes the L2
/// penalty, matching the training objective.
pub fn evaluate_loss(model: &mut AmcModel<f32>, data: &Examples) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let mut total = 0.0;
    let mut correct = 0;
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(EVAL_BATCH) {
        let (iq, ap, labels) = data.batch(chunk);
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut model.store, Mode::Infer);
        let out = model.net.forward(&mut s, tape.constant(iq), tape.constant(ap))?;
        let cce = cce_loss(out.probabilities, &one_hot(&labels, model.config.num_classes))?;
        total += f64::from(cce.value().item()) * chunk.len() as f64;
        correct += count_correct(&out.probabilities.value(), &labels);
    }
    let n = data.len() as f64;
    Ok((total / n + model.store.l2_penalty_value(model.config.l2_lambda), correct as f64 / n))
}

/// Mini-batch training of an [`AmcModel`] on prepared examples.
pub struct ModelTrainer<'d> {
    pub model: AmcModel<f32>,
    pub adam: Adam<f32>,
    pub train: &'d Examples,
    pub val: &'d Examples,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl<'d> ModelTrainer<'d> {
    pub fn new(model: AmcModel<f32>, train: &'d Examples, val: &'d Examples, cfg: &TrainConfig) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::invalid("training and validation splits must be non-empty"));
        }
        if cfg.batch_size > train.len() {
            return Err(Error::invalid(format!(
                "batch size {} exceeds the {} training examples",
                cfg.batch_size,
                train.len()
            )));
        }
        for data in [train, val] {
            if data.length != model.config.length {
                return Err(Error::invalid(format!(
                    "examples have length {}, model expects {}",
                    data.length, model.config.length
                )));
            }
            if let Some(&bad) = data.labels.iter().find(|&&l| l >= model.config.num_classes) {
                return Err(Error::invalid(format!("label {bad} outside the model's {} classes", model.config.num_classes)));
            }
        }
        let adam = Adam::new(&model.store);
        Ok(Self {
            model,
            adam,
            train,
            val,
            batch_size: cfg.batch_size,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            order: (0..train.len()).collect(),
        })
    }

    /// Trains under `cfg` and returns the history; the best-validation
    /// parameters are left in `self.model`.
    pub fn fit(&mut self, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<History> {
        fit(self, cfg, on_epoch)
    }
}

impl Learner for ModelTrainer<'_> {
    type Snapshot = Vec<Tensor<f32>>;

    fn train_epoch(&mut self, lr: f64, _epoch: usize) -> Result<(f64, f64)> {
        self.order.shuffle(&mut self.rng);
        let order = std::mem::take(&mut self.order);
        let (mut loss, mut correct) = (0.0, 0);
        for chunk in order.chunks(self.batch_size) {
            let (iq, ap, labels) = self.train.batch(chunk);
            let stats = train_step(&mut self.model, &mut self.adam, iq, ap, &labels, lr)?;
            loss += stats.loss * chunk.len() as f64;
            correct += stats.correct;
        }
        self.order = order;
        let n = self.train.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }

    fn validate(&mut self) -> Result<(f64, f64)> {
        evaluate_loss(&mut self.model, self.val)
    }

    fn snapshot(&self) -> Vec<Tensor<f32>> {
        self.model.store.snapshot()
    }

    fn restore(&mut self, snapshot: &Vec<Tensor<f32>>) {
        self.model.store.restore(snapshot);
    }
}
