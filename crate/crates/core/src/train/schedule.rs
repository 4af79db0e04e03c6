use crate::error::{Error, Result};

/// Training-loop hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before the learning rate is halved.
    pub plateau_window: usize,
    /// Epochs without improvement before training stops.
    pub early_stop_window: usize,
    /// Smallest decrease of the validation loss that counts as improvement.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            plateau_window: 5,
            early_stop_window: 30,
            min_delta: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("learning rate, batch size and epoch cap must be positive"));
        }
        if self.plateau_window == 0 || self.early_stop_window == 0 {
            return Err(Error::invalid("schedule windows must be positive"));
        }
        Ok(())
    }
}

/// Reaction of [`Schedule::observe`] to one epoch's validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
}

/// Learning-rate halving on plateaus plus early stopping.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub lr: f64,
    pub best: f64,
    since_improvement: usize,
    plateau: usize,
    plateau_window: usize,
    early_stop_window: usize,
    min_delta: f64,
}

impl Schedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            best: f64::INFINITY,
            since_improvement: 0,
            plateau: 0,
            plateau_window: cfg.plateau_window,
            early_stop_window: cfg.early_stop_window,
            min_delta: cfg.min_delta,
        }
    }

    /// Records a validation loss; a halving takes effect from the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        let improved = val_loss.is_finite() && (self.best == f64::INFINITY || self.best - val_loss >= self.min_delta);
        let mut halved = false;
        if improved {
            self.best = val_loss;
            self.since_improvement = 0;
            self.plateau = 0;
        } else {
            self.since_improvement += 1;
            self.plateau += 1;
            if self.plateau >= self.plateau_window {
                self.lr /= 2.0;
                self.plateau = 0;
                halved = true;
            }
        }
        Verdict {
            improved,
            halved,
            stop: self.since_improvement >= self.early_stop_window,
        }
    }
}

/// One completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// What [`fit`] needs from a model.
pub trait Learner {
    type Snapshot;

    /// One pass over the training data; returns `(mean loss, accuracy)`.
    fn train_epoch(&mut self, lr: f64, epoch: usize) -> Result<(f64, f64)>;
    /// Returns `(loss, accuracy)` on held-out data.
    fn validate(&mut self) -> Result<(f64, f64)>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: &Self::Snapshot);
}

/// Runs epochs until the cap or early stop, then restores the parameters
/// of the best validation epoch. `on_epoch` sees every record as it lands.
pub fn fit<L: Learner>(learner: &mut L, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<History> {
    cfg.validate()?;
    let mut schedule = Schedule::new(cfg);
    let mut history = History::default();
    let mut best = None;
    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr;
        let (train_loss, train_accuracy) = learner.train_epoch(lr, epoch)?;
        let (val_loss, val_accuracy) = learner.validate()?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            train_accuracy,
            val_accuracy,
        };
        on_epoch(&record);
        history.epochs.push(record);
        let verdict = schedule.observe(val_loss);
        if verdict.improved {
            best = Some(learner.snapshot());
            history.best_epoch = epoch;
            history.best_val_loss = val_loss;
        }
        if verdict.stop {
            history.stopped_early = true;
            break;
        }
    }
    if let Some(s) = &best {
        learner.restore(s);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replays a fixed validation-loss sequence.
    struct Stub {
        losses: Vec<f64>,
        epoch: usize,
        state: usize,
    }

    impl Learner for Stub {
        type Snapshot = usize;

        fn train_epoch(&mut self, _lr: f64, epoch: usize) -> Result<(f64, f64)> {
            self.epoch = epoch;
            self.state = epoch;
            Ok((1.0, 0.0))
        }

        fn validate(&mut self) -> Result<(f64, f64)> {
            Ok((self.losses[(self.epoch - 1).min(self.losses.len() - 1)], 0.0))
        }

        fn snapshot(&self) -> usize {
            self.state
        }

        fn restore(&mut self, s: &usize) {
            self.state = *s;
        }
    }

    #[test]
    fn constant_loss_halves_every_five_epochs_and_stops_at_31() {
        let mut stub = Stub { losses: vec![1.0], epoch: 0, state: 0 };
        let h = fit(&mut stub, &TrainConfig::default(), |_| {}).unwrap();
        assert_eq!(h.epochs.len(), 31);
        assert!(h.stopped_early);
        let lrs: Vec<f64> = h.epochs.iter().map(|e| e.lr).collect();
        // Halvings after epochs 6, 11, 16, 21, 26 take effect one epoch later.
        for (i, &lr) in lrs.iter().enumerate() {
            let epoch = i + 1;
            let halvings = [6, 11, 16, 21, 26].iter().filter(|&&h| h < epoch).count();
            assert_eq!(lr, 1e-3 / f64::from(1 << halvings), "epoch {epoch}");
        }
        assert_eq!((h.best_epoch, stub.state), (1, 1));
    }

    #[test]
    fn improving_loss_runs_to_the_cap() {
        let losses: Vec<f64> = (0..40).map(|k| 2.0 - 0.01 * k as f64).collect();
        let mut stub = Stub { losses, epoch: 0, state: 0 };
        let cfg = TrainConfig { max_epochs: 40, ..TrainConfig::default() };
        let h = fit(&mut stub, &cfg, |_| {}).unwrap();
        assert_eq!(h.epochs.len(), 40);
        assert!(h.epochs.iter().all(|e| e.lr == 1e-3));
        assert!(!h.stopped_early);
    }

    #[test]
    fn best_weights_are_restored() {
        let mut losses = vec![3.0, 2.0, 1.0, 1.5];
        losses.extend(std::iter::repeat_n(1.2, 40));
        let mut stub = Stub { losses, epoch: 0, state: 0 };
        let h = fit(&mut stub, &TrainConfig::default(), |_| {}).unwrap();
        assert_eq!((h.best_epoch, stub.state), (3, 3));
        let min = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(h.best_val_loss, min);
        assert_eq!(h.epochs.len(), 33);
    }

    #[test]
    fn improvements_below_min_delta_do_not_count() {
        let cfg = TrainConfig::default();
        let mut s = Schedule::new(&cfg);
        assert!(s.observe(1.0).improved);
        assert!(!s.observe(1.0 - 5e-7).improved);
        assert!(s.observe(1.0 - 2e-6).improved);
    }
}
