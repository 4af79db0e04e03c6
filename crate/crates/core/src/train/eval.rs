use std::time::Instant;

use super::data::Examples;
use super::trainer::EVAL_BATCH;
use crate::error::{Error, Result};
use crate::model::{count_flops, AmcModel};
use crate::tensor::argmax;

/// Counts with rows = true class and columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }
}

/// Accuracy at one SNR level.
#[derive(Clone, Debug, PartialEq)]
pub struct SnrAccuracy {
    pub snr_db: i16,
    pub accuracy: f64,
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// Ascending in SNR.
    pub per_snr: Vec<SnrAccuracy>,
    /// Same order as `per_snr`.
    pub confusion: Vec<ConfusionMatrix>,
    pub pooled: ConfusionMatrix,
    /// Over all evaluated samples.
    pub average_accuracy: f64,
    /// Best per-SNR accuracy.
    pub max_accuracy: f64,
    /// Median single-sample inference time, when measured.
    pub inference_ms: Option<f64>,
    pub params: usize,
    pub flops: u64,
}

impl EvalReport {
    pub fn accuracy_at(&self, snr_db: i16) -> Option<f64> {
        self.per_snr.iter().find(|r| r.snr_db == snr_db).map(|r| r.accuracy)
    }

    /// Pooled accuracy over all samples whose SNR lies in `lo..=hi`.
    pub fn accuracy_between(&self, lo: i16, hi: i16) -> Option<f64> {
        let (mut correct, mut n) = (0, 0);
        for (row, m) in self.per_snr.iter().zip(&self.confusion) {
            if (lo..=hi).contains(&row.snr_db) {
                correct += m.correct();
                n += m.total();
            }
        }
        (n > 0).then(|| correct as f64 / n as f64)
    }
}

/// Predicted class per example, in inference mode.
pub fn predict(model: &mut AmcModel<f32>, data: &Examples) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    let rows: Vec<usize> = (0..data.len()).collect();
    let c = model.config.num_classes;
    for chunk in rows.chunks(EVAL_BATCH) {
        let (iq, ap, _) = data.batch(chunk);
        let logits = model.logits(&iq, &ap)?;
        out.extend(logits.data().chunks_exact(c).map(argmax));
    }
    Ok(out)
}

/// Per-SNR accuracy and confusion matrices over `data`.
pub fn evaluate(model: &mut AmcModel<f32>, data: &Examples, classes: &[String]) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let c = model.config.num_classes;
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("class id {bad} is outside the model's {c}-class head")));
    }
    let predictions = predict(model, data)?;
    let mut levels: Vec<i16> = data.snrs.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut confusion: Vec<ConfusionMatrix> = levels.iter().map(|_| ConfusionMatrix::new(c)).collect();
    let mut pooled = ConfusionMatrix::new(c);
    for ((&truth, &pred), snr) in data.labels.iter().zip(&predictions).zip(&data.snrs) {
        let k = levels.binary_search(snr).expect("level present");
        confusion[k].record(truth, pred);
        pooled.record(truth, pred);
    }
    let per_snr: Vec<SnrAccuracy> = levels
        .iter()
        .zip(&confusion)
        .map(|(&snr_db, m)| SnrAccuracy {
            snr_db,
            accuracy: m.accuracy(),
            n: m.total(),
        })
        .collect();
    let max_accuracy = per_snr.iter().map(|r| r.accuracy).fold(0.0, f64::max);
    Ok(EvalReport {
        classes: classes.to_vec(),
        average_accuracy: pooled.accuracy(),
        max_accuracy,
        per_snr,
        confusion,
        pooled,
        inference_ms: None,
        params: model.param_count(),
        flops: count_flops(&model.config, model.config.length)?.total(),
    })
}

/// Median wall-clock milliseconds of single-sample inference forwards,
/// cycling through `data`, after `warmup` untimed passes.
pub fn time_inference(model: &mut AmcModel<f32>, data: &Examples, warmup: usize, runs: usize) -> Result<f64> {
    if data.is_empty() || runs == 0 {
        return Err(Error::invalid("timing needs at least one example and one run"));
    }
    let batches: Vec<_> = (0..data.len().min(runs + warmup)).map(|i| data.batch(&[i])).collect();
    let mut times = Vec::with_capacity(runs);
    for k in 0..warmup + runs {
        let (iq, ap, _) = &batches[k % batches.len()];
        let start = Instant::now();
        let logits = model.logits(iq, ap)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(logits);
        if k >= warmup {
            times.push(elapsed);
        }
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 { times[mid] } else { 0.5 * (times[mid - 1] + times[mid]) })
}
