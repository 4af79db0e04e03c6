//! Parameter and FLOP tables.
//!
//! FLOPs count one multiply-accumulate as 2. Bias adds, activations, batch
//! norm, pooling inputs and residual adds cost 1 per element; thresholding
//! costs 4 per element (abs, compare, divide, subtract).

use std::fmt;

use super::config::ModelConfig;
use super::AmcModel;
use crate::autodiff::{conv_output_len, Padding};
use crate::error::Result;
use crate::shrinkage::ThresholdPaths;
use crate::tensor::Real;

/// Named rows with a running total.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccountingTable {
    pub rows: Vec<(String, u64)>,
}

impl AccountingTable {
    pub fn push(&mut self, name: impl Into<String>, value: u64) {
        self.rows.push((name.into(), value));
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|(_, v)| v).sum()
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Sum of every row whose name starts with `prefix`.
    pub fn subtotal(&self, prefix: &str) -> u64 {
        self.rows
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v)
            .sum()
    }

    /// Rows merged by their module path (the name without its last segment).
    pub fn grouped(&self) -> AccountingTable {
        let mut out = AccountingTable::default();
        for (name, v) in &self.rows {
            let group = name.rsplit_once('/').map_or(name.as_str(), |(g, _)| g);
            match out.rows.iter_mut().find(|(n, _)| n == group) {
                Some((_, acc)) => *acc += v,
                None => out.push(group, *v),
            }
        }
        out
    }
}

impl fmt::Display for AccountingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
        for (name, v) in &self.rows {
            writeln!(f, "{name:<width$}  {v:>12}")?;
        }
        write!(f, "{:<width$}  {:>12}", "total", self.total())
    }
}

/// Trainable scalars per tensor; batch-norm running statistics are excluded.
pub fn count_params<T: Real>(model: &AmcModel<T>) -> AccountingTable {
    let mut table = AccountingTable::default();
    for (_, p) in model.store.iter().filter(|(_, p)| p.kind.trainable()) {
        table.push(p.name.clone(), p.value.numel() as u64);
    }
    table
}

/// `y = x·W + b` for one input row.
pub fn dense_flops(din: usize, dout: usize) -> u64 {
    (dout * (2 * din + 1)) as u64
}

/// Convolution producing `positions × cout` outputs from `patch`-long patches.
pub fn conv_flops(positions: usize, cout: usize, patch: usize) -> u64 {
    (positions * cout * (2 * patch + 1)) as u64
}

/// One LSTM step: gate pre-activations, then 13 element ops per unit.
pub fn lstm_step_flops(input: usize, units: usize) -> u64 {
    (8 * units * (input + units) + 13 * units) as u64
}

/// Analytic FLOPs of one single-sample forward pass at capture length `length`.
pub fn count_flops(config: &ModelConfig, length: usize) -> Result<AccountingTable> {
    let mut cfg = config.clone();
    cfg.length = length;
    cfg.validate()?;
    let mut t = AccountingTable::default();
    let u = cfg.lstm_units;
    let f = cfg.cnn_filters;
    for path in ["iq", "ap"] {
        t.push(format!("{path}/lstm"), length as u64 * lstm_step_flops(2, u));
        t.push(format!("{path}/conv_time"), conv_flops(length * 2, f, 3));
        t.push(format!("{path}/conv_cross"), conv_flops(length * 2, f, 3));
        let w = 4;
        let mut h = length;
        let mut c = f + 1;
        for (k, (&cout, &down)) in cfg.block_channels.iter().zip(&cfg.block_downsample).enumerate() {
            let name = format!("{path}/block{}", k + 1);
            let stride = if down { 2 } else { 1 };
            let (h1, _) = conv_output_len(h, 3, stride, 1, Padding::Same)?;
            let e_in = (h * w * c) as u64;
            let e_out = (h1 * w * cout) as u64;
            t.push(format!("{name}/bn1"), e_in);
            t.push(format!("{name}/relu1"), e_in);
            t.push(format!("{name}/conv1"), conv_flops(h1 * w, cout, 9 * c));
            t.push(format!("{name}/bn2"), e_out);
            t.push(format!("{name}/relu2"), e_out);
            t.push(format!("{name}/conv2"), conv_flops(h1 * w, cout, 9 * cout));
            // Per-channel subnetwork: fc1, bn, relu, fc2, sigmoid.
            let subnet = 2 * dense_flops(cout, cout) + 3 * cout as u64;
            t.push(format!("{name}/mean_path"), e_out + subnet);
            let mix = match cfg.paths {
                ThresholdPaths::Dual => {
                    t.push(format!("{name}/max_path"), e_out + subnet);
                    3 * cout as u64 + 1
                }
                ThresholdPaths::Single => 0,
            };
            t.push(format!("{name}/threshold_scale"), mix + cout as u64 + 1);
            t.push(format!("{name}/shrink"), 4 * e_out);
            if down {
                t.push(format!("{name}/identity_pool"), e_in);
            }
            t.push(format!("{name}/residual_add"), e_out);
            h = h1;
            c = cout;
        }
        let e = (h * w * c) as u64;
        t.push(format!("{path}/bn_out"), e);
        t.push(format!("{path}/relu_out"), e);
        t.push(format!("{path}/gap"), e);
    }
    let n = cfg.num_classes;
    t.push("classifier", dense_flops(cfg.feature_width(), n));
    t.push("softmax", 3 * n as u64);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shrinkage::ThresholdPaths;

    #[test]
    fn closed_form_examples() {
        assert_eq!(dense_flops(16, 24), 792);
        let (l, w) = (10, 3);
        assert_eq!(conv_flops(l * w, 1, 1), 3 * (l * w) as u64);
    }

    #[test]
    fn parameter_table() {
        let model = AmcModel::<f32>::new(ModelConfig::new(128, 11), 0).unwrap();
        let table = count_params(&model);
        assert_eq!(table.subtotal("iq/lstm/"), 112);
        assert_eq!(table.subtotal("classifier/"), 363);
        assert_eq!(table.total() as usize, model.param_count());
        assert!(table.rows.iter().all(|(n, _)| !n.contains("running") && !n.ends_with("updates")));
        assert!(table.get("iq/block1/gamma_raw").is_some() && table.get("ap/block4/kappa_raw").is_some());
        let grouped = table.grouped();
        assert_eq!(grouped.get("iq/lstm"), Some(112));
    }

    #[test]
    fn default_totals() {
        let dual = AmcModel::<f32>::new(ModelConfig::new(128, 24), 0).unwrap();
        let single = AmcModel::<f32>::new(ModelConfig::new(128, 24).with_paths(ThresholdPaths::Single), 0).unwrap();
        let (d, s) = (dual.param_count() as f64, single.param_count() as f64);
        assert!((20_000.0..=32_000.0).contains(&d), "{d}");
        let reduction = (d - s) / d;
        assert!((0.05..=0.15).contains(&reduction), "{reduction}");
    }

    #[test]
    fn flops_scale_linearly_in_length() {
        let cfg = ModelConfig::new(128, 11);
        let short = count_flops(&cfg, 128).unwrap().total() as f64;
        let long = count_flops(&cfg, 1024).unwrap().total() as f64;
        let ratio = long / short;
        assert!((7.5..=8.5).contains(&ratio), "{ratio}");
        let single = count_flops(&cfg.clone().with_paths(ThresholdPaths::Single), 128).unwrap().total() as f64;
        assert!(single <= short && (short - single) / short < 0.05);
    }
}
