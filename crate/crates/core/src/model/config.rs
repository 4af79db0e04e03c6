use crate::error::{Error, Result};
use crate::shrinkage::{ThresholdPaths, Thresholding};

/// Architecture hyperparameters of [`AmcModel`](super::AmcModel).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Samples per capture.
    pub length: usize,
    pub num_classes: usize,
    pub lstm_units: usize,
    pub cnn_filters: usize,
    pub block_channels: Vec<usize>,
    /// Halve the time axis on entry to the block.
    pub block_downsample: Vec<bool>,
    pub thresholding: Thresholding,
    pub paths: ThresholdPaths,
    pub l2_lambda: f64,
}

/// Shortest capture the dilated feature-extraction kernels accept.
pub const MIN_LENGTH: usize = 5;

impl ModelConfig {
    pub fn new(length: usize, num_classes: usize) -> Self {
        Self {
            length,
            num_classes,
            lstm_units: 4,
            cnn_filters: 4,
            block_channels: vec![8, 8, 16, 16],
            block_downsample: vec![true, false, true, false],
            thresholding: Thresholding::Garrote,
            paths: ThresholdPaths::Dual,
            l2_lambda: 1e-4,
        }
    }

    pub fn with_thresholding(mut self, t: Thresholding) -> Self {
        self.thresholding = t;
        self
    }

    pub fn with_paths(mut self, p: ThresholdPaths) -> Self {
        self.paths = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < MIN_LENGTH {
            return Err(Error::invalid(format!(
                "capture length {} is shorter than the minimum {MIN_LENGTH}",
                self.length
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.lstm_units != 4 {
            // The [L, units, 1] LSTM map sits beside the [L, 4, filters] CNN map.
            return Err(Error::invalid("lstm_units must be 4 to align with the CNN feature width"));
        }
        if self.cnn_filters == 0 {
            return Err(Error::invalid("cnn_filters must be positive"));
        }
        if self.block_channels.is_empty() || self.block_channels.len() != self.block_downsample.len() {
            return Err(Error::invalid("block_channels and block_downsample must be non-empty and equally long"));
        }
        let mut c = self.cnn_filters + 1;
        for &next in &self.block_channels {
            if next < c {
                return Err(Error::invalid(format!("block channels cannot decrease ({c} -> {next})")));
            }
            c = next;
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::invalid("l2_lambda must be non-negative"));
        }
        Ok(())
    }

    /// Width of the concatenated two-path feature vector.
    pub fn feature_width(&self) -> usize {
        2 * self.block_channels.last().copied().unwrap_or(0)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let list = |v: Vec<String>| v.join(",");
        vec![
            ("length".into(), self.length.to_string()),
            ("num_classes".into(), self.num_classes.to_string()),
            ("lstm_units".into(), self.lstm_units.to_string()),
            ("cnn_filters".into(), self.cnn_filters.to_string()),
            ("block_channels".into(), list(self.block_channels.iter().map(|c| c.to_string()).collect())),
            ("block_downsample".into(), list(self.block_downsample.iter().map(|b| b.to_string()).collect())),
            ("thresholding".into(), self.thresholding.name().into()),
            ("paths".into(), self.paths.name().into()),
            ("l2_lambda".into(), format!("{:e}", self.l2_lambda)),
        ]
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = ModelConfig::new(0, 0);
        let bad = |k: &str, v: &str| Error::Config(format!("bad value `{v}` for `{k}`"));
        let mut seen_length = false;
        let mut seen_classes = false;
        for (k, v) in pairs {
            match k {
                "length" => {
                    cfg.length = v.parse().map_err(|_| bad(k, v))?;
                    seen_length = true;
                }
                "num_classes" => {
                    cfg.num_classes = v.parse().map_err(|_| bad(k, v))?;
                    seen_classes = true;
                }
                "lstm_units" => cfg.lstm_units = v.parse().map_err(|_| bad(k, v))?,
                "cnn_filters" => cfg.cnn_filters = v.parse().map_err(|_| bad(k, v))?,
                "block_channels" => {
                    cfg.block_channels = v
                        .split(',')
                        .map(|c| c.trim().parse().map_err(|_| bad(k, v)))
                        .collect::<Result<_>>()?
                }
                "block_downsample" => {
                    cfg.block_downsample = v
                        .split(',')
                        .map(|c| c.trim().parse().map_err(|_| bad(k, v)))
                        .collect::<Result<_>>()?
                }
                "thresholding" => cfg.thresholding = v.parse()?,
                "paths" => cfg.paths = v.parse()?,
                "l2_lambda" => cfg.l2_lambda = v.parse().map_err(|_| bad(k, v))?,
                _ => {}
            }
        }
        if !seen_length || !seen_classes {
            return Err(Error::Config("model config needs `length` and `num_classes`".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_round_trip() {
        let cfg = ModelConfig::new(128, 11).with_thresholding(Thresholding::Soft).with_paths(ThresholdPaths::Single);
        let pairs = cfg.to_pairs();
        let back = ModelConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn short_captures_are_rejected() {
        assert!(ModelConfig::new(4, 8).validate().is_err());
        assert!(ModelConfig::new(5, 8).validate().is_ok());
    }
}
