//! Thresholding estimators and the residual shrinkage block built on them.

mod block;
mod experiment;
mod threshold;

pub use block::{ScalingPath, ShrinkageBlock, ThresholdPaths, ThresholdStats, ThresholdVars, KAPPA_RAW_INIT};
pub use experiment::{bias_mse_experiment, BiasMse};
pub use threshold::{combine_threshold, garrote, soft, threshold, Thresholding, GARROTE_EPS};
