//! Layers with trainable state kept in a [`ParamStore`].

mod batchnorm;
mod init;
mod layers;
mod lstm;
mod params;

pub use batchnorm::{BatchNorm, BN_EPSILON, BN_MOMENTUM};
pub use init::{glorot_uniform, he_normal};
pub use layers::{Conv2d, Dense};
pub use lstm::Lstm;
pub(crate) use batchnorm::batch_norm;
pub(crate) use lstm::lstm;
pub use params::{Mode, Param, ParamId, ParamKind, ParamStore, Session};
