//! Synthetic modulated captures, the I/Q to amplitude/phase transform and
//! the SIGSET dataset format.

mod channel;
mod dataset;
mod modulation;
pub mod sigset;

pub use channel::{apply_channel, iq_to_ap, ChannelParams};
pub use dataset::{
    parse_snr_grid, read_manifest, snr_range, stratified_split, write_manifest, Dataset, DatasetSpec, SignalSample,
    Split,
};
pub use modulation::{modulate, rrc_taps, Modulation, FSK_MOD_INDEX, GFSK_BT, RRC_SPAN};
pub use sigset::{read_sigset, write_sigset, SigsetHeader, SigsetReader, SigsetWriter};
