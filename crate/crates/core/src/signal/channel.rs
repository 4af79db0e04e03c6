use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Impairments applied to one clean capture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    /// Signal-to-noise ratio in dB; `f64::INFINITY` disables the noise.
    pub snr_db: f64,
    /// Carrier frequency offset in cycles per sample.
    pub cfo: f64,
    /// Initial phase rotation in radians.
    pub phase: f64,
}

impl ChannelParams {
    pub const IDENTITY: ChannelParams = ChannelParams {
        snr_db: f64::INFINITY,
        cfo: 0.0,
        phase: 0.0,
    };
}

/// Rotates, frequency-shifts, crops to `length` at a seeded random offset,
/// and adds complex white Gaussian noise of total variance `P_s·10^(−snr/10)`
/// where `P_s` is the measured power of the cropped span.
///
/// Returns the I row followed by the Q row. The crop offset is drawn
/// before the noise, so the same seed with `snr_db = ∞` yields the clean
/// twin of a noisy capture.
pub fn apply_channel(signal: &[Complex64], length: usize, params: ChannelParams, seed: u64) -> Result<Vec<f64>> {
    if length == 0 || signal.len() < length {
        return Err(Error::invalid(format!(
            "cannot crop {length} samples from a {}-sample signal",
            signal.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..=signal.len() - length);
    let span: Vec<Complex64> = signal[start..start + length]
        .iter()
        .enumerate()
        .map(|(t, &s)| s * Complex64::from_polar(1.0, params.phase + 2.0 * PI * params.cfo * t as f64))
        .collect();
    let power = span.iter().map(|c| c.norm_sqr()).sum::<f64>() / length as f64;
    if power <= 0.0 {
        return Err(Error::invalid("signal has zero power"));
    }
    let mut out = vec![0.0; 2 * length];
    let std = if params.snr_db.is_finite() {
        (power * 10f64.powf(-params.snr_db / 10.0) / 2.0).sqrt()
    } else {
        0.0
    };
    for (t, c) in span.iter().enumerate() {
        let (ni, nq) = if std > 0.0 {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            (std * a, std * b)
        } else {
            (0.0, 0.0)
        };
        out[t] = c.re + ni;
        out[length + t] = c.im + nq;
    }
    Ok(out)
}

/// Amplitude and phase rows from I/Q rows: `A = √(I² + Q²)`, `P = atan2(I, Q)`.
pub fn iq_to_ap(iq: &[f64]) -> Vec<f64> {
    let l = iq.len() / 2;
    let (i, q) = iq.split_at(l);
    let mut out = vec![0.0; 2 * l];
    for t in 0..l {
        out[t] = i[t].hypot(q[t]);
        out[l + t] = if i[t] == 0.0 && q[t] == 0.0 { 0.0 } else { i[t].atan2(q[t]) };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::modulation::{modulate, Modulation};

    fn unit_tone(n: usize) -> Vec<Complex64> {
        (0..n).map(|t| Complex64::from_polar(1.0, 0.3 * t as f64)).collect()
    }

    #[test]
    fn identity_channel_returns_the_clean_signal() {
        let s = unit_tone(64);
        let out = apply_channel(&s, 64, ChannelParams::IDENTITY, 1).unwrap();
        for (t, c) in s.iter().enumerate() {
            assert_eq!(out[t], c.re);
            assert_eq!(out[64 + t], c.im);
        }
    }

    #[test]
    fn noise_variance_follows_snr() {
        let s = unit_tone(20_000);
        for (snr, expected) in [(0.0, 1.0), (10.0, 0.1)] {
            let params = ChannelParams { snr_db: snr, ..ChannelParams::IDENTITY };
            let noisy = apply_channel(&s, 20_000, params, 2).unwrap();
            let clean = apply_channel(&s, 20_000, ChannelParams::IDENTITY, 2).unwrap();
            let (mut vi, mut vq) = (0.0, 0.0);
            for t in 0..20_000 {
                vi += (noisy[t] - clean[t]).powi(2);
                vq += (noisy[20_000 + t] - clean[20_000 + t]).powi(2);
            }
            let (vi, vq) = (vi / 20_000.0, vq / 20_000.0);
            assert!(((vi + vq) - expected).abs() < 0.03 * expected, "{snr}: {vi} {vq}");
            assert!((vi - expected / 2.0).abs() < 0.04 * expected);
        }
    }

    #[test]
    fn zero_power_is_rejected() {
        let s = vec![Complex64::new(0.0, 0.0); 16];
        assert!(apply_channel(&s, 16, ChannelParams::IDENTITY, 0).is_err());
    }

    #[test]
    fn measured_snr_is_calibrated() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for snr in [-10.0, 0.0, 10.0] {
            let (mut ps, mut pn) = (0.0, 0.0);
            for k in 0..200 {
                let s = modulate(Modulation::Qam16, 32, 8, 0.35, &mut rng).unwrap();
                let params = ChannelParams { snr_db: snr, cfo: 0.004, phase: 1.0 };
                let clean = apply_channel(&s, 128, ChannelParams { snr_db: f64::INFINITY, ..params }, k).unwrap();
                let noisy = apply_channel(&s, 128, params, k).unwrap();
                ps += clean.iter().map(|v| v * v).sum::<f64>();
                pn += noisy.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            let measured = 10.0 * (ps / pn).log10();
            assert!((measured - snr).abs() < 0.3, "{snr}: {measured}");
        }
    }

    #[test]
    fn ap_examples() {
        let ap = iq_to_ap(&[3.0, 1.0, 0.0, 4.0, 1.0, 0.0]);
        assert!((ap[0] - 5.0).abs() < 1e-15);
        assert!((ap[3] - 3f64.atan2(4.0)).abs() < 1e-15);
        assert!((ap[3] - 0.6435).abs() < 1e-4);
        assert!((ap[1] - 2f64.sqrt()).abs() < 1e-15);
        assert!((ap[4] - PI / 4.0).abs() < 1e-15);
        assert_eq!((ap[2], ap[5]), (0.0, 0.0));
    }

    #[test]
    fn ap_reconstructs_iq() {
        let iq: Vec<f64> = (0..64).map(|k| ((k * 37 % 17) as f64 - 8.0) / 3.0).collect();
        let ap = iq_to_ap(&iq);
        for t in 0..32 {
            assert!((ap[t] * ap[32 + t].sin() - iq[t]).abs() < 1e-12);
            assert!((ap[t] * ap[32 + t].cos() - iq[32 + t]).abs() < 1e-12);
            assert!(ap[t] >= 0.0);
        }
    }
}
