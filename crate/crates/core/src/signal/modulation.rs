use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Digital modulation classes the generator can synthesize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
    Qam64,
    Pam4,
    Ask4,
    Ook,
    Cpfsk,
    Gfsk,
}

/// Modulation index of both frequency-shift classes.
pub const FSK_MOD_INDEX: f64 = 0.5;
/// Bandwidth-time product of the GFSK Gaussian pre-filter.
pub const GFSK_BT: f64 = 0.35;

impl Modulation {
    pub const ALL: [Modulation; 10] = [
        Modulation::Bpsk,
        Modulation::Qpsk,
        Modulation::Psk8,
        Modulation::Qam16,
        Modulation::Qam64,
        Modulation::Pam4,
        Modulation::Ask4,
        Modulation::Ook,
        Modulation::Cpfsk,
        Modulation::Gfsk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Psk8 => "8PSK",
            Modulation::Qam16 => "16QAM",
            Modulation::Qam64 => "64QAM",
            Modulation::Pam4 => "PAM4",
            Modulation::Ask4 => "4ASK",
            Modulation::Ook => "OOK",
            Modulation::Cpfsk => "CPFSK",
            Modulation::Gfsk => "GFSK",
        }
    }

    /// Bits carried by one symbol.
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Modulation::Bpsk | Modulation::Ook | Modulation::Cpfsk | Modulation::Gfsk => 1,
            Modulation::Qpsk | Modulation::Pam4 | Modulation::Ask4 => 2,
            Modulation::Psk8 => 3,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    /// True for classes built from a constellation and a pulse shape.
    pub fn is_linear(self) -> bool {
        !matches!(self, Modulation::Cpfsk | Modulation::Gfsk)
    }

    /// Unit-average-power points indexed by the symbol's bit pattern, or
    /// `None` for the frequency-shift classes.
    pub fn constellation(self) -> Option<Vec<Complex64>> {
        let re = |v: f64| Complex64::new(v, 0.0);
        let points = match self {
            Modulation::Bpsk => vec![re(1.0), re(-1.0)],
            Modulation::Qpsk => vec![
                Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
                Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
                Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
                Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
            ],
            Modulation::Psk8 => (0..8u32)
                .map(|bits| Complex64::from_polar(1.0, 2.0 * PI * gray_decode(bits) as f64 / 8.0))
                .collect(),
            Modulation::Qam16 => square_qam(2, 10f64.sqrt()),
            Modulation::Qam64 => square_qam(3, 42f64.sqrt()),
            Modulation::Pam4 => (0..4).map(|b| re(pam_level(b, 2) / 5f64.sqrt())).collect(),
            Modulation::Ask4 => (0..4).map(|b| re(gray_decode(b) as f64 / 3.5f64.sqrt())).collect(),
            Modulation::Ook => vec![re(0.0), re(2f64.sqrt())],
            Modulation::Cpfsk | Modulation::Gfsk => return None,
        };
        Some(points)
    }

    /// Maps bit-pattern symbol indices to constellation points.
    pub fn map_symbols(self, symbols: &[u32]) -> Result<Vec<Complex64>> {
        let points = self
            .constellation()
            .ok_or_else(|| Error::invalid(format!("{} has no constellation", self.name())))?;
        symbols
            .iter()
            .map(|&s| {
                points
                    .get(s as usize)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("symbol {s} out of range for {}", self.name())))
            })
            .collect()
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modulation::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownModulation {
                name: s.to_string(),
                valid: Modulation::ALL.map(Modulation::name).join(", "),
            })
    }
}

fn gray_decode(mut g: u32) -> u32 {
    let mut b = g;
    while g > 1 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Gray-coded level in `{−(2^k − 1), …, 2^k − 1}` (odd integers).
fn pam_level(bits: u32, k: u32) -> f64 {
    let m = 1u32 << k;
    2.0 * gray_decode(bits) as f64 - (m - 1) as f64
}

/// Square QAM with `k` Gray-coded bits per axis; high bits select I.
fn square_qam(k: u32, norm: f64) -> Vec<Complex64> {
    let per_axis = 1u32 << k;
    (0..per_axis * per_axis)
        .map(|bits| {
            let i = pam_level(bits >> k, k);
            let q = pam_level(bits & (per_axis - 1), k);
            Complex64::new(i / norm, q / norm)
        })
        .collect()
}

/// Root-raised-cosine taps spanning `span` symbols each side, scaled so
/// that their energy equals `sps` (unit output power for unit-power symbols).
pub fn rrc_taps(sps: usize, rolloff: f64, span: usize) -> Vec<f64> {
    let half = (span * sps) as isize;
    let b = rolloff;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|n| {
            let t = n as f64 / sps as f64;
            if n == 0 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && (4.0 * b * t).abs() == 1.0 {
                b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
                let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
                num / den
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    let scale = (sps as f64 / energy).sqrt();
    taps.iter_mut().for_each(|v| *v *= scale);
    taps
}

/// Unit-area Gaussian frequency pulse for GFSK, `span` symbols wide.
fn gaussian_taps(sps: usize, bt: f64, span: usize) -> Vec<f64> {
    let half = (span * sps / 2) as isize;
    let sigma = (2f64.ln()).sqrt() / (2.0 * PI * bt);
    let mut taps: Vec<f64> = (-half..=half)
        .map(|n| {
            let t = n as f64 / sps as f64;
            (-(t * t) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|v| *v /= total);
    taps
}

fn convolve(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        if xv.re == 0.0 && xv.im == 0.0 {
            continue;
        }
        for (j, &hv) in h.iter().enumerate() {
            y[i + j] += xv * hv;
        }
    }
    y
}

/// Symbols of filter transient discarded by [`modulate`] on each side.
pub const RRC_SPAN: usize = 8;

/// Pulse-shaped baseband samples for `n_symbols` uniform random symbols.
///
/// The output holds `n_symbols · sps` samples taken from the steady-state
/// part of the filtered sequence.
pub fn modulate(modulation: Modulation, n_symbols: usize, sps: usize, rolloff: f64, rng: &mut impl Rng) -> Result<Vec<Complex64>> {
    if n_symbols == 0 || sps == 0 {
        return Err(Error::invalid("modulate needs at least one symbol and one sample per symbol"));
    }
    let pad = RRC_SPAN;
    let total = n_symbols + 2 * pad;
    let m = 1u32 << modulation.bits_per_symbol();
    let symbols: Vec<u32> = (0..total).map(|_| rng.random_range(0..m)).collect();
    let n_out = n_symbols * sps;
    let start = pad * sps;

    if modulation.is_linear() {
        let points = modulation.map_symbols(&symbols)?;
        let mut up = vec![Complex64::new(0.0, 0.0); total * sps];
        for (k, p) in points.into_iter().enumerate() {
            up[k * sps] = p;
        }
        let taps = rrc_taps(sps, rolloff, RRC_SPAN);
        let delay = taps.len() / 2;
        let shaped = convolve(&up, &taps);
        return Ok(shaped[start + delay..start + delay + n_out].to_vec());
    }

    // Frequency-shift keying: NRZ ±1 frequency pulses, optionally Gaussian
    // filtered, integrated into a continuous phase.
    let mut freq: Vec<f64> = symbols
        .iter()
        .flat_map(|&s| std::iter::repeat_n(if s == 0 { -1.0 } else { 1.0 }, sps))
        .collect();
    if modulation == Modulation::Gfsk {
        let g = gaussian_taps(sps, GFSK_BT, 4);
        let delay = g.len() / 2;
        let mut filtered = vec![0.0; freq.len()];
        for (i, out) in filtered.iter_mut().enumerate() {
            for (j, &gv) in g.iter().enumerate() {
                let k = i as isize + delay as isize - j as isize;
                if k >= 0 && (k as usize) < freq.len() {
                    *out += gv * freq[k as usize];
                }
            }
        }
        freq = filtered;
    }
    let step = PI * FSK_MOD_INDEX / sps as f64;
    let mut phase = 0.0;
    let signal: Vec<Complex64> = freq
        .iter()
        .map(|&f| {
            phase += step * f;
            Complex64::from_polar(1.0, phase)
        })
        .collect();
    Ok(signal[start..start + n_out].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bpsk_bit_convention() {
        let s = Modulation::Bpsk.map_symbols(&[0, 1, 1, 0]).unwrap();
        let re: Vec<f64> = s.iter().map(|c| c.re).collect();
        assert_eq!(re, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn qpsk_gray_map() {
        let p = Modulation::Qpsk.constellation().unwrap();
        let h = FRAC_1_SQRT_2;
        assert_eq!(p[0b00], Complex64::new(h, h));
        assert_eq!(p[0b01], Complex64::new(-h, h));
        assert_eq!(p[0b11], Complex64::new(-h, -h));
        assert_eq!(p[0b10], Complex64::new(h, -h));
    }

    #[test]
    fn constellations_have_unit_power() {
        for m in Modulation::ALL {
            if let Some(p) = m.constellation() {
                assert_eq!(p.len(), 1 << m.bits_per_symbol());
                let power = p.iter().map(|c| c.norm_sqr()).sum::<f64>() / p.len() as f64;
                assert!((power - 1.0).abs() < 1e-12, "{m}: {power}");
            }
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for m in [Modulation::Psk8, Modulation::Qam16, Modulation::Qam64, Modulation::Pam4] {
            let p = m.constellation().unwrap();
            let min_dist = (0..p.len())
                .flat_map(|a| (0..p.len()).filter(move |&b| b != a).map(move |b| (a, b)))
                .map(|(a, b)| (p[a] - p[b]).norm())
                .fold(f64::INFINITY, f64::min);
            for a in 0..p.len() {
                for b in 0..p.len() {
                    if a != b && ((p[a] - p[b]).norm() - min_dist).abs() < 1e-9 {
                        assert_eq!((a ^ b).count_ones(), 1, "{m}: {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_class_lists_valid_names() {
        let err = "FM".parse::<Modulation>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("FM") && msg.contains("BPSK") && msg.contains("GFSK"), "{msg}");
        assert_eq!("qpsk".parse::<Modulation>().unwrap(), Modulation::Qpsk);
    }

    #[test]
    fn modulated_power_is_near_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in Modulation::ALL {
            let s = modulate(m, 2000, 8, 0.35, &mut rng).unwrap();
            assert_eq!(s.len(), 16000);
            let p = s.iter().map(|c| c.norm_sqr()).sum::<f64>() / s.len() as f64;
            assert!((p - 1.0).abs() < 0.1, "{m}: {p}");
        }
    }

    #[test]
    fn fsk_has_constant_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [Modulation::Cpfsk, Modulation::Gfsk] {
            let s = modulate(m, 50, 8, 0.35, &mut rng).unwrap();
            assert!(s.iter().all(|c| (c.norm() - 1.0).abs() < 1e-12));
        }
    }
}
