use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::channel::{apply_channel, ChannelParams};
use super::modulation::{modulate, Modulation};
use crate::error::{Error, Result};

/// One labeled capture.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSample {
    /// `2·L` values: the in-phase row, then the quadrature row.
    pub iq: Vec<f32>,
    pub class_id: u16,
    pub snr_db: i16,
    /// Generation seed; 0 for imported captures.
    pub seed: u64,
}

impl SignalSample {
    pub fn length(&self) -> usize {
        self.iq.len() / 2
    }
}

/// Samples plus the class table they index into.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub length: usize,
    pub samples: Vec<SignalSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sorted distinct SNR levels.
    pub fn snr_levels(&self) -> Vec<i16> {
        let mut levels: Vec<i16> = self.samples.iter().map(|s| s.snr_db).collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }
}

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub classes: Vec<Modulation>,
    pub snr_grid: Vec<i16>,
    pub samples_per_cell: usize,
    pub length: usize,
    pub sps: usize,
    pub rolloff: f64,
    /// Largest carrier offset magnitude, in cycles per sample.
    pub cfo_max: f64,
    pub master_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: vec![
                Modulation::Bpsk,
                Modulation::Qpsk,
                Modulation::Psk8,
                Modulation::Qam16,
                Modulation::Pam4,
                Modulation::Ask4,
                Modulation::Cpfsk,
                Modulation::Gfsk,
            ],
            snr_grid: snr_range(-20, 18, 4).expect("valid default range"),
            samples_per_cell: 500,
            length: 128,
            sps: 8,
            rolloff: 0.35,
            cfo_max: 0.01,
            master_seed: 0,
        }
    }
}

/// `start, start + step, …` up to and including `end` when it lies on the grid.
pub fn snr_range(start: i16, end: i16, step: i16) -> Result<Vec<i16>> {
    if step <= 0 || end < start {
        return Err(Error::invalid(format!("bad SNR range {start}:{end}:{step}")));
    }
    Ok((start..=end).step_by(step as usize).collect())
}

/// Parses `start:end:step` or a comma-separated list of dB values.
pub fn parse_snr_grid(s: &str) -> Result<Vec<i16>> {
    let bad = |e: std::num::ParseIntError| Error::invalid(format!("bad SNR spec `{s}`: {e}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(Error::invalid(format!("SNR range must be start:end:step, got `{s}`")));
        };
        snr_range(a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?, c.trim().parse().map_err(bad)?)
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(bad)).collect()
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        if self.snr_grid.is_empty() || self.snr_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("SNR grid must be non-empty and strictly increasing"));
        }
        if self.samples_per_cell == 0 {
            return Err(Error::invalid("samples_per_cell must be at least 1"));
        }
        if self.length == 0 || self.sps == 0 {
            return Err(Error::invalid("length and sps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rolloff) || !(0.0..0.5).contains(&self.cfo_max) {
            return Err(Error::invalid("rolloff must lie in [0, 1] and cfo_max in [0, 0.5)"));
        }
        if self.num_samples() > u32::MAX as usize || self.classes.len() > u16::MAX as usize {
            return Err(Error::invalid("dataset exceeds SIGSET format limits"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.classes.len() * self.snr_grid.len() * self.samples_per_cell
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|m| m.name().to_string()).collect()
    }

    /// Seed of sample `index` in cell `(class, snr)`.
    pub fn sample_seed(&self, class_id: usize, snr_db: i16, index: usize) -> u64 {
        let mut h = splitmix64(self.master_seed);
        for v in [class_id as u64, snr_db as i64 as u64, index as u64] {
            h = splitmix64(h ^ v);
        }
        h
    }

    /// Synthesizes one capture; `with_noise = false` gives its clean twin.
    pub fn generate(&self, class_id: usize, snr_db: i16, index: usize, with_noise: bool) -> Result<SignalSample> {
        let seed = self.sample_seed(class_id, snr_db, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let cfo = if self.cfo_max > 0.0 { rng.random_range(-self.cfo_max..=self.cfo_max) } else { 0.0 };
        let n_symbols = self.length.div_ceil(self.sps) + 2;
        let clean = modulate(self.classes[class_id], n_symbols, self.sps, self.rolloff, &mut rng)?;
        let params = ChannelParams {
            snr_db: if with_noise { f64::from(snr_db) } else { f64::INFINITY },
            cfo,
            phase,
        };
        let iq = apply_channel(&clean, self.length, params, rng.random())?;
        Ok(SignalSample {
            iq: iq.into_iter().map(|v| v as f32).collect(),
            class_id: class_id as u16,
            snr_db,
            seed,
        })
    }

    /// Every cell in class-major, then SNR, then index order.
    pub fn build(&self) -> Result<Dataset> {
        self.validate()?;
        let cells: Vec<(usize, i16)> = (0..self.classes.len())
            .flat_map(|c| self.snr_grid.iter().map(move |&snr| (c, snr)))
            .collect();
        // Every sample has its own seed, so the parallel build is order- and
        // thread-count-independent.
        let samples = cells
            .par_iter()
            .flat_map_iter(|&(c, snr)| (0..self.samples_per_cell).map(move |i| (c, snr, i)))
            .map(|(c, snr, i)| self.generate(c, snr, i, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            classes: self.class_names(),
            length: self.length,
            samples,
        })
    }

    /// Stratified 60/20/20 assignment matching [`DatasetSpec::build`]'s order.
    pub fn split(&self) -> Vec<Split> {
        let cells = self.classes.len() * self.snr_grid.len();
        let per_cell = stratified_cell(self.samples_per_cell);
        (0..cells).flat_map(|_| per_cell.iter().copied()).collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Partition of a dataset used for fitting, model selection or reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("split must be train, val or test, got `{s}`"))),
        }
    }
}

/// First 3/5 of a cell train, next 1/5 val, the rest test.
fn stratified_cell(n: usize) -> Vec<Split> {
    let train = n * 3 / 5;
    let val = n * 4 / 5 - train;
    (0..n)
        .map(|i| {
            if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect()
}

/// Stratified split of arbitrary samples: each (class, snr) cell is divided
/// 60/20/20 in sample order.
pub fn stratified_split(samples: &[SignalSample]) -> Vec<Split> {
    use std::collections::HashMap;
    let mut cells: HashMap<(u16, i16), Vec<usize>> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        cells.entry((s.class_id, s.snr_db)).or_default().push(i);
    }
    let mut out = vec![Split::Train; samples.len()];
    for members in cells.values() {
        for (&i, split) in members.iter().zip(stratified_cell(members.len())) {
            out[i] = split;
        }
    }
    out
}

pub fn write_manifest(path: &Path, splits: &[Split]) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::at_path(path))?;
    let mut w = BufWriter::new(file);
    for (i, s) in splits.iter().enumerate() {
        writeln!(w, "{i} {s}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a manifest covering exactly `num_samples` samples.
pub fn read_manifest(path: &Path, num_samples: usize) -> Result<Vec<Split>> {
    let file = fs::File::open(path).map_err(Error::at_path(path))?;
    let malformed = |line: usize, detail: String| Error::Malformed {
        format: "manifest",
        detail: format!("line {line}: {detail}"),
    };
    let mut out: Vec<Option<Split>> = vec![None; num_samples];
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(idx), Some(split), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(n + 1, format!("expected `<index> <split>`, got `{line}`")));
        };
        let idx: usize = idx.parse().map_err(|_| malformed(n + 1, format!("bad index `{idx}`")))?;
        let split: Split = split.parse().map_err(|e: Error| malformed(n + 1, e.to_string()))?;
        let slot = out
            .get_mut(idx)
            .ok_or_else(|| malformed(n + 1, format!("index {idx} out of range for {num_samples} samples")))?;
        if slot.replace(split).is_some() {
            return Err(malformed(n + 1, format!("index {idx} listed twice")));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| malformed(0, format!("sample {i} has no split"))))
        .collect()
}
