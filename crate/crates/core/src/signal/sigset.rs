//! SIGSET: a little-endian container for fixed-length two-channel captures.
//!
//! ```text
//! "SIGS" u16 version u16 num_classes u32 num_samples u32 length u8 channels=2 u8 reserved
//! num_classes × (u16 byte length, UTF-8 name)
//! num_samples × (u16 class_id, i16 snr_db, u64 seed, 2·length f32: I row then Q row)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::dataset::{Dataset, SignalSample};
use crate::error::{Error, Result};

pub const SIGSET_MAGIC: &[u8; 4] = b"SIGS";
pub const SIGSET_VERSION: u16 = 1;
const FORMAT: &str = "SIGSET";
const FIXED_HEADER: u64 = 18;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SigsetHeader {
    pub classes: Vec<String>,
    pub num_samples: u32,
    pub length: u32,
}

impl SigsetHeader {
    /// Bytes occupied by the header including class names.
    pub fn header_bytes(&self) -> u64 {
        FIXED_HEADER + self.classes.iter().map(|c| 2 + c.len() as u64).sum::<u64>()
    }

    pub fn record_bytes(&self) -> u64 {
        12 + 8 * u64::from(self.length)
    }

    pub fn file_bytes(&self) -> u64 {
        self.header_bytes() + u64::from(self.num_samples) * self.record_bytes()
    }
}

/// Streams samples out of a SIGSET source one record at a time.
pub struct SigsetReader<R> {
    inner: R,
    header: SigsetHeader,
    next: u32,
}

impl SigsetReader<BufReader<File>> {
    /// Opens a file, checking its size against the header before any
    /// sample is read.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(Error::at_path(path))?;
        let actual = file.metadata().map_err(Error::at_path(path))?.len();
        let reader = SigsetReader::new(BufReader::new(file))?;
        let expected = reader.header.file_bytes();
        if actual < expected {
            return Err(Error::Truncated {
                what: format!(
                    "SIGSET payload ({} samples declared, {} complete)",
                    reader.header.num_samples,
                    actual.saturating_sub(reader.header.header_bytes()) / reader.header.record_bytes()
                ),
                expected,
                actual,
            });
        }
        if actual > expected {
            return Err(Error::Malformed {
                format: FORMAT,
                detail: format!("{} trailing bytes after the last sample", actual - expected),
            });
        }
        Ok(reader)
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: impl FnOnce() -> (String, u64, u64)) -> Result<()> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
            let (what, expected, actual) = what();
            Err(Error::Truncated { what, expected, actual })
        }
        Err(e) => Err(e.into()),
    }
}

impl<R: Read> SigsetReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut fixed = [0u8; FIXED_HEADER as usize];
        read_exact_or(&mut inner, &mut fixed[..4], || ("SIGSET header".into(), FIXED_HEADER, 0))?;
        if &fixed[..4] != SIGSET_MAGIC {
            return Err(Error::BadMagic { format: FORMAT });
        }
        read_exact_or(&mut inner, &mut fixed[4..], || ("SIGSET header".into(), FIXED_HEADER, 4))?;
        let u16_at = |i: usize| u16::from_le_bytes([fixed[i], fixed[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(fixed[i..i + 4].try_into().expect("4 bytes"));
        let version = u16_at(4);
        if version != SIGSET_VERSION {
            return Err(Error::UnsupportedVersion {
                format: FORMAT,
                found: version,
                supported: SIGSET_VERSION,
            });
        }
        let num_classes = u16_at(6);
        let num_samples = u32_at(8);
        let length = u32_at(12);
        if fixed[16] != 2 {
            return Err(Error::Malformed {
                format: FORMAT,
                detail: format!("expected 2 channels, found {}", fixed[16]),
            });
        }
        if length == 0 {
            return Err(Error::Malformed {
                format: FORMAT,
                detail: "capture length is zero".into(),
            });
        }
        let mut classes = Vec::with_capacity(num_classes as usize);
        for k in 0..num_classes {
            let mut len = [0u8; 2];
            read_exact_or(&mut inner, &mut len, || (format!("SIGSET class name {k}"), 2, 0))?;
            let len = u16::from_le_bytes(len) as usize;
            let mut name = vec![0u8; len];
            read_exact_or(&mut inner, &mut name, || (format!("SIGSET class name {k}"), len as u64, 0))?;
            classes.push(String::from_utf8(name).map_err(|_| Error::Malformed {
                format: FORMAT,
                detail: format!("class name {k} is not UTF-8"),
            })?);
        }
        Ok(Self {
            inner,
            header: SigsetHeader {
                classes,
                num_samples,
                length,
            },
            next: 0,
        })
    }

    pub fn header(&self) -> &SigsetHeader {
        &self.header
    }

    /// The next sample, or `None` after the last declared one.
    pub fn read_sample(&mut self) -> Result<Option<SignalSample>> {
        if self.next == self.header.num_samples {
            return Ok(None);
        }
        let record = self.header.record_bytes() as usize;
        let mut buf = vec![0u8; record];
        let index = self.next;
        let header = &self.header;
        let expected = header.file_bytes();
        let done = header.header_bytes() + u64::from(index) * header.record_bytes();
        // read_exact leaves no count on failure, so read incrementally.
        let mut filled = 0;
        while filled < record {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(Error::Truncated {
                        what: format!("SIGSET payload (sample {index} of {})", header.num_samples),
                        expected,
                        actual: done + filled as u64,
                    })
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let class_id = u16::from_le_bytes([buf[0], buf[1]]);
        if class_id as usize >= header.classes.len() {
            return Err(Error::Malformed {
                format: FORMAT,
                detail: format!("sample {index} has class id {class_id} but only {} classes", header.classes.len()),
            });
        }
        let snr_db = i16::from_le_bytes([buf[2], buf[3]]);
        let seed = u64::from_le_bytes(buf[4..12].try_into().expect("8 bytes"));
        let iq = buf[12..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        self.next += 1;
        Ok(Some(SignalSample {
            iq,
            class_id,
            snr_db,
            seed,
        }))
    }
}

impl<R: Read> Iterator for SigsetReader<R> {
    type Item = Result<SignalSample>;

    /// Ends after the first error.
    fn next(&mut self) -> Option<Self::Item> {
        let item = self.read_sample();
        if item.is_err() {
            self.next = self.header.num_samples;
        }
        item.transpose()
    }
}

/// Writes a SIGSET stream whose sample count is fixed up front.
pub struct SigsetWriter<W: Write> {
    inner: W,
    num_classes: usize,
    length: usize,
    declared: u32,
    written: u32,
}

impl<W: Write> SigsetWriter<W> {
    pub fn new(mut inner: W, classes: &[String], length: usize, num_samples: usize) -> Result<Self> {
        let too_big = |what: &str| Error::invalid(format!("SIGSET {what} exceeds the format limit"));
        let num_classes = u16::try_from(classes.len()).map_err(|_| too_big("class count"))?;
        let declared = u32::try_from(num_samples).map_err(|_| too_big("sample count"))?;
        let len32 = u32::try_from(length).map_err(|_| too_big("length"))?;
        if length == 0 {
            return Err(Error::invalid("SIGSET capture length must be positive"));
        }
        inner.write_all(SIGSET_MAGIC)?;
        inner.write_all(&SIGSET_VERSION.to_le_bytes())?;
        inner.write_all(&num_classes.to_le_bytes())?;
        inner.write_all(&declared.to_le_bytes())?;
        inner.write_all(&len32.to_le_bytes())?;
        inner.write_all(&[2, 0])?;
        for name in classes {
            let n = u16::try_from(name.len()).map_err(|_| too_big("class name"))?;
            inner.write_all(&n.to_le_bytes())?;
            inner.write_all(name.as_bytes())?;
        }
        Ok(Self {
            inner,
            num_classes: classes.len(),
            length,
            declared,
            written: 0,
        })
    }

    pub fn write_sample(&mut self, s: &SignalSample) -> Result<()> {
        if self.written == self.declared {
            return Err(Error::invalid(format!("more than the {} declared samples", self.declared)));
        }
        if s.iq.len() != 2 * self.length {
            return Err(Error::invalid(format!(
                "sample has {} values, expected {}",
                s.iq.len(),
                2 * self.length
            )));
        }
        if s.class_id as usize >= self.num_classes {
            return Err(Error::invalid(format!("class id {} out of range", s.class_id)));
        }
        self.inner.write_all(&s.class_id.to_le_bytes())?;
        self.inner.write_all(&s.snr_db.to_le_bytes())?;
        self.inner.write_all(&s.seed.to_le_bytes())?;
        let mut bytes = Vec::with_capacity(4 * s.iq.len());
        for v in &s.iq {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&bytes)?;
        self.written += 1;
        Ok(())
    }

    /// Flushes and returns the sink; fails if fewer samples than declared
    /// were written.
    pub fn finish(mut self) -> Result<W> {
        if self.written != self.declared {
            return Err(Error::invalid(format!(
                "{} of {} declared samples written",
                self.written, self.declared
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_sigset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(Error::at_path(path))?;
    let mut w = SigsetWriter::new(BufWriter::new(file), &dataset.classes, dataset.length, dataset.len())?;
    for s in &dataset.samples {
        w.write_sample(s)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_sigset(path: &Path) -> Result<Dataset> {
    let reader = SigsetReader::open(path)?;
    let header = reader.header().clone();
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        classes: header.classes,
        length: header.length as usize,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(k: u16) -> SignalSample {
        SignalSample {
            iq: (0..8).map(|i| (i as f32 * 0.37 - 1.1) * f32::from(k + 1) + f32::MIN_POSITIVE).collect(),
            class_id: k % 2,
            snr_db: -20 + 4 * k as i16,
            seed: 0xdead_beef_0000 + u64::from(k),
        }
    }

    fn dataset(n: u16) -> Dataset {
        Dataset {
            classes: vec!["BPSK".into(), "QPSK".into()],
            length: 4,
            samples: (0..n).map(sample).collect(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sigset");
        let d = dataset(3);
        write_sigset(&path, &d).unwrap();
        let back = read_sigset(&path).unwrap();
        assert_eq!(back.classes, d.classes);
        for (a, b) in back.samples.iter().zip(&d.samples) {
            let bits = |s: &SignalSample| s.iq.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
            assert_eq!((a.class_id, a.snr_db, a.seed), (b.class_id, b.snr_db, b.seed));
        }
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len() as u64, SigsetReader::new(&bytes[..]).unwrap().header().file_bytes());
    }

    #[test]
    fn wrong_magic() {
        let err = SigsetReader::new(&b"RIFF\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x02\x00"[..]).err().unwrap();
        assert!(matches!(err, Error::BadMagic { .. }));
        assert_eq!(err.to_string(), "not a SIGSET file");
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = Vec::new();
        write_to(&mut bytes, &dataset(1));
        bytes[4] = 9;
        let err = SigsetReader::new(&bytes[..]).err().unwrap();
        assert!(matches!(err, Error::UnsupportedVersion { found: 9, .. }), "{err}");
    }

    fn write_to(buf: &mut Vec<u8>, d: &Dataset) {
        let mut w = SigsetWriter::new(buf, &d.classes, d.length, d.len()).unwrap();
        for s in &d.samples {
            w.write_sample(s).unwrap();
        }
        w.finish().unwrap();
    }

    #[test]
    fn truncated_payload_names_sizes() {
        let mut bytes = Vec::new();
        write_to(&mut bytes, &dataset(10));
        let record = 12 + 8 * 4;
        let full = bytes.len();
        bytes.truncate(full - record);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.sigset");
        std::fs::write(&path, &bytes).unwrap();
        match SigsetReader::open(&path).err().unwrap() {
            Error::Truncated { expected, actual, what } => {
                assert_eq!((expected, actual), (full as u64, (full - record) as u64));
                assert!(what.contains("10 samples declared, 9 complete"), "{what}");
            }
            e => panic!("unexpected {e}"),
        }
        // Streaming readers see the same shortfall on the missing record.
        let reader = SigsetReader::new(&bytes[..]).unwrap();
        let results: Vec<_> = reader.collect();
        assert_eq!(results.len(), 10);
        let err = results[9].as_ref().unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }) && err.to_string().contains(&full.to_string()));
    }

    #[test]
    fn writer_enforces_declared_count() {
        let d = dataset(2);
        let mut w = SigsetWriter::new(Vec::new(), &d.classes, 4, 2).unwrap();
        w.write_sample(&d.samples[0]).unwrap();
        assert!(w.finish().is_err());
    }
}
