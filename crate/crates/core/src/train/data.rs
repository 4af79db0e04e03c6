use crate::error::{Error, Result};
use crate::signal::{iq_to_ap, Dataset, Split};
use crate::tensor::Tensor;

/// Model-ready examples: unit-power I/Q and the derived amplitude/phase,
/// both stored time-major as `[L, 2]` per sample.
#[derive(Clone, Debug)]
pub struct Examples {
    pub length: usize,
    pub num_classes: usize,
    pub iq: Vec<f32>,
    pub ap: Vec<f32>,
    pub labels: Vec<usize>,
    pub snrs: Vec<i16>,
}

/// Scales a `[I row, Q row]` capture to unit mean power, returning it
/// time-major; an all-zero capture is returned unchanged.
pub fn normalize_capture(iq_rows: &[f32]) -> Vec<f64> {
    let l = iq_rows.len() / 2;
    let power = iq_rows.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / l as f64;
    let scale = if power > 0.0 { 1.0 / power.sqrt() } else { 1.0 };
    let mut out = vec![0.0; 2 * l];
    for t in 0..l {
        out[2 * t] = f64::from(iq_rows[t]) * scale;
        out[2 * t + 1] = f64::from(iq_rows[l + t]) * scale;
    }
    out
}

impl Examples {
    /// Prepares the samples of `dataset` whose split equals `which`.
    pub fn from_split(dataset: &Dataset, splits: &[Split], which: Split) -> Result<Self> {
        if splits.len() != dataset.len() {
            return Err(Error::invalid(format!(
                "split covers {} samples, dataset has {}",
                splits.len(),
                dataset.len()
            )));
        }
        let indices: Vec<usize> = (0..dataset.len()).filter(|&i| splits[i] == which).collect();
        Self::from_indices(dataset, &indices)
    }

    pub fn from_indices(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        let l = dataset.length;
        let mut out = Examples {
            length: l,
            num_classes: dataset.classes.len(),
            iq: Vec::with_capacity(indices.len() * 2 * l),
            ap: Vec::with_capacity(indices.len() * 2 * l),
            labels: Vec::with_capacity(indices.len()),
            snrs: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            let s = dataset
                .samples
                .get(i)
                .ok_or_else(|| Error::invalid(format!("sample index {i} out of range")))?;
            if s.iq.len() != 2 * l {
                return Err(Error::invalid(format!("sample {i} has length {}, expected {l}", s.length())));
            }
            if s.class_id as usize >= out.num_classes {
                return Err(Error::invalid(format!("sample {i} has class id {} outside the class table", s.class_id)));
            }
            let iq = normalize_capture(&s.iq);
            // iq_to_ap takes row-major [I row, Q row].
            let mut rows = vec![0.0; 2 * l];
            for t in 0..l {
                rows[t] = iq[2 * t];
                rows[l + t] = iq[2 * t + 1];
            }
            let ap = iq_to_ap(&rows);
            out.iq.extend(iq.iter().map(|&v| v as f32));
            for t in 0..l {
                out.ap.push(ap[t] as f32);
                out.ap.push(ap[l + t] as f32);
            }
            out.labels.push(s.class_id as usize);
            out.snrs.push(s.snr_db);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` examples.
    pub fn take(&self, n: usize) -> Examples {
        let n = n.min(self.len());
        let w = 2 * self.length;
        Examples {
            length: self.length,
            num_classes: self.num_classes,
            iq: self.iq[..n * w].to_vec(),
            ap: self.ap[..n * w].to_vec(),
            labels: self.labels[..n].to_vec(),
            snrs: self.snrs[..n].to_vec(),
        }
    }

    /// `(iq, ap)` tensors `[B, L, 2]` and labels for the given rows.
    pub fn batch(&self, rows: &[usize]) -> (Tensor<f32>, Tensor<f32>, Vec<usize>) {
        let w = 2 * self.length;
        let mut iq = Vec::with_capacity(rows.len() * w);
        let mut ap = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            iq.extend_from_slice(&self.iq[r * w..(r + 1) * w]);
            ap.extend_from_slice(&self.ap[r * w..(r + 1) * w]);
        }
        let shape = [rows.len(), self.length, 2];
        (
            Tensor::new(&shape, iq).expect("batch shape"),
            Tensor::new(&shape, ap).expect("batch shape"),
            rows.iter().map(|&r| self.labels[r]).collect(),
        )
    }
}

/// One-hot rows `[B, classes]`.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor<f32> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        data[i * classes + l] = 1.0;
    }
    Tensor::new(&[labels.len(), classes], data).expect("one-hot shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::DatasetSpec;

    #[test]
    fn captures_are_unit_power_and_ap_matches() {
        let spec = DatasetSpec {
            snr_grid: vec![0, 10],
            samples_per_cell: 5,
            length: 32,
            ..DatasetSpec::default()
        };
        let d = spec.build().unwrap();
        let ex = Examples::from_split(&d, &spec.split(), Split::Train).unwrap();
        assert_eq!(ex.len(), 8 * 2 * 3);
        for k in 0..ex.len() {
            let iq = &ex.iq[k * 64..(k + 1) * 64];
            let p: f64 = iq.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / 32.0;
            assert!((p - 1.0).abs() < 1e-5);
            let ap = &ex.ap[k * 64..(k + 1) * 64];
            for t in 0..32 {
                let (i, q) = (iq[2 * t], iq[2 * t + 1]);
                assert!((ap[2 * t] - i.hypot(q)).abs() < 1e-6);
                assert!((ap[2 * t + 1] - i.atan2(q)).abs() < 1e-6);
            }
        }
        let (iq, ap, labels) = ex.batch(&[0, 3]);
        assert_eq!(iq.shape(), &[2, 32, 2]);
        assert_eq!(ap.shape(), &[2, 32, 2]);
        assert_eq!(labels, vec![ex.labels[0], ex.labels[3]]);
    }

    #[test]
    fn one_hot_rows() {
        let t = one_hot(&[2, 0], 3);
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
