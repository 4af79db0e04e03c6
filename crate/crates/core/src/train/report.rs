//! CSV, summary and SVG outputs of a training or evaluation run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::eval::{ConfusionMatrix, EvalReport, SnrAccuracy};
use super::plot::{line_chart, Series};
use super::schedule::History;
use crate::error::{Error, Result};

pub const ACCURACY_HEADER: &str = "snr_db,accuracy,n";
pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,lr,train_accuracy,val_accuracy";

/// `snr_db,accuracy,n` rows; accuracies use the shortest round-trip form.
pub fn accuracy_csv(rows: &[SnrAccuracy]) -> String {
    let mut out = format!("{ACCURACY_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.snr_db, r.accuracy, r.n);
    }
    out
}

pub fn parse_accuracy_csv(text: &str) -> Result<Vec<SnrAccuracy>> {
    let bad = |line: usize, detail: &str| Error::Malformed {
        format: "accuracy csv",
        detail: format!("line {line}: {detail}"),
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(ACCURACY_HEADER) {
        return Err(bad(1, "missing header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.trim().split(',').collect();
            let [snr, acc, n] = f[..] else {
                return Err(bad(i + 2, "expected 3 fields"));
            };
            Ok(SnrAccuracy {
                snr_db: snr.parse().map_err(|_| bad(i + 2, "bad snr"))?,
                accuracy: acc.parse().map_err(|_| bad(i + 2, "bad accuracy"))?,
                n: n.parse().map_err(|_| bad(i + 2, "bad count"))?,
            })
        })
        .collect()
}

/// Rows are true classes, columns predicted classes.
pub fn confusion_csv(m: &ConfusionMatrix, classes: &[String]) -> String {
    let mut out = String::from("true\\predicted");
    for c in classes {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (k, c) in classes.iter().enumerate() {
        out.push_str(c);
        for v in m.row(k) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn history_csv(history: &History) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for e in &history.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.epoch, e.train_loss, e.val_loss, e.lr, e.train_accuracy, e.val_accuracy
        );
    }
    out
}

/// `key: value` lines.
pub fn summary_text(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
}

pub fn eval_summary(report: &EvalReport) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("average_accuracy".to_string(), format!("{:.6}", report.average_accuracy)),
        ("max_accuracy".to_string(), format!("{:.6}", report.max_accuracy)),
        ("params".to_string(), report.params.to_string()),
        ("flops".to_string(), report.flops.to_string()),
    ];
    if let Some(ms) = report.inference_ms {
        pairs.push(("inference_ms_per_sample".to_string(), format!("{ms:.4}")));
    }
    pairs.push((
        "samples".to_string(),
        report.per_snr.iter().map(|r| r.n).sum::<u64>().to_string(),
    ));
    pairs
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(Error::at_path(path))
}

/// Writes `accuracy_by_snr.csv`, `confusion_<snr>.csv`, `confusion_all.csv`,
/// `summary.txt` and `accuracy_vs_snr.svg` into `dir`.
pub fn write_eval_report(dir: &Path, report: &EvalReport, extra_summary: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
    write(dir, "accuracy_by_snr.csv", &accuracy_csv(&report.per_snr))?;
    for (row, m) in report.per_snr.iter().zip(&report.confusion) {
        write(dir, &format!("confusion_{}.csv", row.snr_db), &confusion_csv(m, &report.classes))?;
    }
    write(dir, "confusion_all.csv", &confusion_csv(&report.pooled, &report.classes))?;
    let mut summary = eval_summary(report);
    summary.extend_from_slice(extra_summary);
    write(dir, "summary.txt", &summary_text(&summary))?;
    let points = report.per_snr.iter().map(|r| (f64::from(r.snr_db), r.accuracy)).collect();
    let svg = line_chart(
        "Accuracy vs SNR",
        "SNR (dB)",
        "accuracy",
        &[Series { name: "test", points }],
        Some((0.0, 1.0)),
    );
    write(dir, "accuracy_vs_snr.svg", &svg)
}

/// Writes `history.csv` and `loss_curves.svg` into `dir`.
pub fn write_history(dir: &Path, history: &History) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
    write(dir, "history.csv", &history_csv(history))?;
    let series = |name, f: fn(&super::schedule::EpochRecord) -> f64| Series {
        name,
        points: history.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect(),
    };
    let svg = line_chart(
        "Loss",
        "epoch",
        "loss",
        &[series("train", |e| e.train_loss), series("validation", |e| e.val_loss)],
        None,
    );
    write(dir, "loss_curves.svg", &svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::EpochRecord;

    #[test]
    fn accuracy_csv_round_trip() {
        let rows = vec![
            SnrAccuracy { snr_db: -20, accuracy: 0.125, n: 400 },
            SnrAccuracy { snr_db: 4, accuracy: 2.0 / 3.0, n: 3 },
        ];
        let text = accuracy_csv(&rows);
        assert!(text.starts_with("snr_db,accuracy,n\n-20,0.125,400\n"));
        assert_eq!(parse_accuracy_csv(&text).unwrap(), rows);
        assert!(parse_accuracy_csv("snr,acc\n").is_err());
    }

    #[test]
    fn confusion_layout() {
        let mut m = ConfusionMatrix::new(2);
        m.record(0, 1);
        m.record(1, 1);
        let text = confusion_csv(&m, &["A".into(), "B".into()]);
        assert_eq!(text, "true\\predicted,A,B\nA,0,1\nB,0,1\n");
    }

    #[test]
    fn history_rows() {
        let h = History {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 2.5,
                val_loss: 2.25,
                lr: 0.001,
                train_accuracy: 0.5,
                val_accuracy: 0.75,
            }],
            ..History::default()
        };
        assert_eq!(history_csv(&h), format!("{HISTORY_HEADER}\n1,2.5,2.25,0.001,0.5,0.75\n"));
    }
}
