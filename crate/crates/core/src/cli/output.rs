//! CSV emission and across-seed summaries.

use std::fs;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diagnostics::EpochRecord;
use crate::error::{Error, Result};

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `rows` under `header`, preceded by a provenance record.
pub fn write_csv(path: &Path, provenance: &[String], header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut first = vec!["config".to_string()];
    first.extend(provenance.iter().cloned());
    w.write_record(&first)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads back a file written by `write_csv`, skipping the provenance record.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut records = r.records().skip(1);
    let header = match records.next() {
        Some(h) => h?.iter().map(str::to_string).collect(),
        None => return Err(Error::Config(format!("{}: missing header", path.display()))),
    };
    let rows = records
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

/// Header and rows for a per-epoch table. Alignment columns appear when the
/// first record carries alignment data.
pub fn epoch_table(records: &[EpochRecord]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["epoch", "stage", "train_loss", "train_acc", "val_acc", "test_acc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let shape = records.iter().find_map(|r| r.alignment.as_ref()).map(|a| {
        (a.weight.len(), a.gradient.len(), a.direction.len(), a.criteria.len())
    });
    if let Some((nw, ng, nd, nc)) = shape {
        // Weight alignment starts at W⁽¹⁾; directions and criteria index
        // hidden activations from 1.
        header.extend((0..nw).map(|k| format!("weight_angle_{}", k + 1)));
        header.extend((0..ng).map(|k| format!("grad_angle_{k}")));
        header.extend((0..nd).map(|k| format!("dx_angle_{}", k + 1)));
        for k in 0..nc {
            header.push(format!("p_{}", k + 1));
            header.push(format!("q_{}", k + 1));
        }
        header.push("degenerate".into());
    }
    let width = header.len();
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.epoch.to_string(),
                r.stage.to_string(),
                fmt_f64(r.train_loss),
                fmt_f64(r.train_acc),
                fmt_opt(r.val_acc),
                fmt_opt(r.test_acc),
            ];
            if let Some(a) = &r.alignment {
                let angles = a.weight.iter().chain(&a.gradient).chain(&a.direction);
                let mut degenerate = false;
                for angle in angles.clone() {
                    row.push(fmt_f64(angle.degrees));
                    degenerate |= angle.degenerate;
                }
                for c in &a.criteria {
                    row.push(fmt_f64(c.p));
                    row.push(fmt_f64(c.q));
                    degenerate |= c.degenerate;
                }
                row.push(u8::from(degenerate).to_string());
            }
            row.resize(width, String::new());
            row
        })
        .collect();
    (header, rows)
}

/// Mean, sample standard deviation and 95% t-interval half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Undefined for a single sample.
    pub ci95: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Stats {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Stats {
            n,
            mean,
            std: 0.0,
            ci95: None,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Stats {
        n,
        mean,
        std,
        ci95: Some(t * std / (n as f64).sqrt()),
    }
}
