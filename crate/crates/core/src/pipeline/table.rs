use rayon::prelude::*;

use super::{evaluate, prepare_subject, ExperimentConfig, PreparedSubject};
use crate::band::BandRequest;
use crate::error::{Error, Result};

/// One (band, subject) entry; a failed cell keeps its error text.
#[derive(Debug, Clone, PartialEq)]
pub enum TableCell {
    Accuracy(f64),
    NoTestLabels,
    Failed(String),
}

impl TableCell {
    fn value(&self) -> Option<f64> {
        match self {
            TableCell::Accuracy(a) => Some(*a),
            _ => None,
        }
    }
}

/// Test accuracy per band (rows) and subject (columns), with mean and sample std per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableResult {
    pub subjects: Vec<String>,
    pub bands: Vec<BandRequest>,
    pub cells: Vec<Vec<TableCell>>,
}

impl TableResult {
    /// Mean and sample standard deviation of the successful cells in row `band`, in percent.
    pub fn row_stats(&self, band: usize) -> Option<(f64, f64)> {
        let v: Vec<f64> = self.cells[band].iter().filter_map(|c| c.value().map(|a| 100.0 * a)).collect();
        if v.is_empty() {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Some((mean, sample_std(&v)))
    }

    pub fn failures(&self) -> Vec<(String, BandRequest, String)> {
        let mut out = Vec::new();
        for (b, row) in self.cells.iter().enumerate() {
            for (s, cell) in row.iter().enumerate() {
                if let TableCell::Failed(msg) = cell {
                    out.push((self.subjects[s].clone(), self.bands[b], msg.clone()));
                }
            }
        }
        out
    }

    /// Percent accuracies with four decimals; `NA` marks a missing cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band");
        for s in &self.subjects {
            out.push(',');
            out.push_str(s);
        }
        out.push_str(",mean,std\n");
        for (b, row) in self.cells.iter().enumerate() {
            out.push_str(&self.bands[b].to_string());
            for cell in row {
                match cell.value() {
                    Some(a) => out.push_str(&format!(",{:.4}", 100.0 * a)),
                    None => out.push_str(",NA"),
                }
            }
            match self.row_stats(b) {
                Some((m, s)) => out.push_str(&format!(",{m:.4},{s:.4}\n")),
                None => out.push_str(",NA,NA\n"),
            }
        }
        out
    }
}

/// Standard deviation with denominator `n - 1`; zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Runs every (band, subject) cell from `template`. A failing subject or cell is recorded, not fatal.
pub fn run_table(template: &ExperimentConfig, subjects: &[String], bands: &[BandRequest]) -> Result<TableResult> {
    if subjects.is_empty() || bands.is_empty() {
        return Err(Error::ConfigInvalid("table needs at least one subject and one band".into()));
    }
    template.validate()?;
    let prepared: Vec<std::result::Result<PreparedSubject, String>> = subjects
        .par_iter()
        .map(|s| {
            let cfg = ExperimentConfig { subject: s.clone(), ..template.clone() };
            prepare_subject(&cfg).map_err(|e| e.to_string())
        })
        .collect();
    let cells = bands
        .par_iter()
        .map(|&band| {
            prepared
                .par_iter()
                .zip(subjects)
                .map(|(p, s)| match p {
                    Err(msg) => TableCell::Failed(msg.clone()),
                    Ok(p) => {
                        let cfg = ExperimentConfig { subject: s.clone(), band, ..template.clone() };
                        match evaluate(p, band, &cfg) {
                            Ok(r) => r.test_accuracy.map_or(TableCell::NoTestLabels, TableCell::Accuracy),
                            Err(e) => TableCell::Failed(e.to_string()),
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(TableResult {
        subjects: subjects.to_vec(),
        bands: bands.to_vec(),
        cells,
    })
}
