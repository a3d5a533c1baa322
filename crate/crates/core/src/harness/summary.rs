use serde::{Deserialize, Serialize};

use crate::error::SummaryError;
use crate::pipeline::RunReport;

/// Relative improvement of `acc` over `base`: `(acc - base) / base`.
pub fn improvement(acc: f64, base: f64) -> Option<f64> {
    (base > 0.0).then(|| (acc - base) / base)
}

/// Signed percentage with two decimals, e.g. `+16.40%`.
pub fn format_improve(ratio: f64) -> String {
    let pct = ratio * 100.0;
    // Keeps tiny negative ratios from printing as "-0.00%".
    let pct = if pct.abs() < 0.005 { 0.0 } else { pct };
    format!("{pct:+.2}%")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub mode: String,
    pub num_queries: u32,
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Relative improvement over the baseline, as a ratio.
    pub improve: f64,
    pub improve_display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub baseline: String,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain([5])
            .max()
            .unwrap_or(5);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>9}  {:>9}\n",
            "label", "n", "accuracy", "improve"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>8.2}%  {:>9}\n",
                r.label,
                r.n,
                r.accuracy * 100.0,
                r.improve_display
            ));
        }
        out
    }
}

/// Tabulates accuracy per report and the improvement over the report whose
/// label is `baseline`.
pub fn emit_summary(reports: &[RunReport], baseline: &str) -> Result<Summary, SummaryError> {
    if reports.is_empty() {
        return Err(SummaryError::NoReports);
    }
    let base = reports
        .iter()
        .find(|r| r.label == baseline)
        .ok_or_else(|| SummaryError::BaselineMissing(baseline.to_string()))?;
    let base_acc = base.aggregate.accuracy;
    if base_acc <= 0.0 {
        return Err(SummaryError::ZeroBaseline(baseline.to_string()));
    }
    let rows = reports
        .iter()
        .map(|r| {
            let improve = improvement(r.aggregate.accuracy, base_acc).unwrap_or(0.0);
            SummaryRow {
                label: r.label.clone(),
                mode: r.config.mode.as_str().to_string(),
                num_queries: r.config.effective_num_queries(),
                n: r.aggregate.n,
                n_correct: r.aggregate.n_correct,
                accuracy: r.aggregate.accuracy,
                improve,
                improve_display: format_improve(improve),
            }
        })
        .collect();
    Ok(Summary {
        baseline: baseline.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        assert_eq!(format_improve(0.0), "+0.00%");
        assert_eq!(format_improve(-0.5), "-50.00%");
        assert_eq!(format_improve(-1e-9), "+0.00%");
        assert_eq!(format_improve(improvement(0.70, 0.70).unwrap()), "+0.00%");
    }

    #[test]
    fn zero_base_is_undefined() {
        assert_eq!(improvement(0.5, 0.0), None);
    }
}
