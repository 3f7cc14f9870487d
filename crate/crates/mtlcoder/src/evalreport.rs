//! Metrics and reporting: per-label F1, macro-F1, the always-present
//! baseline, session-level posterior aggregation, and report emission.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Decision threshold default; the boundary is inclusive.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Session posterior: elementwise mean of the per-turn posteriors.
pub fn aggregate_session(turn_posteriors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = turn_posteriors.len();
    if m == 0 {
        return Err(EvalError::Usage("aggregate over an empty session".to_string()));
    }
    let l = turn_posteriors[0].len();
    let mut out = vec![0.0; l];
    for p in turn_posteriors {
        if p.len() != l {
            return Err(EvalError::Usage("ragged posterior lengths".to_string()));
        }
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= m as f64;
    }
    Ok(out)
}

/// Bit l = 1 iff posterior(l) >= tau.
pub fn threshold(posterior: &[f64], tau: f64) -> LabelSet {
    LabelSet {
        bits: posterior.iter().map(|&p| u8::from(p >= tau)).collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerLabelMetrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Labels that never occur and are never predicted; their F1 is
    /// defined as 0 and flagged here.
    pub flagged: Vec<bool>,
    pub macro_f1: f64,
}

/// Per-label F1 from confusion counts: F1 = 2TP / (2TP + FP + FN).
pub fn f1_per_label(refs: &[LabelSet], preds: &[LabelSet]) -> Result<PerLabelMetrics> {
    if refs.len() != preds.len() {
        return Err(EvalError::Usage(format!(
            "{} references vs {} predictions",
            refs.len(),
            preds.len()
        )));
    }
    if refs.is_empty() {
        return Err(EvalError::Usage("no samples".to_string()));
    }
    let l = refs[0].len();
    let mut tp = vec![0usize; l];
    let mut fp = vec![0usize; l];
    let mut fn_ = vec![0usize; l];
    for (r, p) in refs.iter().zip(preds) {
        if r.len() != l || p.len() != l {
            return Err(EvalError::Usage("ragged label set lengths".to_string()));
        }
        for i in 0..l {
            match (r.bits[i], p.bits[i]) {
                (1, 1) => tp[i] += 1,
                (0, 1) => fp[i] += 1,
                (1, 0) => fn_[i] += 1,
                _ => {}
            }
        }
    }
    let mut precision = vec![0.0; l];
    let mut recall = vec![0.0; l];
    let mut f1 = vec![0.0; l];
    let mut flagged = vec![false; l];
    for i in 0..l {
        precision[i] = if tp[i] + fp[i] > 0 {
            tp[i] as f64 / (tp[i] + fp[i]) as f64
        } else {
            0.0
        };
        recall[i] = if tp[i] + fn_[i] > 0 {
            tp[i] as f64 / (tp[i] + fn_[i]) as f64
        } else {
            0.0
        };
        let denom = 2 * tp[i] + fp[i] + fn_[i];
        if denom > 0 {
            f1[i] = 2.0 * tp[i] as f64 / denom as f64;
        } else {
            f1[i] = 0.0;
            flagged[i] = true;
        }
    }
    let macro_f1 = f1.iter().sum::<f64>() / l as f64;
    Ok(PerLabelMetrics {
        precision,
        recall,
        f1,
        flagged,
        macro_f1,
    })
}

/// F1 of the constant all-ones predictor per label: 2p/(1+p) for
/// prevalence p.
pub fn baseline_always_present(refs: &[LabelSet]) -> Result<Vec<f64>> {
    if refs.is_empty() {
        return Err(EvalError::Usage("no samples".to_string()));
    }
    let l = refs[0].len();
    let n = refs.len() as f64;
    let mut out = vec![0.0; l];
    for (i, o) in out.iter_mut().enumerate() {
        let positives = refs.iter().filter(|r| r.bits[i] == 1).count() as f64;
        let p = positives / n;
        *o = 2.0 * p / (1.0 + p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub labels: Vec<String>,
    pub metrics: PerLabelMetrics,
    pub baseline: Vec<f64>,
    /// Macro-F1 of each seed's run, when produced by a multi-seed run.
    pub per_seed_macro_f1: Vec<f64>,
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn mean_seed_macro_f1(&self) -> Option<f64> {
        if self.per_seed_macro_f1.is_empty() {
            None
        } else {
            Some(self.per_seed_macro_f1.iter().sum::<f64>() / self.per_seed_macro_f1.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

/// Deterministic serialization: codes as rows, metric columns, AVG row last.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report).expect("report serialization");
            bytes.push(b'\n');
            bytes
        }
        ReportFormat::Csv => {
            let mut out = String::from("code,precision,recall,f1,baseline,flagged\n");
            for (i, code) in report.labels.iter().enumerate() {
                out.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},{:.6},{}\n",
                    code,
                    report.metrics.precision[i],
                    report.metrics.recall[i],
                    report.metrics.f1[i],
                    report.baseline[i],
                    report.metrics.flagged[i]
                ));
            }
            let baseline_avg =
                report.baseline.iter().sum::<f64>() / report.baseline.len().max(1) as f64;
            out.push_str(&format!(
                "AVG,,,{:.6},{:.6},\n",
                report.metrics.macro_f1, baseline_avg
            ));
            out.into_bytes()
        }
        ReportFormat::Table => {
            let mut out = String::new();
            out.push_str(&format!("task: {}\n", report.task));
            out.push_str(&format!("config: {}\n", report.config_fingerprint));
            out.push_str(&format!(
                "{:<8} {:>9} {:>9} {:>9} {:>9}\n",
                "code", "prec", "recall", "f1", "baseline"
            ));
            for (i, code) in report.labels.iter().enumerate() {
                let flag = if report.metrics.flagged[i] { " *" } else { "" };
                out.push_str(&format!(
                    "{:<8} {:>9.3} {:>9.3} {:>9.3} {:>9.3}{}\n",
                    code,
                    report.metrics.precision[i],
                    report.metrics.recall[i],
                    report.metrics.f1[i],
                    report.baseline[i],
                    flag
                ));
            }
            let baseline_avg =
                report.baseline.iter().sum::<f64>() / report.baseline.len().max(1) as f64;
            out.push_str(&format!(
                "{:<8} {:>9} {:>9} {:>9.3} {:>9.3}\n",
                "AVG", "", "", report.metrics.macro_f1, baseline_avg
            ));
            if !report.per_seed_macro_f1.is_empty() {
                let mean = report.mean_seed_macro_f1().unwrap();
                out.push_str(&format!(
                    "seeds: {} runs, mean macro-f1 {:.3}\n",
                    report.per_seed_macro_f1.len(),
                    mean
                ));
            }
            if report.metrics.flagged.iter().any(|&f| f) {
                out.push_str("* label never occurs and is never predicted; f1 defined as 0\n");
            }
            out.into_bytes()
        }
    }
}
