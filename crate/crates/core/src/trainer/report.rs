use super::Selection;
use crate::{Error, Result};

/// Scores of one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    /// Fine-tuning round, `Some(0)` for the starting point.
    pub round: Option<usize>,
    pub src_dev: Option<f64>,
    pub tgt_dev: Option<f64>,
    pub tgt_test: Option<f64>,
}

impl EvalRecord {
    pub fn score(&self, mode: Selection) -> Option<f64> {
        match mode {
            Selection::SrcDev => self.src_dev,
            Selection::TgtDev => self.tgt_dev,
            Selection::TgtTest => self.tgt_test,
        }
    }
}

/// Index of the best record under `mode`; the earliest wins ties.
pub fn select_model(records: &[EvalRecord], mode: Selection) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::usage("no checkpoints to select from"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        let s = r
            .score(mode)
            .ok_or_else(|| Error::usage(format!("checkpoint {i} has no {mode} score")))?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    Ok(best.expect("non-empty").0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
    pub max: f64,
}

pub fn multi_seed_report(values: &[f64]) -> Result<SeedStats> {
    if values.len() < 2 {
        return Err(Error::usage("need at least two runs"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(SeedStats {
        n: values.len(),
        mean,
        std: var.sqrt(),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
