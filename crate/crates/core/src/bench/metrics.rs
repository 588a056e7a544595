use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const THRESHOLD: f64 = 0.5;

/// Evaluation scores. Classification fields are set for classification
/// tasks, regression fields for regression tasks; `mse` is always set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::EmptyDataset("metrics input"));
    }
    if pred.len() != truth.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Outputs at or above [`THRESHOLD`] count as class 1.
pub fn confusion(pred: &[f64], truth: &[f64]) -> Result<Confusion> {
    check(pred, truth)?;
    let mut c = Confusion::default();
    for (p, t) in pred.iter().zip(truth) {
        match (*p >= THRESHOLD, *t >= THRESHOLD) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
}

pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Accuracy, precision, recall and F1 for class 1. Ratios with an empty
/// denominator are reported as 0.
pub fn classification(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    let c = confusion(pred, truth)?;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy: Some(ratio(c.tp + c.tn, pred.len())),
        precision: Some(precision),
        recall: Some(recall),
        f1: Some(f1),
        mse: mse(pred, truth)?,
        r2: None,
    })
}

pub fn regression(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    Ok(Metrics {
        mse: mse(pred, truth)?,
        r2: Some(r_squared(pred, truth)?),
        ..Default::default()
    })
}
