//! Task metrics: top-1 accuracy, top-k accuracy, binary F1.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Which score an evaluation reports. Serialized as `"top1"`, `"topN"`,
/// or `"f1"` in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Top1,
    TopK(usize),
    F1Binary,
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::Top1 => "top1".to_string(),
            Metric::TopK(k) => format!("top{k}"),
            Metric::F1Binary => "f1".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        match s {
            "top1" => Ok(Metric::Top1),
            "f1" => Ok(Metric::F1Binary),
            other => {
                if let Some(k) = other.strip_prefix("top") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| Error::config(format!("unknown metric '{other}'")))?;
                    if k == 0 {
                        return Err(Error::config("topk metric needs k >= 1"));
                    }
                    Ok(if k == 1 { Metric::Top1 } else { Metric::TopK(k) })
                } else {
                    Err(Error::config(format!("unknown metric '{other}'")))
                }
            }
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Metric::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Exact-match rate of predicted class indices.
pub fn top1(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(format!(
            "top1: {} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::validation("top1: empty inputs".to_string()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction of rows whose true class is among the `k` largest logits.
/// A row counts as a hit when fewer than `k` classes score strictly
/// higher than the true class (ties resolve generously).
pub fn topk_from_logits(logits: &Matrix, truth: &[usize], k: usize) -> Result<f64> {
    if logits.rows() != truth.len() {
        return Err(Error::shape(format!(
            "topk: {} logit rows vs {} labels",
            logits.rows(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::validation("topk: empty inputs".to_string()));
    }
    let mut hits = 0usize;
    for (r, &t) in truth.iter().enumerate() {
        let row = logits.row(r);
        if t >= row.len() {
            return Err(Error::validation(format!(
                "topk: label {t} out of range for {} classes",
                row.len()
            )));
        }
        let target = row[t];
        let above = row.iter().filter(|v| **v > target).count();
        if above < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Harmonic mean of precision and recall for class 1; degenerate
/// zero-denominator cases evaluate to 0.
pub fn f1_binary(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(format!(
            "f1: {} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::validation("f1: empty inputs".to_string()));
    }
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fne = 0.0;
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fne += 1.0,
            _ => {}
        }
    }
    let denom = 2.0 * tp + fp + fne;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp / denom)
}

/// Predicted class per row: argmax for multi-logit rows, sigmoid
/// threshold at 0 for single-logit binary heads.
pub fn predictions_from_logits(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            if row.len() == 1 {
                usize::from(row[0] > 0.0)
            } else {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best
            }
        })
        .collect()
}

/// Scores logits against labels under the given metric.
pub fn score_logits(logits: &Matrix, truth: &[usize], metric: Metric) -> Result<f64> {
    let classes = logits.cols();
    match metric {
        Metric::Top1 => top1(&predictions_from_logits(logits), truth),
        Metric::TopK(k) => {
            if classes == 1 {
                return Err(Error::config(
                    "topk metric is undefined for a single-logit head".to_string(),
                ));
            }
            topk_from_logits(logits, truth, k)
        }
        Metric::F1Binary => {
            if classes > 2 {
                return Err(Error::config(format!(
                    "f1 metric requires a binary task, got {classes} classes"
                )));
            }
            f1_binary(&predictions_from_logits(logits), truth)
        }
    }
}
