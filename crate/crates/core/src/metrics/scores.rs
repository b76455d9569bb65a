//! Accuracy, NLL, ECE and Brier score over a batch of predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 15;
/// Probabilities are clamped to at least this before taking logs.
pub const NLL_CLAMP: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-9;

/// Predicted probabilities with their labels, and optionally the logits the
/// probabilities came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBatch {
    probs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    logits: Option<Vec<Vec<f64>>>,
}

impl EvalBatch {
    pub fn new(probs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Usage("evaluation batch needs at least one row".into()));
        }
        if probs.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} probability rows but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        let k = probs[0].len();
        for (i, (row, &label)) in probs.iter().zip(&labels).enumerate() {
            if row.len() != k || k == 0 {
                return Err(Error::Dimension(format!(
                    "row {i} has {} classes, expected {k}",
                    row.len()
                )));
            }
            if label >= k {
                return Err(Error::Range(format!("row {i}: label {label} outside {k} classes")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Numeric(format!(
                    "row {i} is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(Self {
            probs,
            labels,
            logits: None,
        })
    }

    /// Batch built from logits; probabilities are their softmax.
    pub fn from_logits(logits: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let probs = logits
            .iter()
            .map(|l| crate::autograd::softmax(l))
            .collect::<Result<Vec<_>>>()?;
        let mut batch = Self::new(probs, labels)?;
        batch.logits = Some(logits);
        Ok(batch)
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn logits(&self) -> Option<&[Vec<f64>]> {
        self.logits.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.probs[0].len()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean of `-ln p(label)`, in nats.
pub fn nll(batch: &EvalBatch) -> f64 {
    let total: f64 = batch
        .probs
        .iter()
        .zip(&batch.labels)
        .map(|(row, &y)| -row[y].max(NLL_CLAMP).ln())
        .sum();
    // `+ 0.0` turns a perfect score of -0 into 0.
    total / batch.len() as f64 + 0.0
}

/// Fraction of rows whose argmax is the label.
pub fn accuracy(batch: &EvalBatch) -> f64 {
    let correct = batch
        .probs
        .iter()
        .zip(&batch.labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    correct as f64 / batch.len() as f64
}

/// Mean over rows of `K^-1 sum_k (t_k - p_k)^2` with one-hot `t`.
///
/// The `1/K` factor makes this `1/K` times the classical multi-class Brier
/// score.
pub fn brier(batch: &EvalBatch) -> f64 {
    let k = batch.num_classes() as f64;
    let total: f64 = batch
        .probs
        .iter()
        .zip(&batch.labels)
        .map(|(row, &y)| {
            row.iter()
                .enumerate()
                .map(|(c, &p)| {
                    let t = if c == y { 1.0 } else { 0.0 };
                    (t - p) * (t - p)
                })
                .sum::<f64>()
                / k
        })
        .sum();
    total / batch.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub count: usize,
    pub mean_confidence: f64,
    pub mean_accuracy: f64,
}

/// Equal-width confidence bins over (0, 1]; bin `b` (1-based) is
/// `((b-1)/B, b/B]` and confidence 0 falls in the first bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<Bin>,
}

/// 0-based bin of `confidence` among `bins` equal-width bins.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    let b = bins as f64;
    let upper = |i: usize| (i + 1) as f64 / b;
    let mut idx = ((confidence * b).ceil() as usize).saturating_sub(1).min(bins - 1);
    while idx > 0 && confidence <= idx as f64 / b {
        idx -= 1;
    }
    while idx + 1 < bins && confidence > upper(idx) {
        idx += 1;
    }
    idx
}

pub fn reliability_bins(batch: &EvalBatch, bins: usize) -> Result<ReliabilityBins> {
    if bins == 0 {
        return Err(Error::Usage("need at least one bin".into()));
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    for (row, &y) in batch.probs.iter().zip(&batch.labels) {
        let pred = argmax(row);
        let c = row[pred];
        let b = bin_index(c, bins);
        count[b] += 1;
        conf[b] += c;
        if pred == y {
            hits[b] += 1;
        }
    }
    Ok(ReliabilityBins {
        bins: (0..bins)
            .map(|b| {
                if count[b] == 0 {
                    Bin {
                        count: 0,
                        mean_confidence: 0.0,
                        mean_accuracy: 0.0,
                    }
                } else {
                    Bin {
                        count: count[b],
                        mean_confidence: conf[b] / count[b] as f64,
                        mean_accuracy: hits[b] as f64 / count[b] as f64,
                    }
                }
            })
            .collect(),
    })
}

/// Expected calibration error: `sum_b (n_b / n) |acc_b - conf_b|`.
pub fn ece(batch: &EvalBatch, bins: usize) -> Result<f64> {
    let rb = reliability_bins(batch, bins)?;
    let n = batch.len() as f64;
    Ok(rb
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n * (b.mean_accuracy - b.mean_confidence).abs())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[f64]], labels: &[usize]) -> EvalBatch {
        EvalBatch::new(rows.iter().map(|r| r.to_vec()).collect(), labels.to_vec()).unwrap()
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll(&batch(&[&[1.0, 0.0], &[0.0, 1.0]], &[0, 1])), 0.0);
        let u = batch(&[&[0.5, 0.5], &[0.5, 0.5]], &[0, 1]);
        assert!((nll(&u) - std::f64::consts::LN_2).abs() < 1e-15);
        // Zero probability on the label is clamped.
        let z = batch(&[&[1.0, 0.0]], &[1]);
        assert!((nll(&z) + NLL_CLAMP.ln()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&batch(&[&[0.9, 0.1], &[0.2, 0.8]], &[0, 1])), 1.0);
        assert_eq!(accuracy(&batch(&[&[0.9, 0.1], &[0.2, 0.8]], &[1, 0])), 0.0);
        assert_eq!(accuracy(&batch(&[&[0.5, 0.5]], &[0])), 1.0);
    }

    #[test]
    fn ece_examples() {
        let perfect = batch(&[&[1.0, 0.0], &[0.0, 1.0]], &[0, 1]);
        assert_eq!(ece(&perfect, 15).unwrap(), 0.0);
        let wrong = batch(&[&[0.7, 0.3]], &[1]);
        assert!((ece(&wrong, 15).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn bin_edges_are_right_closed() {
        assert_eq!(bin_index(0.0, 15), 0);
        assert_eq!(bin_index(1.0, 15), 14);
        assert_eq!(bin_index(1.0 / 15.0, 15), 0);
        assert_eq!(bin_index(0.2, 5), 0);
        assert_eq!(bin_index(0.2000001, 5), 1);
        assert_eq!(bin_index(0.7, 15), 10);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&batch(&[&[0.0, 1.0, 0.0]], &[1])), 0.0);
        assert!((brier(&batch(&[&[0.5, 0.5]], &[0])) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn invalid_batches() {
        assert!(EvalBatch::new(vec![vec![0.6, 0.6]], vec![0]).is_err());
        assert!(EvalBatch::new(vec![vec![0.5, 0.5]], vec![2]).is_err());
        assert!(EvalBatch::new(vec![], vec![]).is_err());
        assert!(EvalBatch::new(vec![vec![0.5, 0.5], vec![1.0]], vec![0, 0]).is_err());
    }
}
