//! Temperature scaling fitted by Nelder-Mead on log T.

use crate::autograd::softmax_into;
use crate::error::{Error, Result};
use crate::metrics::nelder_mead::{nelder_mead, NelderMeadOptions};
use crate::metrics::scores::NLL_CLAMP;

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub nll: f64,
    pub unscaled_nll: f64,
    pub probs: Vec<Vec<f64>>,
}

/// Mean NLL of `softmax(logits / temperature)`, with the usual clamp.
pub fn scaled_nll(logits: &[Vec<f64>], labels: &[usize], temperature: f64) -> f64 {
    let mut buf = Vec::new();
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        buf.clear();
        buf.extend(row.iter().map(|v| v / temperature));
        let mut p = vec![0.0; row.len()];
        softmax_into(&buf, &mut p);
        total -= p[y].max(NLL_CLAMP).ln();
    }
    total / logits.len() as f64
}

pub fn apply_temperature(logits: &[Vec<f64>], temperature: f64) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|row| {
            let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
            let mut p = vec![0.0; row.len()];
            softmax_into(&scaled, &mut p);
            p
        })
        .collect()
}

/// Fits T > 0 minimizing NLL, searching over log T from 0. T = 1 is kept
/// whenever the search does not beat it, so the fitted NLL never exceeds the
/// unscaled one.
pub fn temperature_scale(logits: &[Vec<f64>], labels: &[usize]) -> Result<TemperatureFit> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::Usage(format!(
            "temperature fit needs matching non-empty logits ({}) and labels ({})",
            logits.len(),
            labels.len()
        )));
    }
    if let Some((i, _)) = logits
        .iter()
        .zip(labels)
        .enumerate()
        .find(|(_, (row, &y))| y >= row.len() || row.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Numeric(format!("row {i} has a bad label or non-finite logit")));
    }
    let unscaled_nll = scaled_nll(logits, labels, 1.0);
    let options = NelderMeadOptions {
        tol: 1e-7,
        max_iters: 500,
        initial_step: 0.1,
    };
    let fit = nelder_mead(|x| scaled_nll(logits, labels, x[0].exp()), &[0.0], options)?;
    let (temperature, nll) = if fit.value < unscaled_nll {
        (fit.x[0].exp(), fit.value)
    } else {
        (1.0, unscaled_nll)
    };
    Ok(TemperatureFit {
        temperature,
        nll,
        unscaled_nll,
        probs: apply_temperature(logits, temperature),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_nll_never_worse() {
        let logits = vec![vec![2.0, 0.0], vec![0.0, 1.0], vec![3.0, -1.0]];
        let labels = vec![1, 1, 0];
        let fit = temperature_scale(&logits, &labels).unwrap();
        assert!(fit.nll <= fit.unscaled_nll);
        assert!(fit.temperature > 0.0);
    }

    #[test]
    fn argmax_is_preserved() {
        let logits = vec![vec![2.0, 0.5, -1.0], vec![0.1, 0.0, 0.3]];
        for t in [0.1, 0.7, 1.0, 5.0] {
            let p = apply_temperature(&logits, t);
            assert_eq!(crate::metrics::argmax(&p[0]), 0);
            assert_eq!(crate::metrics::argmax(&p[1]), 2);
        }
    }
}
