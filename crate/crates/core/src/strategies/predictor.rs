use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Perceiver, PerceiverConfig};
use crate::params::ParamStore;
use crate::rng;
use crate::strategies::mc::mc_predict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Single,
    DeepEnsemble,
    Swa,
    Snapshot,
    Fast,
    McDropout,
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictorKind::Single => "single",
            PredictorKind::DeepEnsemble => "deep",
            PredictorKind::Swa => "swa",
            PredictorKind::Snapshot => "snapshot",
            PredictorKind::Fast => "fast",
            PredictorKind::McDropout => "mc",
        })
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(PredictorKind::Single),
            "deep" | "deep_ensemble" => Ok(PredictorKind::DeepEnsemble),
            "swa" => Ok(PredictorKind::Swa),
            "snapshot" => Ok(PredictorKind::Snapshot),
            "fast" => Ok(PredictorKind::Fast),
            "mc" | "mc_dropout" => Ok(PredictorKind::McDropout),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected single|deep|swa|snapshot|fast|mc)"
            ))),
        }
    }
}

/// Monte Carlo input-dropout settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Maps images to class-probability rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub kind: PredictorKind,
    pub config: PerceiverConfig,
    pub members: Vec<ParamStore>,
    pub temperatures: Option<Vec<f64>>,
    pub mc: Option<McSettings>,
}

impl Predictor {
    pub fn new(
        kind: PredictorKind,
        config: PerceiverConfig,
        members: Vec<ParamStore>,
        temperatures: Option<Vec<f64>>,
        mc: Option<McSettings>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Usage("predictor needs at least one member".into()));
        }
        if let Some(t) = &temperatures {
            if t.len() != members.len() {
                return Err(Error::Usage(format!(
                    "{} temperatures for {} members",
                    t.len(),
                    members.len()
                )));
            }
            if t.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Numeric("temperatures must be finite and > 0".into()));
            }
        }
        if kind == PredictorKind::McDropout && mc.is_none() {
            return Err(Error::Usage("MC predictor needs dropout settings".into()));
        }
        if let Some(m) = &mc {
            if !(0.0..=1.0).contains(&m.delta) || m.samples == 0 {
                return Err(Error::Usage(format!(
                    "MC settings need 0 <= delta <= 1 and samples >= 1, got {m:?}"
                )));
            }
        }
        for m in &members[1..] {
            members[0].check_compatible(m)?;
        }
        Ok(Self {
            kind,
            config,
            members,
            temperatures,
            mc,
        })
    }

    pub fn single(config: PerceiverConfig, params: ParamStore) -> Result<Self> {
        Self::new(PredictorKind::Single, config, vec![params], None, None)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Predictor over the first `k` members.
    pub fn first(&self, k: usize) -> Result<Predictor> {
        if k == 0 || k > self.members.len() {
            return Err(Error::Usage(format!(
                "cannot take {k} of {} members",
                self.members.len()
            )));
        }
        Predictor::new(
            self.kind,
            self.config.clone(),
            self.members[..k].to_vec(),
            self.temperatures.as_ref().map(|t| t[..k].to_vec()),
            self.mc,
        )
    }

    /// Predictor over the last `m` members.
    pub fn last(&self, m: usize) -> Result<Predictor> {
        let n = self.members.len();
        if m == 0 || m > n {
            return Err(Error::Usage(format!("cannot take last {m} of {n} members")));
        }
        Predictor::new(
            self.kind,
            self.config.clone(),
            self.members[n - m..].to_vec(),
            self.temperatures.as_ref().map(|t| t[n - m..].to_vec()),
            self.mc,
        )
    }

    fn temperature(&self, member: usize) -> f64 {
        self.temperatures.as_ref().map_or(1.0, |t| t[member])
    }

    /// Probabilities of every member, temperature-scaled when temperatures
    /// are present. Members are evaluated in parallel.
    pub fn member_probs(&self, images: &[Image]) -> Result<Vec<Vec<Vec<f64>>>> {
        let model = Perceiver::new(self.config.clone())?;
        self.members
            .par_iter()
            .enumerate()
            .map(|(m, params)| model.probabilities(params, images, self.temperature(m)))
            .collect()
    }

    pub fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        if let (PredictorKind::McDropout, Some(mc)) = (self.kind, self.mc) {
            let model = Perceiver::new(self.config.clone())?;
            return images
                .par_iter()
                .enumerate()
                .map(|(i, im)| {
                    mc_predict(
                        &model,
                        &self.members[0],
                        im,
                        mc.delta,
                        mc.samples,
                        rng::derive_seed(mc.seed, i as u64),
                    )
                })
                .collect();
        }
        ensemble_average(&self.member_probs(images)?)
    }
}

/// Per-cell arithmetic mean of the members' probability rows.
pub fn ensemble_average(member_probs: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = member_probs.first() else {
        return Err(Error::Usage("ensemble of zero members".into()));
    };
    let n = first.len();
    let k = first.first().map_or(0, Vec::len);
    for (m, member) in member_probs.iter().enumerate() {
        if member.len() != n || member.iter().any(|row| row.len() != k) {
            return Err(Error::Dimension(format!(
                "member {m} does not have {n} rows of {k} classes"
            )));
        }
    }
    let scale = 1.0 / member_probs.len() as f64;
    Ok((0..n)
        .map(|i| {
            (0..k)
                .map(|c| member_probs.iter().map(|m| m[i][c]).sum::<f64>() * scale)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_examples() {
        let one = vec![vec![vec![0.2, 0.8]]];
        assert_eq!(ensemble_average(&one).unwrap(), one[0]);
        let two = vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]];
        assert_eq!(ensemble_average(&two).unwrap(), vec![vec![0.5, 0.5]]);
        let ragged = vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![1.0, 0.0]]];
        assert!(matches!(ensemble_average(&ragged), Err(Error::Dimension(_))));
    }

    #[test]
    fn symmetric_members_average_to_uniform() {
        let perms = vec![
            vec![vec![0.7, 0.2, 0.1]],
            vec![vec![0.1, 0.7, 0.2]],
            vec![vec![0.2, 0.1, 0.7]],
        ];
        let avg = ensemble_average(&perms).unwrap();
        for p in &avg[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in [
            PredictorKind::Single,
            PredictorKind::DeepEnsemble,
            PredictorKind::Swa,
            PredictorKind::Snapshot,
            PredictorKind::Fast,
            PredictorKind::McDropout,
        ] {
            assert_eq!(k.to_string().parse::<PredictorKind>().unwrap(), k);
        }
    }
}
