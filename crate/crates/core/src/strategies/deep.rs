//! Deep ensembles: independently seeded trainings averaged at prediction.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::temperature_scale;
use crate::model::Perceiver;
use crate::params::ParamStore;
use crate::rng;
use crate::schedule::LrSchedule;
use crate::strategies::predictor::{Predictor, PredictorKind};
use crate::strategies::train::{check_data, train_single, TrainRunLog, TrainSetup};

/// Seed of ensemble member `m`.
pub fn member_seed(base_seed: u64, m: usize) -> u64 {
    rng::derive_seed(base_seed, m as u64)
}

/// Trains `members` models in parallel, member `m` from
/// `member_seed(base_seed, m)`. With a calibration set, each member's
/// temperature is fitted on it before averaging.
pub fn deep_ensemble_train(
    setup: &TrainSetup,
    members: usize,
    base_seed: u64,
    data: &Dataset,
    calibration: Option<&Dataset>,
    schedule: &LrSchedule,
) -> Result<(Predictor, Vec<TrainRunLog>)> {
    if members == 0 {
        return Err(Error::Usage("deep ensemble needs at least one member".into()));
    }
    check_data(data, &setup.model)?;
    if let Some(c) = calibration {
        check_data(c, &setup.model)?;
    }
    let trained = (0..members)
        .into_par_iter()
        .map(|m| train_single(setup, member_seed(base_seed, m), data, schedule, None))
        .collect::<Result<Vec<_>>>()?;
    let (stores, logs): (Vec<ParamStore>, Vec<TrainRunLog>) = trained.into_iter().unzip();
    let temperatures = match calibration {
        Some(c) => Some(fit_temperatures(setup, &stores, c)?),
        None => None,
    };
    let predictor = Predictor::new(
        PredictorKind::DeepEnsemble,
        setup.model.clone(),
        stores,
        temperatures,
        None,
    )?;
    Ok((predictor, logs))
}

/// Temperature of each member fitted on `calibration`.
pub fn fit_temperatures(setup: &TrainSetup, members: &[ParamStore], calibration: &Dataset) -> Result<Vec<f64>> {
    let model = Perceiver::new(setup.model.clone())?;
    members
        .par_iter()
        .map(|p| {
            let logits = model.logits(p, calibration.images())?;
            Ok(temperature_scale(&logits, calibration.labels())?.temperature)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::fixtures;

    #[test]
    fn members_are_independent_trainings() {
        let (setup, data) = (fixtures::setup(), fixtures::data(2));
        let s = LrSchedule::constant(1e-3, 5).unwrap();
        let (pred, logs) = deep_ensemble_train(&setup, 3, 11, &data, None, &s).unwrap();
        assert_eq!((pred.len(), logs.len()), (3, 3));
        for m in 0..3 {
            let (alone, _) = train_single(&setup, member_seed(11, m), &data, &s, None).unwrap();
            assert!(pred.members[m].bit_equal(&alone), "member {m}");
        }
        assert!(!pred.members[0].bit_equal(&pred.members[1]));

        let (one, _) = deep_ensemble_train(&setup, 1, 11, &data, None, &s).unwrap();
        assert!(one.members[0].bit_equal(&pred.members[0]));
    }

    #[test]
    fn calibration_fits_one_temperature_per_member() {
        let (setup, data) = (fixtures::setup(), fixtures::data(2));
        let s = LrSchedule::constant(1e-3, 3).unwrap();
        let cal = fixtures::data(3);
        let (pred, _) = deep_ensemble_train(&setup, 2, 0, &data, Some(&cal), &s).unwrap();
        let t = pred.temperatures.as_ref().unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(deep_ensemble_train(&setup, 0, 0, &data, None, &s).is_err());
    }
}
