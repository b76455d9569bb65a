//! Stochastic weight averaging along an AdamW trajectory.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::layout::check_params;
use crate::model::Perceiver;
use crate::params::ParamStore;
use crate::schedule::{LrSchedule, ScheduleKind};
use crate::strategies::predictor::{Predictor, PredictorKind};
use crate::strategies::train::{check_data, run_trajectory, TrainRunLog, TrainSetup, TrajectorySeeds};

/// `(w_avg * n_models + w) / (n_models + 1)`, elementwise.
pub fn swa_update(w_avg: &ParamStore, n_models: usize, w: &ParamStore) -> Result<ParamStore> {
    if n_models == 0 {
        return Err(Error::Usage("swa_update needs n_models >= 1".into()));
    }
    w_avg.check_compatible(w)?;
    let n = n_models as f64;
    let mut out = w_avg.clone();
    for ((_, a), (_, b)) in out.iter_mut().zip(w.iter()) {
        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
            *x = (*x * n + y) / (n + 1.0);
        }
    }
    Ok(out)
}

/// Runs AdamW from `pretrained` along a `swa_linear` schedule and folds the
/// weights into the running average at every step `i` with `i mod c = 0`.
/// The pretrained weights themselves are not part of the average.
pub fn swa_train(
    setup: &TrainSetup,
    pretrained: &ParamStore,
    data: &Dataset,
    schedule: &LrSchedule,
    seed: u64,
) -> Result<(Predictor, TrainRunLog)> {
    if schedule.kind != ScheduleKind::SwaLinear {
        return Err(Error::Usage(format!(
            "SWA needs a swa_linear schedule, got {}",
            schedule.kind
        )));
    }
    let c = schedule.cycles_or_c;
    if c == 0 || c > schedule.total_steps {
        return Err(Error::Usage(format!(
            "capture interval {c} yields no capture in {} steps",
            schedule.total_steps
        )));
    }
    check_data(data, &setup.model)?;
    check_params(&setup.model, pretrained)?;
    let model = Perceiver::new(setup.model.clone())?;
    let seeds = TrajectorySeeds::from_seed(seed);
    let mut params = pretrained.clone();
    let mut average: Option<ParamStore> = None;
    let mut captured = 0;
    let log = run_trajectory(&model, &mut params, data, setup, schedule, seeds.data, None, |t, w| {
        if t % c != 0 {
            return Ok(false);
        }
        average = Some(match average.take() {
            None => w.clone(),
            Some(avg) => swa_update(&avg, captured, w)?,
        });
        captured += 1;
        Ok(true)
    })?;
    let average = average.expect("at least one capture");
    let predictor = Predictor::new(PredictorKind::Swa, setup.model.clone(), vec![average], None, None)?;
    Ok((predictor, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(v)).unwrap();
        s
    }

    #[test]
    fn running_mean_of_one_two_three() {
        let mut avg = scalar_store(1.0);
        for (n, v) in [(1, 2.0), (2, 3.0)] {
            avg = swa_update(&avg, n, &scalar_store(v)).unwrap();
        }
        assert!((avg.require("w").unwrap().data()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn equal_stores_are_a_fixed_point() {
        let s = scalar_store(0.3);
        let out = swa_update(&s, 7, &s).unwrap();
        assert!(out.max_abs_diff(&s).unwrap() < 1e-15);
    }

    #[test]
    fn incompatible_stores_are_rejected() {
        let mut other = ParamStore::new();
        other.insert("v", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(
            swa_update(&scalar_store(1.0), 1, &other),
            Err(Error::Dimension(_))
        ));
        assert!(swa_update(&scalar_store(1.0), 0, &scalar_store(1.0)).is_err());
    }
}
