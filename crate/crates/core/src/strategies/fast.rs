//! Fast ensembles: cyclic annealing from a trained solution, plus quadratic
//! Bezier curves between solutions.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::layout::check_params;
use crate::model::Perceiver;
use crate::params::ParamStore;
use crate::schedule::{LrSchedule, ScheduleKind};
use crate::strategies::predictor::{Predictor, PredictorKind};
use crate::strategies::snapshot::check_capture_count;
use crate::strategies::train::{check_data, run_trajectory, TrainRunLog, TrainSetup, TrajectorySeeds};

/// Continues from `trained` along a `fast_cyclic` schedule and captures the
/// weights at each cycle end. Member 0 is `trained` itself.
pub fn fast_train(
    setup: &TrainSetup,
    trained: &ParamStore,
    data: &Dataset,
    schedule: &LrSchedule,
    seed: u64,
) -> Result<(Predictor, TrainRunLog)> {
    if schedule.kind != ScheduleKind::FastCyclic {
        return Err(Error::Usage(format!(
            "fast ensembles need a fast_cyclic schedule, got {}",
            schedule.kind
        )));
    }
    schedule.validate()?;
    check_capture_count(schedule)?;
    check_data(data, &setup.model)?;
    check_params(&setup.model, trained)?;
    let model = Perceiver::new(setup.model.clone())?;
    let seeds = TrajectorySeeds::from_seed(seed);
    let mut params = trained.clone();
    let mut members = vec![trained.clone()];
    let log = run_trajectory(&model, &mut params, data, setup, schedule, seeds.data, None, |t, w| {
        if schedule.is_cycle_end(t) {
            members.push(w.clone());
            return Ok(true);
        }
        Ok(false)
    })?;
    let predictor = Predictor::new(PredictorKind::Fast, setup.model.clone(), members, None, None)?;
    Ok((predictor, log))
}

/// `(1-t)^2 w0 + 2t(1-t) theta + t^2 w1`.
pub fn bezier_point(w0: &ParamStore, w1: &ParamStore, theta: &ParamStore, t: f64) -> Result<ParamStore> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Range(format!("curve parameter {t} outside [0, 1]")));
    }
    let s = 1.0 - t;
    ParamStore::linear_combination(&[w0, theta, w1], &[s * s, 2.0 * t * s, t * t])
}
