//! Snapshot ensembles: one cosine-cycled run, a member at every cycle end.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{init_params, Perceiver};
use crate::params::ParamStore;
use crate::schedule::{LrSchedule, ScheduleKind};
use crate::strategies::predictor::{Predictor, PredictorKind};
use crate::strategies::train::{check_data, run_trajectory, TrainRunLog, TrainSetup, TrajectorySeeds};

/// Collects the weights at each of the schedule's `cycles_or_c` cycle ends.
/// Requires the cycle ends to number exactly that many.
pub(crate) fn check_capture_count(schedule: &LrSchedule) -> Result<()> {
    let ends = schedule.cycle_ends().len();
    if ends != schedule.cycles_or_c {
        return Err(Error::Usage(format!(
            "{} steps in cycles of {} give {ends} cycle ends, not {}; choose total_steps divisible by the cycle count",
            schedule.total_steps,
            schedule.cycle_len(),
            schedule.cycles_or_c
        )));
    }
    Ok(())
}

/// Trains from `seed` along a `snapshot_cosine` schedule and returns all M
/// snapshots as members, oldest first.
pub fn snapshot_train(
    setup: &TrainSetup,
    seed: u64,
    data: &Dataset,
    schedule: &LrSchedule,
) -> Result<(Predictor, TrainRunLog)> {
    if schedule.kind != ScheduleKind::SnapshotCosine {
        return Err(Error::Usage(format!(
            "snapshot ensembles need a snapshot_cosine schedule, got {}",
            schedule.kind
        )));
    }
    schedule.validate()?;
    check_capture_count(schedule)?;
    check_data(data, &setup.model)?;
    let model = Perceiver::new(setup.model.clone())?;
    let seeds = TrajectorySeeds::from_seed(seed);
    let mut params = init_params(&setup.model, seeds.init)?;
    let mut members: Vec<ParamStore> = Vec::new();
    let log = run_trajectory(&model, &mut params, data, setup, schedule, seeds.data, None, |t, w| {
        if schedule.is_cycle_end(t) {
            members.push(w.clone());
            return Ok(true);
        }
        Ok(false)
    })?;
    let predictor = Predictor::new(PredictorKind::Snapshot, setup.model.clone(), members, None, None)?;
    Ok((predictor, log))
}
