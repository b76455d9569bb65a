//! Shared training loop: AdamW along an LR schedule over a seeded batch stream.

use serde::{Deserialize, Serialize};

use crate::data::{BatchStream, Dataset, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::model::{init_params, Perceiver, PerceiverConfig};
use crate::optim::{AdamWConfig, AdamWState};
use crate::params::ParamStore;
use crate::rng;
use crate::schedule::LrSchedule;
use crate::strategies::mc::mc_dropout_mask;

/// Everything a trajectory needs besides data, seed and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub model: PerceiverConfig,
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
}

impl TrainSetup {
    pub fn new(model: PerceiverConfig) -> Self {
        Self {
            model,
            optimizer: AdamWConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureEvent {
    pub step: usize,
    pub member: usize,
}

/// Per-step (step, lr, loss) records and weight-capture events of one
/// trajectory. Steps are 1-based and strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRunLog {
    pub steps: Vec<StepRecord>,
    pub captures: Vec<CaptureEvent>,
}

/// Pixel dropout applied to training inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputDropout {
    pub delta: f64,
    pub seed: u64,
}

/// Seeds of one trajectory, all derived from a single member seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectorySeeds {
    pub init: u64,
    pub data: u64,
    pub mask: u64,
}

impl TrajectorySeeds {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            init: rng::derive_seed(seed, 0),
            data: rng::derive_seed(seed, 1),
            mask: rng::derive_seed(seed, 2),
        }
    }
}

/// Runs `schedule.total_steps` AdamW steps on `params` in place.
///
/// After every step `on_step(t, params)` is called; returning `true` records
/// a capture event for that step.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory<F>(
    model: &Perceiver,
    params: &mut ParamStore,
    data: &Dataset,
    setup: &TrainSetup,
    schedule: &LrSchedule,
    data_seed: u64,
    dropout: Option<InputDropout>,
    mut on_step: F,
) -> Result<TrainRunLog>
where
    F: FnMut(usize, &ParamStore) -> Result<bool>,
{
    schedule.validate()?;
    let mut stream = BatchStream::new(data, setup.batch_size, data_seed, None)?;
    let mut state = AdamWState::new(params, setup.optimizer);
    let mut log = TrainRunLog::default();
    for t in 1..=schedule.total_steps {
        let lr = schedule.lr_at(t)?;
        let mut batch = stream.next_batch()?;
        if let Some(d) = dropout {
            let step_seed = rng::derive_seed(d.seed, t as u64);
            for (i, im) in batch.images.iter_mut().enumerate() {
                let mut r = rng::stream(step_seed, i as u64);
                *im = mc_dropout_mask(im, d.delta, &mut r)?;
            }
        }
        let (loss, grads) = model
            .loss_and_grads(params, &batch.images, &batch.labels)
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("step {t}: {msg}")),
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {t}")));
        }
        state.step(params, &grads, lr).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("step {t}: {msg}")),
            other => other,
        })?;
        log.steps.push(StepRecord { step: t, lr, loss });
        if on_step(t, params)? {
            let member = log.captures.len();
            log.captures.push(CaptureEvent { step: t, member });
        }
    }
    Ok(log)
}

/// Plain training of one model from `seed` (initialization, data order and
/// optional input dropout all derive from it).
pub fn train_single(
    setup: &TrainSetup,
    seed: u64,
    data: &Dataset,
    schedule: &LrSchedule,
    dropout_delta: Option<f64>,
) -> Result<(ParamStore, TrainRunLog)> {
    check_data(data, &setup.model)?;
    let model = Perceiver::new(setup.model.clone())?;
    let seeds = TrajectorySeeds::from_seed(seed);
    let mut params = init_params(&setup.model, seeds.init)?;
    let dropout = dropout_delta.map(|delta| InputDropout {
        delta,
        seed: seeds.mask,
    });
    let log = run_trajectory(
        &model,
        &mut params,
        data,
        setup,
        schedule,
        seeds.data,
        dropout,
        |_, _| Ok(false),
    )?;
    Ok((params, log))
}

pub(crate) fn check_data(data: &Dataset, config: &PerceiverConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Usage("training data is empty".into()));
    }
    let (h, w, c) = data.resolution();
    if (h, w, c) != (config.height, config.width, config.channels) {
        return Err(Error::Dimension(format!(
            "data is {h}x{w}x{c}, model expects {}x{}x{}",
            config.height, config.width, config.channels
        )));
    }
    if data.num_classes != config.num_classes {
        return Err(Error::Config(format!(
            "data has {} classes, model has {}",
            data.num_classes, config.num_classes
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::fixtures;

    #[test]
    fn same_seed_same_weights() {
        let (setup, data) = (fixtures::setup(), fixtures::data(1));
        let s = LrSchedule::constant(1e-3, 6).unwrap();
        let (a, la) = train_single(&setup, 3, &data, &s, None).unwrap();
        let (b, lb) = train_single(&setup, 3, &data, &s, None).unwrap();
        let (c, _) = train_single(&setup, 4, &data, &s, None).unwrap();
        assert!(a.bit_equal(&b));
        assert_eq!(la, lb);
        assert!(!a.bit_equal(&c));
        let steps: Vec<usize> = la.steps.iter().map(|r| r.step).collect();
        assert_eq!(steps, (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn dropout_changes_the_trajectory() {
        let (setup, data) = (fixtures::setup(), fixtures::data(1));
        let s = LrSchedule::constant(1e-3, 4).unwrap();
        let (plain, _) = train_single(&setup, 3, &data, &s, None).unwrap();
        let (zero, _) = train_single(&setup, 3, &data, &s, Some(0.0)).unwrap();
        let (half, _) = train_single(&setup, 3, &data, &s, Some(0.5)).unwrap();
        assert!(plain.bit_equal(&zero));
        assert!(!plain.bit_equal(&half));
    }

    #[test]
    fn mismatched_data_is_a_dimension_error() {
        let setup = fixtures::setup();
        let spec = crate::data::SynthSpec {
            resolution: 5,
            ..Default::default()
        };
        let data = crate::data::synth_dataset(0, 4, &spec, crate::data::Split::Train).unwrap();
        let s = LrSchedule::constant(1e-3, 2).unwrap();
        assert!(matches!(
            train_single(&setup, 0, &data, &s, None),
            Err(Error::Dimension(_))
        ));
    }
}
