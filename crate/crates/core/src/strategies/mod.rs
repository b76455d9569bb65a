//! Uncertainty-aware training strategies, each yielding a [`Predictor`].

pub mod deep;
pub mod fast;
pub mod mc;
pub mod predictor;
pub mod snapshot;
pub mod swa;
pub mod train;

pub use deep::{deep_ensemble_train, fit_temperatures, member_seed};
pub use fast::{bezier_point, fast_train};
pub use mc::{mc_dropout_mask, mc_predict, DEFAULT_MC_DELTA, DEFAULT_MC_SAMPLES};
pub use predictor::{ensemble_average, McSettings, Predictor, PredictorKind};
pub use snapshot::snapshot_train;
pub use swa::{swa_train, swa_update};
pub use train::{
    run_trajectory, train_single, CaptureEvent, InputDropout, StepRecord, TrainRunLog, TrainSetup, TrajectorySeeds,
};

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::data::{synth_dataset, Dataset, Split, SynthSpec};
    use crate::model::PerceiverConfig;
    use crate::strategies::TrainSetup;

    pub fn setup() -> TrainSetup {
        TrainSetup::new(PerceiverConfig {
            height: 6,
            width: 6,
            latent_count: 4,
            latent_dim: 8,
            byte_dim: 8,
            heads: 2,
            tower_layers: 1,
            depth_repeats: 1,
            num_bands: 2,
            max_frequency: 6.0,
            ..Default::default()
        })
    }

    pub fn data(seed: u64) -> Dataset {
        let spec = SynthSpec {
            resolution: 6,
            ..Default::default()
        };
        synth_dataset(seed, 24, &spec, Split::Train).unwrap()
    }
}
