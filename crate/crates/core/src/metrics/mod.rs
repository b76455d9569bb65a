//! Classification and calibration metrics.

pub mod nelder_mead;
pub mod scores;
pub mod temperature;

pub use nelder_mead::{nelder_mead, Minimum, NelderMeadOptions};
pub use scores::{
    accuracy, argmax, bin_index, brier, ece, nll, reliability_bins, Bin, EvalBatch, ReliabilityBins, DEFAULT_ECE_BINS,
    NLL_CLAMP,
};
pub use temperature::{apply_temperature, scaled_nll, temperature_scale, TemperatureFit};
