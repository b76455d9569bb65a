//! Datasets: CIFAR binaries, synthetic classes, batching and transforms.

pub mod batches;
pub mod cifar;
pub mod dataset;
pub mod synth;

pub use batches::{make_batches, Batch, BatchStream, DEFAULT_BATCH_SIZE};
pub use cifar::{load_cifar, load_cifar_files, parse_cifar, CifarVariant};
pub use dataset::{permute_pixels, permute_pixels_seeded, ChannelStats, Dataset, PixelPermutation, Split};
pub use synth::{synth_dataset, SynthSpec};
