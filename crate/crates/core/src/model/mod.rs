//! The Perceiver classifier.

pub mod attention;
pub mod config;
pub mod encoding;
pub mod layout;
pub mod perceiver;

pub use attention::{cross_attention, latent_block, multi_head_attention, AttentionKind};
pub use config::{PerceiverConfig, PosEncoding};
pub use encoding::{build_byte_array, fourier_encode};
pub use layout::{init_params, param_count, param_specs, BoundParams, ParamCount};
pub use perceiver::{perceiver_forward, Perceiver};
