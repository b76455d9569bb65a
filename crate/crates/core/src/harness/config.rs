//! Plain-text `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys and unparsable values are configuration errors that
//! name the key. [`RunConfig::echo`] renders every key in a canonical form
//! that parses back to an equal config.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{CifarVariant, SynthSpec};
use crate::error::{Error, Result};
use crate::model::{PerceiverConfig, PosEncoding};
use crate::optim::AdamWConfig;
use crate::strategies::{PredictorKind, DEFAULT_MC_DELTA, DEFAULT_MC_SAMPLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synth,
    Cifar(CifarVariant),
}

impl DataSource {
    fn name(self) -> &'static str {
        match self {
            DataSource::Synth => "synth",
            DataSource::Cifar(CifarVariant::Cifar10) => "cifar10",
            DataSource::Cifar(CifarVariant::Cifar100) => "cifar100",
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synth" => Ok(DataSource::Synth),
            other => other
                .parse::<CifarVariant>()
                .map(DataSource::Cifar)
                .map_err(|_| Error::Config(format!("unknown dataset {other:?} (expected synth|cifar10|cifar100)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub strategy: PredictorKind,
    pub seed: u64,
    pub out_dir: PathBuf,

    pub dataset: DataSource,
    pub data_dir: PathBuf,
    pub train_limit: usize,
    pub test_limit: usize,
    pub synth_train: usize,
    pub synth_test: usize,
    pub synth_resolution: usize,
    pub synth_classes: usize,
    pub synth_noise: f64,
    pub normalize: bool,
    pub calibration_fraction: f64,

    pub latent_count: usize,
    pub latent_dim: usize,
    pub byte_dim: usize,
    pub num_bands: usize,
    pub max_frequency: f64,
    pub depth_repeats: usize,
    pub tower_layers: usize,
    pub heads: usize,
    pub pos_encoding: PosEncoding,
    pub share_tower_weights: bool,
    pub share_cross_weights: bool,

    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,

    pub members: usize,
    pub swa_steps: usize,
    pub swa_c: usize,
    pub swa_alpha1: f64,
    pub swa_alpha2: f64,
    pub snapshot_cycles: usize,
    pub snapshot_keep: usize,
    pub fast_cycles: usize,
    pub fast_steps_per_cycle: usize,
    pub fast_alpha1: f64,
    pub fast_alpha2: f64,
    pub mc_delta: f64,
    pub mc_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = PerceiverConfig::default();
        let synth = SynthSpec::default();
        let adam = AdamWConfig::default();
        Self {
            strategy: PredictorKind::Single,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            dataset: DataSource::Synth,
            data_dir: PathBuf::from("data"),
            train_limit: 0,
            test_limit: 0,
            synth_train: 2000,
            synth_test: 500,
            synth_resolution: synth.resolution,
            synth_classes: synth.num_classes,
            synth_noise: synth.noise,
            normalize: false,
            calibration_fraction: 0.1,
            latent_count: model.latent_count,
            latent_dim: model.latent_dim,
            byte_dim: model.byte_dim,
            num_bands: model.num_bands,
            max_frequency: model.max_frequency,
            depth_repeats: model.depth_repeats,
            tower_layers: model.tower_layers,
            heads: model.heads,
            pos_encoding: model.pos_encoding,
            share_tower_weights: model.share_tower_weights,
            share_cross_weights: model.share_cross_weights,
            batch_size: 4,
            steps: 2000,
            lr: 5e-6,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            members: 4,
            swa_steps: 10,
            swa_c: 5,
            swa_alpha1: 5e-6,
            swa_alpha2: 2e-6,
            snapshot_cycles: 5,
            snapshot_keep: 0,
            fast_cycles: 4,
            fast_steps_per_cycle: 25,
            fast_alpha1: 5e-6,
            fast_alpha2: 5e-7,
            mc_delta: DEFAULT_MC_DELTA,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("key {key:?}: cannot parse {value:?}: {e}")))
}

macro_rules! keys {
    ($($key:ident),* $(,)?) => {
        /// Every accepted key, in echo order.
        pub const KEYS: &[&str] = &[$(stringify!($key)),*];

        impl RunConfig {
            /// Sets `key` from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($key) => self.$key = parse_field(key, value)?,)*
                    other => return Err(Error::Config(format!("unknown key {other:?}"))),
                }
                Ok(())
            }

            /// Canonical textual value of `key`.
            pub fn get(&self, key: &str) -> Result<String> {
                match key {
                    $(stringify!($key) => Ok(render_field(&self.$key)),)*
                    other => Err(Error::Config(format!("unknown key {other:?}"))),
                }
            }
        }
    };
}

keys!(
    strategy,
    seed,
    out_dir,
    dataset,
    data_dir,
    train_limit,
    test_limit,
    synth_train,
    synth_test,
    synth_resolution,
    synth_classes,
    synth_noise,
    normalize,
    calibration_fraction,
    latent_count,
    latent_dim,
    byte_dim,
    num_bands,
    max_frequency,
    depth_repeats,
    tower_layers,
    heads,
    pos_encoding,
    share_tower_weights,
    share_cross_weights,
    batch_size,
    steps,
    lr,
    beta1,
    beta2,
    eps,
    weight_decay,
    members,
    swa_steps,
    swa_c,
    swa_alpha1,
    swa_alpha2,
    snapshot_cycles,
    snapshot_keep,
    fast_cycles,
    fast_steps_per_cycle,
    fast_alpha1,
    fast_alpha2,
    mc_delta,
    mc_samples,
);

trait Field: Sized {
    fn parse_value(key: &str, value: &str) -> Result<Self>;
    fn render(&self) -> String;
}

fn parse_field<T: Field>(key: &str, value: &str) -> Result<T> {
    T::parse_value(key, value)
}

fn render_field<T: Field>(v: &T) -> String {
    v.render()
}

macro_rules! display_field {
    ($($t:ty),*) => {$(
        impl Field for $t {
            fn parse_value(key: &str, value: &str) -> Result<Self> {
                parse(key, value)
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_field!(usize, u64, bool, PredictorKind, PosEncoding);

impl Field for f64 {
    fn parse_value(key: &str, value: &str) -> Result<Self> {
        let v: f64 = parse(key, value)?;
        if !v.is_finite() {
            return Err(Error::Config(format!("key {key:?}: value must be finite")));
        }
        Ok(v)
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl Field for PathBuf {
    fn parse_value(_: &str, value: &str) -> Result<Self> {
        Ok(PathBuf::from(value))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl Field for DataSource {
    fn parse_value(key: &str, value: &str) -> Result<Self> {
        value
            .parse()
            .map_err(|e: Error| Error::Config(format!("key {key:?}: {e}")))
    }
    fn render(&self) -> String {
        self.name().to_string()
    }
}

impl RunConfig {
    /// Parses config text over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    /// Every key with its value, one `key = value` line each.
    pub fn echo(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Model configuration for data of the given shape and class count.
    pub fn model(&self, height: usize, width: usize, channels: usize, num_classes: usize) -> PerceiverConfig {
        PerceiverConfig {
            height,
            width,
            channels,
            num_classes,
            latent_count: self.latent_count,
            latent_dim: self.latent_dim,
            byte_dim: self.byte_dim,
            num_bands: self.num_bands,
            max_frequency: self.max_frequency,
            depth_repeats: self.depth_repeats,
            tower_layers: self.tower_layers,
            heads: self.heads,
            pos_encoding: self.pos_encoding,
            share_tower_weights: self.share_tower_weights,
            share_cross_weights: self.share_cross_weights,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            resolution: self.synth_resolution,
            channels: 3,
            num_classes: self.synth_classes,
            noise: self.synth_noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("members", self.members),
            ("swa_steps", self.swa_steps),
            ("swa_c", self.swa_c),
            ("snapshot_cycles", self.snapshot_cycles),
            ("fast_cycles", self.fast_cycles),
            ("fast_steps_per_cycle", self.fast_steps_per_cycle),
            ("mc_samples", self.mc_samples),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("key {key:?} must be >= 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.mc_delta) {
            return Err(Error::Config(format!(
                "key \"mc_delta\" must lie in [0, 1], got {}",
                self.mc_delta
            )));
        }
        if !(0.0..1.0).contains(&self.calibration_fraction) {
            return Err(Error::Config(format!(
                "key \"calibration_fraction\" must lie in [0, 1), got {}",
                self.calibration_fraction
            )));
        }
        if self.snapshot_keep > self.snapshot_cycles {
            return Err(Error::Config(format!(
                "key \"snapshot_keep\" ({}) exceeds snapshot_cycles ({})",
                self.snapshot_keep, self.snapshot_cycles
            )));
        }
        if self.lr < 0.0 {
            return Err(Error::Config("key \"lr\" must be >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_roundtrips() {
        let mut cfg = RunConfig::default();
        cfg.set("strategy", "swa").unwrap();
        cfg.set("lr", "0.1").unwrap();
        cfg.set("mc_delta", "0.30000000000000004").unwrap();
        let back = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.echo(), cfg.echo());
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = RunConfig::parse("# desk run\n\n  steps   =  12 \nseed=3\n").unwrap();
        assert_eq!(cfg.steps, 12);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::parse("stepz = 3").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("stepz")));
        let e = RunConfig::parse("steps = three").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("steps")));
        let e = RunConfig::parse("lr = nan").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("lr")));
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn every_key_has_a_default() {
        let cfg = RunConfig::default();
        for k in KEYS {
            assert!(cfg.get(k).is_ok());
        }
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.lr, 5e-6);
        cfg.validate().unwrap();
    }
}
