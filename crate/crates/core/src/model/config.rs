use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosEncoding {
    Fourier,
    Learnable,
}

impl fmt::Display for PosEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosEncoding::Fourier => "fourier",
            PosEncoding::Learnable => "learnable",
        })
    }
}

impl FromStr for PosEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(PosEncoding::Fourier),
            "learnable" => Ok(PosEncoding::Learnable),
            other => Err(Error::Config(format!(
                "unknown positional encoding {other:?} (expected fourier|learnable)"
            ))),
        }
    }
}

/// Architectural hyperparameters of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceiverConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub num_classes: usize,
    /// N, rows of the latent array.
    pub latent_count: usize,
    /// D, width of the latent array.
    pub latent_dim: usize,
    /// C, width of the projected byte array.
    pub byte_dim: usize,
    pub num_bands: usize,
    /// Sampling rate used for the Fourier bands; the top band is half of it.
    pub max_frequency: f64,
    /// R, number of cross-attend + tower repetitions.
    pub depth_repeats: usize,
    /// L, latent blocks per tower.
    pub tower_layers: usize,
    pub heads: usize,
    pub pos_encoding: PosEncoding,
    pub share_tower_weights: bool,
    pub share_cross_weights: bool,
}

impl Default for PerceiverConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            channels: 3,
            num_classes: 3,
            latent_count: 32,
            latent_dim: 64,
            byte_dim: 64,
            num_bands: 8,
            max_frequency: 16.0,
            depth_repeats: 2,
            tower_layers: 2,
            heads: 4,
            pos_encoding: PosEncoding::Fourier,
            share_tower_weights: true,
            share_cross_weights: true,
        }
    }
}

impl PerceiverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("latent_count", self.latent_count),
            ("latent_dim", self.latent_dim),
            ("byte_dim", self.byte_dim),
            ("num_bands", self.num_bands),
            ("depth_repeats", self.depth_repeats),
            ("heads", self.heads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if !self.latent_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "latent_dim {} is not divisible by heads {}",
                self.latent_dim, self.heads
            )));
        }
        if !(self.max_frequency > 0.0) || !self.max_frequency.is_finite() {
            return Err(Error::Config("max_frequency must be > 0".into()));
        }
        Ok(())
    }

    /// M = H * W.
    pub fn input_count(&self) -> usize {
        self.height * self.width
    }

    pub fn head_dim(&self) -> usize {
        self.latent_dim / self.heads
    }

    /// Width of one Fourier-encoded position (two spatial axes).
    pub fn position_features(&self) -> usize {
        2 * (2 * self.num_bands + 1)
    }

    /// Width of a byte row before projection.
    pub fn input_features(&self) -> usize {
        match self.pos_encoding {
            PosEncoding::Fourier => self.channels + self.position_features(),
            PosEncoding::Learnable => self.channels,
        }
    }

    /// Parameter-group prefix of the cross-attend used by repetition `r`.
    ///
    /// With sharing, the first cross-attend keeps its own weights and every
    /// later one reuses a single shared set.
    pub fn cross_group(&self, r: usize) -> String {
        if self.share_cross_weights && r > 0 {
            "cross.shared".to_string()
        } else {
            format!("cross.{r}")
        }
    }

    /// Parameter-group prefix of the latent tower used by repetition `r`.
    pub fn tower_group(&self, r: usize) -> String {
        if self.share_tower_weights {
            "tower.shared".to_string()
        } else {
            format!("tower.{r}")
        }
    }
}
