//! CIFAR-10 / CIFAR-100 binary files.
//!
//! A CIFAR-10 record is one label byte followed by 3072 pixel bytes: the red
//! plane, then green, then blue, each 32x32 in row-major order. CIFAR-100
//! records carry a coarse and a fine label byte before the pixels; the fine
//! label is used. Pixel bytes are scaled to [0, 1] by 1/255.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXEL_BYTES: usize = SIDE * SIDE * CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    pub fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + PIXEL_BYTES
    }

    pub fn num_classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }
}

impl fmt::Display for CifarVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CifarVariant::Cifar10 => "cifar10",
            CifarVariant::Cifar100 => "cifar100",
        })
    }
}

impl FromStr for CifarVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cifar10" => Ok(CifarVariant::Cifar10),
            "cifar100" => Ok(CifarVariant::Cifar100),
            other => Err(Error::Config(format!("unknown CIFAR variant {other:?}"))),
        }
    }
}

/// Decodes a whole file's bytes. Nothing is returned unless every record is
/// valid.
pub fn parse_cifar(bytes: &[u8], variant: CifarVariant, split: Split) -> Result<Dataset> {
    let rec = variant.record_len();
    if bytes.is_empty() || !bytes.len().is_multiple_of(rec) {
        return Err(Error::Format(format!(
            "{variant} file of {} bytes is not a positive multiple of the {rec}-byte record \
             (expected {} or {} bytes)",
            bytes.len(),
            bytes.len() / rec * rec,
            (bytes.len() / rec + 1) * rec
        )));
    }
    let k = variant.num_classes();
    let plane = SIDE * SIDE;
    let mut images = Vec::with_capacity(bytes.len() / rec);
    let mut labels = Vec::with_capacity(bytes.len() / rec);
    for (n, record) in bytes.chunks_exact(rec).enumerate() {
        let label = record[variant.label_bytes() - 1] as usize;
        if label >= k {
            return Err(Error::Format(format!("record {n}: label {label} outside {k} classes")));
        }
        let pixels = &record[variant.label_bytes()..];
        let mut data = Vec::with_capacity(PIXEL_BYTES);
        for i in 0..plane {
            for c in 0..CHANNELS {
                data.push(pixels[c * plane + i] as f64 / 255.0);
            }
        }
        images.push(Image::new(SIDE, SIDE, CHANNELS, data)?);
        labels.push(label);
    }
    Dataset::new(variant.to_string(), split, k, images, labels)
}

pub fn load_cifar(path: &Path, variant: CifarVariant, split: Split) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_cifar(&bytes, variant, split)
}

/// Loads several files of one variant into a single dataset.
pub fn load_cifar_files(paths: &[&Path], variant: CifarVariant, split: Split) -> Result<Dataset> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(std::fs::read(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?);
    }
    parse_cifar(&bytes, variant, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = vec![0u8; CifarVariant::Cifar10.record_len() * 2 - 1];
        let err = parse_cifar(&bytes, CifarVariant::Cifar10, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("6145"));
    }

    #[test]
    fn record_count_law() {
        let bytes = vec![3u8; CifarVariant::Cifar10.record_len() * 3];
        let d = parse_cifar(&bytes, CifarVariant::Cifar10, Split::Test).unwrap();
        assert_eq!(d.len(), bytes.len() / 3073);
    }

    #[test]
    fn out_of_range_label() {
        let mut bytes = vec![0u8; CifarVariant::Cifar10.record_len()];
        bytes[0] = 10;
        assert!(matches!(
            parse_cifar(&bytes, CifarVariant::Cifar10, Split::Train),
            Err(Error::Format(_))
        ));
    }
}
