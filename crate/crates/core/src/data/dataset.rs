use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Calibration,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Calibration => "calibration",
        })
    }
}

/// Labelled images of a common resolution. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub num_classes: usize,
    images: Vec<Image>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        num_classes: usize,
        images: Vec<Image>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Usage("dataset needs at least one image".into()));
        }
        if images.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Range(format!("label {bad} outside {num_classes} classes")));
        }
        let first = &images[0];
        if images
            .iter()
            .any(|im| (im.height, im.width, im.channels) != (first.height, first.width, first.channels))
        {
            return Err(Error::Dimension("images differ in resolution".into()));
        }
        Ok(Self {
            name: name.into(),
            split,
            num_classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.images[i]
    }

    /// (height, width, channels).
    pub fn resolution(&self) -> (usize, usize, usize) {
        let im = &self.images[0];
        (im.height, im.width, im.channels)
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize], split: Split) -> Result<Dataset> {
        Dataset::new(
            self.name.clone(),
            split,
            self.num_classes,
            indices.iter().map(|&i| self.images[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Shuffles with `seed` and holds out the last `fraction` of the order as
    /// a calibration split. Returns `(train, calibration)`.
    pub fn split_calibration(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("calibration fraction {fraction} outside [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::seeded(seed));
        let held = ((self.len() as f64) * fraction).round() as usize;
        let held = held.clamp(1, self.len() - 1);
        let (train, calib) = order.split_at(self.len() - held);
        Ok((
            self.select(train, Split::Train)?,
            self.select(calib, Split::Calibration)?,
        ))
    }

    pub fn with_images(&self, images: Vec<Image>) -> Result<Dataset> {
        Dataset::new(
            self.name.clone(),
            self.split,
            self.num_classes,
            images,
            self.labels.clone(),
        )
    }

    /// Applies per-channel standardization.
    pub fn standardized(&self, stats: &ChannelStats) -> Result<Dataset> {
        let images = self
            .images
            .iter()
            .map(|im| stats.apply(im))
            .collect::<Result<Vec<_>>>()?;
        self.with_images(images)
    }
}

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Population statistics over every pixel of every image.
    pub fn from_dataset(data: &Dataset) -> Self {
        let ch = data.resolution().2;
        let mut sum = vec![0.0; ch];
        let mut count = 0usize;
        for im in data.images() {
            for px in im.data.chunks(ch) {
                sum.iter_mut().zip(px).for_each(|(s, v)| *s += v);
            }
            count += im.pixel_count();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; ch];
        for im in data.images() {
            for px in im.data.chunks(ch) {
                for ((s, v), m) in sq.iter_mut().zip(px).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, image: &Image) -> Result<Image> {
        if image.channels != self.mean.len() {
            return Err(Error::Dimension(format!(
                "statistics for {} channels applied to a {}-channel image",
                self.mean.len(),
                image.channels
            )));
        }
        let mut out = image.clone();
        for px in out.data.chunks_mut(image.channels) {
            for ((v, m), s) in px.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// A fixed spatial permutation: output pixel `i` takes input pixel `perm[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelPermutation {
    perm: Vec<usize>,
}

impl PixelPermutation {
    pub fn identity(pixels: usize) -> Self {
        Self {
            perm: (0..pixels).collect(),
        }
    }

    pub fn seeded(pixels: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..pixels).collect();
        perm.shuffle(&mut rng::seeded(seed));
        Self { perm }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        Self { perm: inv }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn apply(&self, image: &Image) -> Result<Image> {
        if image.pixel_count() != self.perm.len() {
            return Err(Error::Dimension(format!(
                "permutation of {} pixels applied to an image of {}",
                self.perm.len(),
                image.pixel_count()
            )));
        }
        let mut out = Image::zeros(image.height, image.width, image.channels);
        for (i, &src) in self.perm.iter().enumerate() {
            out.pixel_mut(i).copy_from_slice(image.pixel(src));
        }
        Ok(out)
    }
}

/// Applies one permutation to every image; labels are untouched.
pub fn permute_pixels(data: &Dataset, perm: &PixelPermutation) -> Result<Dataset> {
    let images = data
        .images()
        .iter()
        .map(|im| perm.apply(im))
        .collect::<Result<Vec<_>>>()?;
    data.with_images(images)
}

/// [`permute_pixels`] with the permutation drawn from `seed`.
pub fn permute_pixels_seeded(data: &Dataset, seed: u64) -> Result<Dataset> {
    let (h, w, _) = data.resolution();
    permute_pixels(data, &PixelPermutation::seeded(h * w, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let images = (0..10)
            .map(|i| Image::new(2, 2, 1, vec![i as f64 / 10.0, 0.1, 0.2, 0.3]).unwrap())
            .collect();
        Dataset::new("tiny", Split::Train, 2, images, (0..10).map(|i| i % 2).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_empty() {
        let im = Image::zeros(2, 2, 1);
        assert!(Dataset::new("x", Split::Train, 2, vec![im.clone()], vec![2]).is_err());
        assert!(Dataset::new("x", Split::Train, 2, vec![], vec![]).is_err());
    }

    #[test]
    fn calibration_split_partitions() {
        let d = tiny();
        let (train, calib) = d.split_calibration(0.1, 5).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(calib.len(), 1);
        assert_eq!(calib.split, Split::Calibration);
    }

    #[test]
    fn permutation_roundtrip_and_multiset() {
        let d = tiny();
        let p = PixelPermutation::seeded(4, 11);
        let permuted = permute_pixels(&d, &p).unwrap();
        let back = permute_pixels(&permuted, &p.inverse()).unwrap();
        assert_eq!(back, d);
        assert_eq!(permute_pixels(&d, &PixelPermutation::identity(4)).unwrap(), d);
        for (a, b) in d.images().iter().zip(permuted.images()) {
            let mut x = a.data.clone();
            let mut y = b.data.clone();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            assert_eq!(x, y);
        }
        assert_eq!(permuted.labels(), d.labels());
    }
}
