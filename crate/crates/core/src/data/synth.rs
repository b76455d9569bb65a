//! Seeded synthetic image classes for desk-scale runs.
//!
//! Class `k` of `K` is an oriented Gaussian blob centred on a ring at angle
//! `2 pi k / K` and rotated by `pi k / K`, with a class-specific colour tint.
//! Each sample jitters the blob position and amplitude, then adds Gaussian
//! pixel noise; values are clamped to [0, 1].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub resolution: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            resolution: 16,
            channels: 3,
            num_classes: 3,
            noise: 0.01,
        }
    }
}

const BACKGROUND: f64 = 0.1;
const AMPLITUDE: f64 = 0.8;
const RING_RADIUS: f64 = 0.25;
const SIGMA_MAJOR: f64 = 0.2;
const SIGMA_MINOR: f64 = 0.08;
const JITTER: f64 = 0.04;

pub fn synth_dataset(seed: u64, n: usize, spec: &SynthSpec, split: Split) -> Result<Dataset> {
    if spec.num_classes < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    if spec.resolution < 4 {
        return Err(Error::Config("synthetic resolution must be >= 4".into()));
    }
    if spec.channels == 0 || n == 0 {
        return Err(Error::Config("synthetic data needs channels >= 1 and n >= 1".into()));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::Config("noise must be >= 0".into()));
    }
    let mut rng = rng::seeded(seed);
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("noise is finite");
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..spec.num_classes);
        let jitter = (rng.random_range(-JITTER..=JITTER), rng.random_range(-JITTER..=JITTER));
        let amplitude = AMPLITUDE * rng.random_range(0.85..=1.15);
        let mut image = render(spec, label, jitter, amplitude);
        if spec.noise > 0.0 {
            for v in image.data.iter_mut() {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        images.push(image);
        labels.push(label);
    }
    Dataset::new("synth", split, spec.num_classes, images, labels)
}

/// Noise-free sample of class `label`.
fn render(spec: &SynthSpec, label: usize, jitter: (f64, f64), amplitude: f64) -> Image {
    let k = spec.num_classes as f64;
    let angle = 2.0 * PI * label as f64 / k;
    let (cy, cx) = (
        0.5 + RING_RADIUS * angle.sin() + jitter.0,
        0.5 + RING_RADIUS * angle.cos() + jitter.1,
    );
    let rot = PI * label as f64 / k;
    let (sin_r, cos_r) = rot.sin_cos();
    let res = spec.resolution;
    let mut image = Image::zeros(res, res, spec.channels);
    for r in 0..res {
        for c in 0..res {
            let y = (r as f64 + 0.5) / res as f64 - cy;
            let x = (c as f64 + 0.5) / res as f64 - cx;
            let u = cos_r * x + sin_r * y;
            let v = -sin_r * x + cos_r * y;
            let blob = (-0.5 * (u * u / (SIGMA_MAJOR * SIGMA_MAJOR) + v * v / (SIGMA_MINOR * SIGMA_MINOR))).exp();
            let px = image.pixel_mut(r * res + c);
            for (ch, out) in px.iter_mut().enumerate() {
                let tint = 0.7 + 0.3 * (2.0 * PI * (label as f64 / k + ch as f64 / spec.channels as f64)).cos();
                *out = (BACKGROUND + amplitude * tint * blob).clamp(0.0, 1.0);
            }
        }
    }
    image
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_in_range() {
        let spec = SynthSpec::default();
        let a = synth_dataset(9, 50, &spec, Split::Train).unwrap();
        let b = synth_dataset(9, 50, &spec, Split::Train).unwrap();
        assert_eq!(a, b);
        assert!(a.labels().iter().all(|&l| l < 3));
        assert!(a
            .images()
            .iter()
            .all(|im| im.data.iter().all(|v| (0.0..=1.0).contains(v))));
        assert_ne!(a, synth_dataset(10, 50, &spec, Split::Train).unwrap());
    }

    #[test]
    fn rejects_degenerate_specs() {
        let bad = SynthSpec {
            num_classes: 1,
            ..Default::default()
        };
        assert!(synth_dataset(0, 10, &bad, Split::Train).is_err());
        let small = SynthSpec {
            resolution: 3,
            ..Default::default()
        };
        assert!(synth_dataset(0, 10, &small, Split::Train).is_err());
    }

    #[test]
    fn classes_are_well_separated() {
        let spec = SynthSpec::default();
        let d = synth_dataset(1, 1000, &spec, Split::Train).unwrap();
        let k = spec.num_classes;
        let dim = d.image(0).data.len();
        let mut means = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (im, &y) in d.images().iter().zip(d.labels()) {
            counts[y] += 1;
            for (m, v) in means[y].iter_mut().zip(&im.data) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            assert!(c > 0);
            m.iter_mut().for_each(|v| *v /= c as f64);
        }
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let intra = d
            .images()
            .iter()
            .zip(d.labels())
            .map(|(im, &y)| dist(&im.data, &means[y]))
            .sum::<f64>()
            / 1000.0;
        let mut inter = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                inter = inter.min(dist(&means[a], &means[b]));
            }
        }
        assert!(inter > 5.0 * intra, "inter {inter} intra {intra}");
    }
}
