//! Monte Carlo input dropout: whole pixels are zeroed at random.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::Perceiver;
use crate::params::ParamStore;
use crate::rng;

pub const DEFAULT_MC_SAMPLES: usize = 30;
pub const DEFAULT_MC_DELTA: f64 = 0.1;

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Usage(format!("dropout probability {delta} outside [0, 1]")));
    }
    Ok(())
}

/// Copy of `image` with each pixel (all its channels) set to 0 with
/// probability `delta`. Survivors are not rescaled. One uniform draw is
/// consumed per pixel.
pub fn mc_dropout_mask<R: Rng + ?Sized>(image: &Image, delta: f64, rng: &mut R) -> Result<Image> {
    check_delta(delta)?;
    let mut out = image.clone();
    for p in 0..out.pixel_count() {
        if rng.random::<f64>() < delta {
            out.pixel_mut(p).fill(0.0);
        }
    }
    Ok(out)
}

/// Mean softmax over `n` forwards, sample `i` masked with the stream seeded
/// by `derive_seed(seed, i)`.
pub fn mc_predict(
    model: &Perceiver,
    params: &ParamStore,
    image: &Image,
    delta: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::Usage("MC prediction needs at least one sample".into()));
    }
    let masked = (0..n)
        .map(|i| mc_dropout_mask(image, delta, &mut rng::seeded(rng::derive_seed(seed, i as u64))))
        .collect::<Result<Vec<_>>>()?;
    let probs = model.probabilities(params, &masked, 1.0)?;
    // Running mean, so identical samples average to themselves exactly.
    let mut mean = probs[0].clone();
    for (i, row) in probs.iter().enumerate().skip(1) {
        let w = 1.0 / (i + 1) as f64;
        for (m, p) in mean.iter_mut().zip(row) {
            *m += (p - *m) * w;
        }
    }
    Ok(mean)
}
