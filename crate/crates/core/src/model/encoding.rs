//! Fourier positional features and byte-array construction.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::config::{PerceiverConfig, PosEncoding};
use crate::model::layout::BoundParams;
use crate::tensor::Tensor;

/// Band frequencies: `num_bands` values linearly spaced from 1 to
/// `max_frequency / 2`.
pub fn band_frequencies(num_bands: usize, max_frequency: f64) -> Vec<f64> {
    let top = max_frequency / 2.0;
    if num_bands == 1 {
        return vec![1.0];
    }
    (0..num_bands)
        .map(|k| 1.0 + (top - 1.0) * k as f64 / (num_bands - 1) as f64)
        .collect()
}

/// Encodes a point with coordinates in [-1, 1].
///
/// Per axis the output is `sin(pi f_k p)` for every band, then
/// `cos(pi f_k p)` for every band, then `p` itself; axes are concatenated, so
/// the length is `d * (2 * num_bands + 1)`.
pub fn fourier_encode(position: &[f64], num_bands: usize, max_frequency: f64) -> Result<Vec<f64>> {
    if num_bands == 0 {
        return Err(Error::Config("num_bands must be >= 1".into()));
    }
    if !(max_frequency > 0.0) || !max_frequency.is_finite() {
        return Err(Error::Config(format!("max_frequency must be > 0, got {max_frequency}")));
    }
    let freqs = band_frequencies(num_bands, max_frequency);
    let mut out = Vec::with_capacity(position.len() * (2 * num_bands + 1));
    for &p in position {
        if !(-1.0..=1.0).contains(&p) {
            return Err(Error::Range(format!("coordinate {p} outside [-1, 1]")));
        }
        out.extend(freqs.iter().map(|f| (std::f64::consts::PI * f * p).sin()));
        out.extend(freqs.iter().map(|f| (std::f64::consts::PI * f * p).cos()));
        out.push(p);
    }
    Ok(out)
}

/// Coordinate of index `i` on an axis of `n` samples spanning [-1, 1].
pub fn axis_coordinate(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Fourier features of every pixel, one row per pixel in row-major order.
pub fn position_table(config: &PerceiverConfig) -> Result<Tensor> {
    let (h, w) = (config.height, config.width);
    let mut data = Vec::with_capacity(h * w * config.position_features());
    for r in 0..h {
        for c in 0..w {
            let pos = [axis_coordinate(r, h), axis_coordinate(c, w)];
            data.extend(fourier_encode(&pos, config.num_bands, config.max_frequency)?);
        }
    }
    Tensor::matrix(h * w, config.position_features(), data)
}

/// Unprojected byte rows: pixel channels followed by the Fourier features of
/// the pixel position, or just the channels for the learnable variant.
pub fn byte_features(config: &PerceiverConfig, positions: &Tensor, image: &Image) -> Result<Tensor> {
    check_resolution(config, image)?;
    let m = config.input_count();
    match config.pos_encoding {
        PosEncoding::Fourier => {
            let width = config.input_features();
            let mut data = Vec::with_capacity(m * width);
            for i in 0..m {
                data.extend_from_slice(image.pixel(i));
                data.extend_from_slice(positions.row_slice(i));
            }
            Tensor::matrix(m, width, data)
        }
        PosEncoding::Learnable => Tensor::matrix(m, config.channels, image.data.clone()),
    }
}

pub fn check_resolution(config: &PerceiverConfig, image: &Image) -> Result<()> {
    if image.height != config.height || image.width != config.width || image.channels != config.channels {
        return Err(Error::Dimension(format!(
            "image is {}x{}x{}, model expects {}x{}x{}",
            image.height, image.width, image.channels, config.height, config.width, config.channels
        )));
    }
    Ok(())
}

/// M x C byte array of `image`, in the graph.
pub fn build_byte_array(
    g: &mut Graph,
    params: &BoundParams,
    config: &PerceiverConfig,
    positions: &Tensor,
    image: &Image,
) -> Result<Var> {
    let features = g.constant(byte_features(config, positions, image)?)?;
    let features = match config.pos_encoding {
        PosEncoding::Fourier => features,
        PosEncoding::Learnable => g.add(features, params.var("input.pos_embed")?)?,
    };
    let projected = g.matmul(features, params.var("input.proj.w")?)?;
    g.add_row(projected, params.var("input.proj.b")?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encodes_to_unit_cosines() {
        let f = fourier_encode(&[0.0, 0.0], 3, 16.0).unwrap();
        assert_eq!(f.len(), 2 * 7);
        for axis in f.chunks(7) {
            assert!(axis[..3].iter().all(|&s| s == 0.0));
            assert!(axis[3..6].iter().all(|&c| c == 1.0));
            assert_eq!(axis[6], 0.0);
        }
    }

    #[test]
    fn single_band_at_edge() {
        let f = fourier_encode(&[1.0], 1, 2.0).unwrap();
        assert!(f[0].abs() < 1e-15);
        assert_eq!(f[1], -1.0);
        assert_eq!(f[2], 1.0);
    }

    #[test]
    fn output_length_law() {
        for d in 1..4 {
            for kb in 1..5 {
                let p = vec![0.3; d];
                assert_eq!(fourier_encode(&p, kb, 8.0).unwrap().len(), d * (2 * kb + 1));
            }
        }
    }

    #[test]
    fn bands_span_one_to_nyquist() {
        let f = band_frequencies(5, 16.0);
        assert_eq!(f.first(), Some(&1.0));
        assert_eq!(f.last(), Some(&8.0));
    }

    #[test]
    fn out_of_range_coordinate_rejected() {
        assert!(matches!(fourier_encode(&[1.5], 2, 4.0), Err(Error::Range(_))));
    }
}
