use rand::seq::SliceRandom;

use crate::data::dataset::{ChannelStats, Dataset};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

pub const DEFAULT_BATCH_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

/// Seeded Fisher-Yates order of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    order
}

/// One epoch of batches in shuffled order. The last batch may be short.
/// When `normalization` is given, images are standardized with it.
pub fn make_batches(
    data: &Dataset,
    batch_size: usize,
    seed: u64,
    normalization: Option<&ChannelStats>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch_size must be >= 1".into()));
    }
    shuffled_indices(data.len(), seed)
        .chunks(batch_size)
        .map(|chunk| {
            let images = chunk
                .iter()
                .map(|&i| match normalization {
                    Some(stats) => stats.apply(data.image(i)),
                    None => Ok(data.image(i).clone()),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Batch {
                indices: chunk.to_vec(),
                images,
                labels: chunk.iter().map(|&i| data.labels()[i]).collect(),
            })
        })
        .collect()
}

/// Endless batch stream: epoch `e` is shuffled with `derive_seed(seed, e)`.
pub struct BatchStream<'a> {
    data: &'a Dataset,
    batch_size: usize,
    seed: u64,
    normalization: Option<&'a ChannelStats>,
    epoch: u64,
    pending: std::vec::IntoIter<Batch>,
}

impl<'a> BatchStream<'a> {
    pub fn new(
        data: &'a Dataset,
        batch_size: usize,
        seed: u64,
        normalization: Option<&'a ChannelStats>,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Usage("batch_size must be >= 1".into()));
        }
        Ok(Self {
            data,
            batch_size,
            seed,
            normalization,
            epoch: 0,
            pending: Vec::new().into_iter(),
        })
    }

    pub fn next_batch(&mut self) -> Result<Batch> {
        if let Some(b) = self.pending.next() {
            return Ok(b);
        }
        let batches = make_batches(
            self.data,
            self.batch_size,
            rng::derive_seed(self.seed, self.epoch),
            self.normalization,
        )?;
        self.epoch += 1;
        self.pending = batches.into_iter();
        Ok(self.pending.next().expect("dataset is non-empty"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::Split;

    fn data(n: usize) -> Dataset {
        let images = (0..n)
            .map(|i| Image::new(1, 2, 1, vec![i as f64 / n as f64, 0.5]).unwrap())
            .collect();
        Dataset::new("t", Split::Train, 2, images, (0..n).map(|i| i % 2).collect()).unwrap()
    }

    #[test]
    fn epoch_is_a_bijection_with_short_tail() {
        let d = data(10);
        let b = make_batches(&d, DEFAULT_BATCH_SIZE, 3, None).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b[2].indices.len(), 2);
        let mut all: Vec<usize> = b.iter().flat_map(|x| x.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(b, make_batches(&d, 4, 3, None).unwrap());
        assert_ne!(b, make_batches(&d, 4, 4, None).unwrap());
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(make_batches(&data(3), 0, 0, None).is_err());
    }

    #[test]
    fn stream_crosses_epochs() {
        let d = data(5);
        let mut s = BatchStream::new(&d, 2, 1, None).unwrap();
        let sizes: Vec<usize> = (0..6).map(|_| s.next_batch().unwrap().images.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1, 2, 2, 1]);
    }
}
