use crate::error::{Error, Result};

/// One image in height x width x channels (HWC) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height * width * channels != data.len() || data.is_empty() {
            return Err(Error::Dimension(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }
}
