use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;

/// Channel-major `(channels, height, width)` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(channels * height * width, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor", format!("non-finite value at {i}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Stacks an image with extra planes of the same size.
    pub fn from_planes(img: &GrayImage<T>, extra: &[Vec<T>]) -> Result<Self> {
        let n = img.len();
        let mut data = Vec::with_capacity(n * (1 + extra.len()));
        data.extend_from_slice(img.data());
        for p in extra {
            if p.len() != n {
                return Err(Error::shape(n, p.len()));
            }
            data.extend_from_slice(p);
        }
        Self::new(1 + extra.len(), img.height(), img.width(), data)
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            data: self.data.iter().map(|&v| v * k).collect(),
            ..self.clone()
        }
    }
}
