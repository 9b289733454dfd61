//! Pixel containers and 8-bit PNG I/O.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest accepted side length for any image.
pub const MIN_SIDE: usize = 3;

/// Single-channel image, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T = f32> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "images must be at least 3x3",
        });
    }
    Ok(())
}

impl<T: Scalar> GrayImage<T> {
    /// Validates dimensions, length, and the unit-interval range.
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::shape(width * height, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::invalid(
                "data",
                format!("pixel {i} = {} is outside [0, 1]", data[i]),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from arbitrary reals, clamping into `[0, 1]`.
    /// NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { T::zero() } else { v.max(T::zero()).min(T::one()) })
            .collect();
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::from_clamped(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_clamped(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Edge-replicated access.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Pointwise map; the result is clamped back into `[0, 1]`.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let data = self
            .data
            .iter()
            .map(|&v| f(v).max(T::zero()).min(T::one()))
            .collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// `1 - v` at every pixel.
    pub fn complement(&self) -> Self {
        self.map(|v| T::one() - v)
    }

    pub fn same_dims<U>(&self, other: &GrayImage<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn cast<U: Scalar>(&self) -> GrayImage<U> {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64()).max(U::zero()).min(U::one())).collect(),
        }
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
            let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
            let p = |x, y| self.get(x, y).as_f64();
            let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
            let bottom = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
            T::lit(top * (1.0 - ty) + bottom * ty)
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }
}

/// Binary segmentation label, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(width * height, data.len()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len().max(1) as f64
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Threshold an image at `v > 0.5`.
    pub fn from_image<T: Scalar>(img: &GrayImage<T>) -> Self {
        let half = T::lit(0.5);
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| v > half).collect(),
        }
    }

    pub fn to_image<T: Scalar>(&self) -> GrayImage<T> {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&b| if b { T::one() } else { T::zero() })
                .collect(),
        }
    }
}

/// 8-bit quantization used by [`save_image`]: `round(v * 255)`, half-up.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn decode_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Reads an 8-bit grayscale or RGB(A) PNG. Color channels are collapsed by
/// their unweighted mean; alpha is ignored.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<GrayImage<T>> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| decode_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = 1.0 / 255.0;
    let data: Vec<T> = match &img {
        DynamicImage::ImageLuma8(b) => b.as_raw().iter().map(|&v| T::lit(v as f64 * scale)).collect(),
        DynamicImage::ImageLumaA8(b) => b
            .as_raw()
            .chunks_exact(2)
            .map(|p| T::lit(p[0] as f64 * scale))
            .collect(),
        DynamicImage::ImageRgb8(b) => b
            .as_raw()
            .chunks_exact(3)
            .map(|p| T::lit((p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0 * scale))
            .collect(),
        DynamicImage::ImageRgba8(b) => b
            .as_raw()
            .chunks_exact(4)
            .map(|p| T::lit((p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0 * scale))
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                format: format!("{:?}", other.color()),
            })
        }
    };
    GrayImage::from_clamped(w, h, data)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

pub fn save_image<T: Scalar>(img: &GrayImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data().iter().map(|v| quantize_u8(v.as_f64())).collect();
    save_gray8(img.width(), img.height(), bytes, path)
}

pub(crate) fn save_gray8(width: usize, height: usize, bytes: Vec<u8>, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::shape(width * height, "buffer"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| decode_err(path, e))
}

/// Writes raw 16-bit samples as a grayscale PNG.
pub fn save_gray16(width: usize, height: usize, values: &[u16], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, values.to_vec())
            .ok_or_else(|| Error::shape(width * height, values.len()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| decode_err(path, e))
}

/// Reads a 16-bit grayscale PNG written by [`save_gray16`].
pub fn load_gray16(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| decode_err(path, e))?;
    match img {
        DynamicImage::ImageLuma16(b) => Ok((b.width() as usize, b.height() as usize, b.into_raw())),
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            format: format!("{:?}", other.color()),
        }),
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(BinaryMask::from_image(&load_image::<f32>(path)?))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    save_gray8(mask.width(), mask.height(), bytes, path.as_ref())
}
