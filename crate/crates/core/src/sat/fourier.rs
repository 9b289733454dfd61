use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;

/// DC-centred amplitude and phase of a 2D DFT. The DC bin sits at
/// `(height / 2, width / 2)` (integer division).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage<T = f32> {
    pub width: usize,
    pub height: usize,
    pub amplitude: Vec<T>,
    /// Radians in `(-pi, pi]`.
    pub phase: Vec<T>,
}

impl<T: Scalar> SpectralImage<T> {
    pub fn dc_index(&self) -> usize {
        (self.height / 2) * self.width + self.width / 2
    }
}

/// In-place 2D transform of a row-major complex buffer.
fn transform_2d<T: Scalar>(buf: &mut [Complex<T>], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    row.process(buf);
    let mut column = vec![Complex::new(T::zero(), T::zero()); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col.process(&mut column);
        for y in 0..height {
            buf[y * width + x] = column[y];
        }
    }
}

/// Moves bin `(r, c)` to `((r + h/2) % h, (c + w/2) % w)`.
fn shift<V: Copy>(src: &[V], width: usize, height: usize, forward: bool) -> Vec<V> {
    let (oy, ox) = (height / 2, width / 2);
    let mut out = src.to_vec();
    for y in 0..height {
        for x in 0..width {
            let (sy, sx) = ((y + oy) % height, (x + ox) % width);
            if forward {
                out[sy * width + sx] = src[y * width + x];
            } else {
                out[y * width + x] = src[sy * width + sx];
            }
        }
    }
    out
}

pub fn fft2<T: Scalar>(img: &GrayImage<T>) -> SpectralImage<T> {
    let (w, h) = (img.width(), img.height());
    let mut buf: Vec<Complex<T>> = img.data().iter().map(|&v| Complex::new(v, T::zero())).collect();
    transform_2d(&mut buf, w, h, false);
    let centred = shift(&buf, w, h, true);
    let pi = T::lit(std::f64::consts::PI);
    SpectralImage {
        width: w,
        height: h,
        amplitude: centred.iter().map(|c| c.norm()).collect(),
        phase: centred
            .iter()
            .map(|c| {
                let a = c.arg();
                if a <= -pi {
                    pi
                } else {
                    a
                }
            })
            .collect(),
    }
}

/// Inverse transform, real part, without clamping.
pub fn ifft2_unclamped<T: Scalar>(spec: &SpectralImage<T>) -> Result<Vec<T>> {
    let (w, h) = (spec.width, spec.height);
    if spec.amplitude.len() != w * h || spec.phase.len() != w * h {
        return Err(Error::shape(w * h, spec.amplitude.len().min(spec.phase.len())));
    }
    let centred: Vec<Complex<T>> = spec
        .amplitude
        .iter()
        .zip(&spec.phase)
        .map(|(&a, &p)| Complex::from_polar(a, p))
        .collect();
    let mut buf = shift(&centred, w, h, false);
    transform_2d(&mut buf, w, h, true);
    let norm = T::lit((w * h) as f64);
    Ok(buf.iter().map(|c| c.re / norm).collect())
}

/// Inverse transform; the real part is clamped into `[0, 1]`.
pub fn ifft2<T: Scalar>(spec: &SpectralImage<T>) -> Result<GrayImage<T>> {
    GrayImage::from_clamped(spec.width, spec.height, ifft2_unclamped(spec)?)
}

/// Centred low-frequency rectangle.
///
/// Rows within `round(alpha * H)` of the DC row and columns within
/// `round(alpha * W)` of the DC column are inside, clipped to the grid. The
/// region is closed under point reflection through DC (modulo the grid), so
/// mixing amplitudes inside it keeps the spectrum Hermitian and the inverse
/// transform real.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqMask {
    pub width: usize,
    pub height: usize,
    data: Vec<bool>,
}

impl FreqMask {
    pub fn new(width: usize, height: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::invalid("alpha", format!("{alpha} outside (0, 0.5]")));
        }
        let band = |n: usize| {
            let c = (n / 2) as isize;
            let r = (alpha * n as f64).round() as isize;
            ((c - r).max(0) as usize, ((c + r).min(n as isize - 1)) as usize)
        };
        let (r0, r1) = band(height);
        let (c0, c1) = band(width);
        let mut data = vec![false; width * height];
        for y in r0..=r1 {
            for x in c0..=c1 {
                data[y * width + x] = true;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// `(rows, cols)` of the true region.
    pub fn extent(&self) -> (usize, usize) {
        let rows = (0..self.height)
            .filter(|&y| (0..self.width).any(|x| self.data[y * self.width + x]))
            .count();
        let cols = (0..self.width)
            .filter(|&x| (0..self.height).any(|y| self.data[y * self.width + x]))
            .count();
        (rows, cols)
    }
}

/// `((1 - lambda) * a_src + lambda * a_tgt)` inside the mask, `a_src` outside.
pub fn mix_amplitude<T: Scalar>(a_src: &[T], a_tgt: &[T], mask: &FreqMask, lambda: T) -> Result<Vec<T>> {
    let n = mask.width * mask.height;
    if a_src.len() != n || a_tgt.len() != n {
        return Err(Error::shape(n, if a_src.len() != n { a_src.len() } else { a_tgt.len() }));
    }
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::invalid("lambda", format!("{lambda} outside [0, 1]")));
    }
    let keep = T::one() - lambda;
    Ok(a_src
        .iter()
        .zip(a_tgt)
        .zip(mask.data())
        .map(|((&s, &t), &m)| if m { keep * s + lambda * t } else { s })
        .collect())
}

/// Source content with a blend of source and target low-frequency style.
pub fn style_transfer<T: Scalar>(
    x_src: &GrayImage<T>,
    x_tgt: &GrayImage<T>,
    alpha: f64,
    lambda: f64,
) -> Result<GrayImage<T>> {
    if !x_src.same_dims(x_tgt) {
        return Err(Error::shape(
            format!("{}x{}", x_src.width(), x_src.height()),
            format!("{}x{}", x_tgt.width(), x_tgt.height()),
        ));
    }
    let mask = FreqMask::new(x_src.width(), x_src.height(), alpha)?;
    let src = fft2(x_src);
    let tgt = fft2(x_tgt);
    let amplitude = mix_amplitude(&src.amplitude, &tgt.amplitude, &mask, T::lit(lambda))?;
    ifft2(&SpectralImage {
        amplitude,
        ..src
    })
}

/// [`style_transfer`] after bilinear resampling of the target to the source size.
pub fn style_transfer_resampled<T: Scalar>(
    x_src: &GrayImage<T>,
    x_tgt: &GrayImage<T>,
    alpha: f64,
    lambda: f64,
) -> Result<GrayImage<T>> {
    if x_src.same_dims(x_tgt) {
        return style_transfer(x_src, x_tgt, alpha, lambda);
    }
    let resized = x_tgt.resize_bilinear(x_src.width(), x_src.height())?;
    style_transfer(x_src, &resized, alpha, lambda)
}
