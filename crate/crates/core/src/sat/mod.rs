//! Style augmentation and transfer.
//!
//! [`bezier`] remaps intensities through a random monotone cubic curve;
//! [`fourier`] blends the low-frequency amplitude spectrum of a target image
//! into a source image while keeping the source phase.

pub mod bezier;
pub mod fourier;

pub use bezier::{apply_intensity_map, bezier_point, sample_map, BezierMap, MapMode, Point};
pub use fourier::{fft2, ifft2, mix_amplitude, style_transfer, FreqMask, SpectralImage};
