//! Multi-target domain adaptation for retinal vessel segmentation.
//!
//! A segmentation network trained on one labeled source domain is adapted to
//! several unlabeled target domains whose vessels may be brighter or darker
//! than the background:
//!
//! * [`sat`] restyles source images, either through random monotone intensity
//!   curves or by borrowing the low-frequency amplitude spectrum of a target.
//! * [`lrit`] encodes each pixel by how it compares with its eight neighbours,
//!   starting from each of four directions.
//! * [`domains`] labels each target as similar or dissimilar to the source by
//!   the sign of a vessel-polarity score.
//! * [`dtkd`] trains one teacher per target group and distils both into a
//!   single student.
//! * [`metrics`] scores predictions with Dice and the 95th-percentile
//!   Hausdorff distance.
//!
//! [`synth`] generates the labeled vessel images used by the benchmark in
//! [`demo`], and [`nn`] holds the small convolutional network with its
//! hand-written gradients.
//!
//! ```no_run
//! use rvms_core::demo::demo;
//!
//! let report = demo(1, "run", |msg| eprintln!("{msg}"))?;
//! println!("{}", report.to_table());
//! # Ok::<(), rvms_core::Error>(())
//! ```

pub mod dataset;
pub mod demo;
pub mod domains;
pub mod dtkd;
pub mod error;
pub mod image;
pub mod lrit;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sat;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use image::{BinaryMask, GrayImage};
pub use rng::SeededRng;
pub use scalar::Scalar;
