//! Synthetic branching-vessel images with exact labels.
//!
//! Each image is a random forest of binary trees. A tree grows from a point
//! on the image border; every branch is a short polyline with a small random
//! heading drift, and splits into two thinner children until the width falls
//! below [`SynthConfig::min_width`] or the depth limit is reached. Strokes are
//! rendered as anti-aliased capsules; the label is the set of pixel centres
//! within half a stroke width of some branch.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Vessel-to-background intensity relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Vessels brighter than the background.
    Bright,
    /// Vessels darker than the background.
    Dark,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Bright => "bright",
            Polarity::Dark => "dark",
        })
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bright" => Ok(Polarity::Bright),
            "dark" => Ok(Polarity::Dark),
            other => Err(Error::invalid("polarity", format!("`{other}` (expected bright|dark)"))),
        }
    }
}

/// Generator constants. Ranges are `(lo, hi)` and sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub roots: (usize, usize),
    pub max_depth: usize,
    /// Root stroke width in pixels.
    pub root_width: (f64, f64),
    /// Child width as a fraction of its parent's.
    pub taper: (f64, f64),
    pub min_width: f64,
    /// Root branch length as a fraction of the shorter image side.
    pub branch_length: (f64, f64),
    /// Child length as a fraction of its parent's.
    pub child_length: (f64, f64),
    pub split_angle_deg: (f64, f64),
    /// Standard deviation of the per-step heading drift, radians.
    pub wiggle: f64,
    pub steps_per_branch: usize,
    pub vessel_level: (f64, f64),
    pub background_level: (f64, f64),
    /// Amplitude of a smooth illumination field added before polarity and
    /// noise. Zero by default; nonzero values move pixels outside the
    /// vessel/background level ranges.
    pub shading: f64,
    /// Growth stops once this foreground fraction is reached.
    pub max_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            roots: (3, 6),
            max_depth: 4,
            root_width: (2.0, 4.0),
            taper: (0.65, 0.8),
            min_width: 1.0,
            branch_length: (0.15, 0.3),
            child_length: (0.6, 0.85),
            split_angle_deg: (20.0, 45.0),
            wiggle: 0.15,
            steps_per_branch: 4,
            vessel_level: (0.75, 1.0),
            background_level: (0.05, 0.35),
            shading: 0.0,
            max_fraction: 0.28,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let unit = |r: (f64, f64)| 0.0 <= r.0 && r.0 <= r.1 && r.1 <= 1.0;
        if self.roots.0 == 0 || self.roots.0 > self.roots.1 {
            return Err(Error::invalid("roots", "need 1 <= lo <= hi"));
        }
        if !unit(self.vessel_level) || !unit(self.background_level) {
            return Err(Error::invalid("levels", "intensity ranges must lie in [0, 1]"));
        }
        if self.min_width <= 0.0 || self.root_width.0 < self.min_width {
            return Err(Error::invalid("root_width", "must be at least min_width"));
        }
        if self.steps_per_branch == 0 {
            return Err(Error::invalid("steps_per_branch", "must be positive"));
        }
        Ok(())
    }
}

struct Branch {
    x: f64,
    y: f64,
    heading: f64,
    width: f64,
    length: f64,
    depth: usize,
}

struct Canvas {
    width: usize,
    height: usize,
    coverage: Vec<f64>,
    mask: Vec<bool>,
    foreground: usize,
}

impl Canvas {
    fn fraction(&self) -> f64 {
        self.foreground as f64 / (self.width * self.height) as f64
    }

    /// Anti-aliased capsule from `a` to `b`. Pixel centres sit at `(x + 0.5, y + 0.5)`.
    fn stroke(&mut self, a: (f64, f64), b: (f64, f64), width: f64) {
        let half = width / 2.0;
        let pad = half + 1.0;
        let x0 = ((a.0.min(b.0) - pad).floor().max(0.0)) as usize;
        let y0 = ((a.1.min(b.1) - pad).floor().max(0.0)) as usize;
        let x1 = ((a.0.max(b.0) + pad).ceil().min(self.width as f64 - 1.0)).max(0.0) as usize;
        let y1 = ((a.1.max(b.1) + pad).ceil().min(self.height as f64 - 1.0)).max(0.0) as usize;
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
                let d = (qx * qx + qy * qy).sqrt();
                let i = y * self.width + x;
                let cov = (half + 0.5 - d).clamp(0.0, 1.0);
                if cov > self.coverage[i] {
                    self.coverage[i] = cov;
                }
                if d <= half && !self.mask[i] {
                    self.mask[i] = true;
                    self.foreground += 1;
                }
            }
        }
    }
}

/// Draws one image/label pair with the default [`SynthConfig`].
pub fn synth_vessels<T: Scalar>(
    rng: &mut SeededRng,
    width: usize,
    height: usize,
    polarity: Polarity,
    noise_sd: f64,
) -> Result<(GrayImage<T>, BinaryMask)> {
    synth_vessels_with(&SynthConfig::default(), rng, width, height, polarity, noise_sd)
}

pub fn synth_vessels_with<T: Scalar>(
    cfg: &SynthConfig,
    rng: &mut SeededRng,
    width: usize,
    height: usize,
    polarity: Polarity,
    noise_sd: f64,
) -> Result<(GrayImage<T>, BinaryMask)> {
    if width < 32 || height < 32 {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "synthetic images must be at least 32x32",
        });
    }
    if !(0.0..=0.2).contains(&noise_sd) {
        return Err(Error::invalid("noise_sd", format!("{noise_sd} outside [0, 0.2]")));
    }
    cfg.validate()?;

    let (w, h) = (width as f64, height as f64);
    let side = w.min(h);
    let mut canvas = Canvas {
        width,
        height,
        coverage: vec![0.0; width * height],
        mask: vec![false; width * height],
        foreground: 0,
    };
    let vessel = rng.range(cfg.vessel_level.0, cfg.vessel_level.1);
    let background = rng.range(cfg.background_level.0, cfg.background_level.1);

    let mut queue = VecDeque::new();
    for _ in 0..rng.int_inclusive(cfg.roots.0, cfg.roots.1) {
        let along = rng.range(0.1, 0.9);
        let (x, y, inward) = match rng.index(4) {
            0 => (along * w, 0.0, std::f64::consts::FRAC_PI_2),
            1 => (w, along * h, std::f64::consts::PI),
            2 => (along * w, h, -std::f64::consts::FRAC_PI_2),
            _ => (0.0, along * h, 0.0),
        };
        queue.push_back(Branch {
            x,
            y,
            heading: inward + rng.range(-0.6, 0.6),
            width: rng.range(cfg.root_width.0, cfg.root_width.1),
            length: side * rng.range(cfg.branch_length.0, cfg.branch_length.1),
            depth: 0,
        });
    }

    'grow: while let Some(mut br) = queue.pop_front() {
        let step = br.length / cfg.steps_per_branch as f64;
        for _ in 0..cfg.steps_per_branch {
            if canvas.fraction() >= cfg.max_fraction {
                break 'grow;
            }
            br.heading += cfg.wiggle * rng.normal();
            let next = (br.x + step * br.heading.cos(), br.y + step * br.heading.sin());
            canvas.stroke((br.x, br.y), next, br.width);
            (br.x, br.y) = next;
            if br.x < -step || br.y < -step || br.x > w + step || br.y > h + step {
                continue 'grow;
            }
        }
        if br.depth + 1 >= cfg.max_depth {
            continue;
        }
        for sign in [-1.0, 1.0] {
            let width = br.width * rng.range(cfg.taper.0, cfg.taper.1);
            let turn = rng.range(cfg.split_angle_deg.0, cfg.split_angle_deg.1).to_radians();
            let length = br.length * rng.range(cfg.child_length.0, cfg.child_length.1);
            if width >= cfg.min_width {
                queue.push_back(Branch {
                    x: br.x,
                    y: br.y,
                    heading: br.heading + sign * turn,
                    width,
                    length,
                    depth: br.depth + 1,
                });
            }
        }
    }

    let shading = if cfg.shading > 0.0 {
        let (gx, gy) = (rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
        let (cx, cy) = (rng.range(0.3, 0.7), rng.range(0.3, 0.7));
        Some((gx, gy, cx, cy))
    } else {
        None
    };

    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let mut v = background + (vessel - background) * canvas.coverage[i];
            if let Some((gx, gy, cx, cy)) = shading {
                let (u, t) = ((x as f64 + 0.5) / w, (y as f64 + 0.5) / h);
                let r2 = (u - cx).powi(2) + (t - cy).powi(2);
                v += cfg.shading * (gx * (u - 0.5) + gy * (t - 0.5) + 0.25 - 2.0 * r2);
            }
            let v = v.clamp(0.0, 1.0);
            data.push(match polarity {
                Polarity::Bright => v,
                Polarity::Dark => 1.0 - v,
            });
        }
    }
    if noise_sd > 0.0 {
        for v in &mut data {
            *v += noise_sd * rng.normal();
        }
    }
    let img = GrayImage::from_clamped(width, height, data.into_iter().map(T::lit).collect())?;
    let mask = BinaryMask::new(width, height, canvas.mask)?;
    Ok((img, mask))
}
