use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Default lookup-table resolution.
pub const DEFAULT_SAMPLES: usize = 4096;

pub const MIN_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Which pair of end points the curve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapMode {
    /// `(0,0) -> (1,1)`: increasing, keeps vessel polarity.
    Similar,
    /// `(0,1) -> (1,0)`: decreasing, inverts vessel polarity.
    Dissimilar,
}

impl MapMode {
    pub fn endpoints(self) -> (Point, Point) {
        match self {
            MapMode::Similar => (Point::new(0.0, 0.0), Point::new(1.0, 1.0)),
            MapMode::Dissimilar => (Point::new(0.0, 1.0), Point::new(1.0, 0.0)),
        }
    }
}

impl fmt::Display for MapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapMode::Similar => "similar",
            MapMode::Dissimilar => "dissimilar",
        })
    }
}

impl FromStr for MapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similar" => Ok(MapMode::Similar),
            "dissimilar" => Ok(MapMode::Dissimilar),
            other => Err(Error::invalid("mode", format!("`{other}` (expected similar|dissimilar)"))),
        }
    }
}

/// Cubic Bezier point at parameter `t`.
pub fn bezier_point(t: f64, p0: Point, p1: Point, p2: Point, p3: Point) -> Result<Point> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid("t", format!("{t} outside [0, 1]")));
    }
    let s = 1.0 - t;
    let (b0, b1, b2, b3) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
    Ok(Point::new(
        b0 * p0.x + b1 * p1.x + b2 * p2.x + b3 * p3.x,
        b0 * p0.y + b1 * p1.y + b2 * p2.y + b3 * p3.y,
    ))
}

/// A Bezier intensity curve rendered into an x-sorted lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierMap {
    pub control: [Point; 4],
    lut: Vec<Point>,
}

impl BezierMap {
    /// Renders the curve with `n_samples` uniform steps in `t`, then sorts by x.
    pub fn from_control(control: [Point; 4], n_samples: usize) -> Result<Self> {
        if n_samples < MIN_SAMPLES {
            return Err(Error::invalid("n_samples", format!("{n_samples} < {MIN_SAMPLES}")));
        }
        let [p0, p1, p2, p3] = control;
        let last = (n_samples - 1) as f64;
        let mut lut = (0..n_samples)
            .map(|k| bezier_point(k as f64 / last, p0, p1, p2, p3))
            .collect::<Result<Vec<_>>>()?;
        lut.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(Self { control, lut })
    }

    pub fn with_mode(mode: MapMode, p1: Point, p2: Point, n_samples: usize) -> Result<Self> {
        let (p0, p3) = mode.endpoints();
        Self::from_control([p0, p1, p2, p3], n_samples)
    }

    pub fn lut(&self) -> &[Point] {
        &self.lut
    }

    /// Piecewise-linear lookup at `v`, clamped to the table's x-span and to `[0, 1]`.
    pub fn eval(&self, v: f64) -> f64 {
        let lut = &self.lut;
        let first = lut[0];
        let last = lut[lut.len() - 1];
        let y = if v <= first.x {
            first.y
        } else if v >= last.x {
            last.y
        } else {
            // first index with x > v; 1 <= hi <= len-1 here
            let hi = lut.partition_point(|p| p.x <= v);
            let (a, b) = (lut[hi - 1], lut[hi]);
            let dx = b.x - a.x;
            if dx > 0.0 {
                a.y + (b.y - a.y) * (v - a.x) / dx
            } else {
                a.y
            }
        };
        y.clamp(0.0, 1.0)
    }
}

/// Draws a map: end points fixed by `mode`, inner control point coordinates
/// uniform in `(0, 1)`.
pub fn sample_map(rng: &mut SeededRng, mode: MapMode, n_samples: usize) -> Result<BezierMap> {
    let p1 = Point::new(rng.uniform_open(), rng.uniform_open());
    let p2 = Point::new(rng.uniform_open(), rng.uniform_open());
    BezierMap::with_mode(mode, p1, p2, n_samples)
}

pub fn apply_intensity_map<T: Scalar>(img: &GrayImage<T>, map: &BezierMap) -> GrayImage<T> {
    img.map(|v| T::lit(map.eval(v.as_f64())))
}
