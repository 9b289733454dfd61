//! Routing target domains to the source-similar or source-dissimilar group
//! by vessel/background polarity.
//!
//! A per-image polarity score is the mean of the high-pass residual
//! `img - boxblur(img)` over the pixels with the largest `|residual|`. Thin
//! bright structures on a darker surround give a positive score, thin dark
//! structures a negative one. A domain is summarised by the median of its
//! image scores and called similar when that median has the same sign as the
//! source median.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;

pub const DEFAULT_BLUR_RADIUS: usize = 7;
pub const DEFAULT_TOP_FRAC: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarityScore {
    pub value: f64,
    pub n_pixels_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Similar,
    Dissimilar,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Similar => "similar",
            Label::Dissimilar => "dissimilar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainLabel {
    pub label: Label,
    /// Median polarity score over the domain's images.
    pub score: f64,
}

/// Mean over the `(2r+1)^2` window with edge replication, via a summed-area
/// table of the padded image.
fn box_blur(px: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let mut sat = vec![0.0; (pw + 1) * (ph + 1)];
    for y in 0..ph {
        let sy = (y as isize - r as isize).clamp(0, h as isize - 1) as usize;
        let mut row = 0.0;
        for x in 0..pw {
            let sx = (x as isize - r as isize).clamp(0, w as isize - 1) as usize;
            row += px[sy * w + sx];
            sat[(y + 1) * (pw + 1) + x + 1] = sat[y * (pw + 1) + x + 1] + row;
        }
    }
    let k = 2 * r + 1;
    let area = (k * k) as f64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            // padded window rows y..y+k, cols x..x+k
            let (y0, y1, x0, x1) = (y, y + k, x, x + k);
            let s = sat[y1 * (pw + 1) + x1] - sat[y0 * (pw + 1) + x1] - sat[y1 * (pw + 1) + x0]
                + sat[y0 * (pw + 1) + x0];
            out[y * w + x] = s / area;
        }
    }
    out
}

pub fn polarity_score<T: Scalar>(img: &GrayImage<T>, blur_radius: usize, top_frac: f64) -> Result<PolarityScore> {
    let (w, h) = (img.width(), img.height());
    if blur_radius == 0 || w < 3 * blur_radius || h < 3 * blur_radius {
        return Err(Error::Dimensions {
            width: w,
            height: h,
            reason: "image must be at least 3x the blur radius on each side",
        });
    }
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::invalid("top_frac", format!("{top_frac} outside (0, 1]")));
    }
    let px: Vec<f64> = img.data().iter().map(|v| v.as_f64()).collect();
    let blur = box_blur(&px, w, h, blur_radius);
    let residual: Vec<f64> = px.iter().zip(&blur).map(|(v, b)| v - b).collect();
    let mut order: Vec<usize> = (0..residual.len()).collect();
    order.sort_by(|&a, &b| residual[b].abs().total_cmp(&residual[a].abs()).then(a.cmp(&b)));
    let k = ((top_frac * residual.len() as f64).round() as usize).clamp(1, residual.len());
    let chosen = &order[..k];
    // Box-blur rounding leaves residuals near 1e-17 on flat images.
    if residual[chosen[0]].abs() <= 1e-12 {
        return Err(Error::Degenerate("constant image has no local contrast".into()));
    }
    let value = chosen.iter().map(|&i| residual[i]).sum::<f64>() / k as f64;
    Ok(PolarityScore {
        value,
        n_pixels_used: k,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn domain_median<T: Scalar>(images: &[GrayImage<T>]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Degenerate("domain has no images".into()));
    }
    let mut scores = images
        .iter()
        .map(|img| polarity_score(img, DEFAULT_BLUR_RADIUS, DEFAULT_TOP_FRAC).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(median(&mut scores))
}

/// Labels each target domain. A zero median on either side counts as a sign
/// mismatch, so it routes to `Dissimilar`.
pub fn classify_domains<T: Scalar>(
    source: &[GrayImage<T>],
    targets: &[(String, Vec<GrayImage<T>>)],
) -> Result<Vec<(String, DomainLabel)>> {
    let src = domain_median(source)?;
    targets
        .iter()
        .map(|(id, imgs)| {
            let score = domain_median(imgs)
                .map_err(|e| Error::Degenerate(format!("target domain `{id}`: {e}")))?;
            let similar = src != 0.0 && score != 0.0 && (src > 0.0) == (score > 0.0);
            let label = if similar { Label::Similar } else { Label::Dissimilar };
            Ok((id.clone(), DomainLabel { label, score }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::synth::{synth_vessels, Polarity};

    fn domain(seed: u64, n: usize, polarity: Polarity) -> Vec<GrayImage<f64>> {
        let mut rng = SeededRng::new(seed);
        (0..n)
            .map(|_| synth_vessels(&mut rng, 64, 64, polarity, 0.03).unwrap().0)
            .collect()
    }

    #[test]
    fn box_blur_matches_direct_window_mean() {
        let mut rng = SeededRng::new(1);
        let (w, h, r) = (9, 7, 2);
        let px: Vec<f64> = (0..w * h).map(|_| rng.uniform()).collect();
        let fast = box_blur(&px, w, h, r);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut s = 0.0;
                for dy in -(r as isize)..=r as isize {
                    for dx in -(r as isize)..=r as isize {
                        let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                        let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                        s += px[sy * w + sx];
                    }
                }
                let direct = s / ((2 * r + 1) * (2 * r + 1)) as f64;
                assert!((direct - fast[y as usize * w + x as usize]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bright_positive_complement_negated() {
        let (img, _) = synth_vessels::<f64>(&mut SeededRng::new(2), 64, 64, Polarity::Bright, 0.0).unwrap();
        let s = polarity_score(&img, 7, 0.05).unwrap();
        assert!(s.value > 0.0);
        assert_eq!(s.n_pixels_used, 205);
        let c = polarity_score(&img.complement(), 7, 0.05).unwrap();
        assert!((c.value + s.value).abs() < 1e-12);
    }

    #[test]
    fn constant_and_tiny_images_fail() {
        let flat = GrayImage::<f64>::filled(32, 32, 0.4).unwrap();
        assert!(matches!(polarity_score(&flat, 7, 0.05), Err(Error::Degenerate(_))));
        let small = GrayImage::<f64>::filled(20, 32, 0.4).unwrap();
        assert!(matches!(polarity_score(&small, 7, 0.05), Err(Error::Dimensions { .. })));
    }

    #[test]
    fn classification_cases() {
        let src = domain(10, 20, Polarity::Bright);
        let targets = vec![
            ("bright".to_string(), domain(11, 20, Polarity::Bright)),
            ("dark".to_string(), domain(12, 20, Polarity::Dark)),
            ("copy".to_string(), src.clone()),
        ];
        let labels = classify_domains(&src, &targets).unwrap();
        assert_eq!(labels[0].1.label, Label::Similar);
        assert_eq!(labels[1].1.label, Label::Dissimilar);
        assert_eq!(labels[2].1.label, Label::Similar);
        assert!(labels[1].1.score < 0.0);
        assert!(classify_domains(&src, &[("empty".to_string(), vec![])]).is_err());
        assert!(classify_domains::<f64>(&[], &targets).is_err());
    }

    #[test]
    fn complemented_source_is_dissimilar_and_scale_robust() {
        let src = domain(13, 9, Polarity::Bright);
        let comp: Vec<_> = src.iter().map(GrayImage::complement).collect();
        let labels = classify_domains(&src, &[("c".into(), comp.clone())]).unwrap();
        assert_eq!(labels[0].1.label, Label::Dissimilar);
        for k in [0.3, 0.77, 1.0] {
            let s: Vec<_> = src.iter().map(|i| i.map(|v| v * k)).collect();
            let c: Vec<_> = comp.iter().map(|i| i.map(|v| v * k)).collect();
            let l = classify_domains(&s, &[("c".into(), c), ("s".into(), s.clone())]).unwrap();
            assert_eq!(l[0].1.label, Label::Dissimilar);
            assert_eq!(l[1].1.label, Label::Similar);
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
