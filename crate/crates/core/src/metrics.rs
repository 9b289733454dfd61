//! Dice overlap and 95th-percentile boundary Hausdorff distance, plus the
//! per-domain report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryMask;

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::shape(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    Ok(())
}

/// `100 * 2|P & G| / (|P| + |G|)`; two empty masks score 100.
pub fn dice_pct(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        inter += (a && b) as usize;
        p += a as usize;
        g += b as usize;
    }
    if p + g == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * 2.0 * inter as f64 / (p + g) as f64)
}

/// Foreground pixels with at least one background 4-neighbour; outside the
/// image counts as background.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        x == 0
            || y == 0
            || x + 1 == w
            || y + 1 == h
            || !mask.get(x - 1, y)
            || !mask.get(x + 1, y)
            || !mask.get(x, y - 1)
            || !mask.get(x, y + 1)
    })
}

/// Lower envelope breakpoint `num / den` (den > 0), or an infinity.
#[derive(Clone, Copy)]
enum Break {
    NegInf,
    At(i128, i128),
    PosInf,
}

impl Break {
    fn le(self, other: Break) -> bool {
        match (self, other) {
            (Break::NegInf, _) | (_, Break::PosInf) => true,
            (_, Break::NegInf) | (Break::PosInf, _) => false,
            (Break::At(a, b), Break::At(c, d)) => a * d <= c * b,
        }
    }

    fn lt_int(self, x: i128) -> bool {
        match self {
            Break::NegInf => true,
            Break::PosInf => false,
            Break::At(n, d) => n < x * d,
        }
    }
}

/// Exact 1D squared distance transform (Felzenszwalb-Huttenlocher) on
/// integer costs; `None` marks points outside the feature set.
fn edt_1d(f: &[Option<i64>], out: &mut [Option<i64>]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<Break> = Vec::with_capacity(n + 1);
    for q in 0..n {
        let Some(fq) = f[q] else { continue };
        let hq = fq as i128 + (q * q) as i128;
        loop {
            let Some(&p) = v.last() else {
                z.push(Break::NegInf);
                break;
            };
            let hp = f[p].unwrap() as i128 + (p * p) as i128;
            let s = Break::At(hq - hp, 2 * (q as i128 - p as i128));
            if s.le(*z.last().unwrap()) {
                v.pop();
                z.pop();
            } else {
                z.push(s);
                break;
            }
        }
        v.push(q);
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = None);
        return;
    }
    z.push(Break::PosInf);
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        while z[k + 1].lt_int(x as i128) {
            k += 1;
        }
        let p = v[k];
        let d = x as i64 - p as i64;
        *o = Some(d * d + f[p].unwrap());
    }
}

/// Squared Euclidean distance from every pixel to the nearest `true` pixel.
pub fn squared_distance_transform(features: &BinaryMask) -> Vec<Option<i64>> {
    let (w, h) = (features.width(), features.height());
    let mut grid: Vec<Option<i64>> = features.data().iter().map(|&b| b.then_some(0)).collect();
    let mut col_in = vec![None; h];
    let mut col_out = vec![None; h];
    for x in 0..w {
        for y in 0..h {
            col_in[y] = grid[y * w + x];
        }
        edt_1d(&col_in, &mut col_out);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![None; w];
    for y in 0..h {
        edt_1d(&grid[y * w..(y + 1) * w], &mut row_out);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid
}

/// Pooled boundary-to-boundary distances in both directions, sorted.
/// `None` when exactly one mask is empty.
fn pooled_distances(pred: &BinaryMask, gt: &BinaryMask) -> Option<Vec<f64>> {
    let bp = boundary(pred);
    let bg = boundary(gt);
    let (np, ng) = (bp.count(), bg.count());
    if np == 0 && ng == 0 {
        return Some(vec![]);
    }
    if np == 0 || ng == 0 {
        return None;
    }
    let dp = squared_distance_transform(&bp);
    let dg = squared_distance_transform(&bg);
    let mut d = Vec::with_capacity(np + ng);
    for i in 0..bp.data().len() {
        if bp.data()[i] {
            d.push((dg[i].unwrap() as f64).sqrt());
        }
        if bg.data()[i] {
            d.push((dp[i].unwrap() as f64).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    Some(d)
}

fn diagonal(m: &BinaryMask) -> f64 {
    ((m.width() * m.width() + m.height() * m.height()) as f64).sqrt()
}

/// Nearest-rank percentile, `q` in `(0, 1]`.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// 95th-percentile symmetric boundary Hausdorff distance in pixels. Two
/// empty masks give 0; exactly one empty mask gives the image diagonal.
pub fn hd95(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    Ok(match pooled_distances(pred, gt) {
        Some(d) => nearest_rank(&d, 0.95),
        None => diagonal(pred),
    })
}

/// Full (100th percentile) variant of [`hd95`].
pub fn hausdorff(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    Ok(match pooled_distances(pred, gt) {
        Some(d) => d.last().copied().unwrap_or(0.0),
        None => diagonal(pred),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub domain_id: String,
    pub n: usize,
    pub dice_mean: f64,
    pub dice_sd: f64,
    pub hd95_mean: f64,
    pub hd95_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Unweighted means over rows.
    pub average_dice: f64,
    pub average_hd95: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalRow {
    /// Aggregates `(pred, gt)` pairs of one domain.
    pub fn from_pairs(domain_id: &str, pairs: &[(BinaryMask, BinaryMask)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Degenerate(format!("domain `{domain_id}` has nothing to evaluate")));
        }
        let mut dice = Vec::with_capacity(pairs.len());
        let mut hd = Vec::with_capacity(pairs.len());
        for (p, g) in pairs {
            dice.push(dice_pct(p, g)?);
            hd.push(hd95(p, g)?);
        }
        let (dice_mean, dice_sd) = mean_sd(&dice);
        let (hd95_mean, hd95_sd) = mean_sd(&hd);
        Ok(Self {
            domain_id: domain_id.to_string(),
            n: pairs.len(),
            dice_mean,
            dice_sd,
            hd95_mean,
            hd95_sd,
        })
    }
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let average_dice = rows.iter().map(|r| r.dice_mean).sum::<f64>() / n;
        let average_hd95 = rows.iter().map(|r| r.hd95_mean).sum::<f64>() / n;
        Self {
            rows,
            average_dice,
            average_hd95,
        }
    }

    pub fn row(&self, domain_id: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.domain_id == domain_id)
    }

    pub const CSV_HEADER: &'static str = "domain_id,n,dice_mean,dice_sd,hd95_mean,hd95_sd";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.4},{:.4}",
                r.domain_id, r.n, r.dice_mean, r.dice_sd, r.hd95_mean, r.hd95_sd
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<20} {:>4} {:>16} {:>16}\n", "domain", "n", "Dice[%]", "HD95[px]");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<20} {:>4} {:>8.2} ± {:<5.2} {:>8.2} ± {:<5.2}",
                r.domain_id, r.n, r.dice_mean, r.dice_sd, r.hd95_mean, r.hd95_sd
            );
        }
        let _ = writeln!(s, "{:<20} {:>4} {:>8.2}         {:>8.2}", "average", "", self.average_dice, self.average_hd95);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
