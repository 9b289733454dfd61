//! Local relative intensity transform.
//!
//! Every pixel is compared with its eight neighbours. Starting from one of
//! the four cardinal directions and walking clockwise, the i-th neighbour
//! (i = 1..=8) contributes `2^i` when the anchor is strictly brighter than it.
//! One channel is produced per starting direction, so the four channels are
//! the same comparisons with the weights rotated by two positions each.
//! Borders use edge replication.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Largest channel value: `2 + 4 + ... + 256`.
pub const MAX_CODE: u16 = 510;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Right,
    Down,
    Left,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Right, Direction::Down, Direction::Left];

    /// Position of this direction in the clockwise neighbour ring.
    fn ring_offset(self) -> usize {
        match self {
            Direction::Up => 0,
            Direction::Right => 2,
            Direction::Down => 4,
            Direction::Left => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Right => "right",
            Direction::Down => "down",
            Direction::Left => "left",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(dx, dy)` clockwise from straight up, with y pointing down.
const RING: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LritChannel {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl LritChannel {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LritStack {
    pub channels: [LritChannel; 4],
    /// Start direction of each channel, in channel order.
    pub order: [Direction; 4],
}

fn check_size<T: Scalar>(img: &GrayImage<T>) -> Result<()> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::Dimensions {
            width: img.width(),
            height: img.height(),
            reason: "LRIT needs at least 3x3",
        });
    }
    Ok(())
}

/// Bit `k` of the result is set when the anchor beats ring neighbour `k`
/// (ring order starting from `Up`).
fn comparison_bits<T: Scalar>(img: &GrayImage<T>) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let px = img.data();
    let mut bits = vec![0u8; w * h];
    // interior rows and columns: no clamping needed
    for y in 1..h - 1 {
        let row = y * w;
        for x in 1..w - 1 {
            let a = px[row + x];
            let mut b = 0u8;
            for (k, &(dx, dy)) in RING.iter().enumerate() {
                let n = px[(row as isize + dy * w as isize + x as isize + dx) as usize];
                b |= ((a > n) as u8) << k;
            }
            bits[row + x] = b;
        }
    }
    let border = (0..w)
        .flat_map(|x| [(x, 0), (x, h - 1)])
        .chain((1..h - 1).flat_map(|y| [(0, y), (w - 1, y)]));
    for (x, y) in border {
        let a = px[y * w + x];
        let mut b = 0u8;
        for (k, &(dx, dy)) in RING.iter().enumerate() {
            let n = img.get_clamped(x as isize + dx, y as isize + dy);
            b |= ((a > n) as u8) << k;
        }
        bits[y * w + x] = b;
    }
    bits
}

/// Maps ring-ordered comparison bits to a channel value for `start`.
fn weigh(bits: u8, start: Direction) -> u16 {
    // neighbour at ring position k has index i = (k - offset) mod 8 + 1
    let rotated = bits.rotate_right(start.ring_offset() as u32);
    (rotated as u16) << 1
}

pub fn lrit_channel<T: Scalar>(img: &GrayImage<T>, start: Direction) -> Result<LritChannel> {
    check_size(img)?;
    let bits = comparison_bits(img);
    Ok(LritChannel {
        width: img.width(),
        height: img.height(),
        data: bits.into_iter().map(|b| weigh(b, start)).collect(),
    })
}

/// All four channels in canonical order (up, right, down, left).
pub fn lrit_stack<T: Scalar>(img: &GrayImage<T>) -> Result<LritStack> {
    check_size(img)?;
    let bits = comparison_bits(img);
    let channel = |d| LritChannel {
        width: img.width(),
        height: img.height(),
        data: bits.iter().map(|&b| weigh(b, d)).collect(),
    };
    Ok(LritStack {
        channels: Direction::ALL.map(channel),
        order: Direction::ALL,
    })
}

/// Reorders channels by a uniformly random permutation.
pub fn shuffle_stack(stack: &LritStack, rng: &mut SeededRng) -> LritStack {
    let perm = rng.permutation(4);
    permute_stack(stack, [perm[0], perm[1], perm[2], perm[3]])
}

/// Output channel `i` is input channel `perm[i]`.
pub fn permute_stack(stack: &LritStack, perm: [usize; 4]) -> LritStack {
    LritStack {
        channels: perm.map(|p| stack.channels[p].clone()),
        order: perm.map(|p| stack.order[p]),
    }
}

/// Scales each channel into `[0, 1]` by `1/510`, channel-major.
pub fn normalize_stack<T: Scalar>(stack: &LritStack) -> Vec<Vec<T>> {
    let scale = 1.0 / MAX_CODE as f64;
    stack
        .channels
        .iter()
        .map(|c| c.data.iter().map(|&v| T::lit(v as f64 * scale)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct transcription: enumerate neighbours clockwise from `start`,
    /// weight the i-th (1-based) by 2^i.
    fn naive(img: &GrayImage<f64>, start: Direction) -> Vec<u16> {
        let start_pos = RING
            .iter()
            .position(|&o| {
                o == match start {
                    Direction::Up => (0, -1),
                    Direction::Right => (1, 0),
                    Direction::Down => (0, 1),
                    Direction::Left => (-1, 0),
                }
            })
            .unwrap();
        let mut out = Vec::new();
        for y in 0..img.height() as isize {
            for x in 0..img.width() as isize {
                let a = img.get_clamped(x, y);
                let mut v = 0u16;
                for i in 1..=8usize {
                    let (dx, dy) = RING[(start_pos + i - 1) % 8];
                    if a - img.get_clamped(x + dx, y + dy) > 0.0 {
                        v += 1 << i;
                    }
                }
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn constant_image_is_zero() {
        let img = GrayImage::<f32>::filled(6, 5, 0.7).unwrap();
        let s = lrit_stack(&img).unwrap();
        assert!(s.channels.iter().all(|c| c.data.iter().all(|&v| v == 0)));
    }

    #[test]
    fn local_maximum_is_510_and_corners_match_naive() {
        let img = GrayImage::<f64>::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 0.5 } else { 0.4 }).unwrap();
        let c = lrit_channel(&img, Direction::Up).unwrap();
        assert_eq!(c.get(1, 1), 510);
        assert_eq!(c.data, naive(&img, Direction::Up));
        // top-left corner: only neighbours strictly darker count; all are 0.4
        // or the 0.5 centre, so the corner code is 0
        assert_eq!(c.get(0, 0), 0);
    }

    #[test]
    fn single_peak_corner_by_hand() {
        // corner (0,0) = 0.9 against edge-padded neighbours; clockwise from up:
        // up=self, up-right=self-row pad (1,0)=0.2, right=0.2, down-right=0.1,
        // down=(0,1)=0.3, down-left=pad(0,1)=0.3, left=self, up-left=self
        let vals = [0.9, 0.2, 0.5, 0.3, 0.1, 0.5, 0.5, 0.5, 0.5];
        let img = GrayImage::<f64>::new(3, 3, vals.to_vec()).unwrap();
        let c = lrit_channel(&img, Direction::Up).unwrap();
        let expected = (1 << 2) + (1 << 3) + (1 << 4) + (1 << 5) + (1 << 6);
        assert_eq!(c.get(0, 0), expected);
        assert_eq!(c.data, naive(&img, Direction::Up));
    }

    #[test]
    fn matches_naive_on_random_images() {
        let mut rng = SeededRng::new(21);
        for _ in 0..200 {
            let img = GrayImage::<f64>::from_fn(16, 16, |_, _| (rng.uniform() * 8.0).floor() / 8.0).unwrap();
            let s = lrit_stack(&img).unwrap();
            for (c, d) in s.channels.iter().zip(Direction::ALL) {
                assert_eq!(c.data, naive(&img, d));
            }
        }
    }

    #[test]
    fn right_start_is_up_rotated_by_two() {
        let mut rng = SeededRng::new(3);
        let img = GrayImage::<f64>::from_fn(9, 7, |_, _| rng.uniform()).unwrap();
        let up = lrit_channel(&img, Direction::Up).unwrap();
        let right = lrit_channel(&img, Direction::Right).unwrap();
        for (&u, &r) in up.data.iter().zip(&right.data) {
            // ring bit k has weight 2^(k+1) for Up and 2^((k-2) mod 8 + 1) for Right
            let bits = (u >> 1) as u8;
            let mut rew = 0u16;
            for k in 0..8 {
                if bits & (1 << k) != 0 {
                    rew += 1 << ((k + 6) % 8 + 1);
                }
            }
            assert_eq!(rew, r);
        }
    }

    fn rotate_cw(img: &GrayImage<f64>) -> GrayImage<f64> {
        let (w, h) = (img.width(), img.height());
        // new width = h; new (x', y') = (h - 1 - y, x)
        GrayImage::from_fn(h, w, |xn, yn| img.get(yn, h - 1 - xn)).unwrap()
    }

    #[test]
    fn rotation_relabels_start_direction() {
        let mut rng = SeededRng::new(4);
        for _ in 0..20 {
            let img = GrayImage::<f64>::from_fn(5, 5, |_, _| rng.uniform()).unwrap();
            let rot = rotate_cw(&img);
            let before = lrit_stack(&img).unwrap();
            let after = lrit_stack(&rot).unwrap();
            // after a clockwise turn, what was "up" now points "right"
            for (i, d) in Direction::ALL.iter().enumerate() {
                let j = (i + 1) % 4;
                let src = &before.channels[i];
                for y in 0..5 {
                    for x in 0..5 {
                        assert_eq!(src.get(x, y), after.channels[j].get(4 - y, x), "{d}");
                    }
                }
            }
        }
    }

    #[test]
    fn monotone_invariance_and_complement() {
        let mut rng = SeededRng::new(5);
        let img = GrayImage::<f64>::from_fn(12, 10, |_, _| rng.uniform()).unwrap();
        let inc = img.map(|v| v.powf(2.2));
        assert_eq!(lrit_stack(&img).unwrap(), lrit_stack(&inc).unwrap());
        let dec = img.map(|v| 1.0 - v.sqrt());
        let a = lrit_channel(&img, Direction::Left).unwrap();
        let b = lrit_channel(&dec, Direction::Left).unwrap();
        for y in 1..9 {
            for x in 1..11 {
                assert_eq!(b.get(x, y), MAX_CODE - a.get(x, y));
            }
        }
    }

    #[test]
    fn shuffle_and_normalize() {
        let mut rng = SeededRng::new(6);
        let img = GrayImage::<f64>::from_fn(6, 6, |_, _| rng.uniform()).unwrap();
        let s = lrit_stack(&img).unwrap();
        assert_eq!(permute_stack(&s, [0, 1, 2, 3]), s);
        let a = shuffle_stack(&s, &mut SeededRng::new(1));
        let b = shuffle_stack(&s, &mut SeededRng::new(1));
        assert_eq!(a, b);
        for (c, d) in a.channels.iter().zip(a.order) {
            let k = Direction::ALL.iter().position(|&e| e == d).unwrap();
            assert_eq!(c, &s.channels[k]);
        }
        let stack = LritStack {
            channels: [0u16, 510, 256, 2].map(|v| LritChannel {
                width: 1,
                height: 1,
                data: vec![v],
            }),
            order: Direction::ALL,
        };
        let n = normalize_stack::<f64>(&stack);
        assert_eq!(n[0][0], 0.0);
        assert_eq!(n[1][0], 1.0);
        assert!((n[2][0] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn rejects_small() {
        let img = GrayImage::<f32>::filled(3, 3, 0.0).unwrap();
        assert!(lrit_channel(&img, Direction::Up).is_ok());
    }
}
