//! 3x3 "same" convolution with edge-replicated padding.
//!
//! The input is padded once; each block of output columns is then a sum of
//! shifted rows of the padded planes, accumulated in registers. Kernels are compiled
//! for several instruction sets and picked at runtime. Products are
//! accumulated with fused multiply-add in a fixed order, which is exact to the
//! same bits whether the hardware or the software fallback computes it.

use multiversion::multiversion;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3<T = f32> {
    pub in_c: usize,
    pub out_c: usize,
    /// `out_c x in_c x 3 x 3`, row-major: index `(o * in_c + c) * 9 + ky * 3 + kx`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Pads each `h x w` plane to `(h + 2) x (w + 2)` by replicating edges.
pub fn pad_edge<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![T::zero(); c * ph * pw];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * ph * pw..(ch + 1) * ph * pw];
        for py in 0..ph {
            let sy = py.saturating_sub(1).min(h - 1);
            let src = &plane[sy * w..(sy + 1) * w];
            let row = &mut dst[py * pw..(py + 1) * pw];
            row[0] = src[0];
            row[1..=w].copy_from_slice(src);
            row[w + 1] = src[w - 1];
        }
    }
    out
}

/// Adjoint of [`pad_edge`]: folds padded-grid gradients onto the original grid.
pub fn pad_edge_adjoint<T: Scalar>(dpad: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let src = &dpad[ch * ph * pw..(ch + 1) * ph * pw];
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for py in 0..ph {
            let sy = py.saturating_sub(1).min(h - 1);
            let s = &src[py * pw..(py + 1) * pw];
            let row = &mut plane[sy * w..(sy + 1) * w];
            row[0] = row[0] + s[0];
            for (r, &v) in row.iter_mut().zip(&s[1..=w]) {
                *r = *r + v;
            }
            row[w - 1] = row[w - 1] + s[w + 1];
        }
    }
    out
}

/// Accumulates one block of `L` output columns starting at `x0`.
#[inline(always)]
fn correlate_block<T: Scalar, const L: usize>(
    ko: &[T],
    b: T,
    inp: &[T],
    in_c: usize,
    rows: (usize, usize, usize),
    x0: usize,
    out: &mut [T],
) {
    let (ih, iw, y) = rows;
    let mut acc = [b; L];
    for c in 0..in_c {
        for ky in 0..3 {
            let start = (c * ih + y + ky) * iw + x0;
            let p = &inp[start..start + L + 2];
            let (k0, k1, k2) = (ko[c * 9 + ky * 3], ko[c * 9 + ky * 3 + 1], ko[c * 9 + ky * 3 + 2]);
            for j in 0..L {
                acc[j] = p[j + 2].mul_add(k2, p[j + 1].mul_add(k1, p[j].mul_add(k0, acc[j])));
            }
        }
    }
    out[x0..x0 + L].copy_from_slice(&acc);
}

/// `out[o, y, x] = init[o] + sum_{c, ky, kx} k[o, c, ky, kx] * inp[c, y + ky, x + kx]`
/// for an `oh x ow` output over `(oh + 2) x (ow + 2)` input planes.
#[allow(clippy::too_many_arguments)]
#[multiversion(targets("x86_64+avx512f+avx2+fma", "x86_64+avx2+fma", "aarch64+neon"))]
fn correlate<T: Scalar>(
    k: &[T],
    init: Option<&[T]>,
    inp: &[T],
    in_c: usize,
    out_c: usize,
    oh: usize,
    ow: usize,
    out: &mut [T],
) {
    let (ih, iw) = (oh + 2, ow + 2);
    for o in 0..out_c {
        let b = init.map_or(T::zero(), |b| b[o]);
        let ko = &k[o * in_c * 9..(o + 1) * in_c * 9];
        for y in 0..oh {
            let orow = &mut out[(o * oh + y) * ow..(o * oh + y + 1) * ow];
            let mut x0 = 0;
            while x0 + 64 <= ow {
                correlate_block::<T, 64>(ko, b, inp, in_c, (ih, iw, y), x0, orow);
                x0 += 64;
            }
            while x0 + 8 <= ow {
                correlate_block::<T, 8>(ko, b, inp, in_c, (ih, iw, y), x0, orow);
                x0 += 8;
            }
            if x0 < ow && ow >= 8 {
                // Overlapping final block; recomputed columns get identical values.
                correlate_block::<T, 8>(ko, b, inp, in_c, (ih, iw, y), ow - 8, orow);
                x0 = ow;
            }
            while x0 < ow {
                correlate_block::<T, 1>(ko, b, inp, in_c, (ih, iw, y), x0, orow);
                x0 += 1;
            }
        }
    }
}

/// Sum with sixteen independent partial sums, reduced in a fixed order.
fn plane_sum<T: Scalar>(v: &[T]) -> T {
    let mut lanes = [T::zero(); 16];
    let mut chunks = v.chunks_exact(16);
    for c in &mut chunks {
        for (l, &x) in lanes.iter_mut().zip(c) {
            *l = *l + x;
        }
    }
    let rest = chunks.remainder().iter().fold(T::zero(), |s, &x| s + x);
    lanes.iter().fold(rest, |s, &x| s + x)
}

/// `dw[o, c, ky, kx] += sum_{y, x} dout[o, y, x] * padded[c, y + ky, x + kx]`.
///
/// All nine taps of one `(o, c)` pair share each loaded chunk of `dout`.
#[multiversion(targets("x86_64+avx512f+avx2+fma", "x86_64+avx2+fma", "aarch64+neon"))]
fn weight_grad<T: Scalar>(in_c: usize, out_c: usize, padded: &[T], dout: &[T], h: usize, w: usize, dw: &mut [T]) {
    const L: usize = 16;
    let pw = w + 2;
    let plane = (h + 2) * pw;
    let full = w / L * L;
    for o in 0..out_c {
        let d_plane = &dout[o * h * w..(o + 1) * h * w];
        for c in 0..in_c {
            let p_plane = &padded[c * plane..(c + 1) * plane];
            let mut acc = [[T::zero(); L]; 9];
            let mut tail = [T::zero(); 9];
            for y in 0..h {
                let d_row = &d_plane[y * w..(y + 1) * w];
                let rows = &p_plane[y * pw..(y + 3) * pw];
                for x0 in (0..full).step_by(L) {
                    let d: &[T; L] = d_row[x0..x0 + L].try_into().unwrap();
                    for (t, a) in acc.iter_mut().enumerate() {
                        let at = (t / 3) * pw + x0 + t % 3;
                        let p: &[T; L] = rows[at..at + L].try_into().unwrap();
                        for j in 0..L {
                            a[j] = d[j].mul_add(p[j], a[j]);
                        }
                    }
                }
                for x in full..w {
                    for (t, a) in tail.iter_mut().enumerate() {
                        *a = d_row[x].mul_add(rows[(t / 3) * pw + x + t % 3], *a);
                    }
                }
            }
            for t in 0..9 {
                let i = (o * in_c + c) * 9 + t;
                dw[i] = dw[i] + plane_sum(&acc[t]) + tail[t];
            }
        }
    }
}

impl<T: Scalar> Conv3x3<T> {
    pub fn zeros(in_c: usize, out_c: usize) -> Self {
        Self {
            in_c,
            out_c,
            weight: vec![T::zero(); out_c * in_c * 9],
            bias: vec![T::zero(); out_c],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_c * 9
    }

    /// Returns `(output, padded input)`; the padded input is kept for the backward pass.
    pub fn forward(&self, input: &[T], h: usize, w: usize) -> (Vec<T>, Vec<T>) {
        let padded = pad_edge(input, self.in_c, h, w);
        let mut out = vec![T::zero(); self.out_c * h * w];
        correlate(&self.weight, Some(&self.bias), &padded, self.in_c, self.out_c, h, w, &mut out);
        (out, padded)
    }

    /// Accumulates weight/bias gradients into `dw`/`db` and, when
    /// `need_input` is set, returns the gradient with respect to the input.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        padded: &[T],
        dout: &[T],
        h: usize,
        w: usize,
        dw: &mut [T],
        db: &mut [T],
        need_input: bool,
    ) -> Option<Vec<T>> {
        let hw = h * w;
        weight_grad(self.in_c, self.out_c, padded, dout, h, w, dw);
        for (o, acc) in db.iter_mut().enumerate() {
            *acc = *acc + plane_sum(&dout[o * hw..(o + 1) * hw]);
        }
        if !need_input {
            return None;
        }
        // The padded-input gradient is a full correlation of the zero-padded
        // output gradient with the flipped, transposed kernel.
        let (zh, zw) = (h + 4, w + 4);
        let mut dz = vec![T::zero(); self.out_c * zh * zw];
        for o in 0..self.out_c {
            for y in 0..h {
                let src = &dout[(o * h + y) * w..(o * h + y + 1) * w];
                let at = (o * zh + y + 2) * zw + 2;
                dz[at..at + w].copy_from_slice(src);
            }
        }
        let mut flipped = vec![T::zero(); self.weight.len()];
        for o in 0..self.out_c {
            for c in 0..self.in_c {
                for t in 0..9 {
                    flipped[(c * self.out_c + o) * 9 + 8 - t] = self.weight[(o * self.in_c + c) * 9 + t];
                }
            }
        }
        let mut dpad = vec![T::zero(); self.in_c * (h + 2) * (w + 2)];
        correlate(&flipped, None, &dz, self.out_c, self.in_c, h + 2, w + 2, &mut dpad);
        Some(pad_edge_adjoint(&dpad, self.in_c, h, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn naive_conv(layer: &Conv3x3<f64>, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; layer.out_c * h * w];
        for o in 0..layer.out_c {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = layer.bias[o];
                    for c in 0..layer.in_c {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let sy = (y + ky - 1).clamp(0, h as isize - 1) as usize;
                                let sx = (x + kx - 1).clamp(0, w as isize - 1) as usize;
                                let wi = o * layer.in_c * 9 + c * 9 + (ky * 3 + kx) as usize;
                                acc += layer.weight[wi] * input[c * h * w + sy * w + sx];
                            }
                        }
                    }
                    out[o * h * w + y as usize * w + x as usize] = acc;
                }
            }
        }
        out
    }

    fn random_layer(rng: &mut SeededRng, in_c: usize, out_c: usize) -> Conv3x3<f64> {
        let mut l = Conv3x3::zeros(in_c, out_c);
        l.weight.iter_mut().for_each(|v| *v = rng.normal());
        l.bias.iter_mut().for_each(|v| *v = rng.normal());
        l
    }

    #[test]
    fn forward_matches_naive_loop() {
        let mut rng = SeededRng::new(1);
        for (c, o, h, w) in [(1, 3, 4, 4), (3, 2, 5, 7), (2, 1, 3, 3)] {
            let l = random_layer(&mut rng, c, o);
            let x: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
            let (fast, _) = l.forward(&x, h, w);
            let slow = naive_conv(&l, &x, h, w);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unpad_is_adjoint_of_pad() {
        // <pad(x), y> == <x, unpad(y)>
        let mut rng = SeededRng::new(2);
        let (c, h, w) = (2, 5, 6);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..c * (h + 2) * (w + 2)).map(|_| rng.normal()).collect();
        let lhs: f64 = pad_edge(&x, c, h, w).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(pad_edge_adjoint(&y, c, h, w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn f32_matches_f64_reference() {
        let mut rng = SeededRng::new(4);
        let (c, o, h, w) = (5, 8, 16, 64);
        let l = random_layer(&mut rng, c, o);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
        let l32 = Conv3x3 {
            in_c: c,
            out_c: o,
            weight: l.weight.iter().map(|&v| v as f32).collect(),
            bias: l.bias.iter().map(|&v| v as f32).collect(),
        };
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let slow = naive_conv(&l, &x, h, w);
        for (a, b) in l32.forward(&x32, h, w).0.iter().zip(&slow) {
            assert!((*a as f64 - b).abs() < 1e-4);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(3);
        let (c, o, h, w) = (2, 3, 4, 5);
        let l = random_layer(&mut rng, c, o);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
        let r: Vec<f64> = (0..o * h * w).map(|_| rng.normal()).collect();
        // objective sum(r * conv(x))
        let f = |l: &Conv3x3<f64>, x: &[f64]| -> f64 { l.forward(x, h, w).0.iter().zip(&r).map(|(a, b)| a * b).sum() };
        let (_, padded) = l.forward(&x, h, w);
        let mut dw = vec![0.0; l.weight.len()];
        let mut db = vec![0.0; o];
        let dx = l.backward(&padded, &r, h, w, &mut dw, &mut db, true).unwrap();
        let eps = 1e-6;
        for i in 0..l.weight.len() {
            let mut p = l.clone();
            p.weight[i] += eps;
            let mut m = l.clone();
            m.weight[i] -= eps;
            assert!(((f(&p, &x) - f(&m, &x)) / (2.0 * eps) - dw[i]).abs() < 1e-6);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            assert!(((f(&l, &xp) - f(&l, &xm)) / (2.0 * eps) - dx[i]).abs() < 1e-6);
        }
        for (i, &g) in db.iter().enumerate() {
            let want: f64 = r[i * h * w..(i + 1) * h * w].iter().sum();
            assert!((g - want).abs() < 1e-12);
        }
    }
}
