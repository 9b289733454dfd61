use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::conv::Conv3x3;
use super::tensor::Tensor;

/// Hidden widths of the default network: `C_in -> 8 -> 16 -> 8 -> 1`.
pub const DEFAULT_WIDTHS: [usize; 3] = [8, 16, 8];

/// Initial output logit: a foreground prior of about 12%, the typical vessel
/// fraction. Starting near 0.5 everywhere lets Dice drive a network that has
/// not yet found any edge features into predicting foreground everywhere.
pub const OUTPUT_BIAS_INIT: f64 = -2.0;

/// Stack of 3x3 convolutions with ReLU between them and a sigmoid on the
/// single output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SegNet<T = f32> {
    pub layers: Vec<Conv3x3<T>>,
    /// Bumped on every parameter update; tapes remember the value they saw.
    generation: u64,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T = f32> {
    generation: u64,
    height: usize,
    width: usize,
    /// Edge-padded input of each layer.
    padded: Vec<Vec<T>>,
    /// Post-ReLU activations of the hidden layers.
    hidden: Vec<Vec<T>>,
    pub logits: Vec<T>,
    pub prob: Vec<T>,
}

/// Parameter gradients, one `(weight, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T = f32> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> SegNet<T> {
    /// He-initialised network with the default widths.
    pub fn new(in_c: usize, rng: &mut SeededRng) -> Self {
        Self::with_widths(in_c, &DEFAULT_WIDTHS, rng)
    }

    /// Weights drawn `N(0, 2 / fan_in)`. Hidden biases start at zero and the
    /// output bias at [`OUTPUT_BIAS_INIT`].
    pub fn with_widths(in_c: usize, widths: &[usize], rng: &mut SeededRng) -> Self {
        let mut net = Self::zeros(in_c, widths);
        for layer in &mut net.layers {
            let sd = (2.0 / layer.fan_in() as f64).sqrt();
            for w in &mut layer.weight {
                *w = T::lit(sd * rng.normal());
            }
        }
        if let Some(out) = net.layers.last_mut() {
            out.bias.fill(T::lit(OUTPUT_BIAS_INIT));
        }
        net
    }

    pub fn zeros(in_c: usize, widths: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(widths.len() + 1);
        let mut c = in_c;
        for &w in widths.iter().chain(std::iter::once(&1)) {
            layers.push(Conv3x3::zeros(c, w));
            c = w;
        }
        Self {
            layers,
            generation: 0,
        }
    }

    pub fn from_layers(layers: Vec<Conv3x3<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("layers", "network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_c != pair[1].in_c {
                return Err(Error::shape(pair[0].out_c, pair[1].in_c));
            }
        }
        let last = layers.last().unwrap();
        if last.out_c != 1 {
            return Err(Error::shape(1, last.out_c));
        }
        for l in &layers {
            if l.weight.len() != l.out_c * l.in_c * 9 || l.bias.len() != l.out_c {
                return Err(Error::shape(l.out_c * l.in_c * 9, l.weight.len()));
            }
        }
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_c
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn touch(&mut self) {
        self.generation += 1;
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// FNV-1a over the parameter bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in p {
                for b in v.as_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Vec<T>, Tape<T>)> {
        if input.channels != self.in_channels() {
            return Err(Error::shape(
                format!("{} input channels", self.in_channels()),
                input.channels,
            ));
        }
        let (h, w) = (input.height, input.width);
        let n = self.layers.len();
        let mut padded = Vec::with_capacity(n);
        let mut hidden = Vec::with_capacity(n - 1);
        let mut act = std::borrow::Cow::Borrowed(input.data.as_slice());
        let mut logits = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut z, p) = layer.forward(&act, h, w);
            padded.push(p);
            if i + 1 < n {
                for v in &mut z {
                    *v = v.max(T::zero());
                }
                hidden.push(z.clone());
                act = std::borrow::Cow::Owned(z);
            } else {
                logits = z;
            }
        }
        let prob: Vec<T> = logits.iter().map(|&z| sigmoid(z)).collect();
        let tape = Tape {
            generation: self.generation,
            height: h,
            width: w,
            padded,
            hidden,
            logits,
            prob: prob.clone(),
        };
        Ok((prob, tape))
    }

    /// Forward pass without keeping a tape.
    pub fn predict_prob(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.forward(input)?.0)
    }

    /// Gradients from `dL/dprob`.
    pub fn backward(&self, tape: &Tape<T>, dprob: &[T]) -> Result<Grads<T>> {
        if dprob.len() != tape.prob.len() {
            return Err(Error::shape(tape.prob.len(), dprob.len()));
        }
        // sigmoid'(z) = sigmoid(z) * sigmoid(-z); unlike p * (1 - p) this
        // stays nonzero after the probability rounds to exactly 1.
        let dlogits: Vec<T> = dprob
            .iter()
            .zip(&tape.logits)
            .map(|(&g, &z)| g * sigmoid(z) * sigmoid(-z))
            .collect();
        self.backward_logits(tape, &dlogits)
    }

    /// Gradients from `dL/dlogits`.
    pub fn backward_logits(&self, tape: &Tape<T>, dlogits: &[T]) -> Result<Grads<T>> {
        if tape.generation != self.generation {
            return Err(Error::StaleTape {
                recorded: tape.generation,
                current: self.generation,
            });
        }
        if dlogits.len() != tape.logits.len() {
            return Err(Error::shape(tape.logits.len(), dlogits.len()));
        }
        let (h, w) = (tape.height, tape.width);
        let mut grads = Grads::zeros_like(self);
        let mut delta = dlogits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let (dw, db) = &mut grads.layers[i];
            let dinput = self.layers[i].backward(&tape.padded[i], &delta, h, w, dw, db, i > 0);
            if let Some(mut d) = dinput {
                for (g, &a) in d.iter_mut().zip(&tape.hidden[i - 1]) {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                }
                delta = d;
            }
        }
        Ok(grads)
    }
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(net: &SegNet<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.weight.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, &o)| *a = *a + o);
            b.iter_mut().zip(ob).for_each(|(a, &o)| *a = *a + o);
        }
    }

    pub fn scale(&mut self, k: T) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = *v * k);
        }
    }

    pub fn max_abs(&self) -> T {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(rng: &mut SeededRng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::new(c, h, w, (0..c * h * w).map(|_| rng.uniform()).collect()).unwrap()
    }

    /// Independent scalar-loop forward pass.
    fn reference_forward(net: &SegNet<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let (h, w) = (x.height as isize, x.width as isize);
        let mut act = x.data.clone();
        let n = net.layers.len();
        for (li, l) in net.layers.iter().enumerate() {
            let mut out = vec![0.0; l.out_c * (h * w) as usize];
            for o in 0..l.out_c {
                for y in 0..h {
                    for xx in 0..w {
                        let mut s = l.bias[o];
                        for c in 0..l.in_c {
                            for ky in -1..=1isize {
                                for kx in -1..=1isize {
                                    let sy = (y + ky).clamp(0, h - 1);
                                    let sx = (xx + kx).clamp(0, w - 1);
                                    let wv = l.weight[o * l.in_c * 9 + c * 9 + ((ky + 1) * 3 + kx + 1) as usize];
                                    s += wv * act[(c as isize * h * w + sy * w + sx) as usize];
                                }
                            }
                        }
                        out[(o as isize * h * w + y * w + xx) as usize] = if li + 1 < n { s.max(0.0) } else { s };
                    }
                }
            }
            act = out;
        }
        act.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect()
    }

    #[test]
    fn zero_net_gives_half() {
        let net = SegNet::<f32>::zeros(5, &DEFAULT_WIDTHS);
        let mut rng = SeededRng::new(0);
        let x = input(&mut rng, 5, 6, 7);
        let x32 = Tensor::new(5, 6, 7, x.data.iter().map(|&v| v as f32).collect()).unwrap();
        let (p, _) = net.forward(&x32).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
        let (p2, _) = net.forward(&x32.scale(2.0)).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = SeededRng::new(1);
        let net = SegNet::<f64>::with_widths(2, &[3, 2], &mut rng);
        let x = input(&mut rng, 2, 4, 4);
        let (p, _) = net.forward(&x).unwrap();
        let r = reference_forward(&net, &x);
        for (a, b) in p.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
        let full = SegNet::<f64>::new(5, &mut rng);
        let x = input(&mut rng, 5, 4, 4);
        let (p, _) = full.forward(&x).unwrap();
        for (a, b) in p.iter().zip(reference_forward(&full, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn output_in_open_unit_interval_and_shape_checked() {
        let mut rng = SeededRng::new(2);
        let net = SegNet::<f32>::new(1, &mut rng);
        let x = Tensor::new(1, 8, 8, vec![0.3f32; 64]).unwrap();
        let (p, _) = net.forward(&x).unwrap();
        assert_eq!(p.len(), 64);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(net.forward(&Tensor::zeros(5, 8, 8)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads_and_linearity() {
        let mut rng = SeededRng::new(3);
        let net = SegNet::<f64>::with_widths(2, &[3, 4], &mut rng);
        let x = input(&mut rng, 2, 5, 5);
        let (_, tape) = net.forward(&x).unwrap();
        let g0 = net.backward(&tape, &[0.0; 25]).unwrap();
        assert_eq!(g0.max_abs(), 0.0);
        let a: Vec<f64> = (0..25).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..25).map(|_| rng.normal()).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let mut ga = net.backward(&tape, &a).unwrap();
        let gb = net.backward(&tape, &b).unwrap();
        let gab = net.backward(&tape, &ab).unwrap();
        ga.add_assign(&gb);
        for (s, t) in ga.tensors().iter().zip(gab.tensors()) {
            for (u, v) in s.iter().zip(t) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = SeededRng::new(4);
        let mut net = SegNet::<f32>::new(1, &mut rng);
        let x = Tensor::new(1, 4, 4, vec![0.5f32; 16]).unwrap();
        let (_, tape) = net.forward(&x).unwrap();
        net.touch();
        assert!(matches!(net.backward(&tape, &[0.0; 16]), Err(Error::StaleTape { .. })));
    }

    #[test]
    fn checksum_tracks_parameters() {
        let mut rng = SeededRng::new(5);
        let a = SegNet::<f32>::new(1, &mut rng);
        let mut b = a.clone();
        assert_eq!(a.checksum(), b.checksum());
        b.layers[1].bias[0] = 1e-3;
        assert_ne!(a.checksum(), b.checksum());
    }
}
