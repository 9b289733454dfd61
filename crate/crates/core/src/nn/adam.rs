use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::net::{Grads, SegNet};

pub const DEFAULT_LR: f64 = 1e-3;

/// Bias-corrected Adam with per-tensor moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &SegNet<T>, lr: f64) -> Self {
        let zeros: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One update. Gradients are validated before any parameter changes, so a
/// non-finite gradient leaves both the network and the state untouched.
pub fn adam_step<T: Scalar>(net: &mut SegNet<T>, grads: &Grads<T>, state: &mut AdamState<T>) -> Result<()> {
    let gs = grads.tensors();
    if gs.len() != state.m.len() {
        return Err(Error::shape(state.m.len(), gs.len()));
    }
    for (t, g) in gs.iter().enumerate() {
        if g.len() != state.m[t].len() {
            return Err(Error::shape(state.m[t].len(), g.len()));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { tensor: t, index: i });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let c1 = T::lit(1.0 - state.beta1.powi(t));
    let c2 = T::lit(1.0 - state.beta2.powi(t));
    let lr = T::lit(state.lr);
    let eps = T::lit(state.eps);
    for (k, p) in net.params_mut().into_iter().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            let g = gs[k][i];
            m[i] = b1 * m[i] + one_b1 * g;
            v[i] = b2 * v[i] + one_b2 * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    net.touch();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut rng = SeededRng::new(1);
        let mut net = SegNet::<f64>::new(1, &mut rng);
        let before = net.clone();
        let mut st = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &Grads::zeros_like(&before), &mut st).unwrap();
        assert_eq!(net.layers, before.layers);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        let mut rng = SeededRng::new(2);
        let mut net = SegNet::<f64>::with_widths(1, &[2], &mut rng);
        let before = net.clone();
        let mut g = Grads::zeros_like(&net);
        for (w, b) in &mut g.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = 3.0 * rng.normal());
        }
        let mut st = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &g, &mut st).unwrap();
        for ((p, q), gr) in net.params().iter().zip(before.params()).zip(g.tensors()) {
            for i in 0..p.len() {
                let step = q[i] - p[i];
                assert!((step - 1e-3 * gr[i].signum()).abs() < 1e-9, "{step}");
            }
        }
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut rng = SeededRng::new(3);
        let mut a = SegNet::<f32>::new(5, &mut rng);
        let mut b = a.clone();
        let mut g = Grads::zeros_like(&a);
        g.layers[0].0.iter_mut().for_each(|v| *v = rng.normal() as f32);
        let (mut sa, mut sb) = (AdamState::new(&a, 1e-3), AdamState::new(&b, 1e-3));
        for _ in 0..3 {
            adam_step(&mut a, &g, &mut sa).unwrap();
            adam_step(&mut b, &g, &mut sb).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut rng = SeededRng::new(4);
        let mut net = SegNet::<f32>::new(1, &mut rng);
        let before = net.clone();
        let mut g = Grads::zeros_like(&net);
        g.layers[2].1[3] = f32::NAN;
        let mut st = AdamState::new(&net, 1e-3);
        let err = adam_step(&mut net, &g, &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { tensor: 5, index: 3 }));
        assert_eq!(net, before);
        assert_eq!(st.step, 0);
    }
}
