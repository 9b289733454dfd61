use proptest::prelude::*;
use rvms_core::nn::loss::mean_entropy;
use rvms_core::nn::{adam_step, dice_loss, kd_loss, AdamState, Checkpoint, SegNet, Tensor, DICE_SMOOTH};
use rvms_core::{BinaryMask, SeededRng};

fn input(rng: &mut SeededRng, c: usize, h: usize, w: usize) -> Tensor<f64> {
    Tensor::new(c, h, w, (0..c * h * w).map(|_| rng.uniform() - 0.5).collect()).unwrap()
}

/// `L = sum_i c_i p_i` with fixed random weights.
fn probe(net: &SegNet<f64>, x: &Tensor<f64>, c: &[f64]) -> f64 {
    net.predict_prob(x).unwrap().iter().zip(c).map(|(p, c)| p * c).sum()
}

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..20u64 {
        let mut rng = SeededRng::new(seed);
        let (ch, h, w) = (2, 7, 6);
        let mut net = SegNet::<f64>::with_widths(ch, &[3, 4], &mut rng);
        let x = input(&mut rng, ch, h, w);
        let coef: Vec<f64> = (0..h * w).map(|_| rng.uniform() - 0.5).collect();
        let (_, tape) = net.forward(&x).unwrap();
        let grads = net.backward(&tape, &coef).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let eps = 1e-5;
        for (ti, g) in analytic.iter().enumerate() {
            for k in [0, g.len() / 2, g.len() - 1] {
                let orig = net.params()[ti][k];
                net.params_mut()[ti][k] = orig + eps;
                let up = probe(&net, &x, &coef);
                net.params_mut()[ti][k] = orig - eps;
                let down = probe(&net, &x, &coef);
                net.params_mut()[ti][k] = orig;
                let fd = (up - down) / (2.0 * eps);
                let tol = 1e-6 + 1e-4 * fd.abs().max(g[k].abs());
                assert!((fd - g[k]).abs() < tol, "seed {seed} tensor {ti} idx {k}: fd {fd} vs {}", g[k]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dice_loss_in_unit_interval(seed in any::<u64>(), n in 1usize..64) {
        let mut r = SeededRng::new(seed);
        let p: Vec<f64> = (0..n).map(|_| r.uniform()).collect();
        let g = BinaryMask::from_fn(n, 1, |_, _| r.uniform() < 0.3);
        let (l, _) = dice_loss(&p, &g, DICE_SMOOTH).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
    }

    #[test]
    fn kd_loss_bounded_below_by_teacher_entropy(seed in any::<u64>(), n in 1usize..64) {
        let mut r = SeededRng::new(seed);
        let s: Vec<f64> = (0..n).map(|_| r.uniform()).collect();
        let t: Vec<f64> = (0..n).map(|_| r.uniform()).collect();
        let (l, _) = kd_loss(&s, &t).unwrap();
        prop_assert!(l >= mean_entropy(&t) - 1e-9);
        let (self_l, _) = kd_loss(&t, &t).unwrap();
        prop_assert!((self_l - mean_entropy(&t)).abs() < 1e-6);
    }
}

#[test]
fn adam_overfits_one_image() {
    let mut rng = SeededRng::new(7);
    let (h, w) = (12, 12);
    let mut net = SegNet::<f32>::new(1, &mut rng);
    let label = BinaryMask::from_fn(w, h, |x, _| (4..7).contains(&x));
    let x = Tensor::new(1, h, w, label.data().iter().map(|&b| if b { 0.3 } else { -0.3 }).collect()).unwrap();
    let mut opt = AdamState::new(&net, 1e-2);
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..50 {
        let (p, tape) = net.forward(&x).unwrap();
        let (l, g) = dice_loss(&p, &label, DICE_SMOOTH).unwrap();
        first.get_or_insert(l);
        last = l;
        let grads = net.backward(&tape, &g).unwrap();
        adam_step(&mut net, &grads, &mut opt).unwrap();
    }
    assert!(last < 0.1 && last < first.unwrap(), "loss {first:?} -> {last}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let net = SegNet::<f32>::new(5, &mut SeededRng::new(3));
    let ck = Checkpoint {
        net: net.clone(),
        config_json: "{\"seed\":3}".into(),
    };
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    assert_eq!(back.net.checksum(), net.checksum());
    assert_eq!(back.config_json, ck.config_json);
    let mut bytes = ck.to_bytes();
    bytes[0] ^= 1;
    assert!(Checkpoint::from_bytes(&bytes).is_err());
    assert!(Checkpoint::from_bytes(&ck.to_bytes()[..20]).is_err());
}
