use proptest::prelude::*;
use rvms_core::metrics::{boundary, dice_pct, hausdorff, hd95, EvalReport, EvalRow};
use rvms_core::{BinaryMask, SeededRng};

fn random_mask(seed: u64, w: usize, h: usize, p: f64) -> BinaryMask {
    let mut r = SeededRng::new(seed);
    BinaryMask::from_fn(w, h, |_, _| r.uniform() < p)
}

fn boundary_points(m: &BinaryMask) -> Vec<(f64, f64)> {
    let b = boundary(m);
    let mut out = vec![];
    for y in 0..b.height() {
        for x in 0..b.width() {
            if b.get(x, y) {
                out.push((x as f64, y as f64));
            }
        }
    }
    out
}

/// Directed nearest distances pooled both ways, nearest-rank percentile.
fn brute_percentile(a: &BinaryMask, b: &BinaryMask, q: f64) -> f64 {
    let (pa, pb) = (boundary_points(a), boundary_points(b));
    let nearest = |p: &(f64, f64), set: &[(f64, f64)]| {
        set.iter().map(|s| ((p.0 - s.0).powi(2) + (p.1 - s.1).powi(2)).sqrt()).fold(f64::INFINITY, f64::min)
    };
    let mut d: Vec<f64> = pa.iter().map(|p| nearest(p, &pb)).chain(pb.iter().map(|p| nearest(p, &pa))).collect();
    d.sort_by(f64::total_cmp);
    let rank = (q * d.len() as f64).ceil() as usize;
    d[rank.max(1) - 1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hd95_matches_brute_force(s1 in any::<u64>(), s2 in any::<u64>(), w in 2usize..20, h in 2usize..20) {
        let (a, b) = (random_mask(s1, w, h, 0.3), random_mask(s2, w, h, 0.2));
        prop_assume!(a.count() > 0 && b.count() > 0);
        prop_assert!((hd95(&a, &b).unwrap() - brute_percentile(&a, &b, 0.95)).abs() < 1e-9);
        prop_assert!((hausdorff(&a, &b).unwrap() - brute_percentile(&a, &b, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn metrics_are_symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (random_mask(s1, 16, 12, 0.4), random_mask(s2, 16, 12, 0.1));
        let d = dice_pct(&a, &b).unwrap();
        prop_assert!((0.0..=100.0).contains(&d));
        prop_assert_eq!(d, dice_pct(&b, &a).unwrap());
        prop_assert_eq!(hd95(&a, &b).unwrap(), hd95(&b, &a).unwrap());
        prop_assert_eq!(dice_pct(&a, &a).unwrap(), 100.0);
        prop_assert_eq!(hd95(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn empty_mask_conventions() {
    let e = BinaryMask::empty(6, 8);
    let f = random_mask(3, 6, 8, 0.5);
    assert_eq!(dice_pct(&e, &e).unwrap(), 100.0);
    assert_eq!(hd95(&e, &e).unwrap(), 0.0);
    assert_eq!(dice_pct(&e, &f).unwrap(), 0.0);
    assert_eq!(hd95(&e, &f).unwrap(), 10.0);
    assert!(dice_pct(&e, &BinaryMask::empty(6, 7)).is_err());
}

#[test]
fn report_uses_sample_deviation() {
    let gt = random_mask(1, 10, 10, 0.5);
    let pairs: Vec<_> = (0..4).map(|i| (random_mask(10 + i, 10, 10, 0.5), gt.clone())).collect();
    let row = EvalRow::from_pairs("t", &pairs).unwrap();
    let d: Vec<f64> = pairs.iter().map(|(p, g)| dice_pct(p, g).unwrap()).collect();
    let m = d.iter().sum::<f64>() / 4.0;
    let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((row.dice_mean - m).abs() < 1e-12 && (row.dice_sd - sd).abs() < 1e-12);
    let rep = EvalReport::from_rows(vec![row.clone(), EvalRow { domain_id: "u".into(), dice_mean: 50.0, ..row }]);
    assert!((rep.average_dice - (m + 50.0) / 2.0).abs() < 1e-12);
    assert!(rep.to_csv().starts_with(EvalReport::CSV_HEADER));
}
