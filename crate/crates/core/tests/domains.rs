use proptest::prelude::*;
use rvms_core::domains::{classify_domains, polarity_score, Label, DEFAULT_BLUR_RADIUS, DEFAULT_TOP_FRAC};
use rvms_core::synth::{synth_vessels, Polarity};
use rvms_core::{GrayImage, SeededRng};

fn score(img: &GrayImage<f64>) -> f64 {
    polarity_score(img, DEFAULT_BLUR_RADIUS, DEFAULT_TOP_FRAC).unwrap().value
}

fn vessels(seed: u64, polarity: Polarity) -> GrayImage<f64> {
    synth_vessels(&mut SeededRng::new(seed), 64, 64, polarity, 0.03).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn complement_negates_score(seed in any::<u64>()) {
        let img = vessels(seed, Polarity::Bright);
        let s = score(&img);
        prop_assert!(s > 0.0);
        prop_assert!((score(&img.map(|v| 1.0 - v)) + s).abs() < 1e-9);
    }

    #[test]
    fn contrast_scaling_scales_score(seed in any::<u64>(), k in 0.1f64..1.0) {
        let img = vessels(seed, Polarity::Dark);
        let s = score(&img);
        prop_assert!(s < 0.0);
        let shrunk = img.map(|v| 0.5 + k * (v - 0.5));
        prop_assert!((score(&shrunk) - k * s).abs() < 1e-9);
    }
}

#[test]
fn mixed_targets_route_by_polarity() {
    let src: Vec<_> = (0..5).map(|i| vessels(i, Polarity::Bright)).collect();
    let targets = vec![
        ("b".to_string(), (10..15).map(|i| vessels(i, Polarity::Bright)).collect()),
        ("d".to_string(), (20..25).map(|i| vessels(i, Polarity::Dark)).collect::<Vec<_>>()),
    ];
    let labels = classify_domains(&src, &targets).unwrap();
    assert_eq!(labels[0].1.label, Label::Similar);
    assert_eq!(labels[1].1.label, Label::Dissimilar);
    assert!(labels[0].1.score > 0.0 && labels[1].1.score < 0.0);
}
