//! Construction of the styled views of each source sample.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::{BinaryMask, GrayImage};
use crate::lrit::{lrit_stack, normalize_stack, shuffle_stack};
use crate::nn::Tensor;
use crate::rng::SeededRng;
use crate::sat::bezier::DEFAULT_SAMPLES;
use crate::sat::fourier::style_transfer_resampled;
use crate::sat::{apply_intensity_map, sample_map, MapMode};
use crate::scalar::Scalar;

use super::config::{LambdaMode, TrainConfig};

/// Which construction produced a network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamKind {
    Raw,
    SimAug,
    DisAug,
    SimTransfer,
    DisTransfer,
}

/// Teacher a stream is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Sim,
    Dis,
}

impl StreamKind {
    pub fn group(self) -> Group {
        match self {
            StreamKind::Raw | StreamKind::SimAug | StreamKind::SimTransfer => Group::Sim,
            StreamKind::DisAug | StreamKind::DisTransfer => Group::Dis,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stream<T = f32> {
    pub kind: StreamKind,
    pub image: GrayImage<T>,
    pub input: Tensor<T>,
}

/// One source sample with all of its views; every view shares the label.
#[derive(Debug, Clone)]
pub struct Sample<T = f32> {
    pub label: BinaryMask,
    pub streams: Vec<Stream<T>>,
}

impl<T> Sample<T> {
    pub fn kinds(&self) -> Vec<StreamKind> {
        self.streams.iter().map(|s| s.kind).collect()
    }
}

/// Pairs an image with its LRIT planes. `rng` shuffles the channel order;
/// `None` keeps the canonical order.
pub fn network_input<T: Scalar>(img: &GrayImage<T>, with_lrit: bool, rng: Option<&mut SeededRng>) -> Result<Tensor<T>> {
    let mut t = if !with_lrit {
        Tensor::from_planes(img, &[])?
    } else {
        let mut stack = lrit_stack(img)?;
        if let Some(r) = rng {
            stack = shuffle_stack(&stack, r);
        }
        Tensor::from_planes(img, &normalize_stack(&stack))?
    };
    let c = T::lit(INPUT_CENTER);
    t.data.iter_mut().for_each(|v| *v = *v - c);
    Ok(t)
}

/// Subtracted from every input plane so that the network sees values centred on zero.
pub const INPUT_CENTER: f64 = 0.5;

fn draw_lambda(mode: LambdaMode, rng: &mut SeededRng) -> f64 {
    match mode {
        LambdaMode::Random => rng.uniform_open(),
        LambdaMode::Fixed(l) => l,
    }
}

/// Builds every enabled view of one source image.
pub fn build_sample<T: Scalar>(
    image: &GrayImage<T>,
    label: &BinaryMask,
    sim_targets: &[GrayImage<T>],
    dis_targets: &[GrayImage<T>],
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<Sample<T>> {
    let ab = cfg.ablations;
    let mut views = vec![(StreamKind::Raw, image.clone())];
    if !ab.no_sa {
        for (kind, mode) in [(StreamKind::SimAug, MapMode::Similar), (StreamKind::DisAug, MapMode::Dissimilar)] {
            let map = sample_map(rng, mode, DEFAULT_SAMPLES)?;
            views.push((kind, apply_intensity_map(image, &map)));
        }
    }
    if !ab.no_st {
        for (kind, pool) in [(StreamKind::SimTransfer, sim_targets), (StreamKind::DisTransfer, dis_targets)] {
            if pool.is_empty() {
                continue;
            }
            let donor = &pool[rng.index(pool.len())];
            let lambda = draw_lambda(cfg.lambda_mode, rng);
            views.push((kind, style_transfer_resampled(image, donor, cfg.alpha, lambda)?));
        }
    }
    let streams = views
        .into_iter()
        .map(|(kind, image)| {
            let input = network_input(&image, !ab.no_lrit, Some(rng))?;
            Ok(Stream { kind, image, input })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sample {
        label: label.clone(),
        streams,
    })
}

/// Builds the samples at `indices`. Each sample draws from its own stream
/// `rng.fork(index)`, so the result does not depend on evaluation order.
pub fn build_batch<T: Scalar>(
    source: &[(GrayImage<T>, BinaryMask)],
    indices: &[usize],
    sim_targets: &[GrayImage<T>],
    dis_targets: &[GrayImage<T>],
    cfg: &TrainConfig,
    rng: &SeededRng,
) -> Result<Vec<Sample<T>>> {
    use rayon::prelude::*;
    indices
        .par_iter()
        .map(|&i| {
            let (img, label) = &source[i];
            build_sample(img, label, sim_targets, dis_targets, cfg, &mut rng.fork(i as u64))
        })
        .collect()
}
