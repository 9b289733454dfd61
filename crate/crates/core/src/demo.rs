//! Desk-scale benchmark: a bright source, a bright target with different
//! vessel statistics, and a dark target. Compares a source-only network
//! with the dual-teacher student.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dataset::{load_dataset, write_dataset, Role};
use crate::domains::DomainLabel;
use crate::dtkd::{
    cluster_targets, evaluate, DomainLabels, train_source_only, train_with, write_run_dir, Ablations, RunOutput, TrainConfig,
    TrainData, TrainLogRecord,
};
use crate::error::{Error, Result};
use crate::image::{quantize_u8, BinaryMask, GrayImage};
use crate::metrics::{EvalReport, EvalRow};
use crate::nn::write_checkpoint;
use crate::rng::SeededRng;
use crate::synth::{synth_vessels_with, Polarity, SynthConfig};

pub const SOURCE_ID: &str = "source";
pub const BRIGHT_TARGET_ID: &str = "target_bright";
pub const DARK_TARGET_ID: &str = "target_dark";

/// One synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainRecipe {
    pub id: &'static str,
    pub polarity: Polarity,
    pub n: usize,
    pub noise_sd: f64,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoConfig {
    pub size: usize,
    pub source: DomainRecipe,
    pub targets: Vec<DomainRecipe>,
    pub train: TrainConfig,
}

impl DemoConfig {
    pub fn new(seed: u64) -> Self {
        let source = DomainRecipe {
            id: SOURCE_ID,
            polarity: Polarity::Bright,
            n: 40,
            noise_sd: 0.03,
            synth: SynthConfig::default(),
        };
        let bright = DomainRecipe {
            id: BRIGHT_TARGET_ID,
            polarity: Polarity::Bright,
            n: 20,
            noise_sd: 0.05,
            synth: SynthConfig {
                roots: (4, 7),
                root_width: (1.5, 3.0),
                taper: (0.6, 0.75),
                wiggle: 0.3,
                vessel_level: (0.6, 0.9),
                background_level: (0.15, 0.45),
                shading: 0.25,
                ..SynthConfig::default()
            },
        };
        let dark = DomainRecipe {
            id: DARK_TARGET_ID,
            polarity: Polarity::Dark,
            n: 20,
            noise_sd: 0.04,
            synth: SynthConfig {
                shading: 0.2,
                ..SynthConfig::default()
            },
        };
        Self {
            size: 64,
            source,
            targets: vec![bright, dark],
            train: TrainConfig {
                seed,
                ..TrainConfig::desk()
            },
        }
    }
}

pub type Labeled = Vec<(GrayImage<f32>, BinaryMask)>;

#[derive(Debug, Clone)]
pub struct DemoData {
    pub source: Labeled,
    /// Target images with labels; labels are used only for evaluation.
    pub targets: Vec<(String, Labeled)>,
}

/// Snaps every pixel to the 8-bit level a PNG round trip would give.
fn quantize(img: &GrayImage<f32>) -> GrayImage<f32> {
    let scale = 1.0 / 255.0;
    img.map(|v| (quantize_u8(v as f64) as f64 * scale) as f32)
}

/// Generates every domain from its own stream of `seed`. Pixels are
/// quantized to 8 bits, so the data equal what [`demo`] reads back from disk.
pub fn generate(cfg: &DemoConfig) -> Result<DemoData> {
    let base = SeededRng::new(cfg.train.seed).fork(0xda7a);
    let make = |k: u64, r: &DomainRecipe| -> Result<Labeled> {
        let mut rng = base.fork(k);
        (0..r.n)
            .map(|_| {
                let (img, mask) = synth_vessels_with(&r.synth, &mut rng, cfg.size, cfg.size, r.polarity, r.noise_sd)?;
                Ok((quantize(&img), mask))
            })
            .collect()
    };
    let source = make(0, &cfg.source)?;
    let targets = cfg
        .targets
        .iter()
        .enumerate()
        .map(|(k, r)| Ok((r.id.to_string(), make(k as u64 + 1, r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DemoData { source, targets })
}

fn images(pairs: &[(GrayImage<f32>, BinaryMask)]) -> Vec<GrayImage<f32>> {
    pairs.iter().map(|(i, _)| i.clone()).collect()
}

/// Clusters the targets and assembles the training pools.
pub fn prepare(data: &DemoData) -> Result<(DomainLabels, TrainData<f32>)> {
    let targets = data.targets.iter().map(|(id, p)| (id.clone(), images(p))).collect();
    let (labels, sim_targets, dis_targets) = cluster_targets(&images(&data.source), targets)?;
    Ok((
        labels,
        TrainData {
            source: data.source.clone(),
            sim_targets,
            dis_targets,
        },
    ))
}

/// Trains the dual-teacher pipeline on `data` and evaluates the student.
pub fn run_dtkd(
    cfg: &TrainConfig,
    data: &DemoData,
    on_epoch: impl FnMut(&TrainLogRecord),
) -> Result<(RunOutput, EvalReport)> {
    let (labels, train_data) = prepare(data)?;
    let (trio, logs) = train_with(cfg, &train_data, on_epoch)?;
    let report = evaluate(&trio.student.net, &data.targets, cfg.threshold)?;
    Ok((RunOutput { trio, logs, labels }, report))
}

/// Trains one ablated variant on the demo benchmark and returns its report.
pub fn ablation_trial(seed: u64, ablations: Ablations) -> Result<EvalReport> {
    let mut cfg = DemoConfig::new(seed);
    cfg.train.ablations = ablations;
    let data = generate(&cfg)?;
    Ok(run_dtkd(&cfg.train, &data, |_| {})?.1)
}

/// One row of the method comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    #[serde(flatten)]
    pub row: EvalRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub labels: Vec<(String, DomainLabel)>,
    pub rows: Vec<MethodRow>,
}

impl DemoReport {
    pub const CSV_HEADER: &'static str = "method,domain_id,n,dice_mean,dice_sd,hd95_mean,hd95_sd";

    pub fn get(&self, method: &str, domain_id: &str) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.row.domain_id == domain_id)
            .map(|r| &r.row)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for MethodRow { method, row: r } in &self.rows {
            let _ = writeln!(
                s,
                "{method},{},{},{:.4},{:.4},{:.4},{:.4}",
                r.domain_id, r.n, r.dice_mean, r.dice_sd, r.hd95_mean, r.hd95_sd
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<12} {:<16} {:>4} {:>16} {:>16}\n", "method", "domain", "n", "Dice[%]", "HD95[px]");
        for MethodRow { method, row: r } in &self.rows {
            let _ = writeln!(
                s,
                "{method:<12} {:<16} {:>4} {:>8.2} ± {:<5.2} {:>8.2} ± {:<5.2}",
                r.domain_id, r.n, r.dice_mean, r.dice_sd, r.hd95_mean, r.hd95_sd
            );
        }
        s
    }
}

pub const SOURCE_ONLY: &str = "source_only";
pub const DTKD: &str = "dtkd";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes the datasets, trains both arms and writes:
///
/// ```text
/// out/data/{source,target_bright,target_dark}/{images,labels}/
/// out/dtkd/{t_sim,t_dis,student}.ckpt, log.jsonl, labels.json
/// out/source_only/student.ckpt
/// out/report.csv
/// ```
///
/// Training reads the datasets back from disk, so the quantized images are
/// what both arms see.
pub fn demo(seed: u64, out: impl AsRef<Path>, mut progress: impl FnMut(&str)) -> Result<DemoReport> {
    let out = out.as_ref();
    let cfg = DemoConfig::new(seed);
    let generated = generate(&cfg)?;
    let data_dir = out.join("data");
    write_dataset(data_dir.join(SOURCE_ID), &generated.source, true)?;
    for (id, pairs) in &generated.targets {
        write_dataset(data_dir.join(id), pairs, true)?;
    }
    let source = load_dataset(data_dir.join(SOURCE_ID))?.load_labeled::<f32>()?;
    let targets = generated
        .targets
        .iter()
        .map(|(id, _)| {
            let d = load_dataset(data_dir.join(id))?.with_role(Role::Target)?;
            Ok((id.clone(), d.load_labeled::<f32>()?))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = DemoData { source, targets };

    progress("training source-only baseline");
    let (baseline, _) = train_source_only(&cfg.train, &data.source)?;
    let so_dir = out.join("source_only");
    std::fs::create_dir_all(&so_dir).map_err(io(&so_dir))?;
    write_checkpoint(&baseline, &cfg.train.to_json(), so_dir.join("student.ckpt"))?;
    let so_report = evaluate(&baseline, &data.targets, cfg.train.threshold)?;

    progress("training dual teachers and student");
    let total = cfg.train.total_epochs;
    let (run, dtkd_report) = run_dtkd(&cfg.train, &data, |r| {
        if r.epoch % 10 == 0 || r.epoch == total {
            progress(&format!("epoch {}/{} total loss {:.4}", r.epoch, total, r.total));
        }
    })?;
    write_run_dir(out.join("dtkd"), &cfg.train, &run)?;

    let mut rows = Vec::new();
    for (method, rep) in [(SOURCE_ONLY, &so_report), (DTKD, &dtkd_report)] {
        for row in &rep.rows {
            rows.push(MethodRow {
                method: method.to_string(),
                row: row.clone(),
            });
        }
    }
    let report = DemoReport {
        labels: run.labels,
        rows,
    };
    let p = out.join("report.csv");
    std::fs::write(&p, report.to_csv()).map_err(io(&p))?;
    Ok(report)
}
