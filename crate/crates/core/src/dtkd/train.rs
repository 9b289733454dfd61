use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetIndex, Role};
use crate::domains::{classify_domains, DomainLabel, Label};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::metrics::{EvalReport, EvalRow};
use crate::nn::{adam_step, dice_loss, kd_loss, write_checkpoint, AdamState, Grads, SegNet, DICE_SMOOTH};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::batch::{build_batch, network_input, Group, Sample, StreamKind};
use super::config::TrainConfig;

const TAG_T_SIM: u64 = 1;
const TAG_T_DIS: u64 = 2;
const TAG_STUDENT: u64 = 3;
const TAG_SOURCE_ONLY: u64 = 4;
const TAG_ORDER: u64 = 10;
const TAG_VIEWS: u64 = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct Member<T = f32> {
    pub net: SegNet<T>,
    pub opt: AdamState<T>,
}

impl<T: Scalar> Member<T> {
    fn new(in_c: usize, lr: f64, rng: &mut SeededRng) -> Self {
        let net = SegNet::new(in_c, rng);
        let opt = AdamState::new(&net, lr);
        Self { net, opt }
    }
}

/// Both teachers and the student, each with its own optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTrio<T = f32> {
    pub t_sim: Member<T>,
    pub t_dis: Member<T>,
    pub student: Member<T>,
}

impl<T: Scalar> ModelTrio<T> {
    pub fn new(cfg: &TrainConfig) -> Self {
        let base = SeededRng::new(cfg.seed);
        let c = cfg.in_channels();
        Self {
            t_sim: Member::new(c, cfg.lr, &mut base.fork(TAG_T_SIM)),
            t_dis: Member::new(c, cfg.lr, &mut base.fork(TAG_T_DIS)),
            student: Member::new(c, cfg.lr, &mut base.fork(TAG_STUDENT)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Teachers,
    Joint,
}

/// Per-epoch means of each loss term. Terms that do not apply are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub l_seg_sim: Option<f64>,
    pub l_seg_dis: Option<f64>,
    pub l_kd: Option<f64>,
    pub l_seg_s: Option<f64>,
    pub total: f64,
}

impl TrainLogRecord {
    fn terms(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("l_seg_sim", self.l_seg_sim),
            ("l_seg_dis", self.l_seg_dis),
            ("l_kd", self.l_kd),
            ("l_seg_s", self.l_seg_s),
        ]
    }

    /// Sum of the present terms.
    pub fn sum_of_terms(&self) -> f64 {
        self.terms().iter().filter_map(|t| t.1).sum()
    }
}

/// Running means of each term over the steps of an epoch.
#[derive(Default)]
struct Accum {
    sums: [f64; 4],
    counts: [usize; 4],
}

impl Accum {
    fn add(&mut self, k: usize, v: Option<f64>) {
        if let Some(v) = v {
            self.sums[k] += v;
            self.counts[k] += 1;
        }
    }

    fn mean(&self, k: usize) -> Option<f64> {
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }

    fn record(&self, epoch: usize, phase: Phase) -> Result<TrainLogRecord> {
        let mut rec = TrainLogRecord {
            epoch,
            phase,
            l_seg_sim: self.mean(0),
            l_seg_dis: self.mean(1),
            l_kd: self.mean(2),
            l_seg_s: self.mean(3),
            total: 0.0,
        };
        for (term, v) in rec.terms() {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, term });
            }
        }
        rec.total = rec.sum_of_terms();
        Ok(rec)
    }
}

/// Output of one network on one stream, before any update.
struct Pass<T> {
    sample: usize,
    stream: usize,
    prob: Vec<T>,
    loss: f64,
    grads: Grads<T>,
}

/// Dice-trains `member` on the listed `(sample, stream)` views and returns
/// the mean loss with the pre-update predictions.
fn dice_step<T: Scalar>(member: &mut Member<T>, batch: &[Sample<T>], views: &[(usize, usize)]) -> Result<(f64, Vec<Pass<T>>)> {
    let net = &member.net;
    let passes = views
        .par_iter()
        .map(|&(i, s)| {
            let (prob, tape) = net.forward(&batch[i].streams[s].input)?;
            let (loss, dprob) = dice_loss(&prob, &batch[i].label, DICE_SMOOTH)?;
            let grads = net.backward(&tape, &dprob)?;
            Ok(Pass {
                sample: i,
                stream: s,
                prob,
                loss: loss.as_f64(),
                grads,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Grads::zeros_like(net);
    for p in &passes {
        total.add_assign(&p.grads);
    }
    let n = passes.len() as f64;
    total.scale(T::lit(1.0 / n));
    adam_step(&mut member.net, &total, &mut member.opt)?;
    let mean = passes.iter().map(|p| p.loss).sum::<f64>() / n;
    Ok((mean, passes))
}

/// Views routed to each teacher. With `no_dt` every view goes to `t_sim`.
type Views = Vec<(usize, usize)>;

fn routes<T>(batch: &[Sample<T>], cfg: &TrainConfig) -> (Views, Views) {
    let (mut sim, mut dis) = (Vec::new(), Vec::new());
    for (i, s) in batch.iter().enumerate() {
        for (j, st) in s.streams.iter().enumerate() {
            if cfg.ablations.no_dt || st.kind.group() == Group::Sim {
                sim.push((i, j));
            } else {
                dis.push((i, j));
            }
        }
    }
    (sim, dis)
}

type TeacherOut<T> = (Option<f64>, Option<f64>, Vec<Pass<T>>);

/// Updates T_sim then T_dis. Returns their losses and pre-update outputs.
fn teachers_step<T: Scalar>(trio: &mut ModelTrio<T>, batch: &[Sample<T>], cfg: &TrainConfig) -> Result<TeacherOut<T>> {
    let (sim, dis) = routes(batch, cfg);
    let mut passes = Vec::new();
    let mut losses = [None, None];
    for (k, (member, views)) in [(&mut trio.t_sim, sim), (&mut trio.t_dis, dis)].into_iter().enumerate() {
        if views.is_empty() {
            continue;
        }
        let (loss, p) = dice_step(member, batch, &views)?;
        losses[k] = Some(loss);
        passes.extend(p);
    }
    Ok((losses[0], losses[1], passes))
}

/// Student losses of one step: `(l_kd, l_seg_s)`.
fn student_step<T: Scalar>(
    student: &mut Member<T>,
    batch: &[Sample<T>],
    teacher_passes: &[Pass<T>],
    cfg: &TrainConfig,
) -> Result<(Option<f64>, f64)> {
    let net = &student.net;
    let no_kd = cfg.ablations.no_kd;
    let single = cfg.ablations.no_dt;
    let b = batch.len() as f64;
    let mut teacher_prob: Vec<Vec<Option<&[T]>>> = batch.iter().map(|s| vec![None; s.streams.len()]).collect();
    for p in teacher_passes {
        teacher_prob[p.sample][p.stream] = Some(&p.prob);
    }
    let group_of = |k: StreamKind| if single { Group::Sim } else { k.group() };
    let views: Vec<(usize, usize)> = batch
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.streams.len()).map(move |j| (i, j)))
        .collect();
    let outs = views
        .par_iter()
        .map(|&(i, j)| {
            let sample = &batch[i];
            let stream = &sample.streams[j];
            let n_streams = sample.streams.len() as f64;
            let n_group = sample
                .streams
                .iter()
                .filter(|s| group_of(s.kind) == group_of(stream.kind))
                .count() as f64;
            let (prob, tape) = net.forward(&stream.input)?;
            let mut dprob = vec![T::zero(); prob.len()];
            let (mut kd, mut seg) = (0.0, 0.0);
            let with_dice = no_kd || stream.kind == StreamKind::Raw;
            if with_dice {
                let w = if no_kd { 1.0 / n_streams } else { 1.0 };
                let (l, g) = dice_loss(&prob, &sample.label, DICE_SMOOTH)?;
                seg = w * l.as_f64();
                let wt = T::lit(w / b);
                dprob.iter_mut().zip(&g).for_each(|(d, &g)| *d = *d + wt * g);
            }
            if !no_kd {
                let teacher = teacher_prob[i][j].ok_or_else(|| Error::invalid("batch", "stream without teacher output"))?;
                let (l, g) = kd_loss(&prob, teacher)?;
                kd = l.as_f64() / n_group;
                let wt = T::lit(1.0 / (n_group * b));
                dprob.iter_mut().zip(&g).for_each(|(d, &g)| *d = *d + wt * g);
            }
            let grads = net.backward(&tape, &dprob)?;
            Ok((kd, seg, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Grads::zeros_like(net);
    let (mut kd, mut seg) = (0.0, 0.0);
    for (k, s, g) in &outs {
        kd += k;
        seg += s;
        total.add_assign(g);
    }
    adam_step(&mut student.net, &total, &mut student.opt)?;
    Ok(((!no_kd).then_some(kd / b), seg / b))
}

fn check_epoch<T>(samples: &[Sample<T>], cfg: &TrainConfig, epoch: usize, joint: bool) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("batches", "epoch has no samples"));
    }
    if epoch == 0 || (epoch > cfg.tau) != joint {
        let phase = if joint { "joint" } else { "teacher" };
        return Err(Error::invalid("epoch", format!("epoch {epoch} is outside the {phase} phase for tau={}", cfg.tau)));
    }
    Ok(())
}

/// Teachers-only epoch: Dice updates of T_sim and T_dis; the student is not touched.
pub fn teacher_epoch<T: Scalar>(
    trio: &mut ModelTrio<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<TrainLogRecord> {
    check_epoch(samples, cfg, epoch, false)?;
    let mut acc = Accum::default();
    for batch in samples.chunks(cfg.batch_size) {
        let (ls, ld, _) = teachers_step(trio, batch, cfg)?;
        acc.add(0, ls);
        acc.add(1, ld);
    }
    acc.record(epoch, Phase::Teachers)
}

/// Joint epoch: teacher updates as in [`teacher_epoch`], then a student update
/// that distils the teachers' pre-update outputs and follows the source labels.
pub fn joint_epoch<T: Scalar>(
    trio: &mut ModelTrio<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<TrainLogRecord> {
    check_epoch(samples, cfg, epoch, true)?;
    let mut acc = Accum::default();
    for batch in samples.chunks(cfg.batch_size) {
        let (ls, ld, passes) = teachers_step(trio, batch, cfg)?;
        let (kd, seg) = student_step(&mut trio.student, batch, &passes, cfg)?;
        acc.add(0, ls);
        acc.add(1, ld);
        acc.add(2, kd);
        acc.add(3, Some(seg));
    }
    acc.record(epoch, Phase::Joint)
}

/// Labeled source plus the unlabeled style donors of each target group.
#[derive(Debug, Clone)]
pub struct TrainData<T = f32> {
    pub source: Vec<(GrayImage<T>, BinaryMask)>,
    pub sim_targets: Vec<GrayImage<T>>,
    pub dis_targets: Vec<GrayImage<T>>,
}

impl<T: Scalar> TrainData<T> {
    /// Samples of `epoch` in that epoch's shuffled order.
    pub fn epoch_samples(&self, cfg: &TrainConfig, epoch: usize) -> Result<Vec<Sample<T>>> {
        if self.source.is_empty() {
            return Err(Error::invalid("source", "no source samples"));
        }
        let base = SeededRng::new(cfg.seed);
        let order = base.fork_path(&[TAG_ORDER, epoch as u64]).permutation(self.source.len());
        let views = base.fork_path(&[TAG_VIEWS, epoch as u64]);
        build_batch(&self.source, &order, &self.sim_targets, &self.dis_targets, cfg, &views)
    }
}

/// Full schedule: `tau` teacher epochs then `total_epochs - tau` joint epochs.
pub fn train<T: Scalar>(cfg: &TrainConfig, data: &TrainData<T>) -> Result<(ModelTrio<T>, Vec<TrainLogRecord>)> {
    train_with(cfg, data, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<T: Scalar>(
    cfg: &TrainConfig,
    data: &TrainData<T>,
    mut on_epoch: impl FnMut(&TrainLogRecord),
) -> Result<(ModelTrio<T>, Vec<TrainLogRecord>)> {
    cfg.validate()?;
    let mut trio = ModelTrio::new(cfg);
    let mut logs = Vec::with_capacity(cfg.total_epochs);
    for epoch in 1..=cfg.total_epochs {
        let samples = data.epoch_samples(cfg, epoch)?;
        let rec = if epoch <= cfg.tau {
            teacher_epoch(&mut trio, &samples, cfg, epoch)
        } else {
            joint_epoch(&mut trio, &samples, cfg, epoch)
        }
        .map_err(|e| match e {
            Error::NonFiniteGradient { .. } => Error::NonFiniteLoss { epoch, term: "gradient" },
            e => e,
        })?;
        on_epoch(&rec);
        logs.push(rec);
    }
    Ok((trio, logs))
}

/// Baseline: one plain-image network trained with Dice on raw source images
/// for `total_epochs`, without augmentation, transfer or LRIT.
pub fn train_source_only<T: Scalar>(
    cfg: &TrainConfig,
    source: &[(GrayImage<T>, BinaryMask)],
) -> Result<(SegNet<T>, Vec<f64>)> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::invalid("source", "no source samples"));
    }
    let base = SeededRng::new(cfg.seed);
    let mut member = Member::new(1, cfg.lr, &mut base.fork(TAG_SOURCE_ONLY));
    let inputs = source
        .iter()
        .map(|(img, _)| network_input(img, false, None))
        .collect::<Result<Vec<_>>>()?;
    let mut losses = Vec::with_capacity(cfg.total_epochs);
    for epoch in 1..=cfg.total_epochs {
        let order = base.fork_path(&[TAG_ORDER, epoch as u64]).permutation(source.len());
        let samples: Vec<Sample<T>> = order
            .iter()
            .map(|&i| Sample {
                label: source[i].1.clone(),
                streams: vec![super::batch::Stream {
                    kind: StreamKind::Raw,
                    image: source[i].0.clone(),
                    input: inputs[i].clone(),
                }],
            })
            .collect();
        let mut sum = 0.0;
        let mut steps = 0;
        for batch in samples.chunks(cfg.batch_size) {
            let views: Vec<(usize, usize)> = (0..batch.len()).map(|i| (i, 0)).collect();
            sum += dice_step(&mut member, batch, &views)?.0;
            steps += 1;
        }
        let loss = sum / steps as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, term: "l_seg_s" });
        }
        losses.push(loss);
    }
    Ok((member.net, losses))
}

/// Thresholded prediction. Five-channel networks get LRIT planes in
/// canonical order; one-channel networks see the image alone.
pub fn predict<T: Scalar>(net: &SegNet<T>, img: &GrayImage<T>, threshold: f64) -> Result<BinaryMask> {
    let with_lrit = match net.in_channels() {
        1 => false,
        5 => true,
        c => return Err(Error::shape("1 or 5 input channels", c)),
    };
    let prob = net.predict_prob(&network_input(img, with_lrit, None)?)?;
    let t = T::lit(threshold);
    BinaryMask::new(img.width(), img.height(), prob.iter().map(|&p| p > t).collect())
}

/// A domain id with its labeled images.
pub type LabeledDomain<T> = (String, Vec<(GrayImage<T>, BinaryMask)>);

/// Target domain ids with their clustering labels.
pub type DomainLabels = Vec<(String, DomainLabel)>;

/// Unlabeled style donors of one group.
pub type StylePool<T> = Vec<GrayImage<T>>;

/// Per-domain Dice and HD95 of `net` on labeled images.
pub fn evaluate<T: Scalar>(
    net: &SegNet<T>,
    domains: &[LabeledDomain<T>],
    threshold: f64,
) -> Result<EvalReport> {
    let rows = domains
        .iter()
        .map(|(id, pairs)| {
            let preds = pairs
                .par_iter()
                .map(|(img, gt)| Ok((predict(net, img, threshold)?, gt.clone())))
                .collect::<Result<Vec<_>>>()?;
            EvalRow::from_pairs(id, &preds)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// [`evaluate`] on dataset directories; every entry must be labeled.
pub fn evaluate_index(net: &SegNet<f32>, targets: &[DatasetIndex], threshold: f64) -> Result<EvalReport> {
    let domains = targets
        .iter()
        .map(|d| Ok((d.domain_id.clone(), d.load_labeled::<f32>()?)))
        .collect::<Result<Vec<_>>>()?;
    evaluate(net, &domains, threshold)
}

#[derive(Debug, Clone)]
pub struct RunOutput<T = f32> {
    pub trio: ModelTrio<T>,
    pub logs: Vec<TrainLogRecord>,
    pub labels: Vec<(String, DomainLabel)>,
}

/// Clusters target images by polarity and splits them into style pools.
pub fn cluster_targets<T: Scalar>(
    source: &[GrayImage<T>],
    targets: Vec<(String, Vec<GrayImage<T>>)>,
) -> Result<(DomainLabels, StylePool<T>, StylePool<T>)> {
    let labels = classify_domains(source, &targets)?;
    let (mut sim, mut dis) = (Vec::new(), Vec::new());
    for ((_, imgs), (_, l)) in targets.into_iter().zip(&labels) {
        match l.label {
            Label::Similar => sim.extend(imgs),
            Label::Dissimilar => dis.extend(imgs),
        }
    }
    Ok((labels, sim, dis))
}

/// Loads the datasets, clusters the targets and trains.
pub fn run(cfg: &TrainConfig, source: &DatasetIndex, targets: &[DatasetIndex]) -> Result<RunOutput> {
    run_with(cfg, source, targets, |_| {})
}

pub fn run_with(
    cfg: &TrainConfig,
    source: &DatasetIndex,
    targets: &[DatasetIndex],
    on_epoch: impl FnMut(&TrainLogRecord),
) -> Result<RunOutput> {
    cfg.validate()?;
    let source = source.clone().with_role(Role::Source)?.load_labeled::<f32>()?;
    let target_imgs = targets
        .iter()
        .map(|d| Ok((d.domain_id.clone(), d.load_images::<f32>()?)))
        .collect::<Result<Vec<_>>>()?;
    let src_imgs: Vec<GrayImage<f32>> = source.iter().map(|(i, _)| i.clone()).collect();
    let (labels, sim_targets, dis_targets) = cluster_targets(&src_imgs, target_imgs)?;
    let data = TrainData {
        source,
        sim_targets,
        dis_targets,
    };
    let (trio, logs) = train_with(cfg, &data, on_epoch)?;
    Ok(RunOutput { trio, logs, labels })
}

#[derive(Serialize)]
struct LabelEntry<'a> {
    domain_id: &'a str,
    label: Label,
    score: f64,
}

pub fn labels_json(labels: &[(String, DomainLabel)]) -> String {
    let entries: Vec<LabelEntry> = labels
        .iter()
        .map(|(id, l)| LabelEntry {
            domain_id: id,
            label: l.label,
            score: l.score,
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("labels serialize")
}

pub fn log_jsonl(logs: &[TrainLogRecord]) -> String {
    logs.iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Writes `t_sim.ckpt`, `t_dis.ckpt`, `student.ckpt`, `log.jsonl` and `labels.json`.
pub fn write_run_dir(dir: impl AsRef<Path>, cfg: &TrainConfig, out: &RunOutput) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = cfg.to_json();
    write_checkpoint(&out.trio.t_sim.net, &json, dir.join("t_sim.ckpt"))?;
    write_checkpoint(&out.trio.t_dis.net, &json, dir.join("t_dis.ckpt"))?;
    write_checkpoint(&out.trio.student.net, &json, dir.join("student.ckpt"))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("log.jsonl", log_jsonl(&out.logs))?;
    write("labels.json", labels_json(&out.labels))
}
