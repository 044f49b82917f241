//! Vanilla, distillation and self-referenced two-stage training.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentPolicy};
use crate::checkpoint::{Checkpoint, Stage};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernels;
use crate::knowledge::{KnowledgeSource, KnowledgeStore};
use crate::losses::{self, ProbabilityVector};
use crate::metrics;
use crate::model::{self, forward_flops, init_params, ModelSpec, ParameterSet};
use crate::optim::{sgd_step, OptimizerConfig, Velocity};
use crate::rng::{self, RngState};
use crate::schedule::{ScheduleConfig, ScheduleMode, TwoStageSchedule};
use crate::tensor::{Real, Tensor};

/// Samples per forward pass when evaluating or extracting.
const EVAL_CHUNK: usize = 256;

pub const LOSS_CONVENTION: &str =
    "per-batch means over samples; ce at T=1; kl = KL(reference || softmax(z/T)); total = ce + T^2 * kl";
pub const FLOPS_CONVENTION: &str = "forward only; dense 2*in*out + out; conv 2*cin*k*k per output + 1 (bias); \
     relu 1 per element; pooling 1 per input element; estimated training = 3 x forward";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Vanilla,
    Srdl,
    Kd,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Srdl => "srdl",
            Strategy::Kd => "kd",
        }
    }
}

/// Settings shared by every strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    /// Total epoch budget M.
    pub epochs: usize,
    /// Decay program; its `horizon` is replaced by the strategy.
    pub schedule: ScheduleConfig,
    pub optimizer: OptimizerConfig,
    pub augment: AugmentPolicy,
    pub seed: u64,
}

impl TrainSettings {
    pub fn new(epochs: usize, initial_lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            schedule: ScheduleConfig::new(initial_lr, epochs),
            optimizer: OptimizerConfig::default(),
            augment: AugmentPolicy::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        self.schedule.with_horizon(self.epochs).validate()?;
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based over the whole run.
    pub epoch: usize,
    pub stage: u8,
    pub lr: f64,
    pub ce: f64,
    pub kl: f64,
    pub total: f64,
    /// Accuracy on the (possibly augmented) batches seen during the epoch.
    pub train_top1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub forward_flops: u64,
    pub train_size: u64,
    pub epochs: u64,
    /// forward FLOPs × epochs × training-set size for this run's own training.
    pub trcost: u128,
    /// Same quantity for a teacher trained in the same session.
    pub teacher_trcost: Option<u128>,
    /// `trcost + teacher_trcost`.
    pub reported_trcost: u128,
    /// One forward pass over the training set per extraction.
    pub extraction_flops: u128,
    /// `3 × reported_trcost + extraction_flops`.
    pub estimated_total_flops: u128,
    pub convention: String,
}

impl CostReport {
    fn new(spec: &ModelSpec, train_size: usize, epochs: usize, extractions: u64, teacher_trcost: Option<u128>) -> Self {
        let f = forward_flops(spec);
        let trcost = metrics::trcost(f, epochs as u64, train_size as u64);
        let reported = trcost + teacher_trcost.unwrap_or(0);
        let extraction = f as u128 * train_size as u128 * extractions as u128;
        Self {
            forward_flops: f,
            train_size: train_size as u64,
            epochs: epochs as u64,
            trcost,
            teacher_trcost,
            reported_trcost: reported,
            extraction_flops: extraction,
            estimated_total_flops: 3 * reported + extraction,
            convention: FLOPS_CONVENTION.into(),
        }
    }

    /// Estimated total cost of `self` relative to `baseline`.
    pub fn ratio_to(&self, baseline: &CostReport) -> f64 {
        self.estimated_total_flops as f64 / baseline.estimated_total_flops as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub top1: f64,
    /// Mean cross-entropy at T=1.
    pub ce: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEval {
    pub train: EvalSummary,
    pub test: Option<EvalSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub seed: u64,
    pub restart_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub seeds: Seeds,
    pub precision: String,
    pub temperature: Option<f64>,
    pub schedule_mode: ScheduleMode,
    pub restart: Option<bool>,
    pub model: ModelSpec,
    pub train_hash: String,
    pub test_hash: Option<String>,
    pub loss_convention: String,
    pub epochs: Vec<EpochRecord>,
    pub cost: CostReport,
    pub final_eval: FinalEval,
    /// Evaluation of the half-trained model (self-referenced runs).
    pub stage1_eval: Option<FinalEval>,
    /// Test accuracy of the (half-trained, final) ensemble.
    pub ensemble_test_top1: Option<f64>,
    pub notes: Vec<String>,
    /// Kept out of the serialized report so reruns compare byte-for-byte.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// One row per epoch with a header.
    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,stage,lr,ce,kl,total,train_top1\n");
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.stage, r.lr, r.ce, r.kl, r.total, r.train_top1
            ));
        }
        s
    }
}

/// Frozen soft targets for a training stage.
struct Imitation<'a> {
    store: &'a KnowledgeStore,
    temperature: f64,
}

/// Runs `lrs.len()` epochs, appending one record per epoch.
#[allow(clippy::too_many_arguments)]
fn run_epochs<F: Real>(
    spec: &ModelSpec,
    params: &mut ParameterSet<F>,
    train: &Dataset,
    settings: &TrainSettings,
    lrs: &[f64],
    first_epoch: usize,
    stage: u8,
    imitation: Option<&Imitation>,
    records: &mut Vec<EpochRecord>,
) -> Result<()> {
    let n = train.len();
    let bs = settings.optimizer.batch_size;
    let augmenting = !settings.augment.is_identity();
    if augmenting && !train.is_image() {
        return Err(Error::config("augment", "augmentation needs image-shaped samples"));
    }
    let mut velocity = Velocity::zeros_like(params);
    for (k, &lr) in lrs.iter().enumerate() {
        let epoch = first_epoch + k;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(settings.seed, "shuffle", epoch as u64));
        let mut aug_rng = rng::stream(settings.seed, "augment", epoch as u64);
        let (mut ce_sum, mut kl_sum, mut total_sum, mut hits) = (0.0, 0.0, 0.0, 0usize);
        for idx in order.chunks(bs) {
            let (mut x, labels) = train.batch::<F>(idx);
            if augmenting {
                augment::augment(&mut x, &settings.augment, &mut aug_rng)?;
            }
            let mut g = Graph::new();
            let vars = model::bind(&mut g, params, true);
            let logits = model::forward_logits(spec, &mut g, &vars, x)?;
            let ce = g.softmax_cross_entropy(logits, &labels)?;
            let (loss, kl_val) = match imitation {
                Some(im) => {
                    let ids: Vec<u64> = idx.iter().map(|&i| train.ids()[i]).collect();
                    let reference: Vec<F> = im.store.gather(&ids)?.into_iter().map(F::of_f32).collect();
                    let kl = g.kl_imitation(logits, &reference, F::of(im.temperature))?;
                    let kl_val = g.value(kl).data()[0].f64();
                    let weighted = g.scale(kl, F::of(im.temperature * im.temperature));
                    (g.add(ce, weighted)?, kl_val)
                }
                None => (ce, 0.0),
            };
            let ce_val = g.value(ce).data()[0].f64();
            let total_val = g.value(loss).data()[0].f64();
            if !total_val.is_finite() {
                return Err(Error::NumericBlowup {
                    epoch,
                    detail: format!("loss became {total_val}"),
                });
            }
            let z = g.value(logits);
            hits += labels
                .iter()
                .enumerate()
                .filter(|&(i, &y)| kernels::argmax(z.row(i)) == y)
                .count();
            let w = idx.len() as f64;
            ce_sum += ce_val * w;
            kl_sum += kl_val * w;
            total_sum += total_val * w;

            g.backward(loss)?;
            let grads: Vec<Tensor<F>> = vars
                .iter()
                .zip(params.tensors())
                .map(|(&v, t)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect();
            sgd_step(params, &grads, &mut velocity, lr, &settings.optimizer).map_err(|e| match e {
                Error::NonFiniteGradient { param } => Error::NumericBlowup {
                    epoch,
                    detail: format!("non-finite gradient for parameter `{param}`"),
                },
                other => other,
            })?;
        }
        if !params.all_finite() {
            return Err(Error::NumericBlowup {
                epoch,
                detail: "parameters became non-finite".into(),
            });
        }
        let nf = n as f64;
        records.push(EpochRecord {
            epoch,
            stage,
            lr,
            ce: ce_sum / nf,
            kl: kl_sum / nf,
            total: total_sum / nf,
            train_top1: hits as f64 / nf,
        });
    }
    Ok(())
}

fn check_data(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("training set has no samples".into()));
    }
    if data.classes() != spec.classes {
        return Err(Error::contract(format!(
            "dataset has {} classes, model {}",
            data.classes(),
            spec.classes
        )));
    }
    if data.feature_len() != spec.input_len() {
        return Err(Error::shape(
            "dataset",
            format!("samples {:?} for model input {:?}", data.feature_shape(), spec.input_shape),
        ));
    }
    Ok(())
}

fn checkpoint<F: Real>(spec: &ModelSpec, params: &ParameterSet<F>, stage: Stage, epoch: usize, seed: u64) -> Checkpoint {
    Checkpoint {
        spec: spec.clone(),
        params: params.cast(),
        stage,
        epoch,
        // where the next epoch's shuffle stream would start
        rng: RngState::capture(&rng::stream(seed, "shuffle", epoch as u64 + 1)),
    }
}

/// Row-major `n × C` logits over a whole dataset, in `f64`.
pub fn dataset_logits(spec: &ModelSpec, params: &ParameterSet<f32>, data: &Dataset) -> Result<Tensor<f64>> {
    batched(data, |x| model::predict_logits(spec, &params.cast::<f64>(), x))
}

/// Embeddings (classifier inputs) over a whole dataset, in `f64`.
pub fn dataset_features(spec: &ModelSpec, params: &ParameterSet<f32>, data: &Dataset) -> Result<Tensor<f64>> {
    batched(data, |x| model::predict_features(spec, &params.cast::<f64>(), x))
}

fn batched(data: &Dataset, f: impl Fn(Tensor<f64>) -> Result<Tensor<f64>> + Sync) -> Result<Tensor<f64>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts = idx
        .par_chunks(EVAL_CHUNK)
        .map(|c| f(data.batch::<f64>(c).0))
        .collect::<Result<Vec<_>>>()?;
    let cols = parts[0].cols();
    let values = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![data.len(), cols], values)
}

/// Top-1 accuracy and mean cross-entropy of `params` on `data`.
pub fn evaluate(spec: &ModelSpec, params: &ParameterSet<f32>, data: &Dataset) -> Result<EvalSummary> {
    let z = dataset_logits(spec, params, data)?;
    Ok(EvalSummary {
        top1: metrics::top1_accuracy(&z, data.labels())?,
        ce: mean_ce(&z, data.labels())?,
    })
}

/// Mean cross-entropy of `n × C` logits, with the same floor as training.
pub fn mean_ce(z: &Tensor<f64>, labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += losses::cross_entropy(&losses::softmax(z.row(i))?, y)?;
    }
    Ok(total / labels.len() as f64)
}

fn final_eval(spec: &ModelSpec, params: &ParameterSet<f32>, train: &Dataset, test: Option<&Dataset>) -> Result<FinalEval> {
    Ok(FinalEval {
        train: evaluate(spec, params, train)?,
        test: test.map(|t| evaluate(spec, params, t)).transpose()?,
    })
}

/// Single-stage cross-entropy training under the full-run schedule.
pub fn train_vanilla<F: Real>(
    spec: &ModelSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    settings: &TrainSettings,
) -> Result<(Checkpoint, RunReport)> {
    let start = Instant::now();
    settings.validate()?;
    check_data(spec, train)?;
    let sched = ScheduleConfig {
        mode: ScheduleMode::FullRun,
        ..settings.schedule.with_horizon(settings.epochs)
    };
    let lrs = (1..=settings.epochs).map(|t| sched.lr_at(t)).collect::<Result<Vec<_>>>()?;
    let mut params: ParameterSet<F> = init_params(spec, settings.seed)?;
    let mut records = Vec::with_capacity(settings.epochs);
    run_epochs(spec, &mut params, train, settings, &lrs, 1, 1, None, &mut records)?;
    let ckpt = checkpoint(spec, &params, Stage::VanillaFinal, settings.epochs, settings.seed);
    let report = RunReport {
        strategy: Strategy::Vanilla,
        seeds: Seeds {
            seed: settings.seed,
            restart_seed: None,
        },
        precision: F::NAME.into(),
        temperature: None,
        schedule_mode: ScheduleMode::FullRun,
        restart: None,
        model: spec.clone(),
        train_hash: train.content_hash(),
        test_hash: test.map(Dataset::content_hash),
        loss_convention: LOSS_CONVENTION.into(),
        epochs: records,
        cost: CostReport::new(spec, train.len(), settings.epochs, 0, None),
        final_eval: final_eval(spec, &ckpt.params, train, test)?,
        stage1_eval: None,
        ensemble_test_top1: None,
        notes: augmentation_notes(settings),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((ckpt, report))
}

fn augmentation_notes(settings: &TrainSettings) -> Vec<String> {
    if settings.augment.is_identity() {
        vec!["no augmentation".into()]
    } else {
        vec![format!("training batches augmented with {:?}", settings.augment)]
    }
}

/// Softened class probabilities of every sample in `data`, keyed by id.
/// Samples are used as stored; no augmentation is applied.
pub fn extract_knowledge(
    ckpt: &Checkpoint,
    data: &Dataset,
    temperature: f64,
    source: KnowledgeSource,
) -> Result<KnowledgeStore> {
    check_data(&ckpt.spec, data)?;
    let before = augment::call_count();
    let z = dataset_logits(&ckpt.spec, &ckpt.params, data)?;
    let mut store = KnowledgeStore::new(ckpt.spec.classes, temperature, Some(source))?;
    let mut row = vec![0f32; ckpt.spec.classes];
    for (i, &id) in data.ids().iter().enumerate() {
        let p = losses::softened_softmax(z.row(i), temperature)?;
        for (r, &v) in row.iter_mut().zip(p.values()) {
            *r = v as f32;
        }
        // absorb f32 rounding into the largest entry so the row still sums to 1
        let top = kernels::argmax(&row);
        let rest: f64 = row.iter().enumerate().filter(|&(j, _)| j != top).map(|(_, &v)| v as f64).sum();
        row[top] = (1.0 - rest) as f32;
        store.push(id, &row)?;
    }
    debug_assert_eq!(augment::call_count(), before);
    Ok(store)
}

/// Self-referenced training options.
#[derive(Clone, Debug, PartialEq)]
pub struct SrdlOptions {
    pub temperature: f64,
    /// Seed for the stage-2 re-initialisation.
    pub restart_seed: u64,
    /// When false, stage 2 continues from the half-trained parameters.
    pub restart: bool,
    /// Stage-complete (one decay program per stage) or full-run.
    pub mode: ScheduleMode,
    /// Evaluate the (half-trained, final) ensemble on the test split.
    pub ensemble: bool,
}

impl Default for SrdlOptions {
    fn default() -> Self {
        Self {
            temperature: 3.0,
            restart_seed: 1,
            restart: true,
            mode: ScheduleMode::StageComplete,
            ensemble: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SrdlOutcome {
    /// The half-trained model.
    pub stage1: Checkpoint,
    pub last: Checkpoint,
    pub knowledge: KnowledgeStore,
    pub report: RunReport,
    /// Parameters stage 2 started from.
    pub stage2_start: ParameterSet<f32>,
}

/// Two-stage self-referenced training within an M-epoch budget.
pub fn train_srdl<F: Real>(
    spec: &ModelSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    settings: &TrainSettings,
    opts: &SrdlOptions,
) -> Result<SrdlOutcome> {
    let start = Instant::now();
    settings.validate()?;
    check_data(spec, train)?;
    if !(opts.temperature > 0.0 && opts.temperature.is_finite()) {
        return Err(Error::config("temperature", "must be positive"));
    }
    let sched = TwoStageSchedule::new(ScheduleConfig {
        mode: opts.mode,
        ..settings.schedule.with_horizon(settings.epochs)
    })?;
    let (len1, len2) = (sched.stage_len(1), sched.stage_len(2));
    let lrs1 = (1..=len1).map(|t| sched.lr(1, t)).collect::<Result<Vec<_>>>()?;
    let lrs2 = (1..=len2).map(|t| sched.lr(2, t)).collect::<Result<Vec<_>>>()?;

    let mut notes = augmentation_notes(settings);
    notes.push("knowledge extracted from canonical (unaugmented) training samples".into());
    if opts.restart && opts.restart_seed == settings.seed {
        notes.push("warning: restart seed equals the stage-1 seed; stage 2 re-creates the stage-1 initialisation".into());
    }

    let mut records = Vec::with_capacity(settings.epochs);
    let mut params: ParameterSet<F> = init_params(spec, settings.seed)?;
    run_epochs(spec, &mut params, train, settings, &lrs1, 1, 1, None, &mut records)?;
    let stage1 = checkpoint(spec, &params, Stage::Stage1Final, len1, settings.seed);
    let knowledge = extract_knowledge(&stage1, train, opts.temperature, KnowledgeSource::SelfStage1)?;

    if opts.restart {
        params = init_params(spec, opts.restart_seed)?;
    }
    let stage2_start = params.cast::<f32>();
    let imitation = Imitation {
        store: &knowledge,
        temperature: opts.temperature,
    };
    run_epochs(spec, &mut params, train, settings, &lrs2, len1 + 1, 2, Some(&imitation), &mut records)?;
    let last = checkpoint(spec, &params, Stage::Stage2Final, settings.epochs, settings.seed);

    let ensemble_test_top1 = match (opts.ensemble, test) {
        (true, Some(t)) => Some(ensemble_accuracy(&[&stage1, &last], t)?),
        _ => None,
    };
    let report = RunReport {
        strategy: Strategy::Srdl,
        seeds: Seeds {
            seed: settings.seed,
            restart_seed: opts.restart.then_some(opts.restart_seed),
        },
        precision: F::NAME.into(),
        temperature: Some(opts.temperature),
        schedule_mode: opts.mode,
        restart: Some(opts.restart),
        model: spec.clone(),
        train_hash: train.content_hash(),
        test_hash: test.map(Dataset::content_hash),
        loss_convention: LOSS_CONVENTION.into(),
        epochs: records,
        cost: CostReport::new(spec, train.len(), settings.epochs, 1, None),
        final_eval: final_eval(spec, &last.params, train, test)?,
        stage1_eval: Some(final_eval(spec, &stage1.params, train, test)?),
        ensemble_test_top1,
        notes,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(SrdlOutcome {
        stage1,
        last,
        knowledge,
        report,
        stage2_start,
    })
}

/// Trains a student against labels and a frozen teacher's softened outputs
/// over the full-run schedule. `teacher_trcost` is added to the reported cost
/// when the teacher was trained in the same session.
pub fn train_kd<F: Real>(
    spec: &ModelSpec,
    teacher: &Checkpoint,
    teacher_trcost: Option<u128>,
    train: &Dataset,
    test: Option<&Dataset>,
    settings: &TrainSettings,
    temperature: f64,
) -> Result<(Checkpoint, KnowledgeStore, RunReport)> {
    let start = Instant::now();
    settings.validate()?;
    check_data(spec, train)?;
    if teacher.spec.classes != spec.classes {
        return Err(Error::contract(format!(
            "teacher predicts {} classes, student {}",
            teacher.spec.classes, spec.classes
        )));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::config("temperature", "must be positive"));
    }
    let knowledge = extract_knowledge(teacher, train, temperature, KnowledgeSource::Teacher)?;
    let sched = ScheduleConfig {
        mode: ScheduleMode::FullRun,
        ..settings.schedule.with_horizon(settings.epochs)
    };
    let lrs = (1..=settings.epochs).map(|t| sched.lr_at(t)).collect::<Result<Vec<_>>>()?;
    let mut params: ParameterSet<F> = init_params(spec, settings.seed)?;
    let mut records = Vec::with_capacity(settings.epochs);
    let imitation = Imitation {
        store: &knowledge,
        temperature,
    };
    run_epochs(spec, &mut params, train, settings, &lrs, 1, 1, Some(&imitation), &mut records)?;
    let ckpt = checkpoint(spec, &params, Stage::KdFinal, settings.epochs, settings.seed);
    // extracting from the teacher costs one teacher forward pass per sample
    let mut cost = CostReport::new(spec, train.len(), settings.epochs, 0, teacher_trcost);
    cost.extraction_flops = forward_flops(&teacher.spec) as u128 * train.len() as u128;
    cost.estimated_total_flops = 3 * cost.reported_trcost + cost.extraction_flops;
    let report = RunReport {
        strategy: Strategy::Kd,
        seeds: Seeds {
            seed: settings.seed,
            restart_seed: None,
        },
        precision: F::NAME.into(),
        temperature: Some(temperature),
        schedule_mode: ScheduleMode::FullRun,
        restart: None,
        model: spec.clone(),
        train_hash: train.content_hash(),
        test_hash: test.map(Dataset::content_hash),
        loss_convention: LOSS_CONVENTION.into(),
        epochs: records,
        cost,
        final_eval: final_eval(spec, &ckpt.params, train, test)?,
        stage1_eval: None,
        ensemble_test_top1: None,
        notes: augmentation_notes(settings),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((ckpt, knowledge, report))
}

fn check_members(ckpts: &[&Checkpoint]) -> Result<usize> {
    let first = ckpts.first().ok_or_else(|| Error::contract("ensemble needs at least one model"))?;
    let c = first.spec.classes;
    if let Some(bad) = ckpts.iter().find(|k| k.spec.classes != c) {
        return Err(Error::contract(format!(
            "ensemble members predict {c} and {} classes",
            bad.spec.classes
        )));
    }
    Ok(c)
}

/// Mean of the members' T=1 softmax outputs for each row of `batch`.
pub fn ensemble_predict(ckpts: &[&Checkpoint], batch: &Tensor<f64>) -> Result<Vec<ProbabilityVector>> {
    let c = check_members(ckpts)?;
    let n = batch.shape().first().copied().unwrap_or(0);
    let mut mean = vec![0.0; n * c];
    for k in ckpts {
        let z = model::predict_logits(&k.spec, &k.params.cast::<f64>(), batch.clone())?;
        accumulate_softmax(&z, &mut mean)?;
    }
    finish_mean(mean, c, ckpts.len())
}

fn accumulate_softmax(z: &Tensor<f64>, acc: &mut [f64]) -> Result<()> {
    let c = z.cols();
    for i in 0..z.rows() {
        let p = losses::softmax(z.row(i))?;
        for (a, v) in acc[i * c..(i + 1) * c].iter_mut().zip(p.values()) {
            *a += v;
        }
    }
    Ok(())
}

fn finish_mean(mean: Vec<f64>, c: usize, members: usize) -> Result<Vec<ProbabilityVector>> {
    mean.chunks(c)
        .map(|row| ProbabilityVector::new(row.iter().map(|v| v / members as f64).collect(), 1.0))
        .collect()
}

/// Ensemble probabilities over a whole dataset.
pub fn ensemble_dataset(ckpts: &[&Checkpoint], data: &Dataset) -> Result<Vec<ProbabilityVector>> {
    let c = check_members(ckpts)?;
    let mut mean = vec![0.0; data.len() * c];
    for k in ckpts {
        let z = dataset_logits(&k.spec, &k.params, data)?;
        accumulate_softmax(&z, &mut mean)?;
    }
    finish_mean(mean, c, ckpts.len())
}

/// Top-1 accuracy of the ensemble's argmax (lowest index on ties).
pub fn ensemble_accuracy(ckpts: &[&Checkpoint], data: &Dataset) -> Result<f64> {
    let probs = ensemble_dataset(ckpts, data)?;
    let hits = probs
        .iter()
        .zip(data.labels())
        .filter(|(p, &y)| p.argmax() == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_gaussian_mixture, Split};

    fn toy() -> (Dataset, Dataset) {
        synth_gaussian_mixture(3, 40, 4, 0.5, 3).unwrap()
    }

    fn settings(epochs: usize) -> TrainSettings {
        TrainSettings {
            optimizer: OptimizerConfig {
                batch_size: 16,
                ..Default::default()
            },
            ..TrainSettings::new(epochs, 0.05, 7)
        }
    }

    fn spec() -> ModelSpec {
        ModelSpec::mlp(4, vec![16], 3)
    }

    #[test]
    fn vanilla_records_every_epoch_and_is_deterministic() {
        let (train, test) = toy();
        let (a, ra) = train_vanilla::<f32>(&spec(), &train, Some(&test), &settings(6)).unwrap();
        let (b, rb) = train_vanilla::<f32>(&spec(), &train, Some(&test), &settings(6)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
        assert_eq!(ra.epochs.iter().map(|r| r.epoch).collect::<Vec<_>>(), (1..=6).collect::<Vec<_>>());
        assert_eq!(ra.cost.trcost, metrics::trcost(forward_flops(&spec()), 6, 120));
    }

    #[test]
    fn srdl_epoch_parity_and_decomposition() {
        let (train, test) = toy();
        let out = train_srdl::<f32>(&spec(), &train, Some(&test), &settings(7), &SrdlOptions::default()).unwrap();
        let r = &out.report;
        assert_eq!(r.epochs.len(), 7);
        assert_eq!(r.epochs.iter().filter(|e| e.stage == 1).count(), 4);
        assert_eq!(out.stage1.epoch, 4);
        assert_eq!(out.knowledge.len(), train.len());
        for e in &r.epochs {
            assert!((e.total - (e.ce + 9.0 * e.kl)).abs() < 1e-6, "{e:?}");
        }
        assert!(r.ensemble_test_top1.is_some());
    }

    #[test]
    fn no_restart_continues_from_half_trained_model() {
        let (train, _) = toy();
        let opts = SrdlOptions {
            restart: false,
            ..Default::default()
        };
        let out = train_srdl::<f32>(&spec(), &train, None, &settings(4), &opts).unwrap();
        assert_eq!(out.stage2_start, out.stage1.params);
        let restarted = train_srdl::<f32>(&spec(), &train, None, &settings(4), &SrdlOptions::default()).unwrap();
        assert_ne!(restarted.stage2_start, restarted.stage1.params);
    }

    #[test]
    fn kd_rejects_class_mismatch() {
        let (train, _) = toy();
        let (teacher, _) = train_vanilla::<f32>(&spec(), &train, None, &settings(1)).unwrap();
        let other = ModelSpec::mlp(4, vec![8], 4);
        let four = Dataset::new(
            train.ids().to_vec(),
            train.labels().to_vec(),
            (0..train.len()).flat_map(|i| train.features(i).to_vec()).collect(),
            vec![4],
            4,
            Split::Train,
        )
        .unwrap();
        assert!(train_kd::<f32>(&other, &teacher, None, &four, None, &settings(1), 3.0).is_err());
    }

    #[test]
    fn ensemble_hand_case() {
        let (train, _) = toy();
        let (a, _) = train_vanilla::<f32>(&spec(), &train, None, &settings(1)).unwrap();
        let one = ensemble_accuracy(&[&a], &train).unwrap();
        let two = ensemble_accuracy(&[&a, &a], &train).unwrap();
        assert_eq!(one, two);
        assert_eq!(one, evaluate(&a.spec, &a.params, &train).unwrap().top1);
        assert!(ensemble_predict(&[], &Tensor::zeros(&[1, 4])).is_err());
    }
}
