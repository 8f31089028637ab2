use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::datagen::{generate, pairs, PdeFamily, PdeSpec, Split, TrajectoryDataset};
use crate::error::{usage, Result};
use crate::io::{load_checkpoint, load_dataset, payload_digest, save_checkpoint, save_dataset, write_atomic};
use crate::io::{Checkpoint, Provenance, TrainingSummary};
use crate::model::{full_mask, init_params, FfnoConfig};
use crate::training::{train, TraceRow, TrainConfig};
use crate::transfer::{prepare_downstream, FinetuneConfig};

use super::eval::{evaluate_next_step, evaluate_rollout};
use super::metrics::{average, read_metrics, write_averaged, write_metrics, AveragedRecord, MetricsRecord};
use super::{Profile, ROLLOUT_DEPTHS};

/// Independent seed streams derived from one experiment seed.
fn stream(seed: u64, k: u64) -> u64 {
    crate::datagen::sample_seed(seed, Split::Train, k as usize + 1_000_003)
}

const SELECT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

fn train_config(profile: Profile, seed: u64, iterations: Option<usize>) -> TrainConfig {
    let cfg = profile.train(seed);
    TrainConfig { iterations: iterations.unwrap_or(cfg.iterations), ..cfg }
}

fn summary(trace: &[TraceRow], step: u64, final_lr: f64, wall_time_s: f64) -> TrainingSummary {
    TrainingSummary {
        iterations: trace.len(),
        final_lr,
        final_loss: trace.last().map_or(f64::NAN, |r| r.train_loss),
        optimizer_step: step,
        wall_time_s,
    }
}

fn trace_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_owned();
    name.push(".trace.csv");
    out.with_file_name(name)
}

fn write_trace(out: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in trace {
        w.serialize(row)?;
    }
    write_atomic(&trace_path(out), &w.into_inner().expect("in-memory writer"))
}

fn require_dims<T: crate::scalar::Scalar>(data: &TrajectoryDataset<T>, dims: usize, what: &str) -> Result<()> {
    if data.spatial().len() != dims {
        return Err(usage(format!("{what} must be {dims}D, got {}D data", data.spatial().len())));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub family: PdeFamily,
    pub coefficient: f64,
    pub dims: usize,
    pub profile: Profile,
    pub seed: u64,
    /// defaults to the profile's split size
    pub samples: Option<usize>,
    pub split: Split,
    pub out: PathBuf,
}

/// Generates one split and writes it as single-precision data plus sidecar.
pub fn cmd_generate(args: &GenerateArgs) -> Result<TrajectoryDataset<f32>> {
    let pde = PdeSpec::new(args.family, args.coefficient, args.dims, args.profile.resolution(args.dims));
    let n = args.samples.unwrap_or_else(|| args.profile.samples(args.dims, args.split));
    let data = generate(&pde, &args.profile.ic(), n, args.seed, args.split)?.cast::<f32>();
    save_dataset(&args.out, &data)?;
    Ok(data)
}

/// Trains a fresh 1D model on every pair of `data`.
pub fn pretrain_in_memory(
    model: &FfnoConfig,
    train_cfg: &TrainConfig,
    data: &TrajectoryDataset<f32>,
    timing: bool,
) -> Result<(Checkpoint<f32>, Vec<TraceRow>)> {
    require_dims(data, 1, "pretraining data")?;
    let start = Instant::now();
    let params = init_params::<f32>(model, stream(train_cfg.seed, INIT_STREAM))?;
    let outcome = train(params, &pairs(data), &full_mask(model), train_cfg)?;
    let wall = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let ckpt = Checkpoint {
        params: outcome.params,
        provenance: Provenance { seed: train_cfg.seed, dataset_sha256: payload_digest(data), ..Provenance::default() },
        training: Some(summary(&outcome.trace, outcome.state.step, outcome.state.lr, wall)),
    };
    Ok((ckpt, outcome.trace))
}

#[derive(Debug, Clone)]
pub struct PretrainArgs {
    pub profile: Profile,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub timing: bool,
}

/// Writes the checkpoint at `out` and the loss trace next to it.
pub fn cmd_pretrain(args: &PretrainArgs) -> Result<Checkpoint<f32>> {
    let data = load_dataset::<f32>(&args.data)?;
    let cfg = train_config(args.profile, args.seed, args.iterations);
    let (ckpt, trace) = pretrain_in_memory(&args.profile.model(1), &cfg, &data, args.timing)?;
    save_checkpoint(&args.out, &ckpt)?;
    write_trace(&args.out, &trace)?;
    Ok(ckpt)
}

/// Fine-tunes (or, for C0, trains from scratch) on `n_samples` trajectories
/// drawn from `pool` under `seed`.
pub fn finetune_in_memory(
    tag: FinetuneConfig,
    pretrained: Option<&Checkpoint<f32>>,
    pool: &TrajectoryDataset<f32>,
    n_samples: usize,
    model: &FfnoConfig,
    train_cfg: &TrainConfig,
    timing: bool,
) -> Result<(Checkpoint<f32>, Vec<TraceRow>)> {
    require_dims(pool, 2, "downstream data")?;
    let seed = train_cfg.seed;
    let start = Instant::now();
    let (subset, _) = pool.select(n_samples, stream(seed, SELECT_STREAM))?;
    let base = if tag.uses_pretrained() { pretrained } else { None };
    let (params, mask) = prepare_downstream(tag, base.map(|c| &c.params), model, stream(seed, INIT_STREAM))?;
    let outcome = train(params, &pairs(&subset), &mask, train_cfg)?;
    let wall = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let parent = match base {
        Some(c) => Some(crate::io::checkpoint::content_id_of(&c.params)?),
        None => None,
    };
    let ckpt = Checkpoint {
        params: outcome.params,
        provenance: Provenance {
            seed,
            dataset_sha256: payload_digest(&subset),
            parent,
            finetune: Some(tag.to_string()),
            n_samples: Some(n_samples),
        },
        training: Some(summary(&outcome.trace, outcome.state.step, outcome.state.lr, wall)),
    };
    Ok((ckpt, outcome.trace))
}

#[derive(Debug, Clone)]
pub struct FinetuneArgs {
    pub profile: Profile,
    pub tag: FinetuneConfig,
    pub samples: usize,
    pub seed: u64,
    pub iterations: Option<usize>,
    /// 2D training pool
    pub data: PathBuf,
    /// pretrained 1D checkpoint; required for C1-C8, rejected for C0
    pub ckpt: Option<PathBuf>,
    pub out: PathBuf,
    pub timing: bool,
}

pub fn cmd_finetune(args: &FinetuneArgs) -> Result<Checkpoint<f32>> {
    let pretrained = match (args.tag, &args.ckpt) {
        (FinetuneConfig::C0, Some(_)) => {
            return Err(usage("C0 trains from random initialization and takes no checkpoint"));
        }
        (FinetuneConfig::C0, None) => None,
        (tag, None) => return Err(usage(format!("{tag} needs a pretrained checkpoint (--ckpt)"))),
        (_, Some(path)) => Some(load_checkpoint::<f32>(path, Some(&args.profile.model(1)))?),
    };
    let pool = load_dataset::<f32>(&args.data)?;
    let cfg = train_config(args.profile, args.seed, args.iterations);
    let (ckpt, trace) =
        finetune_in_memory(args.tag, pretrained.as_ref(), &pool, args.samples, &args.profile.model(2), &cfg, args.timing)?;
    save_checkpoint(&args.out, &ckpt)?;
    write_trace(&args.out, &trace)?;
    Ok(ckpt)
}

/// One record per rollout depth; depth 1 is the next-step score.
pub fn evaluate_checkpoint(ckpt: &Checkpoint<f32>, valid: &TrajectoryDataset<f32>) -> Result<Vec<MetricsRecord>> {
    require_dims(valid, ckpt.params.config.dims, "validation data")?;
    let training = ckpt.training.unwrap_or(TrainingSummary {
        iterations: 0,
        final_lr: 0.0,
        final_loss: f64::NAN,
        optimizer_step: 0,
        wall_time_s: 0.0,
    });
    ROLLOUT_DEPTHS
        .iter()
        .map(|&depth| {
            let mean_rl2 = if depth == 1 {
                evaluate_next_step(&ckpt.params, valid)?
            } else {
                evaluate_rollout(&ckpt.params, valid, depth)?
            };
            Ok(MetricsRecord {
                tag: ckpt.provenance.finetune.clone().unwrap_or_else(|| "pretrained".into()),
                n_samples: ckpt.provenance.n_samples.unwrap_or(0),
                seed: ckpt.provenance.seed,
                rollout: depth,
                mean_rl2,
                wall_time_s: training.wall_time_s,
                iterations: training.iterations,
                final_lr: training.final_lr,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Vec<MetricsRecord>> {
    let ckpt = load_checkpoint::<f32>(&args.ckpt, None)?;
    let valid = load_dataset::<f32>(&args.data)?;
    let rows = evaluate_checkpoint(&ckpt, &valid)?;
    write_metrics(&args.out, &rows)?;
    Ok(rows)
}

/// The cross product `tags x counts x seeds`, fine-tuned from one pretrained model.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub profile: Profile,
    pub tags: Vec<FinetuneConfig>,
    pub counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub iterations: Option<usize>,
    /// required unless every tag is C0
    pub pretrained: Option<PathBuf>,
    pub train: PathBuf,
    pub valid: PathBuf,
    /// directory receiving `raw.csv` and `averaged.csv`
    pub out: PathBuf,
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn raw_path(&self) -> PathBuf {
        self.out.join("raw.csv")
    }

    pub fn averaged_path(&self) -> PathBuf {
        self.out.join("averaged.csv")
    }

    fn validate(&self) -> Result<()> {
        if self.tags.is_empty() || self.counts.is_empty() || self.seeds.is_empty() {
            return Err(usage("a sweep needs at least one tag, sample count and seed"));
        }
        let distinct = |n: usize, m: usize, what: &str| {
            if n != m {
                Err(usage(format!("duplicate {what} in sweep")))
            } else {
                Ok(())
            }
        };
        distinct(self.tags.iter().collect::<BTreeSet<_>>().len(), self.tags.len(), "tags")?;
        distinct(self.counts.iter().collect::<BTreeSet<_>>().len(), self.counts.len(), "sample counts")?;
        distinct(self.seeds.iter().collect::<BTreeSet<_>>().len(), self.seeds.len(), "seeds")
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub raw: Vec<MetricsRecord>,
    pub averaged: Vec<AveragedRecord>,
    pub cells_run: usize,
    pub cells_skipped: usize,
}

fn canonical_order(spec: &ExperimentSpec, rows: Vec<MetricsRecord>) -> Vec<MetricsRecord> {
    let key = |r: &MetricsRecord| {
        let pos = |found: Option<usize>| found.unwrap_or(usize::MAX);
        (
            pos(spec.tags.iter().position(|t| t.to_string() == r.tag)),
            pos(spec.counts.iter().position(|&c| c == r.n_samples)),
            pos(spec.seeds.iter().position(|&s| s == r.seed)),
            r.rollout,
        )
    };
    let mut rows = rows;
    // stable: rows outside the grid keep their relative order at the end
    rows.sort_by_key(key);
    rows
}

/// Runs every missing cell; cells whose rows already exist in `raw.csv` are
/// skipped. Both CSVs are rewritten after each cell.
pub fn cmd_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let needs_pretrained = spec.tags.iter().any(|t| t.uses_pretrained());
    let pretrained = match (&spec.pretrained, needs_pretrained) {
        (Some(path), true) => Some(load_checkpoint::<f32>(path, Some(&spec.profile.model(1)))?),
        (None, true) => return Err(usage("sweeps over C1-C8 need a pretrained checkpoint (--ckpt)")),
        (_, false) => None,
    };
    let pool = load_dataset::<f32>(&spec.train)?;
    let valid = load_dataset::<f32>(&spec.valid)?;
    require_dims(&valid, 2, "validation data")?;
    let mut rows = match spec.raw_path().exists() {
        true => read_metrics(&spec.raw_path())?,
        false => Vec::new(),
    };
    let model = spec.profile.model(2);
    let (mut run, mut skipped) = (0, 0);
    for &tag in &spec.tags {
        for &count in &spec.counts {
            for &seed in &spec.seeds {
                let name = tag.to_string();
                let done = ROLLOUT_DEPTHS
                    .iter()
                    .all(|&d| rows.iter().any(|r| r.tag == name && r.n_samples == count && r.seed == seed && r.rollout == d));
                if done {
                    skipped += 1;
                    continue;
                }
                rows.retain(|r| !(r.tag == name && r.n_samples == count && r.seed == seed));
                let cfg = train_config(spec.profile, seed, spec.iterations);
                let (ckpt, _) = finetune_in_memory(tag, pretrained.as_ref(), &pool, count, &model, &cfg, spec.timing)?;
                rows.extend(evaluate_checkpoint(&ckpt, &valid)?);
                run += 1;
                rows = canonical_order(spec, rows);
                write_metrics(&spec.raw_path(), &rows)?;
                write_averaged(&spec.averaged_path(), &average(&rows))?;
            }
        }
    }
    let rows = canonical_order(spec, rows);
    let averaged = average(&rows);
    write_metrics(&spec.raw_path(), &rows)?;
    write_averaged(&spec.averaged_path(), &averaged)?;
    Ok(SweepReport { raw: rows, averaged, cells_run: run, cells_skipped: skipped })
}
