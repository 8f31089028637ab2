use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use prelowd::datagen::{PdeFamily, Split};
use prelowd::harness::{
    cmd_evaluate, cmd_finetune, cmd_generate, cmd_pretrain, cmd_sweep, EvaluateArgs, ExperimentSpec, FinetuneArgs,
    GenerateArgs, PretrainArgs, Profile,
};
use prelowd::FinetuneConfig;

fn parse<T: std::str::FromStr<Err = prelowd::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: prelowd::Error| e.to_string())
}

#[derive(Parser)]
#[command(name = "prelowd", version, about = "Pretrain FFNOs in 1D, transfer to 2D, fine-tune and evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Shared {
    #[arg(long, default_value = "desk", value_parser = parse::<Profile>)]
    profile: Profile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// override the profile's iteration budget
    #[arg(long)]
    iterations: Option<usize>,
    /// record wall-clock times (outputs are then no longer byte-reproducible)
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset split
    Generate {
        #[arg(long, value_parser = parse::<PdeFamily>)]
        pde: PdeFamily,
        #[arg(long)]
        coeff: f64,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        dim: u8,
        #[arg(long, default_value = "train", value_parser = parse::<Split>)]
        split: Split,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
    /// Train a 1D model on a full training split
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
    /// Fine-tune a lifted 1D checkpoint (or train C0 from scratch) on 2D data
    Finetune {
        #[arg(long, value_parser = parse::<FinetuneConfig>)]
        config: FinetuneConfig,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
    /// Score a checkpoint on a validation split (next step and 5-step rollout)
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune and evaluate every (config, samples, seed) cell
    Sweep {
        #[arg(long, value_parser = parse::<FinetuneConfig>, value_delimiter = ',', default_value = "C0,C1,C2,C3,C4,C5,C6,C7,C8")]
        configs: Vec<FinetuneConfig>,
        #[arg(long, value_delimiter = ',', default_value = "8")]
        counts: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// 2D training pool
        #[arg(long)]
        data: PathBuf,
        /// 2D validation split
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
}

fn run(cli: Cli) -> prelowd::Result<()> {
    match cli.command {
        Command::Generate { pde, coeff, dim, split, samples, out, shared } => {
            let d = cmd_generate(&GenerateArgs {
                family: pde,
                coefficient: coeff,
                dims: dim as usize,
                profile: shared.profile,
                seed: shared.seed,
                samples,
                split,
                out: out.clone(),
            })?;
            println!("wrote {} ({:?})", out.display(), d.shape());
        }
        Command::Pretrain { data, out, shared } => {
            let ckpt = cmd_pretrain(&PretrainArgs {
                profile: shared.profile,
                seed: shared.seed,
                iterations: shared.iterations,
                data,
                out: out.clone(),
                timing: shared.timing,
            })?;
            let t = ckpt.training.expect("training summary");
            println!("wrote {} after {} iterations (final loss {:.4})", out.display(), t.iterations, t.final_loss);
        }
        Command::Finetune { config, samples, data, ckpt, out, shared } => {
            let c = cmd_finetune(&FinetuneArgs {
                profile: shared.profile,
                tag: config,
                samples,
                seed: shared.seed,
                iterations: shared.iterations,
                data,
                ckpt,
                out: out.clone(),
                timing: shared.timing,
            })?;
            let t = c.training.expect("training summary");
            println!("wrote {} after {} iterations (final loss {:.4})", out.display(), t.iterations, t.final_loss);
        }
        Command::Evaluate { ckpt, data, out } => {
            for r in cmd_evaluate(&EvaluateArgs { ckpt, data, out })? {
                println!("{} n={} seed={} rollout={}: rL2 {:.5}", r.tag, r.n_samples, r.seed, r.rollout, r.mean_rl2);
            }
        }
        Command::Sweep { configs, counts, seeds, data, valid, ckpt, out, shared } => {
            let report = cmd_sweep(&ExperimentSpec {
                profile: shared.profile,
                tags: configs,
                counts,
                seeds,
                iterations: shared.iterations,
                pretrained: ckpt,
                train: data,
                valid,
                out,
                timing: shared.timing,
            })?;
            println!("{} cells run, {} already present", report.cells_run, report.cells_skipped);
            for a in &report.averaged {
                println!("{} n={} rollout={}: rL2 {:.5} over {} seeds", a.tag, a.n_samples, a.rollout, a.mean_rl2, a.seeds);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
