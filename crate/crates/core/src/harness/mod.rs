//! End-to-end experiment plumbing: named profiles, evaluation metrics,
//! metrics CSVs and the pipeline commands behind the `prelowd` binary.

mod commands;
mod eval;
mod metrics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::IcSpec;
use crate::error::{usage, Error, Result};
use crate::model::{Activation, FfnoConfig};
use crate::training::TrainConfig;

pub use commands::{
    cmd_evaluate, cmd_finetune, cmd_generate, cmd_pretrain, cmd_sweep, evaluate_checkpoint, finetune_in_memory, pretrain_in_memory,
    EvaluateArgs, ExperimentSpec, FinetuneArgs, GenerateArgs, PretrainArgs, SweepReport,
};
pub use eval::{evaluate_next_step, evaluate_rollout, FnPredictor, Predictor};
pub use metrics::{
    average, read_metrics, write_averaged, write_metrics, AveragedRecord, MetricsRecord, AVERAGED_HEADER, METRICS_HEADER,
};

/// Rollout depths reported for every fine-tuned model.
pub const ROLLOUT_DEPTHS: [usize; 2] = [1, 5];

/// Named bundles of model size, data sizes and optimizer budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small enough to run the full pipeline on a laptop CPU.
    Desk,
    /// Full-size models and datasets.
    Full,
}

impl Profile {
    pub fn model(self, dims: usize) -> FfnoConfig {
        match self {
            Profile::Desk => FfnoConfig { dims, layers: 4, width: 32, modes: 8, ff_expansion: 2, activation: Activation::Relu },
            Profile::Full => FfnoConfig::reference(dims),
        }
    }

    pub fn train(self, seed: u64) -> TrainConfig {
        let iterations = match self {
            Profile::Desk => 1000,
            Profile::Full => 5000,
        };
        TrainConfig { iterations, seed, ..TrainConfig::default() }
    }

    pub fn resolution(self, dims: usize) -> usize {
        match (self, dims) {
            (Profile::Desk, 1) => 256,
            (Profile::Desk, _) => 32,
            (Profile::Full, 1) => 1024,
            (Profile::Full, _) => 64,
        }
    }

    /// Initial-condition law of generated data. Wavenumbers stay below the
    /// model's retained modes, so no part of the initial state is invisible
    /// to the spectral path.
    pub fn ic(self) -> IcSpec {
        let modes = self.model(1).modes;
        let ic = IcSpec::default();
        IcSpec { max_wavenumber: ic.max_wavenumber.min(modes as u32 - 1), ..ic }
    }

    /// Default sample count of a generated split.
    pub fn samples(self, dims: usize, split: crate::datagen::Split) -> usize {
        use crate::datagen::Split;
        match (self, dims, split) {
            (Profile::Desk, 1, Split::Train) => 512,
            (Profile::Desk, _, Split::Train) => 128,
            (Profile::Desk, _, Split::Valid) => 64,
            (Profile::Full, _, Split::Train) => 8000,
            (Profile::Full, _, Split::Valid) => 2000,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" | "paper" => Ok(Profile::Full),
            other => Err(usage(format!("unknown profile {other:?} (expected desk or full)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_ic_stays_inside_retained_modes() {
        assert_eq!(Profile::Desk.ic().max_wavenumber, 7);
        assert_eq!(Profile::Full.ic(), IcSpec::default());
        for p in [Profile::Desk, Profile::Full] {
            assert!((p.ic().max_wavenumber as usize) < p.model(2).modes);
        }
    }

    #[test]
    fn profile_names() {
        assert_eq!("desk".parse::<Profile>().unwrap(), Profile::Desk);
        assert_eq!("full".parse::<Profile>().unwrap(), Profile::Full);
        assert_eq!("paper".parse::<Profile>().unwrap(), Profile::Full);
        assert_eq!(Profile::Full.to_string(), "full");
        assert!("huge".parse::<Profile>().is_err());
    }
}
