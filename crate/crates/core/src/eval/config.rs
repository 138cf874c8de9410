use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitScheme, Source};
use crate::error::{Error, Result};
use crate::svm::{KernelSpec, TrainConfig};
use crate::zeroshot::EmbeddedPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Real against all generators pooled as one fake class.
    TwoClass,
    /// Real plus one class per generator.
    MultiClass,
    /// Frame-to-prompt cosine rule, no training.
    ZeroShot,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::TwoClass => "two-class",
            Task::MultiClass => "multi-class",
            Task::ZeroShot => "zero-shot",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "two-class" | "binary" => Ok(Task::TwoClass),
            "multi-class" | "multiclass" => Ok(Task::MultiClass),
            "zero-shot" | "zeroshot" => Ok(Task::ZeroShot),
            other => Err(Error::parse("task", format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Expected backend name of the store; empty accepts any.
    pub backend: String,
    pub kernel: KernelSpec,
    /// Required for zero-shot, ignored otherwise.
    pub prompt_pair: Option<EmbeddedPair>,
    pub split_scheme: SplitScheme,
    pub repetitions: u32,
    pub seed: u64,
    pub normalize_embeddings: bool,
    /// Drop this generator from training and test only on real plus it.
    pub leave_out_source: Option<Source>,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(task: Task) -> Self {
        ExperimentConfig {
            task,
            backend: String::new(),
            kernel: KernelSpec::linear(),
            prompt_pair: None,
            split_scheme: SplitScheme::TrainTest80_20,
            repetitions: 5,
            seed: 0,
            normalize_embeddings: false,
            leave_out_source: None,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::contract("repetitions must be positive"));
        }
        if self.task == Task::ZeroShot && self.prompt_pair.is_none() {
            return Err(Error::contract("zero-shot evaluation needs an embedded prompt pair"));
        }
        if let Some(s) = &self.leave_out_source {
            if s.is_real() {
                return Err(Error::contract("only a fake source can be left out"));
            }
            if self.task == Task::MultiClass {
                return Err(Error::contract("leave-one-out applies to two-class and zero-shot tasks"));
            }
        }
        Ok(())
    }
}
