use std::path::PathBuf;

use hamrank_core::VerifyMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Exhaustive verification is the default up to this many ordered pairs.
pub const DEFAULT_MAX_PAIRS: u64 = 1 << 24;
pub const DEFAULT_MAX_DIM: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    /// Cap on entry size during elimination; `None` means unbounded.
    pub max_bits: Option<u64>,
    /// Largest representation dimension that may be materialized.
    pub max_dim: usize,
    /// Largest pair count verified exhaustively without an explicit request.
    pub max_pairs: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_bits: None,
            max_dim: DEFAULT_MAX_DIM,
            max_pairs: DEFAULT_MAX_PAIRS,
        }
    }
}

/// Verification requested on the command line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VerifyRequest {
    /// Exhaustive when within `max_pairs`, otherwise an error.
    #[default]
    Auto,
    Exhaustive,
    Sample {
        count: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` lets rayon decide. Results do not depend on it.
    pub threads: Option<usize>,
    pub verify: VerifyRequest,
    pub budgets: Budgets,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub report: Option<PathBuf>,
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: None,
            verify: VerifyRequest::Auto,
            budgets: Budgets::default(),
            out: None,
            report: None,
            csv: None,
        }
    }
}

impl RunConfig {
    /// Resolves the verification mode for `pairs` ordered pairs. Sampling
    /// draws from a substream of the run seed.
    pub fn verify_mode(&self, pairs: u64) -> Result<VerifyMode, CliError> {
        match self.verify {
            VerifyRequest::Auto | VerifyRequest::Exhaustive if pairs <= self.budgets.max_pairs => {
                Ok(VerifyMode::Exhaustive)
            }
            VerifyRequest::Auto => Err(CliError::Config(format!(
                "{pairs} pairs exceed the exhaustive budget of {}; pass --mode sample \
                 --samples N, or raise --max-pairs",
                self.budgets.max_pairs
            ))),
            VerifyRequest::Exhaustive => Err(CliError::Budget(format!(
                "exhaustive verification of {pairs} pairs exceeds --max-pairs {}",
                self.budgets.max_pairs
            ))),
            VerifyRequest::Sample { count } => Ok(VerifyMode::Sample {
                count,
                seed: hamrank_core::seed::derive_seed(self.seed, "verify/sample"),
            }),
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), CliError> {
        if dim > self.budgets.max_dim {
            return Err(CliError::Budget(format!(
                "dimension {dim} exceeds --max-dim {}",
                self.budgets.max_dim
            )));
        }
        Ok(())
    }
}
