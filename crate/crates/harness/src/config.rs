//! Experiment configuration. Every run writes its fully resolved config next
//! to its outputs, so a config file plus a seed reproduces the run.

use std::fmt;
use std::str::FromStr;

use lll_core::environments::{Domain, GenerationConfig};
use lll_core::learners::{LogisticOptions, PgOptions};
use lll_core::lifelong::{Hyper, Mode};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::io::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Tadell,
    Ella,
    Tademtl,
    Gomtl,
    Stl,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Tadell, Algo::Ella, Algo::Tademtl, Algo::Gomtl, Algo::Stl];

    pub fn tag(self) -> &'static str {
        match self {
            Algo::Tadell => "tadell",
            Algo::Ella => "ella",
            Algo::Tademtl => "tademtl",
            Algo::Gomtl => "gomtl",
            Algo::Stl => "stl",
        }
    }

    /// Dictionary mode, or `None` for the independent baseline.
    pub fn mode(self) -> Option<Mode> {
        match self {
            Algo::Tadell | Algo::Tademtl => Some(Mode::Tadell),
            Algo::Ella | Algo::Gomtl => Some(Mode::Ella),
            Algo::Stl => None,
        }
    }

    pub fn is_batch(self) -> bool {
        matches!(self, Algo::Tademtl | Algo::Gomtl)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algo {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Algo::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Raw physical parameters.
    #[default]
    None,
    /// Per-dimension min–max scaling to `[0, 1]` using the generation ranges.
    MinMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DescriptorOptions {
    #[serde(default)]
    pub scaling: Scaling,
    /// Descriptor dimensions kept; `None` keeps all of them.
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedOptions {
    /// Ridge / L2 weight of the single-task objectives.
    pub reg: f64,
    #[serde(default)]
    pub logistic: LogisticOptions,
    /// Fresh samples per task used to measure accuracy or MSE.
    pub eval_samples: usize,
}

impl Default for SupervisedOptions {
    fn default() -> Self {
        SupervisedOptions {
            reg: 0.01,
            logistic: LogisticOptions::default(),
            eval_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSettings {
    pub outer_iters: usize,
    pub tol: f64,
}

impl Default for BatchSettings {
    fn default() -> Self {
        BatchSettings { outer_iters: 100, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlSettings {
    #[serde(flatten)]
    pub pg: PgOptions,
    /// Standard deviation of the Gaussian random policy used as the
    /// reference initialization for jumpstart and cold starts.
    pub random_init_scale: f64,
}

impl Default for RlSettings {
    fn default() -> Self {
        RlSettings {
            pg: PgOptions::default(),
            random_init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub domain: Domain,
    pub algo: Algo,
    pub n_tasks: usize,
    pub n_heldout: usize,
    pub seed: u64,
    pub hyper: Hyper,
    #[serde(default)]
    pub rl: RlSettings,
    #[serde(default)]
    pub supervised: SupervisedOptions,
    #[serde(default)]
    pub batch: BatchSettings,
    #[serde(default)]
    pub descriptors: DescriptorOptions,
    #[serde(default)]
    pub generation: GenerationConfig,
    /// Turn unconverged solver results into errors.
    #[serde(default)]
    pub strict: bool,
}

impl ExperimentConfig {
    /// Tuned defaults per domain.
    pub fn for_domain(domain: Domain) -> Self {
        let mut cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            domain,
            algo: Algo::Tadell,
            n_tasks: 40,
            n_heldout: 40,
            seed: 0,
            hyper: Hyper::default(),
            rl: RlSettings::default(),
            supervised: SupervisedOptions::default(),
            batch: BatchSettings::default(),
            descriptors: DescriptorOptions::default(),
            generation: GenerationConfig::default(),
            strict: false,
        };
        match domain {
            Domain::Sm | Domain::Cp | Domain::Bk => {
                cfg.hyper.k = 2;
            }
            Domain::Robot => {
                cfg.n_tasks = 200;
                cfg.n_heldout = 200;
                cfg.hyper = Hyper { k: 20, mu: 1e-4, lambda: 1e-4, rho: Some(5.0), ..cfg.hyper };
                cfg.descriptors.scaling = Scaling::MinMax;
            }
            Domain::Synth1 => {
                cfg.n_tasks = 100;
                cfg.n_heldout = 100;
                cfg.hyper = Hyper { k: 8, mu: 1e-4, lambda: 1e-4, rho: Some(1.0), ..cfg.hyper };
            }
            Domain::Synth2 => {
                cfg.n_tasks = 100;
                cfg.n_heldout = 100;
                cfg.hyper = Hyper { k: 6, mu: 0.01, lambda: 0.01, rho: None, ..cfg.hyper };
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.hyper
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.n_tasks == 0 {
            return Err(HarnessError::Config("n_tasks must be >= 1".into()));
        }
        if let Some(mask) = &self.descriptors.mask {
            let dm = self.domain.descriptor_dim(&self.generation.synth2);
            if mask.len() != dm {
                return Err(HarnessError::Config(format!(
                    "descriptor mask has length {} but the domain has {dm} descriptors",
                    mask.len()
                )));
            }
            if !mask.iter().any(|b| *b) {
                return Err(HarnessError::Config("descriptor mask keeps nothing".into()));
            }
        }
        Ok(())
    }
}
