use std::fmt;

use embia::init::{AnnealSchedule, BiaConfig, BurninConfig};
use embia::{ConvergenceConfig, CovarianceStructure, DataKind, Dataset};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Gmm,
    Lca,
    Sbm,
}

impl Model {
    pub fn data_kind(self) -> DataKind {
        match self {
            Self::Gmm => DataKind::Continuous,
            Self::Lca => DataKind::Binary,
            Self::Sbm => DataKind::Network,
        }
    }

    pub fn default_convergence(self) -> ConvergenceConfig {
        match self {
            Self::Lca => ConvergenceConfig::categorical(),
            Self::Gmm | Self::Sbm => ConvergenceConfig::continuous(),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gmm => "gmm",
            Self::Lca => "lca",
            Self::Sbm => "sbm",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Random,
    Hclust,
    Burnin,
    Anneal,
    Bia,
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Hclust => "hclust",
            Self::Burnin => "burnin",
            Self::Anneal => "anneal",
            Self::Bia => "bia",
        })
    }
}

/// A start strategy together with its settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitOptions {
    Random,
    Hclust,
    Burnin(BurninConfig),
    Anneal(AnnealSchedule),
    Bia { starts: usize, pre_iterations: usize },
}

impl InitOptions {
    pub fn kind(&self) -> InitKind {
        match self {
            Self::Random => InitKind::Random,
            Self::Hclust => InitKind::Hclust,
            Self::Burnin(_) => InitKind::Burnin,
            Self::Anneal(_) => InitKind::Anneal,
            Self::Bia { .. } => InitKind::Bia,
        }
    }
}

/// Everything needed to reproduce one restart experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: Model,
    /// Covariance structure; only meaningful for Gaussian mixtures.
    pub structure: Option<CovarianceStructure>,
    pub groups: usize,
    pub init: InitOptions,
    pub repetitions: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub max_iter: usize,
}

impl ExperimentSpec {
    /// One random-start repetition with the model's default stopping rule.
    pub fn new(model: Model, groups: usize) -> Self {
        let conv = model.default_convergence();
        Self {
            model,
            structure: (model == Model::Gmm).then_some(CovarianceStructure::Vvv),
            groups,
            init: InitOptions::Random,
            repetitions: 1,
            seed: 0,
            epsilon: conv.epsilon,
            max_iter: conv.max_iter,
        }
    }

    pub fn with_structure(mut self, structure: CovarianceStructure) -> Self {
        self.structure = Some(structure);
        self
    }

    pub fn with_init(mut self, init: InitOptions) -> Self {
        self.init = init;
        self
    }

    pub fn with_repetitions(mut self, repetitions: usize) -> Self {
        self.repetitions = repetitions;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn convergence(&self) -> Result<ConvergenceConfig, HarnessError> {
        ConvergenceConfig::new(self.epsilon, self.max_iter).map_err(|e| HarnessError::Validation(e.to_string()))
    }

    /// Checks internal consistency and, when given, compatibility with a dataset.
    pub fn validate(&self, dataset: Option<&Dataset>) -> Result<(), HarnessError> {
        let invalid = |msg: String| Err(HarnessError::Validation(msg));
        if self.repetitions == 0 {
            return invalid("repetitions must be at least 1".into());
        }
        if self.groups == 0 {
            return invalid("the number of groups must be at least 1".into());
        }
        self.convergence()?;
        match (self.model, self.structure) {
            (Model::Gmm, None) => return invalid("a Gaussian mixture needs a covariance structure".into()),
            (Model::Lca | Model::Sbm, Some(_)) => {
                return invalid(format!("a covariance structure does not apply to {}", self.model))
            }
            _ => {}
        }
        let config_err = |e: embia::FitError| HarnessError::Validation(e.to_string());
        match self.init {
            InitOptions::Hclust if self.model != Model::Gmm => {
                return invalid("hierarchical starts are only offered for continuous data".into())
            }
            InitOptions::Burnin(c) => {
                BurninConfig::new(c.initial_candidates, c.iterations_per_stage, c.retain_fraction)
                    .map_err(config_err)?;
            }
            InitOptions::Anneal(s) => {
                AnnealSchedule::new(s.nu0, s.rate, s.stage).map_err(config_err)?;
            }
            InitOptions::Bia { starts, pre_iterations } => {
                BiaConfig::new(starts, pre_iterations, 0).map_err(config_err)?;
            }
            _ => {}
        }
        if let Some(ds) = dataset {
            if ds.kind != self.model.data_kind() {
                return invalid(format!(
                    "model {} needs {} data, got {} data",
                    self.model,
                    self.model.data_kind(),
                    ds.kind
                ));
            }
            if self.groups > ds.n() {
                return invalid(format!("{} groups requested for {} observations", self.groups, ds.n()));
            }
        }
        Ok(())
    }
}
