//! Bayesian initialization averaging.
//!
//! Many random starts are run for a few EM cycles, relabeled to agree with the
//! best of them, weighted by `exp(-BIC*/2)`, and averaged into a single soft
//! start from which one full EM run is made.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{align_labels, random_z, stream_rng};
use crate::em::{em_fit, ConvergenceConfig, FitResult, MixtureFamily, Responsibilities};
use crate::error::{FitError, Result};
use crate::math::renormalize_row;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiaConfig {
    pub num_starts: usize,
    pub pre_iterations: usize,
    pub seed: u64,
}

impl BiaConfig {
    pub fn new(num_starts: usize, pre_iterations: usize, seed: u64) -> Result<Self> {
        if num_starts < 2 {
            return Err(FitError::InvalidConfig(format!("BIA needs at least 2 starts, got {num_starts}")));
        }
        if pre_iterations == 0 {
            return Err(FitError::InvalidConfig("BIA needs at least one preliminary iteration".into()));
        }
        Ok(Self { num_starts, pre_iterations, seed })
    }
}

/// BIC evaluated at a pre-convergence objective.
pub fn bic_star(loglik: f64, params: usize, n: usize) -> f64 {
    -2.0 * loglik + params as f64 * (n as f64).ln()
}

/// Normalized `exp(-BIC*/2)` weights, shifted by the smallest BIC* so the
/// largest exponent is zero.
pub fn bia_weights(bic_values: &[f64]) -> Vec<f64> {
    assert!(!bic_values.is_empty(), "no BIC values to weight");
    let min = bic_values.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = bic_values.iter().map(|b| (-0.5 * (b - min)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Weighted average of already-aligned membership matrices.
pub fn bia_average(z_list: &[Responsibilities], weights: &[f64]) -> Result<Responsibilities> {
    let first = z_list.first().ok_or_else(|| FitError::InvalidConfig("no matrices to average".into()))?;
    if weights.len() != z_list.len() {
        return Err(FitError::DimensionMismatch(format!("{} matrices but {} weights", z_list.len(), weights.len())));
    }
    if let Some(z) = z_list.iter().find(|z| z.n() != first.n() || z.groups() != first.groups()) {
        return Err(FitError::DimensionMismatch(format!(
            "matrix of shape {}x{} does not match {}x{}",
            z.n(),
            z.groups(),
            first.n(),
            first.groups()
        )));
    }
    let mut avg = first.matrix() * 0.0;
    for (z, &w) in z_list.iter().zip(weights) {
        if w != 0.0 {
            avg += z.matrix() * w;
        }
    }
    for i in 0..avg.nrows() {
        renormalize_row(&mut avg, i);
    }
    avg.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Responsibilities::new(avg)
}

/// The averaged start together with how it was formed.
#[derive(Clone, Debug, Serialize)]
pub struct BiaStart {
    pub z_star: Responsibilities,
    /// Weights of the surviving candidates, in candidate order.
    pub weights: Vec<f64>,
    /// Pre-convergence objectives of the surviving candidates.
    pub objectives: Vec<f64>,
    /// Index (among survivors) of the alignment reference.
    pub reference: usize,
    pub survivors: usize,
}

/// Runs the preliminary cycles on each start and forms the weighted average.
///
/// Candidates that fail (for example with an empty component) are dropped and
/// the weights renormalized over the rest.
pub fn bia_prepare<F: MixtureFamily + ?Sized>(
    family: &F,
    starts: &[Responsibilities],
    pre_iterations: usize,
    epsilon: f64,
) -> Result<BiaStart> {
    let prelim = ConvergenceConfig::new(epsilon, pre_iterations)?;
    let runs: Vec<(Responsibilities, f64)> = starts
        .par_iter()
        .map(|z| em_fit(family, z, &prelim).map(|fit| (fit.responsibilities, fit.objective)))
        .collect::<Vec<_>>()
        .into_iter()
        .filter_map(|r| r.ok())
        .filter(|(_, obj)| obj.is_finite())
        .collect();
    if runs.len() < 2 {
        return Err(FitError::TooFewCandidates { survivors: runs.len() });
    }

    let mut reference = 0;
    for (j, (_, obj)) in runs.iter().enumerate() {
        if *obj > runs[reference].1 {
            reference = j;
        }
    }
    let aligned: Vec<Responsibilities> = runs.iter().map(|(z, _)| align_labels(&runs[reference].0, z)).collect();

    let groups = starts[0].groups();
    let p = family.param_count(groups);
    let n = family.n_obs();
    let objectives: Vec<f64> = runs.iter().map(|(_, o)| *o).collect();
    let bics: Vec<f64> = objectives.iter().map(|&l| bic_star(l, p, n)).collect();
    let weights = bia_weights(&bics);
    let z_star = bia_average(&aligned, &weights)?;
    Ok(BiaStart { z_star, weights, objectives, reference, survivors: runs.len() })
}

/// Full BIA from caller-supplied starts: prepare the averaged start, then run EM from it.
pub fn bia_from_starts<F: MixtureFamily + ?Sized>(
    family: &F,
    starts: &[Responsibilities],
    pre_iterations: usize,
    cfg: &ConvergenceConfig,
) -> Result<FitResult<F::Params>> {
    let start = bia_prepare(family, starts, pre_iterations, cfg.epsilon)?;
    em_fit(family, &start.z_star, cfg)
}

/// Full BIA from random starts; start `j` draws from stream `j` of `cfg.seed`.
pub fn bia_init<F: MixtureFamily + ?Sized>(
    family: &F,
    groups: usize,
    cfg: &BiaConfig,
    conv: &ConvergenceConfig,
) -> Result<FitResult<F::Params>> {
    let starts = (0..cfg.num_starts)
        .map(|j| random_z(family.n_obs(), groups, &mut stream_rng(cfg.seed, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    bia_from_starts(family, &starts, cfg.pre_iterations, conv)
}
