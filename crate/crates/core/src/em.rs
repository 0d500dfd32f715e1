//! Family-agnostic EM driver.
//!
//! Every fit starts from a membership matrix: the first M-step derives the
//! initial parameters from it, and E/M cycles alternate until the relative
//! change in the objective drops below `epsilon` or `max_iter` cycles have run.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};

/// Tolerance used when checking that a row of memberships sums to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Slack allowed when checking that an objective trace never decreases.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// An `n x G` row-stochastic matrix of membership probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities(DMatrix<f64>);

impl Responsibilities {
    /// Validates and wraps a membership matrix.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(FitError::InvalidResponsibilities("no groups".into()));
        }
        for i in 0..values.nrows() {
            let mut sum = 0.0;
            for g in 0..values.ncols() {
                let v = values[(i, g)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(FitError::InvalidResponsibilities(format!("entry ({i}, {g}) = {v} outside [0, 1]")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(FitError::InvalidResponsibilities(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self(values))
    }

    /// Wraps a matrix the caller has already normalized.
    pub(crate) fn from_normalized(values: DMatrix<f64>) -> Self {
        debug_assert!(Self::new(values.clone()).is_ok());
        Self(values)
    }

    /// Hard assignment matrix from 0-based labels.
    pub fn from_labels(labels: &[usize], groups: usize) -> Result<Self> {
        let mut m = DMatrix::zeros(labels.len(), groups);
        for (i, &l) in labels.iter().enumerate() {
            if l >= groups {
                return Err(FitError::InvalidResponsibilities(format!("label {l} of row {i} not below {groups}")));
            }
            m[(i, l)] = 1.0;
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn groups(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, g: usize) -> f64 {
        self.0[(i, g)]
    }

    /// Expected group sizes `sum_i z_ig`.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.groups()).map(|g| self.0.column(g).sum()).collect()
    }

    /// True if every entry is exactly 0 or 1.
    pub fn is_hard(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Row-wise argmax; ties go to the lowest index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let mut best = 0;
                for g in 1..self.groups() {
                    if self.0[(i, g)] > self.0[(i, best)] {
                        best = g;
                    }
                }
                best
            })
            .collect()
    }

    /// Returns a copy whose column `g` is this matrix's column `perm[g]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.groups());
        let mut m = DMatrix::zeros(self.n(), self.groups());
        for (g, &src) in perm.iter().enumerate() {
            m.set_column(g, &self.0.column(src));
        }
        Self(m)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Length-`G` vector of group membership probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingWeights(Vec<f64>);

impl MixingWeights {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(FitError::InvalidConfig("empty mixing weights".into()));
        }
        if tau.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(FitError::InvalidConfig(format!("mixing weight out of range: {tau:?}")));
        }
        let s: f64 = tau.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(FitError::InvalidConfig(format!("mixing weights sum to {s}")));
        }
        Ok(Self(tau))
    }

    /// Normalizes nonnegative masses into weights.
    pub fn from_masses(masses: &[f64]) -> Self {
        let total: f64 = masses.iter().sum();
        Self(masses.iter().map(|m| m / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(perm.iter().map(|&p| self.0[p]).collect())
    }
}

/// Stopping rule for EM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub epsilon: f64,
    pub max_iter: usize,
}

impl ConvergenceConfig {
    pub const DEFAULT_MAX_ITER: usize = 10_000;

    pub fn new(epsilon: f64, max_iter: usize) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(FitError::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        if max_iter == 0 {
            return Err(FitError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(Self { epsilon, max_iter })
    }

    /// Defaults for Gaussian mixtures and blockmodels.
    pub fn continuous() -> Self {
        Self { epsilon: 1e-5, max_iter: Self::DEFAULT_MAX_ITER }
    }

    /// Defaults for latent class models.
    pub fn categorical() -> Self {
        Self { epsilon: 1e-9, max_iter: Self::DEFAULT_MAX_ITER }
    }
}

/// Diagnostic flags attached to a fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    /// A covariance needed a ridge to stay positive definite at some
    /// iteration; the trace may then dip by more than the usual slack.
    pub boundary_adjacent: bool,
    /// Some component is too small to be a meaningful cluster.
    pub spurious_candidate: bool,
    /// The variational inner loop hit its sweep cap at least once.
    pub inner_loop_capped: bool,
    /// Two or more components coincide, a symmetric saddle of the likelihood.
    pub collapsed: bool,
}

impl FitFlags {
    pub fn merge(self, other: Self) -> Self {
        Self {
            boundary_adjacent: self.boundary_adjacent || other.boundary_adjacent,
            spurious_candidate: self.spurious_candidate || other.spurious_candidate,
            inner_loop_capped: self.inner_loop_capped || other.inner_loop_capped,
            collapsed: self.collapsed || other.collapsed,
        }
    }
}

/// Output of one E-step.
#[derive(Clone, Debug)]
pub struct EStep {
    pub resp: Responsibilities,
    /// Objective at the parameters the E-step was given (log-likelihood, or
    /// the variational bound evaluated at the new memberships).
    pub objective: f64,
    pub inner_loop_capped: bool,
}

/// The behavior every mixture family provides to the EM driver.
pub trait MixtureFamily: Sync {
    type Params: Clone + fmt::Debug + Send + Sync + Serialize;

    /// Number of observations (rows of the membership matrix).
    fn n_obs(&self) -> usize;

    fn m_step(&self, resp: &Responsibilities) -> Result<Self::Params>;

    /// `current` seeds iterative E-steps and is ignored by closed-form ones.
    fn e_step(&self, params: &Self::Params, current: &Responsibilities) -> Result<EStep>;

    /// E-step with component posteriors raised to the power `nu` before normalizing.
    fn tempered_e_step(&self, params: &Self::Params, current: &Responsibilities, nu: f64) -> Result<Responsibilities>;

    /// Objective reported to the driver for a (params, memberships) pair.
    fn objective(&self, params: &Self::Params, resp: &Responsibilities) -> f64;

    /// `sum_i sum_g z_ig [log tau_g + log P(x_i | theta_g)]` for a hard assignment.
    fn complete_data_loglik(&self, hard: &Responsibilities, params: &Self::Params) -> f64;

    fn param_count(&self, groups: usize) -> usize;

    fn flags(&self, _params: &Self::Params) -> FitFlags {
        FitFlags::default()
    }
}

/// Result of running EM to convergence (or to the iteration cap).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P> {
    pub objective: f64,
    pub trace: Vec<f64>,
    pub responsibilities: Responsibilities,
    pub params: P,
    pub iterations: usize,
    pub converged: bool,
    pub flags: FitFlags,
}

impl<P> FitResult<P> {
    /// True when no step of the trace dropped by more than [`MONOTONE_SLACK`].
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK)
    }
}

/// True when some pair of distinct components `g < h` satisfies `same(g, h)`.
pub(crate) fn any_pair_coincides(groups: usize, same: impl Fn(usize, usize) -> bool) -> bool {
    (0..groups).any(|g| ((g + 1)..groups).any(|h| same(g, h)))
}

/// Relative-change convergence test.
///
/// The denominator is `|l_curr|` so negative log-likelihoods give a
/// positive ratio. When `l_curr` is exactly zero the absolute change is used.
pub fn converged(l_prev: f64, l_curr: f64, epsilon: f64) -> bool {
    let delta = l_curr - l_prev;
    if l_curr == 0.0 {
        delta.abs() < epsilon
    } else {
        delta / l_curr.abs() < epsilon
    }
}

pub(crate) fn check_dims<F: MixtureFamily + ?Sized>(family: &F, z: &Responsibilities) -> Result<()> {
    if z.n() != family.n_obs() {
        return Err(FitError::DimensionMismatch(format!(
            "membership matrix has {} rows, data has {} observations",
            z.n(),
            family.n_obs()
        )));
    }
    if z.groups() == 0 {
        return Err(FitError::DimensionMismatch("zero groups".into()));
    }
    Ok(())
}

/// Runs EM from a starting membership matrix.
///
/// The trace holds the objective after every E+M cycle, starting with the
/// E-step that follows the initial M-step. A run that hits `max_iter` is
/// returned with `converged = false`.
pub fn em_fit<F: MixtureFamily + ?Sized>(
    family: &F,
    z0: &Responsibilities,
    cfg: &ConvergenceConfig,
) -> Result<FitResult<F::Params>> {
    check_dims(family, z0)?;
    let mut params = family.m_step(z0)?;
    let mut est = family.e_step(&params, z0)?;
    let mut capped = est.inner_loop_capped;
    let mut boundary = family.flags(&params).boundary_adjacent;
    let mut trace = vec![est.objective];
    let mut done = false;

    while trace.len() < cfg.max_iter {
        let next_params = family.m_step(&est.resp)?;
        boundary |= family.flags(&next_params).boundary_adjacent;
        let next = family.e_step(&next_params, &est.resp)?;
        let prev = *trace.last().unwrap();
        trace.push(next.objective);
        capped |= next.inner_loop_capped;
        params = next_params;
        est = next;
        if converged(prev, est.objective, cfg.epsilon) {
            done = true;
            break;
        }
    }

    let history = FitFlags { inner_loop_capped: capped, boundary_adjacent: boundary, ..Default::default() };
    let flags = family.flags(&params).merge(history);
    Ok(FitResult {
        objective: *trace.last().unwrap(),
        iterations: trace.len(),
        trace,
        responsibilities: est.resp,
        params,
        converged: done,
        flags,
    })
}

/// Complete-data log-likelihood of a hard assignment.
///
/// Returns `-inf` when an observation is assigned to a component with zero
/// probability.
pub fn complete_data_loglik<F: MixtureFamily + ?Sized>(
    family: &F,
    hard: &Responsibilities,
    params: &F::Params,
) -> Result<f64> {
    check_dims(family, hard)?;
    for i in 0..hard.n() {
        let ones = (0..hard.groups()).filter(|&g| hard.get(i, g) == 1.0).count();
        let zeros = (0..hard.groups()).filter(|&g| hard.get(i, g) == 0.0).count();
        if ones != 1 || ones + zeros != hard.groups() {
            return Err(FitError::InvalidResponsibilities(format!("row {i} is not a hard assignment")));
        }
    }
    Ok(family.complete_data_loglik(hard, params))
}

/// `sum_i sum_g w_ig * log_joint_ig`, skipping zero weights so `0 * -inf = 0`.
pub(crate) fn weighted_sum(weights: &DMatrix<f64>, log_joint: &DMatrix<f64>) -> f64 {
    weights.iter().zip(log_joint.iter()).map(|(&w, &l)| if w == 0.0 { 0.0 } else { w * l }).sum()
}
