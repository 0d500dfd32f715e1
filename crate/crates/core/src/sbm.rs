//! Stochastic blockmodel for undirected binary networks, fitted by
//! mean-field variational EM with MAP parameter updates.
//!
//! The objective is the variational lower bound
//!
//! ```text
//! L = sum_i sum_g z_ig log tau_g
//!   + sum_{i<j} sum_{g,h} z_ig z_jh [x_ij log theta_gh + (1 - x_ij) log(1 - theta_gh)]
//!   - sum_i sum_g z_ig log z_ig
//!   + log p(tau) + log p(theta)
//! ```
//!
//! with a Dirichlet prior on `tau` and independent Beta priors on the upper
//! triangle of `theta`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::em::{any_pair_coincides, check_dims, EStep, FitFlags, MixingWeights, MixtureFamily, Responsibilities};
use crate::error::{FitError, Result};
use crate::gmm::EMPTY_MASS;
use crate::lca::THETA_CLAMP;
use crate::math::{log_sum_exp, xlogx, xlogy};

/// Stop the node sweeps once no membership moves by more than this.
pub const VE_TOL: f64 = 1e-6;
pub const VE_MAX_SWEEPS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub tau: MixingWeights,
    /// Symmetric `G x G` connection probabilities.
    pub theta: DMatrix<f64>,
}

impl SbmParams {
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let g = perm.len();
        Self { tau: self.tau.permuted(perm), theta: DMatrix::from_fn(g, g, |a, b| self.theta[(perm[a], perm[b])]) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmPriors {
    pub dirichlet: Vec<f64>,
    pub beta_a: f64,
    pub beta_b: f64,
}

impl SbmPriors {
    /// Dirichlet(1, ..., 1) on the mixing weights, Beta(1, 1) on every connection probability.
    pub fn flat(groups: usize) -> Self {
        Self { dirichlet: vec![1.0; groups], beta_a: 1.0, beta_b: 1.0 }
    }

    pub fn new(dirichlet: Vec<f64>, beta_a: f64, beta_b: f64) -> Result<Self> {
        if dirichlet.is_empty() || dirichlet.iter().chain([&beta_a, &beta_b]).any(|&v| !(v > 0.0)) {
            return Err(FitError::InvalidConfig("prior hyperparameters must be positive".into()));
        }
        Ok(Self { dirichlet, beta_a, beta_b })
    }

    /// Log prior density of `(tau, theta)`.
    pub fn log_density(&self, params: &SbmParams) -> f64 {
        let alpha = &self.dirichlet;
        let tau = params.tau.as_slice();
        let mut lp = ln_gamma(alpha.iter().sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
        lp += alpha.iter().zip(tau).map(|(&a, &t)| xlogy(a - 1.0, t)).sum::<f64>();
        let (a, b) = (self.beta_a, self.beta_b);
        let norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
        let g = params.theta.nrows();
        for r in 0..g {
            for c in r..g {
                let t = params.theta[(r, c)];
                lp += norm + xlogy(a - 1.0, t) + xlogy(b - 1.0, 1.0 - t);
            }
        }
        lp
    }
}

pub fn sbm_param_count(groups: usize) -> usize {
    (groups - 1) + groups * (groups + 1) / 2
}

/// Expected edge counts `E` and dyad counts `N` between blocks.
///
/// Off-diagonal entries count dyads with one end in each block; diagonal
/// entries count dyads inside a block once.
fn block_stats(adj: &DMatrix<f64>, resp: &Responsibilities) -> (DMatrix<f64>, DMatrix<f64>) {
    let z = resp.matrix();
    let mut edges = z.transpose() * adj * z;
    let sums = resp.column_sums();
    let zz = z.transpose() * z;
    let g = resp.groups();
    let mut dyads = DMatrix::from_fn(g, g, |a, b| sums[a] * sums[b] - zz[(a, b)]);
    for k in 0..g {
        edges[(k, k)] *= 0.5;
        dyads[(k, k)] *= 0.5;
    }
    (edges, dyads)
}

fn clamp(t: f64) -> f64 {
    t.clamp(THETA_CLAMP, 1.0 - THETA_CLAMP)
}

/// Checks that `adj` is a symmetric 0/1 matrix with an empty diagonal.
pub fn validate_adjacency(adj: &DMatrix<f64>) -> Result<()> {
    if adj.nrows() != adj.ncols() {
        return Err(FitError::InvalidData(format!("adjacency is {}x{}", adj.nrows(), adj.ncols())));
    }
    for i in 0..adj.nrows() {
        if adj[(i, i)] != 0.0 {
            return Err(FitError::InvalidData(format!("self-loop at node {i}")));
        }
        for j in 0..adj.ncols() {
            let v = adj[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(FitError::InvalidData(format!("entry ({i}, {j}) = {v} is not 0/1")));
            }
            if v != adj[(j, i)] {
                return Err(FitError::InvalidData(format!("asymmetric entry ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Variational lower bound for memberships `resp` and parameters `params`.
pub fn sbm_elbo(adj: &DMatrix<f64>, resp: &Responsibilities, params: &SbmParams, priors: &SbmPriors) -> f64 {
    let (edges, dyads) = block_stats(adj, resp);
    let g = resp.groups();
    let tau = params.tau.as_slice();
    let mut bound: f64 = resp.column_sums().iter().zip(tau).map(|(&s, &t)| xlogy(s, t)).sum();
    for a in 0..g {
        for b in a..g {
            let t = clamp(params.theta[(a, b)]);
            bound += edges[(a, b)] * t.ln() + (dyads[(a, b)] - edges[(a, b)]) * (1.0 - t).ln();
        }
    }
    bound -= resp.matrix().iter().map(|&z| xlogx(z)).sum::<f64>();
    bound + priors.log_density(params)
}

/// Sequential mean-field sweeps, optionally tempered by `nu`.
fn ve_sweeps(adj: &DMatrix<f64>, params: &SbmParams, init: &Responsibilities, nu: f64) -> (Responsibilities, bool) {
    let n = adj.nrows();
    let g = init.groups();
    let log_on = params.theta.map(|t| clamp(t).ln());
    let log_off = params.theta.map(|t| (1.0 - clamp(t)).ln());
    let log_tau: Vec<f64> = params.tau.as_slice().iter().map(|t| t.ln()).collect();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| adj[(i, j)] != 0.0).collect()).collect();

    let mut z = init.matrix().clone();
    let mut totals: Vec<f64> = (0..g).map(|h| z.column(h).sum()).collect();
    let mut nb = vec![0.0; g];
    let mut logits = vec![0.0; g];

    for _ in 0..VE_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            nb.iter_mut().for_each(|v| *v = 0.0);
            for &j in &neighbors[i] {
                for h in 0..g {
                    nb[h] += z[(j, h)];
                }
            }
            for a in 0..g {
                let mut s = log_tau[a];
                for h in 0..g {
                    let rest = totals[h] - z[(i, h)] - nb[h];
                    s += nb[h] * log_on[(a, h)] + rest * log_off[(a, h)];
                }
                logits[a] = nu * s;
            }
            let lse = log_sum_exp(&logits);
            let mut row_sum = 0.0;
            for a in 0..g {
                logits[a] = (logits[a] - lse).exp();
                row_sum += logits[a];
            }
            for a in 0..g {
                let new = logits[a] / row_sum;
                max_change = max_change.max((new - z[(i, a)]).abs());
                totals[a] += new - z[(i, a)];
                z[(i, a)] = new;
            }
        }
        if max_change < VE_TOL {
            return (Responsibilities::from_normalized(z), false);
        }
    }
    (Responsibilities::from_normalized(z), true)
}

/// Variational E-step: node-by-node fixed-point updates starting from `resp_init`.
///
/// Returns the new memberships and whether the sweep cap was hit.
pub fn sbm_ve_step(adj: &DMatrix<f64>, params: &SbmParams, resp_init: &Responsibilities) -> (Responsibilities, bool) {
    ve_sweeps(adj, params, resp_init, 1.0)
}

/// MAP updates of `(tau, theta)` given memberships.
pub fn sbm_m_step(adj: &DMatrix<f64>, resp: &Responsibilities, priors: &SbmPriors) -> Result<SbmParams> {
    StochasticBlock::new(adj, priors.clone())?.m_step(resp)
}

/// Blockmodel family bound to an adjacency matrix.
#[derive(Clone, Debug)]
pub struct StochasticBlock<'a> {
    adj: &'a DMatrix<f64>,
    priors: SbmPriors,
}

impl<'a> StochasticBlock<'a> {
    pub fn new(adj: &'a DMatrix<f64>, priors: SbmPriors) -> Result<Self> {
        validate_adjacency(adj)?;
        Ok(Self { adj, priors })
    }

    pub fn with_flat_priors(adj: &'a DMatrix<f64>, groups: usize) -> Result<Self> {
        Self::new(adj, SbmPriors::flat(groups))
    }

    pub fn priors(&self) -> &SbmPriors {
        &self.priors
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        self.adj
    }

    fn check_groups(&self, groups: usize) -> Result<()> {
        if groups != self.priors.dirichlet.len() {
            return Err(FitError::DimensionMismatch(format!(
                "{} groups but the Dirichlet prior has {} entries",
                groups,
                self.priors.dirichlet.len()
            )));
        }
        Ok(())
    }
}

impl MixtureFamily for StochasticBlock<'_> {
    type Params = SbmParams;

    fn n_obs(&self) -> usize {
        self.adj.nrows()
    }

    fn m_step(&self, resp: &Responsibilities) -> Result<SbmParams> {
        check_dims(self, resp)?;
        self.check_groups(resp.groups())?;
        let masses = resp.column_sums();
        if resp.is_hard() {
            if let Some(g) = masses.iter().position(|&s| s < EMPTY_MASS) {
                return Err(FitError::EmptyCluster(g));
            }
        }
        let tau_mass: Vec<f64> =
            masses.iter().zip(&self.priors.dirichlet).map(|(&s, &a)| (s + a - 1.0).max(0.0)).collect();
        let (edges, dyads) = block_stats(self.adj, resp);
        let (a, b) = (self.priors.beta_a, self.priors.beta_b);
        let g = resp.groups();
        let mut theta = DMatrix::zeros(g, g);
        for r in 0..g {
            for c in r..g {
                let num = edges[(r, c)] + a - 1.0;
                let den = dyads[(r, c)] + a + b - 2.0;
                let t = if den > 0.0 && num >= 0.0 { num / den } else { a / (a + b) };
                theta[(r, c)] = clamp(t);
                theta[(c, r)] = theta[(r, c)];
            }
        }
        Ok(SbmParams { tau: MixingWeights::from_masses(&tau_mass), theta })
    }

    fn e_step(&self, params: &SbmParams, current: &Responsibilities) -> Result<EStep> {
        check_dims(self, current)?;
        let (resp, capped) = ve_sweeps(self.adj, params, current, 1.0);
        let objective = sbm_elbo(self.adj, &resp, params, &self.priors);
        Ok(EStep { resp, objective, inner_loop_capped: capped })
    }

    fn tempered_e_step(&self, params: &SbmParams, current: &Responsibilities, nu: f64) -> Result<Responsibilities> {
        check_dims(self, current)?;
        Ok(ve_sweeps(self.adj, params, current, nu).0)
    }

    fn objective(&self, params: &SbmParams, resp: &Responsibilities) -> f64 {
        sbm_elbo(self.adj, resp, params, &self.priors)
    }

    fn complete_data_loglik(&self, hard: &Responsibilities, params: &SbmParams) -> f64 {
        let (edges, dyads) = block_stats(self.adj, hard);
        let g = hard.groups();
        let tau = params.tau.as_slice();
        let mut total: f64 = hard.column_sums().iter().zip(tau).map(|(&s, &t)| xlogy(s, t)).sum();
        for a in 0..g {
            for b in a..g {
                let t = params.theta[(a, b)];
                total += xlogy(edges[(a, b)], t) + xlogy(dyads[(a, b)] - edges[(a, b)], 1.0 - t);
            }
        }
        total
    }

    fn param_count(&self, groups: usize) -> usize {
        sbm_param_count(groups)
    }

    fn flags(&self, params: &SbmParams) -> FitFlags {
        let t = &params.theta;
        let collapsed =
            any_pair_coincides(t.nrows(), |g, h| (0..t.ncols()).all(|k| (t[(g, k)] - t[(h, k)]).abs() < 1e-6));
        FitFlags { collapsed, ..Default::default() }
    }
}
