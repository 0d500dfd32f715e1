//! Multivariate Gaussian mixtures with unconstrained (`VVV`) or
//! equal-volume, equal-shape, varying-orientation (`EEV`) covariances.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::em::{any_pair_coincides, weighted_sum, EStep, FitFlags, MixingWeights, MixtureFamily, Responsibilities};
use crate::error::{FitError, Result};
use crate::math::softmax_rows;

/// Column sums below this are treated as empty components.
pub const EMPTY_MASS: f64 = 1e-10;
/// Relative eigenvalue floor that triggers the covariance ridge.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Ridge size, relative to `trace / m`.
pub const RIDGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CovarianceStructure {
    /// Each component has its own full covariance.
    Vvv,
    /// Shared eigenvalue spectrum, per-component orientation.
    Eev,
}

impl std::str::FromStr for CovarianceStructure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "VVV" => Ok(Self::Vvv),
            "EEV" => Ok(Self::Eev),
            other => Err(format!("unknown covariance structure {other:?} (expected VVV or EEV)")),
        }
    }
}

impl std::fmt::Display for CovarianceStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Vvv => "VVV",
            Self::Eev => "EEV",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub tau: MixingWeights,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub structure: CovarianceStructure,
    /// Set when at least one covariance needed the diagonal ridge.
    pub regularized: bool,
}

impl GaussianParams {
    pub fn groups(&self) -> usize {
        self.means.len()
    }

    /// Relabels components so new component `g` is old component `perm[g]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            tau: self.tau.permuted(perm),
            means: perm.iter().map(|&p| self.means[p].clone()).collect(),
            covariances: perm.iter().map(|&p| self.covariances[p].clone()).collect(),
            structure: self.structure,
            regularized: self.regularized,
        }
    }
}

/// Cached Cholesky factor of one covariance.
struct Factor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Factor {
    fn new(sigma: &DMatrix<f64>, component: usize) -> Result<Self> {
        let chol = sigma.clone().cholesky().ok_or(FitError::Singular(component))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { chol, log_det })
    }

    fn log_density(&self, x: &[f64], mu: &DVector<f64>) -> f64 {
        let m = mu.len();
        let d = DVector::from_iterator(m, x.iter().zip(mu.iter()).map(|(a, b)| a - b));
        let y = self.chol.l_dirty().solve_lower_triangular(&d).expect("nonzero diagonal");
        -0.5 * (m as f64 * (2.0 * PI).ln() + self.log_det + y.norm_squared())
    }
}

/// `log N(x; mu, sigma)`.
pub fn gmm_log_density(x: &[f64], mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mu.len() || sigma.shape() != (mu.len(), mu.len()) {
        return Err(FitError::DimensionMismatch(format!(
            "x has length {}, mu {}, sigma {:?}",
            x.len(),
            mu.len(),
            sigma.shape()
        )));
    }
    Ok(Factor::new(sigma, 0)?.log_density(x, mu))
}

/// Number of free parameters.
pub fn gmm_param_count(structure: CovarianceStructure, groups: usize, m: usize) -> usize {
    let base = (groups - 1) + groups * m;
    match structure {
        CovarianceStructure::Vvv => base + groups * m * (m + 1) / 2,
        CovarianceStructure::Eev => base + m + groups * m * (m - 1) / 2,
    }
}

/// Sum of squared Euclidean distances from each point to its cluster mean.
///
/// Labels are 0-based.
pub fn within_cluster_ss(data: &DMatrix<f64>, labels: &[usize]) -> f64 {
    assert_eq!(data.nrows(), labels.len());
    let groups = labels.iter().copied().max().map_or(0, |g| g + 1);
    let m = data.ncols();
    let mut sums = vec![vec![0.0; m]; groups];
    let mut counts = vec![0usize; groups];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..m {
            sums[l][j] += data[(i, j)];
        }
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            (0..m)
                .map(|j| {
                    let d = data[(i, j)] - sums[l][j] / counts[l] as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .sum()
}

/// Gaussian mixture family bound to a continuous data matrix (`n x m`).
#[derive(Clone, Copy, Debug)]
pub struct GaussianMixture<'a> {
    data: &'a DMatrix<f64>,
    structure: CovarianceStructure,
}

impl<'a> GaussianMixture<'a> {
    pub fn new(data: &'a DMatrix<f64>, structure: CovarianceStructure) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(FitError::InvalidData("empty data matrix".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidData("non-finite entry".into()));
        }
        Ok(Self { data, structure })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        self.data
    }

    pub fn structure(&self) -> CovarianceStructure {
        self.structure
    }

    fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// `log tau_g + log N(x_i; mu_g, Sigma_g)` for every observation and component.
    pub fn log_joint(&self, params: &GaussianParams) -> Result<DMatrix<f64>> {
        let n = self.data.nrows();
        let g = params.groups();
        let factors =
            params.covariances.iter().enumerate().map(|(k, s)| Factor::new(s, k)).collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros(n, g);
        let mut x = vec![0.0; self.dim()];
        for i in 0..n {
            for (j, slot) in x.iter_mut().enumerate() {
                *slot = self.data[(i, j)];
            }
            for k in 0..g {
                out[(i, k)] = params.tau.as_slice()[k].ln() + factors[k].log_density(&x, &params.means[k]);
            }
        }
        Ok(out)
    }

    /// Observed-data log-likelihood.
    pub fn loglik(&self, params: &GaussianParams) -> Result<f64> {
        let (_, norms) = softmax_rows(&self.log_joint(params)?);
        Ok(norms.iter().sum())
    }

    /// Pooled covariance of the whole sample, used when a soft component has no mass.
    fn sample_scale(&self) -> f64 {
        let n = self.data.nrows() as f64;
        let m = self.dim();
        (0..m)
            .map(|j| {
                let col = self.data.column(j);
                let mean = col.sum() / n;
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
            })
            .sum::<f64>()
            / m as f64
    }

    fn weighted_scatter(&self, resp: &Responsibilities, g: usize, mean: &DVector<f64>) -> DMatrix<f64> {
        let (n, m) = self.data.shape();
        let mut centered = DMatrix::zeros(n, m);
        let mut weighted = DMatrix::zeros(n, m);
        for i in 0..n {
            let w = resp.get(i, g);
            for j in 0..m {
                let d = self.data[(i, j)] - mean[j];
                centered[(i, j)] = d;
                weighted[(i, j)] = w * d;
            }
        }
        let w = centered.transpose() * weighted;
        (&w + w.transpose()) * 0.5
    }
}

/// Sorted (descending) eigen-decomposition of a symmetric matrix.
fn sorted_eigen(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = mat.clone().symmetric_eigen();
    let m = mat.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(m, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Applies the ridge if the smallest eigenvalue is too small relative to the trace.
fn regularize(sigma: &mut DMatrix<f64>, fallback_scale: f64) -> bool {
    let m = sigma.nrows();
    let mut scale = sigma.trace() / m as f64;
    if !(scale > 0.0) {
        scale = fallback_scale;
    }
    let min_eig = sigma.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < EIGEN_FLOOR * scale {
        for j in 0..m {
            sigma[(j, j)] += RIDGE * scale;
        }
        true
    } else {
        false
    }
}

/// M-step: mixing weights, weighted means, and the structured covariance update.
pub fn gmm_m_step(
    data: &DMatrix<f64>,
    resp: &Responsibilities,
    structure: CovarianceStructure,
) -> Result<GaussianParams> {
    GaussianMixture::new(data, structure)?.m_step(resp)
}

/// E-step: memberships and the observed-data log-likelihood.
pub fn gmm_e_step(data: &DMatrix<f64>, params: &GaussianParams) -> Result<(Responsibilities, f64)> {
    let fam = GaussianMixture::new(data, params.structure)?;
    let (z, norms) = softmax_rows(&fam.log_joint(params)?);
    Ok((Responsibilities::from_normalized(z), norms.iter().sum()))
}

impl MixtureFamily for GaussianMixture<'_> {
    type Params = GaussianParams;

    fn n_obs(&self) -> usize {
        self.data.nrows()
    }

    fn m_step(&self, resp: &Responsibilities) -> Result<GaussianParams> {
        crate::em::check_dims(self, resp)?;
        let (n, m) = self.data.shape();
        let groups = resp.groups();
        let masses = resp.column_sums();
        if resp.is_hard() {
            if let Some(g) = masses.iter().position(|&s| s < EMPTY_MASS) {
                return Err(FitError::EmptyCluster(g));
            }
        }
        let grand_mean = DVector::from_iterator(m, (0..m).map(|j| self.data.column(j).sum() / n as f64));
        let means: Vec<DVector<f64>> = (0..groups)
            .map(|g| {
                if masses[g] <= 0.0 {
                    return grand_mean.clone();
                }
                let mut mu = DVector::zeros(m);
                for i in 0..n {
                    let w = resp.get(i, g);
                    if w != 0.0 {
                        for j in 0..m {
                            mu[j] += w * self.data[(i, j)];
                        }
                    }
                }
                mu / masses[g]
            })
            .collect();
        let scatters: Vec<DMatrix<f64>> = (0..groups).map(|g| self.weighted_scatter(resp, g, &means[g])).collect();

        let fallback = self.sample_scale().max(f64::MIN_POSITIVE);
        let mut covariances: Vec<DMatrix<f64>> = match self.structure {
            CovarianceStructure::Vvv => scatters
                .iter()
                .zip(&masses)
                .map(|(w, &s)| if s > 0.0 { w / s } else { DMatrix::identity(m, m) * fallback })
                .collect(),
            CovarianceStructure::Eev => {
                let decomps: Vec<_> = scatters.iter().map(sorted_eigen).collect();
                let mut shared = DVector::zeros(m);
                for (values, _) in &decomps {
                    shared += values.map(|v| v.max(0.0));
                }
                shared /= n as f64;
                decomps
                    .iter()
                    .map(|(_, vectors)| {
                        let s = vectors * DMatrix::from_diagonal(&shared) * vectors.transpose();
                        (&s + s.transpose()) * 0.5
                    })
                    .collect()
            }
        };
        let mut regularized = false;
        for sigma in &mut covariances {
            regularized |= regularize(sigma, fallback);
        }
        Ok(GaussianParams {
            tau: MixingWeights::from_masses(&masses),
            means,
            covariances,
            structure: self.structure,
            regularized,
        })
    }

    fn e_step(&self, params: &GaussianParams, _current: &Responsibilities) -> Result<EStep> {
        let (z, norms) = softmax_rows(&self.log_joint(params)?);
        Ok(EStep {
            resp: Responsibilities::from_normalized(z),
            objective: norms.iter().sum(),
            inner_loop_capped: false,
        })
    }

    fn tempered_e_step(
        &self,
        params: &GaussianParams,
        _current: &Responsibilities,
        nu: f64,
    ) -> Result<Responsibilities> {
        let lj = self.log_joint(params)? * nu;
        Ok(Responsibilities::from_normalized(softmax_rows(&lj).0))
    }

    fn objective(&self, params: &GaussianParams, _resp: &Responsibilities) -> f64 {
        self.loglik(params).unwrap_or(f64::NEG_INFINITY)
    }

    fn complete_data_loglik(&self, hard: &Responsibilities, params: &GaussianParams) -> f64 {
        match self.log_joint(params) {
            Ok(lj) => weighted_sum(hard.matrix(), &lj),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn param_count(&self, groups: usize) -> usize {
        gmm_param_count(self.structure, groups, self.dim())
    }

    fn flags(&self, params: &GaussianParams) -> FitFlags {
        let n = self.n_obs() as f64;
        let m = self.dim() as f64;
        let spurious = params.tau.as_slice().iter().any(|&t| n * t < m + 1.0);
        let spread = self.sample_scale().sqrt().max(f64::MIN_POSITIVE);
        let collapsed = any_pair_coincides(params.groups(), |g, h| {
            (&params.means[g] - &params.means[h]).norm() < 1e-6 * spread
                && (&params.covariances[g] - &params.covariances[h]).norm() < 1e-6 * spread * spread
        });
        FitFlags {
            boundary_adjacent: params.regularized,
            spurious_candidate: spurious,
            collapsed,
            ..Default::default()
        }
    }
}
