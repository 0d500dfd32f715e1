//! Latent class analysis: mixtures of independent Bernoulli products.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::em::{
    any_pair_coincides, check_dims, weighted_sum, EStep, FitFlags, MixingWeights, MixtureFamily, Responsibilities,
};
use crate::error::{FitError, Result};
use crate::gmm::EMPTY_MASS;
use crate::math::softmax_rows;

/// Item probabilities are kept inside `[THETA_CLAMP, 1 - THETA_CLAMP]`.
pub const THETA_CLAMP: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcaParams {
    pub tau: MixingWeights,
    /// `G x M` item probabilities.
    pub theta: DMatrix<f64>,
}

impl LcaParams {
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut theta = DMatrix::zeros(self.theta.nrows(), self.theta.ncols());
        for (g, &p) in perm.iter().enumerate() {
            theta.set_row(g, &self.theta.row(p));
        }
        Self { tau: self.tau.permuted(perm), theta }
    }
}

fn clamp_theta(t: f64) -> f64 {
    t.clamp(THETA_CLAMP, 1.0 - THETA_CLAMP)
}

/// `sum_m [x_m log theta_m + (1 - x_m) log(1 - theta_m)]` with `0 log 0 = 0`.
pub fn lca_log_density(x: &[f64], theta: &[f64]) -> f64 {
    assert_eq!(x.len(), theta.len());
    x.iter()
        .zip(theta)
        .map(|(&xm, &t)| {
            let on = if xm == 0.0 { 0.0 } else { xm * t.ln() };
            let off = if xm == 1.0 { 0.0 } else { (1.0 - xm) * (1.0 - t).ln() };
            on + off
        })
        .sum()
}

pub fn lca_param_count(groups: usize, items: usize) -> usize {
    (groups - 1) + groups * items
}

/// LCA family bound to a binary `n x M` matrix.
#[derive(Clone, Copy, Debug)]
pub struct LatentClass<'a> {
    data: &'a DMatrix<f64>,
}

impl<'a> LatentClass<'a> {
    pub fn new(data: &'a DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(FitError::InvalidData("empty data matrix".into()));
        }
        if let Some(v) = data.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(FitError::InvalidData(format!("binary data contains {v}")));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        self.data
    }

    /// `log tau_g + log P(x_i | theta_g)` for all `i, g`.
    pub fn log_joint(&self, params: &LcaParams) -> DMatrix<f64> {
        let log_on = params.theta.map(|t| clamp_theta(t).ln());
        let log_off = params.theta.map(|t| (1.0 - clamp_theta(t)).ln());
        let ones = DMatrix::from_element(self.data.nrows(), self.data.ncols(), 1.0);
        let mut lj = self.data * log_on.transpose() + (ones - self.data) * log_off.transpose();
        for (g, &t) in params.tau.as_slice().iter().enumerate() {
            let lt = t.ln();
            lj.column_mut(g).add_scalar_mut(lt);
        }
        lj
    }

    pub fn loglik(&self, params: &LcaParams) -> f64 {
        softmax_rows(&self.log_joint(params)).1.iter().sum()
    }
}

pub fn lca_e_step(data: &DMatrix<f64>, params: &LcaParams) -> Result<(Responsibilities, f64)> {
    let fam = LatentClass::new(data)?;
    let (z, norms) = softmax_rows(&fam.log_joint(params));
    Ok((Responsibilities::from_normalized(z), norms.iter().sum()))
}

pub fn lca_m_step(data: &DMatrix<f64>, resp: &Responsibilities) -> Result<LcaParams> {
    LatentClass::new(data)?.m_step(resp)
}

impl MixtureFamily for LatentClass<'_> {
    type Params = LcaParams;

    fn n_obs(&self) -> usize {
        self.data.nrows()
    }

    fn m_step(&self, resp: &Responsibilities) -> Result<LcaParams> {
        check_dims(self, resp)?;
        let masses = resp.column_sums();
        if resp.is_hard() {
            if let Some(g) = masses.iter().position(|&s| s < EMPTY_MASS) {
                return Err(FitError::EmptyCluster(g));
            }
        }
        let n = self.data.nrows() as f64;
        let col_means: Vec<f64> = (0..self.data.ncols()).map(|m| self.data.column(m).sum() / n).collect();
        // G x M weighted item counts
        let counts = resp.matrix().transpose() * self.data;
        let theta = DMatrix::from_fn(resp.groups(), self.data.ncols(), |g, m| {
            if masses[g] > 0.0 {
                clamp_theta(counts[(g, m)] / masses[g])
            } else {
                clamp_theta(col_means[m])
            }
        });
        Ok(LcaParams { tau: MixingWeights::from_masses(&masses), theta })
    }

    fn e_step(&self, params: &LcaParams, _current: &Responsibilities) -> Result<EStep> {
        let (z, norms) = softmax_rows(&self.log_joint(params));
        Ok(EStep {
            resp: Responsibilities::from_normalized(z),
            objective: norms.iter().sum(),
            inner_loop_capped: false,
        })
    }

    fn tempered_e_step(&self, params: &LcaParams, _current: &Responsibilities, nu: f64) -> Result<Responsibilities> {
        let lj = self.log_joint(params) * nu;
        Ok(Responsibilities::from_normalized(softmax_rows(&lj).0))
    }

    fn objective(&self, params: &LcaParams, _resp: &Responsibilities) -> f64 {
        self.loglik(params)
    }

    fn complete_data_loglik(&self, hard: &Responsibilities, params: &LcaParams) -> f64 {
        weighted_sum(hard.matrix(), &self.log_joint(params))
    }

    fn param_count(&self, groups: usize) -> usize {
        lca_param_count(groups, self.data.ncols())
    }

    fn flags(&self, params: &LcaParams) -> FitFlags {
        let theta = &params.theta;
        let collapsed = any_pair_coincides(theta.nrows(), |g, h| {
            (0..theta.ncols()).all(|m| (theta[(g, m)] - theta[(h, m)]).abs() < 1e-6)
        });
        FitFlags { collapsed, ..Default::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_binary(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |i, j| f64::from(rng.gen_bool(if (i + j) % 3 == 0 { 0.8 } else { 0.3 })))
    }

    fn random_resp(n: usize, g: usize, seed: u64) -> Responsibilities {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(n, g, |_, _| rng.gen_range(0.05..1.0));
        for i in 0..n {
            let s: f64 = m.row(i).sum();
            for k in 0..g {
                m[(i, k)] /= s;
            }
            crate::math::renormalize_row(&mut m, i);
        }
        Responsibilities::new(m).unwrap()
    }

    #[test]
    fn density_examples() {
        let half = [0.5; 7];
        for x in [[0.0; 7], [1.0; 7], [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]] {
            assert!((lca_log_density(&x, &half) + 7.0 * 2f64.ln()).abs() < 1e-12);
        }
        assert!((-7.0 * 2f64.ln() + 4.8520).abs() < 1e-4);
        assert_eq!(lca_log_density(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn density_matches_product_form() {
        let x = [1.0, 0.0, 0.0, 1.0, 1.0];
        let t = [0.3, 0.9, 0.05, 0.6, 0.42];
        let prod: f64 = x.iter().zip(&t).map(|(&xm, &tm)| if xm == 1.0 { tm } else { 1.0 - tm }).product();
        assert!((lca_log_density(&x, &t) - prod.ln()).abs() < 1e-14);
    }

    #[test]
    fn param_counts() {
        assert_eq!(lca_param_count(4, 7), 31);
        assert_eq!(lca_param_count(3, 6), 20);
        assert_eq!(lca_param_count(1, 1), 1);
    }

    #[test]
    fn identical_rows_give_uniform_memberships() {
        let x = random_binary(9, 4, 1);
        let p = LcaParams {
            tau: MixingWeights::from_masses(&[1.0, 1.0, 1.0]),
            theta: DMatrix::from_fn(3, 4, |_, m| 0.2 + 0.1 * m as f64),
        };
        let (r, _) = lca_e_step(&x, &p).unwrap();
        assert!(r.matrix().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn three_observation_toy() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let p = LcaParams {
            tau: MixingWeights::new(vec![0.25, 0.75]).unwrap(),
            theta: DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.6]),
        };
        let (r, ll) = lca_e_step(&x, &p).unwrap();
        // hand evaluation
        let joint = [
            [0.25 * 0.9 * 0.8, 0.75 * 0.1 * 0.4],
            [0.25 * 0.9 * 0.2, 0.75 * 0.1 * 0.6],
            [0.25 * 0.1 * 0.8, 0.75 * 0.9 * 0.4],
        ];
        let mut ll_hand = 0.0;
        for (i, row) in joint.iter().enumerate() {
            let s: f64 = row[0] + row[1];
            ll_hand += s.ln();
            assert!((r.get(i, 0) - row[0] / s).abs() < 1e-14);
        }
        assert!((ll - ll_hand).abs() < 1e-13);
    }

    #[test]
    fn m_step_degenerate_cases() {
        let x = random_binary(20, 5, 2);
        let means: Vec<f64> = (0..5).map(|m| x.column(m).sum() / 20.0).collect();
        let hard = Responsibilities::from_labels(&vec![0; 20], 1).unwrap();
        let p = lca_m_step(&x, &hard).unwrap();
        for m in 0..5 {
            assert!((p.theta[(0, m)] - clamp_theta(means[m])).abs() < 1e-14);
        }
        let uni = Responsibilities::new(DMatrix::from_element(20, 3, 1.0 / 3.0)).unwrap();
        let p = lca_m_step(&x, &uni).unwrap();
        for g in 0..3 {
            for m in 0..5 {
                assert!((p.theta[(g, m)] - clamp_theta(means[m])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn m_step_output_is_clamped_and_e_step_is_finite() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let z = Responsibilities::from_labels(&[0, 0, 1, 1], 2).unwrap();
        let p = lca_m_step(&x, &z).unwrap();
        assert!(p.theta.iter().all(|&t| (THETA_CLAMP..=1.0 - THETA_CLAMP).contains(&t)));
        let boundary = LcaParams { tau: p.tau.clone(), theta: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]) };
        let (r, ll) = lca_e_step(&x, &boundary).unwrap();
        assert!(ll.is_finite());
        assert!(r.matrix().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn loglik_matches_brute_force() {
        let x = random_binary(12, 3, 3);
        let z = random_resp(12, 2, 4);
        let p = lca_m_step(&x, &z).unwrap();
        let (_, ll) = lca_e_step(&x, &p).unwrap();
        let brute: f64 = (0..12)
            .map(|i| {
                (0..2)
                    .map(|g| {
                        let mut pr = p.tau.as_slice()[g];
                        for m in 0..3 {
                            let t = p.theta[(g, m)];
                            pr *= if x[(i, m)] == 1.0 { t } else { 1.0 - t };
                        }
                        pr
                    })
                    .sum::<f64>()
                    .ln()
            })
            .sum();
        assert!((ll - brute).abs() < 1e-10);
    }

    #[test]
    fn m_step_beats_perturbations() {
        let x = random_binary(30, 4, 5);
        let z = random_resp(30, 3, 6);
        let fam = LatentClass::new(&x).unwrap();
        let p = fam.m_step(&z).unwrap();
        let q = |p: &LcaParams| weighted_sum(z.matrix(), &fam.log_joint(p));
        let best = q(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let masses: Vec<f64> =
                p.tau.as_slice().iter().map(|t| (t + rng.gen_range(-0.03..0.03)).max(1e-3)).collect();
            let pp = LcaParams {
                tau: MixingWeights::from_masses(&masses),
                theta: p.theta.map(|t| (t + rng.gen_range(-0.05..0.05)).clamp(0.001, 0.999)),
            };
            assert!(q(&pp) <= best + 1e-9);
        }
    }

    #[test]
    fn permutation_invariance() {
        let x = random_binary(15, 4, 8);
        let p = lca_m_step(&x, &random_resp(15, 3, 9)).unwrap();
        let fam = LatentClass::new(&x).unwrap();
        assert!((fam.loglik(&p) - fam.loglik(&p.permuted(&[1, 2, 0]))).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_binary() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        assert!(LatentClass::new(&x).is_err());
    }
}
