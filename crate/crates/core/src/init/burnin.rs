//! Pyramid burn-in: run many starts briefly, keep the best fraction, repeat.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{random_z, run_cycles};
use crate::em::{MixtureFamily, Responsibilities};
use crate::error::{FitError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurninConfig {
    pub initial_candidates: usize,
    pub iterations_per_stage: usize,
    pub retain_fraction: f64,
}

impl BurninConfig {
    pub fn new(initial_candidates: usize, iterations_per_stage: usize, retain_fraction: f64) -> Result<Self> {
        if initial_candidates == 0 || iterations_per_stage == 0 {
            return Err(FitError::InvalidConfig("burn-in counts must be positive".into()));
        }
        if !(retain_fraction > 0.0 && retain_fraction < 1.0) {
            return Err(FitError::InvalidConfig(format!("retain fraction must lie in (0, 1), got {retain_fraction}")));
        }
        Ok(Self { initial_candidates, iterations_per_stage, retain_fraction })
    }

    /// Survivors after a stage that started with `k` candidates.
    pub fn survivors(&self, k: usize) -> usize {
        if k <= 1 {
            return 1;
        }
        let keep = (self.retain_fraction * k as f64).ceil() as usize;
        keep.clamp(1, k - 1)
    }
}

/// Returns the memberships of the last surviving candidate.
///
/// Candidates whose M-step fails are dropped rather than aborting the pyramid.
pub fn burnin_pyramid<F, R>(family: &F, groups: usize, cfg: &BurninConfig, rng: &mut R) -> Result<Responsibilities>
where
    F: MixtureFamily + ?Sized,
    R: Rng + ?Sized,
{
    let starts =
        (0..cfg.initial_candidates).map(|_| random_z(family.n_obs(), groups, rng)).collect::<Result<Vec<_>>>()?;
    burnin_from_starts(family, starts, cfg)
}

pub(crate) fn burnin_from_starts<F: MixtureFamily + ?Sized>(
    family: &F,
    starts: Vec<Responsibilities>,
    cfg: &BurninConfig,
) -> Result<Responsibilities> {
    let mut alive = starts;
    loop {
        let mut ranked: Vec<(usize, Responsibilities, f64)> = alive
            .par_iter()
            .enumerate()
            .map(|(idx, z)| run_cycles(family, z, cfg.iterations_per_stage).map(|(z, obj)| (idx, z, obj)))
            .collect::<Vec<_>>()
            .into_iter()
            .filter_map(|r| r.ok())
            .filter(|(_, _, obj)| !obj.is_nan())
            .collect();
        if ranked.is_empty() {
            return Err(FitError::NoSurvivingCandidates);
        }
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        let keep = cfg.survivors(ranked.len());
        ranked.truncate(keep);
        if ranked.len() == 1 {
            return Ok(ranked.pop().unwrap().1);
        }
        alive = ranked.into_iter().map(|(_, z, _)| z).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{em_fit, ConvergenceConfig};
    use crate::gmm::{CovarianceStructure, GaussianMixture};
    use crate::init::stream_rng;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, Normal};

    fn two_cluster_data(seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        DMatrix::from_fn(80, 2, |i, j| noise.sample(&mut rng) + if i < 40 { 0.0 } else { 4.0 + j as f64 })
    }

    #[test]
    fn survivor_counts_strictly_decrease() {
        let cfg = BurninConfig::new(16, 5, 0.5).unwrap();
        assert_eq!(cfg.survivors(16), 8);
        assert_eq!(cfg.survivors(3), 2);
        assert_eq!(cfg.survivors(1), 1);
        let cfg = BurninConfig::new(4, 5, 0.9).unwrap();
        assert_eq!(cfg.survivors(2), 1);
        assert_eq!(cfg.survivors(4), 3);
    }

    #[test]
    fn single_candidate_runs_one_stage() {
        let x = two_cluster_data(1);
        let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
        let z0 = random_z(80, 2, &mut stream_rng(2, 0)).unwrap();
        let cfg = BurninConfig::new(1, 3, 0.5).unwrap();
        let got = burnin_from_starts(&fam, vec![z0.clone()], &cfg).unwrap();
        assert_eq!(got, run_cycles(&fam, &z0, 3).unwrap().0);
    }

    #[test]
    fn optimum_survives() {
        let x = two_cluster_data(3);
        let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
        let truth: Vec<usize> = (0..80).map(|i| usize::from(i >= 40)).collect();
        let good = em_fit(&fam, &Responsibilities::from_labels(&truth, 2).unwrap(), &ConvergenceConfig::continuous())
            .unwrap()
            .responsibilities;
        // a poor start: alternate labels
        let bad = Responsibilities::from_labels(&(0..80).map(|i| i % 2).collect::<Vec<_>>(), 2).unwrap();
        let cfg = BurninConfig::new(2, 1, 0.5).unwrap();
        let winner = burnin_from_starts(&fam, vec![bad, good.clone()], &cfg).unwrap();
        assert!(winner.max_abs_diff(&run_cycles(&fam, &good, 1).unwrap().0) < 1e-12);
    }

    #[test]
    fn failing_candidates_are_dropped() {
        let x = two_cluster_data(4);
        let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
        let empty = Responsibilities::from_labels(&vec![0; 80], 2).unwrap();
        let ok = random_z(80, 2, &mut stream_rng(5, 0)).unwrap();
        let cfg = BurninConfig::new(2, 2, 0.5).unwrap();
        assert!(burnin_from_starts(&fam, vec![empty.clone(), ok], &cfg).is_ok());
        assert_eq!(burnin_from_starts(&fam, vec![empty], &cfg), Err(FitError::NoSurvivingCandidates));
    }
}
