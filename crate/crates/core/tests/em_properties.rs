use embia::init::{random_z, stream_rng};
use embia::nalgebra::DMatrix;
use embia::sbm::SbmPriors;
use embia::{
    em_fit, ConvergenceConfig, CovarianceStructure, FitError, GaussianMixture, LatentClass, MixtureFamily,
    Responsibilities, StochasticBlock,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn gaussian_data(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let shift: Vec<f64> = (0..m).map(|_| rng.gen_range(1.0..4.0)).collect();
    DMatrix::from_fn(n, m, |i, j| noise.sample(rng) + if i % 3 == 0 { shift[j] } else { 0.0 })
}

fn binary_data(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let p: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..0.9)).collect();
    DMatrix::from_fn(n, m, |i, j| f64::from(rng.gen_bool(if i % 2 == 0 { p[j] } else { 1.0 - p[j] })))
}

fn network(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if (i < n / 2) == (j < n / 2) { 0.6 } else { 0.15 };
            if rng.gen_bool(p) {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    a
}

/// Checks the fit invariants; regularized runs are exempt from monotonicity.
/// Starts that leave a hard cluster empty are rejected before any iteration.
fn check_fit<F: MixtureFamily>(family: &F, z0: &Responsibilities, cfg: &ConvergenceConfig) -> bool {
    let fit = match em_fit(family, z0, cfg) {
        Err(FitError::EmptyCluster(_)) => return false,
        other => other.unwrap(),
    };
    assert!(fit.flags.boundary_adjacent || fit.is_monotone(), "trace decreased: {:?}", fit.trace);
    assert_eq!(fit.objective, *fit.trace.last().unwrap());
    assert_eq!(fit.iterations, fit.trace.len());
    for row in fit.responsibilities.matrix().row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    let again = em_fit(family, z0, cfg).unwrap();
    assert_eq!(fit.trace, again.trace);
    assert_eq!(fit.responsibilities, again.responsibilities);
    fit.flags.boundary_adjacent
}

/// `sum_i sum_g e_ig log(tau_g P(x_i | theta_g))` from a matrix of log joint densities.
fn q_value(resp: &Responsibilities, log_joint: &DMatrix<f64>) -> f64 {
    resp.matrix().component_mul(log_joint).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gmm_em_is_monotone(seed in any::<u64>(), n in 15usize..40, m in 1usize..4, g in 1usize..4, eev in any::<bool>()) {
        let mut rng = stream_rng(seed, 0);
        let x = gaussian_data(n, m, &mut rng);
        let structure = if eev { CovarianceStructure::Eev } else { CovarianceStructure::Vvv };
        let fam = GaussianMixture::new(&x, structure).unwrap();
        let z0 = random_z(n, g, &mut rng).unwrap();
        check_fit(&fam, &z0, &ConvergenceConfig::new(1e-8, 300).unwrap());
    }

    #[test]
    fn lca_em_is_monotone(seed in any::<u64>(), n in 10usize..60, m in 2usize..7, g in 1usize..4) {
        let mut rng = stream_rng(seed, 0);
        let x = binary_data(n, m, &mut rng);
        let fam = LatentClass::new(&x).unwrap();
        let z0 = random_z(n, g, &mut rng).unwrap();
        check_fit(&fam, &z0, &ConvergenceConfig::new(1e-9, 300).unwrap());
    }

    #[test]
    fn sbm_variational_em_is_monotone(seed in any::<u64>(), n in 6usize..25, g in 1usize..4) {
        let mut rng = stream_rng(seed, 0);
        let a = network(n, &mut rng);
        let fam = StochasticBlock::with_flat_priors(&a, g).unwrap();
        let z0 = random_z(n, g, &mut rng).unwrap();
        check_fit(&fam, &z0, &ConvergenceConfig::new(1e-7, 300).unwrap());
    }

    #[test]
    fn m_step_does_not_decrease_q(seed in any::<u64>(), g in 2usize..4) {
        let mut rng = stream_rng(seed, 0);
        let x = gaussian_data(30, 2, &mut rng);
        let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
        let old = fam.m_step(&random_z(30, g, &mut rng).unwrap()).unwrap();
        let resp = fam.e_step(&old, &random_z(30, g, &mut rng).unwrap()).unwrap().resp;
        let new = fam.m_step(&resp).unwrap();
        let q_old = q_value(&resp, &fam.log_joint(&old).unwrap());
        let q_new = q_value(&resp, &fam.log_joint(&new).unwrap());
        prop_assert!(q_new >= q_old - 1e-9, "{q_new} < {q_old}");

        let b = binary_data(30, 5, &mut rng);
        let lca = LatentClass::new(&b).unwrap();
        let old = lca.m_step(&random_z(30, g, &mut rng).unwrap()).unwrap();
        let resp = lca.e_step(&old, &random_z(30, g, &mut rng).unwrap()).unwrap().resp;
        let new = lca.m_step(&resp).unwrap();
        prop_assert!(q_value(&resp, &lca.log_joint(&new)) >= q_value(&resp, &lca.log_joint(&old)) - 1e-9);
    }
}

#[test]
fn single_component_converges_at_once() {
    let mut rng = stream_rng(11, 0);
    let x = gaussian_data(40, 3, &mut rng);
    let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
    let z0 = Responsibilities::from_labels(&[0; 40], 1).unwrap();
    let fit = em_fit(&fam, &z0, &ConvergenceConfig::continuous()).unwrap();
    assert!(fit.converged && fit.iterations <= 2);
    let mean = x.row_mean();
    for j in 0..3 {
        assert!((fit.params.means[0][j] - mean[j]).abs() < 1e-12);
    }
    let centered = DMatrix::from_fn(40, 3, |i, j| x[(i, j)] - mean[j]);
    let mle = centered.transpose() * &centered / 40.0;
    assert!((&fit.params.covariances[0] - mle).amax() < 1e-10);

    let b = binary_data(50, 4, &mut rng);
    let lca = LatentClass::new(&b).unwrap();
    let fit =
        em_fit(&lca, &Responsibilities::from_labels(&[0; 50], 1).unwrap(), &ConvergenceConfig::categorical()).unwrap();
    assert!(fit.converged && fit.iterations <= 2);
    let rates = b.row_mean();
    for j in 0..4 {
        assert!((fit.params.theta[(0, j)] - rates[j].clamp(1e-10, 1.0 - 1e-10)).abs() < 1e-12);
    }
}

fn normal_logpdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn mixture_loglik(x: &[f64], p: &[f64; 5]) -> f64 {
    let [tau, m1, m2, s1, s2] = *p;
    x.iter()
        .map(|&v| {
            let a = tau.ln() + normal_logpdf(v, m1, s1);
            let b = (1.0 - tau).ln() + normal_logpdf(v, m2, s2);
            let hi = a.max(b);
            hi + ((a - hi).exp() + (b - hi).exp()).ln()
        })
        .sum()
}

/// Maximizes the two-component likelihood by repeatedly refining a dense grid.
fn grid_maximum(x: &[f64]) -> f64 {
    let mut lo = [0.05, -3.0, 2.0, 0.3, 0.3];
    let mut hi = [0.95, 2.0, 7.0, 3.0, 3.0];
    let steps = 9;
    let mut best = (f64::NEG_INFINITY, [0.0; 5]);
    for _ in 0..40 {
        let mut idx = [0usize; 5];
        loop {
            let mut p = [0.0; 5];
            for k in 0..5 {
                p[k] = lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (steps - 1) as f64;
            }
            let l = mixture_loglik(x, &p);
            if l > best.0 {
                best = (l, p);
            }
            let mut k = 0;
            while k < 5 {
                idx[k] += 1;
                if idx[k] < steps {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == 5 {
                break;
            }
        }
        for k in 0..5 {
            let half = (hi[k] - lo[k]) / 4.0;
            lo[k] = (best.1[k] - half).max(if k == 0 {
                1e-6
            } else if k >= 3 {
                1e-3
            } else {
                f64::MIN
            });
            hi[k] = (best.1[k] + half).min(if k == 0 { 1.0 - 1e-6 } else { f64::MAX });
        }
    }
    best.0
}

#[test]
fn univariate_fit_matches_grid_search() {
    let mut rng = stream_rng(5, 0);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..20)
        .map(|i| noise.sample(&mut rng) * if i < 8 { 0.7 } else { 1.2 } + if i < 8 { 0.0 } else { 4.5 })
        .collect();
    let data = DMatrix::from_column_slice(20, 1, &x);
    let fam = GaussianMixture::new(&data, CovarianceStructure::Vvv).unwrap();
    let labels: Vec<usize> = x.iter().map(|&v| usize::from(v > 2.0)).collect();
    let fit = em_fit(
        &fam,
        &Responsibilities::from_labels(&labels, 2).unwrap(),
        &ConvergenceConfig::new(1e-12, 10_000).unwrap(),
    )
    .unwrap();
    let oracle = grid_maximum(&x);
    assert!((fit.objective - oracle).abs() < 1e-3, "em {} grid {}", fit.objective, oracle);
}

#[test]
fn burn_in_winner_is_one_of_its_candidates() {
    use embia::init::{burnin_pyramid, BurninConfig};
    let cfg = BurninConfig::new(16, 5, 0.5).unwrap();
    let conv = ConvergenceConfig::new(1e-10, 10_000).unwrap();
    let mut wins = 0;
    for trial in 0..20u64 {
        let mut rng = stream_rng(1000 + trial, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(90, 2, |i, j| {
            noise.sample(&mut rng) + [0.0, 3.0, 6.0][i % 3] * if j == 0 { 1.0 } else { 0.5 }
        });
        let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
        let draw = stream_rng(trial, 1);
        let mut plain: Vec<f64> = {
            let mut r = draw.clone();
            (0..16)
                .map(|_| {
                    em_fit(&fam, &random_z(90, 3, &mut r).unwrap(), &conv).map_or(f64::NEG_INFINITY, |f| f.objective)
                })
                .collect()
        };
        let winner = burnin_pyramid(&fam, 3, &cfg, &mut draw.clone()).unwrap();
        let fit = em_fit(&fam, &winner, &conv).unwrap();
        let nearest = plain.iter().map(|p| (p - fit.objective).abs()).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-4, "trial {trial}: {} matches no candidate", fit.objective);
        plain.sort_by(f64::total_cmp);
        if fit.objective >= 0.5 * (plain[7] + plain[8]) - 1e-6 {
            wins += 1;
        }
    }
    // short-run leaders are not always the eventual best, so only a majority is expected
    assert!(wins > 10, "wins {wins}/20");
}

#[test]
fn well_conditioned_gmm_fits_rarely_need_a_ridge() {
    let mut regularized = 0;
    for seed in 0..100 {
        let mut rng = stream_rng(seed, 2);
        let x = gaussian_data(90, 2, &mut rng);
        let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
        let z0 = random_z(90, 2, &mut rng).unwrap();
        if check_fit(&fam, &z0, &ConvergenceConfig::new(1e-8, 300).unwrap()) {
            regularized += 1;
        }
    }
    assert!(regularized <= 5, "{regularized}/100 fits regularized");
}

#[test]
fn sbm_bound_never_exceeds_enumerated_evidence() {
    use embia::sbm::{sbm_elbo, sbm_m_step};
    let mut rng = stream_rng(77, 0);
    for _ in 0..50 {
        let n = rng.gen_range(2..=6);
        let g = rng.gen_range(1..=3usize.min(n));
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.4) {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
        let soft = DMatrix::from_fn(n, g, |_, _| rng.gen_range(0.05..1.0));
        let sums: Vec<f64> = soft.row_iter().map(|r| r.sum()).collect();
        let mut z = DMatrix::from_fn(n, g, |i, k| soft[(i, k)] / sums[i]);
        for i in 0..n {
            let rest: f64 = (1..g).map(|k| z[(i, k)]).sum();
            z[(i, 0)] = 1.0 - rest;
        }
        let resp = Responsibilities::new(z).unwrap();
        let priors = SbmPriors::flat(g);
        let params = sbm_m_step(&a, &resp, &priors).unwrap();
        let fam = StochasticBlock::new(&a, priors.clone()).unwrap();
        let post = fam.e_step(&params, &resp).unwrap().resp;
        // exact log p(A | params) by summing over all G^n labelings
        let tau = params.tau.as_slice();
        let mut terms = Vec::new();
        for code in 0..g.pow(n as u32) {
            let labels: Vec<usize> = (0..n).map(|i| code / g.pow(i as u32) % g).collect();
            let mut l: f64 = labels.iter().map(|&k| tau[k].ln()).sum();
            for i in 0..n {
                for j in (i + 1)..n {
                    let t = params.theta[(labels[i], labels[j])];
                    l += if a[(i, j)] == 1.0 { t.ln() } else { (1.0 - t).ln() };
                }
            }
            terms.push(l);
        }
        let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let evidence = hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln() + priors.log_density(&params);
        for q in [&resp, &post] {
            let bound = sbm_elbo(&a, q, &params, &priors);
            assert!(bound <= evidence + 1e-10, "bound {bound} above evidence {evidence}");
        }
    }
}

#[test]
fn e_step_rows_sum_to_one_from_extreme_parameters() {
    let mut rng = stream_rng(3, 0);
    let x = gaussian_data(25, 2, &mut rng) * 1e3;
    let fam = GaussianMixture::new(&x, CovarianceStructure::Vvv).unwrap();
    let p = fam.m_step(&random_z(25, 3, &mut rng).unwrap()).unwrap();
    let r = fam.e_step(&p, &random_z(25, 3, &mut rng).unwrap()).unwrap().resp;
    for row in r.matrix().row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}
