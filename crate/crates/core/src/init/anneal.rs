//! Deterministic annealing: EM with tempered E-steps whose exponent rises toward one.

use serde::{Deserialize, Serialize};

use crate::em::{check_dims, converged, ConvergenceConfig, FitFlags, FitResult, MixtureFamily, Responsibilities};
use crate::error::{FitError, Result};

/// Once `1 - nu` drops below this the exponent is pinned to exactly one.
pub const NU_PIN_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub nu0: f64,
    pub rate: f64,
    /// EM iterations per temperature stage.
    pub stage: usize,
}

impl AnnealSchedule {
    pub fn new(nu0: f64, rate: f64, stage: usize) -> Result<Self> {
        if !(nu0 > 0.0 && nu0 <= 1.0) {
            return Err(FitError::InvalidConfig(format!("nu0 must lie in (0, 1], got {nu0}")));
        }
        if !(rate > 0.0 && rate < 1.0) {
            return Err(FitError::InvalidConfig(format!("rate must lie in (0, 1), got {rate}")));
        }
        if stage == 0 {
            return Err(FitError::InvalidConfig("stage length must be positive".into()));
        }
        Ok(Self { nu0, rate, stage })
    }

    /// `r * nu + (1 - r) * 1`.
    pub fn next_nu(&self, nu: f64) -> f64 {
        self.rate * nu + (1.0 - self.rate)
    }
}

/// E-step with component posteriors raised to `nu`.
pub fn anneal_e_step<F: MixtureFamily + ?Sized>(
    family: &F,
    params: &F::Params,
    current: &Responsibilities,
    nu: f64,
) -> Result<Responsibilities> {
    if !(nu > 0.0) {
        return Err(FitError::InvalidConfig(format!("annealing exponent must be positive, got {nu}")));
    }
    family.tempered_e_step(params, current, nu)
}

/// Annealed EM. The trace records the untempered objective after every cycle;
/// the relative-change test only applies once the exponent is pinned at one.
pub fn anneal_fit<F: MixtureFamily + ?Sized>(
    family: &F,
    z0: &Responsibilities,
    schedule: &AnnealSchedule,
    cfg: &ConvergenceConfig,
) -> Result<FitResult<F::Params>> {
    check_dims(family, z0)?;
    let mut nu = schedule.nu0;
    let mut pinned = 1.0 - nu < NU_PIN_TOL;
    if pinned {
        nu = 1.0;
    }
    let mut capped = false;

    let step =
        |params: &F::Params, z: &Responsibilities, nu: f64, pinned: bool| -> Result<(Responsibilities, f64, bool)> {
            if pinned {
                let est = family.e_step(params, z)?;
                Ok((est.resp, est.objective, est.inner_loop_capped))
            } else {
                let resp = anneal_e_step(family, params, z, nu)?;
                let obj = family.objective(params, &resp);
                Ok((resp, obj, false))
            }
        };

    let mut params = family.m_step(z0)?;
    let mut boundary = family.flags(&params).boundary_adjacent;
    let (mut z, obj, c) = step(&params, z0, nu, pinned)?;
    capped |= c;
    let mut trace = vec![obj];
    // trace index at which the exponent was first exactly one
    let mut pinned_from = if pinned { Some(0) } else { None };
    let mut at_stage = 1;
    let mut done = false;

    while trace.len() < cfg.max_iter {
        if !pinned && at_stage == schedule.stage {
            nu = schedule.next_nu(nu);
            at_stage = 0;
            if 1.0 - nu < NU_PIN_TOL {
                nu = 1.0;
                pinned = true;
            }
        }
        let next_params = family.m_step(&z)?;
        boundary |= family.flags(&next_params).boundary_adjacent;
        let (next_z, obj, c) = step(&next_params, &z, nu, pinned)?;
        capped |= c;
        let prev = *trace.last().unwrap();
        trace.push(obj);
        params = next_params;
        z = next_z;
        at_stage += 1;
        if pinned && pinned_from.is_none() {
            pinned_from = Some(trace.len() - 1);
        }
        if let Some(start) = pinned_from {
            if trace.len() - 1 > start && converged(prev, obj, cfg.epsilon) {
                done = true;
                break;
            }
        }
    }

    let history = FitFlags { inner_loop_capped: capped, boundary_adjacent: boundary, ..Default::default() };
    let flags = family.flags(&params).merge(history);
    Ok(FitResult {
        objective: *trace.last().unwrap(),
        iterations: trace.len(),
        trace,
        responsibilities: z,
        params,
        converged: done,
        flags,
    })
}
