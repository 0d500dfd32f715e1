//! Starting-value strategies for EM.
//!
//! Every strategy hands back a membership matrix (or a finished fit); the
//! driver always begins with an M-step from it.

mod align;
mod anneal;
mod bia;
mod burnin;
mod hclust;
mod random;

pub use align::{align_labels, best_permutation};
pub use anneal::{anneal_e_step, anneal_fit, AnnealSchedule, NU_PIN_TOL};
pub use bia::{bia_average, bia_from_starts, bia_init, bia_prepare, bia_weights, bic_star, BiaConfig, BiaStart};
pub use burnin::{burnin_pyramid, BurninConfig};
pub use hclust::{hclust_init, ward_labels};
pub use random::{random_z, stream_rng};

use crate::em::{check_dims, MixtureFamily, Responsibilities};
use crate::error::Result;

/// Runs exactly `cycles` M+E cycles from `z`, returning the final memberships
/// and the last objective.
pub fn run_cycles<F: MixtureFamily + ?Sized>(
    family: &F,
    z: &Responsibilities,
    cycles: usize,
) -> Result<(Responsibilities, f64)> {
    check_dims(family, z)?;
    let mut current = z.clone();
    let mut objective = f64::NEG_INFINITY;
    for _ in 0..cycles {
        let params = family.m_step(&current)?;
        let est = family.e_step(&params, &current)?;
        current = est.resp;
        objective = est.objective;
    }
    Ok((current, objective))
}
