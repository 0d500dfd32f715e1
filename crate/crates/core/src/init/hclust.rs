//! Agglomerative Ward clustering on Euclidean distance, cut at `G` groups.

use nalgebra::DMatrix;

use crate::em::Responsibilities;
use crate::error::{FitError, Result};

/// Ward labels for `groups` clusters, numbered by their smallest member index.
///
/// Merge costs are updated with the Lance-Williams recurrence on squared
/// distances. Equal costs merge the lowest-index pair first.
pub fn ward_labels(data: &DMatrix<f64>, groups: usize) -> Result<Vec<usize>> {
    let (n, m) = data.shape();
    if groups == 0 || n < groups {
        return Err(FitError::InvalidConfig(format!("need n >= G >= 1, got n = {n}, G = {groups}")));
    }
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = (0..m).map(|k| (data[(i, k)] - data[(j, k)]).powi(2)).sum();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // owner[i] = slot of the cluster containing observation i
    let mut owner: Vec<usize> = (0..n).collect();
    let mut clusters = n;

    while clusters > groups {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in (a + 1)..n {
                if active[b] && dist[(a, b)] < best.0 {
                    best = (dist[(a, b)], a, b);
                }
            }
        }
        let (d_ab, a, b) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let d = ((na + nk) * dist[(a, k)] + (nb + nk) * dist[(b, k)] - nk * d_ab) / (na + nb + nk);
            dist[(a, k)] = d;
            dist[(k, a)] = d;
        }
        size[a] += size[b];
        active[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        clusters -= 1;
    }

    let slots: Vec<usize> = (0..n).filter(|&s| active[s]).collect();
    Ok(owner.iter().map(|o| slots.binary_search(o).expect("owner is active")).collect())
}

/// Hard starting memberships from a Ward tree cut at `groups`.
pub fn hclust_init(data: &DMatrix<f64>, groups: usize) -> Result<Responsibilities> {
    Responsibilities::from_labels(&ward_labels(data, groups)?, groups)
}
