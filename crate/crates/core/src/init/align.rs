//! Soft label alignment: permute a candidate's columns to best match a reference.

use nalgebra::DMatrix;

use crate::em::Responsibilities;

/// Exhaustive search is used up to this many groups; beyond it the
/// Hungarian method gives the same optimum.
const EXHAUSTIVE_MAX: usize = 8;

/// Permutation `perm` maximizing `sum_g similarity[(g, perm[g])]`.
///
/// For `G <= 8` every permutation is visited in lexicographic order and only
/// strict improvements replace the incumbent, so ties resolve to the
/// lexicographically smallest permutation.
pub fn best_permutation(similarity: &DMatrix<f64>) -> Vec<usize> {
    let g = similarity.nrows();
    assert_eq!(g, similarity.ncols());
    if g > EXHAUSTIVE_MAX {
        return hungarian_max(similarity);
    }
    let score = |p: &[usize]| p.iter().enumerate().map(|(r, &c)| similarity[(r, c)]).sum::<f64>();
    let mut perm: Vec<usize> = (0..g).collect();
    let mut best = perm.clone();
    let mut best_score = score(&perm);
    while next_permutation(&mut perm) {
        let s = score(&perm);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&perm);
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// O(G^3) assignment with row/column potentials, maximizing total similarity.
fn hungarian_max(similarity: &DMatrix<f64>) -> Vec<usize> {
    let n = similarity.nrows();
    let max = similarity.max();
    // minimize cost = max - similarity, 1-based arrays with a sentinel column 0
    let cost = |r: usize, c: usize| max - similarity[(r - 1, c - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        row_of[0] = r;
        let mut col = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col] = true;
            let r0 = row_of[col];
            let mut delta = f64::INFINITY;
            let mut next = 0;
            for c in 1..=n {
                if !used[c] {
                    let cur = cost(r0, c) - u[r0] - v[c];
                    if cur < min_to[c] {
                        min_to[c] = cur;
                        way[c] = col;
                    }
                    if min_to[c] < delta {
                        delta = min_to[c];
                        next = c;
                    }
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[row_of[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            col = next;
            if row_of[col] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col];
            row_of[col] = row_of[prev];
            col = prev;
            if col == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for c in 1..=n {
        perm[row_of[c] - 1] = c - 1;
    }
    perm
}

/// Returns `candidate` with its columns permuted to maximize the matched
/// membership mass `sum_g (reference^T candidate)[g, perm[g]]`.
pub fn align_labels(reference: &Responsibilities, candidate: &Responsibilities) -> Responsibilities {
    assert_eq!(reference.n(), candidate.n(), "row count mismatch");
    assert_eq!(reference.groups(), candidate.groups(), "group count mismatch");
    let similarity = reference.matrix().transpose() * candidate.matrix();
    candidate.permute_columns(&best_permutation(&similarity))
}
