//! Small numerical helpers shared by the mixture families.

use nalgebra::DMatrix;

/// `log(sum(exp(values)))`, shifted by the maximum so large magnitudes do not overflow.
///
/// Returns `-inf` when every entry is `-inf` (or the slice is empty).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax of a matrix of log weights.
///
/// Returns the normalized rows and the per-row log normalizers.
pub(crate) fn softmax_rows(log_weights: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (n, g) = log_weights.shape();
    let mut out = DMatrix::zeros(n, g);
    let mut norms = Vec::with_capacity(n);
    let mut row = vec![0.0; g];
    for i in 0..n {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = log_weights[(i, k)];
        }
        let lse = log_sum_exp(&row);
        norms.push(lse);
        if lse.is_finite() {
            for k in 0..g {
                out[(i, k)] = (row[k] - lse).exp();
            }
        } else {
            // every component has zero weight; fall back to uniform
            for k in 0..g {
                out[(i, k)] = 1.0 / g as f64;
            }
        }
        renormalize_row(&mut out, i);
    }
    (out, norms)
}

/// Divides a row by its sum so it is stochastic up to rounding.
pub(crate) fn renormalize_row(m: &mut DMatrix<f64>, i: usize) {
    let s: f64 = m.row(i).iter().sum();
    if s > 0.0 && s != 1.0 {
        for k in 0..m.ncols() {
            m[(i, k)] /= s;
        }
    }
}

/// `x ln y` with the convention `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `x ln x` with `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    xlogy(x, x)
}
