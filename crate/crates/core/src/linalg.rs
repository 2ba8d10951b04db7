//! Dense least squares on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff below which a design counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Least-squares solution and how it was obtained.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub coef: DVector<f64>,
    /// True when the design was rank deficient and ridge was used instead.
    pub ridge: bool,
}

/// Numerical rank of `x` via its singular values.
pub fn rank(x: &DMatrix<f64>) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Ordinary least squares, or `None` if `x` lacks full column rank.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    if x.nrows() < x.ncols() || rank(x) < x.ncols() {
        return None;
    }
    x.clone().svd(true, true).solve(y, 0.0).ok()
}

/// Ridge regression `(XᵀX + λI)⁻¹ Xᵀy`.
pub fn ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let xt = x.transpose();
    let mut a = &xt * x;
    for k in 0..a.ncols() {
        a[(k, k)] += lambda;
    }
    let b = xt * y;
    a.cholesky().map(|c| c.solve(&b))
}

/// OLS with a ridge fallback when the design is rank deficient.
pub fn lstsq_or_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Option<LstsqSolution> {
    if let Some(coef) = ols(x, y) {
        return Some(LstsqSolution { coef, ridge: false });
    }
    ridge(x, y, lambda).map(|coef| LstsqSolution { coef, ridge: true })
}
