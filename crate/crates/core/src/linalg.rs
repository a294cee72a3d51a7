//! Dense linear-algebra helpers: residual-verified inversion with iterative
//! refinement and symmetric eigendecomposition wrappers.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Condition numbers above this trigger `Singular`.
pub const CONDITION_LIMIT: f64 = 1e14;

/// Relative inverse-residual target after refinement.
pub const RESIDUAL_TARGET: f64 = 1e-10;

/// Max-norm of a matrix.
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// ‖A·X - I‖_max.
pub fn inverse_residual(a: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let mut r = a * x;
    for i in 0..r.nrows() {
        r[(i, i)] -= 1.0;
    }
    max_norm(&r)
}

/// Outcome of a verified dense inversion.
pub struct VerifiedInverse {
    pub inverse: DMatrix<f64>,
    pub residual: f64,
    /// 2-norm of the inverse (largest |1/eigenvalue| of the symmetric input).
    pub op_norm: f64,
    /// max|eig| / min|eig| of the input.
    pub condition: f64,
}

/// Invert a real symmetric matrix by LU with iterative refinement; the
/// spectral data of the input provides the exact 2-norm of the inverse and
/// the condition estimate. Refuses (Singular) when the condition exceeds
/// `CONDITION_LIMIT` or the residual cannot be pushed to target.
pub fn invert_symmetric(a: &DMatrix<f64>) -> Result<VerifiedInverse> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Validation("invert_symmetric needs a square matrix".into()));
    }
    let eigs = a.clone().symmetric_eigenvalues();
    let mut min_abs = f64::INFINITY;
    let mut max_abs = 0.0f64;
    for e in eigs.iter() {
        min_abs = min_abs.min(e.abs());
        max_abs = max_abs.max(e.abs());
    }
    if min_abs == 0.0 {
        return Err(Error::Singular("exact zero eigenvalue".into()));
    }
    let condition = if max_abs == 0.0 { 0.0 } else { max_abs / min_abs };
    if condition > CONDITION_LIMIT {
        return Err(Error::Singular(format!(
            "condition estimate {condition:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )));
    }
    let lu = a.clone().lu();
    let mut x = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular("LU factorization failed".into()))?;
    let op_norm = 1.0 / min_abs;
    let tol = RESIDUAL_TARGET * op_norm.max(1.0);
    let mut residual = inverse_residual(a, &x);
    for _ in 0..3 {
        if residual <= tol {
            break;
        }
        // Newton refinement X <- X + X(I - AX)
        let mut e = a * &x;
        for i in 0..n {
            e[(i, i)] -= 1.0;
        }
        x = &x - &x * e;
        residual = inverse_residual(a, &x);
    }
    if residual > tol {
        return Err(Error::Singular(format!(
            "inverse residual {residual:.3e} above target {tol:.3e}"
        )));
    }
    Ok(VerifiedInverse {
        inverse: x,
        residual,
        op_norm,
        condition,
    })
}

/// Full symmetric eigendecomposition with ascending eigenvalues and
/// orthonormal columns.
pub struct SymmetricEigenSorted {
    pub values: Vec<f64>,
    /// Column s is the eigenvector of values[s].
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen_sorted(a: &DMatrix<f64>) -> Result<SymmetricEigenSorted> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Validation("eigendecomposition needs a square matrix".into()));
    }
    let se = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[i]
            .partial_cmp(&se.eigenvalues[j])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    Ok(SymmetricEigenSorted { values, vectors })
}

impl SymmetricEigenSorted {
    pub fn vector(&self, s: usize) -> DVector<f64> {
        DVector::from_column_slice(self.vectors.column(s).as_slice())
    }

    /// max_s ‖A v_s - λ_s v_s‖_2.
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.values.len() {
            let v = self.vectors.column(s);
            let r = a * v - self.values[s] * v;
            worst = worst.max(r.norm());
        }
        worst
    }

    /// ‖VᵀV - I‖_max.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut g = self.vectors.transpose() * &self.vectors;
        for i in 0..g.nrows() {
            g[(i, i)] -= 1.0;
        }
        max_norm(&g)
    }
}

/// Ordinary least squares y = a + b·x. Returns (slope, intercept, r²);
/// zeros for degenerate input.
pub fn affine_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, points.first().map(|p| p.1).unwrap_or(0.0), 0.0);
    }
    let mx: f64 = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my: f64 = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Least-squares slope through the origin of y against x, plus R².
/// Returns (slope, r_squared); slope is 0 for empty input.
pub fn origin_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    if sxx == 0.0 || points.is_empty() {
        return (0.0, 0.0);
    }
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let slope = sxy / sxx;
    let mean_y: f64 = points.iter().map(|(_, y)| y).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|(x, y)| (y - slope * x).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, r2)
}
