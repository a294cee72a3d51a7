//! Eigen-analysis: full decompositions, localization profiles, eigenvalue
//! branches with quasimode residuals, spectrum-measure estimates, Aubry
//! duality and the Poisson-identity checks.

pub mod branch;
pub mod duality;
pub mod poisson;
pub mod spectrum;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::{affine_fit, symmetric_eigen_sorted, SymmetricEigenSorted};
use crate::operator::AssembledOperator;
use crate::region::site_dist;
use crate::{Error, Result};

/// Residual tolerances of a trusted eigendecomposition (relative to ‖H‖).
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// A verified full eigendecomposition of an assembled operator.
pub struct EigenSystem {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column s is the eigenvector of values[s], in the operator's site order.
    pub decomposition: SymmetricEigenSorted,
    pub residual: f64,
    pub orthonormality_defect: f64,
}

/// Full symmetric eigendecomposition meeting the residual invariants.
pub fn eigensystem(op: &AssembledOperator) -> Result<EigenSystem> {
    let herm = op.hermiticity_defect();
    if herm > 1e-13 {
        return Err(Error::Validation(format!(
            "operator is not hermitian: defect {herm:.3e}"
        )));
    }
    let decomposition = symmetric_eigen_sorted(&op.matrix)?;
    let residual = decomposition.residual(&op.matrix);
    let orthonormality_defect = decomposition.orthonormality_defect();
    let scale = op.matrix.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
    if residual > EIGEN_RESIDUAL_TOL * scale || orthonormality_defect > EIGEN_RESIDUAL_TOL {
        return Err(Error::Singular(format!(
            "eigendecomposition failed verification: residual {residual:.3e}, \
             gram defect {orthonormality_defect:.3e}"
        )));
    }
    Ok(EigenSystem {
        values: decomposition.values.clone(),
        decomposition,
        residual,
        orthonormality_defect,
    })
}

/// Stretched-exponential localization profile of one eigenvector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationProfile {
    /// Site of maximal modulus.
    pub center: Vec<i64>,
    /// Least-squares rate r in |φ(n)| ≈ C·e^{-r|n-center|^γ} over
    /// |n-center| >= N/10.
    pub rate: f64,
    pub r_squared: f64,
    /// Worst-site rate min -log(|φ(n)|/max) / |n-center|^γ.
    pub worst_site_rate: f64,
    /// Rate below the floor: the state looks extended.
    pub extended: bool,
    /// All far-field amplitudes at numerical zero: rate capped at ceiling.
    pub max_localized: bool,
    pub sites_used: usize,
}

/// Amplitudes below this fraction of the max are numerical zeros.
const AMPLITUDE_FLOOR: f64 = 1e-15;

/// Fit the stretched-exponential envelope of an eigenvector.
pub fn localization_profile(
    op: &AssembledOperator,
    vector: &DVector<f64>,
    gamma: f64,
    rate_floor: f64,
    rate_ceiling: f64,
) -> Result<LocalizationProfile> {
    let n = op.dim();
    if vector.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "vector len {} vs operator dim {n}",
            vector.len()
        )));
    }
    let region = op
        .region
        .as_ref()
        .ok_or_else(|| Error::Validation("profile needs region metadata (scale N)".into()))?;
    let n_scale = region.size;
    let mut center_row = 0usize;
    let mut max_amp = 0.0f64;
    for i in 0..n {
        let a = vector[i].abs();
        if a > max_amp {
            max_amp = a;
            center_row = i;
        }
    }
    if max_amp == 0.0 {
        return Err(Error::Validation("zero eigenvector".into()));
    }
    let center = op.sites.site(center_row).to_vec();
    let cutoff = n_scale as f64 / 10.0;
    let mut points = Vec::new();
    let mut worst_site_rate = f64::INFINITY;
    let mut far_sites = 0usize;
    for i in 0..n {
        let d = site_dist(op.sites.site(i), &center) as f64;
        if d < cutoff || d == 0.0 {
            continue;
        }
        far_sites += 1;
        let a = vector[i].abs();
        if a < AMPLITUDE_FLOOR * max_amp {
            continue;
        }
        let x = d.powf(gamma);
        let y = -(a / max_amp).ln();
        points.push((x, y));
        worst_site_rate = worst_site_rate.min(y / x);
    }
    // Every far-field amplitude at numerical zero: maximally localized.
    if points.is_empty() {
        return Ok(LocalizationProfile {
            center,
            rate: rate_ceiling,
            r_squared: 1.0,
            worst_site_rate: rate_ceiling,
            extended: false,
            max_localized: far_sites > 0,
            sites_used: 0,
        });
    }
    let (slope, _intercept, r2) = affine_fit(&points);
    let rate = slope.min(rate_ceiling);
    Ok(LocalizationProfile {
        center,
        rate,
        r_squared: r2,
        worst_site_rate,
        extended: rate < rate_floor,
        max_localized: false,
        sites_used: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{assemble_direct, assemble_dual, OperatorSpec};
    use crate::region::Region;
    use crate::torus::TorusPoint;

    #[test]
    fn eigenvalues_are_sorted_diagonal_at_lambda_zero() {
        let spec = OperatorSpec::default_dual(1.0, 0.7, 0.0);
        let op = assemble_dual(&spec, &Region::centered_cube(8, 1), None).unwrap();
        let es = eigensystem(&op).unwrap();
        let mut diag: Vec<f64> = (0..op.dim()).map(|i| op.matrix[(i, i)]).collect();
        diag.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(es.values.len(), op.dim());
        for (a, b) in es.values.iter().zip(&diag) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_count_equals_region_size() {
        let spec = OperatorSpec::default_dual(1.0, 0.7, 0.01);
        let op = assemble_dual(&spec, &Region::centered_cube(5, 1), None).unwrap();
        let es = eigensystem(&op).unwrap();
        assert_eq!(es.values.len(), 11);
        assert!(es.residual <= 1e-10 * 4.0);
        assert!(es.orthonormality_defect <= 1e-10);
    }

    #[test]
    fn free_direct_eigenvalues_closed_form() {
        // DIRECT, λ=0, g=2cos, N=20: eigenvalues 2cos(kπ/42), k=1..41
        let spec = OperatorSpec::default_direct(1.0, 0.7, 0.0);
        let op = assemble_direct(&spec, 20, None).unwrap();
        let es = eigensystem(&op).unwrap();
        let m = 41;
        let mut expect: Vec<f64> = (1..=m)
            .map(|k| 2.0 * (std::f64::consts::PI * k as f64 / (m as f64 + 1.0)).cos())
            .collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in es.values.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn delta_vector_is_max_localized() {
        let spec = OperatorSpec::default_dual(1.0, 0.7, 0.0);
        let op =
            assemble_dual(&spec, &Region::centered_cube(16, 1), Some(&TorusPoint::scalar(0.11)))
                .unwrap();
        let es = eigensystem(&op).unwrap();
        // at λ=0 every eigenvector is a site delta
        let v = es.decomposition.vector(5);
        let p = localization_profile(&op, &v, 0.7, 0.02, 50.0).unwrap();
        assert!(p.max_localized);
        assert_eq!(p.rate, 50.0);
        assert!(!p.extended);
    }

    #[test]
    fn free_direct_states_are_extended() {
        let spec = OperatorSpec::default_direct(1.0, 0.7, 0.0);
        let op = assemble_direct(&spec, 24, None).unwrap();
        let es = eigensystem(&op).unwrap();
        // mid-spectrum sine wave
        let v = es.decomposition.vector(op.dim() / 2);
        let p = localization_profile(&op, &v, 0.7, 0.02, 50.0).unwrap();
        assert!(p.extended, "rate {} should be under the floor", p.rate);
    }

    #[test]
    fn localized_profile_recovers_planted_rate() {
        // plant an explicit stretched-exponential vector on a region
        let spec = OperatorSpec::default_dual(1.0, 0.7, 0.0);
        let op = assemble_dual(&spec, &Region::centered_cube(32, 1), None).unwrap();
        let n = op.dim();
        let mut v = DVector::<f64>::zeros(n);
        for i in 0..n {
            let d = op.sites.site(i)[0].unsigned_abs() as f64;
            v[i] = (-0.8 * d.powf(0.7)).exp();
        }
        let p = localization_profile(&op, &v, 0.7, 0.02, 50.0).unwrap();
        assert!((p.rate - 0.8).abs() < 1e-6, "rate {}", p.rate);
        assert!(p.r_squared > 0.999);
        assert!(!p.extended);
    }
}
