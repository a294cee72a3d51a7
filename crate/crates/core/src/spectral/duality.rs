//! Aubry duality: the Fourier correspondence between the d-dimensional
//! single-phase family and the 1D multi-frequency long-range family.
//!
//! A dual-family spec maps to the direct family when its potential has the
//! diagonal form f(θ) = g(θ₁ + … + θ_d): hopping symbol and potential swap
//! roles, the coupling stays on the Gevrey side. The eigenvector transform
//! is ξ_n(θ) = e^{2πin·x}·F(θ + n·ω) with F the Fourier series of ψ.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::intervals::IntervalUnion;
use crate::operator::{OperatorFamily, OperatorSpec};
use crate::potential::AnalyticPotential;
use crate::symbol::{GevreySymbol, SymbolRule};
use crate::torus::{FrequencyVector, TorusPoint};
use crate::{Error, Result};

/// Trig-polynomial radius used when expanding the Gevrey symbol into the
/// direct-side sampling potential (kept exact at d = 1 desk scales, capped
/// at d >= 2 for cost).
fn direct_potential_radius(symbol: &GevreySymbol) -> i64 {
    if symbol.dim() == 1 {
        symbol.radius().min(256)
    } else {
        symbol.radius().min(16)
    }
}

/// Map a spec to the other family. Exact roundtrip: dual(dual(s)) == s.
pub fn aubry_dual_map(spec: &OperatorSpec) -> Result<OperatorSpec> {
    spec.validate()?;
    match spec.family {
        OperatorFamily::Dual => {
            let d = spec.hopping.dim();
            // f must be diagonal-supported: f(θ) = g(θ₁+…+θ_d).
            let mut g_entries: Vec<(Vec<i64>, f64)> = Vec::new();
            let mut g_radius: i64 = 1;
            for (k, c) in spec.potential.coeffs() {
                let m = k[0];
                if k.iter().any(|&ki| ki != m) {
                    return Err(Error::NotDualizable(format!(
                        "potential coefficient at {k:?} is off the diagonal"
                    )));
                }
                if c.im != 0.0 {
                    return Err(Error::NotDualizable(format!(
                        "potential coefficient at {k:?} has an imaginary part"
                    )));
                }
                g_entries.push((vec![m], c.re));
                g_radius = g_radius.max(m.abs());
            }
            let g = GevreySymbol::table(
                spec.hopping.rho(),
                1.0,
                1,
                g_radius,
                g_entries,
            )?;
            // Expand v̂ into the sampling potential on the d-torus.
            let r = direct_potential_radius(&spec.hopping);
            let cube = crate::region::Region::centered_cube(r, d);
            let mut v_entries = Vec::new();
            for k in cube.points() {
                let c = spec.hopping.coefficient(&k)?;
                if c != 0.0 {
                    v_entries.push((k, Complex64::new(c, 0.0)));
                }
            }
            Ok(OperatorSpec {
                family: OperatorFamily::Direct,
                lambda: spec.lambda,
                hopping: g,
                potential: AnalyticPotential::new(d, v_entries)?,
                omega: spec.omega.clone(),
                phase: spec.phase.clone(),
                direct_gevrey: Some(spec.hopping.clone()),
            })
        }
        OperatorFamily::Direct => {
            let d = spec.omega.dim();
            // Recover v: the stored generating symbol, or rebuild a table
            // from the sampling potential.
            let v = match &spec.direct_gevrey {
                Some(sym) => sym.clone(),
                None => {
                    let entries: Vec<(Vec<i64>, f64)> = spec
                        .potential
                        .coeffs()
                        .iter()
                        .map(|(k, c)| (k.clone(), c.re))
                        .collect();
                    GevreySymbol::table(
                        spec.hopping.rho(),
                        spec.hopping.gamma(),
                        d,
                        spec.potential.degree().max(1),
                        entries,
                    )?
                }
            };
            if v.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "stored Gevrey symbol dim {} vs frequency dim {d}",
                    v.dim()
                )));
            }
            // Rebuild f(θ) = g(θ₁+…+θ_d) from the 1D table of g.
            let mut f_entries = Vec::new();
            if let SymbolRule::Table { coeffs } = spec.hopping.rule() {
                for (k, &c) in coeffs {
                    if c != 0.0 {
                        f_entries.push((vec![k[0]; d], Complex64::new(c, 0.0)));
                    }
                }
            } else {
                return Err(Error::NotDualizable(
                    "direct hopping must be a trig-polynomial table".into(),
                ));
            }
            Ok(OperatorSpec {
                family: OperatorFamily::Dual,
                lambda: spec.lambda,
                hopping: v,
                potential: AnalyticPotential::new(d, f_entries)?,
                omega: spec.omega.clone(),
                phase: spec.phase.clone(),
                direct_gevrey: None,
            })
        }
    }
}

/// The duality transform of a finite vector: F(θ) = Σ_ℓ ψ_ℓ e^{2πiℓθ} and
/// ξ_n(θ) = e^{2πin·x}·F(θ + n·ω).
pub struct DualVector {
    psi: Vec<Complex64>,
    /// Site offset: psi[i] sits at lattice site i - half.
    half: i64,
    x: TorusPoint,
    omega: FrequencyVector,
    /// |‖F‖_{L²(grid)} - ‖ψ‖_{ℓ²}| / ‖ψ‖, from the unitary DFT cross-check.
    pub parseval_defect: f64,
}

impl DualVector {
    /// Build from ψ on sites [-half, half]; verifies Parseval on the
    /// (2·half+1)-point DFT grid.
    pub fn new(
        psi: Vec<Complex64>,
        half: i64,
        x: TorusPoint,
        omega: FrequencyVector,
    ) -> Result<Self> {
        let m = 2 * half + 1;
        if psi.len() as i64 != m {
            return Err(Error::DimensionMismatch(format!(
                "psi length {} vs interval size {m}",
                psi.len()
            )));
        }
        if x.dim() != omega.dim() {
            return Err(Error::DimensionMismatch("phase vs frequency dims".into()));
        }
        let norm_psi: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm_psi == 0.0 {
            return Err(Error::Validation("zero vector has no dual transform".into()));
        }
        let dv = Self {
            psi,
            half,
            x,
            omega,
            parseval_defect: 0.0,
        };
        // Grid Parseval: (1/M)·Σ_j |F(j/M)|² must equal ‖ψ‖².
        let mut grid_sq = 0.0;
        for j in 0..m {
            let f = dv.f_at(j as f64 / m as f64);
            grid_sq += f.norm_sqr();
        }
        grid_sq /= m as f64;
        let defect = (grid_sq.sqrt() - norm_psi).abs() / norm_psi;
        Ok(Self {
            parseval_defect: defect,
            ..dv
        })
    }

    /// F(θ) = Σ_ℓ ψ_ℓ e^{2πiℓθ}.
    pub fn f_at(&self, theta: f64) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for (i, p) in self.psi.iter().enumerate() {
            let site = i as i64 - self.half;
            acc += p * Complex64::from_polar(1.0, TAU * site as f64 * theta);
        }
        acc
    }

    /// ξ_n(θ) = e^{2πi n·x}·F(θ + n·ω).
    pub fn xi_at(&self, n: &[i64], theta: f64) -> Result<Complex64> {
        if n.len() != self.omega.dim() {
            return Err(Error::DimensionMismatch("index vs frequency dims".into()));
        }
        let nx: f64 = n
            .iter()
            .zip(self.x.coords())
            .map(|(&ni, &xi)| ni as f64 * xi)
            .sum();
        let nw: f64 = n
            .iter()
            .zip(self.omega.coords())
            .map(|(&ni, &wi)| ni as f64 * wi)
            .sum();
        Ok(Complex64::from_polar(1.0, TAU * nx) * self.f_at(theta + nw))
    }
}

/// Two-sided spectrum comparison through the duality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityComparison {
    pub hausdorff_distance: f64,
    pub direct_measure: f64,
    pub dual_measure: f64,
    pub direct_budget: f64,
    pub dual_budget: f64,
    pub direct_spectrum: IntervalUnion,
    pub dual_spectrum: IntervalUnion,
}

/// Estimate both spectra by phase-grid eigenvalue sweeps and return the
/// Hausdorff distance between the interval unions.
pub fn duality_compare(
    spec: &OperatorSpec,
    n_direct: i64,
    n_dual: i64,
    phase_grid: usize,
    cluster_eps: f64,
) -> Result<DualityComparison> {
    let (dual_spec, direct_spec) = match spec.family {
        OperatorFamily::Dual => (spec.clone(), aubry_dual_map(spec)?),
        OperatorFamily::Direct => (aubry_dual_map(spec)?, spec.clone()),
    };
    let dual_est = crate::spectral::spectrum::direct_mode_estimate(
        &dual_spec,
        n_dual,
        phase_grid,
        cluster_eps,
    )?;
    let direct_est = crate::spectral::spectrum::direct_mode_estimate(
        &direct_spec,
        n_direct,
        phase_grid,
        cluster_eps,
    )?;
    Ok(DualityComparison {
        hausdorff_distance: direct_est.intervals.hausdorff(&dual_est.intervals),
        direct_measure: direct_est.intervals.measure(),
        dual_measure: dual_est.intervals.measure(),
        direct_budget: direct_est.error_budget,
        dual_budget: dual_est.error_budget,
        direct_spectrum: direct_est.intervals,
        dual_spectrum: dual_est.intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_exact() {
        let spec = OperatorSpec::default_dual(1.0, 0.7, 0.01);
        let direct = aubry_dual_map(&spec).unwrap();
        assert_eq!(direct.family, OperatorFamily::Direct);
        let back = aubry_dual_map(&direct).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn default_direct_has_two_cos_hopping() {
        let direct = OperatorSpec::default_direct(1.0, 0.7, 0.01);
        assert!((direct.hopping.coefficient(&[1]).unwrap() - 1.0).abs() < 1e-15);
        assert!((direct.hopping.coefficient(&[0]).unwrap()).abs() < 1e-15);
        assert_eq!(direct.hopping.coefficient(&[2]).unwrap(), 0.0);
    }

    #[test]
    fn off_diagonal_potential_rejected() {
        let mut spec = OperatorSpec::default_dual(1.0, 0.7, 0.01);
        // 2D dual operator with a potential depending only on θ₁
        spec.hopping = GevreySymbol::canonical(1.0, 0.7, 2, 16).unwrap();
        spec.potential = AnalyticPotential::cosine(2, 0, 2.0);
        spec.omega = FrequencyVector::golden_family(2);
        spec.phase = TorusPoint::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            aubry_dual_map(&spec),
            Err(Error::NotDualizable(_))
        ));
    }

    #[test]
    fn diagonal_2d_potential_dualizes() {
        // f(θ) = 2cos(2π(θ₁+θ₂)) has coefficients at ±(1,1)
        let mut spec = OperatorSpec::default_dual(1.0, 0.7, 0.01);
        spec.hopping = GevreySymbol::canonical(1.0, 0.7, 2, 8).unwrap();
        spec.potential = AnalyticPotential::new(
            2,
            [
                (vec![1, 1], Complex64::new(1.0, 0.0)),
                (vec![-1, -1], Complex64::new(1.0, 0.0)),
            ],
        )
        .unwrap();
        spec.omega = FrequencyVector::golden_family(2);
        spec.phase = TorusPoint::new(vec![0.1, 0.2]).unwrap();
        let direct = aubry_dual_map(&spec).unwrap();
        assert_eq!(direct.potential.dim(), 2);
        let back = aubry_dual_map(&direct).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn parseval_on_random_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let half = 12i64;
        let psi: Vec<Complex64> = (0..(2 * half + 1))
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let dv = DualVector::new(
            psi,
            half,
            TorusPoint::scalar(0.3),
            FrequencyVector::golden_family(1),
        )
        .unwrap();
        assert!(dv.parseval_defect <= 1e-12, "defect {}", dv.parseval_defect);
    }

    #[test]
    fn xi_transform_modulates_phase() {
        let half = 2i64;
        let mut psi = vec![Complex64::ZERO; 5];
        psi[2] = Complex64::new(1.0, 0.0); // ψ = δ₀ → F ≡ 1
        let x = TorusPoint::scalar(0.25);
        let dv = DualVector::new(psi, half, x, FrequencyVector::golden_family(1)).unwrap();
        let xi = dv.xi_at(&[1], 0.0).unwrap();
        // e^{2πi·0.25} = i
        assert!((xi - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }
}
