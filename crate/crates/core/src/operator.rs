//! Finite-volume assembly of the two operator families.
//!
//! Dual family (d-dimensional lattice, componentwise orbit):
//!   H̃(m, n) = λ·v̂_{m-n} + δ_{mn}·f(θ + nω)
//! Direct family (1D lattice, d-dimensional phase):
//!   H(ℓ, ℓ') = ĝ_{ℓ-ℓ'} + δ_{ℓℓ'}·λ·v(x + ℓω)
//!
//! Both assemble to dense real symmetric matrices over a `SiteSet`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::potential::AnalyticPotential;
use crate::region::{Region, SiteSet};
use crate::symbol::GevreySymbol;
use crate::torus::{shift_orbit, shift_scalar_site, FrequencyVector, ShiftMode, TorusPoint};
use crate::{Error, Result};

/// Which of the two dual families an `OperatorSpec` describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorFamily {
    /// d-dimensional operator with Gevrey hopping and analytic potential.
    Dual,
    /// 1D long-range operator with trig-polynomial hopping and a Gevrey
    /// potential sampled along the scalar orbit.
    Direct,
}

/// Full description of either operator family.
///
/// For `Dual`, `hopping` is the Gevrey symbol v and `potential` is f on the
/// d-torus. For `Direct`, `hopping` stores ĝ in the same coefficient format
/// (a table symbol, trig-polynomial case) and `potential` is v truncated to
/// a trig polynomial; `direct_gevrey` keeps the generating Gevrey symbol so
/// the Aubry roundtrip is exact and truncation budgets stay computable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub family: OperatorFamily,
    pub lambda: f64,
    pub hopping: GevreySymbol,
    pub potential: AnalyticPotential,
    pub omega: FrequencyVector,
    pub phase: TorusPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_gevrey: Option<GevreySymbol>,
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Validation(format!(
                "coupling must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        match self.family {
            OperatorFamily::Dual => {
                let d = self.hopping.dim();
                if self.potential.dim() != d || self.omega.dim() != d || self.phase.dim() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "dual spec dims: hopping {d}, potential {}, omega {}, phase {}",
                        self.potential.dim(),
                        self.omega.dim(),
                        self.phase.dim()
                    )));
                }
            }
            OperatorFamily::Direct => {
                if self.hopping.dim() != 1 {
                    return Err(Error::DimensionMismatch(
                        "direct hopping symbol must be 1-dimensional".into(),
                    ));
                }
                let d = self.omega.dim();
                if self.phase.dim() != d || self.potential.dim() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "direct spec dims: omega {d}, phase {}, potential {}",
                        self.phase.dim(),
                        self.potential.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lattice dimension the assembled matrices are indexed by.
    pub fn lattice_dim(&self) -> usize {
        match self.family {
            OperatorFamily::Dual => self.hopping.dim(),
            OperatorFamily::Direct => 1,
        }
    }

    /// The default acceptance model: dual family, d = 1, f(θ) = 2cos(2πθ),
    /// canonical v with the given (ρ, γ), golden frequency.
    pub fn default_dual(rho: f64, gamma: f64, lambda: f64) -> Self {
        Self {
            family: OperatorFamily::Dual,
            lambda,
            hopping: GevreySymbol::canonical(rho, gamma, 1, 256).expect("canonical params"),
            potential: AnalyticPotential::two_cos(1),
            omega: FrequencyVector::golden_family(1),
            phase: TorusPoint::scalar(0.0),
            direct_gevrey: None,
        }
    }

    /// The default model mapped to the direct family (g = 2cos, potential v).
    pub fn default_direct(rho: f64, gamma: f64, lambda: f64) -> Self {
        crate::spectral::duality::aubry_dual_map(&Self::default_dual(rho, gamma, lambda))
            .expect("default model is dualizable")
    }

    pub fn with_phase(&self, phase: TorusPoint) -> Self {
        let mut s = self.clone();
        s.phase = phase;
        s
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        s.lambda = lambda;
        s
    }

    /// Off-diagonal kernel of the assembled matrix including the coupling
    /// placement of the family: λ·v̂_{m-n} for dual, ĝ_{ℓ-ℓ'} for direct.
    pub fn hopping_entry(&self, diff: &[i64]) -> Result<f64> {
        match self.family {
            OperatorFamily::Dual => Ok(self.lambda * self.hopping.coefficient(diff)?),
            OperatorFamily::Direct => self.hopping.coefficient(diff),
        }
    }

    /// Diagonal sampling term at a lattice site.
    pub fn diagonal_entry(&self, site: &[i64], phase: &TorusPoint) -> Result<f64> {
        match self.family {
            OperatorFamily::Dual => {
                let shifted = shift_orbit(phase, &self.omega, site, ShiftMode::Componentwise)?;
                self.potential.evaluate(&shifted)
            }
            OperatorFamily::Direct => {
                let shifted = shift_scalar_site(phase, &self.omega, site[0])?;
                Ok(self.lambda * self.potential.evaluate(&shifted)?)
            }
        }
    }

    /// Truncation budget of the assembly: operator-norm bound on hopping
    /// discarded beyond the symbol radius, plus (direct family) the Gevrey
    /// tail dropped when v was truncated to a trig polynomial.
    pub fn truncation_budget(&self) -> f64 {
        match self.family {
            OperatorFamily::Dual => {
                self.lambda
                    * self
                        .hopping
                        .tail_bound(self.hopping.radius())
                        .unwrap_or(0.0)
            }
            OperatorFamily::Direct => {
                let hop_tail = self.hopping.tail_bound(self.hopping.radius()).unwrap_or(0.0);
                let pot_tail = self
                    .direct_gevrey
                    .as_ref()
                    .map(|v| v.tail_bound(self.potential.degree().max(1)).unwrap_or(0.0))
                    .unwrap_or(0.0);
                hop_tail + self.lambda * pot_tail
            }
        }
    }

    /// E-scan interval [min diag - ‖hopping‖, max diag + ‖hopping‖] with the
    /// family's coupling placement.
    pub fn energy_window(&self) -> (f64, f64) {
        let (lo, hi) = self.potential.numerical_range();
        match self.family {
            OperatorFamily::Dual => {
                let pad = self.lambda * self.hopping.schur_norm_bound();
                (lo - pad, hi + pad)
            }
            OperatorFamily::Direct => {
                let pad = self.hopping.schur_norm_bound();
                (self.lambda * lo - pad, self.lambda * hi + pad)
            }
        }
    }
}

/// A dense restriction of an operator to a finite site set.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub spec: OperatorSpec,
    pub sites: SiteSet,
    pub matrix: DMatrix<f64>,
    /// Operator-norm bound on what the truncations discarded.
    pub tail_bound: f64,
    /// Region metadata when the sites came from an elementary region.
    pub region: Option<Region>,
    /// Phase actually used (spec phase or an override).
    pub phase: TorusPoint,
}

impl AssembledOperator {
    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    /// Max-norm hermiticity defect; assembly is symmetric by construction
    /// so this only reflects accumulated floating-point error.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    /// Largest |entry| at each sup-norm site distance (decay profile).
    pub fn profile(&self) -> Vec<(i64, f64)> {
        let mut best: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let d = crate::region::site_dist(self.sites.site(i), self.sites.site(j));
                let v = self.matrix[(i, j)].abs();
                let slot = best.entry(d).or_insert(0.0);
                if v > *slot {
                    *slot = v;
                }
            }
        }
        best.into_iter().collect()
    }
}

/// Assemble the dual operator on an elementary region.
pub fn assemble_dual(
    spec: &OperatorSpec,
    region: &Region,
    theta_override: Option<&TorusPoint>,
) -> Result<AssembledOperator> {
    if spec.family != OperatorFamily::Dual {
        return Err(Error::Validation("assemble_dual needs a dual-family spec".into()));
    }
    spec.validate()?;
    if region.dim != spec.lattice_dim() {
        return Err(Error::DimensionMismatch(format!(
            "region dim {} vs operator lattice dim {}",
            region.dim,
            spec.lattice_dim()
        )));
    }
    let mut op = assemble_on_sites(spec, &region.site_set(), theta_override)?;
    op.region = Some(region.clone());
    Ok(op)
}

/// Assemble the direct operator on the interval [-n, n].
pub fn assemble_direct(
    spec: &OperatorSpec,
    half_length: i64,
    x_override: Option<&TorusPoint>,
) -> Result<AssembledOperator> {
    if spec.family != OperatorFamily::Direct {
        return Err(Error::Validation("assemble_direct needs a direct-family spec".into()));
    }
    spec.validate()?;
    let region = Region::centered_cube(half_length, 1);
    let mut op = assemble_on_sites(spec, &region.site_set(), x_override)?;
    op.region = Some(region);
    Ok(op)
}

/// Assemble either family on an arbitrary finite site set.
pub fn assemble_on_sites(
    spec: &OperatorSpec,
    sites: &SiteSet,
    phase_override: Option<&TorusPoint>,
) -> Result<AssembledOperator> {
    spec.validate()?;
    if sites.is_empty() {
        return Err(Error::Validation("cannot assemble on an empty site set".into()));
    }
    if sites.dim() != spec.lattice_dim() {
        return Err(Error::DimensionMismatch(format!(
            "site dim {} vs operator lattice dim {}",
            sites.dim(),
            spec.lattice_dim()
        )));
    }
    let phase = phase_override.unwrap_or(&spec.phase).clone();
    if phase.dim() != spec.phase.dim() {
        return Err(Error::DimensionMismatch(format!(
            "phase override dim {} vs spec phase dim {}",
            phase.dim(),
            spec.phase.dim()
        )));
    }
    let n = sites.len();
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    let zero_diff = vec![0i64; sites.dim()];

    for i in 0..n {
        let si = sites.site(i);
        matrix[(i, i)] = spec.diagonal_entry(si, &phase)? + spec.hopping_entry(&zero_diff)?;
        for j in (i + 1)..n {
            let sj = sites.site(j);
            let diff: Vec<i64> = si.iter().zip(sj).map(|(&a, &b)| a - b).collect();
            let h = spec.hopping_entry(&diff)?;
            matrix[(i, j)] = h;
            matrix[(j, i)] = h;
        }
    }

    Ok(AssembledOperator {
        spec: spec.clone(),
        sites: sites.clone(),
        matrix,
        tail_bound: spec.truncation_budget(),
        region: None,
        phase,
    })
}
