//! Analytic sampling potentials: real trigonometric polynomials on the
//! d-torus with a numerical non-degeneracy certificate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::symbol::sup_norm;
use crate::torus::TorusPoint;
use crate::{Error, Result};

/// Imaginary residue above this signals a corrupt coefficient table.
pub const IMAG_TOL: f64 = 1e-12;

/// One Fourier coefficient in the external JSON form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierEntry {
    pub n: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

/// A real-valued trigonometric polynomial f(θ) = Σ f̂_k e^{2πik·θ}.
///
/// Real-valuedness (f̂_{-k} = conj(f̂_k)) is enforced at construction; the
/// support is finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPotential {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
}

impl AnalyticPotential {
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (Vec<i64>, Complex64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("potential dim must be >= 1".into()));
        }
        let mut coeffs: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (n, c) in entries {
            if n.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "fourier index dim {} vs potential dim {dim}",
                    n.len()
                )));
            }
            if c.norm() == 0.0 {
                continue;
            }
            *coeffs.entry(n).or_insert(Complex64::ZERO) += c;
        }
        // Hermitian symmetry check: coefficient at -n must conjugate-match.
        for (n, c) in &coeffs {
            let neg: Vec<i64> = n.iter().map(|x| -x).collect();
            let partner = coeffs.get(&neg).copied().unwrap_or(Complex64::ZERO);
            if (partner - c.conj()).norm() > IMAG_TOL {
                return Err(Error::Validation(format!(
                    "potential is not real-valued: coeff at {n:?} = {c}, at -n = {partner}"
                )));
            }
        }
        Ok(Self { dim, coeffs })
    }

    /// The workhorse example `a·cos(2πθ_j)` in dimension `dim` (coordinate j).
    pub fn cosine(dim: usize, j: usize, amplitude: f64) -> Self {
        assert!(j < dim);
        let mut plus = vec![0i64; dim];
        plus[j] = 1;
        let minus: Vec<i64> = plus.iter().map(|x| -x).collect();
        let half = Complex64::new(amplitude / 2.0, 0.0);
        Self::new(dim, [(plus, half), (minus, half)]).expect("cosine table is hermitian")
    }

    /// f(θ) = 2cos(2πθ), the default model potential (d = 1).
    pub fn two_cos(dim: usize) -> Self {
        Self::cosine(dim, 0, 2.0)
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(dim, [(vec![0i64; dim], Complex64::new(value, 0.0))]).expect("constant is real")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i64>, Complex64> {
        &self.coeffs
    }

    /// Evaluate at a torus point. The imaginary residue is checked against
    /// `IMAG_TOL` and then discarded.
    pub fn evaluate(&self, theta: &TorusPoint) -> Result<f64> {
        if theta.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "theta dim {} vs potential dim {}",
                theta.dim(),
                self.dim
            )));
        }
        let mut acc = Complex64::ZERO;
        for (k, c) in &self.coeffs {
            let phase: f64 = k
                .iter()
                .zip(theta.coords())
                .map(|(&ki, &ti)| ki as f64 * ti)
                .sum();
            acc += c * Complex64::from_polar(1.0, TAU * phase);
        }
        let scale = self.sup_coeff_norm().max(1.0);
        if acc.im.abs() > IMAG_TOL * scale {
            return Err(Error::Validation(format!(
                "imaginary residue {} above tolerance: corrupt coefficient table",
                acc.im
            )));
        }
        Ok(acc.re)
    }

    fn sup_coeff_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Maximum Fourier index along any coordinate (degree of the polynomial).
    pub fn degree(&self) -> i64 {
        self.coeffs.keys().map(|n| sup_norm(n)).max().unwrap_or(0)
    }

    /// Proxy for ||f'||_∞: Σ_k 2π|k|·|f̂_k|, used by branch-continuity
    /// tolerances and spectrum clustering resolutions.
    pub fn derivative_sup_proxy(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, c)| TAU * sup_norm(k) as f64 * c.norm())
            .sum()
    }

    /// Range proxy [min f, max f] from a dense grid scan (1024·dim samples
    /// per axis along coordinate lines plus random probes would be overkill
    /// for trig polynomials of desk-scale degree; a full grid is used for
    /// d <= 2 and coordinate lines otherwise).
    pub fn numerical_range(&self) -> (f64, f64) {
        let samples = 4096usize;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        match self.dim {
            1 => {
                for i in 0..samples {
                    let t = TorusPoint::scalar(i as f64 / samples as f64);
                    let v = self.evaluate(&t).expect("validated table");
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            2 => {
                let side = 128usize;
                for i in 0..side {
                    for j in 0..side {
                        let t = TorusPoint::new(vec![
                            i as f64 / side as f64,
                            j as f64 / side as f64,
                        ])
                        .expect("grid point");
                        let v = self.evaluate(&t).expect("validated table");
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            d => {
                // Coordinate-line scan through a fixed base point.
                let base = TorusPoint::new(vec![0.0; d]).expect("origin");
                for j in 0..d {
                    for i in 0..samples {
                        let t = base.with_coord(j, i as f64 / samples as f64);
                        let v = self.evaluate(&t).expect("validated table");
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
        }
        (lo, hi)
    }

    /// External JSON form {"fourier": [{"n": [...], "re": ..., "im": ...}]}.
    pub fn to_entries(&self) -> Vec<FourierEntry> {
        self.coeffs
            .iter()
            .map(|(n, c)| FourierEntry {
                n: n.clone(),
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn from_entries(dim: usize, entries: &[FourierEntry]) -> Result<Self> {
        Self::new(
            dim,
            entries
                .iter()
                .map(|e| (e.n.clone(), Complex64::new(e.re, e.im))),
        )
    }
}

impl Serialize for AnalyticPotential {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            dim: usize,
            fourier: &'a [FourierEntry],
        }
        let entries = self.to_entries();
        Wire {
            dim: self.dim,
            fourier: &entries,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AnalyticPotential {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            dim: usize,
            fourier: Vec<FourierEntry>,
        }
        let w = Wire::deserialize(deserializer)?;
        Self::from_entries(w.dim, &w.fourier).map_err(serde::de::Error::custom)
    }
}

/// Result of the per-line oscillation scan behind the non-degeneracy check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    /// min over coordinates j and sampled sections of max-min of
    /// θ_j ↦ f(θ_j, θ_j¬) over the line grid.
    pub min_oscillation: f64,
    /// Coordinate attaining the minimum.
    pub worst_coordinate: usize,
    pub nondegenerate: bool,
    pub floor: f64,
    pub line_samples: usize,
    pub section_samples: usize,
}

/// Numerical non-degeneracy certificate: for every coordinate j and every
/// sampled section, the potential must oscillate along the θ_j-line.
///
/// Sections are drawn from a deterministic low-discrepancy sequence so the
/// report is reproducible without a seed.
pub fn nondegeneracy_check(
    f: &AnalyticPotential,
    line_samples: usize,
    section_samples: usize,
    floor: f64,
) -> Result<NondegeneracyReport> {
    if line_samples < 8 || section_samples < 8 {
        return Err(Error::Validation(
            "nondegeneracy check needs at least 8 samples per axis".into(),
        ));
    }
    let d = f.dim();
    let mut min_osc = f64::INFINITY;
    let mut worst_coordinate = 0;
    for j in 0..d {
        let sections = if d == 1 { 1 } else { section_samples };
        for s in 0..sections {
            // Weyl sequence section in the remaining d-1 coordinates.
            let mut base = vec![0.0f64; d];
            for (axis, slot) in base.iter_mut().enumerate() {
                if axis != j {
                    *slot = crate::torus::wrap_unit(
                        0.5 + (s as f64 + 1.0) * ((axis + 2) as f64).sqrt(),
                    );
                }
            }
            let base = TorusPoint::new(base)?;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..line_samples {
                let t = base.with_coord(j, i as f64 / line_samples as f64);
                let v = f.evaluate(&t)?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let osc = hi - lo;
            if osc < min_osc {
                min_osc = osc;
                worst_coordinate = j;
            }
        }
    }
    Ok(NondegeneracyReport {
        min_oscillation: min_osc,
        worst_coordinate,
        nondegenerate: min_osc > floor,
        floor,
        line_samples,
        section_samples,
    })
}
