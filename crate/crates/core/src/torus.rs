//! Torus arithmetic: phase points, frequency vectors and orbit shifts.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reduce `x` into `[0, 1)` by floor subtraction.
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    // x slightly below an integer can round to 1.0 after the subtraction.
    if y >= 1.0 {
        y - 1.0
    } else {
        y
    }
}

/// A point on the d-torus; every coordinate lives in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Validation("torus point needs dim >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite torus coordinate".into()));
        }
        Ok(Self {
            coords: coords.into_iter().map(wrap_unit).collect(),
        })
    }

    /// 1-dimensional point.
    pub fn scalar(x: f64) -> Self {
        Self {
            coords: vec![wrap_unit(x)],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Replace coordinate `j`, wrapping the new value.
    pub fn with_coord(&self, j: usize, value: f64) -> Self {
        let mut coords = self.coords.clone();
        coords[j] = wrap_unit(value);
        Self { coords }
    }
}

/// Frequency vector with a measured small-divisor quality.
///
/// The sets of "good" frequencies in the underlying theory are
/// non-constructive; here a frequency is just a user-supplied vector whose
/// rational independence is probed numerically over a finite index range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    coords: Vec<f64>,
    /// Worst exponent q with dist(n·ω, Z) ≈ |n|^{-q} over the probed range.
    diophantine_log_quality: f64,
    probe_range: i64,
}

impl FrequencyVector {
    /// Build from raw coordinates, probing small divisors over `0 < |n| <= range`.
    pub fn new(coords: Vec<f64>, probe_range: i64) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Validation("frequency needs dim >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite frequency coordinate".into()));
        }
        let coords: Vec<f64> = coords.into_iter().map(wrap_unit).collect();
        let quality = probe_quality(&coords, probe_range)?;
        Ok(Self {
            coords,
            diophantine_log_quality: quality,
            probe_range,
        })
    }

    /// Default frequency family: componentwise fractional parts of sqrt of
    /// the first d primes (a standard quadratic-irrational surrogate).
    pub fn golden_family(dim: usize) -> Self {
        const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
        assert!(dim >= 1 && dim <= PRIMES.len(), "golden_family supports d <= 8");
        let coords: Vec<f64> = PRIMES[..dim]
            .iter()
            .map(|&p| wrap_unit((p as f64).sqrt()))
            .collect();
        Self::new(coords, 64).expect("quadratic irrationals are rationally independent")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn diophantine_log_quality(&self) -> f64 {
        self.diophantine_log_quality
    }
}

/// Distance from `x` to the nearest integer.
pub fn dist_to_integers(x: f64) -> f64 {
    let f = wrap_unit(x);
    f.min(1.0 - f)
}

fn probe_quality(coords: &[f64], range: i64) -> Result<f64> {
    if range < 1 {
        return Err(Error::Validation("probe range must be >= 1".into()));
    }
    let mut worst: f64 = 0.0;
    // Componentwise probe |n·ω_i - m|; multi-index probes for d >= 2 use the
    // inner product along the diagonal directions actually exercised by the
    // orbit shifts.
    for &w in coords {
        for n in 1..=range {
            let d = dist_to_integers(n as f64 * w);
            if d == 0.0 {
                return Err(Error::Validation(format!(
                    "frequency resonance: |{n}·ω - m| = 0 within probe range"
                )));
            }
            let q = -d.ln() / ((1 + n) as f64).ln();
            worst = worst.max(q);
        }
    }
    if coords.len() > 1 {
        let sum: f64 = coords.iter().sum();
        for n in 1..=range {
            let d = dist_to_integers(n as f64 * sum);
            if d == 0.0 {
                return Err(Error::Validation(format!(
                    "frequency resonance on the diagonal: |{n}·Σω - m| = 0"
                )));
            }
            let q = -d.ln() / ((1 + n) as f64).ln();
            worst = worst.max(q);
        }
    }
    Ok(worst)
}

/// Orbit shift flavor: componentwise `θ_i + n_i ω_i` (the d-dimensional
/// family) or the inner shift `x + n·ω` onto a 1-torus point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMode {
    Componentwise,
    Inner,
}

/// Shift a phase along the orbit: `θ ↦ θ + nω` (componentwise) or
/// `x ↦ x + Σ n_i ω_i` (inner, producing a 1D point).
pub fn shift_orbit(
    theta: &TorusPoint,
    omega: &FrequencyVector,
    n: &[i64],
    mode: ShiftMode,
) -> Result<TorusPoint> {
    if omega.dim() != n.len() {
        return Err(Error::DimensionMismatch(format!(
            "omega dim {} vs index dim {}",
            omega.dim(),
            n.len()
        )));
    }
    match mode {
        ShiftMode::Componentwise => {
            if theta.dim() != omega.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "theta dim {} vs omega dim {}",
                    theta.dim(),
                    omega.dim()
                )));
            }
            let coords = theta
                .coords()
                .iter()
                .zip(omega.coords())
                .zip(n)
                .map(|((&t, &w), &k)| wrap_unit(t + k as f64 * w))
                .collect();
            Ok(TorusPoint { coords })
        }
        ShiftMode::Inner => {
            if theta.dim() != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "inner shift needs a 1D phase, got dim {}",
                    theta.dim()
                )));
            }
            let dot: f64 = omega
                .coords()
                .iter()
                .zip(n)
                .map(|(&w, &k)| k as f64 * w)
                .sum();
            Ok(TorusPoint::scalar(theta.coords()[0] + dot))
        }
    }
}

/// Componentwise shift by a scalar site: `x + ℓω = (x_i + ℓω_i)_i`, the
/// orbit of the 1D long-range family with a d-dimensional phase.
pub fn shift_scalar_site(x: &TorusPoint, omega: &FrequencyVector, site: i64) -> Result<TorusPoint> {
    let n = vec![site; omega.dim()];
    shift_orbit(x, omega, &n, ShiftMode::Componentwise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Short probe range: the worked examples use terminating decimals,
    // which hit exact rationality in f64 at moderate multiples.
    fn freq(coords: Vec<f64>) -> FrequencyVector {
        FrequencyVector::new(coords, 4).unwrap()
    }

    #[test]
    fn componentwise_shift_example() {
        let theta = TorusPoint::new(vec![0.25, 0.5]).unwrap();
        let omega = freq(vec![0.1, 0.2]);
        let s = shift_orbit(&theta, &omega, &[3, -1], ShiftMode::Componentwise).unwrap();
        assert!((s.coords()[0] - 0.55).abs() < 1e-12);
        assert!((s.coords()[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn inner_shift_example() {
        let x = TorusPoint::scalar(0.3);
        let omega = freq(vec![0.1, 0.2]);
        let s = shift_orbit(&x, &omega, &[3, -1], ShiftMode::Inner).unwrap();
        assert_eq!(s.dim(), 1);
        assert!((s.coords()[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn wraparound() {
        let theta = TorusPoint::scalar(0.9);
        let omega = freq(vec![0.3]);
        let s = shift_orbit(&theta, &omega, &[1], ShiftMode::Componentwise).unwrap();
        assert!((s.coords()[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let theta = TorusPoint::scalar(0.1);
        let omega = freq(vec![0.1, 0.2]);
        assert!(matches!(
            shift_orbit(&theta, &omega, &[1, 2], ShiftMode::Componentwise),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            shift_orbit(&theta, &omega, &[1], ShiftMode::Inner),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rational_frequency_rejected() {
        assert!(FrequencyVector::new(vec![0.5], 8).is_err());
        assert!(FrequencyVector::new(vec![0.25], 8).is_err());
    }

    #[test]
    fn golden_family_quality_is_finite() {
        let f = FrequencyVector::golden_family(2);
        assert!(f.diophantine_log_quality() > 0.0);
        assert!(f.diophantine_log_quality() < 10.0);
    }

    proptest! {
        // shift(shift(θ, n), m) = shift(θ, n+m) up to wrap tolerance
        #[test]
        fn shift_additivity(
            t in 0.0f64..1.0,
            n in -50i64..50,
            m in -50i64..50,
        ) {
            let theta = TorusPoint::scalar(t);
            let omega = freq(vec![FrequencyVector::golden_family(1).coords()[0]]);
            let a = shift_orbit(
                &shift_orbit(&theta, &omega, &[n], ShiftMode::Componentwise).unwrap(),
                &omega, &[m], ShiftMode::Componentwise).unwrap();
            let b = shift_orbit(&theta, &omega, &[n + m], ShiftMode::Componentwise).unwrap();
            let d = dist_to_integers(a.coords()[0] - b.coords()[0]);
            prop_assert!(d < 1e-10, "additivity broke: {d}");
        }

        #[test]
        fn inner_shift_additivity(
            t in 0.0f64..1.0,
            n1 in -20i64..20, n2 in -20i64..20,
            m1 in -20i64..20, m2 in -20i64..20,
        ) {
            let theta = TorusPoint::scalar(t);
            let omega = FrequencyVector::golden_family(2);
            let a = shift_orbit(
                &shift_orbit(&theta, &omega, &[n1, n2], ShiftMode::Inner).unwrap(),
                &omega, &[m1, m2], ShiftMode::Inner).unwrap();
            let b = shift_orbit(&theta, &omega, &[n1 + m1, n2 + m2], ShiftMode::Inner).unwrap();
            let d = dist_to_integers(a.coords()[0] - b.coords()[0]);
            prop_assert!(d < 1e-10);
        }

        #[test]
        fn wrap_stays_in_unit(x in -1e6f64..1e6) {
            let w = wrap_unit(x);
            prop_assert!((0.0..1.0).contains(&w));
        }
    }
}
