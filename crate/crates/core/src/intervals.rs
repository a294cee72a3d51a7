//! Closed-interval unions on the line: normalization, measure, Hausdorff
//! distance. Used for bad-set estimates and spectrum estimates.

use serde::{Deserialize, Serialize};

/// A normalized union of disjoint closed intervals, sorted by left endpoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| b >= a && a.is_finite() && b.is_finite());
        raw.sort_by(|x, y| x.partial_cmp(y).expect("finite endpoints"));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match intervals.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => intervals.push((a, b)),
            }
        }
        Self { intervals }
    }

    pub fn empty() -> Self {
        Self { intervals: vec![] }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }

    /// Distance from a point to the union (0 inside).
    pub fn dist(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| {
                if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Intersect with a single interval.
    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        let raw = self
            .intervals
            .iter()
            .filter_map(|&(a, b)| {
                let a2 = a.max(lo);
                let b2 = b.min(hi);
                (b2 >= a2).then_some((a2, b2))
            })
            .collect();
        Self::new(raw)
    }

    /// Inflate every interval by `pad` on both sides (then re-normalize).
    pub fn inflate(&self, pad: f64) -> Self {
        Self::new(self.intervals.iter().map(|&(a, b)| (a - pad, b + pad)).collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut raw = self.intervals.clone();
        raw.extend_from_slice(&other.intervals);
        Self::new(raw)
    }

    /// sup over points of self of the distance to other (directed Hausdorff).
    /// The sup is attained at an endpoint of self or at the point of self
    /// closest to a midpoint of a gap of other.
    pub fn directed_hausdorff(&self, other: &Self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        if other.is_empty() {
            return f64::INFINITY;
        }
        let mut candidates: Vec<f64> = Vec::new();
        for &(a, b) in &self.intervals {
            candidates.push(a);
            candidates.push(b);
        }
        // Midpoints of other's complement gaps, clipped into self.
        let o = &other.intervals;
        for w in o.windows(2) {
            let mid = 0.5 * (w[0].1 + w[1].0);
            candidates.push(self.closest_point_to(mid));
        }
        // Region beyond other's hull.
        let hull_lo = o.first().unwrap().0;
        let hull_hi = o.last().unwrap().1;
        candidates.push(self.closest_point_to(self.intervals.first().unwrap().0.min(hull_lo)));
        candidates.push(self.closest_point_to(self.intervals.last().unwrap().1.max(hull_hi)));

        candidates
            .into_iter()
            .filter(|x| self.contains(*x))
            .map(|x| other.dist(x))
            .fold(0.0, f64::max)
    }

    /// Point of the union closest to x (x itself when inside).
    fn closest_point_to(&self, x: f64) -> f64 {
        if self.contains(x) {
            return x;
        }
        let mut best = f64::NAN;
        let mut best_d = f64::INFINITY;
        for &(a, b) in &self.intervals {
            for e in [a, b] {
                let d = (e - x).abs();
                if d < best_d {
                    best_d = d;
                    best = e;
                }
            }
        }
        best
    }

    /// Symmetric Hausdorff distance between interval unions.
    pub fn hausdorff(&self, other: &Self) -> f64 {
        self.directed_hausdorff(other)
            .max(other.directed_hausdorff(self))
    }
}

/// Build the union from a sorted-or-unsorted sample cloud: samples closer
/// than `cluster_eps` merge into one interval.
pub fn cluster_samples(mut samples: Vec<f64>, cluster_eps: f64) -> IntervalUnion {
    samples.retain(|x| x.is_finite());
    if samples.is_empty() {
        return IntervalUnion::empty();
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let mut raw = Vec::new();
    let mut lo = samples[0];
    let mut hi = samples[0];
    for &x in &samples[1..] {
        if x - hi <= cluster_eps {
            hi = x;
        } else {
            raw.push((lo, hi));
            lo = x;
            hi = x;
        }
    }
    raw.push((lo, hi));
    IntervalUnion::new(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_merges_overlaps() {
        let u = IntervalUnion::new(vec![(0.0, 1.0), (0.5, 2.0), (3.0, 4.0)]);
        assert_eq!(u.intervals(), &[(0.0, 2.0), (3.0, 4.0)]);
        assert!((u.measure() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_identical_is_zero() {
        let u = IntervalUnion::new(vec![(0.0, 1.0), (2.0, 3.0)]);
        assert_eq!(u.hausdorff(&u), 0.0);
    }

    #[test]
    fn hausdorff_shifted_intervals() {
        let a = IntervalUnion::new(vec![(0.0, 1.0)]);
        let b = IntervalUnion::new(vec![(0.25, 1.0)]);
        assert!((a.hausdorff(&b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_gap_midpoint_case() {
        // a covers the gap of b: farthest point is the gap midpoint
        let a = IntervalUnion::new(vec![(0.0, 10.0)]);
        let b = IntervalUnion::new(vec![(0.0, 4.0), (6.0, 10.0)]);
        assert!((a.hausdorff(&b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clustering_builds_bands() {
        let samples = vec![0.0, 0.01, 0.02, 0.5, 0.51];
        let u = cluster_samples(samples, 0.05);
        assert_eq!(u.intervals().len(), 2);
        assert!((u.measure() - 0.03).abs() < 1e-12);
    }

    #[test]
    fn inflate_and_clip() {
        let u = IntervalUnion::new(vec![(1.0, 2.0)]);
        let inflated = u.inflate(0.5);
        assert_eq!(inflated.intervals(), &[(0.5, 2.5)]);
        let clipped = inflated.clip(0.0, 2.0);
        assert_eq!(clipped.intervals(), &[(0.5, 2.0)]);
    }
}
