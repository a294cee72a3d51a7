//! Elementary lattice regions, arbitrary finite site sets, and paving
//! covers — the geometry under the multi-scale analysis.
//!
//! An elementary region of size N is the cube `[-N, N]^d` or that cube with
//! a sign-quadrant corner removed (at least two flagged axes). Restrictions
//! of the operators live on arbitrary finite site sets; elementary regions
//! are the shapes the scans and paving lemmas quantify over.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::{Error, Result};

/// Per-axis flag of the removed corner: the removed set is
/// `{n : n_i < 0 for all NEG axes, n_i > 0 for all POS axes}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignDir {
    Neg,
    None,
    Pos,
}

/// Shape descriptor of an elementary region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionShape {
    FullCube,
    CornerRemoved { signs: Vec<SignDir> },
}

impl RegionShape {
    pub fn corner(signs: Vec<SignDir>) -> Result<Self> {
        let flagged = signs.iter().filter(|s| **s != SignDir::None).count();
        if flagged < 2 {
            return Err(Error::Validation(format!(
                "corner-removed shape needs >= 2 flagged axes, got {flagged}"
            )));
        }
        Ok(RegionShape::CornerRemoved { signs })
    }

    /// Stable identifier used in scan reports.
    pub fn id(&self) -> String {
        match self {
            RegionShape::FullCube => "cube".to_string(),
            RegionShape::CornerRemoved { signs } => {
                let tags: String = signs
                    .iter()
                    .map(|s| match s {
                        SignDir::Neg => 'n',
                        SignDir::None => '.',
                        SignDir::Pos => 'p',
                    })
                    .collect();
                format!("corner[{tags}]")
            }
        }
    }
}

/// An elementary region: shape, size N, integer center, dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: RegionShape,
    pub size: i64,
    pub center: Vec<i64>,
    pub dim: usize,
}

impl Region {
    pub fn new(shape: RegionShape, size: i64, center: Vec<i64>) -> Result<Self> {
        if size < 0 {
            return Err(Error::Validation(format!("region size must be >= 0, got {size}")));
        }
        let dim = center.len();
        if dim == 0 {
            return Err(Error::Validation("region dim must be >= 1".into()));
        }
        if let RegionShape::CornerRemoved { signs } = &shape {
            if signs.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "shape dim {} vs center dim {dim}",
                    signs.len()
                )));
            }
        }
        Ok(Self { shape, size, center, dim })
    }

    pub fn cube(size: i64, center: Vec<i64>) -> Result<Self> {
        Self::new(RegionShape::FullCube, size, center)
    }

    /// Centered cube `[-N, N]^d`.
    pub fn centered_cube(size: i64, dim: usize) -> Self {
        Self::cube(size, vec![0; dim]).expect("cube params are valid")
    }

    /// Point membership test.
    pub fn contains(&self, p: &[i64]) -> bool {
        if p.len() != self.dim {
            return false;
        }
        let rel: Vec<i64> = p.iter().zip(&self.center).map(|(&a, &c)| a - c).collect();
        if rel.iter().any(|&x| x.abs() > self.size) {
            return false;
        }
        match &self.shape {
            RegionShape::FullCube => true,
            RegionShape::CornerRemoved { signs } => {
                // Removed iff all flagged coordinates satisfy their strict sign.
                let removed = signs.iter().zip(&rel).all(|(s, &x)| match s {
                    SignDir::Neg => x < 0,
                    SignDir::Pos => x > 0,
                    SignDir::None => true,
                });
                // With no flagged axis `removed` would be vacuously true, but
                // construction guarantees >= 2 flags.
                !removed
            }
        }
    }

    /// Lexicographically ordered member points.
    pub fn points(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        let mut cursor = vec![-self.size; self.dim];
        loop {
            let p: Vec<i64> = cursor.iter().zip(&self.center).map(|(&r, &c)| r + c).collect();
            if self.contains(&p) {
                out.push(p);
            }
            // Odometer increment over [-N, N]^d in lexicographic order.
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if cursor[axis] < self.size {
                    cursor[axis] += 1;
                    for slot in cursor.iter_mut().skip(axis + 1) {
                        *slot = -self.size;
                    }
                    break;
                }
            }
        }
    }

    pub fn site_set(&self) -> SiteSet {
        SiteSet::from_points(self.points())
    }

    pub fn point_count(&self) -> usize {
        match &self.shape {
            RegionShape::FullCube => (2 * self.size as usize + 1).pow(self.dim as u32),
            RegionShape::CornerRemoved { .. } => self.points().len(),
        }
    }
}

/// All elementary shapes in dimension d: the full cube plus every sign
/// vector with at least two non-NONE entries, in lexicographic order
/// (component order NEG < NONE < POS). Count: 3^d - 2d.
pub fn enumerate_shapes(dim: usize) -> Vec<RegionShape> {
    assert!(dim >= 1, "dimension must be >= 1");
    let mut out = vec![RegionShape::FullCube];
    let order = [SignDir::Neg, SignDir::None, SignDir::Pos];
    let mut idx = vec![0usize; dim];
    loop {
        let signs: Vec<SignDir> = idx.iter().map(|&i| order[i]).collect();
        if signs.iter().filter(|s| **s != SignDir::None).count() >= 2 {
            out.push(RegionShape::CornerRemoved { signs });
        }
        let mut axis = dim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if idx[axis] < 2 {
                idx[axis] += 1;
                for slot in idx.iter_mut().skip(axis + 1) {
                    *slot = 0;
                }
                break;
            }
        }
    }
}

/// An arbitrary finite set of lattice sites with a stable (lexicographic)
/// ordering; the index space of restricted operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    sites: Vec<Vec<i64>>,
    dim: usize,
}

impl SiteSet {
    pub fn from_points(mut points: Vec<Vec<i64>>) -> Self {
        points.sort();
        points.dedup();
        let dim = points.first().map(|p| p.len()).unwrap_or(1);
        assert!(points.iter().all(|p| p.len() == dim), "mixed-dimension sites");
        Self { sites: points, dim }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> &[Vec<i64>] {
        &self.sites
    }

    pub fn site(&self, row: usize) -> &[i64] {
        &self.sites[row]
    }

    /// Row index of a site, if present.
    pub fn index_of(&self, p: &[i64]) -> Option<usize> {
        self.sites.binary_search_by(|s| s.as_slice().cmp(p)).ok()
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        self.index_of(p).is_some()
    }

    /// Set difference self \ other.
    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        let points = self
            .sites
            .iter()
            .filter(|p| !other.contains(p))
            .cloned()
            .collect();
        SiteSet::from_points(points)
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        let mut points = self.sites.clone();
        points.extend(other.sites.iter().cloned());
        SiteSet::from_points(points)
    }

    pub fn intersection(&self, other: &SiteSet) -> SiteSet {
        let points = self
            .sites
            .iter()
            .filter(|p| other.contains(p))
            .cloned()
            .collect();
        SiteSet::from_points(points)
    }

    pub fn is_subset_of(&self, other: &SiteSet) -> bool {
        self.sites.iter().all(|p| other.contains(p))
    }

    pub fn translated(&self, by: &[i64]) -> SiteSet {
        let points = self
            .sites
            .iter()
            .map(|p| p.iter().zip(by).map(|(&a, &b)| a + b).collect())
            .collect();
        SiteSet::from_points(points)
    }
}

/// Sup-norm distance between two sites.
pub fn site_dist(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).max().unwrap_or(0)
}

/// dist(m, Λ) = inf over Λ of the sup-norm distance.
pub fn dist_to_set(p: &[i64], set: &SiteSet) -> Option<i64> {
    set.sites().iter().map(|s| site_dist(p, s)).min()
}

/// diam(Λ) = sup over pairs of the sup-norm distance.
pub fn diam(set: &SiteSet) -> i64 {
    if set.is_empty() {
        return 0;
    }
    // Sup-norm diameter is the max coordinate-wise extent.
    let d = set.dim();
    (0..d)
        .map(|axis| {
            let lo = set.sites().iter().map(|p| p[axis]).min().unwrap();
            let hi = set.sites().iter().map(|p| p[axis]).max().unwrap();
            hi - lo
        })
        .max()
        .unwrap_or(0)
}

/// A paving cover: for each point of Λ, an elementary block W(n) ⊆ Λ with
/// n ∈ W and dist(n, Λ\W) >= size(W)/2.
#[derive(Debug, Clone)]
pub struct PavingCover {
    /// Deterministic assignment in Λ's site order.
    pub assignments: Vec<PavingEntry>,
    /// Block size M used for all blocks.
    pub block_size: i64,
}

#[derive(Debug, Clone)]
pub struct PavingEntry {
    pub point: Vec<i64>,
    pub block: Region,
}

/// Pave an elementary region Λ with size-M sub-blocks, sliding each block so
/// its target point is as central as possible (clipped to an elementary
/// shape where Λ's concave corner forces it). Fails when Λ is too small.
pub fn pave_region(lambda: &Region, m: i64) -> Result<PavingCover> {
    if m < 1 {
        return Err(Error::Validation("paving block size must be >= 1".into()));
    }
    let lam_sites = lambda.site_set();
    if diam(&lam_sites) < 2 * m + 1 {
        return Err(Error::Infeasible(format!(
            "diam(Lambda) = {} < 2M+1 = {}",
            diam(&lam_sites),
            2 * m + 1
        )));
    }
    let mut assignments = Vec::with_capacity(lam_sites.len());
    for p in lam_sites.sites() {
        let block = slide_block(lambda, p, m)?;
        let block_sites = block.site_set();
        // Verify the paving guarantees directly.
        if !block_sites.is_subset_of(&lam_sites) {
            return Err(Error::Infeasible(format!(
                "block for {p:?} escapes the region"
            )));
        }
        if !block_sites.contains(p) {
            return Err(Error::Infeasible(format!("block for {p:?} misses its point")));
        }
        let outside = lam_sites.difference(&block_sites);
        if let Some(d) = dist_to_set(p, &outside) {
            if (d as f64) < m as f64 / 2.0 {
                return Err(Error::Infeasible(format!(
                    "distance guarantee failed at {p:?}: dist {d} < M/2"
                )));
            }
        }
        assignments.push(PavingEntry {
            point: p.clone(),
            block,
        });
    }
    Ok(PavingCover {
        assignments,
        block_size: m,
    })
}

/// Slide a size-m cube centered as close to `p` as Λ allows; clip to a
/// corner-removed shape when Λ's own removed corner intrudes.
fn slide_block(lambda: &Region, p: &[i64], m: i64) -> Result<Region> {
    let d = lambda.dim;
    // Clamp the center axis-by-axis into [center - (N-m), center + (N-m)].
    let mut c = vec![0i64; d];
    for axis in 0..d {
        let lo = lambda.center[axis] - (lambda.size - m);
        let hi = lambda.center[axis] + (lambda.size - m);
        c[axis] = p[axis].clamp(lo.min(hi), hi.max(lo));
    }
    let cube = Region::cube(m, c.clone())?;
    // If the cube stays inside Λ we are done.
    let all_inside = cube.points().iter().all(|q| lambda.contains(q));
    if all_inside {
        return Ok(cube);
    }
    // Λ must be corner-removed; remove the matching corner of the block.
    if let RegionShape::CornerRemoved { signs } = &lambda.shape {
        let clipped = Region::new(
            RegionShape::corner(signs.clone())?,
            m,
            c.clone(),
        )?;
        let ok = clipped.points().iter().all(|q| lambda.contains(q)) && clipped.contains(p);
        if ok {
            return Ok(clipped);
        }
        // Slide away from the corner instead: push each flagged axis so the
        // cube clears the removed quadrant, then retry the plain cube.
        let mut c2 = c;
        for (axis, s) in signs.iter().enumerate() {
            match s {
                SignDir::Pos => {
                    // removed set has x_axis > 0; move center negative side
                    if p[axis] - lambda.center[axis] <= 0 {
                        c2[axis] = c2[axis].min(lambda.center[axis] - m);
                    }
                }
                SignDir::Neg => {
                    if p[axis] - lambda.center[axis] >= 0 {
                        c2[axis] = c2[axis].max(lambda.center[axis] + m);
                    }
                }
                SignDir::None => {}
            }
        }
        let cube2 = Region::cube(m, c2)?;
        if cube2.points().iter().all(|q| lambda.contains(q)) && cube2.contains(p) {
            return Ok(cube2);
        }
    }
    Err(Error::Infeasible(format!(
        "no elementary block of size {m} covers {p:?} inside the region"
    )))
}

/// Deterministic 1D interval paving inside an arbitrary union of integer
/// intervals (used for annulus covers): returns for each point an interval
/// block of half-length `m` inside the component, or an error when a
/// component is too short.
pub fn pave_interval_components(points: &BTreeSet<i64>, m: i64) -> Result<Vec<(i64, (i64, i64))>> {
    let mut out = Vec::new();
    let mut components: Vec<(i64, i64)> = Vec::new();
    let mut iter = points.iter().copied();
    if let Some(first) = iter.next() {
        let mut lo = first;
        let mut hi = first;
        for x in iter {
            if x == hi + 1 {
                hi = x;
            } else {
                components.push((lo, hi));
                lo = x;
                hi = x;
            }
        }
        components.push((lo, hi));
    }
    for (lo, hi) in components {
        if hi - lo + 1 < 2 * m + 1 {
            return Err(Error::Infeasible(format!(
                "component [{lo}, {hi}] shorter than 2M+1 = {}",
                2 * m + 1
            )));
        }
        for p in lo..=hi {
            let c = p.clamp(lo + m, hi - m);
            out.push((p, (c - m, c + m)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shape_counts_match_formula() {
        for (d, expect) in [(1usize, 1usize), (2, 5), (3, 21), (4, 73)] {
            let shapes = enumerate_shapes(d);
            assert_eq!(shapes.len(), expect, "d = {d}");
            assert_eq!(expect, 3usize.pow(d as u32) - 2 * d);
        }
    }

    #[test]
    fn d1_has_interval_only() {
        let shapes = enumerate_shapes(1);
        assert_eq!(shapes, vec![RegionShape::FullCube]);
    }

    #[test]
    fn full_cube_point_count() {
        let r = Region::centered_cube(1, 2);
        assert_eq!(r.points().len(), 9);
        assert_eq!(r.point_count(), 9);
    }

    #[test]
    fn corner_removed_drops_strict_quadrant() {
        let shape = RegionShape::corner(vec![SignDir::Pos, SignDir::Pos]).unwrap();
        let r = Region::new(shape, 1, vec![0, 0]).unwrap();
        let pts = r.points();
        assert_eq!(pts.len(), 8);
        assert!(!r.contains(&[1, 1]));
        assert!(r.contains(&[1, 0]));
        assert!(r.contains(&[0, 1]));
    }

    #[test]
    fn translation_moves_points() {
        let r = Region::centered_cube(2, 1);
        let t = Region::cube(2, vec![7]).unwrap();
        let moved: Vec<Vec<i64>> = r.points().iter().map(|p| vec![p[0] + 7]).collect();
        assert_eq!(t.points(), moved);
    }

    #[test]
    fn points_are_lexicographic() {
        let r = Region::centered_cube(1, 2);
        let pts = r.points();
        let mut sorted = pts.clone();
        sorted.sort();
        assert_eq!(pts, sorted);
    }

    #[test]
    fn corner_shape_needs_two_flags() {
        assert!(RegionShape::corner(vec![SignDir::Pos, SignDir::None]).is_err());
        assert!(RegionShape::corner(vec![SignDir::Pos, SignDir::Neg]).is_ok());
    }

    #[test]
    fn paving_interval_example() {
        // Λ = [-8, 8], M = 4: every point gets an interval with dist >= 2
        let lam = Region::centered_cube(8, 1);
        let cover = pave_region(&lam, 4).unwrap();
        assert_eq!(cover.assignments.len(), 17);
        let lam_sites = lam.site_set();
        for entry in &cover.assignments {
            let block_sites = entry.block.site_set();
            assert!(block_sites.is_subset_of(&lam_sites));
            let outside = lam_sites.difference(&block_sites);
            let d = dist_to_set(&entry.point, &outside).unwrap();
            assert!(d >= 2, "point {:?} has dist {d}", entry.point);
        }
    }

    #[test]
    fn paving_infeasible_when_small() {
        let lam = Region::centered_cube(2, 1);
        assert!(matches!(pave_region(&lam, 8), Err(Error::Infeasible(_))));
    }

    #[test]
    fn paving_corner_removed_2d() {
        let shape = RegionShape::corner(vec![SignDir::Pos, SignDir::Pos]).unwrap();
        let lam = Region::new(shape, 6, vec![0, 0]).unwrap();
        let cover = pave_region(&lam, 2).unwrap();
        let lam_sites = lam.site_set();
        for entry in &cover.assignments {
            let block_sites = entry.block.site_set();
            assert!(block_sites.is_subset_of(&lam_sites), "block escapes at {:?}", entry.point);
            let outside = lam_sites.difference(&block_sites);
            if let Some(d) = dist_to_set(&entry.point, &outside) {
                assert!(d >= 1, "dist guarantee at {:?}", entry.point);
            }
        }
    }

    #[test]
    fn dist_diam_brute_force_agreement() {
        let r = Region::centered_cube(3, 2);
        let s = r.site_set();
        // brute force over pairs
        let mut brute = 0;
        for a in s.sites() {
            for b in s.sites() {
                brute = brute.max(site_dist(a, b));
            }
        }
        assert_eq!(diam(&s), brute);
        let p = vec![10, -4];
        let brute_dist = s.sites().iter().map(|q| site_dist(&p, q)).min().unwrap();
        assert_eq!(dist_to_set(&p, &s), Some(brute_dist));
    }

    #[test]
    fn elementary_point_count_exact() {
        // removed corner with k flagged axes has N^k·(2N+1)^{d-k} points;
        // the full cube attains the maximum (2N+1)^d
        for d in 1..=3usize {
            for n in 1..=3i64 {
                let max = (2 * n as usize + 1).pow(d as u32);
                for shape in enumerate_shapes(d) {
                    let r = Region::new(shape.clone(), n, vec![0; d]).unwrap();
                    let count = r.points().len();
                    let expected = match &shape {
                        RegionShape::FullCube => max,
                        RegionShape::CornerRemoved { signs } => {
                            let k = signs.iter().filter(|s| **s != SignDir::None).count();
                            max - (n as usize).pow(k as u32)
                                * (2 * n as usize + 1).pow((d - k) as u32)
                        }
                    };
                    assert_eq!(count, expected, "shape {shape:?} N={n} d={d}");
                    if r.shape == RegionShape::FullCube {
                        assert_eq!(count, max);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn membership_matches_enumeration(
            n in 1i64..4,
            cx in -3i64..3,
            cy in -3i64..3,
            shape_idx in 0usize..5,
        ) {
            let shapes = enumerate_shapes(2);
            let r = Region::new(shapes[shape_idx].clone(), n, vec![cx, cy]).unwrap();
            let pts: BTreeSet<Vec<i64>> = r.points().into_iter().collect();
            for x in (cx - n - 1)..=(cx + n + 1) {
                for y in (cy - n - 1)..=(cy + n + 1) {
                    let p = vec![x, y];
                    prop_assert_eq!(r.contains(&p), pts.contains(&p));
                }
            }
        }
    }
}
