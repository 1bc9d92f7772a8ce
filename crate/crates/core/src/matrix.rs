//! Sparse d-dimensional frequency matrices, axis-aligned regions and
//! partition sets.
//!
//! Cells are kept in a flat, row-major-sorted coordinate list so that every
//! operation costs time proportional to the number of non-zero cells (plus
//! output size), never to the volume of the domain. A 1000^4 OD matrix with
//! a few hundred thousand trips is therefore as cheap to handle as a 2D one.

use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Half-open integer interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub fn new(lo: u32, hi: u32) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "empty interval [{lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, c: u32) -> bool {
        self.lo <= c && c < self.hi
    }

    /// Length of the overlap with `other` (0 when disjoint).
    #[inline]
    pub fn overlap(&self, other: &Interval) -> u32 {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        hi.saturating_sub(lo)
    }
}

pub(crate) type Bounds = SmallVec<[Interval; 6]>;

/// Axis-aligned d-orthotope made of one half-open interval per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    bounds: Bounds,
}

impl Region {
    pub fn new(bounds: impl IntoIterator<Item = Interval>) -> Result<Self> {
        let bounds: Bounds = bounds.into_iter().collect();
        if bounds.is_empty() {
            return Err(Error::InvalidParameter("region needs at least one dimension".into()));
        }
        if let Some(iv) = bounds.iter().find(|iv| iv.lo >= iv.hi) {
            return Err(Error::InvalidParameter(format!(
                "empty interval [{}, {}) in region",
                iv.lo, iv.hi
            )));
        }
        Ok(Self { bounds })
    }

    /// Convenience constructor from `(lo, hi)` pairs.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(lo, hi)| Interval { lo, hi }))
    }

    /// The whole domain `[0, F_1) x ... x [0, F_d)`.
    pub fn full(extents: &[u32]) -> Self {
        Self {
            bounds: extents.iter().map(|&f| Interval { lo: 0, hi: f }).collect(),
        }
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    #[inline]
    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    #[inline]
    pub fn interval(&self, dim: usize) -> Interval {
        self.bounds[dim]
    }

    #[inline]
    pub fn width(&self, dim: usize) -> u32 {
        self.bounds[dim].width()
    }

    /// Number of cells covered.
    pub fn volume(&self) -> u128 {
        self.bounds.iter().map(|iv| iv.width() as u128).product()
    }

    #[inline]
    pub fn contains_point(&self, coords: &[u32]) -> bool {
        self.bounds.iter().zip(coords).all(|(iv, &c)| iv.contains(c))
    }

    pub fn fits(&self, extents: &[u32]) -> bool {
        self.dims() == extents.len() && self.bounds.iter().zip(extents).all(|(iv, &f)| iv.hi <= f)
    }

    pub(crate) fn check_fits(&self, extents: &[u32]) -> Result<()> {
        if self.fits(extents) {
            Ok(())
        } else {
            Err(Error::RegionOutOfExtents {
                region: self.to_string(),
                extents: extents.to_vec(),
            })
        }
    }

    /// Number of cells shared with `other`, computed exactly.
    pub fn intersection_volume(&self, other: &Region) -> u128 {
        let mut v: u128 = 1;
        for (a, b) in self.bounds.iter().zip(&other.bounds) {
            let o = a.overlap(b);
            if o == 0 {
                return 0;
            }
            v *= o as u128;
        }
        v
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.bounds.iter().zip(&other.bounds).any(|(a, b)| a.overlap(b) == 0)
    }

    /// Whether `other` lies entirely inside `self`.
    pub fn contains_region(&self, other: &Region) -> bool {
        self.bounds
            .iter()
            .zip(&other.bounds)
            .all(|(a, b)| a.lo <= b.lo && b.hi <= a.hi)
    }

    /// Copy of `self` with dimension `dim` replaced by `iv`.
    pub fn with_interval(&self, dim: usize, iv: Interval) -> Region {
        let mut bounds = self.bounds.clone();
        bounds[dim] = iv;
        Region { bounds }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.bounds.iter().enumerate() {
            if i > 0 {
                f.write_str("x")?;
            }
            write!(f, "[{},{})", iv.lo, iv.hi)?;
        }
        Ok(())
    }
}

/// Equal-width boundaries for splitting `[lo, hi)` into `m` parts:
/// `lo + floor(j * w / m)` for `j = 0..=m`. `m` must be in `1..=w`.
pub(crate) fn equal_boundaries(iv: Interval, m: u32) -> Vec<u32> {
    let w = iv.width() as u64;
    let m = m as u64;
    (0..=m).map(|j| iv.lo + (j * w / m) as u32).collect()
}

/// Splits `r` along `dim` into `m` equal-width pieces with floor boundaries.
///
/// A fanout larger than the interval width is clamped to the width so that
/// no piece is empty.
pub fn split_dimension(r: &Region, dim: usize, m: u32) -> Result<Vec<Region>> {
    if m < 1 {
        return Err(Error::InvalidParameter("split fanout must be at least 1".into()));
    }
    if dim >= r.dims() {
        return Err(Error::InvalidParameter(format!(
            "split dimension {dim} out of range for a {}-dimensional region",
            r.dims()
        )));
    }
    let iv = r.interval(dim);
    let m = m.min(iv.width());
    let b = equal_boundaries(iv, m);
    Ok(b
        .windows(2)
        .map(|w| r.with_interval(dim, Interval { lo: w[0], hi: w[1] }))
        .collect())
}

/// Entropy of a count distribution, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropy {
    pub bits: f64,
    /// Set when every count was zero; `bits` is then defined as 0.
    pub all_zero: bool,
}

/// `-sum (p_i / P) log2 (p_i / P)` with `0 log 0 = 0`.
pub fn entropy_of_counts(counts: impl IntoIterator<Item = u64> + Clone) -> Entropy {
    let total: u128 = counts.clone().into_iter().map(|c| c as u128).sum();
    if total == 0 {
        return Entropy { bits: 0.0, all_zero: true };
    }
    let total = total as f64;
    let bits = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);
    Entropy { bits, all_zero: false }
}

fn strides_for(extents: &[u32]) -> Result<Vec<u128>> {
    let mut strides = vec![1u128; extents.len()];
    let mut acc: u128 = 1;
    for i in (0..extents.len()).rev() {
        strides[i] = acc;
        acc = acc.checked_mul(extents[i] as u128).ok_or_else(|| {
            Error::InvalidParameter(format!("domain volume of extents {extents:?} overflows"))
        })?;
    }
    Ok(strides)
}

fn validate_extents(extents: &[u32]) -> Result<()> {
    if extents.is_empty() {
        return Err(Error::InvalidParameter("a matrix needs at least one dimension".into()));
    }
    if let Some(i) = extents.iter().position(|&f| f == 0) {
        return Err(Error::InvalidParameter(format!("extent of dimension {i} is zero")));
    }
    Ok(())
}

/// Accumulates points into a [`FrequencyMatrix`].
#[derive(Debug, Clone)]
pub struct MatrixBuilder {
    extents: Vec<u32>,
    strides: Vec<u128>,
    entries: Vec<(u128, u64)>,
    pushed: usize,
}

impl MatrixBuilder {
    pub fn new(extents: &[u32]) -> Result<Self> {
        validate_extents(extents)?;
        Ok(Self {
            extents: extents.to_vec(),
            strides: strides_for(extents)?,
            entries: Vec::new(),
            pushed: 0,
        })
    }

    pub fn with_capacity(extents: &[u32], capacity: usize) -> Result<Self> {
        let mut b = Self::new(extents)?;
        b.entries.reserve(capacity);
        Ok(b)
    }

    pub fn extents(&self) -> &[u32] {
        &self.extents
    }

    pub fn push(&mut self, coords: &[u32]) -> Result<()> {
        self.push_weighted(coords, 1)
    }

    /// Adds `weight` records at `coords`. Zero weights are ignored.
    pub fn push_weighted(&mut self, coords: &[u32], weight: u64) -> Result<()> {
        let point = self.pushed;
        self.pushed += 1;
        if coords.len() != self.extents.len() {
            return Err(Error::DimensionMismatch {
                expected: self.extents.len(),
                got: coords.len(),
            });
        }
        let mut key: u128 = 0;
        for (dim, ((&c, &f), &s)) in coords.iter().zip(&self.extents).zip(&self.strides).enumerate() {
            if c >= f {
                return Err(Error::PointOutOfRange {
                    point,
                    dim,
                    coord: c as u64,
                    extent: f,
                });
            }
            key += c as u128 * s;
        }
        if weight > 0 {
            self.entries.push((key, weight));
        }
        Ok(())
    }

    pub fn build(self) -> FrequencyMatrix {
        let MatrixBuilder {
            extents,
            strides,
            mut entries,
            ..
        } = self;
        entries.sort_unstable_by_key(|e| e.0);
        let d = extents.len();
        let mut keys = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for (k, w) in entries {
            if keys.last() == Some(&k) {
                *counts.last_mut().unwrap() += w;
            } else {
                keys.push(k);
                counts.push(w);
            }
        }
        let mut coords = Vec::with_capacity(keys.len() * d);
        for &k in &keys {
            let mut rem = k;
            for &s in &strides {
                coords.push((rem / s) as u32);
                rem %= s;
            }
        }
        let total = counts.iter().sum();
        FrequencyMatrix {
            extents,
            strides,
            keys,
            coords,
            counts,
            total,
        }
    }
}

/// Sparse d-dimensional array of non-negative integer counts.
///
/// Immutable once built. Only non-zero cells are stored, ordered row-major
/// (lexicographically by coordinate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyMatrix {
    extents: Vec<u32>,
    strides: Vec<u128>,
    keys: Vec<u128>,
    coords: Vec<u32>,
    counts: Vec<u64>,
    total: u64,
}

impl FrequencyMatrix {
    /// Builds a matrix from unit-weight points.
    pub fn from_points<P: AsRef<[u32]>>(
        points: impl IntoIterator<Item = P>,
        extents: &[u32],
    ) -> Result<Self> {
        let mut b = MatrixBuilder::new(extents)?;
        for p in points {
            b.push(p.as_ref())?;
        }
        Ok(b.build())
    }

    /// Builds a matrix from `(coords, weight)` pairs.
    pub fn from_weighted_points<P: AsRef<[u32]>>(
        points: impl IntoIterator<Item = (P, u64)>,
        extents: &[u32],
    ) -> Result<Self> {
        let mut b = MatrixBuilder::new(extents)?;
        for (p, w) in points {
            b.push_weighted(p.as_ref(), w)?;
        }
        Ok(b.build())
    }

    pub fn empty(extents: &[u32]) -> Result<Self> {
        Ok(MatrixBuilder::new(extents)?.build())
    }

    #[inline]
    pub fn extents(&self) -> &[u32] {
        &self.extents
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    /// Sum of all counts (N).
    #[inline]
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of non-zero cells.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    /// Number of cells in the domain.
    pub fn volume(&self) -> u128 {
        self.extents.iter().map(|&f| f as u128).product()
    }

    pub fn full_region(&self) -> Region {
        Region::full(&self.extents)
    }

    #[inline]
    pub fn cell_coords(&self, i: usize) -> &[u32] {
        let d = self.dims();
        &self.coords[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn cell_count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Non-zero cells in row-major order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[u32], u64)> + '_ {
        self.coords
            .chunks_exact(self.dims())
            .zip(self.counts.iter().copied())
    }

    fn key_of(&self, coords: &[u32]) -> Option<u128> {
        if coords.len() != self.dims() {
            return None;
        }
        let mut key = 0u128;
        for ((&c, &f), &s) in coords.iter().zip(&self.extents).zip(&self.strides) {
            if c >= f {
                return None;
            }
            key += c as u128 * s;
        }
        Some(key)
    }

    /// Count stored at `coords` (0 for absent or out-of-range cells).
    pub fn get(&self, coords: &[u32]) -> u64 {
        self.key_of(coords)
            .and_then(|k| self.keys.binary_search(&k).ok())
            .map_or(0, |i| self.counts[i])
    }

    /// Index range of stored cells whose first coordinate lies in `iv`.
    pub(crate) fn first_dim_range(&self, iv: Interval) -> std::ops::Range<usize> {
        let s0 = self.strides[0];
        let lo = iv.lo as u128 * s0;
        let hi = iv.hi as u128 * s0;
        let a = self.keys.partition_point(|&k| k < lo);
        let b = self.keys.partition_point(|&k| k < hi);
        a..b
    }

    /// Exact sum of counts inside `r`.
    pub fn region_sum(&self, r: &Region) -> Result<u64> {
        r.check_fits(&self.extents)?;
        Ok(self.region_sum_unchecked(r))
    }

    pub(crate) fn region_sum_unchecked(&self, r: &Region) -> u64 {
        let range = self.first_dim_range(r.interval(0));
        let d = self.dims();
        let mut sum = 0u64;
        for i in range {
            let c = &self.coords[i * d..(i + 1) * d];
            if r.bounds()[1..].iter().zip(&c[1..]).all(|(iv, &x)| iv.contains(x)) {
                sum += self.counts[i];
            }
        }
        sum
    }

    /// Entropy of the cell-level count distribution.
    pub fn cell_entropy(&self) -> Entropy {
        entropy_of_counts(self.counts.iter().copied())
    }
}

/// A disjoint cover of the domain with the true count of every part.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSet {
    extents: Vec<u32>,
    regions: Vec<Region>,
    counts: Vec<u64>,
}

impl PartitionSet {
    /// Validates that `regions` are pairwise disjoint and cover `extents`.
    pub fn new(extents: &[u32], regions: Vec<Region>, counts: Vec<u64>) -> Result<Self> {
        if regions.len() != counts.len() {
            return Err(Error::InvalidPartition(format!(
                "{} regions but {} counts",
                regions.len(),
                counts.len()
            )));
        }
        check_disjoint_cover(extents, &regions)?;
        Ok(Self {
            extents: extents.to_vec(),
            regions,
            counts,
        })
    }

    /// Partition set over `m` with counts taken from the matrix.
    pub fn from_regions(m: &FrequencyMatrix, regions: Vec<Region>) -> Result<Self> {
        let counts = regions
            .iter()
            .map(|r| m.region_sum(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(m.extents(), regions, counts)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn extents(&self) -> &[u32] {
        &self.extents
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn entropy(&self) -> Entropy {
        entropy_of_counts(self.counts.iter().copied())
    }
}

/// Checks pairwise disjointness and exact coverage of the domain.
pub fn check_disjoint_cover(extents: &[u32], regions: &[Region]) -> Result<()> {
    let mut vol: u128 = 0;
    for (i, r) in regions.iter().enumerate() {
        if !r.fits(extents) {
            return Err(Error::InvalidPartition(format!(
                "region #{i} {r} lies outside extents {extents:?}"
            )));
        }
        vol += r.volume();
    }
    let domain: u128 = extents.iter().map(|&f| f as u128).product();
    if vol != domain {
        return Err(Error::InvalidPartition(format!(
            "region volumes sum to {vol}, domain volume is {domain}"
        )));
    }
    // Sweep along dimension 0: only regions whose first intervals overlap
    // need a full comparison.
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_unstable_by_key(|&i| regions[i].interval(0).lo);
    for (pos, &i) in order.iter().enumerate() {
        let hi = regions[i].interval(0).hi;
        for &j in &order[pos + 1..] {
            if regions[j].interval(0).lo >= hi {
                break;
            }
            if !regions[i].is_disjoint(&regions[j]) {
                return Err(Error::InvalidPartition(format!(
                    "regions #{i} {} and #{j} {} overlap",
                    regions[i], regions[j]
                )));
            }
        }
    }
    Ok(())
}
