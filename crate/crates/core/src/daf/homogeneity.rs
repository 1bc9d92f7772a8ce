//! Homogeneity split objective and random candidate split sets.

use crate::error::{Error, Result};
use crate::matrix::{equal_boundaries, FrequencyMatrix, Region};
use crate::mechanism::NoiseStream;

/// How a candidate set of `m` drawn coordinates becomes `m - 1` boundaries.
pub const CANDIDATE_RULE: &str = "drop-largest;boundary=draw+1";

/// Draws `p` candidate sets for splitting `r` along `dim` into `m` parts.
///
/// Each set holds one uniform coordinate from each of the `m` equal-width
/// intervals of the dimension, in ascending order.
pub fn candidate_sets(
    r: &Region,
    dim: usize,
    m: u32,
    p: usize,
    stream: &mut NoiseStream,
) -> Result<Vec<Vec<u32>>> {
    if dim >= r.dims() {
        return Err(Error::InvalidParameter(format!(
            "split dimension {dim} out of range for a {}-dimensional region",
            r.dims()
        )));
    }
    let iv = r.interval(dim);
    if m < 2 || m > iv.width() {
        return Err(Error::InvalidParameter(format!(
            "candidate sets need 2 <= m <= width, got m = {m}, width = {}",
            iv.width()
        )));
    }
    let b = equal_boundaries(iv, m);
    Ok((0..p)
        .map(|_| {
            b.windows(2)
                .map(|w| stream.uniform_int(w[0], w[1]))
                .collect()
        })
        .collect())
}

/// Child boundaries from a candidate set: the largest draw is dropped and
/// each child ends right after one of the remaining draws. Always yields
/// `m - 1` strictly increasing interior boundaries.
pub fn candidate_boundaries(set: &[u32]) -> Vec<u32> {
    set[..set.len().saturating_sub(1)]
        .iter()
        .map(|&k| k + 1)
        .collect()
}

fn check_boundaries(r: &Region, dim: usize, boundaries: &[u32]) -> Result<()> {
    let iv = r.interval(dim);
    let mut prev = iv.lo;
    for &b in boundaries {
        if b <= prev || b >= iv.hi {
            return Err(Error::InvalidParameter(format!(
                "split boundaries {boundaries:?} are not strictly increasing inside [{}, {})",
                iv.lo, iv.hi
            )));
        }
        prev = b;
    }
    Ok(())
}

/// Sum over the sub-regions produced by `boundaries` of the absolute
/// deviations of every cell (zero cells included) from the sub-region mean.
///
/// `boundaries` are the interior start coordinates of the second and later
/// sub-regions along `dim`.
pub fn homogeneity_objective(
    m: &FrequencyMatrix,
    r: &Region,
    dim: usize,
    boundaries: &[u32],
) -> Result<f64> {
    if r.dims() != m.dims() {
        return Err(Error::DimensionMismatch {
            expected: m.dims(),
            got: r.dims(),
        });
    }
    r.check_fits(m.extents())?;
    check_boundaries(r, dim, boundaries)?;
    let cells: Vec<(u32, u64)> = m
        .iter()
        .filter(|(c, _)| r.contains_point(c))
        .map(|(c, f)| (c[dim], f))
        .collect();
    Ok(objective_of_cells(&cells, r, dim, boundaries))
}

/// Objective over pre-extracted `(coordinate along dim, count)` pairs of the
/// non-zero cells inside `r`.
pub(crate) fn objective_of_cells(
    cells: &[(u32, u64)],
    r: &Region,
    dim: usize,
    boundaries: &[u32],
) -> f64 {
    let iv = r.interval(dim);
    let k = boundaries.len() + 1;
    let cross = r.volume() / iv.width() as u128;
    let starts = |i: usize| if i == 0 { iv.lo } else { boundaries[i - 1] };
    let ends = |i: usize| if i + 1 == k { iv.hi } else { boundaries[i] };
    // Coordinate -> child lookup; the width is small next to the cell count.
    let mut part_of = Vec::with_capacity(iv.width() as usize);
    for i in 0..k {
        part_of.extend(std::iter::repeat_n(i as u32, (ends(i) - starts(i)) as usize));
    }
    let part = |c: u32| part_of[(c - iv.lo) as usize] as usize;

    let mut sums = vec![0u64; k];
    let mut nonzero = vec![0u64; k];
    for &(c, f) in cells {
        let i = part(c);
        sums[i] += f;
        nonzero[i] += 1;
    }
    let vols: Vec<u128> = (0..k).map(|i| cross * (ends(i) - starts(i)) as u128).collect();
    let means: Vec<f64> = (0..k).map(|i| sums[i] as f64 / vols[i] as f64).collect();
    let mut total: f64 = (0..k)
        .map(|i| (vols[i] - nonzero[i] as u128) as f64 * means[i])
        .sum();
    for &(c, f) in cells {
        total += (f as f64 - means[part(c)]).abs();
    }
    total
}
