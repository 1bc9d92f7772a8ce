//! Non-hierarchical sanitizers: UNIFORM, IDENTITY and the uniform grid
//! (with either the error-balancing or the entropy-balance fanout).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::granularity::{ebp_m, eug_m, Fanout, GranularityConfig, DEFAULT_C0};
use crate::matrix::{equal_boundaries, FrequencyMatrix, Interval, Region};
use crate::mechanism::{
    laplace, sanitize_count, BudgetLedger, NoiseSource, Scope, COUNT_SENSITIVITY,
};
use crate::sanitized::{Metadata, Partition, SanitizedMatrix};

/// Largest domain IDENTITY will enumerate by default.
pub const DEFAULT_CELL_CAP: u128 = 100_000_000;

/// Largest number of grid partitions materialized.
pub const GRID_PARTITION_CAP: u128 = 100_000_000;

/// The whole matrix as one partition with a noisy total.
pub fn sanitize_uniform(m: &FrequencyMatrix, eps: f64, noise: NoiseSource) -> Result<SanitizedMatrix> {
    let ledger = BudgetLedger::new(eps)?;
    let mut stream = noise.stream(&[]);
    let noisy = sanitize_count(m.total(), COUNT_SENSITIVITY, eps, &mut stream, &ledger, Scope::root())?;
    let summary = ledger.audit()?;
    let meta = Metadata::new("uniform", eps, noise.seed, summary);
    Ok(SanitizedMatrix::from_run(
        m.extents(),
        vec![Partition::new(m.full_region(), noisy)],
        meta,
        &ledger,
    ))
}

/// Row-major cell index -> coordinates.
fn unravel(mut idx: u128, extents: &[u32], out: &mut [u32]) {
    for i in (0..extents.len()).rev() {
        let f = extents[i] as u128;
        out[i] = (idx % f) as u32;
        idx /= f;
    }
}

/// Every cell (zero cells included) as its own partition.
pub fn sanitize_identity(
    m: &FrequencyMatrix,
    eps: f64,
    noise: NoiseSource,
    cell_cap: u128,
) -> Result<SanitizedMatrix> {
    let volume = m.volume();
    if volume > cell_cap {
        return Err(Error::Infeasible(format!(
            "identity publishes one count per cell and the domain has {volume} cells \
             (cap {cell_cap}); enumerating them is intractable"
        )));
    }
    if volume > u32::MAX as u128 {
        return Err(Error::Infeasible(format!(
            "identity cannot address {volume} cells"
        )));
    }
    let ledger = BudgetLedger::new(eps)?;
    ledger.record("cells", eps, Scope::each_part_of(&[]))?;
    let extents = m.extents();
    let d = extents.len();
    let b = COUNT_SENSITIVITY / eps;
    let partitions = (0..volume as u32)
        .into_par_iter()
        .map_init(
            || vec![0u32; d],
            |coords, idx| {
                unravel(idx as u128, extents, coords);
                let mut stream = noise.stream(&[idx]);
                let noisy = m.get(coords) as f64 + laplace(b, &mut stream)?;
                let region = Region::new(coords.iter().map(|&c| Interval { lo: c, hi: c + 1 }))?;
                Ok(Partition::new(region, noisy))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let summary = ledger.audit()?;
    let meta = Metadata::new("identity", eps, noise.seed, summary).param("cell_cap", cell_cap);
    Ok(SanitizedMatrix::from_run(extents, partitions, meta, &ledger))
}

/// Fanout formula used by the uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridProvider {
    Eug,
    Ebp,
}

impl GridProvider {
    pub fn name(self) -> &'static str {
        match self {
            GridProvider::Eug => "eug",
            GridProvider::Ebp => "ebp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub provider: GridProvider,
    /// Share of the budget spent on the noisy total.
    pub eps0_fraction: f64,
    pub c0: f64,
    /// Known query selectivity for the error-balancing fanout.
    pub r: Option<f64>,
}

impl GridConfig {
    pub fn new(provider: GridProvider) -> Self {
        Self {
            provider,
            eps0_fraction: 0.01,
            c0: DEFAULT_C0,
            r: None,
        }
    }
}

/// Uniform grid: sanitize the total, derive a fanout `m` from it, split
/// every dimension into `m` equal intervals and publish a noisy count per
/// grid cell.
pub fn sanitize_grid(
    m: &FrequencyMatrix,
    eps_tot: f64,
    cfg: &GridConfig,
    noise: NoiseSource,
) -> Result<SanitizedMatrix> {
    if !(cfg.eps0_fraction > 0.0 && cfg.eps0_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps0 fraction must lie in (0, 1), got {}",
            cfg.eps0_fraction
        )));
    }
    let ledger = BudgetLedger::new(eps_tot)?;
    let eps0 = cfg.eps0_fraction * eps_tot;
    let eps_rest = eps_tot - eps0;
    let d = m.dims();
    let extents = m.extents();
    let min_extent = extents.iter().copied().min().unwrap_or(1);

    let mut stream = noise.stream(&[]);
    let noisy_total = sanitize_count(m.total(), COUNT_SENSITIVITY, eps0, &mut stream, &ledger, Scope::root())?;

    let fanout: Fanout = match cfg.provider {
        GridProvider::Eug if d >= 2 => {
            let mut g = GranularityConfig::new(d, noisy_total, eps_rest).with_c0(cfg.c0);
            g.r = cfg.r;
            eug_m(&g, min_extent)?
        }
        // The error-balancing formula is undefined for d = 1; fall back to
        // the entropy balance there.
        GridProvider::Eug | GridProvider::Ebp => ebp_m(noisy_total, eps_rest, d, min_extent)?,
    };
    let mut warnings = Vec::new();
    if fanout.degenerate {
        warnings.push(format!(
            "noisy total {noisy_total} is not positive; using a single partition"
        ));
    }
    if cfg.provider == GridProvider::Eug && d < 2 {
        warnings.push("error-balancing fanout needs d >= 2; used the entropy balance".into());
    }

    let per_dim: Vec<Vec<u32>> = extents
        .iter()
        .map(|&f| {
            equal_boundaries(Interval { lo: 0, hi: f }, fanout.m.min(f))
        })
        .collect();
    let parts: Vec<usize> = per_dim.iter().map(|b| b.len() - 1).collect();
    let n_parts: u128 = parts.iter().map(|&p| p as u128).product();
    if n_parts > GRID_PARTITION_CAP {
        return Err(Error::Infeasible(format!(
            "grid with {n_parts} partitions exceeds the cap of {GRID_PARTITION_CAP}"
        )));
    }
    let n_parts = n_parts as usize;

    // Cell coordinate -> interval index, per dimension.
    let lookup: Vec<Vec<u32>> = per_dim
        .iter()
        .map(|b| {
            let mut t = Vec::with_capacity(*b.last().unwrap() as usize);
            for j in 0..b.len() - 1 {
                t.extend(std::iter::repeat_n(j as u32, (b[j + 1] - b[j]) as usize));
            }
            t
        })
        .collect();
    let mut sums = vec![0u64; n_parts];
    for (c, count) in m.iter() {
        let mut idx = 0usize;
        for i in 0..d {
            idx = idx * parts[i] + lookup[i][c[i] as usize] as usize;
        }
        sums[idx] += count;
    }

    ledger.record("partitions", eps_rest, Scope::each_part_of(&[]))?;
    let b = COUNT_SENSITIVITY / eps_rest;
    let partitions = sums
        .par_iter()
        .enumerate()
        .map_init(
            || vec![0usize; d],
            |pos, (idx, &sum)| {
                let mut rem = idx;
                for i in (0..d).rev() {
                    pos[i] = rem % parts[i];
                    rem /= parts[i];
                }
                let region = Region::new(
                    (0..d).map(|i| Interval { lo: per_dim[i][pos[i]], hi: per_dim[i][pos[i] + 1] }),
                )?;
                let mut stream = noise.stream(&[idx as u32]);
                let noisy = sum as f64 + laplace(b, &mut stream)?;
                Ok(Partition::new(region, noisy))
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let summary = ledger.audit()?;
    let mut meta = Metadata::new(cfg.provider.name(), eps_tot, noise.seed, summary)
        .param("eps0", eps0)
        .param("eps0_fraction", cfg.eps0_fraction)
        .param("noisy_total", noisy_total)
        .param("m_continuous", fanout.continuous)
        .param("m", fanout.m);
    if cfg.provider == GridProvider::Eug {
        meta = meta.param("c0", cfg.c0);
        if let Some(r) = cfg.r {
            meta = meta.param("r", r);
        }
    }
    meta.warnings = warnings;
    Ok(SanitizedMatrix::from_run(extents, partitions, meta, &ledger))
}
