//! Range queries over sanitized matrices and their accuracy.
//!
//! A sanitized partition contributes to a query in proportion to the share
//! of its cells the query covers (the uniformity assumption).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{FrequencyMatrix, Interval, Region};
use crate::mechanism::NoiseStream;
use crate::sanitized::SanitizedMatrix;

/// Default denominator floor of the relative error.
pub const DEFAULT_MRE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeQuery {
    pub region: Region,
}

impl RangeQuery {
    pub fn new(region: Region) -> Self {
        Self { region }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    /// Both endpoints of every dimension drawn uniformly.
    RandomShapeSize,
    /// Every side spans a fixed fraction of its dimension.
    FixedCoverage,
}

impl WorkloadKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::RandomShapeSize => "random",
            WorkloadKind::FixedCoverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Fraction of each dimension's extent, for fixed-coverage workloads.
    pub coverage: Option<f64>,
    pub count: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn random(count: usize, seed: u64) -> Self {
        Self {
            kind: WorkloadKind::RandomShapeSize,
            coverage: None,
            count,
            seed,
        }
    }

    pub fn coverage(fraction: f64, count: usize, seed: u64) -> Self {
        Self {
            kind: WorkloadKind::FixedCoverage,
            coverage: Some(fraction),
            count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.coverage) {
            (WorkloadKind::RandomShapeSize, None) => Ok(()),
            (WorkloadKind::FixedCoverage, Some(c)) if c > 0.0 && c <= 1.0 => Ok(()),
            (WorkloadKind::FixedCoverage, Some(c)) => Err(Error::InvalidParameter(format!(
                "query coverage must lie in (0, 1], got {c}"
            ))),
            (WorkloadKind::FixedCoverage, None) => Err(Error::InvalidParameter(
                "fixed-coverage workload needs a coverage fraction".into(),
            )),
            (WorkloadKind::RandomShapeSize, Some(_)) => Err(Error::InvalidParameter(
                "random-shape workload takes no coverage fraction".into(),
            )),
        }
    }

    /// Short description recorded next to results.
    pub fn describe(&self) -> String {
        let mut s = format!("workload={} count={} seed={}", self.kind.name(), self.count, self.seed);
        if let Some(c) = self.coverage {
            s.push_str(&format!(" coverage={c}"));
        }
        s
    }
}

/// Side length of a fixed-coverage query: `ceil(coverage * extent)`, at
/// least 1.
pub fn coverage_width(coverage: f64, extent: u32) -> u32 {
    ((coverage * extent as f64).ceil() as u32).clamp(1, extent)
}

/// Deterministic query workload over `extents`.
pub fn generate_workload(spec: &WorkloadSpec, extents: &[u32]) -> Result<Vec<RangeQuery>> {
    spec.validate()?;
    if extents.is_empty() || extents.contains(&0) {
        return Err(Error::InvalidParameter(format!("bad extents {extents:?}")));
    }
    let mut s = NoiseStream::new(spec.seed, &[0x5155_4552]);
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let bounds: Vec<Interval> = extents
            .iter()
            .map(|&f| match spec.coverage {
                None => {
                    let a = s.uniform_int(0, f + 1);
                    let mut b = s.uniform_int(0, f);
                    if b >= a {
                        b += 1;
                    }
                    Interval { lo: a.min(b), hi: a.max(b) }
                }
                Some(c) => {
                    let w = coverage_width(c, f);
                    let lo = s.uniform_int(0, f - w + 1);
                    Interval { lo, hi: lo + w }
                }
            })
            .collect();
        out.push(RangeQuery::new(Region::new(bounds)?));
    }
    Ok(out)
}

/// Answers queries against one sanitized matrix.
///
/// Partitions are ordered by their first lower bound; a query only visits
/// partitions whose first interval can overlap its own.
pub struct QueryEngine<'a> {
    sm: &'a SanitizedMatrix,
    order: Vec<u32>,
    lo0: Vec<u32>,
    max_w0: u32,
}

impl<'a> QueryEngine<'a> {
    pub fn new(sm: &'a SanitizedMatrix) -> Self {
        let mut order: Vec<u32> = (0..sm.partitions.len() as u32).collect();
        order.sort_by_key(|&i| sm.partitions[i as usize].region.interval(0).lo);
        let lo0 = order
            .iter()
            .map(|&i| sm.partitions[i as usize].region.interval(0).lo)
            .collect();
        let max_w0 = sm
            .partitions
            .iter()
            .map(|p| p.region.width(0))
            .max()
            .unwrap_or(0);
        Self { sm, order, lo0, max_w0 }
    }

    pub fn answer(&self, q: &RangeQuery) -> Result<f64> {
        if !q.region.fits(&self.sm.extents) {
            return Err(Error::RegionOutOfExtents {
                region: q.region.to_string(),
                extents: self.sm.extents.clone(),
            });
        }
        Ok(self.answer_unchecked(&q.region))
    }

    fn answer_unchecked(&self, q: &Region) -> f64 {
        let qi = q.interval(0);
        let from = qi.lo.saturating_sub(self.max_w0.saturating_sub(1));
        let a = self.lo0.partition_point(|&lo| lo < from);
        let b = self.lo0.partition_point(|&lo| lo < qi.hi);
        let mut total = 0.0;
        for &i in &self.order[a..b] {
            let p = &self.sm.partitions[i as usize];
            let inter = p.region.intersection_volume(q);
            if inter > 0 {
                total += p.noisy_count * (inter as f64 / p.volume as f64);
            }
        }
        total
    }

    pub fn answer_all(&self, qs: &[RangeQuery]) -> Result<Vec<f64>> {
        qs.par_iter().map(|q| self.answer(q)).collect()
    }
}

/// Uniformity-assumption answer of `q` on `sm`.
pub fn answer(sm: &SanitizedMatrix, q: &RangeQuery) -> Result<f64> {
    if !q.region.fits(&sm.extents) {
        return Err(Error::RegionOutOfExtents {
            region: q.region.to_string(),
            extents: sm.extents.clone(),
        });
    }
    Ok(sm
        .partitions
        .iter()
        .map(|p| {
            let inter = p.region.intersection_volume(&q.region);
            if inter == 0 {
                0.0
            } else {
                p.noisy_count * (inter as f64 / p.volume as f64)
            }
        })
        .sum())
}

/// Exact count inside `q`.
pub fn true_answer(m: &FrequencyMatrix, q: &RangeQuery) -> Result<u64> {
    m.region_sum(&q.region)
}

pub fn true_answers(m: &FrequencyMatrix, qs: &[RangeQuery]) -> Result<Vec<u64>> {
    qs.par_iter().map(|q| true_answer(m, q)).collect()
}

/// Relative error in percent, `|p - p_noisy| / max(p, floor) * 100`.
pub fn mre(true_count: u64, noisy: f64, floor: f64) -> f64 {
    let p = true_count as f64;
    (p - noisy).abs() / p.max(floor) * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: usize,
    pub true_count: u64,
    pub noisy: f64,
    pub mre: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub mean_mre: f64,
    pub median_mre: f64,
    pub records: Vec<QueryRecord>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evaluates a workload whose true answers are already known.
pub fn evaluate_with_truth(
    sm: &SanitizedMatrix,
    workload: &[RangeQuery],
    truth: &[u64],
    floor: f64,
) -> Result<EvalSummary> {
    if workload.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} queries but {} true answers",
            workload.len(),
            truth.len()
        )));
    }
    let noisy = QueryEngine::new(sm).answer_all(workload)?;
    let records: Vec<QueryRecord> = noisy
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (&n, &t))| QueryRecord {
            query_id: i,
            true_count: t,
            noisy: n,
            mre: mre(t, n, floor),
        })
        .collect();
    let errs: Vec<f64> = records.iter().map(|r| r.mre).collect();
    let mean_mre = if errs.is_empty() {
        f64::NAN
    } else {
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    Ok(EvalSummary {
        mean_mre,
        median_mre: median(&errs),
        records,
    })
}

/// Mean and median relative error of `sm` over `workload`.
pub fn evaluate(
    sm: &SanitizedMatrix,
    m: &FrequencyMatrix,
    workload: &[RangeQuery],
    floor: f64,
) -> Result<EvalSummary> {
    if sm.extents != m.extents() {
        return Err(Error::InvalidParameter(format!(
            "sanitized extents {:?} differ from matrix extents {:?}",
            sm.extents,
            m.extents()
        )));
    }
    let truth = true_answers(m, workload)?;
    evaluate_with_truth(sm, workload, &truth, floor)
}
