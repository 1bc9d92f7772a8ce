//! Synthetic frequency matrices: one Gaussian cluster, or independent
//! truncated Zipf coordinates.

use rand::Rng;
use rand_distr::{Distribution, Normal, Zipf};

use crate::error::{Error, Result};
use crate::matrix::{FrequencyMatrix, MatrixBuilder};
use crate::mechanism::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// Variance of every coordinate around the cluster centre.
    Gaussian { variance: f64 },
    /// Skew `a > 1` of the per-coordinate Zipf law.
    Zipf { a: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub d: usize,
    pub n_points: u64,
    /// Defaults to `floor(n_points^(1/d))` in every dimension.
    pub extents: Option<Vec<u32>>,
    pub seed: u64,
}

/// Largest `k` with `k^d <= n` (at least 1).
pub fn integer_root(n: u64, d: usize) -> u32 {
    if d == 0 {
        return 1;
    }
    let fits = |k: u64| -> bool {
        let mut acc: u128 = 1;
        for _ in 0..d {
            acc *= k as u128;
            if acc > n as u128 {
                return false;
            }
        }
        true
    };
    let mut k = (n as f64).powf(1.0 / d as f64).round() as u64 + 1;
    while k > 1 && !fits(k) {
        k -= 1;
    }
    k.clamp(1, u32::MAX as u64) as u32
}

impl SyntheticSpec {
    pub fn gaussian(d: usize, n_points: u64, variance: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::Gaussian { variance },
            d,
            n_points,
            extents: None,
            seed,
        }
    }

    pub fn zipf(d: usize, n_points: u64, a: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::Zipf { a },
            d,
            n_points,
            extents: None,
            seed,
        }
    }

    pub fn with_extents(mut self, extents: Vec<u32>) -> Self {
        self.extents = Some(extents);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidParameter("d must be at least 1".into()));
        }
        if self.n_points == 0 {
            return Err(Error::InvalidParameter("n_points must be positive".into()));
        }
        if let Some(e) = &self.extents {
            if e.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: e.len(),
                });
            }
            if e.contains(&0) {
                return Err(Error::InvalidParameter(format!("extents must be positive, got {e:?}")));
            }
        }
        match self.kind {
            SyntheticKind::Gaussian { variance } if !(variance >= 0.0 && variance.is_finite()) => {
                Err(Error::InvalidParameter(format!("variance must be non-negative, got {variance}")))
            }
            SyntheticKind::Zipf { a } if !(a > 1.0 && a.is_finite()) => Err(Error::InvalidParameter(
                format!("zipf skew a must exceed 1, got {a}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn resolved_extents(&self) -> Vec<u32> {
        self.extents
            .clone()
            .unwrap_or_else(|| vec![integer_root(self.n_points, self.d); self.d])
    }

    /// Dataset label, e.g. `gaussian-var2500` or `zipf-a1.2`.
    pub fn label(&self) -> String {
        match self.kind {
            SyntheticKind::Gaussian { variance } => format!("gaussian-var{variance}"),
            SyntheticKind::Zipf { a } => format!("zipf-a{a}"),
        }
    }
}

/// Generates the matrix described by `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<FrequencyMatrix> {
    match spec.kind {
        SyntheticKind::Gaussian { .. } => gen_gaussian(spec),
        SyntheticKind::Zipf { .. } => gen_zipf(spec),
    }
}

/// Below this acceptance rate Gaussian sampling gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

/// One Gaussian cluster with a uniformly placed centre. Points with any
/// coordinate outside the extents are redrawn as a whole.
pub fn gen_gaussian(spec: &SyntheticSpec) -> Result<FrequencyMatrix> {
    spec.validate()?;
    let SyntheticKind::Gaussian { variance } = spec.kind else {
        return Err(Error::InvalidParameter("not a gaussian spec".into()));
    };
    let extents = spec.resolved_extents();
    let d = spec.d;
    let mut stream = NoiseStream::new(spec.seed, &[0x4741_5553]);
    let rng = stream.rng_mut();
    // Centre ~ Uniform(1, F), shifted to 0-based indices.
    let centres: Vec<f64> = extents
        .iter()
        .map(|&f| if f > 1 { rng.random_range(1.0..f as f64) - 1.0 } else { 0.0 })
        .collect();
    let sd = variance.sqrt();
    let normals: Vec<Normal<f64>> = centres
        .iter()
        .map(|&c| Normal::new(c, sd).map_err(|e| Error::Sampling(e.to_string())))
        .collect::<Result<_>>()?;

    let mut b = MatrixBuilder::with_capacity(&extents, spec.n_points.min(1 << 26) as usize)?;
    let mut point = vec![0u32; d];
    let mut accepted: u64 = 0;
    let mut attempts: u64 = 0;
    'outer: while accepted < spec.n_points {
        attempts += 1;
        if attempts % 100_000 == 0 && (accepted as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(Error::Sampling(format!(
                "only {accepted} of {attempts} gaussian draws fell inside extents {extents:?} \
                 (variance {variance}, centre {centres:?}); enlarge the extents or shrink the variance"
            )));
        }
        for i in 0..d {
            let x = normals[i].sample(rng).round();
            if !(x >= 0.0 && x < extents[i] as f64) {
                continue 'outer;
            }
            point[i] = x as u32;
        }
        b.push(&point)?;
        accepted += 1;
    }
    Ok(b.build())
}

/// Independent coordinates from the Zipf law truncated to `1..=F`, shifted
/// to 0-based indices.
pub fn gen_zipf(spec: &SyntheticSpec) -> Result<FrequencyMatrix> {
    spec.validate()?;
    let SyntheticKind::Zipf { a } = spec.kind else {
        return Err(Error::InvalidParameter("not a zipf spec".into()));
    };
    let extents = spec.resolved_extents();
    let laws: Vec<Zipf<f64>> = extents
        .iter()
        .map(|&f| Zipf::new(f as f64, a).map_err(|e| Error::Sampling(e.to_string())))
        .collect::<Result<_>>()?;
    let mut stream = NoiseStream::new(spec.seed, &[0x5a49_5046]);
    let rng = stream.rng_mut();
    let mut b = MatrixBuilder::with_capacity(&extents, spec.n_points.min(1 << 26) as usize)?;
    let mut point = vec![0u32; spec.d];
    for _ in 0..spec.n_points {
        for (i, law) in laws.iter().enumerate() {
            let k = law.sample(rng) as u32;
            point[i] = k.clamp(1, extents[i]) - 1;
        }
        b.push(&point)?;
    }
    Ok(b.build())
}
