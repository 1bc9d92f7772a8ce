//! Grid granularity (per-dimension fanout `m`) estimators.
//!
//! Two closed forms are provided: the error-balancing fanout of the extended
//! uniform grid (a noise-error term against a uniformity-error term, with or
//! without a known query selectivity `r`) and the entropy-balance fanout.
//! [`solve_m_numeric`] minimises the underlying objectives directly and is
//! used as an independent check of the closed forms.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Default uniformity-error constant; `sqrt(2) * c0 = 10`.
pub const DEFAULT_C0: f64 = 10.0 / SQRT_2;

/// Search interval of the numeric solver.
pub const SEARCH_MIN: f64 = 1.0;
pub const SEARCH_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GranularityConfig {
    pub c0: f64,
    /// Query selectivity in (0, 1], when known in advance.
    pub r: Option<f64>,
    pub d: usize,
    /// Sanitized total count.
    pub noisy_total: f64,
    pub epsilon: f64,
}

impl GranularityConfig {
    pub fn new(d: usize, noisy_total: f64, epsilon: f64) -> Self {
        Self {
            c0: DEFAULT_C0,
            r: None,
            d,
            noisy_total,
            epsilon,
        }
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::InvalidParameter(format!("c0 must be positive, got {}", self.c0)));
        }
        if let Some(r) = self.r {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "query selectivity r must lie in (0, 1], got {r}"
                )));
            }
        }
        if self.d < 1 {
            return Err(Error::InvalidParameter("dimension count must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.noisy_total.is_finite() {
            return Err(Error::InvalidParameter("noisy total is not finite".into()));
        }
        Ok(())
    }
}

/// A fanout estimate: the continuous optimum and the integer fanout used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fanout {
    pub continuous: f64,
    pub m: u32,
    /// Set when the inputs were degenerate (non-positive noisy total) and
    /// the fanout fell back to 1.
    pub degenerate: bool,
}

impl Fanout {
    fn degenerate() -> Self {
        Self {
            continuous: 1.0,
            m: 1,
            degenerate: true,
        }
    }
}

/// Round half up, then clamp to `[1, max]`.
pub fn round_fanout(continuous: f64, max: u32) -> u32 {
    let max = max.max(1);
    if !continuous.is_finite() || continuous < 1.0 {
        return 1;
    }
    let r = (continuous + 0.5).floor();
    if r >= max as f64 {
        max
    } else {
        (r as u32).max(1)
    }
}

fn require_multi_dim(cfg: &GranularityConfig) -> Result<()> {
    if cfg.d < 2 {
        return Err(Error::InvalidParameter(format!(
            "the uniform-grid fanout needs d >= 2, got d = {}",
            cfg.d
        )));
    }
    Ok(())
}

/// Continuous uniform-grid fanout for a known query selectivity `r`.
pub fn eug_m_known_r_continuous(cfg: &GranularityConfig) -> Result<f64> {
    cfg.validate()?;
    require_multi_dim(cfg)?;
    let r = cfg
        .r
        .ok_or_else(|| Error::InvalidParameter("query selectivity r is not configured".into()))?;
    let d = cfg.d as f64;
    let base = 2.0 * (d - 1.0) / d
        * r.powf(1.0 / d - 0.5)
        * cfg.noisy_total
        * cfg.epsilon
        / (SQRT_2 * cfg.c0);
    Ok(base.powf(2.0 / (3.0 * d - 2.0)))
}

pub fn eug_m_known_r(cfg: &GranularityConfig, max_fanout: u32) -> Result<Fanout> {
    if cfg.noisy_total <= 0.0 {
        cfg.validate()?;
        return Ok(Fanout::degenerate());
    }
    let c = eug_m_known_r_continuous(cfg)?;
    Ok(Fanout {
        continuous: c,
        m: round_fanout(c, max_fanout),
        degenerate: false,
    })
}

/// Multiplicative correction from averaging the known-`r` fanout over
/// uniformly distributed query sizes: `d(3d-2) / (3d^2 - 3d + 2)`.
pub fn eug_size_correction(d: usize) -> f64 {
    let d = d as f64;
    d * (3.0 * d - 2.0) / (3.0 * d * d - 3.0 * d + 2.0)
}

/// Continuous uniform-grid fanout when the query size is unknown.
pub fn eug_m_integrated_continuous(cfg: &GranularityConfig) -> Result<f64> {
    cfg.validate()?;
    require_multi_dim(cfg)?;
    let d = cfg.d as f64;
    let alpha = (2.0 * (d - 1.0) / d * cfg.noisy_total * cfg.epsilon / (SQRT_2 * cfg.c0))
        .powf(2.0 / (3.0 * d - 2.0));
    Ok(alpha * eug_size_correction(cfg.d))
}

pub fn eug_m_integrated(cfg: &GranularityConfig, max_fanout: u32) -> Result<Fanout> {
    if cfg.noisy_total <= 0.0 {
        cfg.validate()?;
        return Ok(Fanout::degenerate());
    }
    let c = eug_m_integrated_continuous(cfg)?;
    Ok(Fanout {
        continuous: c,
        m: round_fanout(c, max_fanout),
        degenerate: false,
    })
}

/// Uniform-grid fanout: the known-`r` form when `cfg.r` is set, the
/// size-averaged form otherwise.
pub fn eug_m(cfg: &GranularityConfig, max_fanout: u32) -> Result<Fanout> {
    if cfg.r.is_some() {
        eug_m_known_r(cfg, max_fanout)
    } else {
        eug_m_integrated(cfg, max_fanout)
    }
}

/// Continuous entropy-balance fanout `(N e / sqrt 2)^(2 / 3d)`.
pub fn ebp_m_continuous(noisy_total: f64, epsilon: f64, d: usize) -> f64 {
    (noisy_total * epsilon / SQRT_2).powf(2.0 / (3.0 * d as f64))
}

/// Entropy-balance fanout. `d` may be a residual dimension count.
pub fn ebp_m(noisy_total: f64, epsilon: f64, d: usize, max_fanout: u32) -> Result<Fanout> {
    if d < 1 {
        return Err(Error::InvalidParameter("dimension count must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(noisy_total > 0.0) || !noisy_total.is_finite() {
        return Ok(Fanout::degenerate());
    }
    let c = ebp_m_continuous(noisy_total, epsilon, d);
    Ok(Fanout {
        continuous: c,
        m: round_fanout(c, max_fanout),
        degenerate: false,
    })
}

/// Which objective [`solve_m_numeric`] minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Noise standard deviation plus uniformity error of a query covering a
    /// fraction `r` of the domain (`r = 1` when unset).
    Eug,
    /// Absolute gap between the entropy of the added noise and the
    /// information lost by coarsening to `m^d` partitions.
    Ebp,
}

/// Total expected error of the uniform grid at fanout `m`.
pub fn eug_error(cfg: &GranularityConfig, m: f64) -> f64 {
    let d = cfg.d as f64;
    let r = cfg.r.unwrap_or(1.0);
    let noise = (2.0 * r).sqrt() * m.powf(d / 2.0) / cfg.epsilon;
    let uniformity = r.powf(1.0 / d) * cfg.noisy_total / (cfg.c0 * m.powf(d - 1.0));
    noise + uniformity
}

/// `|H(noise) - (H(F) - H(F|m))|` under the uniform-entropy approximation.
pub fn ebp_imbalance(cfg: &GranularityConfig, m: f64) -> f64 {
    let d = cfg.d as f64;
    let noise_entropy = -(cfg.epsilon / (SQRT_2 * m.powf(d / 2.0))).log2();
    let information_loss = cfg.noisy_total.log2() - d * m.log2();
    (noise_entropy - information_loss).abs()
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimisation of `f` over `[lo, hi]` in log-space, to a
/// relative tolerance `rel_tol` on the argument.
///
/// Fails when the minimiser sits on a bracket end and the objective keeps
/// decreasing beyond it.
pub fn golden_section(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("bad search interval [{lo}, {hi}]")));
    }
    let g = |t: f64| f(t.exp());
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    let mut iters = 0;
    while b - a > rel_tol && iters < 500 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d);
        }
        iters += 1;
    }
    let t = 0.5 * (a + b);
    let x = t.exp();
    let fx = g(t);
    if !fx.is_finite() {
        return Err(Error::BracketFailure(format!("objective is not finite at m = {x}")));
    }
    let edge = 4.0 * rel_tol;
    if t - lo.ln() < edge {
        let outside = f(lo * (1.0 - 1e-6));
        if outside < fx {
            return Err(Error::BracketFailure(format!(
                "minimum lies below the search interval: f({lo}) = {fx}, f(below) = {outside}"
            )));
        }
    }
    if hi.ln() - t < edge {
        let outside = f(hi * (1.0 + 1e-6));
        if outside < fx {
            return Err(Error::BracketFailure(format!(
                "minimum lies above the search interval: f({hi}) = {fx}, f(above) = {outside}"
            )));
        }
    }
    Ok(x)
}

/// Continuous minimiser `m*` of the chosen objective over `[1, 10^6]`.
pub fn solve_m_numeric(objective: Objective, cfg: &GranularityConfig) -> Result<f64> {
    cfg.validate()?;
    if !(cfg.noisy_total > 0.0) {
        return Err(Error::InvalidParameter("noisy total must be positive".into()));
    }
    match objective {
        Objective::Eug => {
            require_multi_dim(cfg)?;
            golden_section(|m| eug_error(cfg, m), SEARCH_MIN, SEARCH_MAX, 1e-8)
        }
        Objective::Ebp => golden_section(|m| ebp_imbalance(cfg, m), SEARCH_MIN, SEARCH_MAX, 1e-8),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn eug_two_dimensional_base_case() {
        let cfg = GranularityConfig::new(2, 1e6, 0.1).with_r(0.37);
        let c = eug_m_known_r_continuous(&cfg).unwrap();
        assert!(rel(c, 100.0) < 1e-12);
        // With sqrt(2) c0 = 10 the base case is sqrt(N e / 10).
        let f = eug_m_known_r(&cfg, 1000).unwrap();
        assert_eq!(f.m, 100);
    }

    #[test]
    fn eug_degenerate_total_clamps_to_one() {
        let cfg = GranularityConfig::new(2, 1e-9, 0.1).with_r(1.0);
        assert_eq!(eug_m_known_r(&cfg, 1000).unwrap().m, 1);
        let cfg = GranularityConfig::new(2, -5.0, 0.1).with_r(1.0);
        let f = eug_m_known_r(&cfg, 1000).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.m, 1);
    }

    #[test]
    fn eug_four_dimensions_known_r() {
        let cfg = GranularityConfig::new(4, 1e6, 0.1).with_r(1.0);
        let c = eug_m_known_r_continuous(&cfg).unwrap();
        assert!(rel(c, 15000f64.powf(0.2)) < 1e-12);
        assert!((c - 6.84).abs() < 0.01);
        assert_eq!(eug_m_known_r(&cfg, 31).unwrap().m, 7);
    }

    #[test]
    fn eug_integrated_examples() {
        assert!((eug_size_correction(2) - 1.0).abs() < 1e-15);
        let cfg = GranularityConfig::new(2, 1e6, 0.1);
        assert!(rel(eug_m_integrated_continuous(&cfg).unwrap(), 100.0) < 1e-12);

        let cfg = GranularityConfig::new(4, 1e6, 0.1);
        assert!(rel(eug_size_correction(4), 40.0 / 38.0) < 1e-15);
        let c = eug_m_integrated_continuous(&cfg).unwrap();
        assert!((c - 7.2).abs() < 0.01, "{c}");
        assert_eq!(eug_m_integrated(&cfg, 31).unwrap().m, 7);

        let cfg = GranularityConfig::new(2, 200.0, 0.05);
        assert!(rel(eug_m_integrated_continuous(&cfg).unwrap(), 1.0) < 1e-12);
        assert_eq!(eug_m_integrated(&cfg, 100).unwrap().m, 1);
    }

    #[test]
    fn eug_needs_two_dimensions() {
        let cfg = GranularityConfig::new(1, 1e6, 0.1);
        assert!(eug_m_integrated(&cfg, 10).is_err());
    }

    #[test]
    fn ebp_examples() {
        let c = ebp_m_continuous(1e6, 0.1, 2);
        assert!((c - 41.4).abs() < 0.05, "{c}");
        assert_eq!(ebp_m(1e6, 0.1, 2, 1000).unwrap().m, 41);
        let c = ebp_m_continuous(1e6, 0.1, 4);
        assert!((c - 6.43).abs() < 0.01, "{c}");
        assert_eq!(ebp_m(1e6, 0.1, 4, 31).unwrap().m, 6);
        assert_eq!(ebp_m(SQRT_2, 1.0, 3, 100).unwrap().m, 1);
        assert!(ebp_m(-3.0, 0.1, 2, 10).unwrap().degenerate);
    }

    #[test]
    fn rounding_is_half_up_and_clamped() {
        assert_eq!(round_fanout(2.5, 10), 3);
        assert_eq!(round_fanout(2.4999, 10), 2);
        assert_eq!(round_fanout(0.2, 10), 1);
        assert_eq!(round_fanout(50.0, 10), 10);
        assert_eq!(round_fanout(f64::NAN, 10), 1);
    }

    #[test]
    fn numeric_oracle_examples() {
        let cfg = GranularityConfig::new(2, 1e6, 0.1).with_r(1.0);
        let m = solve_m_numeric(Objective::Eug, &cfg).unwrap();
        assert!(rel(m, 100.0) < 1e-6, "{m}");

        let cfg = GranularityConfig::new(2, 1e6, 0.1);
        let m = solve_m_numeric(Objective::Ebp, &cfg).unwrap();
        assert!(rel(m, (1e6 * 0.1 / SQRT_2).powf(1.0 / 3.0)) < 1e-6, "{m}");

        let cfg = GranularityConfig::new(3, SQRT_2, 1.0);
        let m = solve_m_numeric(Objective::Ebp, &cfg).unwrap();
        assert!((m - 1.0).abs() < 1e-6, "{m}");
    }

    #[test]
    fn bracket_failure_is_reported() {
        // N e < sqrt 2 puts the balance point below m = 1.
        let cfg = GranularityConfig::new(2, 1.0, 0.1);
        assert!(matches!(
            solve_m_numeric(Objective::Ebp, &cfg),
            Err(Error::BracketFailure(_))
        ));
    }

    proptest! {
        #[test]
        fn ebp_is_monotone(n in 1e3f64..1e7, e in 0.01f64..1.0, d in 1usize..6, k in 1.0f64..10.0) {
            let base = ebp_m_continuous(n, e, d);
            prop_assert!(ebp_m_continuous(n * k, e, d) >= base);
            prop_assert!(ebp_m_continuous(n, (e * k).min(10.0), d) >= base);
            if n * e > SQRT_2 {
                prop_assert!(ebp_m_continuous(n, e, d + 1) <= base);
            }
        }

        #[test]
        fn known_r_equals_base_case_at_two_dims(n in 1e3f64..1e7, e in 0.01f64..1.0, r in 0.001f64..1.0) {
            let a = eug_m_known_r_continuous(&GranularityConfig::new(2, n, e).with_r(r)).unwrap();
            let b = (n * e / (SQRT_2 * DEFAULT_C0)).sqrt();
            prop_assert!(rel(a, b) < 1e-12);
        }
    }
}
