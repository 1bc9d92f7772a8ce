use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Budget spent on the root count, `eps_tot / 100`.
pub fn root_budget(eps_tot: f64) -> f64 {
    eps_tot / 100.0
}

/// Budget of tree level `i` (1-based) out of `d`, minimising the summed
/// noise variance `sum m0^i / eps_i^2` subject to `sum eps_i = eps_prime`:
/// `eps_i = eps_prime * m0^(i/3) / sum_j m0^(j/3)`.
pub fn level_budget(i: usize, d: usize, m0: u32, eps_prime: f64) -> Result<f64> {
    if d == 0 || i == 0 || i > d {
        return Err(Error::InvalidParameter(format!(
            "level {i} is outside 1..={d}"
        )));
    }
    if m0 == 0 {
        return Err(Error::InvalidParameter("root fanout must be at least 1".into()));
    }
    if m0 == 1 {
        return Ok(eps_prime / d as f64);
    }
    let g = (m0 as f64).cbrt();
    let norm: f64 = (1..=d).map(|j| g.powi(j as i32)).sum();
    Ok(eps_prime * g.powi(i as i32) / norm)
}

/// All level budgets `eps_1..=eps_d`.
pub fn level_budgets(d: usize, m0: u32, eps_prime: f64) -> Result<Vec<f64>> {
    (1..=d).map(|i| level_budget(i, d, m0, eps_prime)).collect()
}

/// True when `ncount` is within `multiplier` noise standard deviations
/// (`sqrt 2 / remaining_eps`) of zero. A multiplier of 0 disables the test
/// for positive counts.
pub fn stop_condition(ncount: f64, remaining_eps: f64, multiplier: f64) -> bool {
    ncount < multiplier * SQRT_2 / remaining_eps
}
