//! Fixtures shared by the benchmarks.

use dpfm_core::data::synthetic::generate;
use dpfm_core::{FrequencyMatrix, SyntheticSpec};

/// Gaussian cluster with standard deviation of a tenth of the side.
pub fn gaussian(d: usize, n_points: u64, seed: u64) -> FrequencyMatrix {
    let side = dpfm_core::data::integer_root(n_points, d) as f64;
    let sd = side / 10.0;
    generate(&SyntheticSpec::gaussian(d, n_points, sd * sd, seed)).expect("fixture")
}

pub fn zipf(d: usize, n_points: u64, seed: u64) -> FrequencyMatrix {
    generate(&SyntheticSpec::zipf(d, n_points, 1.2, seed)).expect("fixture")
}
