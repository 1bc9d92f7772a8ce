//! Differentially private publication of multi-dimensional frequency
//! matrices: flat baselines, uniform grids and density-adaptive trees.

pub mod daf;
pub mod data;
pub mod error;
pub mod experiment;
pub mod flat;
pub mod granularity;
pub mod matrix;
pub mod mechanism;
pub mod query;
pub mod sanitized;

pub use daf::{daf, daf_entropy, daf_homogeneity, DafConfig, DafNode, SplitRule};
pub use data::{BoundingBox, SyntheticKind, SyntheticSpec, TrajectorySchema};
pub use error::{Error, ParseError, Result};
pub use experiment::{run_method, ExperimentPlan, Method, MethodConfig};
pub use flat::{sanitize_grid, sanitize_identity, sanitize_uniform, GridConfig, GridProvider};
pub use matrix::{FrequencyMatrix, Interval, Region};
pub use mechanism::{BudgetLedger, NoiseMode, NoiseSource, Scope};
pub use query::{RangeQuery, WorkloadKind, WorkloadSpec};
pub use sanitized::{Metadata, Partition, SanitizedMatrix};
