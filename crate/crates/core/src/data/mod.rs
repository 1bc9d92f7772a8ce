//! Dataset generation, trajectory ingestion and file formats.

pub mod format;
pub mod synthetic;
pub mod trajectory;

pub use synthetic::{gen_gaussian, gen_zipf, generate, integer_root, SyntheticKind, SyntheticSpec};
pub use trajectory::{build_od_matrix, read_trajectory_csv, BoundingBox, IngestReport, TrajectorySchema};
