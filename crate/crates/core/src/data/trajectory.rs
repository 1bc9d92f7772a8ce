//! Trajectories (origin, intermediate stops, destination) to OD matrices.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::matrix::{FrequencyMatrix, MatrixBuilder};

/// Geographic rectangle mapped linearly onto a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySchema {
    /// Recorded points per trajectory; 2 is a classic OD pair.
    pub stops: usize,
    /// Grid cells along latitude and longitude, shared by every stop.
    pub grid: (u32, u32),
    pub bbox: BoundingBox,
}

impl TrajectorySchema {
    pub fn validate(&self) -> Result<()> {
        if self.stops < 2 {
            return Err(Error::InvalidParameter(format!(
                "a trajectory needs at least 2 stops, got {}",
                self.stops
            )));
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::InvalidParameter("grid extents must be positive".into()));
        }
        let b = &self.bbox;
        if !(b.lat_min < b.lat_max && b.lon_min < b.lon_max) {
            return Err(Error::InvalidParameter(format!("empty bounding box {b:?}")));
        }
        Ok(())
    }

    /// `2 * stops` extents: `(lat, lon)` per stop.
    pub fn extents(&self) -> Vec<u32> {
        (0..self.stops).flat_map(|_| [self.grid.0, self.grid.1]).collect()
    }

    /// Expected CSV header, `lat1,lon1,...,latS,lonS`.
    pub fn header(&self) -> String {
        (1..=self.stops)
            .map(|i| format!("lat{i},lon{i}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn bin(v: f64, lo: f64, hi: f64, cells: u32) -> Option<u32> {
        if !(v >= lo && v <= hi) {
            return None;
        }
        let c = ((v - lo) / (hi - lo) * cells as f64).floor() as u64;
        Some(c.min(cells as u64 - 1) as u32)
    }

    /// Grid cell of one point, or `None` outside the bounding box.
    pub fn cell(&self, lat: f64, lon: f64) -> Option<(u32, u32)> {
        let b = &self.bbox;
        Some((
            Self::bin(lat, b.lat_min, b.lat_max, self.grid.0)?,
            Self::bin(lon, b.lon_min, b.lon_max, self.grid.1)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: u64,
    pub skipped_out_of_bbox: u64,
    pub skipped_malformed: u64,
}

impl IngestReport {
    pub fn skipped(&self) -> u64 {
        self.skipped_out_of_bbox + self.skipped_malformed
    }
}

/// Incremental OD-matrix builder.
pub struct OdBuilder {
    schema: TrajectorySchema,
    builder: MatrixBuilder,
    report: IngestReport,
    cell: Vec<u32>,
}

impl OdBuilder {
    pub fn new(schema: TrajectorySchema) -> Result<Self> {
        schema.validate()?;
        Ok(Self {
            builder: MatrixBuilder::new(&schema.extents())?,
            cell: vec![0; 2 * schema.stops],
            schema,
            report: IngestReport::default(),
        })
    }

    /// Adds one trajectory given as `(lat, lon)` per stop.
    pub fn add(&mut self, stops: &[(f64, f64)]) -> Result<()> {
        if stops.len() != self.schema.stops || stops.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            self.report.skipped_malformed += 1;
            return Ok(());
        }
        for (i, &(lat, lon)) in stops.iter().enumerate() {
            match self.schema.cell(lat, lon) {
                Some((x, y)) => {
                    self.cell[2 * i] = x;
                    self.cell[2 * i + 1] = y;
                }
                None => {
                    self.report.skipped_out_of_bbox += 1;
                    return Ok(());
                }
            }
        }
        self.builder.push(&self.cell)?;
        self.report.accepted += 1;
        Ok(())
    }

    fn malformed(&mut self) {
        self.report.skipped_malformed += 1;
    }

    pub fn finish(self) -> Result<(FrequencyMatrix, IngestReport)> {
        if self.report.accepted == 0 {
            return Err(Error::InvalidParameter(format!(
                "no trajectory was usable ({} outside the bounding box, {} malformed)",
                self.report.skipped_out_of_bbox, self.report.skipped_malformed
            )));
        }
        Ok((self.builder.build(), self.report))
    }
}

/// Builds the `2 * stops`-dimensional OD matrix of `rows`.
pub fn build_od_matrix(
    rows: &[Vec<(f64, f64)>],
    schema: &TrajectorySchema,
) -> Result<(FrequencyMatrix, IngestReport)> {
    let mut b = OdBuilder::new(*schema)?;
    for r in rows {
        b.add(r)?;
    }
    b.finish()
}

/// Reads a trajectory CSV (`lat1,lon1,...,latS,lonS` header, one row per
/// trajectory). Rows that cannot be parsed are skipped and counted.
pub fn read_trajectory_csv(
    reader: impl BufRead,
    schema: &TrajectorySchema,
) -> Result<(FrequencyMatrix, IngestReport)> {
    let mut b = OdBuilder::new(*schema)?;
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse(crate::error::ParseError {
                line: 1,
                offset: 0,
                message: "empty trajectory file".into(),
            }))
        }
    };
    let expected = schema.header();
    let got: String = header.split(',').map(str::trim).collect::<Vec<_>>().join(",");
    if got != expected {
        return Err(Error::Parse(crate::error::ParseError {
            line: 1,
            offset: 0,
            message: format!("expected header `{expected}`, found `{}`", header.trim()),
        }));
    }
    let mut stops = Vec::with_capacity(schema.stops);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Option<Vec<f64>> = line.split(',').map(|f| f.trim().parse().ok()).collect();
        match vals {
            Some(v) if v.len() == 2 * schema.stops => {
                stops.clear();
                stops.extend(v.chunks(2).map(|c| (c[0], c[1])));
                b.add(&stops)?;
            }
            _ => b.malformed(),
        }
    }
    b.finish()
}
