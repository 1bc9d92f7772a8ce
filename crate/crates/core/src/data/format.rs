//! Text formats: sparse matrices, sanitized matrices, result CSVs and
//! `key=value` configuration files.
//!
//! Matrix (COO):
//! ```text
//! #extents=F1,...,Fd
//! #total=N
//! c1,...,cd,count
//! ```
//!
//! Sanitized matrix: `key=value` header lines ending with `partitions=n`,
//! then `n` records `lo1,hi1,...,lod,hid,noisy_count`. The `timestamp` and
//! `runtime_ms` header lines are the only non-deterministic content.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, ParseError, Result};
use crate::matrix::{FrequencyMatrix, Interval, MatrixBuilder, Region};
use crate::mechanism::LedgerSummary;
use crate::query::QueryRecord;
use crate::sanitized::{Metadata, Partition, SanitizedMatrix};

pub const SANITIZED_MAGIC: &str = "#dpfm-sanitized v1";

/// Lines with their 1-based number and starting byte offset.
struct Lines<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

struct Line<'a> {
    no: usize,
    offset: usize,
    text: &'a str,
    terminated: bool,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0, line: 0 }
    }

    fn eof_offset(&self) -> usize {
        self.text.len()
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = Line<'a>;

    fn next(&mut self) -> Option<Line<'a>> {
        if self.pos >= self.text.len() {
            return None;
        }
        let rest = &self.text[self.pos..];
        let offset = self.pos;
        self.line += 1;
        let (body, terminated) = match rest.find('\n') {
            Some(i) => {
                self.pos += i + 1;
                (&rest[..i], true)
            }
            None => {
                self.pos = self.text.len();
                (rest, false)
            }
        };
        Some(Line {
            no: self.line,
            offset,
            text: body.strip_suffix('\r').unwrap_or(body),
            terminated,
        })
    }
}

fn perr(line: &Line<'_>, message: impl Into<String>) -> Error {
    Error::Parse(ParseError {
        line: line.no,
        offset: line.offset,
        message: message.into(),
    })
}

fn truncated(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse(ParseError {
        line: 0,
        offset,
        message: format!("truncated file: {}", message.into()),
    })
}

fn parse_list<T: std::str::FromStr>(line: &Line<'_>, s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|f| {
            f.trim()
                .parse::<T>()
                .map_err(|_| perr(line, format!("bad {what} `{}`", f.trim())))
        })
        .collect()
}

fn read_all(mut r: impl Read) -> Result<String> {
    let mut s = String::new();
    r.read_to_string(&mut s)?;
    Ok(s)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_matrix(mut w: impl Write, m: &FrequencyMatrix) -> Result<()> {
    let mut out = String::with_capacity(16 * (m.nnz() + 2));
    let _ = writeln!(out, "#extents={}", join(m.extents()));
    let _ = writeln!(out, "#total={}", m.total());
    for (c, f) in m.iter() {
        for x in c {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(out, "{f}");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_matrix(r: impl Read) -> Result<FrequencyMatrix> {
    let text = read_all(r)?;
    let mut lines = Lines::new(&text);
    let mut builder: Option<MatrixBuilder> = None;
    let mut declared_total: Option<u64> = None;
    let mut sum: u64 = 0;
    let mut coords = Vec::new();
    for line in lines.by_ref() {
        let t = line.text.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix('#') {
            if let Some(v) = h.strip_prefix("extents=") {
                if builder.is_some() {
                    return Err(perr(&line, "duplicate extents header"));
                }
                let ext: Vec<u32> = parse_list(&line, v, "extent")?;
                builder = Some(MatrixBuilder::new(&ext).map_err(|e| perr(&line, e.to_string()))?);
            } else if let Some(v) = h.strip_prefix("total=") {
                declared_total = Some(v.trim().parse().map_err(|_| perr(&line, format!("bad total `{v}`")))?);
            }
            continue;
        }
        if !line.terminated {
            return Err(truncated(line.offset, format!("record at line {} has no line end", line.no)));
        }
        let b = builder
            .as_mut()
            .ok_or_else(|| perr(&line, "record before the #extents header"))?;
        let d = b.extents().len();
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != d + 1 {
            return Err(perr(&line, format!("expected {} fields, found {}", d + 1, fields.len())));
        }
        coords.clear();
        for f in &fields[..d] {
            coords.push(f.trim().parse::<u32>().map_err(|_| perr(&line, format!("bad coordinate `{f}`")))?);
        }
        let count: u64 = fields[d]
            .trim()
            .parse()
            .map_err(|_| perr(&line, format!("bad count `{}`", fields[d])))?;
        if count == 0 {
            return Err(perr(&line, "counts must be positive"));
        }
        b.push_weighted(&coords, count).map_err(|e| perr(&line, e.to_string()))?;
        sum += count;
    }
    let b = builder.ok_or_else(|| truncated(lines.eof_offset(), "missing #extents header"))?;
    if let Some(t) = declared_total {
        if t != sum {
            return Err(truncated(
                lines.eof_offset(),
                format!("records sum to {sum} but the header declares #total={t}"),
            ));
        }
    }
    Ok(b.build())
}

/// Serializes everything; `timestamp` and `runtime_ms` are written on their
/// own lines so [`sanitized_body`] can drop them.
pub fn write_sanitized(mut w: impl Write, sm: &SanitizedMatrix) -> Result<()> {
    let md = &sm.metadata;
    let mut out = String::with_capacity(64 * (sm.partitions.len() + 16));
    let _ = writeln!(out, "{SANITIZED_MAGIC}");
    let _ = writeln!(out, "method={}", md.method);
    let _ = writeln!(out, "epsilon={}", md.epsilon);
    let _ = writeln!(out, "seed={}", md.seed);
    let _ = writeln!(out, "extents={}", join(&sm.extents));
    for (k, v) in &md.params {
        let _ = writeln!(out, "param.{k}={v}");
    }
    for wmsg in &md.warnings {
        let _ = writeln!(out, "warning={}", wmsg.replace('\n', " "));
    }
    let _ = writeln!(out, "ledger={}/{}", md.ledger.spent, md.ledger.total);
    let _ = writeln!(out, "timestamp={}", md.timestamp);
    if let Some(r) = md.runtime_ms {
        let _ = writeln!(out, "runtime_ms={r}");
    }
    let _ = writeln!(out, "partitions={}", sm.partitions.len());
    for p in &sm.partitions {
        for iv in p.region.bounds() {
            let _ = write!(out, "{},{},", iv.lo, iv.hi);
        }
        let _ = writeln!(out, "{}", p.noisy_count);
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// The deterministic part of a sanitized file: everything except the
/// `timestamp=` and `runtime_ms=` lines.
pub fn sanitized_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("timestamp=") && !l.starts_with("runtime_ms="))
        .fold(String::with_capacity(text.len()), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        })
}

pub fn read_sanitized(r: impl Read) -> Result<SanitizedMatrix> {
    let text = read_all(r)?;
    let mut lines = Lines::new(&text);
    match lines.next() {
        Some(l) if l.text.trim() == SANITIZED_MAGIC => {}
        Some(l) => return Err(perr(&l, format!("expected `{SANITIZED_MAGIC}`"))),
        None => return Err(truncated(0, "empty file")),
    }
    let mut method = None;
    let mut epsilon = None;
    let mut seed = None;
    let mut extents: Option<Vec<u32>> = None;
    let mut params = Vec::new();
    let mut warnings = Vec::new();
    let mut ledger = None;
    let mut timestamp = 0;
    let mut runtime_ms = None;
    let mut n_parts: Option<usize> = None;
    for line in lines.by_ref() {
        let t = line.text;
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| perr(&line, format!("expected key=value, found `{t}`")))?;
        let num = |what: &str| perr(&line, format!("bad {what} `{v}`"));
        match k {
            "method" => method = Some(v.to_string()),
            "epsilon" => epsilon = Some(v.parse::<f64>().map_err(|_| num("epsilon"))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| num("seed"))?),
            "extents" => extents = Some(parse_list(&line, v, "extent")?),
            "warning" => warnings.push(v.to_string()),
            "ledger" => {
                let (s, tot) = v.split_once('/').ok_or_else(|| num("ledger"))?;
                ledger = Some(LedgerSummary {
                    spent: s.parse().map_err(|_| num("ledger"))?,
                    total: tot.parse().map_err(|_| num("ledger"))?,
                });
            }
            "timestamp" => timestamp = v.parse().map_err(|_| num("timestamp"))?,
            "runtime_ms" => runtime_ms = Some(v.parse().map_err(|_| num("runtime"))?),
            "partitions" => {
                n_parts = Some(v.parse().map_err(|_| num("partition count"))?);
                break;
            }
            _ => match k.strip_prefix("param.") {
                Some(p) => params.push((p.to_string(), v.to_string())),
                None => return Err(perr(&line, format!("unknown header key `{k}`"))),
            },
        }
    }
    let eof = lines.eof_offset();
    let missing = |what: &str| truncated(eof, format!("header has no `{what}` line"));
    let n_parts = n_parts.ok_or_else(|| missing("partitions"))?;
    let extents = extents.ok_or_else(|| missing("extents"))?;
    let d = extents.len();
    let mut partitions = Vec::with_capacity(n_parts);
    for line in lines.by_ref() {
        if partitions.len() == n_parts {
            if line.text.trim().is_empty() {
                continue;
            }
            return Err(perr(&line, format!("more than the declared {n_parts} partitions")));
        }
        if !line.terminated {
            return Err(truncated(line.offset, format!("record at line {} has no line end", line.no)));
        }
        let vals: Vec<&str> = line.text.split(',').collect();
        if vals.len() != 2 * d + 1 {
            return Err(perr(&line, format!("expected {} fields, found {}", 2 * d + 1, vals.len())));
        }
        let mut bounds = Vec::with_capacity(d);
        for i in 0..d {
            let lo: u32 = vals[2 * i].trim().parse().map_err(|_| perr(&line, "bad bound"))?;
            let hi: u32 = vals[2 * i + 1].trim().parse().map_err(|_| perr(&line, "bad bound"))?;
            bounds.push(Interval::new(lo, hi).map_err(|e| perr(&line, e.to_string()))?);
        }
        let region = Region::new(bounds).map_err(|e| perr(&line, e.to_string()))?;
        if !region.fits(&extents) {
            return Err(perr(&line, format!("partition {region} outside extents {extents:?}")));
        }
        let noisy: f64 = vals[2 * d].trim().parse().map_err(|_| perr(&line, "bad noisy count"))?;
        partitions.push(Partition::new(region, noisy));
    }
    if partitions.len() != n_parts {
        return Err(truncated(
            eof,
            format!("{} of {n_parts} partition records present", partitions.len()),
        ));
    }
    let metadata = Metadata {
        method: method.ok_or_else(|| missing("method"))?,
        epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        params,
        warnings,
        ledger: ledger.ok_or_else(|| missing("ledger"))?,
        timestamp,
        runtime_ms,
    };
    Ok(SanitizedMatrix {
        extents,
        partitions,
        metadata,
        ledger_dump: None,
    })
}

/// Per-query results: `query_id,true,noisy,mre`.
pub fn write_query_records(mut w: impl Write, protocol: &str, records: &[QueryRecord]) -> Result<()> {
    let mut out = String::with_capacity(40 * (records.len() + 2));
    if !protocol.is_empty() {
        let _ = writeln!(out, "# {protocol}");
    }
    out.push_str("query_id,true,noisy,mre\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{}", r.query_id, r.true_count, r.noisy, r.mre);
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub eps: f64,
    pub d: usize,
    pub dataset: String,
    pub mean_mre: f64,
    pub median_mre: f64,
    pub seed: u64,
}

pub const SUMMARY_HEADER: &str = "method,eps,d,dataset,mean_mre,median_mre,seed";

/// Summary rows: `method,eps,d,dataset,mean_mre,median_mre,seed`.
pub fn write_summary(mut w: impl Write, protocol: &str, rows: &[SummaryRow]) -> Result<()> {
    let mut out = String::new();
    if !protocol.is_empty() {
        let _ = writeln!(out, "# {protocol}");
    }
    let _ = writeln!(out, "{SUMMARY_HEADER}");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, r.eps, r.d, r.dataset, r.mean_mre, r.median_mre, r.seed
        );
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// One `[section]` of a key=value file; top-level keys live in the section
/// with an empty name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<KvEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
    pub offset: usize,
}

impl KvSection {
    pub fn get(&self, key: &str) -> Option<&KvEntry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }
}

impl KvEntry {
    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse(ParseError {
            line: self.line,
            offset: self.offset,
            message: format!("{}: {}", self.key, message.into()),
        })
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("cannot parse `{}`", self.value)))
    }

    /// Comma-separated list value.
    pub fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| self.error(format!("cannot parse `{s}`"))))
            .collect()
    }
}

/// Parses `key = value` lines grouped under optional `[section]` headers.
/// `#` starts a comment line.
pub fn parse_kv(text: &str) -> Result<Vec<KvSection>> {
    let mut sections = vec![KvSection {
        name: String::new(),
        line: 0,
        entries: Vec::new(),
    }];
    for line in Lines::new(text) {
        let t = line.text.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(name) = t.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| perr(&line, "unterminated section header"))?;
            sections.push(KvSection {
                name: name.trim().to_string(),
                line: line.no,
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| perr(&line, format!("expected key=value, found `{t}`")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(perr(&line, "empty key"));
        }
        sections.last_mut().unwrap().entries.push(KvEntry {
            key: k.to_string(),
            value: v.trim().to_string(),
            line: line.no,
            offset: line.offset,
        });
    }
    Ok(sections)
}
