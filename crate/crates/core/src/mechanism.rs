//! Laplace mechanism and privacy-budget accounting.
//!
//! Randomness is addressed by `(seed, path)`: every consumer (a tree node, a
//! grid partition) derives its own [`NoiseStream`] from the run seed and its
//! structural path, so results never depend on traversal or scheduling order.
//!
//! The [`BudgetLedger`] records every expenditure under a [`Scope`]. Scopes
//! name nested, disjoint pieces of the data: `/` is the whole dataset, `/3`
//! the fourth disjoint part of it, `/3/1` a part of that part, and `/3/*`
//! stands for every part of `/3` at once. Expenditures on one chain of nested
//! scopes add up (sequential composition); expenditures on disjoint branches
//! are charged once, at the most expensive branch (parallel composition).

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::Mutex;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Sensitivity of a set of disjoint partition counts.
pub const COUNT_SENSITIVITY: f64 = 1.0;

/// Sensitivity of the homogeneity split objective.
pub const HOMOGENEITY_SENSITIVITY: f64 = 2.0;

/// Slack allowed when comparing accumulated floating-point budgets.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

pub type Path = SmallVec<[u32; 8]>;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Whether Laplace draws are real or replaced by zero.
///
/// `Disabled` exists for oracle tests: the pipeline, the ledger and all
/// non-noise randomness behave exactly as usual, only the noise is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Laplace,
    Disabled,
}

/// Factory for per-site noise streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    pub seed: u64,
    pub mode: NoiseMode,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            mode: NoiseMode::Laplace,
        }
    }

    pub fn with_mode(seed: u64, mode: NoiseMode) -> Self {
        Self { seed, mode }
    }

    pub fn stream(&self, path: &[u32]) -> NoiseStream {
        NoiseStream::with_mode(self.seed, path, self.mode)
    }
}

/// Deterministic random stream identified by `(seed, path)`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    path: Path,
    mode: NoiseMode,
    rng: ChaCha12Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, path: &[u32]) -> Self {
        Self::with_mode(seed, path, NoiseMode::Laplace)
    }

    pub fn with_mode(seed: u64, path: &[u32], mode: NoiseMode) -> Self {
        let mut h = mix64(seed ^ 0x6470_666d_5f6e_6f69);
        h = mix64(h ^ path.len() as u64);
        for &p in path {
            h = mix64(h ^ (p as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
        }
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let w = mix64(h.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ seed);
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Self {
            seed,
            path: path.iter().copied().collect(),
            mode,
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u32] {
        &self.path
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// Stream for the sub-site `path ++ [k]`.
    pub fn child(&self, k: u32) -> NoiseStream {
        let mut p = self.path.clone();
        p.push(k);
        NoiseStream::with_mode(self.seed, &p, self.mode)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open_uniform(&mut self) -> f64 {
        loop {
            let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform integer in `[lo, hi)`; `hi > lo`.
    pub fn uniform_int(&mut self, lo: u32, hi: u32) -> u32 {
        debug_assert!(hi > lo);
        let span = (hi - lo) as u64;
        // Reject the top partial block to avoid modulo bias.
        let zone = u64::MAX - (u64::MAX - span + 1) % span;
        loop {
            let v = self.rng.next_u64();
            if v <= zone {
                return lo + (v % span) as u32;
            }
        }
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

/// Inverse CDF of the zero-centred Laplace distribution with scale `b`.
#[inline]
pub fn laplace_inverse_cdf(b: f64, u: f64) -> f64 {
    let t = u - 0.5;
    let x = -b * t.signum() * (1.0 - 2.0 * t.abs()).ln();
    x + 0.0
}

/// Cumulative distribution function of Laplace(0, b).
pub fn laplace_cdf(b: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

fn check_scale(b: f64) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Laplace scale must be positive and finite, got {b}"
        )));
    }
    Ok(())
}

/// One draw from Laplace(0, b) by inverse-CDF sampling.
pub fn laplace(b: f64, stream: &mut NoiseStream) -> Result<f64> {
    check_scale(b)?;
    let u = stream.open_uniform();
    Ok(match stream.mode {
        NoiseMode::Laplace => laplace_inverse_cdf(b, u),
        NoiseMode::Disabled => 0.0,
    })
}

/// Composition scope of a ledger entry. See the module docs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Scope {
    path: Path,
    each_part: bool,
}

impl Scope {
    /// The whole dataset.
    pub fn root() -> Self {
        Self::default()
    }

    /// A nested disjoint part of the data.
    pub fn part(path: &[u32]) -> Self {
        Self {
            path: path.iter().copied().collect(),
            each_part: false,
        }
    }

    /// Every disjoint part of the data at `path`, each charged once.
    pub fn each_part_of(path: &[u32]) -> Self {
        Self {
            path: path.iter().copied().collect(),
            each_part: true,
        }
    }

    pub fn path(&self) -> &[u32] {
        &self.path
    }

    pub fn is_each_part(&self) -> bool {
        self.each_part
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() && !self.each_part {
            return f.write_str("/");
        }
        for p in &self.path {
            write!(f, "/{p}")?;
        }
        if self.each_part {
            f.write_str("/*")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub label: String,
    pub scope: Scope,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerSummary {
    pub spent: f64,
    pub total: f64,
}

impl LedgerSummary {
    pub fn within(&self) -> bool {
        self.spent <= self.total + BUDGET_TOLERANCE
    }
}

#[derive(Debug, Default)]
struct TrieNode {
    parent: Option<usize>,
    children: HashMap<u32, usize>,
    seq: f64,
    each: f64,
    best_child: f64,
}

impl TrieNode {
    fn spent(&self) -> f64 {
        self.seq + self.each + self.best_child
    }
}

#[derive(Debug)]
struct LedgerState {
    entries: Vec<LedgerEntry>,
    nodes: Vec<TrieNode>,
}

impl LedgerState {
    fn node_for(&mut self, path: &[u32]) -> usize {
        let mut cur = 0;
        for &p in path {
            let next = self.nodes[cur].children.get(&p).copied();
            cur = match next {
                Some(n) => n,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(TrieNode {
                        parent: Some(cur),
                        ..TrieNode::default()
                    });
                    self.nodes[cur].children.insert(p, id);
                    id
                }
            };
        }
        cur
    }

    /// Root-level spend if `eps` were added at `node`.
    fn tentative(&self, node: usize, eps: f64) -> f64 {
        let mut v = self.nodes[node].spent() + eps;
        let mut cur = node;
        while let Some(parent) = self.nodes[cur].parent {
            let p = &self.nodes[parent];
            v = p.seq + p.each + p.best_child.max(v);
            cur = parent;
        }
        v
    }

    fn propagate(&mut self, node: usize) {
        let mut cur = node;
        while let Some(parent) = self.nodes[cur].parent {
            let s = self.nodes[cur].spent();
            let p = &mut self.nodes[parent];
            if s > p.best_child {
                p.best_child = s;
            }
            cur = parent;
        }
    }
}

/// Append-only record of privacy-budget expenditures.
///
/// Safe to share between workers: recording takes an internal lock and the
/// composed total does not depend on recording order.
#[derive(Debug)]
pub struct BudgetLedger {
    total: f64,
    state: Mutex<LedgerState>,
}

impl BudgetLedger {
    pub fn new(total: f64) -> Result<Self> {
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "total privacy budget must be positive, got {total}"
            )));
        }
        Ok(Self {
            total,
            state: Mutex::new(LedgerState {
                entries: Vec::new(),
                nodes: vec![TrieNode::default()],
            }),
        })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Records an expenditure, refusing any that would overflow the budget.
    pub fn record(&self, label: &str, epsilon: f64, scope: Scope) -> Result<()> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "privacy budget of an expenditure must be positive, got {epsilon}"
            )));
        }
        let mut st = self.state.lock().expect("ledger lock poisoned");
        let node = st.node_for(scope.path());
        let would = st.tentative(node, epsilon);
        if would > self.total + BUDGET_TOLERANCE {
            let dump = render_dump(&st.entries, st.nodes[0].spent(), self.total);
            return Err(Error::BudgetExceeded {
                requested: epsilon,
                scope: scope.to_string(),
                would_spend: would,
                total: self.total,
                dump,
            });
        }
        if scope.is_each_part() {
            st.nodes[node].each += epsilon;
        } else {
            st.nodes[node].seq += epsilon;
        }
        st.propagate(node);
        st.entries.push(LedgerEntry {
            label: label.to_string(),
            scope,
            epsilon,
        });
        Ok(())
    }

    /// Composed privacy loss of everything recorded so far.
    pub fn spent(&self) -> f64 {
        self.state.lock().expect("ledger lock poisoned").nodes[0].spent()
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent()
    }

    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary {
            spent: self.spent(),
            total: self.total,
        }
    }

    /// True iff the composed spend does not exceed the total budget.
    pub fn assert_within(&self) -> bool {
        self.summary().within()
    }

    /// Hard post-run audit used by every sanitizer.
    pub fn audit(&self) -> Result<LedgerSummary> {
        let s = self.summary();
        if s.within() {
            Ok(s)
        } else {
            Err(Error::AuditFailed {
                spent: s.spent,
                total: s.total,
                dump: self.dump(),
            })
        }
    }

    pub fn entries(&self) -> Vec<LedgerEntry> {
        self.state.lock().expect("ledger lock poisoned").entries.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("ledger lock poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Text dump: a `label,scope,epsilon` line per entry, then `spent/total`.
    pub fn dump(&self) -> String {
        let st = self.state.lock().expect("ledger lock poisoned");
        render_dump(&st.entries, st.nodes[0].spent(), self.total)
    }
}

fn render_dump(entries: &[LedgerEntry], spent: f64, total: f64) -> String {
    let mut out = String::from("label,scope,epsilon\n");
    for e in entries {
        let _ = writeln!(out, "{},{},{}", e.label, e.scope, e.epsilon);
    }
    let _ = writeln!(out, "# spent/total {spent}/{total}");
    out
}

/// Adds `Lap(sensitivity / epsilon)` to `value` and records the charge.
pub fn sanitize_value(
    value: f64,
    sensitivity: f64,
    epsilon: f64,
    stream: &mut NoiseStream,
    ledger: &BudgetLedger,
    scope: Scope,
    label: &str,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sensitivity must be positive, got {sensitivity}"
        )));
    }
    ledger.record(label, epsilon, scope)?;
    Ok(value + laplace(sensitivity / epsilon, stream)?)
}

/// Noisy count `true_count + Lap(sensitivity / epsilon)`. Negative results
/// are kept as they are.
pub fn sanitize_count(
    true_count: u64,
    sensitivity: f64,
    epsilon: f64,
    stream: &mut NoiseStream,
    ledger: &BudgetLedger,
    scope: Scope,
) -> Result<f64> {
    sanitize_value(true_count as f64, sensitivity, epsilon, stream, ledger, scope, "count")
}
