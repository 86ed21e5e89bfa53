//! Instance-level F-beta arithmetic and the rank-(s²+1) factorisation of the
//! F-beta loss matrix.
//!
//! For labelings `y, ŷ ∈ {0,1}^s` the shifted loss `ℓ(y, ŷ) − 1 = −F_β(y, ŷ)`
//! factors as `⟨a(y), b(ŷ)⟩` where both vectors live in `R^{s²+1}`, indexed by
//! [`StatIndex`]. The `a` side only depends on the true labeling and the `b`
//! side only on the prediction, so the expected loss under any label
//! distribution is `⟨E[a(y)], b(ŷ)⟩`.

use std::fmt;

use crate::error::{Error, Result};

/// A labeling `y ∈ {0,1}^s`. Tag indices are 0-based in the API.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelVec {
    bits: Vec<bool>,
}

impl LabelVec {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidArgument("a labeling needs at least one tag".into()));
        }
        Ok(Self { bits })
    }

    pub fn zeros(s: usize) -> Self {
        assert!(s > 0, "a labeling needs at least one tag");
        Self { bits: vec![false; s] }
    }

    pub fn ones(s: usize) -> Self {
        assert!(s > 0, "a labeling needs at least one tag");
        Self { bits: vec![true; s] }
    }

    /// Builds a labeling from 0-based active tag indices.
    pub fn from_active(s: usize, active: &[usize]) -> Result<Self> {
        let mut bits = vec![false; s];
        for &j in active {
            if j >= s {
                return Err(Error::OutOfRange(format!("tag index {j} with s = {s}")));
            }
            bits[j] = true;
        }
        Self::new(bits)
    }

    /// Bit `j` of `mask` is tag `j`.
    pub fn from_mask(s: usize, mask: u64) -> Self {
        assert!(s > 0 && s <= 64);
        Self { bits: (0..s).map(|j| mask >> j & 1 == 1).collect() }
    }

    pub fn mask(&self) -> u64 {
        assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (j, &b)| if b { m | 1 << j } else { m })
    }

    pub fn s(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j]
    }

    /// `‖y‖₁`.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// 0-based indices of the active tags, ascending.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    /// `Σ_j y_j ŷ_j`.
    pub fn overlap(&self, other: &LabelVec) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }
}

impl fmt::Display for LabelVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A coordinate of `R^{s²+1}`.
///
/// `Pair { label, count }` carries a 0-based tag index and a label count
/// `k ∈ 1..=s`. Positions run `Zero` first, then pairs row-major with the tag
/// outer and the count inner; serialized vectors rely on this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatIndex {
    Zero,
    Pair { label: usize, count: usize },
}

impl StatIndex {
    pub fn pair(label: usize, count: usize) -> Self {
        StatIndex::Pair { label, count }
    }

    pub fn dim(s: usize) -> usize {
        s * s + 1
    }

    pub fn position(self, s: usize) -> usize {
        match self {
            StatIndex::Zero => 0,
            StatIndex::Pair { label, count } => {
                debug_assert!(label < s && (1..=s).contains(&count));
                1 + label * s + (count - 1)
            }
        }
    }

    pub fn from_position(s: usize, pos: usize) -> Result<Self> {
        if pos >= Self::dim(s) {
            return Err(Error::OutOfRange(format!("position {pos} with s = {s}")));
        }
        Ok(if pos == 0 {
            StatIndex::Zero
        } else {
            StatIndex::Pair { label: (pos - 1) / s, count: (pos - 1) % s + 1 }
        })
    }

    pub fn is_valid(self, s: usize) -> bool {
        match self {
            StatIndex::Zero => true,
            StatIndex::Pair { label, count } => label < s && (1..=s).contains(&count),
        }
    }

    /// All `s²+1` indices in canonical order.
    pub fn all(s: usize) -> impl Iterator<Item = StatIndex> {
        std::iter::once(StatIndex::Zero).chain(
            (0..s).flat_map(move |label| (1..=s).map(move |count| StatIndex::Pair { label, count })),
        )
    }
}

impl fmt::Display for StatIndex {
    /// `zero`, or `j:k` with a 1-based tag index.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatIndex::Zero => f.write_str("zero"),
            StatIndex::Pair { label, count } => write!(f, "{}:{}", label + 1, count),
        }
    }
}

/// A point of `R^{s²+1}` addressed by [`StatIndex`]: scores, probabilities
/// `q(x)`, or the `a(y)` / `b(ŷ)` factors.
#[derive(Clone, Debug, PartialEq)]
pub struct StatVec {
    s: usize,
    entries: Vec<f64>,
}

impl StatVec {
    pub fn zeros(s: usize) -> Self {
        Self { s, entries: vec![0.0; StatIndex::dim(s)] }
    }

    pub fn from_entries(s: usize, entries: Vec<f64>) -> Result<Self> {
        Error::check_dim(StatIndex::dim(s), entries.len())?;
        Ok(Self { s, entries })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn get(&self, idx: StatIndex) -> f64 {
        self.entries[idx.position(self.s)]
    }

    pub fn set(&mut self, idx: StatIndex, value: f64) {
        let pos = idx.position(self.s);
        self.entries[pos] = value;
    }

    pub fn dot(&self, other: &StatVec) -> Result<f64> {
        Error::check_dim(self.s, other.s)?;
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| a * b).sum())
    }

    /// `q₀ + Σ_k (1/k) Σ_j q_{jk}`; equals 1 for any `q = E[a(y)]`.
    pub fn total_mass(&self) -> f64 {
        let s = self.s;
        let mut total = self.entries[0];
        for k in 1..=s {
            let col: f64 = (0..s).map(|j| self.get(StatIndex::pair(j, k))).sum();
            total += col / k as f64;
        }
        total
    }

    /// `Σ_y p(y)·a(y)` for a distribution over all `2^s` labelings, indexed by mask.
    pub fn expected_a(s: usize, probs: &[f64]) -> Result<Self> {
        Error::check_dim(1usize << s, probs.len())?;
        let mut q = StatVec::zeros(s);
        for (mask, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let y = LabelVec::from_mask(s, mask as u64);
            let k = y.count();
            if k == 0 {
                q.entries[0] += p;
            } else {
                for j in y.active() {
                    q.entries[StatIndex::pair(j, k).position(s)] += p;
                }
            }
        }
        Ok(q)
    }
}

/// The F-beta weight `β > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaParam {
    beta: f64,
    beta_sq: f64,
}

impl BetaParam {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { beta, beta_sq: beta * beta })
    }

    pub fn beta(self) -> f64 {
        self.beta
    }

    pub fn beta_sq(self) -> f64 {
        self.beta_sq
    }
}

impl Default for BetaParam {
    fn default() -> Self {
        Self { beta: 1.0, beta_sq: 1.0 }
    }
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// `F_β(y, ŷ) = (1+β²)·Σ y_j ŷ_j / (β²‖y‖₁ + ‖ŷ‖₁)`, with `F_β(0, 0) = 1`.
pub fn fbeta(y: &LabelVec, yhat: &LabelVec, beta: BetaParam) -> Result<f64> {
    Error::check_dim(y.s(), yhat.s())?;
    let overlap = y.overlap(yhat);
    let (ny, nyhat) = (y.count(), yhat.count());
    if ny == 0 && nyhat == 0 {
        return Ok(1.0);
    }
    Ok((1.0 + beta.beta_sq()) * overlap as f64 / (beta.beta_sq() * ny as f64 + nyhat as f64))
}

/// Fraction of predicted tags that are active; 1 when nothing is predicted.
pub fn precision(y: &LabelVec, yhat: &LabelVec) -> Result<f64> {
    Error::check_dim(y.s(), yhat.s())?;
    Ok(ratio_or_one(y.overlap(yhat), yhat.count()))
}

/// Fraction of active tags that are predicted; 1 when nothing is active.
pub fn recall(y: &LabelVec, yhat: &LabelVec) -> Result<f64> {
    Error::check_dim(y.s(), yhat.s())?;
    Ok(ratio_or_one(y.overlap(yhat), y.count()))
}

/// `a(y)`: `a₀ = 1(‖y‖₁ = 0)`, `a_{jk} = 1(‖y‖₁ = k)·y_j`.
pub fn a_vec(y: &LabelVec) -> StatVec {
    let s = y.s();
    let mut a = StatVec::zeros(s);
    let k = y.count();
    if k == 0 {
        a.entries[0] = 1.0;
    } else {
        for j in y.active() {
            a.set(StatIndex::pair(j, k), 1.0);
        }
    }
    a
}

/// `b(ŷ)`: `b₀ = −1(‖ŷ‖₁ = 0)`, `b_{jk} = −(1+β²)·ŷ_j / (β²k + ‖ŷ‖₁)`.
pub fn b_vec(yhat: &LabelVec, beta: BetaParam) -> StatVec {
    let s = yhat.s();
    let mut b = StatVec::zeros(s);
    let l = yhat.count();
    if l == 0 {
        b.entries[0] = -1.0;
        return b;
    }
    let num = -(1.0 + beta.beta_sq());
    for j in yhat.active() {
        for k in 1..=s {
            b.set(StatIndex::pair(j, k), num / (beta.beta_sq() * k as f64 + l as f64));
        }
    }
    b
}

/// Expected F-beta of predicting `yhat` when `q = E[a(y)]`: `−⟨q, b(ŷ)⟩`.
pub fn expected_fbeta(q: &StatVec, yhat: &LabelVec, beta: BetaParam) -> Result<f64> {
    Error::check_dim(q.s(), yhat.s())?;
    Ok(-q.dot(&b_vec(yhat, beta))?)
}
