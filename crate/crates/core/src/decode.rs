//! Mapping estimated statistics `q̂ ∈ [0,1]^{s²+1}` to the labeling that
//! minimises the expected shifted F-beta loss `⟨q̂, b(ŷ)⟩`.
//!
//! [`decode_fast`] stratifies the search by `l = ‖ŷ‖₁`: inside a stratum the
//! objective is linear in `ŷ` with per-tag weights `T_{jl} = Σ_k q̂_{jk} V_{kl}`,
//! `V_{kl} = −(1+β²)/(β²k + l)`, so the best member takes the `l` smallest
//! weights. [`decode_brute`] enumerates all `2^s` labelings and is kept as the
//! reference.
//!
//! Ties resolve towards the smaller `‖ŷ‖₁`, then towards lower tag indices.

use crate::error::{Error, Result};
use crate::fbeta::{b_vec, BetaParam, LabelVec, StatIndex, StatVec};

/// Entries may exceed `[0, 1]` by this much before being rejected.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Largest `s` accepted by [`decode_brute`].
pub const BRUTE_MAX_S: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeInput {
    qhat: StatVec,
    beta: BetaParam,
}

impl DecodeInput {
    /// Entries within [`PROB_TOLERANCE`] of `[0, 1]` are clamped; others are an error.
    pub fn new(mut qhat: StatVec, beta: BetaParam) -> Result<Self> {
        for v in qhat.entries_mut() {
            if !(v.is_finite() && *v >= -PROB_TOLERANCE && *v <= 1.0 + PROB_TOLERANCE) {
                return Err(Error::OutOfRange(format!("decode input entry {v} outside [0, 1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { qhat, beta })
    }

    pub fn qhat(&self) -> &StatVec {
        &self.qhat
    }

    pub fn beta(&self) -> BetaParam {
        self.beta
    }

    pub fn s(&self) -> usize {
        self.qhat.s()
    }
}

/// `⟨q̂, b(ŷ)⟩`, the quantity both decoders minimise.
pub fn objective(input: &DecodeInput, yhat: &LabelVec) -> Result<f64> {
    input.qhat.dot(&b_vec(yhat, input.beta))
}

/// `T = Q·V` as a row-major `s × s` matrix; column `l − 1` holds stratum `l`.
fn stratum_weights(input: &DecodeInput) -> Vec<f64> {
    let s = input.s();
    let b2 = input.beta.beta_sq();
    let num = -(1.0 + b2);
    let v: Vec<f64> = (1..=s)
        .flat_map(|k| (1..=s).map(move |l| num / (b2 * k as f64 + l as f64)))
        .collect();
    let q = input.qhat.entries();
    let mut t = vec![0.0; s * s];
    for j in 0..s {
        let q_row = &q[1 + j * s..1 + (j + 1) * s];
        let t_row = &mut t[j * s..(j + 1) * s];
        for (k, &qjk) in q_row.iter().enumerate() {
            if qjk == 0.0 {
                continue;
            }
            let v_row = &v[k * s..(k + 1) * s];
            for (tl, &vkl) in t_row.iter_mut().zip(v_row) {
                *tl += qjk * vkl;
            }
        }
    }
    t
}

/// Stratified `O(s³)` decoder.
pub fn decode_fast(input: &DecodeInput) -> LabelVec {
    let s = input.s();
    let t = stratum_weights(input);

    let mut best = LabelVec::zeros(s);
    let mut best_obj = -input.qhat.get(StatIndex::Zero);
    let mut order: Vec<usize> = (0..s).collect();
    for l in 1..=s {
        // stable sort keeps lower tag indices first among equal weights
        order.sort_by(|&a, &b| t[a * s + l - 1].total_cmp(&t[b * s + l - 1]));
        let chosen = &order[..l];
        let z: f64 = chosen.iter().map(|&j| t[j * s + l - 1]).sum();
        if z < best_obj {
            best_obj = z;
            best = LabelVec::from_active(s, chosen).expect("indices below s");
        }
        order.sort_unstable();
    }
    best
}

/// Exhaustive decoder over all `2^s` labelings.
pub fn decode_brute(input: &DecodeInput) -> Result<LabelVec> {
    let s = input.s();
    if s > BRUTE_MAX_S {
        return Err(Error::TooManyLabels { what: "brute-force decoding", s, max: BRUTE_MAX_S });
    }
    let mut best: Option<(f64, LabelVec)> = None;
    for mask in 0..1u64 << s {
        let y = LabelVec::from_mask(s, mask);
        let obj = objective(input, &y)?;
        let better = match &best {
            None => true,
            Some((b, cur)) => obj < *b || (obj == *b && tie_key(&y) < tie_key(cur)),
        };
        if better {
            best = Some((obj, y));
        }
    }
    Ok(best.expect("at least one labeling").1)
}

fn tie_key(y: &LabelVec) -> (usize, Vec<usize>) {
    (y.count(), y.active().collect())
}
