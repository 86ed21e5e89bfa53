//! The `(s²+1)`-dimensional surrogate `ψ(y, u)`: one binary proper composite
//! loss per coordinate, with binary target `a_i(y)`.
//!
//! Only coordinates in [`SurrogateConfig::active`] are trained. The default
//! active set keeps `Zero` plus the pairs whose count was observed in training;
//! the remaining coordinates are pinned to probability 0 at prediction time.

use std::collections::BTreeSet;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fbeta::{BetaParam, LabelVec, StatIndex, StatVec};
use crate::loss::{LossKind, Sign};

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateConfig {
    s: usize,
    beta: BetaParam,
    loss: LossKind,
    active: Vec<StatIndex>,
    mask: Vec<bool>,
}

impl SurrogateConfig {
    /// Validates `active`: it must contain `Zero`, and is stored in canonical order.
    pub fn new(s: usize, beta: BetaParam, loss: LossKind, active: impl IntoIterator<Item = StatIndex>) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidArgument("s must be positive".into()));
        }
        let set: BTreeSet<StatIndex> = active.into_iter().collect();
        if !set.contains(&StatIndex::Zero) {
            return Err(Error::InvalidArgument("the Zero statistic must be active".into()));
        }
        if let Some(bad) = set.iter().find(|i| !i.is_valid(s)) {
            return Err(Error::OutOfRange(format!("statistic {bad:?} with s = {s}")));
        }
        let active: Vec<_> = set.into_iter().collect();
        let mut mask = vec![false; StatIndex::dim(s)];
        for idx in &active {
            mask[idx.position(s)] = true;
        }
        Ok(Self { s, beta, loss, active, mask })
    }

    /// All `s²+1` coordinates.
    pub fn full(s: usize, beta: BetaParam) -> Result<Self> {
        Self::new(s, beta, LossKind::Logistic, StatIndex::all(s))
    }

    /// `Zero` plus `Pair(j, k)` for every tag `j` and every `k ∈ counts` with `k ≥ 1`.
    pub fn for_counts(s: usize, beta: BetaParam, counts: impl IntoIterator<Item = usize>) -> Result<Self> {
        let counts: BTreeSet<usize> = counts.into_iter().filter(|&k| k > 0).collect();
        if let Some(&k) = counts.iter().find(|&&k| k > s) {
            return Err(Error::OutOfRange(format!("label count {k} with s = {s}")));
        }
        let active = std::iter::once(StatIndex::Zero)
            .chain((0..s).flat_map(|j| counts.iter().map(move |&k| StatIndex::pair(j, k))));
        Self::new(s, beta, LossKind::Logistic, active)
    }

    /// Active counts taken from the training labels (`--full-k` uses [`Self::full`]).
    pub fn from_dataset(data: &Dataset, beta: BetaParam, full: bool) -> Result<Self> {
        if full {
            Self::full(data.s(), beta)
        } else {
            Self::for_counts(data.s(), beta, data.nonzero_counts())
        }
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn beta(&self) -> BetaParam {
        self.beta
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn active(&self) -> &[StatIndex] {
        &self.active
    }

    pub fn is_active(&self, idx: StatIndex) -> bool {
        self.mask[idx.position(self.s)]
    }

    pub fn is_full(&self) -> bool {
        self.active.len() == StatIndex::dim(self.s)
    }
}

/// `a_idx(y)` without materialising the whole vector.
pub fn target(y: &LabelVec, idx: StatIndex) -> bool {
    match idx {
        StatIndex::Zero => y.is_empty(),
        StatIndex::Pair { label, count } => y.get(label) && y.count() == count,
    }
}

fn check(y: &LabelVec, u: &StatVec, cfg: &SurrogateConfig) -> Result<()> {
    Error::check_dim(cfg.s, y.s())?;
    Error::check_dim(cfg.s, u.s())
}

/// `ψ(y, u) = Σ_{i active} a_i(y)·φ(+1, u_i) + (1 − a_i(y))·φ(−1, u_i)`.
pub fn psi(y: &LabelVec, u: &StatVec, cfg: &SurrogateConfig) -> Result<f64> {
    check(y, u, cfg)?;
    let loss = cfg.loss.get();
    Ok(cfg
        .active
        .iter()
        .map(|&idx| loss.loss(Sign::from_indicator(target(y, idx)), u.get(idx)))
        .sum())
}

/// `∂ψ/∂u`; zero on inactive coordinates.
pub fn psi_gradient(y: &LabelVec, u: &StatVec, cfg: &SurrogateConfig) -> Result<StatVec> {
    check(y, u, cfg)?;
    let loss = cfg.loss.get();
    let mut g = StatVec::zeros(cfg.s);
    for &idx in &cfg.active {
        g.set(idx, loss.derivative(Sign::from_indicator(target(y, idx)), u.get(idx)));
    }
    Ok(g)
}

/// Per-instance binary labels `a_idx(y_i)` of one subproblem.
pub fn binary_targets(data: &Dataset, idx: StatIndex) -> Vec<bool> {
    data.labels().iter().map(|y| target(y, idx)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseRow;
    use crate::fbeta::a_vec;
    use crate::loss::{logit, sigmoid, BinaryLoss, Logistic};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn full(s: usize) -> SurrogateConfig {
        SurrogateConfig::full(s, BetaParam::default()).unwrap()
    }

    #[test]
    fn psi_examples() {
        let v = psi(&LabelVec::zeros(1), &StatVec::zeros(1), &full(1)).unwrap();
        assert!((v - 2.0 * LN2).abs() < 1e-15);

        let y = LabelVec::from_active(2, &[0]).unwrap();
        let v = psi(&y, &StatVec::zeros(2), &full(2)).unwrap();
        assert!((v - 5.0 * LN2).abs() < 1e-14);
        assert!((v - 3.465736).abs() < 1e-6);
    }

    #[test]
    fn psi_vanishes_at_confident_correct_scores() {
        for mask in 0..8 {
            let y = LabelVec::from_mask(3, mask);
            let a = a_vec(&y);
            let u = StatVec::from_entries(3, a.entries().iter().map(|&t| if t == 1.0 { 40.0 } else { -40.0 }).collect())
                .unwrap();
            assert!(psi(&y, &u, &full(3)).unwrap() < 1e-8);
        }
    }

    #[test]
    fn gradient_examples() {
        let y = LabelVec::ones(1);
        let g = psi_gradient(&y, &StatVec::zeros(1), &full(1)).unwrap();
        assert_eq!(g.entries(), &[0.5, -0.5]);

        for mask in 0..16 {
            let y = LabelVec::from_mask(4, mask);
            let u = StatVec::from_entries(4, a_vec(&y).entries().iter().map(|&t| logit(t)).collect()).unwrap();
            let g = psi_gradient(&y, &u, &full(4)).unwrap();
            let norm = g.entries().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= 1e-6, "norm {norm}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = full(4);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let y = LabelVec::from_mask(4, rng.random_range(0..16));
            let u: Vec<f64> = (0..17).map(|_| rng.random_range(-5.0..5.0)).collect();
            let u = StatVec::from_entries(4, u).unwrap();
            let g = psi_gradient(&y, &u, &cfg).unwrap();
            for pos in 0..17 {
                let mut up = u.clone();
                let mut dn = u.clone();
                up.entries_mut()[pos] += h;
                dn.entries_mut()[pos] -= h;
                let fd = (psi(&y, &up, &cfg).unwrap() - psi(&y, &dn, &cfg).unwrap()) / (2.0 * h);
                let an = g.entries()[pos];
                worst = worst.max((fd - an).abs() / an.abs().max(1e-8));
            }
        }
        assert!(worst <= 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn inactive_coordinates_are_ignored() {
        let cfg = SurrogateConfig::for_counts(2, BetaParam::default(), [1]).unwrap();
        assert_eq!(cfg.active().len(), 3);
        let y = LabelVec::ones(2);
        let mut u = StatVec::zeros(2);
        u.set(StatIndex::pair(0, 2), 123.0);
        assert!((psi(&y, &u, &cfg).unwrap() - 3.0 * LN2).abs() < 1e-15);
        let g = psi_gradient(&y, &u, &cfg).unwrap();
        assert_eq!(g.get(StatIndex::pair(0, 2)), 0.0);
        assert!(psi(&LabelVec::ones(3), &u, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let b = BetaParam::default();
        assert!(SurrogateConfig::new(2, b, LossKind::Logistic, [StatIndex::pair(0, 1)]).is_err());
        assert!(SurrogateConfig::new(2, b, LossKind::Logistic, [StatIndex::Zero, StatIndex::pair(2, 1)]).is_err());
        assert!(SurrogateConfig::for_counts(2, b, [3]).is_err());
        let cfg = SurrogateConfig::for_counts(3, b, [0, 2, 1]).unwrap();
        assert_eq!(cfg.active().len(), 7);
        assert_eq!(cfg.active()[0], StatIndex::Zero);
        assert!(full(3).is_full());
    }

    #[test]
    fn binary_targets_examples() {
        let rows = vec![SparseRow::default(), SparseRow::default()];
        let labels = vec![LabelVec::from_active(2, &[0]).unwrap(), LabelVec::ones(2)];
        let ds = Dataset::new(2, 1, rows, labels).unwrap();
        assert_eq!(binary_targets(&ds, StatIndex::Zero), vec![false, false]);
        assert_eq!(binary_targets(&ds, StatIndex::pair(0, 1)), vec![true, false]);
        assert_eq!(binary_targets(&ds, StatIndex::pair(1, 2)), vec![false, true]);
    }

    #[test]
    fn psi_decomposes_into_binary_losses() {
        let rows = (0..16).map(|_| SparseRow::default()).collect();
        let labels: Vec<_> = (0..16).map(|m| LabelVec::from_mask(4, m)).collect();
        let ds = Dataset::new(4, 1, rows, labels.clone()).unwrap();
        let cfg = SurrogateConfig::for_counts(4, BetaParam::default(), [1, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = StatVec::from_entries(4, (0..17).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let mut by_index = vec![0.0; labels.len()];
        for &idx in cfg.active() {
            for (n, t) in binary_targets(&ds, idx).into_iter().enumerate() {
                by_index[n] += Logistic.loss(Sign::from_indicator(t), u.get(idx));
            }
        }
        for (y, expected) in labels.iter().zip(by_index) {
            assert!((psi(y, &u, &cfg).unwrap() - expected).abs() < 1e-12);
        }
    }

    /// Expected ψ separates over coordinates; each one is minimised by bisection
    /// on its derivative and compared against `q = E[a(y)]`.
    #[test]
    fn expected_psi_minimiser_recovers_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in 1..=3usize {
            let cfg = full(s);
            for _ in 0..5 {
                let n = 1usize << s;
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = w.iter().sum();
                let p: Vec<f64> = w.iter().map(|v| v / total).collect();
                let ys: Vec<_> = (0..n).map(|m| LabelVec::from_mask(s, m as u64)).collect();
                let q = StatVec::expected_a(s, &p).unwrap();

                let expected_grad = |u: &StatVec| -> StatVec {
                    let mut g = StatVec::zeros(s);
                    for (y, &py) in ys.iter().zip(&p) {
                        let gy = psi_gradient(y, u, &cfg).unwrap();
                        for (a, b) in g.entries_mut().iter_mut().zip(gy.entries()) {
                            *a += py * b;
                        }
                    }
                    g
                };
                let dim = StatIndex::dim(s);
                let (mut lo, mut hi) = (vec![-40.0; dim], vec![40.0; dim]);
                for _ in 0..200 {
                    let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                    let g = expected_grad(&StatVec::from_entries(s, mid.clone()).unwrap());
                    for i in 0..dim {
                        if g.entries()[i] > 0.0 {
                            hi[i] = mid[i];
                        } else {
                            lo[i] = mid[i];
                        }
                    }
                }
                for i in 0..dim {
                    let u = 0.5 * (lo[i] + hi[i]);
                    assert!((sigmoid(u) - q.entries()[i]).abs() < 1e-4);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn psi_is_convex(
            mask in 0u64..32,
            u1 in proptest::collection::vec(-20.0f64..20.0, 26),
            u2 in proptest::collection::vec(-20.0f64..20.0, 26),
            t in 0.0f64..=1.0,
        ) {
            let cfg = full(5);
            let y = LabelVec::from_mask(5, mask);
            let mix: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let a = StatVec::from_entries(5, u1).unwrap();
            let b = StatVec::from_entries(5, u2).unwrap();
            let m = StatVec::from_entries(5, mix).unwrap();
            let lhs = psi(&y, &m, &cfg).unwrap();
            let rhs = t * psi(&y, &a, &cfg).unwrap() + (1.0 - t) * psi(&y, &b, &cfg).unwrap();
            prop_assert!(lhs <= rhs + 1e-12, "{} > {}", lhs, rhs);
        }
    }
}
