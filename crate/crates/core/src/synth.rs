//! Synthetic multi-label distribution whose conditional statistics `q(x)` are
//! exactly logistic-linear in `x`.
//!
//! A fixed `W ∈ [0,1]^{(s²+1)×d}` (full row rank) and `α ∈ [0.1,1]^{2^s}` are
//! drawn once. Each point draws `p ∼ Dirichlet(α)` over all `2^s` labelings,
//! sets `q = E_p[a(y)]`, `x = W†·logit(q)` and `y ∼ p`, so `σ(W·x) = q`.
//!
//! Point `i` uses its own ChaCha stream, so any subset of indices can be
//! generated independently and in parallel.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::data::{Dataset, SparseRow};
use crate::decode::{decode_fast, DecodeInput};
use crate::error::{Error, Result};
use crate::fbeta::{expected_fbeta, BetaParam, LabelVec, StatIndex, StatVec};
use crate::loss::{logit, sigmoid};

pub const DEFAULT_S: usize = 6;
pub const DEFAULT_D: usize = 100;
/// `2^s` outcomes are enumerated per point.
pub const MAX_S: usize = 16;
/// Test points are drawn from stream indices at and above this offset.
pub const TEST_STREAM_OFFSET: u64 = 1 << 40;

const MAX_RANK_RETRIES: usize = 10;
const PINV_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Preset {
    /// `α_y ∼ U[0.1, 1]` independently.
    #[default]
    Standard,
    /// Mass concentrated on single-tag labelings (`α = 2`), `α = 0.1` elsewhere.
    /// Tags are strongly negatively correlated and per-tag marginals rarely
    /// reach 1/2.
    BrAdversarial,
}

#[derive(Clone, Debug)]
pub struct SynthDistribution {
    s: usize,
    d: usize,
    seed: u64,
    preset: Preset,
    w: DMatrix<f64>,
    w_pinv: DMatrix<f64>,
    alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPoint {
    pub x: Vec<f64>,
    pub y: LabelVec,
    /// Conditional distribution over labelings, indexed by mask.
    pub p: Vec<f64>,
    pub q: StatVec,
}

/// `Wᵀ(WWᵀ)⁻¹` through a Cholesky solve of the Gram matrix.
pub fn right_pseudo_inverse(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, d) = w.shape();
    if r > d {
        return Err(Error::RankDeficient(format!("{r} x {d} matrix cannot have full row rank")));
    }
    let gram = w * w.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("Gram matrix is not positive definite".into()))?;
    let pinv = chol.solve(w).transpose();
    let residual = (w * &pinv - DMatrix::<f64>::identity(r, r)).amax();
    if !(residual <= PINV_TOLERANCE) {
        return Err(Error::RankDeficient(format!("pseudo-inverse residual {residual:e}")));
    }
    Ok(pinv)
}

pub fn build_distribution(seed: u64, s: usize, d: usize) -> Result<SynthDistribution> {
    build_with_preset(seed, s, d, Preset::Standard)
}

pub fn build_with_preset(seed: u64, s: usize, d: usize, preset: Preset) -> Result<SynthDistribution> {
    if s == 0 || s > MAX_S {
        return Err(Error::TooManyLabels { what: "the synthetic distribution", s, max: MAX_S });
    }
    let r = StatIndex::dim(s);
    if r > d {
        return Err(Error::InvalidArgument(format!("need s^2+1 <= d for full row rank, got s = {s}, d = {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..MAX_RANK_RETRIES {
        let w = DMatrix::from_fn(r, d, |_, _| rng.random::<f64>());
        match right_pseudo_inverse(&w) {
            Ok(w_pinv) => {
                let alpha = match preset {
                    Preset::Standard => (0..1usize << s).map(|_| rng.random_range(0.1..=1.0)).collect(),
                    Preset::BrAdversarial => {
                        (0..1u64 << s).map(|m| if m.count_ones() == 1 { 2.0 } else { 0.1 }).collect()
                    }
                };
                return Ok(SynthDistribution { s, d, seed, preset, w, w_pinv, alpha });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

impl SynthDistribution {
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_pinv(&self) -> &DMatrix<f64> {
        &self.w_pinv
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // stream 0 built W and α
        rng.set_stream(index.wrapping_add(1));
        rng
    }

    pub fn sample_dirichlet(&self, rng: &mut impl Rng) -> Vec<f64> {
        loop {
            let mut p: Vec<f64> = self
                .alpha
                .iter()
                .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
                .collect();
            let total: f64 = p.iter().sum();
            if total > 0.0 && total.is_finite() {
                p.iter_mut().for_each(|v| *v /= total);
                return p;
            }
        }
    }

    /// The statistics `q(x) = σ(W·x)`.
    pub fn q_of(&self, x: &[f64]) -> Result<StatVec> {
        Error::check_dim(self.d, x.len())?;
        let scores = &self.w * nalgebra::DVector::from_column_slice(x);
        StatVec::from_entries(self.s, scores.iter().map(|&u| sigmoid(u)).collect())
    }

    /// Point `index` of the distribution's deterministic sequence.
    pub fn sample_point(&self, index: u64) -> SynthPoint {
        let mut rng = self.stream(index);
        let p = self.sample_dirichlet(&mut rng);
        let q = StatVec::expected_a(self.s, &p).expect("2^s probabilities");
        let scores = nalgebra::DVector::from_iterator(q.entries().len(), q.entries().iter().map(|&v| logit(v)));
        let x = (&self.w_pinv * scores).as_slice().to_vec();

        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut mask = p.len() - 1;
        for (m, &pm) in p.iter().enumerate() {
            acc += pm;
            if u < acc {
                mask = m;
                break;
            }
        }
        let y = LabelVec::from_mask(self.s, mask as u64);
        SynthPoint { x, y, p, q }
    }

    /// Points `start..start + n`.
    pub fn sample_range(&self, start: u64, n: usize) -> Vec<SynthPoint> {
        (0..n as u64).into_par_iter().map(|i| self.sample_point(start + i)).collect()
    }

    pub fn sample_train(&self, n: usize) -> Vec<SynthPoint> {
        self.sample_range(0, n)
    }

    pub fn sample_test(&self, n: usize) -> Vec<SynthPoint> {
        self.sample_range(TEST_STREAM_OFFSET, n)
    }
}

pub fn to_dataset(s: usize, d: usize, points: &[SynthPoint]) -> Result<Dataset> {
    let rows = points.iter().map(|p| SparseRow::from_dense(&p.x)).collect();
    let labels = points.iter().map(|p| p.y.clone()).collect();
    Dataset::new(s, d, rows, labels)
}

/// Mean over points of `max_ŷ E_{y|x}[F_β(y, ŷ)]`, attained by decoding the true `q`.
pub fn bayes_f_accuracy<'a>(qs: impl IntoIterator<Item = &'a StatVec>, beta: BetaParam) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for q in qs {
        let yhat = decode_fast(&DecodeInput::new(q.clone(), beta)?);
        total += expected_fbeta(q, &yhat, beta)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbeta::fbeta;

    #[test]
    fn default_shapes() {
        let dist = build_distribution(1, DEFAULT_S, DEFAULT_D).unwrap();
        assert_eq!(dist.w().shape(), (37, 100));
        assert_eq!(dist.w_pinv().shape(), (100, 37));
        assert_eq!(dist.alpha().len(), 64);
        assert!(dist.alpha().iter().all(|&a| (0.1..=1.0).contains(&a)));
        assert!(dist.w().iter().all(|&v| (0.0..1.0).contains(&v)));
        let resid = (dist.w() * dist.w_pinv() - DMatrix::<f64>::identity(37, 37)).amax();
        assert!(resid <= 1e-8);
    }

    #[test]
    fn rank_precondition() {
        assert!(matches!(build_distribution(1, 3, 5), Err(Error::InvalidArgument(_))));
        assert!(build_distribution(1, 3, 10).is_ok());
    }

    #[test]
    fn pseudo_inverse_rejects_rank_deficiency() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(right_pseudo_inverse(&w).is_err());
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let p = right_pseudo_inverse(&w).unwrap();
        assert!((w * p - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn same_seed_same_distribution() {
        let a = build_distribution(9, 2, 8).unwrap();
        let b = build_distribution(9, 2, 8).unwrap();
        assert_eq!(a.w(), b.w());
        assert_eq!(a.alpha(), b.alpha());
        assert_eq!(a.sample_point(17), b.sample_point(17));
        assert_ne!(a.sample_point(17), a.sample_point(18));
        let c = build_distribution(10, 2, 8).unwrap();
        assert_ne!(a.w(), c.w());
    }

    #[test]
    fn sampling_is_order_independent() {
        let dist = build_distribution(3, 2, 6).unwrap();
        let batch = dist.sample_range(5, 10);
        for (i, p) in batch.iter().enumerate() {
            assert_eq!(*p, dist.sample_point(5 + i as u64));
        }
    }

    #[test]
    fn points_satisfy_q_identities() {
        let dist = build_distribution(4, DEFAULT_S, DEFAULT_D).unwrap();
        let mut worst: f64 = 0.0;
        for pt in dist.sample_range(0, 1000) {
            assert!((pt.q.total_mass() - 1.0).abs() <= 1e-10);
            assert!(pt.q.entries().iter().all(|&v| v > 0.0 && v < 1.0));
            let back = dist.q_of(&pt.x).unwrap();
            for (a, b) in back.entries().iter().zip(pt.q.entries()) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-6, "max deviation {worst}");
    }

    #[test]
    fn adversarial_preset_alpha() {
        let dist = build_with_preset(1, 3, 10, Preset::BrAdversarial).unwrap();
        for (m, &a) in dist.alpha().iter().enumerate() {
            assert_eq!(a, if (m as u64).count_ones() == 1 { 2.0 } else { 0.1 });
        }
    }

    #[test]
    fn bayes_examples() {
        let beta = BetaParam::default();
        let y = LabelVec::from_active(3, &[1]).unwrap();
        let q = crate::fbeta::a_vec(&y);
        assert_eq!(bayes_f_accuracy([&q], beta).unwrap(), 1.0);

        let q = StatVec::expected_a(2, &[0.25; 4]).unwrap();
        let v = bayes_f_accuracy([&q], beta).unwrap();
        assert!((v - 7.0 / 12.0).abs() < 1e-15);
        let best = (0..4u64)
            .map(|m| {
                let yhat = LabelVec::from_mask(2, m);
                (0..4u64).map(|t| 0.25 * fbeta(&LabelVec::from_mask(2, t), &yhat, beta).unwrap()).sum::<f64>()
            })
            .fold(f64::MIN, f64::max);
        assert!((v - best).abs() < 1e-15);
    }

    #[test]
    fn bayes_dominates_fixed_classifiers() {
        let dist = build_distribution(6, 2, 6).unwrap();
        let pts = dist.sample_range(0, 200);
        let beta = BetaParam::default();
        let bayes = bayes_f_accuracy(pts.iter().map(|p| &p.q), beta).unwrap();
        for m in 0..4 {
            let yhat = LabelVec::from_mask(2, m);
            let fixed: f64 =
                pts.iter().map(|p| expected_fbeta(&p.q, &yhat, beta).unwrap()).sum::<f64>() / pts.len() as f64;
            assert!(bayes >= fixed);
        }
    }

    #[test]
    fn label_frequencies_match_p() {
        // the label draw consumes one uniform after the Dirichlet draw; repeat it
        // against a fixed p
        let dist = build_distribution(8, 2, 6).unwrap();
        let p = dist.sample_point(0).p;
        let n = 1_000_000;
        let mut counts = vec![0usize; p.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut mask = p.len() - 1;
            for (m, &pm) in p.iter().enumerate() {
                acc += pm;
                if u < acc {
                    mask = m;
                    break;
                }
            }
            counts[mask] += 1;
        }
        for (c, &pm) in counts.iter().zip(&p) {
            let se = (pm * (1.0 - pm) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - pm).abs() <= 3.0 * se + 1e-12);
        }
    }

    #[test]
    fn dirichlet_means_match_alpha() {
        let dist = build_distribution(2, 2, 6).unwrap();
        let total: f64 = dist.alpha().iter().sum();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = dist.alpha().len();
        let mut sum = vec![0.0; k];
        let mut sumsq = vec![0.0; k];
        for _ in 0..n {
            for (i, v) in dist.sample_dirichlet(&mut rng).into_iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        for i in 0..k {
            let mean = sum[i] / n as f64;
            let var = sumsq[i] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - dist.alpha()[i] / total).abs() <= 3.0 * se, "component {i}");
        }
    }
}
