//! Reference learners sharing the trainer and decoder: the exact F-measure
//! plug-in (EFP) and binary relevance (BR).
//!
//! EFP estimates the same statistics as the surrogate, but through one binary
//! problem for `P(‖y‖₁ = 0 | x)` and one softmax problem per tag `j` whose
//! classes are "`y_j = 0`" and "`y_j = 1` and `‖y‖₁ = k`" for each observed
//! count `k`.

use rayon::prelude::*;

use crate::data::{Dataset, SparseRow};
use crate::decode::{decode_fast, DecodeInput};
use crate::error::{Error, Result};
use crate::fbeta::{BetaParam, LabelVec, StatIndex, StatVec};
use crate::loss::sigmoid;
use crate::trainer::{check_row, train_binary, train_multinomial, MultinomialModel, SubproblemReport, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct EfpModel {
    pub(crate) s: usize,
    pub(crate) d: usize,
    pub(crate) bias: bool,
    pub(crate) reg: f64,
    /// Observed nonzero counts; softmax class `i ≥ 1` stands for `counts[i − 1]`.
    pub(crate) counts: Vec<usize>,
    pub(crate) zero_block: Vec<f64>,
    pub(crate) label_blocks: Vec<MultinomialModel>,
    pub(crate) reports: Vec<SubproblemReport>,
}

impl EfpModel {
    pub fn from_parts(
        s: usize,
        d: usize,
        bias: bool,
        reg: f64,
        counts: Vec<usize>,
        zero_block: Vec<f64>,
        label_blocks: Vec<MultinomialModel>,
    ) -> Result<Self> {
        let len = d + usize::from(bias);
        Error::check_dim(len, zero_block.len())?;
        Error::check_dim(s, label_blocks.len())?;
        if counts.windows(2).any(|w| w[0] >= w[1]) || counts.iter().any(|&k| k == 0 || k > s) {
            return Err(Error::InvalidArgument(format!("bad count set {counts:?} for s = {s}")));
        }
        for block in &label_blocks {
            Error::check_dim(counts.len() + 1, block.n_classes())?;
            for w in &block.weights {
                Error::check_dim(len, w.len())?;
            }
        }
        Ok(Self { s, d, bias, reg, counts, zero_block, label_blocks, reports: Vec::new() })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bias(&self) -> bool {
        self.bias
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn zero_block(&self) -> &[f64] {
        &self.zero_block
    }

    pub fn label_blocks(&self) -> &[MultinomialModel] {
        &self.label_blocks
    }

    pub fn reports(&self) -> &[SubproblemReport] {
        &self.reports
    }

    /// Per-tag class probabilities `[P(y_j = 0), P(y_j = 1, ‖y‖₁ = k) for k in counts]`.
    pub fn label_probabilities(&self, x: &SparseRow) -> Result<Vec<Vec<f64>>> {
        check_row(x, self.d)?;
        Ok(self.label_blocks.iter().map(|b| b.predict_proba(x)).collect())
    }
}

fn label_class(y: &LabelVec, j: usize, counts: &[usize]) -> usize {
    if y.get(j) {
        1 + counts.binary_search(&y.count()).expect("count observed in training")
    } else {
        0
    }
}

pub fn train_efp(data: &Dataset, cfg: &TrainConfig) -> Result<EfpModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (s, d) = (data.s(), data.d());
    let counts: Vec<usize> = data.nonzero_counts().into_iter().collect();
    let rows = data.features();

    let empty: Vec<bool> = data.labels().iter().map(LabelVec::is_empty).collect();
    let (zero_block, zero_report) = train_binary(rows, &empty, d, cfg)?;

    let len = d + usize::from(cfg.bias);
    let blocks: Vec<(MultinomialModel, Option<SubproblemReport>)> = (0..s)
        .into_par_iter()
        .map(|j| {
            if counts.is_empty() {
                // nothing is ever active: a single certain class
                return Ok((MultinomialModel { d, bias: cfg.bias, weights: vec![vec![0.0; len]] }, None));
            }
            let classes: Vec<usize> = data.labels().iter().map(|y| label_class(y, j, &counts)).collect();
            let (m, r) = train_multinomial(rows, &classes, counts.len() + 1, d, cfg)?;
            Ok((m, Some(SubproblemReport::from(&r))))
        })
        .collect::<Result<_>>()?;

    let mut reports = vec![SubproblemReport::from(&zero_report)];
    let mut label_blocks = Vec::with_capacity(s);
    for (m, r) in blocks {
        label_blocks.push(m);
        reports.extend(r);
    }
    Ok(EfpModel { s, d, bias: cfg.bias, reg: cfg.reg_lambda, counts, zero_block, label_blocks, reports })
}

/// Assembles `q̂`: `q̂₀` from the binary block, `q̂_{jk}` from tag `j`'s softmax,
/// and 0 for counts never observed.
pub fn efp_q_hat(model: &EfpModel, x: &SparseRow) -> Result<StatVec> {
    check_row(x, model.d)?;
    let mut q = StatVec::zeros(model.s);
    q.set(StatIndex::Zero, sigmoid(x.dot(&model.zero_block, model.d, model.bias)));
    for (j, block) in model.label_blocks.iter().enumerate() {
        let p = block.predict_proba(x);
        for (i, &k) in model.counts.iter().enumerate() {
            q.set(StatIndex::pair(j, k), p[i + 1]);
        }
    }
    Ok(q)
}

pub fn efp_predict(model: &EfpModel, x: &SparseRow, beta: BetaParam) -> Result<LabelVec> {
    let q = efp_q_hat(model, x)?;
    Ok(decode_fast(&DecodeInput::new(q, beta)?))
}

/// Binary relevance: one logistic model per tag.
#[derive(Clone, Debug, PartialEq)]
pub struct BrModel {
    pub(crate) d: usize,
    pub(crate) bias: bool,
    pub(crate) reg: f64,
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) reports: Vec<SubproblemReport>,
}

impl BrModel {
    pub fn from_parts(d: usize, bias: bool, reg: f64, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("binary relevance needs at least one tag".into()));
        }
        for w in &weights {
            Error::check_dim(d + usize::from(bias), w.len())?;
        }
        Ok(Self { d, bias, reg, weights, reports: Vec::new() })
    }

    pub fn s(&self) -> usize {
        self.weights.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bias(&self) -> bool {
        self.bias
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn reports(&self) -> &[SubproblemReport] {
        &self.reports
    }
}

pub fn train_br(data: &Dataset, cfg: &TrainConfig) -> Result<BrModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let fits: Vec<_> = (0..data.s())
        .into_par_iter()
        .map(|j| {
            let targets: Vec<bool> = data.labels().iter().map(|y| y.get(j)).collect();
            train_binary(data.features(), &targets, data.d(), cfg)
        })
        .collect::<Result<_>>()?;
    let (weights, reports) = fits.into_iter().map(|(w, r)| (w, SubproblemReport::from(&r))).unzip();
    Ok(BrModel { d: data.d(), bias: cfg.bias, reg: cfg.reg_lambda, weights, reports })
}

/// Tag `j` is predicted iff `σ(w_j·x̃) ≥ 0.5`.
pub fn br_predict(model: &BrModel, x: &SparseRow) -> Result<LabelVec> {
    check_row(x, model.d)?;
    let bits = model.weights.iter().map(|w| sigmoid(x.dot(w, model.d, model.bias)) >= 0.5).collect();
    LabelVec::new(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, m: usize, d: usize, s: usize, label: impl Fn(&mut ChaCha8Rng, &[f64]) -> Vec<bool>) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..m {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            labels.push(LabelVec::new(label(&mut rng, &x)).unwrap());
            rows.push(SparseRow::from_dense(&x));
        }
        Dataset::new(s, d, rows, labels).unwrap()
    }

    #[test]
    fn efp_inactive_tag_predicts_class_zero() {
        let data = random_data(1, 80, 3, 3, |rng, _| vec![rng.random(), false, rng.random()]);
        let model = train_efp(&data, &TrainConfig { reg_lambda: 1e-3, ..Default::default() }).unwrap();
        for x in data.features() {
            let p = model.label_probabilities(x).unwrap();
            assert!(p[1][0] >= 0.98, "{:?}", p[1]);
            for block in &p {
                assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn efp_q_hat_is_valid_and_sparse() {
        let data = random_data(2, 100, 2, 4, |rng, x| {
            let on = usize::from(x[0] > 0.0) + 1;
            let mut b = vec![false; 4];
            for j in 0..on {
                b[(j + rng.random_range(0..4)) % 4] = true;
            }
            b
        });
        let model = train_efp(&data, &TrainConfig::default()).unwrap();
        assert_eq!(model.counts(), &data.nonzero_counts().into_iter().collect::<Vec<_>>()[..]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = SparseRow::from_dense(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let q = efp_q_hat(&model, &x).unwrap();
            assert!(q.entries().iter().all(|&v| (0.0..=1.0).contains(&v)));
            for j in 0..4 {
                for k in 1..=4 {
                    if !model.counts().contains(&k) {
                        assert_eq!(q.get(StatIndex::pair(j, k)), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn efp_point_mass_recovers_label() {
        let x = SparseRow::from_dense(&[0.5, -1.0, 2.0]);
        let y = LabelVec::from_active(4, &[0, 2]).unwrap();
        let data = Dataset::new(4, 3, vec![x.clone(); 20], vec![y.clone(); 20]).unwrap();
        let model = train_efp(&data, &TrainConfig { reg_lambda: 1e-4, ..Default::default() }).unwrap();
        assert_eq!(efp_predict(&model, &x, BetaParam::default()).unwrap(), y);
    }

    #[test]
    fn efp_and_surrogate_share_decoder() {
        let data = random_data(4, 60, 2, 3, |rng, _| (0..3).map(|_| rng.random()).collect());
        let model = train_efp(&data, &TrainConfig::default()).unwrap();
        let x = &data.features()[0];
        let q = efp_q_hat(&model, x).unwrap();
        let direct = decode_fast(&DecodeInput::new(q, BetaParam::default()).unwrap());
        assert_eq!(efp_predict(&model, x, BetaParam::default()).unwrap(), direct);
    }

    #[test]
    fn efp_with_no_active_labels() {
        let data = random_data(5, 20, 2, 2, |_, _| vec![false, false]);
        let model = train_efp(&data, &TrainConfig::default()).unwrap();
        assert!(model.counts().is_empty());
        let pred = efp_predict(&model, &data.features()[0], BetaParam::default()).unwrap();
        assert_eq!(pred, LabelVec::zeros(2));
    }

    #[test]
    fn br_all_active() {
        let data = random_data(6, 40, 2, 3, |_, _| vec![true; 3]);
        let model = train_br(&data, &TrainConfig::default()).unwrap();
        for x in data.features() {
            assert_eq!(br_predict(&model, x).unwrap(), LabelVec::ones(3));
        }
    }

    #[test]
    fn br_threshold_is_inclusive() {
        let model = BrModel::from_parts(1, true, 0.0, vec![vec![1.0, 0.0], vec![1.0, -1e-9]]).unwrap();
        let pred = br_predict(&model, &SparseRow::from_dense(&[0.0])).unwrap();
        assert_eq!(pred.bits(), &[true, false]);
        assert!(br_predict(&model, &SparseRow::from_dense(&[0.0, 1.0])).is_err());
    }
}
