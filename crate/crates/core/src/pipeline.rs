//! One entry point for the three learners so that evaluation, cross-validation
//! and persistence can treat them uniformly.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{br_predict, efp_predict, efp_q_hat, train_br, train_efp, BrModel, EfpModel};
use crate::data::{Dataset, SparseRow};
use crate::error::{Error, Result};
use crate::fbeta::{BetaParam, LabelVec, StatVec};
use crate::surrogate::SurrogateConfig;
use crate::trainer::{self, train_surrogate, LinearModel, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Surrogate,
    Efp,
    Br,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Surrogate, Algorithm::Efp, Algorithm::Br];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Surrogate => "surrogate",
            Algorithm::Efp => "efp",
            Algorithm::Br => "br",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}' (expected surrogate, efp or br)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub beta: BetaParam,
    pub train: TrainConfig,
    /// Surrogate only: estimate all `s² + 1` statistics instead of the observed counts.
    pub full_k: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { beta: BetaParam::default(), train: TrainConfig::default(), full_k: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Surrogate(LinearModel),
    Efp { model: EfpModel, beta: BetaParam },
    Br(BrModel),
}

impl TrainedModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            TrainedModel::Surrogate(_) => Algorithm::Surrogate,
            TrainedModel::Efp { .. } => Algorithm::Efp,
            TrainedModel::Br(_) => Algorithm::Br,
        }
    }

    pub fn s(&self) -> usize {
        match self {
            TrainedModel::Surrogate(m) => m.s(),
            TrainedModel::Efp { model, .. } => model.s(),
            TrainedModel::Br(m) => m.s(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            TrainedModel::Surrogate(m) => m.d(),
            TrainedModel::Efp { model, .. } => model.d(),
            TrainedModel::Br(m) => m.d(),
        }
    }

    /// The decoding β; BR thresholds marginals and ignores it.
    pub fn beta(&self) -> Option<BetaParam> {
        match self {
            TrainedModel::Surrogate(m) => Some(m.beta()),
            TrainedModel::Efp { beta, .. } => Some(*beta),
            TrainedModel::Br(_) => None,
        }
    }

    pub fn all_converged(&self) -> bool {
        let reports = match self {
            TrainedModel::Surrogate(m) => m.reports(),
            TrainedModel::Efp { model, .. } => model.reports(),
            TrainedModel::Br(m) => m.reports(),
        };
        reports.iter().all(|r| r.converged)
    }

    pub fn predict(&self, x: &SparseRow) -> Result<LabelVec> {
        match self {
            TrainedModel::Surrogate(m) => trainer::predict(m, x),
            TrainedModel::Efp { model, beta } => efp_predict(model, x, *beta),
            TrainedModel::Br(m) => br_predict(m, x),
        }
    }

    pub fn predict_all(&self, rows: &[SparseRow]) -> Result<Vec<LabelVec>> {
        rows.par_iter().map(|x| self.predict(x)).collect()
    }

    /// Estimated statistics, for the learners that produce them.
    pub fn q_hat(&self, x: &SparseRow) -> Option<Result<StatVec>> {
        match self {
            TrainedModel::Surrogate(m) => Some(trainer::predict_probabilities(m, x)),
            TrainedModel::Efp { model, .. } => Some(efp_q_hat(model, x)),
            TrainedModel::Br(_) => None,
        }
    }
}

pub fn train(algorithm: Algorithm, data: &Dataset, opts: &TrainOptions) -> Result<TrainedModel> {
    Ok(match algorithm {
        Algorithm::Surrogate => {
            let scfg = SurrogateConfig::from_dataset(data, opts.beta, opts.full_k)?;
            TrainedModel::Surrogate(train_surrogate(data, &opts.train, &scfg)?)
        }
        Algorithm::Efp => TrainedModel::Efp { model: train_efp(data, &opts.train)?, beta: opts.beta },
        Algorithm::Br => TrainedModel::Br(train_br(data, &opts.train)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let rows = vec![
            SparseRow::new(vec![0], vec![1.0]).unwrap(),
            SparseRow::new(vec![1], vec![1.0]).unwrap(),
            SparseRow::new(vec![0, 1], vec![1.0, 1.0]).unwrap(),
            SparseRow::new(vec![], vec![]).unwrap(),
        ];
        let labels = vec![
            LabelVec::from_active(2, &[0]).unwrap(),
            LabelVec::from_active(2, &[1]).unwrap(),
            LabelVec::ones(2),
            LabelVec::zeros(2),
        ];
        Dataset::new(2, 2, rows, labels).unwrap()
    }

    #[test]
    fn tags_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.tag().parse::<Algorithm>().unwrap(), a);
        }
        assert!("svm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn every_learner_trains_and_predicts() {
        let data = toy();
        let opts = TrainOptions { train: TrainConfig { reg_lambda: 1e-3, ..Default::default() }, ..Default::default() };
        for a in Algorithm::ALL {
            let m = train(a, &data, &opts).unwrap();
            assert_eq!(m.algorithm(), a);
            assert_eq!((m.s(), m.d()), (2, 2));
            let preds = m.predict_all(data.features()).unwrap();
            assert_eq!(preds, data.labels());
            assert_eq!(m.q_hat(&data.features()[0]).is_some(), a != Algorithm::Br);
        }
    }

    #[test]
    fn full_k_switch() {
        let data = toy();
        let mut opts = TrainOptions::default();
        let TrainedModel::Surrogate(m) = train(Algorithm::Surrogate, &data, &opts).unwrap() else { unreachable!() };
        assert_eq!(m.config().active().len(), 5);
        opts.full_k = true;
        let TrainedModel::Surrogate(m) = train(Algorithm::Surrogate, &data, &opts).unwrap() else { unreachable!() };
        assert_eq!(m.config().active().len(), 5);
        let data = data.subset(&[0, 1, 3]);
        opts.full_k = false;
        let TrainedModel::Surrogate(m) = train(Algorithm::Surrogate, &data, &opts).unwrap() else { unreachable!() };
        assert_eq!(m.config().active().len(), 3);
    }
}
