//! Surrogate risk minimisation over linear score functions.
//!
//! Each active coordinate of the surrogate is an independent regularised
//! binary logistic regression with targets `a_i(y_n)`; the subproblems run in
//! parallel and are solved with a deterministic full-batch L-BFGS.

pub mod lbfgs;
pub mod logreg;

use rayon::prelude::*;

use crate::data::{Dataset, SparseRow};
use crate::decode::{decode_fast, DecodeInput};
use crate::error::{Error, Result};
use crate::fbeta::{BetaParam, LabelVec, StatIndex, StatVec};
use crate::loss::sigmoid;
use crate::surrogate::{binary_targets, SurrogateConfig};

pub use lbfgs::SolveReport;
pub use logreg::{train_binary, train_multinomial, MultinomialModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// L2 coefficient on the mean loss; never applied to the bias.
    pub reg_lambda: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { reg_lambda: 1e-4, max_iters: 500, grad_tol: 1e-6, bias: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("reg must be nonnegative, got {}", self.reg_lambda)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Final state of one subproblem's solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SubproblemReport {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&SolveReport> for SubproblemReport {
    fn from(r: &SolveReport) -> Self {
        Self { objective: r.objective, grad_norm: r.grad_norm, iterations: r.iterations, converged: r.converged }
    }
}

/// `f: R^d → R^{s²+1}`, one affine score per active statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub(crate) config: SurrogateConfig,
    pub(crate) d: usize,
    pub(crate) bias: bool,
    pub(crate) reg: f64,
    pub(crate) weights: Vec<Vec<f64>>,
    /// Empty for models loaded from disk.
    pub(crate) reports: Vec<SubproblemReport>,
}

impl LinearModel {
    pub fn from_parts(config: SurrogateConfig, d: usize, bias: bool, reg: f64, weights: Vec<Vec<f64>>) -> Result<Self> {
        Error::check_dim(config.active().len(), weights.len())?;
        let len = d + usize::from(bias);
        for w in &weights {
            Error::check_dim(len, w.len())?;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model weight".into()));
            }
        }
        Ok(Self { config, d, bias, reg, weights, reports: Vec::new() })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn s(&self) -> usize {
        self.config.s()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> BetaParam {
        self.config.beta()
    }

    pub fn bias(&self) -> bool {
        self.bias
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// One vector per active statistic, in [`SurrogateConfig::active`] order.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn reports(&self) -> &[SubproblemReport] {
        &self.reports
    }

    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }
}

pub(crate) fn check_row(x: &SparseRow, d: usize) -> Result<()> {
    if x.min_dim() > d {
        return Err(Error::OutOfRange(format!("feature index {} with d = {d}", x.min_dim())));
    }
    Ok(())
}

fn train_index(data: &Dataset, cfg: &TrainConfig, idx: StatIndex) -> Result<(Vec<f64>, SolveReport)> {
    train_binary(data.features(), &binary_targets(data, idx), data.d(), cfg)
}

/// Fits every active statistic of `scfg` on `data`.
pub fn train_surrogate(data: &Dataset, cfg: &TrainConfig, scfg: &SurrogateConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Error::check_dim(scfg.s(), data.s())?;
    let fits: Vec<_> = scfg.active().par_iter().map(|&idx| train_index(data, cfg, idx)).collect::<Result<_>>()?;
    let (weights, reports) = fits.into_iter().map(|(w, r)| (w, SubproblemReport::from(&r))).unzip();
    Ok(LinearModel { config: scfg.clone(), d: data.d(), bias: cfg.bias, reg: cfg.reg_lambda, weights, reports })
}

/// Scores `f(x)`; inactive coordinates are `−∞` so that `σ` maps them to 0.
pub fn predict_scores(model: &LinearModel, x: &SparseRow) -> Result<StatVec> {
    check_row(x, model.d)?;
    let s = model.s();
    let mut u = StatVec::from_entries(s, vec![f64::NEG_INFINITY; StatIndex::dim(s)])?;
    for (&idx, w) in model.config.active().iter().zip(&model.weights) {
        u.set(idx, x.dot(w, model.d, model.bias));
    }
    Ok(u)
}

/// `γ⁻¹(f(x))` with inactive coordinates exactly 0.
pub fn predict_probabilities(model: &LinearModel, x: &SparseRow) -> Result<StatVec> {
    let mut q = predict_scores(model, x)?;
    for v in q.entries_mut() {
        *v = if *v == f64::NEG_INFINITY { 0.0 } else { sigmoid(*v) };
    }
    Ok(q)
}

/// `decode ∘ f`.
pub fn predict(model: &LinearModel, x: &SparseRow) -> Result<LabelVec> {
    let q = predict_probabilities(model, x)?;
    Ok(decode_fast(&DecodeInput::new(q, model.beta())?))
}
