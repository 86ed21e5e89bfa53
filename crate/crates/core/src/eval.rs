//! Instance-averaged F_β evaluation, regret estimates on synthetic data, the
//! regret-transfer bound and a k-fold cross-validation driver.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, SparseRow};
use crate::error::{Error, Result};
use crate::fbeta::{expected_fbeta, fbeta, precision, recall, BetaParam, LabelVec, StatVec};
use crate::loss::{pointwise_binary_regret, Logistic};
use crate::pipeline::{train, Algorithm, TrainOptions};
use crate::trainer::{predict_scores, LinearModel};

/// Strong-properness constant of the logistic loss.
pub const LOGISTIC_LAMBDA: f64 = 4.0;
const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub mean_fbeta: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub m_test: usize,
    pub f_regret: Option<f64>,
    pub psi_regret: Option<f64>,
    pub bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "m_test,mean_fbeta,mean_precision,mean_recall,f_regret,psi_regret,bound,bound_satisfied";

    /// `key=value` lines; absent optional fields are omitted.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "m_test={}", self.m_test);
        let _ = writeln!(out, "mean_fbeta={}", self.mean_fbeta);
        let _ = writeln!(out, "mean_precision={}", self.mean_precision);
        let _ = writeln!(out, "mean_recall={}", self.mean_recall);
        for (k, v) in [("f_regret", self.f_regret), ("psi_regret", self.psi_regret), ("bound", self.bound)] {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        if let Some(b) = self.bound_satisfied {
            let _ = writeln!(out, "bound_satisfied={b}");
        }
        out
    }

    /// Row matching [`Self::CSV_HEADER`]; absent fields are empty.
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.m_test,
            self.mean_fbeta,
            self.mean_precision,
            self.mean_recall,
            opt(self.f_regret),
            opt(self.psi_regret),
            opt(self.bound),
            self.bound_satisfied.map(|b| b.to_string()).unwrap_or_default()
        )
    }
}

pub fn evaluate(pred: &[LabelVec], truth: &[LabelVec], beta: BetaParam) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} instances",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per: Vec<(f64, f64, f64)> = pred
        .par_iter()
        .zip(truth)
        .map(|(yhat, y)| Ok((fbeta(y, yhat, beta)?, precision(y, yhat)?, recall(y, yhat)?)))
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let (f, p, r) = per.iter().fold((0.0, 0.0, 0.0), |a, v| (a.0 + v.0, a.1 + v.1, a.2 + v.2));
    Ok(EvalReport { mean_fbeta: f / n, mean_precision: p / n, mean_recall: r / n, m_test: pred.len(), ..Default::default() })
}

/// Mean of `E_{y|x}[F_β(y, ŷ(x))]` over points with known statistics.
pub fn expected_accuracy(pred: &[LabelVec], qs: &[StatVec], beta: BetaParam) -> Result<f64> {
    Error::check_dim(qs.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = pred
        .par_iter()
        .zip(qs)
        .map(|(yhat, q)| expected_fbeta(q, yhat, beta))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(total / pred.len() as f64)
}

/// Mean over points of the pointwise logistic regret summed over the model's
/// active statistics.
pub fn psi_regret_estimate(model: &LinearModel, rows: &[SparseRow], qs: &[Option<StatVec>]) -> Result<f64> {
    Error::check_dim(rows.len(), qs.len())?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per: Vec<f64> = rows
        .par_iter()
        .zip(qs)
        .enumerate()
        .map(|(i, (x, q))| {
            let q = q.as_ref().ok_or_else(|| Error::InvalidArgument(format!("point {i} has no true statistics")))?;
            Error::check_dim(model.s(), q.s())?;
            let u = predict_scores(model, x)?;
            model
                .config()
                .active()
                .iter()
                .map(|&idx| pointwise_binary_regret(q.get(idx), u.get(idx), &Logistic))
                .sum::<Result<f64>>()
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / rows.len() as f64)
}

/// `((1+β²)/β)·√(2(ln s + 1)/λ · ψ-regret)` and whether `f_regret` respects it.
pub fn check_regret_bound(f_regret: f64, psi_regret: f64, s: usize, beta: BetaParam, lambda: f64) -> Result<(f64, bool)> {
    if !(psi_regret >= 0.0 && psi_regret.is_finite()) {
        return Err(Error::OutOfRange(format!("psi regret must be finite and nonnegative, got {psi_regret}")));
    }
    if s == 0 || !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("need s >= 1 and lambda > 0, got s = {s}, lambda = {lambda}")));
    }
    let b = beta.beta();
    let bound = (1.0 + b * b) / b * (2.0 * ((s as f64).ln() + 1.0) / lambda * psi_regret).sqrt();
    Ok((bound, f_regret <= bound + BOUND_SLACK))
}

/// Mean absolute deviation of estimated from true statistics over all entries.
pub fn q_mae(qhat: &[StatVec], qs: &[StatVec]) -> Result<f64> {
    Error::check_dim(qs.len(), qhat.len())?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (a, b) in qhat.iter().zip(qs) {
        Error::check_dim(b.entries().len(), a.entries().len())?;
        total += a.entries().iter().zip(b.entries()).map(|(x, y)| (x - y).abs()).sum::<f64>();
        n += a.entries().len();
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(total / n as f64)
}

/// `10⁻⁴, 10⁻³, …, 10³`.
pub fn default_grid() -> Vec<f64> {
    (-4..=3).map(|e| 10f64.powi(e)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvCell {
    pub reg: f64,
    pub fold: usize,
    pub mean_fbeta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub chosen: f64,
    /// Mean validation F_β per grid value, in grid order.
    pub grid_means: Vec<f64>,
    /// One cell per (grid value, fold), grid-major.
    pub table: Vec<CvCell>,
}

/// Contiguous folds over a seeded permutation of `0..n`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::InvalidArgument(format!("{n} instances cannot fill {folds} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        out.push(perm[f * n / folds..(f + 1) * n / folds].to_vec());
    }
    Ok(out)
}

/// Picks the regularisation value with the best mean validation F_β; ties go
/// to the smaller value.
pub fn cross_validate(
    data: &Dataset,
    algorithm: Algorithm,
    grid: &[f64],
    folds: usize,
    opts: &TrainOptions,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty regularisation grid".into()));
    }
    let parts = fold_assignment(data.len(), folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..folds).map(move |f| (g, f))).collect();
    let table: Vec<CvCell> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let train_rows: Vec<usize> =
                parts.iter().enumerate().filter(|&(i, _)| i != f).flat_map(|(_, p)| p.iter().copied()).collect();
            let fit = data.subset(&train_rows);
            let held = data.subset(&parts[f]);
            let mut o = *opts;
            o.train.reg_lambda = grid[g];
            let model = train(algorithm, &fit, &o)?;
            let pred = model.predict_all(held.features())?;
            let rep = evaluate(&pred, held.labels(), opts.beta)?;
            Ok(CvCell { reg: grid[g], fold: f, mean_fbeta: rep.mean_fbeta })
        })
        .collect::<Result<_>>()?;
    let grid_means: Vec<f64> = (0..grid.len())
        .map(|g| table[g * folds..(g + 1) * folds].iter().map(|c| c.mean_fbeta).sum::<f64>() / folds as f64)
        .collect();
    let mut best = 0;
    for g in 1..grid.len() {
        let better = grid_means[g] > grid_means[best];
        let tie_smaller = grid_means[g] == grid_means[best] && grid[g] < grid[best];
        if better || tie_smaller {
            best = g;
        }
    }
    Ok(CvResult { chosen: grid[best], grid_means, table })
}
