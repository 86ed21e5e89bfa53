//! Regularised binary and multinomial logistic regression over sparse rows.
//!
//! Both objectives are the mean loss plus `λ/2·‖w‖²` on the feature weights;
//! the bias (stored last, when enabled) is not penalised.

use crate::data::SparseRow;
use crate::error::{Error, Result};
use crate::loss::{sigmoid, softplus_neg};

use super::lbfgs::{self, LbfgsParams, Objective, SolveReport};
use super::TrainConfig;

pub(crate) struct BinaryLogistic<'a> {
    pub rows: &'a [SparseRow],
    pub targets: &'a [bool],
    pub d: usize,
    pub bias: bool,
    pub reg: f64,
}

impl Objective for BinaryLogistic<'_> {
    fn dim(&self) -> usize {
        self.d + usize::from(self.bias)
    }

    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (row, &t) in self.rows.iter().zip(self.targets) {
            let z = row.dot(w, self.d, self.bias);
            let (margin, target) = if t { (z, 1.0) } else { (-z, 0.0) };
            total += softplus_neg(margin);
            let r = sigmoid(z) - target;
            if r != 0.0 {
                for (i, v) in row.iter() {
                    grad[i] += r * v;
                }
                if self.bias {
                    grad[self.d] += r;
                }
            }
        }
        let inv_m = 1.0 / self.rows.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv_m);
        let mut penalty = 0.0;
        for (g, &wi) in grad[..self.d].iter_mut().zip(&w[..self.d]) {
            *g += self.reg * wi;
            penalty += wi * wi;
        }
        total * inv_m + 0.5 * self.reg * penalty
    }
}

pub(crate) struct Multinomial<'a> {
    pub rows: &'a [SparseRow],
    pub classes: &'a [usize],
    pub n_classes: usize,
    pub d: usize,
    pub bias: bool,
    pub reg: f64,
}

impl Multinomial<'_> {
    fn stride(&self) -> usize {
        self.d + usize::from(self.bias)
    }
}

/// Softmax in place; returns `log Σ exp(z)`.
fn softmax(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

impl Objective for Multinomial<'_> {
    fn dim(&self) -> usize {
        self.n_classes * self.stride()
    }

    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let stride = self.stride();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut z = vec![0.0; self.n_classes];
        let mut total = 0.0;
        for (row, &c) in self.rows.iter().zip(self.classes) {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = row.dot(&w[k * stride..(k + 1) * stride], self.d, self.bias);
            }
            let zc = z[c];
            let lse = softmax(&mut z);
            total += lse - zc;
            for (k, &pk) in z.iter().enumerate() {
                let r = pk - f64::from(u8::from(k == c));
                let gk = &mut grad[k * stride..(k + 1) * stride];
                for (i, v) in row.iter() {
                    gk[i] += r * v;
                }
                if self.bias {
                    gk[self.d] += r;
                }
            }
        }
        let inv_m = 1.0 / self.rows.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv_m);
        let mut penalty = 0.0;
        for k in 0..self.n_classes {
            let base = k * stride;
            for i in base..base + self.d {
                grad[i] += self.reg * w[i];
                penalty += w[i] * w[i];
            }
        }
        total * inv_m + 0.5 * self.reg * penalty
    }
}

fn params(cfg: &TrainConfig) -> LbfgsParams {
    LbfgsParams { max_iters: cfg.max_iters, grad_tol: cfg.grad_tol, ..Default::default() }
}

/// One regularised binary logistic fit; returns weights of length `d (+1)`.
pub fn train_binary(rows: &[SparseRow], targets: &[bool], d: usize, cfg: &TrainConfig) -> Result<(Vec<f64>, SolveReport)> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Error::check_dim(rows.len(), targets.len())?;
    let obj = BinaryLogistic { rows, targets, d, bias: cfg.bias, reg: cfg.reg_lambda };
    Ok(lbfgs::minimize(&obj, vec![0.0; obj.dim()], &params(cfg)))
}

/// A fitted softmax model: one weight vector per class.
#[derive(Clone, Debug, PartialEq)]
pub struct MultinomialModel {
    pub d: usize,
    pub bias: bool,
    pub weights: Vec<Vec<f64>>,
}

impl MultinomialModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_proba(&self, x: &SparseRow) -> Vec<f64> {
        let mut z: Vec<f64> = self.weights.iter().map(|w| x.dot(w, self.d, self.bias)).collect();
        softmax(&mut z);
        z
    }
}

/// Regularised softmax regression over classes `0..n_classes`.
pub fn train_multinomial(
    rows: &[SparseRow],
    classes: &[usize],
    n_classes: usize,
    d: usize,
    cfg: &TrainConfig,
) -> Result<(MultinomialModel, SolveReport)> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {n_classes}")));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Error::check_dim(rows.len(), classes.len())?;
    if let Some(&c) = classes.iter().find(|&&c| c >= n_classes) {
        return Err(Error::OutOfRange(format!("class {c} with {n_classes} classes")));
    }
    let obj = Multinomial { rows, classes, n_classes, d, bias: cfg.bias, reg: cfg.reg_lambda };
    let (w, report) = lbfgs::minimize(&obj, vec![0.0; obj.dim()], &params(cfg));
    let stride = obj.stride();
    let weights = w.chunks(stride).map(<[f64]>::to_vec).collect();
    Ok((MultinomialModel { d, bias: cfg.bias, weights }, report))
}
