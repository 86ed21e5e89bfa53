//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Fixed constants: memory 10, sufficient-decrease `c₁ = 1e-4`, step halving,
//! at most 60 halvings per iteration. The first step is scaled to unit length;
//! later steps start at 1 along the two-loop direction. Curvature pairs with
//! `sᵀy ≤ 1e-12·‖s‖‖y‖` are dropped. Every accepted step strictly decreases
//! the objective.

use std::collections::VecDeque;

/// A smooth objective with analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Returns `f(w)` and writes `∇f(w)` into `grad`.
    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsParams {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self { max_iters: 500, grad_tol: 1e-6, memory: 10 }
    }
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iterate, starting with `w₀`.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `−H·g` by the two-loop recursion.
fn direction(grad: &[f64], hist: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut alphas = Vec::with_capacity(hist.len());
    for p in hist.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = hist.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in hist.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q
}

pub fn minimize(f: &impl Objective, w0: Vec<f64>, params: &LbfgsParams) -> (Vec<f64>, SolveReport) {
    assert_eq!(w0.len(), f.dim());
    let n = w0.len();
    let mut w = w0;
    let mut g = vec![0.0; n];
    let mut fx = f.eval(&w, &mut g);
    let mut gnorm = norm(&g);
    let mut trace = vec![fx];
    let mut hist: VecDeque<Pair> = VecDeque::with_capacity(params.memory);
    let mut iterations = 0;

    let mut w_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while gnorm > params.grad_tol && iterations < params.max_iters {
        let mut d = direction(&g, &hist);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if hist.is_empty() { 1.0 / norm(&d).max(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for ((wn, wi), di) in w_new.iter_mut().zip(&w).zip(&d) {
                *wn = wi + step * di;
            }
            let f_try = f.eval(&w_new, &mut g_new);
            if f_try.is_finite() && f_try <= fx + ARMIJO_C1 * step * slope && f_try < fx {
                accepted = Some(f_try);
                break;
            }
            step *= 0.5;
        }
        let Some(f_next) = accepted else { break };

        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if hist.len() == params.memory {
                hist.pop_front();
            }
            hist.push_back(Pair { rho: 1.0 / sy, s, y });
        }
        std::mem::swap(&mut w, &mut w_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_next;
        gnorm = norm(&g);
        iterations += 1;
        trace.push(fx);
    }

    let report = SolveReport { objective: fx, grad_norm: gnorm, iterations, converged: gnorm <= params.grad_tol, trace };
    (w, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Σ c_i (w_i − i)²`
    struct Quadratic(Vec<f64>);

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
            let mut f = 0.0;
            for (i, (&c, &wi)) in self.0.iter().zip(w).enumerate() {
                let r = wi - i as f64;
                f += c * r * r;
                grad[i] = 2.0 * c * r;
            }
            f
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
            let (x, y) = (w[0], w[1]);
            grad[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
            grad[1] = 200.0 * (y - x * x);
            (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
        }
    }

    #[test]
    fn solves_ill_conditioned_quadratic() {
        let f = Quadratic((0..20).map(|i| 10f64.powf(i as f64 / 5.0)).collect());
        let (w, rep) = minimize(&f, vec![0.0; 20], &LbfgsParams { grad_tol: 1e-6, max_iters: 2000, memory: 10 });
        assert!(rep.converged, "{rep:?}");
        for (i, wi) in w.iter().enumerate() {
            assert!((wi - i as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn solves_rosenbrock_with_monotone_trace() {
        let (w, rep) = minimize(&Rosenbrock, vec![-1.2, 1.0], &LbfgsParams { grad_tol: 1e-10, max_iters: 1000, memory: 10 });
        assert!(rep.converged);
        assert!((w[0] - 1.0).abs() < 1e-6 && (w[1] - 1.0).abs() < 1e-6);
        assert!(rep.trace.windows(2).all(|p| p[1] < p[0]));
        assert_eq!(rep.trace.len(), rep.iterations + 1);
    }

    #[test]
    fn reports_non_convergence() {
        let (_, rep) = minimize(&Rosenbrock, vec![-1.2, 1.0], &LbfgsParams { grad_tol: 1e-12, max_iters: 3, memory: 5 });
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }
}
