//! The synthetic consistency ladder: train every learner on nested prefixes of
//! one training sample and score them against the exact conditional
//! statistics of a fixed test sample.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{check_regret_bound, expected_accuracy, psi_regret_estimate, q_mae, LOGISTIC_LAMBDA};
use crate::fbeta::{fbeta, BetaParam, StatVec};
use crate::pipeline::{train, Algorithm, TrainOptions, TrainedModel};
use crate::synth::{bayes_f_accuracy, build_with_preset, to_dataset, Preset, SynthDistribution, SynthPoint};
use crate::trainer::TrainConfig;

pub const DEFAULT_SIZES: [usize; 5] = [100, 316, 1000, 3162, 10000];
pub const DEFAULT_TEST_SIZE: usize = 15000;

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyConfig {
    pub seed: u64,
    pub s: usize,
    pub d: usize,
    pub sizes: Vec<usize>,
    pub test_size: usize,
    pub beta: BetaParam,
    pub train: TrainConfig,
    pub preset: Preset,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            s: crate::synth::DEFAULT_S,
            d: crate::synth::DEFAULT_D,
            sizes: DEFAULT_SIZES.to_vec(),
            test_size: DEFAULT_TEST_SIZE,
            beta: BetaParam::default(),
            // the generating model has no intercept
            train: TrainConfig { reg_lambda: 1e-6, max_iters: 1000, grad_tol: 1e-6, bias: false },
            preset: Preset::Standard,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyRow {
    pub m: usize,
    pub f_surrogate: f64,
    pub f_efp: f64,
    pub f_br: f64,
    pub f_bayes: f64,
    pub psi_regret: f64,
    pub bound: f64,
    pub bound_ok: bool,
    pub q_mae_surrogate: f64,
    pub q_mae_efp: f64,
    /// Fraction of test points where the surrogate and EFP predict the same labeling.
    pub agreement_efp: f64,
    /// Surrogate F_β against the sampled test labels, with its standard error.
    pub f_surrogate_sampled: f64,
    pub f_surrogate_sampled_se: f64,
    pub converged: bool,
}

impl ConsistencyRow {
    pub fn gap(&self) -> f64 {
        self.f_bayes - self.f_surrogate
    }
}

pub const CONSISTENCY_CSV_HEADER: &str = "m,f1_surrogate,f1_efp,f1_br,f1_bayes,psi_regret,bound,bound_ok";

pub fn consistency_csv(rows: &[ConsistencyRow]) -> String {
    let mut out = String::from(CONSISTENCY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.m, r.f_surrogate, r.f_efp, r.f_br, r.f_bayes, r.psi_regret, r.bound, r.bound_ok
        );
    }
    out
}

/// Fixed test sample with its exact statistics and Bayes value.
pub struct TestBed {
    pub dist: SynthDistribution,
    pub test: Vec<SynthPoint>,
    pub qs: Vec<StatVec>,
    pub f_bayes: f64,
}

impl TestBed {
    pub fn new(cfg: &ConsistencyConfig) -> Result<Self> {
        let dist = build_with_preset(cfg.seed, cfg.s, cfg.d, cfg.preset)?;
        let test = dist.sample_test(cfg.test_size);
        let qs: Vec<StatVec> = test.iter().map(|p| p.q.clone()).collect();
        let f_bayes = bayes_f_accuracy(&qs, cfg.beta)?;
        Ok(Self { dist, test, qs, f_bayes })
    }

    /// Exact expected F_β of `model` on the test sample.
    pub fn accuracy(&self, model: &TrainedModel, beta: BetaParam) -> Result<f64> {
        let rows: Vec<_> = self.test.iter().map(|p| crate::data::SparseRow::from_dense(&p.x)).collect();
        expected_accuracy(&model.predict_all(&rows)?, &self.qs, beta)
    }
}

pub fn run_consistency(cfg: &ConsistencyConfig) -> Result<Vec<ConsistencyRow>> {
    run_consistency_with(cfg, |_| {})
}

/// As [`run_consistency`], reporting each row as soon as it is complete.
pub fn run_consistency_with(cfg: &ConsistencyConfig, mut on_row: impl FnMut(&ConsistencyRow)) -> Result<Vec<ConsistencyRow>> {
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(Error::InvalidArgument("sizes must be nonempty and positive".into()));
    }
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("sizes must be strictly ascending, got {:?}", cfg.sizes)));
    }
    if cfg.test_size == 0 {
        return Err(Error::InvalidArgument("test size must be positive".into()));
    }
    let bed = TestBed::new(cfg)?;
    let largest = *cfg.sizes.last().expect("nonempty");
    let full = to_dataset(cfg.s, cfg.d, &bed.dist.sample_train(largest))?;
    let test_rows: Vec<_> = bed.test.iter().map(|p| crate::data::SparseRow::from_dense(&p.x)).collect();
    let test_q: Vec<Option<StatVec>> = bed.qs.iter().cloned().map(Some).collect();

    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &m in &cfg.sizes {
        let data = full.head(m);
        let opts = TrainOptions { beta: cfg.beta, train: cfg.train, full_k: true };
        let sur = train(Algorithm::Surrogate, &data, &opts)?;
        let efp = train(Algorithm::Efp, &data, &opts)?;
        let br = train(Algorithm::Br, &data, &opts)?;

        let pred_sur = sur.predict_all(&test_rows)?;
        let pred_efp = efp.predict_all(&test_rows)?;
        let f_surrogate = expected_accuracy(&pred_sur, &bed.qs, cfg.beta)?;
        let f_efp = expected_accuracy(&pred_efp, &bed.qs, cfg.beta)?;
        let agreement_efp =
            pred_sur.iter().zip(&pred_efp).filter(|(a, b)| a == b).count() as f64 / pred_sur.len() as f64;
        let sampled: Vec<f64> = pred_sur
            .iter()
            .zip(&bed.test)
            .map(|(yhat, p)| fbeta(&p.y, yhat, cfg.beta))
            .collect::<Result<_>>()?;
        let n = sampled.len() as f64;
        let f_surrogate_sampled = sampled.iter().sum::<f64>() / n;
        let var = sampled.iter().map(|v| (v - f_surrogate_sampled).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let f_br = expected_accuracy(&br.predict_all(&test_rows)?, &bed.qs, cfg.beta)?;

        let TrainedModel::Surrogate(lin) = &sur else { unreachable!("surrogate model") };
        let psi_regret = psi_regret_estimate(lin, &test_rows, &test_q)?;
        let (bound, bound_ok) = check_regret_bound(bed.f_bayes - f_surrogate, psi_regret, cfg.s, cfg.beta, LOGISTIC_LAMBDA)?;

        let qhat = |model: &TrainedModel| -> Result<Vec<StatVec>> {
            test_rows.iter().map(|x| model.q_hat(x).expect("statistics learner")).collect()
        };
        let row = ConsistencyRow {
            m,
            f_surrogate,
            f_efp,
            f_br,
            f_bayes: bed.f_bayes,
            psi_regret,
            bound,
            bound_ok,
            q_mae_surrogate: q_mae(&qhat(&sur)?, &bed.qs)?,
            q_mae_efp: q_mae(&qhat(&efp)?, &bed.qs)?,
            agreement_efp,
            f_surrogate_sampled,
            f_surrogate_sampled_se: (var / n).sqrt(),
            converged: sur.all_converged() && efp.all_converged() && br.all_converged(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Number of adjacent pairs where the gap to Bayes increases.
pub fn gap_inversions(rows: &[ConsistencyRow]) -> usize {
    rows.windows(2).filter(|w| w[1].gap() > w[0].gap()).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ConsistencyConfig {
        ConsistencyConfig { s: 2, d: 8, sizes: vec![50, 200], test_size: 300, ..Default::default() }
    }

    #[test]
    fn ladder_rows() {
        let rows = run_consistency(&tiny()).unwrap();
        assert_eq!(rows.iter().map(|r| r.m).collect::<Vec<_>>(), vec![50, 200]);
        assert_eq!(rows[0].f_bayes, rows[1].f_bayes);
        for r in &rows {
            assert!(r.bound_ok);
            assert!(r.gap() >= -1e-12);
            assert!(r.psi_regret >= 0.0);
            assert!(r.f_bayes - r.f_surrogate_sampled >= -3.0 * r.f_surrogate_sampled_se - 1e-12);
            assert!((0.0..=1.0).contains(&r.agreement_efp));
        }
        assert_eq!(rows, run_consistency(&tiny()).unwrap());
    }

    #[test]
    fn csv_layout() {
        let rows = run_consistency(&tiny()).unwrap();
        let csv = consistency_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CONSISTENCY_CSV_HEADER);
        assert!(lines[1].starts_with("50,") && lines[1].ends_with(",true"));
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
    }

    #[test]
    fn rejects_bad_sizes() {
        for sizes in [vec![], vec![10, 10], vec![20, 10], vec![0, 5]] {
            assert!(run_consistency(&ConsistencyConfig { sizes, ..tiny() }).is_err());
        }
    }

    #[test]
    fn inversion_count() {
        let row = |m, f| ConsistencyRow {
            m,
            f_surrogate: f,
            f_efp: 0.0,
            f_br: 0.0,
            f_bayes: 1.0,
            psi_regret: 0.0,
            bound: 0.0,
            bound_ok: true,
            q_mae_surrogate: 0.0,
            q_mae_efp: 0.0,
            agreement_efp: 1.0,
            f_surrogate_sampled: f,
            f_surrogate_sampled_se: 0.0,
            converged: true,
        };
        assert_eq!(gap_inversions(&[row(1, 0.5), row(2, 0.6), row(3, 0.55), row(4, 0.9)]), 1);
        assert_eq!(gap_inversions(&[row(1, 0.5), row(2, 0.5)]), 0);
    }
}
