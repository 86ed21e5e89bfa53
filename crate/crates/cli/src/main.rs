use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fcal::eval::{self, check_regret_bound, cross_validate, evaluate, expected_accuracy, psi_regret_estimate};
use fcal::experiment::{consistency_csv, gap_inversions, run_consistency_with, ConsistencyConfig};
use fcal::io;
use fcal::synth::{self, Preset};
use fcal::{Algorithm, BetaParam, TrainConfig, TrainOptions, TrainedModel};

#[derive(Parser)]
#[command(name = "fcal", version, about = "Consistent multi-label F-beta classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample train and test sets from the synthetic distribution.
    Synth(SynthArgs),
    /// Fit a model and write it to a model file.
    Train(TrainArgs),
    /// Predict labelings for every instance of a dataset.
    Predict(PredictArgs),
    /// Score predictions against a labelled dataset.
    Evaluate(EvaluateArgs),
    /// Run the synthetic convergence ladder and write a CSV.
    Consistency(ConsistencyArgs),
    /// Choose the regularisation strength by k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Convert labels-then-features text into the ml-sparse format.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = synth::DEFAULT_S)]
    s: usize,
    #[arg(long, default_value_t = synth::DEFAULT_D)]
    d: usize,
    #[arg(long, default_value_t = 10000)]
    train_size: usize,
    #[arg(long, default_value_t = 15000)]
    test_size: usize,
    /// Directory receiving train.txt, test.txt and test.q.
    #[arg(long, alias = "out")]
    out_dir: PathBuf,
    /// Use the negatively correlated preset instead of the standard one.
    #[arg(long)]
    br_adversarial: bool,
}

#[derive(Args)]
struct LearnerArgs {
    #[arg(long, default_value = "surrogate")]
    algo: Algorithm,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Estimate all s²+1 statistics instead of the observed label counts.
    #[arg(long)]
    full_k: bool,
    #[arg(long)]
    no_bias: bool,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
}

impl LearnerArgs {
    fn options(&self, reg: f64) -> Result<TrainOptions> {
        let train = TrainConfig { reg_lambda: reg, max_iters: self.max_iters, grad_tol: self.grad_tol, bias: !self.no_bias };
        train.validate()?;
        Ok(TrainOptions { beta: BetaParam::new(self.beta)?, train, full_k: self.full_k })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    reg: f64,
    #[arg(long, alias = "out")]
    model_out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions file, one labeling per line.
    #[arg(long)]
    pred: PathBuf,
    /// Dataset holding the true labelings.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// True statistics for exact F-regret; enables the bound check with --model.
    #[arg(long)]
    q: Option<PathBuf>,
    /// Surrogate model whose surrogate regret is measured against --q.
    #[arg(long, requires = "q")]
    model: Option<PathBuf>,
    /// Write the key=value report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a one-row CSV with header here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConsistencyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = fcal::experiment::DEFAULT_SIZES)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = fcal::experiment::DEFAULT_TEST_SIZE)]
    test_size: usize,
    #[arg(long, default_value_t = synth::DEFAULT_S)]
    s: usize,
    #[arg(long, default_value_t = synth::DEFAULT_D)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e-6)]
    reg: f64,
    #[arg(long)]
    br_adversarial: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long)]
    input: PathBuf,
    /// `lo:hi` for every power of ten in between, or a comma-separated list.
    #[arg(long, default_value = "1e-4:1e3")]
    grid: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the per-(grid value, fold) table here as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Input labels count from 0.
    #[arg(long)]
    zero_based_labels: bool,
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            bail!("output directory {} does not exist", dir.display())
        }
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// `lo:hi` expands to the powers of ten between the endpoints.
fn parse_grid(arg: &str) -> Result<Vec<f64>> {
    if let Some((lo, hi)) = arg.split_once(':') {
        let exp = |v: &str| -> Result<i32> {
            let x: f64 = v.trim().parse().with_context(|| format!("bad grid endpoint '{v}'"))?;
            let e = x.log10().round();
            if !(x > 0.0) || (10f64.powi(e as i32) - x).abs() > 1e-12 * x {
                bail!("grid endpoint {v} is not a power of ten");
            }
            Ok(e as i32)
        };
        let (lo, hi) = (exp(lo)?, exp(hi)?);
        if lo > hi {
            bail!("grid range {arg} is empty");
        }
        return Ok((lo..=hi).map(|e| 10f64.powi(e)).collect());
    }
    let grid = arg
        .split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad grid value '{t}'")))
        .collect::<Result<Vec<_>>>()?;
    if grid.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        bail!("grid values must be finite and nonnegative");
    }
    Ok(grid)
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    if a.train_size == 0 || a.test_size == 0 {
        bail!("train and test sizes must be at least 1");
    }
    if !a.out_dir.is_dir() {
        fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    }
    let preset = if a.br_adversarial { Preset::BrAdversarial } else { Preset::Standard };
    let dist = synth::build_with_preset(a.seed, a.s, a.d, preset)?;
    let train = dist.sample_train(a.train_size);
    let test = dist.sample_test(a.test_size);
    io::save_dataset(&synth::to_dataset(a.s, a.d, &train)?, a.out_dir.join("train.txt"))?;
    io::save_dataset(&synth::to_dataset(a.s, a.d, &test)?, a.out_dir.join("test.txt"))?;
    let qs: Vec<_> = test.iter().map(|p| p.q.clone()).collect();
    io::save_sidecar(a.s, &qs, a.out_dir.join("test.q"))?;
    let bayes = synth::bayes_f_accuracy(&qs, BetaParam::default())?;
    println!("wrote {} train and {} test points to {}", a.train_size, a.test_size, a.out_dir.display());
    println!("bayes_f1={bayes:.6}");
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    check_input(&a.input)?;
    check_output(&a.model_out)?;
    let opts = a.learner.options(a.reg)?;
    let data = io::load_dataset(&a.input)?;
    let model = fcal::train(a.learner.algo, &data, &opts)?;
    io::save_model(&model, &a.model_out)?;
    let reports = match &model {
        TrainedModel::Surrogate(m) => m.reports(),
        TrainedModel::Efp { model, .. } => model.reports(),
        TrainedModel::Br(m) => m.reports(),
    };
    let worst = reports.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
    let iters: usize = reports.iter().map(|r| r.iterations).sum();
    let failed = reports.iter().filter(|r| !r.converged).count();
    println!(
        "algorithm={} subproblems={} iterations={iters} max_grad_norm={worst:.3e} unconverged={failed}",
        model.algorithm(),
        reports.len()
    );
    println!("model written to {}", a.model_out.display());
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    check_input(&a.model)?;
    check_input(&a.input)?;
    check_output(&a.out)?;
    let model = io::load_model(&a.model)?;
    let data = io::load_dataset(&a.input)?;
    if data.s() != model.s() {
        bail!("dataset has s = {} but the model was trained with s = {}", data.s(), model.s());
    }
    if data.d() > model.d() {
        bail!("dataset has d = {} but the model was trained with d = {}", data.d(), model.d());
    }
    let preds = model.predict_all(data.features())?;
    io::save_predictions(&preds, &a.out)?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    check_input(&a.pred)?;
    check_input(&a.input)?;
    for p in [&a.q, &a.model].into_iter().flatten() {
        check_input(p)?;
    }
    for p in [&a.out, &a.csv].into_iter().flatten() {
        check_output(p)?;
    }
    let beta = BetaParam::new(a.beta)?;
    let data = io::load_dataset(&a.input)?;
    let preds = io::load_predictions(&a.pred, data.s())?;
    let mut report = evaluate(&preds, data.labels(), beta)?;
    if let Some(qpath) = &a.q {
        let qs = io::load_sidecar(qpath)?;
        let bayes = synth::bayes_f_accuracy(&qs, beta)?;
        let f_regret = bayes - expected_accuracy(&preds, &qs, beta)?;
        report.f_regret = Some(f_regret);
        if let Some(mpath) = &a.model {
            let model = io::load_surrogate(mpath)?;
            let qs: Vec<_> = qs.into_iter().map(Some).collect();
            let psi = psi_regret_estimate(&model, data.features(), &qs)?;
            let (bound, ok) = check_regret_bound(f_regret, psi, data.s(), beta, eval::LOGISTIC_LAMBDA)?;
            report.psi_regret = Some(psi);
            report.bound = Some(bound);
            report.bound_satisfied = Some(ok);
        }
    }
    match &a.out {
        Some(p) => write_text(p, &report.to_key_value())?,
        None => print!("{}", report.to_key_value()),
    }
    if let Some(p) = &a.csv {
        write_text(p, &format!("{}\n{}\n", fcal::eval::EvalReport::CSV_HEADER, report.to_csv_row()))?;
    }
    Ok(())
}

fn consistency_cmd(a: ConsistencyArgs) -> Result<()> {
    check_output(&a.out)?;
    let mut cfg = ConsistencyConfig {
        seed: a.seed,
        s: a.s,
        d: a.d,
        sizes: a.sizes,
        test_size: a.test_size,
        beta: BetaParam::new(a.beta)?,
        preset: if a.br_adversarial { Preset::BrAdversarial } else { Preset::Standard },
        ..Default::default()
    };
    cfg.train.reg_lambda = a.reg;
    cfg.train.validate()?;
    let rows = run_consistency_with(&cfg, |r| {
        eprintln!("m={} f1_surrogate={:.4} f1_bayes={:.4} gap={:.4}", r.m, r.f_surrogate, r.f_bayes, r.gap());
    })?;
    write_text(&a.out, &consistency_csv(&rows))?;
    let last = rows.last().expect("at least one size");
    println!("final_gap={:.6}", last.gap());
    println!("gap_inversions={}", gap_inversions(&rows));
    println!("bound_ok={}", rows.iter().all(|r| r.bound_ok));
    Ok(())
}

fn crossval_cmd(a: CrossvalArgs) -> Result<()> {
    check_input(&a.input)?;
    if let Some(p) = &a.out {
        check_output(p)?;
    }
    let grid = parse_grid(&a.grid)?;
    let opts = a.learner.options(grid[0])?;
    let data = io::load_dataset(&a.input)?;
    let res = cross_validate(&data, a.learner.algo, &grid, a.folds, &opts, a.seed)?;
    let mut table = String::from("reg,fold,mean_fbeta\n");
    for c in &res.table {
        table.push_str(&format!("{:e},{},{:.6}\n", c.reg, c.fold, c.mean_fbeta));
    }
    match &a.out {
        Some(p) => write_text(p, &table)?,
        None => print!("{table}"),
    }
    for (g, m) in grid.iter().zip(&res.grid_means) {
        eprintln!("reg={g:e} mean_fbeta={m:.6}");
    }
    println!("chosen_reg={:e}", res.chosen);
    Ok(())
}

fn convert_cmd(a: ConvertArgs) -> Result<()> {
    check_input(&a.input)?;
    check_output(&a.out)?;
    let text = fs::read_to_string(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let opts = io::ConvertOptions { s: a.s, d: a.d, zero_based_labels: a.zero_based_labels };
    let data = io::convert_labels_first(&text, &a.input, opts)?;
    io::save_dataset(&data, &a.out)?;
    println!("converted {} instances (s={}, d={})", data.len(), data.s(), data.d());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Consistency(a) => consistency_cmd(a),
        Command::Crossval(a) => crossval_cmd(a),
        Command::Convert(a) => convert_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_grid;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("1e-4:1e3").unwrap(), fcal::eval::default_grid());
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("1, 0.1").unwrap(), vec![1.0, 0.1]);
        assert!(parse_grid("1e3:1e-4").is_err());
        assert!(parse_grid("2:10").is_err());
        assert!(parse_grid("a,b").is_err());
    }
}
