use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use gril::penalty::PenaltyMatrix;
use gril::sim::{run_experiment, write_tables, Method, SimDesign};
use gril::solver::{gril_path, LarsOptions};
use gril::theory::{
    grouping_check, re_check, sparsity_inequality_check, summary, risk_bound_check, write_report,
    RiskBoundSetup, SparsitySetup,
};
use gril::tuning::{gamma_from_dims, select_with_penalty, Selector, Stage, TuningConfig};
use gril::{
    adagril_fit, gril_fit, make_weights, standardize, FitReport, GrilError, StandardizedDesign,
    WeightScheme, WeightVector,
};

const THREADS_ENV: &str = "GRIL_THREADS";

#[derive(Parser, Debug)]
#[command(name = "gril", version, about = "Generalized ridge-lasso fits, paths, simulations and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one method to a CSV dataset (`y,x1,...,xp` rows)
    Fit(FitArgs),
    /// Write the full regularization path for fixed lambda2
    Path(PathArgs),
    /// Run the simulation study and write table CSVs
    Simulate(SimArgs),
    /// Run a theory check and write a report CSV
    Verify(VerifyArgs),
    /// Print the tuning score table
    Tune(TuneArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input CSV, first column is the response
    #[arg(long)]
    data: PathBuf,
    /// First CSV row is a header
    #[arg(long)]
    header: bool,
    /// Method name (lasso, adalasso, enet, adaenet, slasso, adaslasso, cnet, adacnet, wfusion, adawfusion)
    #[arg(long, default_value = "enet")]
    method: Method,
    /// Read Q from a square CSV instead of the method's builder
    #[arg(long)]
    penalty_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    gamma_wf: f64,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Fixed lambda1; tuned by the selector when absent
    #[arg(long)]
    lambda1: Option<f64>,
    /// lambda1 for the adaptive stage (defaults to --lambda1)
    #[arg(long)]
    lambda1_star: Option<f64>,
    /// Fixed lambda2; the tuning grid is used when absent
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value = "bic")]
    selector: Selector,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the N rescaling of adaptive fits
    #[arg(long)]
    no_rescale: bool,
    /// Coefficient CSV destination
    #[arg(long, default_value = "coefficients.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value_t = 0.0)]
    lambda2: f64,
    /// lambda1 used for the initial fit of an adaptive method
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value = "path.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    replications: Option<String>,
    #[arg(long, alias = "seed")]
    master_seed: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    selector: Option<String>,
    #[arg(long)]
    lambda2_grid: Option<String>,
    #[arg(long)]
    gamma_override: Option<String>,
    #[arg(long)]
    gamma_wf: Option<String>,
    #[arg(long)]
    rescale: Option<String>,
    /// Output directory
    #[arg(long, default_value = "sim_out")]
    out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Check {
    Grouping,
    Risk,
    Sparsity,
    Re,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of instances (grouping, re) or replications (risk, sparsity)
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value = "bic")]
    selector: Selector,
    /// Comma separated lambda2 values
    #[arg(long)]
    lambda2_grid: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<GrilError> for Failure {
    fn from(e: GrilError) -> Self {
        match e {
            GrilError::Parse(_)
            | GrilError::Io(_)
            | GrilError::InvalidParameter(_)
            | GrilError::LengthMismatch { .. }
            | GrilError::NTooSmall(_)
            | GrilError::LayoutImpossible { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let out = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Path(a) => run_path(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Verify(a) => run_verify(a),
        Command::Tune(a) => run_tune(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be positive"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load(input: &DataArgs) -> std::result::Result<(StandardizedDesign, PenaltyMatrix), Failure> {
    let data = gril::Dataset::from_csv_path(&input.data, input.header)?;
    let std = standardize(&data)?;
    let pm = match &input.penalty_file {
        Some(path) => {
            let pm = PenaltyMatrix::from_csv_path(path)?;
            if pm.p() != std.p() {
                return Err(Failure::Usage(format!(
                    "penalty file is {0}x{0} but the data has {1} predictors",
                    pm.p(),
                    std.p()
                )));
            }
            pm
        }
        None => input.method.penalty(input.gamma_wf).build(&std)?,
    };
    Ok((std, pm))
}

fn nonneg(name: &str, v: f64) -> CliResult {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{name} must be a finite value >= 0, got {v}")))
    }
}

fn parse_grid(text: &str) -> std::result::Result<Vec<f64>, Failure> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad lambda2 value {s:?}")))
        })
        .collect()
}

fn adaptive_weights(
    std: &StandardizedDesign,
    initial: &FitReport,
    gamma: Option<f64>,
) -> std::result::Result<WeightVector, Failure> {
    let g = gamma.unwrap_or_else(|| gamma_from_dims(std.n(), std.p()));
    Ok(make_weights(&initial.inner, g, WeightScheme::PowerLaw, std.n())?)
}

fn print_fit(std: &StandardizedDesign, fit: &FitReport) -> DVector<f64> {
    let (beta, intercept) = std.to_original(fit.beta.beta());
    println!("lambda1 = {:e}", fit.lambda1);
    println!("lambda2 = {:e}", fit.lambda2);
    println!("objective = {:e}", fit.objective);
    println!("kkt_max_violation = {:e}", fit.kkt_max_violation);
    println!("converged = {}", fit.converged());
    println!("rescaled = {}", fit.rescaled);
    println!("active = {:?}", fit.beta.active_set().iter().collect::<Vec<_>>());
    println!("intercept = {intercept:e}");
    beta
}

fn run_fit(a: FitArgs) -> CliResult {
    let (std, pm) = load(&a.input)?;
    let method = a.input.method;
    let fit = match a.lambda1 {
        Some(l1) => {
            nonneg("lambda1", l1)?;
            let l2 = if method.uses_lambda2() { a.lambda2.unwrap_or(0.0) } else { 0.0 };
            nonneg("lambda2", l2)?;
            let init = gril_fit(std.data(), &pm, l1, l2)?;
            if method.is_adaptive() {
                let w = adaptive_weights(&std, &init, a.gamma)?;
                let l1s = a.lambda1_star.unwrap_or(l1);
                nonneg("lambda1_star", l1s)?;
                adagril_fit(std.data(), &pm, l1s, l2, &w, !a.no_rescale)?
            } else {
                init
            }
        }
        None => {
            let grid = match (method.uses_lambda2(), a.lambda2) {
                (false, _) => vec![0.0],
                (true, Some(l2)) => {
                    nonneg("lambda2", l2)?;
                    vec![l2]
                }
                (true, None) => gril::tuning::DEFAULT_LAMBDA2_GRID.to_vec(),
            };
            let cfg = TuningConfig {
                lambda2_grid: grid,
                selector: a.selector,
                seed: a.seed,
                gamma_override: a.gamma,
                rescale: !a.no_rescale,
                ..TuningConfig::default()
            };
            select_with_penalty(std.data(), &pm, &cfg, method.is_adaptive())?.fit
        }
    };
    println!("method = {method}");
    let beta = print_fit(&std, &fit);
    let mut csv = String::from("index,coefficient\n");
    for (j, b) in beta.iter().enumerate() {
        writeln!(csv, "{j},{b:e}").expect("string write");
    }
    write_file(&a.out, &csv)?;
    println!("wrote {}", a.out.display());
    if fit.converged() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "KKT violation {:e} exceeds tolerance",
            fit.kkt_max_violation
        )))
    }
}

fn run_path(a: PathArgs) -> CliResult {
    let (std, pm) = load(&a.input)?;
    let method = a.input.method;
    let l2 = if method.uses_lambda2() { a.lambda2 } else { 0.0 };
    nonneg("lambda2", l2)?;
    let weights = if method.is_adaptive() {
        let l1 = a.lambda1.ok_or_else(|| {
            Failure::Usage("adaptive paths need --lambda1 for the initial fit".into())
        })?;
        nonneg("lambda1", l1)?;
        let init = gril_fit(std.data(), &pm, l1, l2)?;
        adaptive_weights(&std, &init, a.gamma)?
    } else {
        WeightVector::unit(std.p())
    };
    let path = gril_path(std.data(), &pm, l2, &weights, &LarsOptions::default())?;
    let mut csv = String::from("step,lambda1,intercept");
    for j in 0..std.p() {
        write!(csv, ",b{j}").expect("string write");
    }
    csv.push('\n');
    for (k, (lam, coef)) in path.breakpoints().iter().zip(path.coefs()).enumerate() {
        let (beta, intercept) = std.to_original(coef);
        write!(csv, "{k},{lam:e},{intercept:e}").expect("string write");
        for b in beta.iter() {
            write!(csv, ",{b:e}").expect("string write");
        }
        csv.push('\n');
    }
    write_file(&a.out, &csv)?;
    println!(
        "{} breakpoints, lambda_max = {:e}, max active = {}; wrote {}",
        path.len(),
        path.lambda_max(),
        path.max_active(),
        a.out.display()
    );
    Ok(())
}

fn run_simulate(a: SimArgs) -> CliResult {
    let mut design = match &a.config {
        Some(p) => SimDesign::from_config_path(p)?,
        None => SimDesign::default(),
    };
    let overrides = [
        ("n", &a.n),
        ("sigma", &a.sigma),
        ("rho", &a.rho),
        ("replications", &a.replications),
        ("master_seed", &a.master_seed),
        ("methods", &a.methods),
        ("selector", &a.selector),
        ("lambda2_grid", &a.lambda2_grid),
        ("gamma_override", &a.gamma_override),
        ("gamma_wf", &a.gamma_wf),
        ("rescale", &a.rescale),
    ];
    for (key, val) in overrides {
        if let Some(v) = val {
            design.set(key, v)?;
        }
    }
    design.validate()?;
    let res = run_experiment(&design)?;
    let files = write_tables(&res, &a.out)?;
    println!("n={} p={} q={} replications={}", design.n, res.p, res.q, design.replications);
    println!("method,mse_pred,mse_beta,C,IC,failures");
    for r in &res.rows {
        println!(
            "{},{:.4},{:.4},{:.2},{:.2},{}",
            r.method, r.median_mse_pred, r.median_mse_beta, r.median_c, r.median_ic, r.failures
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run_verify(a: VerifyArgs) -> CliResult {
    let (name, rows) = match a.check {
        Check::Grouping => ("grouping", grouping_check(a.count.unwrap_or(100), a.seed)?),
        Check::Re => ("re", re_check(a.count.unwrap_or(20), a.seed)?),
        Check::Risk => {
            let mut setup = RiskBoundSetup::standard(a.seed);
            if let Some(c) = a.count {
                setup.replications = c;
            }
            let rep = risk_bound_check(&setup)?;
            println!("mean squared error = {:e}, bound = {:e}", rep.mean_sq_error, rep.bound);
            ("risk", rep.rows)
        }
        Check::Sparsity => {
            let mut setup = SparsitySetup::standard(a.seed);
            if let Some(c) = a.count {
                setup.in_regime_target = c;
            }
            let rep = sparsity_inequality_check(&setup)?;
            println!(
                "lambda1* = {:e}, lambda2 = {:e}, replications = {}, in regime = {}, checked = {}, gamma frequency = {:.4}",
                rep.lambda1_star,
                rep.lambda2,
                rep.replications,
                rep.in_regime,
                rep.checked,
                rep.gamma_frequency()
            );
            ("sparsity", rep.rows)
        }
    };
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("verify_{name}.csv")));
    write_report(&rows, &out)?;
    print!("{}", summary(&rows));
    println!("wrote {}", out.display());
    let bad = rows.iter().filter(|r| r.violated()).count();
    if bad == 0 {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("{bad} bound violations")))
    }
}

fn run_tune(a: TuneArgs) -> CliResult {
    let (std, pm) = load(&a.input)?;
    let method = a.input.method;
    let grid = match (&a.lambda2_grid, method.uses_lambda2()) {
        (_, false) => vec![0.0],
        (Some(g), true) => parse_grid(g)?,
        (None, true) => gril::tuning::DEFAULT_LAMBDA2_GRID.to_vec(),
    };
    let cfg = TuningConfig {
        lambda2_grid: grid,
        selector: a.selector,
        seed: a.seed,
        gamma_override: a.gamma,
        ..TuningConfig::default()
    };
    let res = select_with_penalty(std.data(), &pm, &cfg, method.is_adaptive())?;
    let mut out = String::from("stage,lambda2,lambda1,score,df\n");
    for e in &res.score_table {
        let stage = match e.stage {
            Stage::Initial => "initial",
            Stage::Adaptive => "adaptive",
        };
        writeln!(out, "{stage},{:e},{:e},{:e},{}", e.lambda2, e.lambda1, e.score, e.df).expect("string write");
    }
    for (l2, err) in &res.failed_cells {
        eprintln!("lambda2 = {l2:e} failed: {err}");
    }
    writeln!(
        out,
        "selected ({}) lambda1 = {:e}, lambda2 = {:e}, gamma = {}",
        res.selector_used, res.best_lambda1, res.best_lambda2, res.gamma
    )
    .expect("string write");
    // A closed pipe (e.g. `| head`) is not an error.
    match std::io::stdout().lock().write_all(out.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(GrilError::from(e).into()),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, body: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(GrilError::from)?;
    }
    std::fs::write(path, body).map_err(GrilError::from)?;
    Ok(())
}
