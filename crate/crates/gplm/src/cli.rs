//! Command-line interface: fit models on CSV data, select bandwidths, run
//! tests and reproduce the simulation studies.
//!
//! Input CSV layout is `y,x1..xp,t` with a header row. Outputs are written as
//! CSV with full round-trip precision (17 significant digits); summaries are
//! printed at 3 decimals. Exit codes: 0 success, 2 data/usage validation
//! failure, 3 numerical failure.
//!
//! Flags override keys of an optional TOML config file (`--config`); the
//! `GPLM_SEED` environment variable is the seed fallback when neither flag
//! nor config provides one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::bandwidth::{robust_cv, CvSpec};
use crate::data::Dataset;
use crate::error::{GplmError, Result};
use crate::family::Family;
use crate::inference::{lambda_test, sandwich, wald_test, TestResult};
use crate::kernel::{KernelShape, KernelSpec};
use crate::link::Link;
use crate::loss::{LossKind, LossModel, LossSpec};
use crate::profile::{fit_beta, BetaSearchSpec, FitResult};
use crate::score::{PsiHuber, ScorePhi};
use crate::sim::{
    run_monte_carlo, BandwidthChoice, Contamination, EstimatorSpec, McSummary, Study, StudySpec,
};
use crate::weight::WeightFn;

/// Entry point for the `gplm` binary.
pub fn main() -> i32 {
    run(std::env::args())
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &GplmError) -> i32 {
    match e {
        GplmError::Data { .. }
        | GplmError::Design(_)
        | GplmError::InvalidSpec(_)
        | GplmError::Domain { .. } => 2,
        _ => 3,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "gplm",
    version,
    about = "Robust two-step estimation for generalized partially linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to CSV data (columns y,x1..xp,t with a header row).
    Fit(FitArgs),
    /// Select a bandwidth by robust cross-validation, then refit.
    Cv(CvArgs),
    /// Wald and robust discrepancy tests for a zero restriction.
    Test(TestArgs),
    /// Reproduce the simulation studies.
    Simulate(SimArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum LossArg {
    /// Classical quasi-likelihood (non-robust).
    Qal,
    /// Robust quasi-likelihood (Huber score on Pearson residuals).
    Rql,
    /// Modified likelihood (bounded deviance score).
    Mod,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum FamilyArg {
    Binomial,
    Poisson,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum LinkArg {
    Logit,
    Log,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum KernelArg {
    Triangular,
    Epanechnikov,
    Gaussian,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum WeightsArg {
    /// Unit weights.
    Unit,
    /// Median-centered leverage downweighting.
    Median,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ContaminationArg {
    None,
    C1,
    C2,
    C3,
}

#[derive(Args, Debug, Clone)]
struct ModelOpts {
    /// Loss family driving the estimator.
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Response family.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Binomial trial count.
    #[arg(long)]
    trials: Option<u32>,
    /// Link function (defaults to the family's canonical link).
    #[arg(long, value_enum)]
    link: Option<LinkArg>,
    /// Kernel shape.
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// Fixed bandwidth.
    #[arg(long)]
    h: Option<f64>,
    /// Tuning constant of the robust score (defaults: 1.2 for rql, 0.5 for mod).
    #[arg(long)]
    c: Option<f64>,
    /// Covariate weight policy (defaults: unit for qal, median otherwise).
    #[arg(long, value_enum)]
    weights: Option<WeightsArg>,
    /// Grid step of the coefficient search.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Grid half-width of the coefficient search.
    #[arg(long)]
    grid_halfwidth: Option<f64>,
    /// Refinement tolerance after the grid (0 disables refinement).
    #[arg(long)]
    refine_tol: Option<f64>,
    /// Optional TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed (falls back to the config file, then GPLM_SEED, then 1).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input CSV (y,x1..xp,t with header).
    #[arg(long)]
    input: PathBuf,
    /// Candidate bandwidths for selection before the fit (comma separated).
    #[arg(long, value_delimiter = ',')]
    cv: Option<Vec<f64>>,
    /// Output CSV path.
    #[arg(long, default_value = "fit_result.csv")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    /// Candidate bandwidths (comma separated).
    #[arg(long, value_delimiter = ',')]
    cv: Option<Vec<f64>>,
    /// Holdout fraction.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of random splits to average.
    #[arg(long)]
    splits: Option<usize>,
    /// Output CSV for the candidate losses.
    #[arg(long, default_value = "cv_result.csv")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    /// 1-based coefficient indices pinned to zero under the null.
    #[arg(long, value_delimiter = ',', required = true)]
    restrict: Vec<usize>,
    #[arg(long, default_value = "test_result.csv")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Study number (1, 2 or 3).
    #[arg(long)]
    study: Option<u8>,
    /// Sample size (defaults: 100, 100, 200 by study).
    #[arg(long)]
    n: Option<usize>,
    /// Study 3 contamination scheme.
    #[arg(long, value_enum)]
    contamination: Option<ContaminationArg>,
    /// Study 2 gross outliers (0..=3).
    #[arg(long)]
    outliers: Option<usize>,
    /// Replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Estimators to compare (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    estimators: Option<Vec<LossArg>>,
    /// Candidate bandwidths for per-replication selection (comma separated).
    #[arg(long, value_delimiter = ',')]
    cv: Option<Vec<f64>>,
    /// Also write per-replication records next to the summary.
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value = "sim_summary.csv")]
    out: PathBuf,
    /// Study 2 index-variable variance override.
    #[arg(long)]
    study2_t_var: Option<f64>,
    #[command(flatten)]
    model: ModelOpts,
}

/// Keys accepted in the TOML config file (same names as the flags).
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    loss: Option<String>,
    family: Option<String>,
    trials: Option<u32>,
    link: Option<String>,
    kernel: Option<String>,
    h: Option<f64>,
    c: Option<f64>,
    weights: Option<String>,
    grid_step: Option<f64>,
    grid_halfwidth: Option<f64>,
    refine_tol: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    study: Option<u8>,
    n: Option<usize>,
    contamination: Option<String>,
    outliers: Option<usize>,
    reps: Option<usize>,
    alpha: Option<f64>,
    splits: Option<usize>,
    cv: Option<Vec<f64>>,
    study2_t_var: Option<f64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text)
                    .map_err(|e| GplmError::InvalidSpec(format!("config {}: {e}", p.display())))
            }
        }
    }
}

/// Fully resolved model settings (flags over config over defaults).
struct ResolvedModel {
    loss: LossArg,
    family: Family,
    link: Link,
    kernel_shape: KernelShape,
    h: Option<f64>,
    c: f64,
    weights: WeightsArg,
    search: BetaSearchSpec,
    seed: u64,
    jobs: Option<usize>,
}

fn parse_enum<T: ValueEnum>(what: &str, s: &str) -> Result<T> {
    T::from_str(s, true).map_err(|_| {
        let valid: Vec<String> = T::value_variants()
            .iter()
            .filter_map(|v| v.to_possible_value().map(|p| p.get_name().to_string()))
            .collect();
        GplmError::InvalidSpec(format!(
            "unknown {what} '{s}' (valid: {})",
            valid.join(", ")
        ))
    })
}

fn resolve_model(opts: &ModelOpts, cfg: &FileConfig, default_step: f64) -> Result<ResolvedModel> {
    let loss = match (opts.loss, &cfg.loss) {
        (Some(l), _) => l,
        (None, Some(s)) => parse_enum::<LossArg>("loss", s)?,
        _ => LossArg::Qal,
    };
    let family_arg = match (opts.family, &cfg.family) {
        (Some(f), _) => f,
        (None, Some(s)) => parse_enum::<FamilyArg>("family", s)?,
        _ => FamilyArg::Binomial,
    };
    let trials = opts.trials.or(cfg.trials).unwrap_or(1);
    let family = match family_arg {
        FamilyArg::Binomial => Family::binomial(trials)?,
        FamilyArg::Poisson => Family::Poisson,
    };
    let link = match (opts.link, &cfg.link) {
        (Some(l), _) => Some(l),
        (None, Some(s)) => Some(parse_enum::<LinkArg>("link", s)?),
        _ => None,
    };
    let link = match (link, family_arg) {
        (Some(LinkArg::Logit), _) => Link::Logit,
        (Some(LinkArg::Log), _) => Link::Log,
        (None, FamilyArg::Binomial) => Link::Logit,
        (None, FamilyArg::Poisson) => Link::Log,
    };
    let kernel_shape = match (opts.kernel, &cfg.kernel) {
        (Some(k), _) => k,
        (None, Some(s)) => parse_enum::<KernelArg>("kernel", s)?,
        _ => KernelArg::Triangular,
    };
    let kernel_shape = match kernel_shape {
        KernelArg::Triangular => KernelShape::Triangular,
        KernelArg::Epanechnikov => KernelShape::Epanechnikov,
        KernelArg::Gaussian => KernelShape::Gaussian,
    };
    let c = opts.c.or(cfg.c).unwrap_or(match loss {
        LossArg::Rql => PsiHuber::DEFAULT_C,
        _ => 0.5,
    });
    let weights = match (opts.weights, &cfg.weights) {
        (Some(w), _) => w,
        (None, Some(s)) => parse_enum::<WeightsArg>("weights", s)?,
        _ => match loss {
            LossArg::Qal => WeightsArg::Unit,
            _ => WeightsArg::Median,
        },
    };
    let step = opts.grid_step.or(cfg.grid_step).unwrap_or(default_step);
    let halfwidth = opts.grid_halfwidth.or(cfg.grid_halfwidth).unwrap_or(5.0);
    let refine = opts.refine_tol.or(cfg.refine_tol).unwrap_or(1e-4);
    let search = BetaSearchSpec {
        center: None,
        halfwidth,
        step,
        refine_tol: if refine > 0.0 { Some(refine) } else { None },
    };
    let seed = opts
        .seed
        .or(cfg.seed)
        .or_else(|| {
            std::env::var("GPLM_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(1);
    Ok(ResolvedModel {
        loss,
        family,
        link,
        kernel_shape,
        h: opts.h.or(cfg.h),
        c,
        weights,
        search,
        seed,
        jobs: opts.jobs.or(cfg.jobs),
    })
}

impl ResolvedModel {
    fn compile_loss(&self, data: &Dataset) -> Result<LossModel> {
        let w = match self.weights {
            WeightsArg::Unit => WeightFn::Unit,
            WeightsArg::Median => WeightFn::median_cauchy_from_data(data.x_flat(), data.p()),
        };
        let kind = match self.loss {
            LossArg::Qal => LossKind::ClassicalQuasi,
            LossArg::Rql => LossKind::RobustQuasi(PsiHuber::new(self.c)?),
            LossArg::Mod => LossKind::ModifiedLikelihood(ScorePhi::croux_haesbroeck(self.c)?),
        };
        LossModel::new(LossSpec::new(kind, self.family, self.link, w.clone(), w))
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        match jobs {
            Some(j) if j > 0 => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(j)
                    .build()
                    .map_err(|e| GplmError::InvalidSpec(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
            Some(_) => Err(GplmError::InvalidSpec("jobs must be positive".into())),
            None => Ok(f()),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        match jobs {
            Some(0) => Err(GplmError::InvalidSpec("jobs must be positive".into())),
            _ => Ok(f()),
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

// ---- fit ----------------------------------------------------------------

fn cmd_fit(args: FitArgs) -> Result<()> {
    let cfg = FileConfig::load(args.model.config.as_deref())?;
    let model = resolve_model(&args.model, &cfg, 0.05)?;
    let data = read_csv(&args.input)?;
    validate_responses(&data, model.family)?;
    let loss = model.compile_loss(&data)?;

    let cv_candidates = args.cv.clone().or_else(|| cfg.cv.clone());
    let (h, cv_note) = match (model.h, cv_candidates) {
        (Some(h), _) => (h, None),
        (None, Some(cands)) => {
            let cv = CvSpec::holdout(cands, model.seed)?;
            let out = with_jobs(model.jobs, || {
                robust_cv(&data, &loss, model.kernel_shape, &cv, &model.search)
            })??;
            (out.selected, Some(out))
        }
        (None, None) => {
            return Err(GplmError::InvalidSpec(
                "either --h or --cv candidates are required".into(),
            ))
        }
    };
    let kernel = KernelSpec::new(model.kernel_shape, h)?;
    let (mut fit, sw) = with_jobs(model.jobs, || -> Result<_> {
        let fit = fit_beta(&data, &loss, &kernel, &model.search)?;
        let sw = sandwich(&fit, &data, &loss, &kernel)?;
        Ok((fit, sw))
    })??;
    fit.cov_beta = Some(sw.cov_beta.clone());
    fit.se_beta = Some(sw.standard_errors());

    write_fit_csv(&args.out, &fit, &sw.condition_number)?;
    if let Some(cv) = &cv_note {
        println!("bandwidth selected by cross-validation: h = {h}");
        for (hk, lk) in cv_losses_iter(cv) {
            println!("  candidate h = {hk:<8} validation loss = {lk:.6}");
        }
    }
    print_fit_summary(&fit, &sw.standard_errors(), sw.near_singular, &args.out);
    Ok(())
}

fn print_fit_summary(fit: &FitResult, se: &[f64], near_singular: bool, out: &Path) {
    println!(
        "fit: loss={} kernel={} h={:.3}",
        fit.loss_label,
        fit.kernel.shape.label(),
        fit.kernel.h
    );
    for (j, b) in fit.beta_hat.iter().enumerate() {
        println!("  beta[{}] = {:.3}  (se {:.3})", j + 1, b, se[j]);
    }
    println!(
        "  objective = {:.6}  score_norm = {:.3e}",
        fit.objective, fit.score_norm
    );
    if fit.boundary_local_fits > 0 {
        println!(
            "  note: {} local fits pinned at their search boundary",
            fit.boundary_local_fits
        );
    }
    if fit.beta_on_boundary {
        println!("  warning: estimate on the search-grid boundary; widen --grid-halfwidth");
    }
    if near_singular {
        println!("  warning: curvature matrix near singular; covariance unreliable");
    }
    println!("written: {}", out.display());
}

// ---- cv -----------------------------------------------------------------

fn cmd_cv(args: CvArgs) -> Result<()> {
    let cfg = FileConfig::load(args.model.config.as_deref())?;
    let model = resolve_model(&args.model, &cfg, 0.05)?;
    let data = read_csv(&args.input)?;
    validate_responses(&data, model.family)?;
    let loss = model.compile_loss(&data)?;
    let candidates = args
        .cv
        .clone()
        .or_else(|| cfg.cv.clone())
        .ok_or_else(|| GplmError::InvalidSpec("--cv candidate list is required".into()))?;
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(0.2);
    let splits = args.splits.or(cfg.splits).unwrap_or(1);
    let cv = CvSpec::new(alpha, candidates, model.seed, splits)?;
    let out = with_jobs(model.jobs, || {
        robust_cv(&data, &loss, model.kernel_shape, &cv, &model.search)
    })??;

    let mut text = String::from("h,validation_loss,selected\n");
    for (hk, lk) in cv.candidates.iter().zip(&out.losses) {
        let _ = writeln!(
            text,
            "{},{},{}",
            format_full(*hk),
            format_full(*lk),
            u8::from(*hk == out.selected)
        );
    }
    std::fs::write(&args.out, text)?;

    println!("selected h = {}", out.selected);
    for (hk, lk) in cv_losses_iter(&out) {
        println!("  candidate h = {hk:<8} validation loss = {lk:.6}");
    }
    // refit on the full sample at the selected bandwidth
    let kernel = KernelSpec::new(model.kernel_shape, out.selected)?;
    let fit = with_jobs(model.jobs, || fit_beta(&data, &loss, &kernel, &model.search))??;
    for (j, b) in fit.beta_hat.iter().enumerate() {
        println!("refit beta[{}] = {:.3}", j + 1, b);
    }
    println!("written: {}", args.out.display());
    Ok(())
}

fn cv_losses_iter(out: &crate::bandwidth::CvOutcome) -> Vec<(f64, f64)> {
    out.candidates
        .iter()
        .copied()
        .zip(out.losses.iter().copied())
        .collect()
}

// ---- test ---------------------------------------------------------------

fn cmd_test(args: TestArgs) -> Result<()> {
    let cfg = FileConfig::load(args.model.config.as_deref())?;
    let model = resolve_model(&args.model, &cfg, 0.05)?;
    let data = read_csv(&args.input)?;
    validate_responses(&data, model.family)?;
    let loss = model.compile_loss(&data)?;
    let h = model
        .h
        .ok_or_else(|| GplmError::InvalidSpec("--h is required for tests".into()))?;
    let kernel = KernelSpec::new(model.kernel_shape, h)?;
    let restriction: Vec<usize> = args
        .restrict
        .iter()
        .map(|&j| {
            j.checked_sub(1).ok_or_else(|| {
                GplmError::InvalidSpec("restriction indices are 1-based".into())
            })
        })
        .collect::<Result<_>>()?;

    let (wald, lambda, full) = with_jobs(model.jobs, || -> Result<_> {
        let (lambda, full, _null) = lambda_test(
            &data,
            &loss,
            &kernel,
            &restriction,
            &model.search,
            model.seed,
        )?;
        let sw = sandwich(&full, &data, &loss, &kernel)?;
        let wald = wald_test(&full, &sw, &restriction)?;
        Ok((wald, lambda, full))
    })??;

    let mut text = String::from("method,statistic,p_value,df\n");
    let _ = writeln!(
        text,
        "wald,{},{},{}",
        format_full(wald.statistic),
        format_full(wald.p_value),
        wald.df.unwrap_or(0)
    );
    let _ = writeln!(
        text,
        "lambda,{},{},",
        format_full(lambda.statistic),
        format_full(lambda.p_value)
    );
    std::fs::write(&args.out, text)?;

    println!(
        "restriction: beta[{}] = 0",
        args.restrict
            .iter()
            .map(|j| j.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    print_test("wald", &wald);
    print_test("lambda", &lambda);
    for (j, b) in full.beta_hat.iter().enumerate() {
        println!("full fit beta[{}] = {:.3}", j + 1, b);
    }
    println!("written: {}", args.out.display());
    Ok(())
}

fn print_test(name: &str, t: &TestResult) {
    println!(
        "{name}: statistic = {:.3}  p = {:.4}{}",
        t.statistic,
        t.p_value,
        t.df.map(|d| format!("  (df {d})")).unwrap_or_default()
    );
}

// ---- simulate -----------------------------------------------------------

fn cmd_simulate(args: SimArgs) -> Result<()> {
    let cfg = FileConfig::load(args.model.config.as_deref())?;
    let study_no = args
        .study
        .or(cfg.study)
        .ok_or_else(|| GplmError::InvalidSpec("--study 1|2|3 is required".into()))?;
    let study = match study_no {
        1 => Study::S1,
        2 => Study::S2,
        3 => Study::S3,
        other => {
            return Err(GplmError::InvalidSpec(format!(
                "unknown study {other} (valid: 1, 2, 3)"
            )))
        }
    };
    // study defaults mirror the reference setup
    let default_step = match study {
        Study::S2 => 0.01,
        _ => 0.05,
    };
    let model = resolve_model(&args.model, &cfg, default_step)?;
    let n = args.n.or(cfg.n).unwrap_or(match study {
        Study::S1 | Study::S2 => 100,
        Study::S3 => 200,
    });
    let contamination_arg = match (args.contamination, &cfg.contamination) {
        (Some(c), _) => Some(c),
        (None, Some(s)) => Some(parse_enum::<ContaminationArg>("contamination", s)?),
        _ => None,
    };
    let outliers = args.outliers.or(cfg.outliers);
    let contamination = match (study, contamination_arg, outliers) {
        (Study::S2, None, Some(k)) if k > 0 => Contamination::S2Outliers(k),
        (Study::S2, None, _) => Contamination::None,
        (_, Some(ContaminationArg::None) | None, None) => Contamination::None,
        (Study::S3, Some(ContaminationArg::C1), None) => Contamination::C1,
        (Study::S3, Some(ContaminationArg::C2), None) => Contamination::C2,
        (Study::S3, Some(ContaminationArg::C3), None) => Contamination::C3,
        _ => {
            return Err(GplmError::InvalidSpec(
                "invalid study/contamination pairing (--outliers is study 2 only, \
                 --contamination c1|c2|c3 is study 3 only)"
                    .into(),
            ))
        }
    };
    let mut spec = StudySpec::new(study, n, contamination, model.seed)?;
    if let Some(v) = args.study2_t_var.or(cfg.study2_t_var) {
        spec.study2_t_var = v;
    }
    let reps = args.reps.or(cfg.reps).unwrap_or(1);
    let estimators: Vec<EstimatorSpec> = match &args.estimators {
        Some(list) => list
            .iter()
            .map(|l| match l {
                LossArg::Qal => Ok(EstimatorSpec::qal()),
                LossArg::Rql => EstimatorSpec::rql(args.model.c.unwrap_or(PsiHuber::DEFAULT_C)),
                LossArg::Mod => EstimatorSpec::modified_ch(args.model.c.unwrap_or(0.5)),
            })
            .collect::<Result<_>>()?,
        None => EstimatorSpec::reference_trio(),
    };
    let cv_candidates = args.cv.clone().or_else(|| cfg.cv.clone());
    let bandwidth = match (model.h, cv_candidates) {
        (Some(h), _) => BandwidthChoice::Fixed(h),
        (None, Some(cands)) => BandwidthChoice::Cv(CvSpec::holdout(cands, model.seed)?),
        (None, None) => {
            return Err(GplmError::InvalidSpec(
                "either --h or --cv candidates are required".into(),
            ))
        }
    };

    let summaries = with_jobs(model.jobs, || {
        run_monte_carlo(&spec, &estimators, &bandwidth, &model.search, reps)
    })??;

    write_summary_csv(&args.out, &spec, &summaries)?;
    if args.raw {
        let raw_path = raw_path_of(&args.out);
        write_raw_csv(&raw_path, &spec, &summaries)?;
        println!("raw records: {}", raw_path.display());
    }
    print_summary_table(&spec, &summaries);
    println!("written: {}", args.out.display());
    Ok(())
}

fn raw_path_of(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sim");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}_raw.{ext}"))
}

fn print_summary_table(spec: &StudySpec, summaries: &[McSummary]) {
    println!(
        "study {} contamination {} ({} replications)",
        spec.label(),
        spec.contamination.label(),
        summaries.first().map_or(0, |s| s.reps + s.failures)
    );
    println!(
        "{:<6} {:>8} {:>9} {:>9} {:>10} {:>10}",
        "est", "h", "bias", "sd", "mse_beta", "mse_eta"
    );
    for s in summaries {
        println!(
            "{:<6} {:>8} {:>9} {:>9} {:>10} {:>10}",
            s.estimator,
            s.h_label,
            pretty3(s.bias),
            pretty3(s.sd),
            pretty3(s.mse_beta),
            pretty3(s.mse_eta)
        );
    }
}

fn pretty3(v: f64) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{v:.3}")
    }
}

// ---- CSV plumbing -------------------------------------------------------

/// Full round-trip float formatting (17 significant digits).
pub fn format_full(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Parse a float written by [`format_full`].
pub fn parse_full(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

/// Read `y,x1..xp,t` CSV with a header row.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(GplmError::Data {
        line: 1,
        message: "no observations (empty file)".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || !cols[0].eq_ignore_ascii_case("y")
        || !cols.last().unwrap().eq_ignore_ascii_case("t")
    {
        return Err(GplmError::Data {
            line: 1,
            message: format!(
                "expected header 'y,x1..xp,t', found '{}'",
                header.trim()
            ),
        });
    }
    let p = cols.len() - 2;
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut t = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != p + 2 {
            return Err(GplmError::Data {
                line: line_no,
                message: format!("expected {} cells, found {}", p + 2, cells.len()),
            });
        }
        let parse = |cell: &str, what: &str| -> Result<f64> {
            let v: f64 = cell.parse().map_err(|_| GplmError::Data {
                line: line_no,
                message: format!("cannot parse {what} '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(GplmError::Data {
                    line: line_no,
                    message: format!("non-finite {what} '{cell}'"),
                });
            }
            Ok(v)
        };
        y.push(parse(cells[0], "response")?);
        let mut row = Vec::with_capacity(p);
        for (j, cell) in cells[1..1 + p].iter().enumerate() {
            row.push(parse(cell, &format!("covariate x{}", j + 1))?);
        }
        x.push(row);
        t.push(parse(cells[p + 1], "index point")?);
    }
    if y.is_empty() {
        return Err(GplmError::Data {
            line: 1,
            message: "no observations".into(),
        });
    }
    Dataset::new(y, x, t).map_err(|e| match e {
        GplmError::Design(m) => GplmError::Data { line: 1, message: m },
        other => other,
    })
}

/// Response-vs-family validation naming the offending input row.
pub fn validate_responses(data: &Dataset, family: Family) -> Result<()> {
    for canon in 0..data.n() {
        if family.validate_response(data.y()[canon]).is_err() {
            // +2: header line plus 1-based data rows
            let line = data.orig_index()[canon] + 2;
            return Err(GplmError::Data {
                line,
                message: format!(
                    "response {} outside the support of {}",
                    data.y()[canon],
                    family.label()
                ),
            });
        }
    }
    Ok(())
}

/// Serialized fit: one record per line, full precision.
pub fn write_fit_csv(path: &Path, fit: &FitResult, cond_a: &f64) -> Result<()> {
    let mut text = String::from("field,index,t,value\n");
    for (j, b) in fit.beta_hat.iter().enumerate() {
        let _ = writeln!(text, "beta,{},,{}", j + 1, format_full(*b));
    }
    if let Some(se) = &fit.se_beta {
        for (j, s) in se.iter().enumerate() {
            let _ = writeln!(text, "se,{},,{}", j + 1, format_full(*s));
        }
    }
    if let Some(cov) = &fit.cov_beta {
        for (i, row) in cov.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(
                    text,
                    "cov,{},,{}",
                    (i + 1) * 1000 + (j + 1),
                    format_full(*v)
                );
            }
        }
    }
    let _ = writeln!(text, "objective,,,{}", format_full(fit.objective));
    let _ = writeln!(text, "score_norm,,,{}", format_full(fit.score_norm));
    let _ = writeln!(text, "h,,,{}", format_full(fit.kernel.h));
    let _ = writeln!(text, "cond_a,,,{}", format_full(*cond_a));
    let _ = writeln!(text, "boundary_local_fits,,,{}", fit.boundary_local_fits);
    for (i, (t, e)) in fit.eta_at.iter().enumerate() {
        let _ = writeln!(
            text,
            "eta,{},{},{}",
            i + 1,
            format_full(*t),
            format_full(*e)
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Parsed-back fit file (round-trip checks and downstream tooling).
#[derive(Debug, Default, PartialEq)]
pub struct FitCsv {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub objective: f64,
    pub score_norm: f64,
    pub h: f64,
    pub eta: Vec<(f64, f64)>,
}

pub fn parse_fit_csv(text: &str) -> Result<FitCsv> {
    let mut out = FitCsv::default();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(GplmError::Data {
                line: idx + 1,
                message: "expected 4 cells".into(),
            });
        }
        let val = parse_full(cells[3]).ok_or(GplmError::Data {
            line: idx + 1,
            message: format!("bad value '{}'", cells[3]),
        })?;
        match cells[0] {
            "beta" => out.beta.push(val),
            "se" => out.se.push(val),
            "objective" => out.objective = val,
            "score_norm" => out.score_norm = val,
            "h" => out.h = val,
            "eta" => {
                let t = parse_full(cells[2]).ok_or(GplmError::Data {
                    line: idx + 1,
                    message: format!("bad t '{}'", cells[2]),
                })?;
                out.eta.push((t, val));
            }
            _ => {}
        }
    }
    Ok(out)
}

fn write_summary_csv(path: &Path, spec: &StudySpec, summaries: &[McSummary]) -> Result<()> {
    let mut text =
        String::from("study,contamination,estimator,h,reps,failures,bias,sd,mse_beta,mse_eta\n");
    for s in summaries {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            spec.label(),
            spec.contamination.label(),
            s.estimator,
            s.h_label,
            s.reps,
            s.failures,
            format_full(s.bias),
            format_full(s.sd),
            format_full(s.mse_beta),
            format_full(s.mse_eta)
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_raw_csv(path: &Path, spec: &StudySpec, summaries: &[McSummary]) -> Result<()> {
    let mut text = String::from("study,contamination,estimator,h,rep,beta_hat,mse_eta\n");
    for s in summaries {
        for r in &s.raw {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{}",
                spec.label(),
                spec.contamination.label(),
                s.estimator,
                format_full(r.h),
                r.rep,
                format_full(r.beta_hat),
                format_full(r.mse_eta)
            );
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
