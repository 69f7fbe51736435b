mod svg;

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use levy_shrink::data::{
    cv_tune, default_grid, fold_ids, holdout_benchmark, load_csv, read_csv_raw, Dataset, GridKind, HoldoutConfig,
};
use levy_shrink::em::{em_lla, em_ridge_mixture, EmOptions, LinearProblem};
use levy_shrink::levy::{Family, SubordinatorSpec};
use levy_shrink::means::{MeansProblem, ShrinkagePrior};
use levy_shrink::ortho::{fb_beta_estimate, gibbs_fit, kappa_weights, reconstruct_beta, svd_orthogonalize, GibbsConfig, Method};
use levy_shrink::par::Execution;
use levy_shrink::penalty::{PenaltySpec, PriorDensity, Transform};
use levy_shrink::probit::{rspike_benchmark, summarize, ProbitGibbsConfig, RSpikeSpec};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use svg::Series;

#[derive(Parser, Debug)]
#[command(name = "levy-shrink", version, about = "Shrinkage penalties, posterior means and SVD-shrinkage regression from Levy subordinators")]
struct Cli {
    /// Output directory; created if absent. Nothing is written outside it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Also write an SVG plot where the command has one.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Penalty tables.
    #[command(subcommand)]
    Penalty(PenaltyCmd),
    /// Posterior mean E(β | y) on a grid of y, by three evaluators.
    MeanCurve(MeanCurveArgs),
    /// Fit a regression to a CSV file.
    #[command(subcommand)]
    Fit(FitCmd),
    /// Sample subordinator increments on a regular grid.
    Simulate(SimulateArgs),
    /// Desk-scale benchmarks.
    #[command(subcommand)]
    Benchmark(BenchCmd),
}

#[derive(Subcommand, Debug)]
enum PenaltyCmd {
    /// Tabulate penalty, EM weight and normalized log prior on a β grid.
    Eval(PenaltyEvalArgs),
}

#[derive(Subcommand, Debug)]
enum FitCmd {
    /// Posterior mode by EM (mixture-of-ridge for sq, reweighted lasso for abs).
    Em(FitEmArgs),
    /// Shrinkage in the SVD coordinates of the standardized design.
    Ortho(FitOrthoArgs),
}

#[derive(Subcommand, Debug)]
enum BenchCmd {
    /// Sparse probit regression: horseshoe vs lasso vs maximum likelihood.
    ProbitRspike(RspikeArgs),
    /// Repeated 75/25 train/test splits of a CSV dataset.
    Holdout(HoldoutArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TransformArg {
    /// β²/2
    Sq,
    /// |β|
    Abs,
}

impl From<TransformArg> for Transform {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Sq => Transform::HalfSquare,
            TransformArg::Abs => Transform::Abs,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrthoMethod {
    Rr,
    Pcr,
    Pls,
    Gprior,
    Bayes,
}

const FAMILY_HELP: &str = "gamma | stable[:alpha] | ig[:rate] | cp[:rate:sd] | drift";

#[derive(Args, Debug)]
struct PenaltyEvalArgs {
    #[arg(long, help = FAMILY_HELP, value_parser = family_arg)]
    family: String,
    #[arg(long, value_enum, default_value = "sq")]
    transform: TransformArg,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    nu: f64,
    /// lo:hi:step, endpoints inclusive.
    #[arg(long, allow_hyphen_values = true, default_value = "-3:3:0.1", value_parser = grid_arg)]
    grid: String,
}

#[derive(Args, Debug)]
struct MeanCurveArgs {
    /// lasso | ridge | horseshoe, or a family (half-square transform).
    #[arg(long, value_parser = penalty_arg)]
    penalty: String,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    nu: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    sigma: f64,
    #[arg(long, default_value_t = 10.0, value_parser = positive)]
    ymax: f64,
    /// Number of y values in [0, ymax].
    #[arg(long, default_value_t = 41, value_parser = at_least::<2>)]
    n: usize,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Numeric CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    response: String,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_csv(&self.data, &self.response).with_context(|| format!("reading {}", self.data.display()))
    }

    fn load_raw(&self) -> Result<Dataset> {
        read_csv_raw(&self.data, &self.response).with_context(|| format!("reading {}", self.data.display()))
    }
}

#[derive(Args, Debug)]
struct FitEmArgs {
    /// lasso | ridge, or a family.
    #[arg(long, value_parser = penalty_arg)]
    penalty: String,
    #[arg(long, value_enum, default_value = "sq")]
    transform: TransformArg,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    nu: f64,
    /// Noise standard deviation on the centered response.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    sigma: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct FitOrthoArgs {
    #[arg(long, value_enum)]
    method: OrthoMethod,
    #[command(flatten)]
    data: DataArgs,
    /// Ridge penalty; tuned by 10-fold CV when omitted.
    #[arg(long, value_parser = positive)]
    nu: Option<f64>,
    /// Number of components for pcr/pls; tuned by CV when omitted.
    #[arg(long = "K", value_parser = at_least::<1>)]
    k: Option<usize>,
    /// g-prior scale; tuned by CV when omitted.
    #[arg(long, value_parser = positive)]
    g: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value_t = 2_000)]
    burn: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, help = FAMILY_HELP, value_parser = family_arg)]
    family: String,
    /// Total time s; increments have step s/steps.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    time: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
}

#[derive(Args, Debug)]
struct RspikeArgs {
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 25)]
    p: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Number of nonzero coefficients.
    #[arg(long, default_value_t = 5)]
    r: usize,
    #[arg(long, default_value_t = 4000)]
    iters: usize,
    #[arg(long, default_value_t = 1000)]
    burn: usize,
}

#[derive(Args, Debug)]
struct HoldoutArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 4000)]
    iters: usize,
    #[arg(long, default_value_t = 1000)]
    burn: usize,
}

fn parse_family(s: &str) -> Result<Family> {
    let mut parts = s.split(':');
    let name = parts.next().unwrap_or_default().to_ascii_lowercase();
    let nums: Vec<f64> = parts.map(|p| p.parse::<f64>().with_context(|| format!("bad number '{p}' in family '{s}'"))).collect::<Result<_>>()?;
    let arg = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
    let max_args = match name.as_str() {
        "gamma" | "drift" => 0,
        "stable" | "ig" | "inverse-gaussian" => 1,
        "cp" | "compound-poisson" => 2,
        _ => bail!("unknown family '{s}' (expected {FAMILY_HELP})"),
    };
    if nums.len() > max_args {
        bail!("family '{name}' takes at most {max_args} parameters");
    }
    let f = match name.as_str() {
        "gamma" => Family::Gamma,
        "drift" => Family::Drift,
        "stable" => Family::Stable { alpha: arg(0, 0.5) },
        "ig" | "inverse-gaussian" => Family::InverseGaussian { rate: arg(0, 1.0) },
        _ => Family::CompoundPoisson { jump_rate: arg(0, 1.0), jump_sd: arg(1, 1.0) },
    };
    f.validate()?;
    Ok(f)
}

fn parse_penalty(name: &str, transform: Transform, nu: f64) -> Result<PenaltySpec> {
    Ok(match (name.to_ascii_lowercase().as_str(), transform) {
        ("lasso", Transform::HalfSquare) => PenaltySpec::lasso(nu)?,
        ("lasso", Transform::Abs) => PenaltySpec::new(Family::Drift, Transform::Abs, nu)?,
        ("ridge" | "normal", Transform::HalfSquare) => PenaltySpec::ridge(nu)?,
        ("ridge" | "normal", Transform::Abs) => bail!("ridge is a half-square penalty"),
        _ => PenaltySpec::new(parse_family(name)?, transform, nu)?,
    })
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be positive and finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn at_least<const MIN: usize>(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= MIN => Ok(v),
        Ok(_) => Err(format!("must be at least {MIN}")),
        Err(e) => Err(e.to_string()),
    }
}

fn family_arg(s: &str) -> std::result::Result<String, String> {
    parse_family(s).map(|_| s.to_string()).map_err(|e| format!("{e:#}"))
}

fn penalty_arg(s: &str) -> std::result::Result<String, String> {
    match s.to_ascii_lowercase().as_str() {
        "lasso" | "ridge" | "normal" | "horseshoe" => Ok(s.to_string()),
        _ => family_arg(s),
    }
}

fn grid_arg(s: &str) -> std::result::Result<String, String> {
    parse_grid(s).map(|_| s.to_string()).map_err(|e| format!("{e:#}"))
}

/// `lo:hi:step` with both endpoints included up to 1e-12.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>().with_context(|| format!("bad grid '{s}'"))).collect::<Result<_>>()?;
    let [lo, hi, step] = v[..] else { bail!("grid must be lo:hi:step, got '{s}'") };
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        bail!("grid needs lo ≤ hi and step > 0, got '{s}'");
    }
    let count = ((hi - lo) / step + 1e-12).floor() as usize + 1;
    if count > 10_000_000 {
        bail!("grid '{s}' has too many points");
    }
    let mut out: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    if let Some(last) = out.last() {
        if hi - last > 1e-12 * hi.abs().max(1.0) && hi - last >= step - 1e-12 * step {
            out.push(hi);
        }
    }
    Ok(out)
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Drop the sign of negative zero.
        (v + 0.0).to_string()
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

struct Ctx<'a> {
    out: &'a Path,
    seed: u64,
    plot: bool,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn svg(&self, name: &str, body: String) -> Result<()> {
        if self.plot {
            fs::write(self.path(name), body)?;
        }
        Ok(())
    }
}

fn penalty_eval(a: &PenaltyEvalArgs, ctx: &Ctx) -> Result<()> {
    let spec = PenaltySpec::new(parse_family(&a.family)?, a.transform.into(), a.nu)?;
    let grid = parse_grid(&a.grid)?;
    let prior = PriorDensity::new(spec).ok();
    if prior.is_none() {
        eprintln!("note: exp(-penalty) is not normalizable; log_density left empty");
    }
    let rows = grid.iter().map(|&b| {
        let ld = prior.as_ref().map_or(f64::NAN, |p| p.log_density(b));
        vec![num(b), num(spec.penalty_value(b)), num(spec.em_weight(b)), num(ld)]
    });
    write_table(&ctx.path("penalty.csv"), &["beta", "penalty", "weight", "log_density"], rows)?;
    let pts: Vec<(f64, f64)> = grid.iter().map(|&b| (b, spec.penalty_value(b))).collect();
    ctx.svg("penalty.svg", svg::plot("Penalty", "beta", "penalty", &[Series { label: a.family.clone(), points: pts, bars: None, lines: true }]))
}

fn mean_curve(a: &MeanCurveArgs, ctx: &Ctx) -> Result<()> {
    let prior = match a.penalty.to_ascii_lowercase().as_str() {
        "horseshoe" => ShrinkagePrior::horseshoe(),
        name => ShrinkagePrior::Penalty(parse_penalty(name, Transform::HalfSquare, a.nu)?),
    };
    let prob = MeansProblem::new(prior, a.sigma)?;
    let ys: Vec<f64> = (0..a.n).map(|i| a.ymax * i as f64 / (a.n - 1) as f64).collect();
    let curve = prob.shrinkage_curve(&ys, Execution::default())?;
    let rows = curve.iter().map(|p| vec![num(p.y), num(p.ps), p.levy.map_or(String::new(), num), num(p.oracle)]);
    write_table(&ctx.path("mean_curve.csv"), &["y", "mean_ps", "mean_levy", "mean_oracle"], rows)?;
    let series = vec![
        Series { label: "E(beta | y)".into(), points: curve.iter().map(|p| (p.y, p.oracle)).collect(), bars: None, lines: true },
        Series { label: "y".into(), points: vec![(0.0, 0.0), (a.ymax, a.ymax)], bars: None, lines: true },
    ];
    ctx.svg("mean_curve.svg", svg::plot(&format!("Posterior mean, {} prior", a.penalty), "y", "E(beta | y)", &series))
}

fn fit_em(a: &FitEmArgs, ctx: &Ctx) -> Result<()> {
    let transform: Transform = a.transform.into();
    let spec = parse_penalty(&a.penalty, transform, a.nu)?;
    let d = a.data.load()?;
    let prob = LinearProblem::new(d.x.clone(), d.y.clone(), a.sigma)?;
    let opts = EmOptions { max_iter: a.max_iter, ..EmOptions::default() };
    let trace = match transform {
        Transform::HalfSquare => em_ridge_mixture(&prob, &spec, None, opts)?,
        Transform::Abs => em_lla(&prob, &spec, None, opts)?,
    };
    if !trace.converged {
        eprintln!("warning: EM stopped after {} iterations without meeting the tolerance", trace.iterations);
    }
    let beta = trace.solution();
    write_table(&ctx.path("coefficients.csv"), &["variable", "coefficient"], d.column_names.iter().zip(beta.iter()).map(|(n, b)| vec![n.clone(), num(*b)]))?;
    write_table(&ctx.path("trace.csv"), &["iter", "objective"], trace.objectives.iter().enumerate().map(|(i, o)| vec![i.to_string(), num(*o)]))?;
    let pts = trace.objectives.iter().enumerate().map(|(i, o)| (i as f64, *o)).collect();
    ctx.svg("trace.svg", svg::plot("EM objective", "iteration", "objective", &[Series { label: a.penalty.clone(), points: pts, bars: None, lines: true }]))
}

fn fit_ortho(a: &FitOrthoArgs, ctx: &Ctx) -> Result<()> {
    let d = a.data.load()?;
    let model = svd_orthogonalize(&d.x, &d.y)?;
    let r = model.rank();
    let (beta, kappa, lo, hi, label) = if let OrthoMethod::Bayes = a.method {
        let cfg = GibbsConfig { iterations: a.iters, burn_in: a.burn, seed: ctx.seed, ..GibbsConfig::default() };
        let s = gibbs_fit(&model, &cfg)?;
        (fb_beta_estimate(&model, &s)?, s.kappa_fb, s.kappa_lower, s.kappa_upper, "fully Bayes".to_string())
    } else {
        let (fixed, kind) = match a.method {
            OrthoMethod::Rr => (a.nu.map(Method::Ridge), GridKind::Ridge),
            OrthoMethod::Pcr => (a.k.map(Method::Pcr), GridKind::Pcr),
            OrthoMethod::Pls => (a.k.map(Method::Pls), GridKind::Pls),
            OrthoMethod::Gprior => (a.g.map(Method::GPrior), GridKind::GPrior),
            OrthoMethod::Bayes => unreachable!(),
        };
        let method = match fixed {
            Some(m) => m,
            None => {
                let folds = fold_ids(d.n(), 10.min(d.n()), ctx.seed);
                let cv = cv_tune(&d.x, &d.y, &default_grid(kind, &d.x, r), &folds, Execution::default())?;
                eprintln!("cross-validation chose {:?}", cv.chosen);
                cv.chosen
            }
        };
        let k = kappa_weights(&model, method)?.kappa;
        (reconstruct_beta(&model, &k)?, k.clone(), k.clone(), k, format!("{method:?}"))
    };
    write_table(&ctx.path("coefficients.csv"), &["variable", "coefficient"], d.column_names.iter().zip(beta.iter()).map(|(n, b)| vec![n.clone(), num(*b)]))?;
    let dvals = model.singular();
    let rows = (0..r).map(|j| vec![(j + 1).to_string(), num(dvals[j]), num(kappa[j]), num(lo[j]), num(hi[j])]);
    write_table(&ctx.path("kappa.csv"), &["component", "d", "kappa", "lo75", "hi75"], rows)?;
    let series = Series {
        label,
        points: (0..r).map(|j| ((j + 1) as f64, kappa[j])).collect(),
        bars: Some((0..r).map(|j| (lo[j], hi[j])).collect()),
        lines: false,
    };
    ctx.svg("kappa.svg", svg::plot("Shrinkage weight per component", "component", "kappa", &[series]))
}

fn simulate(a: &SimulateArgs, ctx: &Ctx) -> Result<()> {
    let spec = SubordinatorSpec::new(parse_family(&a.family)?, a.time)?;
    let inc = spec.sample_increments(a.steps, ctx.seed)?;
    write_table(&ctx.path("increments.csv"), &["index", "increment"], inc.values().iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v)]))?;
    let mut acc = 0.0;
    let mut pts = vec![(0.0, 0.0)];
    for (i, v) in inc.values().iter().enumerate() {
        acc += v;
        pts.push(((i + 1) as f64 * inc.grid_step(), acc));
    }
    ctx.svg("path.svg", svg::plot("Sample path", "time", "T(s)", &[Series { label: a.family.clone(), points: pts, bars: None, lines: true }]))
}

fn probit_rspike(a: &RspikeArgs, ctx: &Ctx) -> Result<()> {
    if a.r == 0 || a.r > a.p {
        bail!("r must lie in 1..=p");
    }
    let gibbs = ProbitGibbsConfig { iterations: a.iters, burn_in: a.burn, ..ProbitGibbsConfig::default() };
    let res = rspike_benchmark(&RSpikeSpec::new(a.p, a.n, a.r), a.reps, ctx.seed, &gibbs, Execution::default())?;
    let rows = summarize(&res).into_iter().map(|r| vec![r.method, num(r.median_sse), num(r.mean_sse)]);
    write_table(&ctx.path("probit_rspike.csv"), &["method", "median_sse", "mean_sse"], rows)
}

fn holdout(a: &HoldoutArgs, ctx: &Ctx) -> Result<()> {
    let d = a.data.load_raw()?;
    let mut cfg = HoldoutConfig { splits: a.reps, seed: ctx.seed, ..HoldoutConfig::default() };
    cfg.gibbs.iterations = a.iters;
    cfg.gibbs.burn_in = a.burn;
    let rep = holdout_benchmark(&d, &cfg)?;
    let rows = rep.methods.iter().zip(rep.mean_sse()).map(|(m, s)| vec![m.clone(), num(s)]);
    write_table(&ctx.path("holdout.csv"), &["method", "mean_sse"], rows)
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx { out: &cli.out, seed: cli.seed, plot: cli.plot };
    match &cli.command {
        Command::Penalty(PenaltyCmd::Eval(a)) => penalty_eval(a, &ctx),
        Command::MeanCurve(a) => mean_curve(a, &ctx),
        Command::Fit(FitCmd::Em(a)) => fit_em(a, &ctx),
        Command::Fit(FitCmd::Ortho(a)) => fit_ortho(a, &ctx),
        Command::Simulate(a) => simulate(a, &ctx),
        Command::Benchmark(BenchCmd::ProbitRspike(a)) => probit_rspike(a, &ctx),
        Command::Benchmark(BenchCmd::Holdout(a)) => holdout(a, &ctx),
    }
}

/// Subcommand path and every argument value of the leaf command.
fn describe(matches: &ArgMatches) -> (String, serde_json::Map<String, serde_json::Value>) {
    let mut names = Vec::new();
    let mut m = matches;
    let mut cmd = Cli::command();
    while let Some((name, sub)) = m.subcommand() {
        names.push(name.to_string());
        cmd = cmd.find_subcommand(name).expect("parsed subcommand exists").clone();
        m = sub;
    }
    let args: Vec<String> = cmd.get_arguments().map(|a| a.get_id().to_string()).collect();
    let mut flags = serde_json::Map::new();
    for id in m.ids().filter(|id| args.iter().any(|a| a == id.as_str()) || ["out", "seed", "plot"].contains(&id.as_str())) {
        if let Ok(Some(raw)) = m.try_get_raw(id.as_str()) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            let v = if vals.len() == 1 { serde_json::Value::String(vals[0].clone()) } else { vals.into() };
            flags.insert(id.to_string(), v);
        }
    }
    (names.join(" "), flags)
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let started = chrono::Utc::now();
    let clock = Instant::now();
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create output directory {}: {e}", cli.out.display());
        return ExitCode::from(1);
    }
    let result = run(&cli);
    let (command, flags) = describe(&matches);
    let manifest = serde_json::json!({
        "command": command,
        "flags": flags,
        "seed": cli.seed,
        "started": started.to_rfc3339(),
        "elapsed_s": clock.elapsed().as_secs_f64(),
    });
    let written = serde_json::to_string_pretty(&manifest)
        .map_err(anyhow::Error::from)
        .and_then(|s| fs::write(cli.out.join("manifest.json"), s + "\n").map_err(Into::into));
    if let Err(e) = written {
        eprintln!("error: cannot write manifest: {e:#}");
        return ExitCode::from(1);
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
