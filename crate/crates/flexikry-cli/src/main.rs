//! Experiment runner: builds one shared test problem per command, runs the
//! requested solvers on it, and writes CSV traces, PGM reconstructions, and
//! a manifest that doubles as a `--config` file for reproduction.
//!
//! Exit codes: 0 success, 1 runtime or IO failure, 2 usage error.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use flexikry::groups::TreeStrategy;
use flexikry::pgm::{read_pgm, write_pgm_scaled};
use flexikry::problems::{
    gen_anomaly, gen_dynamic_deblur, gen_wavelet_deblur_from, TestProblem,
};
use flexikry::solvers::{run, SolverConfig, SolverTrace, Variant};
use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "flexikry",
    version,
    about = "Flexible Krylov solvers for group-sparsity regularized inverse problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Image deblurring with wavelet-domain parent/child group sparsity
    DeblurWavelet(WaveletArgs),
    /// Space-time deblurring of a 50x50x9 volume with temporal pixel groups
    DynamicDeblur(CommonArgs),
    /// Smooth-background plus sparse-anomaly estimation with priors
    Anomaly(AnomalyArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Comma-separated solver names to run on the shared problem
    #[arg(long)]
    solvers: Option<String>,
    /// Relative noise level added to the exact data
    #[arg(long)]
    noise: Option<f64>,
    /// Discrepancy-principle safety factor
    #[arg(long)]
    eta: Option<f64>,
    /// Maximum iterations per solver
    #[arg(long)]
    iters: Option<usize>,
    /// RNG seed; falls back to FLEXIKRY_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Key = value settings file; explicit flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Mixing ratio for combined-regularizer solvers; defaults to 1.2 for
    /// the LSQR family and 0.8 for the GMRES family
    #[arg(long)]
    tau_lambda: Option<f64>,
    /// Coupling alpha = gamma * lambda for decomposition solvers
    #[arg(long)]
    gamma: Option<f64>,
    /// Run the solvers on separate threads (outputs are unchanged)
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct WaveletArgs {
    /// Image side length; must be divisible by 2^levels
    #[arg(long)]
    size: Option<usize>,
    /// Wavelet decomposition levels
    #[arg(long)]
    levels: Option<usize>,
    /// Tree grouping strategy: G1 (parent/child pairs) or G2 (parent plus
    /// its four children)
    #[arg(long)]
    strategy: Option<String>,
    /// Plain PGM to use as the true image instead of the builtin one
    #[arg(long, value_name = "PGM")]
    image: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct AnomalyArgs {
    /// Spatial cells (a perfect square, laid out as a grid)
    #[arg(long)]
    space: Option<usize>,
    /// Time steps
    #[arg(long)]
    time: Option<usize>,
    /// Observation rows
    #[arg(long)]
    obs: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

/// Error carrying a flag/settings mistake; mapped to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<flexikry::Error>() {
        return match e {
            flexikry::Error::InvalidArgument(_) => 2,
            _ => 1,
        };
    }
    1
}

const COMMON_KEYS: &[&str] =
    &["solvers", "noise", "eta", "iters", "seed", "out", "tau-lambda", "gamma"];

/// Settings file contents plus the key set the active command accepts.
struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>, extra_keys: &[&str]) -> anyhow::Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    usage(format!(
                        "config line {} is not `key = value`: {line:?}",
                        lineno + 1
                    ))
                })?;
                let key = k.trim().to_string();
                if !COMMON_KEYS.contains(&key.as_str()) && !extra_keys.contains(&key.as_str()) {
                    return Err(usage(format!("config has unknown key {key:?}")));
                }
                map.insert(key, v.trim().to_string());
            }
        }
        Ok(Settings { map })
    }

    fn value<T>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.optional(flag, key)? {
            Some(v) => Ok(v),
            None => Ok(default),
        }
    }

    fn optional<T>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(Some(v));
        }
        match self.map.get(key) {
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("bad value for {key}: {e}"))),
            None => Ok(None),
        }
    }

    fn seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        if let Some(s) = self.optional(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var("FLEXIKRY_SEED") {
            Ok(s) => s
                .parse()
                .map_err(|_| usage(format!("FLEXIKRY_SEED is not an integer: {s:?}"))),
            Err(_) => Ok(0),
        }
    }
}

/// Everything the shared pipeline needs, resolved from flags, config file,
/// and defaults.
struct RunSettings {
    solvers: Vec<String>,
    noise: f64,
    eta: f64,
    iters: usize,
    seed: u64,
    out: PathBuf,
    tau_lambda: Option<f64>,
    gamma: f64,
    parallel: bool,
}

fn resolve_common(
    args: &CommonArgs,
    settings: &Settings,
    default_solvers: &str,
    default_noise: f64,
    default_iters: usize,
) -> anyhow::Result<RunSettings> {
    let solvers_raw = settings.value(
        args.solvers.clone(),
        "solvers",
        default_solvers.to_string(),
    )?;
    let solvers: Vec<String> = solvers_raw
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if solvers.is_empty() {
        return Err(usage("no solvers requested"));
    }
    Ok(RunSettings {
        solvers,
        noise: settings.value(args.noise, "noise", default_noise)?,
        eta: settings.value(args.eta, "eta", 1.01)?,
        iters: settings.value(args.iters, "iters", default_iters)?,
        seed: settings.seed(args.seed)?,
        out: settings.value(args.out.clone(), "out", PathBuf::from("out"))?,
        tau_lambda: settings.optional(args.tau_lambda, "tau-lambda")?,
        gamma: settings.value(args.gamma, "gamma", 1.0)?,
        parallel: args.parallel,
    })
}

/// Collects emitted file names so the manifest can list every output.
struct OutputTracker {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputTracker {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutputTracker { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn errors_csv(trace: &SolverTrace<f64>) -> String {
    let mut out = String::from("k,rel_error\n");
    for r in &trace.records {
        match r.rel_error {
            Some(e) => {
                let _ = writeln!(out, "{},{e}", r.k);
            }
            None => {
                let _ = writeln!(out, "{},", r.k);
            }
        }
    }
    out
}

fn lambda_csv(trace: &SolverTrace<f64>) -> String {
    let mut out = String::from("k,lambda,alpha\n");
    for r in &trace.records {
        let _ = writeln!(out, "{},{},{}", r.k, r.lambda, r.alpha);
    }
    out
}

fn build_configs(
    problem: &TestProblem<f64>,
    rs: &RunSettings,
    allow: impl Fn(Variant) -> bool,
    command: &str,
) -> anyhow::Result<Vec<SolverConfig<f64>>> {
    let mut configs = Vec::with_capacity(rs.solvers.len());
    for name in &rs.solvers {
        let mut cfg = SolverConfig::for_name(name, problem.groups.clone())?;
        if !allow(cfg.variant) {
            return Err(usage(format!("solver {name:?} is not available for {command}")));
        }
        cfg.eta = rs.eta;
        cfg.max_iters = rs.iters;
        cfg.gamma = rs.gamma;
        cfg.tau_lambda = rs.tau_lambda.unwrap_or(match cfg.variant {
            Variant::HybridFgmres => 0.8,
            _ => 1.2,
        });
        configs.push(cfg);
    }
    Ok(configs)
}

fn execute(
    problem: &TestProblem<f64>,
    configs: &[SolverConfig<f64>],
    parallel: bool,
) -> anyhow::Result<Vec<SolverTrace<f64>>> {
    if parallel {
        let results: Vec<flexikry::Result<SolverTrace<f64>>> = std::thread::scope(|sc| {
            let handles: Vec<_> = configs
                .iter()
                .map(|cfg| sc.spawn(move || run(problem, cfg)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect()
        });
        results.into_iter().map(|r| r.map_err(Into::into)).collect()
    } else {
        configs.iter().map(|cfg| run(problem, cfg).map_err(Into::into)).collect()
    }
}

fn write_solver_csvs(
    tracker: &mut OutputTracker,
    name: &str,
    trace: &SolverTrace<f64>,
) -> anyhow::Result<()> {
    write_text(&tracker.path(&format!("errors_{name}.csv")), &errors_csv(trace))?;
    write_text(&tracker.path(&format!("lambda_{name}.csv")), &lambda_csv(trace))?;
    write_text(&tracker.path(&format!("trace_{name}.csv")), &trace.to_csv())?;
    Ok(())
}

fn write_manifest(
    tracker: &mut OutputTracker,
    command: &str,
    echo: &[(String, String)],
) -> anyhow::Result<()> {
    let path = tracker.path("manifest.txt");
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = String::new();
    let _ = writeln!(text, "# flexikry {} run manifest", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "# command: {command}");
    let _ = writeln!(text, "# generated-unix-time: {stamp}");
    let _ = writeln!(
        text,
        "# Pass this file to --config to reproduce the run; flags override it."
    );
    for (k, v) in echo {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "# outputs:");
    for f in &tracker.files {
        let _ = writeln!(text, "# - {f}");
    }
    write_text(&path, &text)
}

fn echo_common(rs: &RunSettings) -> Vec<(String, String)> {
    let mut echo = vec![
        ("solvers".to_string(), rs.solvers.join(",")),
        ("noise".to_string(), rs.noise.to_string()),
        ("eta".to_string(), rs.eta.to_string()),
        ("iters".to_string(), rs.iters.to_string()),
        ("seed".to_string(), rs.seed.to_string()),
        ("out".to_string(), rs.out.display().to_string()),
        ("gamma".to_string(), rs.gamma.to_string()),
    ];
    if let Some(tl) = rs.tau_lambda {
        echo.push(("tau-lambda".to_string(), tl.to_string()));
    }
    echo
}

fn cmd_deblur_wavelet(args: WaveletArgs) -> anyhow::Result<()> {
    let settings =
        Settings::load(args.common.config.as_deref(), &["size", "levels", "strategy", "image"])?;
    let size = settings.value(args.size, "size", 64)?;
    let levels = settings.value(args.levels, "levels", 2)?;
    let strategy_name = settings.value(args.strategy.clone(), "strategy", "G1".to_string())?;
    let strategy = TreeStrategy::from_str(&strategy_name)
        .map_err(|e| usage(format!("bad --strategy: {e}")))?;
    let image_path = settings.optional::<PathBuf>(args.image.clone(), "image")?;
    let rs = resolve_common(
        &args.common,
        &settings,
        "flsqr-g,hybrid-flsqr-g,irw-flsqr-g",
        0.05,
        60,
    )?;

    let image = match &image_path {
        Some(p) => {
            let pgm = read_pgm(p)?;
            if pgm.rows != size || pgm.cols != size {
                return Err(usage(format!(
                    "image {} is {}x{}, expected {size}x{size}",
                    p.display(),
                    pgm.rows,
                    pgm.cols
                )));
            }
            Some(pgm.to_unit::<f64>())
        }
        None => None,
    };
    let problem = gen_wavelet_deblur_from(size, levels, strategy, rs.noise, rs.seed, image)?;
    let configs = build_configs(&problem, &rs, |v| v != Variant::HybridSd, "deblur-wavelet")?;
    let traces = execute(&problem, &configs, rs.parallel)?;

    let mut tracker = OutputTracker::new(&rs.out)?;
    write_pgm_scaled(&tracker.path("true.pgm"), size, size, &problem.x_true)?;
    write_pgm_scaled(&tracker.path("data.pgm"), size, size, &problem.b)?;
    for (name, trace) in rs.solvers.iter().zip(&traces) {
        write_solver_csvs(&mut tracker, name, trace)?;
        write_pgm_scaled(
            &tracker.path(&format!("recon_{name}.pgm")),
            size,
            size,
            &trace.final_x,
        )?;
    }
    let mut echo = vec![
        ("size".to_string(), size.to_string()),
        ("levels".to_string(), levels.to_string()),
        ("strategy".to_string(), strategy.as_str().to_string()),
    ];
    if let Some(p) = &image_path {
        echo.push(("image".to_string(), p.display().to_string()));
    }
    echo.extend(echo_common(&rs));
    write_manifest(&mut tracker, "deblur-wavelet", &echo)
}

fn cmd_dynamic_deblur(args: CommonArgs) -> anyhow::Result<()> {
    let settings = Settings::load(args.config.as_deref(), &[])?;
    let rs = resolve_common(
        &args,
        &settings,
        "hybrid-lsqr,hybrid-flsqr,hybrid-flsqr-g,hybrid-flsqr-c,\
         hybrid-gmres,hybrid-fgmres,hybrid-fgmres-g,hybrid-fgmres-c",
        0.02,
        50,
    )?;
    let problem = gen_dynamic_deblur(rs.noise, rs.seed)?;
    let configs = build_configs(&problem, &rs, |v| v != Variant::HybridSd, "dynamic-deblur")?;
    let traces = execute(&problem, &configs, rs.parallel)?;

    let (rows, cols, frames) =
        (problem.metadata.dims[0], problem.metadata.dims[1], problem.metadata.dims[2]);
    let n_space = rows * cols;
    let mut tracker = OutputTracker::new(&rs.out)?;
    for t in 0..frames {
        let slice = &problem.x_true[t * n_space..(t + 1) * n_space];
        write_pgm_scaled(&tracker.path(&format!("true_t{t}.pgm")), rows, cols, slice)?;
    }
    for (name, trace) in rs.solvers.iter().zip(&traces) {
        write_solver_csvs(&mut tracker, name, trace)?;
        for t in 0..frames {
            let slice = &trace.final_x[t * n_space..(t + 1) * n_space];
            write_pgm_scaled(
                &tracker.path(&format!("recon_{name}_t{t}.pgm")),
                rows,
                cols,
                slice,
            )?;
        }
    }
    let echo = echo_common(&rs);
    write_manifest(&mut tracker, "dynamic-deblur", &echo)
}

fn time_average(v: &[f64], n_space: usize, n_time: usize) -> Vec<f64> {
    let mut avg = vec![0.0; n_space];
    for t in 0..n_time {
        for p in 0..n_space {
            avg[p] += v[p + t * n_space];
        }
    }
    let inv = 1.0 / n_time as f64;
    for a in avg.iter_mut() {
        *a *= inv;
    }
    avg
}

fn cmd_anomaly(args: AnomalyArgs) -> anyhow::Result<()> {
    let settings = Settings::load(args.common.config.as_deref(), &["space", "time", "obs"])?;
    let space = settings.value(args.space, "space", 100)?;
    let time = settings.value(args.time, "time", 8)?;
    let obs = settings.value(args.obs, "obs", 400)?;
    let rs = resolve_common(&args.common, &settings, "hybrid-sd,hybrid-sd-g", 1.0, 40)?;
    let problem = gen_anomaly(space, time, obs, rs.noise, rs.seed)?;
    let configs = build_configs(&problem, &rs, |v| v == Variant::HybridSd, "anomaly")?;
    let traces = execute(&problem, &configs, rs.parallel)?;

    let grid = (space as f64).sqrt().round() as usize;
    let mut tracker = OutputTracker::new(&rs.out)?;
    write_pgm_scaled(
        &tracker.path("true_avg.pgm"),
        grid,
        grid,
        &time_average(&problem.x_true, space, time),
    )?;
    for (name, trace) in rs.solvers.iter().zip(&traces) {
        write_solver_csvs(&mut tracker, name, trace)?;
        write_pgm_scaled(
            &tracker.path(&format!("recon_avg_{name}.pgm")),
            grid,
            grid,
            &time_average(&trace.final_x, space, time),
        )?;
        if let Some(xi) = &trace.final_xi {
            write_pgm_scaled(
                &tracker.path(&format!("xi_{name}.pgm")),
                grid,
                grid,
                &time_average(xi, space, time),
            )?;
        }
        if let Some(s) = &trace.final_s {
            write_pgm_scaled(
                &tracker.path(&format!("s_{name}.pgm")),
                grid,
                grid,
                &time_average(s, space, time),
            )?;
        }
    }
    let mut echo = vec![
        ("space".to_string(), space.to_string()),
        ("time".to_string(), time.to_string()),
        ("obs".to_string(), obs.to_string()),
    ];
    echo.extend(echo_common(&rs));
    write_manifest(&mut tracker, "anomaly", &echo)
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DeblurWavelet(args) => cmd_deblur_wavelet(args),
        Command::DynamicDeblur(args) => cmd_dynamic_deblur(args),
        Command::Anomaly(args) => cmd_anomaly(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}
