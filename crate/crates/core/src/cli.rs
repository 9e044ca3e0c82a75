//! Command-line front end. Every subcommand writes a CSV or JSON body to
//! `--out` (default stdout); with `--out` a sidecar `<out>.manifest.json`
//! records how the body was produced.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::oscillation::{self, EpsGrid, SweepConfig, DEFAULT_DT_MAX};
use crate::pds::TestProblem;
use crate::schemes::{integrate, Scheme, StepContext};
use crate::stability::{lyapunov_dt0, Bound, EvalMode, StabilityEvaluator, DEFAULT_FD_STEP, DEFAULT_SCAN_LIMIT};
use crate::subtimesteps::{theta_matrix, NodeFamily};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PATANKAR_LAB_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lab(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "patankar-lab", version, about = "Modified Patankar schemes: integration, stability functions and time-step bounds")]
pub struct Cli {
    /// Output file (default stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Manifest path; defaults to `<out>.manifest.json` when `--out` is set.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFamily {
    MpdecEq,
    MpdecGl,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepFamily {
    Mprk22,
    Mprk43Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EpsMode {
    Default,
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Closed,
    Recurrence,
    Jacobian,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Theta grid as `a:b:step` (inclusive) or a comma list.
    #[arg(long)]
    pub theta_grid: Option<String>,
    #[arg(long, value_enum, default_value_t = EpsMode::Default)]
    pub eps_mode: EpsMode,
    /// Comma-separated epsilon values, used with `--eps-mode list`.
    #[arg(long)]
    pub eps_grid: Option<String>,
    /// Steps per probe for the overshoot search.
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_DT_MAX)]
    pub dt_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ModeArgs {
    /// Stability function evaluator; default picks the best available.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Theta of the test problem for `--mode jacobian`.
    #[arg(long, default_value_t = 0.5)]
    pub jacobian_theta: f64,
    /// Finite-difference step for `--mode jacobian`.
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
    #[arg(long, default_value_t = DEFAULT_SCAN_LIMIT)]
    pub scan_limit: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Numerical and Lyapunov bounds for a table of schemes.
    Table {
        #[arg(value_enum)]
        family: TableFamily,
        /// Orders (`1..9`, `2,3,5`) or, for `other`, comma-separated scheme ids.
        items: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Bounds over a parameter range of a scheme family.
    Sweep {
        #[arg(value_enum)]
        family: SweepFamily,
        #[arg(long, default_value_t = 0.5)]
        from: f64,
        #[arg(long, default_value_t = 5.0)]
        to: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Numerical bound of one scheme as a JSON report.
    OscBound {
        #[arg(long)]
        scheme: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Skip the secondary long-run bound.
        #[arg(long)]
        no_multistep: bool,
    },
    /// Lyapunov bound: first positive dt with R(-dt) = 0, or `inf`.
    LyapBound {
        #[arg(long)]
        scheme: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Stability function value R(z).
    StabilityEval {
        #[arg(long)]
        scheme: String,
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Trajectory of the linear test problem.
    Integrate {
        #[arg(long)]
        scheme: String,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Integration coefficient matrix of MPDeC.
    ThetaDump {
        order: usize,
        family: NodeFamily,
    },
}

/// Everything needed to trace an output body back to its invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: String,
    pub schemes: Vec<String>,
    pub grids: Value,
    pub tolerances: Value,
    pub scan_limit: Option<f64>,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub tool_version: String,
}

/// Output body plus the manifest details gathered while producing it.
#[derive(Debug, Default)]
pub struct Output {
    pub body: String,
    pub schemes: Vec<String>,
    pub grids: Value,
    pub tolerances: Value,
    pub scan_limit: Option<f64>,
}

/// Formats with 17 significant digits; `inf` for infinities.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let exponent = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exponent) {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

fn fmt_full(x: f64) -> String {
    fmt_sig(x, 17)
}

fn fmt_bound(b: Bound) -> String {
    match b {
        Bound::Finite(v) => fmt_full(v),
        Bound::Infinite => "inf".into(),
    }
}

/// Parses `a:b:step` (inclusive) or a comma list.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("bad grid '{text}'"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<CliResult<_>>()?;
        let (a, b, h) = (v[0], v[1], v[2]);
        if !(h > 0.0 && b >= a) {
            return Err(bad());
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| a + i as f64 * h).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

/// Parses `lo..hi` (inclusive) or a comma list of orders.
pub fn parse_orders(text: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Usage(format!("bad order list '{text}'"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

impl GridArgs {
    fn config(&self, multistep: bool) -> CliResult<SweepConfig> {
        let mut cfg = SweepConfig {
            n_steps: self.steps,
            dt_max: self.dt_max,
            multistep,
            ..SweepConfig::default()
        };
        if let Some(g) = &self.theta_grid {
            cfg.theta_grid = parse_grid(g)?;
        }
        cfg.eps_grid = match (self.eps_mode, &self.eps_grid) {
            (EpsMode::Default, None) => EpsGrid::Default,
            (EpsMode::List, Some(g)) => EpsGrid::List(parse_grid(g)?),
            (EpsMode::List, None) => return Err(CliError::Usage("--eps-mode list needs --eps-grid".into())),
            (EpsMode::Default, Some(_)) => return Err(CliError::Usage("--eps-grid needs --eps-mode list".into())),
        };
        Ok(cfg)
    }
}

fn grid_json(cfg: &SweepConfig) -> Value {
    json!({
        "theta_grid": cfg.theta_grid,
        "eps_grid": cfg.eps_grid,
        "n_steps": cfg.n_steps,
        "dt_max": cfg.dt_max,
    })
}

fn bound_tolerances() -> Value {
    json!({
        "crossing_tolerance": oscillation::CROSSING_TOLERANCE,
        "exclusion_band": oscillation::EXCLUSION_BAND,
        "dt_tolerance": oscillation::DT_TOLERANCE,
        "lyapunov_bisection_width": crate::stability::BISECTION_WIDTH,
        "lyapunov_points_per_decade": crate::stability::POINTS_PER_DECADE,
    })
}

impl ModeArgs {
    fn evaluator(&self, scheme: &Scheme) -> CliResult<StabilityEvaluator> {
        let mode = match self.mode {
            None => return Ok(oscillation::default_evaluator(scheme)?),
            Some(ModeArg::Closed) => EvalMode::Closed,
            Some(ModeArg::Recurrence) => EvalMode::Recurrence,
            Some(ModeArg::Jacobian) => EvalMode::Jacobian {
                theta: self.jacobian_theta,
                h: self.fd_step,
            },
        };
        Ok(StabilityEvaluator::new(scheme.clone(), mode)?)
    }
}

/// Table (c) rows: SSPMPRK43 plus the extension slots.
pub const OTHER_SCHEMES: [&str; 10] = [
    "sspmprk43",
    "ext:mprk32",
    "ext:mprk43:2:0.6",
    "ext:mprk43:0.9:0.5",
    "ext:mprk43:0.5:0.7",
    "ext:mprk43:3:7/15",
    "ext:sspmprk22:0:1",
    "ext:sspmprk22:0:2",
    "ext:sspmprk22:0.4:1",
    "ext:sspmprk22:0.1:4",
];

fn params_field(scheme: &Scheme) -> String {
    match scheme {
        Scheme::Mprk22 { alpha } => fmt_full(*alpha),
        Scheme::MpDec { order, .. } => order.to_string(),
        Scheme::SspMprk43 => "1/3".into(),
        Scheme::Extension { params, .. } => params.join(";"),
    }
}

struct RowValues {
    numerical: String,
    lyapunov: String,
    status: &'static str,
}

fn row_values(scheme: &Scheme, cfg: &SweepConfig, mode: &ModeArgs) -> CliResult<RowValues> {
    let numerical = if scheme.has_step_map() {
        Some(fmt_bound(oscillation::numerical_dt0(scheme, cfg)?.numerical_dt0))
    } else {
        None
    };
    let lyapunov = match mode.evaluator(scheme) {
        Ok(ev) => Some(fmt_bound(lyapunov_dt0(&ev, mode.scan_limit)?.dt0)),
        Err(CliError::Lab(Error::NotInCatalog(_) | Error::Unimplemented(_))) => None,
        Err(e) => return Err(e),
    };
    let status = match (&numerical, &lyapunov) {
        (Some(_), Some(_)) => "ok",
        (None, None) => "unimplemented",
        _ => "partial",
    };
    Ok(RowValues {
        numerical: numerical.unwrap_or_default(),
        lyapunov: lyapunov.unwrap_or_default(),
        status,
    })
}

fn cmd_table(family: TableFamily, items: Option<&str>, grid: &GridArgs, mode: &ModeArgs) -> CliResult<Output> {
    let schemes: Vec<Scheme> = match family {
        TableFamily::MpdecEq | TableFamily::MpdecGl => {
            let nodes = if family == TableFamily::MpdecEq {
                NodeFamily::Equispaced
            } else {
                NodeFamily::GaussLobatto
            };
            parse_orders(items.unwrap_or("1..9"))?
                .into_iter()
                .map(|p| Scheme::mpdec(p, nodes))
                .collect::<Result<_, _>>()?
        }
        TableFamily::Other => match items {
            Some(list) => list.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?,
            None => OTHER_SCHEMES.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
        },
    };
    let cfg = grid.config(false)?;
    let mut body = String::from("scheme,p_or_params,numerical_dt0,lyapunov_dt0,status\n");
    for scheme in &schemes {
        let row = row_values(scheme, &cfg, mode)?;
        writeln!(
            body,
            "{},{},{},{},{}",
            scheme,
            params_field(scheme),
            row.numerical,
            row.lyapunov,
            row.status
        )
        .expect("writing to a String");
    }
    Ok(Output {
        body,
        schemes: schemes.iter().map(ToString::to_string).collect(),
        grids: grid_json(&cfg),
        tolerances: bound_tolerances(),
        scan_limit: Some(mode.scan_limit),
    })
}

/// Parameter values `from, from + step, ..., to` (inclusive, index-based).
pub fn sweep_values(from: f64, to: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0 && to >= from && from.is_finite() && to.is_finite()) {
        return Err(CliError::Usage(format!("bad range {from}..{to} step {step}")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

fn cmd_sweep(family: SweepFamily, values: &[f64], grid: &GridArgs, mode: &ModeArgs) -> CliResult<Output> {
    let cfg = grid.config(false)?;
    let mut body = String::from("param,numerical_dt0,lyapunov_dt0,status\n");
    let mut ids = Vec::new();
    for &v in values {
        let scheme = match family {
            SweepFamily::Mprk22 => Scheme::mprk22(v)?,
            SweepFamily::Mprk43Gamma => Scheme::Extension {
                name: "mprk43gamma".into(),
                params: vec![fmt_full(v)],
            },
        };
        let row = row_values(&scheme, &cfg, mode)?;
        writeln!(body, "{},{},{},{}", fmt_full(v), row.numerical, row.lyapunov, row.status)
            .expect("writing to a String");
        ids.push(scheme.to_string());
    }
    Ok(Output {
        body,
        schemes: ids,
        grids: grid_json(&cfg),
        tolerances: bound_tolerances(),
        scan_limit: Some(mode.scan_limit),
    })
}

fn cmd_osc_bound(scheme: &str, grid: &GridArgs, multistep: bool) -> CliResult<Output> {
    let scheme: Scheme = scheme.parse()?;
    let cfg = grid.config(multistep)?;
    let report = oscillation::numerical_dt0(&scheme, &cfg)?;
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    Ok(Output {
        body,
        schemes: vec![scheme.to_string()],
        grids: grid_json(&cfg),
        tolerances: bound_tolerances(),
        scan_limit: Some(report.scan_limit),
    })
}

fn cmd_lyap_bound(scheme: &str, mode: &ModeArgs) -> CliResult<Output> {
    let scheme: Scheme = scheme.parse()?;
    let bound = lyapunov_dt0(&mode.evaluator(&scheme)?, mode.scan_limit)?;
    Ok(Output {
        body: format!("{}\n", fmt_bound(bound.dt0)),
        schemes: vec![scheme.to_string()],
        grids: json!({ "mode": bound.mode }),
        tolerances: bound_tolerances(),
        scan_limit: Some(mode.scan_limit),
    })
}

fn cmd_stability_eval(scheme: &str, z: f64, mode: &ModeArgs) -> CliResult<Output> {
    let scheme: Scheme = scheme.parse()?;
    let evaluator = mode.evaluator(&scheme)?;
    let r = evaluator.eval_z(z)?;
    Ok(Output {
        body: format!("{}\n", fmt_sig(r, 15)),
        schemes: vec![scheme.to_string()],
        grids: json!({ "z": z, "mode": evaluator.mode() }),
        ..Output::default()
    })
}

fn cmd_integrate(scheme: &str, theta: f64, eps: f64, dt: f64, steps: usize) -> CliResult<Output> {
    let scheme: Scheme = scheme.parse()?;
    let problem = TestProblem::new(theta)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} not in (0, 1)")).into());
    }
    let system = problem.as_pds();
    let ctx = StepContext::new(&system, dt)?;
    let trajectory = integrate(&scheme, &ctx, &problem.initial_state(eps), steps)?;
    let mut body = String::from("step,t,y1,y2,mass\n");
    for (k, y) in trajectory.iter().enumerate() {
        writeln!(
            body,
            "{},{},{},{},{}",
            k,
            fmt_full(k as f64 * dt),
            fmt_full(y[0]),
            fmt_full(y[1]),
            fmt_full(y.sum())
        )
        .expect("writing to a String");
    }
    Ok(Output {
        body,
        schemes: vec![scheme.to_string()],
        grids: json!({ "theta": theta, "eps": eps, "dt": dt, "steps": steps }),
        ..Output::default()
    })
}

fn cmd_theta_dump(order: usize, family: NodeFamily) -> CliResult<Output> {
    let theta = theta_matrix(order, family)?;
    let m = theta.subintervals();
    let mut body = String::from("m,node");
    for r in 0..=m {
        write!(body, ",theta_{r}").expect("writing to a String");
    }
    body.push('\n');
    for (i, row) in theta.rows().enumerate() {
        let k = i + 1;
        write!(body, "{},{}", k, fmt_full(theta.nodes()[k])).expect("writing to a String");
        for v in row {
            write!(body, ",{}", fmt_full(*v)).expect("writing to a String");
        }
        body.push('\n');
    }
    Ok(Output {
        body,
        grids: json!({ "order": order, "family": family.tag(), "subintervals": m }),
        ..Output::default()
    })
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Table { .. } => "table",
        Command::Sweep { .. } => "sweep",
        Command::OscBound { .. } => "osc-bound",
        Command::LyapBound { .. } => "lyap-bound",
        Command::StabilityEval { .. } => "stability-eval",
        Command::Integrate { .. } => "integrate",
        Command::ThetaDump { .. } => "theta-dump",
    }
}

/// Runs one parsed command and returns its output body.
pub fn execute(command: &Command) -> CliResult<Output> {
    match command {
        Command::Table {
            family,
            items,
            grid,
            mode,
        } => cmd_table(*family, items.as_deref(), grid, mode),
        Command::Sweep {
            family,
            from,
            to,
            step,
            grid,
            mode,
        } => cmd_sweep(*family, &sweep_values(*from, *to, *step)?, grid, mode),
        Command::OscBound {
            scheme,
            grid,
            no_multistep,
        } => cmd_osc_bound(scheme, grid, !no_multistep),
        Command::LyapBound { scheme, mode } => cmd_lyap_bound(scheme, mode),
        Command::StabilityEval { scheme, z, mode } => cmd_stability_eval(scheme, *z, mode),
        Command::Integrate {
            scheme,
            theta,
            eps,
            dt,
            steps,
        } => cmd_integrate(scheme, *theta, *eps, *dt, *steps),
        Command::ThetaDump { order, family } => cmd_theta_dump(*order, *family),
    }
}

fn manifest_path(cli: &Cli) -> Option<PathBuf> {
    cli.manifest.clone().or_else(|| {
        cli.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

/// Caps the global worker pool from [`THREADS_ENV`] if set.
pub fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args`, runs the command and writes body and manifest.
pub fn run(args: Vec<String>) -> CliResult<()> {
    let cli = Cli::try_parse_from(&args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => e.exit(),
        _ => CliError::Usage(e.render().to_string()),
    })?;
    configure_threads()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let output = execute(&cli.command)?;
    let elapsed = clock.elapsed().as_secs_f64();

    let mut outputs = Vec::new();
    match &cli.out {
        Some(path) => {
            write_file(path, &output.body)?;
            outputs.push(path.display().to_string());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(output.body.as_bytes())?;
            lock.flush()?;
            outputs.push("-".into());
        }
    }
    if let Some(path) = manifest_path(&cli) {
        let manifest = RunManifest {
            command: args,
            subcommand: subcommand_name(&cli.command).into(),
            schemes: output.schemes,
            grids: output.grids,
            tolerances: output.tolerances,
            scan_limit: output.scan_limit,
            started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            wall_clock_seconds: elapsed,
            outputs,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_file(&path, &text)?;
    }
    Ok(())
}
