//! Command-line interface: `run`, `compare` and `validate`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | clean completion |
//! | 1 | i/o or other runtime failure |
//! | 2 | invalid scenario, configuration or arguments |
//! | 3 | a collision ended the run |
//! | 4 | a vehicle had to execute the braking fallback |
//! | 5 | a vehicle could not be localized on its route |

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scenario::{resolve_scenario, ScenarioConfig, SolverKind};
use crate::simulation::{export, fmt_f64, metrics, run, MetricsReport, SimulationLog, Termination};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COLLISION: i32 = 3;
pub const EXIT_FALLBACK: i32 = 4;
pub const EXIT_LOCALIZATION: i32 = 5;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "ROUNDABOUT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "roundabout",
    version,
    about = "Game-theoretic decision making at a two-lane roundabout"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario with one solver and export logs and metrics.
    Run(RunArgs),
    /// Simulate a scenario with both solvers and compare their metrics.
    Compare(CompareArgs),
    /// Load and validate a scenario and print the resolved configuration.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Sg,
    Gc,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Sg => SolverKind::Stackelberg,
            SolverArg::Gc => SolverKind::GrandCoalition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// Output directory [default: $ROUNDABOUT_OUT_DIR or ./out].
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Scenario seed recorded with the run.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Prediction horizon (steps).
    #[arg(long, value_name = "N")]
    pub np: Option<usize>,
    /// Control horizon (steps).
    #[arg(long, value_name = "N")]
    pub nc: Option<usize>,
    /// Sampling time (s).
    #[arg(long, value_name = "S")]
    pub dt: Option<f64>,
    /// Increment levels per control axis.
    #[arg(long, value_name = "N")]
    pub grid: Option<usize>,
    /// Summary format on standard output.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Suppress the summary.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file or bundled scenario name.
    pub scenario: String,
    /// Solver [default: the scenario's].
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Scenario file or bundled scenario name.
    pub scenario: String,
    /// Not accepted: both solvers always run on identical settings.
    #[arg(long, value_enum, hide = true)]
    pub solver: Option<SolverArg>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Scenario file or bundled scenario name.
    pub scenario: String,
}

/// Loads the scenario and applies command-line overrides.
pub fn resolve(scenario: &str, o: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = resolve_scenario(scenario)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(np) = o.np {
        cfg.horizon.np = np;
    }
    if let Some(nc) = o.nc {
        cfg.horizon.nc = nc;
    }
    if let Some(dt) = o.dt {
        cfg.horizon.dt = dt;
    }
    if let Some(grid) = o.grid {
        cfg.game.grid = grid;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(o: &Overrides) -> PathBuf {
    o.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
        Error::Localization(_) => EXIT_LOCALIZATION,
        _ => EXIT_IO,
    }
}

/// Exit status of a finished run.
pub fn run_code(log: &SimulationLog) -> i32 {
    match log.termination {
        Termination::Collision { .. } => EXIT_COLLISION,
        Termination::Localization { .. } => EXIT_LOCALIZATION,
        _ if log.fallback_used() => EXIT_FALLBACK,
        _ => EXIT_OK,
    }
}

fn termination_text(t: &Termination) -> String {
    match t {
        Termination::Completed { t } => format!("all routes completed at {t:.1} s"),
        Termination::Duration { t } => format!("duration elapsed at {t:.1} s"),
        Termination::Collision { t, a, b, distance } => {
            format!("collision between {a} and {b} at {t:.1} s (center distance {distance:.3} m)")
        }
        Termination::Localization { t, message } => {
            format!("localization failure at {t:.1} s: {message}")
        }
    }
}

fn gap_text(g: Option<f64>) -> String {
    g.map_or_else(|| "-".into(), |g| format!("{g:.2}"))
}

/// Human-readable metrics table.
pub fn metrics_table(m: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} solver {}: {}",
        m.scenario,
        m.solver,
        termination_text(&m.termination)
    );
    let _ = writeln!(
        s,
        "{:<8} {:<12} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "agent", "style", "v_max", "v_rms", "ax_med", "min_gap", "finished"
    );
    for a in &m.agents {
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:>8.3} {:>8.3} {:>8.3} {:>8} {:>9}",
            a.id,
            a.style.to_string(),
            a.max_velocity,
            a.velocity_rms,
            a.ax.median,
            gap_text(a.min_gap),
            a.finished_at
                .map_or_else(|| "-".into(), |t| format!("{t:.1}")),
        );
    }
    let _ = writeln!(s, "system velocity RMS {:.3} m/s", m.system_velocity_rms);
    let _ = writeln!(s, "minimum gap {} m", gap_text(m.min_gap));
    let _ = writeln!(s, "mean solve time per epoch {:.4} s", m.mean_solve_time);
    s
}

/// Human-readable side-by-side comparison.
pub fn compare_table(sg: &MetricsReport, gc: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}", sg.scenario);
    let _ = writeln!(
        s,
        "{:<8} {:>8} {:>8} {:>8}",
        "agent", "rms_sg", "rms_gc", "delta"
    );
    for a in &sg.agents {
        let b = gc.agent(&a.id).map_or(f64::NAN, |b| b.velocity_rms);
        let _ = writeln!(
            s,
            "{:<8} {:>8.3} {:>8.3} {:>+8.3}",
            a.id,
            a.velocity_rms,
            b,
            b - a.velocity_rms
        );
    }
    let d = gc.system_velocity_rms - sg.system_velocity_rms;
    let _ = writeln!(
        s,
        "{:<8} {:>8.3} {:>8.3} {:>+8.3}",
        "system", sg.system_velocity_rms, gc.system_velocity_rms, d
    );
    let sign = if d > 0.0 {
        "GC > SG"
    } else if d < 0.0 {
        "GC < SG"
    } else {
        "GC = SG"
    };
    let _ = writeln!(s, "system velocity RMS: {sign}");
    let _ = writeln!(
        s,
        "mean solve time per epoch: sg {:.4} s, gc {:.4} s",
        sg.mean_solve_time, gc.mean_solve_time
    );
    let _ = writeln!(s, "sg: {}", termination_text(&sg.termination));
    let _ = writeln!(s, "gc: {}", termination_text(&gc.termination));
    s
}

fn write_config(cfg: &ScenarioConfig, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}_config.toml", cfg.name));
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn simulate(
    cfg: &ScenarioConfig,
    solver: SolverKind,
    dir: &Path,
) -> Result<(SimulationLog, MetricsReport)> {
    let log = run(cfg, solver)?;
    let report = metrics(&log)?;
    export(&log, &report, dir)?;
    Ok((log, report))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let cfg = resolve(&args.scenario, &args.overrides)?;
    let solver = args.solver.map_or(cfg.solver, SolverKind::from);
    let dir = out_dir(&args.overrides);
    write_config(&cfg, &dir)?;
    let (log, report) = simulate(&cfg, solver, &dir)?;
    if !args.overrides.quiet {
        match args.overrides.format {
            Format::Table => print!("{}", metrics_table(&report)),
            Format::Json => println!("{}", json(&report)),
        }
    }
    report_termination(&log);
    Ok(run_code(&log))
}

fn report_termination(log: &SimulationLog) {
    match &log.termination {
        Termination::Collision { .. } | Termination::Localization { .. } => {
            eprintln!(
                "error: {} ({})",
                termination_text(&log.termination),
                log.solver
            );
        }
        _ if log.fallback_used() => {
            eprintln!("warning: braking fallback executed ({})", log.solver)
        }
        _ => {}
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<i32> {
    if args.solver.is_some() {
        return Err(Error::Config(
            "compare runs both solvers on identical settings; --solver is not accepted".into(),
        ));
    }
    let cfg = resolve(&args.scenario, &args.overrides)?;
    let dir = out_dir(&args.overrides);
    write_config(&cfg, &dir)?;
    let (sg_log, sg) = simulate(&cfg, SolverKind::Stackelberg, &dir)?;
    let (gc_log, gc) = simulate(&cfg, SolverKind::GrandCoalition, &dir)?;

    let mut rows = vec![vec![
        "agent".to_string(),
        "rms_sg".into(),
        "rms_gc".into(),
        "delta".into(),
    ]];
    for a in &sg.agents {
        let b = gc.agent(&a.id).map_or(f64::NAN, |b| b.velocity_rms);
        rows.push(vec![
            a.id.clone(),
            fmt_f64(a.velocity_rms),
            fmt_f64(b),
            fmt_f64(b - a.velocity_rms),
        ]);
    }
    rows.push(vec![
        "system".into(),
        fmt_f64(sg.system_velocity_rms),
        fmt_f64(gc.system_velocity_rms),
        fmt_f64(gc.system_velocity_rms - sg.system_velocity_rms),
    ]);
    let text: String = rows.iter().map(|r| r.join(",") + "\n").collect();
    let path = dir.join(format!("{}_compare.csv", cfg.name));
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    if !args.overrides.quiet {
        match args.overrides.format {
            Format::Table => print!("{}", compare_table(&sg, &gc)),
            Format::Json => println!("{}", json(&serde_json::json!({ "sg": sg, "gc": gc }))),
        }
    }
    report_termination(&sg_log);
    report_termination(&gc_log);
    Ok([run_code(&sg_log), run_code(&gc_log)]
        .into_iter()
        .filter(|&c| c != EXIT_OK)
        .min()
        .unwrap_or(EXIT_OK))
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let cfg = resolve_scenario(&args.scenario)?;
    print!("{}", cfg.to_toml()?);
    Ok(EXIT_OK)
}

/// Parses `args` (program name first), executes the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}
