//! `traction`: run scenarios, compare runs and inspect the linearized plant.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use traction_core::analysis::{self, REFERENCE_SPEED};
use traction_core::controller::ControllerGains;
use traction_core::harness::config::load_params;
use traction_core::harness::{
    compare_runs, emit_plots, load_config, run_many, run_scenario, ConfigError, ControllerKind, Metrics, RunError,
    RunResult, Scenario, Trace,
};
use traction_core::vehicle::Plant;
use traction_core::WHEEL_NAMES;

/// Slip allowance above `lambda_max` accepted by `--check`.
const SLIP_MARGIN: f64 = 0.02;

#[derive(Parser)]
#[command(name = "traction", version, about = "Twin-track 4WD traction control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics.
    Run(RunArgs),
    /// Compare runs of one scenario under several settings, or saved traces.
    Compare(CompareArgs),
    /// Trim the plant at a slip ratio and print its eigenvalues.
    Linearize(LinearizeArgs),
    /// Run a scenario over a list of gamma values and tabulate the metrics.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Proposed,
    Baseline,
}

impl From<Controller> for ControllerKind {
    fn from(c: Controller) -> Self {
        match c {
            Controller::Proposed => ControllerKind::Proposed,
            Controller::Baseline => ControllerKind::Baseline,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    controller: Option<Controller>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Write the full trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write SVG plots into this directory.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Exit with status 4 if any slip exceeds lambda_max + 0.02.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, conflicts_with = "traces")]
    config: Option<PathBuf>,
    /// Gamma values to compare; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Controllers to compare; repeat or separate with commas.
    #[arg(long, value_enum, value_delimiter = ',')]
    controller: Vec<Controller>,
    /// Saved trace files to compare instead of running a scenario.
    #[arg(long, num_args = 2.., required_unless_present = "config")]
    traces: Vec<PathBuf>,
}

#[derive(Args)]
struct LinearizeArgs {
    #[arg(long)]
    slip: f64,
    #[arg(long, default_value_t = REFERENCE_SPEED)]
    speed: f64,
    /// `reference` or a parameter TOML file.
    #[arg(long, default_value = "reference")]
    params: String,
    /// Write the eigenvalue table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    gamma: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(2, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = if matches!(e, RunError::Diverged(_)) { 3 } else { 1 };
        Failure::new(code, e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(1, format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Linearize(a) => cmd_linearize(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Loads a scenario and applies command-line overrides, revalidating.
fn scenario(path: &Path, controller: Option<Controller>, gamma: Option<f64>) -> Result<Scenario, Failure> {
    let sc = load_config(path)?;
    let mut cfg = sc.cfg;
    if let Some(c) = controller {
        cfg.controller = c.into();
    }
    if let Some(g) = gamma {
        cfg.gamma = g;
    }
    Ok(Scenario::with_params(cfg, sc.params)?)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary(name: &str, m: &Metrics) -> String {
    let mut s = format!("scenario        {name}\n");
    let _ = writeln!(s, "vx_rms          {:.6}", m.vx_rms);
    let _ = writeln!(s, "yaw_rate_rms    {:.6}", m.yaw_rate_rms);
    let _ = writeln!(s, "max_abs_beta    {:.6}", m.max_abs_beta);
    for (n, l) in WHEEL_NAMES.iter().zip(&m.max_abs_slip) {
        let _ = writeln!(s, "max_slip_{n:<7}{l:.6}");
    }
    let _ = writeln!(s, "torque_energy   {:.3}", m.total_torque_energy());
    s
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let sc = scenario(&a.config, a.controller, a.gamma)?;
    let r = run_scenario(&sc)?;
    print!("{}", summary(&sc.cfg.name, &r.metrics));
    if let Some(p) = &a.trace {
        r.trace.write_file(p).map_err(|e| io_failure(p, e))?;
    }
    if let Some(dir) = &a.plots {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        emit_plots(&r.trace, dir).map_err(|e| io_failure(dir, e))?;
    }
    if a.check {
        let bound = sc.cfg.gains.lambda_max + SLIP_MARGIN;
        let worst = r.metrics.max_slip();
        if worst > bound {
            return Err(Failure::new(4, format!("slip {worst:.4} exceeds {bound:.4}")));
        }
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let (labels, traces): (Vec<String>, Vec<Trace>) = match &a.config {
        Some(path) => {
            let gammas: Vec<Option<f64>> =
                if a.gamma.is_empty() { vec![None] } else { a.gamma.iter().copied().map(Some).collect() };
            let ctls: Vec<Option<Controller>> =
                if a.controller.is_empty() { vec![None] } else { a.controller.iter().copied().map(Some).collect() };
            let mut labels = Vec::new();
            let mut scs = Vec::new();
            for c in &ctls {
                for g in &gammas {
                    let sc = scenario(path, *c, *g)?;
                    let kind = match sc.cfg.controller {
                        ControllerKind::Proposed => "proposed",
                        ControllerKind::Baseline => "baseline",
                    };
                    labels.push(format!("{kind}/g{}", sc.cfg.gamma));
                    scs.push(sc);
                }
            }
            if scs.len() < 2 {
                return Err(Failure::new(2, "give at least two --gamma or --controller values"));
            }
            let runs = run_many(&scs).into_iter().collect::<Result<Vec<RunResult>, _>>()?;
            (labels, runs.into_iter().map(|r| r.trace).collect())
        }
        None => {
            let mut traces = Vec::new();
            for p in &a.traces {
                traces.push(Trace::read_file(p).map_err(|e| io_failure(p, e))?);
            }
            let labels = a
                .traces
                .iter()
                .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
                .collect();
            (labels, traces)
        }
    };
    let refs: Vec<&Trace> = traces.iter().collect();
    let cmp = compare_runs(&refs).map_err(|e| Failure::new(1, e.to_string()))?;
    print!("{}", cmp.render(&labels));
    Ok(())
}

fn cmd_linearize(a: LinearizeArgs) -> Result<(), Failure> {
    let params = load_params(&a.params, None)?;
    params.validate().map_err(ConfigError::from)?;
    let fail = |e: analysis::AnalysisError| Failure::new(1, e.to_string());
    let op = analysis::trim_at_slip(a.slip, a.speed, &params).map_err(fail)?;
    let lm = analysis::linearize(&Plant::new(params.clone()), &op, analysis::DEFAULT_STEP).map_err(fail)?;
    let mut text = String::from("re,im,dominant_state,participation\n");
    for cl in analysis::mode_clusters(&lm.a) {
        let (k, share) = cl
            .participation
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |best, (k, p)| if p > best.1 { (k, p) } else { best });
        for e in &cl.eigenvalues {
            let _ = writeln!(text, "{:.9e},{:.9e},{},{share:.4}", e.re, e.im, analysis::STATE_LABELS[k]);
        }
    }
    write_or_print(a.out.as_deref(), &text)?;
    let rho = analysis::spectral_radius(&analysis::closed_loop_spectrum(&lm, &ControllerGains::default()));
    eprintln!("closed-loop spectral radius {rho:.6}");
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let scs = a.gamma.iter().map(|&g| scenario(&a.config, None, Some(g))).collect::<Result<Vec<_>, _>>()?;
    let mut text = String::from("gamma,vx_rms,yaw_rate_rms,max_abs_beta,max_abs_slip,torque_energy\n");
    for (sc, r) in scs.iter().zip(run_many(&scs)) {
        let m = r?.metrics;
        let _ = writeln!(
            text,
            "{},{:.9},{:.9},{:.9},{:.9},{:.6}",
            sc.cfg.gamma,
            m.vx_rms,
            m.yaw_rate_rms,
            m.max_abs_beta,
            m.max_slip(),
            m.total_torque_energy()
        );
    }
    write_or_print(a.out.as_deref(), &text)
}
