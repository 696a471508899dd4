//! Scenario engine: configuration, timelines, runner, traces, metrics and
//! plots.

pub mod config;
pub mod lane_change;
pub mod metrics;
pub mod plot;
pub mod scenario;
pub mod timeline;
pub mod trace;

pub use config::{load_config, parse_config, ConfigError, ControllerKind, Scenario, ScenarioConfig};
pub use metrics::{compare_runs, compute_metrics, Comparison, Metrics};
pub use plot::emit_plots;
pub use scenario::{run_scenario, RunError, RunResult};
pub use trace::Trace;

/// Runs scenarios in parallel; each run stays single-threaded.
pub fn run_many(scenarios: &[Scenario]) -> Vec<Result<RunResult, RunError>> {
    use rayon::prelude::*;
    scenarios.par_iter().map(run_scenario).collect()
}
