//! Run configuration: flags, optional TOML file, grid specifications.
//!
//! Flags override file values; defaults fill the rest. Grid specifications
//! use the form `log:<lo>:<hi>:<count>`.

use regflow_core::diagnostics::log_grid;
use regflow_core::{FlowFilter, FlowKind};
use serde::Deserialize;
use std::path::Path;

/// Parse `log:<lo>:<hi>:<count>` into a strictly increasing positive grid.
pub fn parse_grid_spec(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 || parts[0] != "log" {
        return Err(format!("grid spec must be log:<lo>:<hi>:<count>, got {spec}"));
    }
    let lo: f64 = parts[1]
        .parse()
        .map_err(|e| format!("bad grid lower bound: {e}"))?;
    let hi: f64 = parts[2]
        .parse()
        .map_err(|e| format!("bad grid upper bound: {e}"))?;
    let count: usize = parts[3]
        .parse()
        .map_err(|e| format!("bad grid count: {e}"))?;
    if !(lo > 0.0) || !(hi > lo) || count < 2 {
        return Err(format!(
            "grid spec needs 0 < lo < hi and count >= 2, got {spec}"
        ));
    }
    Ok(log_grid(lo, hi, count))
}

/// Method selector as it appears on the command line.
pub fn parse_method(name: &str, b: Option<f64>) -> Result<FlowFilter, String> {
    let kind = match name {
        "showalter" => {
            if b.is_some() {
                return Err("--b is only meaningful for second-order methods".into());
            }
            FlowKind::Showalter
        }
        "heavy-ball" => FlowKind::HeavyBall(b.ok_or("--b is required for --method heavy-ball")?),
        "viscosity" => {
            FlowKind::VanishingViscosity(b.ok_or("--b is required for --method viscosity")?)
        }
        other => return Err(format!("unknown method {other}")),
    };
    FlowFilter::new(kind).map_err(|e| e.to_string())
}

/// Optional values from a `--config` TOML file; any present key acts as the
/// default for the corresponding flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<String>,
    pub b: Option<f64>,
    pub problem: Option<String>,
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub t_grid: Option<String>,
    pub alpha_grid: Option<String>,
    pub delta_grid: Option<String>,
    pub tau_factor: Option<f64>,
    pub out: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}

/// Worker cap from `REGFLOW_THREADS` (defaults to the machine parallelism).
pub fn thread_cap() -> usize {
    std::env::var("REGFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Run `tasks` closures on at most `workers` threads, collecting results in
/// task order (deterministic regardless of scheduling).
pub fn run_parallel<T: Send>(
    tasks: Vec<Box<dyn FnOnce() -> T + Send + '_>>,
    workers: usize,
) -> Vec<T> {
    let n = tasks.len();
    let mut results: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let workers = workers.min(n).max(1);
    let queue = std::sync::Mutex::new(tasks.into_iter().enumerate().collect::<Vec<_>>());
    let out = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let task = queue.lock().unwrap().pop();
                match task {
                    Some((idx, f)) => {
                        let value = f();
                        out.lock().unwrap()[idx] = Some(value);
                    }
                    None => break,
                }
            });
        }
    });
    results.into_iter().map(|r| r.unwrap()).collect()
}
