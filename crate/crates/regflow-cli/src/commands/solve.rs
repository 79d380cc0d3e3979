//! `regflow solve`: run one flow on a synthetic problem and write the
//! trajectory curves plus the discrepancy stop.

use crate::config::{parse_grid_spec, parse_method, FileConfig};
use crate::csvio::{write_csv, write_xy};
use crate::{Outcome, SolveArgs};
use regflow_core::diagnostics;
use regflow_core::problems::{self, Problem};
use regflow_core::{Error, FlowFilter};
use std::path::PathBuf;

pub fn run(args: SolveArgs) -> Outcome {
    let file = match args.config.as_deref().map(FileConfig::load).transpose() {
        Ok(cfg) => cfg.unwrap_or_default(),
        Err(msg) => return Outcome::Usage(msg),
    };

    let method = args.method.or(file.method);
    let Some(method) = method else {
        return Outcome::Usage("--method is required".into());
    };
    let b = args.b.or(file.b);
    let filter = match parse_method(&method, b) {
        Ok(f) => f,
        Err(msg) => return Outcome::Usage(msg),
    };

    let family = args.problem.or(file.problem).unwrap_or_else(|| "diag".into());
    let n = args.n.or(file.n).unwrap_or(500);
    let p = args.p.or(file.p).unwrap_or(1.0);
    let mu = args.mu.or(file.mu).unwrap_or(1.0);
    let seed = args.seed.or(file.seed).unwrap_or(1234);
    let delta = args.delta.or(file.delta).unwrap_or(0.0);
    let tau_factor = args.tau_factor.or(file.tau_factor).unwrap_or(2.0);
    let out: PathBuf = args
        .out
        .or(file.out.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if delta < 0.0 {
        return Outcome::Usage(format!("--delta must be >= 0, got {delta}"));
    }
    if args.fair_time && b.is_none() {
        return Outcome::Usage("--fair-time requires --b for the second-order flows".into());
    }

    let problem = match build_problem(&family, n, p, mu, seed) {
        Ok(pr) => pr,
        Err(msg) => return Outcome::Usage(msg),
    };
    let dec = match problem.decompose() {
        Ok(d) => d,
        Err(e) => return Outcome::Runtime(format!("decomposition failed: {e}")),
    };
    let noisy = match problems::add_noise(&problem.y, delta, seed ^ 0x5eed) {
        Ok(n) => n,
        Err(e) => return Outcome::Usage(e.to_string()),
    };

    let t_grid = match args
        .t_grid
        .or(file.t_grid)
        .as_deref()
        .map(parse_grid_spec)
        .transpose()
    {
        Ok(g) => g.unwrap_or_else(|| default_t_grid(&filter, &dec)),
        Err(msg) => return Outcome::Usage(msg),
    };

    let curves = diagnostics::flow_trajectory(
        &dec,
        &filter,
        &noisy.y_tilde,
        &t_grid,
        Some(&problem.x_dagger),
    );
    let write = |name: &str, curve: &diagnostics::DiagnosticsCurve| {
        let points: Vec<(f64, f64)> = curve
            .grid
            .iter()
            .zip(&curve.values)
            .map(|(&t, &v)| (t, v))
            .collect();
        write_xy(&out.join(name), "t", curve.quantity.tag(), &points)
    };
    if let Err(e) = write("residual_vs_t.csv", &curves.residual)
        .and_then(|_| write("error_vs_t.csv", curves.error.as_ref().unwrap()))
    {
        return Outcome::Runtime(format!("cannot write curves: {e}"));
    }

    if args.fair_time {
        if let Err(msg) = write_fair_time(&out, b.unwrap(), &dec, &problem, &noisy.y_tilde, &t_grid)
        {
            return Outcome::Runtime(msg);
        }
    }

    let stop_header = "stopped,t_stop,residual_at_stop,error_at_stop,crossings";
    if delta == 0.0 {
        let row = "clean,nan,nan,nan,0".to_string();
        if let Err(e) = write_csv(&out.join("stop.csv"), stop_header, &[row]) {
            return Outcome::Runtime(format!("cannot write stop.csv: {e}"));
        }
        return Outcome::Ok;
    }
    match diagnostics::discrepancy_stop(
        &dec,
        &filter,
        &noisy.y_tilde,
        delta,
        tau_factor,
        &t_grid,
        Some(&problem.x_dagger),
    ) {
        Ok(stop) => {
            let row = format!(
                "yes,{:e},{:e},{:e},{}",
                stop.t_stop,
                stop.residual_at_stop,
                stop.error_at_stop.unwrap_or(f64::NAN),
                stop.crossings
            );
            if let Err(e) = write_csv(&out.join("stop.csv"), stop_header, &[row]) {
                return Outcome::Runtime(format!("cannot write stop.csv: {e}"));
            }
            println!(
                "stopped at t = {:.6e} with residual {:.6e} (threshold {:.6e})",
                stop.t_stop,
                stop.residual_at_stop,
                tau_factor * delta
            );
            Outcome::Ok
        }
        Err(Error::DiscrepancyNotReached { final_residual }) => {
            let row = format!("no,nan,{final_residual:e},nan,0");
            let _ = write_csv(&out.join("stop.csv"), stop_header, &[row]);
            Outcome::Runtime(format!(
                "discrepancy level not reached on the time grid (final residual {final_residual:e})"
            ))
        }
        Err(e) => Outcome::Usage(e.to_string()),
    }
}

pub fn build_problem(family: &str, n: usize, p: f64, mu: f64, seed: u64) -> Result<Problem, String> {
    match family {
        "diag" => {
            if n < 10 {
                return Err("diagonal problems need n >= 10".into());
            }
            Ok(problems::diagonal_problem(n, p, mu, seed))
        }
        "greens" => {
            if n < 16 {
                return Err("integral problems need n >= 16".into());
            }
            problems::integral_problem(n, "greens", seed).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown problem family {other}")),
    }
}

/// Time grid spanning the resolvable spectral range with some margin.
pub fn default_t_grid(
    filter: &FlowFilter,
    dec: &regflow_core::SpectralDecomposition,
) -> Vec<f64> {
    let lambda_max = dec.operator_norm().powi(2);
    let lambda_min = dec.eigenvalue(dec.rank() - 1);
    let lo = 0.1 * filter.time_map(lambda_max).unwrap();
    let hi = 3.0 * filter.time_map(lambda_min).unwrap();
    diagnostics::log_grid(lo, hi, 240)
}

fn write_fair_time(
    out: &std::path::Path,
    b: f64,
    dec: &regflow_core::SpectralDecomposition,
    problem: &Problem,
    y_tilde: &[f64],
    t_grid: &[f64],
) -> Result<(), String> {
    let showalter = FlowFilter::showalter();
    let heavy = FlowFilter::heavy_ball(b).map_err(|e| e.to_string())?;
    let viscosity = FlowFilter::vanishing_viscosity(b).map_err(|e| e.to_string())?;
    // t0 such that t0^2 stays inside the sampled range of the first-order flows
    let t0_grid = diagnostics::log_grid(t_grid[0].sqrt(), t_grid.last().unwrap().sqrt(), 120);
    let sq_grid: Vec<f64> = t0_grid.iter().map(|t| t * t).collect();
    let sh = diagnostics::flow_trajectory(dec, &showalter, y_tilde, &sq_grid, Some(&problem.x_dagger));
    let hb = diagnostics::flow_trajectory(dec, &heavy, y_tilde, &sq_grid, Some(&problem.x_dagger));
    let vv = diagnostics::flow_trajectory(dec, &viscosity, y_tilde, &t0_grid, Some(&problem.x_dagger));
    let rows: Vec<String> = (0..t0_grid.len())
        .map(|i| {
            format!(
                "{:e},{:e},{:e},{:e}",
                t0_grid[i],
                sh.error.as_ref().unwrap().values[i],
                hb.error.as_ref().unwrap().values[i],
                vv.error.as_ref().unwrap().values[i]
            )
        })
        .collect();
    write_csv(
        &out.join("fair_time.csv"),
        "t0,error_showalter_at_t0sq,error_heavy_ball_at_t0sq,error_viscosity_at_t0",
        &rows,
    )
    .map_err(|e| format!("cannot write fair_time.csv: {e}"))
}
