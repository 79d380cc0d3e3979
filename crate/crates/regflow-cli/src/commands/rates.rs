//! `regflow rates`: the (method x mu) convergence-rate matrix with a
//! pass/fail summary.
//!
//! Per cell: the clean envelope error and residual slopes in the time
//! domain, and the slope of the empirical best-worst-case error against the
//! noise level. The matrix runs in parallel over cells (capped by
//! REGFLOW_THREADS); output order is fixed so repeated runs are
//! byte-identical apart from the timestamp header.

use crate::config::{parse_grid_spec, run_parallel, thread_cap, FileConfig};
use crate::csvio::write_csv;
use crate::{Outcome, RatesArgs};
use regflow_core::diagnostics::{self, log_grid, DiagnosticsCurve, Quantity};
use regflow_core::problems;
use regflow_core::{FlowFilter, FlowKind};
use std::path::PathBuf;

const SLOPE_TOL_ERROR: f64 = 0.15;
const SLOPE_TOL_RESIDUAL: f64 = 0.2;
const SLOPE_TOL_NOISY: f64 = 0.15;
const MIN_R_SQUARED: f64 = 0.95;

struct Cell {
    method: FlowKind,
    mu: f64,
}

#[derive(Clone)]
struct Row {
    quantity: &'static str,
    method: String,
    b: String,
    mu: f64,
    p: f64,
    n: usize,
    delta: String,
    slope: f64,
    r_squared: f64,
    expected: f64,
    status: RowStatus,
}

#[derive(Clone, Copy, PartialEq)]
enum RowStatus {
    Pass,
    Fail,
    Saturation,
}

impl Row {
    fn csv(&self) -> String {
        let status = match self.status {
            RowStatus::Pass => "true",
            RowStatus::Fail => "false",
            RowStatus::Saturation => "saturation",
        };
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6},{},{}",
            self.quantity,
            self.method,
            self.b,
            self.mu,
            self.p,
            self.n,
            self.delta,
            self.slope,
            self.r_squared,
            self.expected,
            status
        )
    }
}

pub fn run(args: RatesArgs) -> Outcome {
    let file = match args.config.as_deref().map(FileConfig::load).transpose() {
        Ok(cfg) => cfg.unwrap_or_default(),
        Err(msg) => return Outcome::Usage(msg),
    };
    // Quick mode keeps the full problem size: the slope tolerances need the
    // full spectral range (smaller problems push the saturation bend into
    // every fit window), and the whole matrix runs in seconds anyway. Only
    // the grids are coarsened.
    let n = args.n.or(file.n).unwrap_or(2000);
    let p = args.p.or(file.p).unwrap_or(1.0);
    let seed = args.seed.or(file.seed).unwrap_or(2024);
    let out: PathBuf = args
        .out
        .or(file.out.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mus = match args.mu_list.as_deref() {
        None => vec![0.5, 1.0, 2.0],
        Some(list) => {
            let parsed: Result<Vec<f64>, _> = list.split(',').map(|s| s.trim().parse()).collect();
            match parsed {
                Ok(v) if !v.is_empty() && v.iter().all(|&m| m > 0.0) => v,
                _ => return Outcome::Usage(format!("bad --mu-list {list}")),
            }
        }
    };
    let delta_spec = args
        .delta_grid
        .or(file.delta_grid)
        .unwrap_or_else(|| "log:1e-6:1e-2:9".into());
    let delta_grid = match parse_grid_spec(&delta_spec) {
        Ok(g) => g,
        Err(msg) => return Outcome::Usage(msg),
    };
    let alpha_override = match args
        .alpha_grid
        .or(file.alpha_grid)
        .as_deref()
        .map(parse_grid_spec)
        .transpose()
    {
        Ok(g) => g,
        Err(msg) => return Outcome::Usage(msg),
    };

    let methods = [
        FlowKind::Showalter,
        FlowKind::HeavyBall(3.0),
        FlowKind::VanishingViscosity(5.0),
    ];
    let mut cells = Vec::new();
    for &method in &methods {
        for &mu in &mus {
            cells.push(Cell { method, mu });
        }
    }

    let grid_points = if args.quick { 120 } else { 200 };
    let tasks: Vec<Box<dyn FnOnce() -> CellOutput + Send>> = cells
        .into_iter()
        .map(|cell| {
            let delta_grid = delta_grid.clone();
            let alpha_override = alpha_override.clone();
            Box::new(move || {
                run_cell(cell, n, p, seed, grid_points, &delta_grid, alpha_override)
            }) as Box<dyn FnOnce() -> CellOutput + Send>
        })
        .collect();
    let outputs = run_parallel(tasks, thread_cap());

    // one file per curve, then the summary
    for output in &outputs {
        for (name, grid_name, curve) in &output.curves {
            let rows: Vec<String> = curve
                .grid
                .iter()
                .zip(&curve.values)
                .map(|(g, v)| format!("{g:e},{v:e}"))
                .collect();
            let header = format!("{grid_name},{}", curve.quantity.tag());
            if let Err(e) = write_csv(&out.join(name), &header, &rows) {
                return Outcome::Runtime(format!("cannot write {name}: {e}"));
            }
        }
    }
    let rows: Vec<Row> = outputs.into_iter().flat_map(|o| o.rows).collect();

    let header = "quantity,method,b,mu,p,n,delta,slope,r2,expected_slope,pass";
    let csv_rows: Vec<String> = rows.iter().map(Row::csv).collect();
    if let Err(e) = write_csv(&out.join("summary.csv"), header, &csv_rows) {
        return Outcome::Runtime(format!("cannot write summary.csv: {e}"));
    }

    let mut failed = 0;
    for row in &rows {
        let mark = match row.status {
            RowStatus::Pass => "ok",
            RowStatus::Fail => {
                failed += 1;
                "FAIL"
            }
            RowStatus::Saturation => "saturation",
        };
        println!(
            "{:<13} {:<11} mu={:<4} slope {:>8.3} (expected {:>6.2}, R2 {:.4}) {mark}",
            row.quantity, row.method, row.mu, row.slope, row.expected, row.r_squared
        );
    }
    if failed > 0 {
        Outcome::CheckFailure(format!("{failed} rate checks failed (see summary.csv)"))
    } else {
        Outcome::Ok
    }
}

struct CellOutput {
    rows: Vec<Row>,
    /// (file name, grid column name, curve)
    curves: Vec<(String, &'static str, DiagnosticsCurve)>,
}

fn run_cell(
    cell: Cell,
    n: usize,
    p: f64,
    seed: u64,
    grid_points: usize,
    delta_grid: &[f64],
    alpha_override: Option<Vec<f64>>,
) -> CellOutput {
    let filter = FlowFilter::new(cell.method).expect("valid benchmark method");
    let b_text = cell
        .method
        .damping()
        .map_or_else(|| "-".to_string(), |b| format!("{b}"));
    let mu = cell.mu;
    let base = Row {
        quantity: "",
        method: cell.method.name().to_string(),
        b: b_text,
        mu,
        p,
        n,
        delta: "-".into(),
        slope: f64::NAN,
        r_squared: f64::NAN,
        expected: f64::NAN,
        status: RowStatus::Saturation,
    };

    // viscosity saturation: the Hoelder order must stay below b/2
    let rate_scale = match cell.method {
        FlowKind::VanishingViscosity(b) => {
            if mu >= 0.5 * b {
                let mut row = base.clone();
                row.quantity = "error_rate";
                row.expected = f64::NAN;
                return CellOutput {
                    rows: vec![row],
                    curves: Vec::new(),
                };
            }
            2.0
        }
        _ => 1.0,
    };

    let prob = problems::diagonal_problem(n, p, mu, seed);
    let dec = prob.decompose().expect("diagonal decomposition");
    let coeffs = dec.right_coefficients(&prob.x_dagger);
    let lambdas: Vec<f64> = (0..dec.rank()).map(|k| dec.eigenvalue(k)).collect();

    // Clean envelope curves in the time domain. The grid reaches a short
    // margin past the spectral saturation time so the window search sees the
    // end of the power regime, but not so far that the viscosity flow's
    // post-saturation t^{-b} decay becomes a competing power law.
    let lambda_min = *lambdas.last().unwrap();
    let lo = 0.1 * filter.time_map(lambdas[0]).unwrap();
    let hi = 2.5 * filter.time_map(lambda_min).unwrap();
    let t_grid = log_grid(lo, hi, grid_points);
    let mut err = Vec::with_capacity(t_grid.len());
    let mut res = Vec::with_capacity(t_grid.len());
    for &t in &t_grid {
        let mut e = 0.0;
        let mut r = 0.0;
        for (k, &c) in coeffs.iter().enumerate() {
            let env = filter.envelope(t, lambdas[k]);
            e += env * env * c * c;
            r += lambdas[k] * env * env * c * c;
        }
        err.push(e);
        res.push(r);
    }

    let mut rows = Vec::new();
    let fit_row = |quantity: &'static str,
                   curve: &DiagnosticsCurve,
                   expected: f64,
                   tol: f64,
                   delta: String| {
        let mut row = base.clone();
        row.quantity = quantity;
        row.expected = expected;
        row.delta = delta;
        match diagnostics::fit_rate(curve, None) {
            Ok(fit) => {
                row.slope = fit.slope;
                row.r_squared = fit.r_squared;
                row.status = if (fit.slope - expected).abs() <= tol
                    && fit.r_squared >= MIN_R_SQUARED
                {
                    RowStatus::Pass
                } else {
                    RowStatus::Fail
                };
            }
            Err(_) => row.status = RowStatus::Fail,
        }
        row
    };

    let err_curve = DiagnosticsCurve {
        grid: t_grid.clone(),
        values: err,
        quantity: Quantity::ErrorVsT,
        fit: None,
    };
    rows.push(fit_row(
        "error_rate",
        &err_curve,
        -rate_scale * mu,
        SLOPE_TOL_ERROR,
        "-".into(),
    ));

    let res_curve_for_file = DiagnosticsCurve {
        grid: t_grid.clone(),
        values: res,
        quantity: Quantity::ResidualVsT,
        fit: None,
    };
    // residual rate saturates one order earlier for the viscosity flow
    let residual_ok = match cell.method {
        FlowKind::VanishingViscosity(b) => mu + 1.0 < 0.5 * b,
        _ => true,
    };
    if residual_ok {
        rows.push(fit_row(
            "residual_rate",
            &res_curve_for_file,
            -rate_scale * (mu + 1.0),
            SLOPE_TOL_RESIDUAL,
            "-".into(),
        ));
    } else {
        let mut row = base.clone();
        row.quantity = "residual_rate";
        rows.push(row);
    }

    // noisy rate from the empirical best-worst-case curve
    let alpha_grid =
        alpha_override.unwrap_or_else(|| log_grid(lambda_min * 1e-3, lambdas[0], 160));
    let d_tilde = diagnostics::best_worst_case(
        &dec,
        &filter,
        &prob.x_dagger,
        delta_grid,
        &alpha_grid,
        5,
        seed ^ 0xd17e,
    )
    .expect("best worst case");
    let delta_text = format!(
        "{:.0e}..{:.0e}",
        delta_grid[0],
        delta_grid.last().unwrap()
    );
    rows.push(fit_row(
        "noisy_rate",
        &d_tilde,
        2.0 * mu / (mu + 1.0),
        SLOPE_TOL_NOISY,
        delta_text,
    ));

    let tag = format!("{}_mu{}", cell.method.name(), mu);
    let curves = vec![
        (format!("{tag}_error.csv"), "t", err_curve),
        (format!("{tag}_residual.csv"), "t", res_curve_for_file),
        (format!("{tag}_d_tilde.csv"), "delta", d_tilde),
    ];
    CellOutput { rows, curves }
}
