//! Browser bindings for the regularising-flow demo page.
//!
//! Three interactive operations, each returning plain float arrays for a
//! canvas plot: the spectral filter profile `rho_tilde(t; .)` with its
//! envelope, a full flow run on a seeded diagonal problem (error/residual
//! curves plus the discrepancy stop), and the viscosity kernel
//! `u(tau) = (2/tau)^k Gamma(k+1) J_k(tau)` with its monotone hull.

use regflow_core::diagnostics::{self, log_grid};
use regflow_core::problems;
use regflow_core::{FlowFilter, FlowKind};
use wasm_bindgen::prelude::*;

fn make_filter(method: &str, b: f64) -> Result<FlowFilter, String> {
    let kind = match method {
        "showalter" => FlowKind::Showalter,
        "heavy-ball" => FlowKind::HeavyBall(b),
        "viscosity" => FlowKind::VanishingViscosity(b),
        other => return Err(format!("unknown method {other}")),
    };
    FlowFilter::new(kind).map_err(|e| e.to_string())
}

/// Filter profile at fixed time: `lambda -> rho_tilde(t; lambda)` and its
/// monotone envelope on a linear lambda grid.
#[wasm_bindgen]
pub struct FilterProfile {
    lambdas: Vec<f64>,
    rho_tilde: Vec<f64>,
    envelope: Vec<f64>,
}

#[wasm_bindgen]
impl FilterProfile {
    #[wasm_bindgen(getter)]
    pub fn lambdas(&self) -> Vec<f64> {
        self.lambdas.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn rho_tilde(&self) -> Vec<f64> {
        self.rho_tilde.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn envelope(&self) -> Vec<f64> {
        self.envelope.clone()
    }
}

#[wasm_bindgen]
pub fn filter_profile(
    method: &str,
    b: f64,
    t: f64,
    lambda_max: f64,
    points: usize,
) -> Result<FilterProfile, JsValue> {
    filter_profile_impl(method, b, t, lambda_max, points).map_err(|e| JsValue::from_str(&e))
}

fn filter_profile_impl(
    method: &str,
    b: f64,
    t: f64,
    lambda_max: f64,
    points: usize,
) -> Result<FilterProfile, String> {
    if !(t >= 0.0) || !(lambda_max > 0.0) || points < 2 || points > 100_000 {
        return Err("bad profile parameters".into());
    }
    let filter = make_filter(method, b)?;
    let lambdas: Vec<f64> = (0..points)
        .map(|i| lambda_max * i as f64 / (points - 1) as f64)
        .collect();
    let rho_tilde = lambdas.iter().map(|&l| filter.rho_tilde(t, l)).collect();
    let envelope = lambdas.iter().map(|&l| filter.envelope(t, l)).collect();
    Ok(FilterProfile {
        lambdas,
        rho_tilde,
        envelope,
    })
}

/// One flow run on a seeded diagonal problem: squared error and residual
/// along `t`, with the discrepancy stopping time when noise is present.
#[wasm_bindgen]
pub struct FlowDemo {
    t: Vec<f64>,
    error: Vec<f64>,
    residual: Vec<f64>,
    t_stop: f64,
    threshold: f64,
}

#[wasm_bindgen]
impl FlowDemo {
    #[wasm_bindgen(getter)]
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn error(&self) -> Vec<f64> {
        self.error.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn residual(&self) -> Vec<f64> {
        self.residual.clone()
    }

    /// NaN when no stopping happened (clean data or unreachable threshold).
    #[wasm_bindgen(getter)]
    pub fn t_stop(&self) -> f64 {
        self.t_stop
    }

    /// Squared discrepancy threshold `(tau delta)^2`, NaN for clean data.
    #[wasm_bindgen(getter)]
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn flow_demo(
    method: &str,
    b: f64,
    n: usize,
    p: f64,
    mu: f64,
    delta: f64,
    seed: u64,
    t_lo: f64,
    t_hi: f64,
    points: usize,
) -> Result<FlowDemo, JsValue> {
    flow_demo_impl(method, b, n, p, mu, delta, seed, t_lo, t_hi, points)
        .map_err(|e| JsValue::from_str(&e))
}

#[allow(clippy::too_many_arguments)]
fn flow_demo_impl(
    method: &str,
    b: f64,
    n: usize,
    p: f64,
    mu: f64,
    delta: f64,
    seed: u64,
    t_lo: f64,
    t_hi: f64,
    points: usize,
) -> Result<FlowDemo, String> {
    if !(10..=4000).contains(&n) || !(p > 0.0) || !(mu >= 0.0) || !(delta >= 0.0) {
        return Err("bad problem parameters".into());
    }
    if !(t_lo > 0.0) || !(t_hi > t_lo) || points < 2 || points > 10_000 {
        return Err("bad time grid".into());
    }
    let filter = make_filter(method, b)?;
    let problem = problems::diagonal_problem(n, p, mu, seed);
    let dec = problem.decompose().map_err(|e| e.to_string())?;
    let noisy = problems::add_noise(&problem.y, delta, seed ^ 0x5eed)
        .map_err(|e| e.to_string())?;
    let t_grid = log_grid(t_lo, t_hi, points);
    let curves =
        diagnostics::flow_trajectory(&dec, &filter, &noisy.y_tilde, &t_grid, Some(&problem.x_dagger));
    let tau_factor = 2.0;
    let (t_stop, threshold) = if delta > 0.0 {
        let stop = diagnostics::discrepancy_stop(
            &dec,
            &filter,
            &noisy.y_tilde,
            delta,
            tau_factor,
            &t_grid,
            None,
        );
        match stop {
            Ok(s) => (s.t_stop, (tau_factor * delta) * (tau_factor * delta)),
            Err(_) => (f64::NAN, (tau_factor * delta) * (tau_factor * delta)),
        }
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(FlowDemo {
        t: t_grid,
        error: curves.error.unwrap().values,
        residual: curves.residual.values,
        t_stop,
        threshold,
    })
}

/// The viscosity kernel and its certified envelope over `tau`, with the
/// method constants for markers.
#[wasm_bindgen]
pub struct ViscosityProfile {
    tau: Vec<f64>,
    u: Vec<f64>,
    hull: Vec<f64>,
    tau_b: f64,
    first_zero: f64,
}

#[wasm_bindgen]
impl ViscosityProfile {
    #[wasm_bindgen(getter)]
    pub fn tau(&self) -> Vec<f64> {
        self.tau.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn u(&self) -> Vec<f64> {
        self.u.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn hull(&self) -> Vec<f64> {
        self.hull.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn tau_b(&self) -> f64 {
        self.tau_b
    }

    #[wasm_bindgen(getter)]
    pub fn first_zero(&self) -> f64 {
        self.first_zero
    }
}

#[wasm_bindgen]
pub fn viscosity_profile(b: f64, tau_max: f64, points: usize) -> Result<ViscosityProfile, JsValue> {
    viscosity_profile_impl(b, tau_max, points).map_err(|e| JsValue::from_str(&e))
}

fn viscosity_profile_impl(b: f64, tau_max: f64, points: usize) -> Result<ViscosityProfile, String> {
    if !(tau_max > 0.0) || points < 2 || points > 100_000 {
        return Err("bad profile parameters".into());
    }
    let filter = FlowFilter::vanishing_viscosity(b).map_err(|e| e.to_string())?;
    // u(tau) = rho_tilde(tau; 1) and the hull is the envelope at lambda = 1
    let tau: Vec<f64> = (0..points)
        .map(|i| tau_max * i as f64 / (points - 1) as f64)
        .collect();
    let u = tau.iter().map(|&x| filter.rho_tilde(x, 1.0)).collect();
    let hull = tau.iter().map(|&x| filter.envelope(x, 1.0)).collect();
    let constants = filter.constants();
    Ok(ViscosityProfile {
        tau,
        u,
        hull,
        tau_b: constants.tau_b.unwrap(),
        first_zero: constants.bessel_zero.unwrap(),
    })
}
