//! The three regularising flows as scalar spectral filter families.
//!
//! Each flow is described by its error function `rho_tilde(t; lambda)`, the
//! solution of the scalar flow ODE at spectral value `lambda`:
//!
//! * Showalter: `rho' + lambda rho = 0`, solved by `exp(-lambda t)`;
//! * heavy ball: `rho'' + b rho' + lambda rho = 0`, solved by damped
//!   cosh/cos branches around the critical value `lambda = b^2/4`;
//! * vanishing viscosity: `rho'' + (b/t) rho' + lambda rho = 0`, solved by
//!   `u(t sqrt(lambda))` with `u(tau) = (2/tau)^k Gamma(k+1) J_k(tau)`,
//!   `k = (b-1)/2`.
//!
//! From `rho_tilde` derive the filter `rho = (1 - rho_tilde)/lambda`, the
//! generator `r_alpha(lambda) = rho(T(alpha); lambda)` under the method's
//! time map `T`, a monotone envelope of `|rho_tilde|`, and the associated
//! envelope generator. Method constants (`sigma_0`, `sigma_1`, `tau_b`, the
//! first Bessel zero) are computed once at construction.

use crate::special::{self, BesselOrder};
use crate::{Error, Result};

/// Flow selector. Second-order flows carry their damping parameter `b > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowKind {
    Showalter,
    HeavyBall(f64),
    VanishingViscosity(f64),
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Showalter => "showalter",
            FlowKind::HeavyBall(_) => "heavy-ball",
            FlowKind::VanishingViscosity(_) => "viscosity",
        }
    }

    pub fn damping(&self) -> Option<f64> {
        match *self {
            FlowKind::Showalter => None,
            FlowKind::HeavyBall(b) | FlowKind::VanishingViscosity(b) => Some(b),
        }
    }
}

/// Method constants, computed once at construction.
#[derive(Clone, Debug)]
pub struct FilterConstants {
    /// `sigma_0 = 1 - exp(-z_0)` where `z_0 > 1` solves `exp(z) = 2z + 1`;
    /// yields `1 - exp(-z) <= sigma_0 sqrt(z)`.
    pub sigma0: f64,
    /// Heavy ball only: constant in `r_alpha <= sigma_1 / sqrt(alpha lambda)`.
    pub sigma1: Option<f64>,
    /// Viscosity only: largest constant with `u(tau) >= 1 - tau/(2 tau_b)`.
    pub tau_b: Option<f64>,
    /// Viscosity only: first positive zero of `J_{(b-1)/2}`.
    pub bessel_zero: Option<f64>,
    /// The `sigma` this method achieves in `r_alpha <= sigma/sqrt(alpha lambda)`.
    pub sigma_bound: f64,
}

/// A flow filter: selector plus cached constants and (for the viscosity
/// flow) the certified envelope tables. Immutable after construction.
#[derive(Clone, Debug)]
pub struct FlowFilter {
    kind: FlowKind,
    constants: FilterConstants,
    visc: Option<ViscosityTables>,
}

impl FlowFilter {
    pub fn showalter() -> FlowFilter {
        let sigma0 = compute_sigma0();
        FlowFilter {
            kind: FlowKind::Showalter,
            constants: FilterConstants {
                sigma0,
                sigma1: None,
                tau_b: None,
                bessel_zero: None,
                sigma_bound: sigma0,
            },
            visc: None,
        }
    }

    pub fn heavy_ball(b: f64) -> Result<FlowFilter> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("heavy ball requires b > 0, got {b}")));
        }
        let sigma0 = compute_sigma0();
        let sigma1 = certify_sigma1(b, sigma0);
        Ok(FlowFilter {
            kind: FlowKind::HeavyBall(b),
            constants: FilterConstants {
                sigma0,
                sigma1: Some(sigma1),
                tau_b: None,
                bessel_zero: None,
                sigma_bound: sigma1,
            },
            visc: None,
        })
    }

    pub fn vanishing_viscosity(b: f64) -> Result<FlowFilter> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("viscosity requires b > 0, got {b}")));
        }
        let tables = ViscosityTables::build(b)?;
        let sigma0 = compute_sigma0();
        Ok(FlowFilter {
            kind: FlowKind::VanishingViscosity(b),
            constants: FilterConstants {
                sigma0,
                sigma1: None,
                tau_b: Some(tables.tau_b),
                bessel_zero: Some(tables.first_zero),
                sigma_bound: 0.5,
            },
            visc: Some(tables),
        })
    }

    pub fn new(kind: FlowKind) -> Result<FlowFilter> {
        match kind {
            FlowKind::Showalter => Ok(FlowFilter::showalter()),
            FlowKind::HeavyBall(b) => FlowFilter::heavy_ball(b),
            FlowKind::VanishingViscosity(b) => FlowFilter::vanishing_viscosity(b),
        }
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn constants(&self) -> &FilterConstants {
        &self.constants
    }

    /// The method's `sigma` in the generator bound
    /// `r_alpha(lambda) <= min(2/lambda, sigma/sqrt(alpha lambda))`.
    pub fn sigma_bound(&self) -> f64 {
        self.constants.sigma_bound
    }

    /// Error function `rho_tilde(t; lambda)`; equals 1 at `t = 0` and at
    /// `lambda = 0`, and satisfies `|rho_tilde| <= 1`.
    pub fn rho_tilde(&self, t: f64, lambda: f64) -> f64 {
        debug_assert!(t >= 0.0 && lambda >= 0.0);
        if t == 0.0 || lambda == 0.0 {
            return 1.0;
        }
        let raw = match self.kind {
            FlowKind::Showalter => (-lambda * t).exp(),
            FlowKind::HeavyBall(b) => hb_rho_tilde(b, t, lambda),
            FlowKind::VanishingViscosity(_) => self.visc.as_ref().unwrap().u(t * lambda.sqrt()),
        };
        raw.clamp(-1.0, 1.0)
    }

    /// Monotone envelope of `|rho_tilde|`: nonincreasing in `t` and in
    /// `lambda`, with values in `[0, 1]`.
    pub fn envelope(&self, t: f64, lambda: f64) -> f64 {
        debug_assert!(t >= 0.0 && lambda >= 0.0);
        if t == 0.0 || lambda == 0.0 {
            return 1.0;
        }
        let raw = match self.kind {
            FlowKind::Showalter => (-lambda * t).exp(),
            FlowKind::HeavyBall(b) => {
                if lambda < 0.25 * b * b {
                    hb_rho_tilde(b, t, lambda)
                } else {
                    let s = 0.5 * b * t;
                    (-s).exp() * (1.0 + s)
                }
            }
            FlowKind::VanishingViscosity(_) => {
                self.visc.as_ref().unwrap().envelope_u(t * lambda.sqrt())
            }
        };
        raw.clamp(0.0, 1.0)
    }

    /// Filter `rho(t; lambda) = (1 - rho_tilde(t; lambda))/lambda`, extended
    /// continuously to `lambda = 0` through the Taylor limit of `rho_tilde`.
    pub fn rho(&self, t: f64, lambda: f64) -> f64 {
        debug_assert!(t >= 0.0 && lambda >= 0.0);
        if t == 0.0 {
            return 0.0;
        }
        match self.kind {
            FlowKind::Showalter => {
                if lambda == 0.0 {
                    t
                } else {
                    -(-lambda * t).exp_m1() / lambda
                }
            }
            FlowKind::HeavyBall(b) => hb_rho(b, t, lambda),
            FlowKind::VanishingViscosity(_) => {
                let tables = self.visc.as_ref().unwrap();
                let z = lambda * t * t;
                if z <= 1.0 {
                    // (1 - v(z))/lambda = t^2 * (1 - v(z))/z as a direct
                    // series: no cancellation, exact at lambda = 0.
                    t * t * one_minus_v_over_z(tables.kappa, z)
                } else {
                    (1.0 - tables.u(t * lambda.sqrt()).clamp(-1.0, 1.0)) / lambda
                }
            }
        }
    }

    /// Time `T(alpha)` at which the flow realises regularisation
    /// parameter `alpha`.
    pub fn time_map(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "time map requires alpha > 0, got {alpha}"
            )));
        }
        Ok(match self.kind {
            FlowKind::Showalter => 1.0 / alpha,
            FlowKind::HeavyBall(b) => 0.5 * b / alpha,
            FlowKind::VanishingViscosity(_) => self.constants.tau_b.unwrap() / alpha.sqrt(),
        })
    }

    /// Inverse of [`FlowFilter::time_map`].
    pub fn alpha_of_time(&self, t: f64) -> f64 {
        assert!(t > 0.0, "alpha_of_time requires t > 0");
        match self.kind {
            FlowKind::Showalter => 1.0 / t,
            FlowKind::HeavyBall(b) => 0.5 * b / t,
            FlowKind::VanishingViscosity(_) => {
                let tb = self.constants.tau_b.unwrap();
                (tb / t) * (tb / t)
            }
        }
    }

    /// Generator `r_alpha(lambda) = rho(T(alpha); lambda)`.
    pub fn generator(&self, alpha: f64, lambda: f64) -> f64 {
        assert!(alpha > 0.0 && lambda > 0.0);
        let t = self.time_map(alpha).expect("alpha > 0");
        self.rho(t, lambda)
    }

    /// Envelope generator `R_alpha(lambda) = (1 - envelope(T(alpha); lambda))/lambda`.
    pub fn envelope_generator(&self, alpha: f64, lambda: f64) -> f64 {
        assert!(alpha > 0.0 && lambda > 0.0);
        let t = self.time_map(alpha).expect("alpha > 0");
        match self.kind {
            FlowKind::Showalter => self.rho(t, lambda),
            FlowKind::HeavyBall(b) => {
                if lambda < 0.25 * b * b {
                    // envelope and error function coincide on this branch
                    self.rho(t, lambda)
                } else {
                    let s = 0.5 * b * t;
                    one_minus_exp_one_plus(s) / lambda
                }
            }
            FlowKind::VanishingViscosity(_) => {
                let tables = self.visc.as_ref().unwrap();
                let tau = t * lambda.sqrt();
                let env = tables.envelope_u(tau).clamp(0.0, 1.0);
                let u = tables.u(tau).clamp(-1.0, 1.0);
                if tau < tables.first_zero && env >= u {
                    // envelope equals u on the first arch: reuse the
                    // cancellation-free rho path
                    self.rho(t, lambda)
                } else {
                    (1.0 - env) / lambda
                }
            }
        }
    }

    /// Heavy-ball envelope majorant `Psi_Lambda(z)`: for `lambda <= Lambda`
    /// the envelope satisfies `envelope(t, lambda) <= Psi_Lambda(lambda t)`.
    pub fn psi_upper(&self, z: f64, big_lambda: f64) -> f64 {
        let b = match self.kind {
            FlowKind::HeavyBall(b) => b,
            _ => panic!("psi_upper is specific to the heavy ball flow"),
        };
        debug_assert!(z >= 0.0 && big_lambda > 0.0);
        let first = 2.0 * (-z / b).exp();
        let w = 0.5 * b * z / big_lambda;
        let second = (-w).exp() * (1.0 + w);
        first.max(second)
    }
}

// ---------------------------------------------------------------------------
// Showalter constant.

/// `sigma_0 = 1 - exp(-z_0)` with `z_0` the unique positive root of
/// `2z + 1 = exp(z)`, found to 1e-12.
pub fn compute_sigma0() -> f64 {
    let f = |z: f64| 2.0 * z + 1.0 - z.exp();
    let mut lo = 1.0;
    let mut hi = 2.0;
    debug_assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let z0 = 0.5 * (lo + hi);
    1.0 - (-z0).exp()
}

// ---------------------------------------------------------------------------
// Heavy ball evaluation.

/// Stable `rho_tilde` for the heavy ball flow. The hyperbolic branch is
/// written in exponentials (a bare `cosh` overflows long before the damped
/// product does), and a joint power series covers the neighbourhood of the
/// branch point `lambda = b^2/4` where both closed forms lose all digits.
fn hb_rho_tilde(b: f64, t: f64, lambda: f64) -> f64 {
    let s = 0.5 * b * t;
    let wp = 4.0 * lambda / (b * b);
    let w = 1.0 - wp;
    if w.abs() * s * s < 1e-6 {
        return hb_branch_series(w, s);
    }
    if w > 0.0 {
        let beta = w.sqrt();
        // 1 - beta = wp/(1 + beta), avoiding cancellation as lambda -> 0
        let a = s * wp / (1.0 + beta);
        let c = (1.0 + beta) * s;
        0.5 * (1.0 + 1.0 / beta) * (-a).exp() + 0.5 * (1.0 - 1.0 / beta) * (-c).exp()
    } else {
        let beta = (-w).sqrt();
        let x = beta * s;
        (-s).exp() * (x.cos() + x.sin() / beta)
    }
}

/// Joint analytic extension around the branch point: with
/// `w = 1 - 4 lambda/b^2` and `s = bt/2`,
/// `rho_tilde = e^{-s} sum_k w^k (s^{2k}/(2k)! + s^{2k+1}/(2k+1)!)`,
/// covering the cosh, cos and critical cases at once. For `|w| s^2 < 1e-6`
/// a handful of terms suffice.
fn hb_branch_series(w: f64, s: f64) -> f64 {
    let z = w * s * s;
    let mut even = 1.0; // w^k s^{2k} / (2k)!
    let mut odd = s; // w^k s^{2k+1} / (2k+1)!
    let mut sum = 0.0;
    for k in 0..25 {
        let term = even + odd;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        let kf = k as f64;
        even *= z / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
        odd *= z / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0));
    }
    (-s).exp() * sum
}

/// Same series arranged as `1 - rho_tilde` without cancellation.
fn hb_branch_series_one_minus(w: f64, s: f64) -> f64 {
    // 1 - e^{-s} sum_k ... = e^{-s} [ (e^s - 1 - s) - sum_{k>=1} w^k (...) ]
    let head = s.exp_m1() - s;
    let z = w * s * s;
    let mut even = 1.0;
    let mut odd = s;
    let mut tail = 0.0;
    for k in 0..25 {
        let kf = k as f64;
        even *= z / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
        odd *= z / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0));
        let term = even + odd;
        tail += term;
        if term.abs() < 1e-18 * (head.abs() + tail.abs() + 1e-300) {
            break;
        }
    }
    (-s).exp() * (head - tail)
}

/// `rho` for the heavy ball flow, stable down to `lambda = 0`.
fn hb_rho(b: f64, t: f64, lambda: f64) -> f64 {
    if lambda * t * t < 1e-8 {
        // Taylor limit rho(t; 0) = t/b - (1 - e^{-bt})/b^2.
        let bt = b * t;
        if bt < 1e-3 {
            return 0.5 * t * t * (1.0 - bt / 3.0 + bt * bt / 12.0);
        }
        return t / b + (-bt).exp_m1() / (b * b);
    }
    let s = 0.5 * b * t;
    let wp = 4.0 * lambda / (b * b);
    let w = 1.0 - wp;
    if w.abs() * s * s < 1e-6 {
        return hb_branch_series_one_minus(w, s) / lambda;
    }
    let one_minus = if w > 0.0 {
        let beta = w.sqrt();
        let a = s * wp / (1.0 + beta);
        let c = (1.0 + beta) * s;
        // 1 = (1/2)(1 + 1/beta) + (1/2)(1 - 1/beta)
        0.5 * (1.0 + 1.0 / beta) * (-(-a).exp_m1()) + 0.5 * (1.0 - 1.0 / beta) * (-(-c).exp_m1())
    } else {
        let beta = (-w).sqrt();
        let x = beta * s;
        1.0 - (-s).exp() * (x.cos() + x.sin() / beta)
    };
    one_minus.max(0.0) / lambda
}

/// `1 - e^{-s}(1 + s)` without cancellation for small `s`.
fn one_minus_exp_one_plus(s: f64) -> f64 {
    if s < 0.01 {
        // sum_{k>=2} (-1)^k s^k (k-1)/k!
        let s2 = s * s;
        s2 * (0.5 - s / 3.0 + s2 / 8.0 - s2 * s / 30.0)
    } else {
        1.0 - (-s).exp() * (1.0 + s)
    }
}

/// Heavy-ball `sigma_1`: the analytic bound `max(sigma_0, sqrt(2/e))` from
/// splitting at `lambda = b^2/4`, certified against (and never below) a grid
/// maximisation of `rho(t; lambda) sqrt(b lambda/(2t))`.
fn certify_sigma1(b: f64, sigma0: f64) -> f64 {
    let analytic = sigma0.max((2.0 / std::f64::consts::E).sqrt());
    let mut grid_max: f64 = 0.0;
    let n = 140;
    for i in 0..n {
        let t = log_grid_point(1e-6, 1e6, i, n);
        for j in 0..n {
            let lambda = log_grid_point(1e-8 * b * b, 1e4 * b * b, j, n);
            let ratio = hb_rho(b, t, lambda) * (0.5 * b * lambda / t).sqrt();
            grid_max = grid_max.max(ratio);
        }
    }
    analytic.max(grid_max * (1.0 + 1e-9))
}

fn log_grid_point(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    let f = i as f64 / (n - 1) as f64;
    lo * (hi / lo).powf(f)
}

// ---------------------------------------------------------------------------
// Vanishing viscosity evaluation and envelope tables.

/// `(1 - v(z))/z` where `u(tau) = v(tau^2)`; a plain alternating series with
/// no cancellation, valid for `z <= 1`.
fn one_minus_v_over_z(kappa: f64, z: f64) -> f64 {
    // 1 - v(z) = sum_{j>=1} (-1)^{j+1} (z/4)^j / (j! (k+1)...(k+j))
    let mut term = 1.0 / (4.0 * (kappa + 1.0));
    let mut sum = term;
    for j in 1..40 {
        let jf = j as f64;
        term *= -z / (4.0 * (jf + 1.0) * (kappa + jf + 1.0));
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn v_series(kappa: f64, z: f64) -> f64 {
    1.0 - z * one_minus_v_over_z(kappa, z)
}

/// Certified envelope data for `u`: the zeros of `u` (zeros of `J_kappa`),
/// the maximum of `|u|` on each arch between consecutive zeros, and the
/// constant of the algebraic tail bound `|u(tau)| <= C tau^{-b/2}`.
#[derive(Clone, Debug)]
struct ViscosityTables {
    b: f64,
    kappa: f64,
    gamma_kp1: f64,
    order: BesselOrder,
    first_zero: f64,
    tau_b: f64,
    /// zeros of u in increasing order
    zeros: Vec<f64>,
    /// (location, value) of max |u| on arch [zeros[i], zeros[i+1]]
    peaks: Vec<(f64, f64)>,
    /// |u(tau)| <= tail_c * tau^{-b/2}
    tail_c: f64,
}

impl ViscosityTables {
    fn build(b: f64) -> Result<Self> {
        let kappa = 0.5 * (b - 1.0);
        let order = BesselOrder::new(kappa)?;
        let gamma_kp1 = special::gamma(kappa + 1.0)?;

        let mut tables = ViscosityTables {
            b,
            kappa,
            gamma_kp1,
            order,
            first_zero: 0.0,
            tau_b: 0.0,
            zeros: Vec::new(),
            peaks: Vec::new(),
            tail_c: 0.0,
        };

        tables.first_zero = special::first_positive_zero(order)?;
        let tau_span = (3.0 * tables.first_zero).max(200.0);
        tables.zeros = special::zeros_up_to(order, tau_span);
        // the span covers several oscillations for every admissible order
        assert!(tables.zeros.len() >= 2, "envelope needs at least one arch");

        // Arch maxima of |u|: |u| is unimodal between consecutive zeros
        // (zeros of J and J' interlace), so golden-section search applies.
        let mut peaks = Vec::with_capacity(tables.zeros.len().saturating_sub(1));
        for w in tables.zeros.windows(2) {
            peaks.push(golden_max(|tau| tables.u(tau).abs(), w[0], w[1]));
        }
        tables.peaks = peaks;

        // Tail constant: grid maximum of |u| tau^{b/2} plus the exact arch
        // peaks, with a 2% certification margin. The supremum sits near the
        // transition region tau ~ kappa, well inside the scanned span.
        let mut c: f64 = 0.0;
        let steps = 40_000;
        for i in 1..=steps {
            let tau = tau_span * i as f64 / steps as f64;
            c = c.max(tables.u(tau).abs() * tau.powf(0.5 * b));
        }
        for &(p, m) in &tables.peaks {
            c = c.max(m * p.powf(0.5 * b));
        }
        tables.tail_c = c * 1.02;

        tables.tau_b = compute_tau_b_inner(&tables)?;
        Ok(tables)
    }

    /// `u(tau) = (2/tau)^kappa Gamma(kappa+1) J_kappa(tau)`.
    fn u(&self, tau: f64) -> f64 {
        debug_assert!(tau >= 0.0);
        if tau < 0.75 {
            v_series(self.kappa, tau * tau)
        } else {
            (2.0 / tau).powf(self.kappa) * self.gamma_kp1 * special::bessel_j(self.order, tau)
        }
    }

    /// Monotone hull of `|u|` combined with the algebraic tail bound.
    fn envelope_u(&self, tau: f64) -> f64 {
        let hull = self.hull(tau);
        let tail = self.tail_c * tau.powf(-0.5 * self.b);
        hull.min(tail).min(1.0)
    }

    /// `sup_{s >= tau} |u(s)|`, assembled arch by arch. Exactly
    /// nonincreasing and exactly dominating `|u|`.
    fn hull(&self, tau: f64) -> f64 {
        let z = &self.zeros;
        if tau <= z[0] {
            let first_peak = self.peaks.first().map_or(0.0, |&(_, m)| m);
            return self.u(tau).max(first_peak).min(1.0);
        }
        let last = self.peaks.len() - 1;
        match z.partition_point(|&zi| zi <= tau).checked_sub(1) {
            Some(i) if i < self.peaks.len() => {
                let (p, m) = self.peaks[i];
                if tau <= p {
                    m
                } else {
                    let next = if i + 1 <= last { self.peaks[i + 1].1 } else { m };
                    // arch maxima decrease, so `next` also bounds all later arches
                    self.u(tau).abs().max(next)
                }
            }
            // beyond the last computed zero: every later arch max is below
            // the last computed one (the energy u'^2 + u^2 decreases)
            _ => self.peaks[last].1,
        }
    }
}

/// Largest `tau_b` in `(0, j_{kappa,1}]` with `u(tau) >= 1 - tau/(2 tau_b)`
/// on a dense grid, found by bisection to 1e-8 and re-verified (shrinking on
/// violation) against an independent finer grid.
pub fn compute_tau_b(b: f64) -> Result<f64> {
    let tables = ViscosityTables::build(b)?;
    Ok(tables.tau_b)
}

fn compute_tau_b_inner(tables: &ViscosityTables) -> Result<f64> {
    let j1 = tables.first_zero;
    // Beyond 4*tau_b the inequality is automatic (|u| <= 1); the grid spans
    // a safe multiple of that.
    let tau_max = (4.0 * j1 + 1.0).max(200.0);
    let coarse = |tau_b: f64| -> bool {
        let n = 20_000;
        for i in 1..=n {
            let tau = tau_max * i as f64 / n as f64;
            if tables.u(tau) < 1.0 - tau / (2.0 * tau_b) {
                return false;
            }
        }
        true
    };

    if coarse(j1) {
        return finalize_tau_b(tables, j1, tau_max);
    }
    let mut lo = 1e-8;
    let mut hi = j1;
    if !coarse(lo) {
        return Err(Error::Domain(format!(
            "no admissible tau_b found for b = {}",
            tables.b
        )));
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if coarse(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    finalize_tau_b(tables, lo, tau_max)
}

fn finalize_tau_b(tables: &ViscosityTables, tau_b: f64, tau_max: f64) -> Result<f64> {
    // Certify on an offset grid three times finer. The inequality
    // u(tau) >= 1 - tau/(2 tau_b) for all tau is equivalent to
    // tau_b <= inf tau/(2(1 - u(tau))), so clamp to the fine-grid infimum,
    // then shrink slightly if an off-grid tangency still violates.
    let n = 60_000;
    let mut inf_g = f64::INFINITY;
    for i in 1..=n {
        let tau = tau_max * (i as f64 - 0.37) / n as f64;
        let one_minus = 1.0 - tables.u(tau);
        if one_minus > 0.0 {
            inf_g = inf_g.min(tau / (2.0 * one_minus));
        }
    }
    let mut tau_b = tau_b.min(inf_g);
    for _ in 0..50 {
        let mut ok = true;
        for i in 1..=n {
            let tau = tau_max * (i as f64 - 0.71) / n as f64;
            if tables.u(tau) < 1.0 - tau / (2.0 * tau_b) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(tau_b);
        }
        tau_b *= 1.0 - 1e-6;
    }
    Err(Error::Domain(format!(
        "tau_b certification failed for b = {}",
        tables.b
    )))
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..100 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}
