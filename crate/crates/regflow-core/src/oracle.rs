//! Direct numerical integration of the flow ODEs on small dense matrices.
//!
//! Serves as the independent oracle for the spectral filters: the same flow
//! is computed once through the closed-form filter and once by adaptive
//! Dormand-Prince 5(4) integration of
//!
//! `xi^(N)(t) + sum_k a_k(t) xi^(k)(t) = -L^T L xi(t) + L^T y`,
//!
//! with zero initial data, and the two must agree. Deliberately uses only
//! dense matrix-vector products -- no spectral shortcut -- so the two paths
//! share no code.

use crate::filters::{FlowFilter, FlowKind};
use crate::linalg::{norm, sub, Matrix};
use crate::spectral::SpectralDecomposition;
use crate::{Error, Result};

/// Hard cap on the oracle problem size; correctness scale, not performance.
pub const MAX_ORACLE_DIM: usize = 64;

/// Integration output: states (and velocities, for second-order flows) at
/// every accepted step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub velocities: Option<Vec<Vec<f64>>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    /// State at the exact time `t` if it is one of the stored step times.
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&ti| (ti - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|i| self.states[i].as_slice())
    }

    /// CSV dump `(t, state components)`, for debugging.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for j in 0..n {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:e}"));
            for v in s {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Right-hand side of the first-order system equivalent to the flow.
struct FlowSystem<'a> {
    matrix: &'a Matrix,
    lty: Vec<f64>,
    kind: FlowKind,
}

impl FlowSystem<'_> {
    fn dim(&self) -> usize {
        let n = self.matrix.cols();
        match self.kind {
            FlowKind::Showalter => n,
            _ => 2 * n,
        }
    }

    /// `-L^T(L x - y_tilde)` evaluated with dense products only.
    fn gradient_term(&self, x: &[f64]) -> Vec<f64> {
        let ax = self.matrix.matvec(x);
        let mut residual_pullback = self.matrix.matvec_transpose(&ax);
        for (r, l) in residual_pullback.iter_mut().zip(&self.lty) {
            *r = l - *r;
        }
        residual_pullback
    }

    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) {
        let n = self.matrix.cols();
        match self.kind {
            FlowKind::Showalter => {
                let g = self.gradient_term(state);
                out.copy_from_slice(&g);
            }
            FlowKind::HeavyBall(b) => {
                let (x, v) = state.split_at(n);
                let g = self.gradient_term(x);
                out[..n].copy_from_slice(v);
                for i in 0..n {
                    out[n + i] = g[i] - b * v[i];
                }
            }
            FlowKind::VanishingViscosity(b) => {
                let (x, v) = state.split_at(n);
                let g = self.gradient_term(x);
                out[..n].copy_from_slice(v);
                let damping = b / t;
                for i in 0..n {
                    out[n + i] = g[i] - damping * v[i];
                }
            }
        }
    }
}

// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate the flow for `matrix` and data `y_tilde` up to `t_end` with
/// mixed absolute/relative local error `tol` per step (default 1e-9 when
/// `None`). Requested `checkpoints` are hit exactly by step clamping.
pub fn integrate_flow(
    matrix: &Matrix,
    filter: &FlowFilter,
    y_tilde: &[f64],
    t_end: f64,
    tol: Option<f64>,
    checkpoints: &[f64],
) -> Result<Trajectory> {
    assert!(
        matrix.rows() <= MAX_ORACLE_DIM && matrix.cols() <= MAX_ORACLE_DIM,
        "oracle integration is capped at {MAX_ORACLE_DIM}x{MAX_ORACLE_DIM}"
    );
    assert_eq!(y_tilde.len(), matrix.rows());
    assert!(t_end > 0.0);
    let tol = tol.unwrap_or(1e-9);
    let kind = filter.kind();
    let n = matrix.cols();
    let system = FlowSystem {
        matrix,
        lty: matrix.matvec_transpose(y_tilde),
        kind,
    };
    let dim = system.dim();

    // Initial data. The viscosity coefficient b/t is singular at the
    // origin, so integration starts at t0 = 1e-4 from the Taylor expansion
    // of the scalar solutions: xi(t0) = t0^2/(2(b+1)) L^T y,
    // xi'(t0) = t0/(b+1) L^T y.
    let (mut t, mut state) = match kind {
        FlowKind::VanishingViscosity(b) => {
            let t0 = 1e-4_f64.min(0.5 * t_end);
            let mut s = vec![0.0; dim];
            for i in 0..n {
                s[i] = t0 * t0 / (2.0 * (b + 1.0)) * system.lty[i];
                s[n + i] = t0 / (b + 1.0) * system.lty[i];
            }
            (t0, s)
        }
        _ => (0.0, vec![0.0; dim]),
    };

    let mut marks: Vec<f64> = checkpoints
        .iter()
        .copied()
        .filter(|&c| c > t && c <= t_end)
        .collect();
    marks.push(t_end);
    marks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    marks.dedup();

    let mut times = vec![t];
    let mut states = vec![state[..n].to_vec()];
    let mut velocities = match kind {
        FlowKind::Showalter => None,
        _ => Some(vec![state[n..].to_vec()]),
    };
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    let mut k = vec![vec![0.0; dim]; 7];
    let mut h = (t_end / 100.0).min(1e-3).max(1e-10);
    let mut mark_idx = 0;

    while mark_idx < marks.len() {
        let target = marks[mark_idx];
        if t >= target {
            mark_idx += 1;
            continue;
        }
        let mut clamped = false;
        if t + h >= target {
            h = target - t;
            clamped = true;
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::StepSizeUnderflow { t });
        }

        // seven stages (FSAL structure not exploited; the oracle favours
        // plainness over speed)
        system.eval(t, &state, &mut k[0]);
        let mut stage = vec![0.0; dim];
        for s in 0..6 {
            for i in 0..dim {
                let mut acc = state[i];
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            system.eval(t + C[s] * h, &stage, &mut k[s + 1]);
        }

        let mut err: f64 = 0.0;
        let mut next = vec![0.0; dim];
        for i in 0..dim {
            let mut y5 = state[i];
            let mut y4 = state[i];
            for j in 0..7 {
                y5 += h * B5[j] * k[j][i];
                y4 += h * B4[j] * k[j][i];
            }
            next[i] = y5;
            let scale = tol * (1.0 + state[i].abs().max(y5.abs()));
            err = err.max((y5 - y4).abs() / scale);
        }

        if err <= 1.0 {
            t += h;
            state = next;
            accepted += 1;
            times.push(t);
            states.push(state[..n].to_vec());
            if let Some(v) = velocities.as_mut() {
                v.push(state[n..].to_vec());
            }
            if clamped {
                mark_idx += 1;
            }
        } else {
            rejected += 1;
        }
        let factor = (0.9 * (1.0 / err.max(1e-10)).powf(0.2)).clamp(0.2, 5.0);
        h = (h * factor).min(t_end);
    }

    Ok(Trajectory {
        kind,
        times,
        states,
        velocities,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// Comparison of the ODE trajectory against the spectral-filter solution at
/// a set of checkpoint times.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub kind: FlowKind,
    /// `(t, ||xi_ode - xi_filter|| / (1 + ||xi_filter||))` per checkpoint.
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Tolerance of the oracle equivalence check.
pub const ORACLE_TOL: f64 = 1e-6;

/// Integrate the flow and compare against `rho(t; L^*L) L^* y_tilde`
/// computed through the SVD, at each checkpoint.
pub fn oracle_compare(
    matrix: &Matrix,
    filter: &FlowFilter,
    y_tilde: &[f64],
    checkpoints: &[f64],
) -> Result<OracleReport> {
    assert!(!checkpoints.is_empty());
    let t_end = checkpoints.iter().cloned().fold(f64::MIN, f64::max);
    let trajectory = integrate_flow(matrix, filter, y_tilde, t_end, Some(1e-10), checkpoints)?;
    let dec = SpectralDecomposition::decompose(matrix)?;

    let mut deviations = Vec::with_capacity(checkpoints.len());
    let mut max_deviation: f64 = 0.0;
    for &t in checkpoints {
        let ode = trajectory
            .state_at(t)
            .ok_or_else(|| Error::Domain(format!("checkpoint {t} not reached")))?;
        let spectral = dec.apply_spectral_function(|l| filter.rho(t, l), y_tilde)?;
        let dev = norm(&sub(ode, &spectral)) / (1.0 + norm(&spectral));
        deviations.push((t, dev));
        max_deviation = max_deviation.max(dev);
    }
    Ok(OracleReport {
        kind: filter.kind(),
        deviations,
        max_deviation,
        pass: max_deviation <= ORACLE_TOL,
    })
}
