//! Dynamical regularisation of linear ill-posed problems.
//!
//! Approximates the minimum-norm solution of `L x = y` by running one of three
//! flows to a finite time: the classical first-order gradient flow (Showalter's
//! method), the heavy-ball flow with constant damping `b`, and the vanishing
//! viscosity flow with damping `b/t` whose spectral solution is a scaled Bessel
//! function. Every flow is available in two independent forms:
//!
//! * a closed-form spectral filter applied through the SVD ([`filters`] +
//!   [`spectral`]), and
//! * direct adaptive Runge-Kutta integration of the flow ODE ([`oracle`]),
//!   which serves as an oracle for the filter implementation.
//!
//! On top of the filters sit the convergence-rate tools: rate functions and
//! the noise-free-to-noisy transform ([`rates`]), spectral error/residual
//! curves, best-worst-case error estimation, log-log rate fits and discrepancy
//! stopping ([`diagnostics`]), and synthetic test problems with prescribed
//! spectral decay and source-condition order ([`problems`]).

pub mod diagnostics;
pub mod filters;
pub mod linalg;
pub mod oracle;
pub mod problems;
pub mod rates;
pub mod special;
pub mod spectral;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero operator")]
    ZeroOperator,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("spectral function returned NaN at lambda = {lambda:e}")]
    SpectralNan { lambda: f64 },
    #[error("noise level out of range: {0:e}")]
    NoiseLevelOutOfRange(f64),
    #[error("incompatible: saturation mu >= b/2 (order {order}, b = {b})")]
    Saturation { order: f64, b: f64 },
    #[error("cannot fit log-log: {0}")]
    Fit(String),
    #[error("discrepancy level not reached: final residual {final_residual:e}")]
    DiscrepancyNotReached { final_residual: f64 },
    #[error("step size underflow at t = {t:e}")]
    StepSizeUnderflow { t: f64 },
    #[error("bessel zero bracket search exceeded tau = {0}")]
    ZeroBracket(f64),
    #[error("unknown problem family: {0}")]
    UnknownFamily(String),
    #[error("svd iteration did not converge")]
    SvdNoConvergence,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use diagnostics::{DiagnosticsCurve, Quantity, RateFit, StopResult};
pub use filters::{FilterConstants, FlowFilter, FlowKind};
pub use linalg::Matrix;
pub use problems::{NoisyData, Operator, Problem};
pub use rates::{RateFunction, TransformResult};
pub use special::BesselOrder;
pub use spectral::{SpectralDecomposition, SpectralTail};

#[cfg(test)]
mod tests {
    // Everything is immutable after construction; concurrent reads are part
    // of the contract.
    #[test]
    fn shared_types_are_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<super::SpectralDecomposition>();
        assert_send_sync::<super::SpectralTail>();
        assert_send_sync::<super::FlowFilter>();
        assert_send_sync::<super::RateFunction>();
        assert_send_sync::<super::Problem>();
        assert_send_sync::<super::DiagnosticsCurve>();
    }
}
