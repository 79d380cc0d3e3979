//! Gamma and Bessel functions of the first kind of real order.
//!
//! The vanishing viscosity filter evaluates `u(tau) = (2/tau)^k Gamma(k+1) J_k(tau)`
//! with `k = (b-1)/2`, so `J_nu` is needed for arbitrary real order
//! `nu >= -1/2` at arguments up to ~1e4. Evaluation strategy:
//!
//! * ascending power series with double-double term recurrence for
//!   `tau <= 30` (or `tau <= nu + 15` for large orders, where the series is
//!   still the monotone regime) -- plain f64 terms lose too many digits to
//!   cancellation beyond `tau ~ 12`;
//! * Hankel's large-argument expansion (Abramowitz & Stegun 9.2.5) beyond,
//!   truncated at its smallest term;
//! * forward recurrence in the order from Hankel-evaluated low orders for the
//!   remaining band (large order, moderate argument), which is stable in the
//!   oscillatory regime `nu < tau`.

use crate::{Error, Result};
use std::f64::consts::PI;

/// Largest supported order. The viscosity filter only needs
/// `nu = (b-1)/2`, so this caps `b` at 101.
pub const MAX_ORDER: f64 = 50.0;

/// Argument below which the power series is always used.
pub const TAU_SWITCH: f64 = 30.0;

/// Validated Bessel order `nu >= -1/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu < -0.5 || nu > MAX_ORDER {
            return Err(Error::Domain(format!(
                "bessel order must lie in [-0.5, {MAX_ORDER}], got {nu}"
            )));
        }
        Ok(BesselOrder(nu))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

// Lanczos approximation, g = 7, 9 coefficients (Godfrey's set, as used by
// the GNU Scientific Library).
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for positive arguments, relative error below 1e-12.
pub fn gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("gamma requires x > 0, got {x}")));
    }
    Ok(gamma_pos(x))
}

pub(crate) fn gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos sum in its accurate range.
        PI / ((PI * x).sin() * gamma_pos(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut a = LANCZOS[0];
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * a
    }
}

// ---------------------------------------------------------------------------
// Double-double arithmetic for the series branch.
//
// Error-free transformations via Dekker/Veltkamp splitting; no FMA required,
// so results are identical on x86-64 and wasm32.

#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a; // 2^27 + 1
    let hi = c - (c - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

impl Dd {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let (p, e) = two_prod(q1, b);
        let r = ((self.hi - p) - e) + self.lo;
        let q2 = r / b;
        let (hi, lo) = two_sum(q1, q2);
        Dd { hi, lo }
    }

    /// Division by an unevaluated sum `b.hi + b.lo`. The series divisor
    /// `nu + k` must keep its low word: rounding it to one f64 costs a full
    /// eps of relative error per term, which the largest terms amplify far
    /// beyond the 1e-10 budget.
    #[inline]
    fn div_dd(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self.add(b.mul_f64(q1).neg());
        let q2 = (r.hi + r.lo) / b.hi;
        let (hi, lo) = two_sum(q1, q2);
        Dd { hi, lo }
    }

    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

// ---------------------------------------------------------------------------

/// Bessel function of the first kind of real order `nu >= -1/2`.
///
/// Absolute or relative error at most 1e-10 for `tau <= 1e4`.
pub fn bessel_j(nu: BesselOrder, tau: f64) -> f64 {
    assert!(tau >= 0.0 && tau.is_finite(), "bessel_j requires tau >= 0");
    let nu = nu.get();
    if tau == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if tau <= TAU_SWITCH || tau <= nu + 15.0 {
        return bessel_series(nu, tau);
    }
    // 4 nu^2 <= 2 tau keeps the asymptotic terms decreasing from the start.
    if 4.0 * nu * nu <= 2.0 * tau {
        if let Some(v) = bessel_hankel(nu, tau) {
            return v;
        }
    }
    bessel_recurrence(nu, tau)
}

/// Ascending series with double-double term recurrence.
fn bessel_series(nu: f64, tau: f64) -> f64 {
    let half = 0.5 * tau;
    // Leading factor in plain f64: it scales the whole series, so its ~1e-14
    // relative error does not feed the cancellation.
    let t0 = half.powf(nu) / gamma_pos(nu + 1.0);
    if t0 == 0.0 {
        return 0.0; // underflow: the true value is below 1e-300
    }
    let q = half * half;
    let mut term = Dd::from_f64(t0);
    let mut sum = term;
    for k in 1..=500 {
        let kf = k as f64;
        let (dh, dl) = two_sum(nu, kf);
        term = term.mul_f64(q).div_f64(kf).div_dd(Dd { hi: dh, lo: dl }).neg();
        sum = sum.add(term);
        let ratio = q / ((kf + 1.0) * (nu + kf + 1.0));
        if ratio < 0.9 && term.hi.abs() < 1e-22 * (1.0 + sum.hi.abs()) {
            break;
        }
    }
    sum.to_f64()
}

/// Hankel's asymptotic expansion (A&S 9.2.5/9.2.9/9.2.10), truncated at its
/// smallest term. Returns `None` when the smallest term is too large for a
/// 1e-11 result.
fn bessel_hankel(nu: f64, tau: f64) -> Option<f64> {
    let mu4 = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut c = 1.0;
    let mut best = 1.0f64;
    for j in 0..60u32 {
        let jf = j as f64;
        let next = c * (mu4 - (2.0 * jf + 1.0).powi(2)) / (8.0 * tau * (jf + 1.0));
        if next.abs() >= c.abs() && j > 0 {
            break; // divergence point reached
        }
        c = next;
        // c now holds a_{j+1}(nu)/tau^{j+1}
        let idx = j + 1;
        if idx % 2 == 0 {
            let sign = if (idx / 2) % 2 == 0 { 1.0 } else { -1.0 };
            p += sign * c;
        } else {
            let sign = if ((idx - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            q += sign * c;
        }
        best = best.min(c.abs());
        if c.abs() < 1e-18 {
            break;
        }
    }
    if best > 1e-11 {
        return None;
    }
    let omega = tau - (0.5 * nu + 0.25) * PI;
    Some((2.0 / (PI * tau)).sqrt() * (p * omega.cos() - q * omega.sin()))
}

/// Forward recurrence in the order from Hankel-evaluated orders in [0, 2).
/// Only called for `tau > nu + 15`, where the recurrence stays in the
/// oscillatory (stable) regime.
fn bessel_recurrence(nu: f64, tau: f64) -> f64 {
    let steps = nu.floor() as usize;
    let nu0 = nu - steps as f64;
    let mut jm = match bessel_hankel(nu0, tau) {
        Some(v) => v,
        None => return bessel_series(nu0, tau),
    };
    if steps == 0 {
        return jm;
    }
    let mut j = match bessel_hankel(nu0 + 1.0, tau) {
        Some(v) => v,
        None => return bessel_series(nu0 + 1.0, tau),
    };
    let mut order = nu0 + 1.0;
    for _ in 1..steps {
        let next = (2.0 * order / tau) * j - jm;
        jm = j;
        j = next;
        order += 1.0;
    }
    j
}

/// First positive zero `j_{nu,1}` of `J_nu`, located by a step scan followed
/// by bisection; absolute accuracy better than 1e-10.
pub fn first_positive_zero(nu: BesselOrder) -> Result<f64> {
    let zeros = positive_zeros(nu, 1, 100.0)?;
    Ok(zeros[0])
}

/// All positive zeros of `J_nu` up to `cap`, in increasing order.
pub fn zeros_up_to(nu: BesselOrder, cap: f64) -> Vec<f64> {
    let mut zeros = Vec::new();
    let mut tau = 0.5;
    let mut prev = bessel_j(nu, tau).max(f64::MIN_POSITIVE);
    while tau < cap {
        let next_tau = tau + 0.1;
        let next = bessel_j(nu, next_tau);
        if prev.signum() != next.signum() {
            zeros.push(bisect_zero(nu, tau, next_tau));
        }
        tau = next_tau;
        prev = next;
    }
    zeros
}

/// The first `count` positive zeros of `J_nu` below `cap`, in increasing
/// order. Scan step 0.1 cannot skip a zero: consecutive Bessel zeros are
/// more than pi apart.
pub fn positive_zeros(nu: BesselOrder, count: usize, cap: f64) -> Result<Vec<f64>> {
    let mut zeros = Vec::with_capacity(count);
    let mut tau = 0.5;
    let mut prev = bessel_j(nu, tau);
    // J_nu(0.5) can be subnormal for large orders; treat exact zero as positive.
    if prev == 0.0 {
        prev = f64::MIN_POSITIVE;
    }
    while zeros.len() < count {
        let next_tau = tau + 0.1;
        if next_tau > cap {
            return Err(Error::ZeroBracket(cap));
        }
        let next = bessel_j(nu, next_tau);
        if prev.signum() != next.signum() {
            zeros.push(bisect_zero(nu, tau, next_tau));
        }
        tau = next_tau;
        prev = next;
    }
    Ok(zeros)
}

fn bisect_zero(nu: BesselOrder, mut lo: f64, mut hi: f64) -> f64 {
    let flo = bessel_j(nu, lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fmid = bessel_j(nu, mid);
        if fmid == 0.0 {
            return mid;
        }
        if flo.signum() == fmid.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}
