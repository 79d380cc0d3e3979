//! `regflow verify`: the property suites, one CSV report per suite.

use crate::csvio::write_csv;
use crate::{Outcome, VerifyArgs};
use regflow_core::linalg::Matrix;
use regflow_core::oracle;
use regflow_core::problems::SplitMix64;
use regflow_core::rates::{self, RateFunction};
use regflow_core::special::{self, BesselOrder};
use regflow_core::FlowFilter;
use std::path::PathBuf;

struct Check {
    suite: &'static str,
    name: String,
    value: f64,
    tolerance: f64,
    pass: bool,
}

impl Check {
    fn of(suite: &'static str, name: impl Into<String>, value: f64, tolerance: f64) -> Check {
        Check {
            suite,
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    fn csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{}",
            self.suite, self.name, self.value, self.tolerance, self.pass
        )
    }
}

pub fn run(args: VerifyArgs) -> Outcome {
    let out: PathBuf = args.out.unwrap_or_else(|| PathBuf::from("."));
    let suites: Vec<&str> = match args.only.as_deref() {
        None => vec!["oracle", "filters", "bessel", "transform"],
        Some(s) if ["oracle", "filters", "bessel", "transform"].contains(&s) => vec![s],
        Some(other) => return Outcome::Usage(format!("unknown suite {other}")),
    };

    let mut failing_suites = Vec::new();
    for suite in suites {
        let checks = match suite {
            "oracle" => suite_oracle(args.dump_trajectories.then_some(out.as_path())),
            "filters" => suite_filters(args.corrupt_sigma0),
            "bessel" => suite_bessel(),
            "transform" => suite_transform(),
            _ => unreachable!(),
        };
        let rows: Vec<String> = checks.iter().map(Check::csv).collect();
        let path = out.join(format!("verify_{suite}.csv"));
        if let Err(e) = write_csv(&path, "suite,check,value,tolerance,pass", &rows) {
            return Outcome::Runtime(format!("cannot write {}: {e}", path.display()));
        }
        let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
        for c in &checks {
            println!(
                "[{}] {:<46} {:>10.3e} <= {:>8.1e}  {}",
                suite,
                c.name,
                c.value,
                c.tolerance,
                if c.pass { "ok" } else { "FAIL" }
            );
        }
        if !failed.is_empty() {
            failing_suites.push(suite.to_string());
        }
    }
    if failing_suites.is_empty() {
        Outcome::Ok
    } else {
        Outcome::CheckFailure(format!("failing suites: {}", failing_suites.join(", ")))
    }
}

fn seeded_matrix(n: usize, seed: u64) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    let mut m = Matrix::from_fn(n, n, |_, _| 2.0 * rng.next_f64() - 1.0);
    let s = m.frobenius_norm();
    m.scale(1.0 / s);
    m
}

fn bench_filters() -> Vec<FlowFilter> {
    vec![
        FlowFilter::showalter(),
        FlowFilter::heavy_ball(3.0).unwrap(),
        FlowFilter::vanishing_viscosity(3.0).unwrap(),
    ]
}

fn suite_oracle(dump_dir: Option<&std::path::Path>) -> Vec<Check> {
    let mut checks = Vec::new();
    for seed in [7u64, 8] {
        let m = seeded_matrix(6, seed);
        let mut rng = SplitMix64::new(seed ^ 0xff);
        let y: Vec<f64> = (0..6).map(|_| rng.next_normal()).collect();
        for f in bench_filters() {
            let report = oracle::oracle_compare(&m, &f, &y, &[1.0, 5.0]).unwrap();
            checks.push(Check::of(
                "oracle",
                format!("ode_vs_filter_{}_seed{}", f.kind().name(), seed),
                report.max_deviation,
                oracle::ORACLE_TOL,
            ));
            if let Some(dir) = dump_dir {
                if let Ok(tr) = oracle::integrate_flow(&m, &f, &y, 5.0, None, &[]) {
                    let path =
                        dir.join(format!("trajectory_{}_seed{}.csv", f.kind().name(), seed));
                    let _ = std::fs::create_dir_all(dir);
                    let _ = std::fs::write(path, tr.to_csv());
                }
            }
        }
    }
    checks
}

fn suite_filters(corrupt_sigma0: Option<f64>) -> Vec<Check> {
    let mut checks = Vec::new();
    let grid = |i: usize, n: usize, lo: f64, hi: f64| lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
    for f in bench_filters() {
        // generator bound r <= min(2/lambda, sigma/sqrt(alpha lambda));
        // the hidden hook replaces sigma to let tests watch the suite fail
        let sigma = match (corrupt_sigma0, f.kind()) {
            (Some(bad), regflow_core::FlowKind::Showalter) => bad,
            _ => f.sigma_bound(),
        };
        let mut violation: f64 = 0.0;
        let mut env_violation: f64 = 0.0;
        for i in 0..90 {
            let alpha = grid(i, 90, 1e-8, 1e2);
            let t = f.time_map(alpha).unwrap();
            for j in 0..90 {
                let lambda = grid(j, 90, 1e-8, 1e2);
                let r = f.generator(alpha, lambda);
                let bound = (2.0 / lambda).min(sigma / (alpha * lambda).sqrt());
                violation = violation.max((r - bound) / bound);
                let rt = f.rho_tilde(t, lambda).abs();
                env_violation = env_violation.max(rt - f.envelope(t, lambda));
            }
        }
        checks.push(Check::of(
            "filters",
            format!("generator_bound_{}", f.kind().name()),
            violation,
            1e-9,
        ));
        checks.push(Check::of(
            "filters",
            format!("envelope_dominates_{}", f.kind().name()),
            env_violation,
            1e-12,
        ));
        // envelope monotone in t
        let mut mono_violation: f64 = 0.0;
        for j in 0..40 {
            let lambda = grid(j, 40, 1e-6, 1e1);
            let mut prev = f64::INFINITY;
            for i in 0..150 {
                let t = grid(i, 150, 1e-3, 1e4);
                let e = f.envelope(t, lambda);
                mono_violation = mono_violation.max(e - prev);
                prev = e;
            }
        }
        checks.push(Check::of(
            "filters",
            format!("envelope_monotone_t_{}", f.kind().name()),
            mono_violation,
            1e-12,
        ));
    }
    checks
}

fn suite_bessel() -> Vec<Check> {
    let mut checks = Vec::new();
    // J_{1/2} closed form
    let half = BesselOrder::new(0.5).unwrap();
    let mut dev: f64 = 0.0;
    for i in 1..=50 {
        let tau = 0.3 * i as f64;
        let exact = (2.0 / (std::f64::consts::PI * tau)).sqrt() * tau.sin();
        dev = dev.max((special::bessel_j(half, tau) - exact).abs());
    }
    checks.push(Check::of("bessel", "j_half_vs_sine", dev, 1e-10));
    // first zeros
    let j0 = special::first_positive_zero(BesselOrder::new(0.0).unwrap()).unwrap();
    checks.push(Check::of(
        "bessel",
        "first_zero_j0",
        (j0 - 2.404_825_557_695_773).abs(),
        1e-10,
    ));
    let j1 = special::first_positive_zero(BesselOrder::new(1.0).unwrap()).unwrap();
    checks.push(Check::of(
        "bessel",
        "first_zero_j1",
        (j1 - 3.831_705_970_207_512).abs(),
        1e-10,
    ));
    // viscosity b = 2 filter is sinc
    let f = FlowFilter::vanishing_viscosity(2.0).unwrap();
    let mut dev: f64 = 0.0;
    for i in 1..=50 {
        let tau = 0.37 * i as f64;
        dev = dev.max((f.rho_tilde(tau, 1.0) - tau.sin() / tau).abs());
    }
    checks.push(Check::of("bessel", "viscosity_b2_sinc", dev, 1e-10));
    // gamma functional equation
    let mut dev: f64 = 0.0;
    for &x in &[0.3, 1.1, 4.5, 19.0, 41.5] {
        let lhs = special::gamma(x + 1.0).unwrap();
        let rhs = x * special::gamma(x).unwrap();
        dev = dev.max(((lhs - rhs) / rhs).abs());
    }
    checks.push(Check::of("bessel", "gamma_functional_equation", dev, 1e-12));
    checks
}

fn suite_transform() -> Vec<Check> {
    let mut checks = Vec::new();
    // Hoelder closed form
    let mut dev: f64 = 0.0;
    for &mu in &[0.5, 1.0, 2.0, 4.0] {
        let rate = RateFunction::hoelder(mu).unwrap();
        for i in 0..20 {
            let delta = 1e-6 * (1e6f64).powf(i as f64 / 19.0);
            let got = rate.phi_transform(delta).unwrap().value;
            let expect = delta.powf(2.0 * mu / (mu + 1.0));
            dev = dev.max(((got - expect) / expect).abs());
        }
    }
    checks.push(Check::of("transform", "hoelder_closed_form", dev, 1e-8));
    // scaling rule Phi[C^2 phi(c^2 .)](delta) = C^2 Phi[phi]((c/C) delta)
    let mut dev: f64 = 0.0;
    for &(big_c, small_c) in &[(2.0f64, 1.0f64), (1.0, 3.0), (5.0, 5.0)] {
        let phi = RateFunction::hoelder(1.5).unwrap();
        for i in 0..10 {
            let delta = 1e-4 * (1e4f64).powf(i as f64 / 9.0);
            // psi is Hoelder 1.5 with constant C^2 c^3; its transform follows
            // from the closed form directly
            let c_psi = big_c * big_c * small_c.powf(3.0);
            let alpha_star = (delta / c_psi.sqrt()).powf(2.0 / 2.5);
            let lhs = delta * delta / alpha_star;
            let rhs = big_c * big_c * phi.phi_transform(small_c / big_c * delta).unwrap().value;
            dev = dev.max(((lhs - rhs) / rhs).abs());
        }
    }
    checks.push(Check::of("transform", "scaling_rule", dev, 1e-8));
    // monotonicity in delta
    let rate = RateFunction::hoelder(1.0).unwrap();
    let mut violation: f64 = 0.0;
    let mut prev = 0.0;
    for i in 0..100 {
        let delta = 1e-6 * (1e8f64).powf(i as f64 / 99.0);
        let v = rate.phi_transform(delta).unwrap().value;
        violation = violation.max(prev - v);
        prev = v;
    }
    checks.push(Check::of("transform", "monotone_in_delta", violation, 1e-12));
    // compatibility reports
    for f in bench_filters() {
        let rate = RateFunction::hoelder(1.0).unwrap();
        let report = rates::compatibility_bound(&f, &rate, 1.0).unwrap();
        checks.push(Check::of(
            "transform",
            report.check_name.clone(),
            report.max_violation,
            1e-9,
        ));
    }
    // generalized inverse roundtrip
    let mut dev: f64 = 0.0;
    for i in 0..20 {
        let delta = 1e-6 * (1e6f64).powf(i as f64 / 19.0);
        let alpha = rate.generalized_inverse(delta).unwrap();
        dev = dev.max(((rate.hat(alpha) - delta) / delta).abs());
    }
    checks.push(Check::of("transform", "inverse_roundtrip", dev, 1e-8));
    checks
}
