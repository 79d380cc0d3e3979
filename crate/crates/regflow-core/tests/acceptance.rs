//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `--nocapture` to see them). Criterion 10 (CLI determinism)
//! lives in the CLI crate's own acceptance test.

use regflow_core::diagnostics::{self, log_grid};
use regflow_core::filters::FlowFilter;
use regflow_core::linalg::Matrix;
use regflow_core::oracle;
use regflow_core::problems::{self, SplitMix64};
use regflow_core::rates::{self, RateFunction};
use regflow_core::special::{self, BesselOrder};
use regflow_core::spectral::SpectralDecomposition;
use std::time::Instant;

fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    Matrix::from_fn(rows, cols, |_, _| 2.0 * rng.next_f64() - 1.0)
}

fn all_filters() -> Vec<FlowFilter> {
    vec![
        FlowFilter::showalter(),
        FlowFilter::heavy_ball(3.0).unwrap(),
        FlowFilter::vanishing_viscosity(5.0).unwrap(),
    ]
}

/// Criterion 1: spectral filter vs ODE integration on seeded random 8x8
/// matrices with ||L|| <= 1, relative deviation <= 1e-6 at t in {1, 10},
/// for Showalter, heavy ball b in {1, 3} and viscosity b in {2, 3, 5}.
#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let filters = vec![
        FlowFilter::showalter(),
        FlowFilter::heavy_ball(1.0).unwrap(),
        FlowFilter::heavy_ball(3.0).unwrap(),
        FlowFilter::vanishing_viscosity(2.0).unwrap(),
        FlowFilter::vanishing_viscosity(3.0).unwrap(),
        FlowFilter::vanishing_viscosity(5.0).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for seed in [101u64, 202, 303] {
        let mut m = seeded_matrix(8, 8, seed);
        let scale = m.frobenius_norm();
        m.scale(1.0 / scale); // Frobenius >= spectral, so ||L|| <= 1
        let mut rng = SplitMix64::new(seed ^ 0xabcd);
        let y: Vec<f64> = (0..8).map(|_| rng.next_normal()).collect();
        for f in &filters {
            let report = oracle::oracle_compare(&m, f, &y, &[1.0, 10.0]).unwrap();
            worst = worst.max(report.max_deviation);
            assert!(
                report.pass,
                "{:?} seed {seed}: deviation {}",
                f.kind(),
                report.max_deviation
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 1 runtime {elapsed:.1}s exceeds 30s");
    println!(
        "PASS criterion 1: oracle equivalence, max deviation {worst:.2e} <= 1e-6 ({elapsed:.1}s)"
    );
}

/// Envelope error and residual curves in the time domain:
/// `D(alpha(t)) = sum env^2(t; lambda_k) de_k` and its lambda-weighted
/// counterpart `Q`. For Showalter the envelope equals the error function,
/// and for the heavy ball on this benchmark every eigenvalue sits below
/// b^2/4 where the two coincide as well, so these are exactly
/// `||xi(t;y) - x||^2` and `||L xi(t;y) - y||^2` there. The viscosity
/// filter oscillates through zero on the sparse top of the spectrum, so its
/// pointwise curves carry no log-log slope; the monotone envelope curves
/// dominate them and carry the rate.
fn clean_envelope_curves(
    filter: &FlowFilter,
    solution_coeffs: &[f64],
    lambdas: &[f64],
    t_grid: Vec<f64>,
) -> (diagnostics::DiagnosticsCurve, diagnostics::DiagnosticsCurve) {
    let mut err = Vec::with_capacity(t_grid.len());
    let mut res = Vec::with_capacity(t_grid.len());
    for &t in &t_grid {
        let mut e = 0.0;
        let mut r = 0.0;
        for (k, &c) in solution_coeffs.iter().enumerate() {
            let env = filter.envelope(t, lambdas[k]);
            e += env * env * c * c;
            r += lambdas[k] * env * env * c * c;
        }
        err.push(e);
        res.push(r);
    }
    (
        diagnostics::DiagnosticsCurve {
            grid: t_grid.clone(),
            values: err,
            quantity: diagnostics::Quantity::ErrorVsT,
            fit: None,
        },
        diagnostics::DiagnosticsCurve {
            grid: t_grid,
            values: res,
            quantity: diagnostics::Quantity::ResidualVsT,
            fit: None,
        },
    )
}

fn benchmark_grid(filter: &FlowFilter) -> Vec<f64> {
    // Spans the pre-saturation window of the n = 2000, p = 1 problem with a
    // short margin beyond. For the viscosity flow the post-saturation decay
    // is itself a clean power law t^{-b}, so reaching deeper would hand the
    // window search a competing regime.
    match filter.kind() {
        regflow_core::FlowKind::VanishingViscosity(_) => log_grid(1e-1, 1e4, 180),
        _ => log_grid(1e-1, 1e7, 200),
    }
}

/// Criteria 2 and 3: noise-free error and residual rates on the diagonal
/// benchmark (n = 2000, p = 1). Expected slopes: error -mu (Showalter,
/// heavy ball b=3) and -2mu (viscosity b=5); residual -(mu+1) and -2(mu+1)
/// (the latter only below the viscosity saturation mu < b/2 - 1).
#[test]
fn criterion_02_03_noise_free_rates() {
    let start = Instant::now();
    let filters = all_filters();
    let mut lines = Vec::new();
    for &mu in &[0.5, 1.0, 2.0] {
        let prob = problems::diagonal_problem(2000, 1.0, mu, 2024);
        let dec = prob.decompose().unwrap();
        let coeffs = dec.right_coefficients(&prob.x_dagger);
        let lambdas: Vec<f64> = (0..dec.rank()).map(|k| dec.eigenvalue(k)).collect();
        for f in &filters {
            let is_visc = matches!(f.kind(), regflow_core::FlowKind::VanishingViscosity(_));
            let scale = if is_visc { 2.0 } else { 1.0 };
            let (err_curve, res_curve) =
                clean_envelope_curves(f, &coeffs, &lambdas, benchmark_grid(f));

            let fit = diagnostics::fit_rate(&err_curve, None).unwrap();
            let expected = -scale * mu;
            assert!(
                (fit.slope - expected).abs() <= 0.15,
                "{:?} mu={mu}: error slope {} vs {expected}",
                f.kind(),
                fit.slope
            );
            lines.push(format!(
                "  {} mu={mu}: error slope {:.3} (expected {expected}), R^2 {:.4}",
                f.kind().name(),
                fit.slope,
                fit.r_squared
            ));

            // criterion 3: residual rates (skip viscosity above saturation)
            if !is_visc || mu < 0.5 * 5.0 - 1.0 {
                let fit = diagnostics::fit_rate(&res_curve, None).unwrap();
                let expected = -scale * (mu + 1.0);
                assert!(
                    (fit.slope - expected).abs() <= 0.2,
                    "{:?} mu={mu}: residual slope {} vs {expected}",
                    f.kind(),
                    fit.slope
                );
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criteria 2-3 runtime {elapsed:.1}s exceeds 60s");
    println!("PASS criterion 2: noise-free error rates within +-0.15 ({elapsed:.1}s)");
    for l in &lines {
        println!("{l}");
    }
    println!("PASS criterion 3: residual rates within +-0.2");
}

/// Criterion 4: noisy rates. Over delta in a 9-point log grid 1e-6..1e-2,
/// the min-over-t squared error maximised over the perturbation family
/// (five seeded noise draws plus the adversarial singular-direction and
/// spectral-bucket candidates) must follow `delta^{2mu/(mu+1)}` within 0.15
/// in the fitted slope, for all three methods.
///
/// Purely random draws are not enough here: white noise spread over all
/// 2000 data directions decays with the statistical exponent
/// `2mu/(mu+3/2)` on this p = 1 problem, visibly below the worst-case rate
/// the bound is sharp for; the worst-case family restores it.
#[test]
fn criterion_04_noisy_rates() {
    let start = Instant::now();
    let filters = all_filters();
    let delta_grid = log_grid(1e-6, 1e-2, 9);
    let alpha_grid = log_grid(1e-9, 1.0, 160);
    for &mu in &[0.5, 1.0, 2.0] {
        let prob = problems::diagonal_problem(2000, 1.0, mu, 77);
        let dec = prob.decompose().unwrap();
        for f in &filters {
            let curve = diagnostics::best_worst_case(
                &dec,
                f,
                &prob.x_dagger,
                &delta_grid,
                &alpha_grid,
                5,
                1000,
            )
            .unwrap();
            let fit = diagnostics::fit_rate(&curve, None).unwrap();
            let expected = 2.0 * mu / (mu + 1.0);
            assert!(
                (fit.slope - expected).abs() <= 0.15,
                "{:?} mu={mu}: noisy slope {} vs {expected}",
                f.kind(),
                fit.slope
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "criterion 4 runtime {elapsed:.1}s exceeds 120s");
    println!("PASS criterion 4: noisy rates 2mu/(mu+1) within +-0.15 ({elapsed:.1}s)");
}

/// Criterion 5: `Phi[phi_mu](delta) = delta^{2mu/(mu+1)}` to relative 1e-8
/// for mu in {0.5, 1, 2, 4} over 20 noise levels.
#[test]
fn criterion_05_phi_transform_closed_form() {
    for &mu in &[0.5, 1.0, 2.0, 4.0] {
        let rate = RateFunction::hoelder(mu).unwrap();
        for i in 0..20 {
            let delta = 1e-8 * (1e8f64).powf(i as f64 / 19.0);
            let got = rate.phi_transform(delta).unwrap().value;
            let expect = delta.powf(2.0 * mu / (mu + 1.0));
            assert!(
                ((got - expect) / expect).abs() <= 1e-8,
                "mu={mu} delta={delta}: {got} vs {expect}"
            );
        }
    }
    println!("PASS criterion 5: Phi[phi_mu] closed form to 1e-8");
}

/// Criterion 6: generator/envelope inequalities with zero violations on
/// >= 1e4 samples each.
#[test]
fn criterion_06_generator_envelope_properties() {
    let filters = vec![
        FlowFilter::showalter(),
        FlowFilter::heavy_ball(1.0).unwrap(),
        FlowFilter::heavy_ball(3.0).unwrap(),
        FlowFilter::vanishing_viscosity(2.0).unwrap(),
        FlowFilter::vanishing_viscosity(5.0).unwrap(),
    ];
    let mut rng = SplitMix64::new(616);
    // domination |rho_tilde| <= envelope <= 1 on 1e4 random samples per filter
    for f in &filters {
        for _ in 0..10_000 {
            let t = 10f64.powf(rng.next_f64() * 7.0 - 3.0); // 1e-3..1e4
            let lambda = 10f64.powf(rng.next_f64() * 8.0 - 6.0); // 1e-6..1e2
            let r = f.rho_tilde(t, lambda);
            let e = f.envelope(t, lambda);
            assert!(r.abs() <= 1.0 && e <= 1.0 && r.abs() <= e + 1e-12);
        }
    }
    // generator bound chain R_alpha <= r_alpha <= min(2/lambda, sigma/sqrt(alpha lambda))
    for f in &filters {
        let sigma = f.sigma_bound();
        assert!(sigma > 0.0 && sigma < 1.0);
        for i in 0..110 {
            let alpha = 10f64.powf(-8.0 + 10.0 * i as f64 / 109.0);
            for j in 0..110 {
                let lambda = 10f64.powf(-8.0 + 10.0 * j as f64 / 109.0);
                let r = f.generator(alpha, lambda);
                let big_r = f.envelope_generator(alpha, lambda);
                let bound = (2.0 / lambda).min(sigma / (alpha * lambda).sqrt());
                assert!(r >= 0.0, "{:?}: r < 0", f.kind());
                assert!(
                    big_r <= r + 1e-10 * (1.0 + r.abs()),
                    "{:?} a={alpha} l={lambda}",
                    f.kind()
                );
                assert!(
                    r <= bound * (1.0 + 1e-9),
                    "{:?} a={alpha} l={lambda}: {r} > {bound}",
                    f.kind()
                );
            }
        }
    }
    // envelope monotone in t and lambda (finite-difference sign checks)
    for f in &filters {
        for i in 0..100 {
            let t = 10f64.powf(-2.0 + 5.0 * i as f64 / 99.0);
            let mut prev = f64::INFINITY;
            for j in 0..110 {
                let lambda = 10f64.powf(-6.0 + 8.0 * j as f64 / 109.0);
                let e = f.envelope(t, lambda);
                assert!(e <= prev + 1e-12);
                prev = e;
            }
        }
        for j in 0..100 {
            let lambda = 10f64.powf(-6.0 + 8.0 * j as f64 / 99.0);
            let mut prev = f64::INFINITY;
            for i in 0..110 {
                let t = 10f64.powf(-2.0 + 6.0 * i as f64 / 109.0);
                let e = f.envelope(t, lambda);
                assert!(e <= prev + 1e-12);
                prev = e;
            }
        }
    }
    // heavy-ball Psi_Lambda majorant for Lambda in {1, b^2}
    for &b in &[1.0, 3.0] {
        let f = FlowFilter::heavy_ball(b).unwrap();
        for &big_lambda in &[1.0, b * b] {
            for i in 0..110 {
                let t = 10f64.powf(-2.0 + 5.0 * i as f64 / 109.0);
                for j in 0..100 {
                    let lambda = big_lambda * 10f64.powf(-6.0 + 6.0 * j as f64 / 99.0);
                    let env = f.envelope(t, lambda);
                    let psi = f.psi_upper(lambda * t, big_lambda);
                    assert!(env <= psi + 1e-12);
                }
            }
        }
    }
    // R_tilde_alpha(alpha) bounded away from 1
    for f in &filters {
        let mut sup: f64 = 0.0;
        for i in 0..10_000 {
            let alpha = 10f64.powf(-10.0 + 11.0 * i as f64 / 9999.0);
            let t = f.time_map(alpha).unwrap();
            sup = sup.max(f.envelope(t, alpha));
        }
        assert!(sup < 1.0 - 1e-6, "{:?}: sup R(alpha) = {sup}", f.kind());
    }
    println!("PASS criterion 6: generator/envelope property suite, zero violations");
}

/// Criterion 7: sandwich bounds on the benchmark runs:
/// `(1-sigma)^2 e(alpha) <= d(alpha) <= D(alpha)` at every grid point and
/// `d_tilde(delta) <= (1+sigma)^2 Phi[D](delta)` for the empirical curve.
#[test]
fn criterion_07_sandwich_bounds() {
    let prob = problems::diagonal_problem(2000, 1.0, 1.0, 2024);
    let dec = prob.decompose().unwrap();
    let tail = dec.spectral_tail(&prob.x_dagger);
    let alpha_grid = log_grid(1e-7, 1.0, 120);
    let delta_grid = log_grid(1e-5, 1e-2, 7);
    for f in all_filters() {
        let sigma = f.sigma_bound();
        let curves = diagnostics::noise_free_curves(&dec, &f, &prob.x_dagger, &alpha_grid).unwrap();
        for (i, &alpha) in alpha_grid.iter().enumerate() {
            let lower = (1.0 - sigma) * (1.0 - sigma) * tail.eval(alpha);
            let d = curves.error.values[i];
            let dd = curves.error_envelope.values[i];
            assert!(
                lower <= d * (1.0 + 1e-9) + 1e-300,
                "{:?} alpha={alpha}",
                f.kind()
            );
            assert!(d <= dd * (1.0 + 1e-9) + 1e-300, "{:?} alpha={alpha}", f.kind());
        }
        let d_tilde = diagnostics::best_worst_case(
            &dec,
            &f,
            &prob.x_dagger,
            &delta_grid,
            &alpha_grid,
            8,
            99,
        )
        .unwrap();
        for (i, &delta) in delta_grid.iter().enumerate() {
            let phi_d = rates::step_phi_transform(
                &curves.error_envelope.grid,
                &curves.error_envelope.values,
                delta,
            )
            .expect("delta within the sampled range of hat D");
            let upper = (1.0 + sigma) * (1.0 + sigma) * phi_d;
            // 10% headroom for the discretised inner infimum
            assert!(
                d_tilde.values[i] <= upper * 1.1,
                "{:?} delta={delta}: {} > {upper}",
                f.kind(),
                d_tilde.values[i]
            );
        }
    }
    println!("PASS criterion 7: exact-data and noisy sandwich bounds hold on the benchmark");
}

/// Criterion 8: special-function identities.
#[test]
fn criterion_08_special_functions() {
    // J_{1/2} against the sine closed form
    let half = BesselOrder::new(0.5).unwrap();
    for i in 1..=40 {
        let tau = 0.25 * i as f64;
        let exact = (2.0 / (std::f64::consts::PI * tau)).sqrt() * tau.sin();
        assert!((special::bessel_j(half, tau) - exact).abs() <= 1e-10);
    }
    // viscosity b = 2 filter equals sin(tau)/tau
    let f = FlowFilter::vanishing_viscosity(2.0).unwrap();
    for i in 1..=40 {
        let tau = 0.3 * i as f64;
        let got = f.rho_tilde(tau, 1.0);
        assert!((got - tau.sin() / tau).abs() <= 1e-10, "tau={tau}");
    }
    // first zeros stable to 1e-10 under refinement of the bracketing scan
    for (nu, reference) in [(0.0, 2.404_825_557_695_773), (1.0, 3.831_705_970_207_512)] {
        let ord = BesselOrder::new(nu).unwrap();
        let from_lib = special::first_positive_zero(ord).unwrap();
        for &step in &[0.1, 0.01, 0.005] {
            let mut tau = 0.5;
            let mut prev = special::bessel_j(ord, tau);
            let zero = loop {
                let next_tau = tau + step;
                let next = special::bessel_j(ord, next_tau);
                if prev.signum() != next.signum() {
                    // bisect
                    let (mut lo, mut hi) = (tau, next_tau);
                    let flo = special::bessel_j(ord, lo);
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if special::bessel_j(ord, mid).signum() == flo.signum() {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    break 0.5 * (lo + hi);
                }
                tau = next_tau;
                prev = next;
            };
            assert!(
                (zero - from_lib).abs() <= 1e-10 && (zero - reference).abs() <= 1e-10,
                "nu={nu} step={step}: {zero}"
            );
        }
    }
    println!("PASS criterion 8: Bessel closed forms and zero stability to 1e-10");
}

/// Criterion 9: over 20 seeded noise draws on the diagonal benchmark
/// (mu = 1, delta = 1e-3), the discrepancy-stopped error norm stays within
/// a factor 10 of the grid-optimal error norm, for every method.
#[test]
fn criterion_09_discrepancy_stopping() {
    let prob = problems::diagonal_problem(2000, 1.0, 1.0, 2024);
    let dec = prob.decompose().unwrap();
    let delta = 1e-3;
    for f in all_filters() {
        let t_grid = match f.kind() {
            regflow_core::FlowKind::VanishingViscosity(_) => log_grid(1e-2, 1e4, 180),
            _ => log_grid(1e-2, 1e7, 220),
        };
        let mut worst_ratio: f64 = 0.0;
        for seed in 0..20u64 {
            let noisy = problems::add_noise(&prob.y, delta, 3000 + seed).unwrap();
            let stop = diagnostics::discrepancy_stop(
                &dec,
                &f,
                &noisy.y_tilde,
                delta,
                2.0,
                &t_grid,
                Some(&prob.x_dagger),
            )
            .unwrap();
            let curves =
                diagnostics::flow_trajectory(&dec, &f, &noisy.y_tilde, &t_grid, Some(&prob.x_dagger));
            let optimal = curves
                .error
                .unwrap()
                .values
                .iter()
                .cloned()
                .fold(f64::MAX, f64::min);
            let ratio = (stop.error_at_stop.unwrap() / optimal).sqrt();
            worst_ratio = worst_ratio.max(ratio);
            assert!(
                ratio <= 10.0,
                "{:?} seed {seed}: stopped/optimal error norm = {ratio}",
                f.kind()
            );
        }
        println!(
            "  {}: worst stopped/optimal error-norm ratio {:.2}",
            f.kind().name(),
            worst_ratio
        );
    }
    println!("PASS criterion 9: discrepancy stopping within 10x of grid-optimal error");
}

/// Companion check used by the rate criteria: the spectral tail of the
/// generated problems really decays like lambda^mu.
#[test]
fn benchmark_problem_tail_decay() {
    for &mu in &[0.5, 1.0, 2.0] {
        let prob = problems::diagonal_problem(1000, 1.0, mu, 5);
        let dec = prob.decompose().unwrap();
        let tail = dec.spectral_tail(&prob.x_dagger);
        let step = diagnostics::DiagnosticsCurve {
            grid: tail.eigenvalues().to_vec(),
            values: tail.cumulative().to_vec(),
            quantity: diagnostics::Quantity::SpectralTail,
            fit: None,
        };
        // fit over the interior decades of the spectrum, resampled log-uniformly
        let lo = tail.eigenvalues()[0] * 100.0;
        let hi = tail.eigenvalues().last().unwrap() / 100.0;
        let curve = diagnostics::resample_log(&step, lo, hi, 80);
        let fit = diagnostics::fit_rate(&curve, Some((0, 79))).unwrap();
        assert!(
            (fit.slope - mu).abs() <= 0.1,
            "mu={mu}: tail slope {}",
            fit.slope
        );
    }
}

/// Companion check: oracle on the branch-point heavy-ball matrix and a long
/// viscosity run, per the spectral-equivalence examples.
#[test]
fn oracle_edge_cases() {
    // eigenvalue at 0.999 b^2/4
    let b: f64 = 3.0;
    let sigma = (0.999 * 0.25 * b * b).sqrt();
    let m = Matrix::diagonal(&[sigma, 0.7, 0.2]);
    let f = FlowFilter::heavy_ball(b).unwrap();
    let report = oracle::oracle_compare(&m, &f, &[1.0, -0.3, 0.8], &[1.0, 10.0]).unwrap();
    assert!(report.pass, "branch point deviation {}", report.max_deviation);

    // viscosity b = 3 out to t = 50
    let mut m = seeded_matrix(6, 6, 9);
    m.scale(0.2);
    let f = FlowFilter::vanishing_viscosity(3.0).unwrap();
    let y = vec![0.4, -0.2, 0.9, 0.1, -0.6, 0.3];
    let report = oracle::oracle_compare(&m, &f, &y, &[1.0, 10.0, 50.0]).unwrap();
    assert!(report.pass, "long-run deviation {}", report.max_deviation);
}

/// Companion check: decompositions used in the benchmarks satisfy the
/// reconstruction contract.
#[test]
fn benchmark_decomposition_reconstruction() {
    let m = seeded_matrix(8, 8, 77);
    let dec = SpectralDecomposition::decompose(&m).unwrap();
    let rec = dec.reconstruct();
    let mut err: f64 = 0.0;
    for (a, b) in rec.data().iter().zip(m.data()) {
        err = err.max((a - b).abs());
    }
    assert!(err / m.frobenius_norm() <= 1e-8);
}
