//! Synthetic test problems with prescribed spectral decay and
//! source-condition order, plus exact-norm noise injection.
//!
//! The diagonal family puts `sigma_k = k^{-p}` and builds the solution as
//! `x = (L^*L)^{mu/2} w` from a random vector with components
//! `w_k ~ g_k k^{-1/2-eps}`, so the spectral tail decays like `lambda^mu`
//! from both sides. The integral family discretises the Green's kernel of
//! the second derivative on the unit interval, a classical nondiagonal
//! ill-posed operator with `sigma_k ~ k^{-2}`.

use crate::linalg::{norm, Matrix};
use crate::spectral::SpectralDecomposition;
use crate::{Error, Result};
use std::path::Path;

/// Decay exponent offset for the source vector; keeps the tail sum barely
/// convergent so that the spectral tail is two-sided `~ lambda^mu`.
const SOURCE_EPS: f64 = 0.05;

/// SplitMix64 with a Box-Muller normal generator. Hand-rolled so that
/// seeded problems are bitwise identical on every platform, including
/// wasm32.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in (0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 + f64::EPSILON / 4.0
    }

    /// Standard normal via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Operator of a test problem: either a dense matrix or just the singular
/// values of a diagonal operator.
#[derive(Clone, Debug)]
pub enum Operator {
    Dense(Matrix),
    Diagonal(Vec<f64>),
}

impl Operator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Operator::Dense(m) => m.matvec(x),
            Operator::Diagonal(s) => s.iter().zip(x).map(|(si, xi)| si * xi).collect(),
        }
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Operator::Dense(m) => m.matvec_transpose(y),
            Operator::Diagonal(s) => s.iter().zip(y).map(|(si, yi)| si * yi).collect(),
        }
    }

    pub fn data_dim(&self) -> usize {
        match self {
            Operator::Dense(m) => m.rows(),
            Operator::Diagonal(s) => s.len(),
        }
    }

    pub fn solution_dim(&self) -> usize {
        match self {
            Operator::Dense(m) => m.cols(),
            Operator::Diagonal(s) => s.len(),
        }
    }

    /// Dense form (materialises diagonal operators).
    pub fn to_matrix(&self) -> Matrix {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Diagonal(s) => Matrix::diagonal(s),
        }
    }

    pub fn decompose(&self) -> Result<SpectralDecomposition> {
        match self {
            Operator::Dense(m) => SpectralDecomposition::decompose(m),
            Operator::Diagonal(s) => SpectralDecomposition::from_diagonal(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemMeta {
    pub n: usize,
    pub p: f64,
    pub mu: f64,
    pub family: String,
    pub seed: u64,
}

/// A test problem: operator, exact minimum-norm solution, exact data.
#[derive(Clone, Debug)]
pub struct Problem {
    pub operator: Operator,
    pub x_dagger: Vec<f64>,
    pub y: Vec<f64>,
    pub meta: ProblemMeta,
}

impl Problem {
    pub fn decompose(&self) -> Result<SpectralDecomposition> {
        self.operator.decompose()
    }

    /// Serialise to a directory: `operator.csv` (dense) or `sigma.csv`
    /// (diagonal), `xdag.csv`, `y.csv`, `meta.toml`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        match &self.operator {
            Operator::Dense(m) => {
                let mut out = String::new();
                let header: Vec<String> = (0..m.cols()).map(|j| format!("c{j}")).collect();
                out.push_str(&header.join(","));
                out.push('\n');
                for i in 0..m.rows() {
                    let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
                std::fs::write(dir.join("operator.csv"), out)?;
            }
            Operator::Diagonal(s) => {
                write_column(&dir.join("sigma.csv"), "sigma", s)?;
            }
        }
        write_column(&dir.join("xdag.csv"), "xdag", &self.x_dagger)?;
        write_column(&dir.join("y.csv"), "y", &self.y)?;
        let meta = format!(
            "n = {}\np = {:e}\nmu = {:e}\nfamily = \"{}\"\nseed = {}\n",
            self.meta.n, self.meta.p, self.meta.mu, self.meta.family, self.meta.seed
        );
        std::fs::write(dir.join("meta.toml"), meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Problem> {
        let meta_text = std::fs::read_to_string(dir.join("meta.toml"))?;
        let meta = parse_meta(&meta_text)?;
        let x_dagger = read_column(&dir.join("xdag.csv"))?;
        let y = read_column(&dir.join("y.csv"))?;
        let operator = if dir.join("sigma.csv").exists() {
            Operator::Diagonal(read_column(&dir.join("sigma.csv"))?)
        } else {
            Operator::Dense(read_matrix_csv(&dir.join("operator.csv"))?)
        };
        Ok(Problem {
            operator,
            x_dagger,
            y,
            meta,
        })
    }
}

/// Dense row-major matrix from CSV; a leading header row is optional (any
/// first line that does not parse as numbers is skipped).
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) if i == 0 => {
                // header row
                let _ = e;
            }
            Err(e) => {
                return Err(Error::Parse(format!("{} line {}: {e}", path.display(), i + 1)))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(Matrix::from_rows(&rows))
}

fn write_column(path: &Path, name: &str, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 24 + name.len() + 1);
    out.push_str(name);
    out.push('\n');
    for v in values {
        out.push_str(&format!("{v:e}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.trim().parse::<f64>() {
            Ok(v) => values.push(v),
            // a non-numeric first line is the optional header
            Err(_) if i == 0 => {}
            Err(e) => return Err(Error::Parse(format!("{}: {e}", path.display()))),
        }
    }
    Ok(values)
}

fn parse_meta(text: &str) -> Result<ProblemMeta> {
    let mut n = None;
    let mut p = None;
    let mut mu = None;
    let mut family = None;
    let mut seed = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "n" => n = value.parse::<usize>().ok(),
            "p" => p = value.parse::<f64>().ok(),
            "mu" => mu = value.parse::<f64>().ok(),
            "family" => family = Some(value.trim_matches('"').to_string()),
            "seed" => seed = value.parse::<u64>().ok(),
            _ => {}
        }
    }
    match (n, p, mu, family, seed) {
        (Some(n), Some(p), Some(mu), Some(family), Some(seed)) => Ok(ProblemMeta {
            n,
            p,
            mu,
            family,
            seed,
        }),
        _ => Err(Error::Parse("incomplete meta.toml".into())),
    }
}

/// Noisy data with exact noise norm `||y_tilde - y|| = delta`.
#[derive(Clone, Debug)]
pub struct NoisyData {
    pub y_tilde: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

/// Diagonal problem: `sigma_k = k^{-p}`, solution
/// `x = sum_k lambda_k^{mu/2} w_k v_k` from a normalised random source
/// vector with profile `k^{-1/2-eps}`.
pub fn diagonal_problem(n: usize, p: f64, mu: f64, seed: u64) -> Problem {
    assert!(n >= 1 && p > 0.0 && mu >= 0.0);
    let sigmas: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-p)).collect();
    let mut rng = SplitMix64::new(seed);
    let mut w: Vec<f64> = (1..=n)
        .map(|k| rng.next_normal() * (k as f64).powf(-0.5 - SOURCE_EPS))
        .collect();
    let w_norm = norm(&w);
    for wi in &mut w {
        *wi /= w_norm;
    }
    let x_dagger: Vec<f64> = sigmas
        .iter()
        .zip(&w)
        .map(|(s, wi)| (s * s).powf(0.5 * mu) * wi)
        .collect();
    let y: Vec<f64> = sigmas.iter().zip(&x_dagger).map(|(s, x)| s * x).collect();
    Problem {
        operator: Operator::Diagonal(sigmas),
        x_dagger,
        y,
        meta: ProblemMeta {
            n,
            p,
            mu,
            family: "diag".into(),
            seed,
        },
    }
}

/// Midpoint discretisation of the Green's kernel of the second derivative,
/// `k(s, t) = s(1-t)` for `s <= t` on the unit square, with the smooth
/// solution `x(s) = s(1-s)`. Singular values decay like `k^{-2}`.
pub fn integral_problem(n: usize, family: &str, seed: u64) -> Result<Problem> {
    if family != "greens" {
        return Err(Error::UnknownFamily(family.to_string()));
    }
    assert!(n >= 2);
    let h = 1.0 / n as f64;
    let node = |i: usize| (i as f64 + 0.5) * h;
    let matrix = Matrix::from_fn(n, n, |i, j| {
        let (s, t) = (node(i), node(j));
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        lo * (1.0 - hi) * h
    });
    let x_dagger: Vec<f64> = (0..n).map(|i| node(i) * (1.0 - node(i))).collect();
    let y = matrix.matvec(&x_dagger);
    Ok(Problem {
        operator: Operator::Dense(matrix),
        x_dagger,
        y,
        meta: ProblemMeta {
            n,
            p: 2.0,
            mu: f64::NAN,
            family: family.to_string(),
            seed,
        },
    })
}

/// `y_tilde = y + delta g/||g||` with a seeded standard-normal `g`, so the
/// noise norm is exactly `delta`.
pub fn add_noise(y: &[f64], delta: f64, seed: u64) -> Result<NoisyData> {
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::Domain(format!("noise level must be >= 0, got {delta}")));
    }
    if y.is_empty() && delta > 0.0 {
        return Err(Error::Domain("cannot perturb zero-dimensional data".into()));
    }
    if delta == 0.0 {
        return Ok(NoisyData {
            y_tilde: y.to_vec(),
            delta,
            seed,
        });
    }
    let mut rng = SplitMix64::new(seed);
    let g: Vec<f64> = (0..y.len()).map(|_| rng.next_normal()).collect();
    let g_norm = norm(&g);
    let y_tilde: Vec<f64> = y
        .iter()
        .zip(&g)
        .map(|(yi, gi)| yi + delta * gi / g_norm)
        .collect();
    Ok(NoisyData {
        y_tilde,
        delta,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sub;

    #[test]
    fn rng_is_deterministic() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = SplitMix64::new(43);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn normals_have_plausible_moments() {
        let mut rng = SplitMix64::new(7);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = rng.next_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn diagonal_problem_consistency() {
        let p = diagonal_problem(50, 1.0, 1.0, 3);
        let y2 = p.operator.apply(&p.x_dagger);
        let diff = norm(&sub(&y2, &p.y));
        assert!(diff <= 1e-12 * norm(&p.y).max(1.0));
        // mu = 0: solution is the normalised source vector itself
        let p0 = diagonal_problem(50, 1.0, 0.0, 3);
        assert!((norm(&p0.x_dagger) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_problem_same_seed_identical() {
        let a = diagonal_problem(40, 1.5, 0.7, 99);
        let b = diagonal_problem(40, 1.5, 0.7, 99);
        assert_eq!(a.x_dagger, b.x_dagger);
        assert_eq!(a.y, b.y);
        let c = diagonal_problem(40, 1.5, 0.7, 100);
        assert_ne!(a.x_dagger, c.x_dagger);
    }

    #[test]
    fn diagonal_tail_ratio_is_two_sided() {
        // e(lambda_k)/lambda_k^mu stays within a 100x band over the interior
        let (n, p, mu) = (1000, 1.0, 1.0);
        let prob = diagonal_problem(n, p, mu, 11);
        let dec = prob.decompose().unwrap();
        let tail = dec.spectral_tail(&prob.x_dagger);
        let mut ratios = Vec::new();
        for (ev, e) in tail.eigenvalues().iter().zip(tail.cumulative()) {
            // interior: skip the extreme ends of the spectrum
            if *ev > tail.eigenvalues()[20] && *ev < tail.eigenvalues()[n - 20] {
                ratios.push(e / ev.powf(mu));
            }
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min <= 100.0, "ratio spread {} too wide", max / min);
    }

    #[test]
    fn integral_problem_symmetry_and_smoothness() {
        let p = integral_problem(64, "greens", 0).unwrap();
        let m = match &p.operator {
            Operator::Dense(m) => m,
            _ => unreachable!(),
        };
        for i in 0..64 {
            for j in 0..64 {
                assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-14);
            }
        }
        assert!(integral_problem(32, "nope", 0).is_err());
        // smoothing: the second difference of y shrinks like 1/n^2
        let mut prev_ratio = f64::INFINITY;
        for &n in &[64usize, 128, 256] {
            let p = integral_problem(n, "greens", 0).unwrap();
            let mut second_diff: f64 = 0.0;
            for i in 1..n - 1 {
                second_diff =
                    second_diff.max((p.y[i + 1] - 2.0 * p.y[i] + p.y[i - 1]).abs());
            }
            let scaled = second_diff * (n * n) as f64 / norm(&p.x_dagger);
            assert!(scaled < prev_ratio * 4.0, "n={n}: not smoothing");
            prev_ratio = scaled;
        }
    }

    #[test]
    fn integral_singular_value_decay() {
        let p = integral_problem(64, "greens", 0).unwrap();
        let dec = p.decompose().unwrap();
        // log-log slope of sigma_k vs k over the leading half
        let m = dec.rank() / 2;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..m {
            let x = ((k + 1) as f64).ln();
            let y = dec.singular_values()[k].ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let slope = (m as f64 * sxy - sx * sy) / (m as f64 * sxx - sx * sx);
        assert!((slope + 2.0).abs() < 0.3, "sigma decay slope {slope}");
    }

    #[test]
    fn noise_has_exact_norm() {
        let y = vec![1.0, -2.0, 3.0, 0.5];
        for &delta in &[1e-1, 1e-4] {
            let noisy = add_noise(&y, delta, 5).unwrap();
            let d = norm(&sub(&noisy.y_tilde, &y));
            assert!(((d - delta) / delta).abs() < 1e-12, "delta={delta}");
        }
        let clean = add_noise(&y, 0.0, 5).unwrap();
        assert_eq!(clean.y_tilde, y);
        let a = add_noise(&y, 0.1, 1).unwrap();
        let b = add_noise(&y, 0.1, 2).unwrap();
        assert_ne!(a.y_tilde, b.y_tilde);
        assert!(add_noise(&y, -0.5, 0).is_err());
    }

    #[test]
    fn matrix_csv_header_is_optional() {
        let dir = std::env::temp_dir().join(format!("regflow_csv_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let with = dir.join("with_header.csv");
        let without = dir.join("without_header.csv");
        std::fs::write(&with, "c0,c1\n1.0,2.0\n3.0,4.0\n").unwrap();
        std::fs::write(&without, "1.0,2.0\n3.0,4.0\n").unwrap();
        let a = read_matrix_csv(&with).unwrap();
        let b = read_matrix_csv(&without).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.get(1, 0), 3.0);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = std::env::temp_dir().join(format!("regflow_test_{}", std::process::id()));
        // diagonal
        let p = diagonal_problem(20, 1.0, 0.5, 9);
        p.save(&dir.join("diag")).unwrap();
        let q = Problem::load(&dir.join("diag")).unwrap();
        assert_eq!(p.meta, q.meta);
        for (a, b) in p.x_dagger.iter().zip(&q.x_dagger) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
        // dense
        let p = integral_problem(16, "greens", 0).unwrap();
        p.save(&dir.join("greens")).unwrap();
        let q = Problem::load(&dir.join("greens")).unwrap();
        let (ma, mb) = (p.operator.to_matrix(), q.operator.to_matrix());
        for (a, b) in ma.data().iter().zip(mb.data()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-10));
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
