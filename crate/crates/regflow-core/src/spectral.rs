//! Finite-dimensional spectral decomposition and spectral calculus.
//!
//! Everything downstream works through the SVD `L = sum_k sigma_k u_k v_k^T`:
//! filters are applied as `g(L^*L) L^* y = sum_k g(sigma_k^2) sigma_k <u_k, y> v_k`,
//! and the spectral tail `e(lambda)` of a solution becomes a finite step
//! function over the eigenvalues `lambda_k = sigma_k^2`.

use crate::linalg::{dot, norm, norm_sq, KahanSum, Matrix};
use crate::{Error, Result};

/// Relative cutoff under which singular values are treated as numerical null
/// space and discarded.
pub const RANK_REL_THRESHOLD: f64 = 1e-12;

/// Eigenvalues closer than this (relatively) are merged into one bucket of
/// the spectral tail.
pub const EIGENVALUE_MERGE_REL: f64 = 1e-12;

/// Orthonormal columns, stored contiguously column by column.
#[derive(Clone, Debug)]
pub struct OrthoCols {
    dim: usize,
    data: Vec<f64>,
}

impl OrthoCols {
    fn with_capacity(dim: usize, cols: usize) -> Self {
        OrthoCols {
            dim,
            data: Vec::with_capacity(dim * cols),
        }
    }

    fn push(&mut self, col: &[f64]) {
        debug_assert_eq!(col.len(), self.dim);
        self.data.extend_from_slice(col);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn col(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// Truncated SVD of a dense operator.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    singular_values: Vec<f64>,
    left: OrthoCols,
    right: OrthoCols,
}

impl SpectralDecomposition {
    /// Full SVD of a dense matrix by one-sided Jacobi rotations, with
    /// singular values below `RANK_REL_THRESHOLD * sigma_1` discarded.
    pub fn decompose(matrix: &Matrix) -> Result<Self> {
        Self::decompose_with_threshold(matrix, RANK_REL_THRESHOLD)
    }

    pub fn decompose_with_threshold(matrix: &Matrix, rel_threshold: f64) -> Result<Self> {
        assert!(matrix.is_finite(), "matrix entries must be finite");
        let transposed = matrix.rows() < matrix.cols();
        let work = if transposed {
            matrix.transpose()
        } else {
            matrix.clone()
        };
        let (m, n) = (work.rows(), work.cols());

        // Column set of the working matrix; rotations orthogonalise them.
        let mut u: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..m).map(|i| work.get(i, j)).collect())
            .collect();
        let mut v: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                e
            })
            .collect();

        one_sided_jacobi(&mut u, &mut v)?;

        let mut order: Vec<usize> = (0..n).collect();
        let norms: Vec<f64> = u.iter().map(|c| norm(c)).collect();
        order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap());

        let sigma_max = norms[order[0]];
        if sigma_max == 0.0 {
            return Err(Error::ZeroOperator);
        }

        let mut singular_values = Vec::new();
        let mut left = OrthoCols::with_capacity(m, n);
        let mut right = OrthoCols::with_capacity(n, n);
        for &j in &order {
            let s = norms[j];
            if s <= rel_threshold * sigma_max {
                break;
            }
            singular_values.push(s);
            let unit: Vec<f64> = u[j].iter().map(|x| x / s).collect();
            left.push(&unit);
            right.push(&v[j]);
        }

        let dec = SpectralDecomposition {
            singular_values,
            left,
            right,
        };
        Ok(if transposed { dec.swapped() } else { dec })
    }

    /// Decomposition of a diagonal operator with the given singular values
    /// (descending, positive); singular vectors are the standard basis.
    pub fn from_diagonal(sigmas: &[f64]) -> Result<Self> {
        if sigmas.is_empty() || sigmas.iter().all(|&s| s == 0.0) {
            return Err(Error::ZeroOperator);
        }
        assert!(
            sigmas.windows(2).all(|w| w[0] >= w[1]) && *sigmas.last().unwrap() > 0.0,
            "diagonal singular values must be positive and descending"
        );
        let n = sigmas.len();
        let mut eye = OrthoCols::with_capacity(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            eye.push(&e);
        }
        Ok(SpectralDecomposition {
            singular_values: sigmas.to_vec(),
            left: eye.clone(),
            right: eye,
        })
    }

    fn swapped(self) -> Self {
        SpectralDecomposition {
            singular_values: self.singular_values,
            left: self.right,
            right: self.left,
        }
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Eigenvalue `lambda_k = sigma_k^2` of `L^*L`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.singular_values[k] * self.singular_values[k]
    }

    pub fn operator_norm(&self) -> f64 {
        self.singular_values[0]
    }

    /// Dimension of the data space (rows of `L`).
    pub fn data_dim(&self) -> usize {
        self.left.dim()
    }

    /// Dimension of the solution space (columns of `L`).
    pub fn solution_dim(&self) -> usize {
        self.right.dim()
    }

    pub fn left_vector(&self, k: usize) -> &[f64] {
        self.left.col(k)
    }

    pub fn right_vector(&self, k: usize) -> &[f64] {
        self.right.col(k)
    }

    /// `sum_k sigma_k u_k v_k^T`, for reconstruction checks.
    pub fn reconstruct(&self) -> Matrix {
        let mut m = Matrix::zeros(self.data_dim(), self.solution_dim());
        for k in 0..self.rank() {
            let s = self.singular_values[k];
            let u = self.left.col(k);
            let v = self.right.col(k);
            for i in 0..u.len() {
                for j in 0..v.len() {
                    m.set(i, j, m.get(i, j) + s * u[i] * v[j]);
                }
            }
        }
        m
    }

    /// Coefficients `<u_k, y>` of a data-space vector.
    pub fn left_coefficients(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.data_dim());
        (0..self.rank()).map(|k| dot(self.left.col(k), y)).collect()
    }

    /// Coefficients `<v_k, x>` of a solution-space vector.
    pub fn right_coefficients(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.solution_dim());
        (0..self.rank())
            .map(|k| dot(self.right.col(k), x))
            .collect()
    }

    /// Assemble `sum_k coeff_k v_k` in the solution space.
    pub fn from_right_coefficients(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.rank());
        let mut out = vec![0.0; self.solution_dim()];
        for (k, &c) in coeffs.iter().enumerate() {
            let v = self.right.col(k);
            for (o, &vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        out
    }

    /// `g(L^*L) L^* rhs = sum_k g(sigma_k^2) sigma_k <u_k, rhs> v_k`.
    pub fn apply_spectral_function(
        &self,
        g: impl Fn(f64) -> f64,
        rhs: &[f64],
    ) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.data_dim(), "rhs length must match rows");
        let mut coeffs = Vec::with_capacity(self.rank());
        for k in 0..self.rank() {
            let lambda = self.eigenvalue(k);
            let gk = g(lambda);
            if gk.is_nan() {
                return Err(Error::SpectralNan { lambda });
            }
            coeffs.push(gk * self.singular_values[k] * dot(self.left.col(k), rhs));
        }
        Ok(self.from_right_coefficients(&coeffs))
    }

    /// Minimum-norm solution `x^+ = sum_k sigma_k^{-1} <u_k, y> v_k`, together
    /// with the norm of the component of `y` outside the numerical range of
    /// `L` (nonzero means the data is not attainable).
    pub fn min_norm_solution(&self, y: &[f64]) -> MinNormSolution {
        let coeffs = self.left_coefficients(y);
        let solution_coeffs: Vec<f64> = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c / self.singular_values[k])
            .collect();
        let solution = self.from_right_coefficients(&solution_coeffs);
        let range_part_sq = norm_sq(&coeffs);
        let unattainable = (norm_sq(y) - range_part_sq).max(0.0).sqrt();
        MinNormSolution {
            solution,
            unattainable,
        }
    }

    /// Spectral tail `e(lambda) = sum_{sigma_j^2 <= lambda} <v_j, x>^2` of a
    /// solution-space vector, as a step function over the distinct eigenvalues.
    pub fn spectral_tail(&self, x_dagger: &[f64]) -> SpectralTail {
        let coeffs = self.right_coefficients(x_dagger);
        // Ascending eigenvalues; merge values equal within 1e-12 relative.
        let mut pairs: Vec<(f64, f64)> = (0..self.rank())
            .rev()
            .map(|k| (self.eigenvalue(k), coeffs[k] * coeffs[k]))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut eigenvalues = Vec::new();
        let mut increments = Vec::new();
        for (lambda, w) in pairs {
            match eigenvalues.last() {
                Some(&last) if lambda - last <= EIGENVALUE_MERGE_REL * lambda => {
                    *increments.last_mut().unwrap() += w;
                }
                _ => {
                    eigenvalues.push(lambda);
                    increments.push(w);
                }
            }
        }
        let mut cumulative = Vec::with_capacity(increments.len());
        let mut acc = KahanSum::new();
        for &w in &increments {
            acc.add(w);
            cumulative.push(acc.value());
        }
        SpectralTail {
            eigenvalues,
            increments,
            cumulative,
            total: norm_sq(x_dagger),
        }
    }
}

/// Result of [`SpectralDecomposition::min_norm_solution`].
#[derive(Clone, Debug)]
pub struct MinNormSolution {
    pub solution: Vec<f64>,
    /// Norm of the data component outside the numerical range of `L`.
    pub unattainable: f64,
}

/// Step function `e(lambda)`: squared norm of the spectral projection of a
/// vector onto eigenvalues `<= lambda`. Right-continuous and nondecreasing
/// by construction.
#[derive(Clone, Debug)]
pub struct SpectralTail {
    eigenvalues: Vec<f64>,
    increments: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl SpectralTail {
    /// Distinct eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Jump of `e` at each eigenvalue.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `e` evaluated at each eigenvalue.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Squared norm of the full vector (including any null-space component).
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `e(lambda)`.
    pub fn eval(&self, lambda: f64) -> f64 {
        match self
            .eigenvalues
            .partition_point(|&ev| ev <= lambda)
            .checked_sub(1)
        {
            Some(idx) => self.cumulative[idx],
            None => 0.0,
        }
    }

    /// Generalised inverse of `hat e(lambda) = sqrt(lambda e(lambda))`: the
    /// smallest eigenvalue `lambda` with `lambda * e(lambda) >= delta^2`.
    pub fn hat_inverse(&self, delta: f64) -> Option<f64> {
        let d2 = delta * delta;
        self.eigenvalues
            .iter()
            .zip(&self.cumulative)
            .find(|(&ev, &e)| ev * e >= d2)
            .map(|(&ev, _)| ev)
    }

    /// Noise-free to noisy transform of the step function:
    /// `delta^2 / hat e^{-1}(delta)`.
    pub fn phi_transform(&self, delta: f64) -> Option<f64> {
        self.hat_inverse(delta).map(|a| delta * delta / a)
    }
}

/// One-sided Jacobi orthogonalisation of the columns of `u`, accumulating the
/// rotations into `v`.
fn one_sided_jacobi(u: &mut [Vec<f64>], v: &mut [Vec<f64>]) -> Result<()> {
    let n = u.len();
    let eps = f64::EPSILON;
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in (i + 1)..n {
                let a = norm_sq(&u[i]);
                let b = norm_sq(&u[j]);
                let d = dot(&u[i], &u[j]);
                if d * d <= 16.0 * eps * eps * a * b || d == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * d);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(u, i, j, c, s);
                rotate_pair(v, i, j, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::SvdNoConvergence)
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (ci, cj) = if i < j {
        let (a, b) = cols.split_at_mut(j);
        (&mut a[i], &mut b[0])
    } else {
        unreachable!()
    };
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}
