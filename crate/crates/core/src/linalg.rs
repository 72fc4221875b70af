//! Dense linear algebra substrate: SVD factorisation and filter-based
//! Tikhonov solves.
//!
//! Every regularised quantity in this crate is expressed through the
//! singular system of the (possibly perturbed) operator. A matrix is
//! factorised once and every evaluation for a given `alpha` afterwards costs
//! `O(r)` on projected coefficients (see [`ProjectedData`]).

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative truncation threshold for singular values.
pub const DEFAULT_TRUNCATION: f64 = 1e-14;

const MAX_SVD_SWEEPS_PER_DIM: usize = 1000;

/// Truncated singular system `A ≈ U diag(σ) Vᵀ` with `σ_1 ≥ … ≥ σ_r > 0`.
///
/// The data-space component orthogonal to `range(U)` has dimension
/// `complement_dim = m - r`; it is not stored but [`SvdFactorization::project`]
/// measures its norm for every right-hand side.
#[derive(Debug, Clone)]
pub struct SvdFactorization {
    left: DenseMatrix,
    singular_values: Vector,
    right: DenseMatrix,
    rows: usize,
    cols: usize,
}

/// Right-hand side expressed in the singular basis: `c = Uᵀy` and the norm
/// of `y - U c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedData {
    pub coeffs: Vec<f64>,
    pub complement_norm: f64,
}

pub(crate) fn ensure_finite_matrix(a: &DenseMatrix, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_vector(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "regularisation parameter must be positive and finite, got {alpha}"
        )))
    }
}

/// Computes the singular system of `a`, discarding singular values
/// `≤ truncation_tol · σ_1`.
pub fn svd_decompose(a: &DenseMatrix, truncation_tol: f64) -> Result<SvdFactorization> {
    ensure_finite_matrix(a, "svd_decompose input")?;
    if !(truncation_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation tolerance must be nonnegative, got {truncation_tol}"
        )));
    }
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let max_iter = MAX_SVD_SWEEPS_PER_DIM * rows.min(cols).max(1);
    let svd = SVD::try_new(a.clone(), true, true, f64::EPSILON, max_iter)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numeric("SVD did not return singular vectors".into())),
    };
    let sigma = svd.singular_values;
    let leading = sigma.iter().copied().fold(0.0_f64, f64::max);
    let threshold = truncation_tol * leading;
    let keep: Vec<usize> = (0..sigma.len())
        .filter(|&i| sigma[i] > threshold && sigma[i] > 0.0)
        .collect();
    let rank = keep.len();

    let mut left = DenseMatrix::zeros(rows, rank);
    let mut right = DenseMatrix::zeros(cols, rank);
    let mut values = Vector::zeros(rank);
    for (k, &i) in keep.iter().enumerate() {
        left.set_column(k, &u.column(i));
        right.set_column(k, &vt.row(i).transpose());
        values[k] = sigma[i];
    }
    Ok(SvdFactorization {
        left,
        singular_values: values,
        right,
        rows,
        cols,
    })
}

/// Largest singular value of `a`; zero for the zero matrix.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    ensure_finite_matrix(a, "spectral_norm input")?;
    if a.is_empty() || a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let max_iter = MAX_SVD_SWEEPS_PER_DIM * a.nrows().min(a.ncols());
    let svd = SVD::try_new(a.clone(), false, false, f64::EPSILON, max_iter)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

impl SvdFactorization {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of retained singular values.
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn complement_dim(&self) -> usize {
        self.rows - self.rank()
    }

    pub fn singular_values(&self) -> &Vector {
        &self.singular_values
    }

    pub fn left_vectors(&self) -> &DenseMatrix {
        &self.left
    }

    pub fn right_vectors(&self) -> &DenseMatrix {
        &self.right
    }

    /// `σ_1`, or zero when every singular value was truncated.
    pub fn norm(&self) -> f64 {
        self.singular_values.get(0).copied().unwrap_or(0.0)
    }

    /// Smallest eigenvalue of `AᵀA`; zero when the retained rank is smaller
    /// than the number of columns.
    pub fn lambda_min(&self) -> f64 {
        if self.rank() < self.cols {
            0.0
        } else {
            let s = self.singular_values[self.rank() - 1];
            s * s
        }
    }

    /// Rebuilds `U diag(σ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut scaled = self.left.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.singular_values[k];
        }
        scaled * self.right.transpose()
    }

    /// Projects a data-space vector onto the left singular basis.
    pub fn project(&self, y: &Vector) -> Result<ProjectedData> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: y.len(),
            });
        }
        ensure_finite_vector(y, "data vector")?;
        let coeffs = self.left.tr_mul(y);
        let remainder = y - &self.left * &coeffs;
        Ok(ProjectedData {
            coeffs: coeffs.iter().copied().collect(),
            complement_norm: remainder.norm(),
        })
    }

    /// Projects a solution-space vector onto the right singular basis,
    /// returning `Vᵀx` and the norm of `x - V Vᵀx`.
    pub fn project_solution(&self, x: &Vector) -> Result<ProjectedData> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        ensure_finite_vector(x, "solution vector")?;
        let coeffs = self.right.tr_mul(x);
        let remainder = x - &self.right * &coeffs;
        Ok(ProjectedData {
            coeffs: coeffs.iter().copied().collect(),
            complement_norm: remainder.norm(),
        })
    }

    /// Tikhonov filter coefficients `σ_i c_i / (σ_i² + α)` in the right basis.
    pub fn solution_coeffs(&self, data: &ProjectedData, alpha: f64) -> Vec<f64> {
        self.singular_values
            .iter()
            .zip(&data.coeffs)
            .map(|(&s, &c)| s * c / (s * s + alpha))
            .collect()
    }

    /// `‖x_α‖` without forming `x_α`.
    pub fn solution_norm(&self, data: &ProjectedData, alpha: f64) -> f64 {
        self.singular_values
            .iter()
            .zip(&data.coeffs)
            .map(|(&s, &c)| {
                let f = s * c / (s * s + alpha);
                f * f
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `‖A x_α - y‖` without forming `x_α`.
    pub fn residual_norm(&self, data: &ProjectedData, alpha: f64) -> f64 {
        let inner: f64 = self
            .singular_values
            .iter()
            .zip(&data.coeffs)
            .map(|(&s, &c)| {
                let f = alpha * c / (s * s + alpha);
                f * f
            })
            .sum();
        (inner + data.complement_norm * data.complement_norm).sqrt()
    }

    /// `‖x_α - x‖` where `target` is `x` projected by [`Self::project_solution`].
    pub fn solution_error(&self, data: &ProjectedData, target: &ProjectedData, alpha: f64) -> f64 {
        let inner: f64 = self
            .singular_values
            .iter()
            .zip(data.coeffs.iter().zip(&target.coeffs))
            .map(|(&s, (&c, &d))| {
                let diff = s * c / (s * s + alpha) - d;
                diff * diff
            })
            .sum();
        (inner + target.complement_norm * target.complement_norm).sqrt()
    }

    /// Assembles `V coeffs`.
    pub fn expand_solution(&self, coeffs: &[f64]) -> Vector {
        &self.right * Vector::from_column_slice(coeffs)
    }
}

/// `x_α = V diag(σ/(σ²+α)) Uᵀ y`.
pub fn tikhonov_solve(svd: &SvdFactorization, y: &Vector, alpha: f64) -> Result<Vector> {
    check_alpha(alpha)?;
    let data = svd.project(y)?;
    Ok(svd.expand_solution(&svd.solution_coeffs(&data, alpha)))
}

/// Solves `(AᵀA + αI) x = Aᵀy` by Cholesky factorisation of the assembled
/// normal matrix. Only meant as a cross-check of [`tikhonov_solve`].
pub fn tikhonov_solve_dense(a: &DenseMatrix, y: &Vector, alpha: f64) -> Result<Vector> {
    check_alpha(alpha)?;
    if y.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: y.len(),
        });
    }
    ensure_finite_matrix(a, "tikhonov_solve_dense operator")?;
    ensure_finite_vector(y, "tikhonov_solve_dense data")?;
    let mut normal = a.tr_mul(a);
    for i in 0..normal.nrows() {
        normal[(i, i)] += alpha;
    }
    let rhs = a.tr_mul(y);
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, gaussian_vector};

    fn rel_diff(a: &Vector, b: &Vector) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    /// Power iteration on AᵀA.
    fn power_iteration_norm(a: &DenseMatrix) -> f64 {
        let mut v = Vector::from_element(a.ncols(), 1.0);
        v /= v.norm();
        let mut estimate = 0.0;
        for _ in 0..5000 {
            let w = a.tr_mul(&(a * &v));
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            v = w / norm;
            if (norm - estimate).abs() <= 1e-15 * norm {
                estimate = norm;
                break;
            }
            estimate = norm;
        }
        estimate.sqrt()
    }

    #[test]
    fn identity_decomposes_to_unit_values() {
        let svd = svd_decompose(&DenseMatrix::identity(3, 3), 0.0).unwrap();
        assert_eq!(svd.rank(), 3);
        assert_eq!(svd.complement_dim(), 0);
        for s in svd.singular_values().iter() {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_deficient_diagonal_counts_complement() {
        let a = DenseMatrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let svd = svd_decompose(&a, 1e-12).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!((svd.singular_values()[0] - 2.0).abs() < 1e-15);
        assert_eq!(svd.complement_dim(), 1);
    }

    #[test]
    fn reconstruction_is_accurate() {
        for seed in 0..5 {
            let a = gaussian_matrix(20, 20, seed);
            let svd = svd_decompose(&a, DEFAULT_TRUNCATION).unwrap();
            let err = spectral_norm(&(svd.reconstruct() - &a)).unwrap();
            assert!(err <= 1e-10 * svd.norm(), "seed {seed}: {err}");
            let s = svd.singular_values();
            assert!(s.iter().zip(s.iter().skip(1)).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn rectangular_complement_dimension() {
        let a = gaussian_matrix(12, 7, 3);
        let svd = svd_decompose(&a, DEFAULT_TRUNCATION).unwrap();
        assert_eq!(svd.rank(), 7);
        assert_eq!(svd.complement_dim(), 5);
        let err = spectral_norm(&(svd.reconstruct() - &a)).unwrap();
        assert!(err <= 1e-10 * svd.norm());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut a = DenseMatrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(svd_decompose(&a, 0.0), Err(Error::NonFinite(_))));
        assert!(svd_decompose(&DenseMatrix::identity(2, 2), -1.0).is_err());
    }

    #[test]
    fn spectral_norm_small_cases() {
        let a = DenseMatrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0]));
        assert!((spectral_norm(&a).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(4, 3)).unwrap(), 0.0);
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let a = gaussian_matrix(10, 10, 11);
        let exact = spectral_norm(&a).unwrap();
        let oracle = power_iteration_norm(&a);
        assert!((exact - oracle).abs() <= 1e-8 * oracle, "{exact} vs {oracle}");
    }

    #[test]
    fn tikhonov_identity_and_diagonal() {
        let svd = svd_decompose(&DenseMatrix::identity(2, 2), 0.0).unwrap();
        let x = tikhonov_solve(&svd, &Vector::from_vec(vec![1.0, 1.0]), 1.0).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);

        let a = DenseMatrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.1]));
        let y = Vector::from_vec(vec![1.0, 1.0]);
        let svd = svd_decompose(&a, 0.0).unwrap();
        let x = tikhonov_solve(&svd, &y, 0.01).unwrap();
        assert!((x[0] - 1.0 / 1.01).abs() < 1e-14);
        assert!((x[1] - 5.0).abs() < 1e-13);
        let xd = tikhonov_solve_dense(&a, &y, 0.01).unwrap();
        assert!((xd[0] - 1.0 / 1.01).abs() < 1e-14);
        assert!((xd[1] - 5.0).abs() < 1e-12);

        let xd = tikhonov_solve_dense(&DenseMatrix::identity(2, 2), &Vector::from_vec(vec![2.0, 0.0]), 1.0)
            .unwrap();
        assert!((xd[0] - 1.0).abs() < 1e-15 && xd[1].abs() < 1e-15);
    }

    #[test]
    fn tikhonov_rejects_bad_arguments() {
        let a = DenseMatrix::identity(2, 2);
        let svd = svd_decompose(&a, 0.0).unwrap();
        let y = Vector::from_vec(vec![1.0, 1.0]);
        assert!(tikhonov_solve(&svd, &y, 0.0).is_err());
        assert!(tikhonov_solve(&svd, &y, -1.0).is_err());
        assert!(tikhonov_solve_dense(&a, &y, 0.0).is_err());
        let short = Vector::from_vec(vec![1.0]);
        assert!(matches!(
            tikhonov_solve(&svd, &short, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(tikhonov_solve_dense(&a, &short, 1.0).is_err());
    }

    #[test]
    fn svd_path_matches_dense_path() {
        let a = gaussian_matrix(15, 15, 5);
        let y = gaussian_vector(15, 6);
        let svd = svd_decompose(&a, DEFAULT_TRUNCATION).unwrap();
        let x = tikhonov_solve(&svd, &y, 1e-3).unwrap();
        let xd = tikhonov_solve_dense(&a, &y, 1e-3).unwrap();
        assert!(rel_diff(&x, &xd) <= 1e-8);
    }

    #[test]
    fn complement_component_does_not_enter_solution() {
        let a = DenseMatrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0, 1.0]));
        let svd = svd_decompose(&a, 1e-12).unwrap();
        let base = Vector::from_vec(vec![1.0, 0.0, 3.0]);
        let mut with_complement = base.clone();
        with_complement[1] = 7.0;
        let x0 = tikhonov_solve(&svd, &base, 0.1).unwrap();
        let x1 = tikhonov_solve(&svd, &with_complement, 0.1).unwrap();
        assert!((x0 - x1).norm() < 1e-15);
        let data = svd.project(&with_complement).unwrap();
        assert!((data.complement_norm - 7.0).abs() < 1e-14);
    }

    #[test]
    fn small_alpha_limit_matches_direct_solve() {
        // Well-conditioned: identity plus a small random part.
        let a = DenseMatrix::identity(10, 10) + gaussian_matrix(10, 10, 21) * 0.05;
        let y = gaussian_vector(10, 22);
        let svd = svd_decompose(&a, DEFAULT_TRUNCATION).unwrap();
        let cond = svd.norm() / svd.singular_values()[svd.rank() - 1];
        assert!(cond <= 1e3);
        let x = tikhonov_solve(&svd, &y, 1e-12).unwrap();
        let direct = a.clone().lu().solve(&y).unwrap();
        assert!(rel_diff(&x, &direct) <= 1e-6);
    }

    #[test]
    fn residual_and_norm_are_monotone_in_alpha() {
        let a = gaussian_matrix(25, 20, 9);
        let y = gaussian_vector(25, 10);
        let svd = svd_decompose(&a, DEFAULT_TRUNCATION).unwrap();
        let data = svd.project(&y).unwrap();
        let alphas: Vec<f64> = (0..60).map(|k| 10f64.powf(-8.0 + k as f64 * 8.0 / 59.0)).collect();
        let residuals: Vec<f64> = alphas.iter().map(|&al| svd.residual_norm(&data, al)).collect();
        let norms: Vec<f64> = alphas.iter().map(|&al| svd.solution_norm(&data, al)).collect();
        assert!(residuals.windows(2).all(|w| w[1] >= w[0]));
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        // Spot check the closed-form residual against an explicit product.
        let x = tikhonov_solve(&svd, &y, alphas[30]).unwrap();
        let explicit = (&a * x - &y).norm();
        assert!((explicit - residuals[30]).abs() <= 1e-10 * explicit);
    }
}
