//! Dense linear-algebra helpers shared by synthesis and metrics.
//!
//! Everything here is small and dense (n ≤ ~50); classical methods with
//! explicit tolerances beat sparse or blocked machinery at this scale.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for rank decisions in the Hautus tests.
pub const RANK_TOL: f64 = 1e-9;

/// Return the eigenvalues of a symmetric matrix, sorted ascending.
///
/// The input is symmetrized first; callers that need to reject asymmetric
/// input should run [`check_symmetric`] beforehand.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut vals: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    DVector::from_vec(vals)
}

/// Error unless `m` is symmetric within `1e-9 * (1 + max|entry|)`.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = 1.0 + m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let asym = (m - m.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > 1e-9 * scale {
        return Err(Error::NotSymmetric { asym });
    }
    Ok(())
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_lambda_max(m: &DMatrix<f64>) -> f64 {
    let vals = sym_eigenvalues(m);
    vals[vals.len() - 1]
}

/// Condition number λ_max/λ_min of a symmetric positive definite matrix.
/// Returns infinity when the smallest eigenvalue is not positive.
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let vals = sym_eigenvalues(m);
    let (lo, hi) = (vals[0], vals[vals.len() - 1]);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve the Lyapunov equation `AᵀX + XA + Q = 0` for symmetric X.
///
/// Uses the Kronecker-product linear system `(I⊗Aᵀ + Aᵀ⊗I) vec(X) = -vec(Q)`;
/// fine for the n ≤ 12 systems that arise here. Requires A Hurwitz for a
/// unique solution.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec is column-major, so vec(AᵀX) = (I⊗Aᵀ)vec(X) and vec(XA) = (Aᵀ⊗I)vec(X).
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular Lyapunov system".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// True when every eigenvalue of `a` has real part strictly below `-margin`.
pub fn is_hurwitz(a: &DMatrix<f64>, margin: f64) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < -margin)
}

/// Smallest relative Hautus rank margin of `[A - λI, B]` over the eigenvalues
/// of A selected by `all_eigenvalues`.
///
/// - `all_eigenvalues = false`: only eigenvalues with Re λ ≥ -RANK_TOL are
///   tested (stabilizability; stable modes need no control authority).
/// - `all_eigenvalues = true`: every eigenvalue is tested (controllability).
///
/// Returns the minimum of σ_min/σ_max over tested eigenvalues, or infinity
/// when no eigenvalue needs testing. A margin above [`RANK_TOL`] certifies
/// full row rank at every tested mode.
pub fn hautus_margin(a: &DMatrix<f64>, b: &DMatrix<f64>, all_eigenvalues: bool) -> f64 {
    let n = a.nrows();
    let p = b.ncols();
    let mut worst = f64::INFINITY;
    for lambda in a.complex_eigenvalues().iter() {
        if !all_eigenvalues && lambda.re < -RANK_TOL {
            continue;
        }
        // Assemble [A - λI | B] over the complex field.
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n + p);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            m[(i, i)] -= *lambda;
            for j in 0..p {
                m[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = m.svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv[sv.len() - 1];
        let rel = if smax > 0.0 { smin / smax } else { 0.0 };
        worst = worst.min(rel);
    }
    worst
}

/// Hautus stabilizability test with relative tolerance [`RANK_TOL`].
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    hautus_margin(a, b, false) > RANK_TOL
}

/// Hautus controllability test with relative tolerance [`RANK_TOL`].
pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    hautus_margin(a, b, true) > RANK_TOL
}

/// Frobenius norm.
pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lyapunov_scalar() {
        // -2X + 1 = 0 => X = 0.5
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let q = DMatrix::from_row_slice(1, 1, &[1.0]);
        let x = solve_lyapunov(&a, &q).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_residual_vanishes() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        let q = DMatrix::<f64>::identity(2, 2);
        let x = solve_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &x + &x * &a + &q;
        assert!(frobenius(&res) < 1e-13);
        assert_eq!(x[(0, 1)], x[(1, 0)]);
    }

    #[test]
    fn hurwitz_classification() {
        let stable = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        assert!(is_hurwitz(&stable, 0.0));
        let marginal = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!is_hurwitz(&marginal, 0.0));
    }

    #[test]
    fn hautus_detects_stabilizability() {
        // Single integrator with input: stabilizable and controllable.
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(is_stabilizable(&a, &b));
        assert!(is_controllable(&a, &b));

        // Unstable mode without input authority.
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(!is_stabilizable(&a, &b));

        // Stable mode without input: stabilizable but not controllable.
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(is_stabilizable(&a, &b));
        assert!(!is_controllable(&a, &b));

        // Double integrator driven through the velocity channel.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.4]);
        assert!(is_stabilizable(&a, &b));
        assert!(is_controllable(&a, &b));
    }

    #[test]
    fn symmetry_check_tolerates_roundoff() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = 1e-13;
        assert!(check_symmetric(&m).is_ok());
        m[(0, 1)] = 1e-3;
        assert!(matches!(
            check_symmetric(&m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn sorted_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 3.0]);
        let v = sym_eigenvalues(&m);
        assert_abs_diff_eq!(v[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 4.0, epsilon = 1e-12);
    }
}
