//! Dense complex kernels: matrix exponential, its integral, decompositions
//! and the scalar spectral quantities alpha, mu, rho, ||A||.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, EigValsh, Norm, UPLO, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::MatrixHandle;

/// Target relative accuracy of `mat_exp`.
pub const TOL_EXP: f64 = 1e-12;

/// Relative sigma_min threshold below which a matrix is flagged singular.
pub const SINGULAR_TOL: f64 = 1e-14;

/// Relative sigma_min(V) threshold below which A is reported effectively
/// non-diagonalizable. Machine epsilon: below this the eigenvector matrix is
/// numerically singular and kappa(V) carries no digits.
pub const DEFECTIVE_TOL: f64 = f64::EPSILON;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Scalar spectral quantities of a matrix.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SpectralScalars {
    /// Maximum real part of the eigenvalues.
    pub alpha: f64,
    /// Maximum modulus of the eigenvalues.
    pub rho: f64,
    /// Largest singular value.
    pub op_norm: f64,
}

/// Result of conditioning the eigenvector matrix.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub enum EigvecCondition {
    Kappa(f64),
    EffectivelyNonDiagonalizable { sigma_max: f64, sigma_min: f64 },
}

impl EigvecCondition {
    pub fn kappa(&self) -> Option<f64> {
        match self {
            EigvecCondition::Kappa(k) => Some(*k),
            _ => None,
        }
    }
}

fn one_norm(a: &ArrayView2<Complex64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Pade(13,13) scaling-and-squaring, Higham's constants.
fn expm(a: &Array2<Complex64>) -> Array2<Complex64> {
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let eye = Array2::<Complex64>::eye(n);
    let nrm = one_norm(&a.view());
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a = a.mapv(|z| z / Complex64::new((2f64).powi(s as i32), 0.0));
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_inner = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let u = a.dot(&(a6.dot(&u_inner) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &eye * B[1]));
    let v_inner = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = a6.dot(&v_inner) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &eye * B[0];
    // (V - U) F = (V + U)
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut f = Array2::<Complex64>::zeros((n, n));
    let lu = ndarray_linalg::Factorize::factorize(&lhs).expect("expm: Pade solve failed");
    for j in 0..n {
        let col = ndarray_linalg::Solve::solve(&lu, &rhs.column(j).to_owned())
            .expect("expm: Pade solve failed");
        f.column_mut(j).assign(&col);
    }
    for _ in 0..s {
        f = f.dot(&f);
    }
    f
}

/// e^{At} for t >= 0.
pub fn mat_exp(a: &MatrixHandle, t: f64) -> Result<Array2<Complex64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Input(format!("t must be finite and >= 0, got {t}")));
    }
    a.check_dense_limit()?;
    let at = a.dense().mapv(|z| z * t);
    Ok(expm(&at))
}

/// Integral of the exponential: Phi(t) = int_0^t e^{As} ds, computed from the
/// exponential of the augmented block matrix [[A, I], [0, 0]]. Valid for
/// singular A.
pub fn phi1(a: &MatrixHandle, t: f64) -> Result<Array2<Complex64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Input(format!("t must be finite and >= 0, got {t}")));
    }
    a.check_dense_limit()?;
    let d = a.dim();
    let mut aug = Array2::<Complex64>::zeros((2 * d, 2 * d));
    aug.slice_mut(s![..d, ..d]).assign(a.dense());
    for i in 0..d {
        aug[[i, d + i]] = ONE;
    }
    let e = expm(&aug.mapv(|z| z * t));
    Ok(e.slice(s![..d, d..]).to_owned())
}

pub fn hermitian_part(a: &Array2<Complex64>) -> Array2<Complex64> {
    let at = a.t().mapv(|z| z.conj());
    (a + &at).mapv(|z| z * 0.5)
}

/// Log-norm mu(A): largest eigenvalue of (A + A^dag)/2.
pub fn log_norm(a: &MatrixHandle) -> Result<f64> {
    a.check_dense_limit()?;
    let h = hermitian_part(a.dense());
    let w = h
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Numeric(format!("hermitian eigensolver failed: {e}")))?;
    w.iter()
        .cloned()
        .fold(None::<f64>, |acc, x| Some(acc.map_or(x, |m| m.max(x))))
        .ok_or_else(|| Error::Input("empty matrix".into()))
}

/// Largest singular value of a dense matrix.
pub fn operator_norm(a: &Array2<Complex64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if a.nrows().max(a.ncols()) <= 256 {
        let (_, s, _) = a.svd(false, false).expect("svd failed");
        s.iter().cloned().fold(0.0, f64::max)
    } else {
        spectral_norm_est(a, 1e-12)
    }
}

/// Power iteration on A^dag A; used above the direct-SVD size cutoff.
pub fn spectral_norm_est(a: &Array2<Complex64>, tol: f64) -> f64 {
    let n = a.ncols();
    let mut x = Array1::<Complex64>::from_iter(
        (0..n).map(|i| Complex64::new(1.0 + (i as f64 * 0.7183).sin(), (i as f64 * 1.414).cos())),
    );
    let nx = x.norm_l2();
    x.mapv_inplace(|z| z / nx);
    let mut prev = 0.0f64;
    for _ in 0..500 {
        let y = a.dot(&x);
        let z = a.t().mapv(|v| v.conj()).dot(&y);
        let nz = z.norm_l2();
        if nz == 0.0 {
            return 0.0;
        }
        let sigma = nz.sqrt();
        x = z.mapv(|v| v / nz);
        if (sigma - prev).abs() <= tol * sigma.max(1e-300) {
            return sigma;
        }
        prev = sigma;
    }
    prev
}

/// (alpha, rho, ||A||).
pub fn spectral_scalars(a: &MatrixHandle) -> Result<SpectralScalars> {
    a.check_dense_limit()?;
    let (w, _) = a
        .dense()
        .eig()
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e}")))?;
    let alpha = w.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let rho = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let op_norm = operator_norm(a.dense());
    Ok(SpectralScalars {
        alpha,
        rho,
        op_norm,
    })
}

/// sigma_max / sigma_min of a dense matrix; infinite when singular to
/// tolerance. Also returns the sigma pair.
pub fn condition_report(m: &Array2<Complex64>) -> Result<(f64, f64, f64)> {
    if m.nrows() != m.ncols() {
        return Err(Error::Input("condition number needs a square matrix".into()));
    }
    let (_, s, _) = m
        .svd(false, false)
        .map_err(|e| Error::Numeric(format!("svd failed: {e}")))?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa = if smin < SINGULAR_TOL * smax {
        f64::INFINITY
    } else {
        smax / smin
    };
    Ok((kappa, smax, smin))
}

pub fn condition_number(m: &MatrixHandle) -> Result<f64> {
    m.check_dense_limit()?;
    Ok(condition_report(m.dense())?.0)
}

/// kappa(V) for unit-column eigenvectors, phase fixed so the largest-modulus
/// component of each column is real positive.
pub fn eigvec_condition(a: &MatrixHandle) -> Result<EigvecCondition> {
    a.check_dense_limit()?;
    let (_, mut v) = a
        .dense()
        .eig()
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e}")))?;
    for mut col in v.columns_mut() {
        let nrm = col.norm_l2();
        if nrm > 0.0 {
            col.mapv_inplace(|z| z / nrm);
        }
        let mut big = Complex64::new(0.0, 0.0);
        for z in col.iter() {
            if z.norm_sqr() > big.norm_sqr() {
                big = *z;
            }
        }
        if big.norm() > 0.0 {
            let phase = big / big.norm();
            col.mapv_inplace(|z| z / phase);
        }
    }
    let (_, smax, smin) = condition_report(&v)?;
    if smin < DEFECTIVE_TOL * smax {
        Ok(EigvecCondition::EffectivelyNonDiagonalizable {
            sigma_max: smax,
            sigma_min: smin,
        })
    } else {
        Ok(EigvecCondition::Kappa(smax / smin))
    }
}

/// Complex Schur decomposition A = U T U^dag via LAPACK zgees.
/// Returns (T, U) with T upper triangular.
pub fn complex_schur(a: &Array2<Complex64>) -> Result<(Array2<Complex64>, Array2<Complex64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Input("schur needs a square matrix".into()));
    }
    let ni = n as i32;
    // column-major copy
    let mut t: Vec<Complex64> = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            t.push(a[[i, j]]);
        }
    }
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut vs = vec![Complex64::new(0.0, 0.0); n * n];
    let lwork = (4 * n.max(1)) as i32;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork as usize];
    let mut rwork = vec![0.0f64; n.max(1)];
    let mut bwork = vec![0i32; n.max(1)];
    let mut sdim = 0i32;
    let mut info = 0i32;
    unsafe {
        lapack::zgees(
            b'V', b'N', None, ni, &mut t, ni, &mut sdim, &mut w, &mut vs, ni, &mut work, lwork,
            &mut rwork, &mut bwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numeric(format!("zgees failed, info = {info}")));
    }
    let tm = Array2::from_shape_fn((n, n), |(i, j)| t[j * n + i]);
    let um = Array2::from_shape_fn((n, n), |(i, j)| vs[j * n + i]);
    Ok((tm, um))
}

/// Spectral norm of the strictly upper-triangular part N of one computed
/// Schur form A = U(D+N)U^dag. An upper proxy for the norm-minimizing N.
pub fn schur_departure(a: &MatrixHandle) -> Result<f64> {
    a.check_dense_limit()?;
    let (t, _) = complex_schur(a.dense())?;
    let n = t.nrows();
    let mut strict = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            strict[[i, j]] = t[[i, j]];
        }
    }
    Ok(operator_norm(&strict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray_linalg::Norm;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mh(rows: &[&[f64]]) -> MatrixHandle {
        let n = rows.len();
        let m = Array2::from_shape_fn((n, n), |(i, j)| c(rows[i][j], 0.0));
        MatrixHandle::from_dense(m).unwrap()
    }

    /// Order-60 truncated power series in f64; the independent oracle for
    /// well-scaled inputs.
    fn exp_series(a: &Array2<Complex64>, t: f64) -> Array2<Complex64> {
        let n = a.nrows();
        let at = a.mapv(|z| z * t);
        let mut term = Array2::<Complex64>::eye(n);
        let mut acc = term.clone();
        for j in 1..=60 {
            term = term.dot(&at).mapv(|z| z / j as f64);
            acc = acc + &term;
        }
        acc
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let a = MatrixHandle::zeros(4);
        let e = mat_exp(&a, 7.0).unwrap();
        assert!((&e - &Array2::<Complex64>::eye(4)).norm_l2() < 1e-14);
    }

    #[test]
    fn exp_of_diagonal() {
        let a = mh(&[&[-2.0, 0.0], &[0.0, -2.0]]);
        let e = mat_exp(&a, 1.0).unwrap();
        let want = (-2.0f64).exp();
        assert_relative_eq!(e[[0, 0]].re, want, max_relative = 1e-13);
        assert_relative_eq!(e[[1, 1]].re, want, max_relative = 1e-13);
        assert!(e[[0, 1]].norm() < 1e-14);
    }

    #[test]
    fn exp_matches_series_oracle() {
        let a = mh(&[&[-2.0, 10.0], &[0.0, -2.0]]);
        let e = mat_exp(&a, 1.0).unwrap();
        let o = exp_series(a.dense(), 1.0);
        assert!((&e - &o).norm_l2() / o.norm_l2() < 1e-12);
    }

    #[test]
    fn exp_rejects_negative_time() {
        let a = MatrixHandle::zeros(2);
        assert!(mat_exp(&a, -1.0).is_err());
    }

    #[test]
    fn phi1_of_zero() {
        let a = MatrixHandle::zeros(3);
        let p = phi1(&a, 3.0).unwrap();
        assert!((&p - &(Array2::<Complex64>::eye(3) * c(3.0, 0.0))).norm_l2() < 1e-12);
    }

    #[test]
    fn phi1_invertible_scalar() {
        let a = mh(&[&[-1.0]]);
        let p = phi1(&a, 1.0).unwrap();
        assert_relative_eq!(p[[0, 0]].re, 1.0 - (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn phi1_nilpotent() {
        // A = [[0,1],[0,0]], t=2: sum_j A^j t^{j+1}/(j+1)! = [[2,2],[0,2]]
        let a = mh(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let p = phi1(&a, 2.0).unwrap();
        assert_relative_eq!(p[[0, 0]].re, 2.0, max_relative = 1e-12);
        assert_relative_eq!(p[[0, 1]].re, 2.0, max_relative = 1e-12);
        assert!(p[[1, 0]].norm() < 1e-13);
        assert_relative_eq!(p[[1, 1]].re, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn log_norm_examples() {
        let b = mh(&[&[-2.0, 1.0], &[0.0, -2.0]]);
        assert_relative_eq!(log_norm(&b).unwrap(), -1.5, max_relative = 1e-12);
        let a = mh(&[&[-2.0, 10.0], &[0.0, -2.0]]);
        assert_relative_eq!(log_norm(&a).unwrap(), 3.0, max_relative = 1e-12);
        for d in [5usize, 20, 50] {
            let tw = MatrixHandle::twisted_toeplitz(d);
            assert_relative_eq!(log_norm(&tw).unwrap(), -1.0 / d as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_scalars_examples() {
        let a = mh(&[&[-2.0, 10.0], &[0.0, -2.0]]);
        let b = mh(&[&[-2.0, 1.0], &[0.0, -2.0]]);
        assert_relative_eq!(spectral_scalars(&a).unwrap().alpha, -2.0, epsilon = 1e-10);
        assert_relative_eq!(spectral_scalars(&b).unwrap().alpha, -2.0, epsilon = 1e-10);
        let i = MatrixHandle::identity(3);
        let s = spectral_scalars(&i).unwrap();
        assert_relative_eq!(s.alpha, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.rho, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.op_norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn op_norm_matches_power_iteration() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Array2::from_shape_fn((8, 8), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let direct = {
            let (_, s, _) = a.svd(false, false).unwrap();
            s.iter().cloned().fold(0.0, f64::max)
        };
        let iter = spectral_norm_est(&a, 1e-12);
        assert_relative_eq!(direct, iter, max_relative = 1e-8);
    }

    #[test]
    fn condition_number_examples() {
        // unitary
        let theta = 0.3f64;
        let u = Array2::from_shape_fn((2, 2), |(i, j)| match (i, j) {
            (0, 0) => c(theta.cos(), 0.0),
            (0, 1) => c(-theta.sin(), 0.0),
            (1, 0) => c(theta.sin(), 0.0),
            _ => c(theta.cos(), 0.0),
        });
        let (k, _, _) = condition_report(&u).unwrap();
        assert_relative_eq!(k, 1.0, max_relative = 1e-12);
        let d = mh(&[&[2.0, 0.0], &[0.0, 0.5]]);
        assert_relative_eq!(condition_number(&d).unwrap(), 4.0, max_relative = 1e-12);
        // singular
        let s = mh(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(condition_number(&s).unwrap().is_infinite());
    }

    #[test]
    fn eigvec_condition_normal_is_one() {
        let a = mh(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        let k = eigvec_condition(&a).unwrap().kappa().unwrap();
        assert_relative_eq!(k, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn eigvec_condition_twisted_d10() {
        let a = MatrixHandle::twisted_toeplitz(10);
        let k = eigvec_condition(&a).unwrap().kappa().unwrap();
        assert_relative_eq!(k, 17.5352873756155, max_relative = 1e-3);
    }

    #[test]
    fn eigvec_condition_defective_reports_status() {
        let a = mh(&[&[-1.0, 1.0], &[0.0, -1.0]]);
        match eigvec_condition(&a).unwrap() {
            EigvecCondition::EffectivelyNonDiagonalizable { .. } => {}
            EigvecCondition::Kappa(k) => panic!("expected non-diagonalizable, got kappa {k}"),
        }
    }

    #[test]
    fn schur_departure_examples() {
        let normal = mh(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        assert!(schur_departure(&normal).unwrap() < 1e-12);
        let a = mh(&[&[-2.0, 10.0], &[0.0, -2.0]]);
        assert_relative_eq!(schur_departure(&a).unwrap(), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn schur_frobenius_invariance() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Array2::from_shape_fn((6, 6), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let (t, u) = complex_schur(&a).unwrap();
        // reconstruction
        let rec = u.dot(&t).dot(&u.t().mapv(|z| z.conj()));
        assert!((&rec - &a).norm_l2() < 1e-12);
        // ||N||_F^2 = ||A||_F^2 - sum |lambda_i|^2
        let mut nf2 = 0.0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                nf2 += t[[i, j]].norm_sqr();
            }
        }
        let lam2: f64 = (0..6).map(|i| t[[i, i]].norm_sqr()).sum();
        let af2 = a.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert_relative_eq!(nf2, af2 - lam2, max_relative = 1e-8);
    }
}
