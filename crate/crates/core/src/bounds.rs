//! Analytic bounds on ||e^{At}||: mu-bound, Jordan and Schur bounds, the
//! Kreiss sandwich and the supremum C(A) over [0, T].

use ndarray::prelude::*;
use ndarray_linalg::SVD;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, EigvecCondition};
use crate::matrix::MatrixHandle;

/// Default uniform grid size for `c_of_a`.
pub const C_OF_A_GRID: usize = 512;
/// Grid for the Kreiss-constant search (per axis).
pub const KREISS_GRID: usize = 64;
/// Search is declared divergent past this value.
pub const KREISS_DIVERGENCE: f64 = 1e12;

/// All scalar spectral quantities of one matrix over the horizon [0, T].
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectralProfile {
    pub alpha: f64,
    pub mu: f64,
    pub rho: f64,
    pub op_norm: f64,
    pub kappa_v: Option<f64>,
    pub schur_departure: f64,
    /// lower-bound grid estimate of the Kreiss constant; NaN when the
    /// resolvent search diverges (alpha >= 0)
    pub kreiss: f64,
    pub c_of_a: f64,
    pub horizon: f64,
}

/// Computes every `SpectralProfile` field.
pub fn spectral_profile(a: &MatrixHandle, t_horizon: f64) -> Result<SpectralProfile> {
    let scalars = linalg::spectral_scalars(a)?;
    let mu = linalg::log_norm(a)?;
    let kappa_v = match linalg::eigvec_condition(a)? {
        EigvecCondition::Kappa(k) => Some(k),
        EigvecCondition::EffectivelyNonDiagonalizable { .. } => None,
    };
    let dep = linalg::schur_departure(a)?;
    let kreiss = kreiss_constant(a).map(|(low, _)| low).unwrap_or(f64::NAN);
    let c = c_of_a(a, t_horizon)?;
    Ok(SpectralProfile {
        alpha: scalars.alpha,
        mu,
        rho: scalars.rho,
        op_norm: scalars.op_norm,
        kappa_v,
        schur_departure: dep,
        kreiss,
        c_of_a: c,
        horizon: t_horizon,
    })
}

/// Evaluated bound curves for one matrix over [0, T].
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundCurve {
    pub grid: Vec<f64>,
    pub actual: Vec<f64>,
    pub mu_bound: Vec<f64>,
    pub jordan_bound: Option<Vec<f64>>,
    pub schur_bound: Vec<f64>,
    pub kreiss_low: f64,
    pub kreiss_high: f64,
}

/// Golden-section maximization of f on [a, b].
fn golden_max(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(1e-12) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// C(A) = sup over [0, T] of ||e^{At}||, from an `n_grid`-point uniform grid
/// with golden-section refinement around the grid argmax.
pub fn c_of_a_with_grid(a: &MatrixHandle, t_horizon: f64, n_grid: usize) -> Result<f64> {
    if !(t_horizon >= 0.0) || !t_horizon.is_finite() {
        return Err(Error::Input(format!("T must be finite and >= 0, got {t_horizon}")));
    }
    if t_horizon == 0.0 || a.dim() == 0 {
        return Ok(1.0);
    }
    let n = n_grid.max(2);
    let dt = t_horizon / (n - 1) as f64;
    let step = linalg::mat_exp(a, dt)?;
    let mut cur = Array2::<Complex64>::eye(a.dim());
    let mut best = 1.0f64;
    let mut best_i = 0usize;
    for i in 1..n {
        cur = cur.dot(&step);
        let nrm = linalg::operator_norm(&cur);
        if nrm > best {
            best = nrm;
            best_i = i;
        }
    }
    // refine on the bracketing interval around the grid argmax
    let lo = dt * best_i.saturating_sub(1) as f64;
    let hi = (dt * (best_i + 1) as f64).min(t_horizon);
    let mut f = |t: f64| linalg::operator_norm(&linalg::mat_exp(a, t).unwrap());
    let (_, refined) = golden_max(&mut f, lo, hi, 1e-6);
    Ok(best.max(refined).max(1.0))
}

pub fn c_of_a(a: &MatrixHandle, t_horizon: f64) -> Result<f64> {
    c_of_a_with_grid(a, t_horizon, C_OF_A_GRID)
}

fn sigma_min(m: &Array2<Complex64>) -> f64 {
    let (_, s, _) = m.svd(false, false).expect("svd failed");
    s.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Resolvent objective Re(z) / sigma_min(zI - A).
fn kreiss_objective(a: &Array2<Complex64>, re: f64, im: f64) -> f64 {
    let n = a.nrows();
    let z = Complex64::new(re, im);
    let mut m = a.mapv(|v| -v);
    for i in 0..n {
        m[[i, i]] += z;
    }
    let s = sigma_min(&m);
    if s == 0.0 {
        f64::INFINITY
    } else {
        re / s
    }
}

/// Lower-bound estimate of the Kreiss constant together with its
/// e*d*estimate upper companion.
pub fn kreiss_constant(a: &MatrixHandle) -> Result<(f64, f64)> {
    a.check_dense_limit()?;
    let d = a.dim();
    let nrm = linalg::operator_norm(a.dense()).max(1e-6);
    let re_lo = 1e-4f64;
    let re_hi = 10.0 * nrm;
    let im_hi = 2.0 * nrm;
    let mut best = 0.0f64;
    let mut best_pt = (re_lo, 0.0);
    let log_lo = re_lo.ln();
    let log_hi = re_hi.ln();
    for i in 0..KREISS_GRID {
        let re = (log_lo + (log_hi - log_lo) * i as f64 / (KREISS_GRID - 1) as f64).exp();
        for j in 0..KREISS_GRID {
            let im = -im_hi + 2.0 * im_hi * j as f64 / (KREISS_GRID - 1) as f64;
            let v = kreiss_objective(a.dense(), re, im);
            if v > KREISS_DIVERGENCE {
                return Err(Error::Numeric(format!(
                    "Kreiss search diverges near z = {re} + {im}i (alpha(A) >= 0?)"
                )));
            }
            if v > best {
                best = v;
                best_pt = (re, im);
            }
        }
    }
    // coordinate-wise golden-section refinement
    let re_step = (log_hi - log_lo) / (KREISS_GRID - 1) as f64;
    let im_step = 2.0 * im_hi / (KREISS_GRID - 1) as f64;
    let (mut re0, mut im0) = best_pt;
    for _ in 0..4 {
        let lo = (re0.ln() - re_step).exp();
        let hi = (re0.ln() + re_step).exp();
        let mut f_re = |x: f64| kreiss_objective(a.dense(), x, im0);
        let (r, v1) = golden_max(&mut f_re, lo, hi, 1e-9);
        re0 = r;
        best = best.max(v1);
        let mut f_im = |y: f64| kreiss_objective(a.dense(), re0, y);
        let (i, v2) = golden_max(&mut f_im, im0 - im_step, im0 + im_step, 1e-9);
        im0 = i;
        best = best.max(v2);
    }
    // the objective tends to 1 as Re(z) -> infinity, so 1 is always a valid
    // lower bound even when the finite grid undershoots it
    best = best.max(1.0);
    Ok((best, std::f64::consts::E * d as f64 * best))
}

/// kappa(V) * e^{alpha t} * beta * max_{0<=r<=beta-1} t^r / r!.
pub fn exp_bound_jordan(kappa_v: f64, alpha: f64, beta: usize, t: f64) -> f64 {
    assert!(beta >= 1, "beta must be >= 1");
    let mut term = 1.0f64; // t^r / r! at r = 0
    let mut best = 1.0f64;
    for r in 1..beta {
        term *= t / r as f64;
        best = best.max(term);
    }
    kappa_v * (alpha * t).exp() * beta as f64 * best
}

/// p_{d-1}(||N|| t) * e^{alpha t} with p_{d-1}(x) = sum_{j<d} x^j / j!.
pub fn exp_bound_schur(nrm_n: f64, alpha: f64, d: usize, t: f64) -> f64 {
    let x = nrm_n * t;
    let mut term = 1.0f64;
    let mut p = 1.0f64;
    for j in 1..d {
        term *= x / j as f64;
        p += term;
    }
    p * (alpha * t).exp()
}

/// Evaluates every section-3 bound for one matrix on a uniform grid.
pub fn bound_report(
    a: &MatrixHandle,
    t_horizon: f64,
    beta_hint: Option<usize>,
    n_grid: usize,
) -> Result<BoundCurve> {
    if !(t_horizon > 0.0) {
        return Err(Error::Input("T must be > 0".into()));
    }
    let d = a.dim();
    let scalars = linalg::spectral_scalars(a)?;
    let mu = linalg::log_norm(a)?;
    let nrm_n = linalg::schur_departure(a)?;
    let kappa_v = match linalg::eigvec_condition(a)? {
        EigvecCondition::Kappa(k) => Some(k),
        EigvecCondition::EffectivelyNonDiagonalizable { .. } => None,
    };
    let n = n_grid.max(2);
    let dt = t_horizon / (n - 1) as f64;
    let step = linalg::mat_exp(a, dt)?;
    let mut cur = Array2::<Complex64>::eye(d);
    let mut grid = Vec::with_capacity(n);
    let mut actual = Vec::with_capacity(n);
    let mut mu_bound = Vec::with_capacity(n);
    let mut schur_bound = Vec::with_capacity(n);
    let mut jordan_bound = kappa_v.and(beta_hint).map(|_| Vec::with_capacity(n));
    for i in 0..n {
        let t = dt * i as f64;
        if i > 0 {
            cur = cur.dot(&step);
        }
        grid.push(t);
        actual.push(if i == 0 { 1.0 } else { linalg::operator_norm(&cur) });
        mu_bound.push((mu * t).exp());
        schur_bound.push(exp_bound_schur(nrm_n, scalars.alpha, d, t));
        if let (Some(v), Some(beta), Some(kv)) = (jordan_bound.as_mut(), beta_hint, kappa_v) {
            v.push(exp_bound_jordan(kv, scalars.alpha, beta, t));
        }
    }
    let (kreiss_low, kreiss_high) = match kreiss_constant(a) {
        Ok(pair) => pair,
        // non-stable matrices have no finite Kreiss constant
        Err(_) => (f64::NAN, f64::NAN),
    };
    Ok(BoundCurve {
        grid,
        actual,
        mu_bound,
        jordan_bound,
        schur_bound,
        kreiss_low,
        kreiss_high,
    })
}
