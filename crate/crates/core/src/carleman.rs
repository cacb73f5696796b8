//! Carleman linearization of quadratic ODEs: block-tridiagonal assembly over
//! tensor powers, the nonlinearity ratio R, rescaling, truncation-level
//! selection and the end-to-end nonlinear solve.

use ndarray::prelude::*;
use ndarray_linalg::Norm;
use num_complex::Complex64;

use crate::emulator::{self, BoundCheck, EmulationResult};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{MatrixHandle, DENSE_LIMIT};
use crate::reference::{self, LinearProblem, Trajectory};
use crate::sparse::CsrMatrix;
use crate::taylor::UNROLLED_LIMIT;

/// u' = F0 + F1 u + F2 (u (x) u) with real coefficients, F2 of shape d x d^2.
#[derive(Debug, Clone)]
pub struct QuadraticODE {
    pub f0: Array1<f64>,
    pub f1: Array2<f64>,
    pub f2: Array2<f64>,
    pub u_in: Array1<f64>,
    pub t_final: f64,
}

impl QuadraticODE {
    pub fn dim(&self) -> usize {
        self.u_in.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.f0.len() != d || self.f1.dim() != (d, d) || self.f2.dim() != (d, d * d) {
            return Err(Error::Input("F0, F1, F2 dimensions inconsistent with u_in".into()));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::Input("T must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn norms(&self) -> (f64, f64, f64) {
        let f0 = self.f0.norm_l2();
        let f1 = crate::linalg::operator_norm(&self.f1.mapv(|x| Complex64::new(x, 0.0)));
        let f2 = crate::linalg::operator_norm(&self.f2.mapv(|x| Complex64::new(x, 0.0)));
        (f0, f1, f2)
    }

    pub fn mu_f1(&self) -> Result<f64> {
        linalg::log_norm(&MatrixHandle::from_real(self.f1.clone())?)
    }

    pub fn rk_reference(&self, tol: f64) -> Result<Trajectory> {
        reference::solve_quadratic_rk(&self.f0, &self.f1, &self.f2, &self.u_in, self.t_final, tol)
    }
}

/// The truncated linear system x' = A x + b over levels u, u^{(x)2}, ...,
/// u^{(x)N}.
#[derive(Debug, Clone)]
pub struct CarlemanSystem {
    pub n_trunc: usize,
    pub a: CsrMatrix,
    pub b: Array1<Complex64>,
    pub x_in: Array1<Complex64>,
    pub delta_dim: usize,
    pub d: usize,
    /// rescaling applied before assembly, 1 when none
    pub gamma: f64,
    pub r: f64,
}

impl CarlemanSystem {
    /// Start offset of level j (1-based) in the stacked vector.
    pub fn level_offset(&self, j: usize) -> usize {
        level_offset(self.d, j)
    }

    pub fn level_block(&self, v: &Array1<Complex64>, j: usize) -> Array1<Complex64> {
        let o = self.level_offset(j);
        let w = self.d.pow(j as u32);
        v.slice(ndarray::s![o..o + w]).to_owned()
    }
}

fn level_offset(d: usize, j: usize) -> usize {
    (1..j).map(|t| d.pow(t as u32)).sum()
}

/// Dimension of the stacked tensor-power vector, sum_{j=1}^{N} d^j.
pub fn carleman_dim(d: usize, n: usize) -> usize {
    (1..=n).map(|t| d.pow(t as u32)).sum()
}

/// u^{(x)j} in lexicographic (Kronecker) order.
pub fn tensor_power(u: &Array1<f64>, j: usize) -> Array1<f64> {
    let mut out = array![1.0];
    for _ in 0..j {
        let mut next = Array1::zeros(out.len() * u.len());
        for (i, &a) in out.iter().enumerate() {
            for (t, &b) in u.iter().enumerate() {
                next[i * u.len() + t] = a * b;
            }
        }
        out = next;
    }
    out
}

/// Appends the triplets of the transfer block from level j-1+w to level j,
/// where the local operator g (d rows, d^w columns) is applied at each of
/// the j factor positions.
fn add_level_block(
    t: &mut Vec<(usize, usize, Complex64)>,
    d: usize,
    j: usize,
    w: usize,
    g: &Array2<f64>,
    row0: usize,
    col0: usize,
) {
    for nu in 1..=j {
        let pre = d.pow((nu - 1) as u32);
        let suf = d.pow((j - nu) as u32);
        let col_suf = suf;
        for pi in 0..pre {
            for ((r, c), &v) in g.indexed_iter() {
                if v == 0.0 {
                    continue;
                }
                for si in 0..suf {
                    let row = (pi * d + r) * suf + si;
                    let col = (pi * d.pow(w as u32) + c) * col_suf + si;
                    t.push((row0 + row, col0 + col, Complex64::new(v, 0.0)));
                }
            }
        }
    }
}

/// Assembles the level-N truncation: block tridiagonal A, forcing b = (F0,
/// 0, ...), and x_in = stacked tensor powers of u_in.
pub fn build_carleman(ode: &QuadraticODE, n: usize) -> Result<CarlemanSystem> {
    ode.validate()?;
    if n == 0 {
        return Err(Error::Input("truncation level must be >= 1".into()));
    }
    let d = ode.dim();
    let delta_dim = carleman_dim(d, n);
    if delta_dim > DENSE_LIMIT {
        return Err(Error::Capacity {
            dim: delta_dim,
            limit: DENSE_LIMIT,
        });
    }
    let f0_col = ode
        .f0
        .clone()
        .into_shape_with_order((d, 1))
        .expect("column reshape");
    let mut t = Vec::new();
    for j in 1..=n {
        let row0 = level_offset(d, j);
        // diagonal block: F1 at each position
        add_level_block(&mut t, d, j, 1, &ode.f1, row0, row0);
        // superdiagonal: F2 contracts one extra factor
        if j + 1 <= n {
            add_level_block(&mut t, d, j, 2, &ode.f2, row0, level_offset(d, j + 1));
        }
        // subdiagonal: F0 inserts a factor
        if j >= 2 {
            add_level_block(&mut t, d, j, 0, &f0_col, row0, level_offset(d, j - 1));
        }
    }
    let a = CsrMatrix::from_triplets(delta_dim, delta_dim, &t);
    let mut b = Array1::zeros(delta_dim);
    for s in 0..d {
        b[s] = Complex64::new(ode.f0[s], 0.0);
    }
    let mut x_in = Array1::zeros(delta_dim);
    for j in 1..=n {
        let o = level_offset(d, j);
        for (s, &v) in tensor_power(&ode.u_in, j).iter().enumerate() {
            x_in[o + s] = Complex64::new(v, 0.0);
        }
    }
    let r = compute_r(ode).unwrap_or(f64::NAN);
    Ok(CarlemanSystem {
        n_trunc: n,
        a,
        b,
        x_in,
        delta_dim,
        d,
        gamma: 1.0,
        r,
    })
}

/// R = (||F2|| ||u_in|| + ||F0|| / ||u_in||) / |mu(F1)|.
pub fn compute_r(ode: &QuadraticODE) -> Result<f64> {
    ode.validate()?;
    let mu = ode.mu_f1()?;
    if mu >= 0.0 {
        return Err(Error::NotDissipative(mu));
    }
    let un = ode.u_in.norm_l2();
    if un == 0.0 {
        return Err(Error::Input("u_in must be nonzero".into()));
    }
    let (nf0, _, nf2) = ode.norms();
    Ok((nf2 * un + nf0 / un) / mu.abs())
}

/// Picks gamma in (||u_in||, r+) with Q(gamma) = a g^2 + b g + c < 0 where
/// a = ||F2||, b = mu(F1), c = ||F0||, and returns the system in the
/// substituted variable y = u / gamma: F0/gamma, F1, gamma F2, u_in/gamma.
pub fn rescale(ode: &QuadraticODE) -> Result<(f64, QuadraticODE)> {
    let r = compute_r(ode)?;
    if r >= 1.0 {
        return Err(Error::NonlinearityTooLarge(r));
    }
    let mu = ode.mu_f1()?;
    let (c, _, a) = ode.norms();
    let b = mu;
    let un = ode.u_in.norm_l2();
    let q = |g: f64| a * g * g + b * g + c;
    let r_plus = if a > 0.0 {
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            return Err(Error::Numeric("quadratic roots coincide numerically".into()));
        }
        (-b + disc.sqrt()) / (2.0 * a)
    } else {
        // Q is affine and decreasing; any gamma above c/|b| works
        2.0 * (c / b.abs()).max(un) + 1.0
    };
    let mut gamma = (un * r_plus).sqrt();
    if q(gamma) >= -1e-12 {
        // bisect toward the interior of (||u_in||, r+)
        let (mut lo, mut hi) = (un, r_plus);
        for _ in 0..200 {
            gamma = 0.5 * (lo + hi);
            if q(gamma) < -1e-12 {
                break;
            }
            if gamma * gamma * a + c > b.abs() * gamma {
                // outside the negative well: move toward the midpoint side
                if q(lo + 1e-12) < q(hi - 1e-12) {
                    hi = gamma;
                } else {
                    lo = gamma;
                }
            }
        }
        if q(gamma) >= -1e-12 {
            return Err(Error::Numeric("failed to find a rescaling with Q < 0".into()));
        }
    }
    let rescaled = QuadraticODE {
        f0: &ode.f0 / gamma,
        f1: ode.f1.clone(),
        f2: &ode.f2 * gamma,
        u_in: &ode.u_in / gamma,
        t_final: ode.t_final,
    };
    // dissipation hypothesis |mu(F1)| > ||F0|| + ||F2|| for the rescaled
    // system is exactly Q(gamma) < 0
    let (nf0, _, nf2) = rescaled.norms();
    debug_assert!(mu.abs() > nf0 + nf2);
    Ok((gamma, rescaled))
}

/// N >= ceil(2 log(T ||F2|| / (delta ||u(T)||)) / log(1 / ||u(0)||)),
/// floored at 1. Expects the rescaled system (||u(0)|| < 1).
pub fn choose_truncation_n(ode: &QuadraticODE, delta: f64, ut_norm: f64) -> Result<usize> {
    ode.validate()?;
    let u0 = ode.u_in.norm_l2();
    if u0 >= 1.0 {
        return Err(Error::Input(format!("||u(0)|| = {u0} >= 1: rescale first")));
    }
    if !(delta > 0.0 && delta < 1.0) || !(ut_norm > 0.0) {
        return Err(Error::Input("need delta in (0,1) and ||u(T)|| > 0".into()));
    }
    let (_, _, nf2) = ode.norms();
    let arg = ode.t_final * nf2 / (delta * ut_norm);
    if arg <= 1.0 {
        return Ok(1);
    }
    let n = (2.0 * arg.ln() / (1.0 / u0).ln()).ceil() as usize;
    Ok(n.max(1))
}

/// Checks the dissipation statements on an assembled system: the trajectory
/// norm never exceeds its initial value, C(A) stays at 1, and the level-1
/// truncation error is within delta ||u(T)||.
pub fn verify_carleman_bounds(
    sys: &CarlemanSystem,
    ode: &QuadraticODE,
    delta: f64,
) -> Result<Vec<BoundCheck>> {
    ode.validate()?;
    let mut checks = Vec::new();
    let mu = ode.mu_f1()?;
    let r = compute_r(ode).unwrap_or(f64::INFINITY);
    let traj = ode.rk_reference(1e-10)?;
    if mu >= 0.0 || r >= 1.0 {
        checks.push(BoundCheck {
            name: "trajectory_nonincreasing".into(),
            bound: f64::NAN,
            actual: f64::NAN,
            pass: true,
            applicable: false,
        });
        checks.push(BoundCheck {
            name: "c_of_a_unit".into(),
            bound: f64::NAN,
            actual: f64::NAN,
            pass: true,
            applicable: false,
        });
    } else {
        let u0 = ode.u_in.norm_l2();
        checks.push(BoundCheck {
            name: "trajectory_nonincreasing".into(),
            bound: u0,
            actual: traj.max_norm,
            pass: traj.max_norm <= u0 * (1.0 + 1e-9),
            applicable: true,
        });
        let a_h = MatrixHandle::from_dense(sys.a.to_dense())?;
        let c_a = crate::bounds::c_of_a_with_grid(&a_h, ode.t_final, 128)?;
        checks.push(BoundCheck {
            name: "c_of_a_unit".into(),
            bound: 1.0 + 1e-9,
            actual: c_a,
            pass: c_a <= 1.0 + 1e-9,
            applicable: true,
        });
    }
    // eta_1(T): exact linear evolution of the truncated system vs the
    // nonlinear reference
    let a_h = MatrixHandle::from_dense(sys.a.to_dense())?;
    let lin = LinearProblem {
        a: a_h,
        b: sys.b.clone(),
        x0: sys.x_in.clone(),
        t_final: ode.t_final,
        eps: 0.5,
    };
    let x_t = reference::exact_linear_solution(&lin, ode.t_final)?;
    let x1 = sys.level_block(&x_t, 1);
    let u_t = traj.final_state();
    let eta1 = x1
        .iter()
        .zip(u_t.iter())
        .map(|(a, b)| (a - Complex64::new(*b, 0.0)).norm_sqr())
        .sum::<f64>()
        .sqrt();
    checks.push(BoundCheck {
        name: "truncation_error_level1".into(),
        bound: delta * traj.final_norm(),
        actual: eta1,
        pass: eta1 <= delta * traj.final_norm(),
        applicable: true,
    });
    Ok(checks)
}

/// Everything the nonlinear pipeline produces besides the output vector.
#[derive(Debug, Clone)]
pub struct CarlemanDiagnostics {
    pub r: f64,
    pub gamma: f64,
    pub n_trunc: usize,
    pub delta: f64,
    pub delta_prime: f64,
    /// max ||u(t)|| / ||u(T)|| of the nonlinear reference
    pub g_u: f64,
    /// g of the emulated linear system, bounded by 3 sqrt(N) g_u
    pub g_linear: f64,
    /// probability of reading level 1 after a successful time measurement
    pub level1_prob: f64,
    pub level1_bound: f64,
    pub normalized_error: f64,
    pub u_ref: Array1<f64>,
    pub emulation: EmulationResult,
    pub checks: Vec<BoundCheck>,
}

/// rescale -> build -> choose N -> emulate the linear system -> extract the
/// level-1 block -> unnormalize by gamma.
pub fn solve_nonlinear_end_to_end(
    ode: &QuadraticODE,
    eps: f64,
) -> Result<(Array1<f64>, CarlemanDiagnostics)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Input("eps must lie in (0,1)".into()));
    }
    let r = compute_r(ode)?;
    if r >= 1.0 {
        return Err(Error::NonlinearityTooLarge(r));
    }
    let (gamma, resc) = rescale(ode)?;
    let traj = resc.rk_reference(1e-10)?;
    let yt_norm = traj.final_norm();
    let g_u = traj.g;
    let delta = eps / 4.0;
    let n = choose_truncation_n(&resc, delta, yt_norm)?;
    let delta_prime = eps / (4.0 * (1.0 + delta) * (n as f64).sqrt());
    let sys = build_carleman(&resc, n)?;
    let checks = verify_carleman_bounds(&sys, &resc, delta)?;

    // the linear emulation target: rel_error <= delta_prime means
    // eps_lin = 2 delta_prime under the emulator's delta = eps/2 rule
    let a_h = MatrixHandle::from_dense(sys.a.to_dense())?;
    let xt_estimate = (1..=n)
        .map(|j| yt_norm.powi(2 * j as i32))
        .sum::<f64>()
        .sqrt();
    let lin = LinearProblem {
        a: a_h,
        b: sys.b.clone(),
        x0: sys.x_in.clone(),
        t_final: ode.t_final,
        eps: 2.0 * delta_prime,
    };
    let (params, _) = emulator::choose_params(&lin, xt_estimate)?;
    let unrolled = (params.m + params.p) * (params.k + 1) * sys.delta_dim;
    let c_a = checks
        .iter()
        .find(|c| c.name == "c_of_a_unit" && c.applicable)
        .map(|c| c.actual);
    let emulation = if unrolled <= UNROLLED_LIMIT {
        emulator::emulate(&lin, params)?
    } else {
        emulator::emulate_recursion(&lin, params, c_a)?
    };

    // level-1 extraction and unnormalization
    let y1 = sys.level_block(&emulation.y_m, 1);
    let u_approx: Array1<f64> = y1.mapv(|z| z.re * gamma);
    let u_ref: Array1<f64> = traj.final_state().mapv(|y| y * gamma);

    // measured probability of (time in m..m+p-1, level = 1)
    let y1_sq = y1.norm_l2().powi(2);
    let ym_sq = emulation.y_m.norm_l2().powi(2);
    let level1_prob = emulation.p_meas * y1_sq / ym_sq;
    let level1_bound = 1.0 / (81.0 * n as f64 * g_u * g_u);

    let un_ref = u_ref.norm_l2();
    let un_app = u_approx.norm_l2();
    let normalized_error = if un_ref > 0.0 && un_app > 0.0 {
        (&u_approx / un_app - &u_ref / un_ref).norm_l2()
    } else {
        f64::NAN
    };

    let mut checks = checks;
    checks.push(BoundCheck {
        name: "normalized_output_error".into(),
        bound: eps,
        actual: normalized_error,
        pass: normalized_error <= eps,
        applicable: true,
    });
    checks.push(BoundCheck {
        name: "level1_probability".into(),
        bound: level1_bound,
        actual: level1_prob,
        pass: level1_prob >= level1_bound,
        applicable: true,
    });
    checks.push(BoundCheck {
        name: "g_linear_vs_g_u".into(),
        bound: 3.0 * (n as f64).sqrt() * g_u,
        actual: emulation.g,
        pass: emulation.g <= 3.0 * (n as f64).sqrt() * g_u,
        applicable: true,
    });

    let diag = CarlemanDiagnostics {
        r,
        gamma,
        n_trunc: n,
        delta,
        delta_prime,
        g_u,
        g_linear: emulation.g,
        level1_prob,
        level1_bound,
        normalized_error,
        u_ref,
        emulation,
        checks,
    };
    Ok((u_approx, diag))
}
