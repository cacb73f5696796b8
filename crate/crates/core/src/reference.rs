//! Ground-truth solvers: the exact linear solution, the discrete Taylor
//! recursion, an adaptive Runge-Kutta integrator for quadratic ODEs, and the
//! scalar Riccati closed form.

use ndarray::prelude::*;
use ndarray_linalg::Norm;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::MatrixHandle;
use crate::taylor::{self, SolverParams};

/// x'(t) = A x + b, x(0) = x0, target time T and output error eps.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub a: MatrixHandle,
    pub b: Array1<Complex64>,
    pub x0: Array1<Complex64>,
    pub t_final: f64,
    pub eps: f64,
}

impl LinearProblem {
    pub fn validate(&self) -> Result<()> {
        if self.b.len() != self.a.dim() || self.x0.len() != self.a.dim() {
            return Err(Error::Input("b and x0 must match the dimension of A".into()));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::Input("T must be finite and > 0".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Input("eps must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// A sampled real-valued solution path with its norm profile.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array1<f64>>,
    pub norms: Vec<f64>,
    /// max-over-time norm refined beyond the sample grid
    pub max_norm: f64,
    /// max norm divided by the final norm, >= 1
    pub g: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &Array1<f64> {
        self.states.last().expect("nonempty trajectory")
    }

    pub fn final_norm(&self) -> f64 {
        *self.norms.last().expect("nonempty trajectory")
    }
}

/// x(t) = e^{At} x0 + [int_0^t e^{As} ds] b. Valid for singular A.
pub fn exact_linear_solution(prob: &LinearProblem, t: f64) -> Result<Array1<Complex64>> {
    prob.validate()?;
    if !(0.0..=prob.t_final * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::Input(format!("t = {t} outside [0, T]")));
    }
    let e = linalg::mat_exp(&prob.a, t)?;
    let phi = linalg::phi1(&prob.a, t)?;
    Ok(e.dot(&prob.x0) + phi.dot(&prob.b))
}

/// The discrete iteration y_{i+1} = T_k(Ah) y_i + S_k(Ah) h b, returning
/// y_0 .. y_m.
pub fn taylor_recursion(prob: &LinearProblem, params: SolverParams) -> Result<Vec<Array1<Complex64>>> {
    prob.validate()?;
    params.validate()?;
    let ah = prob.a.dense() * Complex64::new(params.h, 0.0);
    let tk = taylor::taylor_t(params.k, &ah);
    let sk = taylor::taylor_s(params.k, &ah);
    let hb = &prob.b * Complex64::new(params.h, 0.0);
    let mut out = Vec::with_capacity(params.m + 1);
    out.push(prob.x0.clone());
    for _ in 0..params.m {
        let prev = out.last().unwrap();
        out.push(tk.dot(prev) + sk.dot(&hb));
    }
    Ok(out)
}

/// Right-hand side F0 + F1 u + F2 (u (x) u) with F2 of shape d x d^2.
fn quad_rhs(
    f0: &Array1<f64>,
    f1: &Array2<f64>,
    f2: &Array2<f64>,
    u: &Array1<f64>,
) -> Array1<f64> {
    let d = u.len();
    let mut uu = Array1::<f64>::zeros(d * d);
    for i in 0..d {
        for j in 0..d {
            uu[i * d + j] = u[i] * u[j];
        }
    }
    f0 + &f1.dot(u) + &f2.dot(&uu)
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    0.025,
];

struct RkNode {
    t: f64,
    y: Array1<f64>,
    dy: Array1<f64>,
}

/// Cubic Hermite interpolation between two stored nodes.
fn hermite(lo: &RkNode, hi: &RkNode, t: f64) -> Array1<f64> {
    let h = hi.t - lo.t;
    if h == 0.0 {
        return lo.y.clone();
    }
    let s = (t - lo.t) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    &lo.y * h00 + &lo.dy * (h10 * h) + &hi.y * h01 + &hi.dy * (h11 * h)
}

/// Minimum number of dense-output samples for the max-norm estimate.
pub const TRAJECTORY_SAMPLES: usize = 2048;

/// Integrates u' = F0 + F1 u + F2 (u (x) u) with an embedded 5(4) pair and
/// per-step tolerance `tol`, returning a densely sampled trajectory.
pub fn solve_quadratic_rk(
    f0: &Array1<f64>,
    f1: &Array2<f64>,
    f2: &Array2<f64>,
    u_in: &Array1<f64>,
    t_final: f64,
    tol: f64,
) -> Result<Trajectory> {
    let d = u_in.len();
    if f1.dim() != (d, d) || f2.dim() != (d, d * d) || f0.len() != d {
        return Err(Error::Input("F0, F1, F2 dimensions inconsistent with u_in".into()));
    }
    if !(tol >= 1e-12) {
        return Err(Error::Input("tol must be >= 1e-12".into()));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::Input("T must be finite and > 0".into()));
    }
    let mut nodes = Vec::new();
    let mut t = 0.0f64;
    let mut y = u_in.clone();
    let mut dy = quad_rhs(f0, f1, f2, &y);
    nodes.push(RkNode {
        t,
        y: y.clone(),
        dy: dy.clone(),
    });
    // cap the step so cubic Hermite dense output (error ~ h^4/384) stays
    // within the integration tolerance
    let h_max = (384.0 * tol).powf(0.25).min(t_final / 16.0);
    let mut h = (t_final / 100.0).min(0.1).min(h_max);
    let h_min = 1e-14 * t_final;
    while t < t_final {
        if h < h_min {
            return Err(Error::Numeric(format!(
                "step size underflow at t = {t} (trajectory blow-up?)"
            )));
        }
        h = h.min(t_final - t);
        let mut k: Vec<Array1<f64>> = Vec::with_capacity(7);
        k.push(dy.clone());
        for stage in 0..6 {
            let mut arg = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    arg = arg + kj * (a * h);
                }
            }
            let _ = DP_C; // stage times implicit for an autonomous system
            k.push(quad_rhs(f0, f1, f2, &arg));
        }
        // 5th-order solution is the stage-6 argument with the last k included
        let mut y5 = y.clone();
        for (j, kj) in k.iter().take(6).enumerate() {
            let a = DP_A[5][j];
            if a != 0.0 {
                y5 = y5 + kj * (a * h);
            }
        }
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if DP_B4[j] != 0.0 {
                y4 = y4 + kj * (DP_B4[j] * h);
            }
        }
        let mut err = 0.0f64;
        for i in 0..d {
            let sc = tol + tol * y[i].abs().max(y5[i].abs());
            err += ((y5[i] - y4[i]) / sc).powi(2);
        }
        err = (err / d as f64).sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
            dy = k[6].clone();
            nodes.push(RkNode {
                t,
                y: y.clone(),
                dy: dy.clone(),
            });
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(h_max);
    }

    // dense sampling
    let n = TRAJECTORY_SAMPLES.max(2 * nodes.len());
    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    let mut seg = 0usize;
    for i in 0..n {
        let ti = t_final * i as f64 / (n - 1) as f64;
        while seg + 2 < nodes.len() && nodes[seg + 1].t < ti {
            seg += 1;
        }
        let s = hermite(&nodes[seg], &nodes[seg + 1], ti);
        norms.push(s.norm_l2());
        times.push(ti);
        states.push(s);
    }
    // refine the max norm around the sampled argmax
    let (imax, _) = norms
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut max_norm = norms[imax];
    let lo = times[imax.saturating_sub(1)];
    let hi = times[(imax + 1).min(n - 1)];
    let eval = |tt: f64| {
        let mut s = 0usize;
        while s + 2 < nodes.len() && nodes[s + 1].t < tt {
            s += 1;
        }
        hermite(&nodes[s], &nodes[s + 1], tt).norm_l2()
    };
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let (mut a, mut b) = (lo, hi);
    let (mut c, mut dd) = (b - inv_phi * (b - a), a + inv_phi * (b - a));
    let (mut fc, mut fd) = (eval(c), eval(dd));
    for _ in 0..80 {
        if fc > fd {
            b = dd;
            dd = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = dd;
            fc = fd;
            dd = a + inv_phi * (b - a);
            fd = eval(dd);
        }
    }
    max_norm = max_norm.max(fc).max(fd);
    let final_norm = *norms.last().unwrap();
    let g = if final_norm > 0.0 {
        (max_norm / final_norm).max(1.0)
    } else {
        f64::INFINITY
    };
    Ok(Trajectory {
        times,
        states,
        norms,
        max_norm,
        g,
    })
}

/// Closed form for the scalar quadratic ODE x' = a x^2 + b x + c with a > 0,
/// b < 0, c >= 0, using the roots r+- = (-b +- sqrt(b^2 - 4ac)) / (2a). For
/// r- < x0 < r+ the solution decreases monotonically toward r-.
pub fn scalar_riccati_closed_form(a: f64, b: f64, c: f64, x0: f64, t: f64) -> Result<f64> {
    if !(a > 0.0) || !(b < 0.0) || !(c >= 0.0) {
        return Err(Error::Input(format!("need a > 0, b < 0, c >= 0; got ({a}, {b}, {c})")));
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return Err(Error::NonlinearityTooLarge(
            2.0 * (a * c).sqrt() / b.abs(),
        ));
    }
    let s = disc.sqrt();
    let r_plus = (-b + s) / (2.0 * a);
    let r_minus = (-b - s) / (2.0 * a);
    let gap = r_plus - r_minus;
    let denom = 1.0 - (a * gap * t).exp() * (1.0 - gap / (x0 - r_minus));
    Ok(gap / denom + r_minus)
}
