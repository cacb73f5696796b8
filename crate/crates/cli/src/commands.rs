use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Result};
use ndarray::prelude::*;
use num_complex::Complex64;
use odebench_core::bounds;
use odebench_core::carleman::{self, QuadraticODE};
use odebench_core::emulator::{self, BoundCheck, EmulationResult};
use odebench_core::linalg::{self, EigvecCondition};
use odebench_core::mmio;
use odebench_core::reference::{self, LinearProblem};
use odebench_core::taylor::{self, SolverParams, UNROLLED_LIMIT};
use odebench_core::MatrixHandle;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config;
use crate::output::{self, RunDoc};

const FIG2_REFERENCE: &str = include_str!("../data/fig2_reference.csv");

fn check(name: &str, actual: f64, bound: f64) -> BoundCheck {
    BoundCheck {
        name: name.into(),
        bound,
        actual,
        pass: actual <= bound,
        applicable: true,
    }
}

pub fn cmd_spectra(matrix: &str, t_final: f64, out_dir: &Path) -> Result<RunDoc> {
    let a = config::parse_matrix(matrix)?;
    let profile = bounds::spectral_profile(&a, t_final)?;
    let diag = match linalg::eigvec_condition(&a)? {
        EigvecCondition::Kappa(k) => json!({ "status": "diagonalizable", "kappa_v": k }),
        EigvecCondition::EffectivelyNonDiagonalizable {
            sigma_max,
            sigma_min,
        } => json!({
            "status": "effectively_non_diagonalizable",
            "sigma_max": sigma_max,
            "sigma_min": sigma_min,
        }),
    };
    let mut doc = RunDoc::new(
        "spectra",
        json!({ "matrix": matrix, "t_final": t_final }),
    );
    doc.results.push(json!({
        "profile": profile,
        "diagonalizability": diag,
        "dim": a.dim(),
        "sparsity": a.sparsity(),
    }));
    doc.write(out_dir)?;
    Ok(doc)
}

fn norm_curve(a: &MatrixHandle, t_final: f64, samples: usize) -> Result<Vec<f64>> {
    let n = samples.max(2);
    let dt = t_final / (n - 1) as f64;
    let step = linalg::mat_exp(a, dt)?;
    let mut cur = Array2::<Complex64>::eye(a.dim());
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            cur = step.dot(&cur);
        }
        norms.push(linalg::operator_norm(&cur));
    }
    Ok(norms)
}

pub fn cmd_expnorm(
    matrix_a: &str,
    matrix_b: &str,
    t_final: f64,
    samples: usize,
    svg: bool,
    tol: f64,
    out_dir: &Path,
) -> Result<RunDoc> {
    let a = config::parse_matrix(matrix_a)?;
    let b = config::parse_matrix(matrix_b)?;
    let n = samples.max(2);
    let ts: Vec<f64> = (0..n)
        .map(|i| t_final * i as f64 / (n - 1) as f64)
        .collect();
    let na = norm_curve(&a, t_final, n)?;
    let nb = norm_curve(&b, t_final, n)?;
    let mu_a = linalg::log_norm(&a)?;
    let mu_b = linalg::log_norm(&b)?;
    let rows: Vec<Vec<f64>> = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| vec![t, na[i], nb[i], (mu_a * t).exp(), (mu_b * t).exp()])
        .collect();
    let csv = out_dir.join("expnorm.csv");
    output::write_csv(&csv, "t,norm_A,norm_B,mu_bound_A,mu_bound_B", &rows)?;
    if svg {
        let mub_a: Vec<f64> = ts.iter().map(|&t| (mu_a * t).exp()).collect();
        let mub_b: Vec<f64> = ts.iter().map(|&t| (mu_b * t).exp()).collect();
        output::write_svg(
            &out_dir.join("expnorm.svg"),
            &ts,
            &[
                ("norm_A", &na, "#0072bd"),
                ("norm_B", &nb, "#d95319"),
                ("mu_bound_A", &mub_a, "#77aadd"),
                ("mu_bound_B", &mub_b, "#eeaa88"),
            ],
        )?;
    }
    // the refined sup over [0,T] must agree with the sampled maximum
    let ca = bounds::c_of_a(&a, t_final)?;
    let cb = bounds::c_of_a(&b, t_final)?;
    let max_a = na.iter().cloned().fold(0.0, f64::max);
    let max_b = nb.iter().cloned().fold(0.0, f64::max);
    let mut doc = RunDoc::new(
        "expnorm",
        json!({
            "matrix_a": matrix_a, "matrix_b": matrix_b,
            "t_final": t_final, "samples": n, "tol": tol,
        }),
    );
    doc.results.push(json!({
        "csv": "expnorm.csv",
        "mu_a": mu_a, "mu_b": mu_b,
        "c_of_a": ca, "c_of_b": cb,
        "sampled_max_a": max_a, "sampled_max_b": max_b,
    }));
    doc.verdicts
        .push(check("sampled_max_a_matches_c_of_a", (ca - max_a).abs(), tol * ca));
    doc.verdicts
        .push(check("sampled_max_b_matches_c_of_b", (cb - max_b).abs(), tol * cb));
    doc.write(out_dir)?;
    Ok(doc)
}

#[derive(Clone, Copy)]
pub enum ParamsPolicy {
    Auto,
    Search,
}

struct Fig2Row {
    d: usize,
    kappa_l: f64,
    kappa_c: f64,
    kappa_v: f64,
    flagged: bool,
}

fn twisted_problem(d: usize) -> LinearProblem {
    let mut x0 = Array1::zeros(d);
    x0[0] = Complex64::new(1.0, 0.0);
    LinearProblem {
        a: MatrixHandle::twisted_toeplitz(d),
        b: Array1::zeros(d),
        x0,
        t_final: 1.0,
        eps: 1e-2,
    }
}

fn kappa_l_for(d: usize, params: SolverParams) -> Result<f64> {
    let prob = twisted_problem(d);
    let sys = taylor::build_system(&prob.a, &prob.x0, &prob.b, params)?;
    Ok(taylor::kappa_iterative_estimate(&sys.l)?.kappa)
}

/// Grid search over (T, m = p, k) at d = 10 minimizing the deviation from
/// the bundled kappa_L reference, then held fixed across the sweep.
fn search_params(reference_kappa_l: f64) -> Result<SolverParams> {
    let mut grid = Vec::new();
    for ti in 0..5 {
        let t = 0.5 + 0.5 * ti as f64;
        for m in 1..=12usize {
            for k in 1..=12usize {
                grid.push((t, m, k));
            }
        }
    }
    let scored: Vec<(f64, SolverParams)> = grid
        .par_iter()
        .filter_map(|&(t, m, k)| {
            let params = SolverParams {
                h: t / m as f64,
                m,
                p: m,
                k,
                delta: 5e-3,
                omega: 0.0,
            };
            let kl = kappa_l_for(10, params).ok()?;
            Some(((kl - reference_kappa_l).abs(), params))
        })
        .collect();
    scored
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
        .ok_or_else(|| anyhow!("parameter search produced no candidates"))
}

fn parse_fig2_reference() -> BTreeMap<usize, (f64, f64, f64)> {
    let mut map = BTreeMap::new();
    for line in FIG2_REFERENCE.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() == 4 {
            let d: usize = cells[0].parse().expect("reference d");
            let v: Vec<f64> = cells[1..]
                .iter()
                .map(|c| c.parse().expect("reference value"))
                .collect();
            map.insert(d, (v[0], v[1], v[2]));
        }
    }
    map
}

pub fn cmd_fig2(
    d_min: usize,
    d_max: usize,
    step: usize,
    policy: ParamsPolicy,
    raw_bcow: bool,
    out_dir: &Path,
) -> Result<RunDoc> {
    let reference = parse_fig2_reference();
    let ref_d10 = reference.get(&10).expect("bundled d = 10 row").0;
    let fixed = match policy {
        ParamsPolicy::Auto => None,
        ParamsPolicy::Search => Some(search_params(ref_d10)?),
    };
    let ds: Vec<usize> = (d_min..=d_max).step_by(step.max(1)).collect();
    let rows: Vec<Fig2Row> = ds
        .par_iter()
        .map(|&d| {
            let mut flagged = false;
            let a = MatrixHandle::twisted_toeplitz(d);
            let kappa_v = match linalg::eigvec_condition(&a) {
                Ok(EigvecCondition::Kappa(k)) => k,
                _ => {
                    flagged = true;
                    f64::NAN
                }
            };
            let params = match fixed {
                Some(p) => Ok(p),
                None => {
                    let prob = twisted_problem(d);
                    reference::exact_linear_solution(&prob, prob.t_final)
                        .map_err(anyhow::Error::from)
                        .and_then(|xt| {
                            let nxt = xt.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                            Ok(emulator::choose_params(&prob, nxt)?.0)
                        })
                }
            };
            let (kappa_l, kappa_c) = match params {
                Ok(p) => {
                    let kl = kappa_l_for(d, p).unwrap_or(f64::NAN);
                    let kc = taylor::build_bcow_c(&a, p.h, p.k, p.m, p.p, raw_bcow)
                        .and_then(|c| taylor::kappa_iterative_estimate(&c))
                        .map(|e| e.kappa)
                        .unwrap_or(f64::NAN);
                    (kl, kc)
                }
                Err(_) => (f64::NAN, f64::NAN),
            };
            if !kappa_l.is_finite() || !kappa_c.is_finite() {
                flagged = true;
            }
            Fig2Row {
                d,
                kappa_l,
                kappa_c,
                kappa_v,
                flagged,
            }
        })
        .collect();

    let csv_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.d as f64, r.kappa_l, r.kappa_c, r.kappa_v])
        .collect();
    let csv = out_dir.join("fig2.csv");
    output::write_csv(&csv, "d,kappa_L,kappa_C,kappa_V", &csv_rows)?;

    let diff_rows: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| {
            reference.get(&r.d).map(|&(rl, rc, rv)| {
                vec![r.d as f64, r.kappa_l, rl, r.kappa_c, rc, r.kappa_v, rv]
            })
        })
        .collect();
    let diff_csv = out_dir.join("fig2_diff.csv");
    output::write_csv(
        &diff_csv,
        "d,kappa_L,kappa_L_ref,kappa_C,kappa_C_ref,kappa_V,kappa_V_ref",
        &diff_rows,
    )?;

    // qualitative law: log kappa_V grows linearly in d while the system
    // condition numbers stay bounded
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.d >= 15 && r.kappa_v.is_finite())
        .map(|r| (r.d as f64, r.kappa_v.ln()))
        .collect();
    let slope = least_squares_slope(&fit);
    let max_kl = rows.iter().map(|r| r.kappa_l).fold(0.0, f64::max);
    let max_kc = rows.iter().map(|r| r.kappa_c).fold(0.0, f64::max);
    let worst_gap = rows
        .iter()
        .filter(|r| r.kappa_l.is_finite() && r.kappa_c.is_finite())
        .map(|r| r.kappa_l - r.kappa_c)
        .fold(f64::MIN, f64::max);

    let mut doc = RunDoc::new(
        "fig2",
        json!({
            "d_min": d_min, "d_max": d_max, "step": step,
            "params": match policy { ParamsPolicy::Auto => "auto", ParamsPolicy::Search => "search" },
            "raw_bcow": raw_bcow,
        }),
    );
    let used = fixed.or_else(|| {
        let prob = twisted_problem(ds[0]);
        reference::exact_linear_solution(&prob, prob.t_final)
            .ok()
            .and_then(|xt| {
                let nxt = xt.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                emulator::choose_params(&prob, nxt).ok().map(|(p, _)| p)
            })
    });
    doc.results.push(json!({
        "csv": "fig2.csv",
        "diff_csv": "fig2_diff.csv",
        "params_first_row": used,
        "note": "kappa_L/kappa_C reproduction is parameter-conditional; the generation parameters are not published",
        "flagged_rows": rows.iter().filter(|r| r.flagged).map(|r| r.d).collect::<Vec<_>>(),
        "log_kappa_v_slope": slope,
        "max_kappa_l": max_kl,
        "max_kappa_c": max_kc,
    }));
    doc.verdicts
        .push(check("kappa_l_le_kappa_c_all_d", worst_gap, 0.0));
    doc.verdicts.push(BoundCheck {
        name: "log_kappa_v_slope_at_least_0.25".into(),
        bound: slope,
        actual: 0.25,
        pass: slope >= 0.25,
        applicable: !fit.is_empty(),
    });
    if let Some(r) = rows.iter().find(|r| r.d == 10) {
        doc.verdicts.push(check(
            "kappa_v_d10_matches_reference",
            (r.kappa_v - reference[&10].2).abs(),
            1e-3 * reference[&10].2,
        ));
    }
    doc.write(out_dir)?;
    Ok(doc)
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn emulation_json(res: &EmulationResult, warnings: &[String]) -> Value {
    json!({
        "params": res.params,
        "warnings": warnings,
        "rel_error": res.rel_error,
        "output_state_error": res.output_state_error,
        "p_meas": res.p_meas,
        "g": res.g,
        "kappa_l": res.kappa_l,
        "kappa_iterative": res.kappa_iterative,
        "c_of_a": res.c_of_a,
        "cost": res.cost,
        "checks": res.bound_checks.iter().map(output::check_value).collect::<Vec<_>>(),
    })
}

pub fn cmd_emulate(config_path: &Path, out_dir: &Path) -> Result<RunDoc> {
    let cfg = config::load_config(config_path)?;
    let a = config::parse_matrix(config::require(&cfg, "matrix_a")?)?;
    let d = a.dim();
    let b = match cfg.get("b") {
        Some(s) => config::parse_vector(s)?,
        None => Array1::zeros(d),
    };
    let x0 = config::parse_vector(config::require(&cfg, "x0")?)?;
    let prob = LinearProblem {
        a,
        b,
        x0,
        t_final: config::parse_f64(&cfg, "t_final")?,
        eps: config::parse_f64(&cfg, "eps")?,
    };
    prob.validate()?;
    let x_t = reference::exact_linear_solution(&prob, prob.t_final)?;
    let xt_norm = x_t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let (params, warnings) = emulator::choose_params(&prob, xt_norm)?;
    let unrolled = (params.m + params.p) * (params.k + 1) * d;
    let res = if unrolled <= UNROLLED_LIMIT {
        emulator::emulate(&prob, params)?
    } else {
        emulator::emulate_recursion(&prob, params, None)?
    };
    let mut checks = res.bound_checks.clone();
    checks.extend(emulator::verify_truncation_bounds(&prob.a, params)?);

    let ym_path = out_dir.join("emulate_y_m.mtx");
    std::fs::create_dir_all(out_dir)?;
    mmio::write_vector_path(&ym_path, &res.y_m)?;

    let mut doc = RunDoc::new("emulate", output::config_value(&cfg));
    doc.results.push(emulation_json(&res, &warnings));
    doc.results.push(json!({ "y_m": "emulate_y_m.mtx" }));
    doc.verdicts = checks;
    doc.write(out_dir)?;
    Ok(doc)
}

pub fn cmd_carleman(config_path: &Path, out_dir: &Path) -> Result<RunDoc> {
    let cfg = config::load_config(config_path)?;
    let f1 = config::parse_inline_or_file(config::require(&cfg, "f1")?)?;
    let f2 = config::parse_inline_or_file(config::require(&cfg, "f2")?)?;
    let u_in = config::parse_real_vector(config::require(&cfg, "u_in")?)?;
    let f0 = config::parse_real_vector(config::require(&cfg, "f0")?)?;
    let ode = QuadraticODE {
        f0,
        f1,
        f2,
        u_in,
        t_final: config::parse_f64(&cfg, "t_final")?,
    };
    let eps = config::parse_f64(&cfg, "eps")?;
    let (u_out, diag) = carleman::solve_nonlinear_end_to_end(&ode, eps)?;

    let u_path = out_dir.join("carleman_u_t.mtx");
    std::fs::create_dir_all(out_dir)?;
    mmio::write_vector_path(&u_path, &u_out.mapv(|x| Complex64::new(x, 0.0)))?;

    let mut doc = RunDoc::new("carleman", output::config_value(&cfg));
    doc.results.push(json!({
        "r": diag.r,
        "gamma": diag.gamma,
        "n_trunc": diag.n_trunc,
        "delta": diag.delta,
        "delta_prime": diag.delta_prime,
        "g_u": diag.g_u,
        "g_linear": diag.g_linear,
        "level1_prob": diag.level1_prob,
        "level1_bound": diag.level1_bound,
        "normalized_error": diag.normalized_error,
        "u_t": "carleman_u_t.mtx",
        "u_ref": diag.u_ref.to_vec(),
        "u_out": u_out.to_vec(),
        "emulation": emulation_json(&diag.emulation, &[]),
    }));
    doc.verdicts = diag.checks.clone();
    doc.verdicts.extend(diag.emulation.bound_checks.clone());
    doc.write(out_dir)?;
    Ok(doc)
}

struct Aggregate {
    slacks: BTreeMap<String, Vec<f64>>,
    fails: BTreeMap<String, usize>,
    counts: BTreeMap<String, usize>,
}

impl Aggregate {
    fn new() -> Self {
        Self {
            slacks: BTreeMap::new(),
            fails: BTreeMap::new(),
            counts: BTreeMap::new(),
        }
    }

    fn add(&mut self, c: &BoundCheck) {
        if !c.applicable {
            return;
        }
        *self.counts.entry(c.name.clone()).or_default() += 1;
        if !c.pass {
            *self.fails.entry(c.name.clone()).or_default() += 1;
        }
        self.slacks
            .entry(c.name.clone())
            .or_default()
            .push(c.bound - c.actual);
    }

    fn verdicts(&self) -> Vec<BoundCheck> {
        self.counts
            .iter()
            .map(|(name, &n)| {
                let fails = self.fails.get(name).copied().unwrap_or(0);
                let worst = self.slacks[name]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                BoundCheck {
                    name: format!("{name} ({n} trials)"),
                    bound: 0.0,
                    actual: -worst,
                    pass: fails == 0,
                    applicable: true,
                }
            })
            .collect()
    }

    fn summary(&self) -> Value {
        let per: BTreeMap<&String, Value> = self
            .slacks
            .iter()
            .map(|(name, s)| {
                let mut sorted = s.clone();
                sorted.sort_by(f64::total_cmp);
                let median = sorted[sorted.len() / 2];
                (
                    name,
                    json!({
                        "trials": self.counts[name],
                        "failures": self.fails.get(name).copied().unwrap_or(0),
                        "slack_min": sorted[0],
                        "slack_median": median,
                        "slack_max": sorted[sorted.len() - 1],
                    }),
                )
            })
            .collect();
        json!(per)
    }
}

fn random_stable(rng: &mut ChaCha8Rng, d: usize) -> MatrixHandle {
    let m = Array2::from_shape_fn((d, d), |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let handle = MatrixHandle::from_dense(m).expect("within dense limit");
    let alpha = linalg::spectral_scalars(&handle).expect("eigensolve").alpha;
    let margin = rng.gen_range(0.1..1.0);
    let shift = Complex64::new(alpha + margin, 0.0);
    let shifted = handle.dense() - shift * Array2::<Complex64>::eye(d);
    MatrixHandle::from_dense(shifted).expect("within dense limit")
}

pub fn cmd_verify_all(seed: u64, trials: usize, out_dir: &Path) -> Result<RunDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agg = Aggregate::new();

    for _ in 0..trials {
        let d = rng.gen_range(1..=6);
        let a = random_stable(&mut rng, d);
        let norm_a = linalg::operator_norm(a.dense());
        let mut t_final: f64 = rng.gen_range(0.5..3.0);
        if t_final * norm_a > 10.0 {
            t_final = 10.0 / norm_a;
        }
        let b = Array1::from_shape_fn(d, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut x0 = Array1::from_shape_fn(d, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let nx0 = x0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nx0 < 1e-3 {
            x0[0] += Complex64::new(1.0, 0.0);
        }
        let eps = 10f64.powf(rng.gen_range(-5.0..-2.0));
        let prob = LinearProblem {
            a,
            b,
            x0,
            t_final,
            eps,
        };
        let x_t = reference::exact_linear_solution(&prob, t_final)?;
        let xt_norm = x_t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xt_norm < 1e-8 {
            continue;
        }
        let (params, _) = emulator::choose_params(&prob, xt_norm)?;
        let res = emulator::emulate(&prob, params)?;
        for c in &res.bound_checks {
            agg.add(c);
        }
        for c in emulator::verify_truncation_bounds(&prob.a, params)? {
            agg.add(&c);
        }
        // the assembled solve must reproduce the stepped recursion
        let recursion = reference::taylor_recursion(&prob, params)?;
        let dev = res
            .y_blocks
            .iter()
            .zip(recursion.iter())
            .map(|(yb, rb)| {
                (yb - rb)
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        agg.add(&check("recursion_match", dev, 1e-10));
    }

    // Kreiss sandwich on its own horizon where the tail is negligible
    for _ in 0..20 {
        let d = rng.gen_range(2..=8);
        let a = random_stable(&mut rng, d);
        let alpha = linalg::spectral_scalars(&a)?.alpha;
        let horizon = (1e-6f64).ln() / alpha;
        let sup = bounds::c_of_a(&a, horizon)?;
        let (low, high) = bounds::kreiss_constant(&a)?;
        agg.add(&check("kreiss_lower_le_sup", low, sup * (1.0 + 1e-9)));
        agg.add(&check("sup_le_e_d_kreiss", sup, high * (1.0 + 1e-9)));
    }

    // one nonlinear end-to-end run on the scalar benchmark
    let ode = QuadraticODE {
        f0: array![0.05],
        f1: array![[-1.0]],
        f2: array![[0.2]],
        u_in: array![0.5],
        t_final: 5.0,
    };
    let (_, diag) = carleman::solve_nonlinear_end_to_end(&ode, 1e-4)?;
    for c in diag.checks.iter().chain(diag.emulation.bound_checks.iter()) {
        agg.add(c);
    }

    let mut doc = RunDoc::new(
        "verify-all",
        json!({ "seed": seed, "trials": trials }),
    );
    doc.results.push(agg.summary());
    doc.verdicts = agg.verdicts();
    doc.write(out_dir)?;
    Ok(doc)
}
