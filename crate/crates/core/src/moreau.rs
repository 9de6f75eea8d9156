//! Moreau envelopes, proximal mappings and envelope derivatives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{ExtReal, FunctionOracle, SymMatrix, Vector, CAP};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct ProxConfig {
    /// Grid points along the single axis of a 1-D search.
    pub grid_points_1d: usize,
    /// Total grid budget for n-D searches; split evenly across axes.
    pub grid_budget: usize,
    /// Search box radius is `radius_factor * (1 + |x|)`.
    pub radius_factor: f64,
    /// Coordinate-descent sweeps in n-D refinement.
    pub cd_iters: usize,
    /// Grid local minima refined per search.
    pub refine_top: usize,
    /// Minimizers closer than `cluster_factor * (1 + |x|)` are one point.
    pub cluster_factor: f64,
    /// Prefer the oracle's closed-form prox when it has one.
    pub use_closed_form: bool,
    /// Keep every grid sample for CSV traces.
    pub keep_grid: bool,
}

impl Default for ProxConfig {
    fn default() -> Self {
        ProxConfig {
            grid_points_1d: 2001,
            grid_budget: 200_000,
            radius_factor: 10.0,
            cd_iters: 200,
            refine_top: 8,
            cluster_factor: 1e-4,
            use_closed_form: true,
            keep_grid: false,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolverTrace {
    pub closed_form: bool,
    pub radius: f64,
    pub grid_points: usize,
    pub spacing: f64,
    pub refined: usize,
    #[serde(skip)]
    pub grid: Vec<(Vector, ExtReal)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProxResult {
    #[serde(serialize_with = "ser_vectors")]
    pub minimizers: Vec<Vector>,
    pub value: ExtReal,
    pub multi_valued: bool,
    pub solver_trace: SolverTrace,
}

fn ser_vectors<S: serde::Serializer>(v: &[Vector], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = v.iter().map(|x| x.iter().copied().collect()).collect();
    rows.serialize(s)
}

impl ProxResult {
    /// The proximal point when the prox is single-valued.
    pub fn point(&self) -> Result<&Vector> {
        if self.multi_valued {
            return Err(Error::NotDifferentiable(format!(
                "proximal mapping is multi-valued ({} clusters)",
                self.minimizers.len()
            )));
        }
        self.minimizers
            .first()
            .ok_or_else(|| Error::numeric("proximal mapping is empty"))
    }
}

fn check_lambda(oracle: &FunctionOracle, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::argument(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(b) = oracle.prox_bound() {
        if lambda >= b {
            return Err(Error::argument(format!(
                "lambda = {lambda} is not below the prox bound {b} of {}",
                oracle.label()
            )));
        }
    }
    Ok(())
}

fn objective(oracle: &FunctionOracle, lambda: f64, x: &Vector, u: &Vector) -> ExtReal {
    oracle
        .eval_unchecked(u)
        .add_finite((u - x).norm_squared() / (2.0 * lambda))
}

fn cluster(points: Vec<(Vector, f64)>, tol: f64) -> Vec<Vector> {
    let mut reps: Vec<(Vector, f64)> = Vec::new();
    for (p, val) in points {
        match reps.iter_mut().find(|(r, _)| (r - &p).norm() <= tol) {
            Some(r) => {
                if val < r.1 {
                    *r = (p, val);
                }
            }
            None => reps.push((p, val)),
        }
    }
    let mut out: Vec<Vector> = reps.into_iter().map(|(p, _)| p).collect();
    out.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

fn finalize(
    oracle: &FunctionOracle,
    lambda: f64,
    x: &Vector,
    cands: Vec<(Vector, ExtReal)>,
    cfg: &ProxConfig,
    trace: SolverTrace,
) -> Result<ProxResult> {
    let best = cands.iter().map(|c| c.1).min().unwrap_or(ExtReal::PosInf);
    let best_f = match best {
        ExtReal::Finite(b) => b,
        ExtReal::NegInf => {
            return Err(Error::Unbounded(format!(
                "envelope of {} is -inf at lambda = {lambda}",
                oracle.label()
            )))
        }
        ExtReal::PosInf => {
            return Err(Error::numeric(format!(
                "{} is +inf on the whole search region",
                oracle.label()
            )))
        }
    };
    if best_f < -CAP {
        return Err(Error::Unbounded(format!(
            "envelope of {} drops below -{CAP:e}; prox bound violated",
            oracle.label()
        )));
    }
    let tie = 1e-9 * (1.0 + best_f.abs());
    let near: Vec<(Vector, f64)> = cands
        .into_iter()
        .filter_map(|(u, v)| v.finite().filter(|&v| v <= best_f + tie).map(|v| (u, v)))
        .collect();
    let minimizers = cluster(near, cfg.cluster_factor * (1.0 + x.norm()));
    let multi_valued = minimizers.len() > 1;
    Ok(ProxResult {
        minimizers,
        value: ExtReal::Finite(best_f),
        multi_valued,
        solver_trace: trace,
    })
}

fn golden(phi: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = phi(d);
        }
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Vertex of the parabola through `phi` at `u - h, u, u + h`.
fn parabolic(phi: &dyn Fn(f64) -> f64, u: f64, h: f64) -> Option<f64> {
    let (fm, f0, fp) = (phi(u - h), phi(u), phi(u + h));
    let curv = fp - 2.0 * f0 + fm;
    if !(curv > 0.0) {
        return None;
    }
    let step = h * (fp - fm) / (2.0 * curv);
    (step.abs() <= h).then_some(u - step)
}

/// Bisection on `phi'` inside `[a, b]` when it changes sign there.
fn polish(dphi: &dyn Fn(f64) -> Option<f64>, mut a: f64, mut b: f64) -> Option<f64> {
    let (da, db) = (dphi(a)?, dphi(b)?);
    if !(da <= 0.0 && db >= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if dphi(m)? < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

fn prox_1d(oracle: &FunctionOracle, lambda: f64, x: &Vector, cfg: &ProxConfig) -> Result<ProxResult> {
    let x0 = x[0];
    let radius = cfg.radius_factor * (1.0 + x0.abs());
    let m = cfg.grid_points_1d.max(3) | 1;
    let h = 2.0 * radius / (m - 1) as f64;
    let mid = (m / 2) as isize;
    let pts: Vec<f64> = (0..m).map(|i| x0 + (i as isize - mid) as f64 * h).collect();
    let one = |u: f64| Vector::from_element(1, u);
    let vals: Vec<ExtReal> = pts
        .par_iter()
        .map(|&u| objective(oracle, lambda, x, &one(u)))
        .collect();
    if vals.iter().any(|v| v.finite().is_some_and(|v| v < -CAP) || v.is_neg_inf()) {
        return Err(Error::Unbounded(format!(
            "objective of {} drops below -{CAP:e}; prox bound violated",
            oracle.label()
        )));
    }
    let phi = |u: f64| objective(oracle, lambda, x, &one(u)).to_f64();
    let dphi = |u: f64| -> Option<f64> {
        let g = oracle.grad(&one(u)).ok().flatten()?;
        Some(g[0] + (u - x0) / lambda)
    };

    let mut local: Vec<usize> = (0..m)
        .filter(|&i| {
            let v = vals[i];
            v.is_finite()
                && (i == 0 || vals[i - 1] >= v)
                && (i + 1 == m || vals[i + 1] >= v)
        })
        .collect();
    local.sort_by(|&a, &b| vals[a].cmp(&vals[b]).then(a.cmp(&b)));
    local.truncate(cfg.refine_top);

    let mut cands: Vec<(Vector, ExtReal)> = Vec::new();
    for &i in &local {
        let (lo, hi) = (pts[i] - h, pts[i] + h);
        let mut u = golden(&phi, lo, hi, 200);
        if oracle.has_grad() {
            if let Some(p) = polish(&dphi, lo, hi) {
                if phi(p) <= phi(u) + 1e-12 * (1.0 + phi(u).abs()) {
                    u = p;
                }
            }
        }
        if let Some(p) = parabolic(&phi, u, 1e-5 * (1.0 + u.abs()).min(h)) {
            if phi(p) <= phi(u) + 1e-14 * (1.0 + phi(u).abs()) {
                u = p;
            }
        }
        if phi(pts[i]) < phi(u) {
            u = pts[i];
        }
        cands.push((one(u), ExtReal::from(phi(u))));
    }
    for s in oracle.special_points() {
        if s.len() == 1 && (s[0] - x0).abs() <= radius {
            cands.push((s.clone(), objective(oracle, lambda, x, s)));
        }
    }
    let trace = SolverTrace {
        closed_form: false,
        radius,
        grid_points: m,
        spacing: h,
        refined: local.len(),
        grid: if cfg.keep_grid {
            pts.iter().zip(&vals).map(|(&u, &v)| (one(u), v)).collect()
        } else {
            Vec::new()
        },
    };
    finalize(oracle, lambda, x, cands, cfg, trace).and_then(|r| reject_boundary(oracle, x, r))
}

fn reject_boundary(oracle: &FunctionOracle, x: &Vector, r: ProxResult) -> Result<ProxResult> {
    let t = &r.solver_trace;
    if r.minimizers.iter().any(|u| (u - x).amax() >= t.radius - t.spacing) {
        return Err(Error::Unbounded(format!(
            "minimizer of the prox objective of {} sits on the search-box boundary",
            oracle.label()
        )));
    }
    Ok(r)
}

fn prox_nd(oracle: &FunctionOracle, lambda: f64, x: &Vector, cfg: &ProxConfig) -> Result<ProxResult> {
    let n = x.len();
    let radius = cfg.radius_factor * (1.0 + x.norm());
    let per_axis = (((cfg.grid_budget as f64).powf(1.0 / n as f64)).floor() as usize)
        .clamp(5, cfg.grid_points_1d)
        | 1;
    let h = 2.0 * radius / (per_axis - 1) as f64;
    let total = per_axis.pow(n as u32);
    let point = |idx: usize| -> Vector {
        let mut k = idx;
        Vector::from_fn(n, |i, _| {
            let j = k % per_axis;
            k /= per_axis;
            x[i] + (j as isize - (per_axis / 2) as isize) as f64 * h
        })
    };
    let vals: Vec<ExtReal> = (0..total)
        .into_par_iter()
        .map(|i| objective(oracle, lambda, x, &point(i)))
        .collect();
    if vals.iter().any(|v| v.finite().is_some_and(|v| v < -CAP) || v.is_neg_inf()) {
        return Err(Error::Unbounded(format!(
            "objective of {} drops below -{CAP:e}; prox bound violated",
            oracle.label()
        )));
    }
    let is_local_min = |idx: usize| -> bool {
        let v = vals[idx];
        if !v.is_finite() {
            return false;
        }
        let mut stride = 1;
        for _ in 0..n {
            let j = (idx / stride) % per_axis;
            if j > 0 && vals[idx - stride] < v {
                return false;
            }
            if j + 1 < per_axis && vals[idx + stride] < v {
                return false;
            }
            stride *= per_axis;
        }
        true
    };
    let mut local: Vec<usize> = (0..total).into_par_iter().filter(|&i| is_local_min(i)).collect();
    local.sort_by(|&a, &b| vals[a].cmp(&vals[b]).then(a.cmp(&b)));
    local.truncate(cfg.refine_top);

    let phi = |u: &Vector| objective(oracle, lambda, x, u);
    let mut starts: Vec<Vector> = local.iter().map(|&i| point(i)).collect();
    for s in oracle.special_points() {
        if s.len() == n && (s - x).amax() <= radius {
            starts.push(s.clone());
        }
    }
    let cands: Vec<(Vector, ExtReal)> = starts
        .par_iter()
        .map(|u0| {
            let mut u = u0.clone();
            let mut best = phi(&u);
            let mut step = h;
            for _ in 0..cfg.cd_iters {
                let mut improved = false;
                for i in 0..n {
                    for sgn in [1.0, -1.0] {
                        let mut t = u.clone();
                        t[i] += sgn * step;
                        let val = phi(&t);
                        if val < best {
                            best = val;
                            u = t;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                    if step < 1e-15 * (1.0 + u.norm()) {
                        break;
                    }
                }
            }
            (u, best)
        })
        .collect();
    let trace = SolverTrace {
        closed_form: false,
        radius,
        grid_points: total,
        spacing: h,
        refined: starts.len(),
        grid: if cfg.keep_grid {
            (0..total).map(|i| (point(i), vals[i])).collect()
        } else {
            Vec::new()
        },
    };
    finalize(oracle, lambda, x, cands, cfg, trace).and_then(|r| reject_boundary(oracle, x, r))
}

pub fn prox_with(oracle: &FunctionOracle, lambda: f64, x: &Vector, cfg: &ProxConfig) -> Result<ProxResult> {
    check_lambda(oracle, lambda)?;
    if x.len() != oracle.dim() {
        return Err(Error::argument(format!(
            "point has length {}, oracle dimension is {}",
            x.len(),
            oracle.dim()
        )));
    }
    if cfg.use_closed_form {
        if let Some(ps) = oracle.prox_closed_form(lambda, x) {
            let cands: Vec<(Vector, ExtReal)> = ps
                .into_iter()
                .map(|u| {
                    let v = objective(oracle, lambda, x, &u);
                    (u, v)
                })
                .collect();
            let trace = SolverTrace {
                closed_form: true,
                ..SolverTrace::default()
            };
            return finalize(oracle, lambda, x, cands, cfg, trace);
        }
    }
    if oracle.dim() == 1 {
        prox_1d(oracle, lambda, x, cfg)
    } else {
        prox_nd(oracle, lambda, x, cfg)
    }
}

/// All global minimizers of `f(u) + |u - x|² / 2λ` in the search box.
pub fn prox(oracle: &FunctionOracle, lambda: f64, x: &Vector) -> Result<ProxResult> {
    prox_with(oracle, lambda, x, &ProxConfig::default())
}

/// `e_λ f(x)`.
pub fn envelope(oracle: &FunctionOracle, lambda: f64, x: &Vector) -> Result<ExtReal> {
    Ok(prox(oracle, lambda, x)?.value)
}

pub fn envelope_with(oracle: &FunctionOracle, lambda: f64, x: &Vector, cfg: &ProxConfig) -> Result<ExtReal> {
    Ok(prox_with(oracle, lambda, x, cfg)?.value)
}

/// Default relative tolerance of the finite-difference gradient cross-check.
pub const FD_CROSS_TOL: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
pub struct GradientCheck {
    #[serde(serialize_with = "ser_vector")]
    pub gradient: Vector,
    #[serde(serialize_with = "ser_vector")]
    pub fd_gradient: Vector,
    pub gap: f64,
    pub consistent: bool,
}

fn ser_vector<S: serde::Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
    v.as_slice().serialize(s)
}

/// `(x - P_λ f(x)) / λ`; errors when the prox is multi-valued.
pub fn envelope_gradient(oracle: &FunctionOracle, lambda: f64, x: &Vector) -> Result<Vector> {
    envelope_gradient_with(oracle, lambda, x, &ProxConfig::default())
}

pub fn envelope_gradient_with(
    oracle: &FunctionOracle,
    lambda: f64,
    x: &Vector,
    cfg: &ProxConfig,
) -> Result<Vector> {
    let p = prox_with(oracle, lambda, x, cfg)?;
    Ok((x - p.point()?) / lambda)
}

/// [`envelope_gradient`] cross-validated against central differences of
/// envelope values with step `h`.
pub fn envelope_gradient_checked(
    oracle: &FunctionOracle,
    lambda: f64,
    x: &Vector,
    h: f64,
) -> Result<GradientCheck> {
    let gradient = envelope_gradient(oracle, lambda, x)?;
    let n = x.len();
    let cols: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let ep = envelope(oracle, lambda, &xp)?.to_f64();
            let em = envelope(oracle, lambda, &xm)?.to_f64();
            Ok((ep - em) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    let fd_gradient = Vector::from_vec(cols);
    let gap = (&gradient - &fd_gradient).norm();
    let consistent = gap <= FD_CROSS_TOL * (1.0 + gradient.norm());
    Ok(GradientCheck {
        gradient,
        fd_gradient,
        gap,
        consistent,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub h0: f64,
    pub rho: f64,
    pub levels: usize,
    pub hess_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            h0: 1e-2,
            rho: 0.5,
            levels: 8,
            hess_tol: 1e-4,
        }
    }
}

/// Finite-difference Jacobians of the envelope gradient on shrinking steps.
#[derive(Clone, Debug)]
pub struct HessianProbe {
    pub steps: Vec<f64>,
    /// Central differences after two Richardson stages (removing the `O(h)`
    /// and `O(h²)` error terms); `levels - 2` entries.
    pub hessians: Vec<SymMatrix>,
    /// Plain central differences, one per step.
    pub central: Vec<SymMatrix>,
    /// `|forward - backward|_F` one-sided Jacobian gap, one per step.
    pub one_sided_gap: Vec<f64>,
    pub converged: bool,
    pub limit: Option<SymMatrix>,
    pub symmetry_defect: f64,
    pub cauchy_spread: f64,
    pub reason: String,
}

impl HessianProbe {
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "steps": self.steps,
            "hessians": self.hessians.iter().map(|h| h.row_major()).collect::<Vec<_>>(),
            "central": self.central.iter().map(|h| h.row_major()).collect::<Vec<_>>(),
            "one_sided_gap": self.one_sided_gap,
            "converged": self.converged,
            "limit": self.limit.as_ref().map(|h| h.row_major()),
            "symmetry_defect": self.symmetry_defect,
            "cauchy_spread": self.cauchy_spread,
            "reason": self.reason,
        })
    }
}

/// Gradient oracle for the probe: any `z -> ∇g(z)`.
pub fn jacobian_probe(
    grad: &(dyn Fn(&Vector) -> Result<Vector> + Sync),
    z: &Vector,
    cfg: &ProbeConfig,
) -> Result<HessianProbe> {
    let n = z.len();
    if cfg.levels < 4 {
        return Err(Error::argument("probe needs at least 4 levels"));
    }
    let steps: Vec<f64> = (0..cfg.levels).map(|k| cfg.h0 * cfg.rho.powi(k as i32)).collect();
    let g0 = grad(z)?;
    // Stencil: (level, axis, sign).
    let stencil: Vec<(usize, usize, f64)> = (0..cfg.levels)
        .flat_map(|k| (0..n).flat_map(move |i| [(k, i, 1.0), (k, i, -1.0)]))
        .collect();
    let evals: Vec<Vector> = stencil
        .par_iter()
        .map(|&(k, i, s)| {
            let mut zz = z.clone();
            zz[i] += s * steps[k];
            grad(&zz)
        })
        .collect::<Result<Vec<Vector>>>()?;
    let mut raw = Vec::with_capacity(cfg.levels);
    let mut central = Vec::with_capacity(cfg.levels);
    let mut gaps = Vec::with_capacity(cfg.levels);
    for (k, &h) in steps.iter().enumerate() {
        let mut c = crate::base::Matrix::zeros(n, n);
        let mut fwd = crate::base::Matrix::zeros(n, n);
        let mut bwd = crate::base::Matrix::zeros(n, n);
        for i in 0..n {
            let gp = &evals[(k * n + i) * 2];
            let gm = &evals[(k * n + i) * 2 + 1];
            c.set_column(i, &((gp - gm) / (2.0 * h)));
            fwd.set_column(i, &((gp - &g0) / h));
            bwd.set_column(i, &((&g0 - gm) / h));
        }
        gaps.push((fwd - bwd).norm());
        central.push(SymMatrix::new(c.clone())?);
        raw.push(c);
    }
    let richardson = |seq: &[crate::base::Matrix], order: i32| -> Vec<crate::base::Matrix> {
        let f = cfg.rho.powi(-order);
        (0..seq.len() - 1)
            .map(|k| (&seq[k + 1] * f - &seq[k]) / (f - 1.0))
            .collect()
    };
    let extrap = richardson(&richardson(&raw, 1), 2);
    let last = extrap.last().expect("levels >= 4");
    let scale = last.norm().max(1.0);
    let tail = &extrap[extrap.len() - 3..];
    let mut spread: f64 = 0.0;
    for a in tail {
        for b in tail {
            spread = spread.max((a - b).norm());
        }
    }
    let symmetry_defect = (last - last.transpose()).norm();
    let gl = *gaps.last().expect("nonempty");
    let g2 = gaps[gaps.len() - 3];
    let gap_vanishes = gl <= cfg.hess_tol * scale || (gl <= 1e-2 * scale && gl <= 0.75 * g2);
    let cauchy = spread <= cfg.hess_tol * scale;
    let symmetric = symmetry_defect <= cfg.hess_tol * scale;
    let converged = cauchy && symmetric && gap_vanishes;
    let reason = if converged {
        "converged".to_string()
    } else {
        let mut r = Vec::new();
        if !cauchy {
            r.push(format!("Cauchy spread {spread:e} above tolerance"));
        }
        if !symmetric {
            r.push(format!("symmetry defect {symmetry_defect:e} above tolerance"));
        }
        if !gap_vanishes {
            r.push(format!("one-sided Jacobians differ by {gl:e}"));
        }
        r.join("; ")
    };
    let hessians = extrap
        .iter()
        .map(|m| SymMatrix::new(m.clone()))
        .collect::<Result<Vec<_>>>()?;
    let limit = converged.then(|| hessians.last().cloned().expect("nonempty"));
    Ok(HessianProbe {
        steps,
        hessians,
        central,
        one_sided_gap: gaps,
        converged,
        limit,
        symmetry_defect,
        cauchy_spread: spread,
        reason,
    })
}

/// Hessian of `e_λ f` at `z` by differencing [`envelope_gradient`].
pub fn envelope_hessian_probe(oracle: &FunctionOracle, lambda: f64, z: &Vector) -> Result<HessianProbe> {
    envelope_hessian_probe_with(oracle, lambda, z, &ProbeConfig::default())
}

pub fn envelope_hessian_probe_with(
    oracle: &FunctionOracle,
    lambda: f64,
    z: &Vector,
    cfg: &ProbeConfig,
) -> Result<HessianProbe> {
    check_lambda(oracle, lambda)?;
    let pc = ProxConfig::default();
    let g = |u: &Vector| envelope_gradient_with(oracle, lambda, u, &pc);
    jacobian_probe(&g, z, cfg)
}

/// `e_λ f` as an oracle of its own, with gradient `(x - P_λ f(x)) / λ`.
///
/// Points where the prox computation fails evaluate to `-inf` when the
/// failure is unboundedness and `+inf` otherwise.
pub fn envelope_oracle(oracle: &FunctionOracle, lambda: f64) -> Result<FunctionOracle> {
    check_lambda(oracle, lambda)?;
    let f = oracle.clone();
    let f2 = oracle.clone();
    Ok(FunctionOracle::new(
        oracle.dim(),
        format!("e_{lambda}[{}]", oracle.label()),
        move |x| match envelope(&f, lambda, x) {
            Ok(v) => v,
            Err(Error::Unbounded(_)) => ExtReal::NegInf,
            Err(_) => ExtReal::PosInf,
        },
    )?
    .with_grad(move |x| envelope_gradient(&f2, lambda, x).ok()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Vector;

    fn v1(a: f64) -> Vector {
        Vector::from_element(1, a)
    }

    fn square() -> FunctionOracle {
        FunctionOracle::scalar("sq", |x| x * x).with_grad(|x| Some(x * 2.0))
    }

    fn abs() -> FunctionOracle {
        FunctionOracle::scalar("abs", f64::abs).with_grad(|x| Some(x.map(f64::signum)))
    }

    fn huber(lambda: f64, x: f64) -> f64 {
        if x.abs() <= lambda {
            x * x / (2.0 * lambda)
        } else {
            x.abs() - lambda / 2.0
        }
    }

    #[test]
    fn envelope_examples() {
        assert!((envelope(&square(), 0.5, &v1(1.0)).unwrap().to_f64() - 0.5).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.1, 0.49, 3.0] {
            let e = envelope(&abs(), 0.5, &v1(x)).unwrap().to_f64();
            assert!((e - huber(0.5, x)).abs() < 1e-10, "x={x}: {e}");
        }
        let zero = FunctionOracle::scalar("zero", |_| 0.0);
        assert_eq!(envelope(&zero, 0.3, &v1(1.7)).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn prox_examples() {
        let p = prox(&abs(), 0.5, &v1(2.0)).unwrap();
        assert!(!p.multi_valued);
        assert!((p.minimizers[0][0] - 1.5).abs() < 1e-10);
        for (lambda, x) in [(0.5, 1.0), (0.1, -3.0), (2.0, 0.7)] {
            let p = prox(&square(), lambda, &v1(x)).unwrap();
            assert!((p.minimizers[0][0] - x / (1.0 + 2.0 * lambda)).abs() < 1e-8);
        }
        let ind = FunctionOracle::scalar("ind", |x| if x == 0.0 { 0.0 } else { f64::INFINITY })
            .with_special_points(vec![v1(0.0)]);
        for x in [0.0, 0.123, -5.0] {
            let p = prox(&ind, 0.3, &v1(x)).unwrap();
            assert_eq!(p.minimizers, vec![v1(0.0)]);
        }
    }

    #[test]
    fn prox_detects_ties() {
        // f = -|x| has two proximal points at x = 0.
        let f = FunctionOracle::scalar("negabs", |x| -x.abs());
        let p = prox(&f, 0.5, &v1(0.0)).unwrap();
        assert!(p.multi_valued);
        assert_eq!(p.minimizers.len(), 2);
        assert_eq!(envelope_gradient(&f, 0.5, &v1(0.0)).unwrap_err().kind(), "not_differentiable");
    }

    #[test]
    fn unbounded_is_flagged() {
        let f = FunctionOracle::scalar("negsq", |x| -x * x);
        assert_eq!(prox(&f, 1.0, &v1(0.3)).unwrap_err().kind(), "unbounded");
        let g = FunctionOracle::scalar("neglin", |x| -1e9 * x);
        assert_eq!(prox(&g, 1.0, &v1(0.0)).unwrap_err().kind(), "unbounded");
    }

    #[test]
    fn prox_bound_is_enforced() {
        let f = square().with_prox_bound(0.25);
        assert_eq!(prox(&f, 0.3, &v1(0.0)).unwrap_err().kind(), "argument");
    }

    #[test]
    fn gradient_examples() {
        let g = envelope_gradient(&abs(), 0.5, &v1(2.0)).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-10);
        let g = envelope_gradient(&square(), 0.5, &v1(1.0)).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-10);
        let c = envelope_gradient_checked(&square(), 0.5, &v1(1.0), 1e-5).unwrap();
        assert!(c.consistent, "{c:?}");
    }

    #[test]
    fn probe_examples() {
        for lambda in [0.1, 0.5] {
            let p = envelope_hessian_probe(&square(), lambda, &v1(0.4)).unwrap();
            assert!(p.converged, "{}", p.reason);
            assert!((p.limit.unwrap().matrix()[(0, 0)] - 2.0 / (1.0 + 2.0 * lambda)).abs() < 1e-6);
        }
        let f = FunctionOracle::scalar("abs32", |x| x.abs().powf(1.5))
            .with_grad(|x| Some(x.map(|t| 1.5 * t.signum() * t.abs().sqrt())));
        let p = envelope_hessian_probe(&f, 0.1, &v1(0.0)).unwrap();
        assert!(p.converged, "{}", p.reason);
        assert!((p.limit.unwrap().matrix()[(0, 0)] - 10.0).abs() < 1e-3);

        let g = FunctionOracle::scalar("sqsgn", |x| x * x * x.signum())
            .with_grad(|x| Some(x.map(|t| 2.0 * t.abs())));
        let p = envelope_hessian_probe(&g, 0.1, &v1(0.0)).unwrap();
        assert!(!p.converged);
    }

    #[test]
    fn two_dimensional_grid_search() {
        let f = FunctionOracle::new(2, "l1", |x: &Vector| ExtReal::Finite(x[0].abs() + x[1].abs())).unwrap();
        let x = Vector::from_vec(vec![1.0, -0.2]);
        let p = prox(&f, 0.5, &x).unwrap();
        assert!((&p.minimizers[0] - Vector::from_vec(vec![0.5, 0.0])).norm() < 1e-8);
    }
}
