//! Hessian bundles and quadratic bundles sampled along approach paths.
//!
//! The envelope route walks `z_k -> x̄ + λv̄`, recovers `(x_k, v_k)` from the
//! proximal mapping and the forms `½ d²f(x_k|v_k)` from envelope Hessians.
//! The direct route walks `x_k -> x̄` through points of classical twice
//! differentiability. Path limits are taken on envelope Hessians, where
//! epi-convergence of forms becomes ordinary matrix convergence.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{AttentiveLocalization, ExtReal, FunctionOracle, Matrix, PrimalDualPair, SymMatrix, Vector, CAP};
use crate::error::{Error, Result};
use crate::gtd::{Decision, GtdVerdict};
use crate::moreau::{envelope_gradient, jacobian_probe, prox, HessianProbe, ProbeConfig};
use crate::quadform::{
    gqf_from_envelope_hessian_tol, moreau_of_gqf, GeneralizedQuadraticForm, GraphSubspace, NUMERIC_RANK_TOL,
};
use crate::subderiv::default_directions;

/// Graph-projector radius of a form cluster.
pub const CLUSTER_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMode {
    EnvelopeRoute,
    DirectRoute,
    Both,
}

/// Approach paths shared by the bundle samplers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceSchedule {
    pub mode: RouteMode,
    /// Unit directions of radial paths (z-space on the envelope route,
    /// x-space on the direct route).
    pub approach_dirs: Vec<Vec<f64>>,
    pub r0: f64,
    pub rho: f64,
    pub levels: usize,
    /// 1-D direct-route paths through `x̄ + 1/(θ + 2πm_k)` with `m_k`
    /// doubling per level, one per phase `θ`.
    pub phases: Vec<f64>,
    /// Seeded phases added to `phases`.
    pub random_phases: usize,
    pub seed: u64,
    pub cluster_eps: f64,
    pub probe: ProbeConfig,
}

impl SequenceSchedule {
    pub fn new(n: usize) -> Self {
        SequenceSchedule {
            mode: RouteMode::Both,
            approach_dirs: default_directions(n, if n == 1 { 2 } else { 8 }, 0),
            r0: 1e-1,
            rho: 0.6,
            levels: 12,
            phases: Vec::new(),
            random_phases: 0,
            seed: 0,
            cluster_eps: CLUSTER_EPS,
            probe: ProbeConfig::default(),
        }
    }

    pub fn with_mode(mut self, mode: RouteMode) -> Self {
        self.mode = mode;
        self
    }

    /// Adds both phases with `sin θ = c` for each level `c` in `[-1, 1]`.
    pub fn with_sine_levels(mut self, levels: &[f64]) -> Self {
        for &c in levels {
            let a = c.clamp(-1.0, 1.0).asin();
            for th in [a, PI - a] {
                let th = th.rem_euclid(2.0 * PI);
                if !self.phases.iter().any(|p| (p - th).abs() < 1e-12) {
                    self.phases.push(th);
                }
            }
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.approach_dirs.first().map_or(1, Vec::len)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.r0 * self.rho.powi(k as i32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.rho > 0.0 && self.rho < 1.0 && self.levels >= 4) {
            return Err(Error::argument("schedule needs r0 > 0, rho in (0,1) and at least 4 levels"));
        }
        if !(self.cluster_eps > 0.0) {
            return Err(Error::argument("cluster_eps must be positive"));
        }
        let n = self.dim();
        if self.approach_dirs.iter().any(|d| d.len() != n) {
            return Err(Error::argument("approach directions must share a dimension"));
        }
        Ok(())
    }

    fn all_phases(&self) -> Vec<f64> {
        let mut out = self.phases.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x0ff5);
        for _ in 0..self.random_phases {
            out.push(rng.gen_range(0.0..2.0 * PI));
        }
        out
    }

    fn probe_at(&self, r: f64) -> ProbeConfig {
        ProbeConfig {
            h0: self.probe.h0.min(0.25 * r),
            ..self.probe.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRoute {
    Envelope,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NotGtd,
    AttentivenessFailed,
    NegInfBlowup,
    Nonconvergent,
}

#[derive(Clone, Debug, Serialize)]
pub struct PathLevel {
    pub level: usize,
    pub radius: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub fx: ExtReal,
    /// Matrix of `½ d²f(x_k|v_k)` on the direct route, envelope Hessian on
    /// the envelope route (row-major).
    pub matrix: Option<Vec<f64>>,
    pub coefficient: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PathResult {
    pub index: usize,
    pub route: PathRoute,
    pub label: String,
    pub levels: Vec<PathLevel>,
    pub limit: Option<GeneralizedQuadraticForm>,
    pub reject: Option<RejectReason>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Cluster {
    pub representative: GeneralizedQuadraticForm,
    pub members: usize,
    pub spread: f64,
    pub paths: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RejectedPath {
    pub path: usize,
    pub label: String,
    pub reason: RejectReason,
    pub detail: String,
}

/// Verified members of a quadratic bundle. The sampler only ever sees
/// finitely many sequences, so the list is an inner approximation.
#[derive(Clone, Debug, Serialize)]
pub struct BundleReport {
    pub elements: Vec<Cluster>,
    pub attentive: bool,
    pub rejected_paths: Vec<RejectedPath>,
    pub coefficient_range: Option<[f64; 2]>,
    pub cluster_eps: f64,
    #[serde(skip)]
    pub paths: Vec<PathResult>,
}

impl BundleReport {
    pub fn forms(&self) -> Vec<&GeneralizedQuadraticForm> {
        self.elements.iter().map(|c| &c.representative).collect()
    }

    /// Does some element lie within `cluster_eps` of `q`?
    pub fn contains(&self, q: &GeneralizedQuadraticForm) -> bool {
        self.elements.iter().any(|c| c.representative.distance(q) <= self.cluster_eps)
    }

    /// Same elements as `expected`, matched both ways at `cluster_eps`.
    pub fn matches(&self, expected: &[GeneralizedQuadraticForm]) -> bool {
        expected.iter().all(|q| self.contains(q))
            && self.elements.iter().all(|c| expected.iter().any(|q| c.representative.distance(q) <= self.cluster_eps))
    }
}

/// Limit of a matrix sequence: the raw tail, then up to two rounds of
/// entrywise Aitken extrapolation; `None` when no tail settles within
/// `tol * max(1, |H|)`.
pub fn matrix_sequence_limit(seq: &[SymMatrix], tol: f64) -> Option<SymMatrix> {
    let settled = |tail: &[SymMatrix]| -> bool {
        let last = tail.last().expect("nonempty");
        let scale = last.frobenius().max(1.0);
        tail.iter().all(|h| h.dist(last) <= tol * scale)
    };
    let mut cur = seq.to_vec();
    for _ in 0..3 {
        if cur.len() < 3 {
            return None;
        }
        if settled(&cur[cur.len() - 3..]) {
            return cur.last().cloned();
        }
        cur = aitken(&cur);
    }
    None
}

fn aitken(seq: &[SymMatrix]) -> Vec<SymMatrix> {
    let n = seq[0].order();
    seq.windows(3)
        .map(|w| {
            let (a, b, c) = (w[0].matrix(), w[1].matrix(), w[2].matrix());
            let m = Matrix::from_fn(n, n, |r, s| {
                let d1 = b[(r, s)] - a[(r, s)];
                let d2 = c[(r, s)] - b[(r, s)];
                let den = d2 - d1;
                let scale = 1.0 + c[(r, s)].abs();
                if den.abs() <= 1e-14 * scale || d2.abs() >= 0.95 * d1.abs() || (d2 * d2 / den).abs() > 1e3 * scale {
                    c[(r, s)]
                } else {
                    c[(r, s)] - d2 * d2 / den
                }
            });
            SymMatrix::new(m).unwrap_or_else(|_| w[2].clone())
        })
        .collect()
}

fn limit_tol(cluster_eps: f64) -> f64 {
    0.25 * cluster_eps
}

/// Strictly decreasing with non-shrinking decrements over the last 6 terms.
fn diverges_down(seq: &[f64]) -> bool {
    if seq.iter().any(|&a| a < -CAP) {
        return true;
    }
    if seq.len() < 6 {
        return false;
    }
    let t = &seq[seq.len() - 6..];
    let d: Vec<f64> = t.windows(2).map(|w| w[0] - w[1]).collect();
    d.iter().all(|&x| x > 0.0) && d.windows(2).all(|w| w[1] >= w[0])
}

fn rejected(index: usize, route: PathRoute, label: String, levels: Vec<PathLevel>, reason: RejectReason, detail: impl Into<String>) -> PathResult {
    PathResult {
        index,
        route,
        label,
        levels,
        limit: None,
        reject: Some(reason),
        detail: detail.into(),
    }
}

fn attentive_ok(fx: ExtReal, fbar: f64, r: f64) -> bool {
    match fx.finite() {
        Some(f) => (f - fbar).abs() <= (10.0 * r).max(1e-8),
        None => false,
    }
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

struct EnvCtx<'a> {
    oracle: &'a FunctionOracle,
    pair: &'a PrimalDualPair,
    lambda: f64,
    schedule: &'a SequenceSchedule,
    attentive: bool,
}

/// Envelope-route path along `z̄ + r_k d`; `d = None` is the constant path.
fn envelope_path(ctx: &EnvCtx<'_>, index: usize, d: Option<&Vector>) -> Result<PathResult> {
    let lambda = ctx.lambda;
    let zbar = &ctx.pair.x + &ctx.pair.v * lambda;
    let label = match d {
        Some(d) => format!("envelope {:?}", d.as_slice()),
        None => "envelope constant".to_string(),
    };
    let radii: Vec<f64> = match d {
        Some(_) => ctx.schedule.radii(),
        None => vec![0.0],
    };
    let mut levels = Vec::new();
    let mut hs = Vec::new();
    let mut last_pair = None;
    for (k, &r) in radii.iter().enumerate() {
        let z = match d {
            Some(d) => &zbar + d * r,
            None => zbar.clone(),
        };
        let p = match prox(ctx.oracle, lambda, &z) {
            Ok(p) if !p.multi_valued => p,
            Ok(_) | Err(Error::NotDifferentiable(_)) => continue,
            Err(e) => return Err(e),
        };
        let x = p.point()?.clone();
        let v = (&z - &x) / lambda;
        let fx = ctx.oracle.eval(&x)?;
        if ctx.attentive && !attentive_ok(fx, ctx.pair.fx, r) {
            return Ok(rejected(index, PathRoute::Envelope, label, levels, RejectReason::AttentivenessFailed,
                format!("|f(x_k) - f(x̄)| too large at level {k}")));
        }
        let cfg = if d.is_some() { ctx.schedule.probe_at(r) } else { ctx.schedule.probe.clone() };
        let probe: HessianProbe = jacobian_probe(&|u: &Vector| envelope_gradient(ctx.oracle, lambda, u), &z, &cfg)?;
        let h = if probe.converged { probe.limit.clone() } else { None };
        levels.push(PathLevel {
            level: k,
            radius: r,
            x: vec_of(&x),
            v: vec_of(&v),
            fx,
            matrix: h.as_ref().map(|h| h.row_major()),
            coefficient: None,
        });
        last_pair = Some((x, v, r));
        if let Some(h) = h {
            hs.push(h);
        }
    }
    if d.is_none() {
        return match hs.pop() {
            Some(h) => finish_envelope(index, label, levels, &h, lambda),
            None => Ok(rejected(index, PathRoute::Envelope, label, levels, RejectReason::NotGtd,
                "envelope is not twice differentiable at x̄ + λv̄")),
        };
    }
    if hs.len() < 3 {
        return Ok(rejected(index, PathRoute::Envelope, label, levels, RejectReason::NotGtd,
            format!("only {} levels with a converged envelope Hessian", hs.len())));
    }
    if let Some((x, v, r)) = last_pair {
        let slack = 4.0 * r / (1.0 - lambda * 0.0).max(1e-12) + 1e-8;
        if (&x - &ctx.pair.x).norm() > slack || (&v - &ctx.pair.v).norm() > slack / lambda {
            return Ok(rejected(index, PathRoute::Envelope, label, levels, RejectReason::Nonconvergent,
                "path does not approach (x̄, v̄)"));
        }
    }
    match matrix_sequence_limit(&hs, limit_tol(ctx.schedule.cluster_eps)) {
        Some(h) => finish_envelope(index, label, levels, &h, lambda),
        None => Ok(rejected(index, PathRoute::Envelope, label, levels, RejectReason::Nonconvergent,
            "envelope Hessians do not settle")),
    }
}

fn finish_envelope(index: usize, label: String, mut levels: Vec<PathLevel>, h: &SymMatrix, lambda: f64) -> Result<PathResult> {
    let q = gqf_from_envelope_hessian_tol(h, lambda, NUMERIC_RANK_TOL)?;
    for l in levels.iter_mut() {
        if let Some(m) = &l.matrix {
            if m.len() == 1 {
                let a = m[0] / (1.0 - lambda * m[0]);
                l.coefficient = Some(a / 2.0);
            }
        }
    }
    Ok(PathResult {
        index,
        route: PathRoute::Envelope,
        label,
        levels,
        limit: Some(q),
        reject: None,
        detail: String::new(),
    })
}

struct DirectCtx<'a> {
    oracle: &'a FunctionOracle,
    pair: &'a PrimalDualPair,
    lambda: f64,
    schedule: &'a SequenceSchedule,
    attentive: bool,
}

fn classical_hessian(oracle: &FunctionOracle, x: &Vector, cfg: &ProbeConfig) -> Result<Option<SymMatrix>> {
    if oracle.has_hess() {
        return oracle.hess(x);
    }
    let g = |u: &Vector| -> Result<Vector> {
        oracle
            .grad(u)?
            .ok_or_else(|| Error::NotDifferentiable(format!("no gradient at {:?}", u.as_slice())))
    };
    match jacobian_probe(&g, x, cfg) {
        Ok(p) if p.converged => Ok(p.limit),
        Ok(_) | Err(Error::NotDifferentiable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn direct_path(ctx: &DirectCtx<'_>, index: usize, label: String, points: Vec<(Vector, f64)>) -> Result<PathResult> {
    let mut levels = Vec::new();
    let mut forms: Vec<SymMatrix> = Vec::new();
    let mut vs: Vec<Vector> = Vec::new();
    for (k, (x, r)) in points.into_iter().enumerate() {
        let fx = ctx.oracle.eval(&x)?;
        if !fx.is_finite() {
            continue;
        }
        let v = match ctx.oracle.grad(&x)? {
            Some(g) => g,
            None => continue,
        };
        if ctx.attentive && !attentive_ok(fx, ctx.pair.fx, r) {
            return Ok(rejected(index, PathRoute::Direct, label, levels, RejectReason::AttentivenessFailed,
                format!("|f(x_k) - f(x̄)| too large at level {k}")));
        }
        let a = classical_hessian(ctx.oracle, &x, &ctx.schedule.probe_at(r))?;
        levels.push(PathLevel {
            level: k,
            radius: r,
            x: vec_of(&x),
            v: vec_of(&v),
            fx,
            matrix: a.as_ref().map(|a| a.row_major()),
            coefficient: a.as_ref().filter(|a| a.order() == 1).map(|a| a.matrix()[(0, 0)] / 2.0),
        });
        if let Some(a) = a {
            forms.push(a);
            vs.push(v);
        }
    }
    if forms.len() < 3 {
        return Ok(rejected(index, PathRoute::Direct, label, levels, RejectReason::NotGtd,
            format!("only {} twice-differentiable levels", forms.len())));
    }
    let mins: Vec<f64> = forms.iter().map(SymMatrix::min_eigenvalue).collect();
    if diverges_down(&mins) {
        return Ok(rejected(index, PathRoute::Direct, label, levels, RejectReason::NegInfBlowup,
            format!("smallest eigenvalue runs off to -inf (last {:.3e})", mins.last().unwrap())));
    }
    let vlast = vs.last().expect("nonempty");
    let vtol = 1e-3 * (1.0 + ctx.pair.v.norm());
    let vlim = if vs.len() >= 3 {
        let t = &vs[vs.len() - 3..];
        Vector::from_fn(vlast.len(), |i, _| {
            let (a, b, c) = (t[0][i], t[1][i], t[2][i]);
            let den = (c - b) - (b - a);
            if den.abs() <= 1e-14 * (1.0 + c.abs()) { c } else { c - (c - b).powi(2) / den }
        })
    } else {
        vlast.clone()
    };
    if (vlast - &ctx.pair.v).norm() > vtol && (&vlim - &ctx.pair.v).norm() > vtol {
        return Ok(rejected(index, PathRoute::Direct, label, levels, RejectReason::Nonconvergent,
            format!("gradients do not approach v̄ (last {:?})", vlast.as_slice())));
    }
    let floor = mins.iter().fold(0.0f64, |m, &a| m.max(-a));
    let lam = if floor * ctx.lambda < 0.5 { ctx.lambda } else { 0.5 / floor };
    let hs: Vec<SymMatrix> = forms
        .iter()
        .map(|a| moreau_of_gqf(&GeneralizedQuadraticForm::quadratic(a.clone()), lam, floor))
        .collect::<Result<_>>()?;
    match matrix_sequence_limit(&hs, limit_tol(ctx.schedule.cluster_eps)) {
        Some(h) => {
            let q = gqf_from_envelope_hessian_tol(&h, lam, NUMERIC_RANK_TOL)?;
            Ok(PathResult {
                index,
                route: PathRoute::Direct,
                label,
                levels,
                limit: Some(q),
                reject: None,
                detail: String::new(),
            })
        }
        None => Ok(rejected(index, PathRoute::Direct, label, levels, RejectReason::Nonconvergent,
            "forms do not settle")),
    }
}

fn direct_paths(oracle: &FunctionOracle, pair: &PrimalDualPair, schedule: &SequenceSchedule) -> Vec<(String, Vec<(Vector, f64)>)> {
    let radii = schedule.radii();
    let mut out = Vec::new();
    for d in &schedule.approach_dirs {
        let d = Vector::from_column_slice(d);
        let pts = radii.iter().map(|&r| (&pair.x + &d * r, r)).collect();
        out.push((format!("direct {:?}", d.as_slice()), pts));
    }
    if oracle.dim() == 1 {
        for th in schedule.all_phases() {
            let m0 = (1.0 / (2.0 * PI * schedule.r0)).ceil().max(1.0);
            let pts = (0..schedule.levels)
                .map(|k| {
                    let t = 1.0 / (th + 2.0 * PI * m0 * 2f64.powi(k as i32));
                    (&pair.x + Vector::from_element(1, t), t)
                })
                .collect();
            out.push((format!("direct phase {th:.6}"), pts));
        }
    }
    out
}

fn check_lambda(lambda: f64, r_level: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite() && r_level >= 0.0 && lambda * r_level < 1.0) {
        return Err(Error::argument(format!(
            "need 0 < lambda < 1/r, got lambda = {lambda}, r = {r_level}"
        )));
    }
    Ok(())
}

/// Quadratic bundle of `f` at `(x̄, v̄)`; `attentive = false` drops the
/// `f(x_k) -> f(x̄)` requirement.
pub fn quad_bundle(
    oracle: &FunctionOracle,
    pair: &PrimalDualPair,
    lambda: f64,
    r_level: f64,
    schedule: &SequenceSchedule,
    attentive: bool,
) -> Result<BundleReport> {
    check_lambda(lambda, r_level)?;
    schedule.validate()?;
    if schedule.dim() != oracle.dim() || pair.dim() != oracle.dim() {
        return Err(Error::argument("schedule, pair and oracle dimensions differ"));
    }
    let envelope = matches!(schedule.mode, RouteMode::EnvelopeRoute | RouteMode::Both);
    let direct = matches!(schedule.mode, RouteMode::DirectRoute | RouteMode::Both);
    if direct && !(oracle.has_grad() || oracle.has_hess()) {
        return Err(Error::capability(format!(
            "{} has no gradient; the direct route needs classical derivatives",
            oracle.label()
        )));
    }
    let mut jobs: Vec<Job> = Vec::new();
    if envelope {
        jobs.push(Job::Envelope(None));
        for d in &schedule.approach_dirs {
            jobs.push(Job::Envelope(Some(Vector::from_column_slice(d))));
        }
    }
    if direct {
        for (label, pts) in direct_paths(oracle, pair, schedule) {
            jobs.push(Job::Direct(label, pts));
        }
    }
    let ectx = EnvCtx { oracle, pair, lambda, schedule, attentive };
    let dctx = DirectCtx { oracle, pair, lambda, schedule, attentive };
    let paths: Vec<PathResult> = jobs
        .into_par_iter()
        .enumerate()
        .map(|(i, job)| match job {
            Job::Envelope(d) => envelope_path(&ectx, i, d.as_ref()),
            Job::Direct(label, pts) => direct_path(&dctx, i, label, pts),
        })
        .collect::<Result<_>>()?;
    Ok(assemble(paths, attentive, schedule.cluster_eps))
}

enum Job {
    Envelope(Option<Vector>),
    Direct(String, Vec<(Vector, f64)>),
}

fn assemble(paths: Vec<PathResult>, attentive: bool, eps: f64) -> BundleReport {
    let limits: Vec<(usize, &GeneralizedQuadraticForm)> =
        paths.iter().filter_map(|p| p.limit.as_ref().map(|q| (p.index, q))).collect();
    let elements = cluster_forms(&limits, eps);
    let rejected_paths = paths
        .iter()
        .filter_map(|p| {
            p.reject.map(|reason| RejectedPath {
                path: p.index,
                label: p.label.clone(),
                reason,
                detail: p.detail.clone(),
            })
        })
        .collect();
    let coefficient_range = continuum_range(&limits, eps);
    BundleReport {
        elements,
        attentive,
        rejected_paths,
        coefficient_range,
        cluster_eps: eps,
        paths,
    }
}

/// `[lo, hi]` of the 1-D limit coefficients when at least 8 distinct ones
/// span more than `10 eps`.
fn continuum_range(limits: &[(usize, &GeneralizedQuadraticForm)], eps: f64) -> Option<[f64; 2]> {
    let mut cs: Vec<f64> = limits.iter().filter_map(|(_, q)| q.coefficient()).collect();
    cs.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = Vec::new();
    for c in &cs {
        if distinct.last().map_or(true, |d| c - d > eps) {
            distinct.push(*c);
        }
    }
    match (cs.first(), cs.last()) {
        (Some(&lo), Some(&hi)) if distinct.len() >= 8 && hi - lo > 10.0 * eps => Some([lo, hi]),
        _ => None,
    }
}

fn representative(members: &[&GeneralizedQuadraticForm]) -> GeneralizedQuadraticForm {
    let n = members[0].dim();
    let mut coeffs: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter_map(|(i, q)| q.coefficient().map(|c| (c, i)))
        .collect();
    if n == 1 && coeffs.len() == members.len() {
        coeffs.sort_by(|a, b| a.0.total_cmp(&b.0));
        return members[coeffs[(coeffs.len() - 1) / 2].1].clone();
    }
    if members.len() == 1 {
        return members[0].clone();
    }
    let mut p = Matrix::zeros(2 * n, 2 * n);
    for q in members {
        p += q.graph().projector();
    }
    p /= members.len() as f64;
    GraphSubspace::from_projector(&p)
        .and_then(|g| g.to_form(NUMERIC_RANK_TOL))
        .unwrap_or_else(|_| members[0].clone())
}

/// Leader clustering at `eps/2` followed by merging representatives closer
/// than `eps`; deterministic in the order of `limits`.
pub fn cluster_forms(limits: &[(usize, &GeneralizedQuadraticForm)], eps: f64) -> Vec<Cluster> {
    let mut groups: Vec<Vec<(usize, &GeneralizedQuadraticForm)>> = Vec::new();
    for &(i, q) in limits {
        match groups.iter_mut().find(|g| g[0].1.distance(q) <= eps / 2.0) {
            Some(g) => g.push((i, q)),
            None => groups.push(vec![(i, q)]),
        }
    }
    loop {
        let reps: Vec<GeneralizedQuadraticForm> =
            groups.iter().map(|g| representative(&g.iter().map(|m| m.1).collect::<Vec<_>>())).collect();
        let mut merged = false;
        'outer: for a in 0..groups.len() {
            for b in (a + 1)..groups.len() {
                if reps[a].distance(&reps[b]) <= eps {
                    let g = groups.remove(b);
                    groups[a].extend(g);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            return groups
                .into_iter()
                .zip(reps)
                .map(|(g, rep)| {
                    let spread = g.iter().map(|m| m.1.distance(&rep)).fold(0.0, f64::max);
                    Cluster {
                        representative: rep,
                        members: g.len(),
                        spread,
                        paths: g.iter().map(|m| m.0).collect(),
                    }
                })
                .collect();
        }
    }
}

/// Is `½ d²f(x̄|v̄)` (the verdict's form) a member of the bundle?
pub fn quad_bundle_contains_d2(report: &BundleReport, verdict: &GtdVerdict) -> Result<bool> {
    match (&verdict.decision, &verdict.form) {
        (Decision::Gtd, Some(q)) => Ok(report.contains(q)),
        (d, _) => Err(Error::argument(format!("bundle membership of d²f needs a gtd verdict, got {d:?}"))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SumRuleReport {
    pub holds: bool,
    pub sum_bundle: BundleReport,
    pub shifted: Vec<GeneralizedQuadraticForm>,
}

/// `quad(f+g)(x̄|∇f(x̄)+v̄)` against `½q_{∇²f(x̄)} + quad g(x̄|v̄)`.
pub fn sum_rule_bundle_report(
    smooth: &FunctionOracle,
    g: &FunctionOracle,
    pair_g: &PrimalDualPair,
    lambda: f64,
    r_level: f64,
    schedule: &SequenceSchedule,
) -> Result<SumRuleReport> {
    let h = smooth
        .hess(&pair_g.x)?
        .ok_or_else(|| Error::capability(format!("{} has no Hessian at x̄", smooth.label())))?;
    let df = smooth
        .grad(&pair_g.x)?
        .ok_or_else(|| Error::capability(format!("{} has no gradient at x̄", smooth.label())))?;
    let fg = smooth.smooth_plus(g)?;
    let pair = PrimalDualPair::new(&fg, pair_g.x.clone(), df + &pair_g.v)?;
    let base = quad_bundle(g, pair_g, lambda, r_level, schedule, true)?;
    let r_sum = r_level + (-h.min_eigenvalue()).max(0.0);
    let lam_sum = if lambda * r_sum < 1.0 { lambda } else { 0.5 / r_sum };
    let sum_bundle = quad_bundle(&fg, &pair, lam_sum, r_sum, schedule, true)?;
    let shifted: Vec<GeneralizedQuadraticForm> =
        base.forms().into_iter().map(|q| q.add_quadratic(&h)).collect::<Result<_>>()?;
    let holds = !shifted.is_empty() && sum_bundle.matches(&shifted);
    Ok(SumRuleReport { holds, sum_bundle, shifted })
}

pub fn sum_rule_bundle_check(
    smooth: &FunctionOracle,
    g: &FunctionOracle,
    pair_g: &PrimalDualPair,
    lambda: f64,
    r_level: f64,
    schedule: &SequenceSchedule,
) -> Result<bool> {
    Ok(sum_rule_bundle_report(smooth, g, pair_g, lambda, r_level, schedule)?.holds)
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianCluster {
    pub representative: SymMatrix,
    pub members: usize,
    pub spread: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianBundle {
    pub clusters: Vec<HessianCluster>,
    pub diagnostics: Vec<String>,
}

/// Limits of finite-difference Hessians of `f` along the schedule's radial
/// paths (plus the constant path at `x̄`), clustered in Frobenius distance
/// at `1e-3 (1 + |H|)`.
pub fn hessian_bundle(oracle: &FunctionOracle, x_bar: &Vector, schedule: &SequenceSchedule) -> Result<HessianBundle> {
    schedule.validate()?;
    if !oracle.has_grad() {
        return Err(Error::capability(format!("{} has no gradient", oracle.label())));
    }
    if x_bar.len() != oracle.dim() || schedule.dim() != oracle.dim() {
        return Err(Error::argument("schedule, point and oracle dimensions differ"));
    }
    let grad = |u: &Vector| -> Result<Vector> {
        oracle
            .grad(u)?
            .ok_or_else(|| Error::NotDifferentiable(format!("no gradient at {:?}", u.as_slice())))
    };
    let probe = |x: &Vector, cfg: &ProbeConfig| -> Result<Option<SymMatrix>> {
        match jacobian_probe(&grad, x, cfg) {
            Ok(p) if p.converged => Ok(p.limit),
            Ok(_) | Err(Error::NotDifferentiable(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut dirs: Vec<Option<Vector>> = vec![None];
    dirs.extend(schedule.approach_dirs.iter().map(|d| Some(Vector::from_column_slice(d))));
    let radii = schedule.radii();
    let results: Vec<(String, Option<SymMatrix>)> = dirs
        .par_iter()
        .map(|d| -> Result<(String, Option<SymMatrix>)> {
            match d {
                None => Ok(("constant path".into(), probe(x_bar, &schedule.probe)?)),
                Some(d) => {
                    let mut hs = Vec::new();
                    for &r in &radii {
                        if let Some(h) = probe(&(x_bar + d * r), &schedule.probe_at(r))? {
                            hs.push(h);
                        }
                    }
                    let label = format!("path {:?}", d.as_slice());
                    if hs.len() < 3 {
                        return Ok((format!("{label}: {} converged probes", hs.len()), None));
                    }
                    Ok((label, matrix_sequence_limit(&hs, limit_tol(schedule.cluster_eps))))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut clusters: Vec<(Vec<SymMatrix>, SymMatrix)> = Vec::new();
    let mut diagnostics = Vec::new();
    for (label, h) in results {
        let Some(h) = h else {
            diagnostics.push(format!("{label}: no limit"));
            continue;
        };
        let eps = schedule.cluster_eps * (1.0 + h.frobenius());
        match clusters.iter_mut().find(|c| c.1.dist(&h) <= eps) {
            Some(c) => c.0.push(h),
            None => clusters.push((vec![h.clone()], h)),
        }
    }
    if clusters.is_empty() {
        diagnostics.push("no converged probe on any path; f may not be C^{1,1} near x̄".into());
    }
    let clusters = clusters
        .into_iter()
        .map(|(ms, first)| {
            let n = first.order();
            let mean = ms.iter().fold(Matrix::zeros(n, n), |acc, m| acc + m.matrix()) / ms.len() as f64;
            let rep = SymMatrix::new(mean).unwrap_or(first);
            let spread = ms.iter().map(|m| m.dist(&rep)).fold(0.0, f64::max);
            HessianCluster { representative: rep, members: ms.len(), spread }
        })
        .collect();
    Ok(HessianBundle { clusters, diagnostics })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Inclusion {
    /// Every `½q_H` lies in the quadratic bundle.
    pub included: bool,
    /// Some bundle element is not of the form `½q_H`.
    pub strict: bool,
}

/// Compares `{½q_H : H in the Hessian bundle}` with a quadratic bundle.
pub fn hessian_inclusion(hb: &HessianBundle, report: &BundleReport) -> Inclusion {
    let halves: Vec<GeneralizedQuadraticForm> = hb
        .clusters
        .iter()
        .map(|c| GeneralizedQuadraticForm::quadratic(c.representative.clone()))
        .collect();
    let included = halves.iter().all(|q| report.contains(q));
    let strict = report
        .elements
        .iter()
        .any(|c| halves.iter().all(|q| c.representative.distance(q) > report.cluster_eps));
    Inclusion { included, strict }
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    pub fraction: f64,
    pub targets: usize,
    pub finest_distance: f64,
    pub failures: Vec<Vec<f64>>,
}

/// Fraction of sampled localization points `(x, v)` that have a point of
/// `Ω_f` (a pair where the envelope is twice differentiable) within the
/// finest distance of the schedule.
pub fn omega_density_report(
    oracle: &FunctionOracle,
    loc: &AttentiveLocalization,
    lambda: f64,
    r_level: f64,
    n_targets: usize,
    schedule: &SequenceSchedule,
) -> Result<DensityReport> {
    check_lambda(lambda, r_level)?;
    schedule.validate()?;
    if !oracle.has_subgrad_sampler() {
        return Err(Error::capability(format!("{} has no subgradient sampler", oracle.label())));
    }
    let n = oracle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0xde75);
    let mut targets: Vec<PrimalDualPair> = vec![loc.center.clone()];
    let mut attempts = 0;
    while targets.len() < n_targets.max(1) && attempts < 200 * n_targets.max(1) {
        attempts += 1;
        let x = if attempts % 2 == 0 {
            loc.center.x.clone()
        } else {
            let g = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            &loc.center.x + g * (loc.eps / (n as f64).sqrt())
        };
        let u = Vector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
        let Some(v) = oracle.sample_subgradient(&x, &u)? else { continue };
        if let Ok(p) = PrimalDualPair::new(oracle, x, v) {
            if loc.contains_pair(&p)? {
                targets.push(p);
            }
        }
    }
    targets.truncate(n_targets.max(1));
    let d = *schedule.radii().last().expect("levels >= 4");
    let step = d * lambda / (2.0 * (1.0 + lambda));
    let hits: Vec<bool> = targets
        .par_iter()
        .map(|t| -> Result<bool> {
            let z = &t.x + &t.v * lambda;
            let mut offsets = vec![Vector::zeros(n)];
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut e = Vector::zeros(n);
                    e[i] = s * step;
                    offsets.push(e);
                }
            }
            for o in offsets {
                let zp = &z + o;
                let p = match prox(oracle, lambda, &zp) {
                    Ok(p) if !p.multi_valued => p,
                    Ok(_) | Err(Error::NotDifferentiable(_)) => continue,
                    Err(e) => return Err(e),
                };
                let xp = p.point()?.clone();
                let vp = (&zp - &xp) / lambda;
                if (&xp - &t.x).norm() + (&vp - &t.v).norm() > d {
                    continue;
                }
                let cfg = schedule.probe_at(step.max(1e-12));
                let pr = jacobian_probe(&|u: &Vector| envelope_gradient(oracle, lambda, u), &zp, &cfg)?;
                if pr.converged {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<_>>()?;
    let good = hits.iter().filter(|&&h| h).count();
    let failures = targets
        .iter()
        .zip(&hits)
        .filter(|(_, &h)| !h)
        .map(|(t, _)| t.x.iter().chain(t.v.iter()).copied().collect())
        .collect();
    Ok(DensityReport {
        fraction: good as f64 / targets.len() as f64,
        targets: targets.len(),
        finest_distance: d,
        failures,
    })
}

pub fn omega_density_probe(
    oracle: &FunctionOracle,
    loc: &AttentiveLocalization,
    lambda: f64,
    r_level: f64,
    n_targets: usize,
    schedule: &SequenceSchedule,
) -> Result<f64> {
    Ok(omega_density_report(oracle, loc, lambda, r_level, n_targets, schedule)?.fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1(a: f64) -> SymMatrix {
        SymMatrix::from_diagonal(&[a])
    }

    #[test]
    fn limits_of_geometric_sequences() {
        let seq: Vec<SymMatrix> = (0..12).map(|k| s1(3.0 + 0.6f64.powi(k))).collect();
        let h = matrix_sequence_limit(&seq, 1e-6).unwrap();
        assert!((h.matrix()[(0, 0)] - 3.0).abs() < 1e-9);
        let slow: Vec<SymMatrix> = (0..12).map(|k| s1(1.0 - 0.6f64.powi(k) + 0.3 * 0.36f64.powi(k))).collect();
        let h = matrix_sequence_limit(&slow, 1e-5).unwrap();
        assert!((h.matrix()[(0, 0)] - 1.0).abs() < 1e-5);
        let blow: Vec<SymMatrix> = (0..12).map(|k| s1(0.6f64.powi(-k) / 2.0)).collect();
        assert!(matrix_sequence_limit(&blow, 1e-6).is_none());
        let osc: Vec<SymMatrix> = (0..12).map(|k| s1(if k % 2 == 0 { 1.0 } else { -1.0 })).collect();
        assert!(matrix_sequence_limit(&osc, 1e-6).is_none());
        assert!(matrix_sequence_limit(&seq[..2], 1e-6).is_none());
    }

    #[test]
    fn downward_divergence() {
        let blow: Vec<f64> = (0..8).map(|k| -(0.6f64.powi(-k))).collect();
        assert!(diverges_down(&blow));
        let conv: Vec<f64> = (0..8).map(|k| -1.0 - 0.6f64.powi(k)).collect();
        assert!(!diverges_down(&conv));
        assert!(diverges_down(&[0.0, -2e6]));
        assert!(!diverges_down(&[-1.0, -2.0, -4.0]));
    }

    #[test]
    fn schedule_phases_and_radii() {
        let s = SequenceSchedule::new(1).with_sine_levels(&[0.0, 1.0, -0.5]);
        assert_eq!(s.phases.len(), 5);
        for th in &s.phases {
            let c = th.sin();
            assert!([0.0, 1.0, -0.5].iter().any(|l| (l - c).abs() < 1e-12));
        }
        let r = s.radii();
        assert_eq!(r.len(), 12);
        assert!((r[1] / r[0] - 0.6).abs() < 1e-15);
        let mut bad = SequenceSchedule::new(1);
        bad.rho = 1.0;
        assert!(matches!(bad.validate(), Err(Error::Argument(_))));
    }

    #[test]
    fn clustering_merges_and_separates() {
        let qs = [
            GeneralizedQuadraticForm::coefficient_1d(1.0),
            GeneralizedQuadraticForm::coefficient_1d(1.0 + 1e-5),
            GeneralizedQuadraticForm::indicator_origin(1),
            GeneralizedQuadraticForm::coefficient_1d(1.0 - 2e-5),
        ];
        let lim: Vec<(usize, &GeneralizedQuadraticForm)> = qs.iter().enumerate().collect();
        let cl = cluster_forms(&lim, CLUSTER_EPS);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].members, 3);
        assert_eq!(cl[0].paths, vec![0, 1, 3]);
        assert!(cl[0].spread <= CLUSTER_EPS);
        assert!(cl[0].representative.distance(&cl[1].representative) > CLUSTER_EPS);
        assert_eq!(cl[0].representative.coefficient(), Some(1.0));
    }

    #[test]
    fn continuum_needs_many_distinct_coefficients() {
        let qs: Vec<GeneralizedQuadraticForm> =
            (0..9).map(|k| GeneralizedQuadraticForm::coefficient_1d(-0.4 + 0.1 * k as f64)).collect();
        let lim: Vec<(usize, &GeneralizedQuadraticForm)> = qs.iter().enumerate().collect();
        let r = continuum_range(&lim, CLUSTER_EPS).unwrap();
        assert!((r[0] + 0.4).abs() < 1e-12 && (r[1] - 0.4).abs() < 1e-12);
        assert!(continuum_range(&lim[..7], CLUSTER_EPS).is_none());
    }

    #[test]
    fn hessian_bundle_of_a_square_and_a_huber_knee() {
        let sq = FunctionOracle::scalar("sq", |x| x * x)
            .with_grad(|x| Some(x * 2.0));
        let hb = hessian_bundle(&sq, &Vector::zeros(1), &SequenceSchedule::new(1)).unwrap();
        assert_eq!(hb.clusters.len(), 1);
        assert!((hb.clusters[0].representative.matrix()[(0, 0)] - 2.0).abs() < 1e-6);

        let lambda = 0.25;
        let huber = FunctionOracle::scalar("huber", move |z| {
            if z.abs() <= lambda { z * z / (2.0 * lambda) } else { z.abs() - lambda / 2.0 }
        })
        .with_grad(move |z| Some(z.map(|t| t.clamp(-lambda, lambda) / lambda)));
        let hb = hessian_bundle(&huber, &Vector::from_element(1, lambda), &SequenceSchedule::new(1)).unwrap();
        let mut hs: Vec<f64> = hb.clusters.iter().map(|c| c.representative.matrix()[(0, 0)]).collect();
        hs.sort_by(f64::total_cmp);
        assert_eq!(hs.len(), 2);
        assert!(hs[0].abs() < 1e-6 && (hs[1] - 1.0 / lambda).abs() < 1e-6, "{hs:?}");
    }

    #[test]
    fn lambda_out_of_range() {
        let sq = FunctionOracle::scalar("sq", |x| x * x).with_grad(|x| Some(x * 2.0));
        let p = PrimalDualPair::new(&sq, Vector::zeros(1), Vector::zeros(1)).unwrap();
        let s = SequenceSchedule::new(1);
        for (l, r) in [(0.0, 0.0), (0.5, 2.0), (-1.0, 0.0)] {
            assert!(matches!(quad_bundle(&sq, &p, l, r, &s, true), Err(Error::Argument(_))));
        }
        let nograd = FunctionOracle::scalar("abs", f64::abs);
        let q = PrimalDualPair::new(&nograd, Vector::zeros(1), Vector::zeros(1)).unwrap();
        let s = SequenceSchedule::new(1).with_mode(RouteMode::DirectRoute);
        assert!(matches!(quad_bundle(&nograd, &q, 0.1, 0.0, &s, true), Err(Error::Capability(_))));
    }
}
