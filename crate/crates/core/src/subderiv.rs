//! First- and second-order subderivatives as shrinking-window epi-limits,
//! critical cones, twice epi-differentiability, growth and s-convexity
//! certificates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{AttentiveLocalization, ExtReal, FunctionOracle, PrimalDualPair, Vector, CAP};
use crate::error::{Error, Result};

/// Relative agreement required between trailing windows.
pub const EST_TOL: f64 = 1e-3;
/// Tolerance of the critical-cone test, scaled by `1 + |w|`.
pub const CONE_TOL: f64 = 1e-3;
/// Radial scales added to every direction in directional sweeps.
pub const RADIAL_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

/// Schedules and sample sets for the shrinking-window estimators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpiGrid {
    pub t0: f64,
    pub t_rho: f64,
    pub t_levels: usize,
    pub delta0: f64,
    pub delta_rho: f64,
    pub delta_levels: usize,
    pub directions: Vec<Vec<f64>>,
    pub ball_samples: usize,
    pub seed: u64,
    pub est_tol: f64,
}

impl EpiGrid {
    /// Default schedules and the default direction set for `R^n`.
    pub fn new(n: usize) -> Self {
        EpiGrid {
            t0: 1e-1,
            t_rho: 0.5,
            t_levels: 20,
            delta0: 0.5,
            delta_rho: 0.5,
            delta_levels: 10,
            directions: default_directions(n, 64, 0),
            ball_samples: 32,
            seed: 0,
            est_tol: EST_TOL,
        }
    }

    pub fn with_directions(mut self, count: usize) -> Self {
        let n = self.dim();
        self.directions = default_directions(n, count, self.seed);
        self
    }

    pub fn dim(&self) -> usize {
        self.directions.first().map_or(1, Vec::len)
    }

    pub fn t_schedule(&self) -> Vec<f64> {
        (0..self.t_levels).map(|i| self.t0 * self.t_rho.powi(i as i32)).collect()
    }

    pub fn delta_schedule(&self) -> Vec<f64> {
        (0..self.delta_levels)
            .map(|j| self.delta0 * self.delta_rho.powi(j as i32))
            .collect()
    }

    pub fn direction_vectors(&self) -> Vec<Vector> {
        self.directions.iter().map(|d| Vector::from_column_slice(d)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !(ok(self.t0) && ok(self.delta0)) {
            return Err(Error::argument("schedule starts must be positive"));
        }
        if !(self.t_rho > 0.0 && self.t_rho < 1.0 && self.delta_rho > 0.0 && self.delta_rho < 1.0) {
            return Err(Error::argument("schedule ratios must lie in (0, 1)"));
        }
        if self.t_levels < 4 || self.delta_levels < 4 {
            return Err(Error::argument("schedules need at least 4 levels"));
        }
        let n = self.dim();
        if self.directions.iter().any(|d| d.len() != n) {
            return Err(Error::argument("directions must share a dimension"));
        }
        Ok(())
    }

    /// Unit-ball sample pattern (fixed across radii); the center is first.
    fn ball_pattern(&self, n: usize) -> Vec<Vector> {
        let mut pts = vec![Vector::zeros(n)];
        for i in 0..n {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            pts.push(e.clone());
            pts.push(-e);
        }
        if n == 1 {
            let m = self.ball_samples.max(2);
            for k in 0..m {
                pts.push(Vector::from_element(1, -1.0 + 2.0 * (k as f64 + 0.5) / m as f64));
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_ba11);
            for _ in 0..self.ball_samples {
                pts.push(uniform_in_ball(&mut rng, n));
            }
        }
        pts
    }
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let g = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        if g.norm() <= 1.0 {
            return g;
        }
    }
}

/// Deterministic unit directions: `{±1}` in 1-D, uniform angles in 2-D, a
/// seeded antipodally symmetric set plus `±e_i` in higher dimensions.
pub fn default_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count.max(4))
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count.max(4) as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out: Vec<Vec<f64>> = Vec::new();
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; n];
                    e[i] = s;
                    out.push(e);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf1b0_5eed);
            let half = count.saturating_sub(out.len()) / 2;
            for _ in 0..half {
                let g = Vector::from_fn(n, |_, _| {
                    let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen_range(0.0..1.0));
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                });
                let g = g.normalize();
                out.push(g.iter().copied().collect());
                out.push(g.iter().map(|x| -x).collect());
            }
            out
        }
    }
}

/// `(f(x + tw) - f(x) - t<v, w>) / (t²/2)`.
pub fn delta2(oracle: &FunctionOracle, x: &Vector, v: &Vector, t: f64, w: &Vector) -> Result<ExtReal> {
    if !(t > 0.0) {
        return Err(Error::argument(format!("t must be positive, got {t}")));
    }
    let fx = oracle.eval(x)?;
    let fx = fx
        .finite()
        .ok_or_else(|| Error::argument(format!("f(x) = {fx} is not finite")))?;
    Ok(quotient2(oracle, x, v, fx, t, w).0)
}

/// Second-order quotient plus an estimate of its rounding noise.
fn quotient2(oracle: &FunctionOracle, x: &Vector, v: &Vector, fx: f64, t: f64, w: &Vector) -> (ExtReal, f64) {
    if w.iter().all(|&c| c == 0.0) {
        return (ExtReal::ZERO, 0.0);
    }
    let xt = x + w * t;
    let tvw = t * v.dot(w);
    let half = 0.5 * t * t;
    match oracle.eval_unchecked(&xt) {
        ExtReal::Finite(ft) => {
            let q = (ft - fx - tvw) / half;
            let noise = 4.0 * f64::EPSILON * (ft.abs() + fx.abs() + tvw.abs()) / half;
            (ExtReal::from(q).clamp_cap(CAP), noise)
        }
        other => (other, 0.0),
    }
}

/// First-order quotient `(f(x + tw) - f(x)) / t` plus its rounding noise.
fn quotient1(oracle: &FunctionOracle, x: &Vector, fx: f64, t: f64, w: &Vector) -> (ExtReal, f64) {
    if w.iter().all(|&c| c == 0.0) {
        return (ExtReal::ZERO, 0.0);
    }
    match oracle.eval_unchecked(&(x + w * t)) {
        ExtReal::Finite(ft) => {
            let q = (ft - fx) / t;
            let noise = 4.0 * f64::EPSILON * (ft.abs() + fx.abs()) / t;
            (ExtReal::from(q).clamp_cap(CAP), noise)
        }
        other => (other, 0.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    PosInf,
    NegInf,
    Nonconvergent,
}

/// Window table of one estimate.
#[derive(Clone, Debug, Serialize)]
pub struct WindowTable {
    pub t_schedule: Vec<f64>,
    pub delta_schedule: Vec<f64>,
    /// `E_j`: min over `t <= t_{i_j}` and the `δ_j`-ball; windows whose
    /// samples all drown in rounding noise end the table.
    pub lower: Vec<ExtReal>,
    /// `U_j`: max over `t <= t_{i_j}` of the min over the `δ_j`-ball.
    pub upper: Vec<ExtReal>,
    /// `2 E_j - E_{j-1}` (linear ball bias removed); first entry repeats `E_0`.
    pub lower_extrapolated: Vec<ExtReal>,
    pub upper_extrapolated: Vec<ExtReal>,
    /// Min over the smallest ball, per t-level (`None` when all samples
    /// were dominated by rounding noise).
    pub finest_row: Vec<Option<ExtReal>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubderivEstimate {
    #[serde(serialize_with = "ser_vector")]
    pub direction: Vector,
    pub lower: ExtReal,
    pub upper: ExtReal,
    pub verdict: Verdict,
    pub lower_converged: bool,
    pub upper_converged: bool,
    pub windows: WindowTable,
}

pub(crate) fn ser_vector<S: serde::Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
    v.as_slice().serialize(s)
}

fn trailing_agree(seq: &[ExtReal], tol: f64) -> bool {
    if seq.len() < 3 {
        return false;
    }
    let tail = &seq[seq.len() - 3..];
    let vals: Option<Vec<f64>> = tail.iter().map(|v| v.finite()).collect();
    match vals {
        Some(v) => {
            let last = v[2];
            let scale = last.abs().max(1.0);
            v.iter().all(|a| (a - last).abs() <= tol * scale)
        }
        None => tail.iter().all(|v| *v == tail[2]),
    }
}

/// `±inf` when the finest-ball row keeps moving one way without slowing down.
fn blowup(row: &[Option<ExtReal>], tol: f64) -> Option<Verdict> {
    let vals: Vec<ExtReal> = row.iter().filter_map(|x| *x).collect();
    let last = *vals.last()?;
    match last {
        ExtReal::PosInf => return Some(Verdict::PosInf),
        ExtReal::NegInf => return Some(Verdict::NegInf),
        _ => {}
    }
    const K: usize = 6;
    if vals.len() < K {
        return None;
    }
    let tail: Option<Vec<f64>> = vals[vals.len() - K..].iter().map(|v| v.finite()).collect();
    let tail = tail?;
    let inc: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let up = inc.iter().all(|&d| d > 0.0);
    let down = inc.iter().all(|&d| d < 0.0);
    if !(up || down) {
        return None;
    }
    let steady = inc.windows(2).all(|w| w[1].abs() >= 0.9 * w[0].abs());
    let moved = (tail[K - 1] - tail[0]).abs() > tol * tail[K - 1].abs().max(1.0);
    (steady && moved).then_some(if up { Verdict::PosInf } else { Verdict::NegInf })
}

fn extrapolate(seq: &[ExtReal]) -> Vec<ExtReal> {
    let mut out = Vec::with_capacity(seq.len());
    for j in 0..seq.len() {
        if j == 0 {
            out.push(seq[0]);
            continue;
        }
        out.push(match (seq[j].finite(), seq[j - 1].finite()) {
            (Some(a), Some(b)) => ExtReal::from(2.0 * a - b).clamp_cap(CAP),
            _ => seq[j],
        });
    }
    out
}

type Quotient<'a> = dyn Fn(f64, &Vector) -> (ExtReal, f64) + Sync + 'a;

/// Shrinking-window table for an arbitrary difference quotient.
fn window_estimate(quot: &Quotient<'_>, w: &Vector, grid: &EpiGrid) -> Result<SubderivEstimate> {
    grid.validate()?;
    let n = w.len();
    let ts = grid.t_schedule();
    let ds = grid.delta_schedule();
    let pattern = grid.ball_pattern(n);
    let (ni, nj) = (ts.len(), ds.len());
    // cell[j][i] = min over the δ_j-ball samples of the quotient at t_i.
    let cells: Vec<Option<ExtReal>> = (0..nj * ni)
        .into_par_iter()
        .map(|idx| {
            let (j, i) = (idx / ni, idx % ni);
            let mut best: Option<ExtReal> = None;
            for p in &pattern {
                let wp = w + p * ds[j];
                let (q, noise) = quot(ts[i], &wp);
                let usable = match q.finite() {
                    Some(val) => noise <= 1e-6 * (1.0 + val.abs()),
                    None => true,
                };
                if usable {
                    best = Some(best.map_or(q, |b| b.min(q)));
                }
            }
            best
        })
        .collect();
    let cell = |j: usize, i: usize| cells[j * ni + i];
    let mut lower = Vec::with_capacity(nj);
    let mut upper = Vec::with_capacity(nj);
    for j in 0..nj {
        let i0 = j * ni / nj;
        let mut lo: Option<ExtReal> = None;
        let mut hi: Option<ExtReal> = None;
        for i in i0..ni {
            // Balls are nested: the δ_j ball contains every smaller one.
            let mut row_min: Option<ExtReal> = None;
            for jj in j..nj {
                if let Some(c) = cell(jj, i) {
                    row_min = Some(row_min.map_or(c, |b| b.min(c)));
                }
            }
            if let Some(r) = row_min {
                lo = Some(lo.map_or(r, |b| b.min(r)));
                hi = Some(hi.map_or(r, |b| b.max(r)));
            }
        }
        // Every sample of this and finer windows drowned in rounding noise.
        let (Some(lo), Some(hi)) = (lo, hi) else { break };
        lower.push(lo);
        upper.push(hi);
    }
    if lower.is_empty() {
        lower.push(ExtReal::PosInf);
        upper.push(ExtReal::PosInf);
    }
    let finest_row: Vec<Option<ExtReal>> = (0..ni).map(|i| cell(nj - 1, i)).collect();
    let lx = extrapolate(&lower);
    let ux = extrapolate(&upper);
    let tol = grid.est_tol;
    let lower_converged = trailing_agree(&lx, tol);
    let upper_converged = trailing_agree(&ux, tol);
    let (verdict, lo, hi) = match blowup(&finest_row, tol) {
        Some(Verdict::PosInf) => (Verdict::PosInf, ExtReal::PosInf, ExtReal::PosInf),
        Some(Verdict::NegInf) => (Verdict::NegInf, ExtReal::NegInf, ExtReal::NegInf),
        _ => {
            let lo = *lx.last().expect("at least one window");
            let hi = *ux.last().expect("at least one window");
            let v = if lower_converged {
                match lo {
                    ExtReal::Finite(_) => Verdict::Finite,
                    ExtReal::PosInf => Verdict::PosInf,
                    ExtReal::NegInf => Verdict::NegInf,
                }
            } else {
                Verdict::Nonconvergent
            };
            (v, lo, hi)
        }
    };
    Ok(SubderivEstimate {
        direction: w.clone(),
        lower: lo,
        upper: hi,
        verdict,
        lower_converged,
        upper_converged,
        windows: WindowTable {
            t_schedule: ts,
            delta_schedule: ds[..lower.len()].to_vec(),
            lower,
            upper,
            lower_extrapolated: lx,
            upper_extrapolated: ux,
            finest_row,
        },
    })
}

/// Second-order subderivative `d²f(x̄|v̄)(w)` by shrinking windows.
pub fn d2_estimate(
    oracle: &FunctionOracle,
    pair: &PrimalDualPair,
    w: &Vector,
    grid: &EpiGrid,
) -> Result<SubderivEstimate> {
    check_dims(oracle, &pair.x, w)?;
    let q = |t: f64, wp: &Vector| quotient2(oracle, &pair.x, &pair.v, pair.fx, t, wp);
    window_estimate(&q, w, grid)
}

fn check_dims(oracle: &FunctionOracle, x: &Vector, w: &Vector) -> Result<()> {
    if x.len() != oracle.dim() || w.len() != oracle.dim() {
        return Err(Error::argument(format!(
            "expected vectors in R^{}, got lengths {} and {}",
            oracle.dim(),
            x.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Full estimate for the first-order subderivative `df(x)(w)`.
pub fn d1_estimate_full(oracle: &FunctionOracle, x: &Vector, w: &Vector, grid: &EpiGrid) -> Result<SubderivEstimate> {
    check_dims(oracle, x, w)?;
    let fx = oracle.eval(x)?;
    let fx = fx
        .finite()
        .ok_or_else(|| Error::argument(format!("f(x) = {fx} is not finite")))?;
    let q = |t: f64, wp: &Vector| quotient1(oracle, x, fx, t, wp);
    window_estimate(&q, w, grid)
}

/// `df(x)(w)`: the shrinking-window lower value.
pub fn d1_estimate(oracle: &FunctionOracle, x: &Vector, w: &Vector, grid: &EpiGrid) -> Result<ExtReal> {
    Ok(d1_estimate_full(oracle, x, w, grid)?.lower)
}

/// Is `w` in the critical cone `{w : df(x)(w) = <v, w>}`?
pub fn critical_cone_test(
    oracle: &FunctionOracle,
    x: &Vector,
    v: &Vector,
    w: &Vector,
    grid: &EpiGrid,
) -> Result<bool> {
    let est = d1_estimate_full(oracle, x, w, grid)?;
    match est.verdict {
        Verdict::Nonconvergent => Err(Error::Indeterminate(format!(
            "first-order subderivative did not stabilize in direction {:?}",
            w.as_slice()
        ))),
        Verdict::PosInf | Verdict::NegInf => Ok(false),
        Verdict::Finite => {
            let d1 = est.lower.to_f64();
            Ok((d1 - v.dot(w)).abs() <= CONE_TOL * (1.0 + w.norm()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriVerdict {
    Yes,
    No,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpiDiffReport {
    pub verdict: TriVerdict,
    pub table: Vec<SubderivEstimate>,
}

/// Direction set of a sweep: `{0}` plus every grid direction at each radial scale.
pub fn sweep_directions(grid: &EpiGrid) -> Vec<Vector> {
    let n = grid.dim();
    let mut out = vec![Vector::zeros(n)];
    for d in grid.direction_vectors() {
        for s in RADIAL_SCALES {
            out.push(&d * s);
        }
    }
    out
}

pub fn d2_sweep(oracle: &FunctionOracle, pair: &PrimalDualPair, grid: &EpiGrid) -> Result<Vec<SubderivEstimate>> {
    sweep_directions(grid)
        .par_iter()
        .map(|w| d2_estimate(oracle, pair, w, grid))
        .collect()
}

fn lower_upper_agree(e: &SubderivEstimate, tol: f64) -> Option<bool> {
    match (e.lower, e.upper) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => {
            if !(e.lower_converged && e.upper_converged) {
                return None;
            }
            Some((a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0))
        }
        (a, b) if a == b => Some(true),
        _ => match e.verdict {
            Verdict::PosInf | Verdict::NegInf => Some(true),
            _ => None,
        },
    }
}

/// Yes iff every sweep direction has matching lower and upper estimates.
pub fn twice_epi_diff_test(oracle: &FunctionOracle, pair: &PrimalDualPair, grid: &EpiGrid) -> Result<EpiDiffReport> {
    let table = d2_sweep(oracle, pair, grid)?;
    Ok(epi_diff_from_table(table, grid.est_tol))
}

pub fn epi_diff_from_table(table: Vec<SubderivEstimate>, tol: f64) -> EpiDiffReport {
    let mut any_gap = false;
    let mut any_unknown = false;
    for e in &table {
        match (e.verdict, lower_upper_agree(e, tol)) {
            (Verdict::Nonconvergent, _) | (_, None) => any_unknown = true,
            (_, Some(false)) => any_gap = true,
            (_, Some(true)) => {}
        }
    }
    let verdict = if any_gap {
        TriVerdict::No
    } else if any_unknown {
        TriVerdict::Indeterminate
    } else {
        TriVerdict::Yes
    };
    EpiDiffReport { verdict, table }
}

/// Points of the closed ball `B(c, radius)`: radial lines along the default
/// directions plus seeded uniform samples.
pub fn ball_points(c: &Vector, radius: f64, samples: usize, seed: u64) -> Vec<Vector> {
    let n = c.len();
    let mut pts = Vec::new();
    let radii: Vec<f64> = (0..24).map(|k| radius * 0.7f64.powi(k)).collect();
    for d in default_directions(n, 64, seed) {
        let d = Vector::from_vec(d);
        for &r in &radii {
            pts.push(c + &d * r);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba11);
    for _ in 0..samples {
        pts.push(c + uniform_in_ball(&mut rng, n) * radius);
    }
    pts
}

/// Second-order growth `f(x) >= f(x̄) + <v̄, x - x̄> + (κ/2)|x - x̄|²` on a
/// sample of `B(x̄, radius)`. The slack is `1e-9 |x - x̄|²`.
pub fn growth_check(oracle: &FunctionOracle, pair: &PrimalDualPair, kappa: f64, radius: f64, samples: usize) -> Result<bool> {
    if !(radius > 0.0) {
        return Err(Error::argument("radius must be positive"));
    }
    let pts = ball_points(&pair.x, radius, samples, 17);
    let ok = pts.par_iter().all(|x| {
        let d = x - &pair.x;
        let r2 = d.norm_squared();
        let rhs = pair.fx + pair.v.dot(&d) + 0.5 * kappa * r2;
        match oracle.eval_unchecked(x) {
            ExtReal::PosInf => true,
            ExtReal::NegInf => false,
            ExtReal::Finite(fx) => fx >= rhs - 1e-9 * r2,
        }
    });
    Ok(ok)
}

/// Sampled variational s-convexity inequality over a localization.
pub fn svarconv_certificate(
    oracle: &FunctionOracle,
    loc: &AttentiveLocalization,
    s: f64,
    radius: f64,
    graph_samples: &[PrimalDualPair],
) -> Result<bool> {
    for p in graph_samples {
        if !loc.contains_pair(p)? {
            return Err(Error::argument(format!(
                "sample ({:?}, {:?}) is outside the localization",
                p.x.as_slice(),
                p.v.as_slice()
            )));
        }
    }
    let pts = ball_points(&loc.center.x, radius, 256, 23);
    let ok = graph_samples.par_iter().all(|p| {
        pts.iter().all(|xp| {
            let d = xp - &p.x;
            let rhs = p.fx + p.v.dot(&d) + 0.5 * s * d.norm_squared();
            match oracle.eval_unchecked(xp) {
                ExtReal::PosInf => true,
                ExtReal::NegInf => false,
                ExtReal::Finite(f) => f >= rhs - 1e-9,
            }
        })
    });
    Ok(ok)
}
