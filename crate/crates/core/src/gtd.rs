//! Generalized twice differentiability: a direct fit of the second
//! subderivative and the envelope-Hessian route, plus numerical checks of
//! the envelope identity, the norm characterization and the sum rule.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::{ExtReal, FunctionOracle, PrimalDualPair, SymMatrix, Subspace, ThinSvd, Vector};
use crate::error::{Error, Result};
use crate::moreau::{envelope_hessian_probe, envelope_oracle, prox};
use crate::quadform::{gqf_from_envelope_hessian_tol, moreau_of_gqf, GeneralizedQuadraticForm, NUMERIC_RANK_TOL};
use crate::subderiv::{
    d2_estimate, d2_sweep, default_directions, twice_epi_diff_test, EpiGrid, SubderivEstimate, TriVerdict, Verdict,
};

/// Relative misfit allowed in the quadratic fit.
pub const FIT_TOL: f64 = 5e-2;
/// Graph-projector distance within which the two routes agree on a form.
pub const ROUTE_FORM_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Gtd,
    /// Twice epi-differentiable, but `d²f` is not a generalized quadratic form.
    EpiOnly,
    NotEpi,
    /// The envelope route's negative answer; it does not separate the two
    /// failure modes above.
    NotGtd,
    Indeterminate,
}

impl Decision {
    pub fn is_gtd(self) -> bool {
        self == Decision::Gtd
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    DirectFit,
    Moreau,
    Both,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionRow {
    pub direction: Vec<f64>,
    pub lower: ExtReal,
    pub upper: ExtReal,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Evidence {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epi_diff: Option<TriVerdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub directions: Vec<DirectionRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspace_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<serde_json::Value>,
}

/// `form` is `½ d²f(x̄|v̄)`, the normalization shared with quadratic bundles.
#[derive(Clone, Debug, Serialize)]
pub struct GtdVerdict {
    pub decision: Decision,
    pub form: Option<GeneralizedQuadraticForm>,
    pub route: Route,
    pub residual: f64,
    pub evidence: Evidence,
    /// Per-route verdicts when `route` is `both`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<GtdVerdict>,
}

fn rows(table: &[SubderivEstimate]) -> Vec<DirectionRow> {
    table
        .iter()
        .map(|e| DirectionRow {
            direction: e.direction.iter().copied().collect(),
            lower: e.lower,
            upper: e.upper,
            verdict: e.verdict,
            fitted: None,
        })
        .collect()
}

fn direct_verdict(decision: Decision, residual: f64, evidence: Evidence) -> GtdVerdict {
    GtdVerdict {
        decision,
        form: None,
        route: Route::DirectFit,
        residual,
        evidence,
        parts: Vec::new(),
    }
}

/// Checks that the directions with finite `d²f` form a linear subspace `L`.
fn structure(
    oracle: &FunctionOracle,
    pair: &PrimalDualPair,
    grid: &EpiGrid,
    table: &[SubderivEstimate],
) -> Result<std::result::Result<Subspace, String>> {
    let n = pair.dim();
    let nonzero: Vec<&SubderivEstimate> = table.iter().filter(|e| e.direction.norm() > 0.0).collect();
    let finite: Vec<&SubderivEstimate> = nonzero.iter().copied().filter(|e| e.verdict == Verdict::Finite).collect();
    let infinite: Vec<&SubderivEstimate> = nonzero.iter().copied().filter(|e| e.verdict == Verdict::PosInf).collect();
    for e in &finite {
        let neg = -&e.direction;
        let partner = nonzero.iter().find(|o| (&o.direction - &neg).norm() <= 1e-12 * (1.0 + neg.norm()));
        let finite_partner = match partner {
            Some(o) => o.verdict == Verdict::Finite,
            None => d2_estimate(oracle, pair, &neg, grid)?.verdict == Verdict::Finite,
        };
        if !finite_partner {
            return Ok(Err(format!(
                "finite directions are not closed under negation: {:?} is finite, its negative is not",
                e.direction.as_slice()
            )));
        }
    }
    let dirs: Vec<Vector> = finite.iter().map(|e| e.direction.clone()).collect();
    let l = Subspace::span(n, &dirs);
    for e in &infinite {
        if l.dist(&e.direction) <= 1e-6 * e.direction.norm() {
            return Ok(Err(format!(
                "infinite direction {:?} lies in the span of the finite ones",
                e.direction.as_slice()
            )));
        }
    }
    let units: Vec<&Vector> = finite
        .iter()
        .map(|e| &e.direction)
        .filter(|d| (d.norm() - 1.0).abs() < 1e-9)
        .collect();
    let mut sums = Vec::new();
    for i in 0..units.len() {
        for j in (i + 1)..units.len() {
            let s = units[i] + units[j];
            if s.norm() > 1e-6 && sums.len() < 16 {
                sums.push(s);
            }
        }
    }
    for s in &sums {
        if d2_estimate(oracle, pair, s, grid)?.verdict != Verdict::Finite {
            return Ok(Err(format!(
                "sum direction {:?} of finite directions is not finite",
                s.as_slice()
            )));
        }
    }
    Ok(Ok(l))
}

/// Symmetric `S` on `L` minimizing the misfit of `<B^T w, S B^T w>` to the
/// finite `d²f` values; returns `(S, max relative misfit, per-row fit)`.
fn fit_on_subspace(l: &Subspace, table: &[SubderivEstimate]) -> (SymMatrix, f64, Vec<Option<f64>>) {
    let m = l.dim();
    let b = l.basis();
    let idx: Vec<(usize, usize)> = (0..m).flat_map(|a| (a..m).map(move |c| (a, c))).collect();
    let data: Vec<(usize, Vector, f64)> = table
        .iter()
        .enumerate()
        .filter(|(_, e)| e.verdict == Verdict::Finite || e.direction.norm() == 0.0)
        .filter_map(|(i, e)| e.lower.finite().map(|v| (i, b.transpose() * &e.direction, v)))
        .collect();
    let mut s = DMatrix::zeros(m, m);
    if m > 0 && !data.is_empty() {
        let design = DMatrix::from_fn(data.len(), idx.len(), |r, k| {
            let (a, c) = idx[k];
            let y = &data[r].1;
            if a == c {
                y[a] * y[a]
            } else {
                2.0 * y[a] * y[c]
            }
        });
        let rhs = Vector::from_iterator(data.len(), data.iter().map(|d| d.2));
        let p = ThinSvd::new(&design).pseudo_inverse(1e-12) * rhs;
        for (k, &(a, c)) in idx.iter().enumerate() {
            s[(a, c)] = p[k];
            s[(c, a)] = p[k];
        }
    }
    let s = SymMatrix::new(s).unwrap_or_else(|_| SymMatrix::zeros(m));
    let mut fitted = vec![None; table.len()];
    let mut residual: f64 = 0.0;
    for (i, y, obs) in &data {
        let pred = if m == 0 { 0.0 } else { s.quad(y) };
        fitted[*i] = Some(pred);
        let w2 = table[*i].direction.norm_squared();
        let denom = if w2 > 0.0 { obs.abs().max(w2) } else { obs.abs().max(1.0) };
        residual = residual.max((pred - obs).abs() / denom);
    }
    (s, residual, fitted)
}

/// Decision from the second-order subderivative table alone.
pub fn gtd_check_direct(oracle: &FunctionOracle, pair: &PrimalDualPair, grid: &EpiGrid) -> Result<GtdVerdict> {
    grid.validate()?;
    if grid.dim() != oracle.dim() {
        return Err(Error::argument("grid directions do not match the oracle dimension"));
    }
    let report = twice_epi_diff_test(oracle, pair, grid)?;
    let mut ev = Evidence {
        epi_diff: Some(report.verdict),
        directions: rows(&report.table),
        ..Evidence::default()
    };
    match report.verdict {
        TriVerdict::No => return Ok(direct_verdict(Decision::NotEpi, f64::INFINITY, ev)),
        TriVerdict::Indeterminate => return Ok(direct_verdict(Decision::Indeterminate, f64::INFINITY, ev)),
        TriVerdict::Yes => {}
    }
    if report.table.iter().any(|e| e.lower.is_neg_inf()) {
        ev.structure_failure = Some("d²f takes the value -inf".into());
        return Ok(direct_verdict(Decision::EpiOnly, f64::INFINITY, ev));
    }
    let l = match structure(oracle, pair, grid, &report.table)? {
        Ok(l) => l,
        Err(why) => {
            ev.structure_failure = Some(why);
            return Ok(direct_verdict(Decision::EpiOnly, f64::INFINITY, ev));
        }
    };
    ev.subspace_dim = Some(l.dim());
    let (s, residual, fitted) = fit_on_subspace(&l, &report.table);
    for (row, f) in ev.directions.iter_mut().zip(fitted) {
        row.fitted = f;
    }
    if residual > FIT_TOL {
        ev.structure_failure = Some(format!("quadratic fit misfit {residual:.3e} exceeds {FIT_TOL}"));
        return Ok(direct_verdict(Decision::EpiOnly, residual, ev));
    }
    let b = l.basis();
    let a = SymMatrix::new(b * s.matrix() * b.transpose())?;
    let form = GeneralizedQuadraticForm::new(a, l)?;
    let mut v = direct_verdict(Decision::Gtd, residual, ev);
    v.form = Some(form);
    Ok(v)
}

fn check_levels(lambda: f64, r_level: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite() && r_level >= 0.0 && lambda * r_level < 1.0) {
        return Err(Error::argument(format!(
            "need 0 < lambda < 1/r, got lambda = {lambda}, r = {r_level}"
        )));
    }
    Ok(())
}

/// Decision from twice differentiability of `e_λ f` at `x̄ + λv̄`.
pub fn gtd_check_moreau(oracle: &FunctionOracle, pair: &PrimalDualPair, lambda: f64, r_level: f64) -> Result<GtdVerdict> {
    check_levels(lambda, r_level)?;
    let z = &pair.x + &pair.v * lambda;
    let p = prox(oracle, lambda, &z)?;
    if p.multi_valued {
        return Err(Error::ProxRegularity(format!(
            "proximal mapping is multi-valued at x̄ + λv̄ = {:?}",
            z.as_slice()
        )));
    }
    let xp = p.point()?;
    if (xp - &pair.x).norm() > 1e-6 * (1.0 + pair.x.norm()) {
        return Err(Error::ProxRegularity(format!(
            "P_λ f(x̄ + λv̄) = {:?} differs from x̄ = {:?}",
            xp.as_slice(),
            pair.x.as_slice()
        )));
    }
    let probe = envelope_hessian_probe(oracle, lambda, &z)?;
    let ev = Evidence {
        probe: Some(probe.record()),
        ..Evidence::default()
    };
    let mut v = GtdVerdict {
        decision: Decision::NotGtd,
        form: None,
        route: Route::Moreau,
        residual: if probe.cauchy_spread.is_finite() { probe.cauchy_spread } else { f64::INFINITY },
        evidence: ev,
        parts: Vec::new(),
    };
    if let (true, Some(h)) = (probe.converged, probe.limit.as_ref()) {
        v.form = Some(gqf_from_envelope_hessian_tol(h, lambda, NUMERIC_RANK_TOL)?);
        v.decision = Decision::Gtd;
        v.residual = probe.cauchy_spread / h.frobenius().max(1.0);
    }
    Ok(v)
}

/// Runs one or both routes. Disagreement between routes is `indeterminate`.
pub fn gtd_check(
    oracle: &FunctionOracle,
    pair: &PrimalDualPair,
    grid: &EpiGrid,
    lambda: f64,
    r_level: f64,
    route: Route,
) -> Result<GtdVerdict> {
    match route {
        Route::DirectFit => gtd_check_direct(oracle, pair, grid),
        Route::Moreau => gtd_check_moreau(oracle, pair, lambda, r_level),
        Route::Both => {
            let d = gtd_check_direct(oracle, pair, grid)?;
            let m = gtd_check_moreau(oracle, pair, lambda, r_level)?;
            let (decision, form) = match (&d.form, &m.form) {
                (Some(a), Some(b)) if a.distance(b) <= ROUTE_FORM_TOL => (Decision::Gtd, Some(b.clone())),
                (Some(_), Some(_)) => (Decision::Indeterminate, None),
                _ if d.decision.is_gtd() != m.decision.is_gtd() => (Decision::Indeterminate, None),
                _ if d.decision == Decision::Indeterminate => (Decision::Indeterminate, None),
                _ => (d.decision, None),
            };
            Ok(GtdVerdict {
                decision,
                form,
                route: Route::Both,
                residual: d.residual.max(m.residual),
                evidence: Evidence::default(),
                parts: vec![d, m],
            })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    pub direction: Vec<f64>,
    /// `e_λ[½ d²f](w)`.
    pub envelope_of_d2: ExtReal,
    /// `d²[½ e_λ f](x̄ + λv̄ | ½v̄)(w)`.
    pub d2_of_envelope: ExtReal,
    pub gap: ExtReal,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub max_abs_gap: ExtReal,
    pub rows: Vec<IdentityRow>,
}

fn gap(a: ExtReal, b: ExtReal) -> ExtReal {
    match (a, b) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite((a - b).abs()),
        (a, b) if a == b => ExtReal::ZERO,
        _ => ExtReal::PosInf,
    }
}

/// Both sides of `e_λ[½ d²f(x̄|v̄)] = d²[½ e_λ f](x̄ + λv̄ | ½v̄)` on the
/// sweep directions of `grid`.
pub fn envelope_identity_report(
    oracle: &FunctionOracle,
    pair: &PrimalDualPair,
    lambda: f64,
    r_level: f64,
    grid: &EpiGrid,
) -> Result<IdentityReport> {
    check_levels(lambda, r_level)?;
    let direct = gtd_check_direct(oracle, pair, grid)?;
    let q = match (direct.decision, direct.form) {
        (Decision::Gtd, Some(q)) => q,
        (d, _) => {
            return Err(Error::argument(format!(
                "envelope identity needs a gtd verdict, direct fit gave {d:?}"
            )))
        }
    };
    let qm = moreau_of_gqf(&q, lambda, r_level)?;
    let env = envelope_oracle(oracle, lambda)?;
    let half = FunctionOracle::new(oracle.dim(), format!("½{}", env.label()), move |x| {
        env.eval(x).and_then(|v| v.scale(0.5)).unwrap_or(ExtReal::PosInf)
    })?;
    let z = &pair.x + &pair.v * lambda;
    let hp = PrimalDualPair::new(&half, z, &pair.v * 0.5)?;
    let table = d2_sweep(&half, &hp, grid)?;
    let rows: Vec<IdentityRow> = table
        .iter()
        .map(|e| {
            let lhs = ExtReal::Finite(0.5 * qm.quad(&e.direction));
            IdentityRow {
                direction: e.direction.iter().copied().collect(),
                envelope_of_d2: lhs,
                d2_of_envelope: e.lower,
                gap: gap(lhs, e.lower),
            }
        })
        .collect();
    let max_abs_gap = rows.iter().map(|r| r.gap).max().unwrap_or(ExtReal::ZERO);
    Ok(IdentityReport { max_abs_gap, rows })
}

pub fn envelope_identity_check(
    oracle: &FunctionOracle,
    pair: &PrimalDualPair,
    lambda: f64,
    r_level: f64,
    grid: &EpiGrid,
) -> Result<f64> {
    Ok(envelope_identity_report(oracle, pair, lambda, r_level, grid)?.max_abs_gap.to_f64())
}

fn homogeneity_check(oracle: &FunctionOracle) -> Result<()> {
    let n = oracle.dim();
    let zero = oracle.eval(&Vector::zeros(n))?;
    if zero != ExtReal::ZERO {
        return Err(Error::argument(format!("{}: f(0) = {zero}, not a norm", oracle.label())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x40a1);
    for _ in 0..64 {
        let x = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let fx = oracle.eval(&x)?.to_f64();
        for s in [0.5, 2.0, 3.7] {
            let fs = oracle.eval(&(&x * s))?.to_f64();
            if !((fs - s * fx).abs() <= 1e-9 * (1.0 + (s * fx).abs())) {
                return Err(Error::argument(format!(
                    "{} is not positively homogeneous: f({s}·x) = {fs}, {s}·f(x) = {}",
                    oracle.label(),
                    s * fx
                )));
            }
        }
    }
    Ok(())
}

/// Sampled dual norm `sup { <v, x> : f(x) <= 1 }`.
pub fn dual_norm_sampled(oracle: &FunctionOracle, v: &Vector, samples: usize) -> Result<f64> {
    let n = oracle.dim();
    let mut dirs: Vec<Vector> = default_directions(n, 64, 0).into_iter().map(Vector::from_vec).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xd0a1);
    for _ in 0..samples {
        dirs.push(Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)));
    }
    if n == 1 || n == 2 {
        for i in 0..(1 << n) {
            dirs.push(Vector::from_fn(n, |k, _| if i >> k & 1 == 1 { 1.0 } else { -1.0 }));
        }
    }
    let mut best: f64 = 0.0;
    for x in dirs {
        if let Some(f) = oracle.eval(&x)?.finite() {
            if f > 0.0 {
                best = best.max(v.dot(&x) / f);
            }
        }
    }
    Ok(best)
}

/// Direct-route GTD decision for a norm at `(0, v)`.
pub fn norm_gtd_characterization(norm_oracle: &FunctionOracle, v: &Vector, grid: &EpiGrid) -> Result<bool> {
    homogeneity_check(norm_oracle)?;
    let pair = PrimalDualPair::new(norm_oracle, Vector::zeros(norm_oracle.dim()), v.clone())?;
    Ok(gtd_check_direct(norm_oracle, &pair, grid)?.decision.is_gtd())
}

/// Max gap between `d²(f+g)(x̄|∇f(x̄)+v̄)(w)` and
/// `<w, ∇²f(x̄)w> + d²g(x̄|v̄)(w)` over the sweep; `+inf` when only one side is
/// infinite.
pub fn sum_rule_check(
    smooth: &FunctionOracle,
    g: &FunctionOracle,
    pair_g: &PrimalDualPair,
    grid: &EpiGrid,
) -> Result<f64> {
    let h = smooth
        .hess(&pair_g.x)?
        .ok_or_else(|| Error::capability(format!("{} has no Hessian at x̄", smooth.label())))?;
    let df = smooth
        .grad(&pair_g.x)?
        .ok_or_else(|| Error::capability(format!("{} has no gradient at x̄", smooth.label())))?;
    let fg = smooth.smooth_plus(g)?;
    let pair = PrimalDualPair::new(&fg, pair_g.x.clone(), df + &pair_g.v)?;
    let lhs = d2_sweep(&fg, &pair, grid)?;
    let rhs = d2_sweep(g, pair_g, grid)?;
    let mut worst = ExtReal::ZERO;
    for (a, b) in lhs.iter().zip(&rhs) {
        let shifted = b.lower.add_finite(h.quad(&b.direction));
        worst = worst.max(gap(a.lower, shifted));
    }
    Ok(worst.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Matrix;

    fn v1(a: f64) -> Vector {
        Vector::from_element(1, a)
    }

    fn pair0(f: &FunctionOracle) -> PrimalDualPair {
        PrimalDualPair::new(f, v1(0.0), v1(0.0)).unwrap()
    }

    fn abs32() -> FunctionOracle {
        FunctionOracle::scalar("abs_3_2", |x| x.abs().powf(1.5))
            .with_grad(|x| Some(v1(1.5 * x[0].signum() * x[0].abs().sqrt())))
    }

    fn sq_sgn() -> FunctionOracle {
        FunctionOracle::scalar("sq_sgn", |x| x * x.abs())
            .with_grad(|x| Some(v1(2.0 * x[0].abs())))
            .with_prox_bound(0.5)
    }

    fn square() -> FunctionOracle {
        FunctionOracle::scalar("sq", |x| x * x)
            .with_grad(|x| Some(x * 2.0))
            .with_hess(|_| Some(SymMatrix::from_diagonal(&[2.0])))
            .with_prox(|l, x| vec![x / (1.0 + 2.0 * l)])
    }

    fn norm2() -> FunctionOracle {
        FunctionOracle::new(2, "euclid", |x: &Vector| ExtReal::Finite(x.norm()))
            .unwrap()
            .with_prox(|l, x| {
                let r = x.norm();
                vec![if r <= l { Vector::zeros(2) } else { x * (1.0 - l / r) }]
            })
    }

    fn linf() -> FunctionOracle {
        FunctionOracle::new(2, "linf", |x: &Vector| ExtReal::Finite(x.amax())).unwrap()
    }

    fn grid2() -> EpiGrid {
        EpiGrid::new(2).with_directions(16)
    }

    #[test]
    fn direct_route_examples() {
        let f = abs32();
        let v = gtd_check_direct(&f, &pair0(&f), &EpiGrid::new(1)).unwrap();
        assert_eq!(v.decision, Decision::Gtd);
        assert!(v.form.unwrap().is_indicator_origin());

        let f = sq_sgn();
        let v = gtd_check_direct(&f, &pair0(&f), &EpiGrid::new(1)).unwrap();
        assert_eq!(v.evidence.epi_diff, Some(TriVerdict::Yes));
        assert_eq!(v.decision, Decision::EpiOnly);

        let f = square();
        let v = gtd_check_direct(&f, &pair0(&f), &EpiGrid::new(1)).unwrap();
        assert_eq!(v.decision, Decision::Gtd);
        let c = v.form.unwrap().coefficient().unwrap();
        assert!((c - 1.0).abs() < 2e-3, "{c}");
    }

    #[test]
    fn moreau_route_examples() {
        let f = abs32();
        let v = gtd_check_moreau(&f, &pair0(&f), 0.1, 0.0).unwrap();
        assert_eq!(v.decision, Decision::Gtd);
        assert!(v.form.unwrap().is_indicator_origin());

        let f = sq_sgn();
        let v = gtd_check_moreau(&f, &pair0(&f), 0.1, 2.0).unwrap();
        assert_eq!(v.decision, Decision::NotGtd);

        let f = square();
        let v = gtd_check_moreau(&f, &pair0(&f), 0.1, 0.0).unwrap();
        let q = v.form.unwrap();
        assert!((q.coefficient().unwrap() - 1.0).abs() < 1e-6);
        let both = gtd_check(&f, &pair0(&f), &EpiGrid::new(1), 0.1, 0.0, Route::Both).unwrap();
        assert_eq!(both.decision, Decision::Gtd);
        assert_eq!(both.parts.len(), 2);
    }

    #[test]
    fn moreau_route_rejects_bad_levels_and_ties() {
        let f = square();
        assert_eq!(gtd_check_moreau(&f, &pair0(&f), 0.5, 2.0).unwrap_err().kind(), "argument");
        let negabs = FunctionOracle::scalar("negabs", |x| -x.abs());
        let p = PrimalDualPair::new(&negabs, v1(0.0), v1(0.0)).unwrap();
        assert_eq!(gtd_check_moreau(&negabs, &p, 0.1, 0.0).unwrap_err().kind(), "prox_regularity");
    }

    #[test]
    fn norm_characterization() {
        let g = grid2();
        assert!(norm_gtd_characterization(&norm2(), &Vector::zeros(2), &g).unwrap());
        assert!(norm_gtd_characterization(&norm2(), &Vector::from_vec(vec![0.5, 0.0]), &g).unwrap());
        assert!(!norm_gtd_characterization(&norm2(), &Vector::from_vec(vec![1.0, 0.0]), &g).unwrap());
        let v = Vector::from_vec(vec![0.5, 0.0]);
        assert!(norm_gtd_characterization(&linf(), &v, &g).unwrap());
        assert!((dual_norm_sampled(&linf(), &v, 256).unwrap() - 0.5).abs() < 1e-12);
        let sq = FunctionOracle::new(2, "sq", |x: &Vector| ExtReal::Finite(x.norm_squared())).unwrap();
        assert_eq!(norm_gtd_characterization(&sq, &Vector::zeros(2), &g).unwrap_err().kind(), "argument");
    }

    #[test]
    fn identity_examples() {
        let f = abs32().with_prox(|l, x| {
            let s = (-1.5 * l + (2.25 * l * l + 4.0 * x[0].abs()).sqrt()) / 2.0;
            vec![v1(x[0].signum() * s * s)]
        });
        for lambda in [0.1, 0.3] {
            let gap = envelope_identity_check(&f, &pair0(&f), lambda, 0.0, &EpiGrid::new(1)).unwrap();
            assert!(gap <= 1e-2, "abs_3_2 λ={lambda}: {gap}");
            let sq = square();
            let gap = envelope_identity_check(&sq, &pair0(&sq), lambda, 0.0, &EpiGrid::new(1)).unwrap();
            assert!(gap <= 1e-2, "sq λ={lambda}: {gap}");
        }
        let zero = FunctionOracle::scalar("zero", |_| 0.0).with_prox(|_, x| vec![x.clone()]);
        let gap = envelope_identity_check(&zero, &pair0(&zero), 0.3, 0.0, &EpiGrid::new(1)).unwrap();
        assert_eq!(gap, 0.0);
        assert_eq!(
            envelope_identity_check(&sq_sgn(), &pair0(&sq_sgn()), 0.1, 2.0, &EpiGrid::new(1)).unwrap_err().kind(),
            "argument"
        );
    }

    #[test]
    fn sum_rule_examples() {
        let g = abs32();
        let alpha_sq = |a: f64| {
            FunctionOracle::scalar("asq", move |x| a * x * x)
                .with_grad(move |x| Some(x * (2.0 * a)))
                .with_hess(move |_| Some(SymMatrix::from_diagonal(&[2.0 * a])))
        };
        let grid = EpiGrid::new(1);
        assert_eq!(sum_rule_check(&alpha_sq(0.7), &g, &pair0(&g), &grid).unwrap(), 0.0);
        let gap = sum_rule_check(&alpha_sq(0.0), &square(), &pair0(&square()), &grid).unwrap();
        assert!(gap <= 1e-3, "{gap}");
        let ind = FunctionOracle::scalar("ind", |x| if x == 0.0 { 0.0 } else { f64::INFINITY });
        assert_eq!(sum_rule_check(&alpha_sq(1.0), &ind, &pair0(&ind), &grid).unwrap(), 0.0);
        let no_hess = FunctionOracle::scalar("sq", |x| x * x).with_grad(|x| Some(x * 2.0));
        assert_eq!(sum_rule_check(&no_hess, &g, &pair0(&g), &grid).unwrap_err().kind(), "capability");
    }

    #[test]
    fn fit_recovers_a_two_dimensional_form() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let aa = a.clone();
        let f = FunctionOracle::new(2, "quad", move |x: &Vector| ExtReal::Finite(0.5 * x.dot(&(&aa * x)))).unwrap();
        let p = PrimalDualPair::new(&f, Vector::zeros(2), Vector::zeros(2)).unwrap();
        let v = gtd_check_direct(&f, &p, &grid2()).unwrap();
        assert_eq!(v.decision, Decision::Gtd);
        let q = v.form.unwrap();
        assert!(q.distance(&GeneralizedQuadraticForm::quadratic(SymMatrix::new(a).unwrap())) < 1e-3);
    }
}
