use super::{CaseFlags, D2Fn, ExampleCase, Expected, GrowthCase};
use crate::base::{ExtReal, FunctionOracle, PrimalDualPair, SymMatrix, Vector};
use crate::bundle::{RouteMode, SequenceSchedule};
use crate::error::{Error, Result};
use crate::quadform::GeneralizedQuadraticForm as Gqf;
use crate::subderiv::{EpiGrid, TriVerdict};

const NAMES: [&str; 15] = [
    "cubic_shift",
    "abs_3_2",
    "sq_sgn",
    "step_quad",
    "osc_quartic",
    "mixed_power",
    "neg_abs_3_2",
    "euclid_norm",
    "linf_norm",
    "indicator_origin",
    "zero",
    "quad_1",
    "quad_2",
    "quad_3",
    "quad_4",
];

pub fn corpus_names() -> &'static [&'static str] {
    &NAMES
}

pub fn corpus_get(name: &str) -> Result<ExampleCase> {
    match name {
        "cubic_shift" => Ok(cubic_shift()),
        "abs_3_2" => Ok(abs_3_2()),
        "sq_sgn" => Ok(sq_sgn()),
        "step_quad" => Ok(step_quad()),
        "osc_quartic" => Ok(osc_quartic()),
        "mixed_power" => Ok(mixed_power()),
        "neg_abs_3_2" => Ok(neg_abs_3_2()),
        "euclid_norm" => Ok(euclid_norm()),
        "linf_norm" => Ok(linf_norm()),
        "indicator_origin" => Ok(indicator_origin()),
        "zero" => Ok(zero()),
        _ => match name.strip_prefix("quad_").and_then(|n| n.parse::<usize>().ok()) {
            Some(n @ 1..=4) => Ok(quad_n(n)),
            _ => Err(Error::Lookup(format!(
                "no corpus entry named {name:?}; known: {}",
                NAMES.join(", ")
            ))),
        },
    }
}

fn v1(a: f64) -> Vector {
    Vector::from_element(1, a)
}

fn d1(f: impl Fn(f64) -> Option<f64> + Send + Sync + 'static) -> impl Fn(&Vector) -> Option<Vector> + Send + Sync {
    move |x: &Vector| f(x[0]).map(v1)
}

fn h1(f: impl Fn(f64) -> Option<f64> + Send + Sync + 'static) -> impl Fn(&Vector) -> Option<SymMatrix> + Send + Sync {
    move |x: &Vector| f(x[0]).map(|h| SymMatrix::from_diagonal(&[h]))
}

/// Graph of a single-valued gradient.
fn smooth_graph(oracle: &FunctionOracle) -> impl Fn(&Vector, &Vector) -> bool + Send + Sync {
    let o = oracle.clone();
    move |x: &Vector, v: &Vector| match o.grad(x) {
        Ok(Some(g)) => (g - v).norm() <= 1e-9 * (1.0 + v.norm()),
        _ => false,
    }
}

fn smooth_sampler(oracle: &FunctionOracle) -> impl Fn(&Vector, &Vector) -> Option<Vector> + Send + Sync {
    let o = oracle.clone();
    move |x: &Vector, _u: &Vector| o.grad(x).ok().flatten()
}

fn with_smooth_graph(o: FunctionOracle) -> FunctionOracle {
    let g = smooth_graph(&o);
    let s = smooth_sampler(&o);
    o.with_subgrad_graph(g).with_subgrad_sampler(s)
}

fn pair0(o: &FunctionOracle) -> PrimalDualPair {
    let n = o.dim();
    PrimalDualPair::new(o, Vector::zeros(n), Vector::zeros(n)).expect("0 is in the domain")
}

fn d2_delta0() -> D2Fn {
    D2Fn::new(|w| if w.norm() == 0.0 { ExtReal::ZERO } else { ExtReal::PosInf })
}

fn d2_quadratic(c: f64) -> D2Fn {
    D2Fn::new(move |w| ExtReal::Finite(c * w.norm_squared()))
}

fn grid_for(n: usize) -> EpiGrid {
    if n == 1 {
        EpiGrid::new(1)
    } else {
        EpiGrid::new(n).with_directions(16)
    }
}

fn expected(d2: D2Fn) -> Expected {
    Expected {
        d2,
        epi_diff: Some(TriVerdict::Yes),
        gtd: false,
        gtd_form: None,
        twice_diff: false,
        quad_bundle: None,
        quad_bundle_old: None,
        coefficient_range: None,
        hessian_bundle: None,
        growth: Vec::new(),
    }
}

fn case(name: &'static str, anchor: &'static str, oracle: FunctionOracle, flags: CaseFlags, expected: Expected, mode: RouteMode) -> ExampleCase {
    let n = oracle.dim();
    ExampleCase {
        name,
        anchor,
        text: None,
        base_pair: pair0(&oracle),
        oracle,
        flags,
        expected,
        lambda: 0.1,
        r_level: flags.prox_regular.unwrap_or(0.0),
        loc_eps: 0.25,
        schedule: SequenceSchedule::new(n).with_mode(mode),
        grid: grid_for(n),
    }
}

fn convex_flags() -> CaseFlags {
    CaseFlags {
        prox_regular: Some(0.0),
        subdiff_continuous: true,
        prox_bounded: true,
        ..CaseFlags::default()
    }
}

/// `x ↦ sgn(x) s²` with `s = (-1.5λ + sqrt(2.25λ² + 4|x|)) / 2`: the prox of `|x|^{3/2}`.
fn prox_abs32(lambda: f64, z: f64) -> f64 {
    let s = (-1.5 * lambda + (2.25 * lambda * lambda + 4.0 * z.abs()).sqrt()) / 2.0;
    z.signum() * s * s
}

fn cubic_shift() -> ExampleCase {
    let kappa = 1.0;
    let o = FunctionOracle::scalar("cubic_shift", move |x| x * x * x + 0.5 * kappa * x * x)
        .with_grad(d1(move |x| Some(3.0 * x * x + kappa * x)))
        .with_hess(h1(move |x| Some(6.0 * x + kappa)));
    let o = with_smooth_graph(o);
    let half = Gqf::quadratic(SymMatrix::from_diagonal(&[kappa]));
    let mut e = expected(d2_quadratic(kappa));
    e.gtd = true;
    e.gtd_form = Some(half.clone());
    e.twice_diff = true;
    e.quad_bundle = Some(vec![half.clone()]);
    e.quad_bundle_old = Some(vec![half]);
    e.hessian_bundle = Some(vec![SymMatrix::from_diagonal(&[kappa])]);
    e.growth = vec![
        GrowthCase { kappa, radius: 1e-1, holds: false },
        GrowthCase { kappa, radius: 1e-2, holds: false },
        GrowthCase { kappa, radius: 1e-3, holds: false },
        GrowthCase { kappa: kappa - 0.1, radius: 1e-2, holds: true },
    ];
    let flags = CaseFlags {
        prox_regular: Some(0.0),
        subdiff_continuous: true,
        c11: true,
        c2: true,
        ..CaseFlags::default()
    };
    let mut c = case(
        "cubic_shift",
        "x^3 + (κ/2)x^2 with κ = 1: d²f = κ|w|² at 0, yet no κ-growth on any ball",
        o,
        flags,
        e,
        RouteMode::DirectRoute,
    );
    c.text = Some("x^3 + x^2/2 on (-inf,inf)");
    c
}

fn abs_3_2() -> ExampleCase {
    let o = FunctionOracle::scalar("abs_3_2", |x| x.abs().powf(1.5))
        .with_grad(d1(|x| Some(1.5 * x.signum() * x.abs().sqrt())))
        .with_hess(h1(|x| (x != 0.0).then(|| 0.75 / x.abs().sqrt())))
        .with_prox(|l, z| vec![v1(prox_abs32(l, z[0]))]);
    let o = with_smooth_graph(o);
    let d0 = Gqf::indicator_origin(1);
    let mut e = expected(d2_delta0());
    e.gtd = true;
    e.gtd_form = Some(d0.clone());
    e.quad_bundle = Some(vec![d0.clone()]);
    e.quad_bundle_old = Some(vec![d0]);
    let flags = CaseFlags { c11: false, ..convex_flags() };
    let mut c = case(
        "abs_3_2",
        "|x|^{3/2}: C^1, not twice differentiable at 0, gtd with d²f = δ_{0}",
        o,
        flags,
        e,
        RouteMode::EnvelopeRoute,
    );
    c.text = Some("abs(x)^(3/2) on (-inf,inf)");
    c.schedule.levels = 24;
    c
}

fn sq_sgn() -> ExampleCase {
    let o = FunctionOracle::scalar("sq_sgn", |x| x * x.abs())
        .with_grad(d1(|x| Some(2.0 * x.abs())))
        .with_hess(h1(|x| (x != 0.0).then(|| 2.0 * x.signum())))
        .with_prox(|l, z| {
            let z = z[0];
            vec![v1(if z >= 0.0 { z / (1.0 + 2.0 * l) } else { z / (1.0 - 2.0 * l) })]
        })
        .with_prox_bound(0.5);
    let o = with_smooth_graph(o);
    let mut e = expected(D2Fn::new(|w| ExtReal::Finite(2.0 * w[0] * w[0].abs())));
    let qs = vec![Gqf::coefficient_1d(1.0), Gqf::coefficient_1d(-1.0)];
    e.quad_bundle = Some(qs.clone());
    e.quad_bundle_old = Some(qs);
    e.hessian_bundle = Some(vec![SymMatrix::from_diagonal(&[2.0]), SymMatrix::from_diagonal(&[-2.0])]);
    let flags = CaseFlags {
        prox_regular: Some(2.0),
        subdiff_continuous: true,
        c11: true,
        prox_bounded: true,
        ..CaseFlags::default()
    };
    let mut c = case(
        "sq_sgn",
        "x^2 sgn(x): twice epi-differentiable at 0 with d²f(w) = 2w|w|, not a generalized quadratic form",
        o,
        flags,
        e,
        RouteMode::EnvelopeRoute,
    );
    c.text = Some("x^2*sgn(x) on (-inf,inf)");
    c
}

fn step_quad() -> ExampleCase {
    let f = |x: f64| if x >= 0.0 { x * x } else { 1.0 };
    let o = FunctionOracle::scalar("step_quad", f)
        .with_grad(d1(|x| match x {
            x if x > 0.0 => Some(2.0 * x),
            x if x < 0.0 => Some(0.0),
            _ => None,
        }))
        .with_hess(h1(|x| match x {
            x if x > 0.0 => Some(2.0),
            x if x < 0.0 => Some(0.0),
            _ => None,
        }))
        .with_subgrad_graph(|x, v| {
            let (x, v) = (x[0], v[0]);
            let tol = 1e-9 * (1.0 + v.abs());
            if x > 0.0 {
                (v - 2.0 * x).abs() <= tol
            } else if x < 0.0 {
                v.abs() <= tol
            } else {
                v <= tol
            }
        })
        .with_subgrad_sampler(|x, u| {
            let x = x[0];
            Some(v1(if x > 0.0 {
                2.0 * x
            } else if x < 0.0 {
                0.0
            } else {
                let u = u[0].clamp(0.0, 1.0 - 1e-12);
                -u / (1.0 - u)
            }))
        })
        .with_prox(move |l, z| {
            let z = z[0];
            let right = z.max(0.0) / (1.0 + 2.0 * l);
            let vr = f(right) + (right - z).powi(2) / (2.0 * l);
            if z >= 0.0 || vr < 1.0 {
                vec![v1(right)]
            } else if vr > 1.0 {
                vec![v1(z)]
            } else {
                vec![v1(right), v1(z)]
            }
        })
        .with_special_points(vec![v1(0.0)]);
    let mut e = expected(D2Fn::new(|w| {
        if w[0] >= 0.0 { ExtReal::Finite(2.0 * w[0] * w[0]) } else { ExtReal::PosInf }
    }));
    let (q1, q0, d0) = (Gqf::coefficient_1d(1.0), Gqf::coefficient_1d(0.0), Gqf::indicator_origin(1));
    e.quad_bundle = Some(vec![q1.clone(), d0.clone()]);
    e.quad_bundle_old = Some(vec![q0, q1, d0]);
    e.hessian_bundle = Some(vec![SymMatrix::from_diagonal(&[0.0]), SymMatrix::from_diagonal(&[2.0])]);
    let flags = CaseFlags {
        prox_regular: Some(0.0),
        prox_bounded: true,
        ..CaseFlags::default()
    };
    let mut c = case(
        "step_quad",
        "x^2 on x ≥ 0 and 1 on x < 0: attentive and plain quadratic bundles differ at (0,0)",
        o,
        flags,
        e,
        RouteMode::Both,
    );
    c.text = Some("x^2 on [0,inf); 1 on (-inf,0)");
    c
}

/// Sine levels `c = -1, -0.9, ..., 1` for the oscillation-aware paths.
pub(crate) fn osc_levels() -> Vec<f64> {
    (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect()
}

fn osc_quartic() -> ExampleCase {
    let o = FunctionOracle::scalar("osc_quartic", |x| if x == 0.0 { 0.0 } else { x.powi(4) * (1.0 / x).sin() })
        .with_grad(d1(|x| {
            Some(if x == 0.0 { 0.0 } else { x * x * (-(1.0 / x).cos() + 4.0 * x * (1.0 / x).sin()) })
        }))
        .with_hess(h1(|x| {
            Some(if x == 0.0 {
                0.0
            } else {
                -6.0 * x * (1.0 / x).cos() + (12.0 * x * x - 1.0) * (1.0 / x).sin()
            })
        }));
    let o = with_smooth_graph(o);
    let zero = Gqf::coefficient_1d(0.0);
    let mut e = expected(d2_quadratic(0.0));
    e.gtd = true;
    e.gtd_form = Some(zero);
    e.twice_diff = true;
    e.coefficient_range = Some([-0.5, 0.5]);
    let flags = CaseFlags {
        prox_regular: Some(2.0),
        subdiff_continuous: true,
        c11: true,
        ..CaseFlags::default()
    };
    let mut c = case(
        "osc_quartic",
        "x^4 sin(1/x): twice differentiable at 0 with f''(0) = 0, quadratic bundle {q_[a] : a ∈ [-1/2, 1/2]}",
        o,
        flags,
        e,
        RouteMode::DirectRoute,
    );
    c.r_level = 2.0;
    c.schedule = c.schedule.with_sine_levels(&osc_levels());
    c.schedule.approach_dirs.clear();
    c
}

fn mixed_power() -> ExampleCase {
    let o = FunctionOracle::scalar("mixed_power", |x| if x < 0.0 { x * x } else { x.powf(1.5) })
        .with_grad(d1(|x| Some(if x < 0.0 { 2.0 * x } else { 1.5 * x.sqrt() })))
        .with_hess(h1(|x| match x {
            x if x < 0.0 => Some(2.0),
            x if x > 0.0 => Some(0.75 / x.sqrt()),
            _ => None,
        }))
        .with_prox(|l, z| {
            let z = z[0];
            vec![v1(if z < 0.0 { z / (1.0 + 2.0 * l) } else { prox_abs32(l, z) })]
        });
    let o = with_smooth_graph(o);
    let d0 = Gqf::indicator_origin(1);
    let mut e = expected(D2Fn::new(|w| if w[0] > 0.0 { ExtReal::PosInf } else { ExtReal::Finite(2.0 * w[0] * w[0]) }));
    let qs = vec![d0, Gqf::coefficient_1d(1.0)];
    e.quad_bundle = Some(qs.clone());
    e.quad_bundle_old = Some(qs);
    e.hessian_bundle = Some(vec![SymMatrix::from_diagonal(&[2.0])]);
    let mut c = case(
        "mixed_power",
        "x^2 on x < 0 and x^{3/2} on x ≥ 0: Hessian bundle {2} strictly inside the quadratic bundle",
        o,
        convex_flags(),
        e,
        RouteMode::EnvelopeRoute,
    );
    c.text = Some("x^2 on (-inf,0); x^(3/2) on [0,inf)");
    c.schedule.levels = 24;
    c
}

fn neg_abs_3_2() -> ExampleCase {
    let o = FunctionOracle::scalar("neg_abs_3_2", |x| -x.abs().powf(1.5))
        .with_grad(d1(|x| Some(-1.5 * x.signum() * x.abs().sqrt())))
        .with_hess(h1(|x| (x != 0.0).then(|| -0.75 / x.abs().sqrt())));
    let o = with_smooth_graph(o);
    let mut e = expected(D2Fn::new(|_| ExtReal::NegInf));
    e.epi_diff = None;
    e.quad_bundle = Some(Vec::new());
    e.quad_bundle_old = Some(Vec::new());
    let flags = CaseFlags {
        subdiff_continuous: true,
        prox_bounded: true,
        ..CaseFlags::default()
    };
    let mut c = case(
        "neg_abs_3_2",
        "-|x|^{3/2}: not prox-regular at 0, d²f = -∞ and the quadratic bundle is empty",
        o,
        flags,
        e,
        RouteMode::DirectRoute,
    );
    c.text = Some("-abs(x)^(3/2) on (-inf,inf)");
    c
}

fn euclid_norm() -> ExampleCase {
    let n = 2;
    let o = FunctionOracle::new(n, "euclid_norm", |x: &Vector| ExtReal::Finite(x.norm()))
        .expect("valid dimension")
        .with_grad(|x| (x.norm() > 0.0).then(|| x / x.norm()))
        .with_hess(|x| {
            let r = x.norm();
            (r > 0.0).then(|| {
                let u = x / r;
                SymMatrix::new((crate::base::Matrix::identity(x.len(), x.len()) - &u * u.transpose()) / r)
                    .expect("symmetric")
            })
        })
        .with_subgrad_graph(|x, v| {
            let r = x.norm();
            if r > 0.0 {
                (v - x / r).norm() <= 1e-9
            } else {
                v.norm() <= 1.0 + 1e-9
            }
        })
        .with_subgrad_sampler(|x, u| {
            let r = x.norm();
            if r > 0.0 {
                return Some(x / r);
            }
            let w = u.map(|a| 2.0 * a - 1.0);
            let m = w.norm().max(1.0);
            Some(w / m)
        })
        .with_prox(|l, z| {
            let r = z.norm();
            vec![if r <= l { Vector::zeros(z.len()) } else { z * (1.0 - l / r) }]
        });
    let d0 = Gqf::indicator_origin(n);
    let mut e = expected(d2_delta0());
    e.gtd = true;
    e.gtd_form = Some(d0.clone());
    e.quad_bundle = Some(vec![d0.clone()]);
    e.quad_bundle_old = Some(vec![d0]);
    case(
        "euclid_norm",
        "Euclidean norm on R^2: gtd at (0, v) exactly when |v| < 1",
        o,
        CaseFlags { norm: true, ..convex_flags() },
        e,
        RouteMode::EnvelopeRoute,
    )
}

/// Euclidean projection onto the unit ℓ1 ball.
fn project_l1_ball(y: &Vector) -> Vector {
    if y.lp_norm(1) <= 1.0 {
        return y.clone();
    }
    let mut a: Vec<f64> = y.iter().map(|t| t.abs()).collect();
    a.sort_by(|p, q| q.total_cmp(p));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &aj) in a.iter().enumerate() {
        cum += aj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if aj > t {
            theta = t;
        }
    }
    y.map(|t| t.signum() * (t.abs() - theta).max(0.0))
}

fn linf_norm() -> ExampleCase {
    let n = 2;
    let tol = 1e-9;
    let argmax = move |x: &Vector| -> Vec<usize> {
        let m = x.amax();
        (0..x.len()).filter(|&i| x[i].abs() >= m - tol * (1.0 + m)).collect()
    };
    let o = FunctionOracle::new(n, "linf_norm", |x: &Vector| ExtReal::Finite(x.amax()))
        .expect("valid dimension")
        .with_grad(move |x| {
            let a = argmax(x);
            (x.amax() > 0.0 && a.len() == 1).then(|| {
                let mut g = Vector::zeros(x.len());
                g[a[0]] = x[a[0]].signum();
                g
            })
        })
        .with_hess(move |x| {
            (x.amax() > 0.0 && argmax(x).len() == 1).then(|| SymMatrix::zeros(x.len()))
        })
        .with_subgrad_graph(move |x, v| {
            if x.amax() == 0.0 {
                return v.lp_norm(1) <= 1.0 + tol;
            }
            let a = argmax(x);
            if (v.lp_norm(1) - 1.0).abs() > tol {
                return false;
            }
            (0..x.len()).all(|i| {
                if a.contains(&i) {
                    v[i] * x[i].signum() >= -tol
                } else {
                    v[i].abs() <= tol
                }
            })
        })
        .with_subgrad_sampler(move |x, u| {
            let k = x.len();
            let mut v = Vector::zeros(k);
            if x.amax() == 0.0 {
                let mut budget = 1.0;
                for i in 0..k {
                    v[i] = (2.0 * u[i] - 1.0) * budget;
                    budget -= v[i].abs();
                }
                return Some(v);
            }
            let a = argmax(x);
            let total: f64 = a.iter().map(|&i| u[i] + 1e-3).sum();
            for &i in &a {
                v[i] = x[i].signum() * (u[i] + 1e-3) / total;
            }
            Some(v)
        })
        .with_prox(|l, z| vec![z - project_l1_ball(&(z / l)) * l]);
    let d0 = Gqf::indicator_origin(n);
    let mut e = expected(d2_delta0());
    e.gtd = true;
    e.gtd_form = Some(d0.clone());
    e.quad_bundle = Some(vec![d0.clone()]);
    e.quad_bundle_old = Some(vec![d0]);
    case(
        "linf_norm",
        "ℓ∞ norm on R^2: gtd at (0, v) exactly when v lies in the interior of the unit ℓ1 ball",
        o,
        CaseFlags { norm: true, ..convex_flags() },
        e,
        RouteMode::EnvelopeRoute,
    )
}

fn indicator_origin() -> ExampleCase {
    let n = 2;
    let o = FunctionOracle::new(n, "indicator_origin", |x: &Vector| {
        if x.norm() == 0.0 { ExtReal::ZERO } else { ExtReal::PosInf }
    })
    .expect("valid dimension")
    .with_subgrad_graph(|x, _v| x.norm() == 0.0)
    .with_subgrad_sampler(|x, u| (x.norm() == 0.0).then(|| u.map(|a| 4.0 * (a - 0.5))))
    .with_prox(|_, z| vec![Vector::zeros(z.len())])
    .with_special_points(vec![Vector::zeros(n)]);
    let d0 = Gqf::indicator_origin(n);
    let mut e = expected(d2_delta0());
    e.gtd = true;
    e.gtd_form = Some(d0.clone());
    e.quad_bundle = Some(vec![d0.clone()]);
    e.quad_bundle_old = Some(vec![d0]);
    case(
        "indicator_origin",
        "indicator of {0} in R^2: d²f = δ_{0} for every v",
        o,
        convex_flags(),
        e,
        RouteMode::EnvelopeRoute,
    )
}

fn zero() -> ExampleCase {
    let n = 2;
    let o = FunctionOracle::new(n, "zero", |_: &Vector| ExtReal::ZERO)
        .expect("valid dimension")
        .with_grad(|x| Some(Vector::zeros(x.len())))
        .with_hess(|x| Some(SymMatrix::zeros(x.len())))
        .with_prox(|_, z| vec![z.clone()]);
    let o = with_smooth_graph(o);
    let q = Gqf::quadratic(SymMatrix::zeros(n));
    let mut e = expected(d2_quadratic(0.0));
    e.gtd = true;
    e.gtd_form = Some(q.clone());
    e.twice_diff = true;
    e.quad_bundle = Some(vec![q.clone()]);
    e.quad_bundle_old = Some(vec![q]);
    e.hessian_bundle = Some(vec![SymMatrix::zeros(n)]);
    e.growth = vec![GrowthCase { kappa: 0.0, radius: 1e-1, holds: true }];
    case(
        "zero",
        "the zero function on R^2",
        o,
        CaseFlags { c11: true, c2: true, ..convex_flags() },
        e,
        RouteMode::EnvelopeRoute,
    )
}

/// `x ↦ |x|²` on `R^n`, `1 <= n <= 4`.
pub fn quad_n(n: usize) -> ExampleCase {
    let name: &'static str = ["quad_1", "quad_2", "quad_3", "quad_4"][n.clamp(1, 4) - 1];
    let n = n.clamp(1, 4);
    let o = FunctionOracle::new(n, name, |x: &Vector| ExtReal::Finite(x.norm_squared()))
        .expect("valid dimension")
        .with_grad(|x| Some(x * 2.0))
        .with_hess(|x| Some(SymMatrix::scaled_identity(x.len(), 2.0)))
        .with_prox(|l, z| vec![z / (1.0 + 2.0 * l)]);
    let o = with_smooth_graph(o);
    let q = Gqf::quadratic(SymMatrix::scaled_identity(n, 2.0));
    let mut e = expected(d2_quadratic(2.0));
    e.gtd = true;
    e.gtd_form = Some(q.clone());
    e.twice_diff = true;
    e.quad_bundle = Some(vec![q.clone()]);
    e.quad_bundle_old = Some(vec![q]);
    e.hessian_bundle = Some(vec![SymMatrix::scaled_identity(n, 2.0)]);
    e.growth = vec![
        GrowthCase { kappa: 2.0, radius: 1e-1, holds: true },
        GrowthCase { kappa: 2.5, radius: 1e-1, holds: false },
    ];
    let mut c = case(
        name,
        "|x|² on R^n: d²f = 2|w|² and a singleton quadratic bundle",
        o,
        CaseFlags { c11: true, c2: true, ..convex_flags() },
        e,
        RouteMode::EnvelopeRoute,
    );
    if n == 1 {
        c.text = Some("x^2 on (-inf,inf)");
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_piecewise;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_name_resolves() {
        for name in corpus_names() {
            let c = corpus_get(name).unwrap();
            assert_eq!(&c.name, name);
            assert!(c.base_pair.x.iter().all(|t| *t == 0.0));
            c.schedule.validate().unwrap();
            c.grid.validate().unwrap();
        }
        assert!(matches!(corpus_get("nope"), Err(Error::Lookup(_))));
        assert!(matches!(corpus_get("quad_5"), Err(Error::Lookup(_))));
    }

    #[test]
    fn registry_examples() {
        let c = corpus_get("abs_3_2").unwrap();
        assert_eq!(c.expected.d2.eval(&v1(0.0)).to_f64(), 0.0);
        assert!(c.expected.d2.eval(&v1(0.5)).is_pos_inf());
        let s = corpus_get("step_quad").unwrap();
        let qs = s.expected.quad_bundle.unwrap();
        assert_eq!(qs.len(), 2);
        assert!(qs[0].approx_eq(&Gqf::coefficient_1d(1.0), 1e-12));
        assert!(qs[1].is_indicator_origin());
        let z = corpus_get("zero").unwrap();
        for w in z.grid.direction_vectors() {
            assert_eq!(z.expected.d2.eval(&w).to_f64(), 0.0);
        }
    }

    #[test]
    fn piecewise_texts_round_trip_and_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in corpus_names() {
            let c = corpus_get(name).unwrap();
            let Some(text) = c.text else { continue };
            let p = parse_piecewise(text).unwrap();
            assert_eq!(p.pretty_print(), text, "{name}");
            for _ in 0..1000 {
                let x: f64 = rng.gen_range(-3.0..3.0);
                let a = p.eval(x).to_f64();
                let b = c.oracle.eval(&v1(x)).unwrap().to_f64();
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{name} at {x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn graph_points_satisfy_subgradient_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in corpus_names() {
            let c = corpus_get(name).unwrap();
            let o = &c.oracle;
            if !o.has_subgrad_sampler() {
                continue;
            }
            let n = o.dim();
            let slack = |t: f64| match c.flags.prox_regular {
                Some(r) => r.max(8.0) * t,
                None => 2.0 * t.sqrt(),
            };
            let mut checked = 0;
            for attempt in 0..1000 {
                if checked == 100 {
                    break;
                }
                let x = if attempt % 4 == 0 {
                    Vector::zeros(n)
                } else {
                    Vector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5))
                };
                let u = Vector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
                let Some(v) = o.sample_subgradient(&x, &u).unwrap() else { continue };
                assert!(o.in_subgrad_graph(&x, &v).unwrap(), "{name}: sampled pair off the graph");
                let fx = o.eval(&x).unwrap().to_f64();
                for _ in 0..8 {
                    let d = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)).normalize();
                    for t in [1e-3, 1e-5] {
                        let ft = o.eval(&(&x + &d * t)).unwrap();
                        if let Some(ft) = ft.finite() {
                            let q = (ft - fx) / t;
                            assert!(
                                q >= v.dot(&d) - slack(t) - 1e-6,
                                "{name}: quotient {q} < <v,d> = {} at x = {:?}",
                                v.dot(&d),
                                x.as_slice()
                            );
                        }
                    }
                }
                checked += 1;
            }
            assert!(checked >= 25, "{name}: only {checked} graph points");
        }
    }

    #[test]
    fn gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in corpus_names() {
            let c = corpus_get(name).unwrap();
            let o = &c.oracle;
            if !o.has_grad() {
                continue;
            }
            let n = o.dim();
            for _ in 0..50 {
                let x = Vector::from_fn(n, |_, _| rng.gen_range(-0.9..0.9));
                let Some(g) = o.grad(&x).unwrap() else { continue };
                let h = 1e-6;
                for i in 0..n {
                    let mut e = Vector::zeros(n);
                    e[i] = h;
                    let fd = (o.eval(&(&x + &e)).unwrap().to_f64() - o.eval(&(&x - &e)).unwrap().to_f64()) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-4 * (1.0 + g[i].abs()), "{name} at {:?}", x.as_slice());
                }
            }
        }
    }

    #[test]
    fn closed_form_proxes_are_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for name in corpus_names() {
            let c = corpus_get(name).unwrap();
            let o = &c.oracle;
            if !o.has_prox() {
                continue;
            }
            let n = o.dim();
            for _ in 0..50 {
                let z = Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
                let l = c.lambda;
                let ps = o.prox_closed_form(l, &z).unwrap();
                let val = |u: &Vector| o.eval(u).unwrap().to_f64() + (u - &z).norm_squared() / (2.0 * l);
                let best = val(&ps[0]);
                for _ in 0..64 {
                    let u = &ps[0] + Vector::from_fn(n, |_, _| rng.gen_range(-0.05..0.05));
                    let vu = o.eval(&u).unwrap();
                    if let Some(fu) = vu.finite() {
                        assert!(fu + (&u - &z).norm_squared() / (2.0 * l) >= best - 1e-12, "{name}");
                    }
                }
            }
        }
    }

    #[test]
    fn l1_projection() {
        let p = project_l1_ball(&Vector::from_vec(vec![2.0, 0.5]));
        assert!((p - Vector::from_vec(vec![1.0, 0.0])).norm() < 1e-15);
        let p = project_l1_ball(&Vector::from_vec(vec![0.8, -0.6]));
        assert!((p - Vector::from_vec(vec![0.6, -0.4])).norm() < 1e-15);
        assert_eq!(osc_levels().len(), 21);
        assert!((osc_levels()[20] - 1.0).abs() < 1e-12);
    }
}
