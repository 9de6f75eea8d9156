use epibundle_core::bundle::*;
use epibundle_core::corpus::{corpus_get, corpus_names, ExampleCase};
use epibundle_core::gtd::gtd_check_direct;
use epibundle_core::quadform::GeneralizedQuadraticForm as Gqf;
use epibundle_core::{Error, FunctionOracle, SymMatrix};

fn run(c: &ExampleCase, attentive: bool) -> BundleReport {
    quad_bundle(&c.oracle, &c.base_pair, c.lambda, c.r_level, &c.schedule, attentive).unwrap()
}

fn scaled_square(a: f64) -> FunctionOracle {
    FunctionOracle::scalar("ax2", move |x| a * x * x)
        .with_grad(move |x| Some(x * (2.0 * a)))
        .with_hess(move |x| Some(SymMatrix::scaled_identity(x.len(), 2.0 * a)))
}

#[test]
fn step_quad_attentive_and_old() {
    let c = corpus_get("step_quad").unwrap();
    let att = run(&c, true);
    assert!(att.matches(c.expected.quad_bundle.as_ref().unwrap()), "{:?}", att.forms());
    let old = run(&c, false);
    assert!(old.matches(c.expected.quad_bundle_old.as_ref().unwrap()), "{:?}", old.forms());
    assert!(old.contains(&Gqf::coefficient_1d(0.0)));
    assert!(!att.contains(&Gqf::coefficient_1d(0.0)));
    assert!(att.rejected_paths.iter().any(|p| p.reason == RejectReason::AttentivenessFailed));
}

#[test]
fn osc_quartic_continuum() {
    let c = corpus_get("osc_quartic").unwrap();
    let r = run(&c, true);
    let [lo, hi] = r.coefficient_range.expect("continuum");
    assert!(lo >= -0.55 && hi <= 0.55 && lo <= -0.45 && hi >= 0.45, "{lo} {hi}");
    for e in &r.elements {
        let a = e.representative.coefficient().unwrap();
        assert!(a.abs() <= 0.55);
    }
}

#[test]
fn neg_abs_has_empty_bundle() {
    let c = corpus_get("neg_abs_3_2").unwrap();
    let r = run(&c, true);
    assert!(r.elements.is_empty());
    assert!(!r.rejected_paths.is_empty());
    assert!(r.rejected_paths.iter().all(|p| p.reason == RejectReason::NegInfBlowup));
}

#[test]
fn mixed_power_strict_inclusion() {
    let c = corpus_get("mixed_power").unwrap();
    let hb = hessian_bundle(&c.oracle, &c.base_pair.x, &c.schedule).unwrap();
    assert_eq!(hb.clusters.len(), 1);
    assert!((hb.clusters[0].representative.matrix()[(0, 0)] - 2.0).abs() < 1e-6);
    let r = run(&c, true);
    assert!(r.matches(c.expected.quad_bundle.as_ref().unwrap()), "{:?}", r.forms());
    let inc = hessian_inclusion(&hb, &r);
    assert!(inc.included && inc.strict);
}

#[test]
fn corpus_ground_truths() {
    for name in corpus_names() {
        let c = corpus_get(name).unwrap();
        let att = run(&c, true);
        let old = run(&c, false);
        if let Some(qs) = &c.expected.quad_bundle {
            assert!(att.matches(qs), "{name}: {:?}", att.forms());
        }
        if let Some(qs) = &c.expected.quad_bundle_old {
            assert!(old.matches(qs), "{name}: {:?}", old.forms());
        }
        if c.flags.prox_regular.is_some() {
            assert!(!att.elements.is_empty(), "{name}: empty bundle");
        }
        for e in &att.elements {
            assert!(old.contains(&e.representative), "{name}: attentive element missing from old");
            assert!(e.spread <= att.cluster_eps);
        }
        for (i, a) in att.elements.iter().enumerate() {
            for b in &att.elements[i + 1..] {
                assert!(a.representative.distance(&b.representative) > att.cluster_eps);
            }
        }
    }
}

#[test]
fn hessian_bundles_match_and_are_included() {
    for name in corpus_names() {
        let c = corpus_get(name).unwrap();
        let Some(expected) = &c.expected.hessian_bundle else { continue };
        let hb = hessian_bundle(&c.oracle, &c.base_pair.x, &c.schedule).unwrap();
        assert_eq!(hb.clusters.len(), expected.len(), "{name}");
        for h in expected {
            assert!(hb.clusters.iter().any(|k| k.representative.dist(h) <= 1e-3 * (1.0 + h.frobenius())), "{name}");
        }
        if c.flags.subdiff_continuous {
            let r = run(&c, true);
            let inc = hessian_inclusion(&hb, &r);
            assert!(inc.included, "{name}");
            if c.flags.c11 {
                assert!(!inc.strict, "{name}");
            }
        }
    }
}

#[test]
fn d2_membership() {
    for name in ["abs_3_2", "quad_1", "quad_2", "zero", "cubic_shift"] {
        let c = corpus_get(name).unwrap();
        let v = gtd_check_direct(&c.oracle, &c.base_pair, &c.grid).unwrap();
        let r = run(&c, true);
        assert!(quad_bundle_contains_d2(&r, &v).unwrap(), "{name}");
    }
    let c = corpus_get("sq_sgn").unwrap();
    let v = gtd_check_direct(&c.oracle, &c.base_pair, &c.grid).unwrap();
    let r = run(&c, true);
    assert!(matches!(quad_bundle_contains_d2(&r, &v), Err(Error::Argument(_))));
}

#[test]
fn sum_rule() {
    let g = corpus_get("step_quad").unwrap();
    for a in [0.5, 1.0] {
        let ok = sum_rule_bundle_check(&scaled_square(a), &g.oracle, &g.base_pair, g.lambda, g.r_level, &g.schedule).unwrap();
        assert!(ok, "alpha = {a}");
    }
    let g = corpus_get("abs_3_2").unwrap();
    assert!(sum_rule_bundle_check(&scaled_square(0.0), &g.oracle, &g.base_pair, g.lambda, g.r_level, &g.schedule).unwrap());
    let g = corpus_get("indicator_origin").unwrap();
    let f = corpus_get("quad_2").unwrap().oracle;
    assert!(sum_rule_bundle_check(&f, &g.oracle, &g.base_pair, g.lambda, g.r_level, &g.schedule).unwrap());
}

#[test]
fn omega_density() {
    for name in ["euclid_norm", "quad_1", "step_quad"] {
        let c = corpus_get(name).unwrap();
        let loc = c.localization().unwrap();
        let f = omega_density_probe(&c.oracle, &loc, c.lambda, c.r_level, 16, &c.schedule).unwrap();
        assert_eq!(f, 1.0, "{name}");
    }
}

#[test]
fn reports_are_deterministic() {
    for name in ["step_quad", "osc_quartic", "euclid_norm"] {
        let c = corpus_get(name).unwrap();
        let a = serde_json::to_string(&run(&c, true)).unwrap();
        let b = serde_json::to_string(&run(&c, true)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn random_phases_are_seeded() {
    let c = corpus_get("osc_quartic").unwrap();
    let mut s = c.schedule.clone();
    s.phases.clear();
    s.random_phases = 12;
    s.seed = 7;
    let a = quad_bundle(&c.oracle, &c.base_pair, c.lambda, c.r_level, &s, true).unwrap();
    let b = quad_bundle(&c.oracle, &c.base_pair, c.lambda, c.r_level, &s, true).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for e in &a.elements {
        assert!(e.representative.coefficient().unwrap().abs() <= 0.55);
    }
}
