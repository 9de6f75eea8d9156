use std::path::PathBuf;

use epibundle_core::bundle::{self, BundleReport, SequenceSchedule, RouteMode};
use epibundle_core::corpus::{corpus_get, corpus_names, ExampleCase};
use epibundle_core::gtd::{self, Route};
use epibundle_core::moreau::{jacobian_probe, ProbeConfig};
use epibundle_core::subderiv::{growth_check, twice_epi_diff_test, Verdict};
use epibundle_core::{Error, ExtReal, Result, Vector};
use serde_json::{json, Value};

use crate::report::{ext, failure, success, Outcome, EXIT_MISMATCH};

/// Relative tolerance for finite `d²f` values.
const D2_TOL: f64 = 2e-2;
/// Projector distance between a computed and an expected `½ d²f`.
const FORM_TOL: f64 = 1e-2;
/// Slack on coefficient ranges.
const RANGE_TOL: f64 = 5e-2;
const GROWTH_SAMPLES: usize = 4096;

struct Row {
    case: &'static str,
    check: String,
    expected: Value,
    computed: Value,
    ok: bool,
}

impl Row {
    fn to_json(&self) -> Value {
        json!({
            "case": self.case,
            "check": self.check,
            "expected": self.expected,
            "computed": self.computed,
            "ok": self.ok,
        })
    }
}

pub fn list(json_path: Option<PathBuf>) -> Outcome {
    let mut cases = Vec::new();
    for name in corpus_names() {
        match corpus_get(name) {
            Ok(c) => cases.push(json!({ "name": c.name, "dim": c.dim(), "anchor": c.anchor, "text": c.text })),
            Err(e) => return failure("corpus list", &e, json_path),
        }
    }
    success("corpus list", json!({}), 0, json!({ "cases": cases }), json!({}), json_path)
}

pub fn export(name: &str, json_path: Option<PathBuf>) -> Outcome {
    match corpus_get(name) {
        Ok(c) => success("corpus export", json!({ "name": name }), 0, c.export(), json!({}), json_path),
        Err(e) => failure("corpus export", &e, json_path),
    }
}

fn d2_matches(expected: ExtReal, lower: ExtReal, verdict: Verdict) -> bool {
    match expected {
        ExtReal::PosInf => verdict == Verdict::PosInf,
        ExtReal::NegInf => verdict == Verdict::NegInf,
        ExtReal::Finite(e) => lower.finite().is_some_and(|l| (l - e).abs() <= D2_TOL * e.abs().max(1.0)),
    }
}

fn forms(rep: &BundleReport) -> Value {
    serde_json::to_value(rep.forms()).expect("forms serialize")
}

fn bundle_rows(c: &ExampleCase, rows: &mut Vec<Row>) -> Result<()> {
    let pair = &c.base_pair;
    if let Some(exp) = &c.expected.quad_bundle {
        let rep = bundle::quad_bundle(&c.oracle, pair, c.lambda, c.r_level, &c.schedule, true)?;
        rows.push(Row {
            case: c.name,
            check: "quad_bundle".into(),
            expected: serde_json::to_value(exp).expect("forms serialize"),
            computed: forms(&rep),
            ok: rep.matches(exp),
        });
        if let Some([lo, hi]) = c.expected.coefficient_range {
            let got = rep.coefficient_range;
            let ok = got.is_some_and(|[a, b]| {
                a >= lo - RANGE_TOL && b <= hi + RANGE_TOL && a <= lo + RANGE_TOL && b >= hi - RANGE_TOL
            });
            rows.push(Row {
                case: c.name,
                check: "coefficient_range".into(),
                expected: json!([lo, hi]),
                computed: json!(got),
                ok,
            });
        }
        if let Some(hs) = &c.expected.hessian_bundle {
            let hb = bundle::hessian_bundle(&c.oracle, &pair.x, &c.schedule)?;
            let eps = c.schedule.cluster_eps;
            let ok = hb.clusters.len() == hs.len()
                && hs.iter().all(|h| {
                    hb.clusters
                        .iter()
                        .any(|k| k.representative.dist(h) <= eps * (1.0 + h.frobenius()))
                });
            rows.push(Row {
                case: c.name,
                check: "hessian_bundle".into(),
                expected: json!(hs.iter().map(|h| h.row_major()).collect::<Vec<_>>()),
                computed: json!(hb.clusters.iter().map(|k| k.representative.row_major()).collect::<Vec<_>>()),
                ok,
            });
            if c.flags.c11 {
                let inc = bundle::hessian_inclusion(&hb, &rep);
                rows.push(Row {
                    case: c.name,
                    check: "hessian_inclusion".into(),
                    expected: json!(true),
                    computed: json!(inc.included),
                    ok: inc.included,
                });
            }
        }
    }
    if let Some(exp) = &c.expected.quad_bundle_old {
        let rep = bundle::quad_bundle(&c.oracle, pair, c.lambda, c.r_level, &c.schedule, false)?;
        rows.push(Row {
            case: c.name,
            check: "quad_bundle_old".into(),
            expected: serde_json::to_value(exp).expect("forms serialize"),
            computed: forms(&rep),
            ok: rep.matches(exp),
        });
    }
    if c.expected.quad_bundle.is_none() && c.flags.prox_regular.is_some() {
        let rep = bundle::quad_bundle(&c.oracle, pair, c.lambda, c.r_level, &c.schedule, true)?;
        rows.push(Row {
            case: c.name,
            check: "quad_bundle_nonempty".into(),
            expected: json!(true),
            computed: json!(!rep.elements.is_empty()),
            ok: !rep.elements.is_empty(),
        });
    }
    Ok(())
}

fn case_rows(c: &ExampleCase) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let pair = &c.base_pair;

    let epi = twice_epi_diff_test(&c.oracle, pair, &c.grid)?;
    for e in &epi.table {
        let want = c.expected.d2.eval(&e.direction);
        rows.push(Row {
            case: c.name,
            check: format!("d2 w={:?}", e.direction.as_slice()),
            expected: json!(want),
            computed: json!({ "lower": e.lower, "upper": e.upper, "verdict": e.verdict }),
            ok: d2_matches(want, e.lower, e.verdict),
        });
    }
    if let Some(want) = c.expected.epi_diff {
        rows.push(Row {
            case: c.name,
            check: "twice_epi_differentiable".into(),
            expected: json!(want),
            computed: json!(epi.verdict),
            ok: epi.verdict == want,
        });
    }

    let route = if c.flags.prox_bounded && c.flags.prox_regular.is_some() { Route::Both } else { Route::DirectFit };
    let v = gtd::gtd_check(&c.oracle, pair, &c.grid, c.lambda, c.r_level, route)?;
    rows.push(Row {
        case: c.name,
        check: "gtd".into(),
        expected: json!(c.expected.gtd),
        computed: json!(v.decision),
        ok: v.decision.is_gtd() == c.expected.gtd,
    });
    if let Some(want) = &c.expected.gtd_form {
        let dist = v.form.as_ref().map(|q| q.distance(want));
        rows.push(Row {
            case: c.name,
            check: "gtd_form".into(),
            expected: json!(want),
            computed: json!({ "form": v.form, "distance": dist.map(ext) }),
            ok: dist.is_some_and(|d| d <= FORM_TOL),
        });
    }

    if c.oracle.has_grad() {
        let g = |u: &Vector| -> Result<Vector> {
            c.oracle
                .grad(u)?
                .ok_or_else(|| Error::NotDifferentiable(format!("no gradient at {:?}", u.as_slice())))
        };
        let converged = match jacobian_probe(&g, &pair.x, &ProbeConfig::default()) {
            Ok(p) => p.converged,
            Err(_) => false,
        };
        rows.push(Row {
            case: c.name,
            check: "twice_differentiable".into(),
            expected: json!(c.expected.twice_diff),
            computed: json!(converged),
            ok: converged == c.expected.twice_diff,
        });
    }

    for gc in &c.expected.growth {
        let holds = growth_check(&c.oracle, pair, gc.kappa, gc.radius, GROWTH_SAMPLES)?;
        rows.push(Row {
            case: c.name,
            check: format!("growth kappa={} radius={}", gc.kappa, gc.radius),
            expected: json!(gc.holds),
            computed: json!(holds),
            ok: holds == gc.holds,
        });
    }

    bundle_rows(c, &mut rows)?;
    Ok(rows)
}

fn schedule_mode(s: &SequenceSchedule) -> &'static str {
    match s.mode {
        RouteMode::EnvelopeRoute => "envelope",
        RouteMode::DirectRoute => "direct",
        RouteMode::Both => "both",
    }
}

pub fn run(names: &[String], all: bool, json_path: Option<PathBuf>) -> Outcome {
    let selected: Vec<String> = if all || names.is_empty() {
        corpus_names().iter().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    let mut cases = Vec::new();
    for name in &selected {
        match corpus_get(name) {
            Ok(c) => cases.push(c),
            Err(e) => return failure("corpus run", &e, json_path),
        }
    }
    let mut table = Vec::new();
    let mut summaries = Vec::new();
    let mut mismatches = 0usize;
    for c in &cases {
        let (rows, error) = match case_rows(c) {
            Ok(rows) => (rows, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        let bad = rows.iter().filter(|r| !r.ok).count() + usize::from(error.is_some());
        mismatches += bad;
        for r in &rows {
            eprintln!("{:<5} {:<18} {}", if r.ok { "ok" } else { "FAIL" }, r.case, r.check);
        }
        if let Some(e) = &error {
            eprintln!("{:<5} {:<18} error: {e}", "FAIL", c.name);
        }
        summaries.push(json!({
            "case": c.name,
            "anchor": c.anchor,
            "route": schedule_mode(&c.schedule),
            "checks": rows.len(),
            "mismatches": bad,
            "error": error,
        }));
        table.extend(rows.iter().map(Row::to_json));
    }
    eprintln!("{} case(s), {mismatches} mismatch(es)", cases.len());
    let mut out = success(
        "corpus run",
        json!({ "names": selected }),
        0,
        json!({ "passed": mismatches == 0, "mismatches": mismatches, "cases": summaries }),
        json!({ "table": table }),
        json_path,
    );
    if mismatches > 0 {
        out.exit = EXIT_MISMATCH;
    }
    out
}
