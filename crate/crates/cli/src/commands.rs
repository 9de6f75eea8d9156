use std::path::{Path, PathBuf};

use epibundle_core::base::AttentiveLocalization;
use epibundle_core::bundle::{self, BundleReport, RouteMode};
use epibundle_core::gtd::{self, Decision, Route};
use epibundle_core::moreau::{envelope_gradient_with, envelope_hessian_probe_with, prox_with, ProxConfig};
use epibundle_core::subderiv::{self, d2_estimate, svarconv_certificate, twice_epi_diff_test, SubderivEstimate};
use epibundle_core::{Error, ExtReal, PrimalDualPair, Result, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{resolve, Resolved, RunConfig};
use crate::report::{failure, success, Outcome};
use crate::Common;

fn effective(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => Ok(RunConfig::load(p)?.layered(&common.run)),
        None => Ok(common.run.clone()),
    }
}

/// Resolves the configuration, runs `body` and wraps its
/// `(verdicts, evidence)` in a report.
fn run(
    command: &str,
    common: &Common,
    args: Value,
    body: impl FnOnce(&RunConfig, &Resolved) -> Result<(Value, Value)>,
) -> Outcome {
    let cfg = match effective(common) {
        Ok(c) => c,
        Err(e) => return failure(command, &e, common.run.json.clone()),
    };
    let json_path = cfg.json.clone();
    let result = resolve(&cfg).and_then(|r| {
        let (verdicts, mut evidence) = body(&cfg, &r)?;
        if let Value::Object(m) = &mut evidence {
            m.insert("function".into(), r.summary());
        }
        Ok((r.seed, verdicts, evidence))
    });
    match result {
        Ok((seed, verdicts, evidence)) => {
            let mut config = serde_json::to_value(&cfg).expect("config serializes");
            if let Value::Object(m) = &mut config {
                m.insert("args".into(), args);
            }
            success(command, config, seed, verdicts, evidence, json_path)
        }
        Err(e) => failure(command, &e, json_path),
    }
}

fn point(z: &Option<Vec<f64>>, r: &Resolved) -> Result<Vector> {
    match z {
        Some(z) if z.len() == r.dim() && z.iter().all(|t| t.is_finite()) => Ok(Vector::from_column_slice(z)),
        Some(z) => Err(Error::argument(format!("--z needs {} finite components, got {}", r.dim(), z.len()))),
        None => Ok(&r.pair.x + &r.pair.v * r.lambda),
    }
}

fn csv_dir(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    match &cfg.csv {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::argument(format!("cannot create {}: {e}", d.display())))?;
            Ok(Some(d.clone()))
        }
        None => Ok(None),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::argument(format!("cannot write {}: {e}", path.display())))
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::argument(format!("CSV output failed: {e}"))
}

fn cell(x: ExtReal) -> String {
    x.to_string()
}

pub fn envelope(common: &Common, z: Option<Vec<f64>>, hessian: bool, trace: Option<PathBuf>) -> Outcome {
    let args = json!({ "z": z, "hessian": hessian, "trace": trace });
    run("envelope", common, args, |_, r| {
        let z = point(&z, r)?;
        let cfg = ProxConfig::default();
        let p = prox_with(&r.oracle, r.lambda, &z, &cfg)?;
        let gradient = if p.multi_valued {
            None
        } else {
            Some(envelope_gradient_with(&r.oracle, r.lambda, &z, &cfg)?)
        };
        let probe = if hessian {
            Some(envelope_hessian_probe_with(&r.oracle, r.lambda, &z, &r.schedule.probe)?)
        } else {
            None
        };
        if let Some(path) = &trace {
            let searched = ProxConfig { keep_grid: true, use_closed_form: false, ..ProxConfig::default() };
            let grid = prox_with(&r.oracle, r.lambda, &z, &searched)?.solver_trace.grid;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Error::argument(format!("cannot create {}: {e}", dir.display())))?;
            }
            let mut w = csv_writer(path)?;
            let mut head: Vec<String> = (0..r.dim()).map(|i| format!("u{i}")).collect();
            head.push("objective".into());
            w.write_record(&head).map_err(csv_err)?;
            for (u, val) in &grid {
                let mut row: Vec<String> = u.iter().map(|t| t.to_string()).collect();
                row.push(cell(*val));
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush().map_err(csv_err)?;
        }
        let verdicts = json!({
            "z": z.as_slice(),
            "value": p.value,
            "differentiable": gradient.is_some(),
            "gradient": gradient.as_ref().map(|g| g.as_slice().to_vec()),
            "twice_differentiable": probe.as_ref().map(|h| h.converged),
            "hessian": probe.as_ref().and_then(|h| h.limit.as_ref()).map(|h| h.row_major()),
        });
        let evidence = json!({
            "prox": p,
            "hessian_probe": probe.as_ref().map(|h| h.record()),
        });
        Ok((verdicts, evidence))
    })
}

pub fn prox(common: &Common, z: Option<Vec<f64>>) -> Outcome {
    let args = json!({ "z": z });
    run("prox", common, args, |_, r| {
        let z = point(&z, r)?;
        let p = prox_with(&r.oracle, r.lambda, &z, &ProxConfig::default())?;
        let verdicts = json!({
            "z": z.as_slice(),
            "minimizers": p.minimizers.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>(),
            "multi_valued": p.multi_valued,
            "value": p.value,
        });
        Ok((verdicts, json!({ "solver_trace": p.solver_trace })))
    })
}

fn parse_direction(s: &str, n: usize) -> Result<Vector> {
    let v: std::result::Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == n && v.iter().all(|t| t.is_finite()) => Ok(Vector::from_vec(v)),
        _ => Err(Error::argument(format!("--w {s:?} is not a vector in R^{n}"))),
    }
}

fn write_windows(dir: &Path, table: &[SubderivEstimate]) -> Result<()> {
    let mut w = csv_writer(&dir.join("subderiv_windows.csv"))?;
    w.write_record(["direction", "level", "delta", "lower", "upper", "lower_extrapolated", "upper_extrapolated"])
        .map_err(csv_err)?;
    for e in table {
        let d = e.direction.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
        let win = &e.windows;
        for j in 0..win.lower.len() {
            w.write_record([
                d.clone(),
                j.to_string(),
                win.delta_schedule.get(j).map_or(String::new(), |x| x.to_string()),
                cell(win.lower[j]),
                cell(win.upper[j]),
                cell(win.lower_extrapolated[j]),
                cell(win.upper_extrapolated[j]),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

pub fn subderiv(common: &Common, ws: &[String]) -> Outcome {
    let args = json!({ "w": ws });
    run("subderiv", common, args, |cfg, r| {
        let (verdicts, table) = if ws.is_empty() {
            let rep = twice_epi_diff_test(&r.oracle, &r.pair, &r.grid)?;
            let rows: Vec<Value> = rep
                .table
                .iter()
                .map(|e| json!({ "w": e.direction.as_slice(), "lower": e.lower, "upper": e.upper, "verdict": e.verdict }))
                .collect();
            (json!({ "twice_epi_differentiable": rep.verdict, "d2": rows }), rep.table)
        } else {
            let table: Vec<SubderivEstimate> = ws
                .iter()
                .map(|s| d2_estimate(&r.oracle, &r.pair, &parse_direction(s, r.dim())?, &r.grid))
                .collect::<Result<_>>()?;
            let rows: Vec<Value> = table
                .iter()
                .map(|e| json!({ "w": e.direction.as_slice(), "lower": e.lower, "upper": e.upper, "verdict": e.verdict }))
                .collect();
            (json!({ "d2": rows }), table)
        };
        if let Some(dir) = csv_dir(cfg)? {
            write_windows(&dir, &table)?;
        }
        Ok((verdicts, json!({ "grid": r.grid, "table": table })))
    })
}

pub fn gtd_check(common: &Common, route: Route, identity: bool) -> Outcome {
    let args = json!({ "route": route, "identity": identity });
    run("gtd-check", common, args, |_, r| {
        let v = gtd::gtd_check(&r.oracle, &r.pair, &r.grid, r.lambda, r.r_level, route)?;
        let ident = if identity && v.decision == Decision::Gtd {
            Some(gtd::envelope_identity_report(&r.oracle, &r.pair, r.lambda, r.r_level, &r.grid)?)
        } else {
            None
        };
        let verdicts = json!({
            "decision": v.decision,
            "gtd": v.decision.is_gtd(),
            "form": v.form,
            "route": v.route,
            "identity_gap": ident.as_ref().map(|i| i.max_abs_gap),
        });
        Ok((verdicts, json!({ "verdict": v, "identity": ident })))
    })
}

fn write_paths(dir: &Path, rep: &BundleReport) -> Result<()> {
    let mut w = csv_writer(&dir.join("bundle_paths.csv"))?;
    w.write_record(["path", "route", "label", "level", "radius", "x", "v", "fx", "coefficient", "matrix", "reject"])
        .map_err(csv_err)?;
    let join = |v: &[f64]| v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
    for p in &rep.paths {
        let route = serde_json::to_value(p.route).expect("route serializes");
        let reject = p.reject.map(|r| serde_json::to_value(r).expect("reason serializes"));
        for l in &p.levels {
            w.write_record([
                p.index.to_string(),
                route.as_str().unwrap_or_default().to_string(),
                p.label.clone(),
                l.level.to_string(),
                l.radius.to_string(),
                join(&l.x),
                join(&l.v),
                cell(l.fx),
                l.coefficient.map_or(String::new(), |c| c.to_string()),
                l.matrix.as_deref().map_or(String::new(), join),
                reject.as_ref().and_then(|r| r.as_str()).unwrap_or_default().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

pub fn quad_bundle(common: &Common, attentive: bool, route: Option<RouteMode>) -> Outcome {
    let args = json!({ "attentive": attentive, "route": route });
    run("quad-bundle", common, args, |cfg, r| {
        let mut schedule = r.schedule.clone();
        if let Some(m) = route {
            schedule.mode = m;
        } else if r.case.is_none() {
            schedule.mode = RouteMode::EnvelopeRoute;
        }
        let rep = bundle::quad_bundle(&r.oracle, &r.pair, r.lambda, r.r_level, &schedule, attentive)?;
        if let Some(dir) = csv_dir(cfg)? {
            write_paths(&dir, &rep)?;
        }
        let verdicts = json!({
            "attentive": attentive,
            "nonempty": !rep.elements.is_empty(),
            "elements": rep.elements.iter().map(|c| &c.representative).collect::<Vec<_>>(),
            "coefficient_range": rep.coefficient_range,
        });
        Ok((verdicts, json!({ "report": rep, "schedule": schedule })))
    })
}

pub fn hessian_bundle(common: &Common) -> Outcome {
    run("hessian-bundle", common, json!({}), |cfg, r| {
        let hb = bundle::hessian_bundle(&r.oracle, &r.pair.x, &r.schedule)?;
        if let Some(dir) = csv_dir(cfg)? {
            let mut w = csv_writer(&dir.join("hessian_clusters.csv"))?;
            w.write_record(["cluster", "members", "spread", "matrix"]).map_err(csv_err)?;
            for (i, c) in hb.clusters.iter().enumerate() {
                let m = c.representative.row_major().iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
                w.write_record([i.to_string(), c.members.to_string(), c.spread.to_string(), m]).map_err(csv_err)?;
            }
            w.flush().map_err(csv_err)?;
        }
        let verdicts = json!({
            "nonempty": !hb.clusters.is_empty(),
            "clusters": hb.clusters.iter().map(|c| c.representative.row_major()).collect::<Vec<_>>(),
        });
        Ok((verdicts, json!({ "bundle": hb, "schedule": r.schedule })))
    })
}

pub fn growth_check(common: &Common, kappa: f64, radii: &[f64], samples: usize) -> Outcome {
    let args = json!({ "kappa": kappa, "radius": radii, "samples": samples });
    run("growth-check", common, args, |_, r| {
        let rows: Vec<Value> = radii
            .iter()
            .map(|&rad| -> Result<Value> {
                Ok(json!({ "radius": rad, "holds": subderiv::growth_check(&r.oracle, &r.pair, kappa, rad, samples)? }))
            })
            .collect::<Result<_>>()?;
        let all = rows.iter().all(|v| v["holds"] == json!(true));
        Ok((json!({ "kappa": kappa, "holds_at_every_radius": all, "radii": rows }), json!({})))
    })
}

/// Subgradient-graph samples of the localization, seeded.
fn graph_samples(loc: &AttentiveLocalization, count: usize, seed: u64) -> Result<Vec<PrimalDualPair>> {
    let o = &loc.oracle;
    if !o.has_subgrad_sampler() {
        return Err(Error::capability(format!("{} has no subgradient sampler", o.label())));
    }
    let n = o.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1);
    let mut out = vec![loc.center.clone()];
    let mut attempts = 0;
    while out.len() < count.max(1) && attempts < 200 * count.max(1) {
        attempts += 1;
        let x = if attempts % 3 == 0 {
            loc.center.x.clone()
        } else {
            &loc.center.x + Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)) * (loc.eps / (n as f64).sqrt())
        };
        let u = Vector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
        let Some(v) = o.sample_subgradient(&x, &u)? else { continue };
        if let Ok(p) = PrimalDualPair::new(o, x, v) {
            if loc.contains_pair(&p)? {
                out.push(p);
            }
        }
    }
    Ok(out)
}

pub fn svar_cert(common: &Common, s: f64, radius: f64, eps: Option<f64>, samples: usize) -> Outcome {
    let args = json!({ "s": s, "radius": radius, "eps": eps, "samples": samples });
    run("svar-cert", common, args, |_, r| {
        let eps = eps.unwrap_or(r.case.as_ref().map_or(0.25, |c| c.loc_eps));
        let loc = AttentiveLocalization::new(r.oracle.clone(), r.pair.clone(), eps)?;
        if !r.oracle.has_subgrad_graph() {
            return Err(Error::capability(format!(
                "{} has no subdifferential graph; the certificate needs localization membership",
                r.oracle.label()
            )));
        }
        let pts = graph_samples(&loc, samples, r.seed)?;
        let holds = svarconv_certificate(&r.oracle, &loc, s, radius, &pts)?;
        let used: Vec<Value> = pts
            .iter()
            .map(|p| json!({ "x": p.x.as_slice(), "v": p.v.as_slice(), "fx": p.fx }))
            .collect();
        Ok((
            json!({ "s": s, "holds": holds, "eps": eps, "radius": radius }),
            json!({ "graph_samples": used }),
        ))
    })
}
