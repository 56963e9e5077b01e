use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use atlasdiffeo::calculus::{seminorm, Atlas, ChartField, LocalizedField, MAX_ORDER};
use atlasdiffeo::engine::qift::{certify_qift, QiftOptions, QiftProblem};
use atlasdiffeo::engine::{estimate_constants, ConstantsOptions, ConstantsReport, ConstantsRequest, RegionKind};
use atlasdiffeo::group::{certify_diffeo, compose, invert, CertifyOptions, DiffeoRep, NeighborhoodGauge};
use atlasdiffeo::manifold::{locally_finite_report, validate_adapted};
use atlasdiffeo::oracle;
use atlasdiffeo::tabfile;
use atlasdiffeo::weights::{
    construct_adjusted, estimate_bound_families, pair_omega_exp_log, saturate, spec_weights, BoundFamily, BoundOptions,
    OmegaPair, WeightSet, DEFAULT_WEIGHT_CAP,
};
use atlasdiffeo::{Error, ManifoldSpec, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{AtlasArg, Command, Common, FieldArg, OracleAction, OracleKindArg, RegionArg, WeightsAction};
use crate::report::{sha256_hex, write_atomic, Configuration};

/// Outcome of one subcommand before it is wrapped into a report.
pub struct Outcome {
    pub spec: Option<String>,
    pub spec_hash: Option<String>,
    pub configuration: Configuration,
    pub results: Value,
    pub passed: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialise")
}

struct Loaded {
    spec: ManifoldSpec,
    path: String,
    hash: String,
}

fn load(path: &Path, common: &Common) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse(format!("{}: not UTF-8", path.display())))?;
    let mut spec = atlasdiffeo::parse_manifold(&text)?;
    if let Some(g) = common.grid {
        spec = spec.with_resolution(g);
    }
    Ok(Loaded {
        spec,
        path: path.display().to_string(),
        hash: sha256_hex(&bytes),
    })
}

fn constants_options(common: &Common) -> ConstantsOptions {
    let mut o = ConstantsOptions::default();
    if let Some(g) = common.grid {
        o.res_x = g;
    }
    o
}

fn configuration(common: &Common, spec: Option<&ManifoldSpec>, extra: Map<String, Value>) -> Configuration {
    Configuration {
        resolution: spec.map_or(common.grid.unwrap_or(0), |s| s.grid_resolution),
        constants_resolution: constants_options(common).res_x,
        safety_factor: common.safety,
        sigma: common.sigma,
        rho: common.rho,
        tol: common.tol,
        extra,
    }
}

fn all_constants(spec: &ManifoldSpec, common: &Common, region: RegionKind) -> Result<Vec<ConstantsReport>> {
    let req = ConstantsRequest {
        region,
        sigma: common.sigma,
        ..Default::default()
    };
    let opts = constants_options(common);
    (0..spec.charts.len())
        .map(|i| estimate_constants(spec, i, &req, &opts, common.safety))
        .collect()
}

/// Per-chart tube radii: the given value, or 0.8 of the admissible limit.
fn deltas(constants: &[ConstantsReport], delta: Option<f64>) -> Vec<f64> {
    constants
        .iter()
        .map(|k| delta.unwrap_or(0.8 * k.rad_exp_fib_inv * k.quot_norm))
        .collect()
}

fn omega_pair(spec: &ManifoldSpec, constants: &[ConstantsReport], common: &Common, delta: Option<f64>) -> Result<OmegaPair> {
    pair_omega_exp_log(spec, constants, common.sigma, &deltas(constants, delta))
}

fn gauge(spec: &ManifoldSpec, pair: &OmegaPair, common: &Common) -> Result<NeighborhoodGauge> {
    NeighborhoodGauge::new(spec, pair.omega_e.clone(), pair.omega_l.clone(), common.rho)
}

fn chart_ids(spec: &ManifoldSpec) -> Vec<String> {
    spec.charts.iter().map(|c| c.id.clone()).collect()
}

fn field(spec: &ManifoldSpec, arg: &FieldArg) -> Result<LocalizedField> {
    match (&arg.field, &arg.field_file) {
        (Some(name), _) => LocalizedField::from_spec(spec, name),
        (None, Some(path)) => {
            let (ids, f) = tabfile::load_field(path)?;
            if ids != chart_ids(spec) {
                return Err(Error::TabulationFormat(format!(
                    "{}: chart ids do not match the spec",
                    path.display()
                )));
            }
            if f.dim != spec.dim() {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim(),
                    got: f.dim,
                });
            }
            Ok(f)
        }
        (None, None) => Err(Error::UnknownField(String::new())),
    }
}

fn certify_options(pairs: usize) -> CertifyOptions {
    CertifyOptions {
        pairs,
        ..Default::default()
    }
}

fn outcome(loaded: &Loaded, common: &Common, extra: Map<String, Value>, results: Value, passed: bool) -> Outcome {
    Outcome {
        spec: Some(loaded.path.clone()),
        spec_hash: Some(loaded.hash.clone()),
        configuration: configuration(common, Some(&loaded.spec), extra),
        results,
        passed,
    }
}

fn extra(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn execute(cmd: &Command, common: &Common) -> Result<Outcome> {
    match cmd {
        Command::Validate { spec } => {
            let l = load(spec, common)?;
            let cert = validate_adapted(&l.spec);
            let lf = locally_finite_report(&l.spec);
            let passed = cert.passed && lf.unique_point;
            Ok(outcome(
                &l,
                common,
                Map::new(),
                json!({ "adapted": cert, "local_finiteness": lf }),
                passed,
            ))
        }
        Command::Constants {
            spec,
            chart,
            region,
            delta,
        } => {
            let l = load(spec, common)?;
            let region = match region {
                RegionArg::Inner => RegionKind::Inner,
                RegionArg::Padded => RegionKind::Padded,
            };
            let req = ConstantsRequest {
                region,
                sigma: common.sigma,
                delta_exp: *delta,
                ..Default::default()
            };
            let opts = constants_options(common);
            let idx: Vec<usize> = match chart {
                Some(id) => vec![l.spec.chart_index(id)?],
                None => (0..l.spec.charts.len()).collect(),
            };
            let reports = idx
                .into_iter()
                .map(|i| estimate_constants(&l.spec, i, &req, &opts, common.safety))
                .collect::<Result<Vec<_>>>()?;
            let e = extra(&[("delta", json!(delta))]);
            Ok(outcome(&l, common, e, json!({ "charts": reports }), true))
        }
        Command::Seminorm {
            spec,
            field: f,
            weight,
            order,
            atlas,
        } => {
            let l = load(spec, common)?;
            let x = field(&l.spec, f)?;
            let w = spec_weights(&l.spec)
                .into_iter()
                .find(|w| w.name == *weight)
                .ok_or_else(|| Error::UnknownWeight(weight.clone()))?;
            let atlas = match atlas {
                AtlasArg::A => Atlas::A,
                AtlasArg::B => Atlas::B,
                AtlasArg::C => Atlas::C,
            };
            let s = seminorm(&l.spec, &x, &w.on(&l.spec), *order, atlas)?;
            let passed = !s.exceeded;
            let e = extra(&[
                ("field", json!(x.name)),
                ("weight", json!(weight)),
                ("order", json!(order)),
                ("atlas", json!(atlas)),
            ]);
            Ok(outcome(&l, common, e, to_value(&s), passed))
        }
        Command::Saturate {
            spec,
            levels,
            delta,
            max_order,
        } => {
            let l = load(spec, common)?;
            let (results, passed) = saturation(&l.spec, common, *levels, *delta, *max_order)?;
            let e = extra(&[
                ("levels", json!(levels)),
                ("max_order", json!(max_order)),
                ("delta", json!(delta)),
            ]);
            Ok(outcome(&l, common, e, results, passed))
        }
        Command::Certify {
            spec,
            field: name,
            pairs,
        } => {
            let l = load(spec, common)?;
            let x = LocalizedField::from_spec(&l.spec, name)?;
            let k = all_constants(&l.spec, common, RegionKind::Inner)?;
            let cert = certify_diffeo(&l.spec, &x, &k, &certify_options(*pairs))?;
            let passed = cert.passed;
            let e = extra(&[("field", json!(name)), ("pairs", json!(pairs))]);
            Ok(outcome(&l, common, e, json!({ "certificate": cert, "constants": k }), passed))
        }
        Command::Compose {
            spec,
            lhs,
            rhs,
            out,
            delta,
        } => {
            let l = load(spec, common)?;
            let x = LocalizedField::from_spec(&l.spec, lhs)?;
            let y = LocalizedField::from_spec(&l.spec, rhs)?;
            let k = all_constants(&l.spec, common, RegionKind::Inner)?;
            let pair = omega_pair(&l.spec, &k, common, *delta)?;
            let g = gauge(&l.spec, &pair, common)?;
            let c = compose(&l.spec, &x, &y, &g, &k)?;
            let saved = save(&l.spec, &c.field, out)?;
            let passed = c.certificate.passed && c.residual <= common.tol;
            let e = extra(&[("lhs", json!(lhs)), ("rhs", json!(rhs)), ("delta", json!(delta))]);
            Ok(outcome(
                &l,
                common,
                e,
                json!({ "composition": c, "gauge": g, "output": saved }),
                passed,
            ))
        }
        Command::Invert {
            spec,
            field: name,
            out,
            delta,
            pairs,
        } => {
            let l = load(spec, common)?;
            let x = LocalizedField::from_spec(&l.spec, name)?;
            let k = all_constants(&l.spec, common, RegionKind::Inner)?;
            let pair = omega_pair(&l.spec, &k, common, *delta)?;
            let g = gauge(&l.spec, &pair, common)?;
            let rep = DiffeoRep::new(&l.spec, &x, &k, &certify_options(*pairs))?;
            let e = extra(&[("field", json!(name)), ("delta", json!(delta)), ("pairs", json!(pairs))]);
            if !rep.certificate.passed {
                return Ok(outcome(&l, common, e, json!({ "certificate": rep.certificate }), false));
            }
            let inv = invert(&l.spec, &rep, &g, &k)?;
            let saved = save(&l.spec, &inv.field, out)?;
            let passed = inv.certificate.passed && inv.residual <= common.tol;
            Ok(outcome(
                &l,
                common,
                e,
                json!({ "certificate": rep.certificate, "inversion": inv, "gauge": g, "output": saved }),
                passed,
            ))
        }
        Command::Qift { problem } => {
            let bytes = std::fs::read(problem).map_err(|e| Error::Io(format!("{}: {e}", problem.display())))?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse("problem file is not UTF-8".into()))?;
            let p = QiftProblem::parse(&text)?;
            let mut opts = QiftOptions {
                safety_factor: common.safety,
                ..Default::default()
            };
            if let Some(g) = common.grid {
                opts.res = g;
            }
            let r = certify_qift(&p, &opts)?;
            let passed = r.certificate.passed;
            let mut cfg = configuration(common, None, extra(&[("target_resolution", json!(opts.target_res))]));
            cfg.resolution = opts.res;
            Ok(Outcome {
                spec: Some(problem.display().to_string()),
                spec_hash: Some(sha256_hex(&bytes)),
                configuration: cfg,
                results: to_value(&r),
                passed,
            })
        }
        Command::Oracle {
            action:
                OracleAction::Emit {
                    kind,
                    d,
                    r1,
                    r2,
                    c,
                    length,
                    charts,
                    lo,
                    hi,
                    out,
                },
        } => {
            let o = match kind {
                OracleKindArg::Flat => oracle::flat_oracle(*d, *r1, *r2)?,
                OracleKindArg::ScaledFlat => oracle::scaled_flat_oracle(*d, *c)?,
                OracleKindArg::Cylinder => oracle::cylinder_oracle(*length, *charts)?,
                OracleKindArg::HalfPlane => oracle::half_plane_oracle(*lo, *hi)?,
            };
            let spec = match common.grid {
                Some(g) => o.spec.with_resolution(g),
                None => o.spec.clone(),
            };
            let text = spec.to_toml();
            write_atomic(out, &text)?;
            Ok(Outcome {
                spec: None,
                spec_hash: Some(sha256_hex(text.as_bytes())),
                configuration: configuration(common, Some(&spec), Map::new()),
                results: json!({
                    "oracle": o.kind,
                    "charts": spec.charts.len(),
                    "out": out.display().to_string(),
                }),
                passed: true,
            })
        }
        Command::Weights {
            action:
                WeightsAction::Adjust {
                    spec,
                    delta_per_chart,
                    delta,
                },
        } => {
            let l = load(spec, common)?;
            let targets = match (delta_per_chart, delta) {
                (Some(path), _) => targets_from_file(&l.spec, path)?,
                (None, Some(d)) => vec![*d; l.spec.charts.len()],
                (None, None) => return Err(Error::Parse("one of --delta-per-chart or --delta is required".into())),
            };
            let (w, cert) = construct_adjusted(&l.spec, "adjusted", &targets)?;
            let passed = cert.passed;
            let e = extra(&[("targets", json!(targets))]);
            Ok(outcome(&l, common, e, json!({ "weight": w, "certificate": cert }), passed))
        }
        Command::FullPipeline {
            spec,
            levels,
            delta,
            max_order,
            pairs,
        } => {
            let l = load(spec, common)?;
            let (results, passed) = pipeline(&l.spec, common, *levels, *delta, *max_order, *pairs)?;
            let e = extra(&[
                ("levels", json!(levels)),
                ("max_order", json!(max_order)),
                ("delta", json!(delta)),
                ("pairs", json!(pairs)),
            ]);
            Ok(outcome(&l, common, e, results, passed))
        }
    }
}

fn save(spec: &ManifoldSpec, f: &LocalizedField, out: &PathBuf) -> Result<Value> {
    let t = f.tabulate(spec, Atlas::A, MAX_ORDER)?;
    tabfile::save_field(out, &t, &chart_ids(spec))?;
    let nodes: usize = t
        .charts
        .iter()
        .map(|c| match c {
            ChartField::Tabulated(t) => t.nodes(),
            _ => 0,
        })
        .sum();
    Ok(json!({ "path": out.display().to_string(), "nodes": nodes }))
}

fn targets_from_file(spec: &ManifoldSpec, path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let map: BTreeMap<String, f64> = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if let Some(extra) = map.keys().find(|k| spec.chart_index(k).is_err()) {
        return Err(Error::UnknownChart(extra.clone()));
    }
    spec.charts
        .iter()
        .map(|c| {
            map.get(&c.id)
                .copied()
                .ok_or_else(|| Error::Parse(format!("{}: no radius for chart `{}`", path.display(), c.id)))
        })
        .collect()
}

fn saturation(
    spec: &ManifoldSpec,
    common: &Common,
    levels: usize,
    delta: Option<f64>,
    max_order: usize,
) -> Result<(Value, bool)> {
    let k = all_constants(spec, common, RegionKind::Inner)?;
    let pair = omega_pair(spec, &k, common, delta)?;
    let (families, set) = saturate_with(spec, &k, &pair, levels, max_order)?;
    let passed = pair.certificate.passed && set.certificate.passed;
    Ok((
        json!({ "constants": k, "omega": pair, "bound_families": families, "saturation": set }),
        passed,
    ))
}

fn saturate_with(
    spec: &ManifoldSpec,
    k: &[ConstantsReport],
    pair: &OmegaPair,
    levels: usize,
    max_order: usize,
) -> Result<(Vec<BoundFamily>, WeightSet)> {
    let de: Vec<f64> = k.iter().map(|c| c.delta_exp).collect();
    let dl: Vec<f64> = k.iter().map(|c| c.delta_log).collect();
    let families = estimate_bound_families(spec, k, &de, &dl, max_order, &BoundOptions::default())?;
    let mut w0 = spec_weights(spec);
    w0.push(pair.omega_e.clone());
    w0.push(pair.omega_l.clone());
    let set = saturate(spec, w0, &families, levels, DEFAULT_WEIGHT_CAP)?;
    Ok((families, set))
}

fn pipeline(
    spec: &ManifoldSpec,
    common: &Common,
    levels: usize,
    delta: Option<f64>,
    max_order: usize,
    pairs: usize,
) -> Result<(Value, bool)> {
    let adapted = validate_adapted(spec);
    let lf = locally_finite_report(spec);
    let k = all_constants(spec, common, RegionKind::Inner)?;
    let pair = omega_pair(spec, &k, common, delta)?;
    let (families, set) = saturate_with(spec, &k, &pair, levels, max_order)?;
    let g = gauge(spec, &pair, common)?;
    let opts = certify_options(pairs);
    let mut fields = Map::new();
    let mut all_certified = true;
    for name in spec.fields.keys() {
        let x = LocalizedField::from_spec(spec, name)?;
        let cert = certify_diffeo(spec, &x, &k, &opts)?;
        all_certified &= cert.passed;
        let gr = g.report(spec, &x)?;
        fields.insert(name.clone(), json!({ "certificate": cert, "gauge": gr }));
    }
    let passed = adapted.passed && lf.unique_point && pair.certificate.passed && set.certificate.passed && all_certified;
    let summary = json!({
        "adapted": adapted.passed,
        "unique_point": lf.unique_point,
        "omega_pair": pair.certificate.passed,
        "saturation": set.certificate.passed,
        "stable_at": set.stable_at,
        "weights": set.weights.len(),
        "fields_certified": all_certified,
    });
    Ok((
        json!({
            "summary": summary,
            "validate": { "adapted": adapted, "local_finiteness": lf },
            "constants": k,
            "omega": pair,
            "bound_families": families,
            "saturation": set,
            "gauge": g,
            "fields": fields,
        }),
        passed,
    ))
}

/// Input problems exit with 2; mathematical failures with 1.
pub fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Syntax { .. }
            | Error::UnknownIdentifier(_)
            | Error::Arity { .. }
            | Error::Parse(_)
            | Error::InvariantViolation(_)
            | Error::MissingTransition(..)
            | Error::UnknownChart(_)
            | Error::UnknownField(_)
            | Error::UnknownWeight(_)
            | Error::DimensionMismatch { .. }
            | Error::SigmaOutOfRange(_)
            | Error::OrderUnavailable { .. }
            | Error::RadiiOrderViolation { .. }
            | Error::TabulationFormat(_)
            | Error::Io(_)
    )
}

pub fn bare_configuration(common: &Common) -> Configuration {
    configuration(common, None, Map::new())
}
