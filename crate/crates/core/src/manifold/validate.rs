use std::collections::{BTreeMap, BTreeSet};

use nalgebra::SymmetricEigen;
use serde::Serialize;

use super::ManifoldSpec;
use crate::certificate::Certificate;
use crate::expr::Expr;
use crate::grid::{Region, Shape};
use crate::linalg::{mat_vec, Norm};

const COHERENCE_TOL: f64 = 1e-8;
const FIELD_TOL: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-12;

/// Collects messages, keeping the first one per (category, chart).
struct Violations {
    seen: BTreeSet<(String, String)>,
    list: Vec<String>,
}

impl Violations {
    fn new() -> Self {
        Violations {
            seen: BTreeSet::new(),
            list: Vec::new(),
        }
    }

    fn add(&mut self, category: &str, chart: &str, msg: String) {
        if self.seen.insert((category.to_string(), chart.to_string())) {
            self.list.push(msg);
        }
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Open-domain sample points of chart `i`.
pub(crate) fn domain_samples(spec: &ManifoldSpec, i: usize, res: usize) -> Vec<Vec<f64>> {
    let dom = &spec.charts[i].domain;
    dom.fitted_points(res).into_iter().filter(|p| dom.contains(p)).collect()
}

fn check_arity(v: &mut Violations, what: &str, chart: &str, e: &Expr, dim: usize) {
    if e.arity() > dim {
        v.add(
            "arity",
            &format!("{what}{chart}"),
            format!(
                "{what} on chart `{chart}` uses x{} but the chart has dimension {dim}",
                e.arity()
            ),
        );
    }
}

pub(crate) fn structural_violations(spec: &ManifoldSpec) -> Vec<String> {
    let mut v = Violations::new();
    let res = spec.grid_resolution;

    for c in &spec.charts {
        let d = c.dim;
        if d == 0 {
            v.add("dim", &c.id, format!("chart `{}` has dimension 0", c.id));
            continue;
        }
        if c.domain.center.len() != d || c.domain.extent.len() != d {
            v.add(
                "domain",
                &c.id,
                format!("chart `{}`: domain center/extent do not match dim {d}", c.id),
            );
            continue;
        }
        if c.domain.extent.iter().any(|e| !(*e > 0.0)) {
            v.add("domain", &c.id, format!("chart `{}`: domain extents must be positive", c.id));
        }
        for (name, val) in [("r", c.r), ("R", c.pad), ("epsilon", c.epsilon)] {
            if !(val > 0.0 && val.is_finite()) {
                v.add(name, &c.id, format!("chart `{}`: {name} must be positive", c.id));
            }
        }
        if c.metric.len() != d || c.metric.iter().any(|row| row.len() != d) {
            v.add("metric", &c.id, format!("chart `{}`: metric must be {d}x{d}", c.id));
            continue;
        }
        for e in c.metric.iter().flatten() {
            check_arity(&mut v, "metric", &c.id, e, d);
        }
    }
    if spec.charts.iter().any(|c| c.dim != spec.dim()) {
        v.add("dim", "", "charts have differing dimensions".to_string());
    }
    for t in &spec.transitions {
        let (Ok(a), Ok(b)) = (spec.chart_index(&t.from), spec.chart_index(&t.to)) else {
            continue;
        };
        let tag = format!("{}->{}", t.from, t.to);
        if t.map.len() != spec.charts[b].dim {
            v.add("transition", &tag, format!("transition {tag} has {} components", t.map.len()));
        }
        for e in t.map.iter().chain(t.overlap.iter()) {
            check_arity(&mut v, "transition", &tag, e, spec.charts[a].dim);
        }
    }
    for (name, fam) in &spec.weights {
        for (c, e) in spec.charts.iter().zip(&fam.per_chart) {
            check_arity(&mut v, &format!("weight `{name}`"), &c.id, e, c.dim);
        }
    }
    for (name, fam) in &spec.fields {
        for (c, comps) in spec.charts.iter().zip(&fam.per_chart) {
            if comps.len() != c.dim {
                v.add(
                    "field",
                    &c.id,
                    format!("field `{name}` on chart `{}` has {} components", c.id, comps.len()),
                );
            }
            for e in comps {
                check_arity(&mut v, &format!("field `{name}`"), &c.id, e, c.dim);
            }
        }
    }
    if !v.list.is_empty() {
        return v.list;
    }

    // sampled invariants
    for (i, c) in spec.charts.iter().enumerate() {
        for p in domain_samples(spec, i, res) {
            let g = c.metric_at(&p);
            if g.iter().any(|x| !x.is_finite()) {
                v.add(
                    "metric-finite",
                    &c.id,
                    format!("metric not finite at sample {} of chart `{}`", fmt_point(&p), c.id),
                );
                continue;
            }
            if (&g - g.transpose()).iter().any(|x| x.abs() > SYMMETRY_TOL) {
                v.add(
                    "metric-sym",
                    &c.id,
                    format!("metric asymmetric at sample {} of chart `{}`", fmt_point(&p), c.id),
                );
                continue;
            }
            let eig = SymmetricEigen::new(g).eigenvalues;
            if eig.iter().any(|l| !(*l > 0.0)) {
                v.add(
                    "metric-spd",
                    &c.id,
                    format!("metric not positive definite at sample {} of chart `{}`", fmt_point(&p), c.id),
                );
            }
        }
    }

    for (a, ca) in spec.charts.iter().enumerate() {
        let samples = domain_samples(spec, a, res);
        for &b in spec.neighbors(a) {
            let tag = format!("{}->{}", ca.id, spec.charts[b].id);
            for p in &samples {
                let Some(q) = spec.to_chart(a, p, b) else { continue };
                match spec.to_chart(b, &q, a) {
                    None => v.add(
                        "coherence",
                        &tag,
                        format!("reverse of transition {tag} undefined at {}", fmt_point(&q)),
                    ),
                    Some(back) => {
                        if Norm::Sup.dist(&back, p) > COHERENCE_TOL {
                            v.add(
                                "coherence",
                                &tag,
                                format!("transition {tag} is not inverted by its reverse at {}", fmt_point(p)),
                            );
                        }
                    }
                }
                for (name, fam) in &spec.fields {
                    let xa: Vec<f64> = fam.per_chart[a].iter().map(|e| e.eval(p)).collect();
                    let xb: Vec<f64> = fam.per_chart[b].iter().map(|e| e.eval(&q)).collect();
                    let jac = spec.transition_jacobian(a, b, p);
                    let pushed = mat_vec(&jac, &xa);
                    if Norm::Sup.dist(&pushed, &xb) > FIELD_TOL {
                        v.add(
                            &format!("field-compat-{name}"),
                            &tag,
                            format!(
                                "field `{name}` violates the chart-change law across {tag} at {}",
                                fmt_point(p)
                            ),
                        );
                    }
                }
                for (name, fam) in &spec.weights {
                    let fa = fam.per_chart[a].eval(p);
                    let fb = fam.per_chart[b].eval(&q);
                    if (fa - fb).abs() > COHERENCE_TOL * (1.0 + fa.abs()) {
                        v.add(
                            &format!("weight-compat-{name}"),
                            &tag,
                            format!("weight `{name}` differs across {tag} at {}", fmt_point(p)),
                        );
                    }
                }
            }
        }
        for (name, fam) in &spec.fields {
            if samples
                .iter()
                .any(|p| fam.per_chart[a].iter().any(|e| !e.eval(p).is_finite()))
            {
                v.add(
                    "field-finite",
                    &format!("{name}{}", ca.id),
                    format!("field `{name}` not finite on chart `{}`", ca.id),
                );
            }
        }
        for (name, fam) in &spec.weights {
            if samples.iter().any(|p| !fam.per_chart[a].eval(p).is_finite()) {
                v.add(
                    "weight-finite",
                    &format!("{name}{}", ca.id),
                    format!("weight `{name}` not finite on chart `{}`", ca.id),
                );
            }
        }
    }

    // cocycle on triple overlaps, at a coarser resolution
    let cres = res.min(17);
    for (a, ca) in spec.charts.iter().enumerate() {
        let nb = spec.neighbors(a);
        if nb.len() < 2 {
            continue;
        }
        let samples = domain_samples(spec, a, cres);
        for &b in nb {
            for &c in nb {
                if b == c || spec.transition(b, c).is_none() {
                    continue;
                }
                let tag = format!("{}->{}->{}", ca.id, spec.charts[b].id, spec.charts[c].id);
                for p in &samples {
                    let (Some(qb), Some(qc)) = (spec.to_chart(a, p, b), spec.to_chart(a, p, c)) else {
                        continue;
                    };
                    if let Some(via) = spec.to_chart(b, &qb, c) {
                        if Norm::Sup.dist(&via, &qc) > COHERENCE_TOL {
                            v.add(
                                "cocycle",
                                &tag,
                                format!("cocycle condition fails on {tag} at {}", fmt_point(p)),
                            );
                        }
                    }
                }
            }
        }
    }

    // adjacency graph connected
    if !spec.charts.is_empty() {
        let mut seen = vec![false; spec.charts.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in spec.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            v.add(
                "connected",
                "",
                format!(
                    "chart adjacency graph is disconnected (chart `{}` unreachable)",
                    spec.charts[k].id
                ),
            );
        }
    }
    v.list
}

/// Largest radius of a `norm`-ball around `center` whose closure still
/// fits in the open region (0 if the center is outside).
pub(crate) fn inscribed_radius(dom: &Region, center: &[f64], norm: Norm) -> f64 {
    let offset: Vec<f64> = center.iter().zip(&dom.center).map(|(a, c)| a - c).collect();
    let d = dom.dim() as f64;
    match dom.shape {
        Shape::Box => offset
            .iter()
            .zip(&dom.extent)
            .map(|(o, e)| e - o.abs())
            .fold(f64::INFINITY, f64::min),
        Shape::Ball => {
            let slack = dom.extent[0] - dom.norm.of(&offset);
            match (dom.norm, norm) {
                (Norm::Euclidean, Norm::Sup) => slack / d.sqrt(),
                _ => slack,
            }
        }
    }
    .max(0.0)
}

/// Check the adapted-atlas conditions chart by chart.
pub fn validate_adapted(spec: &ManifoldSpec) -> Certificate {
    let res = spec.grid_resolution;
    let mut cert = Certificate::new("adapted_atlas", res, 1.0);
    for c in &spec.charts {
        let id = Some(c.id.as_str());
        let room = inscribed_radius(&c.domain, c.center(), c.norm());
        cert.lt("closed_padded_ball_in_domain", id, c.r + c.pad, room);
        cert.lt("epsilon_below_half", id, c.epsilon, 0.5);
        cert.lt("positive_epsilon", id, 0.0, c.epsilon);
        cert.lt("r_below_padding_bound", id, c.r, (1.0 / (2.0 * c.epsilon) - 1.0) * c.pad);
    }
    let (holes, margin_points, total) = cover_scan(spec, res);
    cert.zero_failures("inner_balls_cover", None, holes.len());
    cert.note(format!(
        "cover sampled on {total} domain points at resolution {res}; {margin_points} uncovered points lie only in boundary charts (truncation margin)"
    ));
    for h in holes.iter().take(5) {
        cert.note(format!("uncovered sample {h}"));
    }
    cert
}

/// Sampled cover test. Charts of maximal degree in the adjacency graph are
/// interior; the others border the truncation of the manifold. A domain
/// point lying in two or more domains, one of them interior, must lie in
/// some inner ball. Uncovered points elsewhere count as truncation margin.
pub(crate) fn cover_scan(spec: &ManifoldSpec, res: usize) -> (Vec<String>, usize, usize) {
    let mut holes = Vec::new();
    let mut margin = 0;
    let mut total = 0;
    let max_degree = (0..spec.charts.len()).map(|i| spec.neighbors(i).len()).max().unwrap_or(0);
    let interior = |j: usize| spec.neighbors(j).len() == max_degree;
    for (i, c) in spec.charts.iter().enumerate() {
        for p in domain_samples(spec, i, res) {
            total += 1;
            let containing = spec.charts_containing(i, &p);
            let covered = containing
                .iter()
                .any(|(j, q)| spec.charts[*j].inner_ball().contains_closed(q));
            if covered {
                continue;
            }
            if containing.len() >= 2 && containing.iter().any(|(j, _)| interior(*j)) {
                holes.push(format!("{} of chart `{}`", fmt_point(&p), c.id));
            } else {
                margin += 1;
            }
        }
    }
    (holes, margin, total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalFiniteness {
    pub neighbors: BTreeMap<String, usize>,
    pub unique_point: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unique_point_example: Option<(String, Vec<f64>)>,
    pub resolution: usize,
}

pub fn locally_finite_report(spec: &ManifoldSpec) -> LocalFiniteness {
    let neighbors = spec
        .charts
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.clone(), spec.neighbors(i).len()))
        .collect();
    let mut example = None;
    'outer: for (i, c) in spec.charts.iter().enumerate() {
        for p in domain_samples(spec, i, spec.grid_resolution) {
            if spec.charts_containing(i, &p).len() == 1 {
                example = Some((c.id.clone(), p));
                break 'outer;
            }
        }
    }
    LocalFiniteness {
        neighbors,
        unique_point: example.is_some(),
        unique_point_example: example,
        resolution: spec.grid_resolution,
    }
}
