//! TOML representation of a manifold description.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Chart, FieldFamily, ManifoldSpec, Transition, WeightFamily};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Region, Shape};
use crate::linalg::Norm;

const DEFAULT_KEY: &str = "*";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    fn to_expr(&self) -> Result<Expr> {
        match self {
            Scalar::Num(v) => Ok(Expr::Num(*v)),
            Scalar::Text(s) => Expr::parse(s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Extent {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainDoc {
    shape: Shape,
    center: Vec<f64>,
    extent: Extent,
    #[serde(default)]
    norm: Norm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartDoc {
    id: String,
    dim: usize,
    r: f64,
    #[serde(rename = "R")]
    pad: f64,
    epsilon: f64,
    metric: Vec<Vec<Scalar>>,
    domain: DomainDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    from: String,
    to: String,
    map: Vec<Scalar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    overlap: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    #[serde(default = "default_resolution")]
    grid_resolution: usize,
    charts: Vec<ChartDoc>,
    #[serde(default)]
    transitions: Vec<TransitionDoc>,
    #[serde(default)]
    weights: BTreeMap<String, BTreeMap<String, Scalar>>,
    #[serde(default)]
    fields: BTreeMap<String, BTreeMap<String, Vec<Scalar>>>,
}

fn default_resolution() -> usize {
    33
}

pub fn load_manifold(path: impl AsRef<Path>) -> Result<ManifoldSpec> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
    parse_manifold(&text)
}

pub fn parse_manifold(text: &str) -> Result<ManifoldSpec> {
    let doc: SpecDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut charts = Vec::with_capacity(doc.charts.len());
    for c in &doc.charts {
        charts.push(chart_from_doc(c)?);
    }
    let ids: Vec<String> = charts.iter().map(|c| c.id.clone()).collect();
    let mut transitions = Vec::new();
    for t in &doc.transitions {
        let map = t.map.iter().map(Scalar::to_expr).collect::<Result<Vec<_>>>()?;
        let overlap = t.overlap.as_deref().map(Expr::parse).transpose()?;
        transitions.push(Transition {
            from: t.from.clone(),
            to: t.to.clone(),
            map,
            overlap,
        });
    }
    let mut weights = BTreeMap::new();
    for (name, table) in &doc.weights {
        let per_chart = ids
            .iter()
            .map(|id| {
                lookup(table, id)
                    .ok_or_else(|| missing("weight", name, id))
                    .and_then(Scalar::to_expr)
            })
            .collect::<Result<Vec<_>>>()?;
        weights.insert(name.clone(), WeightFamily { per_chart });
    }
    let mut fields = BTreeMap::new();
    for (name, table) in &doc.fields {
        let per_chart = ids
            .iter()
            .map(|id| {
                lookup(table, id)
                    .ok_or_else(|| missing("field", name, id))
                    .and_then(|v| v.iter().map(Scalar::to_expr).collect::<Result<Vec<_>>>())
            })
            .collect::<Result<Vec<_>>>()?;
        fields.insert(name.clone(), FieldFamily { per_chart });
    }
    ManifoldSpec::new(charts, transitions, weights, fields, doc.grid_resolution)
}

fn lookup<'a, T>(table: &'a BTreeMap<String, T>, id: &str) -> Option<&'a T> {
    table.get(id).or_else(|| table.get(DEFAULT_KEY))
}

fn missing(kind: &str, name: &str, chart: &str) -> Error {
    Error::InvariantViolation(vec![format!(
        "{kind} `{name}` has no entry for chart `{chart}` and no `*` default"
    )])
}

fn chart_from_doc(c: &ChartDoc) -> Result<Chart> {
    let d = c.dim;
    let extent = match &c.domain.extent {
        Extent::One(e) => vec![*e; d],
        Extent::Many(v) if c.domain.shape == Shape::Ball && !v.is_empty() => vec![v[0]; d],
        Extent::Many(v) => v.clone(),
    };
    let metric = c
        .metric
        .iter()
        .map(|row| row.iter().map(Scalar::to_expr).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Chart {
        id: c.id.clone(),
        dim: d,
        domain: Region {
            shape: c.domain.shape,
            center: c.domain.center.clone(),
            extent,
            norm: c.domain.norm,
        },
        metric,
        r: c.r,
        pad: c.pad,
        epsilon: c.epsilon,
    })
}

impl ManifoldSpec {
    /// Serialise to the TOML format read by [`load_manifold`].
    pub fn to_toml(&self) -> String {
        let charts = self
            .charts
            .iter()
            .map(|c| ChartDoc {
                id: c.id.clone(),
                dim: c.dim,
                r: c.r,
                pad: c.pad,
                epsilon: c.epsilon,
                metric: c.metric.iter().map(|row| row.iter().map(expr_scalar).collect()).collect(),
                domain: DomainDoc {
                    shape: c.domain.shape,
                    center: c.domain.center.clone(),
                    extent: match c.domain.shape {
                        Shape::Ball => Extent::One(c.domain.extent[0]),
                        Shape::Box => Extent::Many(c.domain.extent.clone()),
                    },
                    norm: c.domain.norm,
                },
            })
            .collect();
        let transitions = self
            .transitions
            .iter()
            .map(|t| TransitionDoc {
                from: t.from.clone(),
                to: t.to.clone(),
                map: t.map.iter().map(expr_scalar).collect(),
                overlap: t.overlap.as_ref().map(|e| e.to_string()),
            })
            .collect();
        let weights = self
            .weights
            .iter()
            .map(|(name, fam)| {
                let table = compress(fam.per_chart.iter().map(expr_scalar).collect(), self);
                (name.clone(), table)
            })
            .collect();
        let fields = self
            .fields
            .iter()
            .map(|(name, fam)| {
                let rows: Vec<Vec<Scalar>> = fam.per_chart.iter().map(|v| v.iter().map(expr_scalar).collect()).collect();
                (name.clone(), compress(rows, self))
            })
            .collect();
        let doc = SpecDoc {
            grid_resolution: self.grid_resolution,
            charts,
            transitions,
            weights,
            fields,
        };
        toml::to_string(&doc).expect("manifold description serialises")
    }
}

fn expr_scalar(e: &Expr) -> Scalar {
    match e {
        Expr::Num(v) if *v >= 0.0 => Scalar::Num(*v),
        _ => Scalar::Text(e.to_string()),
    }
}

/// Use the `*` key when every chart carries the same entry.
fn compress<T: Serialize + Clone>(rows: Vec<T>, spec: &ManifoldSpec) -> BTreeMap<String, T> {
    let as_json: Vec<String> = rows.iter().map(|r| serde_json::to_string(r).unwrap_or_default()).collect();
    let mut out = BTreeMap::new();
    if !rows.is_empty() && as_json.iter().all(|s| s == &as_json[0]) {
        out.insert(DEFAULT_KEY.to_string(), rows[0].clone());
    } else {
        for (c, r) in spec.charts.iter().zip(rows) {
            out.insert(c.id.clone(), r);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CHARTS: &str = r#"
grid_resolution = 9

[[charts]]
id = "a"
dim = 1
r = 0.75
R = 0.125
epsilon = 0.03
metric = [["1"]]
domain = { shape = "ball", center = [0.0], extent = 1.0, norm = "sup" }

[[charts]]
id = "b"
dim = 1
r = 0.75
R = 0.125
epsilon = 0.03
metric = [[1.0]]
domain = { shape = "ball", center = [1.0], extent = 1.0 }

[[transitions]]
from = "a"
to = "b"
map = ["x1"]

[[transitions]]
from = "b"
to = "a"
map = ["x1"]

[weights.one]
"*" = "1"

[fields.wave]
"*" = ["0.01*sin(x1)"]
"#;

    #[test]
    fn parses_and_round_trips() {
        let spec = parse_manifold(TWO_CHARTS).unwrap();
        assert_eq!(spec.charts.len(), 2);
        assert_eq!(spec.grid_resolution, 9);
        let again = parse_manifold(&spec.to_toml()).unwrap();
        assert_eq!(again.charts.len(), 2);
        assert_eq!(again.charts[1].domain, spec.charts[1].domain);
        assert_eq!(again.fields["wave"].per_chart[0][0], spec.fields["wave"].per_chart[0][0]);
    }

    #[test]
    fn missing_reverse_transition() {
        let cut = TWO_CHARTS.replace("[[transitions]]\nfrom = \"b\"\nto = \"a\"\nmap = [\"x1\"]\n", "");
        assert!(matches!(parse_manifold(&cut), Err(Error::MissingTransition(_, _))));
    }

    #[test]
    fn syntax_errors_surface() {
        assert!(matches!(parse_manifold("charts = 3"), Err(Error::Parse(_))));
        let bad = TWO_CHARTS.replace("0.01*sin(x1)", "0.01*sin(x1");
        assert!(matches!(parse_manifold(&bad), Err(Error::Syntax { .. })));
    }
}
