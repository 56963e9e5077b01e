//! Analytic fixtures: atlases with closed-form exponential and logarithm.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{BinOp, Expr};
use crate::grid::{Region, Shape};
use crate::linalg::Norm;
use crate::manifold::{Chart, FieldFamily, ManifoldSpec, Transition, WeightFamily};

fn e(src: &str) -> Expr {
    Expr::parse(src).expect("fixture expression")
}

fn plus_const(var: usize, c: f64) -> Expr {
    if c == 0.0 {
        Expr::Var(var)
    } else {
        Expr::Bin(BinOp::Add, Box::new(Expr::Var(var)), Box::new(Expr::constant(c)))
    }
}

fn identity_map(d: usize) -> Vec<Expr> {
    (0..d).map(Expr::Var).collect()
}

fn scaled_identity(d: usize, c: f64) -> Vec<Vec<Expr>> {
    (0..d)
        .map(|i| (0..d).map(|j| Expr::constant(if i == j { c } else { 0.0 })).collect())
        .collect()
}

fn uniform<T: Clone>(n: usize, v: T) -> Vec<T> {
    vec![v; n]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    Flat { d: usize, r1: f64, r2: f64 },
    ScaledFlat { d: usize, c: f64 },
    Cylinder { length: f64, n_charts: usize },
    HalfPlane { lo: f64, hi: f64 },
    Rotated { angle: f64 },
}

/// A generated atlas together with its exact geodesics.
#[derive(Debug, Clone)]
pub struct OracleManifold {
    pub kind: OracleKind,
    pub spec: ManifoldSpec,
}

impl OracleManifold {
    /// Closed-form exponential in chart coordinates.
    pub fn exp(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self.kind {
            OracleKind::HalfPlane { .. } => half_plane_exp(x, y),
            _ => x.iter().zip(y).map(|(a, b)| a + b).collect(),
        }
    }

    /// Closed-form logarithm in chart coordinates.
    pub fn log(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        match self.kind {
            OracleKind::HalfPlane { .. } => half_plane_log(x, z),
            _ => z.iter().zip(x).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self.kind, OracleKind::HalfPlane { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatConfig {
    pub d: usize,
    pub r1: f64,
    pub r2: f64,
    /// Lattice points `{-n..n}^d`.
    pub half_width: i64,
    /// Translation of every chart center.
    pub offset: f64,
    pub metric_scale: f64,
    pub norm: Norm,
    pub grid_resolution: usize,
}

impl Default for FlatConfig {
    fn default() -> Self {
        FlatConfig {
            d: 2,
            r1: 1.0,
            r2: 0.75,
            half_width: 1,
            offset: 0.0,
            metric_scale: 1.0,
            norm: Norm::Sup,
            grid_resolution: 33,
        }
    }
}

pub fn lattice_id(k: &[i64]) -> String {
    let parts: Vec<String> = k.iter().map(|v| v.to_string()).collect();
    format!("c_{}", parts.join("_"))
}

fn lattice(d: usize, n: i64) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                (-n..=n).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }
    out
}

/// Integer lattice atlas of sup-norm balls `B(k, r1)` with identity
/// transitions; inner radius `r2` and padding `(r1 - r2)/2`.
pub fn flat_oracle(d: usize, r1: f64, r2: f64) -> Result<OracleManifold> {
    if !(1.0 >= r1 && r1 > r2 && r2 > 0.5) {
        return Err(Error::RadiiOrderViolation { r1, r2 });
    }
    flat_oracle_with(FlatConfig {
        d,
        r1,
        r2,
        ..Default::default()
    })
}

/// Lattice atlas without the radius restrictions of [`flat_oracle`].
pub fn flat_oracle_with(cfg: FlatConfig) -> Result<OracleManifold> {
    let FlatConfig { d, r1, r2, .. } = cfg;
    if !(r1 > r2 && r2 > 0.0) || d == 0 {
        return Err(Error::RadiiOrderViolation { r1, r2 });
    }
    let pad = 0.5 * (r1 - r2);
    let epsilon = f64::min(0.03, 0.25 * (r1 - r2) / (r1 + r2));
    let points = lattice(d, cfg.half_width);
    let charts: Vec<Chart> = points
        .iter()
        .map(|k| Chart {
            id: lattice_id(k),
            dim: d,
            domain: Region::ball(k.iter().map(|v| *v as f64 + cfg.offset).collect(), r1, cfg.norm),
            metric: scaled_identity(d, cfg.metric_scale),
            r: r2,
            pad,
            epsilon,
        })
        .collect();
    let mut transitions = Vec::new();
    for (a, ka) in points.iter().enumerate() {
        for (b, kb) in points.iter().enumerate() {
            if a == b {
                continue;
            }
            let gap: Vec<f64> = ka.iter().zip(kb).map(|(p, q)| (p - q) as f64).collect();
            if cfg.norm.of(&gap) < 2.0 * r1 {
                transitions.push(Transition {
                    from: charts[a].id.clone(),
                    to: charts[b].id.clone(),
                    map: identity_map(d),
                    overlap: None,
                });
            }
        }
    }
    let n = charts.len();
    let mut weights = BTreeMap::new();
    weights.insert(
        "one".to_string(),
        WeightFamily {
            per_chart: uniform(n, e("1")),
        },
    );
    let sq = (1..=d).map(|i| format!("x{i}^2")).collect::<Vec<_>>().join(" + ");
    weights.insert(
        "poly".to_string(),
        WeightFamily {
            per_chart: uniform(n, e(&format!("1 + {sq}"))),
        },
    );
    let mut fields = BTreeMap::new();
    fields.insert(
        "zero".to_string(),
        FieldFamily {
            per_chart: uniform(n, vec![e("0"); d]),
        },
    );
    fields.insert(
        "drift".to_string(),
        FieldFamily {
            per_chart: uniform(n, vec![e("0.002"); d]),
        },
    );
    fields.insert(
        "bump".to_string(),
        FieldFamily {
            per_chart: uniform(n, vec![e(&format!("0.002*max(0, 1 - 4*({sq}))^3")); d]),
        },
    );
    let spec = ManifoldSpec::new(charts, transitions, weights, fields, cfg.grid_resolution)?;
    let kind = if cfg.metric_scale == 1.0 {
        OracleKind::Flat { d, r1, r2 }
    } else {
        OracleKind::ScaledFlat { d, c: cfg.metric_scale }
    };
    Ok(OracleManifold { kind, spec })
}

/// Single chart `U = B(0, 2)` with inner ball `B(0, 1)` and metric `c·Id`.
pub fn scaled_flat_oracle(d: usize, c: f64) -> Result<OracleManifold> {
    if !(c > 0.0) {
        return Err(Error::InvariantViolation(vec![format!("metric scale {c} is not positive")]));
    }
    let mut o = flat_oracle_with(FlatConfig {
        d,
        r1: 2.0,
        r2: 1.0,
        half_width: 0,
        metric_scale: c,
        ..Default::default()
    })?;
    o.kind = OracleKind::ScaledFlat { d, c };
    Ok(o)
}

/// Truncated cylinder `R × S¹` in covering coordinates `(x, θ)`:
/// `n_charts` angular charts per column and columns covering `|x| ≤ length`.
/// Transitions shift `θ` by multiples of `2π`.
pub fn cylinder_oracle(length: f64, n_charts: usize) -> Result<OracleManifold> {
    if n_charts < 3 {
        return Err(Error::InvariantViolation(vec![format!(
            "a cylinder needs at least 3 angular charts, got {n_charts}"
        )]));
    }
    let s = 3.0 / n_charts as f64;
    let half = 1.6 * s;
    let columns = ((length / (2.0 * s)).round() as i64).max(1);
    let mut keys = Vec::new();
    let mut charts = Vec::new();
    for i in -columns..=columns {
        for j in 0..n_charts {
            let theta = 2.0 * PI * j as f64 / n_charts as f64;
            keys.push((i, j, theta));
            charts.push(Chart {
                id: format!("c_{i}_{j}"),
                dim: 2,
                domain: Region::boxed(vec![2.0 * s * i as f64, theta], vec![half, half], Norm::Sup),
                metric: scaled_identity(2, 1.0),
                r: 1.2 * s,
                pad: 0.3 * s,
                epsilon: 0.08,
            });
        }
    }
    let mut transitions = Vec::new();
    for (a, &(ia, _, ta)) in keys.iter().enumerate() {
        for (b, &(ib, _, tb)) in keys.iter().enumerate() {
            if a == b || (ia - ib).abs() > 1 {
                continue;
            }
            let m = ((tb - ta) / (2.0 * PI)).round();
            // angular gap on the chosen branch
            let gap = (ta + 2.0 * PI * m - tb).abs();
            if gap >= 2.0 * half {
                continue;
            }
            transitions.push(Transition {
                from: charts[a].id.clone(),
                to: charts[b].id.clone(),
                map: vec![Expr::Var(0), plus_const(1, 2.0 * PI * m)],
                overlap: None,
            });
        }
    }
    let n = charts.len();
    let mut weights = BTreeMap::new();
    weights.insert(
        "one".to_string(),
        WeightFamily {
            per_chart: uniform(n, e("1")),
        },
    );
    for p in 0..=4 {
        let src = if p == 0 { "1".to_string() } else { format!("x1^{p}") };
        weights.insert(
            format!("pow{p}"),
            WeightFamily {
                per_chart: uniform(n, e(&src)),
            },
        );
    }
    let mut fields = BTreeMap::new();
    fields.insert(
        "gamma".to_string(),
        FieldFamily {
            per_chart: uniform(n, vec![e("exp(-x1^2)*cos(x2)"), e("0")]),
        },
    );
    fields.insert(
        "spin".to_string(),
        FieldFamily {
            per_chart: uniform(n, vec![e("0"), e("0.01")]),
        },
    );
    fields.insert(
        "zero".to_string(),
        FieldFamily {
            per_chart: uniform(n, vec![e("0"), e("0")]),
        },
    );
    let spec = ManifoldSpec::new(charts, transitions, weights, fields, 25)?;
    Ok(OracleManifold {
        kind: OracleKind::Cylinder { length, n_charts },
        spec,
    })
}

/// One box chart on the strip `lo < x2 < hi` of the upper half-plane with
/// the hyperbolic metric `Id / x2²`.
pub fn half_plane_oracle(lo: f64, hi: f64) -> Result<OracleManifold> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvariantViolation(vec![format!(
            "strip [{lo}, {hi}] must satisfy 0 < lo < hi"
        )]));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let g = e("1/x2^2");
    let chart = Chart {
        id: "strip".to_string(),
        dim: 2,
        domain: Region::boxed(vec![0.0, mid], vec![half, half], Norm::Sup),
        metric: vec![vec![g.clone(), Expr::constant(0.0)], vec![Expr::constant(0.0), g]],
        r: 0.5 * half,
        pad: 0.4 * half,
        epsilon: 0.1,
    };
    let mut weights = BTreeMap::new();
    weights.insert("one".to_string(), WeightFamily { per_chart: vec![e("1")] });
    let mut fields = BTreeMap::new();
    fields.insert(
        "zero".to_string(),
        FieldFamily {
            per_chart: vec![vec![e("0"), e("0")]],
        },
    );
    let spec = ManifoldSpec::new(vec![chart], vec![], weights, fields, 33)?;
    Ok(OracleManifold {
        kind: OracleKind::HalfPlane { lo, hi },
        spec,
    })
}

/// Two euclidean unit-ball charts of the same disc whose coordinates differ
/// by a rotation.
pub fn rotated_pair_oracle(angle: f64) -> Result<OracleManifold> {
    let (c, s) = (angle.cos(), angle.sin());
    let rot = |c: f64, s: f64| vec![e(&format!("({c:?})*x1 - ({s:?})*x2")), e(&format!("({s:?})*x1 + ({c:?})*x2"))];
    let chart = |id: &str| Chart {
        id: id.to_string(),
        dim: 2,
        domain: Region::ball(vec![0.0, 0.0], 1.0, Norm::Euclidean),
        metric: scaled_identity(2, 1.0),
        r: 0.5,
        pad: 0.25,
        epsilon: 0.1,
    };
    let transitions = vec![
        Transition {
            from: "a".into(),
            to: "b".into(),
            map: rot(c, s),
            overlap: None,
        },
        Transition {
            from: "b".into(),
            to: "a".into(),
            map: rot(c, -s),
            overlap: None,
        },
    ];
    let mut weights = BTreeMap::new();
    weights.insert(
        "one".to_string(),
        WeightFamily {
            per_chart: uniform(2, e("1")),
        },
    );
    let spec = ManifoldSpec::new(vec![chart("a"), chart("b")], transitions, weights, BTreeMap::new(), 33)?;
    Ok(OracleManifold {
        kind: OracleKind::Rotated { angle },
        spec,
    })
}

/// Single-chart spec with a constant metric, for comparison-constant tests.
pub fn custom_metric_chart(metric: Vec<Vec<String>>, norm: Norm) -> Result<ManifoldSpec> {
    let d = metric.len();
    let metric = metric
        .iter()
        .map(|row| row.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let chart = Chart {
        id: "c".into(),
        dim: d,
        domain: Region {
            shape: Shape::Ball,
            center: vec![0.0; d],
            extent: vec![1.0; d],
            norm,
        },
        metric,
        r: 0.5,
        pad: 0.25,
        epsilon: 0.1,
    };
    ManifoldSpec::new(vec![chart], vec![], BTreeMap::new(), BTreeMap::new(), 17)
}

/// Geodesic of `Id / x2²` through `x` with initial velocity `y`, at time 1.
pub fn half_plane_exp(x: &[f64], y: &[f64]) -> Vec<f64> {
    let (x1, x2) = (x[0], x[1]);
    let (v1, v2) = (y[0], y[1]);
    let speed = (v1 * v1 + v2 * v2).sqrt() / x2;
    if speed == 0.0 {
        return x.to_vec();
    }
    if v1 == 0.0 {
        return vec![x1, x2 * (v2 / x2).exp()];
    }
    let c = x1 + v2 * x2 / v1;
    let rho = ((x1 - c).powi(2) + x2 * x2).sqrt();
    let tau = ((x1 - c) / rho).atanh() + v1.signum() * speed;
    vec![c + rho * tau.tanh(), rho / tau.cosh()]
}

/// Inverse of [`half_plane_exp`] in the velocity.
pub fn half_plane_log(x: &[f64], z: &[f64]) -> Vec<f64> {
    let (x1, x2) = (x[0], x[1]);
    let (z1, z2) = (z[0], z[1]);
    if z1 == x1 {
        return vec![0.0, x2 * (z2 / x2).ln()];
    }
    let c = (z1 * z1 + z2 * z2 - x1 * x1 - x2 * x2) / (2.0 * (z1 - x1));
    let rho = ((x1 - c).powi(2) + x2 * x2).sqrt();
    let delta = ((z1 - c) / rho).atanh() - ((x1 - c) / rho).atanh();
    let k = delta * x2 / rho;
    vec![k * x2, -k * (x1 - c)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{locally_finite_report, validate_adapted};

    #[test]
    fn flat_lattice_shapes() {
        let o = flat_oracle(2, 1.0, 0.75).unwrap();
        assert_eq!(o.spec.charts.len(), 9);
        let c = o.spec.chart("c_0_0").unwrap();
        assert_eq!(c.pad, 0.125);
        assert_eq!(c.epsilon, 0.03);
        let i = o.spec.chart_index("c_0_0").unwrap();
        assert_eq!(o.spec.neighbors(i).len(), 8);
        assert!(validate_adapted(&o.spec).passed);
    }

    #[test]
    fn radii_order() {
        assert!(matches!(flat_oracle(1, 0.75, 0.75), Err(Error::RadiiOrderViolation { .. })));
        assert!(matches!(flat_oracle(1, 1.2, 0.75), Err(Error::RadiiOrderViolation { .. })));
    }

    #[test]
    fn one_dimensional_neighbors() {
        let o = flat_oracle_with(FlatConfig {
            d: 1,
            half_width: 3,
            ..Default::default()
        })
        .unwrap();
        let rep = locally_finite_report(&o.spec);
        assert_eq!(rep.neighbors["c_0"], 2);
        assert_eq!(rep.neighbors["c_3"], 1);
        assert!(rep.unique_point);
    }

    #[test]
    fn cylinder_is_adapted() {
        let o = cylinder_oracle(2.0, 3).unwrap();
        let cert = validate_adapted(&o.spec);
        assert!(cert.passed, "{cert:?}");
        assert!(locally_finite_report(&o.spec).unique_point);
    }

    #[test]
    fn half_plane_closed_forms() {
        let e1 = half_plane_exp(&[0.0, 1.0], &[0.0, 1.0]);
        assert!((e1[1] - std::f64::consts::E).abs() < 1e-14);
        for (x, y) in [
            ([0.1, 1.2], [0.3, -0.2]),
            ([-0.2, 1.5], [-0.1, 0.4]),
            ([0.0, 1.0], [0.2, 0.0]),
        ] {
            let z = half_plane_exp(&x, &y);
            let back = half_plane_log(&x, &z);
            assert!((back[0] - y[0]).abs() < 1e-12 && (back[1] - y[1]).abs() < 1e-12, "{back:?}");
        }
    }

    #[test]
    fn half_plane_strip_is_adapted() {
        let o = half_plane_oracle(1.0, 2.0).unwrap();
        let c = &o.spec.charts[0];
        assert_eq!(c.r, 0.25);
        assert!((c.pad - 0.2).abs() < 1e-15);
        assert!(validate_adapted(&o.spec).passed);
    }
}
