//! Chart-based manifold descriptions.

mod format;
mod validate;

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::Region;
use crate::linalg::Norm;

pub use format::{load_manifold, parse_manifold};
pub(crate) use validate::inscribed_radius;
pub use validate::{locally_finite_report, validate_adapted, LocalFiniteness};

#[derive(Debug, Clone)]
pub struct Chart {
    pub id: String,
    pub dim: usize,
    pub domain: Region,
    pub metric: Vec<Vec<Expr>>,
    /// Inner radius `r`.
    pub r: f64,
    /// Padding `R`.
    pub pad: f64,
    pub epsilon: f64,
}

impl Chart {
    pub fn norm(&self) -> Norm {
        self.domain.norm
    }

    pub fn center(&self) -> &[f64] {
        &self.domain.center
    }

    pub fn extent(&self) -> f64 {
        self.domain.max_extent()
    }

    pub fn inner_ball(&self) -> Region {
        Region::ball(self.domain.center.clone(), self.r, self.norm())
    }

    pub fn padded_ball(&self) -> Region {
        Region::ball(self.domain.center.clone(), self.r + self.pad, self.norm())
    }

    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.metric[i][j].eval(x))
    }

    pub fn metric_is_constant(&self) -> bool {
        self.metric.iter().flatten().all(Expr::is_constant)
    }
}

/// Coordinate change from chart `from` to chart `to`.
#[derive(Debug, Clone)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub map: Vec<Expr>,
    /// Extra restriction of the overlap in `from` coordinates: inside iff > 0.
    pub overlap: Option<Expr>,
}

impl Transition {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.map.iter().map(|e| e.eval(x)).collect()
    }
}

/// A named family of expressions, one entry per chart (indexed like `charts`).
#[derive(Debug, Clone)]
pub struct WeightFamily {
    pub per_chart: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct FieldFamily {
    pub per_chart: Vec<Vec<Expr>>,
}

#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub charts: Vec<Chart>,
    pub transitions: Vec<Transition>,
    pub weights: BTreeMap<String, WeightFamily>,
    pub fields: BTreeMap<String, FieldFamily>,
    pub grid_resolution: usize,
    index: HashMap<String, usize>,
    pairs: HashMap<(usize, usize), usize>,
    adjacency: Vec<Vec<usize>>,
}

impl ManifoldSpec {
    /// Assemble and validate. Structural problems and sampled invariant
    /// violations are reported together.
    pub fn new(
        charts: Vec<Chart>,
        transitions: Vec<Transition>,
        weights: BTreeMap<String, WeightFamily>,
        fields: BTreeMap<String, FieldFamily>,
        grid_resolution: usize,
    ) -> Result<ManifoldSpec> {
        let spec = Self::assemble(charts, transitions, weights, fields, grid_resolution)?;
        let violations = validate::structural_violations(&spec);
        if !violations.is_empty() {
            return Err(Error::InvariantViolation(violations));
        }
        Ok(spec)
    }

    /// Assemble without sampled validation.
    pub fn assemble(
        charts: Vec<Chart>,
        transitions: Vec<Transition>,
        weights: BTreeMap<String, WeightFamily>,
        fields: BTreeMap<String, FieldFamily>,
        grid_resolution: usize,
    ) -> Result<ManifoldSpec> {
        let mut index = HashMap::new();
        let mut problems = Vec::new();
        for (i, c) in charts.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                problems.push(format!("duplicate chart id `{}`", c.id));
            }
        }
        let mut pairs = HashMap::new();
        for (t_idx, t) in transitions.iter().enumerate() {
            let (Some(&a), Some(&b)) = (index.get(&t.from), index.get(&t.to)) else {
                problems.push(format!("transition `{}` -> `{}` names an unknown chart", t.from, t.to));
                continue;
            };
            if a == b {
                problems.push(format!("transition from `{}` to itself", t.from));
                continue;
            }
            if pairs.insert((a, b), t_idx).is_some() {
                problems.push(format!("duplicate transition `{}` -> `{}`", t.from, t.to));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvariantViolation(problems));
        }
        for &(a, b) in pairs.keys() {
            if !pairs.contains_key(&(b, a)) {
                return Err(Error::MissingTransition(charts[b].id.clone(), charts[a].id.clone()));
            }
        }
        let mut adjacency = vec![Vec::new(); charts.len()];
        for &(a, b) in pairs.keys() {
            adjacency[a].push(b);
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        Ok(ManifoldSpec {
            adjacency,
            charts,
            transitions,
            weights,
            fields,
            grid_resolution: grid_resolution.max(2),
            index,
            pairs,
        })
    }

    pub fn chart_index(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownChart(id.to_string()))
    }

    pub fn chart(&self, id: &str) -> Result<&Chart> {
        Ok(&self.charts[self.chart_index(id)?])
    }

    pub fn dim(&self) -> usize {
        self.charts.first().map_or(0, |c| c.dim)
    }

    pub fn transition(&self, from: usize, to: usize) -> Option<&Transition> {
        self.pairs.get(&(from, to)).map(|&t| &self.transitions[t])
    }

    /// Indices of the charts with a declared transition out of `i`, sorted.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Coordinates in chart `to` of the point with coordinates `x` in chart
    /// `from`, if the point lies in both chart domains.
    pub fn to_chart(&self, from: usize, x: &[f64], to: usize) -> Option<Vec<f64>> {
        if !self.charts[from].domain.contains(x) {
            return None;
        }
        if from == to {
            return Some(x.to_vec());
        }
        let t = self.transition(from, to)?;
        if let Some(pred) = &t.overlap {
            if !(pred.eval(x) > 0.0) {
                return None;
            }
        }
        let y = t.apply(x);
        if self.charts[to].domain.contains(&y) {
            Some(y)
        } else {
            None
        }
    }

    /// All charts whose domain contains the point, with its coordinates there.
    pub fn charts_containing(&self, from: usize, x: &[f64]) -> Vec<(usize, Vec<f64>)> {
        let mut out = Vec::new();
        if let Some(p) = self.to_chart(from, x, from) {
            out.push((from, p));
        } else {
            return out;
        }
        for &j in self.neighbors(from) {
            if let Some(y) = self.to_chart(from, x, j) {
                out.push((j, y));
            }
        }
        out.sort_by_key(|(j, _)| *j);
        out
    }

    /// Differential of the transition `from -> to` at `x` (central differences).
    pub fn transition_jacobian(&self, from: usize, to: usize, x: &[f64]) -> DMatrix<f64> {
        let d = self.charts[from].dim;
        if from == to {
            return DMatrix::identity(d, d);
        }
        let t = self
            .transition(from, to)
            .expect("transition_jacobian called for undeclared pair");
        let h = 1e-6 * self.charts[from].extent().max(1e-3);
        let mut j = DMatrix::zeros(self.charts[to].dim, d);
        let mut xp = x.to_vec();
        for c in 0..d {
            xp[c] = x[c] + h;
            let fp = t.apply(&xp);
            xp[c] = x[c] - h;
            let fm = t.apply(&xp);
            xp[c] = x[c];
            for r in 0..fp.len() {
                j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    /// Chart-change law for vector fields: the representative in chart `to`
    /// of the vector `v` attached at `x` in chart `from`.
    pub fn push_vector(&self, from: usize, to: usize, x: &[f64], v: &[f64]) -> Vec<f64> {
        let j = self.transition_jacobian(from, to, x);
        crate::linalg::mat_vec(&j, v)
    }

    /// Sample spacing used for seminorm grids in chart `i`.
    pub fn spacing(&self, i: usize) -> f64 {
        2.0 * self.charts[i].extent() / (self.grid_resolution.max(2) - 1) as f64
    }

    pub fn field(&self, name: &str) -> Result<&FieldFamily> {
        self.fields.get(name).ok_or_else(|| Error::UnknownField(name.to_string()))
    }

    pub fn weight(&self, name: &str) -> Result<&WeightFamily> {
        self.weights.get(name).ok_or_else(|| Error::UnknownWeight(name.to_string()))
    }

    /// Same atlas at a different sampling resolution.
    pub fn with_resolution(&self, grid_resolution: usize) -> ManifoldSpec {
        ManifoldSpec {
            grid_resolution: grid_resolution.max(2),
            ..self.clone()
        }
    }
}
