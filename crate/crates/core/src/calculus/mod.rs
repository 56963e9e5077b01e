//! Localized vector fields, weighted seminorms and atlas comparisons.

mod atlas;
mod seminorm;
mod tabulation;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fd;
use crate::manifold::ManifoldSpec;

pub use atlas::{
    chart_change_transfer, compatibility_residual, intersect_atlas_seminorm, subordinate_restrict, IntersectReport, Restriction,
    TransferEntry, TransferReport,
};
pub use seminorm::{
    membership, seminorm, seminorm_filtered, seminorm_on, Argmax, Atlas, Constant, SampleRegion, Seminorm, WeightFn, DEFAULT_CAP,
};
pub use tabulation::Tabulation;

/// Highest derivative order the finite-difference machinery supports.
pub const MAX_ORDER: usize = 3;

pub type FieldFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Step for nested differences of order `order` on a chart of the given extent.
pub fn fd_step(order: usize, extent: f64) -> f64 {
    1e-3 * extent.powf(1.0 / (1u32 << order.min(8)) as f64)
}

/// One chart representative.
#[derive(Clone)]
pub enum ChartField {
    Zero,
    Expr(Vec<Expr>),
    Tabulated(Tabulation),
    Eval(FieldFn),
}

impl fmt::Debug for ChartField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartField::Zero => write!(f, "Zero"),
            ChartField::Expr(e) => f.debug_tuple("Expr").field(e).finish(),
            ChartField::Tabulated(t) => f.debug_tuple("Tabulated").field(&t.nodes()).finish(),
            ChartField::Eval(_) => write!(f, "Eval(..)"),
        }
    }
}

impl ChartField {
    pub fn value(&self, x: &[f64], width: usize) -> Result<Vec<f64>> {
        match self {
            ChartField::Zero => Ok(vec![0.0; width]),
            ChartField::Expr(e) => Ok(e.iter().map(|c| c.eval(x)).collect()),
            ChartField::Tabulated(t) => t.value(x),
            ChartField::Eval(f) => f(x),
        }
    }

    /// `D^order` at `x` stored `[value][i1]..[i_order]`, or `None` where a
    /// tabulation lacks the neighbouring nodes.
    pub fn derivative(&self, x: &[f64], order: usize, h: f64, width: usize) -> Result<Option<Vec<f64>>> {
        let d = x.len();
        match self {
            ChartField::Zero => Ok(Some(vec![0.0; width * d.pow(order as u32)])),
            ChartField::Tabulated(t) => Ok(t.derivative(x, order)),
            ChartField::Expr(_) | ChartField::Eval(_) => {
                let f = |z: &[f64]| self.value(z, width);
                fd::derivative(&f, x, order, h).map(Some)
            }
        }
    }
}

/// A vector field (or, with `slots > 0`, a field of multilinear maps) given
/// by one representative per chart.
#[derive(Clone, Debug)]
pub struct LocalizedField {
    pub name: String,
    pub dim: usize,
    /// Number of input slots of each value; 0 for vector fields.
    pub slots: usize,
    pub charts: Vec<ChartField>,
}

impl LocalizedField {
    pub fn from_spec(spec: &ManifoldSpec, name: &str) -> Result<LocalizedField> {
        let fam = spec.field(name)?;
        Ok(LocalizedField {
            name: name.to_string(),
            dim: spec.dim(),
            slots: 0,
            charts: fam.per_chart.iter().map(|c| ChartField::Expr(c.clone())).collect(),
        })
    }

    pub fn zero(spec: &ManifoldSpec) -> LocalizedField {
        LocalizedField {
            name: "zero".into(),
            dim: spec.dim(),
            slots: 0,
            charts: vec![ChartField::Zero; spec.charts.len()],
        }
    }

    /// The same expressions on every chart.
    pub fn uniform(spec: &ManifoldSpec, name: &str, components: &[&str]) -> Result<LocalizedField> {
        let d = spec.dim();
        if components.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: components.len(),
            });
        }
        let exprs = components.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        if let Some(e) = exprs.iter().find(|e| e.arity() > d) {
            return Err(Error::UnknownIdentifier(format!("x{}", e.arity())));
        }
        Ok(LocalizedField {
            name: name.to_string(),
            dim: d,
            slots: 0,
            charts: vec![ChartField::Expr(exprs); spec.charts.len()],
        })
    }

    pub fn from_fns(name: &str, dim: usize, fns: Vec<FieldFn>) -> LocalizedField {
        LocalizedField {
            name: name.to_string(),
            dim,
            slots: 0,
            charts: fns.into_iter().map(ChartField::Eval).collect(),
        }
    }

    /// Components per value.
    pub fn width(&self) -> usize {
        self.dim.pow(self.slots as u32 + 1)
    }

    pub fn value(&self, chart: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.charts[chart].value(x, self.width())
    }

    pub fn derivative(&self, chart: usize, x: &[f64], order: usize, extent: f64) -> Result<Option<Vec<f64>>> {
        if order > MAX_ORDER {
            return Err(Error::OrderUnavailable {
                requested: order,
                available: MAX_ORDER,
            });
        }
        self.charts[chart].derivative(x, order, fd_step(order, extent), self.width())
    }

    /// Tabulate every chart on its sampling lattice over `region(i)`,
    /// widened by `margin` cells where the chart domain allows.
    pub fn tabulate(&self, spec: &ManifoldSpec, atlas: Atlas, margin: usize) -> Result<LocalizedField> {
        let mut charts = Vec::with_capacity(self.charts.len());
        for (i, cf) in self.charts.iter().enumerate() {
            let Some(sr) = atlas.sample_region(spec, i) else {
                charts.push(ChartField::Zero);
                continue;
            };
            let c = &spec.charts[i];
            let width = self.width();
            let t = Tabulation::sample(&sr.region, &c.domain, &sr.origin, sr.h, margin, width, |x| cf.value(x, width))?;
            charts.push(ChartField::Tabulated(t));
        }
        Ok(LocalizedField {
            name: self.name.clone(),
            dim: self.dim,
            slots: self.slots,
            charts,
        })
    }

    /// The family of first derivatives `DX_κ`, tabulated on the nodes of
    /// `self` (which must be tabulated) or of the given atlas lattice.
    pub fn derivative_family(&self, spec: &ManifoldSpec, atlas: Atlas) -> Result<LocalizedField> {
        let width = self.width() * self.dim;
        let mut charts = Vec::with_capacity(self.charts.len());
        for (i, cf) in self.charts.iter().enumerate() {
            let t = match cf {
                ChartField::Tabulated(t) => t.derivative_table(),
                _ => {
                    let Some(sr) = atlas.sample_region(spec, i) else {
                        charts.push(ChartField::Zero);
                        continue;
                    };
                    let h = fd_step(1, spec.charts[i].extent());
                    let w = self.width();
                    Tabulation::sample(&sr.region, &spec.charts[i].domain, &sr.origin, sr.h, MAX_ORDER, width, |x| {
                        Ok(cf.derivative(x, 1, h, w)?.expect("closed-form derivative"))
                    })?
                }
            };
            charts.push(ChartField::Tabulated(t));
        }
        Ok(LocalizedField {
            name: format!("D{}", self.name),
            dim: self.dim,
            slots: self.slots + 1,
            charts,
        })
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &LocalizedField, b: f64) -> Result<LocalizedField> {
        if self.dim != other.dim || self.slots != other.slots || self.charts.len() != other.charts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.charts.len(),
                got: other.charts.len(),
            });
        }
        let width = self.width();
        let charts = self
            .charts
            .iter()
            .zip(&other.charts)
            .map(|(p, q)| match (p, q) {
                (ChartField::Tabulated(s), ChartField::Tabulated(t)) if s.same_lattice(t) => {
                    ChartField::Tabulated(s.combine(a, t, b))
                }
                _ => {
                    let (p, q) = (p.clone(), q.clone());
                    ChartField::Eval(Arc::new(move |x: &[f64]| {
                        let u = p.value(x, width)?;
                        let v = q.value(x, width)?;
                        Ok(u.iter().zip(&v).map(|(s, t)| a * s + b * t).collect())
                    }))
                }
            })
            .collect();
        Ok(LocalizedField {
            name: format!("{a}*{}+{b}*{}", self.name, other.name),
            dim: self.dim,
            slots: self.slots,
            charts,
        })
    }

    pub fn scaled(&self, c: f64) -> LocalizedField {
        let width = self.width();
        let charts = self
            .charts
            .iter()
            .map(|p| match p {
                ChartField::Zero => ChartField::Zero,
                ChartField::Tabulated(t) => ChartField::Tabulated(t.combine(c, t, 0.0)),
                _ => {
                    let p = p.clone();
                    ChartField::Eval(Arc::new(move |x: &[f64]| {
                        Ok(p.value(x, width)?.into_iter().map(|v| c * v).collect())
                    }))
                }
            })
            .collect();
        LocalizedField {
            name: format!("{c}*{}", self.name),
            dim: self.dim,
            slots: self.slots,
            charts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    #[test]
    fn derivative_family_matches_next_order() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let spec = o.spec.with_resolution(65);
        let x = LocalizedField::uniform(&spec, "s", &["sin(3*x1)"]).unwrap();
        let tab = x.tabulate(&spec, Atlas::A, MAX_ORDER).unwrap();
        let dx = tab.derivative_family(&spec, Atlas::A).unwrap();
        let one = Constant(1.0);
        for l in 0..2 {
            let a = seminorm(&spec, &tab, &one, l + 1, Atlas::A).unwrap();
            let b = seminorm(&spec, &dx, &one, l, Atlas::A).unwrap();
            assert!((a.value - b.value).abs() < 1e-5, "{l}: {} vs {}", a.value, b.value);
        }
    }

    #[test]
    fn combine_is_linear() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let x = LocalizedField::uniform(&o.spec, "x", &["x1", "x2^2"]).unwrap();
        let y = LocalizedField::uniform(&o.spec, "y", &["1", "x1"]).unwrap();
        let z = x.combine(2.0, &y, -1.0).unwrap();
        let v = z.value(0, &[0.5, 0.25]).unwrap();
        assert_eq!(v, vec![0.0, 2.0 * 0.0625 - 0.5]);
    }
}
