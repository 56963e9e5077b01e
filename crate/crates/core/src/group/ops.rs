use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::DiffeoRep;
use crate::calculus::{seminorm, Atlas, ChartField, Constant, LocalizedField};
use crate::certificate::Certificate;
use crate::engine::{ConstantsReport, ExpOptions, MetricField};
use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;
use crate::weights::Weight;

/// A chart-wise self-map `(κ, x) ↦ φ_κ(x)`.
pub type ChartMap = Arc<dyn Fn(usize, &[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Additive slack for the composition and inversion bounds.
const BOUND_SLACK: f64 = 1e-6;
/// Pointwise agreement required of `exp ∘ Z` with the target map.
const MAP_TOL: f64 = 1e-8;

/// Seminorm thresholds of the neighborhoods `D₁`, `D₂` and `D_ρ`.
#[derive(Debug, Clone, Serialize)]
pub struct NeighborhoodGauge {
    pub rho: f64,
    /// Smallest padding `R` of the atlas.
    pub padding: f64,
    /// Smallest margin `ε` of the atlas.
    pub epsilon: f64,
    pub d1_weighted: f64,
    pub d1_first: f64,
    pub d2_weighted: f64,
    pub drho_weighted: f64,
    pub drho_first: f64,
    pub alpha: f64,
    #[serde(skip)]
    pub omega_e: Weight,
    #[serde(skip)]
    pub omega_l: Weight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeReport {
    /// `‖X‖_{ω^E,0}`.
    pub weighted: f64,
    /// `‖X‖_{1,1}`.
    pub first: f64,
    pub in_d1: bool,
    pub in_d2: bool,
    pub in_drho: bool,
}

impl NeighborhoodGauge {
    pub fn new(spec: &ManifoldSpec, omega_e: Weight, omega_l: Weight, rho: f64) -> Result<NeighborhoodGauge> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::GaugeViolation(format!("rho {rho} outside (0, 1)")));
        }
        let padding = spec.charts.iter().map(|c| c.pad).fold(f64::INFINITY, f64::min);
        let epsilon = spec.charts.iter().map(|c| c.epsilon).fold(f64::INFINITY, f64::min);
        let d2_weighted = f64::min(0.25, padding);
        let drho_weighted = (1.0 - rho) * f64::min(rho, padding) / 2.0;
        let drho_first = f64::min(rho / 2.0, epsilon / 4.0);
        let alpha = [0.5, 0.5, d2_weighted, drho_weighted, drho_first]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        Ok(NeighborhoodGauge {
            rho,
            padding,
            epsilon,
            d1_weighted: 0.5,
            d1_first: 0.5,
            d2_weighted,
            drho_weighted,
            drho_first,
            alpha,
            omega_e,
            omega_l,
        })
    }

    pub fn report(&self, spec: &ManifoldSpec, x: &LocalizedField) -> Result<GaugeReport> {
        let weighted = seminorm(spec, x, &self.omega_e.on(spec), 0, Atlas::A)?.value;
        let first = seminorm(spec, x, &Constant(1.0), 1, Atlas::A)?.value;
        Ok(GaugeReport {
            weighted,
            first,
            in_d1: weighted < self.d1_weighted && first < self.d1_first,
            in_d2: weighted < self.d2_weighted,
            in_drho: weighted < self.drho_weighted && first < self.drho_first,
        })
    }

    fn require(&self, spec: &ManifoldSpec, x: &LocalizedField, set: &str) -> Result<GaugeReport> {
        let r = self.report(spec, x)?;
        let violated = match set {
            "D1" if !(r.weighted < self.d1_weighted) => Some(("weighted", r.weighted, self.d1_weighted)),
            "D1" if !(r.first < self.d1_first) => Some(("first_order", r.first, self.d1_first)),
            "D2" if !(r.weighted < self.d2_weighted) => Some(("weighted", r.weighted, self.d2_weighted)),
            "Drho" if !(r.weighted < self.drho_weighted) => Some(("weighted", r.weighted, self.drho_weighted)),
            "Drho" if !(r.first < self.drho_first) => Some(("first_order", r.first, self.drho_first)),
            _ => None,
        };
        match violated {
            Some((what, v, t)) => Err(Error::GaugeViolation(format!(
                "`{}` not in {set}: {what} seminorm {v:e} >= {t:e}",
                x.name
            ))),
            None => Ok(r),
        }
    }
}

struct Local {
    metrics: Arc<Vec<MetricField>>,
    trust: Arc<Vec<f64>>,
    exp: ExpOptions,
}

impl Local {
    fn new(spec: &ManifoldSpec, constants: &[ConstantsReport]) -> Result<Local> {
        let mut trust = Vec::with_capacity(spec.charts.len());
        for c in &spec.charts {
            let k = constants
                .iter()
                .find(|k| k.chart == c.id)
                .ok_or_else(|| Error::ConstantsMissing(c.id.clone()))?;
            trust.push(k.grenz_exp);
        }
        Ok(Local {
            metrics: Arc::new(spec.charts.iter().map(MetricField::new).collect()),
            trust: Arc::new(trust),
            exp: ExpOptions::default(),
        })
    }

    fn exp_field(&self, x: &LocalizedField, i: usize, p: &[f64]) -> Result<Vec<f64>> {
        let v = x.value(i, p)?;
        self.metrics[i].exp_value(p, &v, self.exp)
    }

    /// The field `κ ↦ log_κ(x, φ_κ(x))`, evaluated lazily.
    fn log_of(&self, name: String, dim: usize, n: usize, phi: ChartMap) -> LocalizedField {
        let charts = (0..n)
            .map(|i| {
                let (metrics, trust, exp, phi) = (self.metrics.clone(), self.trust.clone(), self.exp, phi.clone());
                ChartField::Eval(Arc::new(move |p: &[f64]| {
                    let z = phi(i, p)?;
                    metrics[i]
                        .riemannian_log(p, &z, trust[i], exp)
                        .map(|l| l.value)
                        .map_err(|e| Error::LogDomainExceeded(format!("chart `{}` at {p:?}: {e}", metrics[i].chart.id)))
                }))
            })
            .collect();
        LocalizedField {
            name,
            dim,
            slots: 0,
            charts,
        }
    }
}

/// Inner-ball sample points per chart.
fn inner_points(spec: &ManifoldSpec, res: usize) -> Vec<(usize, Vec<f64>)> {
    spec.charts
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            c.inner_ball()
                .fitted_points(res)
                .into_iter()
                .filter(|p| c.domain.contains(p))
                .map(move |p| (i, p))
        })
        .collect()
}

/// `sup ‖f(κ, x)‖` over the inner-ball samples.
fn sup_over_inner<F>(spec: &ManifoldSpec, res: usize, f: F) -> Result<f64>
where
    F: Fn(usize, &[f64]) -> Result<f64> + Sync,
{
    let vals: Vec<Result<f64>> = inner_points(spec, res).par_iter().map(|(i, p)| f(*i, p)).collect();
    let mut worst: f64 = 0.0;
    for v in vals {
        worst = worst.max(v?);
    }
    Ok(worst)
}

const CHECK_RES: usize = 9;

#[derive(Debug, Clone, Serialize)]
pub struct Composition {
    #[serde(skip)]
    pub field: LocalizedField,
    pub lhs: GaugeReport,
    pub rhs: GaugeReport,
    /// `‖Z‖_{ω^L,0}` on the inner balls.
    pub weighted: f64,
    pub bound: f64,
    /// `sup ‖exp(x, Z(x)) − φ_X(φ_Y(x))‖` on inner-ball samples.
    pub residual: f64,
    pub certificate: Certificate,
}

/// `Z_κ = log_κ ∘ (id, exp_κ ∘ (id, X_κ) ∘ exp_κ ∘ (id, Y_κ))`, so that
/// `exp ∘ Z = (exp ∘ X) ∘ (exp ∘ Y)`, for `X ∈ D₁` and `Y ∈ D₂`.
pub fn compose(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    y: &LocalizedField,
    gauge: &NeighborhoodGauge,
    constants: &[ConstantsReport],
) -> Result<Composition> {
    let lhs = gauge.require(spec, x, "D1")?;
    let rhs = gauge.require(spec, y, "D2")?;
    let local = Local::new(spec, constants)?;
    let phi = composed_map(&local, x, y);
    let field = local.log_of(format!("{}.{}", x.name, y.name), x.dim, spec.charts.len(), phi.clone());
    let weighted = seminorm(spec, &field, &gauge.omega_l.on(spec), 0, Atlas::C)?.value;
    let bound = (1.0 + lhs.weighted + lhs.first) * rhs.weighted + lhs.weighted;
    let residual = sup_over_inner(spec, CHECK_RES, |i, p| {
        let z = field.value(i, p)?;
        let e = local.metrics[i].exp_value(p, &z, local.exp)?;
        Ok(spec.charts[i].norm().dist(&e, &phi(i, p)?))
    })?;
    let mut cert = Certificate::new("composition", spec.grid_resolution, 1.0);
    cert.le("weighted_bound", None, weighted, bound, BOUND_SLACK);
    cert.le("exp_of_result_matches", None, residual, MAP_TOL, 0.0);
    Ok(Composition {
        field,
        lhs,
        rhs,
        weighted,
        bound,
        residual,
        certificate: cert,
    })
}

fn composed_map(local: &Local, x: &LocalizedField, y: &LocalizedField) -> ChartMap {
    let (metrics, exp, x, y) = (local.metrics.clone(), local.exp, x.clone(), y.clone());
    Arc::new(move |i: usize, p: &[f64]| {
        let l = Local {
            metrics: metrics.clone(),
            trust: Arc::new(Vec::new()),
            exp,
        };
        let w = l.exp_field(&y, i, p)?;
        l.exp_field(&x, i, &w)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Inversion {
    #[serde(skip)]
    pub field: LocalizedField,
    pub gauge: GaugeReport,
    pub weighted: f64,
    pub bound: f64,
    /// `sup ‖φ_X(exp(x, Z(x))) − x‖` on inner-ball samples.
    pub residual: f64,
    pub certificate: Certificate,
}

/// `Z_κ = log_κ ∘ (id, φ_κ⁻¹)` with the local inverse by damped Newton,
/// for certified `X ∈ D_ρ`.
pub fn invert(
    spec: &ManifoldSpec,
    rep: &DiffeoRep,
    gauge: &NeighborhoodGauge,
    constants: &[ConstantsReport],
) -> Result<Inversion> {
    rep.require_certified()?;
    let x = &rep.generator;
    let g = gauge.require(spec, x, "Drho")?;
    let local = Local::new(spec, constants)?;
    let r = rep.clone();
    let phi_inv: ChartMap = Arc::new(move |i: usize, p: &[f64]| r.local_inverse(i, p));
    let field = local.log_of(format!("inv.{}", x.name), x.dim, spec.charts.len(), phi_inv);
    let weighted = seminorm(spec, &field, &gauge.omega_l.on(spec), 0, Atlas::C)?.value;
    let bound = g.weighted / (1.0 - (g.weighted + g.first));
    let residual = sup_over_inner(spec, CHECK_RES, |i, p| {
        let z = field.value(i, p)?;
        let e = local.metrics[i].exp_value(p, &z, local.exp)?;
        Ok(spec.charts[i].norm().dist(&rep.local(i, &e)?, p))
    })?;
    let mut cert = Certificate::new("inversion", spec.grid_resolution, 1.0);
    cert.le("weighted_bound", None, weighted, bound, BOUND_SLACK);
    cert.le("exp_of_result_inverts", None, residual, MAP_TOL, 0.0);
    Ok(Inversion {
        field,
        gauge: g,
        weighted,
        bound,
        residual,
        certificate: cert,
    })
}

impl DiffeoRep {
    pub fn chart_map(&self) -> ChartMap {
        let r = self.clone();
        Arc::new(move |i: usize, p: &[f64]| r.local(i, p))
    }
}

/// The field `X` with `exp ∘ X = φ`, `X_κ = log_κ ∘ (id, φ_κ)`; fails when
/// `φ` leaves the log trust region on an inner-ball sample.
pub fn group_chart(spec: &ManifoldSpec, phi: ChartMap, constants: &[ConstantsReport]) -> Result<LocalizedField> {
    let local = Local::new(spec, constants)?;
    let field = local.log_of("chart".into(), spec.dim(), spec.charts.len(), phi);
    let checks: Vec<Result<()>> = inner_points(spec, CHECK_RES)
        .par_iter()
        .map(|(i, p)| field.value(*i, p).map(|_| ()))
        .collect();
    for c in checks {
        if let Err(e) = c {
            return Err(Error::OutsideTrustRegion(e.to_string()));
        }
    }
    Ok(field)
}
