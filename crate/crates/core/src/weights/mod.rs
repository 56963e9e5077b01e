//! Weight construction: adjusted weights, multiplier extensions, saturation
//! and the paired exp/log weights.

mod bounds;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::calculus::WeightFn;
use crate::certificate::Certificate;
use crate::engine::ConstantsReport;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::Norm;
use crate::manifold::{inscribed_radius, validate_adapted, ManifoldSpec};

pub use bounds::{estimate_bound_families, BoundEntry, BoundFamily, BoundKind, BoundOptions};

/// Weights above this count abort saturation.
pub const DEFAULT_WEIGHT_CAP: usize = 10_000;
pub const DEFAULT_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    User,
    Adjusted,
    ExtMult {
        base: String,
        family: BoundKind,
        order: usize,
    },
    Saturation {
        level: usize,
        base: String,
        family: BoundKind,
        order: usize,
    },
    OmegaL,
}

/// Plateau bump: `height` on the closed ball of radius `inner`, cubic
/// smoothstep decay to 0 at radius `outer`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub norm: Norm,
    pub height: f64,
    pub inner: f64,
    pub outer: f64,
}

impl Bump {
    pub fn value(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let s = self.norm.of(&d);
        if s <= self.inner {
            return self.height;
        }
        if s >= self.outer {
            return 0.0;
        }
        let t = (s - self.inner) / (self.outer - self.inner);
        self.height * (1.0 - t * t * (3.0 - 2.0 * t))
    }
}

#[derive(Debug, Clone)]
pub enum WeightKind {
    /// One expression per chart.
    Chartwise(Vec<Expr>),
    Constant(f64),
    /// `max_κ |f_κ|` over the charts containing the point.
    Bumps(Vec<Bump>),
    Scaled(f64, Arc<Weight>),
    /// `|f(x)|·max{c_κ : x ∈ U_κ}`.
    MaxMult(Vec<f64>, Arc<Weight>),
}

#[derive(Debug, Clone)]
pub struct Weight {
    pub name: String,
    pub kind: WeightKind,
    pub provenance: Provenance,
}

impl Weight {
    pub fn user(name: &str, per_chart: Vec<Expr>) -> Weight {
        Weight {
            name: name.to_string(),
            kind: WeightKind::Chartwise(per_chart),
            provenance: Provenance::User,
        }
    }

    pub fn constant(name: &str, c: f64) -> Weight {
        Weight {
            name: name.to_string(),
            kind: WeightKind::Constant(c),
            provenance: Provenance::User,
        }
    }

    /// Value at the point with coordinates `x` in chart `chart`.
    pub fn eval(&self, spec: &ManifoldSpec, chart: usize, x: &[f64]) -> f64 {
        match &self.kind {
            WeightKind::Chartwise(e) => e[chart].eval(x),
            WeightKind::Constant(c) => *c,
            WeightKind::Bumps(b) => {
                let cover = spec.charts_containing(chart, x);
                if cover.is_empty() {
                    return b[chart].value(x);
                }
                cover.iter().map(|(j, q)| b[*j].value(q).abs()).fold(0.0, f64::max)
            }
            WeightKind::Scaled(c, w) => c * w.eval(spec, chart, x),
            WeightKind::MaxMult(coeffs, w) => {
                let f = w.eval(spec, chart, x).abs();
                if f == 0.0 {
                    return 0.0;
                }
                let cover = spec.charts_containing(chart, x);
                let c = if cover.is_empty() {
                    coeffs[chart]
                } else {
                    cover.iter().map(|(j, _)| coeffs[*j]).fold(0.0, f64::max)
                };
                c * f
            }
        }
    }

    /// Chart-wise evaluator for seminorms.
    pub fn on<'a>(&'a self, spec: &'a ManifoldSpec) -> BoundWeight<'a> {
        BoundWeight { weight: self, spec }
    }

    /// Structural identity used for deduplication.
    pub fn key(&self) -> String {
        match &self.kind {
            WeightKind::Chartwise(_) => format!("user:{}", self.name),
            WeightKind::Constant(c) => format!("const:{c:?}"),
            WeightKind::Bumps(_) => format!("bumps:{}", self.name),
            WeightKind::Scaled(c, w) => format!("scale({c:?},{})", w.key()),
            WeightKind::MaxMult(cs, w) => {
                let cs: Vec<String> = cs.iter().map(|c| format!("{c:?}")).collect();
                format!("max([{}],{})", cs.join(","), w.key())
            }
        }
    }

    /// `(root, K)` with `|self| ≤ K·|root|` by construction.
    pub fn root_factor(&self) -> (&Weight, f64) {
        match &self.kind {
            WeightKind::Scaled(c, w) => {
                let (r, k) = w.root_factor();
                (r, k * c.abs())
            }
            WeightKind::MaxMult(cs, w) => {
                let (r, k) = w.root_factor();
                (r, k * cs.iter().fold(0.0, |m: f64, c| m.max(c.abs())))
            }
            _ => (self, 1.0),
        }
    }

    /// The weight `c·self`, folded into existing scalings.
    pub fn scaled(self: &Arc<Weight>, name: String, c: f64, provenance: Provenance) -> Weight {
        let kind = match &self.kind {
            _ if c == 0.0 => WeightKind::Constant(0.0),
            WeightKind::Constant(v) => WeightKind::Constant(c * v),
            WeightKind::Scaled(v, w) => WeightKind::Scaled(c * v, w.clone()),
            _ => WeightKind::Scaled(c, self.clone()),
        };
        Weight { name, kind, provenance }
    }
}

#[derive(Serialize)]
struct WeightView<'a> {
    name: &'a str,
    provenance: &'a Provenance,
    #[serde(flatten)]
    form: FormView<'a>,
}

#[derive(Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
enum FormView<'a> {
    Chartwise { per_chart: &'a [Expr] },
    Constant { value: f64 },
    Bumps { bumps: &'a [Bump] },
    Scaled { factor: f64, of: &'a str },
    MaxMult { coefficients: &'a [f64], of: &'a str },
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let form = match &self.kind {
            WeightKind::Chartwise(e) => FormView::Chartwise { per_chart: e },
            WeightKind::Constant(c) => FormView::Constant { value: *c },
            WeightKind::Bumps(b) => FormView::Bumps { bumps: b },
            WeightKind::Scaled(c, w) => FormView::Scaled { factor: *c, of: &w.name },
            WeightKind::MaxMult(cs, w) => FormView::MaxMult {
                coefficients: cs,
                of: &w.name,
            },
        };
        WeightView {
            name: &self.name,
            provenance: &self.provenance,
            form,
        }
        .serialize(s)
    }
}

pub struct BoundWeight<'a> {
    weight: &'a Weight,
    spec: &'a ManifoldSpec,
}

impl WeightFn for BoundWeight<'_> {
    fn value(&self, chart: usize, x: &[f64]) -> f64 {
        self.weight.eval(self.spec, chart, x)
    }
}

/// Points of the closed inner ball of chart `i`.
fn inner_samples(spec: &ManifoldSpec, i: usize, res: usize) -> Vec<Vec<f64>> {
    let c = &spec.charts[i];
    c.inner_ball()
        .fitted_points(res)
        .into_iter()
        .filter(|p| c.domain.contains(p))
        .collect()
}

/// Points of the open domain of chart `i`.
fn domain_samples(spec: &ManifoldSpec, i: usize, res: usize) -> Vec<Vec<f64>> {
    let dom = &spec.charts[i].domain;
    dom.fitted_points(res).into_iter().filter(|p| dom.contains(p)).collect()
}

fn check_res(spec: &ManifoldSpec) -> usize {
    spec.grid_resolution.min(33)
}

/// Weight `ω = max_κ |f_κ|` with plateau bumps of height `max(1/δ_κ, 1)`
/// on the inner balls, supported in the chart domains.
pub fn construct_adjusted(spec: &ManifoldSpec, name: &str, targets: &[f64]) -> Result<(Weight, Certificate)> {
    let heights: Vec<f64> = targets.iter().map(|t| (1.0 / t).max(1.0)).collect();
    build_adjusted(spec, name, targets, &heights)
}

fn build_adjusted(spec: &ManifoldSpec, name: &str, targets: &[f64], heights: &[f64]) -> Result<(Weight, Certificate)> {
    if targets.len() != spec.charts.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.charts.len(),
            got: targets.len(),
        });
    }
    if let Some(t) = targets.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvariantViolation(vec![format!("target {t} is not positive")]));
    }
    let adapted = validate_adapted(spec);
    if let Some(c) = adapted.checks.iter().find(|c| c.name == "inner_balls_cover" && !c.passed) {
        return Err(Error::CoverViolation(format!("{} inner-ball holes", c.lhs)));
    }
    let bumps: Vec<Bump> = spec
        .charts
        .iter()
        .zip(heights)
        .map(|(c, h)| {
            let room = inscribed_radius(&c.domain, c.center(), c.norm());
            Bump {
                center: c.center().to_vec(),
                norm: c.norm(),
                height: *h,
                inner: c.r,
                outer: room.max(c.r),
            }
        })
        .collect();
    let w = Weight {
        name: name.to_string(),
        kind: WeightKind::Bumps(bumps),
        provenance: Provenance::Adjusted,
    };
    let cert = adjusted_certificate(spec, &w, targets, "adjusted_weight");
    Ok((w, cert))
}

/// Both defining bounds of an adjusted weight on the inner-ball grids.
pub fn adjusted_certificate(spec: &ManifoldSpec, w: &Weight, targets: &[f64], name: &str) -> Certificate {
    let res = check_res(spec);
    let mut cert = Certificate::new(name, res, 1.0);
    for (i, c) in spec.charts.iter().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in inner_samples(spec, i, res) {
            let v = w.eval(spec, i, &p).abs();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let id = Some(c.id.as_str());
        cert.lt("bounded_on_inner_ball", id, hi, f64::INFINITY);
        cert.ge("lower_bound_on_inner_ball", id, lo, (1.0 / targets[i]).max(1.0), 0.0);
    }
    cert
}

/// Coefficients this close are treated as one scale factor (their maximum).
const UNIFORM_SPREAD: f64 = 1e-9;

/// One generated weight per order of `b`: `g_ℓ(x) = |f(x)|·max{B_{κ,ℓ} : x ∈ U_κ}`.
pub fn ext_mult(spec: &ManifoldSpec, f: &Arc<Weight>, b: &BoundFamily) -> Vec<Weight> {
    b.orders
        .iter()
        .enumerate()
        .map(|(idx, &order)| {
            let coeffs = b.chart_coefficients(spec, idx);
            let name = format!("{}*{}{}", f.name, b.kind.short(), order);
            let provenance = Provenance::ExtMult {
                base: f.name.clone(),
                family: b.kind,
                order,
            };
            let hi = coeffs.iter().copied().fold(0.0, f64::max);
            let lo = coeffs.iter().copied().fold(f64::INFINITY, f64::min);
            if hi - lo <= UNIFORM_SPREAD * hi {
                f.scaled(name, hi, provenance)
            } else {
                Weight {
                    name,
                    kind: WeightKind::MaxMult(coeffs, f.clone()),
                    provenance,
                }
            }
        })
        .collect()
}

/// Products of factors re-associated by `scaled` differ by a few ulps.
const ROUNDOFF: f64 = 8.0 * f64::EPSILON;

/// `B_{κ,ℓ}·|f| ≤ |g_ℓ|` on every chart-domain grid.
pub fn dominance_certificate(spec: &ManifoldSpec, f: &Weight, b: &BoundFamily, generated: &[Weight]) -> Certificate {
    let res = check_res(spec);
    let mut cert = Certificate::new("ext_mult_dominance", res, 1.0);
    for (idx, g) in generated.iter().enumerate() {
        let coeffs = b.chart_coefficients(spec, idx);
        for (i, c) in spec.charts.iter().enumerate() {
            let worst = domain_samples(spec, i, res)
                .iter()
                .map(|p| {
                    let gv = g.eval(spec, i, p).abs();
                    coeffs[i] * f.eval(spec, i, p).abs() - gv - ROUNDOFF * gv
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if worst.is_finite() {
                cert.le(&format!("dominance:{}", g.name), Some(&c.id), worst, 0.0, 0.0);
            }
        }
    }
    cert
}

#[derive(Debug, Clone, Serialize)]
pub struct SaturatedWeight {
    pub weight: Weight,
    pub level: usize,
    /// Member of the initial set bounding this weight, with the factor `K`.
    pub bounded_by: String,
    pub factor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSet {
    pub weights: Vec<SaturatedWeight>,
    pub levels: usize,
    pub families: Vec<BoundKind>,
    /// First level whose new weights are all multiples `c·f`, `c ≤ 1 + 1e-6`,
    /// of initial weights `f`, or zero.
    pub stable_at: Option<usize>,
    pub certificate: Certificate,
}

impl WeightSet {
    pub fn names(&self) -> Vec<&str> {
        self.weights.iter().map(|w| w.weight.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Weight> {
        self.weights.iter().map(|w| &w.weight).find(|w| w.name == name)
    }
}

/// Initial weight set from the weights declared in the spec.
pub fn spec_weights(spec: &ManifoldSpec) -> Vec<Weight> {
    spec.weights
        .iter()
        .map(|(n, w)| Weight::user(n, w.per_chart.clone()))
        .collect()
}

/// `W_{k+1} = ⋃_{f ∈ W_k} extMult(f, B¹) ∪ extMult(f, B²) ∪ extMult(f, B³)`,
/// truncated after `levels` levels.
pub fn saturate(spec: &ManifoldSpec, w0: Vec<Weight>, families: &[BoundFamily], levels: usize, cap: usize) -> Result<WeightSet> {
    let res = check_res(spec);
    let mut cert = Certificate::new("saturation", res, 1.0);
    let mut seen: HashSet<String> = HashSet::new();
    let mut all: Vec<SaturatedWeight> = Vec::new();
    let mut frontier: Vec<Arc<Weight>> = Vec::new();
    for w in w0 {
        if seen.insert(w.key()) {
            frontier.push(Arc::new(w.clone()));
            all.push(SaturatedWeight {
                bounded_by: w.name.clone(),
                weight: w,
                level: 0,
                factor: 1.0,
            });
        }
    }
    let roots: BTreeMap<String, usize> = all.iter().enumerate().map(|(i, w)| (w.weight.name.clone(), i)).collect();
    let mut stable_at = None;
    for level in 1..=levels {
        let mut next = Vec::new();
        let mut level_stable = true;
        for f in &frontier {
            for b in families {
                let generated = ext_mult(spec, f, b);
                cert.merge(dominance_certificate(spec, f, b, &generated));
                for mut g in generated {
                    let key = g.key();
                    if !seen.insert(key) {
                        continue;
                    }
                    if let Provenance::ExtMult { base, family, order } = g.provenance.clone() {
                        g.provenance = Provenance::Saturation {
                            level,
                            base,
                            family,
                            order,
                        };
                    }
                    let (root, k) = g.root_factor();
                    let bounded_by = root.name.clone();
                    let trivial = matches!(g.kind, WeightKind::Constant(c) if c == 0.0)
                        || (matches!(g.kind, WeightKind::Scaled(..)) && k <= 1.0 + 1e-6 && roots.contains_key(&bounded_by));
                    level_stable &= trivial;
                    all.push(SaturatedWeight {
                        weight: g.clone(),
                        level,
                        bounded_by,
                        factor: k,
                    });
                    if all.len() > cap {
                        return Err(Error::ExplosionGuard { count: all.len(), cap });
                    }
                    next.push(Arc::new(g));
                }
            }
        }
        if level_stable && stable_at.is_none() {
            stable_at = Some(level);
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    local_boundedness(spec, &all, &mut cert);
    cert.note(format!("truncated after {levels} levels"));
    Ok(WeightSet {
        weights: all,
        levels,
        families: families.iter().map(|b| b.kind).collect(),
        stable_at,
        certificate: cert,
    })
}

/// `|g| ≤ K·|f|` on the domain grids for each generated `g` and its root `f`.
fn local_boundedness(spec: &ManifoldSpec, all: &[SaturatedWeight], cert: &mut Certificate) {
    let res = check_res(spec).min(9);
    let samples: Vec<Vec<Vec<f64>>> = (0..spec.charts.len()).map(|i| domain_samples(spec, i, res)).collect();
    for sw in all.iter().filter(|w| w.level > 0) {
        let (root, k) = sw.weight.root_factor();
        let mut worst = f64::NEG_INFINITY;
        for (i, pts) in samples.iter().enumerate() {
            for p in pts {
                let g = sw.weight.eval(spec, i, p).abs();
                let f = root.eval(spec, i, p).abs();
                worst = worst.max(g - k * f - 1e-12 * g.max(1.0));
            }
        }
        if worst.is_finite() {
            cert.le(&format!("locally_bounded:{}", sw.weight.name), None, worst, 0.0, 0.0);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OmegaPair {
    pub sigma: f64,
    pub targets: Vec<f64>,
    pub omega_e: Weight,
    pub omega_l: Weight,
    /// `ω^E` and `ω^L` on each inner ball: (min, max) pairs.
    pub ranges: Vec<OmegaRange>,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaRange {
    pub chart: String,
    pub omega_e_min: f64,
    pub omega_e_max: f64,
    pub omega_l_min: f64,
    pub omega_l_max: f64,
}

/// `ω` adjusted to `((1-σ)²/(1+σ))·δ_κ` with `|ω| ≥ (1+σ)/(1-σ)`, then
/// `ω^E = ω` and `ω^L = ((1-σ)/(1+σ))·ω`.
pub fn pair_omega_exp_log(spec: &ManifoldSpec, constants: &[ConstantsReport], sigma: f64, deltas: &[f64]) -> Result<OmegaPair> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::SigmaOutOfRange(sigma));
    }
    if constants.len() != spec.charts.len() || deltas.len() != spec.charts.len() {
        return Err(Error::ConstantsIncompatible(format!(
            "{} charts, {} constant reports, {} deltas",
            spec.charts.len(),
            constants.len(),
            deltas.len()
        )));
    }
    for ((c, k), d) in spec.charts.iter().zip(constants).zip(deltas) {
        if k.chart != c.id {
            return Err(Error::ConstantsIncompatible(format!(
                "constants for `{}` given for chart `{}`",
                k.chart, c.id
            )));
        }
        let limit = k.rad_exp_fib_inv * k.quot_norm;
        if !(*d > 0.0 && *d < limit) {
            return Err(Error::ConstantsIncompatible(format!(
                "delta {d} for `{}` outside (0, {limit})",
                c.id
            )));
        }
    }
    let shrink = (1.0 - sigma) * (1.0 - sigma) / (1.0 + sigma);
    let floor = (1.0 + sigma) / (1.0 - sigma);
    let adjusted: Vec<f64> = deltas.iter().map(|d| shrink * d).collect();
    let heights: Vec<f64> = adjusted.iter().map(|t| (1.0 / t).max(1.0).max(floor)).collect();
    let (omega, mut cert) = build_adjusted(spec, "omega_e", &adjusted, &heights)?;
    cert.name = "omega_exp_log".into();
    let omega = Arc::new(omega);
    let ratio = (1.0 - sigma) / (1.0 + sigma);
    let omega_l = omega.scaled("omega_l".into(), ratio, Provenance::OmegaL);
    let l_targets: Vec<f64> = deltas.iter().map(|d| (1.0 - sigma) * d).collect();
    let l_cert = adjusted_certificate(spec, &omega_l, &l_targets, "omega_l_adjusted");
    for c in l_cert.checks {
        let name = format!("omega_l:{}", c.name);
        match c.relation {
            crate::certificate::Relation::Ge => cert.ge(&name, c.chart.as_deref(), c.lhs, c.rhs, 0.0),
            _ => cert.lt(&name, c.chart.as_deref(), c.lhs, c.rhs),
        };
    }
    let res = check_res(spec);
    let mut ranges = Vec::new();
    for (i, c) in spec.charts.iter().enumerate() {
        let k = &constants[i];
        let denom = k.a_safe() * k.a_log * k.safety_factor;
        let (mut worst, mut e_min, mut e_max, mut l_min, mut l_max) =
            (f64::NEG_INFINITY, f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
        for p in inner_samples(spec, i, res) {
            let e = omega.eval(spec, i, &p).abs();
            let l = omega_l.eval(spec, i, &p).abs();
            worst = worst.max(l - e / denom);
            e_min = e_min.min(e);
            e_max = e_max.max(e);
            l_min = l_min.min(l);
            l_max = l_max.max(l);
        }
        cert.le("omega_l_below_omega_e_over_a_al", Some(&c.id), worst, 0.0, 1e-9);
        ranges.push(OmegaRange {
            chart: c.id.clone(),
            omega_e_min: e_min,
            omega_e_max: e_max,
            omega_l_min: l_min,
            omega_l_max: l_max,
        });
    }
    Ok(OmegaPair {
        sigma,
        targets: deltas.to_vec(),
        omega_e: (*omega).clone(),
        omega_l,
        ranges,
        certificate: cert,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{estimate_constants, ConstantsOptions, ConstantsRequest};
    use crate::oracle;

    fn flat_constants(spec: &ManifoldSpec) -> Vec<ConstantsReport> {
        let opts = ConstantsOptions {
            res_x: 5,
            res_y: 3,
            ..Default::default()
        };
        (0..spec.charts.len())
            .map(|i| estimate_constants(spec, i, &ConstantsRequest::default(), &opts, 1.0).unwrap())
            .collect()
    }

    #[test]
    fn bump_profile() {
        let b = Bump {
            center: vec![0.0],
            norm: Norm::Sup,
            height: 4.0,
            inner: 0.5,
            outer: 1.0,
        };
        assert_eq!(b.value(&[0.5]), 4.0);
        assert_eq!(b.value(&[1.0]), 0.0);
        assert!((b.value(&[0.75]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn adjusted_on_one_dimensional_lattice() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let targets: Vec<f64> = o.spec.charts.iter().map(|c| 1.0 / (c.center()[0].abs() + 1.0)).collect();
        let (w, cert) = construct_adjusted(&o.spec, "w", &targets).unwrap();
        assert!(cert.passed, "{cert:?}");
        // x = 0.5 lies in charts 0 and 1
        let i0 = o.spec.chart_index("c_0").unwrap();
        assert!(w.eval(&o.spec, i0, &[0.5]) >= 2.0);
        assert_eq!(w.eval(&o.spec, i0, &[0.5]), 2.0);
    }

    #[test]
    fn large_targets_give_unit_weight() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let (w, cert) = construct_adjusted(&o.spec, "w", &vec![2.0; o.spec.charts.len()]).unwrap();
        assert!(cert.passed);
        assert_eq!(w.eval(&o.spec, 0, o.spec.charts[0].center()), 1.0);
    }

    #[test]
    fn ext_mult_lattice_example() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let b = BoundFamily::per_chart(
            BoundKind::ExpSuperposition,
            vec![1],
            o.spec
                .charts
                .iter()
                .map(|c| (c.id.clone(), vec![c.center()[0].abs() + 1.0]))
                .collect(),
        );
        let f = Arc::new(Weight::constant("one", 1.0));
        let g = ext_mult(&o.spec, &f, &b);
        let i0 = o.spec.chart_index("c_0").unwrap();
        assert_eq!(g[0].eval(&o.spec, i0, &[0.5]), 2.0);
        assert!(dominance_certificate(&o.spec, &f, &b, &g).passed);
        let zero = BoundFamily::per_chart(BoundKind::ExpSuperposition, vec![1], vec![("c_0".into(), vec![0.0])]);
        let single = oracle::flat_oracle_with(oracle::FlatConfig {
            d: 1,
            half_width: 0,
            ..Default::default()
        })
        .unwrap();
        let g = ext_mult(&single.spec, &f, &zero);
        assert_eq!(g[0].eval(&single.spec, 0, &[0.1]), 0.0);
    }

    #[test]
    fn constant_families_give_powers() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let rows: Vec<(String, Vec<f64>)> = o.spec.charts.iter().map(|c| (c.id.clone(), vec![2.0])).collect();
        let b = BoundFamily::per_chart(BoundKind::ExpSuperposition, vec![1], rows);
        let set = saturate(&o.spec, vec![Weight::constant("one", 1.0)], &[b], 3, DEFAULT_WEIGHT_CAP).unwrap();
        let mut values: Vec<f64> = set.weights.iter().map(|w| w.weight.eval(&o.spec, 0, &[0.0])).collect();
        values.sort_by(f64::total_cmp);
        assert_eq!(values, vec![1.0, 2.0, 4.0, 8.0]);
        assert!(set.certificate.passed);
        let none = saturate(&o.spec, vec![Weight::constant("one", 1.0)], &[], 0, DEFAULT_WEIGHT_CAP).unwrap();
        assert_eq!(none.weights.len(), 1);
    }

    #[test]
    fn explosion_guard() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let rows: Vec<(String, Vec<f64>)> = o
            .spec
            .charts
            .iter()
            .map(|c| (c.id.clone(), vec![1.0 + c.center()[0].abs(), 2.0 + c.center()[0].abs()]))
            .collect();
        let b = BoundFamily::per_chart(BoundKind::ExpSuperposition, vec![1, 2], rows);
        let r = saturate(&o.spec, vec![Weight::constant("one", 1.0)], &[b], 8, 20);
        assert!(matches!(r, Err(Error::ExplosionGuard { .. })));
    }

    #[test]
    fn flat_pair_values() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let k = flat_constants(&o.spec);
        let pair = pair_omega_exp_log(&o.spec, &k, 0.5, &vec![0.2; o.spec.charts.len()]).unwrap();
        assert!(pair.certificate.passed, "{:?}", pair.certificate);
        for r in &pair.ranges {
            assert_eq!((r.omega_e_min, r.omega_e_max), (30.0, 30.0));
            assert_eq!((r.omega_l_min, r.omega_l_max), (10.0, 10.0));
        }
        assert!(matches!(
            pair_omega_exp_log(&o.spec, &k, 1.5, &vec![0.2; o.spec.charts.len()]),
            Err(Error::SigmaOutOfRange(_))
        ));
        assert!(matches!(
            pair_omega_exp_log(&o.spec, &k, 0.5, &vec![5.0; o.spec.charts.len()]),
            Err(Error::ConstantsIncompatible(_))
        ));
    }
}
