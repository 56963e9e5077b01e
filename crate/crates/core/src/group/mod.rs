//! Diffeomorphisms `exp ∘ X` and the local group operations.

mod ops;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{seminorm, Atlas, Constant, LocalizedField};
use crate::certificate::Certificate;
use crate::engine::{ConstantsReport, ExpOptions, MetricField};
use crate::error::{Error, Result};
use crate::fd;
use crate::grid::Region;
use crate::linalg::{solve, sub, Norm};
use crate::manifold::{locally_finite_report, validate_adapted, ManifoldSpec};

pub use ops::{compose, group_chart, invert, ChartMap, Composition, GaugeReport, Inversion, NeighborhoodGauge};

/// Residual at which a Newton preimage counts as solved.
pub const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 60;

/// Damped Newton for `f(p) = target` from `seed`, with a difference-quotient
/// Jacobian of step `h`.
pub fn newton_solve<F>(f: &F, target: &[f64], seed: &[f64], norm: Norm, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let d = target.len();
    let mut p = seed.to_vec();
    let mut r = sub(&f(&p)?, target);
    let mut res = norm.of(&r);
    for _ in 0..NEWTON_MAX_ITER {
        if res <= NEWTON_TOL {
            return Ok(p);
        }
        let j = fd::jacobian(f, &p, h)?;
        let j = nalgebra::DMatrix::from_row_slice(d, d, &j);
        let Some(step) = solve(&j, &r) else {
            return Err(Error::NewtonFailure("singular Jacobian".into()));
        };
        let mut t = 1.0;
        loop {
            let q: Vec<f64> = p.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if let Ok(v) = f(&q) {
                let rq = sub(&v, target);
                let nq = norm.of(&rq);
                if nq < res || nq <= NEWTON_TOL {
                    p = q;
                    r = rq;
                    res = nq;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-6 {
                return if res <= 1e3 * NEWTON_TOL {
                    Ok(p)
                } else {
                    Err(Error::NewtonFailure(format!("line search stalled at residual {res:e}")))
                };
            }
        }
    }
    if res <= 1e3 * NEWTON_TOL {
        Ok(p)
    } else {
        Err(Error::NewtonFailure(format!("no convergence, residual {res:e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyOptions {
    /// Injectivity pairs, spread evenly over the charts.
    pub pairs: usize,
    /// Surjectivity targets per axis and chart.
    pub target_res: usize,
    /// `ν_κ = nu_factor·grenzExp`.
    pub nu_factor: f64,
    pub seed: u64,
    pub exp: ExpOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            pairs: 10_000,
            target_res: 9,
            nu_factor: 0.9,
            seed: 7,
            exp: ExpOptions::default(),
        }
    }
}

/// `φ_X = exp ∘ X` with its certificate.
#[derive(Clone)]
pub struct DiffeoRep {
    pub generator: LocalizedField,
    pub certificate: Certificate,
    metrics: Arc<Vec<MetricField>>,
    exp: ExpOptions,
}

impl std::fmt::Debug for DiffeoRep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffeoRep")
            .field("generator", &self.generator.name)
            .field("certificate", &self.certificate)
            .finish()
    }
}

impl DiffeoRep {
    /// Certify `X` and keep the chart-wise maps.
    pub fn new(
        spec: &ManifoldSpec,
        x: &LocalizedField,
        constants: &[ConstantsReport],
        opts: &CertifyOptions,
    ) -> Result<DiffeoRep> {
        let certificate = certify_diffeo(spec, x, constants, opts)?;
        Ok(DiffeoRep::uncertified(spec, x, opts.exp, certificate))
    }

    pub(crate) fn uncertified(spec: &ManifoldSpec, x: &LocalizedField, exp: ExpOptions, certificate: Certificate) -> DiffeoRep {
        DiffeoRep {
            generator: x.clone(),
            certificate,
            metrics: Arc::new(spec.charts.iter().map(MetricField::new).collect()),
            exp,
        }
    }

    /// `φ_κ(p) = exp_κ(p, X_κ(p))`.
    pub fn local(&self, chart: usize, p: &[f64]) -> Result<Vec<f64>> {
        let v = self.generator.value(chart, p)?;
        self.metrics[chart].exp_value(p, &v, self.exp)
    }

    /// Solve `φ_κ(p) = target`, seeded at `target − X_κ(target)`.
    pub fn local_inverse(&self, chart: usize, target: &[f64]) -> Result<Vec<f64>> {
        let m = &self.metrics[chart];
        let relaxed = ExpOptions {
            enforce_domain: false,
            ..self.exp
        };
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            let v = self.generator.value(chart, p)?;
            m.exp_value(p, &v, relaxed)
        };
        let seed = match self.generator.value(chart, target) {
            Ok(v) => sub(target, &v),
            Err(_) => target.to_vec(),
        };
        let h = 1e-6 * m.chart.extent();
        let p = newton_solve(&f, target, &seed, m.chart.norm(), h)?;
        if !m.chart.domain.contains(&p) {
            return Err(Error::NewtonFailure("preimage outside the chart domain".into()));
        }
        Ok(p)
    }

    fn require_certified(&self) -> Result<()> {
        if self.certificate.passed {
            Ok(())
        } else {
            Err(Error::GaugeViolation(format!("`{}` is not certified", self.generator.name)))
        }
    }
}

fn in_inner(spec: &ManifoldSpec, i: usize, p: &[f64]) -> bool {
    let c = &spec.charts[i];
    c.domain.contains(p) && c.inner_ball().contains_closed(p)
}

/// Distance to the chart center in the chart norm.
fn center_distance(spec: &ManifoldSpec, i: usize, p: &[f64]) -> f64 {
    let c = &spec.charts[i];
    c.norm().dist(p, c.center())
}

/// Chart whose center is nearest, ties to the lowest chart id.
fn nearest(spec: &ManifoldSpec, cands: Vec<(usize, Vec<f64>)>) -> Option<(usize, Vec<f64>)> {
    cands.into_iter().min_by(|(i, p), (j, q)| {
        center_distance(spec, *i, p)
            .total_cmp(&center_distance(spec, *j, q))
            .then_with(|| spec.charts[*i].id.cmp(&spec.charts[*j].id))
    })
}

/// `φ_X(p)` for `p` given in chart `chart`. Evaluated in the chart whose
/// inner ball holds `p` (nearest center first), re-charted to the chart
/// whose center is nearest to the image.
pub fn apply_diffeo(spec: &ManifoldSpec, rep: &DiffeoRep, chart: usize, p: &[f64]) -> Result<(usize, Vec<f64>)> {
    rep.require_certified()?;
    let owners: Vec<(usize, Vec<f64>)> = spec
        .charts_containing(chart, p)
        .into_iter()
        .filter(|(i, q)| in_inner(spec, *i, q))
        .collect();
    let (k, q) = nearest(spec, owners).ok_or(Error::NoContainingChart)?;
    let z = rep.local(k, &q)?;
    nearest(spec, spec.charts_containing(k, &z)).ok_or(Error::NoContainingChart)
}

/// Manifold-distinct preimages of a target, found by Newton in every chart
/// domain that contains it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreimageCount {
    pub preimages: usize,
    pub domains: usize,
}

pub fn count_preimages(spec: &ManifoldSpec, rep: &DiffeoRep, chart: usize, target: &[f64]) -> Result<PreimageCount> {
    let holders = spec.charts_containing(chart, target);
    let mut found: Vec<Vec<f64>> = Vec::new();
    for (k, t) in &holders {
        let Ok(p) = rep.local_inverse(*k, t) else { continue };
        // express in the chart of the target when possible
        let here = spec.to_chart(*k, &p, chart);
        let key = match here {
            Some(q) => q,
            None => {
                let cands = spec.charts_containing(*k, &p);
                match nearest(spec, cands) {
                    Some((j, q)) => {
                        let mut v = vec![j as f64];
                        v.extend(q);
                        v
                    }
                    None => continue,
                }
            }
        };
        let norm = spec.charts[chart].norm();
        if !found.iter().any(|f| f.len() == key.len() && norm.dist(f, &key) < 1e-7) {
            found.push(key);
        }
    }
    Ok(PreimageCount {
        preimages: found.len(),
        domains: holders.len(),
    })
}

fn random_in(rng: &mut ChaCha8Rng, ball: &Region) -> Vec<f64> {
    let (lo, hi) = ball.bounds();
    loop {
        let p: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect();
        if ball.contains_closed(&p) {
            return p;
        }
    }
}

/// Threshold certificate for `φ_X` to be a diffeomorphism, followed on
/// success by sampled injectivity and surjectivity checks in each chart.
pub fn certify_diffeo(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    constants: &[ConstantsReport],
    opts: &CertifyOptions,
) -> Result<Certificate> {
    for c in &spec.charts {
        if !constants.iter().any(|k| k.chart == c.id) {
            return Err(Error::ConstantsMissing(c.id.clone()));
        }
    }
    let lookup = |id: &str| constants.iter().find(|k| k.chart == id).expect("checked above");
    let safety = constants.iter().fold(1.0f64, |m, k| m.max(k.safety_factor));
    let mut cert = Certificate::new("diffeomorphism", spec.grid_resolution, safety);
    let adapted = validate_adapted(spec);
    cert.zero_failures("atlas_adapted", None, adapted.failed_checks().count());
    let lf = locally_finite_report(spec);
    cert.zero_failures("point_in_exactly_one_chart", None, usize::from(!lf.unique_point));

    let one = Constant(1.0);
    let s0 = seminorm(spec, x, &one, 0, Atlas::A)?;
    let s1 = seminorm(spec, x, &one, 1, Atlas::A)?;
    for (i, c) in spec.charts.iter().enumerate() {
        let k = lookup(&c.id);
        let (a, b) = (k.a_safe(), k.b_safe());
        let nu = opts.nu_factor * k.grenz_exp;
        let bound = f64::min(c.epsilon * c.r / (2.0 * a), f64::min(nu, c.epsilon / (4.0 * (b + 1.0))));
        let id = Some(c.id.as_str());
        cert.lt("seminorm_1_0_below_threshold", id, s0.per_chart[i], bound);
        cert.lt("seminorm_1_1_below_threshold", id, s1.per_chart[i], c.epsilon / 4.0);
    }
    if !cert.passed {
        return Ok(cert);
    }

    let rep = DiffeoRep::uncertified(spec, x, opts.exp, Certificate::new("pending", 0, 1.0));
    let n = spec.charts.len();
    let per_chart = opts.pairs.div_ceil(n.max(1));
    let results: Vec<(usize, usize, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = &spec.charts[i];
            let norm = c.norm();
            let ball = c.inner_ball();
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut inj_fail = 0;
            let mut pairs = 0;
            while pairs < per_chart {
                let p = random_in(&mut rng, &ball);
                let q = random_in(&mut rng, &ball);
                if !c.domain.contains(&p) || !c.domain.contains(&q) {
                    continue;
                }
                pairs += 1;
                let gap = norm.dist(&p, &q);
                // bi-Lipschitz witness: distinct points stay at least half as far apart
                match (rep.local(i, &p), rep.local(i, &q)) {
                    (Ok(fp), Ok(fq)) if norm.dist(&fp, &fq) >= 0.5 * gap => {}
                    _ => inj_fail += 1,
                }
            }
            let targets_ball = Region::ball(c.center().to_vec(), c.r * (1.0 - 2.0 * c.epsilon), norm);
            let targets = targets_ball.fitted_points(opts.target_res);
            let mut surj_fail = 0;
            for t in &targets {
                match rep.local_inverse(i, t) {
                    Ok(p) if ball.contains_closed(&p) => {}
                    _ => surj_fail += 1,
                }
            }
            (pairs, inj_fail, targets.len(), surj_fail)
        })
        .collect();
    let (mut pairs, mut inj, mut targets, mut surj) = (0, 0, 0, 0);
    for (p, i, t, s) in results {
        pairs += p;
        inj += i;
        targets += t;
        surj += s;
    }
    cert.zero_failures("injective_on_sampled_pairs", None, inj);
    cert.zero_failures("targets_have_preimages", None, surj);
    cert.note(format!("{pairs} injectivity pairs, {targets} surjectivity targets"));
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{estimate_constants, ConstantsOptions, ConstantsRequest};
    use crate::oracle;

    pub(crate) fn constants(spec: &ManifoldSpec) -> Vec<ConstantsReport> {
        let opts = ConstantsOptions {
            res_x: 5,
            res_y: 3,
            ..Default::default()
        };
        (0..spec.charts.len())
            .map(|i| estimate_constants(spec, i, &ConstantsRequest::default(), &opts, 1.0).unwrap())
            .collect()
    }

    fn quick() -> CertifyOptions {
        CertifyOptions {
            pairs: 500,
            target_res: 5,
            ..Default::default()
        }
    }

    #[test]
    fn zero_field_is_identity() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let k = constants(&o.spec);
        let x = LocalizedField::zero(&o.spec);
        let rep = DiffeoRep::new(&o.spec, &x, &k, &quick()).unwrap();
        assert!(rep.certificate.passed, "{:?}", rep.certificate);
        let (j, z) = apply_diffeo(&o.spec, &rep, 0, &[-1.2, -0.9]).unwrap();
        assert_eq!(o.spec.charts[j].id, "c_-1_-1");
        assert_eq!(z, vec![-1.2, -0.9]);
    }

    #[test]
    fn translation_in_one_dimension() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let k = constants(&o.spec);
        let x = LocalizedField::uniform(&o.spec, "c", &["0.001"]).unwrap();
        let rep = DiffeoRep::new(&o.spec, &x, &k, &quick()).unwrap();
        assert!(rep.certificate.passed, "{:?}", rep.certificate);
        let i0 = o.spec.chart_index("c_0").unwrap();
        let (j, z) = apply_diffeo(&o.spec, &rep, i0, &[0.3]).unwrap();
        assert_eq!(j, i0);
        assert!((z[0] - 0.301).abs() < 1e-15);
        let count = count_preimages(&o.spec, &rep, i0, &[0.5]).unwrap();
        assert!(count.preimages <= count.domains);
        assert_eq!(count.preimages, 1);
    }

    #[test]
    fn large_linear_field_fails_first_order_clause() {
        let o = oracle::flat_oracle_with(oracle::FlatConfig {
            d: 1,
            half_width: 0,
            ..Default::default()
        })
        .unwrap();
        let k = constants(&o.spec);
        let x = LocalizedField::uniform(&o.spec, "lin", &["0.9*x1"]).unwrap();
        let cert = certify_diffeo(&o.spec, &x, &k, &quick()).unwrap();
        assert!(!cert.passed);
        let failed: Vec<&str> = cert.failed_checks().map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"seminorm_1_1_below_threshold"), "{failed:?}");
    }

    #[test]
    fn missing_constants() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let x = LocalizedField::zero(&o.spec);
        assert!(matches!(
            certify_diffeo(&o.spec, &x, &[], &quick()),
            Err(Error::ConstantsMissing(_))
        ));
    }

    #[test]
    fn cylinder_spin_hands_off() {
        let o = oracle::cylinder_oracle(2.0, 3).unwrap();
        let k = constants(&o.spec);
        let x = LocalizedField::from_spec(&o.spec, "spin").unwrap();
        let rep = DiffeoRep::new(&o.spec, &x, &k, &quick()).unwrap();
        assert!(rep.certificate.passed, "{:?}", rep.certificate);
        let i = o.spec.chart_index("c_0_0").unwrap();
        // θ just below the midpoint between charts 0 and 1
        let mid = std::f64::consts::PI / 3.0;
        let (j, z) = apply_diffeo(&o.spec, &rep, i, &[0.0, mid - 0.005]).unwrap();
        assert_eq!(o.spec.charts[j].id, "c_0_1");
        // neighbouring angular charts share the θ branch
        assert!((z[1] - (mid + 0.005)).abs() < 1e-12, "{z:?}");
        let last = o.spec.chart_index("c_0_2").unwrap();
        // crossing θ = 2π hands off through the shifted transition
        let tau = 2.0 * std::f64::consts::PI;
        let start = 2.0 * tau / 3.0 + 1.045;
        let (j, z) = apply_diffeo(&o.spec, &rep, last, &[0.0, start]).unwrap();
        assert_eq!(o.spec.charts[j].id, "c_0_0");
        assert!((z[1] - (start + 0.01 - tau)).abs() < 1e-12, "{z:?}");
    }
}
