//! Sampled certificate for the quantitative inverse function theorem.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fd;
use crate::grid::{ball_points, Region};
use crate::linalg::{inverse_with_condition, solve, sub, Norm};
use crate::manifold::inscribed_radius;

const MAX_CONDITION: f64 = 1e8;

/// A map `g: U -> R^d` with a base point, as read from a problem file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QiftProblem {
    pub map: Vec<Expr>,
    pub domain: Region,
    pub point: Vec<f64>,
    /// Center `x'` of the ball whose image is certified; defaults to `point`.
    #[serde(default)]
    pub ball_center: Option<Vec<f64>>,
    /// Radius of that ball; defaults to the largest ball inside the domain.
    #[serde(default)]
    pub ball_radius: Option<f64>,
}

impl QiftProblem {
    pub fn load(path: impl AsRef<Path>) -> Result<QiftProblem> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<QiftProblem> {
        let p: QiftProblem = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let d = p.domain.dim();
        if p.map.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.map.len(),
            });
        }
        if p.point.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.point.len(),
            });
        }
        for e in &p.map {
            if e.arity() > d {
                return Err(Error::UnknownIdentifier(format!("x{}", e.arity())));
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QiftOptions {
    /// Points per axis on `U`.
    pub res: usize,
    /// Points per axis on the target ball.
    pub target_res: usize,
    pub safety_factor: f64,
}

impl Default for QiftOptions {
    fn default() -> Self {
        QiftOptions {
            res: 21,
            target_res: 11,
            safety_factor: 1.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QiftReport {
    pub delta_hat: f64,
    /// `δ̂` inflated by the safety factor.
    pub delta: f64,
    pub inverse_norm: f64,
    pub condition: f64,
    pub ball_center: Vec<f64>,
    pub ball_radius: f64,
    pub image_radius: f64,
    pub lipschitz: f64,
    pub targets: usize,
    pub certificate: Certificate,
}

/// Evaluates `g` and its Jacobian.
pub struct ExprMap<'a> {
    map: &'a [Expr],
    h: f64,
}

impl<'a> ExprMap<'a> {
    pub fn new(map: &'a [Expr], domain: &Region) -> Self {
        ExprMap {
            map,
            h: 1e-6 * domain.max_extent().max(1e-3),
        }
    }

    pub fn value(&self, y: &[f64]) -> Vec<f64> {
        self.map.iter().map(|e| e.eval(y)).collect()
    }

    pub fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let d = y.len();
        let f = |z: &[f64]| -> Result<Vec<f64>> { Ok(self.value(z)) };
        let j = fd::jacobian(&f, y, self.h).expect("infallible");
        DMatrix::from_row_slice(self.map.len(), d, &j)
    }

    /// Damped Newton for `g(y) = z` inside `domain`, seeded at `seed`.
    pub fn preimage(&self, z: &[f64], seed: &[f64], domain: &Region, norm: Norm) -> Result<Vec<f64>> {
        let mut y = seed.to_vec();
        let mut f = sub(&self.value(&y), z);
        let mut res = norm.of(&f);
        for it in 0..50 {
            if res <= 1e-12 {
                return Ok(y);
            }
            let Some(step) = solve(&self.jacobian(&y), &f) else {
                return Err(Error::NewtonFailure(format!("singular Jacobian at iteration {it}")));
            };
            let mut lambda = 1.0;
            loop {
                let cand: Vec<f64> = y.iter().zip(&step).map(|(a, s)| a - lambda * s).collect();
                if domain.contains(&cand) {
                    let fc = sub(&self.value(&cand), z);
                    let rc = norm.of(&fc);
                    if rc < res {
                        y = cand;
                        f = fc;
                        res = rc;
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1.0 / 1024.0 {
                    if res <= 1e-10 {
                        return Ok(y);
                    }
                    return Err(Error::NewtonFailure(format!("line search stalled at residual {res:e}")));
                }
            }
        }
        if res <= 1e-10 {
            Ok(y)
        } else {
            Err(Error::NewtonFailure(format!("no convergence, residual {res:e}")))
        }
    }
}

pub fn certify_qift(problem: &QiftProblem, opts: &QiftOptions) -> Result<QiftReport> {
    let u = &problem.domain;
    let norm = u.norm;
    let x = &problem.point;
    let g = ExprMap::new(&problem.map, u);
    let a = g.jacobian(x);
    let (a_inv, _) = inverse_with_condition(&a, norm).ok_or(Error::SingularDifferential {
        condition: f64::INFINITY,
    })?;
    let inv_norm = norm.op(&a_inv);

    let samples: Vec<Vec<f64>> = u.fitted_points(opts.res).into_iter().filter(|p| u.contains(p)).collect();
    let jacobians: Vec<DMatrix<f64>> = samples.par_iter().map(|p| g.jacobian(p)).collect();
    let delta_hat = jacobians.iter().map(|j| norm.op(&(j - &a))).fold(0.0, f64::max);
    // relative to the size of Dg over U, so that a vanishing Dg(x) counts as singular
    let condition = inv_norm * (norm.op(&a) + delta_hat);
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularDifferential { condition });
    }
    let delta = delta_hat * opts.safety_factor;

    let center = problem.ball_center.clone().unwrap_or_else(|| x.clone());
    let radius = problem.ball_radius.unwrap_or_else(|| inscribed_radius(u, &center, norm));
    let mut cert = Certificate::new("quantitative_inverse", opts.res, opts.safety_factor);
    cert.lt("delta_below_inverse_bound", None, delta, 1.0 / inv_norm);
    cert.ge("ball_inside_domain", None, inscribed_radius(u, &center, norm), radius, 1e-12);
    let contraction = 1.0 - delta * inv_norm;
    let image_radius = radius * contraction / inv_norm;
    let lipschitz = inv_norm / contraction;
    let mut report = QiftReport {
        delta_hat,
        delta,
        inverse_norm: inv_norm,
        condition,
        ball_center: center.clone(),
        ball_radius: radius,
        image_radius,
        lipschitz,
        targets: 0,
        certificate: cert,
    };
    if !report.certificate.passed {
        report
            .certificate
            .note("hypotheses fail; inclusion and Lipschitz checks skipped");
        return Ok(report);
    }

    // injectivity: on a convex U, ‖g(p) − g(q)‖ ≥ (1/‖A⁻¹‖ − δ)‖p − q‖
    let lower = 1.0 / inv_norm - delta;
    let images: Vec<Vec<f64>> = samples.par_iter().map(|p| g.value(p)).collect();
    let collisions: usize = (0..samples.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..samples.len())
                .filter(|&j| norm.dist(&images[i], &images[j]) < lower * norm.dist(&samples[i], &samples[j]) - 1e-12)
                .count()
        })
        .collect::<Vec<usize>>()
        .into_iter()
        .sum();
    report.certificate.zero_failures("injective_on_grid", None, collisions);

    // surjectivity onto the predicted ball
    let gc = g.value(&center);
    let closed = Region::ball(center.clone(), radius, norm);
    let targets: Vec<Vec<f64>> = ball_points(u.dim(), image_radius * (1.0 - 1e-9), norm, opts.target_res)
        .into_iter()
        .map(|p| p.iter().zip(&gc).map(|(a, b)| a + b).collect())
        .collect();
    report.targets = targets.len();
    let solved: Vec<Option<Vec<f64>>> = targets
        .par_iter()
        .map(|z| {
            let seed: Vec<f64> = center
                .iter()
                .zip(crate::linalg::mat_vec(&a_inv, &sub(z, &gc)))
                .map(|(c, s)| c + s)
                .collect();
            let seed = if closed.contains_closed(&seed) { seed } else { center.clone() };
            g.preimage(z, &seed, u, norm).ok().filter(|y| closed.gauge(y) <= 1.0 + 1e-9)
        })
        .collect();
    let missing = solved.iter().filter(|s| s.is_none()).count();
    report.certificate.zero_failures("targets_have_preimages", None, missing);

    let found: Vec<(&Vec<f64>, &Vec<f64>)> = targets
        .iter()
        .zip(&solved)
        .filter_map(|(z, y)| y.as_ref().map(|y| (z, y)))
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..found.len() {
        for j in i + 1..found.len() {
            let dz = norm.dist(found[i].0, found[j].0);
            if dz > 0.0 {
                worst = worst.max(norm.dist(found[i].1, found[j].1) / dz);
            }
        }
    }
    report.certificate.le("inverse_lipschitz", None, worst, lipschitz, 1e-6);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(map: &[&str], center: f64, half: f64, d: usize) -> QiftProblem {
        QiftProblem {
            map: map.iter().map(|s| Expr::parse(s).unwrap()).collect(),
            domain: Region::ball(vec![center; d], half, Norm::Sup),
            point: vec![center; d],
            ball_center: None,
            ball_radius: None,
        }
    }

    #[test]
    fn linear_doubling() {
        let p = problem(&["2*x1", "2*x2"], 0.0, 1.0, 2);
        let r = certify_qift(&p, &QiftOptions::default()).unwrap();
        assert!(r.delta_hat < 1e-8);
        assert!((r.image_radius - 2.0).abs() < 1e-6, "{}", r.image_radius);
        assert!(r.certificate.passed, "{:?}", r.certificate);
    }

    #[test]
    fn identity_map() {
        let p = problem(&["x1"], 0.0, 1.0, 1);
        let r = certify_qift(&p, &QiftOptions::default()).unwrap();
        assert!((r.image_radius - 1.0).abs() < 1e-6);
        assert!((r.lipschitz - 1.0).abs() < 1e-6);
        assert!(r.certificate.passed);
    }

    #[test]
    fn singular_differential() {
        let p = problem(&["x1^3"], 0.0, 1.0, 1);
        assert!(matches!(
            certify_qift(&p, &QiftOptions::default()),
            Err(Error::SingularDifferential { .. })
        ));
    }

    #[test]
    fn parse_problem_file() {
        let text = r#"
map = ["x1 + 0.1*sin(x1)"]
point = [0.0]
ball_center = [0.5]
ball_radius = 0.4
[domain]
shape = "box"
center = [0.0]
extent = [1.0]
norm = "sup"
"#;
        let p = QiftProblem::parse(text).unwrap();
        let r = certify_qift(&p, &QiftOptions::default()).unwrap();
        assert!(r.delta_hat <= 0.1 * (1.0 - 1f64.cos()) + 1e-6);
        assert!(r.certificate.passed, "{:?}", r.certificate);
    }
}
