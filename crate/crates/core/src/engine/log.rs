use nalgebra::DMatrix;
use serde::Serialize;

use super::{ExpOptions, MetricField};
use crate::error::{Error, Result};
use crate::linalg::{solve, sub};

pub const LOG_MAX_ITER: usize = 50;
pub const LOG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEvaluation {
    pub value: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl MetricField {
    /// Riemannian logarithm: `y` with `exp(x, y) = z` and `‖y‖ < trust_radius`,
    /// by damped Newton seeded at `z - x`.
    pub fn riemannian_log(&self, x: &[f64], z: &[f64], trust_radius: f64, opts: ExpOptions) -> Result<LogEvaluation> {
        self.log_seeded(x, z, &sub(z, x), trust_radius, opts)
    }

    pub fn log_seeded(&self, x: &[f64], z: &[f64], seed: &[f64], trust_radius: f64, opts: ExpOptions) -> Result<LogEvaluation> {
        let norm = self.chart.norm();
        let relaxed = opts.relaxed();
        if self.is_constant() {
            let y = sub(z, x);
            if norm.of(&y) >= trust_radius {
                return Err(Error::OutsideInjectivityRadius { trust_radius });
            }
            self.exp_value(x, &y, opts)?;
            return Ok(LogEvaluation {
                value: y,
                iterations: 0,
                residual: 0.0,
            });
        }
        let mut y = seed.to_vec();
        let mut f = sub(&self.exp_value(x, &y, relaxed)?, z);
        let mut res = norm.of(&f);
        let mut it = 0;
        let mut polished = false;
        loop {
            if res <= LOG_TOL {
                if polished {
                    break;
                }
                polished = true;
            } else if it >= LOG_MAX_ITER {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                });
            }
            it += 1;
            let j = self.exp_fiber_jacobian(x, &y, relaxed)?;
            let Some(step) = solve(&j, &f) else {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                });
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda >= 1.0 / 1024.0 {
                let cand: Vec<f64> = y.iter().zip(&step).map(|(a, s)| a - lambda * s).collect();
                if let Ok(v) = self.exp_value(x, &cand, relaxed) {
                    let fc = sub(&v, z);
                    let rc = norm.of(&fc);
                    if rc < res || (polished && rc <= res) {
                        y = cand;
                        f = fc;
                        res = rc;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                if res <= LOG_TOL {
                    break;
                }
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                });
            }
            if polished {
                break;
            }
        }
        if norm.of(&y) >= trust_radius {
            return Err(Error::OutsideInjectivityRadius { trust_radius });
        }
        // the geodesic itself must stay in the chart
        self.exp_value(x, &y, opts)?;
        Ok(LogEvaluation {
            value: y,
            iterations: it,
            residual: res,
        })
    }

    /// Differential of `(x, z) ↦ log(x, z)` at a solved pair, from the
    /// implicit function theorem: `[-(∂₂exp)⁻¹∂₁exp, (∂₂exp)⁻¹]`, a d×2d matrix.
    pub fn log_differential(&self, x: &[f64], y: &[f64], opts: ExpOptions) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let (d1, d2) = self.exp_jacobians(x, y, opts)?;
        let inv = d2.try_inverse().ok_or(Error::SingularDifferential {
            condition: f64::INFINITY,
        })?;
        let left = -(&inv * d1);
        let mut out = DMatrix::zeros(d, 2 * d);
        out.columns_mut(0, d).copy_from(&left);
        out.columns_mut(d, d).copy_from(&inv);
        Ok(out)
    }

    /// Check `exp(x, log(x, z)) = z`.
    pub fn log_residual(&self, x: &[f64], z: &[f64], y: &[f64], opts: ExpOptions) -> Result<f64> {
        let v = self.exp_value(x, y, opts)?;
        Ok(self.chart.norm().dist(&v, z))
    }
}
