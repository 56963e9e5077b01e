use nalgebra::DMatrix;
use serde::Serialize;

use super::MetricField;
use crate::error::{Error, Result};
use crate::fd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpOptions {
    /// RK4 steps on [0, 1].
    pub steps: usize,
    /// Reject trajectories that leave the chart domain.
    pub enforce_domain: bool,
}

impl Default for ExpOptions {
    fn default() -> Self {
        ExpOptions {
            steps: 64,
            enforce_domain: true,
        }
    }
}

impl ExpOptions {
    pub(crate) fn relaxed(self) -> Self {
        ExpOptions {
            enforce_domain: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpEvaluation {
    pub base: Vec<f64>,
    pub velocity: Vec<f64>,
    pub value: Vec<f64>,
    /// ∂₁exp, derivative in the base point.
    #[serde(skip)]
    pub d1: DMatrix<f64>,
    /// ∂₂exp, derivative in the velocity.
    #[serde(skip)]
    pub d2: DMatrix<f64>,
    pub steps: usize,
    pub step_size: f64,
}

impl ExpEvaluation {
    /// `D exp(x, y)·(v, w) = ∂₁exp·v + ∂₂exp·w`.
    pub fn apply_differential(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let a = crate::linalg::mat_vec(&self.d1, v);
        let b = crate::linalg::mat_vec(&self.d2, w);
        crate::linalg::add(&a, &b)
    }
}

impl MetricField {
    /// Finite-difference step for first derivatives of exp.
    pub fn fd_step(&self) -> f64 {
        1e-5 * self.chart.extent()
    }

    /// Step for second derivatives of exp.
    pub fn fd_step2(&self) -> f64 {
        1e-3 * self.chart.extent()
    }

    fn accel(&self, x: &[f64], v: &[f64], gamma: &mut [f64], out: &mut [f64]) {
        let d = x.len();
        self.christoffel_into(x, gamma);
        for k in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += gamma[k * d * d + i * d + j] * v[i] * v[j];
                }
            }
            out[k] = -s;
        }
    }

    /// Endpoint of the geodesic through `x` with initial velocity `y`.
    pub fn exp_value(&self, x: &[f64], y: &[f64], opts: ExpOptions) -> Result<Vec<f64>> {
        let d = self.dim();
        if opts.enforce_domain && !self.chart.domain.contains(x) {
            return Err(Error::LeftChartDomain { t_exit: 0.0 });
        }
        if y.iter().all(|v| *v == 0.0) {
            return Ok(x.to_vec());
        }
        if self.is_constant() {
            let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
            if opts.enforce_domain && !self.chart.domain.contains(&z) {
                return Err(Error::LeftChartDomain {
                    t_exit: self.segment_exit(x, y),
                });
            }
            return Ok(z);
        }
        let n = opts.steps.max(1);
        let dt = 1.0 / n as f64;
        if !(dt > f64::EPSILON) {
            return Err(Error::StepSizeUnderflow);
        }
        let mut pos = x.to_vec();
        let mut vel = y.to_vec();
        let mut gamma = vec![0.0; d * d * d];
        let (mut k1v, mut k2v, mut k3v, mut k4v) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut tp = vec![0.0; d];
        let mut tv = vec![0.0; d];
        let (mut k1x, mut k2x, mut k3x, mut k4x) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        for step in 0..n {
            // k1
            self.accel(&pos, &vel, &mut gamma, &mut k1v);
            k1x.copy_from_slice(&vel);
            for i in 0..d {
                tp[i] = pos[i] + 0.5 * dt * k1x[i];
                tv[i] = vel[i] + 0.5 * dt * k1v[i];
            }
            k2x.copy_from_slice(&tv);
            self.accel(&tp, &tv, &mut gamma, &mut k2v);
            for i in 0..d {
                tp[i] = pos[i] + 0.5 * dt * k2x[i];
                tv[i] = vel[i] + 0.5 * dt * k2v[i];
            }
            k3x.copy_from_slice(&tv);
            self.accel(&tp, &tv, &mut gamma, &mut k3v);
            for i in 0..d {
                tp[i] = pos[i] + dt * k3x[i];
                tv[i] = vel[i] + dt * k3v[i];
            }
            k4x.copy_from_slice(&tv);
            self.accel(&tp, &tv, &mut gamma, &mut k4v);
            for i in 0..d {
                pos[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
                vel[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            }
            if pos.iter().chain(&vel).any(|v| !v.is_finite()) {
                return Err(Error::StepSizeUnderflow);
            }
            if opts.enforce_domain && !self.chart.domain.contains(&pos) {
                return Err(Error::LeftChartDomain {
                    t_exit: (step + 1) as f64 * dt,
                });
            }
        }
        Ok(pos)
    }

    /// First parameter at which `x + t y` leaves the (convex) domain.
    fn segment_exit(&self, x: &[f64], y: &[f64]) -> f64 {
        let dom = &self.chart.domain;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let p: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + mid * b).collect();
            if dom.contains(&p) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Exp together with both partial Jacobians.
    pub fn geodesic_exp(&self, x: &[f64], y: &[f64], opts: ExpOptions) -> Result<ExpEvaluation> {
        let d = self.dim();
        let value = self.exp_value(x, y, opts)?;
        let zero_velocity = y.iter().all(|v| *v == 0.0);
        let (d1, d2) = if self.is_constant() {
            (DMatrix::identity(d, d), DMatrix::identity(d, d))
        } else {
            self.exp_jacobians(x, y, opts)?
        };
        let n = if zero_velocity || self.is_constant() { 0 } else { opts.steps };
        Ok(ExpEvaluation {
            base: x.to_vec(),
            velocity: y.to_vec(),
            value,
            d1,
            d2,
            steps: n,
            step_size: if n == 0 { 0.0 } else { 1.0 / n as f64 },
        })
    }

    /// (∂₁exp, ∂₂exp) by central differences.
    pub fn exp_jacobians(&self, x: &[f64], y: &[f64], opts: ExpOptions) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.dim();
        if self.is_constant() {
            return Ok((DMatrix::identity(d, d), DMatrix::identity(d, d)));
        }
        let relaxed = opts.relaxed();
        let h = self.fd_step();
        let f = |z: &[f64]| self.exp_value(&z[..d], &z[d..], relaxed);
        let z: Vec<f64> = x.iter().chain(y).copied().collect();
        let j = fd::jacobian(&f, &z, h)?;
        let full = DMatrix::from_row_slice(d, 2 * d, &j);
        Ok((full.columns(0, d).into_owned(), full.columns(d, d).into_owned()))
    }

    /// ∂₂exp only.
    pub fn exp_fiber_jacobian(&self, x: &[f64], y: &[f64], opts: ExpOptions) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if self.is_constant() {
            return Ok(DMatrix::identity(d, d));
        }
        let relaxed = opts.relaxed();
        let f = |w: &[f64]| self.exp_value(x, w, relaxed);
        let j = fd::jacobian(&f, y, self.fd_step())?;
        Ok(DMatrix::from_row_slice(d, d, &j))
    }

    /// D²exp(x, y) as a bilinear map on R^{2d}, stored `[k][a][b]`.
    pub fn exp_second_derivative(&self, x: &[f64], y: &[f64], opts: ExpOptions) -> Result<Vec<f64>> {
        let d = self.dim();
        if self.is_constant() {
            return Ok(vec![0.0; d * 4 * d * d]);
        }
        let relaxed = opts.relaxed();
        let f = |z: &[f64]| self.exp_value(&z[..d], &z[d..], relaxed);
        let z: Vec<f64> = x.iter().chain(y).copied().collect();
        fd::hessian(&f, &z, self.fd_step2())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    #[test]
    fn flat_exp_is_translation() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let m = MetricField::new(o.spec.chart("c_0_0").unwrap());
        let e = m.geodesic_exp(&[0.2, -0.1], &[0.5, 0.5], ExpOptions::default()).unwrap();
        assert!((e.value[0] - 0.7).abs() < 1e-10 && (e.value[1] - 0.4).abs() < 1e-10);
        assert_eq!(e.d2, DMatrix::identity(2, 2));
    }

    #[test]
    fn zero_velocity_is_exact() {
        let o = oracle::half_plane_oracle(1.0, 2.0).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let e = m.geodesic_exp(&[0.1, 1.4], &[0.0, 0.0], ExpOptions::default()).unwrap();
        assert_eq!(e.value, vec![0.1, 1.4]);
        assert_eq!(e.steps, 0);
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((e.d2[(i, j)] - id).abs() < 1e-6);
                assert!((e.d1[(i, j)] - id).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn vertical_hyperbolic_geodesic() {
        // chart wide enough to hold (0, e)
        let o = oracle::half_plane_oracle(0.5, 3.0).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let v = m.exp_value(&[0.0, 1.0], &[0.0, 1.0], ExpOptions::default()).unwrap();
        assert!(v[0].abs() < 1e-12);
        assert!((v[1] - std::f64::consts::E).abs() < 1e-6);
    }

    #[test]
    fn leaving_domain_is_reported() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let m = MetricField::new(o.spec.chart("c_0").unwrap());
        match m.exp_value(&[0.5], &[1.0], ExpOptions::default()) {
            Err(Error::LeftChartDomain { t_exit }) => assert!((t_exit - 0.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }
}
