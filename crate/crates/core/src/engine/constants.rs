use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExpOptions, MetricField};
use crate::error::{Error, Result};
use crate::grid::{ball_points, directions, unit_sphere_points, Region};
use crate::linalg::Norm;
use crate::manifold::ManifoldSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsOptions {
    /// Points per axis on the compact set `K`.
    pub res_x: usize,
    /// Points per axis on the velocity ball.
    pub res_y: usize,
    pub bisection_iters: usize,
    /// Radial scan steps before bisecting for RadExpFibInv.
    pub scan_steps: usize,
    /// Points per face edge when sampling the unit sphere.
    pub sphere_res: usize,
    pub exp: ExpOptions,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        ConstantsOptions {
            res_x: 9,
            res_y: 7,
            bisection_iters: 40,
            scan_steps: 16,
            sphere_res: 33,
            exp: ExpOptions::default(),
        }
    }
}

/// Maximum of `f` over `items`, computed in parallel and reduced in order.
pub(crate) fn par_max<T, F>(items: &[T], f: F) -> Result<f64>
where
    T: Sync,
    F: Fn(&T) -> Result<f64> + Sync,
{
    let vals: Vec<Result<f64>> = items.par_iter().map(&f).collect();
    let mut best: f64 = 0.0;
    for v in vals {
        let v = v?;
        if v.is_nan() {
            return Err(Error::StepSizeUnderflow);
        }
        best = best.max(v);
    }
    Ok(best)
}

fn par_min<T, F>(items: &[T], init: f64, f: F) -> Result<f64>
where
    T: Sync,
    F: Fn(&T) -> Result<f64> + Sync,
{
    let vals: Vec<Result<f64>> = items.par_iter().map(&f).collect();
    let mut best = init;
    for v in vals {
        best = best.min(v?);
    }
    Ok(best)
}

fn region_samples(m: &MetricField, k: &Region, res: usize) -> Result<Vec<Vec<f64>>> {
    let pts = if k.max_extent() == 0.0 {
        vec![k.center.clone()]
    } else {
        k.fitted_points(res)
    };
    if pts.is_empty() {
        return Err(Error::DegenerateRegion("no sample points".into()));
    }
    if let Some(p) = pts.iter().find(|p| !m.chart.domain.contains(p)) {
        return Err(Error::DegenerateRegion(format!(
            "sample {p:?} of the region lies outside the open chart domain"
        )));
    }
    Ok(pts)
}

fn grenz_passes(m: &MetricField, xs: &[Vec<f64>], dirs: &[Vec<f64>], tau: f64, opts: ExpOptions) -> bool {
    let ok: Vec<bool> = xs
        .par_iter()
        .map(|x| {
            dirs.iter().all(|dir| {
                let y: Vec<f64> = dir.iter().map(|v| v * tau).collect();
                m.exp_value(x, &y, opts).is_ok()
            })
        })
        .collect();
    ok.into_iter().all(|b| b)
}

/// Largest sampled τ such that every geodesic from `K` with speed ≤ τ stays
/// in the chart domain up to time 1 (a lower estimate).
pub fn estimate_grenz_exp(m: &MetricField, k: &Region, opts: &ConstantsOptions) -> Result<f64> {
    let xs = region_samples(m, k, opts.res_x)?;
    let dirs = directions(m.dim(), m.chart.norm());
    let exp = ExpOptions {
        enforce_domain: true,
        ..opts.exp
    };
    let mut hi = 2.0 * (m.dim() as f64).sqrt() * m.chart.extent();
    if grenz_passes(m, &xs, &dirs, hi, exp) {
        return Ok(hi);
    }
    let mut lo = 0.0;
    for _ in 0..opts.bisection_iters {
        let mid = 0.5 * (lo + hi);
        if grenz_passes(m, &xs, &dirs, mid, exp) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// (a, b): sup of ‖∂₂exp‖ and of ‖D²exp‖ over `K × closed Ball(0, δ)`.
pub fn estimate_first_second_exp_bounds(m: &MetricField, k: &Region, delta: f64, opts: &ConstantsOptions) -> Result<(f64, f64)> {
    let d = m.dim();
    let norm = m.chart.norm();
    if m.is_constant() {
        return Ok((norm.op(&DMatrix::identity(d, d)), 0.0));
    }
    let xs = region_samples(m, k, opts.res_x)?;
    let ys = ball_points(d, delta, norm, opts.res_y);
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = xs.iter().flat_map(|x| ys.iter().map(move |y| (x, y))).collect();
    let results: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|(x, y)| {
            m.exp_value(x, y, opts.exp)?;
            let j2 = m.exp_fiber_jacobian(x, y, opts.exp)?;
            let h = m.exp_second_derivative(x, y, opts.exp)?;
            Ok((norm.op(&j2), norm.multilinear(&h, d, 2 * d, 2, 2)))
        })
        .collect();
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for r in results {
        let (ra, rb) = r?;
        a = a.max(ra);
        b = b.max(rb);
    }
    Ok((a, b))
}

/// c/C for the comparison `c‖h‖ ≤ ‖h‖_{g_x} ≤ C‖h‖` over `x ∈ K`.
pub fn estimate_quot_norm(m: &MetricField, k: &Region, opts: &ConstantsOptions) -> Result<f64> {
    let (c, big) = quot_norm_bounds(m, k, opts)?;
    Ok(c / big)
}

pub fn quot_norm_bounds(m: &MetricField, k: &Region, opts: &ConstantsOptions) -> Result<(f64, f64)> {
    let d = m.dim();
    let xs = region_samples(m, k, opts.res_x)?;
    let norm = m.chart.norm();
    let sphere = unit_sphere_points(d, norm, opts.sphere_res);
    let vertices: Vec<Vec<f64>> = (0..(1u32 << d))
        .map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect();
    let per_x: Vec<(f64, f64)> = xs
        .par_iter()
        .map(|x| {
            let g = m.g(x);
            match norm {
                Norm::Euclidean => {
                    let eig = SymmetricEigen::new(g).eigenvalues;
                    let lo = eig.iter().fold(f64::INFINITY, |a, b| a.min(*b));
                    let hi = eig.iter().fold(0.0f64, |a, b| a.max(*b));
                    (lo.max(0.0).sqrt(), hi.sqrt())
                }
                Norm::Sup => {
                    let q = |h: &Vec<f64>| m.riemannian_norm(x, h);
                    let lo = sphere.iter().map(q).fold(f64::INFINITY, f64::min);
                    let hi = vertices.iter().map(q).fold(0.0, f64::max);
                    (lo, hi)
                }
            }
        })
        .collect();
    let c = per_x.iter().fold(f64::INFINITY, |a, (lo, _)| a.min(*lo));
    let big = per_x.iter().fold(0.0f64, |a, (_, hi)| a.max(*hi));
    if !(c > 0.0) || !big.is_finite() {
        return Err(Error::DegenerateRegion("metric degenerates on the region".into()));
    }
    Ok((c, big))
}

/// Largest sampled radius `r ≤ grenz` with `‖∂₂exp(x, y) − I‖ < σ` for all
/// sampled `x ∈ V` and `‖y‖ ≤ r` along the direction grid.
pub fn estimate_rad_exp_fib_inv(m: &MetricField, v: &Region, sigma: f64, grenz: f64, opts: &ConstantsOptions) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::SigmaOutOfRange(sigma));
    }
    if m.is_constant() {
        return Ok(grenz);
    }
    let d = m.dim();
    let norm = m.chart.norm();
    let xs = region_samples(m, v, opts.res_x)?;
    let dirs = directions(d, norm);
    let rays: Vec<(&Vec<f64>, &Vec<f64>)> = xs.iter().flat_map(|x| dirs.iter().map(move |u| (x, u))).collect();
    let dev = |x: &[f64], u: &[f64], s: f64| -> Result<f64> {
        let y: Vec<f64> = u.iter().map(|c| c * s).collect();
        let j = m.exp_fiber_jacobian(x, &y, opts.exp)? - DMatrix::identity(d, d);
        Ok(norm.op(&j))
    };
    par_min(&rays, grenz, |(x, u)| {
        let n = opts.scan_steps.max(1);
        let mut prev = 0.0;
        for k in 1..=n {
            let s = grenz * k as f64 / n as f64;
            if dev(x, u, s)? >= sigma {
                let (mut lo, mut hi) = (prev, s);
                for _ in 0..opts.bisection_iters.min(30) {
                    let mid = 0.5 * (lo + hi);
                    if dev(x, u, mid)? >= sigma {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(lo);
            }
            prev = s;
        }
        Ok(grenz)
    })
}

/// (grenzLog, aL, bL) on the tube `{(x, x + y) : x ∈ K, ‖y‖ ≤ δ}`.
pub fn estimate_log_constants(
    m: &MetricField,
    k: &Region,
    delta: f64,
    grenz_log: f64,
    trust_radius: f64,
    opts: &ConstantsOptions,
) -> Result<(f64, f64, f64)> {
    if !(delta < grenz_log) {
        return Err(Error::DeltaTooLarge { delta, limit: grenz_log });
    }
    let d = m.dim();
    let norm = m.chart.norm();
    if m.is_constant() {
        return Ok((grenz_log, norm.op(&DMatrix::identity(d, d)), 0.0));
    }
    let xs = region_samples(m, k, opts.res_x)?;
    let ys = ball_points(d, delta, norm, opts.res_y);
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = xs.iter().flat_map(|x| ys.iter().map(move |y| (x, y))).collect();
    let results: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|(x, y)| {
            let z: Vec<f64> = x.iter().zip(y.iter()).map(|(a, b)| a + b).collect();
            let v = m.log_seeded(x, &z, y, trust_radius, opts.exp)?.value;
            let dl = m.log_differential(x, &v, opts.exp)?;
            let a_l = norm.op(&dl.columns(d, d).into_owned());
            // E(x, L(x, z)) = z twice differentiated:
            // D²L[p, q] = -(∂₂E)⁻¹ D²E[U p, U q] with U = [[I, 0], DL]
            let n = 2 * d;
            let hess = m.exp_second_derivative(x, &v, opts.exp)?;
            let e2inv = dl.columns(d, d).into_owned();
            let mut u = DMatrix::zeros(n, n);
            for i in 0..d {
                u[(i, i)] = 1.0;
            }
            u.rows_mut(d, d).copy_from(&dl);
            let mut t = vec![0.0; d * n * n];
            let mut hu = vec![0.0; d * n * n];
            for k in 0..d {
                let hk = DMatrix::from_row_slice(n, n, &hess[k * n * n..(k + 1) * n * n]);
                let c = u.transpose() * hk * &u;
                hu[k * n * n..(k + 1) * n * n].copy_from_slice(c.transpose().as_slice());
            }
            for r in 0..d {
                for k in 0..d {
                    let f = e2inv[(r, k)];
                    for ab in 0..n * n {
                        t[r * n * n + ab] -= f * hu[k * n * n + ab];
                    }
                }
            }
            Ok((a_l, norm.multilinear(&t, d, n, 2, 2)))
        })
        .collect();
    let (mut a_l, mut b_l) = (0.0f64, 0.0f64);
    for r in results {
        let (ra, rb) = r?;
        a_l = a_l.max(ra);
        b_l = b_l.max(rb);
    }
    Ok((grenz_log, a_l, b_l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    /// Closed inner ball `Ball(c, r)`.
    #[default]
    Inner,
    /// Closed padded ball `Ball(c, r + R)`.
    Padded,
}

impl RegionKind {
    pub fn region(self, chart: &crate::manifold::Chart) -> Region {
        match self {
            RegionKind::Inner => chart.inner_ball(),
            RegionKind::Padded => chart.padded_ball(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsRequest {
    pub region: RegionKind,
    pub sigma: f64,
    /// Velocity radius for a and b; defaults to 0.9·grenzExp.
    pub delta_exp: Option<f64>,
    /// Tube radius for the log constants; defaults to 0.5·grenzLog.
    pub delta_log: Option<f64>,
}

impl Default for ConstantsRequest {
    fn default() -> Self {
        ConstantsRequest {
            region: RegionKind::Inner,
            sigma: 0.5,
            delta_exp: None,
            delta_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsResolution {
    pub x_grid: usize,
    pub y_grid: usize,
    pub directions: usize,
    pub bisection_iters: usize,
    pub rk4_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub chart: String,
    pub region: RegionKind,
    pub sigma: f64,
    pub delta_exp: f64,
    pub delta_log: f64,
    pub grenz_exp: f64,
    pub grenz_log: f64,
    pub a: f64,
    pub b: f64,
    pub a_log: f64,
    pub b_log: f64,
    pub quot_norm: f64,
    pub rad_exp_fib_inv: f64,
    pub resolution: ConstantsResolution,
    pub safety_factor: f64,
}

impl ConstantsReport {
    pub fn a_safe(&self) -> f64 {
        self.a * self.safety_factor
    }

    pub fn b_safe(&self) -> f64 {
        self.b * self.safety_factor
    }
}

/// Every constant for one chart.
pub fn estimate_constants(
    spec: &ManifoldSpec,
    chart: usize,
    req: &ConstantsRequest,
    opts: &ConstantsOptions,
    safety_factor: f64,
) -> Result<ConstantsReport> {
    let c = &spec.charts[chart];
    let m = MetricField::new(c);
    let k = req.region.region(c);
    let grenz_exp = estimate_grenz_exp(&m, &k, opts)?;
    let delta_exp = req.delta_exp.unwrap_or(0.9 * grenz_exp);
    if !(delta_exp < grenz_exp) || !(delta_exp > 0.0) {
        return Err(Error::DeltaTooLarge {
            delta: delta_exp,
            limit: grenz_exp,
        });
    }
    let (a, b) = estimate_first_second_exp_bounds(&m, &k, delta_exp, opts)?;
    let quot_norm = estimate_quot_norm(&m, &k, opts)?;
    let rad = estimate_rad_exp_fib_inv(&m, &k, req.sigma, grenz_exp, opts)?;
    let grenz_log = quot_norm * rad;
    let delta_log = req.delta_log.unwrap_or(0.5 * grenz_log);
    let (grenz_log, a_log, b_log) = estimate_log_constants(&m, &k, delta_log, grenz_log, grenz_exp, opts)?;
    Ok(ConstantsReport {
        chart: c.id.clone(),
        region: req.region,
        sigma: req.sigma,
        delta_exp,
        delta_log,
        grenz_exp,
        grenz_log,
        a,
        b,
        a_log,
        b_log,
        quot_norm,
        rad_exp_fib_inv: rad,
        resolution: ConstantsResolution {
            x_grid: opts.res_x,
            y_grid: opts.res_y,
            directions: directions(c.dim, c.norm()).len(),
            bisection_iters: opts.bisection_iters,
            rk4_steps: opts.exp.steps,
        },
        safety_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn opts() -> ConstantsOptions {
        ConstantsOptions {
            res_x: 5,
            res_y: 3,
            ..Default::default()
        }
    }

    #[test]
    fn flat_grenz_exp() {
        // U = Ball(0, 2), K = Ball(0, 1), both sup: grenzExp = 1
        let o = oracle::flat_oracle_with(oracle::FlatConfig {
            d: 2,
            r1: 2.0,
            r2: 1.0,
            half_width: 0,
            ..Default::default()
        })
        .unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let k = Region::ball(vec![0.0, 0.0], 1.0, Norm::Sup);
        let g = estimate_grenz_exp(&m, &k, &ConstantsOptions::default()).unwrap();
        assert!((g - 1.0).abs() < 1e-9, "{g}");
        let pt = Region::ball(vec![0.0, 0.0], 0.0, Norm::Sup);
        let g0 = estimate_grenz_exp(&m, &pt, &ConstantsOptions::default()).unwrap();
        assert!((g0 - 2.0).abs() < 1e-9, "{g0}");
    }

    #[test]
    fn quot_norm_examples() {
        for (metric, expect) in [
            ([["1", "0"], ["0", "4"]], 0.5),
            ([["4", "0"], ["0", "4"]], 1.0),
            ([["1", "0"], ["0", "1"]], 1.0),
        ] {
            let o = oracle::custom_metric_chart(
                metric.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
                Norm::Euclidean,
            )
            .unwrap();
            let m = MetricField::new(&o.charts[0]);
            let q = estimate_quot_norm(&m, &o.charts[0].inner_ball(), &opts()).unwrap();
            assert!((q - expect).abs() < 1e-12, "{q}");
        }
    }

    #[test]
    fn flat_constants_are_closed_form() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let i = o.spec.chart_index("c_0_0").unwrap();
        let r = estimate_constants(&o.spec, i, &ConstantsRequest::default(), &opts(), 1.1).unwrap();
        assert_eq!(r.a, 1.0);
        assert_eq!(r.b, 0.0);
        assert_eq!(r.a_log, 1.0);
        assert!((r.grenz_exp - 0.25).abs() < 1e-9);
        assert!((r.quot_norm - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.grenz_log - 0.25 / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn sigma_range() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let k = o.spec.charts[0].inner_ball();
        assert!(matches!(
            estimate_rad_exp_fib_inv(&m, &k, 1.0, 0.25, &opts()),
            Err(Error::SigmaOutOfRange(_))
        ));
    }
}
