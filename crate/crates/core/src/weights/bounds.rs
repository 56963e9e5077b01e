use nalgebra::DMatrix;
use serde::Serialize;

use crate::calculus::{fd_step, MAX_ORDER};
use crate::engine::constants::par_max;
use crate::engine::{ConstantsReport, ExpOptions, MetricField};
use crate::error::{Error, Result};
use crate::fd;
use crate::grid::ball_points;
use crate::manifold::ManifoldSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Derivatives of `(x, y) ↦ exp(x, y) − x`.
    ExpSuperposition,
    /// Derivatives of `(x, y) ↦ log(x, x + y)`.
    LogSuperposition,
    /// Derivatives of the transition differentials.
    TransitionDifferential,
}

impl BoundKind {
    pub fn short(self) -> &'static str {
        match self {
            BoundKind::ExpSuperposition => "B1",
            BoundKind::LogSuperposition => "B2",
            BoundKind::TransitionDifferential => "B3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    pub chart: String,
    /// Source chart of the transition for transition bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other: Option<String>,
    /// One value per entry of `orders`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundFamily {
    pub kind: BoundKind,
    pub orders: Vec<usize>,
    pub entries: Vec<BoundEntry>,
}

impl BoundFamily {
    pub fn per_chart(kind: BoundKind, orders: Vec<usize>, rows: Vec<(String, Vec<f64>)>) -> BoundFamily {
        BoundFamily {
            kind,
            orders,
            entries: rows
                .into_iter()
                .map(|(chart, values)| BoundEntry {
                    chart,
                    other: None,
                    values,
                })
                .collect(),
        }
    }

    pub fn value(&self, chart: &str, other: Option<&str>, order: usize) -> Option<f64> {
        let idx = self.orders.iter().position(|o| *o == order)?;
        self.entries
            .iter()
            .find(|e| e.chart == chart && e.other.as_deref() == other)
            .map(|e| e.values[idx])
    }

    /// Coefficient per chart for the `idx`-th order: the largest entry
    /// attached to the chart, 0 for charts without entries.
    pub fn chart_coefficients(&self, spec: &ManifoldSpec, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; spec.charts.len()];
        for e in &self.entries {
            if let Ok(i) = spec.chart_index(&e.chart) {
                out[i] = f64::max(out[i], e.values[idx]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundOptions {
    pub res_x: usize,
    pub res_y: usize,
    /// Points per axis for overlap samples.
    pub res_overlap: usize,
    pub exp: ExpOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            res_x: 5,
            res_y: 3,
            res_overlap: 9,
            exp: ExpOptions::default(),
        }
    }
}

/// Transition derivatives below this are difference-quotient noise.
const NOISE_FLOOR: f64 = 1e-7;

/// Sup-norms of `D^ℓ` of the exp and log superposition maps on
/// `V_κ × Ball(0, δ)` and of the transition differentials on the overlaps.
pub fn estimate_bound_families(
    spec: &ManifoldSpec,
    constants: &[ConstantsReport],
    delta_e: &[f64],
    delta_l: &[f64],
    max_order: usize,
    opts: &BoundOptions,
) -> Result<Vec<BoundFamily>> {
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(Error::OrderUnavailable {
            requested: max_order,
            available: MAX_ORDER,
        });
    }
    let n = spec.charts.len();
    if constants.len() != n || delta_e.len() != n || delta_l.len() != n {
        return Err(Error::ConstantsIncompatible(format!(
            "{n} charts, {} constant reports, {} + {} deltas",
            constants.len(),
            delta_e.len(),
            delta_l.len()
        )));
    }
    let orders: Vec<usize> = (1..=max_order).collect();
    let mut b1 = Vec::with_capacity(n);
    let mut b2 = Vec::with_capacity(n);
    for (i, c) in spec.charts.iter().enumerate() {
        let k = &constants[i];
        if !(delta_e[i] < k.grenz_exp) {
            return Err(Error::DeltaTooLarge {
                delta: delta_e[i],
                limit: k.grenz_exp,
            });
        }
        if !(delta_l[i] < k.grenz_log) {
            return Err(Error::DeltaTooLarge {
                delta: delta_l[i],
                limit: k.grenz_log,
            });
        }
        let m = MetricField::new(c);
        let region = k.region.region(c);
        let xs: Vec<Vec<f64>> = region
            .fitted_points(opts.res_x)
            .into_iter()
            .filter(|p| c.domain.contains(p))
            .collect();
        let e_vals = superposition_bounds(&m, &xs, delta_e[i], &orders, opts, |x, y| {
            let z = m.exp_value(x, y, opts.exp.relaxed())?;
            Ok(z.iter().zip(x).map(|(a, b)| a - b).collect())
        })?;
        let trust = k.grenz_exp;
        let l_vals = superposition_bounds(&m, &xs, delta_l[i], &orders, opts, |x, y| {
            let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
            Ok(m.log_seeded(x, &z, y, trust, opts.exp.relaxed())?.value)
        })?;
        b1.push((c.id.clone(), e_vals));
        b2.push((c.id.clone(), l_vals));
    }
    let t_orders: Vec<usize> = (0..max_order).collect();
    let mut b3 = Vec::new();
    for (i, c) in spec.charts.iter().enumerate() {
        for (j, src) in spec.charts.iter().enumerate() {
            let Some(t) = spec.transition(j, i) else { continue };
            let pts: Vec<Vec<f64>> = src
                .domain
                .fitted_points(opts.res_overlap)
                .into_iter()
                .filter(|p| spec.to_chart(j, p, i).is_some())
                .collect();
            if pts.is_empty() {
                continue;
            }
            let d = src.dim;
            let map = |z: &[f64]| -> Result<Vec<f64>> { Ok(t.apply(z)) };
            let mut values = Vec::with_capacity(t_orders.len());
            for &l in &t_orders {
                let h = fd_step(l + 1, src.extent());
                let mut v = par_max(&pts, |p| {
                    let dl = fd::derivative(&map, p, l + 1, h)?;
                    Ok(c.norm().multilinear(&dl, d, d, l + 1, 1))
                })?;
                if l > 0 && v < NOISE_FLOOR * (1.0 + values[0]) {
                    v = 0.0;
                }
                values.push(v);
            }
            b3.push(BoundEntry {
                chart: c.id.clone(),
                other: Some(src.id.clone()),
                values,
            });
        }
    }
    Ok(vec![
        BoundFamily::per_chart(BoundKind::ExpSuperposition, orders.clone(), b1),
        BoundFamily::per_chart(BoundKind::LogSuperposition, orders, b2),
        BoundFamily {
            kind: BoundKind::TransitionDifferential,
            orders: t_orders,
            entries: b3,
        },
    ])
}

/// `sup ‖D^ℓ F(x, y)‖` over `xs × Ball(0, δ)` in the product norm
/// `max(‖v‖, ‖w‖)`; `F(x, y) = y` exactly for constant metrics.
fn superposition_bounds<F>(
    m: &MetricField,
    xs: &[Vec<f64>],
    delta: f64,
    orders: &[usize],
    opts: &BoundOptions,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    let d = m.dim();
    let norm = m.chart.norm();
    if m.is_constant() {
        let mut block = DMatrix::zeros(d, 2 * d);
        block.columns_mut(d, d).fill_with_identity();
        let t: Vec<f64> = block.transpose().iter().copied().collect();
        let first = norm.multilinear(&t, d, 2 * d, 1, 2);
        return Ok(orders.iter().map(|&l| if l == 1 { first } else { 0.0 }).collect());
    }
    let ys = ball_points(d, delta, norm, opts.res_y);
    let pairs: Vec<Vec<f64>> = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| x.iter().chain(y).copied().collect()))
        .collect();
    let map = |w: &[f64]| -> Result<Vec<f64>> { f(&w[..d], &w[d..]) };
    let mut out = Vec::with_capacity(orders.len());
    for &l in orders {
        let h = fd_step(l, m.chart.extent());
        out.push(par_max(&pairs, |w| {
            let t = fd::derivative(&map, w, l, h)?;
            Ok(norm.multilinear(&t, d, 2 * d, l, 2))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{estimate_constants, ConstantsOptions, ConstantsRequest};
    use crate::oracle;

    fn constants(spec: &ManifoldSpec) -> Vec<ConstantsReport> {
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
    fn flat_identity_transitions() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let k = constants(&o.spec);
        let n = o.spec.charts.len();
        let fams = estimate_bound_families(&o.spec, &k, &vec![0.2; n], &vec![0.1; n], 3, &BoundOptions::default()).unwrap();
        for f in &fams[..2] {
            for e in &f.entries {
                assert_eq!(e.values, vec![1.0, 0.0, 0.0], "{:?}", f.kind);
            }
        }
        assert!(!fams[2].entries.is_empty());
        for e in &fams[2].entries {
            assert!((e.values[0] - 1.0).abs() < 1e-9, "{e:?}");
            assert_eq!(&e.values[1..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn rotation_is_isometric() {
        let o = oracle::rotated_pair_oracle(0.9).unwrap();
        let k = constants(&o.spec);
        let fams = estimate_bound_families(&o.spec, &k, &[0.1, 0.1], &[0.05, 0.05], 1, &BoundOptions::default()).unwrap();
        for e in &fams[2].entries {
            assert!((e.values[0] - 1.0).abs() < 1e-8, "{e:?}");
        }
    }

    #[test]
    fn deltas_must_fit() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let k = constants(&o.spec);
        let n = o.spec.charts.len();
        let r = estimate_bound_families(&o.spec, &k, &vec![10.0; n], &vec![0.01; n], 1, &BoundOptions::default());
        assert!(matches!(r, Err(Error::DeltaTooLarge { .. })));
    }
}
