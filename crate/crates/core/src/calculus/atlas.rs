use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::seminorm::{seminorm_filtered, Atlas, SampleRegion, WeightFn, DEFAULT_CAP};
use super::{fd_step, ChartField, LocalizedField, MAX_ORDER};
use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::fd;
use crate::grid::Region;
use crate::linalg::{mat_vec, Norm};
use crate::manifold::ManifoldSpec;

/// Sup over overlap samples of the chart-change defect
/// `‖D(φ∘κ⁻¹)·X_κ − X_φ‖`.
pub fn compatibility_residual(spec: &ManifoldSpec, x: &LocalizedField) -> Result<f64> {
    let res = spec.grid_resolution;
    let per_chart: Vec<Result<f64>> = (0..spec.charts.len())
        .into_par_iter()
        .map(|a| {
            let dom = &spec.charts[a].domain;
            let mut worst: f64 = 0.0;
            for p in dom.fitted_points(res).into_iter().filter(|p| dom.contains(p)) {
                for &b in spec.neighbors(a) {
                    let Some(q) = spec.to_chart(a, &p, b) else { continue };
                    let xa = x.value(a, &p)?;
                    let xb = x.value(b, &q)?;
                    let pushed = mat_vec(&spec.transition_jacobian(a, b, &p), &xa);
                    worst = worst.max(Norm::Sup.dist(&pushed, &xb));
                }
            }
            Ok(worst)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in per_chart {
        worst = worst.max(r?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictComparison {
    pub order: usize,
    pub full: f64,
    pub restricted: f64,
}

#[derive(Debug, Clone)]
pub struct Restriction {
    pub field: LocalizedField,
    /// Sub-atlas domains, indexed like the charts of the full atlas.
    pub domains: Vec<Option<Region>>,
    pub comparisons: Vec<RestrictComparison>,
    pub certificate: Certificate,
}

fn region_within(outer: &Region, inner: &Region) -> bool {
    inner == outer || outer.contains_region_closure(inner)
}

/// Restrict `x` to the sub-atlas given by `(chart id, smaller domain)` and
/// compare seminorms on the shared lattice.
pub fn subordinate_restrict(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    sub: &[(String, Region)],
    requests: &[(&dyn WeightFn, usize)],
) -> Result<Restriction> {
    let mut domains: Vec<Option<Region>> = vec![None; spec.charts.len()];
    for (id, region) in sub {
        let i = spec
            .chart_index(id)
            .map_err(|_| Error::NotSubordinate(format!("`{id}` is not a chart of the atlas")))?;
        if !region_within(&spec.charts[i].domain, region) {
            return Err(Error::NotSubordinate(format!(
                "restricted domain of `{id}` is not contained in the chart domain"
            )));
        }
        domains[i] = Some(region.clone());
    }
    let charts = x
        .charts
        .iter()
        .zip(&domains)
        .map(|(c, d)| if d.is_some() { c.clone() } else { ChartField::Zero })
        .collect();
    let field = LocalizedField {
        name: format!("{}|sub", x.name),
        charts,
        ..x.clone()
    };
    let full_regions = Atlas::A.regions(spec);
    let sub_regions: Vec<Option<SampleRegion>> = full_regions
        .iter()
        .zip(&domains)
        .map(|(r, d)| if d.is_some() { r.clone() } else { None })
        .collect();
    let shrunk: Vec<Option<Region>> = domains
        .iter()
        .enumerate()
        .map(|(i, d)| d.as_ref().and_then(|d| d.shrink(spec.spacing(i))))
        .collect();
    let keep = |i: usize, p: &[f64]| shrunk[i].as_ref().is_some_and(|r| r.contains_closed(p));
    let mut cert = Certificate::new("subordinate_restriction", spec.grid_resolution, 1.0);
    let mut comparisons = Vec::new();
    for (w, l) in requests {
        let full = seminorm_filtered(spec, x, *w, *l, &full_regions, DEFAULT_CAP, &|_, _| true)?;
        let restricted = seminorm_filtered(spec, &field, *w, *l, &sub_regions, DEFAULT_CAP, &keep)?;
        cert.le(
            &format!("restricted_below_full:{l}"),
            None,
            restricted.value,
            full.value,
            1e-12,
        );
        comparisons.push(RestrictComparison {
            order: *l,
            full: full.value,
            restricted: restricted.value,
        });
    }
    Ok(Restriction {
        field,
        domains,
        comparisons,
        certificate: cert,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectReport {
    pub value_a: f64,
    pub value_intersect: f64,
    pub shared_points: usize,
    pub total_points: usize,
    /// Both suprema ran over the same sample points and agree.
    pub agrees: bool,
}

/// Seminorm of `x` over the charts `atlas_a` and over their restrictions to
/// the overlaps with the charts `atlas_b`.
pub fn intersect_atlas_seminorm(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    atlas_a: &[usize],
    atlas_b: &[usize],
    w: &dyn WeightFn,
    order: usize,
) -> Result<IntersectReport> {
    let regions: Vec<Option<SampleRegion>> = Atlas::A
        .regions(spec)
        .into_iter()
        .enumerate()
        .map(|(i, r)| if atlas_a.contains(&i) { r } else { None })
        .collect();
    let in_b = |i: usize, p: &[f64]| atlas_b.iter().any(|&j| spec.to_chart(i, p, j).is_some());
    let whole = seminorm_filtered(spec, x, w, order, &regions, DEFAULT_CAP, &|_, _| true)?;
    let inter = seminorm_filtered(spec, x, w, order, &regions, DEFAULT_CAP, &in_b)?;
    let total = whole.points;
    let shared = inter.points;
    if shared == 0 {
        return Err(Error::EmptyIntersection);
    }
    Ok(IntersectReport {
        value_a: whole.value,
        value_intersect: inter.value,
        shared_points: shared,
        total_points: total,
        agrees: shared == total && (whole.value - inter.value).abs() <= 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferEntry {
    pub weight: String,
    pub order: usize,
    /// Over the A charts, from the pulled-back representatives.
    pub over_a: f64,
    /// Over the B charts, from the given representatives.
    pub over_b: f64,
    /// Over the A charts, from the representatives `x` already carries.
    pub over_a_direct: f64,
}

#[derive(Debug, Clone)]
pub struct TransferReport {
    pub pulled: LocalizedField,
    pub entries: Vec<TransferEntry>,
    pub certificate: Certificate,
}

/// First chart of `atlas_b` containing the point `p` of chart `i`.
fn covering(spec: &ManifoldSpec, atlas_b: &[usize], i: usize, p: &[f64]) -> Option<(usize, Vec<f64>)> {
    atlas_b.iter().find_map(|&j| spec.to_chart(i, p, j).map(|q| (j, q)))
}

/// Transfer `x` from the charts `atlas_b` to the charts `atlas_a` with
/// `X_κ(x) = D(κ∘φ⁻¹)(y)·X_φ(y)`, `y = φ∘κ⁻¹(x)`, and certify that every
/// seminorm is finite on both sides.
pub fn chart_change_transfer(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    atlas_a: &[usize],
    atlas_b: &[usize],
    weights: &[(String, &dyn WeightFn)],
    k: usize,
) -> Result<TransferReport> {
    if x.slots != 0 {
        return Err(Error::DimensionMismatch {
            expected: 0,
            got: x.slots,
        });
    }
    check_multipliers(spec, atlas_a, atlas_b, weights, k)?;
    let spec_arc = Arc::new(spec.clone());
    let atlas_b_vec: Arc<Vec<usize>> = Arc::new(atlas_b.to_vec());
    let charts: Vec<ChartField> = (0..spec.charts.len())
        .map(|i| {
            if !atlas_a.contains(&i) {
                return ChartField::Zero;
            }
            let (spec, atlas_b, x) = (spec_arc.clone(), atlas_b_vec.clone(), x.clone());
            ChartField::Eval(Arc::new(move |p: &[f64]| {
                let (j, q) = covering(&spec, &atlas_b, i, p).ok_or(Error::NoContainingChart)?;
                let v = x.value(j, &q)?;
                Ok(mat_vec(&spec.transition_jacobian(j, i, &q), &v))
            }))
        })
        .collect();
    let pulled = LocalizedField {
        name: format!("{}|A", x.name),
        charts,
        ..x.clone()
    };
    let all = Atlas::A.regions(spec);
    let pick = |set: &[usize]| -> Vec<Option<SampleRegion>> {
        all.iter()
            .enumerate()
            .map(|(i, r)| if set.contains(&i) { r.clone() } else { None })
            .collect()
    };
    let (ra, rb) = (pick(atlas_a), pick(atlas_b));
    let reachable = |i: usize, p: &[f64]| covering(spec, atlas_b, i, p).is_some();
    let mut cert = Certificate::new("chart_change_transfer", spec.grid_resolution, 1.0);
    let mut entries = Vec::new();
    for (name, w) in weights {
        for l in 0..=k {
            let a = seminorm_filtered(spec, &pulled, *w, l, &ra, DEFAULT_CAP, &reachable)?;
            let b = seminorm_filtered(spec, x, *w, l, &rb, DEFAULT_CAP, &|_, _| true)?;
            let direct = seminorm_filtered(spec, x, *w, l, &ra, DEFAULT_CAP, &reachable)?;
            cert.lt(&format!("finite_over_a:{name}:{l}"), None, a.value, DEFAULT_CAP);
            cert.lt(&format!("finite_over_b:{name}:{l}"), None, b.value, DEFAULT_CAP);
            entries.push(TransferEntry {
                weight: name.clone(),
                order: l,
                over_a: a.value,
                over_b: b.value,
                over_a_direct: direct.value,
            });
        }
    }
    Ok(TransferReport {
        pulled,
        entries,
        certificate: cert,
    })
}

/// The transition differentials and their derivatives up to order `k` must
/// be bounded on the overlaps, and every weight must be comparable across
/// each overlap.
fn check_multipliers(
    spec: &ManifoldSpec,
    atlas_a: &[usize],
    atlas_b: &[usize],
    weights: &[(String, &dyn WeightFn)],
    k: usize,
) -> Result<()> {
    let res = spec.grid_resolution.min(33);
    for &i in atlas_a {
        let dom = &spec.charts[i].domain;
        let norm = spec.charts[i].norm();
        let samples: Vec<Vec<f64>> = dom.fitted_points(res).into_iter().filter(|p| dom.contains(p)).collect();
        for &j in atlas_b {
            if i == j {
                continue;
            }
            let Some(t) = spec.transition(j, i) else { continue };
            let h_ext = spec.charts[j].extent();
            for p in &samples {
                let Some(q) = spec.to_chart(i, p, j) else { continue };
                let map = |z: &[f64]| -> Result<Vec<f64>> { Ok(t.apply(z)) };
                for l in 1..=(k + 1).min(MAX_ORDER) {
                    let dl = fd::derivative(&map, &q, l, fd_step(l, h_ext))?;
                    let v = norm.multilinear(&dl, spec.dim(), spec.dim(), l, 1);
                    if !(v < DEFAULT_CAP) {
                        return Err(Error::MultiplierConditionUnverified(format!(
                            "derivative of order {l} of the transition `{}` -> `{}` is unbounded",
                            spec.charts[j].id, spec.charts[i].id
                        )));
                    }
                }
                for (name, w) in weights {
                    let (fa, fb) = (w.value(i, p).abs(), w.value(j, &q).abs());
                    let ratio = if fa == fb { 1.0 } else { fa.max(fb) / fa.min(fb) };
                    if !(ratio < DEFAULT_CAP) {
                        return Err(Error::MultiplierConditionUnverified(format!(
                            "weight `{name}` is not comparable across `{}` and `{}`",
                            spec.charts[i].id, spec.charts[j].id
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{seminorm, Constant};
    use crate::oracle;

    #[test]
    fn restriction_to_smaller_balls() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let x = LocalizedField::uniform(&o.spec, "x", &["sin(3*x1)", "x1*x2"]).unwrap();
        let sub: Vec<(String, Region)> = o
            .spec
            .charts
            .iter()
            .map(|c| (c.id.clone(), Region::ball(c.center().to_vec(), 0.75, Norm::Sup)))
            .collect();
        let one = Constant(1.0);
        let r = subordinate_restrict(&o.spec, &x, &sub, &[(&one, 0), (&one, 1)]).unwrap();
        assert!(r.certificate.passed);
        let same: Vec<(String, Region)> = o.spec.charts.iter().map(|c| (c.id.clone(), c.domain.clone())).collect();
        let r = subordinate_restrict(&o.spec, &x, &same, &[(&one, 1)]).unwrap();
        assert_eq!(r.comparisons[0].full, r.comparisons[0].restricted);
    }

    #[test]
    fn restriction_must_shrink() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let x = LocalizedField::zero(&o.spec);
        let big = vec![("c_0".to_string(), Region::ball(vec![0.0], 1.5, Norm::Sup))];
        assert!(matches!(
            subordinate_restrict(&o.spec, &x, &big, &[]),
            Err(Error::NotSubordinate(_))
        ));
    }

    #[test]
    fn rotation_preserves_order_zero() {
        let o = oracle::rotated_pair_oracle(0.7).unwrap();
        // X_b(y) = R·X_a(R⁻¹y)
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let rinv = move |y: &[f64]| [c * y[0] + s * y[1], -s * y[0] + c * y[1]];
        let fa = move |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![1.0 + p[1], p[0]]) };
        let fb = move |y: &[f64]| -> Result<Vec<f64>> {
            let p = rinv(y);
            let v = [1.0 + p[1], p[0]];
            Ok(vec![c * v[0] - s * v[1], s * v[0] + c * v[1]])
        };
        let x = LocalizedField::from_fns("x", 2, vec![Arc::new(fa), Arc::new(fb)]);
        assert!(compatibility_residual(&o.spec, &x).unwrap() < 1e-6);
        let one = Constant(1.0);
        let rep = chart_change_transfer(&o.spec, &x, &[0], &[1], &[("one".into(), &one)], 0).unwrap();
        assert!(rep.certificate.passed);
        let e = &rep.entries[0];
        // same field, so pulled-back and given representatives agree pointwise
        assert!((e.over_a - e.over_a_direct).abs() < 1e-8, "{e:?}");
        // the two lattices sample the same disc differently
        assert!((e.over_a - e.over_b).abs() < 5e-3, "{e:?}");
        let direct = seminorm(&o.spec, &x, &one, 0, Atlas::A).unwrap();
        assert!(direct.value >= e.over_a - 1e-8);
    }
}
