use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LocalizedField;
use crate::certificate::Certificate;
use crate::error::Result;
use crate::grid::Region;
use crate::manifold::{ManifoldSpec, WeightFamily};

/// Seminorm values above this are reported as exceeded.
pub const DEFAULT_CAP: f64 = 1e12;

/// A weight evaluated chart-wise as `f ∘ κ⁻¹`.
pub trait WeightFn: Sync {
    fn value(&self, chart: usize, x: &[f64]) -> f64;
}

impl WeightFn for WeightFamily {
    fn value(&self, chart: usize, x: &[f64]) -> f64 {
        self.per_chart[chart].eval(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl WeightFn for Constant {
    fn value(&self, _chart: usize, _x: &[f64]) -> f64 {
        self.0
    }
}

impl<F: Fn(usize, &[f64]) -> f64 + Sync> WeightFn for F {
    fn value(&self, chart: usize, x: &[f64]) -> f64 {
        self(chart, x)
    }
}

/// Which chart regions a supremum runs over: the open domains minus one
/// lattice cell (`A`), the closed padded balls (`B`) or the closed inner
/// balls (`C`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Atlas {
    #[default]
    A,
    B,
    C,
}

impl std::str::FromStr for Atlas {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "A" | "a" => Ok(Atlas::A),
            "B" | "b" => Ok(Atlas::B),
            "C" | "c" => Ok(Atlas::C),
            other => Err(format!("unknown atlas `{other}`, expected A, B or C")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRegion {
    pub region: Region,
    pub origin: Vec<f64>,
    pub h: f64,
}

impl Atlas {
    pub fn sample_region(self, spec: &ManifoldSpec, i: usize) -> Option<SampleRegion> {
        let c = &spec.charts[i];
        let h = spec.spacing(i);
        let region = match self {
            Atlas::A => c.domain.shrink(h)?,
            Atlas::B => c.padded_ball(),
            Atlas::C => c.inner_ball(),
        };
        Some(SampleRegion {
            region,
            origin: c.center().to_vec(),
            h,
        })
    }

    pub fn regions(self, spec: &ManifoldSpec) -> Vec<Option<SampleRegion>> {
        (0..spec.charts.len()).map(|i| self.sample_region(spec, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Argmax {
    pub chart: String,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seminorm {
    pub value: f64,
    /// The supremum passed the cap; `value` is then the cap.
    pub exceeded: bool,
    pub order: usize,
    pub argmax: Option<Argmax>,
    pub per_chart: Vec<f64>,
    pub resolution: usize,
    pub points: usize,
    /// Lattice points without the neighbours a tabulated derivative needs.
    pub skipped: usize,
}

/// `sup_κ sup_x |f_κ(x)|·‖D^ℓ X_κ(x)‖` over the lattice points of the
/// selected atlas regions.
pub fn seminorm(spec: &ManifoldSpec, x: &LocalizedField, w: &dyn WeightFn, order: usize, atlas: Atlas) -> Result<Seminorm> {
    seminorm_on(spec, x, w, order, &atlas.regions(spec), DEFAULT_CAP)
}

pub fn seminorm_on(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    w: &dyn WeightFn,
    order: usize,
    regions: &[Option<SampleRegion>],
    cap: f64,
) -> Result<Seminorm> {
    seminorm_filtered(spec, x, w, order, regions, cap, &|_, _| true)
}

/// [`seminorm_on`] restricted to the lattice points accepted by `keep`.
pub fn seminorm_filtered(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    w: &dyn WeightFn,
    order: usize,
    regions: &[Option<SampleRegion>],
    cap: f64,
    keep: &(dyn Fn(usize, &[f64]) -> bool + Sync),
) -> Result<Seminorm> {
    let d = x.dim;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut per_chart = Vec::with_capacity(regions.len());
    let (mut points, mut skipped) = (0, 0);
    for (i, sr) in regions.iter().enumerate() {
        let Some(sr) = sr else {
            per_chart.push(0.0);
            continue;
        };
        let chart = &spec.charts[i];
        let norm = chart.norm();
        let extent = chart.extent();
        let pts: Vec<Vec<f64>> = sr
            .region
            .aligned_points(&sr.origin, sr.h)
            .into_iter()
            .filter(|p| chart.domain.contains(p) && keep(i, p))
            .collect();
        let vals: Vec<Result<Option<f64>>> = pts
            .par_iter()
            .map(|p| {
                let f = w.value(i, p).abs();
                if f == 0.0 {
                    return Ok(Some(0.0));
                }
                let Some(t) = x.derivative(i, p, order, extent)? else {
                    return Ok(None);
                };
                let v = f * norm.multilinear(&t, d, d, x.slots + order, 1);
                Ok(Some(if v.is_nan() { f64::INFINITY } else { v }))
            })
            .collect();
        let mut chart_best: Option<(f64, usize)> = None;
        for (k, v) in vals.into_iter().enumerate() {
            points += 1;
            match v? {
                None => skipped += 1,
                Some(v) => {
                    if chart_best.map_or(true, |(b, _)| v > b) {
                        chart_best = Some((v, k));
                    }
                }
            }
        }
        let Some((v, k)) = chart_best else {
            per_chart.push(0.0);
            continue;
        };
        per_chart.push(v.min(cap));
        let better = match &best {
            None => true,
            Some((b, j, _)) => v > *b || (v == *b && chart.id < spec.charts[*j].id),
        };
        if better {
            best = Some((v, i, pts[k].clone()));
        }
    }
    let (value, argmax) = match best {
        Some((v, i, p)) => (
            v,
            Some(Argmax {
                chart: spec.charts[i].id.clone(),
                point: p,
            }),
        ),
        None => (0.0, None),
    };
    Ok(Seminorm {
        value: value.min(cap),
        exceeded: !(value <= cap),
        order,
        argmax,
        per_chart,
        resolution: spec.grid_resolution,
        points,
        skipped,
    })
}

/// Finiteness of every seminorm `‖X‖_{f,ℓ}` with `f` in the set and `ℓ ≤ k`.
pub fn membership(
    spec: &ManifoldSpec,
    x: &LocalizedField,
    weights: &[(String, &dyn WeightFn)],
    k: usize,
    atlas: Atlas,
    cap: f64,
) -> Result<Certificate> {
    let mut cert = Certificate::new("membership", spec.grid_resolution, 1.0);
    let regions = atlas.regions(spec);
    let mut largest: Option<(f64, String, usize)> = None;
    for (name, w) in weights {
        for l in 0..=k {
            let s = seminorm_on(spec, x, *w, l, &regions, cap)?;
            cert.lt(&format!("finite:{name}:{l}"), None, s.value, cap);
            if largest.as_ref().map_or(true, |(v, _, _)| s.value > *v) {
                largest = Some((s.value, name.clone(), l));
            }
        }
    }
    if let Some((v, name, l)) = largest {
        cert.note(format!("largest seminorm {v:e} for weight `{name}` at order {l}"));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{self, FlatConfig};

    fn wide_line(res: usize) -> ManifoldSpec {
        oracle::flat_oracle_with(FlatConfig {
            d: 1,
            r1: 4.0,
            r2: 3.0,
            half_width: 0,
            grid_resolution: res,
            ..Default::default()
        })
        .unwrap()
        .spec
    }

    #[test]
    fn sine_has_unit_sup() {
        let spec = wide_line(2001);
        let x = LocalizedField::uniform(&spec, "s", &["sin(x1)"]).unwrap();
        let s = seminorm(&spec, &x, &Constant(1.0), 0, Atlas::A).unwrap();
        assert!((s.value - 1.0).abs() < 1e-4);
    }

    #[test]
    fn weighted_gaussian() {
        let spec = wide_line(4001);
        let x = LocalizedField::uniform(&spec, "g", &["exp(-x1^2)"]).unwrap();
        let f = |_: usize, p: &[f64]| p[0];
        let s = seminorm(&spec, &x, &f, 0, Atlas::A).unwrap();
        assert!((s.value - 0.428882).abs() < 1e-5, "{}", s.value);
    }

    #[test]
    fn zero_field() {
        let o = oracle::flat_oracle(2, 1.0, 0.75).unwrap();
        let x = LocalizedField::zero(&o.spec);
        for l in 0..=3 {
            let s = seminorm(&o.spec, &x, &Constant(5.0), l, Atlas::A).unwrap();
            assert_eq!(s.value, 0.0);
        }
        assert!(matches!(
            seminorm(&o.spec, &x, &Constant(1.0), 4, Atlas::A),
            Err(crate::Error::OrderUnavailable { .. })
        ));
    }

    #[test]
    fn membership_reports_cap() {
        let o = oracle::flat_oracle(1, 1.0, 0.75).unwrap();
        let x = LocalizedField::uniform(&o.spec, "c", &["1"]).unwrap();
        let f = |_: usize, p: &[f64]| p[0];
        let ok = membership(&o.spec, &x, &[("x".into(), &f)], 1, Atlas::A, DEFAULT_CAP).unwrap();
        assert!(ok.passed);
        let tight = membership(&o.spec, &x, &[("x".into(), &f)], 1, Atlas::A, 1.0).unwrap();
        assert!(!tight.passed);
    }
}
