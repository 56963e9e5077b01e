use crate::error::{Error, Result};
use crate::grid::Region;

/// Values on the lattice `origin + h·k`, `k ∈ lo + [0, shape)`, stored
/// row-major with `width` components per node. Absent nodes hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulation {
    pub origin: Vec<f64>,
    pub h: f64,
    pub lo: Vec<i64>,
    pub shape: Vec<usize>,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Tabulation {
    /// Sample `f` on every lattice node inside the open `domain` and within
    /// `margin` cells of the closed `region`.
    pub fn sample<F>(
        region: &Region,
        domain: &Region,
        origin: &[f64],
        h: f64,
        margin: usize,
        width: usize,
        f: F,
    ) -> Result<Tabulation>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    {
        use rayon::prelude::*;
        let grow = margin as f64 * h;
        let wide = Region {
            extent: region.extent.iter().map(|e| e + grow).collect(),
            ..region.clone()
        };
        let (blo, bhi) = wide.bounds();
        let d = origin.len();
        let mut lo = Vec::with_capacity(d);
        let mut shape = Vec::with_capacity(d);
        for i in 0..d {
            let k0 = ((blo[i] - origin[i]) / h - 1e-9).ceil() as i64;
            let k1 = ((bhi[i] - origin[i]) / h + 1e-9).floor() as i64;
            lo.push(k0);
            shape.push((k1 - k0 + 1).max(0) as usize);
        }
        let mut t = Tabulation {
            origin: origin.to_vec(),
            h,
            lo,
            shape,
            width,
            values: Vec::new(),
        };
        let n = t.shape.iter().product::<usize>();
        let rows: Vec<Result<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|flat| {
                let p = t.point(&t.unflatten(flat));
                if domain.contains(&p) && wide.contains_closed(&p) {
                    let v = f(&p)?;
                    if v.len() != width {
                        return Err(Error::DimensionMismatch {
                            expected: width,
                            got: v.len(),
                        });
                    }
                    Ok(v)
                } else {
                    Ok(vec![f64::NAN; width])
                }
            })
            .collect();
        let mut values = Vec::with_capacity(n * width);
        for r in rows {
            values.extend(r?);
        }
        t.values = values;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// Number of present nodes.
    pub fn nodes(&self) -> usize {
        self.values.chunks(self.width.max(1)).filter(|c| !c[0].is_nan()).count()
    }

    fn unflatten(&self, mut flat: usize) -> Vec<i64> {
        let mut idx = vec![0i64; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = self.lo[i] + (flat % self.shape[i]) as i64;
            flat /= self.shape[i];
        }
        idx
    }

    fn flatten(&self, idx: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for i in 0..self.dim() {
            let k = idx[i] - self.lo[i];
            if k < 0 || k as usize >= self.shape[i] {
                return None;
            }
            flat = flat * self.shape[i] + k as usize;
        }
        Some(flat)
    }

    pub fn point(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter().zip(&self.origin).map(|(k, o)| o + *k as f64 * self.h).collect()
    }

    pub fn node(&self, idx: &[i64]) -> Option<&[f64]> {
        let f = self.flatten(idx)?;
        let v = &self.values[f * self.width..(f + 1) * self.width];
        if v[0].is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Lattice index of `x` if it sits on a node.
    pub fn index_of(&self, x: &[f64]) -> Option<Vec<i64>> {
        let mut idx = Vec::with_capacity(x.len());
        for (xi, o) in x.iter().zip(&self.origin) {
            let k = ((xi - o) / self.h).round();
            if (o + k * self.h - xi).abs() > 1e-9 * self.h {
                return None;
            }
            idx.push(k as i64);
        }
        Some(idx)
    }

    /// Node value, or multilinear interpolation inside a complete cell.
    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(idx) = self.index_of(x) {
            return self.node(&idx).map(|v| v.to_vec()).ok_or(Error::NoContainingChart);
        }
        let d = self.dim();
        let mut base = Vec::with_capacity(d);
        let mut frac = Vec::with_capacity(d);
        for (xi, o) in x.iter().zip(&self.origin) {
            let s = (xi - o) / self.h;
            let k = s.floor();
            base.push(k as i64);
            frac.push(s - k);
        }
        let mut out = vec![0.0; self.width];
        for corner in 0..(1u32 << d) {
            let mut idx = base.clone();
            let mut w = 1.0;
            for i in 0..d {
                if corner >> i & 1 == 1 {
                    idx[i] += 1;
                    w *= frac[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            if w == 0.0 {
                continue;
            }
            let v = self.node(&idx).ok_or(Error::NoContainingChart)?;
            for (o, vi) in out.iter_mut().zip(v) {
                *o += w * vi;
            }
        }
        Ok(out)
    }

    fn node_derivative(&self, idx: &mut Vec<i64>, order: usize) -> Option<Vec<f64>> {
        if order == 0 {
            return self.node(idx).map(|v| v.to_vec());
        }
        let d = self.dim();
        let mut parts = Vec::with_capacity(d);
        for i in 0..d {
            idx[i] += 1;
            let p = self.node_derivative(idx, order - 1);
            idx[i] -= 2;
            let m = self.node_derivative(idx, order - 1);
            idx[i] += 1;
            let (p, m) = (p?, m?);
            parts.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * self.h)).collect::<Vec<f64>>());
        }
        Some(crate::fd::interleave(&parts, d))
    }

    /// Nested central differences on the lattice; `None` off the nodes or
    /// where a neighbour is missing.
    pub fn derivative(&self, x: &[f64], order: usize) -> Option<Vec<f64>> {
        let mut idx = self.index_of(x)?;
        self.node(&idx)?;
        self.node_derivative(&mut idx, order)
    }

    /// First derivatives at every node where they exist.
    pub fn derivative_table(&self) -> Tabulation {
        let d = self.dim();
        let width = self.width * d;
        let n = self.shape.iter().product::<usize>();
        let mut values = Vec::with_capacity(n * width);
        for flat in 0..n {
            let mut idx = self.unflatten(flat);
            let v = if self.node(&idx).is_some() {
                self.node_derivative(&mut idx, 1)
            } else {
                None
            };
            match v {
                Some(v) => values.extend(v),
                None => values.extend(std::iter::repeat(f64::NAN).take(width)),
            }
        }
        Tabulation {
            width,
            values,
            ..self.clone()
        }
    }

    pub fn same_lattice(&self, other: &Tabulation) -> bool {
        self.origin == other.origin
            && self.h == other.h
            && self.lo == other.lo
            && self.shape == other.shape
            && self.width == other.width
    }

    /// `a·self + b·other` on a shared lattice.
    pub fn combine(&self, a: f64, other: &Tabulation, b: f64) -> Tabulation {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(s, t)| if b == 0.0 { a * s } else { a * s + b * t })
            .collect();
        Tabulation { values, ..self.clone() }
    }

    /// Present nodes with their points.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (Vec<f64>, &[f64])> + '_ {
        let n = self.shape.iter().product::<usize>();
        (0..n).filter_map(move |flat| {
            let idx = self.unflatten(flat);
            self.node(&idx).map(|v| (self.point(&idx), v))
        })
    }
}
