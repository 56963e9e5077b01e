//! Regions in chart coordinates and the sample grids laid over them.

use serde::{Deserialize, Serialize};

use crate::linalg::Norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ball,
    Box,
}

/// A ball (in `norm`) or an axis-aligned box. For balls every entry of
/// `extent` equals the radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RegionDoc")]
pub struct Region {
    pub shape: Shape,
    pub center: Vec<f64>,
    pub extent: Vec<f64>,
    #[serde(default)]
    pub norm: Norm,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExtentDoc {
    One(f64),
    Many(Vec<f64>),
}

/// Accepts a scalar `extent`, repeated over every axis.
#[derive(Deserialize)]
struct RegionDoc {
    shape: Shape,
    center: Vec<f64>,
    extent: ExtentDoc,
    #[serde(default)]
    norm: Norm,
}

impl From<RegionDoc> for Region {
    fn from(r: RegionDoc) -> Region {
        let extent = match r.extent {
            ExtentDoc::One(e) => vec![e; r.center.len()],
            ExtentDoc::Many(v) => v,
        };
        Region {
            shape: r.shape,
            center: r.center,
            extent,
            norm: r.norm,
        }
    }
}

const CLOSED_TOL: f64 = 1e-12;

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64, norm: Norm) -> Region {
        let d = center.len();
        Region {
            shape: Shape::Ball,
            center,
            extent: vec![radius; d],
            norm,
        }
    }

    pub fn boxed(center: Vec<f64>, extent: Vec<f64>, norm: Norm) -> Region {
        Region {
            shape: Shape::Box,
            center,
            extent,
            norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn max_extent(&self) -> f64 {
        self.extent.iter().fold(0.0, |m, e| m.max(*e))
    }

    pub fn min_extent(&self) -> f64 {
        self.extent.iter().fold(f64::INFINITY, |m, e| m.min(*e))
    }

    /// 0 at the center, 1 on the boundary.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        match self.shape {
            Shape::Ball => {
                let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
                self.norm.of(&d) / self.extent[0]
            }
            Shape::Box => x
                .iter()
                .zip(&self.center)
                .zip(&self.extent)
                .fold(0.0, |m, ((a, c), e)| m.max((a - c).abs() / e)),
        }
    }

    /// Open containment.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.gauge(x) < 1.0
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.gauge(x) <= 1.0 + CLOSED_TOL
    }

    /// Region with every extent reduced by `h`; `None` when nothing remains.
    pub fn shrink(&self, h: f64) -> Option<Region> {
        let extent: Vec<f64> = self.extent.iter().map(|e| e - h).collect();
        if extent.iter().any(|e| *e <= 0.0) {
            return None;
        }
        Some(Region { extent, ..self.clone() })
    }

    /// Whether the closed region `inner` lies in the open region `self`,
    /// decided exactly for the shapes we support.
    pub fn contains_region_closure(&self, inner: &Region) -> bool {
        let offset: Vec<f64> = inner.center.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        match (self.shape, inner.shape) {
            (Shape::Box, _) => {
                // support of the inner region along each axis
                (0..self.dim()).all(|i| {
                    let reach = match inner.shape {
                        Shape::Box => inner.extent[i],
                        Shape::Ball => inner.extent[0],
                    };
                    offset[i].abs() + reach < self.extent[i]
                })
            }
            (Shape::Ball, Shape::Ball) => {
                let r_in = inner.extent[0];
                let r_out = self.extent[0];
                match (self.norm, inner.norm) {
                    (a, b) if a == b => self.norm.of(&offset) + r_in < r_out,
                    (Norm::Euclidean, Norm::Sup) => {
                        let corner = (self.dim() as f64).sqrt() * r_in;
                        self.norm.of(&offset) + corner < r_out
                    }
                    _ => self.norm.of(&offset) + r_in < r_out,
                }
            }
            (Shape::Ball, Shape::Box) => {
                let corner: Vec<f64> = inner.extent.clone();
                self.norm.of(&offset) + self.norm.of(&corner) < self.extent[0]
            }
        }
    }

    /// Axis-aligned bounding box as (lo, hi).
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.center.iter().zip(&self.extent).map(|(c, e)| c - e).collect();
        let hi = self.center.iter().zip(&self.extent).map(|(c, e)| c + e).collect();
        (lo, hi)
    }

    /// `res` points per axis over the bounding box, boundary included, kept
    /// when inside the closed region.
    pub fn fitted_points(&self, res: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|i| linspace(lo[i], hi[i], res)).collect();
        product(&axes).into_iter().filter(|p| self.contains_closed(p)).collect()
    }

    /// Points of the lattice `origin + h * Z^d` inside the closed region.
    pub fn aligned_points(&self, origin: &[f64], h: f64) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                let k0 = ((lo[i] - origin[i]) / h - 1e-9).ceil() as i64;
                let k1 = ((hi[i] - origin[i]) / h + 1e-9).floor() as i64;
                (k0..=k1).map(|k| origin[i] + k as f64 * h).collect()
            })
            .collect();
        product(&axes).into_iter().filter(|p| self.contains_closed(p)).collect()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Cartesian product; the first axis varies slowest.
pub fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for v in axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Closed ball of radius `radius` around 0, sampled with an odd number of
/// points per axis so that the origin is included.
pub fn ball_points(d: usize, radius: f64, norm: Norm, res: usize) -> Vec<Vec<f64>> {
    let res = if res % 2 == 0 { res + 1 } else { res.max(1) };
    Region::ball(vec![0.0; d], radius, norm).fitted_points(res)
}

/// The 2d axis directions and the 2^d diagonals, normalised in `norm`.
pub fn directions(d: usize, norm: Norm) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = s;
            out.push(v);
        }
    }
    if d > 1 {
        for mask in 0..(1u32 << d) {
            let v: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let n = norm.of(&v);
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Unit sphere of `norm`, sampled: for the sup norm a grid on every face of
/// the cube, for the euclidean norm normalised cube-face points.
pub fn unit_sphere_points(d: usize, norm: Norm, res: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let face_axis = linspace(-1.0, 1.0, res.max(2));
    let mut out = Vec::new();
    for fixed in 0..d {
        for s in [1.0, -1.0] {
            let axes: Vec<Vec<f64>> = (0..d).map(|i| if i == fixed { vec![s] } else { face_axis.clone() }).collect();
            for p in product(&axes) {
                let n = norm.of(&p);
                out.push(p.into_iter().map(|x| x / n).collect());
            }
        }
    }
    out
}
