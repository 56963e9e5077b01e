//! Norms, operator norms and small dense helpers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Sup,
    Euclidean,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::Sup => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Norm::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::Sup => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
            Norm::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }

    /// Operator norm of a linear map between spaces carrying this norm.
    pub fn op(self, a: &DMatrix<f64>) -> f64 {
        match self {
            Norm::Sup => (0..a.nrows())
                .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            Norm::Euclidean => spectral_norm(a),
        }
    }

    /// Norm of a multilinear map stored as `t[out][i1]..[is]` (row-major) with
    /// `d_in = blocks * d` inputs per slot, each slot normed by the max over
    /// its `blocks` sub-vectors. Exact for the sup norm; for the euclidean
    /// norm an upper bound as soon as `slots >= 2` or `blocks >= 2` (exact when a
    /// single block is nonzero).
    pub fn multilinear(self, t: &[f64], d_out: usize, d_in: usize, slots: usize, blocks: usize) -> f64 {
        debug_assert_eq!(t.len(), d_out * d_in.pow(slots as u32));
        if slots == 0 {
            return self.of(t);
        }
        match self {
            Norm::Sup => sup_multilinear(t, d_out, d_in, slots),
            Norm::Euclidean => {
                let blocks = blocks.max(1);
                if slots == 1 {
                    let m = DMatrix::from_row_slice(d_out, d_in, t);
                    let d = d_in / blocks;
                    return (0..blocks).map(|b| spectral_norm(&m.columns(b * d, d).into_owned())).sum();
                }
                euclid_multilinear_bound(t, d_out, d_in, slots, blocks)
            }
        }
    }
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |m: f64, s| m.max(*s))
}

fn sup_multilinear(t: &[f64], d_out: usize, d_in: usize, slots: usize) -> f64 {
    // extreme points of the unit cube in the first slots-1 arguments, exact sum in the last
    let free = d_in * (slots - 1);
    let stride = d_in.pow((slots - 1) as u32) * d_in;
    let mut best: f64 = 0.0;
    let combos: u64 = 1u64 << free;
    let mut signs = vec![0.0; free];
    for mask in 0..combos {
        for (b, s) in signs.iter_mut().enumerate() {
            *s = if mask >> b & 1 == 1 { -1.0 } else { 1.0 };
        }
        for k in 0..d_out {
            let block = &t[k * stride..(k + 1) * stride];
            let mut cur: Vec<f64> = block.to_vec();
            let mut len = stride;
            for s in 0..slots - 1 {
                let inner = len / d_in;
                let mut next = vec![0.0; inner];
                for i in 0..d_in {
                    let u = signs[s * d_in + i];
                    for (j, n) in next.iter_mut().enumerate() {
                        *n += u * cur[i * inner + j];
                    }
                }
                cur = next;
                len = inner;
            }
            let v: f64 = cur.iter().map(|x| x.abs()).sum();
            best = best.max(v);
        }
    }
    best
}

fn euclid_multilinear_bound(t: &[f64], d_out: usize, d_in: usize, slots: usize, blocks: usize) -> f64 {
    let d = d_in / blocks;
    let per_out = d_in.pow(slots as u32);
    let n_block_combos = blocks.pow(slots as u32);
    let mut sums = vec![0.0; n_block_combos];
    for k in 0..d_out {
        for flat in 0..per_out {
            let v = t[k * per_out + flat];
            if v == 0.0 {
                continue;
            }
            let mut rest = flat;
            let mut combo = 0;
            let mut mul = 1;
            for _ in 0..slots {
                let idx = rest % d_in;
                rest /= d_in;
                combo += (idx / d) * mul;
                mul *= blocks;
            }
            sums[combo] += v * v;
        }
    }
    sums.iter().map(|s| s.sqrt()).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

pub fn axpy(a: &[f64], c: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + c * y).collect()
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

/// Inverse together with the condition number in the given norm.
pub fn inverse_with_condition(m: &DMatrix<f64>, norm: Norm) -> Option<(DMatrix<f64>, f64)> {
    let inv = m.clone().try_inverse()?;
    if inv.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let cond = norm.op(m) * norm.op(&inv);
    Some((inv, cond))
}

/// Solve `m x = b`, falling back to `None` for singular systems.
pub fn solve(m: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let lu = m.clone().lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}
