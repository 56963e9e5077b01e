use nalgebra::DMatrix;

use crate::expr::Expr;
use crate::manifold::Chart;

/// Metric of one chart with finite-difference Christoffel symbols.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub chart: Chart,
    constant: bool,
    h: f64,
    /// Symbolic `∂_l g_ij` at `l*d*d + i*d + j`, when every entry is differentiable.
    dg: Option<Vec<Expr>>,
}

impl MetricField {
    pub fn new(chart: &Chart) -> Self {
        MetricField {
            constant: chart.metric_is_constant(),
            h: 1e-4 * chart.extent(),
            dg: metric_derivatives(chart),
            chart: chart.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.chart.dim
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn g(&self, x: &[f64]) -> DMatrix<f64> {
        self.chart.metric_at(x)
    }

    fn g_flat(&self, x: &[f64], out: &mut [f64]) {
        let d = self.chart.dim;
        for i in 0..d {
            for j in i..d {
                let v = self.chart.metric[i][j].eval(x);
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
    }

    /// `Γ^k_{ij}` stored at `k*d*d + i*d + j`.
    pub fn christoffel(&self, x: &[f64]) -> Vec<f64> {
        let d = self.chart.dim;
        let mut gamma = vec![0.0; d * d * d];
        if self.constant {
            return gamma;
        }
        self.christoffel_into(x, &mut gamma);
        gamma
    }

    pub(crate) fn christoffel_into(&self, x: &[f64], gamma: &mut [f64]) {
        let d = self.chart.dim;
        if self.constant {
            gamma.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let dd = d * d;
        // g, g⁻¹, dg[l][i][j] = ∂_l g_ij and pivoting scratch in one buffer
        let len = 3 * dd + d * dd;
        let mut stack = [0.0; 3 * 16 + 64];
        let mut heap = Vec::new();
        let buf: &mut [f64] = if len <= stack.len() {
            &mut stack[..len]
        } else {
            heap.resize(len, 0.0);
            &mut heap
        };
        let (g0, rest) = buf.split_at_mut(dd);
        let (work, rest) = rest.split_at_mut(dd);
        let (ginv, dg) = rest.split_at_mut(dd);
        self.g_flat(x, g0);
        match &self.dg {
            Some(exprs) => {
                for l in 0..d {
                    for i in 0..d {
                        for j in i..d {
                            let v = exprs[l * dd + i * d + j].eval(x);
                            dg[l * dd + i * d + j] = v;
                            dg[l * dd + j * d + i] = v;
                        }
                    }
                }
            }
            None => {
                let mut xp = x.to_vec();
                let mut gp = vec![0.0; 2 * dd];
                let (gp, gm) = gp.split_at_mut(dd);
                for l in 0..d {
                    xp[l] = x[l] + self.h;
                    self.g_flat(&xp, gp);
                    xp[l] = x[l] - self.h;
                    self.g_flat(&xp, gm);
                    xp[l] = x[l];
                    for ij in 0..dd {
                        dg[l * dd + ij] = (gp[ij] - gm[ij]) / (2.0 * self.h);
                    }
                }
            }
        }
        if !invert_into(g0, work, ginv, d) {
            gamma.iter_mut().for_each(|v| *v = f64::NAN);
            return;
        }
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        let t = dg[i * dd + j * d + l] + dg[j * dd + i * d + l] - dg[l * dd + i * d + j];
                        s += ginv[k * d + l] * t;
                    }
                    gamma[k * dd + i * d + j] = 0.5 * s;
                    gamma[k * dd + j * d + i] = 0.5 * s;
                }
            }
        }
    }

    /// `‖h‖_{g_x}`.
    pub fn riemannian_norm(&self, x: &[f64], h: &[f64]) -> f64 {
        let g = self.g(x);
        let d = self.chart.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += h[i] * g[(i, j)] * h[j];
            }
        }
        s.max(0.0).sqrt()
    }
}

fn metric_derivatives(chart: &Chart) -> Option<Vec<Expr>> {
    let d = chart.dim;
    let mut out = Vec::with_capacity(d * d * d);
    for l in 0..d {
        for i in 0..d {
            for j in 0..d {
                out.push(chart.metric[i][j].derivative(l)?);
            }
        }
    }
    Some(out)
}

/// Gauss-Jordan inverse with partial pivoting; false when singular.
fn invert_into(a: &[f64], m: &mut [f64], inv: &mut [f64], d: usize) -> bool {
    m.copy_from_slice(a);
    inv.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d {
        inv[i * d + i] = 1.0;
    }
    for c in 0..d {
        let p = (c..d)
            .max_by(|&r, &s| m[r * d + c].abs().total_cmp(&m[s * d + c].abs()))
            .expect("non-empty");
        let piv = m[p * d + c];
        if !(piv.abs() > 0.0) || !piv.is_finite() {
            return false;
        }
        if p != c {
            for k in 0..d {
                m.swap(p * d + k, c * d + k);
                inv.swap(p * d + k, c * d + k);
            }
        }
        for k in 0..d {
            m[c * d + k] /= piv;
            inv[c * d + k] /= piv;
        }
        for r in 0..d {
            if r != c {
                let f = m[r * d + c];
                if f != 0.0 {
                    for k in 0..d {
                        m[r * d + k] -= f * m[c * d + k];
                        inv[r * d + k] -= f * inv[c * d + k];
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    #[test]
    fn flat_christoffel_vanish() {
        let o = oracle::scaled_flat_oracle(2, 4.0).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        assert!(m.christoffel(&[0.1, 0.2]).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn half_plane_christoffel() {
        // Γ^1_12 = Γ^1_21 = -1/y, Γ^2_11 = 1/y, Γ^2_22 = -1/y
        let o = oracle::half_plane_oracle(1.0, 2.0).unwrap();
        let m = MetricField::new(&o.spec.charts[0]);
        let y = 1.3;
        let g = m.christoffel(&[0.0, y]);
        let expect = [0.0, -1.0 / y, -1.0 / y, 0.0, 1.0 / y, 0.0, 0.0, -1.0 / y];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-7, "{g:?}");
        }
        for k in 0..2 {
            assert_eq!(g[k * 4 + 1], g[k * 4 + 2]);
        }
    }
}
