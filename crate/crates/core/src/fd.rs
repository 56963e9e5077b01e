//! Central finite-difference derivative tensors.
//!
//! Tensors are stored `[out][i1]..[il]` in row-major order, where `i1` is the
//! first differentiation direction.

use crate::error::Result;

/// Order-`order` derivative of `f` at `z`. Order 2 uses the compact
/// symmetric stencil; higher orders nest central differences.
pub fn derivative<F>(f: &F, z: &[f64], order: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    match order {
        0 => f(z),
        1 => jacobian(f, z, h),
        2 => hessian(f, z, h),
        _ => {
            let n = z.len();
            let mut zp = z.to_vec();
            let mut parts = Vec::with_capacity(n);
            for i in 0..n {
                zp[i] = z[i] + h;
                let p = derivative(f, &zp, order - 1, h)?;
                zp[i] = z[i] - h;
                let m = derivative(f, &zp, order - 1, h)?;
                zp[i] = z[i];
                parts.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
            }
            Ok(interleave(&parts, n))
        }
    }
}

/// `parts[i][k*s + j]` -> `out[k*s*n + j*n + i]`.
pub(crate) fn interleave(parts: &[Vec<f64>], n: usize) -> Vec<f64> {
    let len = parts[0].len();
    let mut out = vec![0.0; len * n];
    for (i, p) in parts.iter().enumerate() {
        for (idx, v) in p.iter().enumerate() {
            out[idx * n + i] = *v;
        }
    }
    out
}

/// Jacobian stored `[out][in]`.
pub fn jacobian<F>(f: &F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let n = z.len();
    let mut zp = z.to_vec();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        zp[i] = z[i] + h;
        let p = f(&zp)?;
        zp[i] = z[i] - h;
        let m = f(&zp)?;
        zp[i] = z[i];
        cols.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    Ok(interleave(&cols, n))
}

/// Second derivative stored `[out][i][j]`.
pub fn hessian<F>(f: &F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let n = z.len();
    let f0 = f(z)?;
    let m = f0.len();
    let mut out = vec![0.0; m * n * n];
    let mut zp = z.to_vec();
    let h2 = h * h;
    for i in 0..n {
        zp[i] = z[i] + h;
        let p = f(&zp)?;
        zp[i] = z[i] - h;
        let q = f(&zp)?;
        zp[i] = z[i];
        for k in 0..m {
            out[k * n * n + i * n + i] = (p[k] - 2.0 * f0[k] + q[k]) / h2;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut eval = |si: f64, sj: f64| -> Result<Vec<f64>> {
                zp[i] = z[i] + si * h;
                zp[j] = z[j] + sj * h;
                let v = f(&zp);
                zp[i] = z[i];
                zp[j] = z[j];
                v
            };
            let pp = eval(1.0, 1.0)?;
            let pm = eval(1.0, -1.0)?;
            let mp = eval(-1.0, 1.0)?;
            let mm = eval(-1.0, -1.0)?;
            for k in 0..m {
                let v = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h2);
                out[k * n * n + i * n + j] = v;
                out[k * n * n + j * n + i] = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(z: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![z[0] * z[0] * z[1], z[1].sin()])
    }

    #[test]
    fn derivatives_of_polynomial() {
        let z = [0.7, 0.3];
        let j = derivative(&cubic, &z, 1, 1e-5).unwrap();
        assert!((j[0] - 2.0 * 0.7 * 0.3).abs() < 1e-8);
        assert!((j[1] - 0.49).abs() < 1e-8);
        assert!((j[3] - 0.3f64.cos()).abs() < 1e-8);
        let h = derivative(&cubic, &z, 2, 1e-3).unwrap();
        assert!((h[0] - 0.6).abs() < 1e-6);
        assert!((h[1] - 1.4).abs() < 1e-6);
        assert!((h[2] - 1.4).abs() < 1e-6);
        let t = derivative(&cubic, &z, 3, 1e-2).unwrap();
        // d^3/dx1 dx1 dx2 of x1^2 x2 is 2
        assert!((t[1] - 2.0).abs() < 1e-4);
        assert!((t[2] - 2.0).abs() < 1e-4);
        assert!((t[4] - 2.0).abs() < 1e-4);
    }
}
