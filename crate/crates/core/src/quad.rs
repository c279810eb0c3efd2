//! Composite Simpson quadrature on the shared uniform grid.

use crate::{Error, Result};

/// Simpson weights for `n + 1` uniformly spaced samples over an interval of
/// length `len`. `n` must be even.
pub fn simpson_weights(n: usize, len: f64) -> Result<Vec<f64>> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::OddGrid(n));
    }
    let h = len / n as f64;
    let mut w = vec![0.0; n + 1];
    w[0] = h / 3.0;
    w[n] = h / 3.0;
    for (i, wi) in w.iter_mut().enumerate().take(n).skip(1) {
        *wi = if i % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
    }
    Ok(w)
}

/// Composite Simpson integral of the sampled function `f` over `[0, len]`.
pub fn simpson(f: &[f64], len: f64) -> Result<f64> {
    let n = f.len().checked_sub(1).ok_or(Error::OddGrid(0))?;
    if n == 0 || n % 2 != 0 {
        return Err(Error::OddGrid(n));
    }
    let h = len / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        if i % 2 == 1 {
            odd += f[i];
        } else {
            even += f[i];
        }
    }
    Ok(h / 3.0 * (f[0] + f[n] + 4.0 * odd + 2.0 * even))
}

/// Simpson integral of the pointwise product of two sample vectors.
pub fn simpson_product(f: &[f64], g: &[f64], len: f64) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::GridMismatch { expected: f.len(), got: g.len() });
    }
    let n = f.len() - 1;
    if n == 0 || n % 2 != 0 {
        return Err(Error::OddGrid(n));
    }
    let h = len / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let v = f[i] * g[i];
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    Ok(h / 3.0 * (f[0] * g[0] + f[n] * g[n] + 4.0 * odd + 2.0 * even))
}

/// Local cubic (4-point Lagrange) interpolation of uniformly spaced samples.
///
/// `samples` covers `[0, len]`; accuracy is O(h⁴), which keeps the RK4 and
/// Simpson error budgets intact when a sampled potential is evaluated at
/// half-steps.
pub fn cubic_interp(samples: &[f64], len: f64, x: f64) -> f64 {
    let n = samples.len() - 1;
    if n == 0 {
        return samples[0];
    }
    let h = len / n as f64;
    let t = (x / h).clamp(0.0, n as f64);
    let mut i0 = t.floor() as usize;
    // center the 4-point stencil, clamped to the boundary
    i0 = i0.saturating_sub(1).min(n.saturating_sub(3));
    let mut acc = 0.0;
    for j in 0..4 {
        let xj = (i0 + j) as f64;
        let mut lj = 1.0;
        for m in 0..4 {
            if m != j {
                let xm = (i0 + m) as f64;
                lj *= (t - xm) / (xj - xm);
            }
        }
        acc += lj * samples[i0 + j];
    }
    acc
}
