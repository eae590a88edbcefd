use alloc::vec;
use alloc::vec::Vec;

use super::distance::squared_euclidean;
use super::kernel::KernelSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_sets(xs: &Tensor, ys: &Tensor, min: usize) -> Result<()> {
    if xs.rank() != 2 || ys.rank() != 2 {
        return Err(Error::domain("sample sets must be rank-2 (n x d)"));
    }
    if xs.row_len() != ys.row_len() {
        return Err(Error::Dimension { expected: xs.row_len(), actual: ys.row_len() });
    }
    if xs.batch() < min || ys.batch() < min {
        return Err(Error::domain(alloc::format!(
            "MMD estimate needs at least {min} samples per set, got {} and {}",
            xs.batch(),
            ys.batch()
        )));
    }
    if !xs.is_finite() || !ys.is_finite() {
        return Err(Error::domain("sample sets must be finite"));
    }
    Ok(())
}

/// Sum of `k(a_i, a_j)` over ordered pairs `i != j`.
fn within_sum(a: &Tensor, spec: &KernelSpec) -> f64 {
    let n = a.batch();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += spec.eval_sq(squared_euclidean(a.row(i), a.row(j)));
        }
    }
    2.0 * s
}

fn cross_sum(a: &Tensor, b: &Tensor, spec: &KernelSpec) -> f64 {
    let mut s = 0.0;
    for i in 0..a.batch() {
        for j in 0..b.batch() {
            s += spec.eval_sq(squared_euclidean(a.row(i), b.row(j)));
        }
    }
    s
}

/// V-statistic estimate of `MMD^2`; always non-negative.
pub fn mmd_biased(xs: &Tensor, ys: &Tensor, spec: &KernelSpec) -> Result<f64> {
    check_sets(xs, ys, 1)?;
    let (n, m) = (xs.batch() as f64, ys.batch() as f64);
    // k(x, x) = 1 for both kernel families.
    let kxx = (within_sum(xs, spec) + n) / (n * n);
    let kyy = (within_sum(ys, spec) + m) / (m * m);
    let kxy = cross_sum(xs, ys, spec) / (n * m);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

/// U-statistic estimate of `MMD^2`; unbiased, may dip slightly below zero.
pub fn mmd_unbiased(xs: &Tensor, ys: &Tensor, spec: &KernelSpec) -> Result<f64> {
    check_sets(xs, ys, 2)?;
    let (n, m) = (xs.batch() as f64, ys.batch() as f64);
    let kxx = within_sum(xs, spec) / (n * (n - 1.0));
    let kyy = within_sum(ys, spec) / (m * (m - 1.0));
    let kxy = cross_sum(xs, ys, spec) / (n * m);
    Ok(kxx + kyy - 2.0 * kxy)
}

/// Gradient of [`mmd_unbiased`] with respect to every entry of both sets.
pub fn mmd_unbiased_grad(xs: &Tensor, ys: &Tensor, spec: &KernelSpec) -> Result<(Tensor, Tensor)> {
    check_sets(xs, ys, 2)?;
    let d = xs.row_len();
    let (n, m) = (xs.batch(), ys.batch());
    let mut gx = vec![0.0; n * d];
    let mut gy = vec![0.0; m * d];
    // d k(|a-b|^2) / d a = 2 k'(s) (a - b)
    let pair = |a: &[f64], b: &[f64], coef: f64, ga: &mut [f64], gb: Option<&mut [f64]>| {
        let s = squared_euclidean(a, b);
        let f = 2.0 * coef * spec.deriv_sq(s);
        match gb {
            Some(gb) => {
                for k in 0..a.len() {
                    let t = f * (a[k] - b[k]);
                    ga[k] += t;
                    gb[k] -= t;
                }
            }
            None => {
                for k in 0..a.len() {
                    ga[k] += f * (a[k] - b[k]);
                }
            }
        }
    };
    let cxx = 2.0 / (n as f64 * (n as f64 - 1.0));
    for i in 0..n {
        for j in i + 1..n {
            let (lo, hi) = gx.split_at_mut(j * d);
            pair(xs.row(i), xs.row(j), cxx, &mut lo[i * d..(i + 1) * d], Some(&mut hi[..d]));
        }
    }
    let cyy = 2.0 / (m as f64 * (m as f64 - 1.0));
    for i in 0..m {
        for j in i + 1..m {
            let (lo, hi) = gy.split_at_mut(j * d);
            pair(ys.row(i), ys.row(j), cyy, &mut lo[i * d..(i + 1) * d], Some(&mut hi[..d]));
        }
    }
    let cxy = -2.0 / (n as f64 * m as f64);
    let mut gy_tmp: Vec<f64> = vec![0.0; d];
    for i in 0..n {
        for j in 0..m {
            gy_tmp.iter_mut().for_each(|v| *v = 0.0);
            pair(xs.row(i), ys.row(j), cxy, &mut gx[i * d..(i + 1) * d], Some(&mut gy_tmp));
            for k in 0..d {
                gy[j * d + k] += gy_tmp[k];
            }
        }
    }
    Ok((Tensor::from_vec(xs.shape(), gx)?, Tensor::from_vec(ys.shape(), gy)?))
}
