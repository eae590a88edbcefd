use alloc::vec;
use alloc::vec::Vec;

use super::distance::squared_euclidean;
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    /// Inverse multiquadric, `C / (C + ||x - y||^2)`.
    Imq,
    /// Gaussian, `exp(-||x - y||^2 / C)`.
    Rbf,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain("kernel scale must be positive and finite"));
        }
        Ok(KernelSpec { family, scale })
    }

    pub fn imq(scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Imq, scale)
    }

    /// IMQ scale matched to the expected squared distance of a
    /// `N(0, sigma^2 I)` prior in `d_z` dimensions: `C = 2 d_z sigma^2`.
    pub fn imq_for_prior(d_z: usize, sigma: f64) -> Result<Self> {
        Self::imq(2.0 * d_z as f64 * sigma * sigma)
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn eval_sq(&self, sq: f64) -> f64 {
        match self.family {
            KernelFamily::Imq => self.scale / (self.scale + sq),
            KernelFamily::Rbf => math::exp(-sq / self.scale),
        }
    }

    /// Derivative of the kernel with respect to the squared distance.
    #[inline]
    pub fn deriv_sq(&self, sq: f64) -> f64 {
        match self.family {
            KernelFamily::Imq => {
                let d = self.scale + sq;
                -self.scale / (d * d)
            }
            KernelFamily::Rbf => -math::exp(-sq / self.scale) / self.scale,
        }
    }
}

pub fn kernel(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), actual: y.len() });
    }
    Ok(spec.eval_sq(squared_euclidean(x, y)))
}

/// The inverse multiquadric kernel `C / (C + ||x - y||^2)`; lies in `(0, 1]`.
pub fn imq_kernel(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    let imq = KernelSpec { family: KernelFamily::Imq, scale: spec.scale };
    if !(imq.scale > 0.0) {
        return Err(Error::domain("kernel scale must be positive"));
    }
    kernel(x, y, &imq)
}

/// Dense `n x m` kernel matrix between the rows of two sample sets.
pub fn gram_matrix(xs: &Tensor, ys: &Tensor, spec: &KernelSpec) -> Result<Vec<Vec<f64>>> {
    if xs.row_len() != ys.row_len() {
        return Err(Error::Dimension { expected: xs.row_len(), actual: ys.row_len() });
    }
    let mut out = vec![vec![0.0; ys.batch()]; xs.batch()];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = spec.eval_sq(squared_euclidean(xs.row(i), ys.row(j)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imq_examples() {
        let two = KernelSpec::imq(2.0).unwrap();
        assert_eq!(imq_kernel(&[0.4, -2.0], &[0.4, -2.0], &two).unwrap(), 1.0);
        let one = KernelSpec::imq(1.0).unwrap();
        assert_eq!(imq_kernel(&[0.0], &[1.0], &one).unwrap(), 0.5);
        assert!(KernelSpec::imq(0.0).is_err());
        assert!(imq_kernel(&[0.0], &[1.0, 2.0], &one).is_err());
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for spec in [KernelSpec::imq(1.7).unwrap(), KernelSpec::new(KernelFamily::Rbf, 0.9).unwrap()] {
            let s = 0.8;
            let h = 1e-6;
            let fd = (spec.eval_sq(s + h) - spec.eval_sq(s - h)) / (2.0 * h);
            assert!((fd - spec.deriv_sq(s)).abs() < 1e-8);
        }
    }
}
