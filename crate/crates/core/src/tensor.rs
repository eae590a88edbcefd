//! Dense row-major `f64` tensors.
//!
//! Image batches are laid out `N x C x H x W`, latent batches `N x D`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Dimension { expected: len, actual: data.len() });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Builds a rank-2 tensor from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension { expected: cols, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor { shape: vec![rows.len(), cols], data })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Leading (batch) dimension; 1 for scalars.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of elements per leading index.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let r = self.row_len();
        &self.data[i * r..(i + 1) * r]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Splits a rank-4 shape into `(n, c, h, w)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::Shape { context: "rank-4 tensor", expected: vec![0, 0, 0, 0], actual: self.shape.clone() }),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::Shape { context: "reshape", expected: shape.to_vec(), actual: self.shape });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| if v.abs() > m { v.abs() } else { m })
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Stacks tensors along the leading dimension.
    pub fn concat_batch(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::domain("concat of zero tensors"))?;
        let tail = &first.shape[1..];
        let mut n = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::Shape {
                    context: "concat_batch",
                    expected: first.shape.clone(),
                    actual: p.shape.clone(),
                });
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = n;
        Ok(Tensor { shape, data })
    }

    /// Rows `start..end` of the leading dimension.
    pub fn slice_batch(&self, start: usize, end: usize) -> Tensor {
        let r = self.row_len();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor { shape, data: self.data[start * r..end * r].to_vec() }
    }

    /// Gathers the given leading-dimension rows.
    pub fn gather_batch(&self, idx: &[usize]) -> Tensor {
        let r = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * r);
        for &i in idx {
            data.extend_from_slice(&self.data[i * r..(i + 1) * r]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor { shape, data }
    }

    /// Appends two channels holding the normalized x and y pixel coordinates,
    /// both spanning `[-1, 1]` from the first to the last pixel.
    pub fn with_coordinate_channels(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (c + 2) * plane);
        let coord = |i: usize, size: usize| {
            if size <= 1 {
                0.0
            } else {
                -1.0 + 2.0 * i as f64 / (size - 1) as f64
            }
        };
        for b in 0..n {
            data.extend_from_slice(&self.data[b * c * plane..(b + 1) * c * plane]);
            for _y in 0..h {
                for x in 0..w {
                    data.push(coord(x, w));
                }
            }
            for y in 0..h {
                for _x in 0..w {
                    data.push(coord(y, h));
                }
            }
        }
        Ok(Tensor { shape: vec![n, c + 2, h, w], data })
    }

    /// Keeps only the first `keep` channels of a rank-4 tensor.
    pub fn leading_channels(&self, keep: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        if keep > c {
            return Err(Error::Dimension { expected: keep, actual: c });
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * keep * plane);
        for b in 0..n {
            data.extend_from_slice(&self.data[b * c * plane..(b * c + keep) * plane]);
        }
        Ok(Tensor { shape: vec![n, keep, h, w], data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_channels_span_endpoints() {
        let x = Tensor::zeros(&[1, 3, 32, 32]);
        let y = x.with_coordinate_channels().unwrap();
        assert_eq!(y.shape(), &[1, 5, 32, 32]);
        let plane = 32 * 32;
        let xs = &y.data()[3 * plane..4 * plane];
        let ys = &y.data()[4 * plane..5 * plane];
        assert_eq!((xs[0], ys[0]), (-1.0, -1.0));
        assert_eq!((xs[plane - 1], ys[plane - 1]), (1.0, 1.0));
        assert_eq!(y.leading_channels(3).unwrap(), x);
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[1, 2], vec![5.0, 6.0]).unwrap();
        let c = Tensor::concat_batch(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.slice_batch(0, 2), a);
        assert_eq!(c.slice_batch(2, 3), b);
        assert_eq!(c.gather_batch(&[2, 0]).data(), &[5.0, 6.0, 1.0, 2.0]);
    }

    #[test]
    fn reshape_rejects_wrong_size() {
        assert!(Tensor::zeros(&[2, 3]).reshape(&[4]).is_err());
    }
}
