//! im2col / col2im lowering for 2-D convolutions.

use alloc::vec;
use alloc::vec::Vec;

/// Square-kernel convolution geometry with possibly asymmetric zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    /// `[top, left, bottom, right]`
    pub pad: [usize; 4],
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeom { kernel, stride, pad: [pad; 4] }
    }

    pub fn asymmetric(kernel: usize, stride: usize, pad: [usize; 4]) -> Self {
        ConvGeom { kernel, stride, pad }
    }

    /// Output spatial size of a convolution over an `h x w` input.
    pub fn conv_out(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + self.pad[0] + self.pad[2];
        let pw = w + self.pad[1] + self.pad[3];
        if ph < self.kernel || pw < self.kernel || self.stride == 0 {
            return None;
        }
        Some(((ph - self.kernel) / self.stride + 1, (pw - self.kernel) / self.stride + 1))
    }

    /// Output spatial size of a transposed convolution over an `h x w` input.
    pub fn deconv_out(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if h == 0 || w == 0 || self.stride == 0 {
            return None;
        }
        let oh = ((h - 1) * self.stride + self.kernel).checked_sub(self.pad[0] + self.pad[2])?;
        let ow = ((w - 1) * self.stride + self.kernel).checked_sub(self.pad[1] + self.pad[3])?;
        (oh > 0 && ow > 0).then_some((oh, ow))
    }
}

/// Spatial bookkeeping shared by im2col and col2im.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Lowering {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub geom: ConvGeom,
}

impl Lowering {
    pub fn rows(&self) -> usize {
        self.c * self.geom.kernel * self.geom.kernel
    }

    pub fn cols(&self) -> usize {
        self.n * self.oh * self.ow
    }

    /// Input offsets touched by kernel tap `(ky, kx)` along one axis.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, size: usize) -> Option<usize> {
        let pos = (o * self.geom.stride + k) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
    }

    /// Column matrix `[c*k*k, n*oh*ow]` of an `n x c x h x w` input.
    pub fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let k = self.geom.kernel;
        let (plane_out, ncols) = (self.oh * self.ow, self.cols());
        let mut cols = vec![0.0; self.rows() * ncols];
        for ci in 0..self.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                    for b in 0..self.n {
                        let src = &x[(b * self.c + ci) * self.h * self.w..][..self.h * self.w];
                        let dst = &mut dst_row[b * plane_out..(b + 1) * plane_out];
                        for oy in 0..self.oh {
                            let Some(iy) = self.source(oy, ky, self.geom.pad[0], self.h) else {
                                continue;
                            };
                            let srow = &src[iy * self.w..(iy + 1) * self.w];
                            let drow = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                            if self.geom.stride == 1 {
                                // contiguous run of valid columns
                                let lo = self.geom.pad[1].saturating_sub(kx);
                                let hi = (self.w + self.geom.pad[1]).saturating_sub(kx).min(self.ow);
                                if lo < hi {
                                    let s0 = lo + kx - self.geom.pad[1];
                                    drow[lo..hi].copy_from_slice(&srow[s0..s0 + (hi - lo)]);
                                }
                            } else {
                                for (ox, d) in drow.iter_mut().enumerate() {
                                    if let Some(ix) = self.source(ox, kx, self.geom.pad[1], self.w) {
                                        *d = srow[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Lowering::im2col`]: scatter-adds columns back onto the input grid.
    pub fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let k = self.geom.kernel;
        let (plane_out, ncols) = (self.oh * self.ow, self.cols());
        let mut x = vec![0.0; self.n * self.c * self.h * self.w];
        for ci in 0..self.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src_row = &cols[row * ncols..(row + 1) * ncols];
                    for b in 0..self.n {
                        let dst = &mut x[(b * self.c + ci) * self.h * self.w..][..self.h * self.w];
                        let src = &src_row[b * plane_out..(b + 1) * plane_out];
                        for oy in 0..self.oh {
                            let Some(iy) = self.source(oy, ky, self.geom.pad[0], self.h) else {
                                continue;
                            };
                            let drow = &mut dst[iy * self.w..(iy + 1) * self.w];
                            let srow = &src[oy * self.ow..(oy + 1) * self.ow];
                            if self.geom.stride == 1 {
                                let lo = self.geom.pad[1].saturating_sub(kx);
                                let hi = (self.w + self.geom.pad[1]).saturating_sub(kx).min(self.ow);
                                if lo < hi {
                                    let d0 = lo + kx - self.geom.pad[1];
                                    for (d, s) in drow[d0..d0 + (hi - lo)].iter_mut().zip(&srow[lo..hi]) {
                                        *d += s;
                                    }
                                }
                                continue;
                            }
                            for (ox, &v) in srow.iter().enumerate() {
                                if let Some(ix) = self.source(ox, kx, self.geom.pad[1], self.w) {
                                    drow[ix] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

/// `[n, c, p]` -> `[c, n*p]`
pub(crate) fn to_channel_major(x: &[f64], n: usize, c: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ci in 0..c {
            out[ci * n * p + b * p..][..p].copy_from_slice(&x[(b * c + ci) * p..][..p]);
        }
    }
    out
}

/// `[c, n*p]` -> `[n, c, p]`
pub(crate) fn from_channel_major(x: &[f64], n: usize, c: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ci in 0..c {
            out[(b * c + ci) * p..][..p].copy_from_slice(&x[ci * n * p + b * p..][..p]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_sizes_follow_layer_tables() {
        // stride-2 5x5 "same" convs: 32 -> 16 -> 8
        let s2 = ConvGeom::new(5, 2, 2);
        assert_eq!(s2.conv_out(32, 32), Some((16, 16)));
        assert_eq!(s2.conv_out(16, 16), Some((8, 8)));
        // 8x8 kernels: asymmetric same padding keeps 8, valid reduces to 1
        assert_eq!(ConvGeom::asymmetric(8, 1, [3, 3, 4, 4]).conv_out(8, 8), Some((8, 8)));
        assert_eq!(ConvGeom::new(8, 1, 0).conv_out(8, 8), Some((1, 1)));
        // generator: 1 -> 4 -> 8 -> 16 -> 32
        assert_eq!(ConvGeom::new(4, 2, 0).deconv_out(1, 1), Some((4, 4)));
        assert_eq!(ConvGeom::new(4, 2, 1).deconv_out(4, 4), Some((8, 8)));
        assert_eq!(ConvGeom::new(4, 2, 1).deconv_out(16, 16), Some((32, 32)));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        for geom in [ConvGeom::new(3, 1, 1), ConvGeom::new(5, 2, 2), ConvGeom::asymmetric(4, 1, [1, 1, 2, 2])] {
            let (n, c, h, w) = (2, 3, 7, 6);
            let (oh, ow) = geom.conv_out(h, w).unwrap();
            let low = Lowering { n, c, h, w, oh, ow, geom };
            let x: Vec<f64> = (0..n * c * h * w).map(|i| ((i * 37 % 17) as f64) - 8.0).collect();
            let cols = low.im2col(&x);
            let probe: Vec<f64> = (0..cols.len()).map(|i| ((i * 13 % 11) as f64) * 0.5 - 2.0).collect();
            let lhs: f64 = cols.iter().zip(&probe).map(|(a, b)| a * b).sum();
            let back = low.col2im(&probe);
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "{geom:?}");
        }
    }

    #[test]
    fn channel_major_round_trip() {
        let x: Vec<f64> = (0..24).map(f64::from).collect();
        let cm = to_channel_major(&x, 2, 3, 4);
        assert_eq!(from_channel_major(&cm, 2, 3, 4), x);
    }
}
