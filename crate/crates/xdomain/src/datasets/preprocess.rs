use xdomain_core::Tensor;

use super::RawImage;

/// Side length of every preprocessed image.
pub const IMAGE_SIZE: usize = 32;

/// Bilinear resampling of one `h x w` plane to `oh x ow` with half-pixel
/// centers and clamped borders. Equal sizes reproduce the input exactly.
pub fn bilinear_resize(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let axis = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let pos = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, pos - i0 as f64)
    };
    let cols: Vec<_> = (0..ow).map(|x| axis(x, w, ow)).collect();
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let (y0, y1, fy) = axis(y, h, oh);
        for &(x0, x1, fx) in &cols {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// RGB `3 x 32 x 32` in `[-1, 1]`: grayscale is replicated, every channel is
/// resized bilinearly, and `[0, 1]` maps affinely onto `[-1, 1]`.
pub fn preprocess(img: RawImage<'_>) -> Tensor {
    let (h, w) = (img.height, img.width);
    let plane = h * w;
    let mut data = Vec::with_capacity(3 * IMAGE_SIZE * IMAGE_SIZE);
    let mut planes = Vec::with_capacity(img.channels);
    for c in 0..img.channels {
        let src: Vec<f64> = (0..plane).map(|i| img.get(c * plane + i)).collect();
        let resized =
            if (h, w) == (IMAGE_SIZE, IMAGE_SIZE) { src } else { bilinear_resize(&src, h, w, IMAGE_SIZE, IMAGE_SIZE) };
        planes.push(resized);
    }
    for c in 0..3 {
        let p = &planes[if img.channels == 1 { 0 } else { c.min(img.channels - 1) }];
        data.extend(p.iter().map(|v| (2.0 * v - 1.0).clamp(-1.0, 1.0)));
    }
    Tensor::from_vec(&[3, IMAGE_SIZE, IMAGE_SIZE], data).expect("fixed preprocessing shape")
}

/// [`preprocess`] plus the two normalized coordinate channels read by the
/// encoders: `5 x 32 x 32`.
pub fn preprocess_encoder_input(img: RawImage<'_>) -> Tensor {
    let rgb = preprocess(img).reshape(&[1, 3, IMAGE_SIZE, IMAGE_SIZE]).expect("fixed preprocessing shape");
    rgb.with_coordinate_channels()
        .and_then(|t| t.reshape(&[5, IMAGE_SIZE, IMAGE_SIZE]))
        .expect("fixed preprocessing shape")
}
