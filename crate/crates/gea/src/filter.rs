//! Small spatial filters shared by the analysis and registration paths.

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// Mirror an index into [0, n) without repeating the edge sample
/// (…, 2, 1 | 0, 1, …, n-1 | n-2, n-3, …).
#[inline]
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Discrete 4-neighbor Laplacian with mirrored borders.
///
/// Kernel: center -4, the four edge-adjacent neighbors +1. The operator
/// annihilates locally affine intensity fields in the interior; the border
/// rows are governed by the reflection and are generally nonzero on ramps.
pub fn laplacian(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.channels() != 1 {
        return Err(Error::invalid("laplacian expects a single-channel image"));
    }
    let (h, w) = (img.height(), img.width());
    let src = img.data();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let up = reflect101(r as isize - 1, h) * w;
        let down = reflect101(r as isize + 1, h) * w;
        let row = r * w;
        for c in 0..w {
            let left = reflect101(c as isize - 1, w);
            let right = reflect101(c as isize + 1, w);
            out[row + c] = src[up + c] + src[down + c] + src[row + left] + src[row + right]
                - 4.0 * src[row + c];
        }
    }
    Ok(ImageBuffer::from_computed(h, w, 1, out))
}

/// Normalized Gaussian taps with radius ceil(3 sigma).
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with mirrored borders; `sigma <= 0` is a no-op.
pub fn gaussian_smooth(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    let taps = gaussian_kernel(sigma);
    if taps.len() == 1 {
        return img.clone();
    }
    let radius = (taps.len() / 2) as isize;
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let src = img.data();

    // Horizontal pass, then vertical.
    let mut tmp = vec![0.0; src.len()];
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let mut acc = 0.0;
                for (t, tap) in taps.iter().enumerate() {
                    let cc = reflect101(c as isize + t as isize - radius, w);
                    acc += tap * src[(r * w + cc) * ch + k];
                }
                tmp[(r * w + c) * ch + k] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let mut acc = 0.0;
                for (t, tap) in taps.iter().enumerate() {
                    let rr = reflect101(r as isize + t as isize - radius, h);
                    acc += tap * tmp[(rr * w + c) * ch + k];
                }
                out[(r * w + c) * ch + k] = acc;
            }
        }
    }
    ImageBuffer::from_computed(h, w, ch, out)
}

/// Central-difference gradients (d/dx along columns, d/dy along rows) with
/// mirrored borders, for a single-channel image.
pub fn central_gradients(img: &ImageBuffer) -> Result<(ImageBuffer, ImageBuffer)> {
    if img.channels() != 1 {
        return Err(Error::invalid("central_gradients expects a single-channel image"));
    }
    let (h, w) = (img.height(), img.width());
    let src = img.data();
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h {
        let up = reflect101(r as isize - 1, h) * w;
        let down = reflect101(r as isize + 1, h) * w;
        let row = r * w;
        for c in 0..w {
            let left = reflect101(c as isize - 1, w);
            let right = reflect101(c as isize + 1, w);
            gx[row + c] = 0.5 * (src[row + right] - src[row + left]);
            gy[row + c] = 0.5 * (src[down + c] - src[up + c]);
        }
    }
    Ok((
        ImageBuffer::from_computed(h, w, 1, gx),
        ImageBuffer::from_computed(h, w, 1, gy),
    ))
}
