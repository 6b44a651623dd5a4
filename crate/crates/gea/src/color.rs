//! BT.601 full-range color conversions.
//!
//! All planes stay in `f64`. The forward transform is
//!
//! ```text
//! Y = 0.299 R + 0.587 G + 0.114 B
//! U = 0.5 (B - Y) / (1 - 0.114)
//! V = 0.5 (R - Y) / (1 - 0.299)
//! ```
//!
//! and the inverse is its exact algebraic inversion, so a round trip through
//! [`rgb_to_yuv`] and [`yuv_to_rgb`] reproduces the input to within 1e-12.
//! Luminance analysis downstream depends on that headroom; converting through
//! 8-bit intermediates would destroy it.

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

pub const KR: f64 = 0.299;
pub const KG: f64 = 0.587;
pub const KB: f64 = 0.114;
const U_SCALE: f64 = 0.5 / (1.0 - KB);
const V_SCALE: f64 = 0.5 / (1.0 - KR);

/// Planar YUV image; three single-channel planes of identical size.
#[derive(Debug, Clone)]
pub struct YuvImage {
    pub y: ImageBuffer,
    pub u: ImageBuffer,
    pub v: ImageBuffer,
}

impl YuvImage {
    pub fn new(y: ImageBuffer, u: ImageBuffer, v: ImageBuffer) -> Result<Self> {
        if y.channels() != 1 || u.channels() != 1 || v.channels() != 1 {
            return Err(Error::invalid("YUV planes must be single-channel"));
        }
        if !y.same_dims(&u) || !y.same_dims(&v) {
            return Err(Error::invalid("YUV planes must share dimensions"));
        }
        Ok(YuvImage { y, u, v })
    }

    pub fn height(&self) -> usize {
        self.y.height()
    }

    pub fn width(&self) -> usize {
        self.y.width()
    }
}

/// Splits an RGB image into full-range BT.601 Y, U, V planes.
///
/// Y of an in-range input lies in [0, 1]; U and V are signed and lie in
/// [-0.5, 0.5].
pub fn rgb_to_yuv(img: &ImageBuffer) -> Result<YuvImage> {
    if img.channels() != 3 {
        return Err(Error::invalid("rgb_to_yuv expects a 3-channel image"));
    }
    let n = img.height() * img.width();
    let mut y = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for px in img.data().chunks_exact(3) {
        let (r, g, b) = (px[0], px[1], px[2]);
        let luma = KR * r + KG * g + KB * b;
        y.push(luma);
        u.push((b - luma) * U_SCALE);
        v.push((r - luma) * V_SCALE);
    }
    Ok(YuvImage {
        y: ImageBuffer::from_computed(img.height(), img.width(), 1, y),
        u: ImageBuffer::from_computed(img.height(), img.width(), 1, u),
        v: ImageBuffer::from_computed(img.height(), img.width(), 1, v),
    })
}

/// Exact inverse of [`rgb_to_yuv`]. Output is unclamped: out-of-range YUV
/// triples map to out-of-range RGB.
pub fn yuv_to_rgb(img: &YuvImage) -> Result<ImageBuffer> {
    if !img.y.same_dims(&img.u) || !img.y.same_dims(&img.v) {
        return Err(Error::invalid("YUV planes must share dimensions"));
    }
    let n = img.y.height() * img.y.width();
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let y = img.y.data()[i];
        let u = img.u.data()[i];
        let v = img.v.data()[i];
        let r = y + v / V_SCALE;
        let b = y + u / U_SCALE;
        let g = (y - KR * r - KB * b) / KG;
        data.push(r);
        data.push(g);
        data.push(b);
    }
    Ok(ImageBuffer::from_computed(img.y.height(), img.y.width(), 3, data))
}

/// BT.601 luma of an RGB image; single-channel inputs pass through unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| KR * px[0] + KG * px[1] + KB * px[2])
        .collect();
    ImageBuffer::from_computed(img.height(), img.width(), 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pure_red_maps_to_documented_yuv() {
        let img = ImageBuffer::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let yuv = rgb_to_yuv(&img).unwrap();
        assert!((yuv.y.data()[0] - 0.299).abs() < 1e-15);
        // U = (0 - 0.299) * 0.5 / 0.886, V = (1 - 0.299) * 0.5 / 0.701 = 0.5
        assert!((yuv.u.data()[0] - (-0.299 * 0.5 / 0.886)).abs() < 1e-12);
        assert!((yuv.v.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grayscale_passthrough_and_luma() {
        let gray = ImageBuffer::new(1, 2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(to_grayscale(&gray).data(), gray.data());
        let rgb = ImageBuffer::new(1, 1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        assert!((to_grayscale(&rgb).data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neutral_gray_has_zero_chroma() {
        let img = ImageBuffer::new(1, 1, 3, vec![0.5, 0.5, 0.5]).unwrap();
        let yuv = rgb_to_yuv(&img).unwrap();
        assert!(yuv.u.data()[0].abs() < 1e-15);
        assert!(yuv.v.data()[0].abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn yuv_round_trip_is_identity(px in proptest::collection::vec(0.0f64..=1.0, 3 * 12)) {
            let img = ImageBuffer::new(3, 4, 3, px).unwrap();
            let back = yuv_to_rgb(&rgb_to_yuv(&img).unwrap()).unwrap();
            prop_assert!(img.max_abs_diff(&back).unwrap() < 1e-12);
        }
    }
}
