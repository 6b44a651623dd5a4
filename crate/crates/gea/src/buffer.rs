//! Row-major floating-point rasters.

use crate::error::{Error, Result};
use crate::register::CropRect;

/// An H×W×C raster of `f64` samples, interleaved row-major, with a nominal
/// range of [0, 1].
///
/// `channels` is 1 (grayscale planes, masks, wavelet bands) or 3 (RGB).
/// Samples are finite by construction. Operations that can push values
/// outside [0, 1] (photometric matrices, filters) leave them unclamped so
/// downstream analysis sees the raw values; [`ImageBuffer::clamp01`] and the
/// 8-bit encoder clamp explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    /// Validates dimensions, channel count (1 or 3), length, and finiteness.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "sample vector has {} entries, expected {expected} for {height}x{width}x{channels}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("image samples must be finite"));
        }
        Ok(ImageBuffer { height, width, channels, data })
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        ImageBuffer::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        ImageBuffer::filled(height, width, channels, 0.0)
    }

    /// Internal constructor for samples already known to be finite.
    pub(crate) fn from_computed(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        ImageBuffer { height, width, channels, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[cfg(test)]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn sample(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[cfg(test)]
    pub(crate) fn set_sample(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Every sample clamped into [0, 1]; idempotent.
    pub fn clamp01(&self) -> ImageBuffer {
        let data = self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        ImageBuffer::from_computed(self.height, self.width, self.channels, data)
    }

    /// Number of samples lying outside [0, 1].
    pub fn count_out_of_range(&self) -> usize {
        self.data.iter().filter(|v| **v < 0.0 || **v > 1.0).count()
    }

    /// Mean over every sample.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute per-sample difference; images must share dimensions.
    pub fn max_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        if !self.same_dims(other) {
            return Err(Error::invalid("max_abs_diff requires matching dimensions"));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Extracts a rectangular window; the rectangle must lie inside the image.
    pub fn crop(&self, rect: &CropRect) -> Result<ImageBuffer> {
        if rect.rows == 0 || rect.cols == 0 {
            return Err(Error::EmptyRegion("crop rectangle has zero area".into()));
        }
        if rect.row0 + rect.rows > self.height || rect.col0 + rect.cols > self.width {
            return Err(Error::invalid(format!(
                "crop rectangle {:?} exceeds image bounds {}x{}",
                rect, self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(rect.rows * rect.cols * self.channels);
        for r in rect.row0..rect.row0 + rect.rows {
            let start = (r * self.width + rect.col0) * self.channels;
            data.extend_from_slice(&self.data[start..start + rect.cols * self.channels]);
        }
        Ok(ImageBuffer::from_computed(rect.rows, rect.cols, self.channels, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_shapes() {
        assert!(ImageBuffer::new(0, 4, 1, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn clamp01_is_idempotent_and_bounded() {
        let img = ImageBuffer::new(1, 4, 1, vec![-0.5, 0.25, 1.0, 1.75]).unwrap();
        let c = img.clamp01();
        assert_eq!(c.data(), &[0.0, 0.25, 1.0, 1.0]);
        assert_eq!(c.clamp01().data(), c.data());
        assert_eq!(img.count_out_of_range(), 2);
    }

    #[test]
    fn crop_extracts_window() {
        let data: Vec<f64> = (0..16).map(|v| v as f64 / 16.0).collect();
        let img = ImageBuffer::new(4, 4, 1, data).unwrap();
        let rect = CropRect { row0: 1, col0: 2, rows: 2, cols: 2 };
        let out = img.crop(&rect).unwrap();
        assert_eq!(out.data(), &[6.0 / 16.0, 7.0 / 16.0, 10.0 / 16.0, 11.0 / 16.0]);
        let oob = CropRect { row0: 3, col0: 3, rows: 2, cols: 2 };
        assert!(img.crop(&oob).is_err());
    }
}
