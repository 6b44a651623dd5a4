//! Residual energy decomposition into luminance, chrominance, and texture.
//!
//! Given an image and its reference, the residual energy splits into three
//! per-pixel mean-squared terms: the Y-plane difference, the summed U and V
//! plane differences, and the difference of Laplacian responses on the two
//! grayscale versions. The fractions of that total quantify *where* a
//! degradation lives; for dark captures the luminance term dominates by a
//! wide margin, which is what makes a global photometric anchor worthwhile.

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::color::{rgb_to_yuv, to_grayscale};
use crate::error::{Error, Result};
use crate::filter::laplacian;
use crate::report::{de_inf_aware, ser_inf_aware};

/// Default histogram resolution: 201 bins keep a bin centered on zero.
pub const DEFAULT_HISTOGRAM_BINS: usize = 201;
/// Default histogram support for residuals of [0, 1]-ranged planes.
pub const DEFAULT_HISTOGRAM_RANGE: (f64, f64) = (-1.0, 1.0);

/// Outcome of [`decompose_energy`]: absolute terms, fractions, pixel count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_lum: f64,
    pub e_chr: f64,
    pub e_tex: f64,
    pub f_lum: f64,
    pub f_chr: f64,
    pub f_tex: f64,
    pub n_pixels: usize,
}

impl EnergyReport {
    fn new(e_lum: f64, e_chr: f64, e_tex: f64, n_pixels: usize) -> EnergyReport {
        let total = e_lum + e_chr + e_tex;
        let (f_lum, f_chr, f_tex) = if total > 0.0 {
            (e_lum / total, e_chr / total, e_tex / total)
        } else {
            (0.0, 0.0, 0.0)
        };
        EnergyReport { e_lum, e_chr, e_tex, f_lum, f_chr, f_tex, n_pixels }
    }

    pub fn total(&self) -> f64 {
        self.e_lum + self.e_chr + self.e_tex
    }
}

fn mean_sq_diff(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    sum / a.data().len() as f64
}

/// Splits the residual of `img` against `gt` into luminance, chrominance,
/// and texture energies. Both images are taken as-is (no clamping), so the
/// caller can analyze unclamped anchored outputs.
pub fn decompose_energy(img: &ImageBuffer, gt: &ImageBuffer) -> Result<EnergyReport> {
    if img.channels() != 3 || gt.channels() != 3 {
        return Err(Error::invalid("decompose_energy expects 3-channel images"));
    }
    if !img.same_dims(gt) {
        return Err(Error::invalid("decompose_energy images must share dimensions"));
    }
    let yuv_img = rgb_to_yuv(img)?;
    let yuv_gt = rgb_to_yuv(gt)?;
    let e_lum = mean_sq_diff(&yuv_img.y, &yuv_gt.y);
    let e_chr = mean_sq_diff(&yuv_img.u, &yuv_gt.u) + mean_sq_diff(&yuv_img.v, &yuv_gt.v);
    let tex_img = laplacian(&to_grayscale(img))?;
    let tex_gt = laplacian(&to_grayscale(gt))?;
    let e_tex = mean_sq_diff(&tex_img, &tex_gt);
    Ok(EnergyReport::new(e_lum, e_chr, e_tex, img.height() * img.width()))
}

/// Ratio of pre- to post-anchoring luminance energy against the same target.
///
/// Returns `+inf` when anchoring removed a nonzero error completely and `1`
/// when there was no luminance error to begin with.
pub fn luminance_error_ratio(
    low: &ImageBuffer,
    aligned: &ImageBuffer,
    gt: &ImageBuffer,
) -> Result<f64> {
    let pre = decompose_energy(low, gt)?.e_lum;
    let post = decompose_energy(aligned, gt)?.e_lum;
    if post == 0.0 {
        return Ok(if pre == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok(pre / post)
}

/// Plane a histogram draws its residuals from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSelector {
    Y,
    U,
    V,
    R,
    G,
    B,
    Gray,
}

impl ChannelSelector {
    pub fn name(self) -> &'static str {
        match self {
            ChannelSelector::Y => "y",
            ChannelSelector::U => "u",
            ChannelSelector::V => "v",
            ChannelSelector::R => "r",
            ChannelSelector::G => "g",
            ChannelSelector::B => "b",
            ChannelSelector::Gray => "gray",
        }
    }

    fn extract(self, img: &ImageBuffer) -> Result<ImageBuffer> {
        let need_rgb = |img: &ImageBuffer| -> Result<()> {
            if img.channels() != 3 {
                Err(Error::invalid(format!(
                    "channel {} requires a 3-channel image",
                    self.name()
                )))
            } else {
                Ok(())
            }
        };
        match self {
            ChannelSelector::Gray => Ok(to_grayscale(img)),
            ChannelSelector::Y => {
                need_rgb(img)?;
                Ok(rgb_to_yuv(img)?.y)
            }
            ChannelSelector::U => {
                need_rgb(img)?;
                Ok(rgb_to_yuv(img)?.u)
            }
            ChannelSelector::V => {
                need_rgb(img)?;
                Ok(rgb_to_yuv(img)?.v)
            }
            ChannelSelector::R | ChannelSelector::G | ChannelSelector::B => {
                need_rgb(img)?;
                let ch = match self {
                    ChannelSelector::R => 0,
                    ChannelSelector::G => 1,
                    _ => 2,
                };
                let data = img.data().chunks_exact(3).map(|px| px[ch]).collect();
                Ok(ImageBuffer::from_computed(img.height(), img.width(), 1, data))
            }
        }
    }
}

/// Histogram of per-pixel residuals on one channel.
///
/// Counts cover every pixel: residuals outside the range land in the end
/// bins. The mean and standard deviation are taken over the raw residuals,
/// unaffected by that clipping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualHistogram {
    pub channel: ChannelSelector,
    /// `bins + 1` strictly increasing edges.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    #[serde(serialize_with = "ser_inf_aware", deserialize_with = "de_inf_aware")]
    pub std: f64,
}

impl ResidualHistogram {
    /// RFC-4180 CSV with one row per bin: `edge_lo,edge_hi,count`.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["edge_lo", "edge_hi", "count"])?;
        for i in 0..self.counts.len() {
            w.write_record([
                crate::report::fmt_f64(self.bin_edges[i]),
                crate::report::fmt_f64(self.bin_edges[i + 1]),
                self.counts[i].to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Streaming accumulator so per-image histograms can be merged
/// deterministically before finalization.
#[derive(Debug, Clone)]
pub(crate) struct HistogramAccumulator {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub sum: f64,
    pub sum_sq: f64,
    pub n: u64,
}

impl HistogramAccumulator {
    pub fn new(bins: usize, lo: f64, hi: f64) -> HistogramAccumulator {
        HistogramAccumulator { lo, hi, counts: vec![0; bins], sum: 0.0, sum_sq: 0.0, n: 0 }
    }

    pub fn push(&mut self, x: f64) {
        let bins = self.counts.len();
        let t = (x - self.lo) / (self.hi - self.lo) * bins as f64;
        let idx = (t.floor() as isize).clamp(0, bins as isize - 1) as usize;
        self.counts[idx] += 1;
        self.sum += x;
        self.sum_sq += x * x;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &HistogramAccumulator) {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        debug_assert_eq!((self.lo, self.hi), (other.lo, other.hi));
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.n += other.n;
    }

    pub fn finalize(&self, channel: ChannelSelector) -> ResidualHistogram {
        let bins = self.counts.len();
        let bin_edges = (0..=bins)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / bins as f64)
            .collect();
        let mean = if self.n > 0 { self.sum / self.n as f64 } else { 0.0 };
        let var = if self.n > 0 { (self.sum_sq / self.n as f64 - mean * mean).max(0.0) } else { 0.0 };
        ResidualHistogram { channel, bin_edges, counts: self.counts.clone(), mean, std: var.sqrt() }
    }
}

pub(crate) fn accumulate_residuals(
    img: &ImageBuffer,
    gt: &ImageBuffer,
    channel: ChannelSelector,
    acc: &mut HistogramAccumulator,
) -> Result<()> {
    if !img.same_dims(gt) {
        return Err(Error::invalid("residual histogram images must share dimensions"));
    }
    let a = channel.extract(img)?;
    let b = channel.extract(gt)?;
    for (x, y) in a.data().iter().zip(b.data()) {
        acc.push(x - y);
    }
    Ok(())
}

/// Histogram of `channel(img) - channel(gt)` over `bins` uniform bins
/// spanning `[range.0, range.1]`.
pub fn residual_histogram(
    img: &ImageBuffer,
    gt: &ImageBuffer,
    channel: ChannelSelector,
    bins: usize,
    range: (f64, f64),
) -> Result<ResidualHistogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.0 < range.1) {
        return Err(Error::invalid("histogram range must be finite with lo < hi"));
    }
    let mut acc = HistogramAccumulator::new(bins, range.0, range.1);
    accumulate_residuals(img, gt, channel, &mut acc)?;
    Ok(acc.finalize(channel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checker(h: usize, w: usize, a: f64, b: f64) -> ImageBuffer {
        let data = (0..h * w * 3)
            .map(|i| {
                let px = i / 3;
                if (px / w + px % w) % 2 == 0 {
                    a
                } else {
                    b
                }
            })
            .collect();
        ImageBuffer::new(h, w, 3, data).unwrap()
    }

    #[test]
    fn identical_images_have_zero_energy_and_fractions() {
        let img = checker(8, 8, 0.2, 0.7);
        let rep = decompose_energy(&img, &img).unwrap();
        assert_eq!(rep.total(), 0.0);
        assert_eq!((rep.f_lum, rep.f_chr, rep.f_tex), (0.0, 0.0, 0.0));
        assert_eq!(rep.n_pixels, 64);
    }

    #[test]
    fn gray_uniform_offset_is_pure_luminance() {
        // Equal RGB offset carries no chroma, and a constant shift has zero
        // Laplacian, so everything lands in e_lum.
        let a = ImageBuffer::filled(6, 6, 3, 0.3).unwrap();
        let b = ImageBuffer::filled(6, 6, 3, 0.5).unwrap();
        let rep = decompose_energy(&a, &b).unwrap();
        assert!((rep.e_lum - 0.04).abs() < 1e-12);
        assert!(rep.e_chr < 1e-24);
        assert!(rep.e_tex < 1e-24);
        assert_eq!(rep.f_lum, 1.0);
    }

    #[test]
    fn ratio_handles_zero_denominator() {
        let a = ImageBuffer::filled(4, 4, 3, 0.2).unwrap();
        let b = ImageBuffer::filled(4, 4, 3, 0.6).unwrap();
        assert_eq!(luminance_error_ratio(&a, &b, &b).unwrap(), f64::INFINITY);
        assert_eq!(luminance_error_ratio(&b, &b, &b).unwrap(), 1.0);
        let ratio = luminance_error_ratio(&a, &a, &b).unwrap();
        assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_uniform_offset_hand_values() {
        let a = ImageBuffer::filled(5, 5, 3, 0.45).unwrap();
        let b = ImageBuffer::filled(5, 5, 3, 0.35).unwrap();
        let h = residual_histogram(&a, &b, ChannelSelector::Y, 201, (-1.0, 1.0)).unwrap();
        assert!((h.mean - 0.1).abs() < 1e-12);
        assert!(h.std < 1e-12);
        assert_eq!(h.counts.iter().sum::<u64>(), 25);
        // All mass in the single bin containing +0.1.
        let idx = h.counts.iter().position(|&c| c > 0).unwrap();
        assert!(h.bin_edges[idx] <= 0.1 && 0.1 < h.bin_edges[idx + 1]);
        assert_eq!(h.counts[idx], 25);
    }

    #[test]
    fn histogram_center_bin_holds_zero_residuals() {
        let img = checker(4, 4, 0.1, 0.9);
        let h = residual_histogram(&img, &img, ChannelSelector::Gray, 201, (-1.0, 1.0)).unwrap();
        assert_eq!(h.counts[100], 16);
        assert!(h.bin_edges[100] < 0.0 && 0.0 < h.bin_edges[101]);
    }

    #[test]
    fn histogram_clips_outliers_into_end_bins() {
        let a = ImageBuffer::new(1, 2, 1, vec![5.0, 0.0]).unwrap();
        let b = ImageBuffer::new(1, 2, 1, vec![0.0, 3.0]).unwrap();
        let h = residual_histogram(&a, &b, ChannelSelector::Gray, 10, (-1.0, 1.0)).unwrap();
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.counts[0], 1);
        // Stats reflect the raw residuals +5 and -3, not the clipped bins.
        assert!((h.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_rejects_bad_ranges_and_channels() {
        let img = ImageBuffer::filled(3, 3, 1, 0.2).unwrap();
        assert!(residual_histogram(&img, &img, ChannelSelector::Gray, 0, (-1.0, 1.0)).is_err());
        assert!(residual_histogram(&img, &img, ChannelSelector::Gray, 5, (1.0, -1.0)).is_err());
        assert!(residual_histogram(&img, &img, ChannelSelector::Y, 5, (-1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn energies_are_nonnegative_and_fractions_sum_to_one(
            pix in proptest::collection::vec(0.0f64..=1.0, 2 * 36 * 3),
        ) {
            let a = ImageBuffer::new(6, 6, 3, pix[..108].to_vec()).unwrap();
            let b = ImageBuffer::new(6, 6, 3, pix[108..].to_vec()).unwrap();
            let rep = decompose_energy(&a, &b).unwrap();
            prop_assert!(rep.e_lum >= 0.0 && rep.e_chr >= 0.0 && rep.e_tex >= 0.0);
            if rep.total() > 0.0 {
                prop_assert!(((rep.f_lum + rep.f_chr + rep.f_tex) - 1.0).abs() < 1e-12);
            }
            // Symmetry: squared terms ignore the sign of the residual.
            let rev = decompose_energy(&b, &a).unwrap();
            prop_assert!((rep.e_lum - rev.e_lum).abs() < 1e-15);
            prop_assert!((rep.e_chr - rev.e_chr).abs() < 1e-15);
            prop_assert!((rep.e_tex - rev.e_tex).abs() < 1e-15);
        }

        #[test]
        fn histogram_counts_cover_every_pixel(
            pix in proptest::collection::vec(0.0f64..=1.0, 2 * 25),
            bins in 1usize..64,
        ) {
            let a = ImageBuffer::new(5, 5, 1, pix[..25].to_vec()).unwrap();
            let b = ImageBuffer::new(5, 5, 1, pix[25..].to_vec()).unwrap();
            let h = residual_histogram(&a, &b, ChannelSelector::Gray, bins, (-0.5, 0.5)).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<u64>(), 25);
            prop_assert_eq!(h.bin_edges.len(), bins + 1);
        }
    }
}
