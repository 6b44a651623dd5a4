//! Single-level orthonormal Haar analysis and the bounded luminance update.
//!
//! The transform is separable with filters `(1/sqrt 2, 1/sqrt 2)` and
//! `(1/sqrt 2, -1/sqrt 2)` over non-overlapping pairs, which reduces to a
//! per-2x2-block butterfly: for samples `[[a, b], [c, d]]`
//!
//! ```text
//! ll = (a + b + c + d) / 2      lh = (a - b + c - d) / 2
//! hl = (a + b - c - d) / 2      hh = (a - b - c + d) / 2
//! ```
//!
//! Odd dimensions are extended by one mirrored (edge) sample before analysis
//! and cropped after synthesis, so reconstruction is exact for every size.
//! On even sizes the transform is orthonormal and preserves squared energy.

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// The four subbands of one analysis level plus the pre-padding size.
#[derive(Debug, Clone)]
pub struct WaveletBands {
    pub ll: ImageBuffer,
    pub lh: ImageBuffer,
    pub hl: ImageBuffer,
    pub hh: ImageBuffer,
    pub original_height: usize,
    pub original_width: usize,
}

impl WaveletBands {
    fn validate(&self) -> Result<()> {
        let bh = (self.original_height + 1) / 2;
        let bw = (self.original_width + 1) / 2;
        for (name, band) in [("ll", &self.ll), ("lh", &self.lh), ("hl", &self.hl), ("hh", &self.hh)] {
            if band.channels() != 1 {
                return Err(Error::invalid(format!("{name} band must be single-channel")));
            }
            if band.height() != bh || band.width() != bw {
                return Err(Error::invalid(format!(
                    "{name} band is {}x{}, expected {bh}x{bw} for a {}x{} image",
                    band.height(),
                    band.width(),
                    self.original_height,
                    self.original_width
                )));
            }
        }
        Ok(())
    }
}

/// One level of Haar analysis on a single-channel image.
pub fn dwt_haar(img: &ImageBuffer) -> Result<WaveletBands> {
    if img.channels() != 1 {
        return Err(Error::invalid("dwt_haar expects a single-channel image"));
    }
    let (h, w) = (img.height(), img.width());
    let (bh, bw) = ((h + 1) / 2, (w + 1) / 2);
    let mut ll = vec![0.0; bh * bw];
    let mut lh = vec![0.0; bh * bw];
    let mut hl = vec![0.0; bh * bw];
    let mut hh = vec![0.0; bh * bw];
    // Reading through `min` implements the one-sample mirror extension
    // without materializing a padded copy.
    let at = |r: usize, c: usize| img.data()[r.min(h - 1) * w + c.min(w - 1)];
    for br in 0..bh {
        for bc in 0..bw {
            let (r, c) = (2 * br, 2 * bc);
            let a = at(r, c);
            let b = at(r, c + 1);
            let cc = at(r + 1, c);
            let d = at(r + 1, c + 1);
            let i = br * bw + bc;
            ll[i] = (a + b + cc + d) / 2.0;
            lh[i] = (a - b + cc - d) / 2.0;
            hl[i] = (a + b - cc - d) / 2.0;
            hh[i] = (a - b - cc + d) / 2.0;
        }
    }
    Ok(WaveletBands {
        ll: ImageBuffer::from_computed(bh, bw, 1, ll),
        lh: ImageBuffer::from_computed(bh, bw, 1, lh),
        hl: ImageBuffer::from_computed(bh, bw, 1, hl),
        hh: ImageBuffer::from_computed(bh, bw, 1, hh),
        original_height: h,
        original_width: w,
    })
}

/// Inverse of [`dwt_haar`]; reconstructs at the recorded original size.
pub fn idwt_haar(bands: &WaveletBands) -> Result<ImageBuffer> {
    bands.validate()?;
    let (h, w) = (bands.original_height, bands.original_width);
    let bw = bands.ll.width();
    let mut out = vec![0.0; h * w];
    let mut write = |r: usize, c: usize, v: f64| {
        if r < h && c < w {
            out[r * w + c] = v;
        }
    };
    for br in 0..bands.ll.height() {
        for bc in 0..bw {
            let i = br * bw + bc;
            let ll = bands.ll.data()[i];
            let lh = bands.lh.data()[i];
            let hl = bands.hl.data()[i];
            let hh = bands.hh.data()[i];
            let (r, c) = (2 * br, 2 * bc);
            write(r, c, (ll + lh + hl + hh) / 2.0);
            write(r, c + 1, (ll - lh + hl - hh) / 2.0);
            write(r + 1, c, (ll + lh - hl - hh) / 2.0);
            write(r + 1, c + 1, (ll - lh - hl + hh) / 2.0);
        }
    }
    Ok(ImageBuffer::from_computed(h, w, 1, out))
}

/// Bounded luminance correction: `out = ll + gamma_l * tanh(residual)`.
///
/// The tanh saturation caps every sample's change at `gamma_l`, so the
/// update can brighten or darken locally but never run away. `gamma_l = 0`
/// returns `ll` unchanged, bit for bit.
pub fn clu_apply(ll: &ImageBuffer, residual: &ImageBuffer, gamma_l: f64) -> Result<ImageBuffer> {
    if ll.channels() != 1 || residual.channels() != 1 {
        return Err(Error::invalid("clu_apply expects single-channel planes"));
    }
    if !ll.same_dims(residual) {
        return Err(Error::invalid("clu_apply planes must share dimensions"));
    }
    if !(gamma_l.is_finite() && gamma_l >= 0.0) {
        return Err(Error::invalid("gamma_l must be finite and non-negative"));
    }
    if gamma_l == 0.0 {
        return Ok(ll.clone());
    }
    let data = ll
        .data()
        .iter()
        .zip(residual.data())
        .map(|(base, res)| base + gamma_l * res.tanh())
        .collect();
    Ok(ImageBuffer::from_computed(ll.height(), ll.width(), 1, data))
}

/// Mean absolute difference between two low-pass luminance planes.
pub fn lum_preservation_loss(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::invalid("lum_preservation_loss expects single-channel planes"));
    }
    if !a.same_dims(b) {
        return Err(Error::invalid("lum_preservation_loss planes must share dimensions"));
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.data().len() as f64)
}

/// Mean absolute difference over the three high-frequency subbands of two
/// luminance planes. Insensitive to constant offsets by construction: a
/// uniform shift lives entirely in `ll`.
pub fn hf_freq_loss(y_pred: &ImageBuffer, y_gt: &ImageBuffer) -> Result<f64> {
    if !y_pred.same_dims(y_gt) {
        return Err(Error::invalid("hf_freq_loss planes must share dimensions"));
    }
    let bp = dwt_haar(y_pred)?;
    let bg = dwt_haar(y_gt)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, g) in [(&bp.lh, &bg.lh), (&bp.hl, &bg.hl), (&bp.hh, &bg.hh)] {
        sum += p.data().iter().zip(g.data()).map(|(x, y)| (x - y).abs()).sum::<f64>();
        count += p.data().len();
    }
    Ok(sum / count as f64)
}

fn sq_energy(img: &ImageBuffer) -> f64 {
    img.data().iter().map(|v| v * v).sum()
}

/// Total squared energy across the four bands; equals the image energy on
/// even-sized inputs.
pub fn band_energy(bands: &WaveletBands) -> f64 {
    sq_energy(&bands.ll) + sq_energy(&bands.lh) + sq_energy(&bands.hl) + sq_energy(&bands.hh)
}

/// Squared energy of a plane, exposed for energy-conservation checks.
pub fn plane_energy(img: &ImageBuffer) -> f64 {
    sq_energy(img)
}
