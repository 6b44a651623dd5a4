//! Full-reference quality metrics on [0, 1] images.

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::color::rgb_to_yuv;
use crate::error::{Error, Result};
use crate::filter::gaussian_kernel;
use crate::report::{de_inf_aware, ser_inf_aware};

/// SSIM window side; the window is Gaussian with sigma 1.5.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn validate(a: &ImageBuffer, b: &ImageBuffer, what: &str) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::invalid(format!("{what} requires matching dimensions and channels")));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB with peak 1.0, over all channels.
///
/// Inputs are clamped to [0, 1] internally; identical images give `+inf`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    validate(a, b, "psnr")?;
    let mut sum = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0);
        sum += d * d;
    }
    let mse = sum / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1.0.
///
/// Statistics are computed per channel over windows that fit entirely inside
/// the image and averaged across channels; inputs are clamped internally.
/// Values can be negative for anti-correlated structure.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    validate(a, b, "ssim")?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let kernel = {
        // gaussian_kernel picks its own radius; SSIM pins an 11-tap window.
        let radius = (SSIM_WINDOW / 2) as f64;
        let full = gaussian_kernel(SSIM_SIGMA);
        let full_radius = full.len() / 2;
        let taps: Vec<f64> =
            full[full_radius - radius as usize..=full_radius + radius as usize].to_vec();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect::<Vec<f64>>()
    };

    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut channel_means = Vec::with_capacity(a.channels());
    for ch in 0..a.channels() {
        let plane = |img: &ImageBuffer| -> Vec<f64> {
            img.data()
                .iter()
                .skip(ch)
                .step_by(img.channels())
                .map(|v| v.clamp(0.0, 1.0))
                .collect()
        };
        let pa = plane(a);
        let pb = plane(b);
        channel_means.push(ssim_plane(&pa, &pb, a.height(), a.width(), &kernel, c1, c2));
    }
    Ok(channel_means.iter().sum::<f64>() / channel_means.len() as f64)
}

/// Valid-window SSIM mean for one plane.
fn ssim_plane(pa: &[f64], pb: &[f64], h: usize, w: usize, kernel: &[f64], c1: f64, c2: f64) -> f64 {
    let k = kernel.len();
    let (vh, vw) = (h - k + 1, w - k + 1);

    // Horizontal pass over the five window statistics, valid positions only.
    let mut ha = vec![0.0; h * vw];
    let mut hb = vec![0.0; h * vw];
    let mut haa = vec![0.0; h * vw];
    let mut hbb = vec![0.0; h * vw];
    let mut hab = vec![0.0; h * vw];
    for r in 0..h {
        for c in 0..vw {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (t, tap) in kernel.iter().enumerate() {
                let x = pa[r * w + c + t];
                let y = pb[r * w + c + t];
                sa += tap * x;
                sb += tap * y;
                saa += tap * x * x;
                sbb += tap * y * y;
                sab += tap * x * y;
            }
            let i = r * vw + c;
            ha[i] = sa;
            hb[i] = sb;
            haa[i] = saa;
            hbb[i] = sbb;
            hab[i] = sab;
        }
    }

    let mut total = 0.0;
    for r in 0..vh {
        for c in 0..vw {
            let (mut mu_a, mut mu_b, mut raw_aa, mut raw_bb, mut raw_ab) =
                (0.0, 0.0, 0.0, 0.0, 0.0);
            for (t, tap) in kernel.iter().enumerate() {
                let i = (r + t) * vw + c;
                mu_a += tap * ha[i];
                mu_b += tap * hb[i];
                raw_aa += tap * haa[i];
                raw_bb += tap * hbb[i];
                raw_ab += tap * hab[i];
            }
            let var_a = raw_aa - mu_a * mu_a;
            let var_b = raw_bb - mu_b * mu_b;
            let cov = raw_ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
        }
    }
    total / (vh * vw) as f64
}

/// Bundle of the four pairwise scores used in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairScore {
    /// PSNR in dB on clamped inputs; `+inf` (serialized `"inf"`) when equal.
    #[serde(serialize_with = "ser_inf_aware", deserialize_with = "de_inf_aware")]
    pub psnr_db: f64,
    /// SSIM on clamped inputs.
    pub ssim: f64,
    /// Mean absolute RGB difference of the raw (unclamped) inputs.
    pub l_rec: f64,
    /// Mean absolute U difference plus mean absolute V difference, raw inputs.
    pub l_color: f64,
}

/// Computes all four scores for a prediction against its reference.
pub fn pair_score(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<PairScore> {
    validate(pred, gt, "pair_score")?;
    if pred.channels() != 3 {
        return Err(Error::invalid("pair_score expects 3-channel images"));
    }
    let l_rec = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / pred.data().len() as f64;
    let yuv_p = rgb_to_yuv(pred)?;
    let yuv_g = rgb_to_yuv(gt)?;
    let mad = |a: &ImageBuffer, b: &ImageBuffer| {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
            / a.data().len() as f64
    };
    Ok(PairScore {
        psnr_db: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
        l_rec,
        l_color: mad(&yuv_p.u, &yuv_g.u) + mad(&yuv_p.v, &yuv_g.v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, h: usize, w: usize, ch: usize, lo: f64, hi: f64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * ch).map(|_| rng.gen_range(lo..hi)).collect();
        ImageBuffer::new(h, w, ch, data).unwrap()
    }

    #[test]
    fn psnr_uniform_difference_hand_values() {
        let a = ImageBuffer::filled(8, 8, 3, 0.3).unwrap();
        let b = ImageBuffer::filled(8, 8, 3, 0.4).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-10);
        let c = ImageBuffer::filled(8, 8, 3, 0.8).unwrap();
        assert!((psnr(&a, &c).unwrap() - 6.020599913279624).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_is_symmetric_and_clamps() {
        let a = noise(3, 9, 9, 3, 0.0, 1.0);
        let b = noise(4, 9, 9, 3, 0.0, 1.0);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        // Out-of-range values saturate rather than inflating the error.
        let hot = ImageBuffer::filled(8, 8, 3, 5.0).unwrap();
        let one = ImageBuffer::filled(8, 8, 3, 1.0).unwrap();
        assert_eq!(psnr(&hot, &one).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_self_is_exactly_one() {
        let img = noise(7, 16, 20, 3, 0.0, 1.0);
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let img = ImageBuffer::filled(10, 16, 1, 0.5).unwrap();
        assert!(ssim(&img, &img).is_err());
    }

    #[test]
    fn ssim_detects_inverted_contrast() {
        // b = 1 - a around mid-gray anti-correlates every window.
        let a = noise(11, 24, 24, 1, 0.2, 0.8);
        let inv: Vec<f64> = a.data().iter().map(|v| 1.0 - v).collect();
        let b = ImageBuffer::new(24, 24, 1, inv).unwrap();
        assert!(ssim(&a, &b).unwrap() < 0.0);
    }

    #[test]
    fn ssim_of_independent_noise_is_small() {
        let a = noise(21, 64, 64, 1, 0.0, 1.0);
        let b = noise(22, 64, 64, 1, 0.0, 1.0);
        assert!(ssim(&a, &b).unwrap().abs() < 0.1);
    }

    #[test]
    fn l_color_ignores_gray_shifts() {
        // An equal shift on R, G, B moves luma only.
        let a = noise(31, 12, 12, 3, 0.1, 0.6);
        let shifted: Vec<f64> = a.data().iter().map(|v| v + 0.2).collect();
        let b = ImageBuffer::new(12, 12, 3, shifted).unwrap();
        let score = pair_score(&b, &a).unwrap();
        assert!(score.l_color < 1e-12);
        assert!((score.l_rec - 0.2).abs() < 1e-12);
    }
}
