//! Deterministic synthetic fixtures: textured random images, band-limited
//! analytic patterns for registration checks, photometric degradations, and
//! paired datasets written to disk in the benchmark layout.
//!
//! Everything here is seeded; the same seed reproduces the same bytes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::anchor::{apply_anchor, AnchorMatrix};
use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::io::save_image;
use crate::register::{warp_image, CropRect, GeoWarp};

/// Multi-octave value noise in [0, 1] with independent channels.
///
/// Cell sizes of roughly 16/7/3 px give energy at several scales, so the
/// output has usable gradients for both photometric fits and registration.
pub fn textured(height: usize, width: usize, channels: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; height * width * channels];
    let octaves = [(16.0, 0.55), (7.0, 0.3), (3.0, 0.15)];
    for ch in 0..channels {
        for (cell, weight) in octaves {
            let lh = (height as f64 / cell).ceil() as usize + 2;
            let lw = (width as f64 / cell).ceil() as usize + 2;
            let lattice: Vec<f64> = (0..lh * lw).map(|_| rng.gen::<f64>()).collect();
            for r in 0..height {
                for c in 0..width {
                    let fy = r as f64 / cell;
                    let fx = c as f64 / cell;
                    let y0 = fy.floor() as usize;
                    let x0 = fx.floor() as usize;
                    let ty = fy - y0 as f64;
                    let tx = fx - x0 as f64;
                    // Smoothstep weights keep the field C1 across cells.
                    let sy = ty * ty * (3.0 - 2.0 * ty);
                    let sx = tx * tx * (3.0 - 2.0 * tx);
                    let v00 = lattice[y0 * lw + x0];
                    let v01 = lattice[y0 * lw + x0 + 1];
                    let v10 = lattice[(y0 + 1) * lw + x0];
                    let v11 = lattice[(y0 + 1) * lw + x0 + 1];
                    let v = v00 * (1.0 - sx) * (1.0 - sy)
                        + v01 * sx * (1.0 - sy)
                        + v10 * (1.0 - sx) * sy
                        + v11 * sx * sy;
                    data[(r * width + c) * channels + ch] += weight * v;
                }
            }
        }
    }
    ImageBuffer::from_computed(height, width, channels, data)
}

/// 3-channel convenience wrapper around [`textured`].
pub fn textured_rgb(height: usize, width: usize, seed: u64) -> ImageBuffer {
    textured(height, width, 3, seed)
}

/// Adds iid Gaussian noise with the given sigma; the result is unclamped.
pub fn add_gaussian_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> Result<ImageBuffer> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid("noise sigma must be finite and non-negative"));
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::invalid(format!("invalid noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
    ImageBuffer::new(img.height(), img.width(), img.channels(), data)
}

/// Draws a random full-affine anchor that brightens: diagonal gains in
/// [2.2, 3.8], cross-channel terms within ±0.05, bias within ±0.1.
///
/// The diagonal dominates by two orders of magnitude, so the matrix is far
/// from singular and products of dim inputs stay near display range.
pub fn random_anchor(rng: &mut ChaCha8Rng) -> AnchorMatrix {
    let mut a = [[0.0; 3]; 3];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = if i == j {
                rng.gen_range(2.2..3.8)
            } else {
                rng.gen_range(-0.05..0.05)
            };
        }
    }
    let b = [
        rng.gen_range(-0.1..0.1),
        rng.gen_range(-0.1..0.1),
        rng.gen_range(-0.1..0.1),
    ];
    AnchorMatrix::from_affine(a, b).expect("sampled entries are finite")
}

/// Band-limited sum of plane sinusoids, evaluable at any real coordinate.
///
/// Wavelengths span 60 to 300 px, so the field stays smooth under the
/// gradient pre-smoothing used by registration while still being textured.
/// Values lie in [0.05, 0.95].
#[derive(Debug, Clone)]
pub struct SmoothPattern {
    components: Vec<(f64, f64, f64, f64)>,
    norm: f64,
}

impl SmoothPattern {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = std::f64::consts::TAU;
        let mut components = Vec::with_capacity(8);
        let mut norm = 0.0;
        for _ in 0..8 {
            let amp = rng.gen_range(0.4..1.0);
            let freq = tau / rng.gen_range(60.0..300.0);
            let angle = rng.gen_range(0.0..tau);
            let phase = rng.gen_range(0.0..tau);
            components.push((amp, freq * angle.cos(), freq * angle.sin(), phase));
            norm += amp;
        }
        SmoothPattern { components, norm }
    }

    /// Field value at pixel coordinates (x, y) = (column, row).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut s = 0.0;
        for (amp, u, v, phase) in &self.components {
            s += amp * (u * x + v * y + phase).sin();
        }
        0.5 + 0.45 * s / self.norm
    }

    /// Samples the field on an integer grid.
    pub fn render(&self, height: usize, width: usize) -> ImageBuffer {
        self.render_warped(height, width, &GeoWarp::identity())
    }

    /// Samples the field at `warp(x, y)` for each output pixel, producing an
    /// exactly-warped view with no interpolation error.
    pub fn render_warped(&self, height: usize, width: usize, warp: &GeoWarp) -> ImageBuffer {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let (x, y) = warp.apply_pt(c as f64, r as f64);
                data.push(self.eval(x, y));
            }
        }
        ImageBuffer::from_computed(height, width, 1, data)
    }
}

/// Settings for [`write_synthetic_dataset`].
#[derive(Debug, Clone)]
pub struct SynthDatasetOptions {
    pub pairs: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Gaussian noise added to the reference before export.
    pub noise_sigma: f64,
    /// When positive, the low image content is shifted by a random subpixel
    /// translation of at most this many pixels along each axis.
    pub max_shift: f64,
}

impl Default for SynthDatasetOptions {
    fn default() -> Self {
        SynthDatasetOptions {
            pairs: 10,
            height: 96,
            width: 96,
            seed: 7,
            noise_sigma: 0.0,
            max_shift: 0.0,
        }
    }
}

/// Writes `<dir>/low/<id>.png` + `<dir>/high/<id>.png` pairs where the
/// reference is a random affine brightening of a dim textured image, and
/// returns the ids. Output is 8-bit, so fits on the decoded pairs are close
/// to, but not exactly, the generating matrices.
pub fn write_synthetic_dataset(
    dir: impl AsRef<Path>,
    opts: &SynthDatasetOptions,
) -> Result<Vec<String>> {
    if opts.pairs == 0 {
        return Err(Error::invalid("dataset needs at least one pair"));
    }
    if !opts.max_shift.is_finite() || opts.max_shift < 0.0 {
        return Err(Error::invalid("max_shift must be finite and non-negative"));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("low"))?;
    std::fs::create_dir_all(dir.join("high"))?;
    let pad = if opts.max_shift > 0.0 {
        opts.max_shift.ceil() as usize + 2
    } else {
        0
    };
    let mut ids = Vec::with_capacity(opts.pairs);
    for i in 0..opts.pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            opts.seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let (ch, cw) = (opts.height + 2 * pad, opts.width + 2 * pad);
        let canvas = textured(ch, cw, 3, rng.gen());
        let dim: Vec<f64> = canvas.data().iter().map(|v| 0.02 + 0.22 * v).collect();
        let low_canvas = ImageBuffer::from_computed(ch, cw, 3, dim);

        let matrix = random_anchor(&mut rng);
        let mut gt = apply_anchor(&matrix, &low_canvas)?;
        if opts.noise_sigma > 0.0 {
            gt = add_gaussian_noise(&gt, opts.noise_sigma, rng.gen())?;
        }

        let window = CropRect { row0: pad, col0: pad, rows: opts.height, cols: opts.width };
        let gt = gt.crop(&window)?.clamp01();
        let low = if opts.max_shift > 0.0 {
            let dx = rng.gen_range(-opts.max_shift..opts.max_shift);
            let dy = rng.gen_range(-opts.max_shift..opts.max_shift);
            let (shifted, _mask) =
                warp_image(&low_canvas, &GeoWarp::translation(dx, dy)?, ch, cw)?;
            shifted.crop(&window)?
        } else {
            low_canvas.crop(&window)?
        };

        let id = format!("{i:03}");
        save_image(&low, dir.join("low").join(format!("{id}.png")))?;
        save_image(&gt, dir.join("high").join(format!("{id}.png")))?;
        ids.push(id);
    }
    Ok(ids)
}
