//! Photometric anchoring toolkit for degraded/reference image pairs.
//!
//! The core operation fits a single 3x4 affine color matrix (a 3x3
//! cross-channel linear part plus a per-channel bias) that maps a degraded
//! image as close as possible, in the least-squares sense, to its reference.
//! Around that sit the pieces needed to study and benchmark the idea:
//!
//! * nested matrix families from a single gain up to the full 12 parameters
//!   ([`fit_anchor`], [`apply_anchor`]),
//! * BT.601 YUV conversion and a residual energy split into luminance,
//!   chrominance, and texture shares ([`decompose_energy`]),
//! * a single-level orthonormal Haar transform with a bounded luminance
//!   update on the coarse band ([`dwt_haar`], [`clu_apply`]),
//! * sub-pixel geometric registration by correlation ascent plus the shared
//!   valid-crop protocol ([`ecc_register`], [`register_pair`]),
//! * PSNR/SSIM scoring ([`pair_score`]) and a deterministic, thread-count
//!   independent benchmark over image-pair datasets ([`bench`]).
//!
//! All pixel data is `f64` in nominal [0, 1] range, stored row-major and
//! interleaved in [`ImageBuffer`]. Outputs stay unclamped until export so
//! analyses see out-of-gamut values; [`ImageBuffer::clamp01`] is explicit.
//!
//! # Quick start
//!
//! ```
//! use gea::{apply_anchor, fit_anchor, Family, ImageBuffer};
//!
//! // A dim textured image and a diagonal-gain + bias brightening of it.
//! let low = gea::synth::textured_rgb(16, 16, 1);
//! let brightened: Vec<f64> = low.data().iter().map(|v| 0.5 * v + 0.02).collect();
//! let gt = ImageBuffer::new(16, 16, 3, brightened)?;
//!
//! // The fit recovers the generating parameters, so applying the matrix
//! // reproduces the reference to machine precision.
//! let matrix = fit_anchor(&low, &gt, Family::DiagBias)?;
//! let aligned = apply_anchor(&matrix, &low)?;
//! assert!(aligned.max_abs_diff(&gt)? < 1e-9);
//! # Ok::<(), gea::Error>(())
//! ```
//!
//! The `gea` binary exposes the same pipeline as `fit`, `apply`, `analyze`,
//! `register`, and `benchmark` subcommands; `examples/` walks each major
//! capability end to end.

pub mod anchor;
pub mod bench;
mod buffer;
pub mod cli;
pub mod color;
pub mod energy;
mod error;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod register;
pub mod report;
pub mod synth;
pub mod wavelet;

pub use anchor::{
    apply_anchor, diagnostics, fit_anchor, fit_anchor_full, fit_residual, matrix_loss, AnchorFit,
    AnchorMatrix, Family, MatrixDiagnostics,
};
pub use buffer::ImageBuffer;
pub use color::{rgb_to_yuv, to_grayscale, yuv_to_rgb, YuvImage};
pub use energy::{
    decompose_energy, luminance_error_ratio, residual_histogram, ChannelSelector, EnergyReport,
    ResidualHistogram,
};
pub use error::{Error, Result};
pub use filter::{central_gradients, gaussian_smooth, laplacian};
pub use io::{load_image, save_image};
pub use metrics::{pair_score, psnr, ssim, PairScore};
pub use register::{
    ecc_register, ecc_register_with, ecc_value, register_pair, register_pair_with,
    shared_valid_crop, warp_image, CropRect, EccConfig, EccResult, GeoWarp, MotionModel,
    PyramidMode, RegisteredPair,
};
pub use wavelet::{clu_apply, dwt_haar, hf_freq_loss, idwt_haar, lum_preservation_loss, WaveletBands};
