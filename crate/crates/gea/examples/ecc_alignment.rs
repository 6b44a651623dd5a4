//! Recovers a known sub-pixel euclidean warp by correlation ascent.
//!
//! Both frames sample the same analytic pattern, one through a rotation
//! about the image center plus a shift, so the true warp is known exactly
//! and the input carries no resampling error. The solver runs coarse to
//! fine on a 3-level pyramid; the printed corner displacements measure the
//! recovered warp directly against the truth.
//!
//! Run: cargo run -p gea --example ecc_alignment

use std::fs;
use std::path::PathBuf;

use gea::synth::SmoothPattern;
use gea::{
    ecc_register_with, ecc_value, save_image, shared_valid_crop, warp_image, EccConfig, GeoWarp,
    MotionModel, PyramidMode,
};

/// Rotation by `theta` about (cx, cy), then a shift. Composed directly so
/// the fixed point stays put: W(x) = R(x - c) + c + t.
fn euclidean_about(theta: f64, cx: f64, cy: f64, tx: f64, ty: f64) -> gea::Result<GeoWarp> {
    let (s, c) = theta.sin_cos();
    GeoWarp::from_matrix([
        [c, -s, cx - c * cx + s * cy + tx],
        [s, c, cy - s * cx - c * cy + ty],
    ])
}

fn main() -> gea::Result<()> {
    let out_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../target/example-output/ecc_alignment");
    fs::create_dir_all(&out_dir)?;
    let out_dir = out_dir.canonicalize()?;

    let (h, w) = (512usize, 512usize);
    let pattern = SmoothPattern::new(2024);
    let truth = euclidean_about(1.5_f64.to_radians(), 255.5, 255.5, 4.0, -3.0)?;

    let reference = pattern.render(h, w);
    let input = pattern.render_warped(h, w, &truth);

    println!("correlation before alignment: {:+.6}", ecc_value(&input, &reference)?);

    let config = EccConfig {
        model: MotionModel::Euclidean,
        max_iters: 200,
        eps: 1e-7,
        smooth_sigma: 1.0,
        pyramid: PyramidMode::Levels(3),
    };
    let result = ecc_register_with(&input, &reference, &config)?;
    println!(
        "solver: {} iterations across levels, converged = {}, final correlation {:+.6}",
        result.iterations, result.converged, result.final_ecc
    );
    println!("true warp      {:?}", truth.params().map(|v| (v * 1e4).round() / 1e4));
    println!("recovered warp {:?}", result.warp.params().map(|v| (v * 1e4).round() / 1e4));

    // Endpoint error at the frame corners bounds it everywhere inside.
    let mut worst = 0.0f64;
    for (x, y) in [(0.0, 0.0), (511.0, 0.0), (0.0, 511.0), (511.0, 511.0)] {
        let (ax, ay) = truth.apply_pt(x, y);
        let (bx, by) = result.warp.apply_pt(x, y);
        worst = worst.max(((ax - bx).powi(2) + (ay - by).powi(2)).sqrt());
    }
    println!("max corner displacement error: {worst:.4} px");

    let (aligned, mask) = warp_image(&input, &result.warp, h, w)?;
    // The shared crop is the bounding box of the valid mask, so under a
    // rotation it still contains the cut-off corners; the mask stays the
    // authority on which pixels carry resampled content.
    let crop = shared_valid_crop(&[mask.clone()], 4)?;
    println!(
        "shared valid crop after margin 4: {}x{} at ({}, {})",
        crop.rows, crop.cols, crop.row0, crop.col0
    );
    let aligned_cropped = aligned.crop(&crop)?;
    let reference_cropped = reference.crop(&crop)?;
    let mask_cropped = mask.crop(&crop)?;
    let (mut err, mut valid) = (0.0, 0u64);
    for r in 0..crop.rows {
        for c in 0..crop.cols {
            if mask_cropped.sample(r, c, 0) > 0.5 {
                err += (aligned_cropped.sample(r, c, 0) - reference_cropped.sample(r, c, 0)).abs();
                valid += 1;
            }
        }
    }
    println!(
        "mean abs residual over valid pixels: {:.3e}  ({} of {} crop pixels valid)",
        err / valid as f64,
        valid,
        crop.rows * crop.cols
    );

    save_image(&input, out_dir.join("input.png"))?;
    save_image(&reference, out_dir.join("reference.png"))?;
    save_image(&aligned_cropped, out_dir.join("aligned_cropped.png"))?;
    println!("wrote frames to {}", out_dir.display());
    Ok(())
}
