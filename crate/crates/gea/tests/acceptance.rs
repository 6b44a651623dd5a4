//! The release gate: one test per shipping criterion, each printing a
//! PASS line with the measured numbers (visible under --nocapture).
//!
//! Every test here builds its own synthetic data from fixed seeds, so the
//! suite is deterministic and self-contained.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gea::synth::{add_gaussian_noise, textured, textured_rgb, write_synthetic_dataset, SmoothPattern, SynthDatasetOptions};
use gea::wavelet::{band_energy, plane_energy};
use gea::{
    apply_anchor, clu_apply, decompose_energy, dwt_haar, ecc_register_with, ecc_value,
    fit_anchor, fit_residual, idwt_haar, luminance_error_ratio, pair_score, psnr,
    shared_valid_crop, ssim, warp_image, AnchorMatrix, EccConfig, Family, GeoWarp, ImageBuffer,
    MotionModel, PyramidMode,
};

/// A diagonally dominant linear part keeps the generating matrix far from
/// singular, so the least-squares fit is the unique exact solution.
fn random_recoverable_anchor(rng: &mut ChaCha8Rng) -> AnchorMatrix {
    let mut a = [[0.0; 3]; 3];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { rng.gen_range(1.5..3.5) } else { rng.gen_range(-0.1..0.1) };
        }
    }
    let b = [
        rng.gen_range(-0.1..0.1),
        rng.gen_range(-0.1..0.1),
        rng.gen_range(-0.1..0.1),
    ];
    AnchorMatrix::from_affine(a, b).unwrap()
}

fn dim_textured(h: usize, w: usize, seed: u64) -> ImageBuffer {
    let base = textured(h, w, 3, seed);
    let data = base.data().iter().map(|v| 0.02 + 0.26 * v).collect();
    ImageBuffer::new(h, w, 3, data).unwrap()
}

#[test]
fn criterion_01_affine12_exact_recovery() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let low = dim_textured(256, 256, 1000 + i);
        let truth = random_recoverable_anchor(&mut rng);
        let gt = apply_anchor(&truth, &low).unwrap();
        let fitted = fit_anchor(&low, &gt, Family::Affine12).unwrap();
        for (got, want) in fitted.entries().iter().zip(truth.entries()) {
            worst = worst.max((got - want).abs());
        }
    }
    let elapsed = start.elapsed();
    assert!(worst <= 1e-8, "max abs parameter error {worst:.3e} exceeds 1e-8");
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "50 fits on 256x256 took {:.2}s, budget is 5s",
        elapsed.as_secs_f64()
    );
    println!(
        "criterion 01 PASS: 50/50 exact recoveries, max abs error {worst:.2e}, {:.2}s total",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_02_nested_family_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let tol = 1.0 + 1e-12;
    for i in 0..100 {
        let low = dim_textured(32, 32, 2000 + i);
        let truth = random_recoverable_anchor(&mut rng);
        let noisy = add_gaussian_noise(&apply_anchor(&truth, &low).unwrap(), 0.01, 4000 + i)
            .unwrap();
        let r = |family| {
            let m = fit_anchor(&low, &noisy, family).unwrap();
            fit_residual(&m, &low, &noisy).unwrap()
        };
        let (rs, rd, rl, ra) =
            (r(Family::Scalar), r(Family::DiagBias), r(Family::Linear9), r(Family::Affine12));
        assert!(ra <= rl * tol && rl <= rs * tol, "linear chain violated on pair {i}: {ra} {rl} {rs}");
        assert!(ra <= rd * tol && rd <= rs * tol, "bias chain violated on pair {i}: {ra} {rd} {rs}");
    }
    println!("criterion 02 PASS: residual chains monotone on 100/100 pairs (rel tol 1e-12)");
}

#[test]
fn criterion_03_fit_beats_10000_perturbations_per_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut closest = f64::INFINITY;
    for i in 0..20 {
        let low = dim_textured(32, 32, 3000 + i);
        let truth = random_recoverable_anchor(&mut rng);
        let gt = add_gaussian_noise(&apply_anchor(&truth, &low).unwrap(), 0.01, 5000 + i)
            .unwrap();
        let fitted = fit_anchor(&low, &gt, Family::Affine12).unwrap();
        let optimum = fit_residual(&fitted, &low, &gt).unwrap();
        let base = fitted.entries();
        for _ in 0..10_000 {
            // Log-uniform perturbation scale across the stated 1e-3..1e-1.
            let scale = 10f64.powf(rng.gen_range(-3.0..-1.0));
            let mut entries = base;
            for v in entries.iter_mut() {
                *v += scale * rng.gen_range(-1.0..1.0);
            }
            let perturbed = AnchorMatrix::from_affine(
                [
                    [entries[0], entries[1], entries[2]],
                    [entries[3], entries[4], entries[5]],
                    [entries[6], entries[7], entries[8]],
                ],
                [entries[9], entries[10], entries[11]],
            )
            .unwrap();
            let residual = fit_residual(&perturbed, &low, &gt).unwrap();
            assert!(
                residual >= optimum,
                "perturbation undercut the fit on pair {i}: {residual} < {optimum}"
            );
            closest = closest.min(residual - optimum);
        }
    }
    println!(
        "criterion 03 PASS: fitted residual optimal against 200000 perturbations, closest margin {closest:.2e}"
    );
}

#[test]
fn criterion_04_wavelet_round_trip_and_parseval() {
    let mut sizes = vec![(31usize, 45usize), (600, 401), (1, 1), (2, 3), (64, 64), (128, 96)];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    while sizes.len() < 20 {
        sizes.push((rng.gen_range(1..80), rng.gen_range(1..80)));
    }
    let mut worst_rt = 0.0f64;
    let mut worst_parseval = 0.0f64;
    let mut even_count = 0;
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let img = gea::to_grayscale(&textured(h, w, 3, 6000 + i as u64));
        let bands = dwt_haar(&img).unwrap();
        let back = idwt_haar(&bands).unwrap();
        worst_rt = worst_rt.max(back.max_abs_diff(&img).unwrap());
        if h % 2 == 0 && w % 2 == 0 {
            even_count += 1;
            let pe = plane_energy(&img);
            worst_parseval = worst_parseval.max((band_energy(&bands) - pe).abs() / pe);
        }
    }
    assert!(worst_rt <= 1e-12, "round-trip error {worst_rt:.3e} exceeds 1e-12");
    assert!(
        worst_parseval <= 1e-10,
        "energy mismatch {worst_parseval:.3e} exceeds 1e-10 relative"
    );
    println!(
        "criterion 04 PASS: 20 round trips within {worst_rt:.1e}; energy preserved within {worst_parseval:.1e} on {even_count} even sizes"
    );
}

#[test]
fn criterion_05_clu_bound_and_zero_gamma_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for case in 0..1000 {
        let h = rng.gen_range(1..24);
        let w = rng.gen_range(1..24);
        let ll_data: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        let res_data: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ll = ImageBuffer::new(h, w, 1, ll_data).unwrap();
        let residual = ImageBuffer::new(h, w, 1, res_data).unwrap();
        let gamma = if case % 10 == 0 { 0.0 } else { rng.gen_range(0.0..0.5) };
        let out = clu_apply(&ll, &residual, gamma).unwrap();
        if gamma == 0.0 {
            assert_eq!(out.data(), ll.data(), "gamma 0 must reproduce ll bit-exactly");
        } else {
            let change = out.max_abs_diff(&ll).unwrap();
            assert!(change <= gamma, "case {case}: change {change} exceeds gamma {gamma}");
        }
    }
    println!("criterion 05 PASS: update bounded by gamma on 1000/1000 triples, gamma 0 bit-exact");
}

#[test]
fn criterion_06_luminance_dominates_and_anchoring_removes_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut min_f_lum = 1.0f64;
    let mut min_ratio = f64::INFINITY;
    for i in 0..10 {
        // Strong under-exposure with slight channel imbalance, then sensor
        // noise on the reference.
        let base = textured(96, 96, 3, 7000 + i);
        let gains = [
            rng.gen_range(0.18..0.30),
            rng.gen_range(0.18..0.30),
            rng.gen_range(0.18..0.30),
        ];
        let low_data: Vec<f64> = base
            .data()
            .chunks(3)
            .flat_map(|px| [gains[0] * px[0] + 0.01, gains[1] * px[1] + 0.01, gains[2] * px[2] + 0.01])
            .collect();
        let low = ImageBuffer::new(96, 96, 3, low_data).unwrap();
        let gt = add_gaussian_noise(&base, 0.01, 8000 + i).unwrap();

        let pre = decompose_energy(&low, &gt).unwrap();
        min_f_lum = min_f_lum.min(pre.f_lum);
        assert!(pre.f_lum >= 0.9, "pair {i}: pre-anchor f_lum {:.4} below 0.9", pre.f_lum);

        let matrix = fit_anchor(&low, &gt, Family::Affine12).unwrap();
        let anchored = apply_anchor(&matrix, &low).unwrap();
        let ratio = luminance_error_ratio(&low, &anchored, &gt).unwrap();
        min_ratio = min_ratio.min(ratio);
        assert!(ratio >= 100.0, "pair {i}: luminance error ratio {ratio:.1} below 100");
    }
    println!(
        "criterion 06 PASS: pre f_lum >= {min_f_lum:.3}, post ratio >= {min_ratio:.0} on 10 degradations"
    );
}

#[test]
fn criterion_07_post_anchor_psnr_never_below_pre() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(
        dir.path(),
        &SynthDatasetOptions {
            pairs: 6,
            height: 64,
            width: 64,
            seed: 707,
            noise_sigma: 0.008,
            ..Default::default()
        },
    )
    .unwrap();
    let records = gea::bench::discover_pairs(dir.path()).unwrap();
    // run_benchmark hard-asserts the guarantee internally on every row.
    let report =
        gea::bench::run_benchmark(&records, &gea::bench::BenchmarkOptions::default()).unwrap();
    assert_eq!(report.rows.len(), 6);
    let mut checks = 0;
    for row in &report.rows {
        for outcome in row.families.values() {
            assert!(outcome.score.psnr_db >= row.pre_score.psnr_db);
            checks += 1;
        }
    }
    println!("criterion 07 PASS: post >= pre PSNR on all {checks} row/family combinations");
}

#[test]
fn criterion_08_ecc_recovers_synthetic_warps() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (h, w) = (512usize, 512usize);
    let config = EccConfig {
        model: MotionModel::Euclidean,
        max_iters: 200,
        eps: 1e-7,
        smooth_sigma: 1.0,
        pyramid: PyramidMode::Levels(3),
    };
    let mut worst_err = 0.0f64;
    let mut worst_ecc = 1.0f64;
    let mut worst_time = 0.0f64;
    for i in 0..20 {
        let pattern = SmoothPattern::new(9000 + i);
        // First half: pure translations; second half adds rotation about the
        // frame center. Both stay within the stated motion budget.
        let (theta, tx, ty) = if i < 10 {
            (0.0, rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0))
        } else {
            (
                rng.gen_range(-3.0f64..3.0).to_radians(),
                rng.gen_range(-8.0..8.0),
                rng.gen_range(-8.0..8.0),
            )
        };
        let (s, c) = theta.sin_cos();
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        let truth = GeoWarp::from_matrix([
            [c, -s, cx - c * cx + s * cy + tx],
            [s, c, cy - s * cx - c * cy + ty],
        ])
        .unwrap();
        let reference = pattern.render(h, w);
        let input = pattern.render_warped(h, w, &truth);

        let start = Instant::now();
        let result = ecc_register_with(&input, &reference, &config).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        worst_time = worst_time.max(elapsed);
        assert!(elapsed < 2.0, "warp {i}: registration took {elapsed:.2}s, budget 2s");

        // Corner displacement bounds the in-frame error of the recovered map;
        // for pure translations it equals the translation error.
        let mut err = 0.0f64;
        for (x, y) in [(0.0, 0.0), ((w - 1) as f64, 0.0), (0.0, (h - 1) as f64), ((w - 1) as f64, (h - 1) as f64)] {
            let (ax, ay) = truth.apply_pt(x, y);
            let (bx, by) = result.warp.apply_pt(x, y);
            err = err.max(((ax - bx).powi(2) + (ay - by).powi(2)).sqrt());
        }
        worst_err = worst_err.max(err);
        worst_ecc = worst_ecc.min(result.final_ecc);
        assert!(err <= 0.1, "warp {i}: displacement error {err:.4} px exceeds 0.1");
        assert!(result.final_ecc >= 0.99, "warp {i}: final ecc {:.4}", result.final_ecc);
    }

    // The correlation objective ignores affine photometric rescaling.
    let a = textured_rgb(128, 128, 77);
    let b = textured_rgb(128, 128, 78);
    let rescaled: Vec<f64> = a.data().iter().map(|v| 0.37 * v + 0.11).collect();
    let a2 = ImageBuffer::new(128, 128, 3, rescaled).unwrap();
    let drift = (ecc_value(&a, &b).unwrap() - ecc_value(&a2, &b).unwrap()).abs();
    assert!(drift <= 1e-9, "photometric rescaling moved the ecc value by {drift:.2e}");

    println!(
        "criterion 08 PASS: 20/20 warps within {worst_err:.3} px, min ecc {worst_ecc:.4}, max {worst_time:.2}s, photometric drift {drift:.1e}"
    );
}

#[test]
fn criterion_09_crop_protocol() {
    // Full masks: the margin is the only thing removed.
    let full = ImageBuffer::filled(100, 100, 1, 1.0).unwrap();
    let crop = shared_valid_crop(&[full.clone(), full], 4).unwrap();
    assert_eq!((crop.row0, crop.col0, crop.rows, crop.cols), (4, 4, 92, 92));

    // Masks produced the way the pipeline produces them: warp validity.
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let img = textured(40, 40, 1, 1212);
    for case in 0..100 {
        let warp_a = GeoWarp::translation(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0))
            .unwrap();
        let warp_b = GeoWarp::translation(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0))
            .unwrap();
        let (_, mask_a) = warp_image(&img, &warp_a, 40, 40).unwrap();
        let (_, mask_b) = warp_image(&img, &warp_b, 40, 40).unwrap();
        let margin = rng.gen_range(0..4usize);
        let crop = shared_valid_crop(&[mask_a.clone(), mask_b.clone()], margin).unwrap();
        for r in crop.row0..crop.row0 + crop.rows {
            for c in crop.col0..crop.col0 + crop.cols {
                assert!(
                    mask_a.sample(r, c, 0) > 0.5 && mask_b.sample(r, c, 0) > 0.5,
                    "case {case}: crop admitted an invalid pixel at ({r}, {c})"
                );
            }
        }
    }
    println!("criterion 09 PASS: full-mask crop is (4,4,92,92); 100 random mask pairs admit no invalid pixel");
}

#[test]
fn criterion_10_metric_sanity() {
    let x = ImageBuffer::filled(32, 32, 3, 0.2).unwrap();
    let y = ImageBuffer::filled(32, 32, 3, 0.3).unwrap();
    let p = psnr(&x, &y).unwrap();
    assert!((p - 20.0).abs() <= 1e-4, "uniform 0.1 difference gave {p} dB");

    let img = textured_rgb(40, 52, 21);
    let s = ssim(&img, &img).unwrap();
    assert_eq!(s, 1.0, "self-SSIM must be exactly 1, got {s}");

    let shifted: Vec<f64> = img.data().iter().map(|v| v + 0.07).collect();
    let shifted = ImageBuffer::new(40, 52, 3, shifted).unwrap();
    let l_color = pair_score(&img, &shifted).unwrap().l_color;
    assert!(l_color <= 1e-12, "uniform RGB shift leaked into chroma: {l_color:.3e}");

    println!(
        "criterion 10 PASS: psnr(0.1 uniform) = {p:.5} dB, ssim(x,x) = 1 exactly, l_color of uniform shift = {l_color:.1e}"
    );
}

#[test]
fn criterion_11_benchmark_files_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("dataset");
    write_synthetic_dataset(
        &dataset,
        &SynthDatasetOptions {
            pairs: 10,
            height: 48,
            width: 48,
            seed: 1111,
            noise_sigma: 0.005,
            ..Default::default()
        },
    )
    .unwrap();

    let mut files = Vec::new();
    for threads in ["1", "8"] {
        let json = dir.path().join(format!("r{threads}.json"));
        let csv = dir.path().join(format!("r{threads}.csv"));
        let out = Command::new(env!("CARGO_BIN_EXE_gea"))
            .args([
                "benchmark",
                dataset.to_str().unwrap(),
                "--out",
                json.to_str().unwrap(),
                "--csv",
                csv.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .env_remove("GEA_THREADS")
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        files.push((std::fs::read(json).unwrap(), std::fs::read(csv).unwrap()));
    }
    assert_eq!(files[0].0, files[1].0, "JSON reports differ between thread counts");
    assert_eq!(files[0].1, files[1].1, "CSV reports differ between thread counts");
    println!(
        "criterion 11 PASS: 10-pair benchmark byte-identical across --threads 1/8 ({} JSON bytes)",
        files[0].0.len()
    );
}
