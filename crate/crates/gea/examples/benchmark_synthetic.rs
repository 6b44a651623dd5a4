//! End-to-end benchmark over a synthetic on-disk dataset.
//!
//! Generates degraded/reference PNG pairs, scores every matrix family on
//! each pair, and writes the JSON report plus the per-pair CSV. The run is
//! repeated with different worker counts to show the reports are
//! byte-identical regardless of parallelism.
//!
//! Run: cargo run -p gea --example benchmark_synthetic

use std::fs;
use std::path::PathBuf;

use gea::bench::{benchmark_csv, discover_pairs, run_benchmark, BenchmarkOptions};
use gea::report::to_json_string;
use gea::synth::{write_synthetic_dataset, SynthDatasetOptions};

fn main() -> gea::Result<()> {
    let out_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../target/example-output/benchmark_synthetic");
    fs::create_dir_all(&out_dir)?;
    let out_dir = out_dir.canonicalize()?;
    let dataset_dir = out_dir.join("dataset");

    let synth = SynthDatasetOptions {
        pairs: 8,
        height: 96,
        width: 96,
        seed: 20240601,
        noise_sigma: 0.004,
        max_shift: 0.0,
    };
    let ids = write_synthetic_dataset(&dataset_dir, &synth)?;
    println!("dataset: {} pairs under {}", ids.len(), dataset_dir.display());

    let records = discover_pairs(&dataset_dir)?;
    let opts = BenchmarkOptions { dataset_seed: Some(synth.seed), ..Default::default() };
    let report = run_benchmark(&records, &opts)?;

    println!();
    println!("{:<10} {:>10} {:>10}", "family", "psnr mean", "ssim mean");
    println!("{:<10} {:>10.3} {:>10.4}", "(input)",
        report.aggregates.pre["psnr_db"].mean.0,
        report.aggregates.pre["ssim"].mean.0);
    for (family, columns) in &report.aggregates.families {
        println!(
            "{:<10} {:>10.3} {:>10.4}",
            family,
            columns["psnr_db"].mean.0,
            columns["ssim"].mean.0
        );
    }

    let json = to_json_string(&report)?;
    let csv = benchmark_csv(&report)?;
    fs::write(out_dir.join("report.json"), &json)?;
    fs::write(out_dir.join("report.csv"), &csv)?;
    println!();
    println!("wrote report.json ({} bytes) and report.csv", json.len());

    // Worker count must not leak into the output.
    for threads in [1, 2, 8] {
        let again = run_benchmark(&records, &BenchmarkOptions { threads, ..opts.clone() })?;
        assert_eq!(to_json_string(&again)?, json, "report changed with {threads} workers");
    }
    println!("reports are byte-identical with 1, 2, and 8 workers");
    Ok(())
}
