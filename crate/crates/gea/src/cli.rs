//! Command-line surface: argument definitions and one handler per
//! subcommand. Exit-code policy lives in `main`; handlers return errors.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::anchor::{apply_anchor, diagnostics, fit_anchor_full, fit_residual, AnchorMatrix, Family};
use crate::bench::{benchmark_csv, discover_pairs, read_manifest, run_benchmark, BenchmarkOptions};
use crate::energy::{
    decompose_energy, luminance_error_ratio, residual_histogram, ChannelSelector, EnergyReport,
    ResidualHistogram, DEFAULT_HISTOGRAM_BINS, DEFAULT_HISTOGRAM_RANGE,
};
use crate::error::{Error, Result};
use crate::io::{load_image, save_image};
use crate::metrics::{pair_score, PairScore};
use crate::register::{
    register_pair_with, CropRect, EccConfig, GeoWarp, MotionModel, PyramidMode,
};
use crate::report::{fmt_f64, ser_inf_aware, to_json_string};

/// Photometric anchoring toolkit for degraded/reference image pairs.
#[derive(Debug, Parser)]
#[command(name = "gea", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit an anchoring matrix mapping LOW toward GT and write it as JSON.
    Fit(FitArgs),
    /// Apply a fitted matrix JSON to an image and write the result.
    Apply(ApplyArgs),
    /// Decompose the LOW-vs-GT residual into luminance, chrominance, and
    /// texture shares, before and after optimal anchoring.
    Analyze(AnalyzeArgs),
    /// Align LOW to GT geometrically and write the cropped registered pair.
    Register(RegisterArgs),
    /// Score a dataset of pairs across matrix families and write a report.
    Benchmark(BenchmarkArgs),
}

impl Cli {
    pub fn run(self) -> Result<()> {
        match self.command {
            Command::Fit(args) => cmd_fit(args),
            Command::Apply(args) => cmd_apply(args),
            Command::Analyze(args) => cmd_analyze(args),
            Command::Register(args) => cmd_register(args),
            Command::Benchmark(args) => cmd_benchmark(args),
        }
    }
}

fn parse_pyramid(s: &str) -> std::result::Result<PyramidMode, String> {
    match s {
        "auto" => Ok(PyramidMode::Auto),
        "off" => Ok(PyramidMode::Off),
        other => match other.parse::<usize>() {
            Ok(0) => Err("pyramid level count must be at least 1".into()),
            Ok(n) => Ok(PyramidMode::Levels(n)),
            Err(_) => Err(format!("expected auto, off, or a level count, got {other:?}")),
        },
    }
}

/// Flags shared by the commands that run the registration solver.
#[derive(Debug, Args)]
struct EccFlags {
    /// Geometric motion model.
    #[arg(long, value_enum, default_value_t = MotionModel::Affine)]
    model: MotionModel,
    /// Iteration cap per pyramid level.
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Stop once the correlation increment drops below this.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Gaussian sigma for gradient pre-smoothing.
    #[arg(long, default_value_t = 1.0)]
    smooth_sigma: f64,
    /// Coarse-to-fine schedule: auto, off, or a level count.
    #[arg(long, value_parser = parse_pyramid, default_value = "auto")]
    pyramid: PyramidMode,
}

impl EccFlags {
    fn to_config(&self) -> EccConfig {
        EccConfig {
            model: self.model,
            max_iters: self.max_iters,
            eps: self.eps,
            smooth_sigma: self.smooth_sigma,
            pyramid: self.pyramid,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Degraded input image.
    low: PathBuf,
    /// Reference image.
    gt: PathBuf,
    /// Matrix family to fit.
    #[arg(long, value_enum, default_value_t = Family::Affine12)]
    family: Family,
    /// Where to write the matrix JSON.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let low = load_image(&args.low)?;
    let gt = load_image(&args.gt)?;
    let fit = fit_anchor_full(&low, &gt, args.family)?;
    let residual = fit_residual(&fit.matrix, &low, &gt)?;
    let diag = diagnostics(&fit.matrix, &low)?;
    write_text(&args.out, &(to_json_string(&fit.matrix)? + "\n"))?;
    println!("family: {}", args.family.name());
    println!("fit_residual: {}", fmt_f64(residual));
    println!("gram_condition: {}", fmt_f64(fit.gram_condition));
    println!("min_norm: {}", fit.min_norm);
    println!("diag_mean: {}", fmt_f64(diag.diag_mean));
    println!("offdiag_mean: {}", fmt_f64(diag.offdiag_mean));
    println!("bias_mean: {}", fmt_f64(diag.bias_mean));
    println!("diagonal_dominant: {}", diag.diagonal_dominant);
    println!("input_mean_luma: {}", fmt_f64(diag.input_mean_luma));
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
struct ApplyArgs {
    /// Image to transform.
    low: PathBuf,
    /// Matrix JSON produced by `fit`.
    matrix: PathBuf,
    /// Output image path (.png, .jpg).
    #[arg(long)]
    out: PathBuf,
    /// Clamp to [0, 1] before export. 8-bit export clamps regardless; the
    /// flag only makes the clamp explicit in the pipeline.
    #[arg(long)]
    clamp: bool,
}

fn cmd_apply(args: ApplyArgs) -> Result<()> {
    let low = load_image(&args.low)?;
    let matrix: AnchorMatrix = serde_json::from_str(&std::fs::read_to_string(&args.matrix)?)?;
    let mut aligned = apply_anchor(&matrix, &low)?;
    let out_of_range = aligned.count_out_of_range();
    if out_of_range > 0 {
        eprintln!(
            "warning: {out_of_range} of {} samples fall outside [0, 1] and will be clipped",
            aligned.data().len()
        );
    }
    if args.clamp {
        aligned = aligned.clamp01();
    }
    save_image(&aligned, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Degraded input image.
    low: PathBuf,
    /// Reference image.
    gt: PathBuf,
    /// Where to write the analysis JSON.
    #[arg(long)]
    out: PathBuf,
    /// Histogram bin count for Y residuals.
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    bins: usize,
}

#[derive(Serialize)]
struct AnalyzeReport {
    color_convention: String,
    psnr_convention: String,
    texture_convention: String,
    matrix: AnchorMatrix,
    fit_residual: f64,
    #[serde(serialize_with = "ser_inf_aware")]
    gram_condition: f64,
    min_norm: bool,
    pre_score: PairScore,
    post_score: PairScore,
    pre_energy: EnergyReport,
    post_energy: EnergyReport,
    #[serde(serialize_with = "ser_inf_aware")]
    luminance_error_ratio: f64,
    pre_histogram: ResidualHistogram,
    post_histogram: ResidualHistogram,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let low = load_image(&args.low)?;
    let gt = load_image(&args.gt)?;
    let fit = fit_anchor_full(&low, &gt, Family::Affine12).map_err(|e| {
        if matches!(e, Error::DegenerateFit { .. }) {
            eprintln!("hint: the full affine fit is degenerate on this pair; `fit --family scalar` or diag_bias may still be solvable");
        }
        e
    })?;
    let aligned = apply_anchor(&fit.matrix, &low)?;
    let report = AnalyzeReport {
        color_convention: "bt601_full_range".into(),
        psnr_convention: "rgb_peak_1_clamped".into(),
        texture_convention: "laplacian_of_grayscale_unit_range".into(),
        fit_residual: fit_residual(&fit.matrix, &low, &gt)?,
        gram_condition: fit.gram_condition,
        min_norm: fit.min_norm,
        pre_score: pair_score(&low, &gt)?,
        post_score: pair_score(&aligned, &gt)?,
        pre_energy: decompose_energy(&low, &gt)?,
        post_energy: decompose_energy(&aligned, &gt)?,
        luminance_error_ratio: luminance_error_ratio(&low, &aligned, &gt)?,
        pre_histogram: residual_histogram(
            &low,
            &gt,
            ChannelSelector::Y,
            args.bins,
            DEFAULT_HISTOGRAM_RANGE,
        )?,
        post_histogram: residual_histogram(
            &aligned,
            &gt,
            ChannelSelector::Y,
            args.bins,
            DEFAULT_HISTOGRAM_RANGE,
        )?,
        matrix: fit.matrix,
    };
    write_text(&args.out, &(to_json_string(&report)? + "\n"))?;
    println!("pre_f_lum: {}", fmt_f64(report.pre_energy.f_lum));
    println!("post_f_lum: {}", fmt_f64(report.post_energy.f_lum));
    println!("luminance_error_ratio: {}", fmt_f64(report.luminance_error_ratio));
    println!("pre_psnr_db: {}", fmt_f64(report.pre_score.psnr_db));
    println!("post_psnr_db: {}", fmt_f64(report.post_score.psnr_db));
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
struct RegisterArgs {
    /// Image to align (moving side).
    low: PathBuf,
    /// Reference image (fixed side).
    gt: PathBuf,
    /// Directory for the registered pair and sidecar JSON.
    #[arg(long)]
    out_dir: PathBuf,
    /// Pixels shaved from each side of the shared valid region.
    #[arg(long, default_value_t = 4)]
    margin: usize,
    #[command(flatten)]
    ecc: EccFlags,
}

#[derive(Serialize)]
struct RegistrationSidecar {
    model: String,
    #[serde(flatten)]
    warp: GeoWarp,
    final_ecc: f64,
    iterations: usize,
    converged: bool,
    crop: CropRect,
}

fn cmd_register(args: RegisterArgs) -> Result<()> {
    let low = load_image(&args.low)?;
    let gt = load_image(&args.gt)?;
    let pair = register_pair_with(&low, &gt, args.margin, &args.ecc.to_config())?;
    std::fs::create_dir_all(&args.out_dir)?;
    save_image(&pair.low, args.out_dir.join("low_registered.png"))?;
    save_image(&pair.gt, args.out_dir.join("gt_registered.png"))?;
    let sidecar = RegistrationSidecar {
        model: args.ecc.model.name().into(),
        warp: pair.result.warp,
        final_ecc: pair.result.final_ecc,
        iterations: pair.result.iterations,
        converged: pair.result.converged,
        crop: pair.crop,
    };
    write_text(&args.out_dir.join("registration.json"), &(to_json_string(&sidecar)? + "\n"))?;
    println!("final_ecc: {}", fmt_f64(pair.result.final_ecc));
    println!("iterations: {}", pair.result.iterations);
    println!(
        "crop: row0={} col0={} rows={} cols={}",
        pair.crop.row0, pair.crop.col0, pair.crop.rows, pair.crop.cols
    );
    println!("wrote {}", args.out_dir.display());
    if !pair.result.converged {
        return Err(Error::DegenerateInput(
            "registration did not converge; best-seen warp written and flagged".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Dataset root containing low/ and high/ subdirectories.
    dataset_dir: PathBuf,
    /// Where to write the report JSON; the CSV lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Explicit CSV path (default: the JSON path with a .csv extension).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Manifest CSV (id,low,gt) overriding directory discovery.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Matrix families to evaluate.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = vec![Family::Scalar, Family::DiagBias, Family::Linear9, Family::Affine12])]
    families: Vec<Family>,
    /// Geometrically align each pair before scoring.
    #[arg(long)]
    register: bool,
    /// Crop margin used when --register is active.
    #[arg(long, default_value_t = 4)]
    margin: usize,
    /// Luminance-update amplitude bound, echoed in the report config.
    #[arg(long, default_value_t = 0.1)]
    gamma_l: f64,
    /// Worker threads (0 = machine default). The report bytes do not
    /// depend on this.
    #[arg(long, env = "GEA_THREADS", default_value_t = 0)]
    threads: usize,
    /// Histogram bin count for Y residuals.
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    bins: usize,
    /// Seed recorded in the config when the dataset is synthetic.
    #[arg(long)]
    dataset_seed: Option<u64>,
    #[command(flatten)]
    ecc: EccFlags,
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let records = match &args.manifest {
        Some(path) => read_manifest(path)?,
        None => discover_pairs(&args.dataset_dir)?,
    };
    let options = BenchmarkOptions {
        families: args.families.clone(),
        register: args.register,
        margin: args.margin,
        gamma_l: args.gamma_l,
        threads: args.threads,
        histogram_bins: args.bins,
        histogram_range: DEFAULT_HISTOGRAM_RANGE,
        ecc: args.ecc.to_config(),
        dataset_seed: args.dataset_seed,
    };
    let report = run_benchmark(&records, &options)?;
    for skipped in &report.skipped {
        eprintln!("warning: skipped pair {}: {}", skipped.id, skipped.reason);
    }
    write_text(&args.out, &(to_json_string(&report)? + "\n"))?;
    let csv_path = args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    write_text(&csv_path, &benchmark_csv(&report)?)?;
    println!(
        "pairs: {} scored, {} skipped, {} discovered",
        report.rows.len(),
        report.skipped.len(),
        report.discovered
    );
    println!("pre_psnr_db_mean: {}", fmt_f64(report.aggregates.pre["psnr_db"].mean.0));
    for (family, columns) in &report.aggregates.families {
        println!("{family}_psnr_db_mean: {}", fmt_f64(columns["psnr_db"].mean.0));
    }
    println!("wrote {}", args.out.display());
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn write_text(path: &std::path::Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pyramid_parser_accepts_the_three_forms() {
        assert_eq!(parse_pyramid("auto").unwrap(), PyramidMode::Auto);
        assert_eq!(parse_pyramid("off").unwrap(), PyramidMode::Off);
        assert_eq!(parse_pyramid("4").unwrap(), PyramidMode::Levels(4));
        assert!(parse_pyramid("0").is_err());
        assert!(parse_pyramid("fast").is_err());
    }

    #[test]
    fn cli_definition_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
