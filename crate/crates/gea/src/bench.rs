//! Batch evaluation over image-pair datasets: discovery, per-pair fitting
//! and scoring across matrix families, and a byte-reproducible report.
//!
//! Pairs are processed in parallel but assembled in id order, so the output
//! is independent of thread count and scheduling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{
    apply_anchor, diagnostics, fit_anchor_full, fit_residual, AnchorMatrix, Family,
    MatrixDiagnostics,
};
use crate::energy::{
    accumulate_residuals, decompose_energy, luminance_error_ratio, ChannelSelector, EnergyReport,
    HistogramAccumulator, ResidualHistogram, DEFAULT_HISTOGRAM_BINS, DEFAULT_HISTOGRAM_RANGE,
};
use crate::error::{Error, Result};
use crate::io::load_image;
use crate::metrics::{pair_score, PairScore};
use crate::register::{register_pair_with, CropRect, EccConfig, GeoWarp};
use crate::report::{de_inf_aware, mean, median, ser_inf_aware, Stat};

/// One dataset entry: a degraded image and its reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub id: String,
    pub low_path: PathBuf,
    pub gt_path: PathBuf,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Scans `<dir>/low/*` for images and pairs each with `<dir>/high/<stem>.*`,
/// returning records sorted by id (the file stem).
pub fn discover_pairs(dir: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let dir = dir.as_ref();
    let low_dir = dir.join("low");
    let high_dir = dir.join("high");
    if !low_dir.is_dir() || !high_dir.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset at {} needs low/ and high/ subdirectories",
            dir.display()
        )));
    }
    let mut records = Vec::new();
    let mut entries: Vec<PathBuf> =
        std::fs::read_dir(&low_dir)?.map(|e| Ok(e?.path())).collect::<Result<_>>()?;
    entries.sort();
    for low_path in entries {
        let ext = low_path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        if !IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            continue;
        }
        let stem = match low_path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s.to_string(),
            None => continue,
        };
        let gt_path = IMAGE_EXTENSIONS
            .iter()
            .map(|e| high_dir.join(format!("{stem}.{e}")))
            .find(|p| p.is_file());
        if let Some(gt_path) = gt_path {
            records.push(PairRecord { id: stem, low_path, gt_path });
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

/// Reads an `id,low,gt` manifest CSV; relative paths are resolved against
/// the manifest's directory. Records come back sorted by id.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["id", "low", "gt"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Dataset(format!(
            "manifest header must be id,low,gt, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let resolve = |s: &str| -> PathBuf {
        let p = PathBuf::from(s);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != 3 {
            return Err(Error::Dataset(format!("manifest row has {} fields, want 3", row.len())));
        }
        records.push(PairRecord {
            id: row[0].to_string(),
            low_path: resolve(&row[1]),
            gt_path: resolve(&row[2]),
        });
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

/// Everything a benchmark run can be told; [`Default`] mirrors the CLI.
#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub families: Vec<Family>,
    pub register: bool,
    pub margin: usize,
    pub gamma_l: f64,
    /// Worker threads; 0 picks the machine default. Not echoed in the
    /// report, which is identical for every value.
    pub threads: usize,
    pub histogram_bins: usize,
    pub histogram_range: (f64, f64),
    pub ecc: EccConfig,
    /// Provenance marker for synthetic datasets, echoed verbatim.
    pub dataset_seed: Option<u64>,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            families: Family::ALL.to_vec(),
            register: false,
            margin: 4,
            gamma_l: 0.1,
            threads: 0,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            histogram_range: DEFAULT_HISTOGRAM_RANGE,
            ecc: EccConfig::default(),
            dataset_seed: None,
        }
    }
}

/// Resolved run parameters echoed at the top of every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// YUV analysis matrix used throughout.
    pub color_convention: String,
    /// PSNR is computed on RGB with peak 1.0 after clamping.
    pub psnr_convention: String,
    /// Texture energy input: grayscale in [0, 1] (not 0..255).
    pub texture_convention: String,
    pub families: Vec<String>,
    pub register: bool,
    pub margin: usize,
    pub gamma_l: f64,
    pub histogram_bins: usize,
    pub histogram_range: (f64, f64),
    pub ecc: EccConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset_seed: Option<u64>,
}

/// Registration telemetry attached to a row when `--register` is active.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistrationInfo {
    pub warp: GeoWarp,
    pub final_ecc: f64,
    pub iterations: usize,
    pub converged: bool,
    pub crop: CropRect,
}

/// Per-family results for one pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyOutcome {
    pub matrix: AnchorMatrix,
    /// Mean squared residual of `matrix` on the raw pair.
    pub fit_residual: f64,
    #[serde(serialize_with = "ser_inf_aware", deserialize_with = "de_inf_aware")]
    pub gram_condition: f64,
    pub min_norm: bool,
    /// True when the least-squares fit lost to the identity matrix on
    /// clamped PSNR (near-identical pairs) and the identity was used.
    pub fallback_identity: bool,
    pub score: PairScore,
    pub post_energy: EnergyReport,
    #[serde(serialize_with = "ser_inf_aware", deserialize_with = "de_inf_aware")]
    pub luminance_error_ratio: f64,
    pub diagnostics: MatrixDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub registration: Option<RegistrationInfo>,
    pub pre_score: PairScore,
    pub pre_energy: EnergyReport,
    /// Keyed by family name, alphabetical.
    pub families: BTreeMap<String, FamilyOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedPair {
    pub id: String,
    pub reason: String,
}

/// Mean and median of one column over all rows, in id order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Stat,
    pub median: Stat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkAggregates {
    pub pairs: usize,
    /// Pre-anchor column name -> stats.
    pub pre: BTreeMap<String, ColumnStats>,
    /// Family name -> column name -> stats.
    pub families: BTreeMap<String, BTreeMap<String, ColumnStats>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkHistograms {
    /// Y residuals of the scored input against the reference, all pairs.
    pub pre: ResidualHistogram,
    /// Family whose anchored output feeds the post histogram (the highest
    /// parameter count among the requested families).
    pub post_family: String,
    pub post: ResidualHistogram,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub discovered: usize,
    pub skipped: Vec<SkippedPair>,
    pub rows: Vec<BenchmarkRow>,
    pub aggregates: BenchmarkAggregates,
    pub histograms: BenchmarkHistograms,
}

/// Runs every requested family over every pair and assembles the report.
///
/// Unreadable or degenerate pairs are skipped and counted; zero usable pairs
/// is an error. Rows are sorted by id and the report bytes are independent
/// of `threads`.
pub fn run_benchmark(records: &[PairRecord], opts: &BenchmarkOptions) -> Result<BenchmarkReport> {
    if records.is_empty() {
        return Err(Error::Dataset("no pairs to benchmark".into()));
    }
    if opts.families.is_empty() {
        return Err(Error::invalid("at least one family must be requested"));
    }
    if opts.histogram_bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let (lo, hi) = opts.histogram_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid("histogram range must be finite with lo < hi"));
    }
    if !opts.gamma_l.is_finite() || opts.gamma_l < 0.0 {
        return Err(Error::invalid("gamma_l must be finite and non-negative"));
    }

    let mut families = opts.families.clone();
    families.sort_by_key(|f| f.dof());
    families.dedup();
    let post_family = *families.last().expect("nonempty checked above");

    let mut sorted: Vec<&PairRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in sorted.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(Error::Dataset(format!("duplicate pair id {:?}", pair[0].id)));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<std::result::Result<PairOutcome, SkippedPair>> = pool.install(|| {
        sorted
            .par_iter()
            .map(|record| process_pair(record, opts, &families, post_family))
            .collect()
    });

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut pre_acc = HistogramAccumulator::new(opts.histogram_bins, lo, hi);
    let mut post_acc = HistogramAccumulator::new(opts.histogram_bins, lo, hi);
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                pre_acc.merge(&o.pre_hist);
                post_acc.merge(&o.post_hist);
                rows.push(o.row);
            }
            Err(s) => skipped.push(s),
        }
    }
    if rows.is_empty() {
        return Err(Error::Dataset(format!(
            "no usable pairs ({} skipped; first: {})",
            skipped.len(),
            skipped.first().map(|s| s.reason.as_str()).unwrap_or("-")
        )));
    }

    // Identity is a member of every family, so the optimal anchored output
    // can never score below the input; violations mean a solver bug.
    for row in &rows {
        for (name, outcome) in &row.families {
            assert!(
                outcome.score.psnr_db >= row.pre_score.psnr_db,
                "pair {}: post-anchor psnr {} fell below pre {} for {}",
                row.id,
                outcome.score.psnr_db,
                row.pre_score.psnr_db,
                name
            );
        }
    }

    let aggregates = compute_aggregates(&rows);
    let config = BenchmarkConfig {
        color_convention: "bt601_full_range".into(),
        psnr_convention: "rgb_peak_1_clamped".into(),
        texture_convention: "laplacian_of_grayscale_unit_range".into(),
        families: families.iter().map(|f| f.name().to_string()).collect(),
        register: opts.register,
        margin: opts.margin,
        gamma_l: opts.gamma_l,
        histogram_bins: opts.histogram_bins,
        histogram_range: opts.histogram_range,
        ecc: opts.ecc,
        dataset_seed: opts.dataset_seed,
    };
    Ok(BenchmarkReport {
        config,
        discovered: sorted.len(),
        skipped,
        rows,
        aggregates,
        histograms: BenchmarkHistograms {
            pre: pre_acc.finalize(ChannelSelector::Y),
            post_family: post_family.name().to_string(),
            post: post_acc.finalize(ChannelSelector::Y),
        },
    })
}

struct PairOutcome {
    row: BenchmarkRow,
    pre_hist: HistogramAccumulator,
    post_hist: HistogramAccumulator,
}

fn process_pair(
    record: &PairRecord,
    opts: &BenchmarkOptions,
    families: &[Family],
    post_family: Family,
) -> std::result::Result<PairOutcome, SkippedPair> {
    let skip = |reason: String| SkippedPair { id: record.id.clone(), reason };
    let inner = || -> Result<PairOutcome> {
        let mut low = load_image(&record.low_path)?;
        let mut gt = load_image(&record.gt_path)?;
        if !low.same_dims(&gt) {
            return Err(Error::Dataset(format!(
                "dimensions differ: {}x{}x{} vs {}x{}x{}",
                low.height(),
                low.width(),
                low.channels(),
                gt.height(),
                gt.width(),
                gt.channels()
            )));
        }
        if low.channels() != 3 {
            return Err(Error::Dataset("pairs must be 3-channel".into()));
        }
        let registration = if opts.register {
            let pair = register_pair_with(&low, &gt, opts.margin, &opts.ecc)?;
            let info = RegistrationInfo {
                warp: pair.result.warp,
                final_ecc: pair.result.final_ecc,
                iterations: pair.result.iterations,
                converged: pair.result.converged,
                crop: pair.crop,
            };
            low = pair.low;
            gt = pair.gt;
            Some(info)
        } else {
            None
        };

        let pre_score = pair_score(&low, &gt)?;
        let pre_energy = decompose_energy(&low, &gt)?;
        let (lo, hi) = opts.histogram_range;
        let mut pre_hist = HistogramAccumulator::new(opts.histogram_bins, lo, hi);
        accumulate_residuals(&low, &gt, ChannelSelector::Y, &mut pre_hist)?;
        let mut post_hist = HistogramAccumulator::new(opts.histogram_bins, lo, hi);

        let mut outcomes = BTreeMap::new();
        for &family in families {
            let fit = fit_anchor_full(&low, &gt, family)?;
            let mut matrix = fit.matrix;
            let mut fallback_identity = false;
            let mut aligned = apply_anchor(&matrix, &low)?;
            let mut score = pair_score(&aligned, &gt)?;
            if score.psnr_db < pre_score.psnr_db {
                // Possible only within rounding error of a tie; identity
                // reproduces the input bit-exactly, restoring post >= pre.
                matrix = AnchorMatrix::identity(family);
                fallback_identity = true;
                aligned = apply_anchor(&matrix, &low)?;
                score = pair_score(&aligned, &gt)?;
            }
            let outcome = FamilyOutcome {
                fit_residual: fit_residual(&matrix, &low, &gt)?,
                gram_condition: fit.gram_condition,
                min_norm: fit.min_norm,
                fallback_identity,
                score,
                post_energy: decompose_energy(&aligned, &gt)?,
                luminance_error_ratio: luminance_error_ratio(&low, &aligned, &gt)?,
                diagnostics: diagnostics(&matrix, &low)?,
                matrix,
            };
            if family == post_family {
                accumulate_residuals(&aligned, &gt, ChannelSelector::Y, &mut post_hist)?;
            }
            outcomes.insert(family.name().to_string(), outcome);
        }
        Ok(PairOutcome {
            row: BenchmarkRow {
                id: record.id.clone(),
                registration,
                pre_score,
                pre_energy,
                families: outcomes,
            },
            pre_hist,
            post_hist,
        })
    };
    inner().map_err(|e| skip(e.to_string()))
}

const PRE_COLUMNS: [&str; 10] = [
    "psnr_db", "ssim", "l_rec", "l_color", "e_lum", "e_chr", "e_tex", "f_lum", "f_chr", "f_tex",
];
const FAMILY_COLUMNS: [&str; 12] = [
    "fit_residual",
    "psnr_db",
    "ssim",
    "l_rec",
    "l_color",
    "luminance_error_ratio",
    "e_lum",
    "e_chr",
    "e_tex",
    "f_lum",
    "f_chr",
    "f_tex",
];

fn pre_column(row: &BenchmarkRow, column: &str) -> f64 {
    match column {
        "psnr_db" => row.pre_score.psnr_db,
        "ssim" => row.pre_score.ssim,
        "l_rec" => row.pre_score.l_rec,
        "l_color" => row.pre_score.l_color,
        "e_lum" => row.pre_energy.e_lum,
        "e_chr" => row.pre_energy.e_chr,
        "e_tex" => row.pre_energy.e_tex,
        "f_lum" => row.pre_energy.f_lum,
        "f_chr" => row.pre_energy.f_chr,
        "f_tex" => row.pre_energy.f_tex,
        other => unreachable!("unknown pre column {other}"),
    }
}

fn family_column(outcome: &FamilyOutcome, column: &str) -> f64 {
    match column {
        "fit_residual" => outcome.fit_residual,
        "psnr_db" => outcome.score.psnr_db,
        "ssim" => outcome.score.ssim,
        "l_rec" => outcome.score.l_rec,
        "l_color" => outcome.score.l_color,
        "luminance_error_ratio" => outcome.luminance_error_ratio,
        "e_lum" => outcome.post_energy.e_lum,
        "e_chr" => outcome.post_energy.e_chr,
        "e_tex" => outcome.post_energy.e_tex,
        "f_lum" => outcome.post_energy.f_lum,
        "f_chr" => outcome.post_energy.f_chr,
        "f_tex" => outcome.post_energy.f_tex,
        other => unreachable!("unknown family column {other}"),
    }
}

fn stats_of(values: &[f64]) -> ColumnStats {
    ColumnStats { mean: Stat(mean(values)), median: Stat(median(values)) }
}

fn compute_aggregates(rows: &[BenchmarkRow]) -> BenchmarkAggregates {
    let mut pre = BTreeMap::new();
    for column in PRE_COLUMNS {
        let values: Vec<f64> = rows.iter().map(|r| pre_column(r, column)).collect();
        pre.insert(column.to_string(), stats_of(&values));
    }
    let mut families: BTreeMap<String, BTreeMap<String, ColumnStats>> = BTreeMap::new();
    if let Some(first) = rows.first() {
        for name in first.families.keys() {
            let mut columns = BTreeMap::new();
            for column in FAMILY_COLUMNS {
                let values: Vec<f64> =
                    rows.iter().map(|r| family_column(&r.families[name], column)).collect();
                columns.insert(column.to_string(), stats_of(&values));
            }
            families.insert(name.clone(), columns);
        }
    }
    BenchmarkAggregates { pairs: rows.len(), pre, families }
}

/// Flat per-pair CSV view of a report: one row per pair, pre columns first,
/// then every family's columns prefixed with the family name.
pub fn benchmark_csv(report: &BenchmarkReport) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let family_names: Vec<&String> =
        report.rows.first().map(|r| r.families.keys().collect()).unwrap_or_default();
    let mut header = vec!["id".to_string()];
    header.extend(PRE_COLUMNS.iter().map(|c| format!("pre_{c}")));
    for name in &family_names {
        header.extend(FAMILY_COLUMNS.iter().map(|c| format!("{name}_{c}")));
    }
    writer.write_record(&header)?;
    for row in &report.rows {
        let mut record = vec![row.id.clone()];
        record.extend(PRE_COLUMNS.iter().map(|c| crate::report::fmt_f64(pre_column(row, c))));
        for name in &family_names {
            let outcome = &row.families[*name];
            record
                .extend(FAMILY_COLUMNS.iter().map(|c| crate::report::fmt_f64(family_column(outcome, c))));
        }
        writer.write_record(&record)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Dataset(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Dataset(format!("csv encoding: {e}")))
}
