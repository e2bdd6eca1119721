//! Executes resolved run plans and writes their data products.
//!
//! Four run modes share one output convention. `predict` and `simulate` emit a
//! long-format results table with columns `(scan_value, quantity, value)`;
//! `g2` emits a delay histogram plus a small estimates file; `throughput` emits
//! the closed-form rate budget. Every run also writes `manifest.json`, which
//! embeds the resolved config text and its hash so the run can be reproduced
//! from the manifest alone.
//!
//! Predictions are per-event conditional probabilities: they marginalize the
//! source mixture (entangled against background, interfering against
//! distinguishable) at unit detection efficiency, so a lossless simulation of
//! the same config converges on them. Simulated counts include loss, darks,
//! jitter, and dead time, and are reported raw and accidental-subtracted.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{
    Manifest, OutputFormat, Resolved, RunMode, SimPlan, ThroughputPlan,
};
use crate::montecarlo::coincidence::{
    accidental_estimate, find_coincidences, g2_histogram, relative_delay_estimate, Histogram,
    TagStream,
};
use crate::montecarlo::experiment::{ideal_variant, outcome_table, variant_mixture, McError};
use crate::montecarlo::scan::{apply_axis, point_tag_streams};
use crate::netmodel::{rate_budget, NetError, RateBudget};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One line of the long-format results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub scan_value: f64,
    pub quantity: String,
    pub value: f64,
}

/// Counts for one coincidence pattern at one scan point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatternCounts {
    pub name: String,
    pub raw: u64,
    /// Shifted-window estimate on the same streams; subtraction is the caller's.
    pub accidentals: u64,
}

/// One simulated scan point: the counted patterns plus the underlying tags.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub scan_value: f64,
    pub counts: Vec<PatternCounts>,
    /// Raw per-detector tag streams, before channel offsets.
    pub streams: Vec<TagStream>,
}

/// Simulates every scan point and counts the configured coincidence patterns.
/// Channel offsets apply during counting only; the returned streams stay raw.
pub fn scan(sim: &SimPlan, seed: u64) -> Result<Vec<ScanPoint>, RunnerError> {
    let mut out = Vec::with_capacity(sim.points.len());
    for (index, value) in sim.points.iter().enumerate() {
        let streams = point_tag_streams(
            &sim.plan,
            sim.axis.as_ref(),
            *value,
            seed,
            index as u32,
            sim.duration_s,
        )?;
        let adjusted: Vec<TagStream> = streams
            .iter()
            .zip(&sim.channel_offsets_ps)
            .map(|(stream, offset)| stream.shifted(*offset))
            .collect();
        let counts = sim
            .patterns
            .iter()
            .map(|pattern| {
                let refs: Vec<&TagStream> =
                    pattern.channels.iter().map(|&ch| &adjusted[ch]).collect();
                PatternCounts {
                    name: pattern.name.clone(),
                    raw: find_coincidences(&refs, sim.window_ps),
                    accidentals: accidental_estimate(
                        &refs,
                        sim.window_ps,
                        sim.accidental_offset_ps,
                    ),
                }
            })
            .collect();
        out.push(ScanPoint { scan_value: *value, counts, streams });
    }
    Ok(out)
}

/// Results table for a simulate run: `<name>_raw`, `<name>_accidentals`, and
/// `<name>_subtracted` per pattern per point. Projection scans report the
/// sixteen patterns of their single point against the pattern index.
pub fn simulate_rows(points: &[ScanPoint], projection: bool) -> Vec<ScanRow> {
    let mut rows = Vec::new();
    for point in points {
        for (pattern_index, counts) in point.counts.iter().enumerate() {
            let scan_value = if projection { pattern_index as f64 } else { point.scan_value };
            rows.push(ScanRow {
                scan_value,
                quantity: format!("{}_raw", counts.name),
                value: counts.raw as f64,
            });
            rows.push(ScanRow {
                scan_value,
                quantity: format!("{}_accidentals", counts.name),
                value: counts.accidentals as f64,
            });
            rows.push(ScanRow {
                scan_value,
                quantity: format!("{}_subtracted", counts.name),
                value: counts.raw as f64 - counts.accidentals as f64,
            });
        }
    }
    rows
}

/// Analytic results table: `p_<name>` marginalizes the source mixture and
/// `p_<name>_ideal` is the pure interfering entangled term.
pub fn predict_rows(sim: &SimPlan, label_by_index: bool) -> Result<Vec<ScanRow>, RunnerError> {
    let mixture = variant_mixture(&sim.plan.source, &sim.plan.preparation);
    let ideal = ideal_variant(&sim.plan.preparation);
    let mut rows = Vec::new();
    for value in &sim.points {
        let circuit = match &sim.axis {
            Some(axis) => apply_axis(&sim.plan.circuit, axis, *value)?,
            None => sim.plan.circuit.clone(),
        };
        let mut tables = Vec::with_capacity(mixture.len());
        for (variant, weight) in &mixture {
            tables.push((*weight, outcome_table(&sim.plan, &circuit, variant)?));
        }
        let ideal_table = outcome_table(&sim.plan, &circuit, &ideal)?;
        for (pattern_index, pattern) in sim.patterns.iter().enumerate() {
            let scan_value = if label_by_index { pattern_index as f64 } else { *value };
            let p: f64 = tables
                .iter()
                .map(|(w, table)| w * table.channel_coincidence_probability(&pattern.channels))
                .sum();
            let p_ideal = ideal_table.channel_coincidence_probability(&pattern.channels);
            rows.push(ScanRow {
                scan_value,
                quantity: format!("p_{}", pattern.name),
                value: p,
            });
            rows.push(ScanRow {
                scan_value,
                quantity: format!("p_{}_ideal", pattern.name),
                value: p_ideal,
            });
        }
    }
    Ok(rows)
}

/// Summary statistics attached to a g2 histogram.
#[derive(Debug, Clone, Serialize)]
pub struct G2Estimates {
    /// Argmax bin center; the measured relative channel delay.
    pub relative_delay_ps: Option<f64>,
    pub fwhm_ps: Option<f64>,
    pub total_counts: u64,
}

/// Cross-correlates the two configured detectors. Delays under measurement stay
/// visible: channel offsets are deliberately not applied here.
pub fn g2_run(sim: &SimPlan, seed: u64) -> Result<(Histogram, G2Estimates, Vec<TagStream>), RunnerError> {
    let range_ps = sim
        .histogram_range_ps
        .expect("config resolution guarantees a histogram range for g2 runs");
    let streams = point_tag_streams(
        &sim.plan,
        sim.axis.as_ref(),
        sim.points[0],
        seed,
        0,
        sim.duration_s,
    )?;
    let hist = g2_histogram(&streams[0], &streams[1], range_ps, sim.histogram_bin_ps);
    let estimates = G2Estimates {
        relative_delay_ps: relative_delay_estimate(&hist),
        fwhm_ps: hist.fwhm_ps(),
        total_counts: hist.counts.iter().sum(),
    };
    Ok((hist, estimates, streams))
}

pub fn throughput_budget(plan: &ThroughputPlan) -> Result<RateBudget, RunnerError> {
    Ok(rate_budget(&plan.inputs())?)
}

/// Runs a resolved config and writes its data products into `out_dir`.
/// Returns the files written. Outputs are byte-identical for any worker count.
pub fn execute(
    resolved: &Resolved,
    config_toml: &str,
    out_dir: &Path,
    export_tags: bool,
) -> Result<Vec<PathBuf>, RunnerError> {
    fs::create_dir_all(out_dir).map_err(|source| RunnerError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();

    match resolved.mode {
        RunMode::Predict => {
            let sim = resolved.sim.as_ref().expect("predict runs resolve a sim plan");
            let rows =
                with_pool(resolved.workers, || predict_rows(sim, sim.is_projection_scan()))?;
            files.push(write_rows(out_dir, "results", resolved.format, &rows)?);
        }
        RunMode::Simulate => {
            let sim = resolved.sim.as_ref().expect("simulate runs resolve a sim plan");
            let points = with_pool(resolved.workers, || scan(sim, resolved.seed))?;
            let rows = simulate_rows(&points, sim.is_projection_scan());
            files.push(write_rows(out_dir, "results", resolved.format, &rows)?);
            if export_tags {
                files.extend(write_tag_files(out_dir, &points)?);
            }
        }
        RunMode::G2 => {
            let sim = resolved.sim.as_ref().expect("g2 runs resolve a sim plan");
            let (hist, estimates, streams) =
                with_pool(resolved.workers, || g2_run(sim, resolved.seed))?;
            files.push(write_histogram(out_dir, "g2", resolved.format, &hist)?);
            files.push(write_json(out_dir, "estimates.json", &estimates)?);
            if export_tags {
                let point = ScanPoint { scan_value: 0.0, counts: Vec::new(), streams };
                files.extend(write_tag_files(out_dir, std::slice::from_ref(&point))?);
            }
        }
        RunMode::Throughput => {
            let plan = resolved
                .throughput
                .as_ref()
                .expect("throughput runs resolve a budget plan");
            let budget = throughput_budget(plan)?;
            files.push(write_json(out_dir, "budget.json", &budget)?);
            files.push(write_text(out_dir, "budget.csv", &budget_csv(&budget))?);
        }
    }

    let manifest = Manifest::new(resolved, config_toml.to_string());
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .expect("manifest serialization cannot fail") + "\n";
    files.push(write_text(out_dir, "manifest.json", &manifest_json)?);
    Ok(files)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool construction cannot fail for a positive thread count")
        .install(f)
}

fn write_rows(
    out_dir: &Path,
    stem: &str,
    format: OutputFormat,
    rows: &[ScanRow],
) -> Result<PathBuf, RunnerError> {
    match format {
        OutputFormat::Csv => {
            let mut text = String::from("scan_value,quantity,value\n");
            for row in rows {
                let _ = writeln!(text, "{},{},{}", row.scan_value, row.quantity, row.value);
            }
            write_text(out_dir, &format!("{stem}.csv"), &text)
        }
        OutputFormat::Json => write_json(out_dir, &format!("{stem}.json"), &rows),
    }
}

fn write_histogram(
    out_dir: &Path,
    stem: &str,
    format: OutputFormat,
    hist: &Histogram,
) -> Result<PathBuf, RunnerError> {
    match format {
        OutputFormat::Csv => {
            let mut text = String::from("bin_center_ps,count\n");
            for (center, count) in hist.rows() {
                let _ = writeln!(text, "{center},{count}");
            }
            write_text(out_dir, &format!("{stem}.csv"), &text)
        }
        OutputFormat::Json => write_json(out_dir, &format!("{stem}.json"), hist),
    }
}

/// Tag export: one file per scan point, merged across detectors in time order,
/// header `detector_id,time_ps`.
fn write_tag_files(out_dir: &Path, points: &[ScanPoint]) -> Result<Vec<PathBuf>, RunnerError> {
    let mut files = Vec::new();
    for (index, point) in points.iter().enumerate() {
        let mut merged: Vec<(i64, &str)> = Vec::new();
        for stream in &point.streams {
            merged.extend(stream.times_ps.iter().map(|&t| (t, stream.detector_id.as_str())));
        }
        merged.sort();
        let mut text = String::from("detector_id,time_ps\n");
        for (time_ps, detector_id) in merged {
            let _ = writeln!(text, "{detector_id},{time_ps}");
        }
        let name = if points.len() == 1 {
            "tags.csv".to_string()
        } else {
            format!("tags_point{index:02}.csv")
        };
        files.push(write_text(out_dir, &name, &text)?);
    }
    Ok(files)
}

fn budget_csv(budget: &RateBudget) -> String {
    let mut text = String::from("quantity,value\n");
    let _ = writeln!(text, "local_fourfold_hz,{}", budget.local_fourfold_hz);
    for (mode, entry) in &budget.per_mode {
        let _ = writeln!(text, "path_loss_db_{mode},{}", entry.path_loss_db);
        let _ = writeln!(text, "extra_loss_db_{mode},{}", entry.extra_loss_db);
        let _ = writeln!(text, "insertion_share_db_{mode},{}", entry.insertion_share_db);
        let _ = writeln!(text, "delay_us_{mode},{}", entry.delay_us);
        let _ = writeln!(text, "transmission_{mode},{}", entry.transmission);
    }
    let _ = writeln!(
        text,
        "detector_efficiency_product,{}",
        budget.detector_efficiency_product
    );
    let _ = writeln!(text, "distributed_hz,{}", budget.distributed_hz);
    let _ = writeln!(text, "aggregate_loss_db,{}", budget.aggregate_loss_db);
    let _ = writeln!(text, "aggregate_hz,{}", budget.aggregate_hz);
    text
}

fn write_json<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> Result<PathBuf, RunnerError> {
    let text = serde_json::to_string_pretty(value).expect("output serialization cannot fail") + "\n";
    write_text(out_dir, name, &text)
}

fn write_text(out_dir: &Path, name: &str, text: &str) -> Result<PathBuf, RunnerError> {
    let path = out_dir.join(name);
    fs::write(&path, text).map_err(|source| RunnerError::Io { path: path.clone(), source })?;
    Ok(path)
}
