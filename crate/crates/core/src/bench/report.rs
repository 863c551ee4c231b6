use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::svg::boxplot_svg;
use super::{BenchmarkRecord, BenchmarkReport, Experiment, GroupSummary};
use crate::Result;

pub const RECORDS_HEADER: &str = "experiment,method,reduction_param,seed,estimate,runtime_seconds";

/// One CSV row per record under [`RECORDS_HEADER`]; failed fits carry NaN.
pub fn write_records_csv(records: &[BenchmarkRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.experiment, r.method, r.reduction_param, r.seed, r.estimate, r.runtime_seconds
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorEntry<'a> {
    method: &'a str,
    reduction_param: usize,
    seed: u64,
    error: &'a str,
}

#[derive(Serialize)]
struct ChecksumEntry {
    seed: u64,
    method: String,
    reduction_param: usize,
    checksum: String,
}

#[derive(Serialize)]
struct RuntimeRatio {
    reduction_param: usize,
    /// Median encoded runtime over median full runtime.
    median_ratio: f64,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    experiment: Experiment,
    n_records: usize,
    groups: &'a [GroupSummary],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runtime_ratios: Vec<RuntimeRatio>,
    errors: Vec<ErrorEntry<'a>>,
    data_checksums: Vec<ChecksumEntry>,
}

fn summary_json(report: &BenchmarkReport) -> SummaryJson<'_> {
    let full = report
        .summary
        .iter()
        .find(|g| g.method == "full")
        .map(|g| g.runtime_seconds.median);
    let runtime_ratios = match full {
        Some(full) if report.experiment == Experiment::Lmm => report
            .summary
            .iter()
            .filter(|g| g.method == "encoded")
            .map(|g| RuntimeRatio { reduction_param: g.reduction_param, median_ratio: g.runtime_seconds.median / full })
            .collect(),
        _ => Vec::new(),
    };
    SummaryJson {
        experiment: report.experiment,
        n_records: report.records.len(),
        groups: &report.summary,
        runtime_ratios,
        errors: report
            .records
            .iter()
            .filter_map(|r| {
                r.error.as_deref().map(|error| ErrorEntry {
                    method: &r.method,
                    reduction_param: r.reduction_param,
                    seed: r.seed,
                    error,
                })
            })
            .collect(),
        data_checksums: report
            .records
            .iter()
            .map(|r| ChecksumEntry {
                seed: r.seed,
                method: r.method.clone(),
                reduction_param: r.reduction_param,
                checksum: format!("{:016x}", r.data_checksum),
            })
            .collect(),
    }
}

fn group_values(report: &BenchmarkReport, pick: impl Fn(&BenchmarkRecord) -> Option<f64>) -> Vec<(String, Vec<f64>)> {
    report
        .summary
        .iter()
        .map(|g| {
            let label = format!("{} {}", g.method, g.reduction_param);
            let vals = report.values(&g.method, g.reduction_param).filter_map(&pick).collect();
            (label, vals)
        })
        .collect()
}

/// Writes `records.csv`, `summary.json` and one SVG box plot per measured
/// quantity into `out_dir`, returning the paths written.
pub fn emit_report(report: &BenchmarkReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let csv_path = dir.join("records.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    write_records_csv(&report.records, &mut w)?;
    w.flush()?;
    written.push(csv_path);

    let json_path = dir.join("summary.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary_json(report))?)?;
    written.push(json_path);

    let estimate_title = match report.experiment {
        Experiment::Lmm => "heritability estimate",
        Experiment::Mixture => "clustering accuracy",
    };
    let mut plots = vec![
        ("estimate.svg", estimate_title, group_values(report, |r| Some(r.estimate))),
        ("runtime_seconds.svg", "runtime (seconds)", group_values(report, |r| Some(r.runtime_seconds))),
    ];
    if report.records.iter().any(|r| r.ari.is_some()) {
        plots.push(("ari.svg", "adjusted Rand index", group_values(report, |r| r.ari)));
    }
    for (file, title, groups) in plots {
        let path = dir.join(file);
        std::fs::write(&path, boxplot_svg(title, &groups))?;
        written.push(path);
    }
    Ok(written)
}
