use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{train_once, RunResult};
use crate::data::{EncodedDataset, SplitSpec};
use crate::error::{Error, Result};

/// Runs aggregated by the "Top5" columns.
pub const TOP_K: usize = 5;

pub const CSV_HEADER: [&str; 6] = [
    "Model",
    "Min",
    "Top5 mean",
    "Top5 std",
    "All mean",
    "All std",
];

/// Summary of one variant's scores. Standard deviations are population
/// standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub min: f64,
    pub top5_mean: f64,
    pub top5_std: f64,
    pub all_mean: f64,
    pub all_std: f64,
    pub runs: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ScoreStats {
    /// `None` for an empty score list.
    pub fn from_scores(scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (top5_mean, top5_std) = mean_std(&sorted[..sorted.len().min(TOP_K)]);
        let (all_mean, all_std) = mean_std(&sorted);
        Some(Self {
            min: sorted[0],
            top5_mean,
            top5_std,
            all_mean,
            all_std,
            runs: scores.len(),
        })
    }
}

/// One seeded run: either its result or the reason it aborted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RunResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub runs: Vec<RunEntry>,
    pub test: Option<ScoreStats>,
    pub train: Option<ScoreStats>,
    /// Fewer than five successful runs: Top5 covers all of them.
    pub insufficient_runs: bool,
}

impl VariantReport {
    pub fn new(name: &str, runs: Vec<RunEntry>) -> Self {
        let ok: Vec<&RunResult> = runs.iter().filter_map(|r| r.result.as_ref()).collect();
        let test: Vec<f64> = ok.iter().map(|r| r.test).collect();
        let train: Vec<f64> = ok.iter().map(|r| r.train).collect();
        Self {
            name: name.to_string(),
            test: ScoreStats::from_scores(&test),
            train: ScoreStats::from_scores(&train),
            insufficient_runs: ok.len() < TOP_K,
            runs,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }
}

/// Relative reductions `(original - extended) / original`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub min: f64,
    pub all_mean: f64,
}

impl Improvement {
    fn between(original: &ScoreStats, extended: &ScoreStats) -> Self {
        Self {
            min: (original.min - extended.min) / original.min,
            all_mean: (original.all_mean - extended.all_mean) / original.all_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_runs: usize,
    pub original: VariantReport,
    pub extended: VariantReport,
    pub test_improvement: Option<Improvement>,
    /// Paired seeds where the extended model's train score is at least the
    /// original's, out of `paired_runs` pairs where both succeeded.
    pub train_not_lower: usize,
    pub paired_runs: usize,
}

impl ComparisonReport {
    pub fn new(original: VariantReport, extended: VariantReport) -> Self {
        let test_improvement = match (&original.test, &extended.test) {
            (Some(o), Some(e)) => Some(Improvement::between(o, e)),
            _ => None,
        };
        let pairs: Vec<(f64, f64)> = original
            .runs
            .iter()
            .zip(&extended.runs)
            .filter_map(|(o, e)| Some((o.result.as_ref()?.train, e.result.as_ref()?.train)))
            .collect();
        Self {
            n_runs: original.runs.len().max(extended.runs.len()),
            test_improvement,
            train_not_lower: pairs.iter().filter(|(o, e)| e >= o).count(),
            paired_runs: pairs.len(),
            original,
            extended,
        }
    }

    pub fn empty() -> Self {
        Self::new(
            VariantReport::new("Original", vec![]),
            VariantReport::new("Extended", vec![]),
        )
    }

    pub fn errors(&self) -> impl Iterator<Item = &RunEntry> {
        self.original
            .runs
            .iter()
            .chain(&self.extended.runs)
            .filter(|r| r.error.is_some())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Table-style CSV: test rows per variant, then train rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let rows = [
            (self.original.name.clone(), &self.original.test),
            (self.extended.name.clone(), &self.extended.test),
            (
                format!("{} (train)", self.original.name),
                &self.original.train,
            ),
            (
                format!("{} (train)", self.extended.name),
                &self.extended.train,
            ),
        ];
        for (name, stats) in rows {
            if let Some(s) = stats {
                w.write_record([
                    name,
                    s.min.to_string(),
                    s.top5_mean.to_string(),
                    s.top5_std.to_string(),
                    s.all_mean.to_string(),
                    s.all_std.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown format {s:?} (expected json or csv)")),
        }
    }
}

pub fn emit_report(
    report: &ComparisonReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Json => {
            let mut text = report.to_json()?;
            text.push('\n');
            file.write_all(text.as_bytes())
                .map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => report.write_csv(file),
    }
}

/// Checks that two configs differ only in auxiliary-head settings.
fn check_paired(original: &TrainConfig, extended: &TrainConfig) -> Result<()> {
    let mut a = original.clone();
    a.model.head_s = None;
    a.drawers = extended.drawers;
    a.mix = extended.mix;
    a.min_occupancy = extended.min_occupancy;
    a.strict_occupancy = extended.strict_occupancy;
    if a != extended.original() {
        return Err(Error::Config(
            "compared configs may differ only in the auxiliary head, drawers and mixing".into(),
        ));
    }
    Ok(())
}

/// Trains `n_runs` seeded runs of each variant and aggregates them.
///
/// Run `i` of both variants uses seed `original.seed + i`. Up to `jobs`
/// runs execute concurrently; a failed run is recorded in the report.
pub fn compare(
    original: &TrainConfig,
    extended: &TrainConfig,
    n_runs: usize,
    data: &EncodedDataset,
    splits: &SplitSpec,
    jobs: usize,
) -> Result<ComparisonReport> {
    if n_runs == 0 {
        return Err(Error::Config(
            "at least one run per variant is required".into(),
        ));
    }
    original.validate()?;
    extended.validate()?;
    check_paired(original, extended)?;

    let base = original.seed;
    let tasks: Vec<(usize, TrainConfig)> = (0..n_runs as u64)
        .flat_map(|i| {
            [
                (0, original.with_seed(base + i)),
                (1, extended.with_seed(base + i)),
            ]
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let entries: Vec<(usize, RunEntry)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(variant, cfg)| {
                let entry = match train_once(cfg, data, splits) {
                    Ok(result) => RunEntry {
                        seed: cfg.seed,
                        result: Some(result),
                        error: None,
                    },
                    Err(e) => {
                        log::error!("run with seed {} failed: {e}", cfg.seed);
                        RunEntry {
                            seed: cfg.seed,
                            result: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                (*variant, entry)
            })
            .collect()
    });

    let (mut orig, mut ext) = (Vec::new(), Vec::new());
    for (variant, entry) in entries {
        if variant == 0 {
            orig.push(entry);
        } else {
            ext.push(entry);
        }
    }
    Ok(ComparisonReport::new(
        VariantReport::new("Original", orig),
        VariantReport::new("Extended", ext),
    ))
}
