use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::ConfusionMatrix;
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: u32,
    pub frame_macro_acc: f64,
    pub video_macro_acc: f64,
    pub per_class_frame_acc: BTreeMap<String, f64>,
    pub per_class_video_acc: BTreeMap<String, f64>,
    /// Video-level counts, `[truth][prediction]`.
    pub confusion_matrix: ConfusionMatrix,
    pub frame_confusion_matrix: ConfusionMatrix,
    pub train_videos: Vec<String>,
    pub test_videos: Vec<String>,
    /// Test videos left out because no embeddings were available.
    pub skipped_videos: Vec<String>,
    pub n_train_frames: usize,
    pub n_test_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub report_version: u32,
    pub config: ExperimentConfig,
    /// Backend name recorded in the evaluated store.
    pub store_backend: String,
    pub per_repetition: Vec<RepetitionResult>,
    pub mean_frame_acc: f64,
    pub mean_video_acc: f64,
    pub mean_per_class_frame_acc: BTreeMap<String, f64>,
    pub mean_per_class_video_acc: BTreeMap<String, f64>,
}

fn mean_maps<'a>(maps: impl Iterator<Item = &'a BTreeMap<String, f64>>) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in maps {
        for (k, v) in m {
            let e = acc.entry(k.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

impl EvaluationReport {
    pub fn new(config: ExperimentConfig, store_backend: String, per_repetition: Vec<RepetitionResult>) -> Result<Self> {
        if per_repetition.is_empty() {
            return Err(Error::contract("a report needs at least one repetition"));
        }
        let n = per_repetition.len() as f64;
        let mean_frame_acc = per_repetition.iter().map(|r| r.frame_macro_acc).sum::<f64>() / n;
        let mean_video_acc = per_repetition.iter().map(|r| r.video_macro_acc).sum::<f64>() / n;
        let mean_per_class_frame_acc = mean_maps(per_repetition.iter().map(|r| &r.per_class_frame_acc));
        let mean_per_class_video_acc = mean_maps(per_repetition.iter().map(|r| &r.per_class_video_acc));
        Ok(EvaluationReport {
            report_version: REPORT_VERSION,
            config,
            store_backend,
            per_repetition,
            mean_frame_acc,
            mean_video_acc,
            mean_per_class_frame_acc,
            mean_per_class_video_acc,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            report_version: u32,
        }
        let v: Version = serde_json::from_str(text).map_err(|e| Error::parse("report", e.to_string()))?;
        if v.report_version != REPORT_VERSION {
            return Err(Error::parse("report", format!("unsupported report_version {}", v.report_version)));
        }
        serde_json::from_str(text).map_err(|e| Error::parse("report", e.to_string()))
    }

    fn classes(&self) -> Vec<String> {
        self.mean_per_class_frame_acc
            .keys()
            .chain(self.mean_per_class_video_acc.keys())
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// One row per repetition and a final `mean` row. Per-class values are
    /// `|`-separated in the order of the `class` column.
    pub fn to_csv(&self) -> String {
        let classes = self.classes();
        let join = |m: &BTreeMap<String, f64>| {
            classes
                .iter()
                .map(|c| m.get(c).map(|v| v.to_string()).unwrap_or_default())
                .collect::<Vec<_>>()
                .join("|")
        };
        let class_col = classes.join("|");
        let mut out = String::from("repetition,frame_macro,video_macro,class,frame_acc,video_acc\n");
        for r in &self.per_repetition {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.repetition,
                r.frame_macro_acc,
                r.video_macro_acc,
                class_col,
                join(&r.per_class_frame_acc),
                join(&r.per_class_video_acc)
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{},{},{},{}",
            self.mean_frame_acc,
            self.mean_video_acc,
            class_col,
            join(&self.mean_per_class_frame_acc),
            join(&self.mean_per_class_video_acc)
        );
        out
    }

    pub fn to_markdown(&self) -> String {
        let classes = self.classes();
        let mut out = String::from("| Repetition | Frame (%) | Video (%) |");
        for c in &classes {
            let _ = write!(out, " {c} frame (%) | {c} video (%) |");
        }
        out.push_str("\n|---|---:|---:|");
        out.push_str(&"---:|---:|".repeat(classes.len()));
        out.push('\n');
        let cells = |m: &BTreeMap<String, f64>, c: &str| m.get(c).map(|v| pct(*v)).unwrap_or_default();
        for r in &self.per_repetition {
            let _ = write!(out, "| {} | {} | {} |", r.repetition, pct(r.frame_macro_acc), pct(r.video_macro_acc));
            for c in &classes {
                let _ = write!(out, " {} | {} |", cells(&r.per_class_frame_acc, c), cells(&r.per_class_video_acc, c));
            }
            out.push('\n');
        }
        let _ = write!(out, "| **mean** | {} | {} |", pct(self.mean_frame_acc), pct(self.mean_video_acc));
        for c in &classes {
            let _ = write!(
                out,
                " {} | {} |",
                cells(&self.mean_per_class_frame_acc, c),
                cells(&self.mean_per_class_video_acc, c)
            );
        }
        out.push('\n');
        out
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(Error::parse("report format", format!("unknown format {other:?}"))),
        }
    }
}

pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    std::io::Write::write_all(&mut tmp, contents.as_bytes()).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn emit_report(report: &EvaluationReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Markdown => report.to_markdown(),
    };
    write_atomic(path, &text)
}

/// One cell group of a results grid: the row is `(embedding, variant)`,
/// `column` names the task or condition.
#[derive(Debug, Clone)]
pub struct GridEntry<'r> {
    pub embedding: String,
    pub variant: String,
    pub column: String,
    pub report: &'r EvaluationReport,
}

/// Renders a grid with one row per `(embedding, variant)` and a frame/video
/// column pair per distinct `column`, both in first-appearance order.
pub fn render_markdown_grid(entries: &[GridEntry<'_>], variant_header: &str) -> String {
    let mut rows: Vec<(&str, &str)> = Vec::new();
    let mut cols: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), &EvaluationReport> = BTreeMap::new();
    for e in entries {
        let key = (e.embedding.as_str(), e.variant.as_str());
        let r = rows.iter().position(|k| *k == key).unwrap_or_else(|| {
            rows.push(key);
            rows.len() - 1
        });
        let c = cols.iter().position(|k| *k == e.column).unwrap_or_else(|| {
            cols.push(&e.column);
            cols.len() - 1
        });
        cells.insert((r, c), e.report);
    }
    let mut out = format!("| Embedding | {variant_header} |");
    for c in &cols {
        let _ = write!(out, " {c} Frame (%) | {c} Video (%) |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---:|---:|".repeat(cols.len()));
    out.push('\n');
    for (ri, (emb, var)) in rows.iter().enumerate() {
        let _ = write!(out, "| {emb} | {var} |");
        for ci in 0..cols.len() {
            match cells.get(&(ri, ci)) {
                Some(r) => {
                    let _ = write!(out, " {} | {} |", pct(r.mean_frame_acc), pct(r.mean_video_acc));
                }
                None => out.push_str("  |  |"),
            }
        }
        out.push('\n');
    }
    out
}
