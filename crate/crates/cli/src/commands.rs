use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use veriframe::dataset::{extract_frames, load_manifest, Manifest, VideoRecord};
use veriframe::embed::{embed_videos, Backend, EmbeddingStore};
use veriframe::eval::{
    emit_report, leave_one_out, plan_repetition, render_markdown_grid, robustness_sweep, run_experiment,
    train_on_videos, EvaluationReport, ExperimentConfig, GridEntry, MissingPolicy, ReportFormat, SweepOptions, Task,
};
use veriframe::launder::{run_jobs, JobLog, LaunderJob};
use veriframe::svm::{save_model, KernelKind};
use veriframe::transcoder::Transcoder;
use veriframe::vecmath::{pca_fit, write_projection_csv, Matrix, ProjectionRow};
use veriframe::zeroshot::{builtin_prompt_pairs_with, embed_pair_cached, PromptPair};

use crate::{
    Cli, Command, EmbedArgs, EvalArgs, ExtractArgs, KernelArgs, LooArgs, ProtocolArgs, RobustnessArgs, TrainArgs,
    VizArgs, ZeroshotArgs,
};

pub const CACHE_DIR_ENV: &str = "VERIFRAME_CACHE_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unreadable inputs; exit code 2.
    Usage(String),
    /// The run itself failed; exit code 1.
    Failure(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => m,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<veriframe::Error> for CliError {
    fn from(e: veriframe::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(r: veriframe::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn frames(&self) -> PathBuf {
        self.root.join("frames")
    }
    fn stores(&self) -> PathBuf {
        self.root.join("stores")
    }
    fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| CliError::Failure(format!("cannot write {}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    version: &'static str,
    #[serde(flatten)]
    cli: &'a Cli,
    outputs: &'a [PathBuf],
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let layout = Layout {
        root: cli.global.out_dir.clone(),
    };
    let seed = cli.global.seed;
    let outputs = match &cli.command {
        Command::Extract(a) => extract(a, &layout)?,
        Command::Embed(a) => embed(a, &layout)?,
        Command::Train(a) => train(a, seed, &layout)?,
        Command::Eval(a) => eval(a, seed, &layout)?,
        Command::Zeroshot(a) => zeroshot(a, seed, &layout)?,
        Command::Loo(a) => loo(a, seed, &layout)?,
        Command::Robustness(a) => robustness(a, seed, cli.global.workers, &layout)?,
        Command::Viz(a) => viz(a, &layout)?,
    };
    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION"),
        cli,
        outputs: &outputs,
    };
    let json = serde_json::to_vec_pretty(&record).map_err(|e| CliError::Failure(e.to_string()))?;
    write_atomic(&layout.root.join("run.json"), &json)
}

fn read_manifest(path: &Path) -> CliResult<Manifest> {
    usage(load_manifest(path))
}

fn read_store(path: &Path) -> CliResult<EmbeddingStore> {
    usage(EmbeddingStore::read(path))
}

fn read_backend(path: &Path) -> CliResult<Backend> {
    usage(Backend::load(path))
}

fn check_stride(stride: u32) -> CliResult<()> {
    if stride == 0 {
        return Err(CliError::Usage("--stride must be positive".into()));
    }
    Ok(())
}

/// Extracts frames for `videos`, reusing complete earlier extractions.
/// Returns the videos that failed with their errors.
fn extract_all(
    videos: &[VideoRecord],
    stride: u32,
    frames_root: &Path,
    transcoder: &Transcoder,
) -> Vec<(String, veriframe::Error)> {
    let done = AtomicUsize::new(0);
    let n = videos.len();
    videos
        .par_iter()
        .filter_map(|v| {
            let r = extract_frames(v, stride, frames_root, transcoder);
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            match r {
                Ok(frames) => {
                    eprintln!("[{k}/{n}] {}: {} frames", v.video_id, frames.len());
                    None
                }
                Err(e) => {
                    eprintln!("[{k}/{n}] {}: failed: {e}", v.video_id);
                    Some((v.video_id.clone(), e))
                }
            }
        })
        .collect()
}

fn extract(a: &ExtractArgs, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    check_stride(a.stride)?;
    let manifest = read_manifest(&a.manifest.manifest)?;
    let failed = extract_all(manifest.records(), a.stride, &layout.frames(), &Transcoder::from_env());
    if !failed.is_empty() {
        let ids: Vec<_> = failed.iter().map(|(id, _)| id.as_str()).collect();
        return Err(CliError::Failure(format!("{} video(s) failed: {}", ids.len(), ids.join(", "))));
    }
    Ok(vec![layout.frames()])
}

fn embed(a: &EmbedArgs, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    check_stride(a.stride)?;
    let manifest = read_manifest(&a.manifest.manifest)?;
    let backend = read_backend(&a.backend)?;
    let failed = extract_all(manifest.records(), a.stride, &layout.frames(), &Transcoder::from_env());
    if let Some((id, e)) = failed.into_iter().next() {
        return Err(CliError::Failure(format!("frame extraction failed for {id}: {e}")));
    }
    let store = embed_videos(&backend, manifest.records(), &layout.frames(), a.stride)?;
    let out = a.out.clone().unwrap_or_else(|| layout.stores().join(format!("{}.vfe", backend.name())));
    store.write(&out)?;
    eprintln!("{} frame embeddings of dimension {} written to {}", store.len(), store.dim(), out.display());
    Ok(vec![out])
}

fn experiment(task: Task, kernel: &KernelArgs, protocol: &ProtocolArgs, seed: u64, store: &EmbeddingStore) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(task);
    cfg.backend = store.backend().to_owned();
    cfg.kernel = kernel.spec();
    cfg.split_scheme = protocol.split;
    cfg.repetitions = protocol.reps;
    cfg.seed = seed;
    cfg.normalize_embeddings = protocol.normalize;
    cfg.train = kernel.train(seed);
    cfg
}

fn validate(cfg: &ExperimentConfig) -> CliResult<()> {
    usage(cfg.validate())
}

fn train(a: &TrainArgs, seed: u64, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    if a.task == Task::ZeroShot {
        return Err(CliError::Usage("zero-shot has nothing to train; use `zeroshot`".into()));
    }
    let manifest = read_manifest(&a.manifest.manifest)?;
    let store = read_store(&a.store)?;
    let protocol = ProtocolArgs {
        split: a.split,
        reps: a.repetition + 1,
        normalize: a.normalize,
    };
    let cfg = experiment(a.task, &a.kernel, &protocol, seed, &store);
    validate(&cfg)?;
    let plan = plan_repetition(&manifest, &cfg, a.repetition)?;
    let model = train_on_videos(&store, &plan.train, &cfg)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| layout.models().join(format!("{}-{}.json", a.task, a.kernel.kernel)));
    save_model(&model, &out)?;
    eprintln!("trained on {} videos, model written to {}", plan.train.len(), out.display());
    Ok(vec![out])
}

fn write_report(report: &EvaluationReport, stem: &Path, extra: ReportFormat) -> CliResult<Vec<PathBuf>> {
    let json = stem.with_extension("json");
    emit_report(report, &json, ReportFormat::Json)?;
    let mut out = vec![json];
    let ext = match extra {
        ReportFormat::Json => return Ok(out),
        ReportFormat::Csv => "csv",
        ReportFormat::Markdown => "md",
    };
    let path = stem.with_extension(ext);
    emit_report(report, &path, extra)?;
    out.push(path);
    Ok(out)
}

fn summary(label: &str, r: &EvaluationReport) {
    println!(
        "{label}: frame {:.1}%  video {:.1}%",
        100.0 * r.mean_frame_acc,
        100.0 * r.mean_video_acc
    );
}

/// File-name safe rendering of an identifier.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn eval(a: &EvalArgs, seed: u64, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest.manifest)?;
    if a.task == Task::ZeroShot {
        return Err(CliError::Usage("use `zeroshot` for frame-to-prompt evaluation".into()));
    }
    if !a.grid && a.store.len() != 1 {
        return Err(CliError::Usage("several --store values need --grid".into()));
    }
    let stores = a.store.iter().map(|p| read_store(p)).collect::<CliResult<Vec<_>>>()?;
    let reports_dir = layout.reports();
    if !a.grid {
        let store = &stores[0];
        let cfg = experiment(a.task, &a.kernel, &a.protocol, seed, store);
        validate(&cfg)?;
        let report = run_experiment(&manifest, store, &cfg)?;
        summary(&format!("{} {} {}", store.backend(), a.task, a.kernel.kernel), &report);
        let stem = reports_dir.join(format!("eval-{}-{}-{}", slug(store.backend()), a.task, a.kernel.kernel));
        return write_report(&report, &stem, a.format.into());
    }

    let kernels = [KernelKind::Linear, KernelKind::Rbf, KernelKind::Poly];
    let tasks = [Task::TwoClass, Task::MultiClass];
    let mut cells = Vec::new();
    for store in &stores {
        for kind in kernels {
            for task in tasks {
                let mut cfg = experiment(task, &a.kernel, &a.protocol, seed, store);
                cfg.kernel = a.kernel.spec_for(kind);
                validate(&cfg)?;
                cells.push((store, kind, task, cfg));
            }
        }
    }
    let reports = cells
        .iter()
        .map(|(store, _, _, cfg)| run_experiment(&manifest, store, cfg))
        .collect::<veriframe::Result<Vec<_>>>()?;
    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    for ((store, kind, task, _), report) in cells.iter().zip(&reports) {
        let backend = store.backend();
        summary(&format!("{backend} {task} {kind}"), report);
        let path = reports_dir.join(format!("eval-{}-{task}-{kind}.json", slug(backend)));
        emit_report(report, &path, ReportFormat::Json)?;
        outputs.push(path);
        entries.push(GridEntry {
            embedding: backend.to_owned(),
            variant: kind.to_string(),
            column: task.to_string(),
            report,
        });
    }
    let grid = reports_dir.join("grid.md");
    write_atomic(&grid, render_markdown_grid(&entries, "Kernel").as_bytes())?;
    println!("{}", render_markdown_grid(&entries, "Kernel"));
    outputs.push(grid);
    Ok(outputs)
}

fn cache_dir(a: &ZeroshotArgs, layout: &Layout) -> PathBuf {
    a.cache_dir
        .clone()
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| layout.root.join("cache"))
}

fn zeroshot(a: &ZeroshotArgs, seed: u64, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest.manifest)?;
    let store = read_store(&a.store)?;
    let pairs: Vec<PromptPair> = if a.pairs.is_empty() {
        builtin_prompt_pairs_with(a.templated)
    } else {
        a.pairs
            .iter()
            .map(|p| usage(PromptPair::resolve(p, a.templated)))
            .collect::<CliResult<_>>()?
    };
    let backend = read_backend(&a.backend)?;
    let cache = cache_dir(a, layout);
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for pair in pairs {
        let label = format!("{} ({} / {})", pair.id, pair.real_text, pair.fake_text);
        let embedded = embed_pair_cached(&backend, pair, &cache)?;
        let mut cfg = experiment(Task::ZeroShot, &KernelArgs::default_linear(), &a.protocol, seed, &store);
        let stem = layout.reports().join(format!("zeroshot-{}", slug(&embedded.pair.id)));
        cfg.prompt_pair = Some(embedded);
        validate(&cfg)?;
        let report = run_experiment(&manifest, &store, &cfg)?;
        summary(&label, &report);
        outputs.extend(write_report(&report, &stem, ReportFormat::Markdown)?);
        reports.push((label, report));
    }
    let entries: Vec<GridEntry> = reports
        .iter()
        .map(|(label, r)| GridEntry {
            embedding: store.backend().to_owned(),
            variant: label.clone(),
            column: "Zero-shot".into(),
            report: r,
        })
        .collect();
    let grid = layout.reports().join("zeroshot.md");
    write_atomic(&grid, render_markdown_grid(&entries, "Prompt pair").as_bytes())?;
    outputs.push(grid);
    Ok(outputs)
}

fn loo(a: &LooArgs, seed: u64, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let manifest = read_manifest(&a.manifest.manifest)?;
    let store = read_store(&a.store)?;
    let cfg = experiment(Task::TwoClass, &a.kernel, &a.protocol, seed, &store);
    validate(&cfg)?;
    let reports = leave_one_out(&manifest, &store, &cfg)?;
    let mut outputs = Vec::new();
    for (source, r) in &reports {
        summary(&format!("without {source}"), r);
        let path = layout.reports().join(format!("loo-{}.json", slug(source)));
        emit_report(r, &path, ReportFormat::Json)?;
        outputs.push(path);
    }
    let mean = reports.values().map(|r| r.mean_video_acc).sum::<f64>() / reports.len() as f64;
    println!("mean video accuracy over left-out sources: {:.1}%", 100.0 * mean);
    let entries: Vec<GridEntry> = reports
        .iter()
        .map(|(s, r)| GridEntry {
            embedding: store.backend().to_owned(),
            variant: s.clone(),
            column: "Left out".into(),
            report: r,
        })
        .collect();
    let grid = layout.reports().join("loo.md");
    write_atomic(&grid, render_markdown_grid(&entries, "Left-out model").as_bytes())?;
    outputs.push(grid);
    Ok(outputs)
}

fn robustness(a: &RobustnessArgs, seed: u64, workers: usize, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    check_stride(a.stride)?;
    let manifest = read_manifest(&a.manifest.manifest)?;
    let clean = read_store(&a.store)?;
    let backend = read_backend(&a.backend)?;
    if let Some(bad) = a.levels.iter().find(|l| !(**l > 0.0 && **l <= 100.0)) {
        return Err(CliError::Usage(format!("level {bad} is outside (0, 100]")));
    }
    let cfg = experiment(Task::TwoClass, &a.kernel, &a.protocol, seed, &clean);
    validate(&cfg)?;

    // Only videos that some repetition tests on (or trains on, with --launder-train).
    let mut needed = BTreeSet::new();
    for r in 0..cfg.repetitions {
        let plan = plan_repetition(&manifest, &cfg, r)?;
        needed.extend(plan.test.into_iter().map(|v| v.video_id));
        if a.launder_train {
            needed.extend(plan.train.into_iter().map(|v| v.video_id));
        }
    }
    let videos: Vec<&VideoRecord> = manifest.records().iter().filter(|v| needed.contains(&v.video_id)).collect();
    let transcoder = Transcoder::from_env();
    let policy: MissingPolicy = a.on_missing.into();
    let laundered_root = layout.root.join("laundered");
    let log = JobLog::open(laundered_root.join("jobs.jsonl"))?;
    let mut outputs = Vec::new();

    let mut build = |level: f64| -> veriframe::Result<EmbeddingStore> {
        let tag = format!("{}-{level}", a.mode);
        let store_path = layout.stores().join(format!("{}-{tag}.vfe", slug(backend.name())));
        let dir = laundered_root.join(&tag);
        let jobs = videos
            .iter()
            .map(|v| LaunderJob::new(&v.path, a.mode, level, dir.join(format!("{}.mp4", v.video_id))))
            .collect::<veriframe::Result<Vec<_>>>()?;
        let results = run_jobs(&jobs, &transcoder, Some(&log), workers)?;
        let mut ok = Vec::new();
        for (v, r) in videos.iter().zip(results) {
            match r {
                Ok(rec) => ok.push(VideoRecord {
                    path: rec.job.output().to_path_buf(),
                    width: rec.after.width,
                    height: rec.after.height,
                    ..(*v).clone()
                }),
                Err(e) if policy == MissingPolicy::Skip => log::warn!("{tag}: skipping {}: {e}", v.video_id),
                Err(e) => return Err(e),
            }
        }
        let frames_root = layout.frames().join("_laundered").join(&tag);
        let failed: BTreeSet<String> = extract_all(&ok, a.stride, &frames_root, &transcoder)
            .into_iter()
            .map(|(id, e)| {
                log::warn!("{tag}: frame extraction failed for {id}: {e}");
                id
            })
            .collect();
        if !failed.is_empty() && policy == MissingPolicy::Abort {
            return Err(veriframe::Error::MissingEmbeddings(failed.into_iter().collect()));
        }
        ok.retain(|v| !failed.contains(&v.video_id));
        let store = embed_videos(&backend, &ok, &frames_root, a.stride)?;
        store.write(&store_path)?;
        outputs.push(store_path);
        Ok(store)
    };
    let opts = SweepOptions {
        mode: a.mode,
        levels: a.levels.clone(),
        launder_train: a.launder_train,
        missing: policy,
    };
    let sweep = robustness_sweep(&manifest, &clean, &mut build, &opts, &cfg)?;
    drop(build);

    let entries: Vec<GridEntry> = sweep
        .levels
        .iter()
        .map(|l| {
            summary(&format!("{} {}%", a.mode, l.level), &l.report);
            GridEntry {
                embedding: clean.backend().to_owned(),
                variant: format!("{}%", l.level),
                column: a.mode.to_string(),
                report: &l.report,
            }
        })
        .collect();
    let json = layout.reports().join(format!("robustness-{}.json", a.mode));
    let text = serde_json::to_vec_pretty(&sweep).map_err(|e| CliError::Failure(e.to_string()))?;
    write_atomic(&json, &text)?;
    let md = json.with_extension("md");
    write_atomic(&md, render_markdown_grid(&entries, "Amount").as_bytes())?;
    outputs.extend([json, md, log.path().to_path_buf()]);
    Ok(outputs)
}

fn viz(a: &VizArgs, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let store = read_store(&a.store)?;
    if store.len() < 2 {
        return Err(CliError::Usage("projection needs at least two embeddings".into()));
    }
    let rows: Vec<Vec<f64>> = store.records().iter().map(|r| r.vector_f64()).collect();
    let x = Matrix::from_rows(&rows)?;
    let model = pca_fit(&x, 2.min(store.dim()))?;
    let projected = store
        .records()
        .iter()
        .zip(&rows)
        .map(|(r, v)| {
            let p = model.project(v)?;
            Ok(ProjectionRow {
                id: format!("{}:{}", r.video_id, r.frame_index),
                source: r.source.label().to_owned(),
                x: p[0],
                y: p.get(1).copied().unwrap_or(0.0),
            })
        })
        .collect::<veriframe::Result<Vec<_>>>()?;
    let mut buf = Vec::new();
    write_projection_csv(&mut buf, &projected).map_err(|e| CliError::Failure(e.to_string()))?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| layout.reports().join(format!("projection-{}.csv", slug(store.backend()))));
    write_atomic(&out, &buf)?;
    eprintln!(
        "{} rows written to {} (explained variance {:?})",
        projected.len(),
        out.display(),
        model.explained_variance
    );
    Ok(vec![out])
}

impl KernelArgs {
    fn default_linear() -> Self {
        KernelArgs {
            kernel: KernelKind::Linear,
            gamma: veriframe::svm::Gamma::Scale,
            degree: 3,
            coef0: 0.0,
            c: 1.0,
            tol: 1e-3,
        }
    }
}
