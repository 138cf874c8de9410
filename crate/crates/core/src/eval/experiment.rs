use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Task};
use super::metrics::{aggregate_video, aggregate_video_plurality, per_class_accuracy, ConfusionMatrix};
use super::report::{EvaluationReport, RepetitionResult};
use crate::dataset::{balance_undersample, make_split, real_vs_fake, Manifest, SplitSpec, VideoRecord, TEST, TRAIN};
use crate::embed::{EmbeddingRecord, EmbeddingStore};
use crate::error::{Error, Result};
pub use crate::launder::Degradation;
use crate::svm::{train_binary_labeled, train_multiclass, AnyModel};
use crate::vecmath::{l2_normalize, Matrix};
use crate::zeroshot::{classify_frame, EmbeddedPair};

pub const REAL: &str = "Real";
pub const FAKE: &str = "Fake";

/// Ground-truth label of a video under `task`.
pub fn class_label(task: Task, video: &VideoRecord) -> String {
    match task {
        Task::TwoClass | Task::ZeroShot => real_vs_fake(video),
        Task::MultiClass => video.source.label().to_owned(),
    }
}

/// The videos one repetition trains and tests on.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionPlan {
    pub repetition: u32,
    /// Balanced training videos; empty for zero-shot.
    pub train: Vec<VideoRecord>,
    pub test: Vec<VideoRecord>,
}

/// Splits by action, drops a left-out source from training (and every other
/// generator from testing), then balances the training videos by class.
pub fn plan_repetition(manifest: &Manifest, cfg: &ExperimentConfig, repetition: u32) -> Result<RepetitionPlan> {
    let spec = SplitSpec {
        scheme: cfg.split_scheme,
        seed: cfg.seed,
        repetition: u64::from(repetition),
    };
    let split = make_split(manifest, spec)?;
    let left_out = cfg.leave_out_source.as_ref();
    let test: Vec<VideoRecord> = split
        .videos(manifest, TEST)
        .into_iter()
        .filter(|v| left_out.is_none_or(|s| v.source.is_real() || v.source == *s))
        .cloned()
        .collect();
    let train = if cfg.task == Task::ZeroShot {
        Vec::new()
    } else {
        let pool: Vec<VideoRecord> = split
            .videos(manifest, TRAIN)
            .into_iter()
            .filter(|v| left_out.is_none_or(|s| v.source != *s))
            .cloned()
            .collect();
        balance_undersample(&pool, |v| class_label(cfg.task, v), cfg.seed, u64::from(repetition))?
    };
    Ok(RepetitionPlan { repetition, train, test })
}

type FrameIndex<'s> = BTreeMap<&'s str, Vec<&'s EmbeddingRecord>>;

fn frame_vector(r: &EmbeddingRecord, normalize: bool) -> Result<Vec<f64>> {
    let v = r.vector_f64();
    if normalize {
        Ok(l2_normalize(&v)?.into_inner())
    } else {
        Ok(v)
    }
}

fn check_backend(store: &EmbeddingStore, cfg: &ExperimentConfig) -> Result<()> {
    if !cfg.backend.is_empty() && !store.is_empty() && store.backend() != cfg.backend {
        return Err(Error::Config(format!(
            "store holds {:?} embeddings, experiment expects {:?}",
            store.backend(),
            cfg.backend
        )));
    }
    Ok(())
}

fn missing_videos<'v>(videos: impl IntoIterator<Item = &'v VideoRecord>, index: &FrameIndex<'_>) -> Vec<String> {
    videos
        .into_iter()
        .filter(|v| !index.contains_key(v.video_id.as_str()))
        .map(|v| v.video_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Trains the task's classifier on every frame of `videos`.
pub fn train_on_videos(store: &EmbeddingStore, videos: &[VideoRecord], cfg: &ExperimentConfig) -> Result<AnyModel> {
    train_indexed(&store.by_video(), videos, cfg).map(|(m, _)| m)
}

fn train_indexed(index: &FrameIndex<'_>, videos: &[VideoRecord], cfg: &ExperimentConfig) -> Result<(AnyModel, usize)> {
    let missing = missing_videos(videos, index);
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for v in videos {
        let label = class_label(cfg.task, v);
        for r in &index[v.video_id.as_str()] {
            let x = frame_vector(r, cfg.normalize_embeddings)?;
            dim = x.len();
            data.extend(x);
            labels.push(label.clone());
        }
    }
    let x = Matrix::from_flat(labels.len(), dim, data)?;
    let model = match cfg.task {
        Task::TwoClass => AnyModel::Binary(train_binary_labeled(&x, &labels, &cfg.kernel, &cfg.train)?),
        Task::MultiClass => AnyModel::Multiclass(train_multiclass(&x, &labels, &cfg.kernel, &cfg.train)?),
        Task::ZeroShot => return Err(Error::contract("zero-shot has nothing to train")),
    };
    Ok((model, labels.len()))
}

enum Predictor<'a> {
    Svm(&'a AnyModel),
    Prompt(&'a EmbeddedPair),
}

impl Predictor<'_> {
    fn predict(&self, x: &[f64]) -> Result<String> {
        match self {
            Predictor::Svm(m) => m.predict(x).map(str::to_owned),
            Predictor::Prompt(p) => classify_frame(x, p).map(|v| v.as_str().to_owned()),
        }
    }
}

/// Whether test videos without embeddings are skipped or abort the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    Skip,
    Abort,
}

fn evaluate(
    index: &FrameIndex<'_>,
    plan: &RepetitionPlan,
    predictor: &Predictor<'_>,
    class_order: &[String],
    cfg: &ExperimentConfig,
    n_train_frames: usize,
    policy: MissingPolicy,
) -> Result<RepetitionResult> {
    let skipped = missing_videos(&plan.test, index);
    if !skipped.is_empty() {
        if policy == MissingPolicy::Abort {
            return Err(Error::MissingEmbeddings(skipped));
        }
        log::warn!(
            "repetition {}: skipping {} test video(s) without embeddings",
            plan.repetition,
            skipped.len()
        );
    }
    let tested: Vec<&VideoRecord> = plan
        .test
        .iter()
        .filter(|v| index.contains_key(v.video_id.as_str()))
        .collect();
    if tested.is_empty() {
        return Err(Error::contract(format!("repetition {} has no test videos", plan.repetition)));
    }

    let jobs: Vec<(&VideoRecord, &EmbeddingRecord)> = tested
        .iter()
        .flat_map(|v| index[v.video_id.as_str()].iter().map(move |r| (*v, *r)))
        .collect();
    let frame_preds: Vec<String> = jobs
        .par_iter()
        .map(|(_, r)| predictor.predict(&frame_vector(r, cfg.normalize_embeddings)?))
        .collect::<Result<_>>()?;
    let frame_truth: Vec<String> = jobs.iter().map(|(v, _)| class_label(cfg.task, v)).collect();

    let mut per_video: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for ((v, _), p) in jobs.iter().zip(&frame_preds) {
        per_video.entry(v.video_id.clone()).or_default().push(p);
    }
    let video_pred = match cfg.task {
        Task::MultiClass => aggregate_video_plurality(&per_video, class_order)?,
        _ => aggregate_video(&per_video, FAKE, REAL)?,
    };
    let truth_of: BTreeMap<&str, String> = tested
        .iter()
        .map(|v| (v.video_id.as_str(), class_label(cfg.task, v)))
        .collect();
    let (video_preds, video_truth): (Vec<&str>, Vec<&str>) = video_pred
        .iter()
        .map(|(id, p)| (p.as_str(), truth_of[id.as_str()].as_str()))
        .unzip();

    let per_class_frame_acc = per_class_accuracy(&frame_preds, &frame_truth)?;
    let per_class_video_acc = per_class_accuracy(&video_preds, &video_truth)?;
    let mut train_videos: Vec<String> = plan.train.iter().map(|v| v.video_id.clone()).collect();
    train_videos.sort();
    Ok(RepetitionResult {
        repetition: plan.repetition,
        frame_macro_acc: super::metrics::mean_of(&per_class_frame_acc),
        video_macro_acc: super::metrics::mean_of(&per_class_video_acc),
        per_class_frame_acc,
        per_class_video_acc,
        confusion_matrix: ConfusionMatrix::new(&video_preds, &video_truth)?,
        frame_confusion_matrix: ConfusionMatrix::new(&frame_preds, &frame_truth)?,
        train_videos,
        test_videos: video_pred.keys().cloned().collect(),
        skipped_videos: skipped,
        n_train_frames,
        n_test_frames: frame_preds.len(),
    })
}

struct Trained {
    model: Option<AnyModel>,
    n_frames: usize,
    classes: Vec<String>,
}

fn train_for_plan(index: &FrameIndex<'_>, plan: &RepetitionPlan, cfg: &ExperimentConfig) -> Result<Trained> {
    if cfg.task == Task::ZeroShot {
        return Ok(Trained {
            model: None,
            n_frames: 0,
            classes: vec![FAKE.into(), REAL.into()],
        });
    }
    let (model, n_frames) = train_indexed(index, &plan.train, cfg)?;
    let classes = model.classes();
    Ok(Trained {
        model: Some(model),
        n_frames,
        classes,
    })
}

fn predictor<'a>(trained: &'a Trained, cfg: &'a ExperimentConfig) -> Result<Predictor<'a>> {
    match (&trained.model, &cfg.prompt_pair) {
        (Some(m), _) => Ok(Predictor::Svm(m)),
        (None, Some(p)) => Ok(Predictor::Prompt(p)),
        (None, None) => Err(Error::contract("zero-shot evaluation needs an embedded prompt pair")),
    }
}

fn require_coverage(manifest: &Manifest, index: &FrameIndex<'_>) -> Result<()> {
    let missing = missing_videos(manifest.records(), index);
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingEmbeddings(missing))
    }
}

/// Repeated split → balance → train → test, with frame and video macro
/// accuracy per repetition. Repetitions run concurrently; the report is a
/// deterministic function of the inputs.
pub fn run_experiment(manifest: &Manifest, store: &EmbeddingStore, cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    check_backend(store, cfg)?;
    let index = store.by_video();
    require_coverage(manifest, &index)?;
    let reps = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let plan = plan_repetition(manifest, cfg, r)?;
            let trained = train_for_plan(&index, &plan, cfg)?;
            evaluate(
                &index,
                &plan,
                &predictor(&trained, cfg)?,
                &trained.classes,
                cfg,
                trained.n_frames,
                MissingPolicy::Abort,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    EvaluationReport::new(cfg.clone(), store.backend().to_owned(), reps)
}

/// For each generator, trains without it and tests on real plus it alone.
pub fn leave_one_out(
    manifest: &Manifest,
    store: &EmbeddingStore,
    cfg: &ExperimentConfig,
) -> Result<BTreeMap<String, EvaluationReport>> {
    let fakes: Vec<_> = manifest.sources().into_iter().filter(|s| !s.is_real()).collect();
    if fakes.len() < 2 {
        return Err(Error::contract(format!(
            "leave-one-out needs at least two fake sources, found {}",
            fakes.len()
        )));
    }
    fakes
        .into_par_iter()
        .map(|s| {
            let cfg = ExperimentConfig {
                leave_out_source: Some(s.clone()),
                ..cfg.clone()
            };
            run_experiment(manifest, store, &cfg).map(|r| (s.label().to_owned(), r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub mode: Degradation,
    /// Percent of the original resolution or bitrate, each in `(0, 100]`.
    pub levels: Vec<f64>,
    /// Train on laundered embeddings of each level instead of clean ones.
    pub launder_train: bool,
    pub missing: MissingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub options: SweepOptions,
    pub levels: Vec<LevelReport>,
}

/// Evaluates models trained on `clean` against test embeddings of laundered
/// videos. `store_builder` supplies the store for each level below 100;
/// level 100 uses `clean` itself and reproduces [`run_experiment`].
pub fn robustness_sweep<F>(
    manifest: &Manifest,
    clean: &EmbeddingStore,
    mut store_builder: F,
    opts: &SweepOptions,
    cfg: &ExperimentConfig,
) -> Result<SweepReport>
where
    F: FnMut(f64) -> Result<EmbeddingStore>,
{
    cfg.validate()?;
    if opts.levels.is_empty() {
        return Err(Error::contract("robustness sweep needs at least one level"));
    }
    if let Some(bad) = opts.levels.iter().find(|l| !(**l > 0.0 && **l <= 100.0)) {
        return Err(Error::contract(format!("level {bad} is outside (0, 100]")));
    }
    check_backend(clean, cfg)?;
    let clean_index = clean.by_video();
    require_coverage(manifest, &clean_index)?;

    let mut laundered: Vec<Option<EmbeddingStore>> = Vec::with_capacity(opts.levels.len());
    for &level in &opts.levels {
        if level == 100.0 {
            laundered.push(None);
        } else {
            let store = store_builder(level)?;
            check_backend(&store, cfg)?;
            laundered.push(Some(store));
        }
    }
    let indices: Vec<FrameIndex<'_>> = laundered
        .iter()
        .map(|s| s.as_ref().map_or_else(|| clean_index.clone(), EmbeddingStore::by_video))
        .collect();

    // per_rep[r][level]
    let per_rep: Vec<Vec<RepetitionResult>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let plan = plan_repetition(manifest, cfg, r)?;
            let shared = if opts.launder_train {
                None
            } else {
                Some(train_for_plan(&clean_index, &plan, cfg)?)
            };
            indices
                .iter()
                .map(|index| {
                    let own;
                    let trained = match &shared {
                        Some(t) => t,
                        None => {
                            own = train_for_plan(index, &plan, cfg)?;
                            &own
                        }
                    };
                    evaluate(
                        index,
                        &plan,
                        &predictor(trained, cfg)?,
                        &trained.classes,
                        cfg,
                        trained.n_frames,
                        opts.missing,
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut levels = Vec::with_capacity(opts.levels.len());
    for (li, &level) in opts.levels.iter().enumerate() {
        let reps = per_rep.iter().map(|row| row[li].clone()).collect();
        let backend = laundered[li].as_ref().unwrap_or(clean).backend().to_owned();
        levels.push(LevelReport {
            level,
            report: EvaluationReport::new(cfg.clone(), backend, reps)?,
        });
    }
    Ok(SweepReport {
        options: opts.clone(),
        levels,
    })
}
