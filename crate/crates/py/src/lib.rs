//! Python bindings: manifests, embedding stores, backends, SVMs, zero-shot
//! classification, PCA, metrics and experiments.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use veriframe::dataset as ds;
use veriframe::embed as em;
use veriframe::eval as ev;
use veriframe::svm;
use veriframe::vecmath::{self as vm, Matrix, Vector};
use veriframe::zeroshot as zs;
use veriframe::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Contract(_) | Error::Domain(_) | Error::Parse { .. } | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for veriframe::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).py()
}

/// A validated corpus catalog.
#[pyclass(name = "Manifest", frozen)]
struct PyManifest(ds::Manifest);

#[pymethods]
impl PyManifest {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ds::load_manifest(path).py().map(PyManifest)
    }

    fn __len__(&self) -> usize {
        self.0.records().len()
    }

    fn video_ids(&self) -> Vec<String> {
        self.0.records().iter().map(|r| r.video_id.clone()).collect()
    }

    /// Source label per video, in manifest order.
    fn sources(&self) -> Vec<String> {
        self.0.records().iter().map(|r| r.source.label().to_owned()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }
}

/// Per-frame embeddings with provenance.
#[pyclass(name = "EmbeddingStore", frozen)]
struct PyStore(em::EmbeddingStore);

#[pymethods]
impl PyStore {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        em::EmbeddingStore::read(&path).py().map(PyStore)
    }

    /// Builds a store from parallel lists; `sources` are labels such as "Real" or "Veo".
    #[staticmethod]
    fn from_vectors(
        backend: String,
        video_ids: Vec<String>,
        sources: Vec<String>,
        action_ids: Vec<u32>,
        frame_indices: Vec<u32>,
        vectors: Vec<Vec<f32>>,
    ) -> PyResult<Self> {
        let n = video_ids.len();
        if [sources.len(), action_ids.len(), frame_indices.len(), vectors.len()].iter().any(|&l| l != n) {
            return Err(PyValueError::new_err("all columns must have the same length"));
        }
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            records.push(em::EmbeddingRecord {
                video_id: video_ids[i].clone(),
                source: parse(&sources[i])?,
                action_id: action_ids[i],
                frame_index: frame_indices[i],
                backend: backend.clone(),
                vector: vectors[i].clone(),
            });
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut s = em::EmbeddingStore::new(backend, dim, records).py()?;
        s.canonicalize();
        Ok(PyStore(s))
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(&path).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn backend(&self) -> String {
        self.0.backend().to_owned()
    }

    fn video_ids(&self) -> Vec<String> {
        self.0.records().iter().map(|r| r.video_id.clone()).collect()
    }

    fn frame_indices(&self) -> Vec<u32> {
        self.0.records().iter().map(|r| r.frame_index).collect()
    }

    fn vectors(&self) -> Vec<Vec<f64>> {
        self.0.records().iter().map(|r| r.vector_f64()).collect()
    }
}

/// An exported image/text encoder pair.
#[pyclass(name = "Backend", frozen)]
struct PyBackend(em::Backend);

#[pymethods]
impl PyBackend {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        em::Backend::load(&path).py().map(PyBackend)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_owned()
    }

    #[getter]
    fn embed_dim(&self) -> usize {
        self.0.embed_dim()
    }

    fn model_digest(&self) -> String {
        self.0.model_digest().to_owned()
    }

    fn tokenize(&self, text: &str) -> PyResult<Vec<i64>> {
        self.0.tokenize(text).py()
    }

    fn embed_frame(&self, py: Python<'_>, path: PathBuf) -> PyResult<Vec<f32>> {
        py.allow_threads(|| self.0.embed_frame_file(&path)).py()
    }

    fn embed_text(&self, py: Python<'_>, text: &str) -> PyResult<Vec<f64>> {
        py.allow_threads(|| self.0.embed_text(text)).py().map(Vector::into_inner)
    }
}

/// A trained binary or one-vs-one multiclass SVM.
#[pyclass(name = "SvmModel", frozen)]
struct PySvm(svm::AnyModel);

fn kernel_spec(kernel: &str, gamma: Option<f64>, degree: u32, coef0: f64) -> PyResult<svm::KernelSpec> {
    Ok(svm::KernelSpec {
        kind: parse(kernel)?,
        gamma: gamma.map_or(svm::Gamma::Scale, svm::Gamma::Value),
        degree,
        coef0,
    })
}

fn train_cfg(c: f64, tol: f64) -> svm::TrainConfig {
    svm::TrainConfig {
        c,
        tol,
        ..svm::TrainConfig::default()
    }
}

#[pymethods]
impl PySvm {
    /// Trains on string labels; two labels give a binary model, more give one-vs-one.
    #[staticmethod]
    #[pyo3(signature = (x, labels, kernel="linear", gamma=None, degree=3, coef0=0.0, c=1.0, tol=1e-3))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        labels: Vec<String>,
        kernel: &str,
        gamma: Option<f64>,
        degree: u32,
        coef0: f64,
        c: f64,
        tol: f64,
    ) -> PyResult<Self> {
        let x = matrix(x)?;
        let spec = kernel_spec(kernel, gamma, degree, coef0)?;
        let cfg = train_cfg(c, tol);
        let distinct: std::collections::BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        py.allow_threads(|| {
            if distinct.len() == 2 {
                svm::train_binary_labeled(&x, &labels, &spec, &cfg).map(svm::AnyModel::from)
            } else {
                svm::train_multiclass(&x, &labels, &spec, &cfg).map(svm::AnyModel::from)
            }
        })
        .py()
        .map(PySvm)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        svm::load_model(&path).py().map(PySvm)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        svm::model_from_json(text).py().map(PySvm)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        svm::save_model(&self.0, &path).py()
    }

    fn to_json(&self) -> PyResult<String> {
        svm::model_to_json(&self.0).py()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.0.classes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<String> {
        self.0.predict(&x).py().map(str::to_owned)
    }

    fn predict_batch(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<String>> {
        xs.iter().map(|x| self.0.predict(x).py().map(str::to_owned)).collect()
    }

    /// Signed distance for binary models; positive means `classes[1]`.
    fn decision_function(&self, x: Vec<f64>) -> PyResult<f64> {
        match &self.0 {
            svm::AnyModel::Binary(m) => m.decision_function(&x).py(),
            svm::AnyModel::Multiclass(_) => Err(PyValueError::new_err("decision_function needs a binary model")),
        }
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, kernel="linear", gamma=1.0, degree=3, coef0=0.0))]
fn kernel_eval(a: Vec<f64>, b: Vec<f64>, kernel: &str, gamma: f64, degree: u32, coef0: f64) -> PyResult<f64> {
    let k = match parse::<svm::KernelKind>(kernel)? {
        svm::KernelKind::Linear => svm::Kernel::Linear,
        svm::KernelKind::Rbf => svm::Kernel::Rbf { gamma },
        svm::KernelKind::Poly => svm::Kernel::Poly { gamma, degree, coef0 },
    };
    k.eval(&a, &b).py()
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    vm::cosine_similarity(&a, &b).py()
}

#[pyfunction]
fn l2_normalize(v: Vec<f64>) -> PyResult<Vec<f64>> {
    vm::l2_normalize(&v).py().map(Vector::into_inner)
}

/// A fitted principal component model.
#[pyclass(name = "Pca", frozen)]
struct PyPca(vm::PcaModel);

#[pymethods]
impl PyPca {
    #[staticmethod]
    fn fit(data: Vec<Vec<f64>>, k: usize) -> PyResult<Self> {
        vm::pca_fit(&matrix(data)?, k).py().map(PyPca)
    }

    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.0.components.rows().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn explained_variance(&self) -> Vec<f64> {
        self.0.explained_variance.clone()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean.as_slice().to_vec()
    }

    fn project(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.project(&v).py().map(Vector::into_inner)
    }

    fn reconstruct(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.reconstruct(&p).py().map(Vector::into_inner)
    }
}

#[pyfunction]
fn macro_accuracy(preds: Vec<String>, truth: Vec<String>) -> PyResult<f64> {
    ev::macro_accuracy(&preds, &truth).py()
}

#[pyfunction]
fn per_class_accuracy(preds: Vec<String>, truth: Vec<String>) -> PyResult<BTreeMap<String, f64>> {
    ev::per_class_accuracy(&preds, &truth).py()
}

/// Strict-majority video labels from per-video frame labels.
#[pyfunction]
#[pyo3(signature = (frame_preds, positive="Fake", negative="Real"))]
fn aggregate_video(
    frame_preds: BTreeMap<String, Vec<String>>,
    positive: &str,
    negative: &str,
) -> PyResult<BTreeMap<String, String>> {
    ev::aggregate_video(&frame_preds, positive, negative).py()
}

/// `(id, real_text, fake_text)` for P1..P5.
#[pyfunction]
#[pyo3(signature = (templated=true))]
fn builtin_prompt_pairs(templated: bool) -> Vec<(String, String, String)> {
    zs::builtin_prompt_pairs_with(templated)
        .into_iter()
        .map(|p| (p.id, p.real_text, p.fake_text))
        .collect()
}

fn embedded_pair(real: Vec<f64>, fake: Vec<f64>) -> PyResult<zs::EmbeddedPair> {
    zs::EmbeddedPair::new(
        zs::PromptPair::new("custom", "real", "fake").py()?,
        Vector::new(real).py()?,
        Vector::new(fake).py()?,
    )
    .py()
}

/// "Real" iff the frame is at least as cosine-similar to `real` as to `fake`.
#[pyfunction]
fn classify_frame(frame: Vec<f64>, real: Vec<f64>, fake: Vec<f64>) -> PyResult<&'static str> {
    zs::classify_frame(&frame, &embedded_pair(real, fake)?).py().map(zs::Verdict::as_str)
}

#[pyfunction]
fn classify_video(frames: Vec<Vec<f64>>, real: Vec<f64>, fake: Vec<f64>) -> PyResult<&'static str> {
    zs::classify_video(&frames, &embedded_pair(real, fake)?).py().map(zs::Verdict::as_str)
}

#[allow(clippy::too_many_arguments)]
fn config(
    task: &str,
    kernel: &str,
    gamma: Option<f64>,
    reps: u32,
    seed: u64,
    split: &str,
    normalize: bool,
    prompt: Option<(Vec<f64>, Vec<f64>)>,
) -> PyResult<ev::ExperimentConfig> {
    let mut cfg = ev::ExperimentConfig::new(parse(task)?);
    cfg.kernel = kernel_spec(kernel, gamma, 3, 0.0)?;
    cfg.repetitions = reps;
    cfg.seed = seed;
    cfg.split_scheme = parse(split)?;
    cfg.normalize_embeddings = normalize;
    if let Some((r, f)) = prompt {
        cfg.prompt_pair = Some(embedded_pair(r, f)?);
    }
    Ok(cfg)
}

/// Runs the repeated split protocol and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (manifest, store, task="two-class", kernel="linear", gamma=None, reps=5, seed=0, split="80-20", normalize=false, prompt=None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    manifest: &PyManifest,
    store: &PyStore,
    task: &str,
    kernel: &str,
    gamma: Option<f64>,
    reps: u32,
    seed: u64,
    split: &str,
    normalize: bool,
    prompt: Option<(Vec<f64>, Vec<f64>)>,
) -> PyResult<String> {
    let cfg = config(task, kernel, gamma, reps, seed, split, normalize, prompt)?;
    py.allow_threads(|| ev::run_experiment(&manifest.0, &store.0, &cfg).and_then(|r| r.to_json()))
        .py()
}

/// Leave-one-generator-out reports as JSON, keyed by left-out source.
#[pyfunction]
#[pyo3(signature = (manifest, store, kernel="linear", reps=5, seed=0))]
fn leave_one_out(
    py: Python<'_>,
    manifest: &PyManifest,
    store: &PyStore,
    kernel: &str,
    reps: u32,
    seed: u64,
) -> PyResult<BTreeMap<String, String>> {
    let cfg = config("two-class", kernel, None, reps, seed, "80-20", false, None)?;
    py.allow_threads(|| {
        ev::leave_one_out(&manifest.0, &store.0, &cfg)?
            .into_iter()
            .map(|(k, r)| Ok((k, r.to_json()?)))
            .collect::<veriframe::Result<_>>()
    })
    .py()
}

/// Stream metadata of a video: width, height, duration, fps, bitrate_bps.
#[pyfunction]
fn probe(path: PathBuf) -> PyResult<BTreeMap<&'static str, f64>> {
    let p = veriframe::launder::probe(&path, &veriframe::transcoder::Transcoder::from_env()).py()?;
    Ok(BTreeMap::from([
        ("width", f64::from(p.width)),
        ("height", f64::from(p.height)),
        ("duration", p.duration),
        ("fps", p.fps),
        ("bitrate_bps", p.bitrate_bps),
    ]))
}

#[pymodule(name = "veriframe")]
fn veriframe_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifest>()?;
    m.add_class::<PyStore>()?;
    m.add_class::<PyBackend>()?;
    m.add_class::<PySvm>()?;
    m.add_class::<PyPca>()?;
    m.add_function(wrap_pyfunction!(kernel_eval, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(l2_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(macro_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(per_class_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_video, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_prompt_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(classify_frame, m)?)?;
    m.add_function(wrap_pyfunction!(classify_video, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(leave_one_out, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
