use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tract_onnx::prelude::*;

use super::preprocess::{load_frame, preprocess_frame, FrameTensor};
use super::tokenizer::ClipTokenizer;
use crate::error::{Error, Result};
use crate::vecmath::Vector;

pub const IMAGE_ENCODER_FILE: &str = "image_encoder.onnx";
pub const TEXT_ENCODER_FILE: &str = "text_encoder.onnx";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerAssets {
    pub vocab: PathBuf,
    pub merges: PathBuf,
}

/// Sidecar description of an exported embedding model.
///
/// `model_path` names a directory holding `image_encoder.onnx` and
/// `text_encoder.onnx`. Relative paths are resolved against the sidecar's
/// directory by [`BackendSpec::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub name: String,
    pub model_path: PathBuf,
    pub embed_dim: usize,
    pub image_size: u32,
    pub pixel_mean: [f64; 3],
    pub pixel_std: [f64; 3],
    pub tokenizer_assets: TokenizerAssets,
    pub max_tokens: usize,
}

impl BackendSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: BackendSpec = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        spec.model_path = base.join(&spec.model_path);
        spec.tokenizer_assets.vocab = base.join(&spec.tokenizer_assets.vocab);
        spec.tokenizer_assets.merges = base.join(&spec.tokenizer_assets.merges);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("backend name is empty".into()));
        }
        if self.embed_dim == 0 || self.image_size == 0 {
            return Err(Error::Config("embed_dim and image_size must be positive".into()));
        }
        if self.max_tokens < 2 {
            return Err(Error::Config("max_tokens must leave room for start and end tokens".into()));
        }
        if self.pixel_std.iter().any(|s| !(*s > 0.0)) || self.pixel_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("pixel_std must be positive and pixel_mean finite".into()));
        }
        Ok(())
    }

    pub fn image_encoder_path(&self) -> PathBuf {
        self.model_path.join(IMAGE_ENCODER_FILE)
    }

    pub fn text_encoder_path(&self) -> PathBuf {
        self.model_path.join(TEXT_ENCODER_FILE)
    }

    /// Bounds every preprocessed value must fall within.
    pub fn tensor_bounds(&self) -> (f64, f64) {
        let max_mean = self.pixel_mean.iter().copied().fold(f64::MIN, f64::max);
        let min_mean = self.pixel_mean.iter().copied().fold(f64::MAX, f64::min);
        let min_std = self.pixel_std.iter().copied().fold(f64::MAX, f64::min);
        ((0.0 - max_mean) / min_std, (1.0 - min_mean) / min_std)
    }
}

type Plan = Arc<TypedRunnableModel>;

fn backend_err(what: &str, path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Backend(format!("{what} ({}): {e:#}", path.display()))
}

/// Loaded image and text encoders with their tokenizer.
///
/// Immutable after loading and safe to share across threads.
pub struct Backend {
    spec: BackendSpec,
    image: Plan,
    text: Plan,
    text_has_mask: bool,
    tokenizer: ClipTokenizer,
    digest: String,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend").field("spec", &self.spec).finish_non_exhaustive()
    }
}

fn select_output(model: &mut InferenceModel, preferred: &str) {
    if model.output_outlets().map(|o| o.len() > 1).unwrap_or(false) {
        let _ = model.select_outputs_by_name([preferred]);
    }
}

fn load_image_plan(path: &Path, size: usize) -> Result<Plan> {
    let mut model = tract_onnx::onnx()
        .model_for_path(path)
        .map_err(|e| backend_err("cannot read image encoder", path, e))?;
    select_output(&mut model, "image_embeds");
    model
        .with_input_fact(0, f32::fact([1, 3, size, size]).into())
        .and_then(|m| m.into_optimized())
        .and_then(|m| m.into_runnable())
        .map_err(|e| backend_err("cannot prepare image encoder", path, e))
}

fn load_text_plan(path: &Path, max_tokens: usize) -> Result<(Plan, bool)> {
    let mut model = tract_onnx::onnx()
        .model_for_path(path)
        .map_err(|e| backend_err("cannot read text encoder", path, e))?;
    select_output(&mut model, "text_embeds");
    let n_inputs = model
        .input_outlets()
        .map_err(|e| backend_err("cannot inspect text encoder", path, e))?
        .len();
    if !(1..=2).contains(&n_inputs) {
        return Err(backend_err(
            "text encoder must take input_ids and optionally attention_mask",
            path,
            format!("found {n_inputs} inputs"),
        ));
    }
    let mut model = model
        .with_input_fact(0, i64::fact([1, max_tokens]).into())
        .map_err(|e| backend_err("cannot prepare text encoder", path, e))?;
    if n_inputs == 2 {
        model = model
            .with_input_fact(1, i64::fact([1, max_tokens]).into())
            .map_err(|e| backend_err("cannot prepare text encoder", path, e))?;
    }
    let plan = model
        .into_optimized()
        .and_then(|m| m.into_runnable())
        .map_err(|e| backend_err("cannot prepare text encoder", path, e))?;
    Ok((plan, n_inputs == 2))
}

fn hash_file(hasher: &mut Sha256, path: &Path) -> Result<()> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Ok(());
        }
        hasher.update(&buf[..n]);
    }
}

fn single_output(outputs: TVec<TValue>, expected: usize, path: &Path) -> Result<Vec<f32>> {
    let out = outputs
        .into_iter()
        .next()
        .ok_or_else(|| backend_err("encoder produced no output", path, "empty"))?;
    let view = out
        .try_as_plain_ram()
        .map_err(|e| backend_err("encoder output is not addressable", path, e))?;
    let values = view
        .as_slice::<f32>()
        .map_err(|e| backend_err("encoder output is not f32", path, e))?;
    if values.len() != expected {
        return Err(Error::Backend(format!(
            "{} produced {} values (shape {:?}), expected embed_dim {expected}",
            path.display(),
            values.len(),
            out.shape()
        )));
    }
    Ok(values.to_vec())
}

impl Backend {
    /// Loads the sidecar at `spec_path` and both encoders it names, then runs
    /// each encoder once to confirm its output width equals `embed_dim`.
    pub fn load(spec_path: &Path) -> Result<Self> {
        Self::from_spec(BackendSpec::load(spec_path)?)
    }

    pub fn from_spec(spec: BackendSpec) -> Result<Self> {
        spec.validate()?;
        let tokenizer = ClipTokenizer::from_files(&spec.tokenizer_assets.vocab, &spec.tokenizer_assets.merges)?;
        let image_path = spec.image_encoder_path();
        let text_path = spec.text_encoder_path();
        let image = load_image_plan(&image_path, spec.image_size as usize)?;
        let (text, text_has_mask) = load_text_plan(&text_path, spec.max_tokens)?;

        let mut hasher = Sha256::new();
        hash_file(&mut hasher, &image_path)?;
        hash_file(&mut hasher, &text_path)?;
        let digest = hex::encode(hasher.finalize());

        let backend = Backend {
            spec,
            image,
            text,
            text_has_mask,
            tokenizer,
            digest,
        };
        let s = backend.spec.image_size as usize;
        backend.embed_image(&FrameTensor::zeros(s))?;
        backend.embed_text("a")?;
        Ok(backend)
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn embed_dim(&self) -> usize {
        self.spec.embed_dim
    }

    pub fn tokenizer(&self) -> &ClipTokenizer {
        &self.tokenizer
    }

    /// SHA-256 over both encoder files, hex-encoded.
    pub fn model_digest(&self) -> &str {
        &self.digest
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<i64>> {
        self.tokenizer.encode_padded(text, self.spec.max_tokens)
    }

    /// Raw image embedding as the encoder produced it.
    pub fn embed_image_f32(&self, tensor: &FrameTensor) -> Result<Vec<f32>> {
        let s = self.spec.image_size as usize;
        if tensor.size() != s {
            return Err(Error::contract(format!(
                "tensor is {}x{}, backend expects {s}x{s}",
                tensor.size(),
                tensor.size()
            )));
        }
        let path = self.spec.image_encoder_path();
        let input = Tensor::from_shape(&[1, 3, s, s], tensor.as_slice())
            .map_err(|e| backend_err("cannot build image input", &path, e))?;
        let outputs = self
            .image
            .run(tvec!(input.into()))
            .map_err(|e| backend_err("image encoder failed", &path, e))?;
        single_output(outputs, self.spec.embed_dim, &path)
    }

    pub fn embed_image(&self, tensor: &FrameTensor) -> Result<Vector> {
        to_vector(self.embed_image_f32(tensor)?)
    }

    pub fn embed_text_f32(&self, text: &str) -> Result<Vec<f32>> {
        let ids = self.tokenize(text)?;
        let n = self.spec.max_tokens;
        let path = self.spec.text_encoder_path();
        let mut inputs: TVec<TValue> = tvec!(Tensor::from_shape(&[1, n], &ids)
            .map_err(|e| backend_err("cannot build text input", &path, e))?
            .into());
        if self.text_has_mask {
            let mask = self.tokenizer.attention_mask(&ids);
            inputs.push(
                Tensor::from_shape(&[1, n], &mask)
                    .map_err(|e| backend_err("cannot build attention mask", &path, e))?
                    .into(),
            );
        }
        let outputs = self
            .text
            .run(inputs)
            .map_err(|e| backend_err("text encoder failed", &path, e))?;
        single_output(outputs, self.spec.embed_dim, &path)
    }

    pub fn embed_text(&self, text: &str) -> Result<Vector> {
        to_vector(self.embed_text_f32(text)?)
    }

    /// Reads, preprocesses and embeds one frame image.
    pub fn embed_frame_file(&self, path: &Path) -> Result<Vec<f32>> {
        let image = load_frame(path)?;
        self.embed_image_f32(&preprocess_frame(&image, &self.spec)?)
    }
}

fn to_vector(values: Vec<f32>) -> Result<Vector> {
    Vector::new(values.into_iter().map(f64::from).collect())
        .map_err(|_| Error::Backend("encoder produced non-finite values".into()))
}

pub fn embed_image(backend: &Backend, tensor: &FrameTensor) -> Result<Vector> {
    backend.embed_image(tensor)
}

pub fn embed_text(backend: &Backend, text: &str) -> Result<Vector> {
    backend.embed_text(text)
}
