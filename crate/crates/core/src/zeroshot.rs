//! Training-free frame-to-prompt classification.
//!
//! A frame is called real when its embedding is at least as cosine-similar
//! to the "real" prompt as to the "fake" prompt. A video is fake only when a
//! strict majority of its frames are.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::Backend;
use crate::error::{Error, Result};
use crate::vecmath::{cosine_similarity, Vector};

pub const CUSTOM_PAIR_SEPARATOR: &str = "::";

const BUILTIN: [(&str, &str, &str, &str, &str); 5] = [
    ("P1", "a", "real photo", "a", "fake photo"),
    ("P2", "a", "real image", "a", "fake image"),
    ("P3", "an", "authentic image", "an", "AI-generated image"),
    ("P4", "an", "authentic photo", "a", "manipulated photo"),
    ("P5", "an", "authentic image", "a", "manipulated image"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Real,
    Fake,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Real => "Real",
            Verdict::Fake => "Fake",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPair {
    pub id: String,
    pub real_text: String,
    pub fake_text: String,
}

impl PromptPair {
    pub fn new(id: impl Into<String>, real_text: impl Into<String>, fake_text: impl Into<String>) -> Result<Self> {
        let (real_text, fake_text) = (real_text.into(), fake_text.into());
        if real_text.trim().is_empty() || fake_text.trim().is_empty() {
            return Err(Error::contract("prompt texts must be non-empty"));
        }
        if real_text == fake_text {
            return Err(Error::contract(format!("real and fake prompts are identical: {real_text:?}")));
        }
        Ok(PromptPair {
            id: id.into(),
            real_text,
            fake_text,
        })
    }

    /// Parses `"real text::fake text"`; the id is the spec string itself.
    pub fn custom(spec: &str) -> Result<Self> {
        let (real, fake) = spec.split_once(CUSTOM_PAIR_SEPARATOR).ok_or_else(|| {
            Error::parse("prompt pair", format!("expected \"real text::fake text\", got {spec:?}"))
        })?;
        Self::new(spec, real.trim(), fake.trim())
    }

    /// A built-in id (`P1`..`P5`, with or without the article template) or a
    /// custom `real::fake` pair.
    pub fn resolve(spec: &str, templated: bool) -> Result<Self> {
        if spec.contains(CUSTOM_PAIR_SEPARATOR) {
            return Self::custom(spec);
        }
        builtin_prompt_pairs_with(templated)
            .into_iter()
            .find(|p| p.id.eq_ignore_ascii_case(spec))
            .ok_or_else(|| Error::parse("prompt pair", format!("unknown prompt pair {spec:?}")))
    }

    /// Swaps the real and fake texts.
    pub fn swapped(&self) -> Self {
        PromptPair {
            id: format!("{}-swapped", self.id),
            real_text: self.fake_text.clone(),
            fake_text: self.real_text.clone(),
        }
    }
}

impl FromStr for PromptPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::resolve(s, true)
    }
}

/// The five built-in pairs rendered as `"a/an {phrase}"`.
pub fn builtin_prompt_pairs() -> Vec<PromptPair> {
    builtin_prompt_pairs_with(true)
}

/// The built-in pairs, with the article template applied or as bare phrases.
pub fn builtin_prompt_pairs_with(templated: bool) -> Vec<PromptPair> {
    BUILTIN
        .iter()
        .map(|&(id, ra, real, fa, fake)| {
            let render = |article: &str, phrase: &str| {
                if templated {
                    format!("{article} {phrase}")
                } else {
                    phrase.to_owned()
                }
            };
            PromptPair {
                id: id.into(),
                real_text: render(ra, real),
                fake_text: render(fa, fake),
            }
        })
        .collect()
}

/// A prompt pair with both texts embedded by one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPair {
    pub pair: PromptPair,
    pub real_embedding: Vector,
    pub fake_embedding: Vector,
}

impl EmbeddedPair {
    pub fn new(pair: PromptPair, real_embedding: Vector, fake_embedding: Vector) -> Result<Self> {
        if real_embedding.dim() != fake_embedding.dim() {
            return Err(Error::contract("prompt embeddings differ in dimension"));
        }
        Ok(EmbeddedPair {
            pair,
            real_embedding,
            fake_embedding,
        })
    }

    pub fn embed(backend: &Backend, pair: PromptPair) -> Result<Self> {
        let real = backend.embed_text(&pair.real_text)?;
        let fake = backend.embed_text(&pair.fake_text)?;
        Self::new(pair, real, fake)
    }

    pub fn dim(&self) -> usize {
        self.real_embedding.dim()
    }

    /// `(cos(frame, real), cos(frame, fake))`.
    pub fn similarities(&self, frame: &[f64]) -> Result<(f64, f64)> {
        Ok((
            cosine_similarity(frame, &self.real_embedding)?,
            cosine_similarity(frame, &self.fake_embedding)?,
        ))
    }

    pub fn swapped(&self) -> Self {
        EmbeddedPair {
            pair: self.pair.swapped(),
            real_embedding: self.fake_embedding.clone(),
            fake_embedding: self.real_embedding.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    backend_hash: String,
    pair_id: String,
    real_embedding: Vec<f64>,
    fake_embedding: Vec<f64>,
}

/// Cache file location for `pair` under `backend`, keyed by a hash of the
/// model files and both prompt texts.
pub fn prompt_cache_path(cache_dir: &Path, backend_hash: &str, pair: &PromptPair) -> PathBuf {
    let mut h = Sha256::new();
    for part in [backend_hash, &pair.real_text, &pair.fake_text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    cache_dir.join(format!("prompt-{}.json", hex::encode(h.finalize())))
}

/// Embeds `pair`, reusing a cached result when one exists for this backend.
///
/// An unreadable or mismatched cache entry is recomputed and overwritten.
pub fn embed_pair_cached(backend: &Backend, pair: PromptPair, cache_dir: &Path) -> Result<EmbeddedPair> {
    let hash = backend.model_digest();
    let path = prompt_cache_path(cache_dir, hash, &pair);
    if let Some(hit) = read_cache(&path, hash, backend.embed_dim()) {
        return EmbeddedPair::new(pair, hit.0, hit.1);
    }
    let embedded = EmbeddedPair::embed(backend, pair)?;
    let file = CacheFile {
        backend_hash: hash.to_owned(),
        pair_id: embedded.pair.id.clone(),
        real_embedding: embedded.real_embedding.to_vec(),
        fake_embedding: embedded.fake_embedding.to_vec(),
    };
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    serde_json::to_writer(tmp.as_file_mut(), &file)?;
    tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
    Ok(embedded)
}

fn read_cache(path: &Path, hash: &str, dim: usize) -> Option<(Vector, Vector)> {
    let file: CacheFile = serde_json::from_slice(&fs::read(path).ok()?).ok()?;
    if file.backend_hash != hash || file.real_embedding.len() != dim || file.fake_embedding.len() != dim {
        log::warn!("ignoring stale prompt cache {}", path.display());
        return None;
    }
    Some((Vector::new(file.real_embedding).ok()?, Vector::new(file.fake_embedding).ok()?))
}

/// Real unless the frame is strictly closer to the fake prompt.
pub fn classify_frame(frame: &[f64], pair: &EmbeddedPair) -> Result<Verdict> {
    if frame.len() != pair.dim() {
        return Err(Error::contract(format!(
            "frame embedding has dimension {}, prompts have {}",
            frame.len(),
            pair.dim()
        )));
    }
    let (real, fake) = pair.similarities(frame)?;
    Ok(if fake > real { Verdict::Fake } else { Verdict::Real })
}

/// Fake iff more than half of the frames are fake.
pub fn majority_verdict(fake_frames: usize, total: usize) -> Verdict {
    if 2 * fake_frames > total {
        Verdict::Fake
    } else {
        Verdict::Real
    }
}

pub fn classify_video<F: AsRef<[f64]>>(frames: &[F], pair: &EmbeddedPair) -> Result<Verdict> {
    if frames.is_empty() {
        return Err(Error::contract("cannot classify a video with no frames"));
    }
    let mut fake = 0;
    for f in frames {
        if classify_frame(f.as_ref(), pair)? == Verdict::Fake {
            fake += 1;
        }
    }
    Ok(majority_verdict(fake, frames.len()))
}
