use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_PROMPTS: &str = include_str!("../../data/prompts.json");

/// The 100 human-action prompts the built-in corpus was generated from.
pub fn builtin_prompts() -> Vec<String> {
    serde_json::from_str(BUNDLED_PROMPTS).expect("bundled prompt table is valid JSON")
}

/// Where a video came from: real footage, one of the seven built-in
/// generators, or an arbitrary label for an external corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Real,
    BDAnimateDiffLightning,
    CogVideoX5B,
    Lumiere,
    RunwayML,
    StableDiffusion,
    Veo,
    VideoPoet,
    Other(String),
}

impl Source {
    pub const GENERATORS: [Source; 7] = [
        Source::BDAnimateDiffLightning,
        Source::CogVideoX5B,
        Source::Lumiere,
        Source::RunwayML,
        Source::StableDiffusion,
        Source::Veo,
        Source::VideoPoet,
    ];

    pub fn label(&self) -> &str {
        match self {
            Source::Real => "Real",
            Source::BDAnimateDiffLightning => "BDAnimateDiffLightning",
            Source::CogVideoX5B => "CogVideoX5B",
            Source::Lumiere => "Lumiere",
            Source::RunwayML => "RunwayML",
            Source::StableDiffusion => "StableDiffusion",
            Source::Veo => "Veo",
            Source::VideoPoet => "VideoPoet",
            Source::Other(s) => s,
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, Source::Real)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::parse("source", "empty source label"));
        }
        Ok(match s {
            "Real" => Source::Real,
            "BDAnimateDiffLightning" => Source::BDAnimateDiffLightning,
            "CogVideoX5B" => Source::CogVideoX5B,
            "Lumiere" => Source::Lumiere,
            "RunwayML" => Source::RunwayML,
            "StableDiffusion" => Source::StableDiffusion,
            "Veo" => Source::Veo,
            "VideoPoet" => Source::VideoPoet,
            other => Source::Other(other.to_string()),
        })
    }
}

impl Serialize for Source {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub source: Source,
    pub action_id: u32,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub duration: f64,
    pub fps: f64,
}

impl VideoRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.video_id.is_empty() {
            return Err("video_id is empty".into());
        }
        if self.video_id.contains(['/', '\\']) || self.video_id == "." || self.video_id == ".." {
            return Err("video_id must be usable as a file name".into());
        }
        if self.width == 0 || self.height == 0 {
            return Err(format!("non-positive resolution {}x{}", self.width, self.height));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(format!("non-positive duration {}", self.duration));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(format!("non-positive fps {}", self.fps));
        }
        Ok(())
    }
}

/// A validated corpus catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<VideoRecord>,
    prompt_table: BTreeMap<u32, String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompts: Option<Vec<String>>,
    videos: Vec<serde_json::Value>,
}

impl Manifest {
    pub fn new(records: Vec<VideoRecord>, prompts: Vec<String>) -> Result<Self> {
        let prompt_table: BTreeMap<u32, String> = prompts
            .into_iter()
            .enumerate()
            .map(|(i, p)| (i as u32, p))
            .collect();
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            let name = format!("videos[{i}] ({:?})", r.video_id);
            r.validate().map_err(|m| Error::parse(&name, m))?;
            if !prompt_table.contains_key(&r.action_id) {
                return Err(Error::parse(
                    &name,
                    format!(
                        "action_id {} is outside the {}-entry prompt table",
                        r.action_id,
                        prompt_table.len()
                    ),
                ));
            }
            if !seen.insert(r.video_id.as_str()) {
                return Err(Error::parse(&name, format!("duplicate video_id {:?}", r.video_id)));
            }
        }
        Ok(Manifest {
            records,
            prompt_table,
        })
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn prompt_table(&self) -> &BTreeMap<u32, String> {
        &self.prompt_table
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    /// Distinct action ids that actually occur among the records.
    pub fn action_ids(&self) -> BTreeSet<u32> {
        self.records.iter().map(|r| r.action_id).collect()
    }

    /// Distinct sources in label order.
    pub fn sources(&self) -> BTreeSet<Source> {
        self.records.iter().map(|r| r.source.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ManifestFile {
            prompts: Some(self.prompt_table.values().cloned().collect()),
            videos: self
                .records
                .iter()
                .map(serde_json::to_value)
                .collect::<std::result::Result<_, _>>()?,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a manifest; relative video paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: ManifestFile =
            serde_json::from_str(text).map_err(|e| Error::parse("manifest", e.to_string()))?;
        let mut records = Vec::with_capacity(file.videos.len());
        for (i, value) in file.videos.into_iter().enumerate() {
            let id_hint = value
                .get("video_id")
                .and_then(|v| v.as_str())
                .map(|s| format!(" ({s:?})"))
                .unwrap_or_default();
            let mut record: VideoRecord = serde_json::from_value(value)
                .map_err(|e| Error::parse(format!("videos[{i}]{id_hint}"), e.to_string()))?;
            if let Some(base) = base_dir {
                if record.path.is_relative() {
                    record.path = base.join(&record.path);
                }
            }
            records.push(record);
        }
        Manifest::new(records, file.prompts.unwrap_or_else(builtin_prompts))
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_json(&text, path.parent())
}
