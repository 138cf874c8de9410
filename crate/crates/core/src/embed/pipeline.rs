use std::path::Path;

use rayon::prelude::*;

use super::backend::Backend;
use super::store::{EmbeddingRecord, EmbeddingStore};
use crate::dataset::{existing_frames, parse_frame_file_name, VideoRecord};
use crate::error::{Error, Result};

/// Embeds every extracted frame of `videos` and returns a canonical store.
///
/// Frames must already exist under `frames_root` for the given `stride`.
/// Work runs on the current rayon pool; the result order does not depend on
/// scheduling.
pub fn embed_videos(
    backend: &Backend,
    videos: &[VideoRecord],
    frames_root: &Path,
    stride: u32,
) -> Result<EmbeddingStore> {
    let mut jobs = Vec::new();
    let mut missing = Vec::new();
    for video in videos {
        match existing_frames(frames_root, &video.video_id, stride) {
            Some(paths) => jobs.extend(paths.into_iter().map(|p| (video, p))),
            None => missing.push(video.video_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::contract(format!(
            "frames not extracted (stride {stride}) for: {}",
            missing.join(", ")
        )));
    }
    let records = jobs
        .par_iter()
        .map(|(video, path)| {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let frame_index = parse_frame_file_name(&video.video_id, name)
                .ok_or_else(|| Error::parse(path.display().to_string(), "unexpected frame file name"))?;
            Ok(EmbeddingRecord {
                video_id: video.video_id.clone(),
                source: video.source.clone(),
                action_id: video.action_id,
                frame_index,
                backend: backend.name().to_owned(),
                vector: backend.embed_frame_file(path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut store = EmbeddingStore::new(backend.name(), backend.embed_dim(), records)?;
    store.canonicalize();
    Ok(store)
}
