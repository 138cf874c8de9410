use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::VideoRecord;
use crate::error::{Error, Result};
use crate::transcoder::Transcoder;

const MARKER: &str = ".complete.json";

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CompletionMarker {
    stride: u32,
    frames: Vec<u32>,
}

pub fn frame_file_name(video_id: &str, frame_index: u32) -> String {
    format!("{video_id}_{frame_index:06}.png")
}

/// Parses the frame index out of `{video_id}_{index:06}.png`.
pub fn parse_frame_file_name(video_id: &str, file_name: &str) -> Option<u32> {
    let rest = file_name.strip_prefix(video_id)?.strip_prefix('_')?;
    let digits = rest.strip_suffix(".png")?;
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn video_frame_dir(frames_root: &Path, video_id: &str) -> PathBuf {
    frames_root.join(video_id)
}

/// Frames previously extracted with `stride`, if the directory is complete.
pub fn existing_frames(frames_root: &Path, video_id: &str, stride: u32) -> Option<Vec<PathBuf>> {
    let dir = video_frame_dir(frames_root, video_id);
    let marker: CompletionMarker =
        serde_json::from_slice(&fs::read(dir.join(MARKER)).ok()?).ok()?;
    if marker.stride != stride {
        return None;
    }
    let paths: Vec<PathBuf> = marker
        .frames
        .iter()
        .map(|&i| dir.join(frame_file_name(video_id, i)))
        .collect();
    paths.iter().all(|p| p.is_file()).then_some(paths)
}

/// Decodes every `stride`-th frame of `record` into
/// `frames_root/{video_id}/{video_id}_{frame_index:06}.png` (8-bit RGB).
///
/// Output is staged in a temporary directory and renamed into place only
/// after the transcoder succeeds, so a failed decode leaves nothing behind.
/// A complete directory from an earlier run with the same stride is reused.
pub fn extract_frames(
    record: &VideoRecord,
    stride: u32,
    frames_root: &Path,
    transcoder: &Transcoder,
) -> Result<Vec<PathBuf>> {
    if stride == 0 {
        return Err(Error::contract("frame stride must be positive"));
    }
    if let Some(paths) = existing_frames(frames_root, &record.video_id, stride) {
        return Ok(paths);
    }
    fs::create_dir_all(frames_root).map_err(|e| Error::io(frames_root, e))?;
    let staging = tempfile::Builder::new()
        .prefix(&format!(".{}-", record.video_id))
        .tempdir_in(frames_root)
        .map_err(|e| Error::io(frames_root, e))?;

    let mut args: Vec<std::ffi::OsString> =
        vec!["-v".into(), "error".into(), "-i".into(), record.path.clone().into_os_string()];
    if stride > 1 {
        args.push("-vf".into());
        args.push(format!("select=not(mod(n\\,{stride}))").into());
    }
    args.extend(
        ["-fps_mode", "passthrough", "-pix_fmt", "rgb24", "-start_number", "0", "-f", "image2"]
            .map(Into::into),
    );
    args.push(staging.path().join("%09d.png").into_os_string());
    transcoder.run(&record.path, args)?;

    let mut decoded: Vec<u32> = fs::read_dir(staging.path())
        .map_err(|e| Error::io(staging.path(), e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".png")?.parse::<u32>().ok()
        })
        .collect();
    decoded.sort_unstable();
    if decoded.is_empty() {
        return Err(Error::Transcoder {
            path: record.path.clone(),
            diagnostics: "transcoder produced no frames".into(),
        });
    }

    let mut frames = Vec::with_capacity(decoded.len());
    for (k, n) in decoded.into_iter().enumerate() {
        let frame_index = k as u32 * stride;
        let from = staging.path().join(format!("{n:09}.png"));
        let to = staging.path().join(frame_file_name(&record.video_id, frame_index));
        fs::rename(&from, &to).map_err(|e| Error::io(&from, e))?;
        frames.push(frame_index);
    }
    let marker = CompletionMarker { stride, frames };
    fs::write(staging.path().join(MARKER), serde_json::to_vec(&marker)?)
        .map_err(|e| Error::io(staging.path(), e))?;

    let final_dir = video_frame_dir(frames_root, &record.video_id);
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    Ok(marker
        .frames
        .iter()
        .map(|&i| final_dir.join(frame_file_name(&record.video_id, i)))
        .collect())
}
