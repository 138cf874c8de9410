//! Resolution and bitrate laundering through an external H.264 transcoder.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{LazyLock, Mutex};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcoder::{tail, Transcoder};

/// Constant-quality setting for rescaled outputs, low enough that bitrate
/// never becomes the binding degradation.
pub const RESCALE_CRF: u32 = 18;
pub const X264_PRESET: &str = "medium";
/// Allowed relative miss of the achieved bitrate before a job logs a warning.
pub const BITRATE_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degradation {
    Resolution,
    Bitrate,
}

impl std::fmt::Display for Degradation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Degradation::Resolution => "resolution",
            Degradation::Bitrate => "bitrate",
        })
    }
}

impl FromStr for Degradation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "resolution" | "rescale" => Ok(Degradation::Resolution),
            "bitrate" | "compression" | "recompress" => Ok(Degradation::Bitrate),
            other => Err(Error::parse("degradation mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunderJob {
    input: PathBuf,
    mode: Degradation,
    percent: f64,
    output: PathBuf,
}

impl LaunderJob {
    pub fn new(input: impl Into<PathBuf>, mode: Degradation, percent: f64, output: impl Into<PathBuf>) -> Result<Self> {
        if !(percent > 0.0 && percent <= 100.0) {
            return Err(Error::contract(format!("laundering percent {percent} is outside (0, 100]")));
        }
        Ok(LaunderJob {
            input: input.into(),
            mode,
            percent,
            output: output.into(),
        })
    }

    pub fn input(&self) -> &Path {
        &self.input
    }

    pub fn mode(&self) -> Degradation {
        self.mode
    }

    pub fn percent(&self) -> f64 {
        self.percent
    }

    pub fn output(&self) -> &Path {
        &self.output
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeInfo {
    pub width: u32,
    pub height: u32,
    /// Seconds.
    pub duration: f64,
    pub fps: f64,
    /// Video stream bitrate, or container size·8/duration when the stream omits it.
    pub bitrate_bps: f64,
}

static DURATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Duration:\s*(\d+):(\d{2}):(\d{2}(?:\.\d+)?)").unwrap());
static VIDEO_STREAM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*Stream #\S+.*?: Video: (.*)$").unwrap());
static DIMS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[ ,])(\d{1,5})x(\d{1,5})(?:[ ,\[]|$)").unwrap());
static STREAM_KBPS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?) kb/s").unwrap());
static FPS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?)(k?) (?:fps|tbr)").unwrap());
static FRAMES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"frame=\s*(\d+)").unwrap());

/// Parses transcoder `-i` diagnostics. `file_size` backs the bitrate when
/// the video stream carries none.
pub fn parse_probe(stderr: &str, file_size: u64) -> Option<ProbeInfo> {
    let d = DURATION.captures(stderr)?;
    let duration = d[1].parse::<f64>().ok()? * 3600.0 + d[2].parse::<f64>().ok()? * 60.0 + d[3].parse::<f64>().ok()?;
    let stream = VIDEO_STREAM.captures(stderr)?.get(1)?.as_str();
    let dims = DIMS.captures(stream)?;
    let width = dims[1].parse().ok()?;
    let height = dims[2].parse().ok()?;
    let fps = FPS
        .captures(stream)
        .and_then(|c| Some(c[1].parse::<f64>().ok()? * if &c[2] == "k" { 1000.0 } else { 1.0 }))
        .unwrap_or(0.0);
    let bitrate_bps = match STREAM_KBPS.captures(stream) {
        Some(c) => c[1].parse::<f64>().ok()? * 1000.0,
        None if duration > 0.0 => file_size as f64 * 8.0 / duration,
        None => return None,
    };
    (duration > 0.0 && width > 0 && height > 0).then_some(ProbeInfo {
        width,
        height,
        duration,
        fps,
        bitrate_bps,
    })
}

pub fn probe(path: &Path, transcoder: &Transcoder) -> Result<ProbeInfo> {
    let size = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    // No output file: the transcoder exits nonzero after printing stream info.
    let args: Vec<OsString> = vec!["-i".into(), path.into()];
    let (_, stderr) = transcoder.run_unchecked(path, args)?;
    parse_probe(&stderr, size).ok_or_else(|| Error::Transcoder {
        path: path.to_path_buf(),
        diagnostics: tail(&stderr, 40),
    })
}

/// Decoded video frame count.
pub fn count_frames(path: &Path, transcoder: &Transcoder) -> Result<u64> {
    let args: Vec<OsString> = vec![
        "-i".into(),
        path.into(),
        "-map".into(),
        "0:v:0".into(),
        "-f".into(),
        "null".into(),
        "-".into(),
    ];
    let stderr = transcoder.run(path, args)?;
    FRAMES
        .captures_iter(&stderr)
        .last()
        .and_then(|c| c[1].parse().ok())
        .ok_or_else(|| Error::Transcoder {
            path: path.to_path_buf(),
            diagnostics: "no frame count in transcoder output".into(),
        })
}

/// Nearest even integer, at least 2.
pub fn round_even(x: f64) -> u32 {
    ((x / 2.0).round() as u32 * 2).max(2)
}

pub fn scaled_dims(width: u32, height: u32, percent: f64) -> (u32, u32) {
    let f = percent / 100.0;
    (round_even(f * f64::from(width)), round_even(f * f64::from(height)))
}

/// What a finished job did, one JSON line in the job log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job: LaunderJob,
    pub before: ProbeInfo,
    pub after: ProbeInfo,
    pub target_width: u32,
    pub target_height: u32,
    pub target_bitrate_bps: Option<f64>,
    /// Transcoder arguments of each pass, output path excluded.
    pub passes: Vec<Vec<String>>,
    pub warning: Option<String>,
}

fn common_encode_args(input: &Path) -> Vec<OsString> {
    let mut a: Vec<OsString> = vec!["-y".into(), "-v".into(), "error".into(), "-i".into(), input.into()];
    a.extend(["-map", "0:v:0", "-an", "-fps_mode", "passthrough", "-c:v", "libx264", "-preset", X264_PRESET, "-pix_fmt", "yuv420p"].map(Into::into));
    a
}

fn printable(args: &[OsString]) -> Vec<String> {
    args.iter().map(|a| a.to_string_lossy().into_owned()).collect()
}

fn staging_file(output: &Path) -> Result<tempfile::NamedTempFile> {
    let dir = output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tempfile::Builder::new()
        .prefix(".launder-")
        .suffix(".mp4")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))
}

/// Downscales to `percent` of the original dimensions at constant quality.
pub fn rescale(job: &LaunderJob, transcoder: &Transcoder) -> Result<JobRecord> {
    require_mode(job, Degradation::Resolution)?;
    let before = probe(&job.input, transcoder)?;
    let (w, h) = scaled_dims(before.width, before.height, job.percent);
    let mut args = common_encode_args(&job.input);
    args.extend(
        [
            "-vf".to_string(),
            format!("scale={w}:{h}:flags=bicubic"),
            "-crf".into(),
            RESCALE_CRF.to_string(),
            "-f".into(),
            "mp4".into(),
        ]
        .map(Into::into),
    );
    let staged = staging_file(&job.output)?;
    let mut full = args.clone();
    full.push(staged.path().into());
    transcoder.run(&job.input, full)?;
    let after = finish(staged, &job.output, transcoder)?;
    let warning = ((after.width, after.height) != (w, h))
        .then(|| format!("output is {}x{}, expected {w}x{h}", after.width, after.height));
    Ok(JobRecord {
        job: job.clone(),
        before,
        after,
        target_width: w,
        target_height: h,
        target_bitrate_bps: None,
        passes: vec![printable(&args)],
        warning,
    })
}

/// Re-encodes at `percent` of the probed bitrate with two-pass average-bitrate
/// control, keeping the resolution.
pub fn recompress(job: &LaunderJob, transcoder: &Transcoder) -> Result<JobRecord> {
    require_mode(job, Degradation::Bitrate)?;
    let before = probe(&job.input, transcoder)?;
    let target = (job.percent / 100.0 * before.bitrate_bps).max(1000.0);
    let kbps = format!("{}k", (target / 1000.0).round().max(1.0) as u64);
    let staged = staging_file(&job.output)?;
    let passlog_dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let passlog = passlog_dir.path().join("x264");

    let pass = |n: u32| {
        let mut a = common_encode_args(&job.input);
        a.extend(["-b:v".to_string(), kbps.clone(), "-pass".into(), n.to_string()].map(OsString::from));
        a.push("-passlogfile".into());
        a.push(passlog.clone().into());
        a.extend(["-f", if n == 1 { "null" } else { "mp4" }].map(OsString::from));
        a
    };
    let (p1, p2) = (pass(1), pass(2));
    let mut run1 = p1.clone();
    run1.push("-".into());
    transcoder.run(&job.input, run1)?;
    let mut run2 = p2.clone();
    run2.push(staged.path().into());
    transcoder.run(&job.input, run2)?;
    let after = finish(staged, &job.output, transcoder)?;

    let miss = (after.bitrate_bps - target).abs() / target;
    let mut warning = (miss > BITRATE_TOLERANCE).then(|| {
        format!(
            "achieved {:.1} kb/s misses target {:.1} kb/s by {:.0}%",
            after.bitrate_bps / 1000.0,
            target / 1000.0,
            100.0 * miss
        )
    });
    if (after.width, after.height) != (before.width, before.height) {
        warning = Some(format!(
            "resolution changed from {}x{} to {}x{}",
            before.width, before.height, after.width, after.height
        ));
    }
    if let Some(w) = &warning {
        log::warn!("{}: {w}", job.output.display());
    }
    Ok(JobRecord {
        job: job.clone(),
        before,
        after,
        target_width: before.width,
        target_height: before.height,
        target_bitrate_bps: Some(target),
        passes: vec![printable(&p1), printable(&p2)],
        warning,
    })
}

fn require_mode(job: &LaunderJob, mode: Degradation) -> Result<()> {
    if job.mode != mode {
        return Err(Error::contract(format!("{} job passed to the {mode} operation", job.mode)));
    }
    Ok(())
}

fn finish(staged: tempfile::NamedTempFile, output: &Path, transcoder: &Transcoder) -> Result<ProbeInfo> {
    let after = probe(staged.path(), transcoder)?;
    staged.persist(output).map_err(|e| Error::io(output, e.error))?;
    Ok(after)
}

pub fn run_job(job: &LaunderJob, transcoder: &Transcoder) -> Result<JobRecord> {
    match job.mode {
        Degradation::Resolution => rescale(job, transcoder),
        Degradation::Bitrate => recompress(job, transcoder),
    }
}

/// Append-only JSON-lines log shared by concurrent jobs.
#[derive(Debug)]
pub struct JobLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl JobLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(JobLog {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &JobRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads every record of a job log.
pub fn read_job_log(path: &Path) -> Result<Vec<JobRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string())))
        .collect()
}

/// Runs jobs on at most `workers` threads (0 = all cores), logging each
/// success. Results keep the order of `jobs`.
pub fn run_jobs(
    jobs: &[LaunderJob],
    transcoder: &Transcoder,
    log: Option<&JobLog>,
    workers: usize,
) -> Result<Vec<Result<JobRecord>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let rec = run_job(job, transcoder)?;
                if let Some(log) = log {
                    log.append(&rec)?;
                }
                Ok(rec)
            })
            .collect()
    }))
}
