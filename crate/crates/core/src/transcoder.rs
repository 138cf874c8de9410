//! Subprocess wrapper around an ffmpeg-compatible transcoder binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRANSCODER_ENV: &str = "VERIFRAME_TRANSCODER";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcoder {
    program: PathBuf,
}

impl Default for Transcoder {
    fn default() -> Self {
        Transcoder::from_env()
    }
}

impl Transcoder {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Transcoder {
            program: program.into(),
        }
    }

    /// `$VERIFRAME_TRANSCODER`, falling back to `ffmpeg` on `PATH`.
    pub fn from_env() -> Self {
        match std::env::var_os(TRANSCODER_ENV) {
            Some(p) if !p.is_empty() => Transcoder::new(p),
            _ => Transcoder::new("ffmpeg"),
        }
    }

    pub fn program(&self) -> &Path {
        &self.program
    }

    pub fn is_available(&self) -> bool {
        Command::new(&self.program)
            .arg("-version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    }

    /// Runs the transcoder and returns its stderr. A nonzero exit becomes
    /// [`Error::Transcoder`] carrying the captured diagnostics.
    pub(crate) fn run<I, S>(&self, subject: &Path, args: I) -> Result<String>
    where
        I: IntoIterator<Item = S>,
        S: Into<OsString>,
    {
        let (ok, stderr) = self.run_unchecked(subject, args)?;
        if !ok {
            return Err(Error::Transcoder {
                path: subject.to_path_buf(),
                diagnostics: tail(&stderr, 40),
            });
        }
        Ok(stderr)
    }

    pub(crate) fn run_unchecked<I, S>(&self, subject: &Path, args: I) -> Result<(bool, String)>
    where
        I: IntoIterator<Item = S>,
        S: Into<OsString>,
    {
        let mut cmd = Command::new(&self.program);
        cmd.arg("-hide_banner").arg("-nostdin");
        cmd.args(args.into_iter().map(Into::into));
        log::debug!("running {:?}", cmd);
        let output = cmd
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .output()
            .map_err(|e| Error::Transcoder {
                path: subject.to_path_buf(),
                diagnostics: format!("could not launch {}: {e}", self.program.display()),
            })?;
        Ok((
            output.status.success(),
            String::from_utf8_lossy(&output.stderr).into_owned(),
        ))
    }
}

pub(crate) fn tail(text: &str, lines: usize) -> String {
    let all: Vec<&str> = text.lines().collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}
