//! External executables standing in for heavy models.
//!
//! Every provider is invoked as `<program> [args..] --flag <path> ...` inside
//! a fresh temporary directory. `LAYERTEXT_TMPDIR` overrides where those
//! directories are created.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

use crate::error::{Error, Result};

pub const TMPDIR_ENV: &str = "LAYERTEXT_TMPDIR";

/// Program plus fixed leading arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProviderCommand {
    Program(String),
    Argv(Vec<String>),
}

impl ProviderCommand {
    pub fn new(program: impl Into<String>) -> Self {
        ProviderCommand::Program(program.into())
    }

    fn split(&self) -> Result<(&str, &[String])> {
        match self {
            ProviderCommand::Program(p) => Ok((p.as_str(), &[])),
            ProviderCommand::Argv(v) => match v.split_first() {
                Some((p, rest)) => Ok((p.as_str(), rest)),
                None => Err(Error::InvalidArgument("empty provider command".into())),
            },
        }
    }

    pub fn program(&self) -> &str {
        self.split().map(|(p, _)| p).unwrap_or("")
    }

    /// Runs the provider with `flags` appended as `--name value` pairs and
    /// waits for it to finish.
    pub fn invoke(&self, flags: &[(&str, &Path)]) -> Result<()> {
        self.invoke_with(flags, &[])
    }

    /// Like [`invoke`](Self::invoke) with extra string-valued flags.
    pub fn invoke_with(&self, flags: &[(&str, &Path)], text_flags: &[(&str, &str)]) -> Result<()> {
        let (program, lead) = self.split()?;
        let mut cmd = Command::new(program);
        cmd.args(lead);
        for (name, path) in flags {
            cmd.arg(format!("--{name}")).arg(path);
        }
        for (name, value) in text_flags {
            cmd.arg(format!("--{name}")).arg(value);
        }
        log::debug!("provider: {cmd:?}");
        let out = cmd.output().map_err(|source| Error::ProviderLaunchFailure {
            program: program.to_string(),
            source,
        })?;
        if !out.status.success() {
            return Err(Error::ProviderNonZeroExit {
                code: out.status.code(),
                stderr: String::from_utf8_lossy(&out.stderr).trim_end().to_string(),
            });
        }
        Ok(())
    }
}

/// Scratch directory for one provider exchange.
pub fn scratch_dir() -> Result<TempDir> {
    let dir = match std::env::var_os(TMPDIR_ENV) {
        Some(base) => {
            std::fs::create_dir_all(&base)?;
            tempfile::Builder::new().prefix("layertext-").tempdir_in(base)?
        }
        None => tempfile::Builder::new().prefix("layertext-").tempdir()?,
    };
    Ok(dir)
}

/// Maps a failed read of a provider's output to `ProviderBadOutput`.
pub(crate) fn bad_output(path: &Path, err: Error) -> Error {
    Error::ProviderBadOutput(format!("{}: {err}", path.display()))
}

pub(crate) fn out_path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}
