//! Config resolution, output files and exit codes shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] lookahead_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    /// 2 for usage and configuration problems, 3 for numerical ones.
    pub fn exit_code(&self) -> u8 {
        use lookahead_core::Error as E;
        match self {
            Self::Usage(_) | Self::Io { .. } => 2,
            Self::Core(E::Config(_) | E::Dimension { .. } | E::Checkpoint(_)) => 2,
            Self::Core(_) | Self::Check(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// How a command that ran to completion ended.
pub enum Status {
    Done,
    /// Outputs were written but some runs diverged.
    Partial(String),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; flags override its keys
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for output files, created if missing
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub output: PathBuf,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Starts from `defaults` and overlays the config file, if any. Unknown keys
/// are rejected. Objects merge key by key, except tagged objects (those with
/// a `kind` key), which replace the default wholesale.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<&Path>) -> CliResult<T> {
    let Some(path) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(defaults).expect("defaults serialize"))
            .expect("defaults round-trip"));
    };
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let patch: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: not valid JSON: {e}", path.display())))?;
    if !patch.is_object() {
        return Err(CliError::Usage(format!("{}: config must be a JSON object", path.display())));
    }
    let mut base = serde_json::to_value(defaults).expect("defaults serialize");
    merge(&mut base, patch);
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) if !p.contains_key("kind") => {
            for (key, value) in p {
                match b.get_mut(&key) {
                    Some(slot) if slot.is_object() => merge(slot, value),
                    _ => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

/// The `# ` line every output starts with (without the `# ` prefix).
pub fn meta_line<T: Serialize>(command: &str, seed: u64, config: &T) -> String {
    serde_json::json!({ "command": command, "seed": seed, "config": config }).to_string()
}

/// Validated output directory.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn prepare(dir: &Path) -> CliResult<Self> {
        let io = |source| CliError::Io { path: dir.to_path_buf(), source };
        fs::create_dir_all(dir).map_err(io)?;
        let meta = fs::metadata(dir).map_err(io)?;
        if !meta.is_dir() || meta.permissions().readonly() {
            return Err(CliError::Usage(format!("{}: not a writable directory", dir.display())));
        }
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        eprintln!("wrote {}", path.display());
        Ok(path)
    }
}
