//! Writing results to disk with the version and resolved config attached.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const VERSION: &str = match option_env!("ADSAT_VERSION") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

/// Where artifacts go: an explicit `--output` path or `<dir>/<default name>`.
#[derive(Debug, Clone)]
pub struct Sink {
    pub dir: PathBuf,
    pub output: Option<PathBuf>,
}

impl Sink {
    pub fn path(&self, default_name: &str) -> PathBuf {
        self.output.clone().unwrap_or_else(|| self.dir.join(default_name))
    }

    pub fn write(&self, default_name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(default_name);
        write_file(&path, contents)?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.to_path_buf(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// `{"version", "command", "config", "result"}`, pretty-printed.
pub fn json_document(command: &str, config: &Value, result: &impl Serialize) -> String {
    let doc = json!({
        "version": VERSION,
        "command": command,
        "config": config,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("artifact serializes");
    s.push('\n');
    s
}

/// CSV preceded by `#` metadata lines.
pub fn csv_document(command: &str, config: &Value, meta: &[(&str, String)], body: &str) -> String {
    let mut s = format!("# adsat {VERSION}\n# command: {command}\n# config: {config}\n");
    for (k, v) in meta {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(body);
    if !body.ends_with('\n') {
        s.push('\n');
    }
    s
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
