use std::path::Path;

use depthloss::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::args::Command;

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// One CSV record per row, header taken from the row's field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let fail = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `provenance.json`: the parsed configuration without the output
/// directory and worker count, plus the tool and library versions.
pub fn write_provenance(dir: &Path, command: &Command) -> Result<()> {
    let config = serde_json::to_value(command).map_err(|e| Error::Config(e.to_string()))?;
    let config = config
        .as_object()
        .and_then(|o| o.values().next().cloned())
        .unwrap_or(config);
    let doc = json!({
        "tool": "depthloss",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "library_version": depthloss::VERSION,
        "command": command.name(),
        "config": config,
    });
    write_json(&dir.join("provenance.json"), &doc)
}
