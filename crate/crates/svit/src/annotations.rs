//! Per-frame graph annotations as JSON lines, one [`AnnotationRecord`] per
//! line. Blank lines are skipped; every record is checked against the
//! graph invariants on read.

use std::path::Path;

use svit_core::data::AnnotationRecord;

use crate::error::{io_err, Error, Result};

/// Parses JSONL text. Errors carry the 1-based line number.
pub fn parse(text: &str) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: AnnotationRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, reason: e.to_string() })?;
        r.to_haog().map_err(|e| Error::Annotation { line: i + 1, id: r.id.clone(), reason: e.to_string() })?;
        out.push(r);
    }
    Ok(out)
}

pub fn render(records: &[AnnotationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse(&text).map_err(|e| match e {
        Error::Parse { line, reason } => Error::Parse { line, reason: format!("{}: {reason}", path.display()) },
        other => other,
    })
}

pub fn write(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    std::fs::write(path, render(records)).map_err(io_err(path))
}
