//! Dataset manifests: UTF-8 CSV with `path,label[,landmarks[,source]]`
//! per record, `#` comments, relative paths resolved against the
//! manifest's directory. Unknown labels and duplicate image paths are
//! rejected with their line numbers.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ferspm_core::eval::ExpressionLabel;

use crate::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub label: ExpressionLabel,
    pub landmarks: Option<PathBuf>,
    pub source: String,
}

pub const DEFAULT_SOURCE: &str = "default";

pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<ManifestRecord>, Error> {
    let base = origin.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 4 {
            return Err(Error::parse(
                origin,
                line_no,
                "expected 'path,label[,landmarks[,source]]'",
            ));
        }
        if fields[0].is_empty() {
            return Err(Error::parse(origin, line_no, "empty image path"));
        }
        let label = ExpressionLabel::parse_name(fields[1]).ok_or_else(|| {
            Error::parse(
                origin,
                line_no,
                format!(
                    "unknown label '{}' (expected anger, disgust, fear, happiness, sadness or surprise)",
                    fields[1]
                ),
            )
        })?;
        let image = base.join(fields[0]);
        if !seen.insert(image.clone()) {
            return Err(Error::parse(
                origin,
                line_no,
                format!("duplicate image path '{}'", fields[0]),
            ));
        }
        let landmarks = match fields.get(2) {
            Some(f) if !f.is_empty() => Some(base.join(f)),
            _ => None,
        };
        let source = match fields.get(3) {
            Some(f) if !f.is_empty() => (*f).to_string(),
            _ => DEFAULT_SOURCE.to_string(),
        };
        records.push(ManifestRecord { image, label, landmarks, source });
    }
    if records.is_empty() {
        return Err(Error::parse(origin, 0, "manifest has no records"));
    }
    Ok(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

/// Error unless every one of the six classes appears.
pub fn require_all_classes(records: &[ManifestRecord]) -> Result<(), Error> {
    for label in ferspm_core::eval::ALL_LABELS {
        if !records.iter().any(|r| r.label == label) {
            return Err(Error::Data(format!("manifest has no '{}' samples", label.as_str())));
        }
    }
    Ok(())
}
