//! Cascade model files: thin IO wrapper over the core text format.

use std::fs;
use std::path::Path;

use ferspm_core::detect::HaarCascade;

use crate::Error;

pub fn load_cascade(path: impl AsRef<Path>) -> Result<HaarCascade, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    HaarCascade::parse(&text).map_err(|e| Error::parse(path, e.line, e.message))
}

pub fn save_cascade(path: impl AsRef<Path>, cascade: &HaarCascade) -> Result<(), Error> {
    let path = path.as_ref();
    fs::write(path, cascade.to_text()).map_err(|e| Error::io(path, e))
}
