//! The functions database: one directory per label holding `func.py`
//! and `requirements.txt`. Packages are read from disk on every lookup so
//! edits are picked up without a restart.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use gatefaas_core::{FunctionLabel, FunctionPackage};

pub const SOURCE_FILE: &str = "func.py";
pub const REQUIREMENTS_FILE: &str = "requirements.txt";

#[derive(Debug, thiserror::Error)]
pub enum PackageError {
    #[error("no package directory for `{0}`")]
    Missing(FunctionLabel),
    #[error("`{label}`: cannot read {file}: {source}")]
    Unreadable {
        label: FunctionLabel,
        file: &'static str,
        source: io::Error,
    },
    #[error("`{0}`: empty function source")]
    EmptySource(FunctionLabel),
}

#[derive(Debug, Clone)]
pub struct FunctionsDb {
    root: PathBuf,
}

impl FunctionsDb {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FunctionsDb { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn package_dir(&self, label: &FunctionLabel) -> PathBuf {
        self.root.join(label.as_str())
    }

    pub fn load(&self, label: &FunctionLabel) -> Result<FunctionPackage, PackageError> {
        let dir = self.package_dir(label);
        if !dir.is_dir() {
            return Err(PackageError::Missing(label.clone()));
        }
        let read = |file: &'static str| {
            fs::read(dir.join(file)).map_err(|source| PackageError::Unreadable {
                label: label.clone(),
                file,
                source,
            })
        };
        let source = read(SOURCE_FILE)?;
        let requirements = read(REQUIREMENTS_FILE)?;
        FunctionPackage::new(label.clone(), source, requirements)
            .map_err(|_| PackageError::EmptySource(label.clone()))
    }
}
