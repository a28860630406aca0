//! JSON catalog manifests: which CSV files to load under which names.
//!
//! ```json
//! {"tables": [{"name": "t1", "path": "t1.csv", "header": true, "schema": "id:int,l:int"}]}
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::storage::{load_csv, Catalog, ColumnType, StorageError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_header")]
    pub header: bool,
    /// `col:type` pairs separated by commas.
    pub schema: String,
}

fn default_header() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tables: Vec<ManifestEntry>,
}

/// Parses `a:int,b:str`.
pub fn parse_schema(text: &str) -> Result<Vec<(String, ColumnType)>, String> {
    text.split(',')
        .map(|field| {
            let (name, ty) = field
                .split_once(':')
                .ok_or_else(|| format!("schema field `{field}` lacks a `:type`"))?;
            let ty = ColumnType::parse(ty.trim()).ok_or_else(|| format!("unknown column type `{}`", ty.trim()))?;
            Ok((name.trim().to_ascii_lowercase(), ty))
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Storage(#[from] StorageError),
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: shown.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ManifestError::Format {
            path: shown,
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("manifest serializes"))
    }

    /// Loads every entry into `catalog`; relative paths resolve against `base`.
    pub fn load_into(&self, base: &Path, catalog: &mut Catalog) -> Result<(), ManifestError> {
        for e in &self.tables {
            let schema = parse_schema(&e.schema).map_err(|message| ManifestError::Format {
                path: e.path.display().to_string(),
                message,
            })?;
            let path = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
            catalog.register(load_csv(&path, &e.name, &schema, e.header)?)?;
        }
        Ok(())
    }
}

/// Reads the manifest at `path` and loads its tables into `catalog`.
pub fn load_manifest(path: &Path, catalog: &mut Catalog) -> Result<(), ManifestError> {
    let base = path.parent().unwrap_or(Path::new("."));
    Manifest::read(path)?.load_into(base, catalog)
}
