//! Named index definitions (source URL, symbol column, overrides), embedded
//! in the binary and overridable from a TOML file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::client::DEFAULT_BASE_URL;
use crate::constituents::{ConstituentError, IndexSource, SourceKind, SymbolNormalizer};

const BUILTIN: &str = include_str!("registry.toml");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("reading registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing registry: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("index {name:?}: {source}")]
    Overrides {
        name: String,
        #[source]
        source: ConstituentError,
    },
    #[error("unknown index {name:?} (known: {known})")]
    UnknownIndex { name: String, known: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    HtmlTable,
    RemoteCsv,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub kind: EntryKind,
    pub url: String,
    pub column: String,
    #[serde(default)]
    pub table_hint: Option<usize>,
    #[serde(default)]
    pub default_out: Option<String>,
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
}

impl IndexEntry {
    pub fn source(&self) -> IndexSource {
        IndexSource {
            kind: match self.kind {
                EntryKind::HtmlTable => SourceKind::HtmlTable,
                EntryKind::RemoteCsv => SourceKind::RemoteCsv,
            },
            locator: self.url.clone(),
            column: self.column.clone(),
            table_hint: self.table_hint,
        }
    }

    pub fn normalizer(&self) -> Result<SymbolNormalizer, ConstituentError> {
        SymbolNormalizer::with_overrides(&self.overrides)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderSection {
    base_url: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    provider: ProviderSection,
    #[serde(default)]
    index: BTreeMap<String, IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub base_url: String,
    pub indices: BTreeMap<String, IndexEntry>,
}

impl Registry {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN).expect("embedded registry is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text)?;
        let reg = Registry {
            base_url: file.provider.base_url.unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            indices: file.index,
        };
        reg.check()?;
        Ok(reg)
    }

    /// Built-in entries with the file's entries layered on top.
    pub fn builtin_with_file(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: RegistryFile = toml::from_str(&text)?;
        let mut reg = Self::builtin();
        if let Some(base) = file.provider.base_url {
            reg.base_url = base;
        }
        reg.indices.extend(file.index);
        reg.check()?;
        Ok(reg)
    }

    fn check(&self) -> Result<(), RegistryError> {
        for (name, entry) in &self.indices {
            entry.normalizer().map_err(|source| RegistryError::Overrides {
                name: name.clone(),
                source,
            })?;
        }
        Ok(())
    }

    /// Looks up an index; `_` and `-` are interchangeable in the name.
    pub fn get(&self, name: &str) -> Result<(&str, &IndexEntry), RegistryError> {
        let wanted = name.replace('_', "-");
        self.indices
            .iter()
            .find(|(k, _)| k.replace('_', "-") == wanted)
            .map(|(k, v)| (k.as_str(), v))
            .ok_or_else(|| RegistryError::UnknownIndex {
                name: name.to_string(),
                known: self.indices.keys().cloned().collect::<Vec<_>>().join(", "),
            })
    }
}
