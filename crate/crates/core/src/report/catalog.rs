use std::collections::BTreeMap;
use std::path::Path;

use crate::apk::MethodRef;
use crate::datafile::{self, malformed, DataFileError};

const DEFAULT_CATALOG: &str = include_str!("../../data/sources_sinks.txt");

/// Sensitive-source and sink APIs with their categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSinkCatalog {
    /// API pattern (`Lx;->name` or a full reference) → category.
    sources: BTreeMap<String, String>,
    sinks: BTreeMap<String, String>,
}

impl Default for SourceSinkCatalog {
    fn default() -> Self {
        SourceSinkCatalog::parse(DEFAULT_CATALOG, "sources_sinks.txt").expect("bundled catalog parses")
    }
}

impl SourceSinkCatalog {
    pub fn parse(text: &str, file: &str) -> Result<SourceSinkCatalog, DataFileError> {
        let mut sources = BTreeMap::new();
        let mut sinks = BTreeMap::new();
        for (line, fields) in datafile::records(text) {
            let [kind, category, api] = fields.as_slice() else {
                return Err(malformed(file, line, "expected <source|sink> <category> <api>"));
            };
            if !api.contains("->") {
                return Err(malformed(file, line, format!("`{}` is not a method reference", api)));
            }
            let map = match *kind {
                "source" => &mut sources,
                "sink" => &mut sinks,
                other => return Err(malformed(file, line, format!("unknown entry kind `{}`", other))),
            };
            map.insert(api.to_string(), category.to_string());
        }
        if let Some(api) = sources.keys().find(|k| sinks.contains_key(*k)) {
            return Err(DataFileError::SourceSinkConflict(api.clone()));
        }
        Ok(SourceSinkCatalog { sources, sinks })
    }

    pub fn load(path: &Path) -> Result<SourceSinkCatalog, DataFileError> {
        SourceSinkCatalog::parse(&datafile::read(path)?, &path.display().to_string())
    }

    fn lookup<'a>(map: &'a BTreeMap<String, String>, api: &str) -> Option<&'a str> {
        if let Some(c) = map.get(api) {
            return Some(c);
        }
        let prefix = api.split_once('(').map_or(api, |(p, _)| p);
        map.get(prefix).map(String::as_str)
    }

    /// Category of a source API given as a Smali method reference.
    pub fn source_category(&self, api: &str) -> Option<&str> {
        Self::lookup(&self.sources, api)
    }

    pub fn sink_category(&self, api: &str) -> Option<&str> {
        Self::lookup(&self.sinks, api)
    }

    pub fn is_source(&self, m: &MethodRef) -> bool {
        self.source_category(&m.to_string()).is_some()
    }

    pub fn is_sink(&self, m: &MethodRef) -> bool {
        self.sink_category(&m.to_string()).is_some()
    }

    pub fn sources(&self) -> impl Iterator<Item = (&str, &str)> {
        self.sources.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }

    pub fn sinks(&self) -> impl Iterator<Item = (&str, &str)> {
        self.sinks.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }
}
