use std::path::Path;

use super::Channel;
use crate::apk::{split_descriptors, MethodRef};
use crate::datafile::{self, malformed, DataFileError};

const DEFAULT_SENDERS: &str = include_str!("../../data/sender_apis.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderApi {
    pub name: String,
    /// API type the method is documented on (informational).
    pub owner: String,
    pub channel: Channel,
    pub params: Vec<String>,
    /// Argument position of the intent, receiver excluded.
    pub intent_arg: usize,
    pub request_code_arg: Option<usize>,
}

/// The sender methods, matched by name and parameter descriptors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderApiCatalog {
    entries: Vec<SenderApi>,
}

impl Default for SenderApiCatalog {
    fn default() -> Self {
        SenderApiCatalog::parse(DEFAULT_SENDERS, "sender_apis.txt").expect("bundled sender catalog parses")
    }
}

impl SenderApiCatalog {
    pub fn parse(text: &str, file: &str) -> Result<SenderApiCatalog, DataFileError> {
        let mut entries = Vec::new();
        for (line, f) in datafile::records(text) {
            let [name, owner, channel, intent_arg, rc, params] = f.as_slice() else {
                return Err(malformed(file, line, "expected 6 fields"));
            };
            let channel = Channel::parse(channel)
                .ok_or_else(|| malformed(file, line, format!("unknown channel `{}`", channel)))?;
            let params = split_descriptors(params).ok_or_else(|| malformed(file, line, "bad parameter descriptors"))?;
            let intent_arg: usize = intent_arg.parse().map_err(|_| malformed(file, line, "bad intent argument"))?;
            let request_code_arg = match *rc {
                "-" => None,
                n => Some(n.parse().map_err(|_| malformed(file, line, "bad request-code argument"))?),
            };
            if intent_arg >= params.len() || request_code_arg.is_some_and(|r| r >= params.len()) {
                return Err(malformed(file, line, "argument position out of range"));
            }
            entries.push(SenderApi {
                name: name.to_string(),
                owner: owner.to_string(),
                channel,
                params,
                intent_arg,
                request_code_arg,
            });
        }
        Ok(SenderApiCatalog { entries })
    }

    pub fn load(path: &Path) -> Result<SenderApiCatalog, DataFileError> {
        SenderApiCatalog::parse(&datafile::read(path)?, &path.display().to_string())
    }

    pub fn entries(&self) -> &[SenderApi] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, m: &MethodRef) -> Option<&SenderApi> {
        self.entries.iter().find(|e| e.name == m.name && e.params == m.params)
    }
}
