use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::apk::{simple_type_name, MethodRef};
use crate::datafile::{self, malformed, DataFileError};

const DEFAULT_TABLE: &str = include_str!("../../data/get_put_compat.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompatError {
    #[error("unknown get signature `{0}`")]
    UnknownGetSignature(String),
}

/// Owner prefix used in signature text. `BaseBundle` is where newer SDKs
/// declare most `Bundle` accessors.
fn owner_name(class_desc: &str) -> String {
    match class_desc {
        "Landroid/content/Intent;" => "Intent".into(),
        "Landroid/os/Bundle;" | "Landroid/os/BaseBundle;" => "Bundle".into(),
        other => simple_type_name(other),
    }
}

/// Text form of an extras API call: `putExtra(String,int)` for Intent
/// puts, `Owner.name(params)` for everything else.
pub fn api_signature_text(m: &MethodRef) -> String {
    let params: Vec<String> = m.params.iter().map(|p| simple_type_name(p)).collect();
    let owner = owner_name(&m.class);
    if owner == "Intent" && m.name.starts_with("put") {
        format!("{}({})", m.name, params.join(","))
    } else {
        format!("{}.{}({})", owner, m.name, params.join(","))
    }
}

fn split_get(sig: &str) -> Option<(&str, &str)> {
    let head = sig.split_once('(')?.0;
    head.split_once('.')
}

/// Value types carried by the extra getters and putters. A get and a put
/// are compatible exactly when they carry the same value type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetPutCompatTable {
    /// (owner, name) → (canonical signature, value type)
    gets: BTreeMap<(String, String), (String, String)>,
    /// signature → value type
    puts: BTreeMap<String, String>,
}

impl Default for GetPutCompatTable {
    fn default() -> Self {
        GetPutCompatTable::parse(DEFAULT_TABLE, "get_put_compat.txt").expect("bundled table parses")
    }
}

impl GetPutCompatTable {
    pub fn parse(text: &str, file: &str) -> Result<GetPutCompatTable, DataFileError> {
        let mut gets = BTreeMap::new();
        let mut puts = BTreeMap::new();
        for (line, fields) in datafile::records(text) {
            let [kind, ty, sig] = fields.as_slice() else {
                return Err(malformed(file, line, "expected <get|put> <value type> <signature>"));
            };
            match *kind {
                "get" => {
                    let Some((owner, name)) = split_get(sig) else {
                        return Err(malformed(file, line, format!("get `{}` lacks an owner", sig)));
                    };
                    gets.insert((owner.to_string(), name.to_string()), (sig.to_string(), ty.to_string()));
                }
                "put" => {
                    puts.insert(sig.to_string(), ty.to_string());
                }
                other => return Err(malformed(file, line, format!("unknown entry kind `{}`", other))),
            }
        }
        Ok(GetPutCompatTable { gets, puts })
    }

    pub fn load(path: &Path) -> Result<GetPutCompatTable, DataFileError> {
        GetPutCompatTable::parse(&datafile::read(path)?, &path.display().to_string())
    }

    /// Canonical signature of `m` if it is a listed getter (any overload).
    pub fn get_signature(&self, m: &MethodRef) -> Option<&str> {
        self.gets.get(&(owner_name(&m.class), m.name.clone())).map(|(s, _)| s.as_str())
    }

    /// Signature of `m` if it is a listed putter.
    pub fn put_signature(&self, m: &MethodRef) -> Option<String> {
        let text = api_signature_text(m);
        self.puts.contains_key(&text).then_some(text)
    }

    pub fn get_value_type(&self, get_sig: &str) -> Option<&str> {
        let (owner, name) = split_get(get_sig)?;
        self.gets.get(&(owner.to_string(), name.to_string())).map(|(_, t)| t.as_str())
    }

    pub fn put_value_type(&self, put_sig: &str) -> Option<&str> {
        self.puts.get(put_sig).map(String::as_str)
    }

    /// Whether a value stored by `put_sig` can be read back by `get_sig`.
    pub fn signature_compat(&self, get_sig: &str, put_sig: &str) -> Result<bool, CompatError> {
        let ty = self.get_value_type(get_sig).ok_or_else(|| CompatError::UnknownGetSignature(get_sig.to_string()))?;
        Ok(self.put_value_type(put_sig) == Some(ty))
    }

    pub fn compatible_puts(&self, get_sig: &str) -> Vec<&str> {
        let Some(ty) = self.get_value_type(get_sig) else { return Vec::new() };
        self.puts.iter().filter(|(_, t)| *t == ty).map(|(s, _)| s.as_str()).collect()
    }

    pub fn gets(&self) -> impl Iterator<Item = (&str, &str)> {
        self.gets.values().map(|(s, t)| (s.as_str(), t.as_str()))
    }

    pub fn puts(&self) -> impl Iterator<Item = (&str, &str)> {
        self.puts.iter().map(|(s, t)| (s.as_str(), t.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_pairs() {
        let t = GetPutCompatTable::default();
        assert_eq!(t.signature_compat("Intent.getStringExtra(String)", "putExtra(String,String)"), Ok(true));
        assert_eq!(t.signature_compat("Intent.getIntExtra(String,int)", "putExtra(String,String)"), Ok(false));
        assert_eq!(t.signature_compat("Bundle.getString(String)", "putExtra(String,String)"), Ok(true));
        assert_eq!(
            t.signature_compat("Intent.getFooExtra(String)", "putExtra(String,String)"),
            Err(CompatError::UnknownGetSignature("Intent.getFooExtra(String)".into()))
        );
    }

    #[test]
    fn table_is_total_over_gets() {
        let t = GetPutCompatTable::default();
        assert_eq!(t.gets().count(), 42);
        assert_eq!(t.gets().filter(|(s, _)| s.starts_with("Intent.")).count(), 28);
        for (get, _) in t.gets() {
            assert!(!t.compatible_puts(get).is_empty(), "{} has no put counterpart", get);
        }
    }

    #[test]
    fn signatures_from_method_refs() {
        let t = GetPutCompatTable::default();
        let put = MethodRef::parse(
            "Landroid/content/Intent;->putExtra(Ljava/lang/String;Ljava/lang/String;)Landroid/content/Intent;",
        )
        .unwrap();
        assert_eq!(t.put_signature(&put).as_deref(), Some("putExtra(String,String)"));
        let get = MethodRef::parse("Landroid/content/Intent;->getIntExtra(Ljava/lang/String;I)I").unwrap();
        assert_eq!(t.get_signature(&get), Some("Intent.getIntExtra(String,int)"));
        let bget = MethodRef::parse(
            "Landroid/os/BaseBundle;->getString(Ljava/lang/String;Ljava/lang/String;)Ljava/lang/String;",
        )
        .unwrap();
        assert_eq!(t.get_signature(&bget), Some("Bundle.getString(String)"));
        let bput = MethodRef::parse("Landroid/os/Bundle;->putInt(Ljava/lang/String;I)V").unwrap();
        assert_eq!(t.put_signature(&bput).as_deref(), Some("Bundle.putInt(String,int)"));
    }
}
