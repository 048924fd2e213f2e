//! In-memory model of a decoded app: the manifest's components and the
//! parsed Smali classes.

mod manifest;
mod smali;

use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;
use walkdir::WalkDir;

pub use manifest::{
    parse_manifest, parse_manifest_str, qualify_component_name, ComponentDecl, ComponentKind, IntentFilterDecl,
    Manifest, RawElement, Registration,
};
pub use smali::{
    class_to_descriptor, descriptor_to_class, parse_smali_class, parse_smali_str, simple_type_name, split_descriptors,
    FieldRef, IfTest, Instruction, InvokeKind, MethodRef, Reg, SmaliClass, SmaliField, SmaliMethod,
};

#[derive(Debug, Error)]
pub enum ApkError {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("malformed smali at line {line}: {reason}")]
    MalformedSmali { line: usize, reason: String },
    #[error("no AndroidManifest.xml in {0}")]
    MissingManifest(PathBuf),
    #[error("no smali directory in {0}")]
    MissingSmaliTree(PathBuf),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub const MANIFEST_FILE: &str = "AndroidManifest.xml";

#[derive(Debug, Clone)]
pub struct DecodedApp {
    pub package_name: String,
    pub components: Vec<ComponentDecl>,
    pub classes: Vec<SmaliClass>,
    pub source_dir: PathBuf,
    pub unmodeled: Vec<RawElement>,
    pub warnings: Vec<String>,
}

impl DecodedApp {
    pub fn class(&self, name: &str) -> Option<&SmaliClass> {
        self.classes.iter().find(|c| c.class_name == name)
    }

    pub fn component(&self, name: &str) -> Option<&ComponentDecl> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Walks the superclass chain inside the app looking for a declared
    /// component kind, falling back to well-known framework base classes.
    pub fn kind_of_class(&self, class_name: &str) -> Option<ComponentKind> {
        let mut current = class_name.to_string();
        for _ in 0..16 {
            if let Some(c) = self.component(&current) {
                return Some(c.kind);
            }
            if let Some(k) = framework_kind(&current) {
                return Some(k);
            }
            current = self.class(&current)?.super_name.clone();
        }
        None
    }
}

fn framework_kind(class: &str) -> Option<ComponentKind> {
    Some(match class {
        "android.app.Activity"
        | "android.app.ListActivity"
        | "androidx.appcompat.app.AppCompatActivity"
        | "androidx.fragment.app.FragmentActivity" => ComponentKind::Activity,
        "android.app.Service" | "android.app.IntentService" => ComponentKind::Service,
        "android.content.BroadcastReceiver" => ComponentKind::BroadcastReceiver,
        "android.content.ContentProvider" => ComponentKind::ContentProvider,
        _ => return None,
    })
}

/// Smali roots under an app directory: `smali/` plus the multidex
/// `smali_classesN/` siblings apktool emits.
fn smali_roots(dir: &Path) -> Vec<PathBuf> {
    let mut roots: Vec<PathBuf> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .filter(|e| {
            let n = e.file_name();
            let n = n.to_string_lossy();
            n == "smali" || n.starts_with("smali_classes")
        })
        .map(|e| e.path())
        .collect();
    roots.sort();
    roots
}

/// Loads a decoded app directory (`AndroidManifest.xml` + `smali/**`).
///
/// Only a missing manifest or smali tree aborts; unparseable class files
/// are skipped with a warning.
pub fn load_app(dir: &Path) -> Result<DecodedApp, ApkError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(ApkError::MissingManifest(dir.to_path_buf()));
    }
    let roots = smali_roots(dir);
    if roots.is_empty() {
        return Err(ApkError::MissingSmaliTree(dir.to_path_buf()));
    }
    let manifest = parse_manifest(&manifest_path)?;
    let mut warnings = manifest.warnings.clone();

    let mut files: Vec<PathBuf> = roots
        .iter()
        .flat_map(|r| WalkDir::new(r).into_iter().filter_map(Result::ok))
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "smali"))
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let mut classes: Vec<SmaliClass> = Vec::with_capacity(files.len());
    for f in files {
        match parse_smali_class(&f) {
            Ok(c) => {
                warnings.extend(c.warnings.iter().cloned());
                if classes.iter().any(|o| o.class_name == c.class_name) {
                    warnings.push(format!("duplicate class {} in {}", c.class_name, f.display()));
                } else {
                    classes.push(c);
                }
            }
            Err(e) => {
                warn!("skipping {}: {}", f.display(), e);
                warnings.push(format!("skipped {}: {}", f.display(), e));
            }
        }
    }
    classes.sort_by(|a, b| a.class_name.cmp(&b.class_name));

    let mut components: Vec<ComponentDecl> = Vec::with_capacity(manifest.components.len());
    for c in manifest.components {
        if components.iter().any(|o| o.name == c.name && o.kind == c.kind) {
            warnings.push(format!("duplicate component {} ignored", c.name));
            continue;
        }
        components.push(c);
    }

    Ok(DecodedApp {
        package_name: manifest.package_name,
        components,
        classes,
        source_dir: dir.to_path_buf(),
        unmodeled: manifest.unmodeled,
        warnings,
    })
}
