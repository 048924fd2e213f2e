//! Helpers shared by the integration tests.

#![allow(dead_code)]

pub mod interp;

use std::fs;
use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Recursively copies `from` into `to`, rewriting file contents with
/// `edit` on the way.
pub fn copy_tree(from: &Path, to: &Path, edit: &dyn Fn(&Path, String) -> String) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &dest, edit);
        } else {
            let text = fs::read_to_string(entry.path()).unwrap();
            fs::write(&dest, edit(&entry.path(), text)).unwrap();
        }
    }
}

pub fn copy_plain(from: &Path, to: &Path) {
    copy_tree(from, to, &|_, t| t);
}
