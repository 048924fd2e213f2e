//! Modular static analysis of Android intent communication.
//!
//! Apps are analyzed once each into a summary database of intent senders
//! and receivers; transitive flows are resolved over the database, and
//! intra-component flows are joined with it to report leaks.

pub mod apk;
pub mod cfg;
pub mod db;
pub mod extract;
pub mod pipeline;
pub mod report;
pub mod score;
pub mod stats;
pub mod strings;

mod datafile;

pub use datafile::DataFileError;
