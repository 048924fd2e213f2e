//! Leak reporting: the source/sink catalog, extra get/put compatibility,
//! intra-component flows and their join with the intent database.

mod catalog;
mod compat;
mod flows;
mod leaks;

pub use catalog::SourceSinkCatalog;
pub use compat::{api_signature_text, CompatError, GetPutCompatTable};
pub use flows::{derive_fixture_flows, read_flows, write_flows, FlowError, FlowSink, FlowSource, IntraFlow};
pub use leaks::{
    classify_sensitivity, match_flow, match_result_channels, render_records, render_text, report_leaks, Hop,
    LeakReport, LeakSink, ReportConfig,
};

#[cfg(test)]
mod tests;
