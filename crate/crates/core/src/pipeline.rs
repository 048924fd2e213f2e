//! The end-to-end phases behind the command line: analyze, fixpoint,
//! report, stats and score.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use thiserror::Error;

use crate::apk::{load_app, MANIFEST_FILE};
use crate::db::{load_db, save_db, DbError, IntentDb};
use crate::extract::{extract_app, ExtractConfig, SenderApiCatalog};
use crate::report::{
    derive_fixture_flows, read_flows, render_records, render_text, report_leaks, FlowError, GetPutCompatTable,
    IntraFlow, LeakReport, ReportConfig, SourceSinkCatalog,
};
use crate::score::{read_ground_truth, score, BenchmarkScore, LeakTriple, ScoreError};
use crate::stats::{compute_stats, render_stats_text, CorpusStats};
use crate::strings::DEFAULT_CANDIDATE_CAP;
use crate::DataFileError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    DataFile(#[from] DataFileError),
    #[error(transparent)]
    Flows(#[from] FlowError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no flows: pass a flows file or app directories to derive them from")]
    MissingFlows,
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Records,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub apps: Vec<PathBuf>,
    pub db: PathBuf,
    pub flows: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub compat_table: Option<PathBuf>,
    pub senders: Option<PathBuf>,
    pub strict: bool,
    pub format: OutputFormat,
    pub string_cap: usize,
    pub max_chain: Option<usize>,
}

impl RunConfig {
    pub fn new(db: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            apps: Vec::new(),
            db: db.into(),
            flows: None,
            catalog: None,
            compat_table: None,
            senders: None,
            strict: false,
            format: OutputFormat::Text,
            string_cap: DEFAULT_CANDIDATE_CAP,
            max_chain: None,
        }
    }
}

/// Catalogs loaded once for all phases.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    pub extract: ExtractConfig,
    pub report: ReportConfig,
}

/// Outcome of the analysis phase.
#[derive(Debug, Clone, Default)]
pub struct AnalyzeSummary {
    /// Number of app loads performed; each app is loaded exactly once.
    pub apps_loaded: usize,
    pub analyzed: Vec<String>,
    pub failures: Vec<(PathBuf, String)>,
    pub rows_added: usize,
    /// Flows derived from the loaded apps, when requested.
    pub flows: Vec<IntraFlow>,
}

/// App directories under `paths`: a path holding a manifest is an app;
/// any other directory contributes its immediate subdirectories that hold
/// one, in name order.
pub fn expand_app_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for p in paths {
        if !p.is_dir() {
            return Err(PipelineError::NotADirectory(p.clone()));
        }
        if p.join(MANIFEST_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|source| PipelineError::Io { path: p.clone(), source })?;
        let mut subs: Vec<PathBuf> =
            entries.filter_map(Result::ok).map(|e| e.path()).filter(|d| d.join(MANIFEST_FILE).is_file()).collect();
        if subs.is_empty() {
            // let the loader report what is missing
            subs.push(p.clone());
        }
        subs.sort();
        out.extend(subs);
    }
    Ok(out)
}

fn write_out(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Pipeline, PipelineError> {
        let catalog = match &config.catalog {
            Some(p) => SourceSinkCatalog::load(p)?,
            None => SourceSinkCatalog::default(),
        };
        let compat = match &config.compat_table {
            Some(p) => GetPutCompatTable::load(p)?,
            None => GetPutCompatTable::default(),
        };
        let senders = match &config.senders {
            Some(p) => SenderApiCatalog::load(p)?,
            None => SenderApiCatalog::default(),
        };
        let extract =
            ExtractConfig { cap: config.string_cap.max(1), senders, sources: catalog.clone(), compat: compat.clone() };
        let report = ReportConfig { catalog, compat, strict: config.strict };
        Ok(Pipeline { config, extract, report })
    }

    /// Analyzes every app once and adds its summary to `db`. Apps that fail
    /// to load are recorded and skipped.
    pub fn analyze_into(&self, db: &mut IntentDb, derive_flows: bool) -> Result<AnalyzeSummary, PipelineError> {
        let started = Instant::now();
        let mut summary = AnalyzeSummary::default();
        for dir in expand_app_dirs(&self.config.apps)? {
            summary.apps_loaded += 1;
            let app = match load_app(&dir) {
                Ok(app) => app,
                Err(e) => {
                    warn!("{}: {}", dir.display(), e);
                    summary.failures.push((dir, e.to_string()));
                    continue;
                }
            };
            let extracted = extract_app(&app, &self.extract);
            summary.rows_added += db.insert_app_summaries(&extracted);
            if derive_flows {
                summary.flows.extend(derive_fixture_flows(&app, &self.report.catalog, &self.report.compat));
            }
            summary.analyzed.push(app.package_name);
        }
        info!("analysis: {} app(s) in {:.2?}", summary.analyzed.len(), started.elapsed());
        Ok(summary)
    }

    fn open_db(&self) -> Result<IntentDb, PipelineError> {
        Ok(if self.config.db.exists() { load_db(&self.config.db)? } else { IntentDb::new() })
    }

    /// Adds the configured apps to the database on disk (created if absent).
    pub fn analyze(&self) -> Result<AnalyzeSummary, PipelineError> {
        let mut db = self.open_db()?;
        let summary = self.analyze_into(&mut db, false)?;
        save_db(&db, &self.config.db)?;
        Ok(summary)
    }

    pub fn fixpoint(&self) -> Result<usize, PipelineError> {
        let started = Instant::now();
        let mut db = load_db(&self.config.db)?;
        let added = db.fixpoint_resolve(&self.report.compat, self.config.max_chain);
        save_db(&db, &self.config.db)?;
        info!("fixpoint: {} derived row(s) in {:.2?}", added, started.elapsed());
        Ok(added)
    }

    /// Flows from the flows file, or derived from the configured apps.
    pub fn flows(&self) -> Result<Vec<IntraFlow>, PipelineError> {
        if let Some(p) = &self.config.flows {
            return Ok(read_flows(p)?);
        }
        if self.config.apps.is_empty() {
            return Err(PipelineError::MissingFlows);
        }
        let mut flows = Vec::new();
        for dir in expand_app_dirs(&self.config.apps)? {
            match load_app(&dir) {
                Ok(app) => flows.extend(derive_fixture_flows(&app, &self.report.catalog, &self.report.compat)),
                Err(e) => warn!("{}: {}", dir.display(), e),
            }
        }
        Ok(flows)
    }

    pub fn report_with(&self, db: &IntentDb, flows: &[IntraFlow]) -> Vec<LeakReport> {
        let started = Instant::now();
        let reports = report_leaks(flows, db, &self.report);
        info!("reporting: {} flow(s), {} leak(s) in {:.2?}", flows.len(), reports.len(), started.elapsed());
        reports
    }

    pub fn report(&self) -> Result<Vec<LeakReport>, PipelineError> {
        let db = load_db(&self.config.db)?;
        let flows = self.flows()?;
        Ok(self.report_with(&db, &flows))
    }

    pub fn render_reports(&self, reports: &[LeakReport]) -> String {
        match self.config.format {
            OutputFormat::Text => render_text(reports),
            OutputFormat::Records => render_records(reports),
        }
    }

    pub fn stats(&self) -> Result<CorpusStats, PipelineError> {
        Ok(compute_stats(&load_db(&self.config.db)?))
    }

    pub fn render_stats(&self, stats: &CorpusStats) -> String {
        match self.config.format {
            OutputFormat::Text => render_stats_text(stats),
            OutputFormat::Records => serde_json::to_string_pretty(stats).expect("stats serialize") + "\n",
        }
    }

    /// All phases on a fresh database: analyze, fixpoint, report, stats.
    /// Outputs are written when paths are given.
    pub fn run(&self, report_out: Option<&Path>, stats_out: Option<&Path>) -> Result<RunOutcome, PipelineError> {
        let mut db = IntentDb::new();
        let derive = self.config.flows.is_none();
        let analysis = self.analyze_into(&mut db, derive)?;
        let derived_rows = db.fixpoint_resolve(&self.report.compat, self.config.max_chain);
        save_db(&db, &self.config.db)?;
        let flows = match &self.config.flows {
            Some(p) => read_flows(p)?,
            None => analysis.flows.clone(),
        };
        let reports = self.report_with(&db, &flows);
        let stats = compute_stats(&db);
        if let Some(p) = report_out {
            write_out(p, &self.render_reports(&reports))?;
        }
        if let Some(p) = stats_out {
            write_out(p, &self.render_stats(&stats))?;
        }
        Ok(RunOutcome { analysis, derived_rows, reports, stats })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub analysis: AnalyzeSummary,
    pub derived_rows: usize,
    pub reports: Vec<LeakReport>,
    pub stats: CorpusStats,
}

/// Leak triples of a report list.
pub fn report_triples(reports: &[LeakReport]) -> BTreeSet<LeakTriple> {
    reports.iter().map(LeakReport::triple).collect()
}

/// Scores a records-format report file against ground truth.
pub fn score_files(reports: &Path, truth: &Path) -> Result<BenchmarkScore, PipelineError> {
    let text =
        std::fs::read_to_string(reports).map_err(|source| PipelineError::Io { path: reports.to_path_buf(), source })?;
    let mut parsed = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: LeakReport = serde_json::from_str(line).map_err(|e| {
            PipelineError::Flows(FlowError::Malformed {
                path: reports.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })?;
        parsed.push(r);
    }
    Ok(score(&report_triples(&parsed), &read_ground_truth(truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(rel: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
    }

    fn config(dir: &Path, apps: &[&str]) -> RunConfig {
        let mut c = RunConfig::new(dir.join("db.jsonl"));
        c.apps = apps.iter().map(|a| fixture(a)).collect();
        c
    }

    #[test]
    fn app_dirs_expand_one_level() {
        let dirs = expand_app_dirs(&[fixture("listing5")]).unwrap();
        let names: Vec<_> = dirs.iter().map(|d| d.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["app_a", "app_b", "app_c"]);
        assert_eq!(expand_app_dirs(&[fixture("listing6_7")]).unwrap(), [fixture("listing6_7")]);
        let missing = fixture("nope");
        assert!(matches!(expand_app_dirs(&[missing]), Err(PipelineError::NotADirectory(_))));
    }

    #[test]
    fn phases_one_by_one_match_run() {
        let tmp = tempfile::tempdir().unwrap();
        let p = Pipeline::new(config(tmp.path(), &["listing5"])).unwrap();
        let a = p.analyze().unwrap();
        assert_eq!(a.apps_loaded, 3);
        assert_eq!(a.analyzed, ["com.appA", "com.appB", "com.appC"]);
        assert!(a.failures.is_empty());
        assert_eq!(a.rows_added, 3);
        assert_eq!(p.fixpoint().unwrap(), 1);
        assert_eq!(p.fixpoint().unwrap(), 0);
        let stepwise = p.report().unwrap();
        assert_eq!(stepwise.len(), 1);

        let tmp2 = tempfile::tempdir().unwrap();
        let q = Pipeline::new(config(tmp2.path(), &["listing5"])).unwrap();
        let out = q.run(Some(&tmp2.path().join("out/report.txt")), Some(&tmp2.path().join("out/stats.txt"))).unwrap();
        assert_eq!(out.derived_rows, 1);
        assert_eq!(out.reports, stepwise);
        assert_eq!(out.stats, p.stats().unwrap());
        let text = std::fs::read_to_string(tmp2.path().join("out/report.txt")).unwrap();
        assert_eq!(text, p.render_reports(&stepwise));
    }

    #[test]
    fn analyze_twice_keeps_the_database_stable() {
        let tmp = tempfile::tempdir().unwrap();
        let p = Pipeline::new(config(tmp.path(), &["listing1_3"])).unwrap();
        p.analyze().unwrap();
        let first = std::fs::read(tmp.path().join("db.jsonl")).unwrap();
        let again = p.analyze().unwrap();
        assert_eq!(again.rows_added, 2);
        assert_eq!(std::fs::read(tmp.path().join("db.jsonl")).unwrap(), first);
    }

    #[test]
    fn broken_apps_are_recorded_and_skipped() {
        let tmp = tempfile::tempdir().unwrap();
        let broken = tmp.path().join("broken");
        std::fs::create_dir_all(&broken).unwrap();
        std::fs::write(broken.join(MANIFEST_FILE), "<manifest").unwrap();
        let mut c = config(tmp.path(), &["listing6_7"]);
        c.apps.push(broken.clone());
        let a = Pipeline::new(c).unwrap().analyze().unwrap();
        assert_eq!(a.apps_loaded, 2);
        assert_eq!(a.analyzed, ["com.example.result"]);
        assert_eq!(a.failures.len(), 1);
        assert_eq!(a.failures[0].0, broken);
    }

    #[test]
    fn report_needs_flows() {
        let tmp = tempfile::tempdir().unwrap();
        let p = Pipeline::new(config(tmp.path(), &[])).unwrap();
        assert!(matches!(p.flows(), Err(PipelineError::MissingFlows)));
    }

    #[test]
    fn flows_file_replaces_derivation() {
        let tmp = tempfile::tempdir().unwrap();
        let p = Pipeline::new(config(tmp.path(), &["listing1_3"])).unwrap();
        let flows = p.flows().unwrap();
        let path = tmp.path().join("flows.jsonl");
        crate::report::write_flows(&path, &flows).unwrap();
        let mut c = config(tmp.path(), &["listing1_3"]);
        c.flows = Some(path);
        let with_file = Pipeline::new(c).unwrap().run(None, None).unwrap();
        assert!(with_file.analysis.flows.is_empty());
        assert_eq!(with_file.reports, p.run(None, None).unwrap().reports);
    }

    #[test]
    fn records_output_scores_against_truth() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = config(tmp.path(), &["listing1_3"]);
        c.format = OutputFormat::Records;
        let p = Pipeline::new(c).unwrap();
        let report = tmp.path().join("report.jsonl");
        p.run(Some(&report), None).unwrap();
        let truth = tmp.path().join("truth.jsonl");
        std::fs::write(
            &truth,
            "{\"app\":\"com.appB\",\"source\":\"TelephonyManager.getDeviceId\",\"sink\":\"SmsManager.sendTextMessage\"}\n\
             {\"app\":\"com.appB\",\"source\":\"TelephonyManager.getDeviceId\",\"sink\":\"Log.i\"}\n",
        )
        .unwrap();
        let s = score_files(&report, &truth).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (1, 0, 1));
    }

    #[test]
    fn custom_catalog_is_used() {
        let tmp = tempfile::tempdir().unwrap();
        let catalog = tmp.path().join("catalog.txt");
        // no sources: nothing sensitive is sent
        std::fs::write(&catalog, "sink sms_send Landroid/telephony/SmsManager;->sendTextMessage\n").unwrap();
        let mut c = config(tmp.path(), &["listing1_3"]);
        c.catalog = Some(catalog);
        assert!(Pipeline::new(c).unwrap().run(None, None).unwrap().reports.is_empty());
    }
}
