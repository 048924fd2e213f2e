use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn intentflow(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_intentflow"));
    for a in args {
        cmd.arg(a);
    }
    cmd.env_remove("RUST_LOG").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn phases_in_sequence() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db.jsonl");
    let apps = fixtures("listing5");

    let o = intentflow(&[&"analyze", &apps, &"--db", &db]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(stdout(&o), "analyzed 3 app(s), 3 row(s) added\n");
    assert!(db.is_file());
    assert!(tmp.path().join("db.jsonl.meta.json").is_file());

    let o = intentflow(&[&"fixpoint", &"--db", &db]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "1 derived row(s)\n");

    let report = tmp.path().join("report.jsonl");
    let o = intentflow(&[&"--format", &"records", &"report", &"--db", &db, &apps, &"--out", &report]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"app\":\"com.appC\""));

    let o = intentflow(&[&"stats", &"--db", &db]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("apps: 3\n"));
    assert!(stdout(&o).contains("chains over two components: 1\n"));

    let truth = tmp.path().join("truth.jsonl");
    std::fs::write(
        &truth,
        "{\"app\":\"com.appC\",\"source\":\"TelephonyManager.getDeviceId\",\"sink\":\"SmsManager.sendTextMessage\"}\n",
    )
    .unwrap();
    let o = intentflow(&[&"score", &"--reports", &report, &"--truth", &truth]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "tp=1 fp=0 fn=0 precision=1.000 recall=1.000 f1=1.000\n");
}

#[test]
fn run_scores_the_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = fixtures("benchmark");
    let o = intentflow(&[
        &"run",
        &bench,
        &"--db",
        &tmp.path().join("db.jsonl"),
        &"--report-out",
        &tmp.path().join("report.txt"),
        &"--stats-out",
        &tmp.path().join("stats.txt"),
        &"--truth",
        &bench.join("ground_truth.jsonl"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(stdout(&o), "tp=25 fp=0 fn=0 precision=1.000 recall=1.000 f1=1.000\n");
    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.ends_with("25 leak(s)\n"), "{report}");
    assert!(std::fs::read_to_string(tmp.path().join("stats.txt")).unwrap().starts_with("apps: 27\n"));
}

#[test]
fn score_in_records_format() {
    let tmp = tempfile::tempdir().unwrap();
    let reports = tmp.path().join("empty.jsonl");
    std::fs::write(&reports, "").unwrap();
    let truth = tmp.path().join("truth.jsonl");
    std::fs::write(&truth, "").unwrap();
    let o = intentflow(&[&"--format", &"records", &"score", &"--reports", &reports, &"--truth", &truth]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["tp"], 0);
    assert_eq!(v["precision"], 1.0);
    assert_eq!(v["recall"], 1.0);
}

#[test]
fn partial_failure_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = tmp.path().join("broken");
    std::fs::create_dir_all(broken.join("smali")).unwrap();
    std::fs::write(broken.join("AndroidManifest.xml"), "<manifest").unwrap();
    let db = tmp.path().join("db.jsonl");
    let o = intentflow(&[&"analyze", &fixtures("listing6_7"), &broken, &"--db", &db]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    assert_eq!(stdout(&o), "analyzed 1 app(s), 1 row(s) added\n");
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken"));
    assert!(db.is_file());
}

#[test]
fn errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing_db = tmp.path().join("missing.jsonl");
    let o = intentflow(&[&"fixpoint", &"--db", &missing_db]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    let o = intentflow(&[&"analyze", &tmp.path().join("nope"), &"--db", &missing_db]);
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"schema_version\":99}\n").unwrap();
    let o = intentflow(&[&"stats", &"--db", &bad]);
    assert_eq!(o.status.code(), Some(2));

    let o = intentflow(&[&"report", &"--db", &bad]);
    assert_eq!(o.status.code(), Some(2));

    let o = intentflow(&[&"frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_to_stdout_without_leaks() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db.jsonl");
    let app = fixtures("benchmark/startActivity5");
    assert_eq!(intentflow(&[&"analyze", &app, &"--db", &db]).status.code(), Some(0));
    let o = intentflow(&[&"report", &"--db", &db, &app]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "no leaks found\n");
}
