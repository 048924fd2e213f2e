use std::path::{Path, PathBuf};

use proptest::prelude::*;

use super::*;
use crate::apk::{load_app, parse_manifest_str, parse_smali_str, DecodedApp};
use crate::db::{Confidence, IntentDb};
use crate::extract::{extract_app, Channel, CodeLocation, ExtractConfig, ReceiveVia, ValueDescriptor};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// Database and derived flows for the given fixture apps.
fn load(apps: &[&str], fixpoint: bool) -> (IntentDb, Vec<IntraFlow>) {
    let cx = ExtractConfig::default();
    let mut db = IntentDb::new();
    let mut flows = Vec::new();
    for a in apps {
        let app = load_app(&fixture(a)).unwrap();
        db.insert_app_summaries(&extract_app(&app, &cx));
        flows.extend(derive_fixture_flows(&app, &cx.sources, &cx.compat));
    }
    if fixpoint {
        db.fixpoint_resolve(&cx.compat, None);
    }
    (db, flows)
}

fn hop_line(h: &Hop) -> String {
    format!(
        "{} {} {:?} {:?} {:?}",
        h.package,
        h.class,
        h.channel,
        h.addressed_by.as_deref().unwrap_or("-"),
        h.key.as_deref().unwrap_or("-")
    )
}

#[test]
fn listing_pair_leaks_device_id_to_sms() {
    let (db, flows) = load(&["listing1_3/app_a", "listing1_3/app_b"], false);
    let reports = report_leaks(&flows, &db, &ReportConfig::default());
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    assert_eq!(
        r.triple(),
        ("com.appB".into(), "TelephonyManager.getDeviceId".into(), "SmsManager.sendTextMessage".into())
    );
    assert_eq!(r.source_category, "device_id");
    assert_eq!(r.sink.category, "sms_send");
    assert_eq!(r.confidence, Confidence::Resolved);
    assert_eq!(r.channels, [Channel::Activity]);
    let hops: Vec<_> = r.hops.iter().map(hop_line).collect();
    assert_eq!(
        hops,
        [
            "com.appA com.appA.OutFlowActivity Some(Activity) \"CUSTOM_INTENT.ACTION\" \"data\"",
            "com.appB com.appB.InFlowActivity None \"-\" \"data\"",
        ]
    );
}

#[test]
fn chain_needs_the_fixpoint() {
    let apps = ["listing5/app_a", "listing5/app_b", "listing5/app_c"];
    let (db, flows) = load(&apps, false);
    let before = report_leaks(&flows, &db, &ReportConfig::default());
    assert!(before.iter().all(|r| r.app != "com.appC"), "{before:#?}");

    let (db, flows) = load(&apps, true);
    let after = report_leaks(&flows, &db, &ReportConfig::default());
    let at_c: Vec<_> = after.iter().filter(|r| r.app == "com.appC").collect();
    assert_eq!(at_c.len(), 1);
    let classes: Vec<_> = at_c[0].hops.iter().map(|h| h.class.as_str()).collect();
    assert_eq!(classes, ["com.appA.OutFlowActivity", "com.appB.IntermediateActivity", "com.appC.InFlowActivity"]);
}

#[test]
fn result_channel_round_trip() {
    let (db, flows) = load(&["listing6_7"], false);
    let reports = report_leaks(&flows, &db, &ReportConfig::default());
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    assert_eq!(r.app, "com.example.result");
    assert_eq!(r.sink.location.method, "onActivityResult(IILandroid/content/Intent;)V");
    assert_eq!(r.hops.first().unwrap().channel, Some(Channel::ActivityForResult));
    assert_eq!(r.hops.len(), 3);
}

#[test]
fn sensitivity_classes() {
    let catalog = SourceSinkCatalog::default();
    let id = ValueDescriptor::SourceCall {
        api: "Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;".into(),
    };
    assert_eq!(classify_sensitivity(&id, &catalog, false), Some(("device_id".into(), Confidence::Resolved)));
    let opaque = ValueDescriptor::Opaque { location: CodeLocation::new("a.B", "m()V", 0) };
    assert_eq!(classify_sensitivity(&opaque, &catalog, false), None);
    assert_eq!(classify_sensitivity(&opaque, &catalog, true), Some(("unknown".into(), Confidence::Low)));
    assert_eq!(classify_sensitivity(&ValueDescriptor::Constant("x".into()), &catalog, true), None);
}

#[test]
fn strict_mode_reports_opaque_values_at_low_confidence() {
    let app = small_app(
        "    iget-object v7, p0, Lp/Main;->cached:Ljava/lang/String;
    new-instance v0, Landroid/content/Intent;
    const-string v1, \"p.GO\"
    invoke-direct {v0, v1}, Landroid/content/Intent;-><init>(Ljava/lang/String;)V
    const-string v2, \"k\"
    invoke-virtual {v0, v2, v7}, Landroid/content/Intent;->putExtra(Ljava/lang/String;Ljava/lang/String;)Landroid/content/Intent;
    invoke-virtual {p0, v0}, Lp/Main;->startActivity(Landroid/content/Intent;)V",
    );
    let recv = small_app_named("q", RECEIVER_BODY);
    let cx = ExtractConfig::default();
    let mut db = IntentDb::new();
    db.insert_app_summaries(&extract_app(&app, &cx));
    db.insert_app_summaries(&extract_app(&recv, &cx));
    let flows = derive_fixture_flows(&recv, &cx.sources, &cx.compat);
    assert_eq!(flows.len(), 1);
    assert!(report_leaks(&flows, &db, &ReportConfig::default()).is_empty());
    let strict = ReportConfig { strict: true, ..ReportConfig::default() };
    let reports = report_leaks(&flows, &db, &strict);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].confidence, Confidence::Low);
    assert_eq!(reports[0].source_category, "unknown");
}

const RECEIVER_BODY: &str = "    invoke-virtual {p0}, Lq/Main;->getIntent()Landroid/content/Intent;
    move-result-object v0
    const-string v1, \"k\"
    invoke-virtual {v0, v1}, Landroid/content/Intent;->getStringExtra(Ljava/lang/String;)Ljava/lang/String;
    move-result-object v2
    const-string v1, \"tag\"
    invoke-static {v1, v2}, Landroid/util/Log;->i(Ljava/lang/String;Ljava/lang/String;)I";

fn small_app(body: &str) -> DecodedApp {
    small_app_named("p", body)
}

fn small_app_named(pkg: &str, body: &str) -> DecodedApp {
    let manifest = format!(
        r#"<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="{pkg}">
  <application>
    <activity android:name=".Main">
      <intent-filter><action android:name="p.GO"/><category android:name="android.intent.category.DEFAULT"/></intent-filter>
    </activity>
  </application>
</manifest>"#
    );
    let smali = format!(
        ".class public L{pkg}/Main;\n.super Landroid/app/Activity;\n.field private cached:Ljava/lang/String;\n\n.method protected onCreate(Landroid/os/Bundle;)V\n    .locals 8\n{body}\n    return-void\n.end method\n"
    );
    let m = parse_manifest_str(&manifest).unwrap();
    DecodedApp {
        package_name: m.package_name,
        components: m.components,
        classes: vec![parse_smali_str(&smali).unwrap()],
        source_dir: PathBuf::from("."),
        unmodeled: Vec::new(),
        warnings: Vec::new(),
    }
}

fn flows_of(body: &str) -> Vec<IntraFlow> {
    let cx = ExtractConfig::default();
    derive_fixture_flows(&small_app(body), &cx.sources, &cx.compat)
}

#[test]
fn get_extra_reaching_a_sink_is_a_flow() {
    let flows = flows_of(&RECEIVER_BODY.replace("Lq/", "Lp/"));
    assert_eq!(flows.len(), 1);
    let f = &flows[0];
    assert_eq!(f.app, "p");
    assert_eq!(f.component, "p.Main");
    assert_eq!(
        f.source,
        FlowSource::GetExtra {
            signature: "Intent.getStringExtra(String)".into(),
            key: "k".into(),
            via: Some(ReceiveVia::Activity)
        }
    );
    assert!(f.sink.signature.contains("Landroid/util/Log;->i("));
}

#[test]
fn constant_overwrite_clears_taint() {
    let body = RECEIVER_BODY
        .replace("Lq/", "Lp/")
        .replace("    const-string v1, \"tag\"", "    const-string v2, \"clean\"\n    const-string v1, \"tag\"");
    assert!(flows_of(&body).is_empty());
}

#[test]
fn no_sink_no_flow() {
    let body = RECEIVER_BODY.replace("Lq/", "Lp/").replace(
        "invoke-static {v1, v2}, Landroid/util/Log;->i(Ljava/lang/String;Ljava/lang/String;)I",
        "invoke-virtual {v2}, Ljava/lang/String;->length()I",
    );
    assert!(flows_of(&body).is_empty());
}

#[test]
fn taint_survives_builders() {
    let body = RECEIVER_BODY.replace("Lq/", "Lp/").replace(
        "    const-string v1, \"tag\"",
        "    new-instance v3, Ljava/lang/StringBuilder;
    invoke-direct {v3}, Ljava/lang/StringBuilder;-><init>()V
    invoke-virtual {v3, v2}, Ljava/lang/StringBuilder;->append(Ljava/lang/String;)Ljava/lang/StringBuilder;
    invoke-virtual {v3}, Ljava/lang/StringBuilder;->toString()Ljava/lang/String;
    move-result-object v2
    const-string v1, \"tag\"",
    );
    assert_eq!(flows_of(&body).len(), 1);
}

#[test]
fn direct_source_to_sink() {
    let flows = flows_of(
        "    const-string v6, \"phone\"
    invoke-virtual {p0, v6}, Lp/Main;->getSystemService(Ljava/lang/String;)Ljava/lang/Object;
    move-result-object v6
    check-cast v6, Landroid/telephony/TelephonyManager;
    invoke-virtual {v6}, Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;
    move-result-object v7
    const-string v1, \"tag\"
    invoke-static {v1, v7}, Landroid/util/Log;->i(Ljava/lang/String;Ljava/lang/String;)I",
    );
    assert_eq!(flows.len(), 1);
    assert!(matches!(&flows[0].source, FlowSource::DirectSource { signature } if signature.contains("getDeviceId")));
}

#[test]
fn binder_flow_in_bound_service_fixture() {
    let app = load_app(&fixture("benchmark/bindService2")).unwrap();
    let cx = ExtractConfig::default();
    let flows = derive_fixture_flows(&app, &cx.sources, &cx.compat);
    assert!(flows.iter().any(|f| matches!(f.source, FlowSource::BoundService { .. })), "{flows:#?}");
}

#[test]
fn flows_file_round_trip() {
    let (_, flows) = load(&["listing1_3/app_a", "listing1_3/app_b"], false);
    assert!(!flows.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flows.jsonl");
    write_flows(&path, &flows).unwrap();
    assert_eq!(read_flows(&path).unwrap(), flows);

    std::fs::write(&path, "{\"app\": 1}\n").unwrap();
    assert!(matches!(read_flows(&path), Err(FlowError::Malformed { line: 1, .. })));
    assert!(matches!(read_flows(&dir.path().join("missing")), Err(FlowError::Io { .. })));
}

#[test]
fn renderings() {
    assert_eq!(render_text(&[]), "no leaks found\n");
    assert_eq!(render_records(&[]), "");
    let (db, flows) = load(&["listing1_3/app_a", "listing1_3/app_b"], false);
    let reports = report_leaks(&flows, &db, &ReportConfig::default());
    let text = render_text(&reports);
    assert!(text.starts_with("leak [resolved] TelephonyManager.getDeviceId (device_id) -> SmsManager.sendTextMessage"));
    assert!(text.ends_with("1 leak(s)\n"));
    let back: Vec<LeakReport> = render_records(&reports).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, reports);
}

proptest! {
    #[test]
    fn report_order_does_not_depend_on_flow_order(seed in any::<u64>()) {
        let (db, mut flows) = load(&["listing5/app_a", "listing5/app_b", "listing5/app_c"], true);
        let cx = ReportConfig::default();
        let expected = report_leaks(&flows, &db, &cx);
        // deterministic shuffle driven by the seed
        let mut s = seed;
        for i in (1..flows.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            flows.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(report_leaks(&flows, &db, &cx), expected);
    }
}
