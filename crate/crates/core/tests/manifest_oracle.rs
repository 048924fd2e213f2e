//! Manifest parsing checked against an independent DOM-based reading.

use std::path::Path;

use intentflow::apk::{parse_manifest, parse_manifest_str, ComponentKind};
use proptest::prelude::*;

const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

type Component = (String, ComponentKind, bool, Vec<(Vec<String>, Vec<String>)>);

fn dom_components(xml: &str) -> (String, Vec<Component>) {
    let doc = roxmltree::Document::parse(xml).unwrap();
    let root = doc.root_element();
    let package = root.attribute("package").unwrap().to_string();
    let mut out = Vec::new();
    for app in root.children().filter(|n| n.has_tag_name("application")) {
        for c in app.children().filter(|n| n.is_element()) {
            let kind = match c.tag_name().name() {
                "activity" => ComponentKind::Activity,
                "service" => ComponentKind::Service,
                "receiver" => ComponentKind::BroadcastReceiver,
                "provider" => ComponentKind::ContentProvider,
                _ => continue,
            };
            let raw = c.attribute((ANDROID_NS, "name")).unwrap();
            let name = if raw.starts_with('.') {
                format!("{package}{raw}")
            } else if raw.contains('.') {
                raw.to_string()
            } else {
                format!("{package}.{raw}")
            };
            let filters: Vec<(Vec<String>, Vec<String>)> = c
                .children()
                .filter(|n| n.has_tag_name("intent-filter"))
                .map(|f| {
                    let names = |tag: &str| {
                        f.children()
                            .filter(|n| n.has_tag_name(tag))
                            .filter_map(|n| n.attribute((ANDROID_NS, "name")).map(str::to_string))
                            .collect::<Vec<_>>()
                    };
                    (names("action"), names("category"))
                })
                .collect();
            let exported = match c.attribute((ANDROID_NS, "exported")) {
                Some(v) => v == "true",
                None => !filters.is_empty(),
            };
            out.push((name, kind, exported, filters));
        }
    }
    (package, out)
}

fn parsed_components(xml: &str) -> (String, Vec<Component>) {
    let m = parse_manifest_str(xml).unwrap();
    let comps = m
        .components
        .into_iter()
        .map(|c| {
            let filters = c.filters.into_iter().map(|f| (f.actions, f.categories)).collect();
            (c.name, c.kind, c.exported, filters)
        })
        .collect();
    (m.package_name, comps)
}

#[test]
fn fixture_manifests_agree() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut seen = 0;
    for entry in walkdir::WalkDir::new(&root).sort_by_file_name() {
        let entry = entry.unwrap();
        if entry.file_name() != "AndroidManifest.xml" {
            continue;
        }
        let xml = std::fs::read_to_string(entry.path()).unwrap();
        let m = parse_manifest(entry.path()).unwrap();
        assert_eq!(parsed_components(&xml), dom_components(&xml), "{}", entry.path().display());
        assert_eq!(m.package_name, dom_components(&xml).0);
        seen += 1;
    }
    assert!(seen >= 30, "only {seen} manifests");
}

fn arb_component() -> impl Strategy<Value = String> {
    let kind = prop_oneof![Just("activity"), Just("service"), Just("receiver"), Just("provider")];
    let name = prop_oneof!["\\.[A-Z][a-z]{1,5}", "[A-Z][a-z]{1,5}", "org\\.[a-z]{1,4}\\.[A-Z][a-z]{1,5}"];
    let exported = prop::option::of(any::<bool>());
    let filter = (
        prop::collection::vec("[a-z]{1,4}(\\.[A-Z_]{1,6})?", 0..3),
        prop::collection::vec(prop_oneof![Just("android.intent.category.DEFAULT"), Just("x.CAT")], 0..2),
    )
        .prop_map(|(actions, cats)| {
            let mut s = String::from("<intent-filter>");
            for a in actions {
                s += &format!("<action android:name=\"{a}\"/>");
            }
            for c in cats {
                s += &format!("<category android:name=\"{c}\"/>");
            }
            s + "</intent-filter>"
        });
    (kind, name, exported, prop::collection::vec(filter, 0..3), any::<bool>()).prop_map(
        |(kind, name, exported, filters, meta)| {
            let exp = exported.map_or(String::new(), |e| format!(" android:exported=\"{e}\""));
            let meta = if meta { "<meta-data android:name=\"m\" android:value=\"v\"/>" } else { "" };
            if filters.is_empty() && meta.is_empty() {
                format!("<{kind} android:name=\"{name}\"{exp}/>")
            } else {
                format!("<{kind} android:name=\"{name}\"{exp}>{meta}{}</{kind}>", filters.concat())
            }
        },
    )
}

proptest! {
    #[test]
    fn generated_manifests_agree(
        package in "[a-z]{2,5}\\.[a-z]{2,5}",
        comps in prop::collection::vec(arb_component(), 0..6),
    ) {
        let xml = format!(
            "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<manifest xmlns:android=\"{ANDROID_NS}\" package=\"{package}\">\n  <uses-permission android:name=\"android.permission.INTERNET\"/>\n  <application android:label=\"x\">\n    {}\n  </application>\n</manifest>\n",
            comps.join("\n    ")
        );
        prop_assert_eq!(parsed_components(&xml), dom_components(&xml));
    }
}
