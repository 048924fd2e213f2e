use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::ApkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Activity,
    Service,
    BroadcastReceiver,
    ContentProvider,
}

impl ComponentKind {
    fn from_tag(tag: &str) -> Option<ComponentKind> {
        Some(match tag {
            "activity" => ComponentKind::Activity,
            "service" => ComponentKind::Service,
            "receiver" => ComponentKind::BroadcastReceiver,
            "provider" => ComponentKind::ContentProvider,
            _ => return None,
        })
    }
}

/// Where an intent filter came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Registration {
    Manifest,
    Dynamic { class: String, method: String, instruction_index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentFilterDecl {
    pub actions: Vec<String>,
    pub categories: Vec<String>,
    /// `<data>` elements, attributes kept verbatim. Parsed, never matched.
    pub data: Vec<BTreeMap<String, String>>,
    pub registration: Registration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDecl {
    pub name: String,
    pub kind: ComponentKind,
    pub filters: Vec<IntentFilterDecl>,
    pub exported: bool,
    /// Every attribute of the element as written, including ones we ignore.
    pub attributes: BTreeMap<String, String>,
}

/// An element we recognise but do not model (aliases and unknown
/// component-like tags).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawElement {
    pub tag: String,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub package_name: String,
    pub components: Vec<ComponentDecl>,
    pub unmodeled: Vec<RawElement>,
    pub warnings: Vec<String>,
}

/// Qualifies a manifest component name against the package.
pub fn qualify_component_name(package: &str, name: &str) -> String {
    if name.starts_with('.') {
        format!("{}{}", package, name)
    } else if !name.contains('.') {
        format!("{}.{}", package, name)
    } else {
        name.to_string()
    }
}

fn attributes(e: &BytesStart<'_>) -> Result<BTreeMap<String, String>, ApkError> {
    let mut out = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(|err| ApkError::MalformedManifest(err.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let val = a.unescape_value().map_err(|err| ApkError::MalformedManifest(err.to_string()))?;
        out.insert(key, val.into_owned());
    }
    Ok(out)
}

fn android_attr<'a>(attrs: &'a BTreeMap<String, String>, name: &str) -> Option<&'a str> {
    attrs.get(&format!("android:{}", name)).or_else(|| attrs.get(name)).map(String::as_str)
}

/// Tags under `<application>` that are known not to be components.
const NON_COMPONENT_TAGS: &[&str] = &["meta-data", "uses-library", "uses-native-library", "profileable", "property"];

/// Parses decoded (plain-text) manifest XML.
pub fn parse_manifest_str(xml: &str) -> Result<Manifest, ApkError> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);

    let mut package = None;
    let mut components: Vec<ComponentDecl> = Vec::new();
    let mut unmodeled = Vec::new();
    let mut warnings = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut current_filter: Option<IntentFilterDecl> = None;
    let mut in_component = false;

    loop {
        let event = reader.read_event().map_err(|e| ApkError::MalformedManifest(e.to_string()))?;
        let (start, empty) = match &event {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            Event::End(_) => {
                let tag = stack.pop().unwrap_or_default();
                close_element(&tag, &mut current_filter, &mut components, &mut in_component);
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        let Some(e) = start else { continue };
        let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
        let attrs = attributes(&e)?;
        let parent = stack.last().map(String::as_str);
        match (parent, tag.as_str()) {
            (None, "manifest") => {
                package = attrs.get("package").cloned();
            }
            (Some("application"), t) => {
                if let Some(kind) = ComponentKind::from_tag(t) {
                    let Some(raw_name) = android_attr(&attrs, "name") else {
                        return Err(ApkError::MalformedManifest(format!("<{}> without android:name", t)));
                    };
                    let pkg = package
                        .clone()
                        .ok_or_else(|| ApkError::MalformedManifest("component declared before package".into()))?;
                    let exported = android_attr(&attrs, "exported").map(|v| v == "true");
                    components.push(ComponentDecl {
                        name: qualify_component_name(&pkg, raw_name),
                        kind,
                        filters: Vec::new(),
                        // resolved on close: absent means "exported iff it has filters"
                        exported: exported.unwrap_or(false),
                        attributes: attrs.clone(),
                    });
                    in_component = !empty;
                    if empty {
                        finish_component(components.last_mut().unwrap());
                    }
                } else if !NON_COMPONENT_TAGS.contains(&t) {
                    let msg = format!("unknown component kind <{}> kept unmodeled", t);
                    warn!("{}", msg);
                    warnings.push(msg);
                    unmodeled.push(RawElement { tag: t.to_string(), attributes: attrs.clone() });
                }
            }
            (Some("intent-filter"), "action") if current_filter.is_some() => {
                if let (Some(f), Some(name)) = (current_filter.as_mut(), android_attr(&attrs, "name")) {
                    f.actions.push(name.to_string());
                }
            }
            (Some("intent-filter"), "category") if current_filter.is_some() => {
                if let (Some(f), Some(name)) = (current_filter.as_mut(), android_attr(&attrs, "name")) {
                    f.categories.push(name.to_string());
                }
            }
            (Some("intent-filter"), "data") if current_filter.is_some() => {
                if let Some(f) = current_filter.as_mut() {
                    f.data.push(attrs.clone());
                }
            }
            (Some(_), "intent-filter") if in_component && parent != Some("intent-filter") => {
                current_filter = Some(IntentFilterDecl {
                    actions: Vec::new(),
                    categories: Vec::new(),
                    data: Vec::new(),
                    registration: Registration::Manifest,
                });
                if empty {
                    close_element("intent-filter", &mut current_filter, &mut components, &mut in_component);
                }
            }
            _ => {}
        }
        if !empty {
            stack.push(tag);
        }
    }
    if !stack.is_empty() {
        return Err(ApkError::MalformedManifest("unclosed element".into()));
    }
    let package_name = package
        .filter(|p| !p.is_empty())
        .ok_or_else(|| ApkError::MalformedManifest("missing package attribute on <manifest>".into()))?;
    Ok(Manifest { package_name, components, unmodeled, warnings })
}

fn finish_component(c: &mut ComponentDecl) {
    if !c.attributes.contains_key("android:exported") && !c.attributes.contains_key("exported") {
        c.exported = !c.filters.is_empty();
    }
}

fn close_element(
    tag: &str,
    current_filter: &mut Option<IntentFilterDecl>,
    components: &mut [ComponentDecl],
    in_component: &mut bool,
) {
    match tag {
        "intent-filter" => {
            if let (Some(f), Some(c)) = (current_filter.take(), components.last_mut()) {
                c.filters.push(f);
            }
        }
        t if ComponentKind::from_tag(t).is_some() && *in_component => {
            *in_component = false;
            if let Some(c) = components.last_mut() {
                finish_component(c);
            }
        }
        _ => {}
    }
}

/// Reads and parses `AndroidManifest.xml`.
pub fn parse_manifest(path: &Path) -> Result<Manifest, ApkError> {
    let xml = std::fs::read_to_string(path).map_err(|e| ApkError::Io { path: path.to_path_buf(), source: e })?;
    parse_manifest_str(&xml)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_two_filter() {
        let xml = r#"<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.appB">
  <application>
    <activity android:name=".InFlowActivity">
      <intent-filter>
        <action android:name="CUSTOM_INTENT.ACTION"/>
        <category android:name = "android.intent.category.DEFAULT" />
      </intent-filter>
    </activity>
  </application>
</manifest>"#;
        let m = parse_manifest_str(xml).unwrap();
        assert_eq!(m.package_name, "com.appB");
        assert_eq!(m.components.len(), 1);
        let c = &m.components[0];
        assert_eq!(c.name, "com.appB.InFlowActivity");
        assert_eq!(c.kind, ComponentKind::Activity);
        assert!(c.exported);
        assert_eq!(c.filters.len(), 1);
        assert_eq!(c.filters[0].actions, vec!["CUSTOM_INTENT.ACTION"]);
        assert_eq!(c.filters[0].categories, vec!["android.intent.category.DEFAULT"]);
        assert_eq!(c.filters[0].registration, Registration::Manifest);
    }

    #[test]
    fn no_components() {
        let m = parse_manifest_str(r#"<manifest package="a.b"><application/></manifest>"#).unwrap();
        assert_eq!(m.package_name, "a.b");
        assert!(m.components.is_empty());
    }

    #[test]
    fn missing_package_or_bad_xml() {
        assert!(matches!(
            parse_manifest_str("<manifest><application/></manifest>"),
            Err(ApkError::MalformedManifest(_))
        ));
        assert!(matches!(
            parse_manifest_str("<manifest package=\"a\"><application>"),
            Err(ApkError::MalformedManifest(_))
        ));
        assert!(matches!(parse_manifest_str("<manifest package=\"a\"></oops>"), Err(ApkError::MalformedManifest(_))));
    }

    #[test]
    fn unknown_kinds_warn_and_data_is_retained() {
        let xml = r#"<manifest xmlns:android="x" package="p">
  <application>
    <activity-alias android:name=".Alias" android:targetActivity=".Main"/>
    <meta-data android:name="k" android:value="v"/>
    <receiver android:name="p.sub.Recv" android:exported="false">
      <intent-filter>
        <action android:name="A"/>
        <data android:scheme="http" android:mimeType="text/plain"/>
      </intent-filter>
    </receiver>
    <service android:name="Svc"/>
  </application>
</manifest>"#;
        let m = parse_manifest_str(xml).unwrap();
        assert_eq!(m.warnings.len(), 1);
        assert_eq!(m.unmodeled[0].tag, "activity-alias");
        assert_eq!(m.components.len(), 2);
        assert_eq!(m.components[0].name, "p.sub.Recv");
        assert!(!m.components[0].exported);
        assert_eq!(m.components[0].filters[0].data[0]["android:scheme"], "http");
        assert_eq!(m.components[1].name, "p.Svc");
        assert!(!m.components[1].exported);
    }

    #[test]
    fn qualification_rules() {
        assert_eq!(qualify_component_name("a.b", ".C"), "a.b.C");
        assert_eq!(qualify_component_name("a.b", "C"), "a.b.C");
        assert_eq!(qualify_component_name("a.b", "x.y.C"), "x.y.C");
    }
}
