//! Joining intra-component flows with the database into leak reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::flows::{FlowSource, IntraFlow};
use super::{GetPutCompatTable, SourceSinkCatalog};
use crate::apk::{ComponentKind, MethodRef};
use crate::db::{key_match, put_feeds_get, Confidence, IntentDb, IntentSummaryRow};
use crate::extract::{Channel, CodeLocation, ReceiveVia, ResultChannelDecl, ValueDescriptor, UNRESOLVED_ACTION};
use crate::strings::{StringValue, UnresolvedReason};

/// Catalogs and switches used while matching.
#[derive(Debug, Clone, Default)]
pub struct ReportConfig {
    pub catalog: SourceSinkCatalog,
    pub compat: GetPutCompatTable,
    /// Also report untraced (opaque) values, at low confidence.
    pub strict: bool,
}

/// One component the leaked value passed through.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub package: String,
    pub class: String,
    /// The action or target component the hop's intent was addressed by.
    pub addressed_by: Option<String>,
    pub key: Option<String>,
    pub put_signature: Option<String>,
    pub channel: Option<Channel>,
}

impl Hop {
    fn from_row(row: &IntentSummaryRow) -> Hop {
        Hop {
            package: row.package_name.clone(),
            class: row.class_name.clone(),
            addressed_by: row.target_component.clone().or_else(|| row.intent_action.clone()),
            key: row.key.clone(),
            put_signature: row.put_signature.clone(),
            channel: Some(row.channel),
        }
    }

    fn receiver(flow: &IntraFlow, key: Option<String>) -> Hop {
        Hop {
            package: flow.app.clone(),
            class: flow.component.clone(),
            addressed_by: None,
            key,
            put_signature: None,
            channel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LeakSink {
    pub location: CodeLocation,
    pub signature: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LeakReport {
    pub sink: LeakSink,
    pub origin: ValueDescriptor,
    pub hops: Vec<Hop>,
    /// Package the sink lives in.
    pub app: String,
    pub source_category: String,
    pub confidence: Confidence,
    pub channels: Vec<Channel>,
}

impl LeakReport {
    /// `(app, source, sink)` with short API names, as used by ground truth.
    pub fn triple(&self) -> (String, String, String) {
        let short = |api: &str| MethodRef::parse(api).map_or_else(|| api.to_string(), |m| m.short_name());
        let source = match &self.origin {
            ValueDescriptor::SourceCall { api } => short(api),
            other => other.to_string(),
        };
        (self.app.clone(), source, short(&self.sink.signature))
    }
}

/// Category of a transmitted value: a cataloged source's category, or in
/// strict mode `unknown` for untraced values.
pub fn classify_sensitivity(
    v: &ValueDescriptor,
    catalog: &SourceSinkCatalog,
    strict: bool,
) -> Option<(String, Confidence)> {
    match v {
        ValueDescriptor::SourceCall { api } => {
            catalog.source_category(api).map(|c| (c.to_string(), Confidence::Resolved))
        }
        ValueDescriptor::Opaque { .. } if strict => Some(("unknown".to_string(), Confidence::Low)),
        _ => None,
    }
}

fn key_value(key: &str) -> StringValue {
    if key == UNRESOLVED_ACTION {
        StringValue::Unresolved(UnresolvedReason::UnmodeledOp)
    } else {
        StringValue::constant(key)
    }
}

/// Ways the flow's component can have received its intent.
fn receive_options(flow_via: Option<ReceiveVia>, db: &IntentDb, app: &str, component: &str) -> Vec<ReceiveVia> {
    if let Some(v) = flow_via {
        return vec![v];
    }
    let kind = db.apps().get(app).and_then(|a| a.meta.components.get(component)).copied();
    match kind {
        Some(ComponentKind::ContentProvider) => Vec::new(),
        Some(k) => vec![ReceiveVia::from_kind(k)],
        None => vec![ReceiveVia::Activity, ReceiveVia::Service, ReceiveVia::Broadcast],
    }
}

struct Builder<'a> {
    db: &'a IntentDb,
    cx: &'a ReportConfig,
}

impl Builder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        flow: &IntraFlow,
        value: &ValueDescriptor,
        mut hops: Vec<Hop>,
        confidence: Confidence,
        out: &mut Vec<LeakReport>,
    ) {
        let Some((category, c)) = classify_sensitivity(value, &self.cx.catalog, self.cx.strict) else { return };
        let sink_category = self.cx.catalog.sink_category(&flow.sink.signature).unwrap_or("unknown").to_string();
        hops.dedup();
        let channels = hops.iter().filter_map(|h| h.channel).collect();
        out.push(LeakReport {
            sink: LeakSink {
                location: flow.sink.location.clone(),
                signature: flow.sink.signature.clone(),
                category: sink_category,
            },
            origin: value.clone(),
            hops,
            app: flow.app.clone(),
            source_category: category,
            confidence: confidence.and(c),
            channels,
        });
    }

    fn chain_hops(&self, row: &IntentSummaryRow) -> Vec<Hop> {
        self.db.sender_chain(row).into_iter().map(Hop::from_row).collect()
    }
}

/// Leaks through a flow that starts at an extra getter: senders that can
/// reach the component, use the same key and a compatible put, and send a
/// sensitive value.
pub fn match_flow(flow: &IntraFlow, db: &IntentDb, cx: &ReportConfig) -> Vec<LeakReport> {
    let FlowSource::GetExtra { signature, key, via } = &flow.source else { return Vec::new() };
    let b = Builder { db, cx };
    let get_key = key_value(key);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for via in receive_options(*via, db, &flow.app, &flow.component) {
        for m in db.match_senders(&flow.app, &flow.component, via) {
            let row = m.row;
            if !seen.insert(row.id()) {
                continue;
            }
            let Some(kc) = key_match(&get_key, row.key.as_deref()) else { continue };
            if !put_feeds_get(&cx.compat, signature, row.put_signature.as_deref()) {
                continue;
            }
            let Some(value) = &row.value else { continue };
            let mut hops = b.chain_hops(row);
            hops.push(Hop::receiver(flow, Some(key.clone())));
            b.report(flow, value, hops, m.confidence.and(kc), &mut out);
        }
    }
    out
}

/// A value reaching a result getter, with the hops it took.
struct Candidate {
    key: String,
    put_signature: String,
    value: ValueDescriptor,
    hops: Vec<Hop>,
    confidence: Confidence,
}

/// Leaks that return through a result channel: activity results read in
/// `onActivityResult`, and binders handed back by bound services.
pub fn match_result_channels(flows: &[IntraFlow], db: &IntentDb, cx: &ReportConfig) -> Vec<LeakReport> {
    let b = Builder { db, cx };
    let mut out = Vec::new();
    for flow in flows {
        match &flow.source {
            FlowSource::GetExtra { signature, key, via } => {
                let is_result = match via {
                    Some(v) => *v == ReceiveVia::ActivityResult,
                    None => reads_result(db, flow, signature, key),
                };
                if !is_result {
                    continue;
                }
                let get_key = key_value(key);
                for c in activity_result_candidates(db, cx, flow) {
                    let Some(kc) = key_match(&get_key, Some(&c.key)) else { continue };
                    if !put_feeds_get(&cx.compat, signature, Some(&c.put_signature)) {
                        continue;
                    }
                    let mut hops = c.hops;
                    hops.push(Hop::receiver(flow, Some(key.clone())));
                    b.report(flow, &c.value, hops, c.confidence.and(kc), &mut out);
                }
            }
            FlowSource::BoundService { .. } => {
                for (value, mut hops, confidence) in binder_candidates(db, cx, flow) {
                    hops.push(Hop::receiver(flow, None));
                    b.report(flow, &value, hops, confidence, &mut out);
                }
            }
            FlowSource::DirectSource { .. } => {}
        }
    }
    out
}

fn reads_result(db: &IntentDb, flow: &IntraFlow, signature: &str, key: &str) -> bool {
    db.apps().get(&flow.app).is_some_and(|a| {
        a.result_channels.iter().any(|d| match d {
            ResultChannelDecl::OnActivityResult { component, gets } => {
                component == &flow.component
                    && gets.iter().any(|(g, k)| g == signature && k.candidates().is_none_or(|c| c.contains(key)))
            }
            _ => false,
        })
    })
}

/// Sender rows of `flow`'s component on `channel`, paired with every
/// component of every app they can reach.
fn outgoing<'a>(
    db: &'a IntentDb,
    flow: &IntraFlow,
    channel: Channel,
    package: &str,
    component: &str,
) -> Vec<(&'a IntentSummaryRow, Confidence)> {
    let filters = db.filters_of(package, component);
    db.rows()
        .filter(|r| r.package_name == flow.app && r.class_name == flow.component && r.channel == channel)
        .filter_map(|r| db.addresses(r, package, component, &filters).map(|c| (r, c)))
        .collect()
}

/// Resolves a value the responding component took from the intent it was
/// started with, against the requester's own puts.
fn resolve_received(
    cx: &ReportConfig,
    value: &ValueDescriptor,
    requests: &[(&IntentSummaryRow, Confidence)],
) -> Vec<(ValueDescriptor, Option<IntentSummaryRow>, Confidence)> {
    match value {
        ValueDescriptor::GetExtraRef { get, key, .. } => requests
            .iter()
            .filter_map(|(row, conf)| {
                let kc = key_match(key, row.key.as_deref())?;
                if !put_feeds_get(&cx.compat, get, row.put_signature.as_deref()) {
                    return None;
                }
                let v = row.value.clone().filter(|v| !v.is_get_extra())?;
                Some((v, Some((*row).clone()), conf.and(kc)))
            })
            .collect(),
        v => vec![(v.clone(), None, Confidence::Resolved)],
    }
}

fn activity_result_candidates(db: &IntentDb, cx: &ReportConfig, flow: &IntraFlow) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (package, record) in db.apps() {
        for decl in &record.result_channels {
            let ResultChannelDecl::SetResult { component, forwarded, extras, .. } = decl else { continue };
            let requests = outgoing(db, flow, Channel::ActivityForResult, package, component);
            if requests.is_empty() {
                continue;
            }
            let reply = |key: &str, put: &str| Hop {
                package: package.clone(),
                class: component.clone(),
                addressed_by: Some(flow.component.clone()),
                key: Some(key.to_string()),
                put_signature: Some(put.to_string()),
                channel: None,
            };
            if *forwarded {
                for (row, conf) in &requests {
                    let (Some(key), Some(put), Some(value)) = (&row.key, &row.put_signature, &row.value) else {
                        continue;
                    };
                    if value.is_get_extra() {
                        continue;
                    }
                    out.push(Candidate {
                        key: key.clone(),
                        put_signature: put.clone(),
                        value: value.clone(),
                        hops: vec![Hop::from_row(row), reply(key, put)],
                        confidence: *conf,
                    });
                }
            }
            let conf_any = requests.iter().map(|(_, c)| *c).min().unwrap_or(Confidence::Low);
            for e in extras {
                let keys: Vec<String> = match e.key.candidates() {
                    Some(c) => c.iter().cloned().collect(),
                    None => vec![UNRESOLVED_ACTION.to_string()],
                };
                for (value, via_row, conf) in resolve_received(cx, &e.value, &requests) {
                    for key in &keys {
                        let mut hops = Vec::new();
                        if let Some(r) = &via_row {
                            hops.push(Hop::from_row(r));
                        }
                        hops.push(reply(key, &e.put_signature));
                        let confidence = if via_row.is_some() { conf } else { conf_any.and(conf) };
                        out.push(Candidate {
                            key: key.clone(),
                            put_signature: e.put_signature.clone(),
                            value: value.clone(),
                            hops,
                            confidence,
                        });
                    }
                }
            }
        }
    }
    out
}

fn binder_candidates(
    db: &IntentDb,
    cx: &ReportConfig,
    flow: &IntraFlow,
) -> Vec<(ValueDescriptor, Vec<Hop>, Confidence)> {
    let mut out = Vec::new();
    for (package, record) in db.apps() {
        for decl in &record.result_channels {
            let ResultChannelDecl::ServiceBinder { component, values } = decl else { continue };
            let binds = outgoing(db, flow, Channel::ServiceBind, package, component);
            let Some(best) = binds.iter().map(|(_, c)| *c).min() else { continue };
            let binder_hop = Hop {
                package: package.clone(),
                class: component.clone(),
                addressed_by: Some(flow.component.clone()),
                key: None,
                put_signature: None,
                channel: None,
            };
            for v in values {
                for (value, via_row, conf) in resolve_received(cx, v, &binds) {
                    let mut hops = Vec::new();
                    match &via_row {
                        Some(r) => hops.push(Hop::from_row(r)),
                        None => hops.extend(binds.first().map(|(r, _)| Hop::from_row(r))),
                    }
                    hops.push(binder_hop.clone());
                    let confidence = if via_row.is_some() { conf } else { best.and(conf) };
                    out.push((value, hops, confidence));
                }
            }
        }
    }
    out
}

/// All leaks for a set of flows, sorted and deduplicated.
pub fn report_leaks(flows: &[IntraFlow], db: &IntentDb, cx: &ReportConfig) -> Vec<LeakReport> {
    let mut out: Vec<LeakReport> = flows.iter().flat_map(|f| match_flow(f, db, cx)).collect();
    out.extend(match_result_channels(flows, db, cx));
    out.sort();
    out.dedup();
    out
}

/// Human-readable rendering, one block per leak.
pub fn render_text(reports: &[LeakReport]) -> String {
    let mut s = String::new();
    if reports.is_empty() {
        s.push_str("no leaks found\n");
        return s;
    }
    for r in reports {
        let (_, source, sink) = r.triple();
        let conf = match r.confidence {
            Confidence::Resolved => "resolved",
            Confidence::Low => "low confidence",
        };
        let _ = writeln!(s, "leak [{}] {} ({}) -> {} ({})", conf, source, r.source_category, sink, r.sink.category);
        let _ = writeln!(s, "  sink at {} in {}", r.sink.location, r.app);
        for h in &r.hops {
            let _ = write!(s, "  {} {}", h.package, h.class);
            if let Some(c) = h.channel {
                let _ = write!(s, " --{}-->", c);
            }
            if let Some(a) = &h.addressed_by {
                let _ = write!(s, " {}", a);
            }
            if let Some(k) = &h.key {
                let _ = write!(s, " key {:?}", k);
            }
            if let Some(p) = &h.put_signature {
                let _ = write!(s, " {}", p);
            }
            s.push('\n');
        }
    }
    let _ = writeln!(s, "{} leak(s)", reports.len());
    s
}

/// One JSON record per line.
pub fn render_records(reports: &[LeakReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&serde_json::to_string(r).expect("report serializes"));
        s.push('\n');
    }
    s
}
