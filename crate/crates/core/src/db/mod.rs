//! The intent summary database: one row per sender and/or receiver fact,
//! matching between senders and receivers, and the fixed-point iteration
//! that resolves values forwarded through several components.

mod store;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apk::ComponentKind;
use crate::extract::{
    AppMeta, AppSummary, Channel, ReceiveVia, ResultChannelDecl, Targeting, ValueDescriptor, UNRESOLVED_ACTION,
};
use crate::report::GetPutCompatTable;
use crate::strings::StringValue;

pub use store::{load_db, meta_path, save_db, DbError, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Extracted,
    /// Built by the fixed-point iteration from the receiving row and the
    /// sender row whose value it took, in that order.
    FixpointDerived {
        from_row_ids: Vec<String>,
    },
}

/// One database entry. Equality and ordering ignore `provenance`, so a
/// set of rows is deduplicated on content.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntentSummaryRow {
    pub package_name: String,
    pub class_name: String,
    pub intent_filter: Option<String>,
    pub target_component: Option<String>,
    pub intent_action: Option<String>,
    pub key: Option<String>,
    pub value: Option<ValueDescriptor>,
    pub put_signature: Option<String>,
    pub channel: Channel,
    pub provenance: Provenance,
}

type ContentKey<'a> = (
    &'a str,
    &'a str,
    &'a Option<String>,
    &'a Option<String>,
    &'a Option<String>,
    &'a Option<String>,
    &'a Option<ValueDescriptor>,
    &'a Option<String>,
    Channel,
);

impl IntentSummaryRow {
    fn content(&self) -> ContentKey<'_> {
        (
            &self.package_name,
            &self.class_name,
            &self.intent_filter,
            &self.target_component,
            &self.intent_action,
            &self.key,
            &self.value,
            &self.put_signature,
            self.channel,
        )
    }

    /// Content hash, stable across runs and store files.
    pub fn id(&self) -> String {
        let text = serde_json::to_string(&self.content()).expect("row content serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn is_sender(&self) -> bool {
        self.target_component.is_some() || self.intent_action.is_some()
    }

    pub fn is_receiver(&self) -> bool {
        self.intent_filter.is_some()
    }

    pub fn is_derived(&self) -> bool {
        matches!(self.provenance, Provenance::FixpointDerived { .. })
    }
}

impl PartialEq for IntentSummaryRow {
    fn eq(&self, other: &Self) -> bool {
        self.content() == other.content()
    }
}

impl Eq for IntentSummaryRow {}

impl PartialOrd for IntentSummaryRow {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for IntentSummaryRow {
    fn cmp(&self, other: &Self) -> Ordering {
        self.content().cmp(&other.content())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Resolved,
    /// Matched through an unresolved action, target or key.
    Low,
}

impl Confidence {
    pub fn and(self, other: Confidence) -> Confidence {
        self.max(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SenderMatch<'a> {
    pub row: &'a IntentSummaryRow,
    pub confidence: Confidence,
}

/// Per-app data kept next to the rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppRecord {
    pub meta: AppMeta,
    pub result_channels: Vec<ResultChannelDecl>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntentDb {
    rows: BTreeSet<IntentSummaryRow>,
    apps: BTreeMap<String, AppRecord>,
}

fn expand(v: &StringValue) -> Vec<String> {
    match v.candidates() {
        Some(c) => c.iter().cloned().collect(),
        None => vec![UNRESOLVED_ACTION.to_string()],
    }
}

fn default_channel(kind: ComponentKind) -> Option<Channel> {
    match kind {
        ComponentKind::Activity => Some(Channel::Activity),
        ComponentKind::Service => Some(Channel::ServiceStart),
        ComponentKind::BroadcastReceiver => Some(Channel::Broadcast),
        ComponentKind::ContentProvider => None,
    }
}

/// Whether a get with key `get_key` can read an extra stored under `row_key`.
pub fn key_match(get_key: &StringValue, row_key: Option<&str>) -> Option<Confidence> {
    let row_key = row_key?;
    match get_key.candidates() {
        _ if row_key == UNRESOLVED_ACTION => Some(Confidence::Low),
        Some(c) if c.contains(row_key) => Some(Confidence::Resolved),
        Some(_) => None,
        None => Some(Confidence::Low),
    }
}

/// Whether a put with `put_signature` feeds a get with `get_signature`.
/// Unknown gets do not match.
pub fn put_feeds_get(compat: &GetPutCompatTable, get_signature: &str, put_signature: Option<&str>) -> bool {
    let Some(put) = put_signature else { return false };
    match compat.signature_compat(get_signature, put) {
        Ok(ok) => ok,
        Err(e) => {
            warn!("{}", e);
            false
        }
    }
}

impl IntentDb {
    pub fn new() -> IntentDb {
        IntentDb::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in canonical order.
    pub fn rows(&self) -> impl Iterator<Item = &IntentSummaryRow> {
        self.rows.iter()
    }

    pub fn apps(&self) -> &BTreeMap<String, AppRecord> {
        &self.apps
    }

    /// Adds a row; false if an equal row is already present.
    pub fn insert_row(&mut self, row: IntentSummaryRow) -> bool {
        self.rows.insert(row)
    }

    pub fn insert_app_record(&mut self, package: impl Into<String>, record: AppRecord) {
        self.apps.insert(package.into(), record);
    }

    pub fn row_by_id(&self, id: &str) -> Option<&IntentSummaryRow> {
        self.rows.iter().find(|r| r.id() == id)
    }

    fn id_index(&self) -> BTreeMap<String, &IntentSummaryRow> {
        self.rows.iter().map(|r| (r.id(), r)).collect()
    }

    /// Stores one app's extraction results, replacing anything previously
    /// stored for the same package. Replacing also drops every derived row,
    /// since some may rest on the old rows; rerun the fixed point afterwards.
    pub fn insert_app_summaries(&mut self, app: &AppSummary) -> usize {
        let package = &app.package_name;
        if self.apps.contains_key(package) || self.rows.iter().any(|r| &r.package_name == package) {
            self.rows.retain(|r| &r.package_name != package && !r.is_derived());
        }
        let mut filters: BTreeMap<&str, (ComponentKind, BTreeSet<&str>)> = BTreeMap::new();
        for c in &app.components {
            let entry = filters.entry(c.name.as_str()).or_insert((c.kind, BTreeSet::new()));
            entry.1.extend(c.filters.iter().flat_map(|f| f.actions.iter().map(String::as_str)));
        }
        let filter_values = |class: &str| -> Vec<Option<String>> {
            match filters.get(class) {
                Some((_, actions)) if !actions.is_empty() => actions.iter().map(|a| Some(a.to_string())).collect(),
                _ => vec![None],
            }
        };

        let before = self.rows.len();
        let mut sender_classes = BTreeSet::new();
        for spec in &app.specs {
            let class = sender_component(app, &spec.site.class);
            let addressing: Vec<(Option<String>, Option<String>)> = match &spec.targeting {
                Targeting::Explicit { target } => expand(target).into_iter().map(|t| (Some(t), None)).collect(),
                Targeting::Implicit { action } => expand(action).into_iter().map(|a| (None, Some(a))).collect(),
            };
            let mut extras: Vec<(Option<String>, Option<ValueDescriptor>, Option<String>)> = Vec::new();
            for e in &spec.extras {
                for k in expand(&e.key) {
                    extras.push((Some(k), Some(e.value.clone()), Some(e.put_signature.clone())));
                }
            }
            if extras.is_empty() {
                extras.push((None, None, None));
            }
            for filter in filter_values(&class) {
                for (target, action) in &addressing {
                    for (key, value, put) in &extras {
                        self.rows.insert(IntentSummaryRow {
                            package_name: package.clone(),
                            class_name: class.clone(),
                            intent_filter: filter.clone(),
                            target_component: target.clone(),
                            intent_action: action.clone(),
                            key: key.clone(),
                            value: value.clone(),
                            put_signature: put.clone(),
                            channel: spec.channel,
                            provenance: Provenance::Extracted,
                        });
                    }
                }
            }
            sender_classes.insert(class);
        }
        for (class, (kind, actions)) in &filters {
            let Some(channel) = default_channel(*kind) else { continue };
            if sender_classes.contains(*class) {
                continue;
            }
            for a in actions {
                self.rows.insert(IntentSummaryRow {
                    package_name: package.clone(),
                    class_name: class.to_string(),
                    intent_filter: Some(a.to_string()),
                    target_component: None,
                    intent_action: None,
                    key: None,
                    value: None,
                    put_signature: None,
                    channel,
                    provenance: Provenance::Extracted,
                });
            }
        }
        self.apps.insert(
            package.clone(),
            AppRecord { meta: app.meta.clone(), result_channels: app.result_channels.clone() },
        );
        self.rows.len() - before
    }

    /// Filter actions declared by a component.
    pub fn filters_of(&self, package: &str, component: &str) -> BTreeSet<&str> {
        self.rows
            .iter()
            .filter(|r| r.package_name == package && r.class_name == component)
            .filter_map(|r| r.intent_filter.as_deref())
            .collect()
    }

    /// Whether `row` addresses the component, and how confidently.
    pub fn addresses(
        &self,
        row: &IntentSummaryRow,
        package: &str,
        component: &str,
        filters: &BTreeSet<&str>,
    ) -> Option<Confidence> {
        if let Some(t) = row.target_component.as_deref() {
            return if t == component || t == package {
                Some(Confidence::Resolved)
            } else if t == UNRESOLVED_ACTION {
                Some(Confidence::Low)
            } else {
                None
            };
        }
        let action = row.intent_action.as_deref()?;
        if filters.contains(action) {
            Some(if action == UNRESOLVED_ACTION { Confidence::Low } else { Confidence::Resolved })
        } else if !filters.is_empty() && (action == UNRESOLVED_ACTION || filters.contains(UNRESOLVED_ACTION)) {
            Some(Confidence::Low)
        } else {
            None
        }
    }

    /// Sender rows that can deliver an intent to `component` of `package`
    /// arriving the way `via` describes: by explicit target, or by an
    /// action one of its filters declares.
    pub fn match_senders(&self, package: &str, component: &str, via: ReceiveVia) -> Vec<SenderMatch<'_>> {
        let filters = self.filters_of(package, component);
        self.rows
            .iter()
            .filter(|r| r.is_sender() && via.accepts(r.channel))
            .filter_map(|r| {
                self.addresses(r, package, component, &filters).map(|confidence| SenderMatch { row: r, confidence })
            })
            .collect()
    }

    /// Substitutes received values into forwarding rows until nothing new
    /// appears. Only fully resolved matches are followed. `max_chain`
    /// bounds the number of sender rows behind a derived row.
    pub fn fixpoint_resolve(&mut self, compat: &GetPutCompatTable, max_chain: Option<usize>) -> usize {
        let mut chain_len: BTreeMap<String, usize> = BTreeMap::new();
        for r in &self.rows {
            chain_len.insert(r.id(), self.sender_chain(r).len().max(1));
        }
        let mut added = 0;
        loop {
            let mut fresh = Vec::new();
            for r in self.rows.iter().filter(|r| !r.is_derived()) {
                let Some(ValueDescriptor::GetExtraRef { get, key, via }) = &r.value else { continue };
                for m in self.match_senders(&r.package_name, &r.class_name, *via) {
                    let s = m.row;
                    if m.confidence != Confidence::Resolved {
                        continue;
                    }
                    let Some(value) = s.value.as_ref().filter(|v| !v.is_get_extra()) else { continue };
                    if key_match(key, s.key.as_deref()) != Some(Confidence::Resolved)
                        || !put_feeds_get(compat, get, s.put_signature.as_deref())
                    {
                        continue;
                    }
                    let len = chain_len.get(&s.id()).copied().unwrap_or(1) + 1;
                    if max_chain.is_some_and(|max| len > max) {
                        continue;
                    }
                    let derived = IntentSummaryRow {
                        value: Some(value.clone()),
                        provenance: Provenance::FixpointDerived { from_row_ids: vec![r.id(), s.id()] },
                        ..r.clone()
                    };
                    fresh.push((derived, len));
                }
            }
            let mut round = 0;
            for (row, len) in fresh {
                let id = row.id();
                if self.rows.insert(row) {
                    chain_len.insert(id, len);
                    round += 1;
                }
            }
            if round == 0 {
                break;
            }
            added += round;
        }
        added
    }

    /// Sender rows a row's value passed through, origin first, ending with
    /// the row itself.
    pub fn sender_chain<'a>(&'a self, row: &'a IntentSummaryRow) -> Vec<&'a IntentSummaryRow> {
        let index = self.id_index();
        let mut chain = vec![row];
        let mut current = row;
        while let Provenance::FixpointDerived { from_row_ids } = &current.provenance {
            let Some(next) = from_row_ids.get(1).and_then(|id| index.get(id)) else { break };
            if chain.len() > self.rows.len() {
                break;
            }
            chain.push(next);
            current = next;
        }
        chain.reverse();
        chain
    }
}

/// Component a sender class belongs to within the summary: the class
/// itself if it is a component, otherwise its outermost class.
fn sender_component(app: &AppSummary, class: &str) -> String {
    if app.components.iter().any(|c| c.name == class) {
        return class.to_string();
    }
    class.split('$').next().unwrap_or(class).to_string()
}
