//! Analysis phase: sender call sites, the intents they send, the extras
//! those intents carry, dynamically registered receivers and result
//! channels, summarized per app.

mod backtrace;
mod catalog;
mod extras;
mod lifecycle;
mod objects;
mod receivers;
mod results;
mod sites;
mod value;

use std::collections::BTreeMap;
use std::fmt;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apk::{ComponentDecl, ComponentKind, DecodedApp, IntentFilterDecl, Reg};
use crate::report::{GetPutCompatTable, SourceSinkCatalog};
use crate::strings::{StringValue, DEFAULT_CANDIDATE_CAP};

pub use backtrace::backtrace_intent;
pub use catalog::{SenderApi, SenderApiCatalog};
pub use extras::collect_extras;
pub use lifecycle::intent_param;
pub use receivers::find_dynamic_receivers;
pub use results::extract_result_channels;
pub use sites::find_sender_sites;
pub use value::{classify_value, get_call_histogram, receive_via};

/// Action recorded for a filter or intent whose action could not be
/// resolved. It never equals a real action string.
pub const UNRESOLVED_ACTION: &str = "\u{27c2}UNRESOLVED\u{27c2}";

/// How an intent is delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Activity,
    ActivityForResult,
    Broadcast,
    ServiceStart,
    ServiceBind,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Activity,
        Channel::ActivityForResult,
        Channel::Broadcast,
        Channel::ServiceStart,
        Channel::ServiceBind,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Activity => "activity",
            Channel::ActivityForResult => "activity_for_result",
            Channel::Broadcast => "broadcast",
            Channel::ServiceStart => "service_start",
            Channel::ServiceBind => "service_bind",
        }
    }

    pub fn parse(s: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Component kind an intent sent on this channel is delivered to.
    pub fn receiver_kind(self) -> ComponentKind {
        match self {
            Channel::Activity | Channel::ActivityForResult => ComponentKind::Activity,
            Channel::Broadcast => ComponentKind::BroadcastReceiver,
            Channel::ServiceStart | Channel::ServiceBind => ComponentKind::Service,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the intent a getter reads from reached the reading component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiveVia {
    Activity,
    Service,
    Broadcast,
    /// The result intent handed to `onActivityResult`.
    ActivityResult,
}

impl ReceiveVia {
    pub fn from_kind(kind: ComponentKind) -> ReceiveVia {
        match kind {
            ComponentKind::Service => ReceiveVia::Service,
            ComponentKind::BroadcastReceiver => ReceiveVia::Broadcast,
            ComponentKind::Activity | ComponentKind::ContentProvider => ReceiveVia::Activity,
        }
    }

    /// Whether intents sent on `channel` arrive this way.
    pub fn accepts(self, channel: Channel) -> bool {
        match self {
            ReceiveVia::Activity => matches!(channel, Channel::Activity | Channel::ActivityForResult),
            ReceiveVia::Service => matches!(channel, Channel::ServiceStart | Channel::ServiceBind),
            ReceiveVia::Broadcast => channel == Channel::Broadcast,
            ReceiveVia::ActivityResult => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReceiveVia::Activity => "activity",
            ReceiveVia::Service => "service",
            ReceiveVia::Broadcast => "broadcast",
            ReceiveVia::ActivityResult => "activity_result",
        }
    }
}

/// An instruction in an app: class, method signature and index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CodeLocation {
    pub class: String,
    pub method: String,
    pub index: usize,
}

impl CodeLocation {
    pub fn new(class: impl Into<String>, method: impl Into<String>, index: usize) -> CodeLocation {
        CodeLocation { class: class.into(), method: method.into(), index }
    }
}

impl fmt::Display for CodeLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}@{}", self.class, self.method, self.index)
    }
}

/// Where a transmitted value comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ValueDescriptor {
    Constant(String),
    /// Result of a cataloged source API (Smali method reference).
    SourceCall {
        api: String,
    },
    /// Value read from a received intent.
    GetExtraRef {
        get: String,
        key: StringValue,
        via: ReceiveVia,
    },
    Opaque {
        location: CodeLocation,
    },
}

impl ValueDescriptor {
    pub fn is_get_extra(&self) -> bool {
        matches!(self, ValueDescriptor::GetExtraRef { .. })
    }
}

impl fmt::Display for ValueDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDescriptor::Constant(s) => write!(f, "{:?}", s),
            ValueDescriptor::SourceCall { api } => match crate::apk::MethodRef::parse(api) {
                Some(m) => write!(f, "{}()", m.short_name()),
                None => f.write_str(api),
            },
            ValueDescriptor::GetExtraRef { get, key, .. } => {
                let name = get.split_once('(').map_or(get.as_str(), |(h, _)| h);
                let name = name.rsplit('.').next().unwrap_or(name);
                match key.single() {
                    Some(k) => write!(f, "{}({:?})", name, k),
                    None => write!(f, "{}({})", name, key),
                }
            }
            ValueDescriptor::Opaque { location } => write!(f, "opaque@{}", location),
        }
    }
}

/// What an intent is addressed to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targeting {
    /// A component class name, or a package name after `setPackage`.
    Explicit {
        target: StringValue,
    },
    Implicit {
        action: StringValue,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraPut {
    pub key: StringValue,
    pub value: ValueDescriptor,
    pub put_signature: String,
    pub location: CodeLocation,
}

/// The intent reconstructed at one sender call site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub site: CodeLocation,
    /// Construction (or acquisition) point, when one was found.
    pub origin: Option<CodeLocation>,
    pub targeting: Targeting,
    pub extras: Vec<ExtraPut>,
    pub channel: Channel,
    pub request_code: Option<i64>,
    /// Put-family invokes applying to this intent, in program order.
    #[serde(skip)]
    pub put_sites: Vec<CodeLocation>,
}

impl IntentSpec {
    pub fn is_explicit(&self) -> bool {
        matches!(self.targeting, Targeting::Explicit { .. })
    }

    /// A spec for a site whose intent could not be traced.
    pub fn unresolved(site: &SenderSite) -> IntentSpec {
        IntentSpec {
            site: site.location.clone(),
            origin: None,
            targeting: Targeting::Implicit {
                action: StringValue::Unresolved(crate::strings::UnresolvedReason::UnmodeledOp),
            },
            extras: Vec::new(),
            channel: site.channel,
            request_code: site.request_code,
            put_sites: Vec::new(),
        }
    }
}

/// An invoke of a cataloged sender API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderSite {
    pub location: CodeLocation,
    pub channel: Channel,
    /// The invoked method (Smali reference).
    pub api: String,
    #[serde(skip)]
    pub intent_reg: Option<Reg>,
    pub request_code: Option<i64>,
}

/// A receiver registered at runtime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicReceiver {
    /// Receiver class when the registered object could be traced.
    pub receiver_class: Option<String>,
    pub filter: IntentFilterDecl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultChannelDecl {
    /// `setResult(code, intent)`; `forwarded` when the result intent is the
    /// received one. `extras` are the puts made on the result intent.
    SetResult { component: String, location: CodeLocation, forwarded: bool, extras: Vec<ExtraPut> },
    /// Extras read from the result intent inside `onActivityResult`.
    OnActivityResult { component: String, gets: Vec<(String, StringValue)> },
    /// A `ServiceConnection` callback in `connection_class`.
    OnServiceConnected { component: String, connection_class: String },
    /// Values packed into the binder a service returns from `onBind`.
    ServiceBinder { component: String, values: Vec<ValueDescriptor> },
}

impl ResultChannelDecl {
    pub fn component(&self) -> &str {
        match self {
            ResultChannelDecl::SetResult { component, .. }
            | ResultChannelDecl::OnActivityResult { component, .. }
            | ResultChannelDecl::OnServiceConnected { component, .. }
            | ResultChannelDecl::ServiceBinder { component, .. } => component,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no intent construction reaches the sender at {0}")]
    IntentOriginNotFound(CodeLocation),
    #[error("sender site {0} does not exist in the app")]
    UnknownSite(CodeLocation),
}

/// Catalogs and limits shared by all extraction steps.
#[derive(Debug, Clone)]
pub struct ExtractConfig {
    pub cap: usize,
    pub senders: SenderApiCatalog,
    pub sources: SourceSinkCatalog,
    pub compat: GetPutCompatTable,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            cap: DEFAULT_CANDIDATE_CAP,
            senders: SenderApiCatalog::default(),
            sources: SourceSinkCatalog::default(),
            compat: GetPutCompatTable::default(),
        }
    }
}

/// Per-app counts kept next to the database for statistics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppMeta {
    pub package_name: String,
    pub sender_sites: BTreeMap<Channel, usize>,
    pub explicit_intents: usize,
    pub implicit_intents: usize,
    pub unresolved_origins: usize,
    /// Specs whose target or action has several candidates.
    pub multi_candidate_targets: usize,
    /// Specs whose target or action could not be resolved at all.
    pub unresolved_targets: usize,
    pub get_calls: BTreeMap<String, usize>,
    pub dynamic_receivers: usize,
    pub result_channels: usize,
    /// Kind of every component, dynamic receivers included.
    pub components: BTreeMap<String, ComponentKind>,
}

/// Everything extracted from one app.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppSummary {
    pub package_name: String,
    /// Manifest components plus one broadcast receiver per dynamic
    /// registration.
    pub components: Vec<ComponentDecl>,
    pub sites: Vec<SenderSite>,
    pub specs: Vec<IntentSpec>,
    pub dynamic_receivers: Vec<DynamicReceiver>,
    pub result_channels: Vec<ResultChannelDecl>,
    pub meta: AppMeta,
}

/// Name of the component a class belongs to: the class itself if it is a
/// declared component, otherwise its outer class.
pub fn owning_component(app: &DecodedApp, class: &str) -> String {
    if app.component(class).is_some() {
        return class.to_string();
    }
    let outer = class.split('$').next().unwrap_or(class);
    outer.to_string()
}

/// Runs the whole analysis phase over one app.
pub fn extract_app(app: &DecodedApp, cx: &ExtractConfig) -> AppSummary {
    let sites = find_sender_sites(app, &cx.senders);
    let mut specs = Vec::new();
    let mut unresolved_origins = 0;
    for site in &sites {
        match backtrace_intent(app, site, cx) {
            Ok(traced) => {
                for mut spec in traced {
                    spec.extras = collect_extras(app, &spec, cx);
                    specs.push(spec);
                }
            }
            Err(e) => {
                debug!("{}: {}", app.package_name, e);
                unresolved_origins += 1;
                specs.push(IntentSpec::unresolved(site));
            }
        }
    }
    let dynamic_receivers = find_dynamic_receivers(app, cx);
    let result_channels = extract_result_channels(app, cx);

    let mut components = app.components.clone();
    for d in &dynamic_receivers {
        let name = d.receiver_class.clone().unwrap_or_else(|| match &d.filter.registration {
            crate::apk::Registration::Dynamic { class, .. } => class.clone(),
            crate::apk::Registration::Manifest => String::new(),
        });
        match components.iter_mut().find(|c| c.name == name && c.kind == ComponentKind::BroadcastReceiver) {
            Some(c) => c.filters.push(d.filter.clone()),
            None => components.push(ComponentDecl {
                name,
                kind: ComponentKind::BroadcastReceiver,
                filters: vec![d.filter.clone()],
                exported: true,
                attributes: BTreeMap::new(),
            }),
        }
    }

    let mut meta = AppMeta { package_name: app.package_name.clone(), ..AppMeta::default() };
    for s in &sites {
        *meta.sender_sites.entry(s.channel).or_default() += 1;
    }
    for s in &specs {
        let value = match &s.targeting {
            Targeting::Explicit { target } => {
                meta.explicit_intents += 1;
                target
            }
            Targeting::Implicit { action } => {
                meta.implicit_intents += 1;
                action
            }
        };
        match value.candidates() {
            Some(c) if c.len() > 1 => meta.multi_candidate_targets += 1,
            Some(_) => {}
            None => meta.unresolved_targets += 1,
        }
    }
    meta.components = components.iter().map(|c| (c.name.clone(), c.kind)).collect();
    meta.unresolved_origins = unresolved_origins;
    meta.get_calls = value::get_call_histogram(app, &cx.compat);
    meta.dynamic_receivers = dynamic_receivers.len();
    meta.result_channels = result_channels.len();
    if unresolved_origins > 0 {
        warn!("{}: {} sender site(s) without a traceable intent", app.package_name, unresolved_origins);
    }

    AppSummary {
        package_name: app.package_name.clone(),
        components,
        sites,
        specs,
        dynamic_receivers,
        result_channels,
        meta,
    }
}
