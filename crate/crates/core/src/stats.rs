//! Corpus statistics over a database and its per-app metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::db::IntentDb;
use crate::extract::Channel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCount {
    pub action: String,
    /// Distinct components sending the action.
    pub senders: usize,
    /// Distinct components declaring a filter for it.
    pub receivers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub apps: usize,
    pub sender_sites: usize,
    pub per_channel: BTreeMap<Channel, usize>,
    pub explicit_intents: usize,
    pub implicit_intents: usize,
    /// implicit / (implicit + explicit); 0 when there are no intents.
    pub implicit_ratio: f64,
    pub get_calls: BTreeMap<String, usize>,
    /// Sorted by sender count, descending, then by action.
    pub actions: Vec<ActionCount>,
    pub unresolved_multi_candidate: usize,
    pub unresolved_sentinel: usize,
    pub dynamic_receivers: usize,
    /// Derived rows, each standing for a flow through more than two
    /// components.
    pub chains_over_two: usize,
}

pub fn compute_stats(db: &IntentDb) -> CorpusStats {
    let mut s = CorpusStats { apps: db.apps().len(), ..CorpusStats::default() };
    for rec in db.apps().values() {
        let m = &rec.meta;
        for (c, n) in &m.sender_sites {
            *s.per_channel.entry(*c).or_default() += n;
            s.sender_sites += n;
        }
        s.explicit_intents += m.explicit_intents;
        s.implicit_intents += m.implicit_intents;
        for (g, n) in &m.get_calls {
            *s.get_calls.entry(g.clone()).or_default() += n;
        }
        s.unresolved_multi_candidate += m.multi_candidate_targets;
        s.unresolved_sentinel += m.unresolved_targets;
        s.dynamic_receivers += m.dynamic_receivers;
    }
    let total = s.explicit_intents + s.implicit_intents;
    s.implicit_ratio = if total == 0 { 0.0 } else { s.implicit_intents as f64 / total as f64 };

    let mut senders: BTreeMap<&str, BTreeSet<(&str, &str)>> = BTreeMap::new();
    let mut receivers: BTreeMap<&str, BTreeSet<(&str, &str)>> = BTreeMap::new();
    for r in db.rows() {
        let who = (r.package_name.as_str(), r.class_name.as_str());
        if let Some(a) = &r.intent_action {
            if !r.is_derived() {
                senders.entry(a).or_default().insert(who);
            }
        }
        if let Some(f) = &r.intent_filter {
            receivers.entry(f).or_default().insert(who);
        }
        if r.is_derived() {
            s.chains_over_two += 1;
        }
    }
    let actions: BTreeSet<&str> = senders.keys().chain(receivers.keys()).copied().collect();
    s.actions = actions
        .into_iter()
        .map(|a| ActionCount {
            action: a.to_string(),
            senders: senders.get(a).map_or(0, BTreeSet::len),
            receivers: receivers.get(a).map_or(0, BTreeSet::len),
        })
        .collect();
    s.actions.sort_by(|x, y| y.senders.cmp(&x.senders).then_with(|| x.action.cmp(&y.action)));
    s
}

pub fn render_stats_text(s: &CorpusStats) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "apps: {}", s.apps);
    let _ = writeln!(o, "sender sites: {}", s.sender_sites);
    for (c, n) in &s.per_channel {
        let _ = writeln!(o, "  {}: {}", c, n);
    }
    let _ = writeln!(
        o,
        "intents: {} explicit, {} implicit (implicit ratio {:.3})",
        s.explicit_intents, s.implicit_intents, s.implicit_ratio
    );
    let _ = writeln!(
        o,
        "unresolved targets: {} with several candidates, {} unresolved",
        s.unresolved_multi_candidate, s.unresolved_sentinel
    );
    let _ = writeln!(o, "dynamic receivers: {}", s.dynamic_receivers);
    let _ = writeln!(o, "chains over two components: {}", s.chains_over_two);
    let _ = writeln!(o, "get calls:");
    for (g, n) in &s.get_calls {
        let _ = writeln!(o, "  {}: {}", g, n);
    }
    let _ = writeln!(o, "actions (senders, receivers):");
    for a in &s.actions {
        let _ = writeln!(o, "  {}: {}, {}", a.action, a.senders, a.receivers);
    }
    o
}
