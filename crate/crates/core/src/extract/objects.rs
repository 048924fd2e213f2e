//! Intra-procedural tracking of framework objects (intents, bundles,
//! filters, component names): where a reference comes from, and which
//! calls act on the same object before a given point.

use std::collections::{BTreeSet, HashSet};

use crate::apk::{Instruction, InvokeKind, MethodRef, Reg};
use crate::cfg::{MethodView, Walk};

pub(crate) const INTENT: &str = "Landroid/content/Intent;";
pub(crate) const BUNDLE: &str = "Landroid/os/Bundle;";
pub(crate) const BASE_BUNDLE: &str = "Landroid/os/BaseBundle;";
pub(crate) const INTENT_FILTER: &str = "Landroid/content/IntentFilter;";
pub(crate) const COMPONENT_NAME: &str = "Landroid/content/ComponentName;";

/// Where an object reference was produced: the defining instruction, or
/// the method entry (a parameter) when `def` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct ObjectSource {
    pub def: Option<usize>,
    pub reg: Reg,
}

fn same_family(method_class: &str, class: &str) -> bool {
    method_class == class || (class == BUNDLE && method_class == BASE_BUNDLE)
}

/// Non-static invoke on `class` that returns its receiver type; such calls
/// (`intent.setAction(..)`) return the receiver itself.
fn is_chain(kind: InvokeKind, m: &MethodRef, class: &str) -> bool {
    kind != InvokeKind::Static && same_family(&m.class, class) && m.ret == class && !m.is_constructor()
}

/// Sources of the object in `reg` just before `point`, following moves and
/// receiver-returning calls on `class`.
pub(crate) fn object_sources(view: &MethodView<'_>, point: usize, reg: Reg, class: &str) -> Vec<ObjectSource> {
    let mut out = BTreeSet::new();
    let mut seen = HashSet::new();
    collect_sources(view, point, reg, class, &mut out, &mut seen);
    out.into_iter().collect()
}

fn collect_sources(
    view: &MethodView<'_>,
    point: usize,
    reg: Reg,
    class: &str,
    out: &mut BTreeSet<ObjectSource>,
    seen: &mut HashSet<(usize, Reg)>,
) {
    if !seen.insert((point, reg)) {
        return;
    }
    let mut defs = Vec::new();
    let entry = view.cfg.walk_back(point, false, |i| {
        if view.ins(i).defines(reg) {
            defs.push(i);
            Walk::Stop
        } else {
            Walk::Continue
        }
    });
    if entry {
        out.insert(ObjectSource { def: None, reg });
    }
    for d in defs {
        match view.ins(d) {
            Instruction::Move { src, .. } => collect_sources(view, d, *src, class, out, seen),
            Instruction::MoveResult { .. } if d > 0 => match view.ins(d - 1) {
                Instruction::Invoke { kind, args, method, .. }
                    if is_chain(*kind, method, class) && !args.is_empty() =>
                {
                    collect_sources(view, d - 1, args[0], class, out, seen)
                }
                _ => {
                    out.insert(ObjectSource { def: Some(d), reg });
                }
            },
            _ => {
                out.insert(ObjectSource { def: Some(d), reg });
            }
        }
    }
}

/// Instructions that can run before `point` (on some path).
fn can_reach(view: &MethodView<'_>, point: usize) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    view.cfg.walk_back(point, false, |i| {
        set.insert(i);
        Walk::Continue
    });
    set
}

/// Registers that may hold the object from `src`, at the entry of every
/// instruction reachable from it.
fn alias_sets(view: &MethodView<'_>, src: ObjectSource, class: &str) -> Vec<Option<BTreeSet<Reg>>> {
    let n = view.len();
    let mut ins_sets: Vec<Option<BTreeSet<Reg>>> = vec![None; n];
    let mut work = Vec::new();
    let seed = BTreeSet::from([src.reg]);
    match src.def {
        Some(d) => {
            for &s in view.cfg.succs(d) {
                ins_sets[s] = Some(seed.clone());
                work.push(s);
            }
        }
        None if n > 0 => {
            ins_sets[0] = Some(seed.clone());
            work.push(0);
        }
        None => {}
    }
    while let Some(k) = work.pop() {
        let Some(current) = ins_sets[k].clone() else { continue };
        let out = if Some(k) == src.def {
            seed.clone()
        } else {
            let ins = view.ins(k);
            let mut out = current.clone();
            out.retain(|r| !ins.defines(*r));
            match ins {
                Instruction::Move { dst, src, .. } if current.contains(src) => {
                    out.insert(*dst);
                }
                Instruction::MoveResult { dst, .. } if k > 0 => {
                    if let Instruction::Invoke { kind, args, method, .. } = view.ins(k - 1) {
                        if is_chain(*kind, method, class) && args.first().is_some_and(|a| current.contains(a)) {
                            out.insert(*dst);
                        }
                    }
                }
                _ => {}
            }
            out
        };
        for &s in view.cfg.succs(k) {
            let slot = &mut ins_sets[s];
            let changed = match slot {
                None => {
                    *slot = Some(out.clone());
                    true
                }
                Some(existing) => {
                    let before = existing.len();
                    existing.extend(out.iter().copied());
                    existing.len() != before
                }
            };
            if changed {
                work.push(s);
            }
        }
    }
    ins_sets
}

/// Non-static invokes on `class` whose receiver is the object from `src`
/// and that can execute between `src` and `until` (exclusive), in index
/// order. Constructor calls are included.
pub(crate) fn calls_on(view: &MethodView<'_>, src: ObjectSource, until: usize, class: &str) -> Vec<usize> {
    let sets = alias_sets(view, src, class);
    let before = can_reach(view, until);
    let mut out = Vec::new();
    for k in before {
        if Some(k) == src.def || k == until {
            continue;
        }
        let Some(set) = &sets[k] else { continue };
        if let Instruction::Invoke { kind, args, method, .. } = view.ins(k) {
            if *kind != InvokeKind::Static
                && same_family(&method.class, class)
                && args.first().is_some_and(|a| set.contains(a))
            {
                out.push(k);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apk::parse_smali_str;

    #[test]
    fn chained_setters_and_moves_alias() {
        let src = r#".class La/B;
.super Landroid/app/Activity;
.method f(Z)V
    .registers 6
    new-instance v0, Landroid/content/Intent;
    invoke-direct {v0}, Landroid/content/Intent;-><init>()V
    const-string v1, "x"
    invoke-virtual {v0, v1}, Landroid/content/Intent;->setAction(Ljava/lang/String;)Landroid/content/Intent;
    move-result-object v2
    move-object v3, v2
    if-eqz p1, :skip
    invoke-virtual {v3, v1, v1}, Landroid/content/Intent;->putExtra(Ljava/lang/String;Ljava/lang/String;)Landroid/content/Intent;
    :skip
    invoke-virtual {p0, v3}, La/B;->startActivity(Landroid/content/Intent;)V
    return-void
.end method
"#;
        let class = parse_smali_str(src).unwrap();
        let view = MethodView::new(&class, &class.methods[0]);
        let sources = object_sources(&view, 8, Reg(3), INTENT);
        assert_eq!(sources, vec![ObjectSource { def: Some(0), reg: Reg(0) }]);
        assert_eq!(calls_on(&view, sources[0], 8, INTENT), vec![1, 3, 7]);
    }
}
