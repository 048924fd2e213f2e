//! Where a transmitted value comes from, and how a received intent arrived.

use std::collections::{BTreeMap, HashSet};

use super::objects::{object_sources, BUNDLE, INTENT};
use super::{intent_param, owning_component, CodeLocation, ExtractConfig, ReceiveVia, ValueDescriptor};
use crate::apk::{DecodedApp, FieldRef, Instruction, InvokeKind, Reg, SmaliClass};
use crate::cfg::MethodView;
use crate::report::GetPutCompatTable;
use crate::strings::{StringEvaluator, StringValue};

/// Helper calls and field stores are followed this many levels deep.
const MAX_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Leaf {
    Constant,
    Source(String),
    Get {
        get: String,
        key: StringValue,
        via: ReceiveVia,
    },
    Opaque(CodeLocation),
    /// Incoming parameter `n` of a helper, mapped back by the caller.
    Param(usize),
}

struct Classifier<'c> {
    app: &'c DecodedApp,
    cx: &'c ExtractConfig,
}

fn location(view: &MethodView<'_>, index: usize) -> CodeLocation {
    CodeLocation::new(view.class.class_name.clone(), view.method.signature(), index)
}

impl Classifier<'_> {
    fn leaves(
        &self,
        ev: &StringEvaluator<'_, '_>,
        point: usize,
        reg: Reg,
        depth: usize,
        seen: &mut HashSet<(usize, Reg)>,
        out: &mut Vec<Leaf>,
    ) {
        if !seen.insert((point, reg)) {
            return;
        }
        let view = ev.view();
        let (defs, entry) = ev.reaching_defs(point, reg);
        if entry {
            match view.method.param_index(reg) {
                Some(i) if depth > 0 => out.push(Leaf::Param(i)),
                _ => out.push(Leaf::Opaque(location(view, 0))),
            }
        }
        for d in defs {
            match view.ins(d) {
                Instruction::ConstString { .. } | Instruction::Const { .. } => out.push(Leaf::Constant),
                Instruction::Move { src, .. } => self.leaves(ev, d, *src, depth, seen, out),
                Instruction::MoveResult { .. } if d > 0 => self.call_leaves(ev, d, depth, seen, out),
                Instruction::Invoke { .. } => {
                    // constructor or builder mutation of the register
                    let Some((ops, m)) = view.ins(d).invoke_operands() else { continue };
                    if !m.is_constructor() {
                        self.leaves(ev, d, ops[0], depth, seen, out);
                    }
                    for r in &ops[1..] {
                        self.leaves(ev, d, *r, depth, seen, out);
                    }
                }
                Instruction::StaticGet { field, .. } | Instruction::InstanceGet { field, .. } => {
                    self.field_leaves(field, depth, location(view, d), out)
                }
                _ => out.push(Leaf::Opaque(location(view, d))),
            }
        }
    }

    fn call_leaves(
        &self,
        ev: &StringEvaluator<'_, '_>,
        d: usize,
        depth: usize,
        seen: &mut HashSet<(usize, Reg)>,
        out: &mut Vec<Leaf>,
    ) {
        let view = ev.view();
        let call = d - 1;
        let Some((ops, m)) = view.ins(call).invoke_operands() else {
            out.push(Leaf::Opaque(location(view, d)));
            return;
        };
        if self.cx.sources.is_source(m) {
            out.push(Leaf::Source(m.to_string()));
        } else if let Some(get) = self.cx.compat.get_signature(m) {
            let static_call = matches!(view.ins(call), Instruction::Invoke { kind: InvokeKind::Static, .. });
            if static_call || ops.len() < 2 {
                out.push(Leaf::Opaque(location(view, d)));
                return;
            }
            out.push(Leaf::Get {
                get: get.to_string(),
                key: ev.eval_at(call, ops[1]),
                via: receive_via(self.app, view, call, ops[0]),
            });
        } else if m.class.starts_with("Ljava/lang/") {
            for r in &ops {
                self.leaves(ev, call, *r, depth, seen, out);
            }
        } else if m.class == view.class.descriptor() && depth < MAX_DEPTH {
            match view.class.method(&format!("{}{}", m.name, m.descriptor())) {
                Some(callee) => self.helper_leaves(ev, view.class, callee, call, &ops, depth, seen, out),
                None => out.push(Leaf::Opaque(location(view, d))),
            }
        } else {
            out.push(Leaf::Opaque(location(view, d)));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn helper_leaves(
        &self,
        ev: &StringEvaluator<'_, '_>,
        class: &SmaliClass,
        callee: &crate::apk::SmaliMethod,
        call: usize,
        ops: &[Reg],
        depth: usize,
        seen: &mut HashSet<(usize, Reg)>,
        out: &mut Vec<Leaf>,
    ) {
        let args: Vec<StringValue> = ops.iter().map(|r| ev.eval_at(call, *r)).collect();
        let view = MethodView::new(class, callee);
        let sub = StringEvaluator::with_params(&view, &self.app.classes, ev.cap(), args, depth + 1);
        let mut inner = Vec::new();
        let mut inner_seen = HashSet::new();
        for (k, ins) in callee.instructions.iter().enumerate() {
            if let Instruction::Return { value: Some(r), .. } = ins {
                self.leaves(&sub, k, *r, depth + 1, &mut inner_seen, &mut inner);
            }
        }
        for leaf in inner {
            match leaf {
                Leaf::Param(i) if i < ops.len() => self.leaves(ev, call, ops[i], depth, seen, out),
                Leaf::Param(_) => out.push(Leaf::Opaque(location(ev.view(), call))),
                other => out.push(other),
            }
        }
    }

    /// Values a field may hold: its initial value plus every store to it
    /// made by its declaring class.
    fn field_leaves(&self, field: &FieldRef, depth: usize, at: CodeLocation, out: &mut Vec<Leaf>) {
        let Some(class) = self.app.classes.iter().find(|c| c.descriptor() == field.class) else {
            out.push(Leaf::Opaque(at));
            return;
        };
        if depth >= MAX_DEPTH {
            out.push(Leaf::Opaque(at));
            return;
        }
        let before = out.len();
        if class.fields.iter().any(|f| f.name == field.name && f.initial_string.is_some()) {
            out.push(Leaf::Constant);
        }
        for method in &class.methods {
            let stores: Vec<(usize, Reg)> = method
                .instructions
                .iter()
                .enumerate()
                .filter_map(|(k, ins)| match ins {
                    Instruction::StaticPut { src, field: f } | Instruction::InstancePut { src, field: f, .. }
                        if f == field =>
                    {
                        Some((k, *src))
                    }
                    _ => None,
                })
                .collect();
            if stores.is_empty() {
                continue;
            }
            let view = MethodView::new(class, method);
            let ev = StringEvaluator::new(&view, &self.app.classes, 1);
            let mut seen = HashSet::new();
            for (k, src) in stores {
                let mut inner = Vec::new();
                self.leaves(&ev, k, src, depth + 1, &mut seen, &mut inner);
                out.extend(inner.into_iter().map(|l| match l {
                    Leaf::Param(_) => Leaf::Opaque(location(&view, k)),
                    other => other,
                }));
            }
        }
        if out.len() == before {
            out.push(Leaf::Opaque(at));
        }
    }
}

/// Describes the value in `reg` just before `point`. A value that mixes
/// origins is described by its most significant one: a source call, then a
/// received extra, then anything untraced. Only values built purely from
/// constants are constants.
pub fn classify_value(
    app: &DecodedApp,
    cx: &ExtractConfig,
    ev: &StringEvaluator<'_, '_>,
    point: usize,
    reg: Reg,
) -> ValueDescriptor {
    let mut leaves = Vec::new();
    Classifier { app, cx }.leaves(ev, point, reg, 0, &mut HashSet::new(), &mut leaves);
    leaves.sort();
    leaves.dedup();
    if let Some(api) = leaves.iter().find_map(|l| match l {
        Leaf::Source(api) => Some(api.clone()),
        _ => None,
    }) {
        return ValueDescriptor::SourceCall { api };
    }
    if let Some(Leaf::Get { get, key, via }) = leaves.iter().find(|l| matches!(l, Leaf::Get { .. })) {
        return ValueDescriptor::GetExtraRef { get: get.clone(), key: key.clone(), via: *via };
    }
    if let Some(Leaf::Opaque(location)) = leaves.iter().find(|l| matches!(l, Leaf::Opaque(_))) {
        return ValueDescriptor::Opaque { location: location.clone() };
    }
    if leaves.is_empty() {
        return ValueDescriptor::Opaque { location: location(ev.view(), point) };
    }
    let v = ev.eval_at(point, reg);
    ValueDescriptor::Constant(v.single().map(str::to_string).unwrap_or_else(|| v.to_string()))
}

/// How the intent (or extras bundle) in `reg` before `point` reached this
/// component.
pub fn receive_via(app: &DecodedApp, view: &MethodView<'_>, point: usize, reg: Reg) -> ReceiveVia {
    via_of(app, view, point, reg, 0).unwrap_or_else(|| fallback_via(app, view))
}

fn fallback_via(app: &DecodedApp, view: &MethodView<'_>) -> ReceiveVia {
    let owner = owning_component(app, &view.class.class_name);
    app.kind_of_class(&owner)
        .or_else(|| app.kind_of_class(&view.class.class_name))
        .map(ReceiveVia::from_kind)
        .unwrap_or(ReceiveVia::Activity)
}

fn via_of(app: &DecodedApp, view: &MethodView<'_>, point: usize, reg: Reg, depth: usize) -> Option<ReceiveVia> {
    if depth > 4 {
        return None;
    }
    for class in [INTENT, BUNDLE] {
        for src in object_sources(view, point, reg, class) {
            let found = match src.def {
                None => {
                    let idx = view.method.param_index(src.reg);
                    intent_param(view.method).filter(|(p, _)| Some(*p) == idx).map(|(_, via)| via)
                }
                Some(d) if d > 0 && matches!(view.ins(d), Instruction::MoveResult { .. }) => {
                    match view.ins(d - 1).invoke_operands() {
                        Some((_, m)) if m.name == "getIntent" && m.params.is_empty() && m.ret == INTENT => {
                            Some(fallback_via(app, view))
                        }
                        Some((ops, m))
                            if m.class == INTENT && matches!(m.name.as_str(), "getExtras" | "getBundleExtra") =>
                        {
                            via_of(app, view, d - 1, ops[0], depth + 1)
                        }
                        _ => None,
                    }
                }
                _ => None,
            };
            if found.is_some() {
                return found;
            }
        }
    }
    None
}

/// Number of calls to each known extra getter across the app.
pub fn get_call_histogram(app: &DecodedApp, compat: &GetPutCompatTable) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for ins in app.classes.iter().flat_map(|c| &c.methods).flat_map(|m| &m.instructions) {
        if let Some(sig) = ins.as_invoke().and_then(|(_, m)| compat.get_signature(m)) {
            *out.entry(sig.to_string()).or_default() += 1;
        }
    }
    out
}
