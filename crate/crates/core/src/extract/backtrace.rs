//! From a sender call site back to the construction of the intent it sends.

use super::objects::{calls_on, object_sources, ObjectSource, COMPONENT_NAME, INTENT};
use super::{CodeLocation, ExtractConfig, ExtractError, IntentSpec, SenderSite, Targeting};
use crate::apk::{DecodedApp, Instruction, InvokeKind, Reg};
use crate::cfg::MethodView;
use crate::strings::{StringEvaluator, StringValue, UnresolvedReason};

/// Helper methods returning an intent are followed this many calls deep.
const HELPER_DEPTH: usize = 1;
/// Bound on copy-constructor and selector nesting.
const NESTING: usize = 4;

/// One intent object reaching a point, with the calls applied to it.
#[derive(Debug, Clone)]
pub(crate) struct Traced {
    pub origin: Option<CodeLocation>,
    pub targeting: Option<Targeting>,
    pub puts: Vec<CodeLocation>,
    /// A constructor or intent factory was found.
    pub constructed: bool,
    /// The object is the intent the component was started with.
    pub forwarded: bool,
}

impl Traced {
    fn opaque(origin: Option<CodeLocation>) -> Traced {
        Traced { origin, targeting: None, puts: Vec::new(), constructed: false, forwarded: false }
    }
}

fn location(view: &MethodView<'_>, index: usize) -> CodeLocation {
    CodeLocation::new(view.class.class_name.clone(), view.method.signature(), index)
}

fn map_candidates(v: StringValue, cap: usize, f: impl Fn(&str) -> String) -> StringValue {
    match v {
        StringValue::Resolved(c) => StringValue::from_candidates(c.iter().map(|s| f(s)).collect(), cap),
        u => u,
    }
}

fn join_all(values: impl IntoIterator<Item = StringValue>, cap: usize) -> StringValue {
    values.into_iter().reduce(|a, b| a.union(b, cap)).unwrap_or(StringValue::Unresolved(UnresolvedReason::UnmodeledOp))
}

/// Class name held by the `ComponentName` in `reg` before `point`.
pub(crate) fn component_value(ev: &StringEvaluator<'_, '_>, point: usize, reg: Reg) -> StringValue {
    let view = ev.view();
    let cap = ev.cap();
    let mut values = Vec::new();
    for src in object_sources(view, point, reg, COMPONENT_NAME) {
        let v = match src.def.map(|d| (d, view.ins(d))) {
            Some((_, Instruction::NewInstance { class, .. })) if class == COMPONENT_NAME => {
                let init = calls_on(view, src, point, COMPONENT_NAME)
                    .into_iter()
                    .find_map(|k| view.ins(k).invoke_operands().filter(|(_, m)| m.is_constructor()).map(|x| (k, x)));
                match init {
                    Some((k, (ops, m))) if m.params.len() == 2 => ev.eval_at(k, ops[2]),
                    _ => StringValue::Unresolved(UnresolvedReason::UnmodeledOp),
                }
            }
            Some((d, Instruction::MoveResult { .. })) if d > 0 => match view.ins(d - 1).invoke_operands() {
                Some((ops, m)) if m.class == COMPONENT_NAME && m.name == "unflattenFromString" => {
                    map_candidates(ev.eval_at(d - 1, ops[0]), cap, |s| match s.split_once('/') {
                        Some((pkg, cls)) if cls.starts_with('.') => format!("{}{}", pkg, cls),
                        Some((_, cls)) => cls.to_string(),
                        None => s.to_string(),
                    })
                }
                Some((ops, m)) if m.class == COMPONENT_NAME && m.name == "createRelative" && ops.len() == 2 => {
                    let pkg = ev.eval_at(d - 1, ops[0]);
                    let cls = ev.eval_at(d - 1, ops[1]);
                    match (pkg.single(), &cls) {
                        (Some(p), StringValue::Resolved(_)) => {
                            let p = p.to_string();
                            map_candidates(cls, cap, |c| {
                                if c.starts_with('.') {
                                    format!("{}{}", p, c)
                                } else {
                                    c.to_string()
                                }
                            })
                        }
                        _ => StringValue::Unresolved(UnresolvedReason::UnmodeledOp),
                    }
                }
                _ => StringValue::Unresolved(UnresolvedReason::UnmodeledOp),
            },
            None => StringValue::Unresolved(UnresolvedReason::DynamicInput),
            _ => StringValue::Unresolved(UnresolvedReason::UnmodeledOp),
        };
        values.push(v);
    }
    join_all(values, cap)
}

/// Every intent object that may be in `reg` just before `point`.
pub(crate) fn trace_intent(
    app: &DecodedApp,
    ev: &StringEvaluator<'_, '_>,
    point: usize,
    reg: Reg,
    depth: usize,
    nesting: usize,
) -> Vec<Traced> {
    let view = ev.view();
    let mut out = Vec::new();
    for src in object_sources(view, point, reg, INTENT) {
        let calls = calls_on(view, src, point, INTENT);
        let (bases, consumed) = trace_source(app, ev, src, &calls, depth, nesting);
        for mut t in bases {
            for &k in calls.iter().filter(|k| Some(**k) != consumed) {
                apply_call(app, ev, k, &mut t, depth, nesting);
            }
            out.push(t);
        }
    }
    out
}

/// Initial state of the object produced at `src`; also returns the index
/// of the constructor call consumed in doing so.
fn trace_source(
    app: &DecodedApp,
    ev: &StringEvaluator<'_, '_>,
    src: ObjectSource,
    calls: &[usize],
    depth: usize,
    nesting: usize,
) -> (Vec<Traced>, Option<usize>) {
    let view = ev.view();
    let Some(d) = src.def else {
        return (vec![Traced::opaque(None)], None);
    };
    let origin = Some(location(view, d));
    match view.ins(d) {
        Instruction::NewInstance { class, .. } if class == INTENT => {
            let init =
                calls.iter().copied().find(|&k| view.ins(k).as_invoke().is_some_and(|(_, m)| m.is_constructor()));
            let Some(k) = init else {
                return (vec![Traced { constructed: true, ..Traced::opaque(origin) }], None);
            };
            let (ops, m) = view.ins(k).invoke_operands().expect("constructor is an invoke");
            let params: Vec<&str> = m.params.iter().map(String::as_str).collect();
            let targeting = match params.as_slice() {
                ["Ljava/lang/String;"] | ["Ljava/lang/String;", "Landroid/net/Uri;"] => {
                    Some(Targeting::Implicit { action: ev.eval_at(k, ops[1]) })
                }
                ["Landroid/content/Context;", "Ljava/lang/Class;"] => {
                    Some(Targeting::Explicit { target: ev.eval_at(k, ops[2]) })
                }
                ["Ljava/lang/String;", "Landroid/net/Uri;", "Landroid/content/Context;", "Ljava/lang/Class;"] => {
                    Some(Targeting::Explicit { target: ev.eval_at(k, ops[4]) })
                }
                [INTENT] if nesting < NESTING => {
                    let copies = trace_intent(app, ev, k, ops[1], depth, nesting + 1);
                    let copies = copies
                        .into_iter()
                        .map(|c| Traced { origin: origin.clone(), constructed: true, forwarded: c.forwarded, ..c })
                        .collect();
                    return (copies, Some(k));
                }
                _ => None,
            };
            (vec![Traced { targeting, constructed: true, ..Traced::opaque(origin) }], Some(k))
        }
        Instruction::MoveResult { .. } if d > 0 => {
            let Some((ops, m)) = view.ins(d - 1).invoke_operands() else {
                return (vec![Traced::opaque(origin)], None);
            };
            let factory = m.class == INTENT && view.ins(d - 1).as_invoke().is_some();
            if factory && matches!(m.name.as_str(), "makeMainActivity" | "makeRestartActivityTask") && ops.len() == 1 {
                let target = component_value(ev, d - 1, ops[0]);
                let t = Traced {
                    targeting: Some(Targeting::Explicit { target }),
                    constructed: true,
                    ..Traced::opaque(origin)
                };
                return (vec![t], None);
            }
            if factory && m.name == "createChooser" && nesting < NESTING {
                return (trace_intent(app, ev, d - 1, ops[0], depth, nesting + 1), None);
            }
            if m.name == "getIntent" && m.params.is_empty() && m.ret == INTENT {
                return (vec![Traced { forwarded: true, ..Traced::opaque(origin) }], None);
            }
            if m.class == view.class.descriptor() && m.ret == INTENT && depth < HELPER_DEPTH {
                if let Some(t) = trace_helper(app, ev, d - 1, &ops, m, depth, nesting) {
                    return (t, None);
                }
            }
            (vec![Traced::opaque(origin)], None)
        }
        _ => (vec![Traced::opaque(origin)], None),
    }
}

fn trace_helper(
    app: &DecodedApp,
    ev: &StringEvaluator<'_, '_>,
    call: usize,
    ops: &[Reg],
    m: &crate::apk::MethodRef,
    depth: usize,
    nesting: usize,
) -> Option<Vec<Traced>> {
    let class = ev.view().class;
    let callee = class.method(&format!("{}{}", m.name, m.descriptor()))?;
    let args: Vec<StringValue> = ops.iter().map(|r| ev.eval_at(call, *r)).collect();
    let view = MethodView::new(class, callee);
    let sub = StringEvaluator::with_params(&view, &app.classes, ev.cap(), args, depth + 1);
    let mut out = Vec::new();
    for (k, ins) in callee.instructions.iter().enumerate() {
        if let Instruction::Return { value: Some(r), .. } = ins {
            out.extend(trace_intent(app, &sub, k, *r, depth + 1, nesting));
        }
    }
    Some(out)
}

fn is_put(name: &str) -> bool {
    name == "putExtra" || name == "putExtras" || (name.starts_with("put") && name.ends_with("ArrayListExtra"))
}

/// Applies one call on the traced intent: targeting changes and puts.
fn apply_call(app: &DecodedApp, ev: &StringEvaluator<'_, '_>, k: usize, t: &mut Traced, depth: usize, nesting: usize) {
    let view = ev.view();
    let ins = view.ins(k);
    let Some((ops, m)) = ins.invoke_operands() else { return };
    if matches!(ins, Instruction::Invoke { kind: InvokeKind::Static, .. }) {
        return;
    }
    let params: Vec<&str> = m.params.iter().map(String::as_str).collect();
    let explicit = matches!(t.targeting, Some(Targeting::Explicit { .. }));
    match (m.name.as_str(), params.as_slice()) {
        ("setAction", [_]) => {
            // an explicit target wins over any action
            if !explicit {
                t.targeting = Some(Targeting::Implicit { action: ev.eval_at(k, ops[1]) });
            }
        }
        ("setClass", [_, "Ljava/lang/Class;"]) | ("setClassName", [_, "Ljava/lang/String;"]) => {
            t.targeting = Some(Targeting::Explicit { target: ev.eval_at(k, ops[2]) });
        }
        ("setComponent", [COMPONENT_NAME]) => {
            t.targeting = Some(Targeting::Explicit { target: component_value(ev, k, ops[1]) });
        }
        ("setPackage", ["Ljava/lang/String;"]) => {
            if !explicit {
                t.targeting = Some(Targeting::Explicit { target: ev.eval_at(k, ops[1]) });
            }
        }
        ("setSelector", [INTENT]) if !explicit && nesting < NESTING => {
            let selected = trace_intent(app, ev, k, ops[1], depth, nesting + 1);
            let actions: Vec<StringValue> = selected
                .iter()
                .filter_map(|s| match &s.targeting {
                    Some(Targeting::Implicit { action }) => Some(action.clone()),
                    _ => None,
                })
                .collect();
            if let Some(first) = selected.iter().find_map(|s| s.targeting.clone()) {
                t.targeting = Some(match first {
                    Targeting::Implicit { .. } => Targeting::Implicit { action: join_all(actions, ev.cap()) },
                    explicit => explicit,
                });
            }
        }
        (name, _) if is_put(name) => t.puts.push(location(view, k)),
        _ => {}
    }
}

/// Reconstructs the intent(s) sent at `site`. Each reaching construction
/// yields its own spec; extras are left empty (see [`super::collect_extras`]).
pub fn backtrace_intent(
    app: &DecodedApp,
    site: &SenderSite,
    cx: &ExtractConfig,
) -> Result<Vec<IntentSpec>, ExtractError> {
    let loc = &site.location;
    let unknown = || ExtractError::UnknownSite(loc.clone());
    let class = app.class(&loc.class).ok_or_else(unknown)?;
    let method = class.method(&loc.method).ok_or_else(unknown)?;
    let ins = method.instructions.get(loc.index).ok_or_else(unknown)?;
    let reg = match site.intent_reg {
        Some(r) => r,
        None => {
            let (ops, m) = ins.invoke_operands().ok_or_else(unknown)?;
            let api = cx.senders.lookup(m).ok_or_else(unknown)?;
            ops[api.intent_arg + ops.len() - m.params.len()]
        }
    };
    let view = MethodView::new(class, method);
    let ev = StringEvaluator::new(&view, &app.classes, cx.cap);
    let traced = trace_intent(app, &ev, loc.index, reg, 0, 0);
    if traced.iter().all(|t| t.targeting.is_none() && !t.constructed) {
        return Err(ExtractError::IntentOriginNotFound(loc.clone()));
    }
    Ok(traced
        .into_iter()
        .map(|t| IntentSpec {
            site: loc.clone(),
            origin: t.origin,
            targeting: t
                .targeting
                .unwrap_or(Targeting::Implicit { action: StringValue::Unresolved(UnresolvedReason::UnmodeledOp) }),
            extras: Vec::new(),
            channel: site.channel,
            request_code: site.request_code,
            put_sites: t.puts,
        })
        .collect())
}
