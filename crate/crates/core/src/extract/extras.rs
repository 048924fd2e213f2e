use log::warn;

use super::backtrace::trace_intent;
use super::objects::{calls_on, object_sources, BUNDLE, INTENT};
use super::value::classify_value;
use super::{CodeLocation, ExtraPut, ExtractConfig, IntentSpec};
use crate::apk::DecodedApp;
use crate::cfg::MethodView;
use crate::strings::StringEvaluator;

const NESTING: usize = 3;

/// Extras carried by a traced intent, one per put call.
pub fn collect_extras(app: &DecodedApp, spec: &IntentSpec, cx: &ExtractConfig) -> Vec<ExtraPut> {
    extras_at(app, cx, &spec.put_sites)
}

/// Extras written by the put-family calls at `puts`.
pub(crate) fn extras_at(app: &DecodedApp, cx: &ExtractConfig, puts: &[CodeLocation]) -> Vec<ExtraPut> {
    let mut out = Vec::new();
    for loc in puts {
        puts_at(app, cx, loc, 0, &mut out);
    }
    out
}

fn puts_at(app: &DecodedApp, cx: &ExtractConfig, loc: &CodeLocation, nesting: usize, out: &mut Vec<ExtraPut>) {
    let Some((class, method)) = app.class(&loc.class).and_then(|c| Some((c, c.method(&loc.method)?))) else {
        return;
    };
    let view = MethodView::new(class, method);
    let ev = StringEvaluator::new(&view, &app.classes, cx.cap);
    let k = loc.index;
    let Some((ops, m)) = view.ins(k).invoke_operands() else { return };
    if m.name == "putExtras" && m.params.len() == 1 && ops.len() == 2 {
        if nesting >= NESTING {
            return;
        }
        if m.params[0] == BUNDLE {
            for src in object_sources(&view, k, ops[1], BUNDLE) {
                for c in calls_on(&view, src, k, BUNDLE) {
                    let put = view.ins(c).as_invoke().is_some_and(|(_, m)| m.name.starts_with("put"));
                    if put {
                        let at = CodeLocation::new(loc.class.clone(), loc.method.clone(), c);
                        puts_at(app, cx, &at, nesting + 1, out);
                    }
                }
            }
        } else if m.params[0] == INTENT {
            for t in trace_intent(app, &ev, k, ops[1], 0, 0) {
                for p in &t.puts {
                    puts_at(app, cx, p, nesting + 1, out);
                }
            }
        }
        return;
    }
    let Some(put_signature) = cx.compat.put_signature(m) else {
        warn!("unknown put API {} at {}", m, loc);
        return;
    };
    if ops.len() < 3 {
        return;
    }
    out.push(ExtraPut {
        key: ev.eval_at(k, ops[1]),
        value: classify_value(app, cx, &ev, k, ops[2]),
        put_signature,
        location: loc.clone(),
    });
}
