use super::objects::{calls_on, object_sources, INTENT_FILTER};
use super::{DynamicReceiver, ExtractConfig, UNRESOLVED_ACTION};
use crate::apk::{descriptor_to_class, DecodedApp, Instruction, IntentFilterDecl, Reg, Registration};
use crate::cfg::MethodView;
use crate::strings::{StringEvaluator, StringValue};

const BROADCAST_RECEIVER: &str = "Landroid/content/BroadcastReceiver;";

/// Receivers registered with `registerReceiver(receiver, filter, ..)`.
/// Every candidate action of the filter is kept; an action that cannot be
/// resolved becomes [`UNRESOLVED_ACTION`].
pub fn find_dynamic_receivers(app: &DecodedApp, cx: &ExtractConfig) -> Vec<DynamicReceiver> {
    let mut out = Vec::new();
    for class in &app.classes {
        for method in &class.methods {
            let mut view = None;
            for (k, ins) in method.instructions.iter().enumerate() {
                let Some((ops, m)) = ins.invoke_operands() else { continue };
                let registers = m.name == "registerReceiver"
                    && m.params.len() >= 2
                    && m.params[0] == BROADCAST_RECEIVER
                    && m.params[1] == INTENT_FILTER
                    && ops.len() == m.params.len() + 1;
                if !registers {
                    continue;
                }
                let view = view.get_or_insert_with(|| MethodView::new(class, method));
                let ev = StringEvaluator::new(view, &app.classes, cx.cap);
                let receiver_class = receiver_class(view, k, ops[1]);
                let actions = filter_actions(&ev, k, ops[2]);
                out.push(DynamicReceiver {
                    receiver_class,
                    filter: IntentFilterDecl {
                        actions,
                        categories: Vec::new(),
                        data: Vec::new(),
                        registration: Registration::Dynamic {
                            class: class.class_name.clone(),
                            method: method.signature(),
                            instruction_index: k,
                        },
                    },
                });
            }
        }
    }
    out
}

fn receiver_class(view: &MethodView<'_>, point: usize, reg: Reg) -> Option<String> {
    object_sources(view, point, reg, BROADCAST_RECEIVER).into_iter().find_map(|src| match src.def {
        Some(d) => match view.ins(d) {
            Instruction::NewInstance { class, .. } => Some(descriptor_to_class(class)),
            _ => None,
        },
        None if !view.method.is_static() && view.method.param_index(src.reg) == Some(0) => {
            Some(view.class.class_name.clone())
        }
        None => None,
    })
}

fn push_candidates(v: StringValue, actions: &mut Vec<String>) {
    match v {
        StringValue::Resolved(c) => actions.extend(c),
        StringValue::Unresolved(_) => actions.push(UNRESOLVED_ACTION.to_string()),
    }
}

fn filter_actions(ev: &StringEvaluator<'_, '_>, point: usize, reg: Reg) -> Vec<String> {
    let view = ev.view();
    let mut actions = Vec::new();
    let sources = object_sources(view, point, reg, INTENT_FILTER);
    for src in &sources {
        let Some(d) = src.def else {
            actions.push(UNRESOLVED_ACTION.to_string());
            continue;
        };
        match view.ins(d) {
            Instruction::NewInstance { .. } => {
                for c in calls_on(view, *src, point, INTENT_FILTER) {
                    let Some((ops, m)) = view.ins(c).invoke_operands() else { continue };
                    let takes_action = m.params.first().is_some_and(|p| p == "Ljava/lang/String;");
                    if (m.is_constructor() || m.name == "addAction") && takes_action {
                        push_candidates(ev.eval_at(c, ops[1]), &mut actions);
                    }
                }
            }
            Instruction::MoveResult { .. } if d > 0 => match view.ins(d - 1).invoke_operands() {
                Some((ops, m)) if m.class == INTENT_FILTER && m.name == "create" && !ops.is_empty() => {
                    push_candidates(ev.eval_at(d - 1, ops[0]), &mut actions)
                }
                _ => actions.push(UNRESOLVED_ACTION.to_string()),
            },
            _ => actions.push(UNRESOLVED_ACTION.to_string()),
        }
    }
    actions.sort();
    actions.dedup();
    actions
}
