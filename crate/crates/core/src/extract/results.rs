use super::backtrace::trace_intent;
use super::extras::extras_at;
use super::objects::{calls_on, object_sources, INTENT};
use super::value::{classify_value, receive_via};
use super::{owning_component, CodeLocation, ExtractConfig, ReceiveVia, ResultChannelDecl};
use crate::apk::{ComponentKind, DecodedApp, Instruction};
use crate::cfg::MethodView;
use crate::strings::StringEvaluator;

/// Result-returning channels: activity results in both directions, and
/// bound-service binders with the connections that receive them.
pub fn extract_result_channels(app: &DecodedApp, cx: &ExtractConfig) -> Vec<ResultChannelDecl> {
    let mut out = Vec::new();
    for class in &app.classes {
        let component = owning_component(app, &class.class_name);
        for method in &class.methods {
            let view = MethodView::new(class, method);
            let ev = StringEvaluator::new(&view, &app.classes, cx.cap);
            let params: Vec<&str> = method.params.iter().map(String::as_str).collect();
            let instance = !method.is_static();

            for (k, ins) in method.instructions.iter().enumerate() {
                let Some((ops, m)) = ins.invoke_operands() else { continue };
                if m.name == "setResult" && m.params.len() == 2 && m.params[1] == INTENT && ops.len() == 3 {
                    let traced = trace_intent(app, &ev, k, ops[2], 0, 0);
                    let forwarded = traced.iter().any(|t| t.forwarded);
                    let mut puts: Vec<CodeLocation> = traced.into_iter().flat_map(|t| t.puts).collect();
                    puts.sort();
                    puts.dedup();
                    out.push(ResultChannelDecl::SetResult {
                        component: component.clone(),
                        location: CodeLocation::new(class.class_name.clone(), method.signature(), k),
                        forwarded,
                        extras: extras_at(app, cx, &puts),
                    });
                }
            }

            if instance && method.name == "onActivityResult" && params == ["I", "I", INTENT] {
                let mut gets = Vec::new();
                for (k, ins) in method.instructions.iter().enumerate() {
                    let Some((ops, m)) = ins.invoke_operands() else { continue };
                    let Some(get) = cx.compat.get_signature(m) else { continue };
                    if ops.len() >= 2 && receive_via(app, &view, k, ops[0]) == ReceiveVia::ActivityResult {
                        gets.push((get.to_string(), ev.eval_at(k, ops[1])));
                    }
                }
                out.push(ResultChannelDecl::OnActivityResult { component: component.clone(), gets });
            }

            if instance
                && method.name == "onServiceConnected"
                && params == ["Landroid/content/ComponentName;", "Landroid/os/IBinder;"]
            {
                out.push(ResultChannelDecl::OnServiceConnected {
                    component: component.clone(),
                    connection_class: class.class_name.clone(),
                });
            }

            let in_service = app.kind_of_class(&class.class_name) == Some(ComponentKind::Service);
            if instance && in_service && method.name == "onBind" && params == [INTENT] {
                let mut values = Vec::new();
                for (k, ins) in method.instructions.iter().enumerate() {
                    let Instruction::Return { value: Some(r), .. } = ins else { continue };
                    for src in object_sources(&view, k, *r, "") {
                        let Some(d) = src.def else { continue };
                        let Instruction::NewInstance { class: binder, .. } = view.ins(d) else { continue };
                        let init = calls_on(&view, src, k, binder)
                            .into_iter()
                            .find(|c| view.ins(*c).as_invoke().is_some_and(|(_, m)| m.is_constructor()));
                        let Some(c) = init else { continue };
                        let Some((ops, m)) = view.ins(c).invoke_operands() else { continue };
                        for (i, p) in m.params.iter().enumerate() {
                            // outer-instance references carry no data of their own
                            if p == &class.descriptor() {
                                continue;
                            }
                            values.push(classify_value(app, cx, &ev, c, ops[i + 1]));
                        }
                    }
                }
                values.sort();
                values.dedup();
                out.push(ResultChannelDecl::ServiceBinder { component: component.clone(), values });
            }
        }
    }
    out
}
