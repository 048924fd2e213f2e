use super::{CodeLocation, SenderApiCatalog, SenderSite};
use crate::apk::DecodedApp;
use crate::cfg::MethodView;
use crate::strings::StringEvaluator;

/// Every invoke of a cataloged sender API, ordered by class, method and
/// instruction index.
pub fn find_sender_sites(app: &DecodedApp, catalog: &SenderApiCatalog) -> Vec<SenderSite> {
    let mut sites = Vec::new();
    for class in &app.classes {
        for method in &class.methods {
            let mut view = None;
            for (i, ins) in method.instructions.iter().enumerate() {
                let Some((ops, m)) = ins.invoke_operands() else { continue };
                let Some(api) = catalog.lookup(m) else { continue };
                // operands carry the receiver first unless the call is static
                let shift = ops.len() - m.params.len();
                let request_code = api.request_code_arg.and_then(|a| {
                    let view = view.get_or_insert_with(|| MethodView::new(class, method));
                    let ev = StringEvaluator::new(view, &app.classes, 1);
                    match ev.eval_at(i, ops[a + shift]).as_ints().as_deref() {
                        Some([n]) => Some(*n),
                        _ => None,
                    }
                });
                sites.push(SenderSite {
                    location: CodeLocation::new(class.class_name.clone(), method.signature(), i),
                    channel: api.channel,
                    api: m.to_string(),
                    intent_reg: Some(ops[api.intent_arg + shift]),
                    request_code,
                });
            }
        }
    }
    sites
}
