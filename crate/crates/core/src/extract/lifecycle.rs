use super::ReceiveVia;
use crate::apk::SmaliMethod;

const INTENT: &str = "Landroid/content/Intent;";

/// Lifecycle callbacks that are handed an intent: the position of that
/// parameter among the method's incoming registers (`this` is 0) and how
/// the intent arrived.
pub fn intent_param(method: &SmaliMethod) -> Option<(usize, ReceiveVia)> {
    if method.is_static() {
        return None;
    }
    let p: Vec<&str> = method.params.iter().map(String::as_str).collect();
    let via = match (method.name.as_str(), p.as_slice()) {
        ("onReceive", ["Landroid/content/Context;", INTENT]) => (2, ReceiveVia::Broadcast),
        ("onStartCommand", [INTENT, "I", "I"])
        | ("onStart", [INTENT, "I"])
        | ("onHandleIntent", [INTENT])
        | ("onBind", [INTENT])
        | ("onUnbind", [INTENT])
        | ("onRebind", [INTENT]) => (1, ReceiveVia::Service),
        ("onNewIntent", [INTENT]) => (1, ReceiveVia::Activity),
        ("onActivityResult", ["I", "I", INTENT]) => (3, ReceiveVia::ActivityResult),
        _ => return None,
    };
    Some(via)
}
