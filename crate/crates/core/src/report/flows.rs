//! Intra-component flows: the input the reporting phase joins with the
//! database, plus a small taint pass that derives them from fixture apps.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GetPutCompatTable, SourceSinkCatalog};
use crate::apk::{DecodedApp, FieldRef, Instruction, InvokeKind, Reg, SmaliClass, SmaliMethod};
use crate::cfg::MethodView;
use crate::extract::{owning_component, receive_via, CodeLocation, ReceiveVia, UNRESOLVED_ACTION};
use crate::strings::{StringEvaluator, DEFAULT_CANDIDATE_CAP};

/// Where the data of a flow enters the component.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowSource {
    /// The result of an extra getter on a received intent or its bundle.
    GetExtra {
        signature: String,
        key: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        via: Option<ReceiveVia>,
    },
    /// A sensitive API called in the component itself.
    DirectSource { signature: String },
    /// The binder handed to a service connection callback.
    BoundService { signature: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowSink {
    pub signature: String,
    pub location: CodeLocation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntraFlow {
    pub app: String,
    pub component: String,
    pub source: FlowSource,
    pub sink: FlowSink,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub via: Vec<CodeLocation>,
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
}

/// Reads a flows file: one JSON record per line.
pub fn read_flows(path: &Path) -> Result<Vec<IntraFlow>, FlowError> {
    let text = fs::read_to_string(path).map_err(|source| FlowError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FlowError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_flows(path: &Path, flows: &[IntraFlow]) -> Result<(), FlowError> {
    let mut out = String::new();
    for f in flows {
        out.push_str(&serde_json::to_string(f).expect("flow serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| FlowError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Taint {
    Get { signature: String, key: String, via: ReceiveVia },
    Source(String),
    Binder(String),
}

type Labels = BTreeSet<Taint>;
type State = BTreeMap<Reg, Labels>;

fn is_builder(class: &str) -> bool {
    matches!(class, "Ljava/lang/StringBuilder;" | "Ljava/lang/StringBuffer;")
}

struct TaintPass<'a> {
    app: &'a DecodedApp,
    catalog: &'a SourceSinkCatalog,
    compat: &'a GetPutCompatTable,
}

impl TaintPass<'_> {
    fn labels_of(state: &State, regs: &[Reg]) -> Labels {
        regs.iter().filter_map(|r| state.get(r)).flatten().cloned().collect()
    }

    /// Labels of the value an invoke at `call` returns.
    fn call_result(&self, view: &MethodView<'_>, ev: &StringEvaluator<'_, '_>, call: usize, state: &State) -> Labels {
        let Some((ops, m)) = view.ins(call).invoke_operands() else { return Labels::new() };
        if self.catalog.is_source(m) {
            return Labels::from([Taint::Source(m.to_string())]);
        }
        let is_static = matches!(view.ins(call), Instruction::Invoke { kind: InvokeKind::Static, .. });
        if let Some(sig) = self.compat.get_signature(m).filter(|_| !is_static && ops.len() >= 2) {
            let via = receive_via(self.app, view, call, ops[0]);
            let keys: Vec<String> = match ev.eval_at(call, ops[1]).candidates() {
                Some(c) => c.iter().cloned().collect(),
                None => vec![UNRESOLVED_ACTION.to_string()],
            };
            return keys.into_iter().map(|key| Taint::Get { signature: sig.to_string(), key, via }).collect();
        }
        Self::labels_of(state, &ops)
    }

    fn transfer(
        &self,
        view: &MethodView<'_>,
        ev: &StringEvaluator<'_, '_>,
        k: usize,
        state: &State,
        fields: &mut BTreeMap<FieldRef, Labels>,
    ) -> State {
        let mut out = state.clone();
        let ins = view.ins(k);
        let set = |out: &mut State, r: Reg, l: Labels| {
            if l.is_empty() {
                out.remove(&r);
            } else {
                out.insert(r, l);
            }
        };
        match ins {
            Instruction::MoveResult { dst, .. } if k > 0 => {
                let l = self.call_result(view, ev, k - 1, state);
                set(&mut out, *dst, l);
            }
            Instruction::Move { dst, src, .. } => set(&mut out, *dst, state.get(src).cloned().unwrap_or_default()),
            Instruction::ArrayGet { dst, array, .. } => {
                set(&mut out, *dst, state.get(array).cloned().unwrap_or_default())
            }
            Instruction::ArrayPut { src, array, .. } => {
                let mut l = state.get(array).cloned().unwrap_or_default();
                l.extend(state.get(src).cloned().unwrap_or_default());
                set(&mut out, *array, l);
            }
            Instruction::InstanceGet { dst, field, .. } | Instruction::StaticGet { dst, field } => {
                set(&mut out, *dst, fields.get(field).cloned().unwrap_or_default())
            }
            Instruction::InstancePut { src, field, .. } | Instruction::StaticPut { src, field } => {
                if field.class == view.class.descriptor() {
                    if let Some(l) = state.get(src) {
                        fields.entry(field.clone()).or_default().extend(l.iter().cloned());
                    }
                }
            }
            Instruction::Invoke { kind, method, .. } if *kind != InvokeKind::Static => {
                let mutates = method.is_constructor() || (is_builder(&method.class) && method.name != "toString");
                if mutates {
                    if let Some((ops, _)) = ins.invoke_operands() {
                        let mut l = state.get(&ops[0]).cloned().unwrap_or_default();
                        l.extend(Self::labels_of(state, &ops[1..]));
                        set(&mut out, ops[0], l);
                    }
                }
            }
            other => {
                if let Some(d) = other.def() {
                    out.remove(&d);
                }
            }
        }
        out
    }

    /// Fixed point over one method; returns the state before each
    /// instruction.
    fn run_method<'m>(
        &self,
        class: &'m SmaliClass,
        method: &'m SmaliMethod,
        fields: &mut BTreeMap<FieldRef, Labels>,
    ) -> (MethodView<'m>, Vec<Option<State>>) {
        let view = MethodView::new(class, method);
        let n = view.len();
        let mut states: Vec<Option<State>> = vec![None; n];
        if n == 0 {
            return (view, states);
        }
        let mut entry = State::new();
        if let Some(binder) = binder_param(method) {
            let reg = method.param_registers()[binder];
            let api = format!("{}->{}", class.descriptor(), method.signature());
            entry.insert(reg, Labels::from([Taint::Binder(api)]));
        }
        states[0] = Some(entry);
        let ev = StringEvaluator::new(&view, &self.app.classes, DEFAULT_CANDIDATE_CAP);
        let mut work = vec![0usize];
        while let Some(k) = work.pop() {
            let Some(state) = states[k].clone() else { continue };
            let out = self.transfer(&view, &ev, k, &state, fields);
            for &s in view.cfg.succs(k) {
                let changed = match &mut states[s] {
                    slot @ None => {
                        *slot = Some(out.clone());
                        true
                    }
                    Some(existing) => {
                        let mut changed = false;
                        for (r, l) in &out {
                            let e = existing.entry(*r).or_default();
                            let before = e.len();
                            e.extend(l.iter().cloned());
                            changed |= e.len() != before;
                        }
                        changed
                    }
                };
                if changed {
                    work.push(s);
                }
            }
        }
        (view, states)
    }
}

/// `onServiceConnected(ComponentName, IBinder)`: index of the binder among
/// the incoming registers.
fn binder_param(method: &SmaliMethod) -> Option<usize> {
    let p: Vec<&str> = method.params.iter().map(String::as_str).collect();
    (!method.is_static()
        && method.name == "onServiceConnected"
        && p == ["Landroid/content/ComponentName;", "Landroid/os/IBinder;"])
    .then_some(2)
}

/// Intra-procedural taint over every method of the app: data from extra
/// getters, cataloged sources and service binders, propagated through
/// moves, calls on tainted values, builders, arrays and same-class fields,
/// into cataloged sink arguments. Not path-sensitive; a constant written
/// over a tainted register clears it.
pub fn derive_fixture_flows(
    app: &DecodedApp,
    catalog: &SourceSinkCatalog,
    compat: &GetPutCompatTable,
) -> Vec<IntraFlow> {
    let pass = TaintPass { app, catalog, compat };
    let mut flows = BTreeSet::new();
    for class in &app.classes {
        let mut fields: BTreeMap<FieldRef, Labels> = BTreeMap::new();
        // field summaries feed other methods of the class; iterate until stable
        for _ in 0..8 {
            let before = fields.clone();
            for m in &class.methods {
                pass.run_method(class, m, &mut fields);
            }
            if fields == before {
                break;
            }
        }
        let component = owning_component(app, &class.class_name);
        for method in &class.methods {
            let (view, states) = pass.run_method(class, method, &mut fields);
            for (k, ins) in method.instructions.iter().enumerate() {
                let Some((ops, m)) = ins.invoke_operands() else { continue };
                if !catalog.is_sink(m) {
                    continue;
                }
                let Some(state) = &states[k] else { continue };
                let args = if matches!(ins, Instruction::Invoke { kind: InvokeKind::Static, .. }) {
                    &ops[..]
                } else {
                    &ops[1..]
                };
                for label in TaintPass::labels_of(state, args) {
                    let source = match label {
                        Taint::Get { signature, key, via } => FlowSource::GetExtra { signature, key, via: Some(via) },
                        Taint::Source(signature) => FlowSource::DirectSource { signature },
                        Taint::Binder(signature) => FlowSource::BoundService { signature },
                    };
                    flows.insert(IntraFlow {
                        app: app.package_name.clone(),
                        component: component.clone(),
                        source,
                        sink: FlowSink {
                            signature: m.to_string(),
                            location: CodeLocation::new(class.class_name.clone(), view.method.signature(), k),
                        },
                        via: Vec::new(),
                    });
                }
            }
        }
    }
    flows.into_iter().collect()
}
