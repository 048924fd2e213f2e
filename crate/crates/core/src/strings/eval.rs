//! Backward, on-demand evaluation of the string held by a register.
//!
//! Definitions are found by walking the CFG backwards. Builder mutations
//! (`append`, `<init>`) count as definitions of the receiver register, so a
//! `StringBuilder` chain evaluates the same way a chain of `concat` does.

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};

use super::{eval_list_get, ArgKind, ListModel, StringOp, StringValue, UnresolvedReason};
use crate::apk::{descriptor_to_class, Instruction, InvokeKind, MethodRef, Reg, SmaliClass, SmaliMethod};
use crate::cfg::{MethodView, Walk};

/// Nesting allowed for helper calls and field-store lookups.
const MAX_DEPTH: usize = 2;
/// Register evaluations allowed per evaluator before giving up.
const STEP_BUDGET: usize = 20_000;

const STRING: &str = "Ljava/lang/String;";
const BUILDERS: &[&str] = &["Ljava/lang/StringBuilder;", "Ljava/lang/StringBuffer;"];
const LISTS: &[&str] = &[
    "Ljava/util/List;",
    "Ljava/util/ArrayList;",
    "Ljava/util/LinkedList;",
    "Ljava/util/Vector;",
    "Ljava/util/Collection;",
    "Ljava/util/Deque;",
    "Ljava/util/AbstractList;",
];

/// APIs whose results depend on the environment rather than on code.
const DYNAMIC_INPUT_CLASSES: &[&str] = &[
    "Ljava/io/",
    "Ljava/util/Scanner;",
    "Ljava/util/Properties;",
    "Ljava/util/Random;",
    "Landroid/content/SharedPreferences;",
    "Landroid/widget/",
    "Landroid/text/Editable;",
    "Landroid/content/Intent;",
    "Landroid/os/Bundle;",
    "Landroid/database/Cursor;",
    "Landroid/telephony/",
    "Landroid/location/",
    "Landroid/net/Uri;",
    "Landroid/provider/Settings",
];

fn is_dynamic_input(m: &MethodRef) -> bool {
    DYNAMIC_INPUT_CLASSES.iter().any(|p| m.class.starts_with(p))
        || (m.class == "Ljava/lang/System;" && matches!(m.name.as_str(), "getProperty" | "getenv"))
        || m.name.starts_with("read")
}

fn is_builder(class: &str) -> bool {
    BUILDERS.contains(&class)
}

fn is_list(class: &str) -> bool {
    LISTS.contains(&class)
}

/// Builder methods that change the builder's contents.
fn is_builder_mutator(name: &str) -> bool {
    matches!(
        name,
        "<init>" | "append" | "insert" | "reverse" | "delete" | "deleteCharAt" | "replace" | "setCharAt" | "setLength"
    )
}

/// Evaluates string registers within one method. Results are memoized per
/// (instruction, register).
pub struct StringEvaluator<'v, 'a> {
    view: &'v MethodView<'a>,
    app_classes: &'a [SmaliClass],
    cap: usize,
    params: Option<Vec<StringValue>>,
    depth: usize,
    memo: RefCell<HashMap<(usize, Reg), StringValue>>,
    active: RefCell<HashSet<(usize, Reg)>>,
    steps: Cell<usize>,
}

impl<'v, 'a> StringEvaluator<'v, 'a> {
    /// `app_classes` is used to resolve constants held in other classes'
    /// static fields; pass an empty slice to stay within the method's class.
    pub fn new(view: &'v MethodView<'a>, app_classes: &'a [SmaliClass], cap: usize) -> Self {
        StringEvaluator {
            view,
            app_classes,
            cap,
            params: None,
            depth: 0,
            memo: RefCell::default(),
            active: RefCell::default(),
            steps: Cell::new(0),
        }
    }

    /// An evaluator for a callee whose parameters hold known values.
    pub fn with_params(
        view: &'v MethodView<'a>,
        app_classes: &'a [SmaliClass],
        cap: usize,
        params: Vec<StringValue>,
        depth: usize,
    ) -> Self {
        StringEvaluator { params: Some(params), depth, ..StringEvaluator::new(view, app_classes, cap) }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn view(&self) -> &'v MethodView<'a> {
        self.view
    }

    fn join(&self, acc: Option<StringValue>, v: StringValue) -> Option<StringValue> {
        Some(match acc {
            None => v,
            Some(a) => a.union(v, self.cap),
        })
    }

    /// True if instruction `i` (re)defines the string content of `reg`.
    fn is_def(&self, i: usize, reg: Reg) -> bool {
        let ins = self.view.ins(i);
        if ins.defines(reg) {
            return true;
        }
        match ins {
            Instruction::Invoke { kind, args, method, .. } if *kind != InvokeKind::Static => {
                args.first() == Some(&reg)
                    && (method.is_constructor() || (is_builder(&method.class) && is_builder_mutator(&method.name)))
            }
            _ => false,
        }
    }

    /// Instructions defining `reg` that reach `point`, and whether the method
    /// entry reaches it undefined.
    pub fn reaching_defs(&self, point: usize, reg: Reg) -> (Vec<usize>, bool) {
        let mut defs = Vec::new();
        let entry = self.view.cfg.walk_back(point, false, |i| {
            if self.is_def(i, reg) {
                defs.push(i);
                Walk::Stop
            } else {
                Walk::Continue
            }
        });
        defs.sort_unstable();
        (defs, entry)
    }

    /// Value of `reg` just before instruction `point` executes.
    pub fn eval_at(&self, point: usize, reg: Reg) -> StringValue {
        let key = (point, reg);
        if let Some(v) = self.memo.borrow().get(&key) {
            return v.clone();
        }
        if self.active.borrow().contains(&key) || self.steps.get() >= STEP_BUDGET {
            return StringValue::Unresolved(UnresolvedReason::BudgetExceeded);
        }
        self.steps.set(self.steps.get() + 1);
        self.active.borrow_mut().insert(key);

        let (defs, entry) = self.reaching_defs(point, reg);
        let mut acc = None;
        for d in defs {
            let v = self.eval_def(d, reg);
            acc = self.join(acc, v);
        }
        if entry {
            acc = self.join(acc, self.param_value(reg));
        }
        let v = acc.unwrap_or(StringValue::Unresolved(UnresolvedReason::UnmodeledOp));

        self.active.borrow_mut().remove(&key);
        self.memo.borrow_mut().insert(key, v.clone());
        v
    }

    fn param_value(&self, reg: Reg) -> StringValue {
        match (self.view.method.param_index(reg), &self.params) {
            (Some(i), Some(params)) => {
                params.get(i).cloned().unwrap_or(StringValue::Unresolved(UnresolvedReason::DynamicInput))
            }
            (Some(_), None) => StringValue::Unresolved(UnresolvedReason::DynamicInput),
            (None, _) => StringValue::Unresolved(UnresolvedReason::UnmodeledOp),
        }
    }

    /// Value of `reg` right after its definition at `d`.
    fn eval_def(&self, d: usize, reg: Reg) -> StringValue {
        let unmodeled = StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        match self.view.ins(d) {
            Instruction::ConstString { value, .. } => StringValue::constant(value.clone()),
            Instruction::Const { value, .. } => StringValue::constant(value.to_string()),
            Instruction::ConstClass { class, .. } => StringValue::constant(descriptor_to_class(class)),
            Instruction::Move { src, .. } => self.eval_at(d, *src),
            Instruction::MoveResult { .. } if d > 0 => match self.view.ins(d - 1).invoke_operands() {
                Some((ops, m)) => self.eval_call(d - 1, &ops, m),
                None => unmodeled,
            },
            ins @ Instruction::Invoke { .. } => match ins.invoke_operands() {
                Some((ops, m)) if ops.first() == Some(&reg) => self.eval_mutation(d, &ops, m),
                _ => unmodeled,
            },
            Instruction::StaticGet { field, .. } | Instruction::InstanceGet { field, .. } => {
                self.eval_field(&field.class, &field.name, &field.ty)
            }
            Instruction::ArrayGet { array, index, .. } => {
                let list = self.eval_list(d, *array);
                eval_list_get(&list, &self.eval_at(d, *index), self.cap)
            }
            _ => unmodeled,
        }
    }

    fn args_from(&self, at: usize, regs: &[Reg]) -> Vec<StringValue> {
        regs.iter().map(|r| self.eval_at(at, *r)).collect()
    }

    /// Builder/String constructor or builder mutator applied to `ops[0]`.
    fn eval_mutation(&self, i: usize, ops: &[Reg], m: &MethodRef) -> StringValue {
        let unmodeled = StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        let params: Vec<&str> = m.params.iter().map(String::as_str).collect();
        if is_builder(&m.class) || m.class == STRING {
            if m.is_constructor() {
                return match params.as_slice() {
                    [] | ["I"] => StringValue::constant(""),
                    ["Ljava/lang/String;"
                    | "Ljava/lang/CharSequence;"
                    | "Ljava/lang/StringBuilder;"
                    | "Ljava/lang/StringBuffer;"] => self.eval_at(i, ops[1]),
                    _ => unmodeled,
                };
            }
            if is_builder(&m.class) && m.name == "append" && params.len() == 1 {
                if params[0].starts_with('[') {
                    return unmodeled;
                }
                let recv = self.eval_at(i, ops[0]);
                let arg = self.eval_at(i, ops[1]);
                return StringOp::Append(ArgKind::from_descriptor(params[0])).apply(Some(&recv), &[arg], self.cap);
            }
        }
        unmodeled
    }

    /// Return value of the invoke at `i`.
    fn eval_call(&self, i: usize, ops: &[Reg], m: &MethodRef) -> StringValue {
        let unmodeled = StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        let name = m.name.as_str();
        let params: Vec<&str> = m.params.iter().map(String::as_str).collect();

        if m.class == STRING {
            return self.eval_string_api(i, ops, name, &params);
        }
        if is_builder(&m.class) {
            return match name {
                "toString" => self.eval_at(i, ops[0]),
                "append" => self.eval_mutation(i, ops, m),
                _ => unmodeled,
            };
        }
        if matches!(m.class.as_str(), "Ljava/lang/Integer;" | "Ljava/lang/Long;") {
            return match (name, params.as_slice()) {
                ("toString" | "valueOf", ["I" | "J"]) => self.eval_at(i, ops[0]),
                ("parseInt" | "parseLong" | "valueOf", ["Ljava/lang/String;"]) => {
                    let v = self.eval_at(i, ops[0]);
                    match v.as_ints() {
                        Some(ns) => StringValue::from_candidates(ns.iter().map(|n| n.to_string()).collect(), self.cap),
                        None if v.is_resolved() => unmodeled,
                        None => v,
                    }
                }
                _ => unmodeled,
            };
        }
        if m.class == "Ljava/lang/Class;" {
            return match name {
                "getName" | "getCanonicalName" => self.eval_at(i, ops[0]),
                "getSimpleName" => match self.eval_at(i, ops[0]) {
                    StringValue::Resolved(c) => StringValue::from_candidates(
                        c.iter().map(|s| s.rsplit(['.', '$']).next().unwrap_or(s).to_string()).collect(),
                        self.cap,
                    ),
                    u => u,
                },
                _ => unmodeled,
            };
        }
        if is_list(&m.class) {
            return match (name, params.as_slice()) {
                ("get", ["I"]) => eval_list_get(&self.eval_list(i, ops[0]), &self.eval_at(i, ops[1]), self.cap),
                ("getFirst" | "peekFirst" | "peek" | "element", []) => {
                    eval_list_get(&self.eval_list(i, ops[0]), &StringValue::constant("0"), self.cap)
                }
                _ => unmodeled,
            };
        }
        if m.class == self.view.class.descriptor() {
            if let Some(v) = self.eval_helper(i, ops, m) {
                return v;
            }
        }
        if name == "toString" && params.is_empty() && !ops.is_empty() {
            return self.eval_at(i, ops[0]);
        }
        if is_dynamic_input(m) {
            return StringValue::Unresolved(UnresolvedReason::DynamicInput);
        }
        unmodeled
    }

    fn eval_string_api(&self, i: usize, ops: &[Reg], name: &str, params: &[&str]) -> StringValue {
        let unmodeled = StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        let cap = self.cap;
        let with_recv = |op: StringOp, arg_regs: &[Reg]| {
            let recv = self.eval_at(i, ops[0]);
            op.apply(Some(&recv), &self.args_from(i, arg_regs), cap)
        };
        match (name, params) {
            ("valueOf", [p]) if !p.starts_with('[') => {
                StringOp::ValueOf(ArgKind::from_descriptor(p)).apply(None, &[self.eval_at(i, ops[0])], cap)
            }
            ("format", ["Ljava/lang/String;", "[Ljava/lang/Object;"]) => self.eval_format(i, ops[0], ops[1]),
            ("format", ["Ljava/util/Locale;", "Ljava/lang/String;", "[Ljava/lang/Object;"]) => {
                self.eval_format(i, ops[1], ops[2])
            }
            ("concat", [_]) => with_recv(StringOp::Concat, &ops[1..]),
            ("substring", ["I"] | ["I", "I"]) => with_recv(StringOp::Substring, &ops[1..]),
            ("toLowerCase", _) => with_recv(StringOp::ToLowerCase, &[]),
            ("toUpperCase", _) => with_recv(StringOp::ToUpperCase, &[]),
            ("trim", []) => with_recv(StringOp::Trim, &[]),
            ("replace", ["C", "C"]) => with_recv(StringOp::ReplaceChar, &ops[1..]),
            ("replace", ["Ljava/lang/CharSequence;", "Ljava/lang/CharSequence;"]) => {
                with_recv(StringOp::ReplaceSeq, &ops[1..])
            }
            ("toString" | "intern", []) => with_recv(StringOp::ToString, &[]),
            _ => unmodeled,
        }
    }

    fn eval_format(&self, i: usize, fmt: Reg, array: Reg) -> StringValue {
        let Some(values) = self.eval_list(i, array).values() else {
            return StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        };
        let mut args = vec![self.eval_at(i, fmt)];
        args.extend(values);
        StringOp::Format.apply(None, &args, self.cap)
    }

    /// Same-class helper returning a string, evaluated with the caller's
    /// argument values bound to its parameters.
    fn eval_helper(&self, i: usize, ops: &[Reg], m: &MethodRef) -> Option<StringValue> {
        let callee = self.view.class.method(&format!("{}{}", m.name, m.descriptor()))?;
        if self.depth >= MAX_DEPTH {
            return Some(StringValue::Unresolved(UnresolvedReason::BudgetExceeded));
        }
        let args = self.args_from(i, ops);
        let view = MethodView::new(self.view.class, callee);
        let sub = StringEvaluator::with_params(&view, self.app_classes, self.cap, args, self.depth + 1);
        let mut acc = None;
        for (k, ins) in callee.instructions.iter().enumerate() {
            if let Instruction::Return { value: Some(r), .. } = ins {
                acc = self.join(acc, sub.eval_at(k, *r));
            }
        }
        Some(acc.unwrap_or(StringValue::Unresolved(UnresolvedReason::UnmodeledOp)))
    }

    fn find_class(&self, desc: &str) -> Option<&'a SmaliClass> {
        if self.view.class.descriptor() == desc {
            return Some(self.view.class);
        }
        self.app_classes.iter().find(|c| c.descriptor() == desc)
    }

    /// Union of a field's declared initial value and every value stored to
    /// it by its own class.
    fn eval_field(&self, class_desc: &str, name: &str, ty: &str) -> StringValue {
        let Some(class) = self.find_class(class_desc) else {
            return StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        };
        let mut acc = None;
        if let Some(init) = class.fields.iter().find(|f| f.name == name).and_then(|f| f.initial_string.clone()) {
            acc = Some(StringValue::constant(init));
        }
        for method in &class.methods {
            let stores: Vec<(usize, Reg)> = method
                .instructions
                .iter()
                .enumerate()
                .filter_map(|(k, ins)| match ins {
                    Instruction::StaticPut { src, field } | Instruction::InstancePut { src, field, .. }
                        if field.class == class_desc && field.name == name && field.ty == ty =>
                    {
                        Some((k, *src))
                    }
                    _ => None,
                })
                .collect();
            if stores.is_empty() {
                continue;
            }
            if self.depth >= MAX_DEPTH {
                return StringValue::Unresolved(UnresolvedReason::BudgetExceeded);
            }
            let v = self.eval_stores(class, method, &stores);
            acc = self.join(acc, v);
        }
        acc.unwrap_or(StringValue::Unresolved(UnresolvedReason::UnmodeledOp))
    }

    fn eval_stores(&self, class: &'a SmaliClass, method: &'a SmaliMethod, stores: &[(usize, Reg)]) -> StringValue {
        let view = MethodView::new(class, method);
        let mut sub = StringEvaluator::new(&view, self.app_classes, self.cap);
        sub.depth = self.depth + 1;
        let mut acc = None;
        for (k, src) in stores {
            acc = self.join(acc, sub.eval_at(*k, *src));
        }
        acc.unwrap_or(StringValue::Unresolved(UnresolvedReason::UnmodeledOp))
    }

    /// Slot model of the list or array in `reg` just before `point`, built
    /// by a linear scan from its allocation. Anything but straight-line
    /// code between allocation and use, or any escape of the reference,
    /// makes the model incomplete.
    pub fn eval_list(&self, point: usize, reg: Reg) -> ListModel {
        let mut defs = Vec::new();
        let entry = self.view.cfg.walk_back(point, false, |i| {
            if self.view.ins(i).defines(reg) {
                defs.push(i);
                Walk::Stop
            } else {
                Walk::Continue
            }
        });
        let [d] = defs.as_slice() else { return ListModel::unknown() };
        let d = *d;
        if entry || !self.view.straight_line(d, point) {
            return ListModel::unknown();
        }
        let mut model = ListModel { slots: Default::default(), complete: true };
        let array_size = match self.view.ins(d) {
            Instruction::NewInstance { class, .. } if is_list(class) => None,
            Instruction::NewArray { size, .. } => match self.eval_at(d, *size).as_ints().as_deref() {
                Some([n]) if *n >= 0 => Some(*n as usize),
                _ => return ListModel::unknown(),
            },
            _ => return ListModel::unknown(),
        };
        let as_index = |k: usize, r: Reg| -> Option<usize> {
            match self.eval_at(k, r).as_ints().as_deref() {
                Some([n]) if *n >= 0 => Some(*n as usize),
                _ => None,
            }
        };
        for k in d + 1..point {
            let ins = self.view.ins(k);
            if !ins.uses().contains(&reg) {
                continue;
            }
            let ok = match ins {
                Instruction::ArrayPut { src, array, index } if *array == reg && *src != reg => {
                    match (as_index(k, *index), array_size) {
                        (Some(idx), Some(n)) if idx < n => {
                            model.slots.insert(idx, self.eval_at(k, *src));
                            true
                        }
                        _ => false,
                    }
                }
                Instruction::ArrayGet { array, index, .. } => *array == reg && *index != reg,
                Instruction::Opaque { opcode, .. } => matches!(opcode.as_str(), "check-cast" | "array-length"),
                Instruction::Invoke { .. } => match ins.invoke_operands() {
                    Some((ops, m)) if ops.first() == Some(&reg) && !ops[1..].contains(&reg) && is_list(&m.class) => {
                        self.apply_list_call(k, &ops, m, &mut model, &as_index)
                    }
                    _ => false,
                },
                _ => false,
            };
            if !ok {
                return ListModel::unknown();
            }
        }
        model
    }

    fn apply_list_call(
        &self,
        k: usize,
        ops: &[Reg],
        m: &MethodRef,
        model: &mut ListModel,
        as_index: &dyn Fn(usize, Reg) -> Option<usize>,
    ) -> bool {
        let params: Vec<&str> = m.params.iter().map(String::as_str).collect();
        match (m.name.as_str(), params.as_slice()) {
            ("<init>", [] | ["I"]) => true,
            ("add" | "addLast" | "offer" | "offerLast", [_]) => {
                model.push(self.eval_at(k, ops[1]));
                true
            }
            ("addFirst" | "push" | "offerFirst", [_]) => {
                model.insert(0, self.eval_at(k, ops[1]));
                true
            }
            ("add", ["I", _]) => match as_index(k, ops[1]) {
                Some(idx) if idx <= model.len() => {
                    model.insert(idx, self.eval_at(k, ops[2]));
                    true
                }
                _ => false,
            },
            ("set", ["I", _]) => match as_index(k, ops[1]) {
                Some(idx) if idx < model.len() => {
                    model.slots.insert(idx, self.eval_at(k, ops[2]));
                    true
                }
                _ => false,
            },
            ("clear", []) => {
                model.slots.clear();
                true
            }
            (
                "get" | "size" | "isEmpty" | "contains" | "indexOf" | "getFirst" | "getLast" | "peek" | "peekFirst",
                _,
            ) => true,
            _ => false,
        }
    }
}

/// Evaluates `reg` just before `index` in `method` of `class`.
pub fn eval_string(class: &SmaliClass, method: &SmaliMethod, index: usize, reg: Reg, cap: usize) -> StringValue {
    let view = MethodView::new(class, method);
    StringEvaluator::new(&view, &[], cap).eval_at(index, reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apk::parse_smali_str;
    use crate::strings::DEFAULT_CANDIDATE_CAP;

    fn class(body: &str) -> SmaliClass {
        let src = format!(
            ".class public Lt/C;\n.super Ljava/lang/Object;\n.field static final K:Ljava/lang/String; = \"konst\"\n{}",
            body
        );
        parse_smali_str(&src).unwrap()
    }

    /// Evaluates the register returned by the method's last `return-object`.
    fn eval_return(c: &SmaliClass, name: &str) -> StringValue {
        let m = c.methods_named(name).next().unwrap();
        let (idx, reg) = m
            .instructions
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, ins)| match ins {
                Instruction::Return { value: Some(r), .. } => Some((i, *r)),
                _ => None,
            })
            .unwrap();
        let view = MethodView::new(c, m);
        let classes = std::slice::from_ref(c);
        StringEvaluator::new(&view, classes, DEFAULT_CANDIDATE_CAP).eval_at(idx, reg)
    }

    fn set(xs: &[&str]) -> StringValue {
        StringValue::Resolved(xs.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn direct_constant() {
        let c = class(".method static f()Ljava/lang/String;\n.registers 1\nconst-string v0, \"data\"\nreturn-object v0\n.end method\n");
        assert_eq!(eval_return(&c, "f"), StringValue::constant("data"));
    }

    #[test]
    fn builder_chain() {
        let c = class(
            r#".method static f()Ljava/lang/String;
.registers 3
new-instance v0, Ljava/lang/StringBuilder;
invoke-direct {v0}, Ljava/lang/StringBuilder;-><init>()V
const-string v1, "action_"
invoke-virtual {v0, v1}, Ljava/lang/StringBuilder;->append(Ljava/lang/String;)Ljava/lang/StringBuilder;
move-result-object v0
const-string v1, "test2"
invoke-virtual {v0, v1}, Ljava/lang/StringBuilder;->append(Ljava/lang/String;)Ljava/lang/StringBuilder;
invoke-virtual {v0}, Ljava/lang/StringBuilder;->toString()Ljava/lang/String;
move-result-object v2
return-object v2
.end method
"#,
        );
        assert_eq!(eval_return(&c, "f"), StringValue::constant("action_test2"));
    }

    #[test]
    fn branch_join() {
        let c = class(
            r#".method static f(I)Ljava/lang/String;
.registers 2
if-eqz p0, :else
const-string v0, "A"
goto :join
:else
const-string v0, "B"
:join
return-object v0
.end method
"#,
        );
        assert_eq!(eval_return(&c, "f"), set(&["A", "B"]));
    }

    #[test]
    fn file_input_is_dynamic() {
        let c = class(
            r#".method static f(Ljava/io/BufferedReader;)Ljava/lang/String;
.registers 2
invoke-virtual {p0}, Ljava/io/BufferedReader;->readLine()Ljava/lang/String;
move-result-object v0
return-object v0
.end method
"#,
        );
        assert_eq!(eval_return(&c, "f"), StringValue::Unresolved(UnresolvedReason::DynamicInput));
    }

    #[test]
    fn field_and_helper_and_list() {
        let c = class(
            r#".method static helper(Ljava/lang/String;)Ljava/lang/String;
.registers 3
const-string v0, ".ACTION"
invoke-virtual {p0, v0}, Ljava/lang/String;->concat(Ljava/lang/String;)Ljava/lang/String;
move-result-object v1
return-object v1
.end method
.method static f()Ljava/lang/String;
.registers 4
sget-object v0, Lt/C;->K:Ljava/lang/String;
invoke-static {v0}, Lt/C;->helper(Ljava/lang/String;)Ljava/lang/String;
move-result-object v0
new-instance v1, Ljava/util/LinkedList;
invoke-direct {v1}, Ljava/util/LinkedList;-><init>()V
const-string v2, "zero"
invoke-virtual {v1, v2}, Ljava/util/LinkedList;->add(Ljava/lang/Object;)Z
invoke-virtual {v1, v0}, Ljava/util/LinkedList;->add(Ljava/lang/Object;)Z
const/4 v3, 0x1
invoke-virtual {v1, v3}, Ljava/util/LinkedList;->get(I)Ljava/lang/Object;
move-result-object v2
check-cast v2, Ljava/lang/String;
return-object v2
.end method
"#,
        );
        assert_eq!(eval_return(&c, "f"), StringValue::constant("konst.ACTION"));
    }

    #[test]
    fn loop_growth_exceeds_budget() {
        let c = class(
            r#".method static f(I)Ljava/lang/String;
.registers 3
const-string v0, "x"
:top
if-eqz p0, :done
const-string v1, "y"
invoke-virtual {v0, v1}, Ljava/lang/String;->concat(Ljava/lang/String;)Ljava/lang/String;
move-result-object v0
goto :top
:done
return-object v0
.end method
"#,
        );
        assert!(!eval_return(&c, "f").is_resolved());
    }

    #[test]
    fn format_over_array() {
        let c = class(
            r#".method static f()Ljava/lang/String;
.registers 5
const/4 v0, 0x2
new-array v1, v0, [Ljava/lang/Object;
const/4 v2, 0x0
const-string v3, "id"
aput-object v3, v1, v2
const/4 v2, 0x1
const/16 v3, 0x7
invoke-static {v3}, Ljava/lang/Integer;->valueOf(I)Ljava/lang/Integer;
move-result-object v3
aput-object v3, v1, v2
const-string v4, "%s_%d"
invoke-static {v4, v1}, Ljava/lang/String;->format(Ljava/lang/String;[Ljava/lang/Object;)Ljava/lang/String;
move-result-object v0
return-object v0
.end method
"#,
        );
        assert_eq!(eval_return(&c, "f"), StringValue::constant("id_7"));
    }
}
