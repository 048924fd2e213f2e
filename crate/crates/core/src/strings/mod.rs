//! Partial evaluation of string values: a finite candidate-set domain with
//! an explicit "unresolved" top, models of common `String`/`StringBuilder`
//! operations, and a slot model for lists and arrays.

mod eval;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{eval_string, StringEvaluator};

/// Default bound on the number of candidates a resolved value may carry.
pub const DEFAULT_CANDIDATE_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnresolvedReason {
    DynamicInput,
    UnmodeledOp,
    BudgetExceeded,
}

impl fmt::Display for UnresolvedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnresolvedReason::DynamicInput => "dynamic_input",
            UnresolvedReason::UnmodeledOp => "unmodeled_op",
            UnresolvedReason::BudgetExceeded => "budget_exceeded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StringValue {
    /// Non-empty set of possible values, never larger than the cap it was
    /// built with.
    Resolved(BTreeSet<String>),
    Unresolved(UnresolvedReason),
}

impl StringValue {
    pub fn constant(s: impl Into<String>) -> StringValue {
        StringValue::Resolved(BTreeSet::from([s.into()]))
    }

    /// Builds a resolved value, turning an empty set into
    /// `Unresolved(UnmodeledOp)` and an oversized one into
    /// `Unresolved(BudgetExceeded)`.
    pub fn from_candidates(candidates: BTreeSet<String>, cap: usize) -> StringValue {
        if candidates.is_empty() {
            StringValue::Unresolved(UnresolvedReason::UnmodeledOp)
        } else if candidates.len() > cap {
            StringValue::Unresolved(UnresolvedReason::BudgetExceeded)
        } else {
            StringValue::Resolved(candidates)
        }
    }

    pub fn unresolved(reason: UnresolvedReason) -> StringValue {
        StringValue::Unresolved(reason)
    }

    pub fn is_resolved(&self) -> bool {
        matches!(self, StringValue::Resolved(_))
    }

    pub fn candidates(&self) -> Option<&BTreeSet<String>> {
        match self {
            StringValue::Resolved(c) => Some(c),
            StringValue::Unresolved(_) => None,
        }
    }

    /// The single candidate, if there is exactly one.
    pub fn single(&self) -> Option<&str> {
        match self {
            StringValue::Resolved(c) if c.len() == 1 => c.iter().next().map(String::as_str),
            _ => None,
        }
    }

    /// Path-insensitive join. Unresolved absorbs; the left reason wins when
    /// both sides are unresolved.
    pub fn union(self, other: StringValue, cap: usize) -> StringValue {
        match (self, other) {
            (StringValue::Resolved(mut a), StringValue::Resolved(b)) => {
                a.extend(b);
                StringValue::from_candidates(a, cap)
            }
            (u @ StringValue::Unresolved(_), _) | (_, u @ StringValue::Unresolved(_)) => u,
        }
    }

    /// Integer candidates, when every candidate parses as one.
    pub fn as_ints(&self) -> Option<Vec<i64>> {
        self.candidates()?.iter().map(|s| s.parse().ok()).collect()
    }
}

impl fmt::Display for StringValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StringValue::Resolved(c) => {
                let parts: Vec<String> = c.iter().map(|s| format!("{:?}", s)).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            StringValue::Unresolved(r) => write!(f, "unresolved({})", r),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StringEvalError {
    #[error("operation `{0}` is not modeled")]
    UnmodeledOp(String),
}

/// How an argument is rendered when appended or converted with `valueOf`.
/// Integer-typed values travel as their decimal spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    Str,
    Int,
    Char,
    Bool,
}

impl ArgKind {
    pub fn from_descriptor(desc: &str) -> ArgKind {
        match desc {
            "I" | "J" | "S" | "B" | "F" | "D" => ArgKind::Int,
            "C" => ArgKind::Char,
            "Z" => ArgKind::Bool,
            _ => ArgKind::Str,
        }
    }

    fn render(self, v: &str) -> Option<String> {
        match self {
            ArgKind::Str | ArgKind::Int => Some(v.to_string()),
            ArgKind::Char => {
                let code: u32 = v.parse().ok()?;
                char::from_u32(code).map(String::from)
            }
            ArgKind::Bool => Some(match v {
                "0" | "false" => "false".into(),
                _ => "true".into(),
            }),
        }
    }
}

/// The modeled string operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StringOp {
    /// `String.concat` and `+`.
    Concat,
    /// `StringBuilder.append` / `StringBuffer.append`.
    Append(ArgKind),
    /// `substring(begin)` or `substring(begin, end)`, chosen by arity.
    Substring,
    ToLowerCase,
    ToUpperCase,
    Trim,
    ReplaceChar,
    ReplaceSeq,
    /// `String.valueOf(x)`; static, no receiver.
    ValueOf(ArgKind),
    /// `toString()` on strings and builders.
    ToString,
    /// `String.format(fmt, args...)` restricted to `%s`/`%d`; static.
    Format,
}

impl StringOp {
    /// Looks an operation up by its source-level name.
    pub fn from_name(name: &str) -> Result<StringOp, StringEvalError> {
        Ok(match name {
            "concat" | "+" => StringOp::Concat,
            "append" => StringOp::Append(ArgKind::Str),
            "substring" => StringOp::Substring,
            "toLowerCase" => StringOp::ToLowerCase,
            "toUpperCase" => StringOp::ToUpperCase,
            "trim" => StringOp::Trim,
            "replace" => StringOp::ReplaceSeq,
            "replaceChar" => StringOp::ReplaceChar,
            "valueOf" => StringOp::ValueOf(ArgKind::Str),
            "toString" => StringOp::ToString,
            "format" => StringOp::Format,
            other => return Err(StringEvalError::UnmodeledOp(other.to_string())),
        })
    }

    pub fn is_static(self) -> bool {
        matches!(self, StringOp::ValueOf(_) | StringOp::Format)
    }

    fn apply_concrete(self, receiver: Option<&str>, args: &[&str]) -> Option<String> {
        let recv = || receiver;
        Some(match self {
            StringOp::Concat => format!("{}{}", recv()?, args.first()?),
            StringOp::Append(kind) => format!("{}{}", recv()?, kind.render(args.first()?)?),
            StringOp::Substring => {
                let s: Vec<char> = recv()?.chars().collect();
                let begin: usize = args.first()?.parse().ok()?;
                let end: usize = match args.get(1) {
                    Some(e) => e.parse().ok()?,
                    None => s.len(),
                };
                if begin > end || end > s.len() {
                    return None;
                }
                s[begin..end].iter().collect()
            }
            StringOp::ToLowerCase => recv()?.to_lowercase(),
            StringOp::ToUpperCase => recv()?.to_uppercase(),
            StringOp::Trim => recv()?.trim_matches(|c: char| c <= ' ').to_string(),
            StringOp::ReplaceChar => {
                let from = ArgKind::Char.render(args.first()?)?;
                let to = ArgKind::Char.render(args.get(1)?)?;
                recv()?.replace(&from, &to)
            }
            StringOp::ReplaceSeq => recv()?.replace(args.first()?, args.get(1)?),
            StringOp::ValueOf(kind) => kind.render(args.first()?)?,
            StringOp::ToString => recv()?.to_string(),
            StringOp::Format => format_restricted(args.first()?, &args[1..])?,
        })
    }

    /// Applies the operation over the Cartesian product of candidates.
    pub fn apply(self, receiver: Option<&StringValue>, args: &[StringValue], cap: usize) -> StringValue {
        let mut operands: Vec<&BTreeSet<String>> = Vec::with_capacity(args.len() + 1);
        for v in receiver.into_iter().chain(args) {
            match v {
                StringValue::Resolved(c) => operands.push(c),
                StringValue::Unresolved(r) => return StringValue::Unresolved(*r),
            }
        }
        let has_receiver = receiver.is_some();
        if has_receiver == self.is_static() {
            return StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        }
        let mut results = BTreeSet::new();
        let mut combo: Vec<&str> = Vec::with_capacity(operands.len());
        let mut failed = false;
        product(&operands, &mut combo, &mut |values: &[&str]| {
            let (recv, rest) = if has_receiver { (Some(values[0]), &values[1..]) } else { (None, values) };
            match self.apply_concrete(recv, rest) {
                Some(v) => {
                    results.insert(v);
                }
                None => failed = true,
            }
        });
        if failed {
            return StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        }
        StringValue::from_candidates(results, cap)
    }
}

fn product<'s>(sets: &[&'s BTreeSet<String>], combo: &mut Vec<&'s str>, f: &mut dyn FnMut(&[&str])) {
    match sets.split_first() {
        None => f(combo),
        Some((first, rest)) => {
            for s in first.iter() {
                combo.push(s);
                product(rest, combo, f);
                combo.pop();
            }
        }
    }
}

/// `String.format` supporting only `%s`, `%d` and `%%`.
fn format_restricted(fmt: &str, args: &[&str]) -> Option<String> {
    let mut out = String::new();
    let mut chars = fmt.chars();
    let mut next_arg = args.iter();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '%' => out.push('%'),
            's' => out.push_str(next_arg.next()?),
            'd' => {
                let a = next_arg.next()?;
                a.parse::<i64>().ok()?;
                out.push_str(a);
            }
            _ => return None,
        }
    }
    Some(out)
}

/// Applies a modeled operation named as in source (`"substring"`, `"concat"`, ...).
pub fn model_string_op(
    op_name: &str,
    receiver: Option<&StringValue>,
    args: &[StringValue],
    cap: usize,
) -> Result<StringValue, StringEvalError> {
    Ok(StringOp::from_name(op_name)?.apply(receiver, args, cap))
}

/// Abstract list or array: known slots plus a completeness flag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ListModel {
    pub slots: BTreeMap<usize, StringValue>,
    pub complete: bool,
}

impl ListModel {
    pub fn complete(values: impl IntoIterator<Item = StringValue>) -> ListModel {
        ListModel { slots: values.into_iter().enumerate().collect(), complete: true }
    }

    pub fn unknown() -> ListModel {
        ListModel { slots: BTreeMap::new(), complete: false }
    }

    pub fn len(&self) -> usize {
        self.slots.keys().next_back().map_or(0, |k| k + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub(crate) fn push(&mut self, v: StringValue) {
        let n = self.len();
        self.slots.insert(n, v);
    }

    pub(crate) fn insert(&mut self, index: usize, v: StringValue) {
        let shifted: Vec<(usize, StringValue)> = self.slots.split_off(&index).into_iter().collect();
        for (k, old) in shifted {
            self.slots.insert(k + 1, old);
        }
        self.slots.insert(index, v);
    }

    /// Values of slots `0..len` when the model is complete and dense.
    pub fn values(&self) -> Option<Vec<StringValue>> {
        if !self.complete {
            return None;
        }
        (0..self.len()).map(|i| self.slots.get(&i).cloned()).collect()
    }
}

/// `list.get(index)` over the abstract list.
pub fn eval_list_get(list: &ListModel, index: &StringValue, cap: usize) -> StringValue {
    let Some(indices) = index.as_ints() else {
        return StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
    };
    if !list.complete {
        return StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
    }
    let mut acc: Option<StringValue> = None;
    for i in indices {
        let slot = usize::try_from(i).ok().and_then(|i| list.slots.get(&i));
        let Some(v) = slot else {
            return StringValue::Unresolved(UnresolvedReason::UnmodeledOp);
        };
        acc = Some(match acc {
            None => v.clone(),
            Some(a) => a.union(v.clone(), cap),
        });
    }
    acc.unwrap_or(StringValue::Unresolved(UnresolvedReason::UnmodeledOp))
}
