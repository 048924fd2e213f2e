//! Smali class model and a line-oriented parser/printer for the subset of
//! Dalvik opcodes the intent analysis needs.
//!
//! Every instruction line inside a method body becomes exactly one
//! [`Instruction`]. Opcodes outside the structured subset are kept as
//! [`Instruction::Opaque`] with their raw text and a best-effort def/use
//! register split, so instruction indices always line up with the source.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use log::warn;

use super::ApkError;

/// A virtual register, with `pN` aliases already folded into `vN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub u16);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Converts `Lcom/foo/Bar;` into `com.foo.Bar`. Non-object descriptors are
/// returned unchanged.
pub fn descriptor_to_class(desc: &str) -> String {
    match desc.strip_prefix('L').and_then(|d| d.strip_suffix(';')) {
        Some(inner) => inner.replace('/', "."),
        None => desc.to_string(),
    }
}

/// Converts `com.foo.Bar` into `Lcom/foo/Bar;`.
pub fn class_to_descriptor(class: &str) -> String {
    format!("L{};", class.replace('.', "/"))
}

/// Splits a concatenated parameter descriptor list (`ILjava/lang/String;[J`)
/// into individual descriptors.
pub fn split_descriptors(mut s: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    while !s.is_empty() {
        let bytes = s.as_bytes();
        let mut i = 0;
        while i < bytes.len() && bytes[i] == b'[' {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        let end = match bytes[i] {
            b'L' => i + s[i..].find(';')? + 1,
            b'Z' | b'B' | b'S' | b'C' | b'I' | b'J' | b'F' | b'D' | b'V' => i + 1,
            _ => return None,
        };
        out.push(s[..end].to_string());
        s = &s[end..];
    }
    Some(out)
}

fn is_wide(desc: &str) -> bool {
    desc == "J" || desc == "D"
}

/// Human-readable Java spelling of a type descriptor (`Ljava/lang/String;`
/// becomes `String`, `[I` becomes `int[]`). Package prefixes are dropped.
pub fn simple_type_name(desc: &str) -> String {
    if let Some(elem) = desc.strip_prefix('[') {
        return format!("{}[]", simple_type_name(elem));
    }
    match desc {
        "Z" => "boolean".into(),
        "B" => "byte".into(),
        "S" => "short".into(),
        "C" => "char".into(),
        "I" => "int".into(),
        "J" => "long".into(),
        "F" => "float".into(),
        "D" => "double".into(),
        "V" => "void".into(),
        other => {
            let dotted = descriptor_to_class(other);
            dotted.rsplit('.').next().unwrap_or(&dotted).to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub class: String,
    pub name: String,
    pub params: Vec<String>,
    pub ret: String,
}

impl MethodRef {
    pub fn parse(s: &str) -> Option<MethodRef> {
        let (class, rest) = s.split_once("->")?;
        let open = rest.find('(')?;
        let close = rest.find(')')?;
        if close < open {
            return None;
        }
        let name = rest[..open].to_string();
        let params = split_descriptors(&rest[open + 1..close])?;
        let ret = rest[close + 1..].to_string();
        if name.is_empty() || ret.is_empty() || !class.starts_with(['L', '[']) {
            return None;
        }
        Some(MethodRef { class: class.to_string(), name, params, ret })
    }

    pub fn class_name(&self) -> String {
        descriptor_to_class(&self.class)
    }

    pub fn is(&self, class_desc: &str, name: &str) -> bool {
        self.class == class_desc && self.name == name
    }

    pub fn is_constructor(&self) -> bool {
        self.name == "<init>"
    }

    pub fn descriptor(&self) -> String {
        format!("({}){}", self.params.concat(), self.ret)
    }

    /// `TelephonyManager.getDeviceId`
    pub fn short_name(&self) -> String {
        format!("{}.{}", simple_type_name(&self.class), self.name)
    }
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}({}){}", self.class, self.name, self.params.concat(), self.ret)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldRef {
    pub class: String,
    pub name: String,
    pub ty: String,
}

impl FieldRef {
    pub fn parse(s: &str) -> Option<FieldRef> {
        let (class, rest) = s.split_once("->")?;
        let (name, ty) = rest.split_once(':')?;
        if name.is_empty() || ty.is_empty() {
            return None;
        }
        Some(FieldRef { class: class.into(), name: name.into(), ty: ty.into() })
    }
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}:{}", self.class, self.name, self.ty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvokeKind {
    Direct,
    Virtual,
    Static,
    Interface,
    Super,
}

impl InvokeKind {
    fn mnemonic(self) -> &'static str {
        match self {
            InvokeKind::Direct => "invoke-direct",
            InvokeKind::Virtual => "invoke-virtual",
            InvokeKind::Static => "invoke-static",
            InvokeKind::Interface => "invoke-interface",
            InvokeKind::Super => "invoke-super",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IfTest {
    Eq,
    Ne,
    Lt,
    Ge,
    Gt,
    Le,
}

impl IfTest {
    fn parse(s: &str) -> Option<IfTest> {
        Some(match s {
            "eq" => IfTest::Eq,
            "ne" => IfTest::Ne,
            "lt" => IfTest::Lt,
            "ge" => IfTest::Ge,
            "gt" => IfTest::Gt,
            "le" => IfTest::Le,
            _ => return None,
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            IfTest::Eq => "eq",
            IfTest::Ne => "ne",
            IfTest::Lt => "lt",
            IfTest::Ge => "ge",
            IfTest::Gt => "gt",
            IfTest::Le => "le",
        }
    }
}

/// One Dalvik instruction. See the module docs for what is structured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    ConstString {
        dst: Reg,
        value: String,
    },
    /// `const/4`, `const/16`, `const`, `const/high16` and the `const-wide` family.
    Const {
        dst: Reg,
        value: i64,
        wide: bool,
    },
    ConstClass {
        dst: Reg,
        class: String,
    },
    NewInstance {
        dst: Reg,
        class: String,
    },
    NewArray {
        dst: Reg,
        size: Reg,
        ty: String,
    },
    /// `aget-object`
    ArrayGet {
        dst: Reg,
        array: Reg,
        index: Reg,
    },
    /// `aput-object`
    ArrayPut {
        src: Reg,
        array: Reg,
        index: Reg,
    },
    Invoke {
        kind: InvokeKind,
        range: bool,
        args: Vec<Reg>,
        method: MethodRef,
    },
    MoveResult {
        dst: Reg,
        object: bool,
    },
    Move {
        dst: Reg,
        src: Reg,
        object: bool,
    },
    /// `iget-object`
    InstanceGet {
        dst: Reg,
        object: Reg,
        field: FieldRef,
    },
    /// `iput-object`
    InstancePut {
        src: Reg,
        object: Reg,
        field: FieldRef,
    },
    /// `sget-object`
    StaticGet {
        dst: Reg,
        field: FieldRef,
    },
    /// `sput-object`
    StaticPut {
        src: Reg,
        field: FieldRef,
    },
    Return {
        value: Option<Reg>,
        object: bool,
    },
    Goto {
        target: String,
    },
    If {
        test: IfTest,
        zero: bool,
        regs: Vec<Reg>,
        target: String,
    },
    /// Anything else. `text` is the instruction as written (after register
    /// normalization); `def`/`uses` are a best-effort operand split and
    /// `targets` lists branch labels (switch payload targets included).
    Opaque {
        opcode: String,
        text: String,
        def: Option<Reg>,
        uses: Vec<Reg>,
        targets: Vec<String>,
    },
}

impl Instruction {
    /// Registers written by this instruction.
    pub fn def(&self) -> Option<Reg> {
        use Instruction::*;
        match self {
            ConstString { dst, .. }
            | Const { dst, .. }
            | ConstClass { dst, .. }
            | NewInstance { dst, .. }
            | NewArray { dst, .. }
            | ArrayGet { dst, .. }
            | MoveResult { dst, .. }
            | Move { dst, .. }
            | InstanceGet { dst, .. }
            | StaticGet { dst, .. } => Some(*dst),
            Opaque { def, .. } => *def,
            _ => None,
        }
    }

    /// True if this instruction writes `reg` (wide constants also clobber
    /// the following register).
    pub fn defines(&self, reg: Reg) -> bool {
        match self {
            Instruction::Const { dst, wide: true, .. } => *dst == reg || Reg(dst.0 + 1) == reg,
            _ => self.def() == Some(reg),
        }
    }

    /// Registers read by this instruction.
    pub fn uses(&self) -> Vec<Reg> {
        use Instruction::*;
        match self {
            NewArray { size, .. } => vec![*size],
            ArrayGet { array, index, .. } => vec![*array, *index],
            ArrayPut { src, array, index } => vec![*src, *array, *index],
            Invoke { args, .. } => args.clone(),
            Move { src, .. } => vec![*src],
            InstanceGet { object, .. } => vec![*object],
            InstancePut { src, object, .. } => vec![*src, *object],
            StaticPut { src, .. } => vec![*src],
            Return { value: Some(v), .. } => vec![*v],
            If { regs, .. } => regs.clone(),
            Opaque { uses, .. } => uses.clone(),
            _ => Vec::new(),
        }
    }

    pub fn as_invoke(&self) -> Option<(&[Reg], &MethodRef)> {
        match self {
            Instruction::Invoke { args, method, .. } => Some((args.as_slice(), method)),
            _ => None,
        }
    }

    pub fn is_invoke(&self) -> bool {
        matches!(self, Instruction::Invoke { .. })
    }

    /// Invoke operands with one register per logical argument (receiver
    /// first for non-static calls); wide pairs are folded to their low
    /// register. `None` if this is not an invoke or the arity is off.
    pub fn invoke_operands(&self) -> Option<(Vec<Reg>, &MethodRef)> {
        let Instruction::Invoke { kind, args, method, .. } = self else { return None };
        let mut out = Vec::with_capacity(method.params.len() + 1);
        let mut it = args.iter();
        if *kind != InvokeKind::Static {
            out.push(*it.next()?);
        }
        for p in &method.params {
            out.push(*it.next()?);
            if is_wide(p) {
                it.next()?;
            }
        }
        it.next().is_none().then_some((out, method))
    }

    fn max_reg(&self) -> Option<u16> {
        let mut regs = self.uses();
        regs.extend(self.def());
        if let Instruction::Const { dst, wide: true, .. } = self {
            regs.push(Reg(dst.0 + 1));
        }
        regs.iter().map(|r| r.0).max()
    }
}

fn escape_smali(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\'' => out.push_str("\\'"),
            c if (c as u32) < 0x20 || (c as u32) > 0x7e => {
                let mut buf = [0u16; 2];
                for unit in c.encode_utf16(&mut buf) {
                    out.push_str(&format!("\\u{:04x}", unit));
                }
            }
            c => out.push(c),
        }
    }
    out
}

fn unescape_smali(s: &str) -> Option<String> {
    let mut units: Vec<u16> = Vec::with_capacity(s.len());
    let mut chars = s.chars();
    let mut buf = [0u16; 2];
    while let Some(c) = chars.next() {
        if c != '\\' {
            units.extend_from_slice(c.encode_utf16(&mut buf));
            continue;
        }
        let e = chars.next()?;
        let decoded = match e {
            'n' => '\n',
            't' => '\t',
            'r' => '\r',
            'b' => '\u{8}',
            'f' => '\u{c}',
            '0' => '\0',
            '"' | '\'' | '\\' => e,
            'u' => {
                let hex: String = chars.by_ref().take(4).collect();
                units.push(u16::from_str_radix(&hex, 16).ok()?);
                continue;
            }
            _ => return None,
        };
        units.extend_from_slice(decoded.encode_utf16(&mut buf));
    }
    String::from_utf16(&units).ok()
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instruction::*;
        match self {
            ConstString { dst, value } => write!(f, "const-string {}, \"{}\"", dst, escape_smali(value)),
            Const { dst, value, wide } => {
                let op = if *wide { "const-wide" } else { "const" };
                if *value < 0 {
                    write!(f, "{} {}, -0x{:x}", op, dst, value.unsigned_abs())
                } else {
                    write!(f, "{} {}, 0x{:x}", op, dst, value)
                }
            }
            ConstClass { dst, class } => write!(f, "const-class {}, {}", dst, class),
            NewInstance { dst, class } => write!(f, "new-instance {}, {}", dst, class),
            NewArray { dst, size, ty } => write!(f, "new-array {}, {}, {}", dst, size, ty),
            ArrayGet { dst, array, index } => write!(f, "aget-object {}, {}, {}", dst, array, index),
            ArrayPut { src, array, index } => write!(f, "aput-object {}, {}, {}", src, array, index),
            Invoke { kind, range, args, method } => {
                let regs = if *range && !args.is_empty() {
                    format!("{} .. {}", args[0], args[args.len() - 1])
                } else {
                    args.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
                };
                let suffix = if *range { "/range" } else { "" };
                write!(f, "{}{} {{{}}}, {}", kind.mnemonic(), suffix, regs, method)
            }
            MoveResult { dst, object } => {
                write!(f, "{} {}", if *object { "move-result-object" } else { "move-result" }, dst)
            }
            Move { dst, src, object } => {
                write!(f, "{} {}, {}", if *object { "move-object" } else { "move" }, dst, src)
            }
            InstanceGet { dst, object, field } => write!(f, "iget-object {}, {}, {}", dst, object, field),
            InstancePut { src, object, field } => write!(f, "iput-object {}, {}, {}", src, object, field),
            StaticGet { dst, field } => write!(f, "sget-object {}, {}", dst, field),
            StaticPut { src, field } => write!(f, "sput-object {}, {}", src, field),
            Return { value: None, .. } => write!(f, "return-void"),
            Return { value: Some(v), object } => {
                write!(f, "{} {}", if *object { "return-object" } else { "return" }, v)
            }
            Goto { target } => write!(f, "goto :{}", target),
            If { test, zero, regs, target } => {
                let regs = regs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ");
                let z = if *zero { "z" } else { "" };
                write!(f, "if-{}{} {}, :{}", test.as_str(), z, regs, target)
            }
            Opaque { text, .. } => f.write_str(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaliMethod {
    pub name: String,
    pub params: Vec<String>,
    pub ret: String,
    pub access: Vec<String>,
    pub register_count: u16,
    pub instructions: Vec<Instruction>,
    /// Label name → index of the instruction it precedes (may equal
    /// `instructions.len()` for a trailing label).
    pub labels: BTreeMap<String, usize>,
}

impl SmaliMethod {
    pub fn is_static(&self) -> bool {
        self.access.iter().any(|a| a == "static")
    }

    /// `name(params)ret`, unique within a class.
    pub fn signature(&self) -> String {
        format!("{}({}){}", self.name, self.params.concat(), self.ret)
    }

    fn param_words(&self) -> u16 {
        let this = if self.is_static() { 0 } else { 1 };
        this + self.params.iter().map(|p| if is_wide(p) { 2 } else { 1 }).sum::<u16>()
    }

    /// Register holding each incoming argument, `this` first for instance
    /// methods. Wide arguments report their low register.
    pub fn param_registers(&self) -> Vec<Reg> {
        let mut next = self.register_count.saturating_sub(self.param_words());
        let mut regs = Vec::new();
        if !self.is_static() {
            regs.push(Reg(next));
            next += 1;
        }
        for p in &self.params {
            regs.push(Reg(next));
            next += if is_wide(p) { 2 } else { 1 };
        }
        regs
    }

    /// Index of `reg` among [`Self::param_registers`], if it is one.
    pub fn param_index(&self, reg: Reg) -> Option<usize> {
        self.param_registers().iter().position(|r| *r == reg)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.get(label).copied()
    }
}

impl fmt::Display for SmaliMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut access = self.access.join(" ");
        if !access.is_empty() {
            access.push(' ');
        }
        writeln!(f, ".method {}{}", access, self.signature())?;
        writeln!(f, "    .registers {}", self.register_count)?;
        let mut by_index: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (label, idx) in &self.labels {
            by_index.entry(*idx).or_default().push(label);
        }
        for i in 0..=self.instructions.len() {
            if let Some(labels) = by_index.get(&i) {
                for l in labels {
                    writeln!(f, "    :{}", l)?;
                }
            }
            if let Some(ins) = self.instructions.get(i) {
                writeln!(f, "    {}", ins)?;
            }
        }
        writeln!(f, ".end method")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaliField {
    pub name: String,
    pub ty: String,
    pub is_static: bool,
    /// Initial value when declared with a string literal (`= "..."`).
    pub initial_string: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaliClass {
    /// Dotted, fully qualified.
    pub class_name: String,
    pub super_name: String,
    pub interfaces: Vec<String>,
    pub fields: Vec<SmaliField>,
    pub methods: Vec<SmaliMethod>,
    pub warnings: Vec<String>,
}

impl SmaliClass {
    pub fn descriptor(&self) -> String {
        class_to_descriptor(&self.class_name)
    }

    pub fn method(&self, signature: &str) -> Option<&SmaliMethod> {
        self.methods.iter().find(|m| m.signature() == signature)
    }

    pub fn methods_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a SmaliMethod> + 'a {
        self.methods.iter().filter(move |m| m.name == name)
    }

    /// Name of the enclosing top-level class (`a.B$1` → `a.B`).
    pub fn outer_class_name(&self) -> &str {
        self.class_name.split('$').next().unwrap_or(&self.class_name)
    }
}

impl fmt::Display for SmaliClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, ".class public {}", self.descriptor())?;
        writeln!(f, ".super {}", class_to_descriptor(&self.super_name))?;
        for i in &self.interfaces {
            writeln!(f, ".implements {}", class_to_descriptor(i))?;
        }
        for field in &self.fields {
            let st = if field.is_static { "static " } else { "" };
            write!(f, "\n.field {}{}:{}", st, field.name, field.ty)?;
            if let Some(v) = &field.initial_string {
                write!(f, " = \"{}\"", escape_smali(v))?;
            }
            writeln!(f)?;
        }
        for m in &self.methods {
            writeln!(f)?;
            write!(f, "{}", m)?;
        }
        Ok(())
    }
}

/// Strips a trailing `# comment` that is not inside a string literal.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
        } else if c == '"' {
            in_str = true;
        } else if c == '#' {
            return &line[..i];
        }
    }
    line
}

/// Register-name resolution for one method body.
struct RegMap {
    param_base: u16,
}

impl RegMap {
    fn reg(&self, tok: &str) -> Option<Reg> {
        let tok = tok.trim().trim_end_matches(',');
        let (kind, num) = tok.split_at(1);
        let n: u16 = num.parse().ok()?;
        match kind {
            "v" => Some(Reg(n)),
            "p" => Some(Reg(self.param_base + n)),
            _ => None,
        }
    }

    fn normalize_text(&self, text: &str) -> String {
        // rewrites pN tokens so opaque text is register-normalized as well
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(pos) = rest.find(['p', 'v']) {
            let (head, tail) = rest.split_at(pos);
            out.push_str(head);
            let prev_ok = out.chars().last().is_none_or(|c| !c.is_alphanumeric() && c != '_' && c != '/' && c != '$');
            let digits: String = tail[1..].chars().take_while(|c| c.is_ascii_digit()).collect();
            let next_ok = tail[1 + digits.len()..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric() && c != '_' && c != ';' && c != '/');
            if prev_ok && next_ok && !digits.is_empty() {
                if let Some(r) = self.reg(&tail[..1 + digits.len()]) {
                    out.push_str(&r.to_string());
                    rest = &tail[1 + digits.len()..];
                    continue;
                }
            }
            out.push_str(&tail[..1]);
            rest = &tail[1..];
        }
        out.push_str(rest);
        out
    }

    fn regs_in(&self, text: &str) -> Vec<Reg> {
        text.split(|c: char| c == ',' || c == '{' || c == '}' || c.is_whitespace())
            .filter(|t| t.len() > 1 && (t.starts_with('v') || t.starts_with('p')))
            .filter_map(|t| self.reg(t))
            .collect()
    }
}

/// Opcodes that read their first register operand rather than writing it.
const NON_DEFINING: &[&str] = &[
    "check-cast",
    "throw",
    "monitor-enter",
    "monitor-exit",
    "fill-array-data",
    "packed-switch",
    "sparse-switch",
    "return",
    "return-wide",
    "return-object",
    "return-void",
    "nop",
];

fn opaque_non_defining(op: &str) -> bool {
    NON_DEFINING.contains(&op)
        || op.starts_with("if-")
        || op.starts_with("iput")
        || op.starts_with("sput")
        || op.starts_with("aput")
        || op.starts_with("invoke-")
        || op.starts_with("goto")
        || op.starts_with("filled-new-array")
}

fn parse_int_literal(tok: &str) -> Option<i64> {
    let t = tok.trim().trim_end_matches(['L', 't', 's']);
    let (neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let v = if let Some(hex) = t.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()? as i64
    } else {
        t.parse::<i64>().ok()?
    };
    Some(if neg { v.wrapping_neg() } else { v })
}

fn parse_label(tok: &str) -> Option<String> {
    let t = tok.trim().strip_prefix(':')?;
    (!t.is_empty()).then(|| t.to_string())
}

/// Splits `a, b, c` operands, keeping a quoted string literal intact.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_str = false;
    let mut escaped = false;
    let mut depth = 0;
    for c in s.chars() {
        if in_str {
            cur.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                cur.push(c);
            }
            '{' => {
                depth += 1;
                cur.push(c);
            }
            '}' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => out.push(std::mem::take(&mut cur).trim().to_string()),
            c => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_invoke_regs(map: &RegMap, group: &str, range: bool) -> Option<Vec<Reg>> {
    let inner = group.trim().strip_prefix('{')?.strip_suffix('}')?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    if range || inner.contains("..") {
        let (a, b) = inner.split_once("..")?;
        let (a, b) = (map.reg(a)?, map.reg(b)?);
        if b.0 < a.0 {
            return None;
        }
        return Some((a.0..=b.0).map(Reg).collect());
    }
    inner.split(',').map(|t| map.reg(t)).collect()
}

/// Parses one instruction line into a structured instruction, or `None`
/// when the line is in the structured subset but malformed.
fn parse_structured(map: &RegMap, op: &str, rest: &str) -> Option<Option<Instruction>> {
    use Instruction::*;
    let ops = split_operands(rest);
    let r = |i: usize| ops.get(i).and_then(|t| map.reg(t));
    let base = op.split('/').next().unwrap_or(op);
    let ins = match base {
        "const-string" => {
            let lit = ops.get(1)?.strip_prefix('"')?.strip_suffix('"')?;
            ConstString { dst: r(0)?, value: unescape_smali(lit)? }
        }
        "const" | "const-wide" => Const {
            dst: r(0)?,
            value: {
                let v = parse_int_literal(ops.get(1)?)?;
                if op.ends_with("high16") {
                    if base == "const-wide" {
                        v << 48
                    } else {
                        ((v as i32) << 16) as i64
                    }
                } else {
                    v
                }
            },
            wide: base == "const-wide",
        },
        "const-class" => ConstClass { dst: r(0)?, class: ops.get(1)?.clone() },
        "new-instance" => NewInstance { dst: r(0)?, class: ops.get(1)?.clone() },
        "new-array" => NewArray { dst: r(0)?, size: r(1)?, ty: ops.get(2)?.clone() },
        "aget-object" => ArrayGet { dst: r(0)?, array: r(1)?, index: r(2)? },
        "aput-object" => ArrayPut { src: r(0)?, array: r(1)?, index: r(2)? },
        "invoke-direct" | "invoke-virtual" | "invoke-static" | "invoke-interface" | "invoke-super" => {
            let kind = match base {
                "invoke-direct" => InvokeKind::Direct,
                "invoke-virtual" => InvokeKind::Virtual,
                "invoke-static" => InvokeKind::Static,
                "invoke-interface" => InvokeKind::Interface,
                _ => InvokeKind::Super,
            };
            let range = op.ends_with("/range");
            if ops.len() != 2 {
                return None;
            }
            Invoke { kind, range, args: parse_invoke_regs(map, &ops[0], range)?, method: MethodRef::parse(&ops[1])? }
        }
        "move-result" => MoveResult { dst: r(0)?, object: false },
        "move-result-object" => MoveResult { dst: r(0)?, object: true },
        "move" => Move { dst: r(0)?, src: r(1)?, object: false },
        "move-object" => Move { dst: r(0)?, src: r(1)?, object: true },
        "iget-object" => InstanceGet { dst: r(0)?, object: r(1)?, field: FieldRef::parse(ops.get(2)?)? },
        "iput-object" => InstancePut { src: r(0)?, object: r(1)?, field: FieldRef::parse(ops.get(2)?)? },
        "sget-object" => StaticGet { dst: r(0)?, field: FieldRef::parse(ops.get(1)?)? },
        "sput-object" => StaticPut { src: r(0)?, field: FieldRef::parse(ops.get(1)?)? },
        "return-void" => Return { value: None, object: false },
        "return" => Return { value: Some(r(0)?), object: false },
        "return-object" => Return { value: Some(r(0)?), object: true },
        "goto" => Goto { target: parse_label(ops.first()?)? },
        _ if base.starts_with("if-") => {
            let cond = &base[3..];
            let (test, zero) = match cond.strip_suffix('z') {
                Some(t) => (IfTest::parse(t)?, true),
                None => (IfTest::parse(cond)?, false),
            };
            let nregs = if zero { 1 } else { 2 };
            if ops.len() != nregs + 1 {
                return None;
            }
            let regs = (0..nregs).map(r).collect::<Option<Vec<_>>>()?;
            If { test, zero, regs, target: parse_label(&ops[nregs])? }
        }
        _ => return Some(None),
    };
    Some(Some(ins))
}

struct MethodHeader {
    name: String,
    params: Vec<String>,
    ret: String,
    access: Vec<String>,
}

fn parse_method_header(rest: &str) -> Option<MethodHeader> {
    let mut toks: Vec<&str> = rest.split_whitespace().collect();
    let sig = toks.pop()?;
    let open = sig.find('(')?;
    let close = sig.find(')')?;
    let name = sig[..open].to_string();
    let params = split_descriptors(&sig[open + 1..close])?;
    let ret = sig[close + 1..].to_string();
    if name.is_empty() || ret.is_empty() {
        return None;
    }
    Some(MethodHeader { name, params, ret, access: toks.into_iter().map(String::from).collect() })
}

struct PendingInstr {
    line_no: usize,
    op: String,
    rest: String,
}

fn build_method(
    header: MethodHeader,
    declared: Option<(bool, u16)>,
    body: Vec<PendingInstr>,
    labels: BTreeMap<String, usize>,
    switch_payloads: &BTreeMap<String, Vec<String>>,
    warnings: &mut Vec<String>,
    class_name: &str,
) -> SmaliMethod {
    let mut method = SmaliMethod {
        name: header.name,
        params: header.params,
        ret: header.ret,
        access: header.access,
        register_count: 0,
        instructions: Vec::new(),
        labels,
    };
    let words = method.param_words();
    method.register_count = match declared {
        Some((true, n)) => n,
        Some((false, locals)) => locals + words,
        None => words,
    };
    let map = RegMap { param_base: method.register_count.saturating_sub(words) };
    let sig = method.signature();
    for p in body {
        let ins = match parse_structured(&map, &p.op, &p.rest) {
            Some(Some(ins)) => Some(ins),
            Some(None) => None,
            None => {
                let msg = format!("{}->{} line {}: malformed `{}`, kept opaque", class_name, sig, p.line_no, p.op);
                warn!("{}", msg);
                warnings.push(msg);
                None
            }
        };
        let ins = ins.unwrap_or_else(|| {
            let text = map.normalize_text(format!("{} {}", p.op, p.rest).trim());
            let regs = map.regs_in(&p.rest);
            let def = if opaque_non_defining(&p.op) { None } else { regs.first().copied() };
            let uses = if def.is_some() { regs[1..].to_vec() } else { regs };
            let mut targets: Vec<String> = split_operands(&p.rest).iter().filter_map(|t| parse_label(t)).collect();
            if p.op == "packed-switch" || p.op == "sparse-switch" {
                let payload = targets.clone();
                targets = payload.iter().flat_map(|l| switch_payloads.get(l).cloned().unwrap_or_default()).collect();
            }
            Instruction::Opaque { opcode: p.op.clone(), text, def, uses, targets }
        });
        method.instructions.push(ins);
    }
    validate_method(&mut method, warnings, class_name);
    method
}

/// Enforces the register-bound and move-result placement invariants by
/// demoting offending instructions to opaque no-ops.
fn validate_method(method: &mut SmaliMethod, warnings: &mut Vec<String>, class_name: &str) {
    let sig = method.signature();
    for i in 0..method.instructions.len() {
        let ins = &method.instructions[i];
        let out_of_range = ins.max_reg().is_some_and(|m| m >= method.register_count);
        let orphan_result =
            matches!(ins, Instruction::MoveResult { .. }) && (i == 0 || !method.instructions[i - 1].is_invoke());
        if out_of_range || orphan_result {
            let why = if out_of_range { "register out of range" } else { "move-result without invoke" };
            let msg = format!("{}->{} #{}: {}, kept opaque", class_name, sig, i, why);
            warn!("{}", msg);
            warnings.push(msg);
            let text = ins.to_string();
            let opcode = text.split_whitespace().next().unwrap_or("").to_string();
            method.instructions[i] =
                Instruction::Opaque { opcode, text, def: None, uses: Vec::new(), targets: Vec::new() };
        }
    }
}

/// Parses Smali source text.
pub fn parse_smali_str(src: &str) -> Result<SmaliClass, ApkError> {
    let malformed = |line: usize, why: &str| ApkError::MalformedSmali { line, reason: why.to_string() };
    let mut class_name = None;
    let mut super_name = None;
    let mut interfaces = Vec::new();
    let mut fields = Vec::new();
    let mut methods: Vec<SmaliMethod> = Vec::new();
    let mut warnings = Vec::new();

    let lines: Vec<&str> = src.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let line = strip_comment(lines[i]).trim();
        i += 1;
        if line.is_empty() {
            continue;
        }
        let (directive, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match directive {
            ".class" => {
                let desc = rest.split_whitespace().last().ok_or_else(|| malformed(line_no, "empty .class"))?;
                if !desc.starts_with('L') || !desc.ends_with(';') {
                    return Err(malformed(line_no, "bad class descriptor"));
                }
                class_name = Some(descriptor_to_class(desc));
            }
            ".super" => super_name = Some(descriptor_to_class(rest)),
            ".implements" => interfaces.push(descriptor_to_class(rest)),
            ".field" => {
                let (decl, init) = match rest.split_once(" = ") {
                    Some((d, v)) => (d, Some(v.trim())),
                    None => (rest, None),
                };
                let toks: Vec<&str> = decl.split_whitespace().collect();
                let Some((name, ty)) = toks.last().and_then(|t| t.split_once(':')) else {
                    warnings.push(format!("line {}: unparseable field", line_no));
                    continue;
                };
                let initial_string =
                    init.and_then(|v| v.strip_prefix('"')).and_then(|v| v.strip_suffix('"')).and_then(unescape_smali);
                fields.push(SmaliField {
                    name: name.to_string(),
                    ty: ty.to_string(),
                    is_static: toks.contains(&"static"),
                    initial_string,
                });
                // a field may carry an annotation block
                if lines.get(i).map(|l| l.trim().starts_with(".annotation")).unwrap_or(false) {
                    while i < lines.len() && strip_comment(lines[i]).trim() != ".end field" {
                        i += 1;
                    }
                    i += 1;
                }
            }
            ".method" => {
                let header = parse_method_header(rest).ok_or_else(|| malformed(line_no, "bad .method header"))?;
                let mut declared = None;
                let mut body = Vec::new();
                let mut labels = BTreeMap::new();
                let mut switch_payloads: BTreeMap<String, Vec<String>> = BTreeMap::new();
                let mut last_label: Option<String> = None;
                let mut closed = false;
                while i < lines.len() {
                    let ln = i + 1;
                    let l = strip_comment(lines[i]).trim();
                    i += 1;
                    if l.is_empty() {
                        continue;
                    }
                    if l == ".end method" {
                        closed = true;
                        break;
                    }
                    if let Some(label) = l.strip_prefix(':') {
                        labels.insert(label.to_string(), body.len());
                        last_label = Some(label.to_string());
                        continue;
                    }
                    if l.starts_with('.') {
                        let (d, r) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
                        match d {
                            ".registers" | ".locals" => {
                                let n = parse_int_literal(r).and_then(|n| u16::try_from(n).ok());
                                match n {
                                    Some(n) => declared = Some((d == ".registers", n)),
                                    None => return Err(malformed(ln, "bad register count")),
                                }
                            }
                            ".annotation" => {
                                while i < lines.len() && strip_comment(lines[i]).trim() != ".end annotation" {
                                    i += 1;
                                }
                                i += 1;
                            }
                            // `.param` only opens a block when annotations follow it
                            ".param"
                                if lines.get(i).is_some_and(|n| strip_comment(n).trim().starts_with(".annotation")) =>
                            {
                                while i < lines.len() && strip_comment(lines[i]).trim() != ".end param" {
                                    i += 1;
                                }
                                i += 1;
                            }
                            ".packed-switch" | ".sparse-switch" => {
                                let mut targets = Vec::new();
                                let end = format!(".end {}", &d[1..]);
                                while i < lines.len() {
                                    let pl = strip_comment(lines[i]).trim();
                                    i += 1;
                                    if pl == end {
                                        break;
                                    }
                                    if let Some(t) = pl.rsplit(char::is_whitespace).next().and_then(parse_label) {
                                        targets.push(t);
                                    }
                                }
                                if let Some(l) = &last_label {
                                    switch_payloads.insert(l.clone(), targets);
                                }
                            }
                            ".array-data" => {
                                while i < lines.len() && strip_comment(lines[i]).trim() != ".end array-data" {
                                    i += 1;
                                }
                                i += 1;
                            }
                            _ => {} // .line, .prologue, .local, .catch ... carry no semantics here
                        }
                        continue;
                    }
                    let (op, r) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
                    body.push(PendingInstr { line_no: ln, op: op.to_string(), rest: r.trim().to_string() });
                }
                if !closed {
                    return Err(malformed(line_no, "unterminated .method"));
                }
                let cname = class_name.clone().unwrap_or_default();
                // labels that point at payload blocks are not branch targets
                for payload in switch_payloads.keys() {
                    labels.remove(payload);
                }
                let m = build_method(header, declared, body, labels, &switch_payloads, &mut warnings, &cname);
                if methods.iter().any(|o| o.signature() == m.signature()) {
                    let msg = format!("duplicate method {} ignored", m.signature());
                    warn!("{}", msg);
                    warnings.push(msg);
                } else {
                    methods.push(m);
                }
            }
            ".annotation" => {
                while i < lines.len() && strip_comment(lines[i]).trim() != ".end annotation" {
                    i += 1;
                }
                i += 1;
            }
            ".source" | ".end" => {}
            other if other.starts_with('.') => {
                warnings.push(format!("line {}: unknown directive {}", line_no, other));
            }
            _ => return Err(malformed(line_no, "instruction outside of a method")),
        }
    }
    let class_name = class_name.ok_or_else(|| malformed(1, "missing .class"))?;
    Ok(SmaliClass {
        class_name,
        super_name: super_name.unwrap_or_else(|| "java.lang.Object".into()),
        interfaces,
        fields,
        methods,
        warnings,
    })
}

/// Reads and parses one `.smali` file.
pub fn parse_smali_class(path: &Path) -> Result<SmaliClass, ApkError> {
    let src = std::fs::read_to_string(path).map_err(|e| ApkError::Io { path: path.to_path_buf(), source: e })?;
    parse_smali_str(&src).map_err(|e| match e {
        ApkError::MalformedSmali { line, reason } => {
            ApkError::MalformedSmali { line, reason: format!("{}: {}", path.display(), reason) }
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING1: &str = r#"
.class public Lcom/appA/OutFlowActivity;
.super Landroid/app/Activity;

.method protected onCreate(Landroid/os/Bundle;)V
    .locals 4
    invoke-super {p0, p1}, Landroid/app/Activity;->onCreate(Landroid/os/Bundle;)V
    const-string v0, "phone"
    invoke-virtual {p0, v0}, Lcom/appA/OutFlowActivity;->getSystemService(Ljava/lang/String;)Ljava/lang/Object;
    move-result-object v0
    check-cast v0, Landroid/telephony/TelephonyManager;
    invoke-virtual {v0}, Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;
    move-result-object v1
    new-instance v2, Landroid/content/Intent;
    const-string v3, "CUSTOM_INTENT.ACTION"
    invoke-direct {v2, v3}, Landroid/content/Intent;-><init>(Ljava/lang/String;)V
    const-string v3, "data"
    invoke-virtual {v2, v3, v1}, Landroid/content/Intent;->putExtra(Ljava/lang/String;Ljava/lang/String;)Landroid/content/Intent;
    invoke-virtual {p0, v2}, Lcom/appA/OutFlowActivity;->startActivity(Landroid/content/Intent;)V
    return-void
.end method
"#;

    #[test]
    fn parses_listing_one() {
        let class = parse_smali_str(LISTING1).unwrap();
        assert_eq!(class.class_name, "com.appA.OutFlowActivity");
        assert_eq!(class.super_name, "android.app.Activity");
        assert_eq!(class.methods.len(), 1);
        let m = &class.methods[0];
        assert_eq!(m.register_count, 6);
        assert_eq!(m.param_registers(), vec![Reg(4), Reg(5)]);
        assert!(m
            .instructions
            .iter()
            .any(|i| matches!(i, Instruction::ConstString { value, .. } if value == "CUSTOM_INTENT.ACTION")));
        let invokes: Vec<&str> =
            m.instructions.iter().filter_map(|i| i.as_invoke()).map(|(_, m)| m.name.as_str()).collect();
        assert!(invokes.contains(&"<init>"));
        assert!(invokes.contains(&"putExtra"));
        assert!(invokes.contains(&"startActivity"));
        // p0 folded into v4
        assert!(matches!(&m.instructions[0], Instruction::Invoke { args, .. } if args == &vec![Reg(4), Reg(5)]));
        assert!(matches!(&m.instructions[4], Instruction::Opaque { opcode, def: None, .. } if opcode == "check-cast"));
    }

    #[test]
    fn empty_void_method() {
        let src = ".class public La/B;\n.super Ljava/lang/Object;\n.method public run()V\n.registers 1\nreturn-void\n.end method\n";
        let class = parse_smali_str(src).unwrap();
        assert_eq!(class.methods.len(), 1);
        assert_eq!(class.methods[0].instructions, vec![Instruction::Return { value: None, object: false }]);
    }

    #[test]
    fn missing_class_header_is_malformed() {
        let err = parse_smali_str(".super Ljava/lang/Object;\n").unwrap_err();
        assert!(matches!(err, ApkError::MalformedSmali { .. }));
        let err = parse_smali_str(".class public La/B;\n.method public x()V\n.registers 1\nreturn-void\n").unwrap_err();
        assert!(matches!(err, ApkError::MalformedSmali { .. }));
    }

    #[test]
    fn unknown_and_malformed_opcodes_become_opaque() {
        let src = r#".class La/B;
.super Ljava/lang/Object;
.method public static x(I)I
    .registers 3
    add-int/lit8 v0, p0, 0x1
    invoke-virtual {v0 v1}, garbage
    mul-int v1, v0, v0
    return v1
.end method
"#;
        let class = parse_smali_str(src).unwrap();
        let m = &class.methods[0];
        assert_eq!(m.instructions.len(), 4);
        assert!(
            matches!(&m.instructions[0], Instruction::Opaque { def: Some(Reg(0)), uses, .. } if uses == &vec![Reg(2)])
        );
        assert!(matches!(&m.instructions[1], Instruction::Opaque { .. }));
        assert_eq!(class.warnings.len(), 1);
    }

    #[test]
    fn out_of_range_register_is_demoted() {
        let src = ".class La/B;\n.super Ljava/lang/Object;\n.method static x()V\n.registers 1\nconst-string v3, \"a\"\nreturn-void\n.end method\n";
        let class = parse_smali_str(src).unwrap();
        assert!(matches!(class.methods[0].instructions[0], Instruction::Opaque { .. }));
    }

    #[test]
    fn string_escapes_round_trip() {
        let s = "a\"b\\c\nd\u{e9}";
        assert_eq!(unescape_smali(&escape_smali(s)).unwrap(), s);
    }

    #[test]
    fn switch_targets_are_recorded() {
        let src = r#".class La/B;
.super Ljava/lang/Object;
.method static x(I)V
    .registers 2
    packed-switch p0, :pswitch_data_0
    return-void
    :pswitch_0
    return-void
    :pswitch_data_0
    .packed-switch 0x0
        :pswitch_0
    .end packed-switch
.end method
"#;
        let class = parse_smali_str(src).unwrap();
        let m = &class.methods[0];
        assert!(
            matches!(&m.instructions[0], Instruction::Opaque { targets, .. } if targets == &vec!["pswitch_0".to_string()])
        );
        assert!(!m.labels.contains_key("pswitch_data_0"));
    }
}
