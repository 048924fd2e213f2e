//! A small concrete interpreter for the string-building subset of Smali,
//! used as ground truth for the string evaluator.

use std::collections::HashMap;

use intentflow::apk::{descriptor_to_class, IfTest, Instruction, InvokeKind, MethodRef, Reg, SmaliClass, SmaliMethod};

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Str(String),
    Int(i64),
    Builder(usize),
    Array(usize),
    Class(String),
    /// An object the interpreter does not model.
    Other,
}

#[derive(Default)]
pub struct Machine<'a> {
    classes: &'a [SmaliClass],
    builders: Vec<String>,
    arrays: Vec<Vec<Option<Val>>>,
    statics: HashMap<(String, String), Val>,
    steps: usize,
}

const STEP_LIMIT: usize = 10_000;

impl<'a> Machine<'a> {
    /// Prepares a machine with every class's static initializer run.
    pub fn new(classes: &'a [SmaliClass]) -> Machine<'a> {
        let mut m = Machine { classes, ..Default::default() };
        for c in classes {
            for f in c.fields.iter().filter(|f| f.is_static) {
                if let Some(s) = &f.initial_string {
                    m.statics.insert((c.descriptor(), f.name.clone()), Val::Str(s.clone()));
                }
            }
        }
        for c in classes {
            if let Some(clinit) = c.method("<clinit>()V") {
                m.run(clinit, &[], None);
            }
        }
        m
    }

    /// Runs `method` until it returns (giving the return value) or reaches
    /// instruction `stop` (giving the register file at that point).
    pub fn run(
        &mut self,
        method: &SmaliMethod,
        args: &[Val],
        stop: Option<usize>,
    ) -> Option<(Option<Val>, HashMap<Reg, Val>)> {
        let mut regs: HashMap<Reg, Val> = HashMap::new();
        for (r, v) in method.param_registers().into_iter().zip(args) {
            regs.insert(r, v.clone());
        }
        let mut last: Option<Val> = None;
        let mut pc = 0;
        loop {
            self.steps += 1;
            if self.steps > STEP_LIMIT || pc >= method.instructions.len() {
                return None;
            }
            if Some(pc) == stop {
                return Some((None, regs));
            }
            let get = |regs: &HashMap<Reg, Val>, r: &Reg| regs.get(r).cloned().unwrap_or(Val::Other);
            let mut next = pc + 1;
            match &method.instructions[pc] {
                Instruction::ConstString { dst, value } => {
                    regs.insert(*dst, Val::Str(value.clone()));
                }
                Instruction::Const { dst, value, .. } => {
                    regs.insert(*dst, Val::Int(*value));
                }
                Instruction::ConstClass { dst, class } => {
                    regs.insert(*dst, Val::Class(class.clone()));
                }
                Instruction::NewInstance { dst, class } => {
                    let v = if class == "Ljava/lang/StringBuilder;" {
                        self.builders.push(String::new());
                        Val::Builder(self.builders.len() - 1)
                    } else {
                        Val::Other
                    };
                    regs.insert(*dst, v);
                }
                Instruction::NewArray { dst, size, .. } => {
                    let Val::Int(n) = get(&regs, size) else { return None };
                    self.arrays.push(vec![None; n as usize]);
                    regs.insert(*dst, Val::Array(self.arrays.len() - 1));
                }
                Instruction::ArrayPut { src, array, index } => {
                    let (Val::Array(a), Val::Int(i)) = (get(&regs, array), get(&regs, index)) else { return None };
                    *self.arrays[a].get_mut(i as usize)? = Some(get(&regs, src));
                }
                Instruction::ArrayGet { dst, array, index } => {
                    let (Val::Array(a), Val::Int(i)) = (get(&regs, array), get(&regs, index)) else { return None };
                    let v = self.arrays[a].get(i as usize)?.clone()?;
                    regs.insert(*dst, v);
                }
                Instruction::Move { dst, src, .. } => {
                    let v = get(&regs, src);
                    regs.insert(*dst, v);
                }
                Instruction::MoveResult { dst, .. } => {
                    regs.insert(*dst, last.take().unwrap_or(Val::Other));
                }
                Instruction::StaticGet { dst, field } => {
                    let v = self.statics.get(&(field.class.clone(), field.name.clone())).cloned()?;
                    regs.insert(*dst, v);
                }
                Instruction::StaticPut { src, field } => {
                    let v = get(&regs, src);
                    self.statics.insert((field.class.clone(), field.name.clone()), v);
                }
                Instruction::InstanceGet { dst, .. } => {
                    regs.insert(*dst, Val::Other);
                }
                Instruction::InstancePut { .. } => {}
                Instruction::Invoke { kind, args, method: callee, .. } => {
                    let vals: Vec<Val> = args.iter().map(|r| get(&regs, r)).collect();
                    last = self.invoke(*kind, callee, &vals)?;
                }
                Instruction::Return { value, .. } => {
                    return Some((value.map(|r| get(&regs, &r)), regs));
                }
                Instruction::Goto { target } => {
                    next = method.label_index(target.trim_start_matches(':'))?;
                }
                Instruction::If { test, zero, regs: ops, target } => {
                    let as_int = |v: Val| match v {
                        Val::Int(i) => Some(i),
                        Val::Other => None,
                        _ => Some(1),
                    };
                    let a = as_int(get(&regs, &ops[0]))?;
                    let b = if *zero { 0 } else { as_int(get(&regs, &ops[1]))? };
                    let taken = match test {
                        IfTest::Eq => a == b,
                        IfTest::Ne => a != b,
                        IfTest::Lt => a < b,
                        IfTest::Ge => a >= b,
                        IfTest::Gt => a > b,
                        IfTest::Le => a <= b,
                    };
                    if taken {
                        next = method.label_index(target.trim_start_matches(':'))?;
                    }
                }
                Instruction::Opaque { opcode, .. } => match opcode.as_str() {
                    "nop" | "check-cast" => {}
                    _ => return None,
                },
            }
            pc = next;
        }
    }

    fn invoke(&mut self, kind: InvokeKind, m: &MethodRef, args: &[Val]) -> Option<Option<Val>> {
        let str_arg = |i: usize| match args.get(i) {
            Some(Val::Str(s)) => Some(s.clone()),
            _ => None,
        };
        let int_arg = |i: usize| match args.get(i) {
            Some(Val::Int(n)) => Some(*n),
            _ => None,
        };
        let params: Vec<&str> = m.params.iter().map(String::as_str).collect();
        match (m.class.as_str(), m.name.as_str()) {
            ("Ljava/lang/StringBuilder;", "<init>") => {
                let Val::Builder(b) = args[0] else { return None };
                if params == ["Ljava/lang/String;"] {
                    self.builders[b] = str_arg(1)?;
                }
                Some(None)
            }
            ("Ljava/lang/StringBuilder;", "append") => {
                let Val::Builder(b) = args[0] else { return None };
                let piece = match params.as_slice() {
                    ["Ljava/lang/String;"] => str_arg(1)?,
                    ["I"] | ["J"] => int_arg(1)?.to_string(),
                    ["C"] => char::from_u32(int_arg(1)? as u32)?.to_string(),
                    _ => return None,
                };
                self.builders[b].push_str(&piece);
                Some(Some(Val::Builder(b)))
            }
            ("Ljava/lang/StringBuilder;", "toString") => {
                let Val::Builder(b) = args[0] else { return None };
                Some(Some(Val::Str(self.builders[b].clone())))
            }
            ("Ljava/lang/String;", name) => {
                let out = match (name, params.as_slice()) {
                    ("concat", _) => str_arg(0)? + &str_arg(1)?,
                    ("substring", ["I", "I"]) => {
                        let s: Vec<char> = str_arg(0)?.chars().collect();
                        let (a, b) = (int_arg(1)? as usize, int_arg(2)? as usize);
                        s.get(a..b)?.iter().collect()
                    }
                    ("substring", ["I"]) => {
                        let s: Vec<char> = str_arg(0)?.chars().collect();
                        s.get(int_arg(1)? as usize..)?.iter().collect()
                    }
                    ("toUpperCase", []) => str_arg(0)?.to_uppercase(),
                    ("toLowerCase", []) => str_arg(0)?.to_lowercase(),
                    ("trim", []) => str_arg(0)?.trim().to_string(),
                    ("replace", ["Ljava/lang/CharSequence;", "Ljava/lang/CharSequence;"]) => {
                        str_arg(0)?.replace(&str_arg(1)?, &str_arg(2)?)
                    }
                    ("valueOf", ["I"]) | ("valueOf", ["J"]) => int_arg(0)?.to_string(),
                    ("valueOf", ["Ljava/lang/Object;"]) => str_arg(0)?,
                    ("format", ["Ljava/lang/String;", "[Ljava/lang/Object;"]) => {
                        let Some(Val::Array(a)) = args.get(1) else { return None };
                        let values = self.arrays[*a].clone();
                        format_args(&str_arg(0)?, &values)?
                    }
                    _ => return None,
                };
                Some(Some(Val::Str(out)))
            }
            ("Ljava/lang/Class;", "getName") => match &args[0] {
                Val::Class(d) => Some(Some(Val::Str(descriptor_to_class(d)))),
                _ => None,
            },
            (owner, _) if kind == InvokeKind::Static || kind == InvokeKind::Direct => {
                let Some(class) = self.classes.iter().find(|c| c.descriptor() == owner) else {
                    return Some(if m.ret == "V" { None } else { Some(Val::Other) });
                };
                let Some(callee) = class.method(&format!("{}({}){}", m.name, m.params.concat(), m.ret)) else {
                    return Some(Some(Val::Other));
                };
                if m.is_constructor() {
                    return Some(None);
                }
                let (ret, _) = self.run(callee, args, None)?;
                Some(ret)
            }
            _ => Some(if m.ret == "V" { None } else { Some(Val::Other) }),
        }
    }
}

fn format_args(fmt: &str, values: &[Option<Val>]) -> Option<String> {
    let mut out = String::new();
    let mut it = fmt.chars();
    let mut next = values.iter();
    while let Some(c) = it.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        match it.next()? {
            '%' => out.push('%'),
            's' | 'd' => match next.next()?.as_ref()? {
                Val::Str(s) => out.push_str(s),
                Val::Int(n) => out.push_str(&n.to_string()),
                _ => return None,
            },
            _ => return None,
        }
    }
    Some(out)
}
