//! Instruction-level control-flow graph for a single method.

use std::collections::{BTreeSet, VecDeque};

use crate::apk::{Instruction, MethodRef, Reg, SmaliClass, SmaliMethod};

#[derive(Debug, Clone)]
pub struct Cfg {
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

/// Decision returned by a backward-walk visitor for one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Walk {
    /// Stop walking along this path.
    Stop,
    /// Keep walking to the instruction's predecessors.
    Continue,
}

impl Cfg {
    pub fn build(method: &SmaliMethod) -> Cfg {
        let n = method.instructions.len();
        let mut succs = vec![Vec::new(); n];
        let target = |l: &str| method.label_index(l).filter(|i| *i < n);
        for (i, ins) in method.instructions.iter().enumerate() {
            let next = (i + 1 < n).then_some(i + 1);
            let s = &mut succs[i];
            match ins {
                Instruction::Goto { target: l } => s.extend(target(l)),
                Instruction::If { target: l, .. } => {
                    s.extend(next);
                    s.extend(target(l));
                }
                Instruction::Return { .. } => {}
                Instruction::Opaque { opcode, targets, .. } => {
                    if opcode != "throw" {
                        s.extend(next);
                    }
                    s.extend(targets.iter().filter_map(|l| target(l)));
                }
                _ => s.extend(next),
            }
            s.sort_unstable();
            s.dedup();
        }
        let mut preds = vec![Vec::new(); n];
        for (i, ss) in succs.iter().enumerate() {
            for &j in ss {
                preds[j].push(i);
            }
        }
        Cfg { succs, preds }
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    pub fn succs(&self, i: usize) -> &[usize] {
        &self.succs[i]
    }

    pub fn preds(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    /// Breadth-first walk against control flow starting at `from` (or at its
    /// predecessors when `inclusive` is false). Each instruction is visited at
    /// most once. Returns true when some path reaches the method entry without
    /// the visitor stopping it.
    pub fn walk_back(&self, from: usize, inclusive: bool, mut visit: impl FnMut(usize) -> Walk) -> bool {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        let mut reached_entry = false;
        if inclusive {
            queue.push_back(from);
        } else {
            if from == 0 {
                return true;
            }
            queue.extend(self.preds.get(from).into_iter().flatten().copied());
        }
        while let Some(i) = queue.pop_front() {
            if i >= self.len() || !seen.insert(i) {
                continue;
            }
            if visit(i) == Walk::Continue {
                if i == 0 {
                    reached_entry = true;
                }
                queue.extend(self.preds[i].iter().copied());
            }
        }
        reached_entry
    }

    /// Instructions reachable from `from` (inclusive).
    pub fn reachable_from(&self, from: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(i) = stack.pop() {
            if i < self.len() && seen.insert(i) {
                stack.extend(self.succs[i].iter().copied());
            }
        }
        seen
    }
}

/// A method together with its class and CFG: the unit every backward
/// analysis works on.
#[derive(Debug, Clone)]
pub struct MethodView<'a> {
    pub class: &'a SmaliClass,
    pub method: &'a SmaliMethod,
    pub cfg: Cfg,
}

impl<'a> MethodView<'a> {
    pub fn new(class: &'a SmaliClass, method: &'a SmaliMethod) -> MethodView<'a> {
        MethodView { class, method, cfg: Cfg::build(method) }
    }

    pub fn ins(&self, i: usize) -> &'a Instruction {
        &self.method.instructions[i]
    }

    pub fn len(&self) -> usize {
        self.method.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.method.instructions.is_empty()
    }

    /// The invoke whose result a `move-result` at `i` picks up.
    pub fn invoke_before(&self, i: usize) -> Option<(&'a [Reg], &'a MethodRef)> {
        i.checked_sub(1).and_then(|p| self.ins(p).as_invoke())
    }

    /// True if `from..to` is straight-line code: every instruction in
    /// `from..to` falls through to the next and nothing else jumps in.
    pub fn straight_line(&self, from: usize, to: usize) -> bool {
        (from..to).all(|k| self.cfg.succs(k) == [k + 1])
            && (from + 1..=to.min(self.len().saturating_sub(1))).all(|k| self.cfg.preds(k) == [k - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apk::parse_smali_str;

    #[test]
    fn branches_and_joins() {
        let src = r#".class La/B;
.super Ljava/lang/Object;
.method static f(I)Ljava/lang/String;
    .registers 2
    if-eqz p0, :else
    const-string v0, "A"
    goto :join
    :else
    const-string v0, "B"
    :join
    return-object v0
.end method
"#;
        let m = &parse_smali_str(src).unwrap().methods[0];
        let cfg = Cfg::build(m);
        assert_eq!(cfg.succs(0), &[1, 3]);
        assert_eq!(cfg.succs(2), &[4]);
        assert_eq!(cfg.preds(4), &[2, 3]);
        let mut defs = Vec::new();
        let entry = cfg.walk_back(4, false, |i| {
            if matches!(m.instructions[i], Instruction::ConstString { .. }) {
                defs.push(i);
                Walk::Stop
            } else {
                Walk::Continue
            }
        });
        defs.sort();
        assert_eq!(defs, vec![1, 3]);
        assert!(!entry);
        assert_eq!(cfg.reachable_from(1), [1, 2, 4].into_iter().collect());
    }
}
