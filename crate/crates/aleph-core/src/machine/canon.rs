//! State canonicalization. Head and pointer labels alpha-vary; two states
//! that differ only in label identities (for example, runs started with
//! different counter offsets) canonicalize to identical states.
//!
//! Labels are renumbered in first-occurrence order of a deterministic
//! traversal: the term, then the environment, then the heaps (picking
//! remaining entries in sorted label order, descending through heads and
//! pointer cells as they are discovered). Assumed-equality sets and the
//! pointer-heap snapshots inside conditionals are rewritten with the final
//! mapping rather than traversed, so the traversal order is stable under
//! relabeling and canonicalization is idempotent.

use std::collections::BTreeMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::syntax::{
    AssumedEqs, Environment, Fun, Head, HeadHeap, HeadLabel, MachineState, PointerCell,
    PointerHeap, PointerLabel, SourceValue, TableEntry, Term, TermRef,
};

/// Relabels head and pointer labels into a canonical dense numbering.
pub fn canonicalize(state: &MachineState) -> MachineState {
    let mut cz = Canonicalizer {
        heads: &state.heads,
        ptrs: &state.ptrs,
        head_map: BTreeMap::new(),
        ptr_map: BTreeMap::new(),
    };

    cz.visit_term(&state.term);
    cz.visit_env(&state.env);
    for hl in state.heads.keys().collect::<Vec<_>>() {
        cz.discover_head(hl);
    }
    for pl in state.ptrs.keys().collect::<Vec<_>>() {
        cz.discover_ptr(pl);
    }
    // Labels that occur only inside assumed-equality sets or pointer-heap
    // snapshots of artificial states are picked up here; machine-reachable
    // states have none.
    cz.sweep_leftovers(&state.term);

    let mut heads = HeadHeap::new();
    for (hl, head) in state.heads.iter() {
        heads.insert(cz.map_head(*hl), cz.remap_head(head));
    }
    let mut ptrs = PointerHeap::new();
    for (pl, cell) in state.ptrs.iter() {
        ptrs.insert(cz.map_ptr(*pl), cz.remap_cell(cell));
    }

    MachineState {
        term: cz.remap_term(&state.term),
        env: cz.remap_env(&state.env),
        allowed: state.allowed,
        next_head: cz.head_map.len() as u64,
        next_ptr: cz.ptr_map.len() as u64,
        heads,
        ptrs,
    }
}

/// A full textual rendering of a state, used for digests and byte-level
/// comparisons. Render canonicalized states to compare up to label identity.
pub fn render_state(state: &MachineState) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "term {}", crate::frontend::print_term(&state.term));
    let _ = writeln!(out, "env {}", state.env);
    let _ = writeln!(out, "fx {}", state.allowed);
    for (hl, head) in state.heads.iter() {
        let _ = writeln!(out, "head {hl}={}", render_head(head));
    }
    for (pl, cell) in state.ptrs.iter() {
        let _ = writeln!(
            out,
            "ptr {pl}=({}, {}, {})",
            cell.env,
            crate::frontend::print_term(&cell.ty),
            cell.contents
        );
    }
    let _ = writeln!(out, "next {} {}", state.next_head, state.next_ptr);
    out
}

fn render_head(head: &Head) -> String {
    match head {
        Head::Int(i) => i.to_string(),
        Head::Table(entries) => {
            let inner: Vec<String> = entries
                .iter()
                .map(|(ix, hl)| format!("{ix}={hl}"))
                .collect();
            format!("table{{{}}}", inner.join(","))
        }
        Head::Closure { env, fun } => format!(
            "clos({}, {})",
            env,
            crate::frontend::print_term(&Term::Fun(fun.clone()))
        ),
        Head::Ptr(pl) => pl.to_string(),
    }
}

/// A short hex digest of a state rendering; canonicalize first to digest up
/// to label identity.
pub fn state_digest(state: &MachineState) -> String {
    let rendered = render_state(state);
    let hash = Sha256::digest(rendered.as_bytes());
    hash[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct Canonicalizer<'a> {
    heads: &'a HeadHeap,
    ptrs: &'a PointerHeap,
    head_map: BTreeMap<HeadLabel, HeadLabel>,
    ptr_map: BTreeMap<PointerLabel, PointerLabel>,
}

impl Canonicalizer<'_> {
    fn discover_head(&mut self, hl: HeadLabel) {
        if self.head_map.contains_key(&hl) {
            return;
        }
        let new = HeadLabel(self.head_map.len() as u64);
        self.head_map.insert(hl, new);
        if let Some(head) = self.heads.get(hl) {
            let head = head.clone();
            self.visit_head(&head);
        }
    }

    fn discover_ptr(&mut self, pl: PointerLabel) {
        if self.ptr_map.contains_key(&pl) {
            return;
        }
        let new = PointerLabel(self.ptr_map.len() as u64);
        self.ptr_map.insert(pl, new);
        if let Some(cell) = self.ptrs.get(pl) {
            let cell = cell.clone();
            self.visit_env(&cell.env);
            self.visit_term(&cell.ty);
            self.discover_head(cell.contents);
        }
    }

    fn visit_head(&mut self, head: &Head) {
        match head {
            Head::Int(_) => {}
            Head::Table(entries) => {
                for (_, hl) in entries {
                    self.discover_head(*hl);
                }
            }
            Head::Closure { env, fun } => {
                self.visit_env(env);
                self.visit_fun(fun);
            }
            Head::Ptr(pl) => self.discover_ptr(*pl),
        }
    }

    fn visit_env(&mut self, env: &Environment) {
        for (_, hl) in env.bindings() {
            self.discover_head(hl);
        }
    }

    fn visit_fun(&mut self, fun: &Fun) {
        match fun {
            Fun::Lambda { domain, body, .. } => {
                self.visit_term(domain);
                self.visit_term(body);
            }
            Fun::AllQuant {
                type_domain,
                instantiation,
                domain,
                body,
                ..
            } => {
                self.visit_term(type_domain);
                self.visit_term(instantiation);
                self.visit_term(domain);
                self.visit_term(body);
            }
        }
    }

    fn visit_value(&mut self, value: &SourceValue) {
        match value {
            SourceValue::Tuple(_) => {}
            SourceValue::Fun(fun) => self.visit_fun(fun),
            SourceValue::Ptr { ty, .. } => self.visit_term(ty),
        }
    }

    fn visit_term(&mut self, term: &Term) {
        match term {
            Term::Var(_)
            | Term::Falses
            | Term::Anys
            | Term::Int(_)
            | Term::Ints
            | Term::Tabs
            | Term::Funs
            | Term::Ptrs
            | Term::In => {}
            Term::Hl(hl) => self.discover_head(*hl),
            Term::Uop(_, a)
            | Term::Len(a)
            | Term::From(a)
            | Term::Read(a)
            | Term::PtrTo(a)
            | Term::Out(a)
            | Term::FxThen { body: a, .. } => self.visit_term(a),
            Term::Bop(_, a, b)
            | Term::Cop(_, a, b)
            | Term::AppErr(a, b)
            | Term::AppFail(a, b)
            | Term::Write(a, b)
            | Term::Unify(a, b)
            | Term::Join(a, b)
            | Term::New { ty: a, init: b } => {
                self.visit_term(a);
                self.visit_term(b);
            }
            Term::Table(entries) => {
                for e in entries {
                    self.visit_term(&e.term);
                }
            }
            Term::Arr { len, body, .. } => {
                self.visit_term(len);
                self.visit_term(body);
            }
            Term::Fun(fun) => self.visit_fun(fun),
            Term::Let { bound, body, .. } => {
                self.visit_term(bound);
                self.visit_term(body);
            }
            Term::Letrec { binds, body } => {
                for (_, v) in binds {
                    self.visit_value(v);
                }
                self.visit_term(body);
            }
            Term::If {
                cond,
                then_t,
                else_t,
                ..
            } => {
                self.visit_term(cond);
                self.visit_term(then_t);
                self.visit_term(else_t);
            }
            Term::Stage { left, right, .. } => {
                self.visit_term(left);
                self.visit_term(right);
            }
            Term::IfM {
                cond,
                then_t,
                else_t,
                ..
            } => {
                // The snapshot's labels are rewritten with the final mapping;
                // traversing it here would make discovery order depend on the
                // very labels being renumbered.
                self.visit_term(cond);
                self.visit_term(then_t);
                self.visit_term(else_t);
            }
            Term::Frame { env, body, .. } => {
                self.visit_env(env);
                self.visit_term(body);
            }
            Term::Chk {
                subject,
                pattern,
                then_t,
                else_t,
                ..
            } => {
                self.discover_head(*subject);
                self.visit_term(pattern);
                self.visit_term(then_t);
                self.visit_term(else_t);
            }
        }
    }

    fn sweep_leftovers(&mut self, term: &Term) {
        match term {
            Term::Chk {
                ae,
                pattern,
                then_t,
                else_t,
                ..
            } => {
                for (a, b) in ae.iter() {
                    self.discover_head(*a);
                    self.discover_head(*b);
                }
                self.sweep_leftovers(pattern);
                self.sweep_leftovers(then_t);
                self.sweep_leftovers(else_t);
            }
            Term::IfM {
                cond,
                then_t,
                saved,
                else_t,
                ..
            } => {
                for (pl, cell) in saved.iter() {
                    self.discover_ptr(*pl);
                    self.visit_env(&cell.env);
                    self.visit_term(&cell.ty);
                    self.discover_head(cell.contents);
                }
                self.sweep_leftovers(cond);
                self.sweep_leftovers(then_t);
                self.sweep_leftovers(else_t);
            }
            Term::Uop(_, a)
            | Term::Len(a)
            | Term::From(a)
            | Term::Read(a)
            | Term::PtrTo(a)
            | Term::Out(a)
            | Term::FxThen { body: a, .. } => self.sweep_leftovers(a),
            Term::Bop(_, a, b)
            | Term::Cop(_, a, b)
            | Term::AppErr(a, b)
            | Term::AppFail(a, b)
            | Term::Write(a, b)
            | Term::Unify(a, b)
            | Term::Join(a, b)
            | Term::New { ty: a, init: b } => {
                self.sweep_leftovers(a);
                self.sweep_leftovers(b);
            }
            Term::Table(entries) => {
                for e in entries {
                    self.sweep_leftovers(&e.term);
                }
            }
            Term::Arr { len, body, .. } => {
                self.sweep_leftovers(len);
                self.sweep_leftovers(body);
            }
            Term::Let { bound, body, .. } => {
                self.sweep_leftovers(bound);
                self.sweep_leftovers(body);
            }
            Term::Letrec { body, .. } => self.sweep_leftovers(body),
            Term::If {
                cond,
                then_t,
                else_t,
                ..
            } => {
                self.sweep_leftovers(cond);
                self.sweep_leftovers(then_t);
                self.sweep_leftovers(else_t);
            }
            Term::Stage { left, right, .. } => {
                self.sweep_leftovers(left);
                self.sweep_leftovers(right);
            }
            Term::Frame { body, .. } => self.sweep_leftovers(body),
            _ => {}
        }
    }

    fn map_head(&self, hl: HeadLabel) -> HeadLabel {
        *self
            .head_map
            .get(&hl)
            .expect("every head label is discovered before remapping")
    }

    fn map_ptr(&self, pl: PointerLabel) -> PointerLabel {
        *self
            .ptr_map
            .get(&pl)
            .expect("every pointer label is discovered before remapping")
    }

    fn remap_head(&self, head: &Head) -> Head {
        match head {
            Head::Int(i) => Head::Int(i.clone()),
            Head::Table(entries) => Head::table(
                entries
                    .iter()
                    .map(|(ix, hl)| (ix.clone(), self.map_head(*hl)))
                    .collect(),
            ),
            Head::Closure { env, fun } => Head::Closure {
                env: self.remap_env(env),
                fun: Arc::new(self.remap_fun(fun)),
            },
            Head::Ptr(pl) => Head::Ptr(self.map_ptr(*pl)),
        }
    }

    fn remap_env(&self, env: &Environment) -> Environment {
        let mut out = Environment::empty();
        for (var, hl) in env.bindings() {
            out = out.extend(var, self.map_head(hl));
        }
        out
    }

    fn remap_cell(&self, cell: &PointerCell) -> PointerCell {
        PointerCell {
            env: self.remap_env(&cell.env),
            ty: self.remap_term(&cell.ty),
            contents: self.map_head(cell.contents),
        }
    }

    fn remap_fun(&self, fun: &Fun) -> Fun {
        match fun {
            Fun::Lambda {
                param,
                domain,
                dk,
                dom_fx,
                range_fx,
                body,
            } => Fun::Lambda {
                param: param.clone(),
                domain: self.remap_term(domain),
                dk: *dk,
                dom_fx: *dom_fx,
                range_fx: *range_fx,
                body: self.remap_term(body),
            },
            Fun::AllQuant {
                type_var,
                type_domain,
                instantiation,
                param,
                domain,
                dom_fx,
                range_fx,
                body,
            } => Fun::AllQuant {
                type_var: type_var.clone(),
                type_domain: self.remap_term(type_domain),
                instantiation: self.remap_term(instantiation),
                param: param.clone(),
                domain: self.remap_term(domain),
                dom_fx: *dom_fx,
                range_fx: *range_fx,
                body: self.remap_term(body),
            },
        }
    }

    fn remap_value(&self, value: &SourceValue) -> SourceValue {
        match value {
            SourceValue::Tuple(entries) => SourceValue::Tuple(entries.clone()),
            SourceValue::Fun(fun) => SourceValue::Fun(Arc::new(self.remap_fun(fun))),
            SourceValue::Ptr { ty, init } => SourceValue::Ptr {
                ty: self.remap_term(ty),
                init: init.clone(),
            },
        }
    }

    fn remap_term(&self, term: &Term) -> TermRef {
        Arc::new(match term {
            Term::Var(x) => Term::Var(x.clone()),
            Term::Falses => Term::Falses,
            Term::Anys => Term::Anys,
            Term::Int(i) => Term::Int(i.clone()),
            Term::Ints => Term::Ints,
            Term::Tabs => Term::Tabs,
            Term::Funs => Term::Funs,
            Term::Ptrs => Term::Ptrs,
            Term::In => Term::In,
            Term::Hl(hl) => Term::Hl(self.map_head(*hl)),
            Term::Uop(op, a) => Term::Uop(*op, self.remap_term(a)),
            Term::Bop(op, a, b) => Term::Bop(*op, self.remap_term(a), self.remap_term(b)),
            Term::Cop(op, a, b) => Term::Cop(*op, self.remap_term(a), self.remap_term(b)),
            Term::Table(entries) => Term::Table(
                entries
                    .iter()
                    .map(|e| TableEntry {
                        var: e.var.clone(),
                        index: e.index.clone(),
                        term: self.remap_term(&e.term),
                    })
                    .collect(),
            ),
            Term::Arr { len, var, body } => Term::Arr {
                len: self.remap_term(len),
                var: var.clone(),
                body: self.remap_term(body),
            },
            Term::Fun(fun) => Term::Fun(Arc::new(self.remap_fun(fun))),
            Term::Len(a) => Term::Len(self.remap_term(a)),
            Term::AppErr(a, b) => Term::AppErr(self.remap_term(a), self.remap_term(b)),
            Term::AppFail(a, b) => Term::AppFail(self.remap_term(a), self.remap_term(b)),
            Term::From(a) => Term::From(self.remap_term(a)),
            Term::New { ty, init } => Term::New {
                ty: self.remap_term(ty),
                init: self.remap_term(init),
            },
            Term::Read(a) => Term::Read(self.remap_term(a)),
            Term::Write(a, b) => Term::Write(self.remap_term(a), self.remap_term(b)),
            Term::PtrTo(a) => Term::PtrTo(self.remap_term(a)),
            Term::Out(a) => Term::Out(self.remap_term(a)),
            Term::Unify(a, b) => Term::Unify(self.remap_term(a), self.remap_term(b)),
            Term::Join(a, b) => Term::Join(self.remap_term(a), self.remap_term(b)),
            Term::Let { var, bound, body } => Term::Let {
                var: var.clone(),
                bound: self.remap_term(bound),
                body: self.remap_term(body),
            },
            Term::Letrec { binds, body } => Term::Letrec {
                binds: binds
                    .iter()
                    .map(|(x, v)| (x.clone(), self.remap_value(v)))
                    .collect(),
                body: self.remap_term(body),
            },
            Term::If {
                var,
                cond,
                then_t,
                else_t,
            } => Term::If {
                var: var.clone(),
                cond: self.remap_term(cond),
                then_t: self.remap_term(then_t),
                else_t: self.remap_term(else_t),
            },
            Term::Stage {
                fx,
                dec,
                left,
                right,
            } => Term::Stage {
                fx: *fx,
                dec: *dec,
                left: self.remap_term(left),
                right: self.remap_term(right),
            },
            Term::FxThen { fx, body } => Term::FxThen {
                fx: *fx,
                body: self.remap_term(body),
            },
            Term::IfM {
                var,
                cond,
                then_t,
                saved,
                else_t,
            } => {
                let mut new_saved = PointerHeap::new();
                for (pl, cell) in saved.iter() {
                    new_saved.insert(self.map_ptr(*pl), self.remap_cell(cell));
                }
                Term::IfM {
                    var: var.clone(),
                    cond: self.remap_term(cond),
                    then_t: self.remap_term(then_t),
                    saved: new_saved,
                    else_t: self.remap_term(else_t),
                }
            }
            Term::Frame {
                env,
                body,
                allowed,
            } => Term::Frame {
                env: self.remap_env(env),
                body: self.remap_term(body),
                allowed: *allowed,
            },
            Term::Chk {
                subject,
                ae,
                pattern,
                then_t,
                else_t,
            } => {
                let mut new_ae = AssumedEqs::empty();
                for (a, b) in ae.iter() {
                    new_ae = new_ae.with(self.map_head(*a), self.map_head(*b));
                }
                Term::Chk {
                    subject: self.map_head(*subject),
                    ae: new_ae,
                    pattern: self.remap_term(pattern),
                    then_t: self.remap_term(then_t),
                    else_t: self.remap_term(else_t),
                }
            }
        })
    }
}
