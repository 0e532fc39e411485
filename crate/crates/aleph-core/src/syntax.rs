//! The term language, machine-extended syntax, heads, heaps, and environments,
//! together with the structural utilities (well-formedness, free variables,
//! alpha-equivalence) the rest of the runtime is built on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;

use crate::effects::Effect;

/// Three-valued inhabitance annotation: definitely inhabited (`T`),
/// definitely uninhabited (`F`), or unknown (`D`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decidability {
    Inhabited,
    Uninhabited,
    Unknown,
}

impl fmt::Display for Decidability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Decidability::Inhabited => "T",
            Decidability::Uninhabited => "F",
            Decidability::Unknown => "D",
        };
        write!(f, "{s}")
    }
}

/// Domain kind annotation on functions: how the domain term bounds the
/// function's actual domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    Contravariant,
    Invariant,
    AtLeast,
    AtMost,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::Contravariant => "contra",
            DomainKind::Invariant => "inv",
            DomainKind::AtLeast => "ge",
            DomainKind::AtMost => "le",
        };
        write!(f, "{s}")
    }
}

/// Unary integer operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
        }
    }
}

/// Binary integer operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinaryOp {
    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Mod => "mod",
        }
    }
}

/// Integer comparison operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

impl CompareOp {
    pub fn name(self) -> &'static str {
        match self {
            CompareOp::Lt => "lt",
            CompareOp::Le => "le",
            CompareOp::Gt => "gt",
            CompareOp::Ge => "ge",
            CompareOp::Ne => "ne",
        }
    }

    pub fn holds(self, a: &BigInt, b: &BigInt) -> bool {
        match self {
            CompareOp::Lt => a < b,
            CompareOp::Le => a <= b,
            CompareOp::Gt => a > b,
            CompareOp::Ge => a >= b,
            CompareOp::Ne => a != b,
        }
    }
}

/// A variable name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl AsRef<str>) -> Var {
        Var(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Var {
        Var::new(s)
    }
}

/// A head label: the identity of a runtime value in the head heap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeadLabel(pub u64);

impl fmt::Display for HeadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "hl#{}", self.0)
    }
}

/// A pointer label: the identity of a mutable cell in the pointer heap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointerLabel(pub u64);

impl fmt::Display for PointerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pl#{}", self.0)
    }
}

pub type TermRef = Arc<Term>;

/// Functions: ordinary lambdas and all-quantified contravariant functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fun {
    /// `(fun x domain dk dom_fx range_fx body)`; `param` binds in `body`.
    Lambda {
        param: Var,
        domain: TermRef,
        dk: DomainKind,
        dom_fx: Effect,
        range_fx: Effect,
        body: TermRef,
    },
    /// `(funall tv type_domain instantiation x domain dom_fx range_fx body)`;
    /// `type_var` binds in `domain` and `body`, `param` binds in
    /// `instantiation` and `body`.
    AllQuant {
        type_var: Var,
        type_domain: TermRef,
        instantiation: TermRef,
        param: Var,
        domain: TermRef,
        dom_fx: Effect,
        range_fx: Effect,
        body: TermRef,
    },
}

impl Fun {
    /// The domain kind of a function; all-quantified functions are
    /// contravariant by definition.
    pub fn domain_kind(&self) -> DomainKind {
        match self {
            Fun::Lambda { dk, .. } => *dk,
            Fun::AllQuant { .. } => DomainKind::Contravariant,
        }
    }
}

/// One entry of a fixed-table term: binder variable, integer index, element
/// term. The variable binds in the entries to its right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableEntry {
    pub var: Var,
    pub index: BigInt,
    pub term: TermRef,
}

/// The restricted values allowed on the right-hand side of letrec bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceValue {
    /// A tuple of already-bound variables, indexed by distinct integers.
    Tuple(Vec<(BigInt, Var)>),
    Fun(Arc<Fun>),
    /// A pointer creation whose initial contents is a bound variable.
    Ptr { ty: TermRef, init: Var },
}

/// Terms: every source-language form plus the four machine-extended forms
/// (`IfM`, head-label references, frames, and `Chk`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Var(Var),
    Falses,
    Anys,
    Int(BigInt),
    Ints,
    Uop(UnaryOp, TermRef),
    Bop(BinaryOp, TermRef, TermRef),
    Cop(CompareOp, TermRef, TermRef),
    Table(Vec<TableEntry>),
    Arr {
        len: TermRef,
        var: Var,
        body: TermRef,
    },
    Tabs,
    Fun(Arc<Fun>),
    Funs,
    Len(TermRef),
    AppErr(TermRef, TermRef),
    AppFail(TermRef, TermRef),
    From(TermRef),
    New {
        ty: TermRef,
        init: TermRef,
    },
    Read(TermRef),
    Write(TermRef, TermRef),
    PtrTo(TermRef),
    Ptrs,
    In,
    Out(TermRef),
    Unify(TermRef, TermRef),
    Join(TermRef, TermRef),
    Let {
        var: Var,
        bound: TermRef,
        body: TermRef,
    },
    Letrec {
        binds: Vec<(Var, SourceValue)>,
        body: TermRef,
    },
    If {
        var: Var,
        cond: TermRef,
        then_t: TermRef,
        else_t: TermRef,
    },
    Stage {
        fx: Effect,
        dec: Decidability,
        left: TermRef,
        right: TermRef,
    },
    FxThen {
        fx: Effect,
        body: TermRef,
    },
    /// Machine form of a conditional carrying the pointer heap snapshot taken
    /// when the conditional began.
    IfM {
        var: Var,
        cond: TermRef,
        then_t: TermRef,
        saved: PointerHeap,
        else_t: TermRef,
    },
    /// A reference to a head label.
    Hl(HeadLabel),
    /// Execute `body` in `env` with the given allowed effects.
    Frame {
        env: Environment,
        body: TermRef,
        allowed: Effect,
    },
    /// Test whether `subject` is one of the values of `pattern`; `ae` records
    /// assumed equalities between head labels for cycle detection.
    Chk {
        subject: HeadLabel,
        ae: AssumedEqs,
        pattern: TermRef,
        then_t: TermRef,
        else_t: TermRef,
    },
}

impl Term {
    pub fn is_label(&self) -> bool {
        matches!(self, Term::Hl(_))
    }

    pub fn as_label(&self) -> Option<HeadLabel> {
        match self {
            Term::Hl(hl) => Some(*hl),
            _ => None,
        }
    }

    /// True iff the term uses only source-syntax constructors (recursively).
    pub fn is_source_syntax(&self) -> bool {
        well_formed_source(self).is_empty()
    }
}

/// An environment: a sequence of variable/head-label bindings, extended on the
/// right. Lookup takes the rightmost binding, so later bindings shadow.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Environment(Option<Arc<EnvNode>>);

#[derive(PartialEq, Eq)]
struct EnvNode {
    prev: Environment,
    var: Var,
    label: HeadLabel,
}

impl Environment {
    pub fn empty() -> Environment {
        Environment(None)
    }

    pub fn extend(&self, var: Var, label: HeadLabel) -> Environment {
        Environment(Some(Arc::new(EnvNode {
            prev: self.clone(),
            var,
            label,
        })))
    }

    pub fn lookup(&self, var: &Var) -> Option<HeadLabel> {
        let mut cur = self;
        while let Some(node) = &cur.0 {
            if node.var == *var {
                return Some(node.label);
            }
            cur = &node.prev;
        }
        None
    }

    pub fn contains(&self, var: &Var) -> bool {
        self.lookup(var).is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        let mut cur = self;
        while let Some(node) = &cur.0 {
            n += 1;
            cur = &node.prev;
        }
        n
    }

    /// Bindings in binding order (oldest first).
    pub fn bindings(&self) -> Vec<(Var, HeadLabel)> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Some(node) = &cur.0 {
            out.push((node.var.clone(), node.label));
            cur = &node.prev;
        }
        out.reverse();
        out
    }
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (v, hl)) in self.bindings().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}={hl}")?;
        }
        write!(f, ")")
    }
}

/// A set of assumed equalities between head labels (ordered pairs).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssumedEqs(BTreeSet<(HeadLabel, HeadLabel)>);

impl AssumedEqs {
    pub fn empty() -> AssumedEqs {
        AssumedEqs(BTreeSet::new())
    }

    pub fn contains(&self, a: HeadLabel, b: HeadLabel) -> bool {
        self.0.contains(&(a, b))
    }

    pub fn with(&self, a: HeadLabel, b: HeadLabel) -> AssumedEqs {
        let mut s = self.0.clone();
        s.insert((a, b));
        AssumedEqs(s)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(HeadLabel, HeadLabel)> {
        self.0.iter()
    }
}

/// A runtime value: integer, table of labels, closure, or pointer label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Int(BigInt),
    /// Entries kept sorted by index; indices are pairwise distinct.
    Table(Vec<(BigInt, HeadLabel)>),
    Closure { env: Environment, fun: Arc<Fun> },
    Ptr(PointerLabel),
}

impl Head {
    /// Builds a table head, normalizing entry order by index.
    pub fn table(mut entries: Vec<(BigInt, HeadLabel)>) -> Head {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        debug_assert!(
            entries.windows(2).all(|w| w[0].0 != w[1].0),
            "table head indices must be distinct"
        );
        Head::Table(entries)
    }
}

/// Map from head labels to heads. Lookups outside the domain are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HeadHeap(BTreeMap<HeadLabel, Head>);

impl HeadHeap {
    pub fn new() -> HeadHeap {
        HeadHeap(BTreeMap::new())
    }

    pub fn get(&self, hl: HeadLabel) -> Option<&Head> {
        self.0.get(&hl)
    }

    pub fn contains(&self, hl: HeadLabel) -> bool {
        self.0.contains_key(&hl)
    }

    /// Extends the heap; the label must not already be bound.
    pub fn insert(&mut self, hl: HeadLabel, head: Head) {
        let prev = self.0.insert(hl, head);
        assert!(prev.is_none(), "head heap domains must be disjoint: {hl}");
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HeadLabel, &Head)> {
        self.0.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = HeadLabel> + '_ {
        self.0.keys().copied()
    }
}

/// One pointer cell: a type annotation (environment plus term, ignored by the
/// runtime) and the label of the current contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointerCell {
    pub env: Environment,
    pub ty: TermRef,
    pub contents: HeadLabel,
}

/// Map from pointer labels to cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PointerHeap(BTreeMap<PointerLabel, PointerCell>);

impl PointerHeap {
    pub fn new() -> PointerHeap {
        PointerHeap(BTreeMap::new())
    }

    pub fn get(&self, pl: PointerLabel) -> Option<&PointerCell> {
        self.0.get(&pl)
    }

    pub fn contains(&self, pl: PointerLabel) -> bool {
        self.0.contains_key(&pl)
    }

    pub fn insert(&mut self, pl: PointerLabel, cell: PointerCell) {
        let prev = self.0.insert(pl, cell);
        assert!(prev.is_none(), "pointer heap domains must be disjoint: {pl}");
    }

    /// Replaces the contents label of an existing cell.
    pub fn set_contents(&mut self, pl: PointerLabel, contents: HeadLabel) {
        let cell = self.0.get_mut(&pl).expect("pointer cell must exist");
        cell.contents = contents;
    }

    /// Replaces a whole cell (used when restoring a snapshot).
    pub fn replace_cell(&mut self, pl: PointerLabel, cell: PointerCell) {
        let prev = self.0.insert(pl, cell);
        assert!(prev.is_some(), "cannot restore an unknown pointer: {pl}");
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PointerLabel, &PointerCell)> {
        self.0.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = PointerLabel> + '_ {
        self.0.keys().copied()
    }
}

/// A machine state: head heap, pointer heap, environment, allowed effects, and
/// the current term, plus the counters fresh labels are drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub heads: HeadHeap,
    pub ptrs: PointerHeap,
    pub env: Environment,
    pub allowed: Effect,
    pub term: TermRef,
    pub next_head: u64,
    pub next_ptr: u64,
}

impl MachineState {
    /// The initial state for a program: empty heaps and environment, all
    /// effects allowed.
    pub fn initial(term: TermRef) -> MachineState {
        MachineState::initial_with_offsets(term, 0, 0)
    }

    /// Initial state with explicit label-counter offsets. The offsets are
    /// arbitrary; canonicalization erases them.
    pub fn initial_with_offsets(term: TermRef, next_head: u64, next_ptr: u64) -> MachineState {
        MachineState {
            heads: HeadHeap::new(),
            ptrs: PointerHeap::new(),
            env: Environment::empty(),
            allowed: Effect::ALL,
            term,
            next_head,
            next_ptr,
        }
    }

    pub fn fresh_head_label(&mut self) -> HeadLabel {
        loop {
            let hl = HeadLabel(self.next_head);
            self.next_head += 1;
            if !self.heads.contains(hl) {
                return hl;
            }
        }
    }

    pub fn fresh_ptr_label(&mut self) -> PointerLabel {
        loop {
            let pl = PointerLabel(self.next_ptr);
            self.next_ptr += 1;
            if !self.ptrs.contains(pl) {
                return pl;
            }
        }
    }
}

/// A structural well-formedness diagnostic, carrying the child-index path to
/// the offending subterm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WfDiagnostic {
    pub path: Vec<usize>,
    pub message: String,
}

impl fmt::Display for WfDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at ")?;
        if self.path.is_empty() {
            write!(f, "root")?;
        } else {
            for (i, p) in self.path.iter().enumerate() {
                if i > 0 {
                    write!(f, ".")?;
                }
                write!(f, "{p}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

fn check_distinct_indices(
    indices: impl Iterator<Item = BigInt>,
    path: &[usize],
    what: &str,
    out: &mut Vec<WfDiagnostic>,
) {
    let mut seen = BTreeSet::new();
    for ix in indices {
        if !seen.insert(ix.clone()) {
            out.push(WfDiagnostic {
                path: path.to_vec(),
                message: format!("duplicate {what} index {ix}"),
            });
        }
    }
}

fn wf_fun(fun: &Fun, path: &mut Vec<usize>, out: &mut Vec<WfDiagnostic>) {
    match fun {
        Fun::Lambda { domain, body, .. } => {
            path.push(0);
            wf_term(domain, path, out);
            path.pop();
            path.push(1);
            wf_term(body, path, out);
            path.pop();
        }
        Fun::AllQuant {
            type_domain,
            instantiation,
            domain,
            body,
            ..
        } => {
            for (i, t) in [type_domain, instantiation, domain, body].into_iter().enumerate() {
                path.push(i);
                wf_term(t, path, out);
                path.pop();
            }
        }
    }
}

fn wf_term(t: &Term, path: &mut Vec<usize>, out: &mut Vec<WfDiagnostic>) {
    let machine_form = |name: &str, out: &mut Vec<WfDiagnostic>| {
        out.push(WfDiagnostic {
            path: path.clone(),
            message: format!("machine-syntax constructor {name} is not source syntax"),
        });
    };
    match t {
        Term::Var(_)
        | Term::Falses
        | Term::Anys
        | Term::Int(_)
        | Term::Ints
        | Term::Tabs
        | Term::Funs
        | Term::Ptrs
        | Term::In => {}
        Term::Uop(_, a) | Term::Len(a) | Term::From(a) | Term::Read(a) | Term::PtrTo(a)
        | Term::Out(a) | Term::FxThen { body: a, .. } => {
            path.push(0);
            wf_term(a, path, out);
            path.pop();
        }
        Term::Bop(_, a, b)
        | Term::Cop(_, a, b)
        | Term::AppErr(a, b)
        | Term::AppFail(a, b)
        | Term::Write(a, b)
        | Term::Unify(a, b)
        | Term::Join(a, b)
        | Term::New { ty: a, init: b } => {
            path.push(0);
            wf_term(a, path, out);
            path.pop();
            path.push(1);
            wf_term(b, path, out);
            path.pop();
        }
        Term::Table(entries) => {
            check_distinct_indices(entries.iter().map(|e| e.index.clone()), path, "table", out);
            for (i, e) in entries.iter().enumerate() {
                path.push(i);
                wf_term(&e.term, path, out);
                path.pop();
            }
        }
        Term::Arr { len, body, .. } => {
            path.push(0);
            wf_term(len, path, out);
            path.pop();
            path.push(1);
            wf_term(body, path, out);
            path.pop();
        }
        Term::Fun(fun) => wf_fun(fun, path, out),
        Term::Let { bound, body, .. } => {
            path.push(0);
            wf_term(bound, path, out);
            path.pop();
            path.push(1);
            wf_term(body, path, out);
            path.pop();
        }
        Term::Letrec { binds, body } => {
            for (i, (_, v)) in binds.iter().enumerate() {
                path.push(i);
                match v {
                    SourceValue::Tuple(entries) => {
                        check_distinct_indices(
                            entries.iter().map(|(ix, _)| ix.clone()),
                            path,
                            "tuple",
                            out,
                        );
                    }
                    SourceValue::Fun(fun) => wf_fun(fun, path, out),
                    SourceValue::Ptr { ty, .. } => {
                        path.push(0);
                        wf_term(ty, path, out);
                        path.pop();
                    }
                }
                path.pop();
            }
            path.push(binds.len());
            wf_term(body, path, out);
            path.pop();
        }
        Term::If {
            cond,
            then_t,
            else_t,
            ..
        } => {
            for (i, s) in [cond, then_t, else_t].into_iter().enumerate() {
                path.push(i);
                wf_term(s, path, out);
                path.pop();
            }
        }
        Term::Stage { left, right, .. } => {
            path.push(0);
            wf_term(left, path, out);
            path.pop();
            path.push(1);
            wf_term(right, path, out);
            path.pop();
        }
        Term::IfM { .. } => machine_form("ifm", out),
        Term::Hl(_) => machine_form("head label", out),
        Term::Frame { .. } => machine_form("frame", out),
        Term::Chk { .. } => machine_form("chk", out),
    }
}

/// Structural well-formedness of a source term: only source-syntax
/// constructors, and distinct indices in every fixed table and tuple value.
/// Returns one diagnostic per violation.
pub fn well_formed_source(t: &Term) -> Vec<WfDiagnostic> {
    let mut out = Vec::new();
    wf_term(t, &mut Vec::new(), &mut out);
    out
}

/// Well-formedness of a whole program: structural checks plus closedness (a
/// program is a closed term).
pub fn well_formed_program(t: &Term) -> Vec<WfDiagnostic> {
    let mut out = well_formed_source(t);
    let mut scope = Vec::new();
    let mut path = Vec::new();
    unbound_vars(t, &mut scope, &mut path, &mut out);
    out
}

fn unbound_vars(
    t: &Term,
    scope: &mut Vec<Var>,
    path: &mut Vec<usize>,
    out: &mut Vec<WfDiagnostic>,
) {
    let visit_var = |x: &Var, scope: &Vec<Var>, out: &mut Vec<WfDiagnostic>, path: &Vec<usize>| {
        if !scope.contains(x) {
            out.push(WfDiagnostic {
                path: path.clone(),
                message: format!("unbound variable {x}"),
            });
        }
    };
    match t {
        Term::Var(x) => visit_var(x, scope, out, path),
        Term::Falses
        | Term::Anys
        | Term::Int(_)
        | Term::Ints
        | Term::Tabs
        | Term::Funs
        | Term::Ptrs
        | Term::In
        | Term::Hl(_) => {}
        Term::Uop(_, a) | Term::Len(a) | Term::From(a) | Term::Read(a) | Term::PtrTo(a)
        | Term::Out(a) | Term::FxThen { body: a, .. } => {
            path.push(0);
            unbound_vars(a, scope, path, out);
            path.pop();
        }
        Term::Bop(_, a, b)
        | Term::Cop(_, a, b)
        | Term::AppErr(a, b)
        | Term::AppFail(a, b)
        | Term::Write(a, b)
        | Term::Unify(a, b)
        | Term::Join(a, b)
        | Term::New { ty: a, init: b } => {
            path.push(0);
            unbound_vars(a, scope, path, out);
            path.pop();
            path.push(1);
            unbound_vars(b, scope, path, out);
            path.pop();
        }
        Term::Table(entries) => {
            let base = scope.len();
            for (i, e) in entries.iter().enumerate() {
                path.push(i);
                unbound_vars(&e.term, scope, path, out);
                path.pop();
                scope.push(e.var.clone());
            }
            scope.truncate(base);
        }
        Term::Arr { len, var, body } => {
            path.push(0);
            unbound_vars(len, scope, path, out);
            path.pop();
            scope.push(var.clone());
            path.push(1);
            unbound_vars(body, scope, path, out);
            path.pop();
            scope.pop();
        }
        Term::Fun(fun) => unbound_fun(fun, scope, path, out),
        Term::Let { var, bound, body } => {
            path.push(0);
            unbound_vars(bound, scope, path, out);
            path.pop();
            scope.push(var.clone());
            path.push(1);
            unbound_vars(body, scope, path, out);
            path.pop();
            scope.pop();
        }
        Term::Letrec { binds, body } => {
            let base = scope.len();
            for (x, _) in binds {
                scope.push(x.clone());
            }
            for (i, (_, v)) in binds.iter().enumerate() {
                path.push(i);
                match v {
                    SourceValue::Tuple(entries) => {
                        for (_, x) in entries {
                            visit_var(x, scope, out, path);
                        }
                    }
                    SourceValue::Fun(fun) => unbound_fun(fun, scope, path, out),
                    SourceValue::Ptr { ty, init } => {
                        path.push(0);
                        unbound_vars(ty, scope, path, out);
                        path.pop();
                        visit_var(init, scope, out, path);
                    }
                }
                path.pop();
            }
            path.push(binds.len());
            unbound_vars(body, scope, path, out);
            path.pop();
            scope.truncate(base);
        }
        Term::If {
            var,
            cond,
            then_t,
            else_t,
        } => {
            path.push(0);
            unbound_vars(cond, scope, path, out);
            path.pop();
            scope.push(var.clone());
            path.push(1);
            unbound_vars(then_t, scope, path, out);
            path.pop();
            scope.pop();
            path.push(2);
            unbound_vars(else_t, scope, path, out);
            path.pop();
        }
        Term::Stage { left, right, .. } => {
            path.push(0);
            unbound_vars(left, scope, path, out);
            path.pop();
            path.push(1);
            unbound_vars(right, scope, path, out);
            path.pop();
        }
        // Machine forms are flagged by the structural pass; their variables
        // are resolved against machine environments, not lexical scope.
        Term::IfM { .. } | Term::Frame { .. } | Term::Chk { .. } => {}
    }
}

fn unbound_fun(fun: &Fun, scope: &mut Vec<Var>, path: &mut Vec<usize>, out: &mut Vec<WfDiagnostic>) {
    match fun {
        Fun::Lambda {
            param,
            domain,
            body,
            ..
        } => {
            path.push(0);
            unbound_vars(domain, scope, path, out);
            path.pop();
            scope.push(param.clone());
            path.push(1);
            unbound_vars(body, scope, path, out);
            path.pop();
            scope.pop();
        }
        Fun::AllQuant {
            type_var,
            type_domain,
            instantiation,
            param,
            domain,
            body,
            ..
        } => {
            path.push(0);
            unbound_vars(type_domain, scope, path, out);
            path.pop();

            scope.push(param.clone());
            path.push(1);
            unbound_vars(instantiation, scope, path, out);
            path.pop();
            scope.pop();

            scope.push(type_var.clone());
            path.push(2);
            unbound_vars(domain, scope, path, out);
            path.pop();

            scope.push(param.clone());
            path.push(3);
            unbound_vars(body, scope, path, out);
            path.pop();
            scope.pop();
            scope.pop();
        }
    }
}

/// The set of variables free in a term, under the binder structure of the
/// language (including the dependent-table rule that each entry variable binds
/// in later entries, and letrec's mutual binding).
pub fn free_vars(t: &Term) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    let mut scope = Vec::new();
    fv(t, &mut scope, &mut out);
    out
}

fn fv(t: &Term, scope: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
    match t {
        Term::Var(x) => {
            if !scope.contains(x) {
                out.insert(x.clone());
            }
        }
        Term::Falses
        | Term::Anys
        | Term::Int(_)
        | Term::Ints
        | Term::Tabs
        | Term::Funs
        | Term::Ptrs
        | Term::In
        | Term::Hl(_) => {}
        Term::Uop(_, a) | Term::Len(a) | Term::From(a) | Term::Read(a) | Term::PtrTo(a)
        | Term::Out(a) | Term::FxThen { body: a, .. } => fv(a, scope, out),
        Term::Bop(_, a, b)
        | Term::Cop(_, a, b)
        | Term::AppErr(a, b)
        | Term::AppFail(a, b)
        | Term::Write(a, b)
        | Term::Unify(a, b)
        | Term::Join(a, b)
        | Term::New { ty: a, init: b } => {
            fv(a, scope, out);
            fv(b, scope, out);
        }
        Term::Table(entries) => {
            let base = scope.len();
            for e in entries {
                fv(&e.term, scope, out);
                scope.push(e.var.clone());
            }
            scope.truncate(base);
        }
        Term::Arr { len, var, body } => {
            fv(len, scope, out);
            scope.push(var.clone());
            fv(body, scope, out);
            scope.pop();
        }
        Term::Fun(fun) => fv_fun(fun, scope, out),
        Term::Let { var, bound, body } => {
            fv(bound, scope, out);
            scope.push(var.clone());
            fv(body, scope, out);
            scope.pop();
        }
        Term::Letrec { binds, body } => {
            let base = scope.len();
            for (x, _) in binds {
                scope.push(x.clone());
            }
            for (_, v) in binds {
                match v {
                    SourceValue::Tuple(entries) => {
                        for (_, x) in entries {
                            if !scope.contains(x) {
                                out.insert(x.clone());
                            }
                        }
                    }
                    SourceValue::Fun(fun) => fv_fun(fun, scope, out),
                    SourceValue::Ptr { ty, init } => {
                        fv(ty, scope, out);
                        if !scope.contains(init) {
                            out.insert(init.clone());
                        }
                    }
                }
            }
            fv(body, scope, out);
            scope.truncate(base);
        }
        Term::If {
            var,
            cond,
            then_t,
            else_t,
        } => {
            fv(cond, scope, out);
            scope.push(var.clone());
            fv(then_t, scope, out);
            scope.pop();
            fv(else_t, scope, out);
        }
        Term::Stage { left, right, .. } => {
            fv(left, scope, out);
            fv(right, scope, out);
        }
        Term::IfM {
            var,
            cond,
            then_t,
            saved,
            else_t,
        } => {
            fv(cond, scope, out);
            scope.push(var.clone());
            fv(then_t, scope, out);
            scope.pop();
            fv(else_t, scope, out);
            for (_, cell) in saved.iter() {
                fv_under_env(&cell.ty, &cell.env, scope, out);
            }
        }
        Term::Frame { env, body, .. } => fv_under_env(body, env, scope, out),
        Term::Chk {
            pattern,
            then_t,
            else_t,
            ..
        } => {
            fv(pattern, scope, out);
            fv(then_t, scope, out);
            fv(else_t, scope, out);
        }
    }
}

fn fv_under_env(t: &Term, env: &Environment, scope: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
    // The variables of a frame or pointer-cell environment bind in its term;
    // the lexical scope outside does not reach in.
    let mut inner: Vec<Var> = env.bindings().into_iter().map(|(v, _)| v).collect();
    let mut inner_out = BTreeSet::new();
    fv(t, &mut inner, &mut inner_out);
    let _ = scope;
    out.extend(inner_out);
}

fn fv_fun(fun: &Fun, scope: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
    match fun {
        Fun::Lambda {
            param,
            domain,
            body,
            ..
        } => {
            fv(domain, scope, out);
            scope.push(param.clone());
            fv(body, scope, out);
            scope.pop();
        }
        Fun::AllQuant {
            type_var,
            type_domain,
            instantiation,
            param,
            domain,
            body,
            ..
        } => {
            fv(type_domain, scope, out);
            scope.push(param.clone());
            fv(instantiation, scope, out);
            scope.pop();
            scope.push(type_var.clone());
            fv(domain, scope, out);
            scope.push(param.clone());
            fv(body, scope, out);
            scope.pop();
            scope.pop();
        }
    }
}

/// True iff `t1` and `t2` are equal up to consistent renaming of bound
/// variables. Head and pointer labels are compared rigidly here; label
/// alpha-variance is handled by state canonicalization.
pub fn alpha_equal(t1: &Term, t2: &Term) -> bool {
    let mut cx = AlphaCtx {
        left: Vec::new(),
        right: Vec::new(),
    };
    alpha(t1, t2, &mut cx)
}

struct AlphaCtx {
    left: Vec<Var>,
    right: Vec<Var>,
}

impl AlphaCtx {
    fn push(&mut self, a: &Var, b: &Var) {
        self.left.push(a.clone());
        self.right.push(b.clone());
    }

    fn pop(&mut self, n: usize) {
        for _ in 0..n {
            self.left.pop();
            self.right.pop();
        }
    }

    fn var_eq(&self, a: &Var, b: &Var) -> bool {
        let la = self.left.iter().rposition(|v| v == a);
        let lb = self.right.iter().rposition(|v| v == b);
        match (la, lb) {
            (Some(i), Some(j)) => i == j,
            (None, None) => a == b,
            _ => false,
        }
    }
}

fn alpha(a: &Term, b: &Term, cx: &mut AlphaCtx) -> bool {
    use Term::*;
    match (a, b) {
        (Var(x), Var(y)) => cx.var_eq(x, y),
        (Falses, Falses)
        | (Anys, Anys)
        | (Ints, Ints)
        | (Tabs, Tabs)
        | (Funs, Funs)
        | (Ptrs, Ptrs)
        | (In, In) => true,
        (Int(i), Int(j)) => i == j,
        (Uop(o1, t1), Uop(o2, t2)) => o1 == o2 && alpha(t1, t2, cx),
        (Bop(o1, a1, b1), Bop(o2, a2, b2)) => o1 == o2 && alpha(a1, a2, cx) && alpha(b1, b2, cx),
        (Cop(o1, a1, b1), Cop(o2, a2, b2)) => o1 == o2 && alpha(a1, a2, cx) && alpha(b1, b2, cx),
        (Table(e1), Table(e2)) => {
            if e1.len() != e2.len() {
                return false;
            }
            let mut pushed = 0;
            let mut ok = true;
            for (x, y) in e1.iter().zip(e2.iter()) {
                if x.index != y.index || !alpha(&x.term, &y.term, cx) {
                    ok = false;
                    break;
                }
                cx.push(&x.var, &y.var);
                pushed += 1;
            }
            cx.pop(pushed);
            ok
        }
        (
            Arr {
                len: l1,
                var: v1,
                body: b1,
            },
            Arr {
                len: l2,
                var: v2,
                body: b2,
            },
        ) => {
            if !alpha(l1, l2, cx) {
                return false;
            }
            cx.push(v1, v2);
            let ok = alpha(b1, b2, cx);
            cx.pop(1);
            ok
        }
        (Fun(f1), Fun(f2)) => alpha_fun(f1, f2, cx),
        (Len(t1), Len(t2)) | (From(t1), From(t2)) | (Read(t1), Read(t2))
        | (PtrTo(t1), PtrTo(t2)) | (Out(t1), Out(t2)) => alpha(t1, t2, cx),
        (AppErr(a1, b1), AppErr(a2, b2))
        | (AppFail(a1, b1), AppFail(a2, b2))
        | (Write(a1, b1), Write(a2, b2))
        | (Unify(a1, b1), Unify(a2, b2))
        | (Join(a1, b1), Join(a2, b2)) => alpha(a1, a2, cx) && alpha(b1, b2, cx),
        (New { ty: t1, init: i1 }, New { ty: t2, init: i2 }) => {
            alpha(t1, t2, cx) && alpha(i1, i2, cx)
        }
        (
            Let {
                var: v1,
                bound: b1,
                body: t1,
            },
            Let {
                var: v2,
                bound: b2,
                body: t2,
            },
        ) => {
            if !alpha(b1, b2, cx) {
                return false;
            }
            cx.push(v1, v2);
            let ok = alpha(t1, t2, cx);
            cx.pop(1);
            ok
        }
        (
            Letrec {
                binds: bs1,
                body: t1,
            },
            Letrec {
                binds: bs2,
                body: t2,
            },
        ) => {
            if bs1.len() != bs2.len() {
                return false;
            }
            for ((x, _), (y, _)) in bs1.iter().zip(bs2.iter()) {
                cx.push(x, y);
            }
            let mut ok = true;
            for ((_, v1), (_, v2)) in bs1.iter().zip(bs2.iter()) {
                if !alpha_value(v1, v2, cx) {
                    ok = false;
                    break;
                }
            }
            ok = ok && alpha(t1, t2, cx);
            cx.pop(bs1.len());
            ok
        }
        (
            If {
                var: v1,
                cond: c1,
                then_t: th1,
                else_t: e1,
            },
            If {
                var: v2,
                cond: c2,
                then_t: th2,
                else_t: e2,
            },
        ) => {
            if !alpha(c1, c2, cx) {
                return false;
            }
            cx.push(v1, v2);
            let ok = alpha(th1, th2, cx);
            cx.pop(1);
            ok && alpha(e1, e2, cx)
        }
        (
            Stage {
                fx: f1,
                dec: d1,
                left: l1,
                right: r1,
            },
            Stage {
                fx: f2,
                dec: d2,
                left: l2,
                right: r2,
            },
        ) => f1 == f2 && d1 == d2 && alpha(l1, l2, cx) && alpha(r1, r2, cx),
        (FxThen { fx: f1, body: b1 }, FxThen { fx: f2, body: b2 }) => {
            f1 == f2 && alpha(b1, b2, cx)
        }
        (
            IfM {
                var: v1,
                cond: c1,
                then_t: th1,
                saved: s1,
                else_t: e1,
            },
            IfM {
                var: v2,
                cond: c2,
                then_t: th2,
                saved: s2,
                else_t: e2,
            },
        ) => {
            if !alpha(c1, c2, cx) || s1 != s2 {
                return false;
            }
            cx.push(v1, v2);
            let ok = alpha(th1, th2, cx);
            cx.pop(1);
            ok && alpha(e1, e2, cx)
        }
        (Hl(l1), Hl(l2)) => l1 == l2,
        (
            Frame {
                env: env1,
                body: b1,
                allowed: fx1,
            },
            Frame {
                env: env2,
                body: b2,
                allowed: fx2,
            },
        ) => {
            if fx1 != fx2 {
                return false;
            }
            let bs1 = env1.bindings();
            let bs2 = env2.bindings();
            if bs1.len() != bs2.len() {
                return false;
            }
            if bs1
                .iter()
                .zip(bs2.iter())
                .any(|((_, l1), (_, l2))| l1 != l2)
            {
                return false;
            }
            // Frame environments shield the body from the outer scope.
            let mut inner = AlphaCtx {
                left: bs1.into_iter().map(|(v, _)| v).collect(),
                right: bs2.into_iter().map(|(v, _)| v).collect(),
            };
            alpha(b1, b2, &mut inner)
        }
        (
            Chk {
                subject: s1,
                ae: ae1,
                pattern: p1,
                then_t: th1,
                else_t: e1,
            },
            Chk {
                subject: s2,
                ae: ae2,
                pattern: p2,
                then_t: th2,
                else_t: e2,
            },
        ) => {
            s1 == s2
                && ae1 == ae2
                && alpha(p1, p2, cx)
                && alpha(th1, th2, cx)
                && alpha(e1, e2, cx)
        }
        _ => false,
    }
}

fn alpha_value(a: &SourceValue, b: &SourceValue, cx: &mut AlphaCtx) -> bool {
    match (a, b) {
        (SourceValue::Tuple(e1), SourceValue::Tuple(e2)) => {
            e1.len() == e2.len()
                && e1
                    .iter()
                    .zip(e2.iter())
                    .all(|((i1, x), (i2, y))| i1 == i2 && cx.var_eq(x, y))
        }
        (SourceValue::Fun(f1), SourceValue::Fun(f2)) => alpha_fun(f1, f2, cx),
        (SourceValue::Ptr { ty: t1, init: x1 }, SourceValue::Ptr { ty: t2, init: x2 }) => {
            alpha(t1, t2, cx) && cx.var_eq(x1, x2)
        }
        _ => false,
    }
}

fn alpha_fun(a: &Fun, b: &Fun, cx: &mut AlphaCtx) -> bool {
    match (a, b) {
        (
            Fun::Lambda {
                param: p1,
                domain: d1,
                dk: k1,
                dom_fx: df1,
                range_fx: rf1,
                body: b1,
            },
            Fun::Lambda {
                param: p2,
                domain: d2,
                dk: k2,
                dom_fx: df2,
                range_fx: rf2,
                body: b2,
            },
        ) => {
            if k1 != k2 || df1 != df2 || rf1 != rf2 || !alpha(d1, d2, cx) {
                return false;
            }
            cx.push(p1, p2);
            let ok = alpha(b1, b2, cx);
            cx.pop(1);
            ok
        }
        (
            Fun::AllQuant {
                type_var: tv1,
                type_domain: td1,
                instantiation: in1,
                param: p1,
                domain: d1,
                dom_fx: df1,
                range_fx: rf1,
                body: b1,
            },
            Fun::AllQuant {
                type_var: tv2,
                type_domain: td2,
                instantiation: in2,
                param: p2,
                domain: d2,
                dom_fx: df2,
                range_fx: rf2,
                body: b2,
            },
        ) => {
            if df1 != df2 || rf1 != rf2 || !alpha(td1, td2, cx) {
                return false;
            }
            cx.push(p1, p2);
            let ok_inst = alpha(in1, in2, cx);
            cx.pop(1);
            if !ok_inst {
                return false;
            }
            cx.push(tv1, tv2);
            let ok_dom = alpha(d1, d2, cx);
            if !ok_dom {
                cx.pop(1);
                return false;
            }
            cx.push(p1, p2);
            let ok = alpha(b1, b2, cx);
            cx.pop(2);
            ok
        }
        _ => false,
    }
}

/// True iff `t` is a revert-to-generate term: one that is tested by first
/// generating its value and then comparing.
pub fn is_revert_to_generate(t: &Term) -> bool {
    matches!(
        t,
        Term::Uop(..)
            | Term::Bop(..)
            | Term::Len(_)
            | Term::AppErr(..)
            | Term::AppFail(..)
            | Term::New { .. }
            | Term::Read(_)
            | Term::Write(..)
            | Term::PtrTo(_)
            | Term::In
            | Term::Out(_)
            | Term::FxThen { .. }
    )
}

/// Convenience constructors for building terms in tests and tooling.
pub mod build {
    use super::*;

    pub fn var(name: &str) -> TermRef {
        Arc::new(Term::Var(Var::new(name)))
    }

    pub fn int(i: i64) -> TermRef {
        Arc::new(Term::Int(BigInt::from(i)))
    }

    pub fn falses() -> TermRef {
        Arc::new(Term::Falses)
    }

    pub fn anys() -> TermRef {
        Arc::new(Term::Anys)
    }

    pub fn ints() -> TermRef {
        Arc::new(Term::Ints)
    }

    pub fn tabs() -> TermRef {
        Arc::new(Term::Tabs)
    }

    pub fn funs() -> TermRef {
        Arc::new(Term::Funs)
    }

    pub fn ptrs() -> TermRef {
        Arc::new(Term::Ptrs)
    }

    pub fn input() -> TermRef {
        Arc::new(Term::In)
    }

    pub fn uop(op: UnaryOp, t: TermRef) -> TermRef {
        Arc::new(Term::Uop(op, t))
    }

    pub fn bop(op: BinaryOp, a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Bop(op, a, b))
    }

    pub fn cop(op: CompareOp, a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Cop(op, a, b))
    }

    pub fn table(entries: Vec<(&str, i64, TermRef)>) -> TermRef {
        Arc::new(Term::Table(
            entries
                .into_iter()
                .map(|(v, i, t)| TableEntry {
                    var: Var::new(v),
                    index: BigInt::from(i),
                    term: t,
                })
                .collect(),
        ))
    }

    pub fn arr(len: TermRef, var: &str, body: TermRef) -> TermRef {
        Arc::new(Term::Arr {
            len,
            var: Var::new(var),
            body,
        })
    }

    pub fn lambda(
        param: &str,
        domain: TermRef,
        dk: DomainKind,
        dom_fx: Effect,
        range_fx: Effect,
        body: TermRef,
    ) -> TermRef {
        Arc::new(Term::Fun(Arc::new(Fun::Lambda {
            param: Var::new(param),
            domain,
            dk,
            dom_fx,
            range_fx,
            body,
        })))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn all_quant(
        type_var: &str,
        type_domain: TermRef,
        instantiation: TermRef,
        param: &str,
        domain: TermRef,
        dom_fx: Effect,
        range_fx: Effect,
        body: TermRef,
    ) -> TermRef {
        Arc::new(Term::Fun(Arc::new(Fun::AllQuant {
            type_var: Var::new(type_var),
            type_domain,
            instantiation,
            param: Var::new(param),
            domain,
            dom_fx,
            range_fx,
            body,
        })))
    }

    pub fn len(t: TermRef) -> TermRef {
        Arc::new(Term::Len(t))
    }

    pub fn app_err(f: TermRef, a: TermRef) -> TermRef {
        Arc::new(Term::AppErr(f, a))
    }

    pub fn app_fail(f: TermRef, a: TermRef) -> TermRef {
        Arc::new(Term::AppFail(f, a))
    }

    pub fn from(t: TermRef) -> TermRef {
        Arc::new(Term::From(t))
    }

    pub fn new_ptr(ty: TermRef, init: TermRef) -> TermRef {
        Arc::new(Term::New { ty, init })
    }

    pub fn read(t: TermRef) -> TermRef {
        Arc::new(Term::Read(t))
    }

    pub fn write(p: TermRef, v: TermRef) -> TermRef {
        Arc::new(Term::Write(p, v))
    }

    pub fn ptr_to(t: TermRef) -> TermRef {
        Arc::new(Term::PtrTo(t))
    }

    pub fn out(t: TermRef) -> TermRef {
        Arc::new(Term::Out(t))
    }

    pub fn unify(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Unify(a, b))
    }

    pub fn join(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Join(a, b))
    }

    pub fn let_(var: &str, bound: TermRef, body: TermRef) -> TermRef {
        Arc::new(Term::Let {
            var: Var::new(var),
            bound,
            body,
        })
    }

    pub fn letrec(binds: Vec<(&str, SourceValue)>, body: TermRef) -> TermRef {
        Arc::new(Term::Letrec {
            binds: binds
                .into_iter()
                .map(|(v, val)| (Var::new(v), val))
                .collect(),
            body,
        })
    }

    pub fn tuple_value(entries: Vec<(i64, &str)>) -> SourceValue {
        SourceValue::Tuple(
            entries
                .into_iter()
                .map(|(i, v)| (BigInt::from(i), Var::new(v)))
                .collect(),
        )
    }

    pub fn fun_value(t: TermRef) -> SourceValue {
        match &*t {
            Term::Fun(f) => SourceValue::Fun(f.clone()),
            _ => panic!("fun_value expects a function term"),
        }
    }

    pub fn ptr_value(ty: TermRef, init: &str) -> SourceValue {
        SourceValue::Ptr {
            ty,
            init: Var::new(init),
        }
    }

    pub fn if_(var: &str, cond: TermRef, then_t: TermRef, else_t: TermRef) -> TermRef {
        Arc::new(Term::If {
            var: Var::new(var),
            cond,
            then_t,
            else_t,
        })
    }

    pub fn stage(fx: Effect, dec: Decidability, left: TermRef, right: TermRef) -> TermRef {
        Arc::new(Term::Stage {
            fx,
            dec,
            left,
            right,
        })
    }

    pub fn fx_then(fx: Effect, body: TermRef) -> TermRef {
        Arc::new(Term::FxThen { fx, body })
    }

    pub fn hl(n: u64) -> TermRef {
        Arc::new(Term::Hl(HeadLabel(n)))
    }
}

#[cfg(test)]
mod tests {
    use super::build::*;
    use super::*;

    #[test]
    fn duplicate_table_index_is_flagged() {
        let t = table(vec![("x", 0, int(1)), ("y", 0, int(2))]);
        let diags = well_formed_source(&t);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("duplicate table index 0"));
    }

    #[test]
    fn closed_let_is_well_formed() {
        let t = let_("x", int(5), var("x"));
        assert!(well_formed_source(&t).is_empty());
        assert!(well_formed_program(&t).is_empty());
    }

    #[test]
    fn bare_variable_program_is_open() {
        let t = var("x");
        let diags = well_formed_program(&t);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("unbound variable x"));
    }

    #[test]
    fn if_binder_does_not_reach_else_branch() {
        let t = if_("x", int(5), var("x"), var("x"));
        let diags = well_formed_program(&t);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].path, vec![2]);
    }

    #[test]
    fn free_vars_examples() {
        assert_eq!(
            free_vars(&var("x")),
            BTreeSet::from([Var::new("x")])
        );
        assert!(free_vars(&let_("x", int(5), var("x"))).is_empty());
        // Each table entry variable binds in the later entries.
        let t = table(vec![("a", 0, int(1)), ("b", 1, var("a"))]);
        assert!(free_vars(&t).is_empty());
        let t = table(vec![("a", 0, var("b")), ("b", 1, int(1))]);
        assert_eq!(free_vars(&t), BTreeSet::from([Var::new("b")]));
    }

    #[test]
    fn letrec_binds_mutually() {
        let t = letrec(
            vec![
                ("a", tuple_value(vec![(0, "b")])),
                ("b", tuple_value(vec![(0, "a")])),
            ],
            var("a"),
        );
        assert!(free_vars(&t).is_empty());
        assert!(well_formed_program(&t).is_empty());
    }

    #[test]
    fn all_quant_scoping() {
        // type_var binds in domain and body; param binds in instantiation and body.
        let f = all_quant(
            "tv",
            ints(),
            var("p"),
            "p",
            var("tv"),
            Effect::NONE,
            Effect::NONE,
            bop(BinaryOp::Add, var("tv"), var("p")),
        );
        assert!(free_vars(&f).is_empty());
        let f = all_quant(
            "tv",
            var("tv"),
            int(0),
            "p",
            ints(),
            Effect::NONE,
            Effect::NONE,
            int(0),
        );
        assert_eq!(free_vars(&f), BTreeSet::from([Var::new("tv")]));
    }

    #[test]
    fn alpha_examples() {
        let f1 = lambda("x", ints(), DomainKind::Invariant, Effect::NONE, Effect::NONE, var("x"));
        let f2 = lambda("y", ints(), DomainKind::Invariant, Effect::NONE, Effect::NONE, var("y"));
        assert!(alpha_equal(&f1, &f2));
        assert!(!alpha_equal(&var("x"), &var("y")));
        assert!(!alpha_equal(
            &let_("x", int(5), var("x")),
            &let_("x", int(6), var("x"))
        ));
        // Renaming a bound variable preserves equality; the binder position matters.
        assert!(alpha_equal(
            &let_("x", int(5), var("x")),
            &let_("z", int(5), var("z"))
        ));
        assert!(!alpha_equal(
            &let_("x", int(5), var("x")),
            &let_("x", int(5), var("y"))
        ));
    }

    #[test]
    fn alpha_table_binders() {
        let t1 = table(vec![("a", 0, int(1)), ("b", 1, var("a"))]);
        let t2 = table(vec![("c", 0, int(1)), ("d", 1, var("c"))]);
        assert!(alpha_equal(&t1, &t2));
        let t3 = table(vec![("c", 0, int(1)), ("d", 1, var("d"))]);
        assert!(!alpha_equal(&t1, &t3));
    }

    #[test]
    fn revert_to_generate_grammar() {
        assert!(is_revert_to_generate(&len(int(1))));
        assert!(is_revert_to_generate(&fx_then(
            Effect::from_atoms(&[crate::effects::EffectAtom::P]),
            int(1)
        )));
        assert!(is_revert_to_generate(&Term::In));
        assert!(!is_revert_to_generate(&ints()));
        assert!(!is_revert_to_generate(&cop(CompareOp::Lt, int(1), int(2))));
        assert!(!is_revert_to_generate(&unify(int(1), ints())));
    }

    #[test]
    fn environment_shadows_rightmost() {
        let env = Environment::empty()
            .extend(Var::new("x"), HeadLabel(0))
            .extend(Var::new("y"), HeadLabel(1))
            .extend(Var::new("x"), HeadLabel(2));
        assert_eq!(env.lookup(&Var::new("x")), Some(HeadLabel(2)));
        assert_eq!(env.lookup(&Var::new("y")), Some(HeadLabel(1)));
        assert_eq!(env.lookup(&Var::new("z")), None);
        assert_eq!(env.len(), 3);
        assert_eq!(
            env.bindings()
                .iter()
                .map(|(v, _)| v.as_str().to_string())
                .collect::<Vec<_>>(),
            vec!["x", "y", "x"]
        );
    }

    #[test]
    fn table_head_normalizes_order() {
        let h1 = Head::table(vec![(BigInt::from(1), HeadLabel(5)), (BigInt::from(0), HeadLabel(6))]);
        let h2 = Head::table(vec![(BigInt::from(0), HeadLabel(6)), (BigInt::from(1), HeadLabel(5))]);
        assert_eq!(h1, h2);
    }
}
