//! The single-step reduction engine: generate-mode and test-mode rules,
//! auxiliary head predicates, letrec value evaluation, context decomposition,
//! pointer-heap restoration, and state canonicalization.

use std::collections::VecDeque;
use std::fmt;

use num_bigint::BigInt;
use num_traits::Signed;

use crate::effects::EffectAtom;
use crate::syntax::{
    DomainKind, Environment, Fun, Head, HeadHeap, HeadLabel, MachineState, PointerCell,
    PointerHeap, PointerLabel, SourceValue, Term, TermRef, Var,
};

mod canon;
mod guards;
mod step;
#[cfg(test)]
mod step_tests;

pub use canon::{canonicalize, render_state, state_digest};
pub use guards::{applicable_rule, guard_scan, Applicable, GuardReport};
pub use step::step;

/// What one machine step performs: nothing observable, input or output of an
/// integer, or a pointer effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Pure,
    In(BigInt),
    Out(BigInt),
    New,
    Read,
    Write,
}

impl Action {
    /// The effect atom this action exercises, if any.
    pub fn effect_atom(&self) -> Option<EffectAtom> {
        match self {
            Action::Pure => None,
            Action::In(_) | Action::Out(_) => Some(EffectAtom::Io),
            Action::New => Some(EffectAtom::N),
            Action::Read => Some(EffectAtom::R),
            Action::Write => Some(EffectAtom::W),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, Action::Pure)
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Action::In(_) | Action::Out(_))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Pure => write!(f, "T"),
            Action::In(i) => write!(f, "in {i}"),
            Action::Out(i) => write!(f, "out {i}"),
            Action::New => write!(f, "N"),
            Action::Read => write!(f, "R"),
            Action::Write => write!(f, "W"),
        }
    }
}

macro_rules! rules {
    ($($name:ident),* $(,)?) => {
        /// The reduction rules, named as in the judgement tables. This is a
        /// stable enumeration used by traces and coverage reports.
        #[allow(non_camel_case_types)]
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Rule {
            $($name,)*
        }

        impl Rule {
            pub const ALL: &'static [Rule] = &[$(Rule::$name,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Rule::$name => stringify!($name),)*
                }
            }

            pub fn from_name(s: &str) -> Option<Rule> {
                match s {
                    $(stringify!($name) => Some(Rule::$name),)*
                    _ => None,
                }
            }
        }
    };
}

rules! {
    // Generate mode: contexts.
    RGctxt, RGctxtF, RGctxtE,
    // Variables.
    RGvar, RGvarE,
    // None or all values.
    RGfalsesF, RGanysE,
    // Integers.
    RGi, RGintsE,
    // Integer operations.
    RGuop, RGbop, RGcop, RGcopF, RGuopE, RGbopE, RGcopE,
    // Tables.
    RGtab1, RGtab2, RGtabF, RGtabE, RGarr, RGarrE, RGtabsE,
    // Functions.
    RGfun, RGfunE, RGfunsE,
    // Length.
    RGlen, RGlenE,
    // Error application.
    RGappE1, RGappE2, RGappE3, RGappEE1, RGappEE2,
    // Failing application.
    RGappF1, RGappFF, RGappF2, RGappF3, RGappF4, RGappFE1, RGappFE2, RGappFE3,
    // From.
    RGfromE,
    // Pointers.
    RGnew, RGread, RGwrite, RGnewE, RGreadE, RGwriteE, RGptrE, RGptrsE,
    // Input and output.
    RGin, RGout, RGinE, RGoutE,
    // Unify and join.
    RGunify, RGjoinE,
    // Let and letrec.
    RGlet, RGletrec, RGletrecE1, RGletrecE2,
    // Letrec value evaluation.
    RVtable, RVfun, RVptr, RVtableE, RVfunE, RVptrE,
    // Conditionals.
    RGif, RGif1, RGif2, RGif3, RGifE,
    // Stage, effects-then, frames.
    RGstage, RGfxE,
    RGframe1, RGframe2, RGframeF, RGframeE,
    // Test mode.
    RTgen,
    RTvar, RTvarE,
    RTfalses, RTanys,
    RTi1, RTi2, RTints1, RTints2, RTiE, RTintsE,
    RTcop,
    RTtab1, RTtab2, RTarr1, RTarr2, RTtabs1, RTtabs2, RTtabE, RTarrE, RTtabsE,
    RTfun, RTfuns1, RTfuns2, RTfunE1, RTfunE2, RTfunsE,
    RTfrom1, RTfrom2, RTfromE,
    RTptrs1, RTptrs2, RTptrsE,
    RTunify, RTjoin,
    RTlet, RTletrec, RTif, RTstage,
    // Test mode: head labels against head labels.
    RThl, RThli1, RThli2, RThltab1, RThltab2, RThlfun, RThlpl1, RThlpl2, RThlfunE, RThlE,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// The rules used to derive one step outcome: the main path of congruence
/// rules ending in the rule that decided the outcome, plus the auxiliary
/// rules of side derivations (letrec value judgements, or the failure/error
/// derivation of a conditional's condition).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RulePath {
    pub path: Vec<Rule>,
    pub aux: Vec<Rule>,
}

impl RulePath {
    pub fn leaf_rule(rule: Rule) -> RulePath {
        RulePath {
            path: vec![rule],
            aux: Vec::new(),
        }
    }

    pub fn with_aux(rule: Rule, aux: Vec<Rule>) -> RulePath {
        RulePath {
            path: vec![rule],
            aux,
        }
    }

    /// The rule that decided this outcome (the innermost of the main path).
    pub fn leaf(&self) -> Rule {
        *self.path.last().expect("rule path is never empty")
    }

    pub fn prepend(mut self, rule: Rule) -> RulePath {
        self.path.insert(0, rule);
        self
    }

    /// Every rule used in the derivation, main path first.
    pub fn all_rules(&self) -> impl Iterator<Item = Rule> + '_ {
        self.path.iter().chain(self.aux.iter()).copied()
    }
}

impl fmt::Display for RulePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.path.iter().enumerate() {
            if i > 0 {
                write!(f, "/")?;
            }
            write!(f, "{r}")?;
        }
        if !self.aux.is_empty() {
            write!(f, "[")?;
            for (i, r) in self.aux.iter().enumerate() {
                if i > 0 {
                    write!(f, "/")?;
                }
                write!(f, "{r}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// The outcome of one machine step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    /// The state performed `action` and reduced to `next`.
    Stepped {
        action: Action,
        next: MachineState,
        rules: RulePath,
    },
    /// The state's term is a bare head label; no rule applies.
    Terminal { label: HeadLabel },
    /// The state fails.
    Fail { rules: RulePath },
    /// The state commits a type error.
    Error { rules: RulePath, detail: String },
}

/// A harness-level fault, distinct from the machine's own outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepFault {
    /// The input source had no next integer for an input step.
    InputExhausted,
}

impl fmt::Display for StepFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepFault::InputExhausted => write!(f, "input source exhausted"),
        }
    }
}

impl std::error::Error for StepFault {}

/// Supplies the next input integer for input steps.
pub trait InputSource {
    fn next_input(&mut self) -> Option<BigInt>;
}

/// A finite scripted input sequence, yielded in order exactly once.
#[derive(Debug, Clone, Default)]
pub struct ScriptedInput {
    values: VecDeque<BigInt>,
}

impl ScriptedInput {
    pub fn new(values: Vec<BigInt>) -> ScriptedInput {
        ScriptedInput {
            values: values.into(),
        }
    }

    pub fn from_i64s(values: &[i64]) -> ScriptedInput {
        ScriptedInput::new(values.iter().map(|&v| BigInt::from(v)).collect())
    }

    /// The inputs not yet consumed.
    pub fn remaining(&self) -> Vec<BigInt> {
        self.values.iter().cloned().collect()
    }
}

impl InputSource for ScriptedInput {
    fn next_input(&mut self) -> Option<BigInt> {
        self.values.pop_front()
    }
}

/// An input source with no integers at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoInput;

impl InputSource for NoInput {
    fn next_input(&mut self) -> Option<BigInt> {
        None
    }
}

/// The auxiliary predicates on heads. Constructed from an optional head so
/// that lookups outside the heap domain make every predicate false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadClass {
    pub is_int: bool,
    pub is_nat: bool,
    pub is_fun: bool,
    pub is_typ: bool,
    pub is_ptr: bool,
    /// The index list of a table head (sorted), when the head is a table.
    pub table_indices: Option<Vec<BigInt>>,
}

impl HeadClass {
    pub fn is_tab(&self) -> bool {
        self.table_indices.is_some()
    }

    /// True iff the head is a table with exactly the given index set.
    pub fn is_tab_fields(&self, indices: &[BigInt]) -> bool {
        match &self.table_indices {
            None => false,
            Some(own) => {
                let mut want: Vec<BigInt> = indices.to_vec();
                want.sort();
                own == &want
            }
        }
    }

    /// True iff the head is a table whose indices are exactly `0..n`.
    pub fn is_arr(&self) -> bool {
        match &self.table_indices {
            None => false,
            Some(own) => own
                .iter()
                .enumerate()
                .all(|(i, ix)| BigInt::from(i) == *ix),
        }
    }

    pub fn is_app(&self) -> bool {
        self.is_tab() || self.is_fun
    }
}

/// Classifies a head (or an absent heap lookup) under the auxiliary
/// predicates.
pub fn classify_head(head: Option<&Head>) -> HeadClass {
    let mut class = HeadClass {
        is_int: false,
        is_nat: false,
        is_fun: false,
        is_typ: false,
        is_ptr: false,
        table_indices: None,
    };
    let Some(head) = head else {
        return class;
    };
    match head {
        Head::Int(i) => {
            class.is_int = true;
            class.is_nat = !i.is_negative();
        }
        Head::Table(entries) => {
            class.table_indices = Some(entries.iter().map(|(ix, _)| ix.clone()).collect());
        }
        Head::Closure { fun, .. } => {
            class.is_fun = true;
            class.is_typ = is_identity_type_fun(fun);
        }
        Head::Ptr(_) => {
            class.is_ptr = true;
        }
    }
    class
}

/// The shape of a closure usable as a type: an invariant function with no
/// range effects whose body is its own parameter.
fn is_identity_type_fun(fun: &Fun) -> bool {
    match fun {
        Fun::Lambda {
            param,
            dk: DomainKind::Invariant,
            range_fx,
            body,
            ..
        } => range_fx.is_empty() && matches!(&**body, Term::Var(x) if x == param),
        _ => false,
    }
}

/// The domain kind of a function; all-quantified functions count as
/// contravariant.
pub fn dk_of(fun: &Fun) -> DomainKind {
    fun.domain_kind()
}

/// A one-hole evaluation context. Exactly the productions of the context
/// grammar: the hole holds the leftmost subterm still to be evaluated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalContext {
    Uop(crate::syntax::UnaryOp),
    BopL(crate::syntax::BinaryOp, TermRef),
    BopR(crate::syntax::BinaryOp, HeadLabel),
    CopL(crate::syntax::CompareOp, TermRef),
    CopR(crate::syntax::CompareOp, HeadLabel),
    ArrLen { var: Var, body: TermRef },
    Len,
    AppErrL(TermRef),
    AppErrR(HeadLabel),
    AppFailL(TermRef),
    AppFailR(HeadLabel),
    NewInit { ty: TermRef },
    Read,
    WriteL(TermRef),
    WriteR(HeadLabel),
    Out,
    UnifyL(TermRef),
    LetBound { var: Var, body: TermRef },
}

impl EvalContext {
    /// Rebuilds the surrounding term with `hole` in the hole position.
    pub fn plug(&self, hole: TermRef) -> Term {
        match self {
            EvalContext::Uop(op) => Term::Uop(*op, hole),
            EvalContext::BopL(op, rhs) => Term::Bop(*op, hole, rhs.clone()),
            EvalContext::BopR(op, lhs) => {
                Term::Bop(*op, std::sync::Arc::new(Term::Hl(*lhs)), hole)
            }
            EvalContext::CopL(op, rhs) => Term::Cop(*op, hole, rhs.clone()),
            EvalContext::CopR(op, lhs) => {
                Term::Cop(*op, std::sync::Arc::new(Term::Hl(*lhs)), hole)
            }
            EvalContext::ArrLen { var, body } => Term::Arr {
                len: hole,
                var: var.clone(),
                body: body.clone(),
            },
            EvalContext::Len => Term::Len(hole),
            EvalContext::AppErrL(rhs) => Term::AppErr(hole, rhs.clone()),
            EvalContext::AppErrR(lhs) => {
                Term::AppErr(std::sync::Arc::new(Term::Hl(*lhs)), hole)
            }
            EvalContext::AppFailL(rhs) => Term::AppFail(hole, rhs.clone()),
            EvalContext::AppFailR(lhs) => {
                Term::AppFail(std::sync::Arc::new(Term::Hl(*lhs)), hole)
            }
            EvalContext::NewInit { ty } => Term::New {
                ty: ty.clone(),
                init: hole,
            },
            EvalContext::Read => Term::Read(hole),
            EvalContext::WriteL(rhs) => Term::Write(hole, rhs.clone()),
            EvalContext::WriteR(lhs) => {
                Term::Write(std::sync::Arc::new(Term::Hl(*lhs)), hole)
            }
            EvalContext::Out => Term::Out(hole),
            EvalContext::UnifyL(rhs) => Term::Unify(hole, rhs.clone()),
            EvalContext::LetBound { var, body } => Term::Let {
                var: var.clone(),
                bound: hole,
                body: body.clone(),
            },
        }
    }
}

/// Decomposes a term into the outermost evaluation context whose hole holds
/// the leftmost not-yet-evaluated subterm, when one exists. Terms that are
/// themselves redexes (or need a bespoke rule) return `None`.
pub fn decompose(term: &Term) -> Option<(EvalContext, TermRef)> {
    match term {
        Term::Uop(op, a) if !a.is_label() => Some((EvalContext::Uop(*op), a.clone())),
        Term::Bop(op, a, b) => {
            if !a.is_label() {
                Some((EvalContext::BopL(*op, b.clone()), a.clone()))
            } else if !b.is_label() {
                Some((EvalContext::BopR(*op, a.as_label().unwrap()), b.clone()))
            } else {
                None
            }
        }
        Term::Cop(op, a, b) => {
            if !a.is_label() {
                Some((EvalContext::CopL(*op, b.clone()), a.clone()))
            } else if !b.is_label() {
                Some((EvalContext::CopR(*op, a.as_label().unwrap()), b.clone()))
            } else {
                None
            }
        }
        Term::Arr { len, var, body } if !len.is_label() => Some((
            EvalContext::ArrLen {
                var: var.clone(),
                body: body.clone(),
            },
            len.clone(),
        )),
        Term::Len(a) if !a.is_label() => Some((EvalContext::Len, a.clone())),
        Term::AppErr(a, b) => {
            if !a.is_label() {
                Some((EvalContext::AppErrL(b.clone()), a.clone()))
            } else if !b.is_label() {
                Some((EvalContext::AppErrR(a.as_label().unwrap()), b.clone()))
            } else {
                None
            }
        }
        Term::AppFail(a, b) => {
            if !a.is_label() {
                Some((EvalContext::AppFailL(b.clone()), a.clone()))
            } else if !b.is_label() {
                Some((EvalContext::AppFailR(a.as_label().unwrap()), b.clone()))
            } else {
                None
            }
        }
        // Only the initial contents of a pointer creation is evaluated; the
        // type annotation is not.
        Term::New { ty, init } if !init.is_label() => Some((
            EvalContext::NewInit { ty: ty.clone() },
            init.clone(),
        )),
        Term::Read(a) if !a.is_label() => Some((EvalContext::Read, a.clone())),
        Term::Write(a, b) => {
            if !a.is_label() {
                Some((EvalContext::WriteL(b.clone()), a.clone()))
            } else if !b.is_label() {
                Some((EvalContext::WriteR(a.as_label().unwrap()), b.clone()))
            } else {
                None
            }
        }
        Term::Out(a) if !a.is_label() => Some((EvalContext::Out, a.clone())),
        // Only the left operand of a unification is evaluated.
        Term::Unify(a, b) if !a.is_label() => Some((EvalContext::UnifyL(b.clone()), a.clone())),
        Term::Let { var, bound, body } if !bound.is_label() => Some((
            EvalContext::LetBound {
                var: var.clone(),
                body: body.clone(),
            },
            bound.clone(),
        )),
        _ => None,
    }
}

/// Result of evaluating one letrec value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueOutcome {
    /// The value evaluates to a head (possibly extending the pointer heap),
    /// by the named rule.
    Head {
        head: Head,
        ptrs: PointerHeap,
        rule: Rule,
    },
    /// The value is erroneous, by the named rule.
    Erroneous { rule: Rule },
}

/// Evaluates a letrec value to a head in the given environment, possibly
/// extending the pointer heap. Fresh pointer labels are drawn starting at
/// `next_ptr`.
pub fn eval_value(
    ptrs: &PointerHeap,
    next_ptr: u64,
    env: &Environment,
    value: &SourceValue,
) -> ValueOutcome {
    if let Some(rule) = erroneous_value(env, value) {
        return ValueOutcome::Erroneous { rule };
    }
    let mut ptrs = ptrs.clone();
    let mut next_ptr = next_ptr;
    let (head, rule) = eval_value_unchecked(&mut ptrs, &mut next_ptr, env, value);
    ValueOutcome::Head { head, ptrs, rule }
}

/// Checks whether a letrec value is erroneous in the given environment and
/// names the violated rule.
pub fn erroneous_value(env: &Environment, value: &SourceValue) -> Option<Rule> {
    match value {
        SourceValue::Tuple(entries) => entries
            .iter()
            .any(|(_, x)| !env.contains(x))
            .then_some(Rule::RVtableE),
        SourceValue::Fun(fun) => {
            let dk = fun.domain_kind();
            (dk != DomainKind::Contravariant && dk != DomainKind::Invariant)
                .then_some(Rule::RVfunE)
        }
        SourceValue::Ptr { init, .. } => (!env.contains(init)).then_some(Rule::RVptrE),
    }
}

/// Evaluates a non-erroneous letrec value; callers must have run
/// `erroneous_value` first.
pub(crate) fn eval_value_unchecked(
    ptrs: &mut PointerHeap,
    next_ptr: &mut u64,
    env: &Environment,
    value: &SourceValue,
) -> (Head, Rule) {
    match value {
        SourceValue::Tuple(entries) => {
            let table = entries
                .iter()
                .map(|(ix, x)| {
                    let hl = env.lookup(x).expect("tuple variable in scope");
                    (ix.clone(), hl)
                })
                .collect();
            (Head::table(table), Rule::RVtable)
        }
        SourceValue::Fun(fun) => (
            Head::Closure {
                env: env.clone(),
                fun: fun.clone(),
            },
            Rule::RVfun,
        ),
        SourceValue::Ptr { ty, init } => {
            let contents = env.lookup(init).expect("pointer variable in scope");
            let pl = loop {
                let pl = PointerLabel(*next_ptr);
                *next_ptr += 1;
                if !ptrs.contains(pl) {
                    break pl;
                }
            };
            ptrs.insert(
                pl,
                PointerCell {
                    env: env.clone(),
                    ty: ty.clone(),
                    contents,
                },
            );
            (Head::Ptr(pl), Rule::RVptr)
        }
    }
}

/// Restores a pointer heap to a snapshot: every pointer present in the
/// snapshot gets its snapshotted cell back, and pointers created since (dead
/// after a failed conditional) are kept as they are.
pub fn restore_pointer_heap(current: &PointerHeap, saved: &PointerHeap) -> PointerHeap {
    let mut restored = current.clone();
    for (pl, cell) in saved.iter() {
        assert!(
            current.contains(*pl),
            "snapshot pointer {pl} missing from the current heap"
        );
        restored.replace_cell(*pl, cell.clone());
    }
    restored
}

/// Looks a head up, cloning it out of the heap.
pub(crate) fn lookup_head(heads: &HeadHeap, hl: HeadLabel) -> Option<Head> {
    heads.get(hl).cloned()
}
