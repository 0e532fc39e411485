//! Independent evaluation of every rule's premises at a state.
//!
//! `guard_scan` re-checks all candidate rule guards at the redex (descending
//! through congruence positions the same way the stepper does) without
//! consuming input or touching the heaps. It asserts at every level that
//! exactly one of {terminal, one step rule, failure, error} matches, which
//! turns the unique-reduction property into a runtime check, and it is what
//! the stepper cross-checks itself against in debug builds.

use num_bigint::BigInt;

use crate::effects::{Effect, EffectAtom};
use crate::syntax::{
    AssumedEqs, DomainKind, Environment, Fun, Head, HeadHeap, HeadLabel, MachineState,
    PointerHeap, SourceValue, TableEntry, Term, TermRef, Var,
};

use crate::syntax::is_revert_to_generate;

use super::{classify_head, decompose, erroneous_value, Rule, StepOutcome};

/// Which rules matched at a state, grouped by judgement class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GuardReport {
    pub terminal: bool,
    pub stepped: Vec<Rule>,
    pub failed: Vec<Rule>,
    pub errored: Vec<Rule>,
}

impl GuardReport {
    fn terminal() -> GuardReport {
        GuardReport {
            terminal: true,
            ..GuardReport::default()
        }
    }

    fn stepped(rule: Rule) -> GuardReport {
        GuardReport {
            stepped: vec![rule],
            ..GuardReport::default()
        }
    }

    fn classes_matched(&self) -> usize {
        usize::from(self.terminal)
            + usize::from(!self.stepped.is_empty())
            + usize::from(!self.failed.is_empty())
            + usize::from(!self.errored.is_empty())
    }

    /// Panics unless exactly one judgement class matched, with a single rule
    /// when that class is a step. Error rules may overlap within their class
    /// (several error premises can hold at once); the class is still unique.
    pub fn assert_unique(&self) {
        assert_eq!(
            self.classes_matched(),
            1,
            "rule guards must select exactly one judgement class: {self:?}"
        );
        if !self.stepped.is_empty() {
            assert_eq!(
                self.stepped.len(),
                1,
                "more than one step rule matched: {self:?}"
            );
        }
    }

    /// Panics unless the scan agrees with an actually produced outcome.
    pub fn assert_agrees(&self, outcome: &StepOutcome) {
        self.assert_unique();
        match outcome {
            StepOutcome::Terminal { .. } => assert!(self.terminal, "scan disagrees: {self:?}"),
            StepOutcome::Stepped { rules, .. } => assert!(
                self.stepped.contains(&rules.leaf()),
                "scan {self:?} does not contain fired rule {}",
                rules.leaf()
            ),
            StepOutcome::Fail { rules } => assert!(
                self.failed.contains(&rules.leaf()),
                "scan {self:?} does not contain fail rule {}",
                rules.leaf()
            ),
            StepOutcome::Error { rules, .. } => assert!(
                self.errored.contains(&rules.leaf()),
                "scan {self:?} does not contain error rule {}",
                rules.leaf()
            ),
        }
    }
}

/// The rule a step from this state would fire, or the terminal marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applicable {
    Terminal,
    Rule(Rule),
}

/// Names the unique rule `step` would fire from this state (the rule that
/// decides the outcome, after congruence descent), or `Terminal` when the
/// term is a bare head label.
pub fn applicable_rule(state: &MachineState) -> Applicable {
    let report = guard_scan(state);
    if report.terminal {
        return Applicable::Terminal;
    }
    let rule = report
        .stepped
        .first()
        .or_else(|| report.failed.first())
        .or_else(|| report.errored.first())
        .copied()
        .expect("a unique rule always matches");
    Applicable::Rule(rule)
}

/// Evaluates every rule guard at the state, asserting uniqueness at each
/// congruence level along the way.
pub fn guard_scan(state: &MachineState) -> GuardReport {
    if state.term.is_label() {
        return GuardReport::terminal();
    }
    let report = scan_term(
        &state.heads,
        &state.ptrs,
        &state.env,
        state.allowed,
        &state.term,
    );
    report.assert_unique();
    report
}

struct Guards {
    report: GuardReport,
}

impl Guards {
    fn new() -> Guards {
        Guards {
            report: GuardReport::default(),
        }
    }

    fn step_if(&mut self, cond: bool, rule: Rule) {
        if cond {
            self.report.stepped.push(rule);
        }
    }

    fn fail_if(&mut self, cond: bool, rule: Rule) {
        if cond {
            self.report.failed.push(rule);
        }
    }

    fn error_if(&mut self, cond: bool, rule: Rule) {
        if cond {
            self.report.errored.push(rule);
        }
    }

    fn finish(self) -> GuardReport {
        self.report
    }
}

fn scan_term(
    heads: &HeadHeap,
    ptrs: &PointerHeap,
    env: &Environment,
    allowed: Effect,
    term: &TermRef,
) -> GuardReport {
    // Congruence positions inherit the verdict of the redex; each level's
    // report is checked for uniqueness as we go.
    if let Some((_, redex)) = decompose(term) {
        let inner = scan_term(heads, ptrs, env, allowed, &redex);
        inner.assert_unique();
        return inner;
    }

    let mut g = Guards::new();
    let head_of = |hl: HeadLabel| heads.get(hl);
    let class_of = |hl: HeadLabel| classify_head(heads.get(hl));

    match &**term {
        Term::Hl(_) => unreachable!("labels are terminal"),

        Term::Var(x) => {
            let bound = env.contains(x);
            g.step_if(bound, Rule::RGvar);
            g.error_if(!bound, Rule::RGvarE);
        }
        Term::Falses => g.fail_if(true, Rule::RGfalsesF),
        Term::Anys => g.error_if(true, Rule::RGanysE),
        Term::Int(_) => g.step_if(true, Rule::RGi),
        Term::Ints => g.error_if(true, Rule::RGintsE),
        Term::Tabs => g.error_if(true, Rule::RGtabsE),
        Term::Funs => g.error_if(true, Rule::RGfunsE),
        Term::Ptrs => g.error_if(true, Rule::RGptrsE),
        Term::PtrTo(_) => g.error_if(true, Rule::RGptrE),
        Term::From(_) => g.error_if(true, Rule::RGfromE),
        Term::Join(..) => g.error_if(true, Rule::RGjoinE),
        Term::FxThen { .. } => g.error_if(true, Rule::RGfxE),

        Term::Uop(_, a) => {
            let is_int = class_of(a.as_label().unwrap()).is_int;
            g.step_if(is_int, Rule::RGuop);
            g.error_if(!is_int, Rule::RGuopE);
        }
        Term::Bop(op, a, b) => {
            let c1 = class_of(a.as_label().unwrap());
            let c2 = class_of(b.as_label().unwrap());
            let both = c1.is_int && c2.is_int;
            let div_zero = both
                && matches!(op, crate::syntax::BinaryOp::Div | crate::syntax::BinaryOp::Mod)
                && matches!(head_of(b.as_label().unwrap()), Some(Head::Int(i)) if *i == BigInt::from(0));
            g.step_if(both && !div_zero, Rule::RGbop);
            g.error_if(!both || div_zero, Rule::RGbopE);
        }
        Term::Cop(op, a, b) => {
            let h1 = head_of(a.as_label().unwrap());
            let h2 = head_of(b.as_label().unwrap());
            match (h1, h2) {
                (Some(Head::Int(i1)), Some(Head::Int(i2))) => {
                    let holds = op.holds(i1, i2);
                    g.step_if(holds, Rule::RGcop);
                    g.fail_if(!holds, Rule::RGcopF);
                }
                _ => g.error_if(true, Rule::RGcopE),
            }
        }

        Term::Table(entries) => return scan_table(heads, ptrs, env, allowed, entries),

        Term::Arr { len, .. } => {
            let is_nat = class_of(len.as_label().unwrap()).is_nat;
            g.step_if(is_nat, Rule::RGarr);
            g.error_if(!is_nat, Rule::RGarrE);
        }

        Term::Fun(fun) => {
            let ok = matches!(
                fun.domain_kind(),
                DomainKind::Contravariant | DomainKind::Invariant
            );
            g.step_if(ok, Rule::RGfun);
            g.error_if(!ok, Rule::RGfunE);
        }

        Term::Len(a) => {
            let is_arr = class_of(a.as_label().unwrap()).is_arr();
            g.step_if(is_arr, Rule::RGlen);
            g.error_if(!is_arr, Rule::RGlenE);
        }

        Term::AppErr(a, b) => {
            let hl1 = a.as_label().unwrap();
            let hl2 = b.as_label().unwrap();
            let c1 = class_of(hl1);
            let arg_in_domain = match (head_of(hl1), head_of(hl2)) {
                (Some(Head::Table(entries)), Some(Head::Int(i))) => {
                    entries.iter().any(|(ix, _)| ix == i)
                }
                _ => false,
            };
            g.step_if(c1.is_tab() && arg_in_domain, Rule::RGappE1);
            if let Some(Head::Closure { fun, .. }) = head_of(hl1) {
                match &**fun {
                    Fun::Lambda { .. } => g.step_if(true, Rule::RGappE2),
                    Fun::AllQuant { .. } => g.step_if(true, Rule::RGappE3),
                }
            }
            g.error_if(!c1.is_app(), Rule::RGappEE1);
            g.error_if(c1.is_tab() && !arg_in_domain, Rule::RGappEE2);
        }

        Term::AppFail(a, b) => {
            let hl1 = a.as_label().unwrap();
            let hl2 = b.as_label().unwrap();
            let c1 = class_of(hl1);
            let arg_defined = heads.contains(hl2);
            let arg_in_domain = match (head_of(hl1), head_of(hl2)) {
                (Some(Head::Table(entries)), Some(Head::Int(i))) => {
                    entries.iter().any(|(ix, _)| ix == i)
                }
                _ => false,
            };
            g.step_if(c1.is_tab() && arg_in_domain, Rule::RGappF1);
            g.fail_if(
                c1.is_tab() && arg_defined && !arg_in_domain,
                Rule::RGappFF,
            );
            if let Some(Head::Closure { fun, .. }) = head_of(hl1) {
                match &**fun {
                    Fun::Lambda {
                        dk: DomainKind::Contravariant,
                        ..
                    } => g.step_if(true, Rule::RGappF2),
                    Fun::AllQuant { .. } => g.step_if(true, Rule::RGappF3),
                    Fun::Lambda {
                        dk: DomainKind::Invariant,
                        ..
                    } => g.step_if(true, Rule::RGappF4),
                    Fun::Lambda { .. } => g.error_if(true, Rule::RGappFE3),
                }
            }
            g.error_if(!c1.is_app(), Rule::RGappFE1);
            g.error_if(c1.is_tab() && !arg_defined, Rule::RGappFE2);
        }

        Term::New { .. } => {
            let ok = allowed.contains(EffectAtom::N);
            g.step_if(ok, Rule::RGnew);
            g.error_if(!ok, Rule::RGnewE);
        }
        Term::Read(a) => {
            let hl = a.as_label().unwrap();
            let live_ptr = matches!(head_of(hl), Some(Head::Ptr(pl)) if ptrs.contains(*pl));
            let ok = live_ptr && allowed.contains(EffectAtom::R);
            g.step_if(ok, Rule::RGread);
            g.error_if(!ok, Rule::RGreadE);
        }
        Term::Write(a, _) => {
            let hl = a.as_label().unwrap();
            let live_ptr = matches!(head_of(hl), Some(Head::Ptr(pl)) if ptrs.contains(*pl));
            let ok = live_ptr && allowed.contains(EffectAtom::W);
            g.step_if(ok, Rule::RGwrite);
            g.error_if(!ok, Rule::RGwriteE);
        }
        Term::In => {
            let ok = allowed.contains(EffectAtom::Io);
            g.step_if(ok, Rule::RGin);
            g.error_if(!ok, Rule::RGinE);
        }
        Term::Out(a) => {
            let ok = class_of(a.as_label().unwrap()).is_int && allowed.contains(EffectAtom::Io);
            g.step_if(ok, Rule::RGout);
            g.error_if(!ok, Rule::RGoutE);
        }

        Term::Unify(..) => g.step_if(true, Rule::RGunify),
        Term::Let { .. } => g.step_if(true, Rule::RGlet),

        Term::Letrec { binds, .. } => scan_letrec(env, allowed, binds, &mut g),

        Term::If { .. } => g.step_if(true, Rule::RGif),

        Term::IfM { cond, .. } => {
            if cond.is_label() {
                g.step_if(true, Rule::RGif1);
            } else {
                let inner = scan_term(heads, ptrs, env, allowed.meet(Effect::REVERSIBLE), cond);
                inner.assert_unique();
                if let Some(&leaf) = inner.stepped.first() {
                    g.step_if(true, leaf);
                }
                g.step_if(!inner.failed.is_empty(), Rule::RGif3);
                g.error_if(!inner.errored.is_empty(), Rule::RGifE);
            }
        }

        Term::Stage { .. } => g.step_if(true, Rule::RGstage),

        Term::Frame {
            env: fenv,
            body,
            allowed: fallowed,
        } => {
            if body.is_label() {
                g.step_if(true, Rule::RGframe1);
            } else {
                let inner = scan_term(heads, ptrs, fenv, *fallowed, body);
                inner.assert_unique();
                return inner;
            }
        }

        Term::Chk {
            subject,
            ae,
            pattern,
            ..
        } => return scan_chk(heads, env, *subject, ae, pattern),
    }
    g.finish()
}

fn scan_table(
    heads: &HeadHeap,
    ptrs: &PointerHeap,
    env: &Environment,
    allowed: Effect,
    entries: &[TableEntry],
) -> GuardReport {
    match entries.iter().position(|e| !e.term.is_label()) {
        None => GuardReport::stepped(Rule::RGtab1),
        Some(k) => {
            let mut inner_env = env.clone();
            for e in &entries[..k] {
                inner_env = inner_env.extend(e.var.clone(), e.term.as_label().unwrap());
            }
            let inner = scan_term(heads, ptrs, &inner_env, allowed, &entries[k].term);
            inner.assert_unique();
            inner
        }
    }
}

fn scan_letrec(env: &Environment, allowed: Effect, binds: &[(Var, SourceValue)], g: &mut Guards) {
    // Erroneousness of values does not depend on which labels the binders get.
    let mut inner_env = env.clone();
    for (x, _) in binds {
        inner_env = inner_env.extend(x.clone(), HeadLabel(u64::MAX));
    }
    let any_erroneous = binds
        .iter()
        .any(|(_, v)| erroneous_value(&inner_env, v).is_some());
    let creates_ptrs = binds
        .iter()
        .any(|(_, v)| matches!(v, SourceValue::Ptr { .. }));
    let ptr_violation = creates_ptrs && !allowed.contains(EffectAtom::N);
    g.step_if(!any_erroneous && !ptr_violation, Rule::RGletrec);
    g.error_if(any_erroneous, Rule::RGletrecE1);
    g.error_if(!any_erroneous && ptr_violation, Rule::RGletrecE2);
}

fn scan_chk(
    heads: &HeadHeap,
    env: &Environment,
    subject: HeadLabel,
    ae: &AssumedEqs,
    pattern: &TermRef,
) -> GuardReport {
    let mut g = Guards::new();
    let subj_class = classify_head(heads.get(subject));
    let subj_defined = heads.contains(subject);

    if is_revert_to_generate(pattern) {
        g.step_if(true, Rule::RTgen);
        return g.finish();
    }

    match &**pattern {
        Term::Hl(hl2) => {
            scan_chk_labels(heads, subject, ae, *hl2, &mut g);
        }
        Term::Var(x) => {
            let bound = env.contains(x);
            g.step_if(bound, Rule::RTvar);
            g.error_if(!bound, Rule::RTvarE);
        }
        Term::Falses => g.step_if(true, Rule::RTfalses),
        Term::Anys => g.step_if(true, Rule::RTanys),
        Term::Int(i) => {
            let equal = matches!(heads.get(subject), Some(Head::Int(j)) if j == i);
            g.step_if(equal, Rule::RTi1);
            g.step_if(subj_defined && !equal, Rule::RTi2);
            g.error_if(!subj_defined, Rule::RTiE);
        }
        Term::Ints => {
            g.step_if(subj_class.is_int, Rule::RTints1);
            g.step_if(subj_defined && !subj_class.is_int, Rule::RTints2);
            g.error_if(!subj_defined, Rule::RTintsE);
        }
        Term::Cop(..) => g.step_if(true, Rule::RTcop),
        Term::Table(entries) => {
            let indices: Vec<BigInt> = entries.iter().map(|e| e.index.clone()).collect();
            let same_fields = subj_class.is_tab_fields(&indices);
            g.step_if(same_fields, Rule::RTtab1);
            g.step_if(subj_defined && !same_fields, Rule::RTtab2);
            g.error_if(!subj_defined, Rule::RTtabE);
        }
        Term::Arr { .. } => {
            g.step_if(subj_class.is_arr(), Rule::RTarr1);
            g.step_if(subj_defined && !subj_class.is_arr(), Rule::RTarr2);
            g.error_if(!subj_defined, Rule::RTarrE);
        }
        Term::Tabs => {
            g.step_if(subj_class.is_tab(), Rule::RTtabs1);
            g.step_if(subj_defined && !subj_class.is_tab(), Rule::RTtabs2);
            g.error_if(!subj_defined, Rule::RTtabsE);
        }
        Term::Fun(_) => {
            g.step_if(subj_defined && !subj_class.is_fun, Rule::RTfun);
            g.error_if(subj_class.is_fun, Rule::RTfunE1);
            g.error_if(!subj_defined, Rule::RTfunE2);
        }
        Term::Funs => {
            g.step_if(subj_class.is_fun, Rule::RTfuns1);
            g.step_if(subj_defined && !subj_class.is_fun, Rule::RTfuns2);
            g.error_if(!subj_defined, Rule::RTfunsE);
        }
        Term::From(inner) => match &**inner {
            Term::Var(x) => {
                let is_typ = env
                    .lookup(x)
                    .map(|hl| classify_head(heads.get(hl)).is_typ)
                    .unwrap_or(false);
                g.step_if(is_typ, Rule::RTfrom2);
                g.error_if(!is_typ, Rule::RTfromE);
            }
            _ => g.step_if(true, Rule::RTfrom1),
        },
        Term::Ptrs => {
            g.step_if(subj_class.is_ptr, Rule::RTptrs1);
            g.step_if(subj_defined && !subj_class.is_ptr, Rule::RTptrs2);
            g.error_if(!subj_defined, Rule::RTptrsE);
        }
        Term::Unify(..) => g.step_if(true, Rule::RTunify),
        Term::Join(..) => g.step_if(true, Rule::RTjoin),
        Term::Let { .. } => g.step_if(true, Rule::RTlet),
        Term::Letrec { .. } => g.step_if(true, Rule::RTletrec),
        Term::If { .. } => g.step_if(true, Rule::RTif),
        Term::Stage { .. } => g.step_if(true, Rule::RTstage),
        Term::IfM { .. } | Term::Frame { .. } | Term::Chk { .. } => {
            panic!("chk patterns must be head labels or source syntax")
        }
        _ => unreachable!("revert-to-generate patterns handled above"),
    }
    g.finish()
}

fn scan_chk_labels(
    heads: &HeadHeap,
    hl1: HeadLabel,
    ae: &AssumedEqs,
    hl2: HeadLabel,
    g: &mut Guards,
) {
    let assumed = ae.contains(hl1, hl2);
    g.step_if(assumed, Rule::RThl);
    if assumed {
        return;
    }
    let d1 = heads.contains(hl1);
    let d2 = heads.contains(hl2);
    g.error_if(!d1 || !d2, Rule::RThlE);
    let (Some(h1), Some(h2)) = (heads.get(hl1), heads.get(hl2)) else {
        return;
    };
    match h1 {
        Head::Int(i) => {
            let equal = matches!(h2, Head::Int(j) if j == i);
            g.step_if(equal, Rule::RThli1);
            g.step_if(!equal, Rule::RThli2);
        }
        Head::Table(e1) => {
            let indices: Vec<BigInt> = e1.iter().map(|(ix, _)| ix.clone()).collect();
            let same_fields = classify_head(Some(h2)).is_tab_fields(&indices);
            g.step_if(same_fields, Rule::RThltab1);
            g.step_if(!same_fields, Rule::RThltab2);
        }
        Head::Closure { .. } => {
            let is_fun = matches!(h2, Head::Closure { .. });
            g.error_if(is_fun, Rule::RThlfunE);
            g.step_if(!is_fun, Rule::RThlfun);
        }
        Head::Ptr(pl) => {
            let same = matches!(h2, Head::Ptr(pl2) if pl2 == pl);
            g.step_if(same, Rule::RThlpl1);
            g.step_if(!same, Rule::RThlpl2);
        }
    }
}
