//! The single-step reduction function.
//!
//! `reduce` recurses through congruence positions (contexts, frames,
//! conditionals under evaluation, dependent tables) to the unique redex and
//! applies the one rule whose premises hold, threading the heaps and label
//! counters. Heaps are only mutated on step outcomes, never on failure or
//! error outcomes.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::effects::{Effect, EffectAtom};
use crate::syntax::{
    AssumedEqs, BinaryOp, Environment, Fun, Head, HeadHeap, HeadLabel, MachineState, PointerCell,
    PointerHeap, SourceValue, TableEntry, Term, TermRef, UnaryOp, Var,
};

use crate::syntax::{free_vars, is_revert_to_generate};

use super::{
    decompose, erroneous_value, eval_value_unchecked, lookup_head, restore_pointer_heap, Action,
    InputSource, Rule, RulePath, StepFault, StepOutcome,
};

pub(crate) struct Heaps<'a> {
    pub heads: &'a mut HeadHeap,
    pub ptrs: &'a mut PointerHeap,
    pub next_head: &'a mut u64,
    pub next_ptr: &'a mut u64,
}

impl Heaps<'_> {
    fn alloc_head(&mut self, head: Head) -> HeadLabel {
        let hl = loop {
            let hl = HeadLabel(*self.next_head);
            *self.next_head += 1;
            if !self.heads.contains(hl) {
                break hl;
            }
        };
        self.heads.insert(hl, head);
        hl
    }
}

enum Reduced {
    Step { action: Action, term: TermRef },
    Fail,
    Error { detail: String },
}

type ReduceResult = Result<(Reduced, RulePath), StepFault>;

/// Performs one step of the machine. Returns `Terminal` when the state's term
/// is a bare head label; otherwise the unique applicable rule decides between
/// a step, a failure, and an error. The only harness-level fault is
/// exhaustion of the input source on an input step.
pub fn step(state: MachineState, input: &mut dyn InputSource) -> Result<StepOutcome, StepFault> {
    if let Some(label) = state.term.as_label() {
        return Ok(StepOutcome::Terminal { label });
    }

    #[cfg(debug_assertions)]
    let scan = super::guards::guard_scan(&state);

    let mut st = state;
    let env = st.env.clone();
    let allowed = st.allowed;
    let term = st.term.clone();
    let mut heaps = Heaps {
        heads: &mut st.heads,
        ptrs: &mut st.ptrs,
        next_head: &mut st.next_head,
        next_ptr: &mut st.next_ptr,
    };
    let (reduced, rules) = reduce(&mut heaps, &env, allowed, &term, input)?;
    let outcome = match reduced {
        Reduced::Step { action, term } => {
            st.term = term;
            StepOutcome::Stepped {
                action,
                next: st,
                rules,
            }
        }
        Reduced::Fail => StepOutcome::Fail { rules },
        Reduced::Error { detail } => StepOutcome::Error { rules, detail },
    };

    #[cfg(debug_assertions)]
    {
        scan.assert_agrees(&outcome);
        if let StepOutcome::Stepped { next, .. } = &outcome {
            assert_chk_invariant(&next.term);
        }
    }

    Ok(outcome)
}

/// Every chk term the machine constructs keeps the syntactic constraints:
/// the pattern is a head label or source syntax, and both branches are
/// closed.
#[cfg(debug_assertions)]
fn assert_chk_invariant(term: &Term) {
    use crate::syntax::well_formed_source;
    if let Term::Chk {
        pattern,
        then_t,
        else_t,
        ..
    } = term
    {
        assert!(
            pattern.is_label() || well_formed_source(pattern).is_empty(),
            "chk pattern must be a head label or source syntax"
        );
        assert!(free_vars(then_t).is_empty(), "chk then-branch must be closed");
        assert!(free_vars(else_t).is_empty(), "chk else-branch must be closed");
    }
    match term {
        Term::Uop(_, a)
        | Term::Len(a)
        | Term::From(a)
        | Term::Read(a)
        | Term::PtrTo(a)
        | Term::Out(a)
        | Term::FxThen { body: a, .. } => assert_chk_invariant(a),
        Term::Bop(_, a, b)
        | Term::Cop(_, a, b)
        | Term::AppErr(a, b)
        | Term::AppFail(a, b)
        | Term::Write(a, b)
        | Term::Unify(a, b)
        | Term::Join(a, b)
        | Term::New { ty: a, init: b } => {
            assert_chk_invariant(a);
            assert_chk_invariant(b);
        }
        Term::Table(entries) => {
            for e in entries {
                assert_chk_invariant(&e.term);
            }
        }
        Term::Arr { len, body, .. } => {
            assert_chk_invariant(len);
            assert_chk_invariant(body);
        }
        Term::Let { bound, body, .. } => {
            assert_chk_invariant(bound);
            assert_chk_invariant(body);
        }
        Term::Letrec { body, .. } => assert_chk_invariant(body),
        Term::If {
            cond,
            then_t,
            else_t,
            ..
        }
        | Term::IfM {
            cond,
            then_t,
            else_t,
            ..
        } => {
            assert_chk_invariant(cond);
            assert_chk_invariant(then_t);
            assert_chk_invariant(else_t);
        }
        Term::Stage { left, right, .. } => {
            assert_chk_invariant(left);
            assert_chk_invariant(right);
        }
        Term::Frame { body, .. } => assert_chk_invariant(body),
        Term::Chk {
            pattern,
            then_t,
            else_t,
            ..
        } => {
            assert_chk_invariant(pattern);
            assert_chk_invariant(then_t);
            assert_chk_invariant(else_t);
        }
        _ => {}
    }
}

fn pure(rule: Rule, term: TermRef) -> (Reduced, RulePath) {
    (
        Reduced::Step {
            action: Action::Pure,
            term,
        },
        RulePath::leaf_rule(rule),
    )
}

fn fail(rule: Rule) -> (Reduced, RulePath) {
    (Reduced::Fail, RulePath::leaf_rule(rule))
}

fn error(rule: Rule, detail: impl Into<String>) -> (Reduced, RulePath) {
    (
        Reduced::Error {
            detail: detail.into(),
        },
        RulePath::leaf_rule(rule),
    )
}

/// The scratch variable used by test-mode rules that need a binder; the
/// branches it could capture in are closed by the chk syntax constraints, and
/// `%` never occurs in parsed variable names.
fn scratch_var() -> Var {
    Var::new("%t")
}

fn fresh_var_avoiding(term: &Term) -> Var {
    let avoid = free_vars(term);
    let mut k = 0usize;
    loop {
        let name = if k == 0 {
            "%a".to_string()
        } else {
            format!("%a{k}")
        };
        let v = Var::new(&name);
        if !avoid.contains(&v) {
            return v;
        }
        k += 1;
    }
}

fn reduce(
    hp: &mut Heaps,
    env: &Environment,
    allowed: Effect,
    term: &TermRef,
    input: &mut dyn InputSource,
) -> ReduceResult {
    // Congruence through evaluation contexts: the hole holds the leftmost
    // unevaluated subterm.
    if let Some((ectx, redex)) = decompose(term) {
        let (reduced, rules) = reduce(hp, env, allowed, &redex, input)?;
        return Ok(match reduced {
            Reduced::Step { action, term: t2 } => (
                Reduced::Step {
                    action,
                    term: Arc::new(ectx.plug(t2)),
                },
                rules.prepend(Rule::RGctxt),
            ),
            Reduced::Fail => (Reduced::Fail, rules.prepend(Rule::RGctxtF)),
            Reduced::Error { detail } => (Reduced::Error { detail }, rules.prepend(Rule::RGctxtE)),
        });
    }

    match &**term {
        Term::Hl(_) => unreachable!("bare labels are terminal and never reduced"),

        Term::Var(x) => Ok(match env.lookup(x) {
            Some(hl) => pure(Rule::RGvar, Arc::new(Term::Hl(hl))),
            None => error(Rule::RGvarE, format!("variable {x} is not in scope")),
        }),

        Term::Falses => Ok(fail(Rule::RGfalsesF)),
        Term::Anys => Ok(error(Rule::RGanysE, "anys cannot be generated")),
        Term::Ints => Ok(error(Rule::RGintsE, "ints cannot be generated")),
        Term::Tabs => Ok(error(Rule::RGtabsE, "tabs cannot be generated")),
        Term::Funs => Ok(error(Rule::RGfunsE, "funs cannot be generated")),
        Term::Ptrs => Ok(error(Rule::RGptrsE, "ptrs cannot be generated")),
        Term::PtrTo(_) => Ok(error(Rule::RGptrE, "a pointer type cannot be run")),
        Term::From(_) => Ok(error(Rule::RGfromE, "from cannot be generated")),
        Term::Join(..) => Ok(error(Rule::RGjoinE, "join cannot be generated")),
        Term::FxThen { .. } => Ok(error(Rule::RGfxE, "an effects-then term cannot be run")),

        Term::Int(i) => {
            let hl = hp.alloc_head(Head::Int(i.clone()));
            Ok(pure(Rule::RGi, Arc::new(Term::Hl(hl))))
        }

        Term::Uop(op, a) => {
            let hl = a.as_label().expect("context rules evaluate the operand");
            Ok(match lookup_head(hp.heads, hl) {
                Some(Head::Int(i)) => {
                    let r = apply_uop(*op, &i);
                    pure(Rule::RGuop, Arc::new(Term::Int(r)))
                }
                _ => error(Rule::RGuopE, format!("{} applied to a non-integer", op.name())),
            })
        }

        Term::Bop(op, a, b) => {
            let hl1 = a.as_label().expect("evaluated");
            let hl2 = b.as_label().expect("evaluated");
            Ok(
                match (lookup_head(hp.heads, hl1), lookup_head(hp.heads, hl2)) {
                    (Some(Head::Int(i1)), Some(Head::Int(i2))) => match apply_bop(*op, &i1, &i2) {
                        Some(r) => pure(Rule::RGbop, Arc::new(Term::Int(r))),
                        None => error(Rule::RGbopE, "division by zero"),
                    },
                    _ => error(Rule::RGbopE, format!("{} applied to non-integers", op.name())),
                },
            )
        }

        Term::Cop(op, a, b) => {
            let hl1 = a.as_label().expect("evaluated");
            let hl2 = b.as_label().expect("evaluated");
            Ok(
                match (lookup_head(hp.heads, hl1), lookup_head(hp.heads, hl2)) {
                    (Some(Head::Int(i1)), Some(Head::Int(i2))) => {
                        if op.holds(&i1, &i2) {
                            pure(Rule::RGcop, Arc::new(Term::Hl(hl1)))
                        } else {
                            fail(Rule::RGcopF)
                        }
                    }
                    _ => error(Rule::RGcopE, format!("{} applied to non-integers", op.name())),
                },
            )
        }

        Term::Table(entries) => reduce_table(hp, env, allowed, entries, input),

        Term::Arr { len, var, body } => {
            let hl = len.as_label().expect("evaluated");
            Ok(match lookup_head(hp.heads, hl) {
                Some(Head::Int(i)) if !i.is_negative() => {
                    let n = i.to_usize().expect("array length exceeds host capacity");
                    let entry_var = fresh_var_avoiding(body);
                    let entries = (0..n)
                        .map(|j| TableEntry {
                            var: entry_var.clone(),
                            index: BigInt::from(j),
                            term: Arc::new(Term::Let {
                                var: var.clone(),
                                bound: Arc::new(Term::Int(BigInt::from(j))),
                                body: body.clone(),
                            }),
                        })
                        .collect();
                    pure(Rule::RGarr, Arc::new(Term::Table(entries)))
                }
                _ => error(Rule::RGarrE, "array length is not a natural number"),
            })
        }

        Term::Fun(fun) => Ok(if dk_allows_closure(fun) {
            let hl = hp.alloc_head(Head::Closure {
                env: env.clone(),
                fun: fun.clone(),
            });
            pure(Rule::RGfun, Arc::new(Term::Hl(hl)))
        } else {
            error(
                Rule::RGfunE,
                "function is neither contravariant nor invariant",
            )
        }),

        Term::Len(a) => {
            let hl = a.as_label().expect("evaluated");
            Ok(match lookup_head(hp.heads, hl) {
                Some(Head::Table(entries)) if is_array_entries(&entries) => {
                    pure(Rule::RGlen, Arc::new(Term::Int(BigInt::from(entries.len()))))
                }
                _ => error(Rule::RGlenE, "len applied to a non-array"),
            })
        }

        Term::AppErr(a, b) => {
            let hl1 = a.as_label().expect("evaluated");
            let hl2 = b.as_label().expect("evaluated");
            reduce_app_err(hp, allowed, hl1, hl2)
        }

        Term::AppFail(a, b) => {
            let hl1 = a.as_label().expect("evaluated");
            let hl2 = b.as_label().expect("evaluated");
            reduce_app_fail(hp, allowed, hl1, hl2)
        }

        Term::New { ty, init } => {
            let init_hl = init.as_label().expect("evaluated");
            Ok(if allowed.contains(EffectAtom::N) {
                let pl = {
                    let pl = loop {
                        let pl = crate::syntax::PointerLabel(*hp.next_ptr);
                        *hp.next_ptr += 1;
                        if !hp.ptrs.contains(pl) {
                            break pl;
                        }
                    };
                    hp.ptrs.insert(
                        pl,
                        PointerCell {
                            env: env.clone(),
                            ty: ty.clone(),
                            contents: init_hl,
                        },
                    );
                    pl
                };
                let hl = hp.alloc_head(Head::Ptr(pl));
                (
                    Reduced::Step {
                        action: Action::New,
                        term: Arc::new(Term::Hl(hl)),
                    },
                    RulePath::leaf_rule(Rule::RGnew),
                )
            } else {
                error(Rule::RGnewE, "pointer creation needs N effects")
            })
        }

        Term::Read(a) => {
            let hl = a.as_label().expect("evaluated");
            Ok(match lookup_head(hp.heads, hl) {
                Some(Head::Ptr(pl))
                    if hp.ptrs.contains(pl) && allowed.contains(EffectAtom::R) =>
                {
                    let contents = hp.ptrs.get(pl).unwrap().contents;
                    (
                        Reduced::Step {
                            action: Action::Read,
                            term: Arc::new(Term::Hl(contents)),
                        },
                        RulePath::leaf_rule(Rule::RGread),
                    )
                }
                _ => error(
                    Rule::RGreadE,
                    "read needs a live pointer and R effects",
                ),
            })
        }

        Term::Write(a, b) => {
            let hl1 = a.as_label().expect("evaluated");
            let hl2 = b.as_label().expect("evaluated");
            Ok(match lookup_head(hp.heads, hl1) {
                Some(Head::Ptr(pl))
                    if hp.ptrs.contains(pl) && allowed.contains(EffectAtom::W) =>
                {
                    hp.ptrs.set_contents(pl, hl2);
                    (
                        Reduced::Step {
                            action: Action::Write,
                            term: Arc::new(Term::Hl(hl2)),
                        },
                        RulePath::leaf_rule(Rule::RGwrite),
                    )
                }
                _ => error(
                    Rule::RGwriteE,
                    "write needs a live pointer and W effects",
                ),
            })
        }

        Term::In => Ok(if allowed.contains(EffectAtom::Io) {
            let i = input.next_input().ok_or(StepFault::InputExhausted)?;
            (
                Reduced::Step {
                    action: Action::In(i.clone()),
                    term: Arc::new(Term::Int(i)),
                },
                RulePath::leaf_rule(Rule::RGin),
            )
        } else {
            error(Rule::RGinE, "input needs IO effects")
        }),

        Term::Out(a) => {
            let hl = a.as_label().expect("evaluated");
            Ok(match lookup_head(hp.heads, hl) {
                Some(Head::Int(i)) if allowed.contains(EffectAtom::Io) => (
                    Reduced::Step {
                        action: Action::Out(i),
                        term: Arc::new(Term::Hl(hl)),
                    },
                    RulePath::leaf_rule(Rule::RGout),
                ),
                _ => error(Rule::RGoutE, "output needs an integer and IO effects"),
            })
        }

        Term::Unify(a, b) => {
            let hl = a.as_label().expect("evaluated");
            Ok(pure(
                Rule::RGunify,
                Arc::new(Term::Chk {
                    subject: hl,
                    ae: AssumedEqs::empty(),
                    pattern: b.clone(),
                    then_t: Arc::new(Term::Hl(hl)),
                    else_t: Arc::new(Term::Falses),
                }),
            ))
        }

        Term::Let { var, bound, body } => {
            let hl = bound.as_label().expect("evaluated");
            Ok(pure(
                Rule::RGlet,
                Arc::new(Term::Frame {
                    env: env.extend(var.clone(), hl),
                    body: body.clone(),
                    allowed,
                }),
            ))
        }

        Term::Letrec { binds, body } => reduce_letrec(hp, env, allowed, binds, body),

        Term::If {
            var,
            cond,
            then_t,
            else_t,
        } => Ok(pure(
            Rule::RGif,
            Arc::new(Term::IfM {
                var: var.clone(),
                cond: cond.clone(),
                then_t: then_t.clone(),
                saved: hp.ptrs.clone(),
                else_t: else_t.clone(),
            }),
        )),

        Term::IfM {
            var,
            cond,
            then_t,
            saved,
            else_t,
        } => {
            if let Some(hl) = cond.as_label() {
                return Ok(pure(
                    Rule::RGif1,
                    Arc::new(Term::Frame {
                        env: env.extend(var.clone(), hl),
                        body: then_t.clone(),
                        allowed,
                    }),
                ));
            }
            // The condition runs under reversible effects only.
            let inner_allowed = allowed.meet(Effect::REVERSIBLE);
            let (reduced, rules) = reduce(hp, env, inner_allowed, cond, input)?;
            Ok(match reduced {
                Reduced::Step { action, term: c2 } => (
                    Reduced::Step {
                        action,
                        term: Arc::new(Term::IfM {
                            var: var.clone(),
                            cond: c2,
                            then_t: then_t.clone(),
                            saved: saved.clone(),
                            else_t: else_t.clone(),
                        }),
                    },
                    rules.prepend(Rule::RGif2),
                ),
                Reduced::Fail => {
                    *hp.ptrs = restore_pointer_heap(hp.ptrs, saved);
                    (
                        Reduced::Step {
                            action: Action::Pure,
                            term: else_t.clone(),
                        },
                        RulePath::with_aux(Rule::RGif3, flatten_rules(rules)),
                    )
                }
                Reduced::Error { detail } => (
                    Reduced::Error { detail },
                    RulePath::with_aux(Rule::RGifE, flatten_rules(rules)),
                ),
            })
        }

        Term::Stage { right, .. } => Ok(pure(Rule::RGstage, right.clone())),

        Term::Frame {
            env: fenv,
            body,
            allowed: fallowed,
        } => {
            if let Some(hl) = body.as_label() {
                return Ok(pure(Rule::RGframe1, Arc::new(Term::Hl(hl))));
            }
            let (reduced, rules) = reduce(hp, fenv, *fallowed, body, input)?;
            Ok(match reduced {
                Reduced::Step { action, term: b2 } => (
                    Reduced::Step {
                        action,
                        term: Arc::new(Term::Frame {
                            env: fenv.clone(),
                            body: b2,
                            allowed: *fallowed,
                        }),
                    },
                    rules.prepend(Rule::RGframe2),
                ),
                Reduced::Fail => (Reduced::Fail, rules.prepend(Rule::RGframeF)),
                Reduced::Error { detail } => {
                    (Reduced::Error { detail }, rules.prepend(Rule::RGframeE))
                }
            })
        }

        Term::Chk {
            subject,
            ae,
            pattern,
            then_t,
            else_t,
        } => Ok(reduce_chk(hp, env, allowed, *subject, ae, pattern, then_t, else_t)),
    }
}

fn flatten_rules(rules: RulePath) -> Vec<Rule> {
    let mut all = rules.path;
    all.extend(rules.aux);
    all
}

fn apply_uop(op: UnaryOp, i: &BigInt) -> BigInt {
    match op {
        UnaryOp::Neg => -i,
        UnaryOp::Abs => i.abs(),
    }
}

fn apply_bop(op: BinaryOp, a: &BigInt, b: &BigInt) -> Option<BigInt> {
    match op {
        BinaryOp::Add => Some(a + b),
        BinaryOp::Sub => Some(a - b),
        BinaryOp::Mul => Some(a * b),
        BinaryOp::Div => (!b.is_zero()).then(|| a / b),
        BinaryOp::Mod => (!b.is_zero()).then(|| a % b),
    }
}

fn dk_allows_closure(fun: &Fun) -> bool {
    matches!(
        fun.domain_kind(),
        crate::syntax::DomainKind::Contravariant | crate::syntax::DomainKind::Invariant
    )
}

fn is_array_entries(entries: &[(BigInt, HeadLabel)]) -> bool {
    entries
        .iter()
        .enumerate()
        .all(|(i, (ix, _))| BigInt::from(i) == *ix)
}

/// Dependent tables evaluate their entries left to right, each entry in an
/// environment binding the entry variables to its left.
fn reduce_table(
    hp: &mut Heaps,
    env: &Environment,
    allowed: Effect,
    entries: &[TableEntry],
    input: &mut dyn InputSource,
) -> ReduceResult {
    match entries.iter().position(|e| !e.term.is_label()) {
        None => {
            let head = Head::table(
                entries
                    .iter()
                    .map(|e| (e.index.clone(), e.term.as_label().unwrap()))
                    .collect(),
            );
            let hl = hp.alloc_head(head);
            Ok(pure(Rule::RGtab1, Arc::new(Term::Hl(hl))))
        }
        Some(k) => {
            let mut inner_env = env.clone();
            for e in &entries[..k] {
                inner_env = inner_env.extend(e.var.clone(), e.term.as_label().unwrap());
            }
            let (reduced, rules) = reduce(hp, &inner_env, allowed, &entries[k].term, input)?;
            Ok(match reduced {
                Reduced::Step { action, term: t2 } => {
                    let mut new_entries = entries.to_vec();
                    new_entries[k].term = t2;
                    (
                        Reduced::Step {
                            action,
                            term: Arc::new(Term::Table(new_entries)),
                        },
                        rules.prepend(Rule::RGtab2),
                    )
                }
                Reduced::Fail => (Reduced::Fail, rules.prepend(Rule::RGtabF)),
                Reduced::Error { detail } => {
                    (Reduced::Error { detail }, rules.prepend(Rule::RGtabE))
                }
            })
        }
    }
}

fn reduce_app_err(hp: &mut Heaps, allowed: Effect, hl1: HeadLabel, hl2: HeadLabel) -> ReduceResult {
    Ok(match lookup_head(hp.heads, hl1) {
        Some(Head::Table(entries)) => {
            let arg = lookup_head(hp.heads, hl2);
            let elem = match &arg {
                Some(Head::Int(i)) => entries.iter().find(|(ix, _)| ix == i).map(|(_, hl)| *hl),
                _ => None,
            };
            match elem {
                Some(elem) => pure(Rule::RGappE1, Arc::new(Term::Hl(elem))),
                None => error(Rule::RGappEE2, "table applied outside its domain"),
            }
        }
        Some(Head::Closure { env: cenv, fun }) => match &*fun {
            Fun::Lambda {
                param,
                range_fx,
                body,
                ..
            } => pure(
                Rule::RGappE2,
                Arc::new(Term::Frame {
                    env: cenv.extend(param.clone(), hl2),
                    body: body.clone(),
                    allowed: allowed.meet(*range_fx),
                }),
            ),
            Fun::AllQuant {
                type_var,
                instantiation,
                param,
                range_fx,
                body,
                ..
            } => pure(
                Rule::RGappE3,
                Arc::new(Term::Frame {
                    env: cenv.extend(param.clone(), hl2),
                    body: Arc::new(Term::Let {
                        var: type_var.clone(),
                        bound: instantiation.clone(),
                        body: body.clone(),
                    }),
                    allowed: allowed.meet(*range_fx),
                }),
            ),
        },
        _ => error(Rule::RGappEE1, "application of a non-applicable value"),
    })
}

fn reduce_app_fail(hp: &mut Heaps, allowed: Effect, hl1: HeadLabel, hl2: HeadLabel) -> ReduceResult {
    use crate::syntax::DomainKind;
    Ok(match lookup_head(hp.heads, hl1) {
        Some(Head::Table(entries)) => {
            if !hp.heads.contains(hl2) {
                error(Rule::RGappFE2, "table applied to an undefined label")
            } else {
                let elem = match lookup_head(hp.heads, hl2) {
                    Some(Head::Int(i)) => {
                        entries.iter().find(|(ix, _)| *ix == i).map(|(_, hl)| *hl)
                    }
                    _ => None,
                };
                match elem {
                    Some(elem) => pure(Rule::RGappF1, Arc::new(Term::Hl(elem))),
                    None => fail(Rule::RGappFF),
                }
            }
        }
        Some(Head::Closure { env: cenv, fun }) => match &*fun {
            Fun::Lambda {
                param,
                dk: DomainKind::Contravariant,
                range_fx,
                body,
                ..
            } => pure(
                Rule::RGappF2,
                Arc::new(Term::Frame {
                    env: cenv.extend(param.clone(), hl2),
                    body: body.clone(),
                    allowed: allowed.meet(*range_fx),
                }),
            ),
            Fun::AllQuant {
                type_var,
                instantiation,
                param,
                range_fx,
                body,
                ..
            } => pure(
                Rule::RGappF3,
                Arc::new(Term::Frame {
                    env: cenv.extend(param.clone(), hl2),
                    body: Arc::new(Term::Let {
                        var: type_var.clone(),
                        bound: instantiation.clone(),
                        body: body.clone(),
                    }),
                    allowed: allowed.meet(*range_fx),
                }),
            ),
            // An invariant function checks the argument against its domain
            // term and fails outside it.
            Fun::Lambda {
                param,
                domain,
                dk: DomainKind::Invariant,
                dom_fx,
                range_fx,
                body,
            } => pure(
                Rule::RGappF4,
                Arc::new(Term::Frame {
                    env: cenv.clone(),
                    body: Arc::new(Term::Chk {
                        subject: hl2,
                        ae: AssumedEqs::empty(),
                        pattern: domain.clone(),
                        then_t: Arc::new(Term::Frame {
                            env: cenv.extend(param.clone(), hl2),
                            body: body.clone(),
                            allowed: allowed.meet(*range_fx),
                        }),
                        else_t: Arc::new(Term::Falses),
                    }),
                    allowed: allowed.meet(*dom_fx),
                }),
            ),
            Fun::Lambda { .. } => error(
                Rule::RGappFE3,
                "closure is neither contravariant nor invariant",
            ),
        },
        _ => error(Rule::RGappFE1, "application of a non-applicable value"),
    })
}

fn reduce_letrec(
    hp: &mut Heaps,
    env: &Environment,
    allowed: Effect,
    binds: &[(Var, SourceValue)],
    body: &TermRef,
) -> ReduceResult {
    let fresh: Vec<HeadLabel> = binds
        .iter()
        .map(|_| loop {
            let hl = HeadLabel(*hp.next_head);
            *hp.next_head += 1;
            if !hp.heads.contains(hl) {
                break hl;
            }
        })
        .collect();
    let mut inner_env = env.clone();
    for ((x, _), hl) in binds.iter().zip(&fresh) {
        inner_env = inner_env.extend(x.clone(), *hl);
    }

    // Erroneous values are detected before anything is committed; the fresh
    // labels above are irrelevant to erroneousness.
    for (_, value) in binds {
        if let Some(rule) = erroneous_value(&inner_env, value) {
            return Ok((
                Reduced::Error {
                    detail: "letrec value is erroneous".to_string(),
                },
                RulePath::with_aux(Rule::RGletrecE1, vec![rule]),
            ));
        }
    }

    let creates_ptrs = binds
        .iter()
        .any(|(_, v)| matches!(v, SourceValue::Ptr { .. }));
    if creates_ptrs && !allowed.contains(EffectAtom::N) {
        return Ok(error(
            Rule::RGletrecE2,
            "letrec pointer values need N effects",
        ));
    }

    let mut aux = Vec::new();
    for ((_, value), hl) in binds.iter().zip(&fresh) {
        let (head, rule) = eval_value_unchecked(hp.ptrs, hp.next_ptr, &inner_env, value);
        hp.heads.insert(*hl, head);
        aux.push(rule);
    }

    let action = if creates_ptrs {
        Action::New
    } else {
        Action::Pure
    };
    Ok((
        Reduced::Step {
            action,
            term: Arc::new(Term::Frame {
                env: inner_env,
                body: body.clone(),
                allowed,
            }),
        },
        RulePath::with_aux(Rule::RGletrec, aux),
    ))
}

/// Test-mode dispatch on the pattern of a chk term.
#[allow(clippy::too_many_arguments)]
fn reduce_chk(
    hp: &mut Heaps,
    env: &Environment,
    allowed: Effect,
    subject: HeadLabel,
    ae: &AssumedEqs,
    pattern: &TermRef,
    then_t: &TermRef,
    else_t: &TermRef,
) -> (Reduced, RulePath) {
    let rebuild_chk = |pattern: TermRef| -> TermRef {
        Arc::new(Term::Chk {
            subject,
            ae: ae.clone(),
            pattern,
            then_t: then_t.clone(),
            else_t: else_t.clone(),
        })
    };

    // Revert-to-generate patterns are generated first and then compared.
    if is_revert_to_generate(pattern) {
        let x = scratch_var();
        return pure(
            Rule::RTgen,
            Arc::new(Term::Let {
                var: x.clone(),
                bound: pattern.clone(),
                body: rebuild_chk(Arc::new(Term::Var(x))),
            }),
        );
    }

    match &**pattern {
        Term::Hl(hl2) => reduce_chk_labels(hp, subject, ae, *hl2, then_t, else_t),

        Term::Var(x) => match env.lookup(x) {
            Some(hl) => pure(Rule::RTvar, rebuild_chk(Arc::new(Term::Hl(hl)))),
            None => error(Rule::RTvarE, format!("variable {x} is not in scope")),
        },

        Term::Falses => pure(Rule::RTfalses, else_t.clone()),
        Term::Anys => pure(Rule::RTanys, then_t.clone()),

        Term::Int(i) => match lookup_head(hp.heads, subject) {
            None => error(Rule::RTiE, format!("{subject} is undefined")),
            Some(Head::Int(j)) if j == *i => pure(Rule::RTi1, then_t.clone()),
            Some(_) => pure(Rule::RTi2, else_t.clone()),
        },

        Term::Ints => match lookup_head(hp.heads, subject) {
            None => error(Rule::RTintsE, format!("{subject} is undefined")),
            Some(Head::Int(_)) => pure(Rule::RTints1, then_t.clone()),
            Some(_) => pure(Rule::RTints2, else_t.clone()),
        },

        // Test the left operand set first, then compute the right term and
        // compare against the subject.
        Term::Cop(op, left, right) => {
            let x = scratch_var();
            let cond = Arc::new(Term::Cop(
                *op,
                Arc::new(Term::Hl(subject)),
                Arc::new(Term::Frame {
                    env: env.clone(),
                    body: right.clone(),
                    allowed,
                }),
            ));
            pure(
                Rule::RTcop,
                Arc::new(Term::Chk {
                    subject,
                    ae: ae.clone(),
                    pattern: left.clone(),
                    then_t: Arc::new(Term::If {
                        var: x,
                        cond,
                        then_t: then_t.clone(),
                        else_t: else_t.clone(),
                    }),
                    else_t: else_t.clone(),
                }),
            )
        }

        Term::Table(pat_entries) => {
            let indices: Vec<BigInt> = pat_entries.iter().map(|e| e.index.clone()).collect();
            match lookup_head(hp.heads, subject) {
                None => error(Rule::RTtabE, format!("{subject} is undefined")),
                Some(Head::Table(sub_entries)) if table_has_fields(&sub_entries, &indices) => {
                    // Each element is tested in sequence, binding the entry
                    // variables for the patterns to their right.
                    let labels: Vec<HeadLabel> = pat_entries
                        .iter()
                        .map(|e| {
                            sub_entries
                                .iter()
                                .find(|(ix, _)| *ix == e.index)
                                .map(|(_, hl)| *hl)
                                .unwrap()
                        })
                        .collect();
                    let n = pat_entries.len();
                    let mut acc = then_t.clone();
                    for k in (0..n).rev() {
                        let inner = if k == n - 1 {
                            acc
                        } else {
                            let mut fenv = env.clone();
                            for j in 0..=k {
                                fenv = fenv.extend(pat_entries[j].var.clone(), labels[j]);
                            }
                            Arc::new(Term::Frame {
                                env: fenv,
                                body: acc,
                                allowed,
                            })
                        };
                        acc = Arc::new(Term::Chk {
                            subject: labels[k],
                            ae: ae.clone(),
                            pattern: pat_entries[k].term.clone(),
                            then_t: inner,
                            else_t: else_t.clone(),
                        });
                    }
                    pure(Rule::RTtab1, acc)
                }
                Some(_) => pure(Rule::RTtab2, else_t.clone()),
            }
        }

        Term::Arr { len, var, body } => match lookup_head(hp.heads, subject) {
            None => error(Rule::RTarrE, format!("{subject} is undefined")),
            Some(Head::Table(entries)) if is_array_entries(&entries) => {
                // Test the length, then each element against the range term
                // with the index variable bound by a let.
                let n = entries.len();
                let len_hl = hp.alloc_head(Head::Int(BigInt::from(n)));
                let mut acc = then_t.clone();
                for k in (0..n).rev() {
                    let elem_chk = Arc::new(Term::Chk {
                        subject: entries[k].1,
                        ae: ae.clone(),
                        pattern: Arc::new(Term::Let {
                            var: var.clone(),
                            bound: Arc::new(Term::Int(BigInt::from(k))),
                            body: body.clone(),
                        }),
                        then_t: acc,
                        else_t: else_t.clone(),
                    });
                    acc = Arc::new(Term::Frame {
                        env: env.clone(),
                        body: elem_chk,
                        allowed,
                    });
                }
                pure(
                    Rule::RTarr1,
                    Arc::new(Term::Chk {
                        subject: len_hl,
                        ae: ae.clone(),
                        pattern: len.clone(),
                        then_t: acc,
                        else_t: else_t.clone(),
                    }),
                )
            }
            Some(_) => pure(Rule::RTarr2, else_t.clone()),
        },

        Term::Tabs => match lookup_head(hp.heads, subject) {
            None => error(Rule::RTtabsE, format!("{subject} is undefined")),
            Some(Head::Table(_)) => pure(Rule::RTtabs1, then_t.clone()),
            Some(_) => pure(Rule::RTtabs2, else_t.clone()),
        },

        Term::Fun(_) => match lookup_head(hp.heads, subject) {
            None => error(Rule::RTfunE2, format!("{subject} is undefined")),
            Some(Head::Closure { .. }) => error(
                Rule::RTfunE1,
                "cannot test a function against a function",
            ),
            Some(_) => pure(Rule::RTfun, else_t.clone()),
        },

        Term::Funs => match lookup_head(hp.heads, subject) {
            None => error(Rule::RTfunsE, format!("{subject} is undefined")),
            Some(Head::Closure { .. }) => pure(Rule::RTfuns1, then_t.clone()),
            Some(_) => pure(Rule::RTfuns2, else_t.clone()),
        },

        Term::From(inner) => match &**inner {
            Term::Var(x) => {
                let target = env.lookup(x).and_then(|hl| lookup_head(hp.heads, hl));
                if let Some(Head::Closure { env: cenv, fun }) = target {
                    if let Fun::Lambda {
                        param,
                        domain,
                        dk: crate::syntax::DomainKind::Invariant,
                        dom_fx,
                        range_fx,
                        body,
                    } = &*fun
                    {
                        let body_is_param = matches!(&**body, Term::Var(y) if y == param);
                        if range_fx.is_empty() && body_is_param {
                            return pure(
                                Rule::RTfrom2,
                                Arc::new(Term::Frame {
                                    env: cenv.clone(),
                                    body: rebuild_chk(domain.clone()),
                                    allowed: allowed.meet(*dom_fx),
                                }),
                            );
                        }
                    }
                }
                error(Rule::RTfromE, "from needs an invariant identity closure")
            }
            _ => {
                let x = scratch_var();
                pure(
                    Rule::RTfrom1,
                    Arc::new(Term::Let {
                        var: x.clone(),
                        bound: inner.clone(),
                        body: rebuild_chk(Arc::new(Term::From(Arc::new(Term::Var(x))))),
                    }),
                )
            }
        },

        Term::Ptrs => match lookup_head(hp.heads, subject) {
            None => error(Rule::RTptrsE, format!("{subject} is undefined")),
            Some(Head::Ptr(_)) => pure(Rule::RTptrs1, then_t.clone()),
            Some(_) => pure(Rule::RTptrs2, else_t.clone()),
        },

        Term::Unify(left, right) => pure(
            Rule::RTunify,
            Arc::new(Term::Chk {
                subject,
                ae: ae.clone(),
                pattern: left.clone(),
                then_t: Arc::new(Term::Frame {
                    env: env.clone(),
                    body: rebuild_chk(right.clone()),
                    allowed,
                }),
                else_t: else_t.clone(),
            }),
        ),

        Term::Join(left, right) => pure(
            Rule::RTjoin,
            Arc::new(Term::Chk {
                subject,
                ae: ae.clone(),
                pattern: left.clone(),
                then_t: then_t.clone(),
                else_t: Arc::new(Term::Frame {
                    env: env.clone(),
                    body: rebuild_chk(right.clone()),
                    allowed,
                }),
            }),
        ),

        Term::Let { var, bound, body } => pure(
            Rule::RTlet,
            Arc::new(Term::Let {
                var: var.clone(),
                bound: bound.clone(),
                body: rebuild_chk(body.clone()),
            }),
        ),

        Term::Letrec { binds, body } => pure(
            Rule::RTletrec,
            Arc::new(Term::Letrec {
                binds: binds.clone(),
                body: rebuild_chk(body.clone()),
            }),
        ),

        Term::If {
            var,
            cond,
            then_t: inner_then,
            else_t: inner_else,
        } => pure(
            Rule::RTif,
            Arc::new(Term::If {
                var: var.clone(),
                cond: cond.clone(),
                then_t: rebuild_chk(inner_then.clone()),
                else_t: rebuild_chk(inner_else.clone()),
            }),
        ),

        Term::Stage { right, .. } => pure(Rule::RTstage, rebuild_chk(right.clone())),

        Term::IfM { .. } | Term::Frame { .. } | Term::Chk { .. } => {
            panic!("chk patterns must be head labels or source syntax")
        }

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
        | Term::FxThen { .. } => unreachable!("revert-to-generate patterns handled above"),
    }
}

fn table_has_fields(entries: &[(BigInt, HeadLabel)], indices: &[BigInt]) -> bool {
    let own: BTreeSet<&BigInt> = entries.iter().map(|(ix, _)| ix).collect();
    let want: BTreeSet<&BigInt> = indices.iter().collect();
    own == want
}

/// Testing one head label against another: assumed equalities first, then
/// structural comparison with cycle detection through the growing ae set.
fn reduce_chk_labels(
    hp: &mut Heaps,
    hl1: HeadLabel,
    ae: &AssumedEqs,
    hl2: HeadLabel,
    then_t: &TermRef,
    else_t: &TermRef,
) -> (Reduced, RulePath) {
    if ae.contains(hl1, hl2) {
        return pure(Rule::RThl, then_t.clone());
    }
    let h1 = lookup_head(hp.heads, hl1);
    let h2 = lookup_head(hp.heads, hl2);
    let (Some(h1), Some(h2)) = (h1, h2) else {
        return error(Rule::RThlE, format!("{hl1} or {hl2} is undefined"));
    };
    match h1 {
        Head::Int(i) => match h2 {
            Head::Int(j) if i == j => pure(Rule::RThli1, then_t.clone()),
            _ => pure(Rule::RThli2, else_t.clone()),
        },
        Head::Table(e1) => match h2 {
            Head::Table(e2)
                if e1.len() == e2.len()
                    && e1.iter().zip(e2.iter()).all(|((i1, _), (i2, _))| i1 == i2) =>
            {
                // Same domain: compare the element labels pairwise, assuming
                // the outer labels are equal so cyclic tables terminate.
                let extended = ae.with(hl1, hl2);
                let mut acc = then_t.clone();
                for ((_, l1), (_, l2)) in e1.iter().zip(e2.iter()).rev() {
                    acc = Arc::new(Term::Chk {
                        subject: *l1,
                        ae: extended.clone(),
                        pattern: Arc::new(Term::Hl(*l2)),
                        then_t: acc,
                        else_t: else_t.clone(),
                    });
                }
                pure(Rule::RThltab1, acc)
            }
            _ => pure(Rule::RThltab2, else_t.clone()),
        },
        Head::Closure { .. } => match h2 {
            Head::Closure { .. } => error(
                Rule::RThlfunE,
                "cannot test a function against a function",
            ),
            _ => pure(Rule::RThlfun, else_t.clone()),
        },
        Head::Ptr(pl) => match h2 {
            Head::Ptr(pl2) if pl2 == pl => pure(Rule::RThlpl1, then_t.clone()),
            _ => pure(Rule::RThlpl2, else_t.clone()),
        },
    }
}
