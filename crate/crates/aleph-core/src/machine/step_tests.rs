use std::sync::Arc;

use num_bigint::BigInt;

use crate::effects::Effect;
use crate::syntax::build::*;
use crate::syntax::{
    AssumedEqs, Environment, Head, HeadHeap, HeadLabel, MachineState, PointerHeap, Term, TermRef,
    Var,
};

use super::*;

fn state(term: TermRef) -> MachineState {
    MachineState::initial(term)
}

fn state_with_heads(term: TermRef, heads: Vec<(u64, Head)>) -> MachineState {
    let mut st = MachineState::initial(term);
    let mut max = 0;
    for (n, head) in heads {
        st.heads.insert(HeadLabel(n), head);
        max = max.max(n + 1);
    }
    st.next_head = max;
    st
}

fn chk(subject: u64, pattern: TermRef, then_t: TermRef, else_t: TermRef) -> TermRef {
    Arc::new(Term::Chk {
        subject: HeadLabel(subject),
        ae: AssumedEqs::empty(),
        pattern,
        then_t,
        else_t,
    })
}

fn step_ok(st: MachineState) -> StepOutcome {
    step(st, &mut NoInput).expect("no input needed")
}

#[test]
fn integer_allocates_a_fresh_head() {
    match step_ok(state(int(5))) {
        StepOutcome::Stepped {
            action,
            next,
            rules,
        } => {
            assert_eq!(action, Action::Pure);
            assert_eq!(rules.leaf(), Rule::RGi);
            assert_eq!(*next.term, Term::Hl(HeadLabel(0)));
            assert_eq!(next.heads.get(HeadLabel(0)), Some(&Head::Int(5.into())));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn falses_fails_and_anys_errors() {
    match step_ok(state(falses())) {
        StepOutcome::Fail { rules } => assert_eq!(rules.leaf(), Rule::RGfalsesF),
        other => panic!("unexpected {other:?}"),
    }
    match step_ok(state(anys())) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGanysE),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn comparison_reduces_to_first_label_or_fails() {
    let st = state_with_heads(
        cop(crate::syntax::CompareOp::Lt, hl(0), hl(1)),
        vec![(0, Head::Int(3.into())), (1, Head::Int(5.into()))],
    );
    match step_ok(st) {
        StepOutcome::Stepped { next, rules, .. } => {
            assert_eq!(rules.leaf(), Rule::RGcop);
            assert_eq!(*next.term, Term::Hl(HeadLabel(0)));
        }
        other => panic!("unexpected {other:?}"),
    }

    let st = state_with_heads(
        cop(crate::syntax::CompareOp::Lt, hl(0), hl(1)),
        vec![(0, Head::Int(5.into())), (1, Head::Int(3.into()))],
    );
    match step_ok(st) {
        StepOutcome::Fail { rules } => assert_eq!(rules.leaf(), Rule::RGcopF),
        other => panic!("unexpected {other:?}"),
    }

    let st = state_with_heads(
        cop(crate::syntax::CompareOp::Lt, hl(0), hl(1)),
        vec![(0, Head::table(vec![])), (1, Head::Int(3.into()))],
    );
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGcopE),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn division_by_zero_is_a_machine_error() {
    let st = state_with_heads(
        bop(crate::syntax::BinaryOp::Div, hl(0), hl(1)),
        vec![(0, Head::Int(1.into())), (1, Head::Int(0.into()))],
    );
    match step_ok(st) {
        StepOutcome::Error { rules, detail } => {
            assert_eq!(rules.leaf(), Rule::RGbopE);
            assert!(detail.contains("division by zero"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn testing_against_anys_and_falses_picks_branches() {
    let st = state_with_heads(
        chk(0, anys(), int(1), int(2)),
        vec![(0, Head::Int(7.into()))],
    );
    match step_ok(st) {
        StepOutcome::Stepped { next, rules, .. } => {
            assert_eq!(rules.leaf(), Rule::RTanys);
            assert_eq!(*next.term, *int(1));
        }
        other => panic!("unexpected {other:?}"),
    }

    let st = state_with_heads(
        chk(0, falses(), int(1), int(2)),
        vec![(0, Head::Int(7.into()))],
    );
    match step_ok(st) {
        StepOutcome::Stepped { next, rules, .. } => {
            assert_eq!(rules.leaf(), Rule::RTfalses);
            assert_eq!(*next.term, *int(2));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn input_without_io_effects_is_an_error() {
    let mut st = state(input());
    st.allowed = Effect::NONE;
    match step(st, &mut ScriptedInput::from_i64s(&[1])).unwrap() {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGinE),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn input_consumes_the_next_integer() {
    let mut src = ScriptedInput::from_i64s(&[42, 43]);
    match step(state(input()), &mut src).unwrap() {
        StepOutcome::Stepped { action, next, .. } => {
            assert_eq!(action, Action::In(42.into()));
            assert_eq!(*next.term, Term::Int(42.into()));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(src.remaining(), vec![BigInt::from(43)]);

    match step(state(input()), &mut NoInput) {
        Err(StepFault::InputExhausted) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn pointer_rules_gate_on_effects() {
    let mut st = state_with_heads(
        new_ptr(ints(), hl(0)),
        vec![(0, Head::Int(1.into()))],
    );
    st.allowed = Effect::REVERSIBLE;
    match step_ok(st) {
        StepOutcome::Stepped {
            action,
            next,
            rules,
        } => {
            assert_eq!(action, Action::New);
            assert_eq!(rules.leaf(), Rule::RGnew);
            assert_eq!(next.ptrs.len(), 1);
        }
        other => panic!("unexpected {other:?}"),
    }

    let mut st = state_with_heads(new_ptr(ints(), hl(0)), vec![(0, Head::Int(1.into()))]);
    st.allowed = Effect::NONE;
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGnewE),
        other => panic!("unexpected {other:?}"),
    }

    // Reads of non-pointers error regardless of effects.
    let st = state_with_heads(read(hl(0)), vec![(0, Head::Int(1.into()))]);
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGreadE),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn array_lambda_expands_to_a_dependent_table() {
    let st = state_with_heads(
        arr(hl(0), "i", var("i")),
        vec![(0, Head::Int(2.into()))],
    );
    match step_ok(st) {
        StepOutcome::Stepped { next, rules, .. } => {
            assert_eq!(rules.leaf(), Rule::RGarr);
            match &*next.term {
                Term::Table(entries) => {
                    assert_eq!(entries.len(), 2);
                    for (j, e) in entries.iter().enumerate() {
                        assert_eq!(e.index, BigInt::from(j));
                        match &*e.term {
                            Term::Let { bound, .. } => {
                                assert_eq!(**bound, Term::Int(j.into()));
                            }
                            other => panic!("unexpected entry {other:?}"),
                        }
                    }
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        other => panic!("unexpected {other:?}"),
    }

    let st = state_with_heads(arr(hl(0), "i", var("i")), vec![(0, Head::Int((-1).into()))]);
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGarrE),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn applicable_rule_examples() {
    let st = state_with_heads(hl(0), vec![(0, Head::Int(1.into()))]);
    assert_eq!(applicable_rule(&st), Applicable::Terminal);

    let st = state(var("x"));
    assert_eq!(applicable_rule(&st), Applicable::Rule(Rule::RGvarE));

    let st = state_with_heads(unify(hl(0), ints()), vec![(0, Head::Int(1.into()))]);
    assert_eq!(applicable_rule(&st), Applicable::Rule(Rule::RGunify));

    // Nested redexes name the innermost rule.
    let st = state(let_("x", int(5), var("x")));
    assert_eq!(applicable_rule(&st), Applicable::Rule(Rule::RGi));
}

#[test]
fn dangling_labels_surface_the_undefined_label_errors() {
    // Testing an undefined subject against an integer pattern.
    let st = state(chk(9, int(3), table(vec![]), table(vec![])));
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RTiE),
        other => panic!("unexpected {other:?}"),
    }

    // Failing application of a table to an undefined label.
    let st = state_with_heads(app_fail(hl(0), hl(9)), vec![(0, Head::table(vec![]))]);
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGappFE2),
        other => panic!("unexpected {other:?}"),
    }

    // Label-against-label with an undefined side.
    let st = state_with_heads(chk(0, hl(9), int(1), int(2)), vec![(0, Head::Int(1.into()))]);
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RThlE),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn assumed_equalities_succeed_immediately() {
    let mut st = state_with_heads(
        Arc::new(Term::Chk {
            subject: HeadLabel(0),
            ae: AssumedEqs::empty().with(HeadLabel(0), HeadLabel(1)),
            pattern: hl(1),
            then_t: int(1),
            else_t: int(2),
        }),
        vec![(0, Head::Int(5.into())), (1, Head::Int(6.into()))],
    );
    st.next_head = 2;
    match step_ok(st) {
        StepOutcome::Stepped { next, rules, .. } => {
            assert_eq!(rules.leaf(), Rule::RThl);
            assert_eq!(*next.term, *int(1));
        }
        other => panic!("unexpected {other:?}"),
    }

    // The pair is ordered: the reverse pair is not assumed.
    let st = state_with_heads(
        Arc::new(Term::Chk {
            subject: HeadLabel(1),
            ae: AssumedEqs::empty().with(HeadLabel(0), HeadLabel(1)),
            pattern: hl(0),
            then_t: int(1),
            else_t: int(2),
        }),
        vec![(0, Head::Int(5.into())), (1, Head::Int(6.into()))],
    );
    match step_ok(st) {
        StepOutcome::Stepped { rules, next, .. } => {
            assert_eq!(rules.leaf(), Rule::RThli2);
            assert_eq!(*next.term, *int(2));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn letrec_with_pointer_value_acts_new() {
    let term = letrec(
        vec![
            ("z", tuple_value(vec![])),
            ("p", ptr_value(tabs(), "z")),
        ],
        read(var("p")),
    );
    match step_ok(state(term)) {
        StepOutcome::Stepped {
            action,
            next,
            rules,
        } => {
            assert_eq!(action, Action::New);
            assert_eq!(rules.leaf(), Rule::RGletrec);
            assert_eq!(rules.aux, vec![Rule::RVtable, Rule::RVptr]);
            assert_eq!(next.ptrs.len(), 1);
            assert_eq!(next.heads.len(), 2);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn letrec_value_errors_truncate_evaluation() {
    // An out-of-scope tuple variable is erroneous even when a later value
    // would also violate the pointer-effect gate.
    let term = letrec(
        vec![("t", tuple_value(vec![(0, "missing")]))],
        table(vec![]),
    );
    match step_ok(state(term)) {
        StepOutcome::Error { rules, .. } => {
            assert_eq!(rules.leaf(), Rule::RGletrecE1);
            assert_eq!(rules.aux, vec![Rule::RVtableE]);
        }
        other => panic!("unexpected {other:?}"),
    }

    let mut st = state(letrec(
        vec![("z", tuple_value(vec![])), ("p", ptr_value(tabs(), "z"))],
        table(vec![]),
    ));
    st.allowed = Effect::NONE;
    match step_ok(st) {
        StepOutcome::Error { rules, .. } => assert_eq!(rules.leaf(), Rule::RGletrecE2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn canonicalize_relabels_by_first_occurrence() {
    let st = state_with_heads(hl(9), vec![(9, Head::Int(5.into()))]);
    let canon = canonicalize(&st);
    assert_eq!(*canon.term, Term::Hl(HeadLabel(0)));
    assert_eq!(canon.heads.get(HeadLabel(0)), Some(&Head::Int(5.into())));
    assert_eq!(canon.next_head, 1);
}

#[test]
fn canonicalize_is_idempotent() {
    for seed in 0..40 {
        let program = crate::gen::program(seed);
        let mut st = MachineState::initial(program);
        let mut input = ScriptedInput::from_i64s(&[1, 2, 3, 4, 5, 6, 7, 8]);
        for _ in 0..30 {
            match step(st.clone(), &mut input) {
                Ok(StepOutcome::Stepped { next, .. }) => st = next,
                _ => break,
            }
        }
        let once = canonicalize(&st);
        let twice = canonicalize(&once);
        assert_eq!(once, twice, "seed {seed}");
    }
}

#[test]
fn counter_offsets_canonicalize_identically() {
    let program = let_(
        "p",
        new_ptr(ints(), int(1)),
        table(vec![("x", 0, read(var("p")))]),
    );
    let run_with = |hl0: u64, pl0: u64| {
        let mut st = MachineState::initial_with_offsets(program.clone(), hl0, pl0);
        loop {
            match step(st.clone(), &mut NoInput).unwrap() {
                StepOutcome::Stepped { next, .. } => st = next,
                _ => return st,
            }
        }
    };
    let a = run_with(0, 0);
    let b = run_with(100, 7);
    assert_ne!(a, b, "raw states differ in label identities");
    assert_eq!(canonicalize(&a), canonicalize(&b));
    assert_eq!(state_digest(&canonicalize(&a)), state_digest(&canonicalize(&b)));
}

#[test]
fn stepping_twice_from_one_state_is_deterministic() {
    for seed in 0..30 {
        let program = crate::gen::program(seed);
        let mut st = MachineState::initial(program);
        let script = [5, -3, 8, 0, 2, 9, 1, 4];
        let mut input = ScriptedInput::from_i64s(&script);
        for _ in 0..40 {
            let mut in1 = ScriptedInput::new(input.remaining());
            let mut in2 = ScriptedInput::new(input.remaining());
            let out1 = step(st.clone(), &mut in1);
            let out2 = step(st.clone(), &mut in2);
            match (out1, out2) {
                (
                    Ok(StepOutcome::Stepped {
                        action: a1,
                        next: n1,
                        rules: r1,
                    }),
                    Ok(StepOutcome::Stepped {
                        action: a2,
                        next: n2,
                        rules: r2,
                    }),
                ) => {
                    assert_eq!(a1, a2);
                    assert_eq!(r1, r2);
                    assert_eq!(canonicalize(&n1), canonicalize(&n2));
                    match step(st, &mut input) {
                        Ok(StepOutcome::Stepped { next, .. }) => st = next,
                        _ => unreachable!(),
                    }
                }
                (o1, o2) => {
                    assert_eq!(o1, o2);
                    break;
                }
            }
        }
    }
}

#[test]
fn frame_restores_nothing_but_env_and_effects() {
    // (let x 5 x) walks through a frame and back out.
    let result = crate::runner::trace(
        let_("x", int(5), var("x")),
        &mut NoInput,
        100,
    )
    .unwrap();
    let rules: Vec<String> = result.entries.iter().map(|e| e.rules.to_string()).collect();
    assert_eq!(
        rules,
        vec!["RGctxt/RGi", "RGlet", "RGframe2/RGvar", "RGframe1"]
    );
}

#[test]
fn guard_scan_is_pure() {
    let st = state_with_heads(
        unify(hl(0), ints()),
        vec![(0, Head::Int(1.into()))],
    );
    let before = st.clone();
    let report = guard_scan(&st);
    assert_eq!(report.stepped, vec![Rule::RGunify]);
    assert_eq!(st, before);

    let report = guard_scan(&state(Arc::new(Term::In)));
    assert_eq!(report.stepped, vec![Rule::RGin]);
}

#[test]
fn environments_resolve_variables_through_frames() {
    let env = Environment::empty().extend(Var::new("x"), HeadLabel(0));
    let st = MachineState {
        heads: {
            let mut h = HeadHeap::new();
            h.insert(HeadLabel(0), Head::Int(1.into()));
            h
        },
        ptrs: PointerHeap::new(),
        env,
        allowed: Effect::ALL,
        term: var("x"),
        next_head: 1,
        next_ptr: 0,
    };
    match step_ok(st) {
        StepOutcome::Stepped { next, rules, .. } => {
            assert_eq!(rules.leaf(), Rule::RGvar);
            assert_eq!(*next.term, Term::Hl(HeadLabel(0)));
        }
        other => panic!("unexpected {other:?}"),
    }
}
