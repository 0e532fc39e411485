//! Shared support for the integration suites: the program corpus, its
//! manifest (inputs, budgets, expected outcomes), and hand-built machine
//! states for the rules that no well-formed program can reach.

use std::path::PathBuf;
use std::sync::Arc;

use aleph_core::machine::{step, NoInput, Rule, StepOutcome};
use aleph_core::runner::{trace, ErrorCause, ProgramOutcome, TraceResult};
use aleph_core::syntax::{build, AssumedEqs, DomainKind, Head, HeadLabel, MachineState, Term, TermRef};
use aleph_core::{Effect, ScriptedInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Terminated,
    NonEmptyTable,
    Failure,
    MachineError,
    Budget,
}

pub struct CorpusEntry {
    pub name: &'static str,
    pub inputs: &'static [i64],
    pub max_steps: u64,
    pub expected: Expected,
}

const DEFAULT_BUDGET: u64 = 100_000;

const fn entry(name: &'static str, expected: Expected) -> CorpusEntry {
    CorpusEntry {
        name,
        inputs: &[],
        max_steps: DEFAULT_BUDGET,
        expected,
    }
}

pub fn corpus() -> Vec<CorpusEntry> {
    use Expected::*;
    vec![
        entry("s01_empty_table", Terminated),
        entry("s02_int_result", NonEmptyTable),
        entry("s03_let_var", NonEmptyTable),
        CorpusEntry {
            name: "s04_budget_loop",
            inputs: &[],
            max_steps: 400,
            expected: Budget,
        },
        entry("s05_rollback", NonEmptyTable),
        entry("s06_cycle_unify", Terminated),
        entry("s07_arithmetic", Terminated),
        entry("s08_tables", Terminated),
        entry("s09_functions", Terminated),
        entry("s10_invariant_domain_check", Terminated),
        entry("s11_pointers", Terminated),
        CorpusEntry {
            name: "s12_io",
            inputs: &[42],
            max_steps: DEFAULT_BUDGET,
            expected: Terminated,
        },
        entry("s13_letrec_values", Terminated),
        entry("s14_conditionals", Terminated),
        entry("s15_stage", Terminated),
        CorpusEntry {
            name: "s16_test_positive",
            inputs: &[5],
            max_steps: DEFAULT_BUDGET,
            expected: Terminated,
        },
        entry("s17_test_else_branches", Terminated),
        entry("s18_test_dependent_patterns", Terminated),
        entry("s19_test_label_comparisons", Terminated),
        entry("s20_test_set_patterns", Terminated),
        entry("s21_test_cycle_domains", Terminated),
        entry("f01_falses", Failure),
        entry("f02_cop_false", Failure),
        entry("f03_table_entry_fails", Failure),
        entry("f04_ctxt_fail", Failure),
        entry("f05_frame_fail", Failure),
        entry("f06_appf_outside_domain", Failure),
        entry("f07_appf_domain_check_fails", Failure),
        entry("e01_anys", MachineError),
        entry("e02_ints", MachineError),
        entry("e03_tabs", MachineError),
        entry("e04_funs", MachineError),
        entry("e05_ptrs", MachineError),
        entry("e06_ptrto", MachineError),
        entry("e07_from_generate", MachineError),
        entry("e08_join_generate", MachineError),
        entry("e09_fxthen", MachineError),
        entry("e10_uop_non_integer", MachineError),
        entry("e11_div_zero", MachineError),
        entry("e12_cop_non_integer", MachineError),
        entry("e13_arr_negative", MachineError),
        entry("e14_len_non_array", MachineError),
        entry("e15_appe_outside_domain", MachineError),
        entry("e16_appe_non_applicable", MachineError),
        entry("e17_appf_non_applicable", MachineError),
        entry("e18_read_non_pointer", MachineError),
        entry("e19_write_non_pointer", MachineError),
        entry("e20_new_gated", MachineError),
        entry("e21_bad_domain_kind", MachineError),
        entry("e22_letrec_bad_fun", MachineError),
        entry("e23_letrec_ptr_gated", MachineError),
        entry("e24_if_in_gated", MachineError),
        entry("e25_if_out_gated", MachineError),
        entry("e26_table_entry_error", MachineError),
        entry("e27_ctxt_error", MachineError),
        entry("e28_frame_error", MachineError),
        entry("e29_test_fun_against_fun", MachineError),
        entry("e30_from_non_type", MachineError),
        entry("e31_test_closure_labels", MachineError),
    ]
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn load_program(name: &str) -> TermRef {
    let path = corpus_dir().join(format!("{name}.aleph"));
    let src = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    aleph_core::parse_program(&src)
        .unwrap_or_else(|diags| panic!("{name} does not parse: {diags:?}"))
}

pub fn run_entry(e: &CorpusEntry) -> TraceResult {
    let term = load_program(e.name);
    let mut input = ScriptedInput::from_i64s(e.inputs);
    trace(term, &mut input, e.max_steps)
        .unwrap_or_else(|fault| panic!("{}: {fault}", e.name))
}

pub fn outcome_matches(outcome: &ProgramOutcome, expected: Expected) -> bool {
    matches!(
        (outcome, expected),
        (ProgramOutcome::Terminated { .. }, Expected::Terminated)
            | (ProgramOutcome::BudgetExhausted { .. }, Expected::Budget)
            | (
                ProgramOutcome::ProgramError {
                    cause: ErrorCause::NonEmptyTableResult,
                    ..
                },
                Expected::NonEmptyTable,
            )
            | (
                ProgramOutcome::ProgramError {
                    cause: ErrorCause::ToplevelFailure { .. },
                    ..
                },
                Expected::Failure,
            )
            | (
                ProgramOutcome::ProgramError {
                    cause: ErrorCause::MachineError { .. },
                    ..
                },
                Expected::MachineError,
            )
    )
}

/// All rule names used in a traced run: step derivations plus the rules of a
/// failing or erring final judgement.
pub fn rules_of(result: &TraceResult) -> Vec<Rule> {
    let mut rules: Vec<Rule> = result
        .entries
        .iter()
        .flat_map(|e| e.rules.all_rules().collect::<Vec<_>>())
        .collect();
    match &result.outcome {
        ProgramOutcome::ProgramError {
            cause: ErrorCause::ToplevelFailure { rules: r },
            ..
        }
        | ProgramOutcome::ProgramError {
            cause: ErrorCause::MachineError { rules: r, .. },
            ..
        } => rules.extend(r.all_rules()),
        _ => {}
    }
    rules
}

/// Rules that no well-formed closed program can fire: they need unbound
/// variables or head labels outside the heap domain, which checked programs
/// never produce. They are exercised on hand-built machine states instead.
pub const FIXTURE_ONLY: &[Rule] = &[
    Rule::RGvarE,
    Rule::RTvarE,
    Rule::RVtableE,
    Rule::RVptrE,
    Rule::RGappFE2,
    Rule::RGappFE3,
    Rule::RTiE,
    Rule::RTintsE,
    Rule::RTtabE,
    Rule::RTarrE,
    Rule::RTtabsE,
    Rule::RTfunE2,
    Rule::RTfunsE,
    Rule::RTptrsE,
    Rule::RThlE,
];

fn chk_state(heads: Vec<(u64, Head)>, subject: u64, pattern: TermRef) -> MachineState {
    let mut st = MachineState::initial(Arc::new(Term::Chk {
        subject: HeadLabel(subject),
        ae: AssumedEqs::empty(),
        pattern,
        then_t: build::int(1),
        else_t: build::int(2),
    }));
    let mut max = 0;
    for (n, head) in heads {
        st.heads.insert(HeadLabel(n), head);
        max = max.max(n + 1);
    }
    st.next_head = max;
    st
}

/// Hand-built machine states, one per fixture-only rule, paired with the rule
/// their single step must fire.
pub fn fixture_states() -> Vec<(Rule, MachineState)> {
    let int_head = |i: i64| Head::Int(i.into());
    let identity = build::lambda(
        "y",
        build::ints(),
        DomainKind::Invariant,
        Effect::NONE,
        Effect::NONE,
        build::var("y"),
    );
    let at_least = build::lambda(
        "y",
        build::ints(),
        DomainKind::AtLeast,
        Effect::NONE,
        Effect::NONE,
        build::var("y"),
    );
    let closure_of = |t: &TermRef| match &**t {
        Term::Fun(f) => Head::Closure {
            env: aleph_core::Environment::empty(),
            fun: f.clone(),
        },
        _ => unreachable!(),
    };

    let mut fixtures = vec![
        // An unbound variable in generate mode.
        (Rule::RGvarE, MachineState::initial(build::var("q"))),
        // An unbound variable as a test pattern.
        (
            Rule::RTvarE,
            chk_state(vec![(0, int_head(5))], 0, build::var("q")),
        ),
        // Failing application of a table to an undefined label.
        (Rule::RGappFE2, {
            let mut st = MachineState::initial(build::app_fail(build::hl(0), build::hl(9)));
            st.heads.insert(HeadLabel(0), Head::table(vec![]));
            st.next_head = 1;
            st
        }),
        // Failing application of a closure whose domain kind never survives
        // closure creation.
        (Rule::RGappFE3, {
            let mut st = MachineState::initial(build::app_fail(build::hl(0), build::hl(1)));
            st.heads.insert(HeadLabel(0), closure_of(&at_least));
            st.heads.insert(HeadLabel(1), int_head(5));
            st.next_head = 2;
            st
        }),
        // Undefined subjects under each pattern family.
        (Rule::RTiE, chk_state(vec![], 9, build::int(3))),
        (Rule::RTintsE, chk_state(vec![], 9, build::ints())),
        (
            Rule::RTtabE,
            chk_state(vec![], 9, build::table(vec![("x", 0, build::int(5))])),
        ),
        (
            Rule::RTarrE,
            chk_state(vec![], 9, build::arr(build::int(1), "i", build::int(7))),
        ),
        (Rule::RTtabsE, chk_state(vec![], 9, build::tabs())),
        (Rule::RTfunE2, chk_state(vec![], 9, identity.clone())),
        (Rule::RTfunsE, chk_state(vec![], 9, build::funs())),
        (Rule::RTptrsE, chk_state(vec![], 9, build::ptrs())),
        // Label-against-label with an undefined side.
        (
            Rule::RThlE,
            chk_state(vec![(0, int_head(1))], 0, build::hl(9)),
        ),
    ];
    // Letrec values over variables that no environment binds.
    fixtures.push((
        Rule::RVtableE,
        MachineState::initial(build::letrec(
            vec![("t", build::tuple_value(vec![(0, "q")]))],
            build::table(vec![]),
        )),
    ));
    fixtures.push((
        Rule::RVptrE,
        MachineState::initial(build::letrec(
            vec![("p", build::ptr_value(build::ints(), "q"))],
            build::table(vec![]),
        )),
    ));
    fixtures
}

/// Steps each fixture once and returns every rule fired, asserting the
/// expected rule is among them.
pub fn fixture_rules() -> Vec<Rule> {
    let mut fired = Vec::new();
    for (expected, state) in fixture_states() {
        let outcome = step(state, &mut NoInput).expect("fixtures need no input");
        let rules = match &outcome {
            StepOutcome::Error { rules, .. } => rules,
            other => panic!("fixture for {expected} did not error: {other:?}"),
        };
        let all: Vec<Rule> = rules.all_rules().collect();
        assert!(
            all.contains(&expected),
            "fixture for {expected} fired {all:?}"
        );
        fired.extend(all);
    }
    fired
}
