//! Runtime for the aleph core term language.
//!
//! Terms specify sets of values; the abstract machine generates a value for a
//! term or tests a value against a term, tracking allowed effects, a head
//! heap of runtime values, and a pointer heap of mutable cells. The runner
//! drives whole programs and records action traces; the frontend parses and
//! prints the concrete syntax.

pub mod effects;
pub mod frontend;
pub mod gen;
pub mod machine;
pub mod runner;
pub mod syntax;

pub use effects::{Effect, EffectAtom};
pub use frontend::{parse_program, parse_term, print_term, Diagnostic};
pub use machine::{
    applicable_rule, canonicalize, classify_head, step, Action, Applicable, InputSource,
    NoInput, Rule, RulePath, ScriptedInput, StepFault, StepOutcome,
};
pub use runner::{run, trace, ErrorCause, ProgramOutcome, TraceEntry, DEFAULT_MAX_STEPS};
pub use syntax::{
    alpha_equal, free_vars, is_revert_to_generate, well_formed_program, well_formed_source,
    Decidability, DomainKind, Environment, Fun, Head, HeadHeap, HeadLabel, MachineState,
    PointerCell, PointerHeap, PointerLabel, SourceValue, Term, TermRef, Var,
};
