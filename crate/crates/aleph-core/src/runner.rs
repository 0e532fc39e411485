//! Drives whole programs: iterated stepping from the initial state, action
//! sequences, step budgets (the decidable stand-in for divergence), and
//! structured trace records.

use std::fmt;

use crate::machine::{
    canonicalize, state_digest, step, Action, InputSource, RulePath, StepFault, StepOutcome,
};
use crate::syntax::{Head, MachineState, TermRef};

/// The default step budget; desk-scale programs finish orders of magnitude
/// below this.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// How a program run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProgramOutcome {
    /// The machine reached a terminal state denoting an empty table.
    Terminated { actions: Vec<Action> },
    /// The step budget ran out; the actions are a prefix of the program's
    /// behaviour (the program may diverge or just need more steps).
    BudgetExhausted { actions: Vec<Action>, steps: u64 },
    /// The program commits an error.
    ProgramError {
        actions: Vec<Action>,
        cause: ErrorCause,
    },
}

impl ProgramOutcome {
    pub fn actions(&self) -> &[Action] {
        match self {
            ProgramOutcome::Terminated { actions }
            | ProgramOutcome::BudgetExhausted { actions, .. }
            | ProgramOutcome::ProgramError { actions, .. } => actions,
        }
    }

    /// The observable (non-pure) actions.
    pub fn visible_actions(&self) -> Vec<&Action> {
        self.actions().iter().filter(|a| !a.is_pure()).collect()
    }
}

/// Why a program commits an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErrorCause {
    /// The terminal state's head is not an empty table.
    NonEmptyTableResult,
    /// The machine failed at the toplevel.
    ToplevelFailure { rules: RulePath },
    /// The machine committed a type error.
    MachineError { rules: RulePath, detail: String },
}

impl ErrorCause {
    pub fn label(&self) -> &'static str {
        match self {
            ErrorCause::NonEmptyTableResult => "non-empty-table-result",
            ErrorCause::ToplevelFailure { .. } => "toplevel-failure",
            ErrorCause::MachineError { .. } => "machine-error",
        }
    }
}

impl fmt::Display for ErrorCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorCause::NonEmptyTableResult => write!(f, "result is not an empty table"),
            ErrorCause::ToplevelFailure { rules } => write!(f, "toplevel failure ({rules})"),
            ErrorCause::MachineError { rules, detail } => {
                write!(f, "machine error at {rules}: {detail}")
            }
        }
    }
}

/// One record per step of a traced run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: u64,
    pub rules: RulePath,
    pub action: Action,
    /// Depth-limited rendering of the canonicalized term after the step.
    pub term_summary: String,
    pub head_count: usize,
    pub ptr_count: usize,
    /// Digest of the canonicalized state after the step.
    pub state_digest: String,
}

/// Input exhaustion is an experiment-setup problem, not a semantics outcome;
/// it carries the partial observations made before the fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputExhaustion {
    pub actions: Vec<Action>,
    pub steps: u64,
    pub entries: Vec<TraceEntry>,
}

impl fmt::Display for InputExhaustion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input source exhausted after {} steps", self.steps)
    }
}

impl std::error::Error for InputExhaustion {}

/// Runs a program from the initial state (empty heaps and environment, all
/// effects allowed), recording every action including pure ones.
pub fn run(
    term: TermRef,
    input: &mut dyn InputSource,
    max_steps: u64,
) -> Result<ProgramOutcome, InputExhaustion> {
    let mut state = MachineState::initial(term);
    let mut actions = Vec::new();
    let mut steps = 0u64;
    loop {
        if let Some(label) = state.term.as_label() {
            let empty_table =
                matches!(state.heads.get(label), Some(Head::Table(entries)) if entries.is_empty());
            return Ok(if empty_table {
                ProgramOutcome::Terminated { actions }
            } else {
                ProgramOutcome::ProgramError {
                    actions,
                    cause: ErrorCause::NonEmptyTableResult,
                }
            });
        }
        if steps == max_steps {
            return Ok(ProgramOutcome::BudgetExhausted { actions, steps });
        }
        match step(state, input) {
            Ok(StepOutcome::Stepped { action, next, .. }) => {
                actions.push(action);
                state = next;
                steps += 1;
            }
            Ok(StepOutcome::Fail { rules }) => {
                return Ok(ProgramOutcome::ProgramError {
                    actions,
                    cause: ErrorCause::ToplevelFailure { rules },
                });
            }
            Ok(StepOutcome::Error { rules, detail }) => {
                return Ok(ProgramOutcome::ProgramError {
                    actions,
                    cause: ErrorCause::MachineError { rules, detail },
                });
            }
            Ok(StepOutcome::Terminal { .. }) => unreachable!("terminal handled above"),
            Err(StepFault::InputExhausted) => {
                return Err(InputExhaustion {
                    actions,
                    steps,
                    entries: Vec::new(),
                });
            }
        }
    }
}

/// The result of a traced run: the outcome, one entry per step, and the state
/// the run ended at (the terminal state, the state that failed or erred, or
/// the state reached when the budget ran out).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceResult {
    pub outcome: ProgramOutcome,
    pub entries: Vec<TraceEntry>,
    pub last_state: MachineState,
}

/// Like `run`, but records one entry per step with canonicalized state
/// summaries and digests.
pub fn trace(
    term: TermRef,
    input: &mut dyn InputSource,
    max_steps: u64,
) -> Result<TraceResult, InputExhaustion> {
    let mut state = MachineState::initial(term);
    let mut actions = Vec::new();
    let mut entries: Vec<TraceEntry> = Vec::new();
    let mut steps = 0u64;
    loop {
        if let Some(label) = state.term.as_label() {
            let empty_table =
                matches!(state.heads.get(label), Some(Head::Table(entries)) if entries.is_empty());
            let outcome = if empty_table {
                ProgramOutcome::Terminated { actions }
            } else {
                ProgramOutcome::ProgramError {
                    actions,
                    cause: ErrorCause::NonEmptyTableResult,
                }
            };
            return Ok(TraceResult {
                outcome,
                entries,
                last_state: state,
            });
        }
        if steps == max_steps {
            return Ok(TraceResult {
                outcome: ProgramOutcome::BudgetExhausted { actions, steps },
                entries,
                last_state: state,
            });
        }
        let before = state.clone();
        match step(state, input) {
            Ok(StepOutcome::Stepped {
                action,
                next,
                rules,
            }) => {
                let canon = canonicalize(&next);
                entries.push(TraceEntry {
                    step: steps,
                    rules,
                    action: action.clone(),
                    term_summary: crate::frontend::print_term_limited(&canon.term, 6),
                    head_count: next.heads.len(),
                    ptr_count: next.ptrs.len(),
                    state_digest: state_digest(&canon),
                });
                actions.push(action);
                state = next;
                steps += 1;
            }
            Ok(StepOutcome::Fail { rules }) => {
                return Ok(TraceResult {
                    outcome: ProgramOutcome::ProgramError {
                        actions,
                        cause: ErrorCause::ToplevelFailure { rules },
                    },
                    entries,
                    last_state: before,
                });
            }
            Ok(StepOutcome::Error { rules, detail }) => {
                return Ok(TraceResult {
                    outcome: ProgramOutcome::ProgramError {
                        actions,
                        cause: ErrorCause::MachineError { rules, detail },
                    },
                    entries,
                    last_state: before,
                });
            }
            Ok(StepOutcome::Terminal { .. }) => unreachable!("terminal handled above"),
            Err(StepFault::InputExhausted) => {
                return Err(InputExhaustion {
                    actions,
                    steps,
                    entries,
                });
            }
        }
    }
}

/// Renders a traced run as one JSON object per line: every step entry, then a
/// final outcome record. This is the structured trace format.
pub fn render_trace_structured(result: &TraceResult) -> String {
    let mut out = String::new();
    for entry in &result.entries {
        let line = serde_json::json!({
            "step": entry.step,
            "rule": entry.rules.to_string(),
            "action": entry.action.to_string(),
            "term": entry.term_summary,
            "heads": entry.head_count,
            "ptrs": entry.ptr_count,
            "digest": entry.state_digest,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out.push_str(&render_outcome_structured(&result.outcome).to_string());
    out.push('\n');
    out
}

/// The final outcome as a JSON object: kind, cause, and the full action
/// sequence (pure actions included).
pub fn render_outcome_structured(outcome: &ProgramOutcome) -> serde_json::Value {
    let actions: Vec<String> = outcome.actions().iter().map(|a| a.to_string()).collect();
    let visible: Vec<String> = outcome
        .visible_actions()
        .iter()
        .map(|a| a.to_string())
        .collect();
    match outcome {
        ProgramOutcome::Terminated { .. } => serde_json::json!({
            "outcome": "terminated",
            "actions": actions,
            "visible_actions": visible,
        }),
        ProgramOutcome::BudgetExhausted { steps, .. } => serde_json::json!({
            "outcome": "budget-exhausted",
            "steps": steps,
            "actions": actions,
            "visible_actions": visible,
        }),
        ProgramOutcome::ProgramError { cause, .. } => {
            let mut obj = serde_json::json!({
                "outcome": "error",
                "cause": cause.label(),
                "actions": actions,
                "visible_actions": visible,
            });
            match cause {
                ErrorCause::NonEmptyTableResult => {}
                ErrorCause::ToplevelFailure { rules } => {
                    obj["rule"] = serde_json::json!(rules.to_string());
                }
                ErrorCause::MachineError { rules, detail } => {
                    obj["rule"] = serde_json::json!(rules.to_string());
                    obj["detail"] = serde_json::json!(detail);
                }
            }
            obj
        }
    }
}

/// One line per outcome for text presentation.
pub fn render_outcome_text(outcome: &ProgramOutcome) -> String {
    let visible: Vec<String> = outcome
        .visible_actions()
        .iter()
        .map(|a| a.to_string())
        .collect();
    let actions = format!("[{}]", visible.join(", "));
    match outcome {
        ProgramOutcome::Terminated { .. } => {
            format!("outcome: terminated\nactions: {actions}")
        }
        ProgramOutcome::BudgetExhausted { steps, .. } => {
            format!("outcome: budget exhausted after {steps} steps\nactions: {actions}")
        }
        ProgramOutcome::ProgramError { cause, .. } => {
            format!("outcome: error: {cause}\nactions: {actions}")
        }
    }
}
