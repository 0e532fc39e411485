//! Command-line entry point: run, trace, and check aleph programs.
//!
//! Exit codes: 0 = terminated, 1 = program error, 2 = step budget exhausted,
//! 3 = parse/well-formedness failure, bad flags, or input exhaustion.

use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;

use aleph_core::runner::{
    render_outcome_structured, render_outcome_text, render_trace_structured, trace, run,
    ProgramOutcome, DEFAULT_MAX_STEPS,
};
use aleph_core::{parse_program, InputSource, ScriptedInput, TermRef};

#[derive(Parser)]
#[command(name = "aleph", about = "Run, trace, and check aleph programs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a program and report its outcome and visible actions.
    Run {
        /// Path to the program (.aleph source).
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a program, printing one record per machine step.
    Trace {
        /// Path to the program (.aleph source).
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Print only the rule-name sequence (the conformance format).
        #[arg(long)]
        rules_only: bool,
    },
    /// Parse and well-formedness-check a program without running it.
    Check {
        /// Path to the program (.aleph source).
        file: PathBuf,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Scripted input integers, comma separated (e.g. --input 1,2,3).
    #[arg(long, value_name = "INTS")]
    input: Option<String>,
    /// File of whitespace-separated input integers.
    #[arg(long, value_name = "PATH", conflicts_with = "input")]
    input_file: Option<PathBuf>,
    /// Step budget (default 1000000, or the ALEPH_MAX_STEPS variable).
    #[arg(long, value_name = "N")]
    max_steps: Option<u64>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Structured,
}

const EXIT_OK: u8 = 0;
const EXIT_PROGRAM_ERROR: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_USAGE: u8 = 3;

fn main() -> ExitCode {
    // Die quietly when a consumer closes the pipe (e.g. `aleph trace | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { file, opts } => cmd_run(&file, &opts),
        Command::Trace {
            file,
            opts,
            rules_only,
        } => cmd_trace(&file, &opts, rules_only),
        Command::Check { file } => cmd_check(&file),
    };
    ExitCode::from(code)
}

fn load_program(file: &PathBuf) -> Result<TermRef, u8> {
    let src = match std::fs::read_to_string(file) {
        Ok(src) => src,
        Err(err) => {
            eprintln!("{}: {err}", file.display());
            return Err(EXIT_USAGE);
        }
    };
    match parse_program(&src) {
        Ok(term) => Ok(term),
        Err(diags) => {
            for d in diags {
                eprintln!("{}:{d}", file.display());
            }
            Err(EXIT_USAGE)
        }
    }
}

fn max_steps(opts: &RunOpts) -> Result<u64, u8> {
    if let Some(n) = opts.max_steps {
        return Ok(n);
    }
    match std::env::var("ALEPH_MAX_STEPS") {
        Ok(value) => value.parse().map_err(|_| {
            eprintln!("ALEPH_MAX_STEPS is not a step count: {value}");
            EXIT_USAGE
        }),
        Err(_) => Ok(DEFAULT_MAX_STEPS),
    }
}

fn input_source(opts: &RunOpts) -> Result<Box<dyn InputSource>, u8> {
    if let Some(spec) = &opts.input {
        let mut values = Vec::new();
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let value: BigInt = part.parse().map_err(|_| {
                eprintln!("bad --input integer: {part}");
                EXIT_USAGE
            })?;
            values.push(value);
        }
        return Ok(Box::new(ScriptedInput::new(values)));
    }
    if let Some(path) = &opts.input_file {
        let text = std::fs::read_to_string(path).map_err(|err| {
            eprintln!("{}: {err}", path.display());
            EXIT_USAGE
        })?;
        let mut values = Vec::new();
        for part in text.split_whitespace() {
            let value: BigInt = part.parse().map_err(|_| {
                eprintln!("bad input integer in {}: {part}", path.display());
                EXIT_USAGE
            })?;
            values.push(value);
        }
        return Ok(Box::new(ScriptedInput::new(values)));
    }
    // Reproducible by default: prompt only on a real terminal.
    if std::io::stdin().is_terminal() {
        Ok(Box::new(PromptInput))
    } else {
        Ok(Box::new(ScriptedInput::default()))
    }
}

/// Reads input integers interactively from a terminal.
struct PromptInput;

impl InputSource for PromptInput {
    fn next_input(&mut self) -> Option<BigInt> {
        let stdin = std::io::stdin();
        loop {
            eprint!("input> ");
            let _ = std::io::stderr().flush();
            let mut line = String::new();
            match stdin.lock().read_line(&mut line) {
                Ok(0) | Err(_) => return None,
                Ok(_) => match line.trim().parse::<BigInt>() {
                    Ok(value) => return Some(value),
                    Err(_) => eprintln!("not an integer: {}", line.trim()),
                },
            }
        }
    }
}

fn outcome_exit_code(outcome: &ProgramOutcome) -> u8 {
    match outcome {
        ProgramOutcome::Terminated { .. } => EXIT_OK,
        ProgramOutcome::ProgramError { .. } => EXIT_PROGRAM_ERROR,
        ProgramOutcome::BudgetExhausted { .. } => EXIT_BUDGET,
    }
}

fn cmd_run(file: &PathBuf, opts: &RunOpts) -> u8 {
    let term = match load_program(file) {
        Ok(term) => term,
        Err(code) => return code,
    };
    let budget = match max_steps(opts) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let mut input = match input_source(opts) {
        Ok(input) => input,
        Err(code) => return code,
    };
    match run(term, input.as_mut(), budget) {
        Ok(outcome) => {
            match opts.format {
                Format::Text => println!("{}", render_outcome_text(&outcome)),
                Format::Structured => println!("{}", render_outcome_structured(&outcome)),
            }
            outcome_exit_code(&outcome)
        }
        Err(fault) => {
            eprintln!("{fault}");
            EXIT_USAGE
        }
    }
}

fn cmd_trace(file: &PathBuf, opts: &RunOpts, rules_only: bool) -> u8 {
    let term = match load_program(file) {
        Ok(term) => term,
        Err(code) => return code,
    };
    let budget = match max_steps(opts) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let mut input = match input_source(opts) {
        Ok(input) => input,
        Err(code) => return code,
    };
    match trace(term, input.as_mut(), budget) {
        Ok(result) => {
            if rules_only {
                for entry in &result.entries {
                    println!("{}", entry.rules);
                }
                println!(
                    "{}",
                    render_outcome_text(&result.outcome).lines().next().unwrap()
                );
            } else {
                match opts.format {
                    Format::Text => {
                        for entry in &result.entries {
                            println!(
                                "step={} rule={} action={} heads={} ptrs={} term={}",
                                entry.step,
                                entry.rules,
                                entry.action,
                                entry.head_count,
                                entry.ptr_count,
                                entry.term_summary,
                            );
                        }
                        println!("{}", render_outcome_text(&result.outcome));
                    }
                    Format::Structured => print!("{}", render_trace_structured(&result)),
                }
            }
            outcome_exit_code(&result.outcome)
        }
        Err(fault) => {
            eprintln!("{fault}");
            EXIT_USAGE
        }
    }
}

fn cmd_check(file: &PathBuf) -> u8 {
    let src = match std::fs::read_to_string(file) {
        Ok(src) => src,
        Err(err) => {
            eprintln!("{}: {err}", file.display());
            return EXIT_USAGE;
        }
    };
    match parse_program(&src) {
        Ok(_) => {
            println!("ok");
            EXIT_OK
        }
        Err(diags) => {
            for d in diags {
                println!("{}:{d}", file.display());
            }
            EXIT_USAGE
        }
    }
}
