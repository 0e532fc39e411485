//! End-to-end tests of the `aleph` binary: exit codes, output formats, and
//! the rules-only conformance format.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn aleph() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aleph"))
}

fn write_program(dir: &TempDir, name: &str, src: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, src).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../aleph-core/tests/golden")
}

#[test]
fn empty_table_terminates_with_exit_zero() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "(table)");
    let out = aleph().arg("run").arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("outcome: terminated"), "{text}");
    assert!(text.contains("actions: []"), "{text}");
}

#[test]
fn non_table_result_is_a_program_error() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "(out 7)");
    let out = aleph().arg("run").arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("not an empty table"), "{text}");
    assert!(text.contains("actions: [out 7]"), "{text}");
}

#[test]
fn scripted_input_is_consumed_in_order() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "in");
    let out = aleph()
        .arg("run")
        .arg(&file)
        .args(["--input", "42"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("actions: [in 42]"));

    // The same inputs via a file.
    let inputs = dir.path().join("inputs.txt");
    std::fs::write(&inputs, "42\n").unwrap();
    let out = aleph()
        .arg("run")
        .arg(&file)
        .arg("--input-file")
        .arg(&inputs)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("actions: [in 42]"));
}

#[test]
fn input_exhaustion_is_a_usage_fault() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "in");
    // stdin is not a terminal under the test harness, so no prompting.
    let out = aleph().arg("run").arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn rules_only_trace_matches_the_golden_sequence() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "(let x 5 x)");
    let out = aleph()
        .arg("trace")
        .arg(&file)
        .arg("--rules-only")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let golden = std::fs::read_to_string(golden_dir().join("let_var_rules.txt")).unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn rollback_trace_matches_the_golden_sequence() {
    let dir = TempDir::new().unwrap();
    let src = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../aleph-core/tests/corpus/s05_rollback.aleph"),
    )
    .unwrap();
    let file = write_program(&dir, "p.aleph", &src);
    let out = aleph()
        .arg("trace")
        .arg(&file)
        .arg("--rules-only")
        .output()
        .unwrap();
    let golden = std::fs::read_to_string(golden_dir().join("rollback_rules.txt")).unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn failing_program_traces_to_a_single_outcome_record() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "falses");
    let out = aleph()
        .arg("trace")
        .arg(&file)
        .arg("--rules-only")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        stdout(&out),
        "outcome: error: toplevel failure (RGfalsesF)\n"
    );
}

#[test]
fn zero_budget_exhausts_with_exit_two() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "(table)");
    let out = aleph()
        .arg("trace")
        .arg(&file)
        .args(["--max-steps", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    assert!(text.contains("budget exhausted"), "{text}");

    // The environment variable sets the default budget.
    let out = aleph()
        .arg("run")
        .arg(&file)
        .env("ALEPH_MAX_STEPS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // An explicit flag overrides it.
    let out = aleph()
        .arg("run")
        .arg(&file)
        .env("ALEPH_MAX_STEPS", "0")
        .args(["--max-steps", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn run_and_trace_agree_on_exit_codes() {
    let dir = TempDir::new().unwrap();
    for (src, inputs) in [
        ("(table)", ""),
        ("5", ""),
        ("falses", ""),
        ("anys", ""),
        ("(let i in (let o (out i) (table)))", "7"),
    ] {
        let file = write_program(&dir, "p.aleph", src);
        let mut run_cmd = aleph();
        run_cmd.arg("run").arg(&file);
        let mut trace_cmd = aleph();
        trace_cmd.arg("trace").arg(&file);
        if !inputs.is_empty() {
            run_cmd.args(["--input", inputs]);
            trace_cmd.args(["--input", inputs]);
        }
        let run_out = run_cmd.output().unwrap();
        let trace_out = trace_cmd.output().unwrap();
        assert_eq!(run_out.status.code(), trace_out.status.code(), "{src}");
    }
}

#[test]
fn structured_output_is_parseable_json() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "(let i in (let o (out i) (table)))");
    let out = aleph()
        .arg("trace")
        .arg(&file)
        .args(["--input", "42", "--format", "structured"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() > 3);
    for (i, line) in lines.iter().enumerate() {
        let value: serde_json::Value =
            serde_json::from_str(line).unwrap_or_else(|e| panic!("line {i}: {e}: {line}"));
        if i + 1 < lines.len() {
            for field in ["step", "rule", "action", "term", "heads", "ptrs"] {
                assert!(value.get(field).is_some(), "line {i} lacks {field}");
            }
        } else {
            assert_eq!(value["outcome"], "terminated");
            assert!(value["actions"]
                .as_array()
                .unwrap()
                .iter()
                .any(|a| a == "in 42"));
            assert_eq!(value["visible_actions"], serde_json::json!(["in 42", "out 42"]));
        }
    }

    let out = aleph()
        .arg("run")
        .arg(&file)
        .args(["--input", "42", "--format", "structured"])
        .output()
        .unwrap();
    let value: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(value["outcome"], "terminated");
}

#[test]
fn check_reports_positioned_diagnostics() {
    let dir = TempDir::new().unwrap();
    let good = write_program(&dir, "good.aleph", "; a comment\n(let x 5 (table))");
    let out = aleph().arg("check").arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "ok\n");

    let open = write_program(&dir, "open.aleph", "(out x)");
    let out = aleph().arg("check").arg(&open).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("1:6: unbound variable x"));

    let dup = write_program(&dir, "dup.aleph", "(table (x 0 1) (y 0 2))");
    let out = aleph().arg("check").arg(&dup).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("duplicate table index 0"));
}

#[cfg(unix)]
#[test]
fn closed_pipes_do_not_panic() {
    let dir = TempDir::new().unwrap();
    let file = write_program(&dir, "p.aleph", "(let x 5 x)");
    let out = Command::new("sh")
        .arg("-c")
        .arg(format!(
            "{} trace {} --rules-only | head -1",
            env!("CARGO_BIN_EXE_aleph"),
            file.display()
        ))
        .output()
        .unwrap();
    assert_eq!(stdout(&out), "RGctxt/RGi\n");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(!stderr.contains("panicked"), "{stderr}");
}

#[test]
fn missing_files_and_parse_errors_exit_three() {
    let out = aleph().arg("run").arg("/nonexistent.aleph").output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let dir = TempDir::new().unwrap();
    let bad = write_program(&dir, "bad.aleph", "(let x 5");
    let out = aleph().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
