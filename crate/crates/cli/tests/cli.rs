//! Black-box tests of the command-line pipeline: artifact sets, exit codes,
//! staged-vs-monolithic equality, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tempoplan"))
}

fn repo(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().expect("binary runs").status.code().unwrap_or(-1)
}

fn domain() -> String {
    repo("samples/blocks/blocks.domain").display().to_string()
}

fn two_agents() -> String {
    repo("samples/blocks/two_agents.problem").display().to_string()
}

const ARTIFACTS: [&str; 7] = [
    "plan.json",
    "stn.json",
    "stn.dot",
    "schedule.json",
    "bt.xml",
    "bt.dot",
    "sim_report.json",
];

#[test]
fn pipeline_writes_artifacts_and_prints_makespan() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "run",
        "--domain",
        &domain(),
        "--problem",
        &two_agents(),
        "--out",
        out_dir.path().to_str().unwrap(),
        "--max-depth",
        "8",
        "--trials",
        "30",
        "--seed",
        "7",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("makespan 4"), "stdout: {stdout}");
    assert!(stdout.contains("30 reached the goal"));
    for name in ARTIFACTS {
        assert!(out_dir.path().join(name).exists(), "missing {name}");
    }
}

#[test]
fn pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(&[
            "run",
            "--domain",
            &domain(),
            "--problem",
            &two_agents(),
            "--out",
            dir.path().to_str().unwrap(),
            "--max-depth",
            "8",
            "--trials",
            "10",
            "--seed",
            "42",
        ]);
    }
    for name in ARTIFACTS {
        let left = std::fs::read(a.path().join(name)).unwrap();
        let right = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between runs");
    }
}

#[test]
fn staged_execution_matches_the_monolithic_pipeline() {
    let mono = tempfile::tempdir().unwrap();
    run_ok(&[
        "run",
        "--domain",
        &domain(),
        "--problem",
        &two_agents(),
        "--out",
        mono.path().to_str().unwrap(),
        "--max-depth",
        "8",
        "--trials",
        "5",
        "--seed",
        "3",
    ]);

    let staged = tempfile::tempdir().unwrap();
    let p = |name: &str| staged.path().join(name).display().to_string();
    run_ok(&[
        "plan",
        "--domain",
        &domain(),
        "--problem",
        &two_agents(),
        "--max-depth",
        "8",
        "--json",
        &p("plan.json"),
    ]);
    run_ok(&["stn", "--plan", &p("plan.json"), "--json", &p("stn.json"), "--dot", &p("stn.dot")]);
    run_ok(&["schedule", "--stn", &p("stn.json"), "--json", &p("schedule.json")]);
    run_ok(&[
        "bt",
        "--plan",
        &p("plan.json"),
        "--stn",
        &p("stn.json"),
        "--xml",
        &p("bt.xml"),
        "--dot",
        &p("bt.dot"),
    ]);
    run_ok(&[
        "simulate",
        "--bt",
        &p("bt.xml"),
        "--plan",
        &p("plan.json"),
        "--trials",
        "5",
        "--seed",
        "3",
        "--json",
        &p("sim_report.json"),
    ]);

    for name in ARTIFACTS {
        let staged_bytes = std::fs::read(staged.path().join(name)).unwrap();
        let mono_bytes = std::fs::read(mono.path().join(name)).unwrap();
        assert_eq!(staged_bytes, mono_bytes, "{name}: staged != monolithic");
    }
}

#[test]
fn exit_code_2_on_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.domain");
    std::fs::write(&bad, "action oops {").unwrap();
    let code = exit_code(&[
        "run",
        "--domain",
        bad.to_str().unwrap(),
        "--problem",
        &two_agents(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn exit_code_3_when_no_plan_exists() {
    let dir = tempfile::tempdir().unwrap();
    let unsat = dir.path().join("unsat.problem");
    std::fs::write(
        &unsat,
        "init { available(a1), ontable(b1, 1, 1), clear(b1) }\n\
         goal { available(a1), ontable(b9, 2, 2), clear(b9) }\n",
    )
    .unwrap();
    let code = exit_code(&[
        "run",
        "--domain",
        &domain(),
        "--problem",
        unsat.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--max-depth",
        "6",
    ]);
    assert_eq!(code, 3);
}

#[test]
fn exit_code_4_after_replan_attempts_with_kb_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            "--domain",
            &domain(),
            "--problem",
            &two_agents(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
            "--max-depth",
            "8",
            "--duration",
            "grip=5:2",
            "--replan-attempts",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stdout.contains("attempt 1/2"), "stdout: {stdout}");
    assert!(stdout.contains("inconsistent"));
    assert!(stderr.contains("knowledge base"), "stderr: {stderr}");
}

#[test]
fn exit_code_5_when_simulation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    std::fs::write(
        &plan,
        r#"{"init": [], "goal": ["clear(b9)"], "kb_facts": [], "durations": {}, "steps": []}"#,
    )
    .unwrap();
    let tree = dir.path().join("bt.xml");
    std::fs::write(&tree, "<Sequence>\n  <Condition literal=\"clear(b9)\"/>\n</Sequence>\n")
        .unwrap();
    let code = exit_code(&[
        "simulate",
        "--bt",
        tree.to_str().unwrap(),
        "--plan",
        plan.to_str().unwrap(),
        "--trials",
        "3",
        "--seed",
        "1",
    ]);
    assert_eq!(code, 5);
}

#[test]
fn prompt_matches_the_golden_rendering() {
    let golden = include_str!("../../core/tests/golden/examples_prompt.txt");
    let task = "Can you generate a prolog code containing a new test case, namely test_case, \
        in which we use 3 agents to move the boxes b1, b2, b3, b4 on the table, which are at \
        (1,1),(2,2),(3,3), and (4,4), respectively, to a final stack [b1,b2,b3,b4] at point \
        (5,5), which is ordered from top to bottom?";
    let out = run_ok(&[
        "prompt",
        "--examples",
        repo("samples/blocks/examples.problems").to_str().unwrap(),
        "--task",
        task,
    ]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), golden);
}

#[test]
fn prompt_send_reads_the_offline_replay_store() {
    let task = "Can you generate a prolog code containing a new test case, namely test_case, \
        in which we use 3 agents to move the boxes b1, b2, b3, b4 on the table, which are at \
        (1,1),(2,2),(3,3), and (4,4), respectively, to a final stack [b1,b2,b3,b4] at point \
        (5,5), which is ordered from top to bottom?";
    let out = run_ok(&[
        "prompt",
        "--examples",
        repo("samples/blocks/examples.problems").to_str().unwrap(),
        "--task",
        task,
        "--send",
        "--llm",
        "offline",
        "--replay-dir",
        repo("samples/replays").to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("test_case :- go("), "stdout: {stdout}");
}

#[test]
fn validate_llm_flags_a_swapped_stack_against_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let response = dir.path().join("response.txt");
    // test1 with the goal stack inverted: b2 on b1
    std::fs::write(
        &response,
        "go([available(a1), available(a2), available(a3), ontable(b1, 2, 2), \
         ontable(b2, 1, 1), clear(b1), clear(b2)],\n\
         [available(a1), available(a2), available(a3), ontable(b1, 3, 3), \
         on(b2, b1, 3, 3), clear(b2)]).",
    )
    .unwrap();
    let refs = dir.path().join("ref.problems");
    std::fs::write(
        &refs,
        "test1 :- go([available(a1), available(a2), available(a3), ontable(b1, 2, 2), \
         ontable(b2, 1, 1), clear(b1), clear(b2)], [available(a1), available(a2), \
         available(a3), ontable(b2, 3, 3), on(b1, b2, 3, 3), clear(b1)]).",
    )
    .unwrap();
    let out = run_ok(&[
        "validate-llm",
        "--response",
        response.to_str().unwrap(),
        "--reference",
        refs.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("success: false"));
    assert!(stdout.contains("wrong_stack_order"), "stdout: {stdout}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        format!(
            "domain = {}\nproblem = {}\nmax_depth = 8   # fits the two-agent case\n",
            domain(),
            two_agents()
        ),
    )
    .unwrap();
    let plan_a = dir.path().join("a.json");
    run_ok(&["plan", "--config", config.to_str().unwrap(), "--json", plan_a.to_str().unwrap()]);
    assert!(plan_a.exists());

    // an explicit flag beats the config value: depth 3 cannot solve it
    let code = exit_code(&[
        "plan",
        "--config",
        config.to_str().unwrap(),
        "--max-depth",
        "3",
        "--json",
        dir.path().join("b.json").to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
}
