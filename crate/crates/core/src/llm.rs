//! Prompt construction for test-case generation, response parsing, and
//! static validation of generated test cases.
//!
//! Prompts render example test cases in the `name :- go(init, goal).` clause
//! form followed by a natural-language task. Responses are scanned for the
//! first `go([...],[...])` clause, tolerating surrounding prose and code
//! fences. Validation checks predicate arities, argument sorts, and stacking
//! coherence; scoring against a reference test case additionally classifies
//! the wrong-stack-order mistake, the most frequent generation error.
//!
//! Live model access sits behind a transport trait. The default transport is
//! an offline replay store keyed by the prompt hash, so everything here runs
//! without network access. Requests always carry temperature 0.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::State;
use crate::parse::{parse_go_body, parse_go_tests, ParseError, ProblemFile};
use crate::term::{Term, VarGen};

/// Generation temperature; fixed so that models respond deterministically.
pub const TEMPERATURE: u8 = 0;

/// An example or generated test case: raw literal lists, before any
/// invariant checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub name: String,
    pub init: Vec<Term>,
    pub goal: Vec<Term>,
}

impl TestCase {
    /// Convert into a checked problem (ground, duplicate-free init).
    pub fn to_problem_file(&self) -> Result<ProblemFile, String> {
        for lit in self.init.iter().chain(&self.goal) {
            if !lit.is_ground() {
                return Err(format!("non-ground literal: {lit}"));
            }
        }
        let init = State::new(self.init.clone()).map_err(|e| e.to_string())?;
        Ok(ProblemFile { kb_facts: vec![], init, goal: self.goal.clone() })
    }

    pub fn render_go_clause(&self) -> String {
        format!(
            "{} :- go(\n  [{}],\n  [{}]\n).",
            self.name,
            join(&self.init),
            join(&self.goal)
        )
    }
}

fn join(lits: &[Term]) -> String {
    lits.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

/// Everything needed to render a deterministic generation prompt.
#[derive(Debug, Clone)]
pub struct PromptSpec {
    pub example_tests: Vec<TestCase>,
    pub task_description: String,
}

/// Render the prompt: preamble, example clauses, then the task sentence.
/// Byte-stable for golden testing.
pub fn build_prompt(spec: &PromptSpec) -> String {
    assert!(!spec.example_tests.is_empty(), "at least one example test is required");
    let mut out = String::from(
        "Consider the following test cases.\n\
         Each of them moves a set of boxes (b1, b2, b3, ...) from an initial state to a final state using agents(a1, a2,..).\n\n",
    );
    for test in &spec.example_tests {
        out.push_str(&test.render_go_clause());
        out.push_str("\n\n");
    }
    if !spec.task_description.is_empty() {
        out.push_str(&spec.task_description);
        out.push('\n');
    }
    out
}

/// Load example tests from a `.problems` file of `name :- go(...).` clauses.
pub fn load_example_tests(text: &str) -> Result<Vec<TestCase>, ParseError> {
    Ok(parse_go_tests(text)?
        .into_iter()
        .map(|(name, init, goal)| TestCase { name, init, goal })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ParsedResponse {
    pub test: TestCase,
    pub warnings: Vec<String>,
}

/// Extract the first `go([...],[...])` clause from a model response,
/// tolerating surrounding prose and code fences.
pub fn parse_response(text: &str) -> Result<ParsedResponse, ParseError> {
    let spans = go_clause_spans(text);
    let Some(&(start, end)) = spans.first() else {
        return Err(ParseError {
            line: 1,
            column: 1,
            message: "no go([...],[...]) clause found in response".into(),
            token: String::new(),
        });
    };
    let mut warnings = Vec::new();
    if spans.len() > 1 {
        warnings.push(format!(
            "response contains {} go(...) clauses; using the first",
            spans.len()
        ));
    }
    let body = &text[start..end];
    let mut gen = VarGen::new();
    let (init, goal) = parse_go_body(body, &mut gen)?;
    Ok(ParsedResponse { test: TestCase { name: "generated".into(), init, goal }, warnings })
}

/// Byte spans of the argument bodies of each `go(...)` occurrence.
fn go_clause_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 2 <= bytes.len() {
        if &bytes[i..i + 2] == b"go"
            && (i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_'))
        {
            let mut j = i + 2;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'(' {
                // balanced-paren scan
                let open = j;
                let mut depth = 0usize;
                let mut k = open;
                let mut closed = None;
                while k < bytes.len() {
                    match bytes[k] {
                        b'(' => depth += 1,
                        b')' => {
                            depth -= 1;
                            if depth == 0 {
                                closed = Some(k);
                                break;
                            }
                        }
                        _ => {}
                    }
                    k += 1;
                }
                if let Some(close) = closed {
                    out.push((open + 1, close));
                    i = close;
                }
            }
        }
        i += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Default arity table for the blocks-world predicates.
pub fn blocks_world_arities() -> BTreeMap<String, usize> {
    [
        ("available", 1),
        ("ontable", 3),
        ("on", 4),
        ("clear", 1),
        ("gripping", 2),
        ("gripped", 2),
        ("moving", 6),
        ("pos", 2),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Lexical name sorts: `a<digits>` are agents and `b<digits>` are blocks by
/// default; the prefixes can be overridden.
#[derive(Debug, Clone)]
pub struct SortRules {
    pub agent_prefix: String,
    pub block_prefix: String,
}

impl Default for SortRules {
    fn default() -> SortRules {
        SortRules { agent_prefix: "a".into(), block_prefix: "b".into() }
    }
}

impl SortRules {
    fn matches(&self, t: &Term, prefix: &str) -> bool {
        match t {
            Term::Atom(name) => {
                name.strip_prefix(prefix)
                    .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
            }
            _ => false,
        }
    }

    pub fn is_agent(&self, t: &Term) -> bool {
        self.matches(t, &self.agent_prefix)
    }

    pub fn is_block(&self, t: &Term) -> bool {
        self.matches(t, &self.block_prefix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCategory {
    UnknownPredicate,
    ArityMismatch,
    BadArgumentSort,
    DuplicateLiteral,
    StackingIncoherent,
    StackingCycle,
    WrongStackOrder,
    MissingLiteral,
    ExtraLiteral,
}

#[derive(Debug, Clone, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub category: IssueCategory,
    pub location: String,
    pub message: String,
}

/// Outcome of static test-case validation.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Number of literals over init plus goal.
    pub predicate_count: usize,
    /// Number of top-level argument positions over those literals.
    pub literal_count: usize,
    pub predicate_errors: usize,
    pub literal_errors: usize,
    pub issues: Vec<Issue>,
    pub success: bool,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn has_category(&self, category: IssueCategory) -> bool {
        self.issues.iter().any(|i| i.category == category)
    }
}

/// Static validation: known predicates with correct arities, argument sorts,
/// duplicate detection, and stacking coherence, checked over init and goal
/// independently. All findings land in the report; nothing is thrown.
pub fn validate_testcase(
    test: &TestCase,
    arities: &BTreeMap<String, usize>,
    sorts: &SortRules,
) -> ValidationReport {
    let mut report = ValidationReport {
        predicate_count: test.init.len() + test.goal.len(),
        literal_count: count_argument_positions(&test.init) + count_argument_positions(&test.goal),
        predicate_errors: 0,
        literal_errors: 0,
        issues: Vec::new(),
        success: true,
    };
    for (section, lits) in [("init", &test.init), ("goal", &test.goal)] {
        validate_section(section, lits, arities, sorts, &mut report);
    }
    report.success = report.predicate_errors == 0
        && report.literal_errors == 0
        && !report.issues.iter().any(|i| {
            i.severity == Severity::Error
                && matches!(
                    i.category,
                    IssueCategory::StackingIncoherent | IssueCategory::StackingCycle
                )
        });
    report
}

fn count_argument_positions(lits: &[Term]) -> usize {
    lits.iter().map(|t| t.arity()).sum()
}

fn validate_section(
    section: &str,
    lits: &[Term],
    arities: &BTreeMap<String, usize>,
    sorts: &SortRules,
    report: &mut ValidationReport,
) {
    // predicate and sort checks
    for lit in lits {
        let loc = format!("{section}: {lit}");
        let Some(functor) = lit.functor() else {
            report.predicate_errors += 1;
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::UnknownPredicate,
                location: loc,
                message: "literal is not a predicate".into(),
            });
            continue;
        };
        match arities.get(functor) {
            None => {
                report.predicate_errors += 1;
                report.issues.push(Issue {
                    severity: Severity::Error,
                    category: IssueCategory::UnknownPredicate,
                    location: loc,
                    message: format!("unknown predicate '{functor}'"),
                });
                continue;
            }
            Some(&want) if want != lit.arity() => {
                report.predicate_errors += 1;
                report.issues.push(Issue {
                    severity: Severity::Error,
                    category: IssueCategory::ArityMismatch,
                    location: loc,
                    message: format!("'{functor}' expects {want} arguments, got {}", lit.arity()),
                });
                continue;
            }
            Some(_) => {}
        }
        let arg_sorts: &[ArgSort] = match functor {
            "available" => &[ArgSort::Agent],
            "ontable" => &[ArgSort::Block, ArgSort::Coord, ArgSort::Coord],
            "on" => &[ArgSort::Block, ArgSort::Block, ArgSort::Coord, ArgSort::Coord],
            "clear" => &[ArgSort::Block],
            "gripping" | "gripped" => &[ArgSort::Agent, ArgSort::Block],
            "moving" => &[
                ArgSort::Agent,
                ArgSort::Block,
                ArgSort::Coord,
                ArgSort::Coord,
                ArgSort::Coord,
                ArgSort::Coord,
            ],
            "pos" => &[ArgSort::Coord, ArgSort::Coord],
            _ => &[],
        };
        for (pos, (arg, want)) in lit.args().iter().zip(arg_sorts).enumerate() {
            let ok = match want {
                ArgSort::Agent => sorts.is_agent(arg),
                ArgSort::Block => sorts.is_block(arg),
                ArgSort::Coord => matches!(arg, Term::Int(_)),
            };
            if !ok {
                report.literal_errors += 1;
                report.issues.push(Issue {
                    severity: Severity::Error,
                    category: IssueCategory::BadArgumentSort,
                    location: format!("{section}: {lit}"),
                    message: format!("argument {} should be a {want:?}", pos + 1),
                });
            }
        }
    }

    // duplicates
    for (i, lit) in lits.iter().enumerate() {
        if lits[..i].contains(lit) {
            report.literal_errors += 1;
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::DuplicateLiteral,
                location: format!("{section}: {lit}"),
                message: "duplicate literal".into(),
            });
        }
    }

    check_stacking(section, lits, sorts, report);
}

#[derive(Debug, Clone, Copy)]
enum ArgSort {
    Agent,
    Block,
    Coord,
}

/// Stacking coherence: each block has exactly one support, `clear(b)` holds
/// iff nothing is on b, on-chains are acyclic, and stacked blocks share
/// coordinates. Blocks currently carried (gripping/gripped/moving) are
/// exempt from the support requirement.
fn check_stacking(section: &str, lits: &[Term], sorts: &SortRules, report: &mut ValidationReport) {
    let mut blocks: Vec<Term> = Vec::new();
    let mut carried: Vec<Term> = Vec::new();
    let mut supports: BTreeMap<String, usize> = BTreeMap::new();
    let mut on_edges: Vec<(Term, Term, Term, Term)> = Vec::new(); // (upper, lower, x, y)
    let mut table_pos: BTreeMap<String, (Term, Term)> = BTreeMap::new();
    let mut clear_set: Vec<Term> = Vec::new();

    let note_block = |blocks: &mut Vec<Term>, b: &Term| {
        if sorts.is_block(b) && !blocks.contains(b) {
            blocks.push(b.clone());
        }
    };

    for lit in lits {
        match (lit.functor(), lit.args()) {
            (Some("ontable"), [b, x, y]) => {
                note_block(&mut blocks, b);
                *supports.entry(b.to_string()).or_insert(0) += 1;
                table_pos.insert(b.to_string(), (x.clone(), y.clone()));
            }
            (Some("on"), [upper, lower, x, y]) => {
                note_block(&mut blocks, upper);
                note_block(&mut blocks, lower);
                *supports.entry(upper.to_string()).or_insert(0) += 1;
                on_edges.push((upper.clone(), lower.clone(), x.clone(), y.clone()));
            }
            (Some("clear"), [b]) => {
                note_block(&mut blocks, b);
                if !clear_set.contains(b) {
                    clear_set.push(b.clone());
                }
            }
            (Some("gripping" | "gripped"), [_, b]) => {
                note_block(&mut blocks, b);
                carried.push(b.clone());
            }
            (Some("moving"), [_, b, ..]) => {
                note_block(&mut blocks, b);
                carried.push(b.clone());
            }
            _ => {}
        }
    }

    for b in &blocks {
        let n = supports.get(&b.to_string()).copied().unwrap_or(0);
        if carried.contains(b) {
            continue;
        }
        if n != 1 {
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::StackingIncoherent,
                location: format!("{section}: {b}"),
                message: format!("block has {n} supports (needs exactly one ontable or on)"),
            });
        }
    }

    for b in &blocks {
        let has_upper = on_edges.iter().any(|(_, lower, _, _)| lower == b);
        let is_clear = clear_set.contains(b);
        if carried.contains(b) {
            continue;
        }
        if is_clear && has_upper {
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::StackingIncoherent,
                location: format!("{section}: {b}"),
                message: "clear(b) but another block is on b".into(),
            });
        }
        if !is_clear && !has_upper {
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::StackingIncoherent,
                location: format!("{section}: {b}"),
                message: "nothing is on b but clear(b) is missing".into(),
            });
        }
    }

    // acyclicity of the on-relation by repeated leaf removal
    let mut edges: Vec<(String, String)> = on_edges
        .iter()
        .map(|(u, l, _, _)| (u.to_string(), l.to_string()))
        .collect();
    loop {
        let uppers: Vec<String> = edges.iter().map(|(u, _)| u.clone()).collect();
        let before = edges.len();
        edges.retain(|(_, l)| uppers.contains(l));
        if edges.is_empty() {
            break;
        }
        if edges.len() == before {
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::StackingCycle,
                location: format!("{section}"),
                message: format!(
                    "cyclic stacking through {}",
                    edges.iter().map(|(u, _)| u.as_str()).collect::<Vec<_>>().join(", ")
                ),
            });
            break;
        }
    }

    // stacked blocks share coordinates with their support
    for (upper, lower, x, y) in &on_edges {
        let support_coords = table_pos.get(&lower.to_string()).cloned().or_else(|| {
            on_edges
                .iter()
                .find(|(u, _, _, _)| u == lower)
                .map(|(_, _, sx, sy)| (sx.clone(), sy.clone()))
        });
        if let Some((sx, sy)) = support_coords {
            if (&sx, &sy) != (x, y) {
                report.issues.push(Issue {
                    severity: Severity::Error,
                    category: IssueCategory::StackingIncoherent,
                    location: format!("{section}: on({upper},{lower},{x},{y})"),
                    message: format!("support of {lower} sits at ({sx},{sy}), not ({x},{y})"),
                });
            }
        }
    }
}

/// Count-and-diff scoring against a reference test case. Mismatch counts are
/// the larger side of the per-section multiset symmetric difference;
/// predicate errors count functor/arity profile mismatches the same way.
pub fn score_against_reference(test: &TestCase, reference: &TestCase) -> ValidationReport {
    let mut report = ValidationReport {
        predicate_count: test.init.len() + test.goal.len(),
        literal_count: count_argument_positions(&test.init) + count_argument_positions(&test.goal),
        predicate_errors: 0,
        literal_errors: 0,
        issues: Vec::new(),
        success: true,
    };

    for (section, got, want) in [
        ("init", &test.init, &reference.init),
        ("goal", &test.goal, &reference.goal),
    ] {
        let extra = multiset_sub(got, want);
        let missing = multiset_sub(want, got);
        report.literal_errors += extra.len().max(missing.len());

        let got_profile: Vec<String> = got
            .iter()
            .map(|t| format!("{}/{}", t.functor().unwrap_or("?"), t.arity()))
            .collect();
        let want_profile: Vec<String> = want
            .iter()
            .map(|t| format!("{}/{}", t.functor().unwrap_or("?"), t.arity()))
            .collect();
        let extra_p = multiset_sub(&got_profile, &want_profile);
        let missing_p = multiset_sub(&want_profile, &got_profile);
        report.predicate_errors += extra_p.len().max(missing_p.len());

        // swapped stacking pair: on(x,y,...) where the reference has on(y,x,...)
        for lit in &extra {
            if let (Some("on"), [x, y, cx, cy]) = (lit.functor(), lit.args()) {
                let swapped = Term::compound(
                    "on",
                    vec![y.clone(), x.clone(), cx.clone(), cy.clone()],
                );
                if missing.contains(&&swapped) || missing.iter().any(|m| **m == swapped) {
                    report.issues.push(Issue {
                        severity: Severity::Error,
                        category: IssueCategory::WrongStackOrder,
                        location: format!("{section}: {lit}"),
                        message: format!("stacked in the wrong order; reference has {swapped}"),
                    });
                }
            }
        }
        for lit in &missing {
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::MissingLiteral,
                location: format!("{section}: {lit}"),
                message: "literal required by the reference is missing".into(),
            });
        }
        for lit in &extra {
            report.issues.push(Issue {
                severity: Severity::Error,
                category: IssueCategory::ExtraLiteral,
                location: format!("{section}: {lit}"),
                message: "literal not present in the reference".into(),
            });
        }
    }

    report.success = report.predicate_errors == 0 && report.literal_errors == 0;
    report
}

/// Multiset difference keeping `a`'s order.
fn multiset_sub<'a, T: PartialEq>(a: &'a [T], b: &[T]) -> Vec<&'a T> {
    let mut remaining: Vec<&T> = b.iter().collect();
    let mut out = Vec::new();
    for item in a {
        if let Some(i) = remaining.iter().position(|r| *r == item) {
            remaining.remove(i);
        } else {
            out.push(item);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LlmRequest {
    pub model: String,
    pub temperature: u8,
    pub prompt: String,
}

impl LlmRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> LlmRequest {
        LlmRequest { model: model.into(), temperature: TEMPERATURE, prompt: prompt.into() }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("no replay recorded for this prompt (expected {0})")]
    MissingReplay(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("transport failed: {0}")]
    Failed(String),
}

pub trait LlmTransport {
    fn complete(&self, request: &LlmRequest) -> Result<String, TransportError>;
}

pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Offline transport: responses are read from
/// `<dir>/<sha256-of-prompt>.txt`.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
}

impl ReplayStore {
    pub fn new(dir: impl Into<PathBuf>) -> ReplayStore {
        ReplayStore { dir: dir.into() }
    }

    pub fn path_for(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", prompt_hash(prompt)))
    }

    /// Record a canned response for a prompt.
    pub fn save(&self, prompt: &str, response: &str) -> Result<PathBuf, TransportError> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(prompt);
        std::fs::write(&path, response)?;
        Ok(path)
    }
}

impl LlmTransport for ReplayStore {
    fn complete(&self, request: &LlmRequest) -> Result<String, TransportError> {
        let path = self.path_for(&request.prompt);
        if !Path::new(&path).exists() {
            return Err(TransportError::MissingReplay(path));
        }
        Ok(std::fs::read_to_string(path)?)
    }
}

/// Live transport that posts `{model, temperature, prompt}` as JSON to an
/// endpoint via the system `curl`, with the API key taken from an
/// environment variable. The raw response body is returned; the go-clause
/// scanner digs the test case out of whatever wrapper the provider uses.
#[derive(Debug, Clone)]
pub struct CurlTransport {
    pub endpoint: String,
    pub api_key_env: String,
}

impl LlmTransport for CurlTransport {
    fn complete(&self, request: &LlmRequest) -> Result<String, TransportError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| TransportError::Failed(format!("{} is not set", self.api_key_env)))?;
        let body = serde_json::to_string(request).expect("request serialization cannot fail");
        let output = std::process::Command::new("curl")
            .args(["-sS", "-X", "POST", &self.endpoint])
            .args(["-H", "Content-Type: application/json"])
            .args(["-H", &format!("Authorization: Bearer {key}")])
            .args(["--data-binary", &body])
            .output()?;
        if !output.status.success() {
            return Err(TransportError::Failed(
                String::from_utf8_lossy(&output.stderr).into_owned(),
            ));
        }
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    }
}
