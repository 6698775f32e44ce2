//! Behavior-tree emission from a consistent STN, XML/DOT serialization, and
//! a discrete-event simulator with stochastic durations.
//!
//! Emission first strips the temporal machinery from the STN, keeping only
//! precedence, then walks the resulting DAG from the origin: chains become
//! `Sequence` nodes, forks become `Parallel` nodes (all children must
//! succeed), and a join is emitted once, after a parallel that contains all
//! of its predecessor branches.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{
    snap_parts, satisfies_goal, DurationTable, Effect, EffectKind, GoalMode, SnapRole, State,
};
use crate::parse::{fmt_rational, parse_term};
use crate::planner::TotalOrderPlan;
use crate::stn::{Stn, StnNode};
use crate::term::Term;

#[derive(Debug, Error)]
pub enum BtError {
    #[error("cycle remains after stripping backward edges")]
    CycleRemains,
    #[error("dag node {0} is unreachable from the origin")]
    Disconnected(usize),
    #[error("bad behavior tree xml: {0}")]
    Xml(String),
}

/// A behavior-tree node. `Parallel` succeeds only when all children succeed
/// (`success_threshold` equals the child count).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BtNode {
    Sequence(Vec<BtNode>),
    Parallel { success_threshold: usize, children: Vec<BtNode> },
    CheckCondition(Term),
    ApplyEffect(Effect),
    ActionLeaf { snap: Term, role: SnapRole },
}

impl BtNode {
    /// Multiset of action leaves, for structural checks.
    pub fn action_leaves(&self) -> Vec<(Term, SnapRole)> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if let BtNode::ActionLeaf { snap, role } = n {
                out.push((snap.clone(), *role));
            }
        });
        out
    }

    fn walk(&self, f: &mut impl FnMut(&BtNode)) {
        f(self);
        match self {
            BtNode::Sequence(children) | BtNode::Parallel { children, .. } => {
                for c in children {
                    c.walk(f);
                }
            }
            _ => {}
        }
    }
}

/// The STN's forward graph after backward-edge removal: nodes are the
/// timepoints, edges are precedence only, rooted at the origin.
#[derive(Debug, Clone)]
pub struct BtDag {
    pub nodes: Vec<StnNode>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl BtDag {
    pub fn successors(&self, u: usize) -> Vec<usize> {
        self.edges.iter().filter(|(a, _)| *a == u).map(|(_, b)| *b).collect()
    }

    pub fn predecessors(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|(_, b)| *b == v).map(|(a, _)| *a).collect()
    }
}

/// Keep only the ordering content of the STN: a distance edge `v -> u` with
/// weight <= 0 entails `t_u <= t_v`, i.e. a precedence edge `u -> v`. The
/// positive duration upper-bound edges carry no ordering and are dropped.
pub fn strip_backward_edges(stn: &Stn) -> Result<BtDag, BtError> {
    let zero = Rational64::from_integer(0);
    let mut edges = BTreeSet::new();
    for e in &stn.edges {
        if e.weight <= zero && e.from != e.to {
            edges.insert((e.to, e.from));
        }
    }
    let dag = BtDag { nodes: stn.nodes.clone(), edges };

    // Kahn check: the precedence graph must be acyclic
    let n = dag.nodes.len();
    let mut indeg = vec![0usize; n];
    for (_, v) in &dag.edges {
        indeg[*v] += 1;
    }
    let mut queue: VecDeque<usize> =
        (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(u) = queue.pop_front() {
        seen += 1;
        for v in dag.successors(u) {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    if seen != n {
        return Err(BtError::CycleRemains);
    }
    Ok(dag)
}

/// Per-snap subtree: check the valid conditions, tick the action, apply the
/// effects.
fn snap_subtree(plan: &TotalOrderPlan, node: usize) -> BtNode {
    let step = &plan.steps[node - 1];
    let role = step
        .action
        .snap()
        .map(|(_, r)| r)
        .unwrap_or(SnapRole::Start);
    let mut children = Vec::new();
    for c in step.action.ground_valid() {
        children.push(BtNode::CheckCondition(c));
    }
    children.push(BtNode::ActionLeaf { snap: step.action.ground_name.clone(), role });
    for e in step.action.ground_effects() {
        children.push(BtNode::ApplyEffect(e));
    }
    BtNode::Sequence(children)
}

/// Emit the tree by scope expansion from the origin. A scope absorbs any
/// successor whose predecessors have all been emitted inside it; several
/// simultaneously ready successors open a parallel of sub-scopes, and a join
/// continues the enclosing scope once every predecessor branch has closed.
pub fn emit_bt(dag: &BtDag, plan: &TotalOrderPlan) -> Result<BtNode, BtError> {
    let mut emitted = vec![false; dag.nodes.len()];
    let (parts, _) = emit_scope(dag, plan, 0, &mut emitted);
    if let Some(missing) = emitted.iter().position(|e| !e) {
        return Err(BtError::Disconnected(missing));
    }
    Ok(BtNode::Sequence(parts))
}

fn emit_scope(
    dag: &BtDag,
    plan: &TotalOrderPlan,
    entry: usize,
    emitted: &mut Vec<bool>,
) -> (Vec<BtNode>, BTreeSet<usize>) {
    let mut scope = BTreeSet::new();
    let mut parts = Vec::new();
    emitted[entry] = true;
    scope.insert(entry);
    if entry != 0 {
        parts.push(snap_subtree(plan, entry));
    }
    loop {
        let candidates: Vec<usize> = scope
            .iter()
            .flat_map(|&u| dag.successors(u))
            .filter(|&v| !emitted[v])
            .filter(|&v| dag.predecessors(v).iter().all(|p| scope.contains(p)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        match candidates.len() {
            0 => break,
            1 => {
                let c = candidates[0];
                emitted[c] = true;
                scope.insert(c);
                if c != 0 {
                    parts.push(snap_subtree(plan, c));
                }
            }
            _ => {
                let mut children = Vec::new();
                for &c in &candidates {
                    let (sub_parts, sub_scope) = emit_scope(dag, plan, c, emitted);
                    children.push(BtNode::Sequence(sub_parts));
                    scope.extend(sub_scope);
                }
                parts.push(BtNode::Parallel {
                    success_threshold: children.len(),
                    children,
                });
            }
        }
    }
    (parts, scope)
}

// ---------------------------------------------------------------------------
// XML
// ---------------------------------------------------------------------------

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn xml_unescape(s: &str) -> String {
    s.replace("&quot;", "\"")
        .replace("&gt;", ">")
        .replace("&lt;", "<")
        .replace("&amp;", "&")
}

/// Deterministic, indentation-stable XML rendering.
pub fn serialize_xml(bt: &BtNode) -> String {
    let mut out = String::new();
    write_xml(bt, 0, &mut out);
    out
}

fn write_xml(node: &BtNode, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        BtNode::Sequence(children) => {
            if children.is_empty() {
                out.push_str(&format!("{pad}<Sequence/>\n"));
            } else {
                out.push_str(&format!("{pad}<Sequence>\n"));
                for c in children {
                    write_xml(c, depth + 1, out);
                }
                out.push_str(&format!("{pad}</Sequence>\n"));
            }
        }
        BtNode::Parallel { success_threshold, children } => {
            if children.is_empty() {
                out.push_str(&format!(
                    "{pad}<Parallel success_threshold=\"{success_threshold}\"/>\n"
                ));
            } else {
                out.push_str(&format!(
                    "{pad}<Parallel success_threshold=\"{success_threshold}\">\n"
                ));
                for c in children {
                    write_xml(c, depth + 1, out);
                }
                out.push_str(&format!("{pad}</Parallel>\n"));
            }
        }
        BtNode::CheckCondition(lit) => {
            out.push_str(&format!("{pad}<Condition literal=\"{}\"/>\n", xml_escape(&lit.to_string())));
        }
        BtNode::ActionLeaf { snap, role } => {
            out.push_str(&format!(
                "{pad}<Action id=\"{}\" role=\"{}\"/>\n",
                xml_escape(&snap.to_string()),
                role.as_str()
            ));
        }
        BtNode::ApplyEffect(e) => {
            let op = match e.kind {
                EffectKind::Add => "add",
                EffectKind::Del => "del",
            };
            out.push_str(&format!(
                "{pad}<Effect op=\"{op}\" literal=\"{}\"/>\n",
                xml_escape(&e.literal.to_string())
            ));
        }
    }
}

/// Parse the XML produced by [`serialize_xml`].
pub fn parse_xml(text: &str) -> Result<BtNode, BtError> {
    let mut p = XmlParser { src: text.as_bytes(), pos: 0 };
    let node = p.element()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(BtError::Xml("trailing content after root element".into()));
    }
    Ok(node)
}

struct XmlParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl XmlParser<'_> {
    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), BtError> {
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(BtError::Xml(format!("expected '{s}' at byte {}", self.pos)))
        }
    }

    fn name(&mut self) -> String {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn attrs(&mut self) -> Result<BTreeMap<String, String>, BtError> {
        let mut out = BTreeMap::new();
        loop {
            self.skip_ws();
            match self.src.get(self.pos) {
                Some(b'/') | Some(b'>') => return Ok(out),
                Some(_) => {
                    let key = self.name();
                    if key.is_empty() {
                        return Err(BtError::Xml(format!("bad attribute at byte {}", self.pos)));
                    }
                    self.expect("=\"")?;
                    let start = self.pos;
                    while self.src.get(self.pos).is_some_and(|c| *c != b'"') {
                        self.pos += 1;
                    }
                    let raw = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                    self.expect("\"")?;
                    out.insert(key, xml_unescape(&raw));
                }
                None => return Err(BtError::Xml("unexpected end of input".into())),
            }
        }
    }

    fn element(&mut self) -> Result<BtNode, BtError> {
        self.skip_ws();
        self.expect("<")?;
        let tag = self.name();
        let attrs = self.attrs()?;
        let self_closing = if self.src.get(self.pos) == Some(&b'/') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.expect(">")?;

        let mut children = Vec::new();
        if !self_closing {
            loop {
                self.skip_ws();
                if self.src[self.pos..].starts_with(b"</") {
                    self.pos += 2;
                    let close = self.name();
                    if close != tag {
                        return Err(BtError::Xml(format!(
                            "mismatched close tag: {close} for {tag}"
                        )));
                    }
                    self.expect(">")?;
                    break;
                }
                children.push(self.element()?);
            }
        }

        let term_attr = |attrs: &BTreeMap<String, String>, key: &str| -> Result<Term, BtError> {
            let raw = attrs
                .get(key)
                .ok_or_else(|| BtError::Xml(format!("{tag} is missing '{key}'")))?;
            parse_term(raw).map_err(|e| BtError::Xml(format!("bad term in {tag}: {e}")))
        };

        match tag.as_str() {
            "Sequence" => Ok(BtNode::Sequence(children)),
            "Parallel" => {
                let threshold = attrs
                    .get("success_threshold")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| BtError::Xml("Parallel needs success_threshold".into()))?;
                Ok(BtNode::Parallel { success_threshold: threshold, children })
            }
            "Condition" => Ok(BtNode::CheckCondition(term_attr(&attrs, "literal")?)),
            "Action" => {
                let role = match attrs.get("role").map(String::as_str) {
                    Some("start") => SnapRole::Start,
                    Some("end") => SnapRole::End,
                    other => {
                        return Err(BtError::Xml(format!("bad Action role: {other:?}")))
                    }
                };
                Ok(BtNode::ActionLeaf { snap: term_attr(&attrs, "id")?, role })
            }
            "Effect" => {
                let kind = match attrs.get("op").map(String::as_str) {
                    Some("add") => EffectKind::Add,
                    Some("del") => EffectKind::Del,
                    other => return Err(BtError::Xml(format!("bad Effect op: {other:?}"))),
                };
                Ok(BtNode::ApplyEffect(Effect { kind, literal: term_attr(&attrs, "literal")? }))
            }
            other => Err(BtError::Xml(format!("unknown element <{other}>"))),
        }
    }
}

/// DOT rendering of the tree structure.
pub fn bt_to_dot(bt: &BtNode) -> String {
    use std::fmt::Write;
    let mut out = String::from("digraph bt {\n  node [shape=box];\n");
    let mut counter = 0usize;
    fn walk(node: &BtNode, counter: &mut usize, out: &mut String) -> usize {
        let id = *counter;
        *counter += 1;
        let label = match node {
            BtNode::Sequence(_) => "Sequence".to_string(),
            BtNode::Parallel { success_threshold, .. } => {
                format!("Parallel ({success_threshold})")
            }
            BtNode::CheckCondition(lit) => format!("check {lit}"),
            BtNode::ApplyEffect(e) => {
                let op = match e.kind {
                    EffectKind::Add => "add",
                    EffectKind::Del => "del",
                };
                format!("{op} {}", e.literal)
            }
            BtNode::ActionLeaf { snap, role } => format!("{} [{}]", snap, role.as_str()),
        };
        writeln!(out, "  n{id} [label=\"{}\"];", label.replace('"', "'")).unwrap();
        if let BtNode::Sequence(children) | BtNode::Parallel { children, .. } = node {
            for c in children {
                let cid = walk(c, counter, out);
                writeln!(out, "  n{id} -> n{cid};").unwrap();
            }
        }
        id
    }
    walk(bt, &mut counter, &mut out);
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SimFailure {
    pub trial: u32,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub trials: u32,
    pub successes: u32,
    pub makespan_min: Option<Rational64>,
    pub makespan_mean: Option<Rational64>,
    pub makespan_max: Option<Rational64>,
    pub failures: Vec<SimFailure>,
}

/// Execution order of action leaves in one trial: (time, snap, role).
pub type SimTrace = Vec<(Rational64, Term, SnapRole)>;

pub fn sim_report_to_json(report: &SimReport) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        trials: u32,
        successes: u32,
        makespan_min: Option<String>,
        makespan_mean: Option<String>,
        makespan_max: Option<String>,
        failures: &'a [SimFailure],
    }
    let doc = Doc {
        trials: report.trials,
        successes: report.successes,
        makespan_min: report.makespan_min.map(fmt_rational),
        makespan_mean: report.makespan_mean.map(fmt_rational),
        makespan_max: report.makespan_max.map(fmt_rational),
        failures: &report.failures,
    };
    serde_json::to_string_pretty(&doc).expect("report serialization cannot fail")
}

/// Execute the tree `trials` times with a virtual clock; each start/end pair
/// consumes a duration sampled uniformly from its bounds. Condition checks
/// gate on the evolving state and a run that can make no further progress
/// fails at the blocked check.
pub fn simulate(
    bt: &BtNode,
    init: &State,
    goal: &[Term],
    durations: &DurationTable,
    trials: u32,
    seed: u64,
) -> SimReport {
    simulate_traced(bt, init, goal, durations, trials, seed).0
}

/// Like [`simulate`], also returning the per-trial action traces.
pub fn simulate_traced(
    bt: &BtNode,
    init: &State,
    goal: &[Term],
    durations: &DurationTable,
    trials: u32,
    seed: u64,
) -> (SimReport, Vec<SimTrace>) {
    let arena = Arena::compile(bt);
    let mut successes = 0;
    let mut failures = Vec::new();
    let mut makespans: Vec<Rational64> = Vec::new();
    let mut traces = Vec::new();

    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(trial) + 1);
        let mut sim = Sim::new(&arena, init.clone(), durations, rng);
        match sim.run() {
            Ok(makespan) => {
                if satisfies_goal(&sim.state, goal, GoalMode::Equality) {
                    successes += 1;
                    makespans.push(makespan);
                } else {
                    failures.push(SimFailure {
                        trial,
                        location: "root".into(),
                        message: "final state does not match the goal".into(),
                    });
                }
            }
            Err((location, message)) => failures.push(SimFailure { trial, location, message }),
        }
        traces.push(sim.trace);
    }

    let makespan_min = makespans.iter().min().copied();
    let makespan_max = makespans.iter().max().copied();
    let makespan_mean = if makespans.is_empty() {
        None
    } else {
        Some(makespans.iter().sum::<Rational64>() / Rational64::from_integer(makespans.len() as i64))
    };
    (
        SimReport { trials, successes, makespan_min, makespan_mean, makespan_max, failures },
        traces,
    )
}

#[derive(Debug, Clone)]
enum NodeKind {
    Sequence,
    Parallel,
    Check(Term),
    Action(Term, SnapRole),
    Eff(Effect),
}

struct ArenaNode {
    kind: NodeKind,
    children: Vec<usize>,
    location: String,
}

struct Arena {
    nodes: Vec<ArenaNode>,
}

impl Arena {
    fn compile(bt: &BtNode) -> Arena {
        let mut arena = Arena { nodes: Vec::new() };
        arena.push(bt, "root".to_string());
        arena
    }

    fn push(&mut self, node: &BtNode, location: String) -> usize {
        let kind = match node {
            BtNode::Sequence(_) => NodeKind::Sequence,
            BtNode::Parallel { .. } => NodeKind::Parallel,
            BtNode::CheckCondition(lit) => NodeKind::Check(lit.clone()),
            BtNode::ActionLeaf { snap, role } => NodeKind::Action(snap.clone(), *role),
            BtNode::ApplyEffect(e) => NodeKind::Eff(e.clone()),
        };
        let id = self.nodes.len();
        self.nodes.push(ArenaNode { kind, children: Vec::new(), location });
        if let BtNode::Sequence(children) | BtNode::Parallel { children, .. } = node {
            for (i, c) in children.iter().enumerate() {
                let loc = format!("{}/{}", self.nodes[id].location, i);
                let cid = self.push(c, loc);
                self.nodes[id].children.push(cid);
            }
        }
        id
    }

    fn describe(&self, id: usize) -> String {
        let n = &self.nodes[id];
        match &n.kind {
            NodeKind::Sequence => format!("{}:Sequence", n.location),
            NodeKind::Parallel => format!("{}:Parallel", n.location),
            NodeKind::Check(lit) => format!("{}:Condition({lit})", n.location),
            NodeKind::Action(snap, role) => {
                format!("{}:Action({snap},{})", n.location, role.as_str())
            }
            NodeKind::Eff(e) => format!("{}:Effect({})", n.location, e.literal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Status {
    Runnable,
    WaitCond(usize),
    WaitTime,
    WaitJoin { remaining: usize, latest: Rational64 },
    Done,
}

struct Proc {
    t: Rational64,
    frames: Vec<(usize, usize)>, // (arena node, next child)
    parent: Option<usize>,
    status: Status,
}

type PairKey = (String, Vec<String>);

struct Sim<'a> {
    arena: &'a Arena,
    state: State,
    durations: &'a DurationTable,
    rng: ChaCha8Rng,
    procs: Vec<Proc>,
    run_queue: VecDeque<usize>,
    timers: BinaryHeap<Reverse<(Rational64, u64, usize)>>,
    timer_seq: u64,
    /// open action instances: start time + sampled duration, FIFO per key
    open: BTreeMap<PairKey, VecDeque<(Rational64, Rational64)>>,
    trace: SimTrace,
    failure: Option<(String, String)>,
}

impl<'a> Sim<'a> {
    fn new(arena: &'a Arena, init: State, durations: &'a DurationTable, rng: ChaCha8Rng) -> Sim<'a> {
        Sim {
            arena,
            state: init,
            durations,
            rng,
            procs: Vec::new(),
            run_queue: VecDeque::new(),
            timers: BinaryHeap::new(),
            timer_seq: 0,
            open: BTreeMap::new(),
            trace: Vec::new(),
            failure: None,
        }
    }

    fn run(&mut self) -> Result<Rational64, (String, String)> {
        let root = self.spawn(0, Rational64::from_integer(0), None);
        self.run_queue.push_back(root);
        loop {
            while let Some(pid) = self.run_queue.pop_front() {
                self.step(pid);
                if let Some(fail) = self.failure.take() {
                    return Err(fail);
                }
            }
            if self.procs[root].status == Status::Done {
                return Ok(self.procs[root].t);
            }
            if let Some(Reverse((time, _, pid))) = self.timers.pop() {
                self.procs[pid].t = time;
                self.procs[pid].status = Status::Runnable;
                self.run_queue.push_back(pid);
                continue;
            }
            // quiescent with work left: some condition can never come true
            let blocked = (0..self.procs.len())
                .find(|&pid| matches!(self.procs[pid].status, Status::WaitCond(_)));
            return match blocked {
                Some(pid) => {
                    let Status::WaitCond(node) = self.procs[pid].status else { unreachable!() };
                    Err((
                        self.arena.describe(node),
                        "condition never satisfied; execution deadlocked".into(),
                    ))
                }
                None => Err(("root".into(), "execution stalled without progress".into())),
            };
        }
    }

    fn spawn(&mut self, node: usize, t: Rational64, parent: Option<usize>) -> usize {
        let id = self.procs.len();
        self.procs.push(Proc { t, frames: vec![(node, 0)], parent, status: Status::Runnable });
        id
    }

    fn fail(&mut self, node: usize, message: impl Into<String>) {
        self.failure = Some((self.arena.describe(node), message.into()));
    }

    fn step(&mut self, pid: usize) {
        loop {
            if self.procs[pid].status != Status::Runnable {
                return;
            }
            let Some(&(node, cursor)) = self.procs[pid].frames.last() else {
                self.complete(pid);
                return;
            };
            match self.arena.nodes[node].kind.clone() {
                NodeKind::Sequence => {
                    if cursor < self.arena.nodes[node].children.len() {
                        let child = self.arena.nodes[node].children[cursor];
                        self.procs[pid].frames.last_mut().expect("frame").1 += 1;
                        self.procs[pid].frames.push((child, 0));
                    } else {
                        self.procs[pid].frames.pop();
                    }
                }
                NodeKind::Parallel => {
                    let children = self.arena.nodes[node].children.clone();
                    if children.is_empty() {
                        self.procs[pid].frames.pop();
                        continue;
                    }
                    let t = self.procs[pid].t;
                    self.procs[pid].status =
                        Status::WaitJoin { remaining: children.len(), latest: t };
                    for c in children {
                        let cid = self.spawn(c, t, Some(pid));
                        self.run_queue.push_back(cid);
                    }
                    return;
                }
                NodeKind::Check(lit) => {
                    if self.state.contains(&lit) {
                        self.procs[pid].frames.pop();
                    } else {
                        self.procs[pid].status = Status::WaitCond(node);
                        return;
                    }
                }
                NodeKind::Action(snap, role) => {
                    let key = pair_key(&snap);
                    match role {
                        SnapRole::Start => {
                            let base = key.0.clone();
                            let bounds = self.durations.get(&base);
                            let steps = 1000i64;
                            let k = self.rng.random_range(0..=steps);
                            let d = bounds.lower
                                + (bounds.upper - bounds.lower)
                                    * Rational64::new(k, steps);
                            let t = self.procs[pid].t;
                            self.open.entry(key).or_default().push_back((t, d));
                            self.trace.push((t, snap, SnapRole::Start));
                            self.procs[pid].frames.pop();
                        }
                        SnapRole::End => {
                            let Some(&(start_t, d)) =
                                self.open.get(&key).and_then(|q| q.front())
                            else {
                                self.fail(node, "end snap without a matching running start");
                                return;
                            };
                            let ready = start_t + d;
                            if self.procs[pid].t < ready {
                                self.procs[pid].status = Status::WaitTime;
                                self.timer_seq += 1;
                                self.timers.push(Reverse((ready, self.timer_seq, pid)));
                                return;
                            }
                            self.open.get_mut(&key).expect("open").pop_front();
                            let t = self.procs[pid].t;
                            self.trace.push((t, snap, SnapRole::End));
                            self.procs[pid].frames.pop();
                        }
                    }
                }
                NodeKind::Eff(effect) => {
                    match effect.kind {
                        EffectKind::Del => {
                            let lits: Vec<Term> = self
                                .state
                                .literals()
                                .iter()
                                .filter(|l| **l != effect.literal)
                                .cloned()
                                .collect();
                            if lits.len() == self.state.len() {
                                self.fail(node, "del target absent from state");
                                return;
                            }
                            self.state = State::new(lits).expect("removal keeps invariants");
                        }
                        EffectKind::Add => {
                            if self.state.contains(&effect.literal) {
                                self.fail(node, "add target already present");
                                return;
                            }
                            let mut lits = self.state.literals().to_vec();
                            lits.push(effect.literal.clone());
                            self.state = State::new(lits).expect("addition keeps invariants");
                            self.wake_cond_waiters(self.procs[pid].t);
                        }
                    }
                    self.procs[pid].frames.pop();
                }
            }
        }
    }

    fn wake_cond_waiters(&mut self, now: Rational64) {
        for pid in 0..self.procs.len() {
            if let Status::WaitCond(node) = self.procs[pid].status {
                let NodeKind::Check(ref lit) = self.arena.nodes[node].kind else {
                    continue;
                };
                if self.state.contains(lit) {
                    self.procs[pid].status = Status::Runnable;
                    self.procs[pid].t = self.procs[pid].t.max(now);
                    self.procs[pid].frames.pop(); // the check passed
                    self.run_queue.push_back(pid);
                }
            }
        }
    }

    fn complete(&mut self, pid: usize) {
        self.procs[pid].status = Status::Done;
        let t = self.procs[pid].t;
        if let Some(parent) = self.procs[pid].parent {
            if let Status::WaitJoin { remaining, latest } = self.procs[parent].status.clone() {
                let latest = latest.max(t);
                if remaining == 1 {
                    self.procs[parent].t = latest;
                    self.procs[parent].frames.pop(); // the parallel node
                    self.procs[parent].status = Status::Runnable;
                    self.run_queue.push_back(parent);
                } else {
                    self.procs[parent].status =
                        Status::WaitJoin { remaining: remaining - 1, latest };
                }
            }
        }
    }
}

fn pair_key(snap: &Term) -> PairKey {
    let functor = snap.functor().unwrap_or("");
    let base = snap_parts(functor).map(|(b, _)| b).unwrap_or(functor);
    (
        base.to_string(),
        snap.args().iter().map(|a| a.to_string()).collect(),
    )
}
