//! From total-order plan to Simple Temporal Network.
//!
//! Achiever extraction gives the causal structure of the plan; keeping only
//! the last achiever per precondition strengthens the disjunctive network to
//! an STN. Timepoints are the snap-action occurrences plus the virtual
//! origin `a0` (fixed at time 0, its add-effects being the initial state).
//! Edges use the distance-graph convention: an edge `u -> v` with weight `w`
//! encodes `t_v - t_u <= w`. A durative pair with bounds `[l, u]` contributes
//! `start -> end` with weight `u` and `end -> start` with weight `-l`; the
//! network is consistent iff the graph has no negative cycle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{snap_parts, DurationTable, EffectKind, SnapRole};
use crate::parse::{fmt_rational, parse_rational};
use crate::planner::TotalOrderPlan;
use crate::term::Term;

pub type Weight = Rational64;

#[derive(Debug, Error)]
pub enum StnError {
    #[error("step {step}: precondition {literal} has no achiever")]
    MissingAchiever { step: usize, literal: String },
    #[error("unmatched snap action: {0}")]
    UnmatchedSnap(String),
    #[error("stn is inconsistent")]
    Inconsistent,
    #[error("timepoint {node} has no path to the origin")]
    Unbounded { node: usize },
    #[error("bad stn json: {0}")]
    Malformed(String),
}

/// For each step index `j >= 1`, the set of steps whose add-effects supply a
/// precondition of `j`; index 0 is the virtual initial action.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AchieverMap {
    sets: BTreeMap<usize, BTreeSet<usize>>,
}

impl AchieverMap {
    pub fn get(&self, step: usize) -> BTreeSet<usize> {
        self.sets.get(&step).cloned().unwrap_or_default()
    }

    pub fn insert(&mut self, step: usize, achiever: usize) {
        self.sets.entry(step).or_default().insert(achiever);
    }

    pub fn ensure_entry(&mut self, step: usize) {
        self.sets.entry(step).or_default();
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> {
        self.sets.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

fn step_adds(plan: &TotalOrderPlan, i: usize) -> Vec<Term> {
    plan.steps[i - 1]
        .action
        .ground_effects()
        .into_iter()
        .filter(|e| e.kind == EffectKind::Add)
        .map(|e| e.literal)
        .collect()
}

fn step_dels(plan: &TotalOrderPlan, i: usize) -> Vec<Term> {
    plan.steps[i - 1]
        .action
        .ground_effects()
        .into_iter()
        .filter(|e| e.kind == EffectKind::Del)
        .map(|e| e.literal)
        .collect()
}

/// All achievers: step `i` achieves step `j` (`i < j`) iff some add-effect of
/// `i` equals some valid-condition literal of `j`; the initial state counts
/// as the add-effects of step 0.
pub fn achievers(plan: &TotalOrderPlan) -> Result<AchieverMap, StnError> {
    let mut map = AchieverMap::default();
    for j in 1..=plan.steps.len() {
        map.ensure_entry(j);
        for p in plan.steps[j - 1].action.ground_valid() {
            let mut found = false;
            if plan.init.contains(&p) {
                map.insert(j, 0);
                found = true;
            }
            for i in 1..j {
                if step_adds(plan, i).contains(&p) {
                    map.insert(j, i);
                    found = true;
                }
            }
            if !found {
                return Err(StnError::MissingAchiever { step: j, literal: p.to_string() });
            }
        }
    }
    Ok(map)
}

/// Keep, per precondition, the largest achiever index with no intervening
/// deleter, then union over the step's preconditions.
pub fn last_achievers(plan: &TotalOrderPlan, full: &AchieverMap) -> AchieverMap {
    let mut map = AchieverMap::default();
    for j in 1..=plan.steps.len() {
        map.ensure_entry(j);
        for p in plan.steps[j - 1].action.ground_valid() {
            let mut chosen = None;
            for k in (1..j).rev() {
                if step_adds(plan, k).contains(&p) {
                    chosen = Some(k);
                    break;
                }
                if step_dels(plan, k).contains(&p) {
                    // deleted and never re-added before j: the plan is
                    // corrupt; fall back to the full map below
                    break;
                }
            }
            if chosen.is_none() && plan.init.contains(&p) {
                chosen = Some(0);
            }
            match chosen {
                Some(i) => map.insert(j, i),
                None => {
                    if let Some(&i) = full.get(j).iter().max() {
                        map.insert(j, i);
                    }
                }
            }
        }
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Ordering,
    DurationUpper,
    DurationLower,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StnNode {
    pub label: String,
    pub role: Option<SnapRole>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StnEdge {
    pub from: usize,
    pub to: usize,
    pub weight: Weight,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stn {
    pub nodes: Vec<StnNode>,
    pub edges: Vec<StnEdge>,
}

impl Stn {
    /// An STN over `n` anonymous timepoints (node 0 is the origin).
    pub fn generic(n: usize) -> Stn {
        let nodes = (0..n)
            .map(|i| StnNode { label: format!("t{i}"), role: None })
            .collect();
        Stn { nodes, edges: Vec::new() }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, weight: Weight, kind: EdgeKind) {
        self.edges.push(StnEdge { from, to, weight, kind });
    }

    pub fn ordering_edges(&self) -> impl Iterator<Item = &StnEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Ordering)
    }

    /// Matched (start, end) node pairs, derived from the duration edges.
    pub fn duration_pairs(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::DurationUpper)
            .map(|e| (e.from, e.to))
            .collect()
    }
}

/// Result of the negative-cycle check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    NegativeCycle { witness: Vec<StnEdge> },
}

impl Consistency {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Consistency::Consistent)
    }
}

/// Earliest-time assignment for every timepoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// Time per node, indexed by timepoint id.
    pub times: Vec<Rational64>,
    pub makespan: Rational64,
}

/// Build the STN for a plan under a last-achiever map.
///
/// Ordering constraints are non-strict. An achiever relation that coincides
/// with a duration pair is not double-encoded: the pair's backward edge
/// already enforces the precedence. Additionally, an ordering edge is
/// emitted whenever a later step deletes a precondition of an earlier one,
/// unless that precedence is already entailed; this keeps every solution of
/// the network replayable as a dispatch order.
pub fn build_stn(
    plan: &TotalOrderPlan,
    la: &AchieverMap,
    durations: &DurationTable,
) -> Result<Stn, StnError> {
    let n = plan.steps.len();
    let mut nodes = vec![StnNode { label: "a0".into(), role: None }];
    for step in &plan.steps {
        let functor = step
            .action
            .ground_name
            .functor()
            .ok_or_else(|| StnError::UnmatchedSnap(step.action.ground_name.to_string()))?;
        let (_, role) = snap_parts(functor)
            .ok_or_else(|| StnError::UnmatchedSnap(step.action.ground_name.to_string()))?;
        nodes.push(StnNode { label: step.action.ground_name.to_string(), role: Some(role) });
    }

    // match starts with ends by base functor and ground argument tuple
    let mut open: BTreeMap<(String, Vec<String>), VecDeque<usize>> = BTreeMap::new();
    let mut pairs: Vec<(usize, usize, String)> = Vec::new();
    for (idx, step) in plan.steps.iter().enumerate() {
        let node = idx + 1;
        let name = &step.action.ground_name;
        let (base, role) = snap_parts(name.functor().expect("checked")).expect("checked");
        let key = (
            base.to_string(),
            name.args().iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        );
        match role {
            SnapRole::Start => open.entry(key).or_default().push_back(node),
            SnapRole::End => {
                let start = open
                    .get_mut(&key)
                    .and_then(|q| q.pop_front())
                    .ok_or_else(|| StnError::UnmatchedSnap(name.to_string()))?;
                pairs.push((start, node, base.to_string()));
            }
        }
    }
    if let Some((key, queue)) = open.iter().find(|(_, q)| !q.is_empty()) {
        let node = queue.front().expect("nonempty");
        return Err(StnError::UnmatchedSnap(format!(
            "{}_start({}) at step {node} has no matching end",
            key.0,
            key.1.join(",")
        )));
    }

    let mut stn = Stn { nodes, edges: Vec::new() };
    let pair_set: BTreeSet<(usize, usize)> =
        pairs.iter().map(|(s, e, _)| (*s, *e)).collect();

    for (start, end, base) in &pairs {
        let bounds = durations.get(base);
        stn.add_edge(*start, *end, bounds.upper, EdgeKind::DurationUpper);
        stn.add_edge(*end, *start, -bounds.lower, EdgeKind::DurationLower);
    }

    let mut ordering: BTreeSet<(usize, usize)> = BTreeSet::new();
    for j in 1..=n {
        let set = la.get(j);
        if set.is_empty() {
            ordering.insert((j, 0));
            continue;
        }
        for &i in &set {
            if pair_set.contains(&(i, j)) {
                continue; // the backward duration edge already orders the pair
            }
            ordering.insert((j, i));
        }
    }
    for (j, i) in &ordering {
        stn.add_edge(*j, *i, Rational64::from_integer(0), EdgeKind::Ordering);
    }

    // deleter protection: a later deleter of p must stay after every earlier
    // consumer of p
    for j in 1..=n {
        let preconds = plan.steps[j - 1].action.ground_valid();
        for k in (j + 1)..=n {
            let dels = step_dels(plan, k);
            if !preconds.iter().any(|p| dels.contains(p)) {
                continue;
            }
            if ordering.contains(&(k, j)) || pair_set.contains(&(j, k)) {
                continue;
            }
            if entails_precedence(&stn, k, j) {
                continue;
            }
            ordering.insert((k, j));
            stn.add_edge(k, j, Rational64::from_integer(0), EdgeKind::Ordering);
        }
    }

    Ok(stn)
}

/// True iff the current graph already entails `t_from >= t_to`, i.e. the
/// shortest distance from `from` to `to` is <= 0.
fn entails_precedence(stn: &Stn, from: usize, to: usize) -> bool {
    let dist = single_source_dist(stn.nodes.len(), &stn.edges, from);
    matches!(dist[to], Some(d) if d <= Rational64::from_integer(0))
}

/// Plain Bellman-Ford from one source; runs n-1 relaxation rounds and does
/// not attempt cycle detection (callers that care run `check_consistency`).
fn single_source_dist(n: usize, edges: &[StnEdge], source: usize) -> Vec<Option<Rational64>> {
    let mut dist: Vec<Option<Rational64>> = vec![None; n];
    dist[source] = Some(Rational64::from_integer(0));
    for _ in 0..n.saturating_sub(1) {
        let mut changed = false;
        for e in edges {
            if let Some(du) = dist[e.from] {
                let cand = du + e.weight;
                if dist[e.to].is_none_or(|dv| cand < dv) {
                    dist[e.to] = Some(cand);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Single-source relaxation over the distance graph with a virtual source
/// connected to every node; a relaxation still possible after n rounds means
/// a negative cycle, whose witness is extracted by predecessor walking.
pub fn check_consistency(stn: &Stn) -> Consistency {
    let n = stn.nodes.len();
    if n == 0 {
        return Consistency::Consistent;
    }
    let zero = Rational64::from_integer(0);
    let mut dist: Vec<Rational64> = vec![zero; n]; // virtual source, weight 0 to all
    let mut pred: Vec<Option<usize>> = vec![None; n]; // edge index into stn.edges

    let mut relaxed_node = None;
    for round in 0..=n {
        let mut changed = false;
        for (ei, e) in stn.edges.iter().enumerate() {
            let cand = dist[e.from] + e.weight;
            if cand < dist[e.to] {
                dist[e.to] = cand;
                pred[e.to] = Some(ei);
                changed = true;
                if round == n {
                    relaxed_node = Some(e.to);
                }
            }
        }
        if !changed {
            return Consistency::Consistent;
        }
    }
    let Some(start) = relaxed_node else {
        return Consistency::Consistent;
    };

    // prefer the two-edge witness of a duration pair with upper < lower
    for (s, e) in stn.duration_pairs() {
        let fwd = stn
            .edges
            .iter()
            .find(|x| x.kind == EdgeKind::DurationUpper && x.from == s && x.to == e);
        let bwd = stn
            .edges
            .iter()
            .find(|x| x.kind == EdgeKind::DurationLower && x.from == e && x.to == s);
        if let (Some(fwd), Some(bwd)) = (fwd, bwd) {
            if fwd.weight + bwd.weight < zero {
                return Consistency::NegativeCycle { witness: vec![fwd.clone(), bwd.clone()] };
            }
        }
    }

    // walk predecessors n times to land inside the cycle, then collect it
    let mut v = start;
    for _ in 0..n {
        v = stn.edges[pred[v].expect("on a relaxation chain")].from;
    }
    let mut cycle = Vec::new();
    let anchor = v;
    loop {
        let ei = pred[v].expect("cycle member has a predecessor");
        cycle.push(stn.edges[ei].clone());
        v = stn.edges[ei].from;
        if v == anchor {
            break;
        }
    }
    cycle.reverse();
    Consistency::NegativeCycle { witness: cycle }
}

fn makespan_of(stn: &Stn, times: &[Rational64]) -> Rational64 {
    let zero = Rational64::from_integer(0);
    let ends: Vec<Rational64> = stn
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, node)| node.role == Some(SnapRole::End))
        .map(|(i, _)| times[i])
        .collect();
    let pool = if ends.is_empty() { times.to_vec() } else { ends };
    pool.into_iter().max().unwrap_or(zero)
}

/// Earliest time of node x is the negated shortest-path distance from x to
/// the origin. The makespan is the latest end snap (or latest timepoint when
/// the network carries no roles).
pub fn earliest_schedule(stn: &Stn) -> Result<Schedule, StnError> {
    if !check_consistency(stn).is_consistent() {
        return Err(StnError::Inconsistent);
    }
    let n = stn.nodes.len();
    if n == 0 {
        return Ok(Schedule { times: vec![], makespan: Rational64::from_integer(0) });
    }
    // shortest x -> origin distances: run from the origin over reversed edges
    let reversed: Vec<StnEdge> = stn
        .edges
        .iter()
        .map(|e| StnEdge { from: e.to, to: e.from, weight: e.weight, kind: e.kind })
        .collect();
    let dist = single_source_dist(n, &reversed, 0);
    let mut times = Vec::with_capacity(n);
    for (i, d) in dist.iter().enumerate() {
        match d {
            Some(d) => times.push(-d),
            None => return Err(StnError::Unbounded { node: i }),
        }
    }
    let makespan = makespan_of(stn, &times);
    Ok(Schedule { times, makespan })
}

/// All-pairs shortest-path matrix; `None` entries are unreachable. Returns
/// `Err(Inconsistent)` when some diagonal goes negative.
pub fn all_pairs(stn: &Stn) -> Result<Vec<Vec<Option<Rational64>>>, StnError> {
    let n = stn.nodes.len();
    let zero = Rational64::from_integer(0);
    let mut dist: Vec<Vec<Option<Rational64>>> = vec![vec![None; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = Some(zero);
    }
    for e in &stn.edges {
        let cur = dist[e.from][e.to];
        if cur.is_none_or(|d| e.weight < d) {
            dist[e.from][e.to] = Some(e.weight);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(dik) = dist[i][k] else { continue };
            for j in 0..n {
                let Some(dkj) = dist[k][j] else { continue };
                let cand = dik + dkj;
                if dist[i][j].is_none_or(|d| cand < d) {
                    dist[i][j] = Some(cand);
                }
            }
        }
    }
    for (i, row) in dist.iter().enumerate() {
        if row[i].is_some_and(|d| d < zero) {
            return Err(StnError::Inconsistent);
        }
    }
    Ok(dist)
}

/// Minimal-network tightening: the same edge list with every weight replaced
/// by the shortest-path distance between its endpoints. Weights never grow.
pub fn closure(stn: &Stn) -> Result<Stn, StnError> {
    let dist = all_pairs(stn)?;
    let mut out = stn.clone();
    for e in &mut out.edges {
        if let Some(d) = dist[e.from][e.to] {
            e.weight = d;
        }
    }
    Ok(out)
}

/// For an STN the earliest-time vector is already makespan-minimal; this
/// computes it through the all-pairs route and cross-checks the
/// single-source result before returning it.
pub fn minimize_makespan(stn: &Stn) -> Result<Schedule, StnError> {
    let dist = all_pairs(stn)?;
    let single = earliest_schedule(stn)?;
    let mut times = Vec::with_capacity(stn.nodes.len());
    for (i, row) in dist.iter().enumerate() {
        match row[0] {
            Some(d) => times.push(-d),
            None => return Err(StnError::Unbounded { node: i }),
        }
    }
    let via_closure = Schedule { makespan: makespan_of(stn, &times), times };
    debug_assert_eq!(via_closure, single, "shortest-path routes disagree");
    Ok(single)
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StnJson {
    nodes: Vec<StnNodeJson>,
    edges: Vec<StnEdgeJson>,
}

#[derive(Serialize, Deserialize)]
struct StnNodeJson {
    id: usize,
    label: String,
    role: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct StnEdgeJson {
    from: usize,
    to: usize,
    weight: String,
    kind: EdgeKind,
}

pub fn stn_to_json(stn: &Stn) -> String {
    let doc = StnJson {
        nodes: stn
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| StnNodeJson {
                id,
                label: n.label.clone(),
                role: n.role.map(|r| r.as_str().to_string()),
            })
            .collect(),
        edges: stn
            .edges
            .iter()
            .map(|e| StnEdgeJson {
                from: e.from,
                to: e.to,
                weight: fmt_rational(e.weight),
                kind: e.kind,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("stn serialization cannot fail")
}

pub fn stn_from_json(text: &str) -> Result<Stn, StnError> {
    let doc: StnJson =
        serde_json::from_str(text).map_err(|e| StnError::Malformed(e.to_string()))?;
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.iter().enumerate() {
        if n.id != i {
            return Err(StnError::Malformed(format!("node ids must be dense, got {}", n.id)));
        }
        let role = match n.role.as_deref() {
            None => None,
            Some("start") => Some(SnapRole::Start),
            Some("end") => Some(SnapRole::End),
            Some(other) => return Err(StnError::Malformed(format!("bad role '{other}'"))),
        };
        nodes.push(StnNode { label: n.label.clone(), role });
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        if e.from >= nodes.len() || e.to >= nodes.len() {
            return Err(StnError::Malformed("edge endpoint out of range".into()));
        }
        let weight = parse_rational(&e.weight)
            .ok_or_else(|| StnError::Malformed(format!("bad weight '{}'", e.weight)))?;
        edges.push(StnEdge { from: e.from, to: e.to, weight, kind: e.kind });
    }
    Ok(Stn { nodes, edges })
}

/// DOT rendering; backward (duration lower-bound) edges are dashed.
pub fn stn_to_dot(stn: &Stn) -> String {
    use std::fmt::Write;
    let mut out = String::from("digraph stn {\n  rankdir=LR;\n");
    for (i, n) in stn.nodes.iter().enumerate() {
        writeln!(out, "  n{i} [label=\"{}\"];", n.label).unwrap();
    }
    for e in &stn.edges {
        let style = match e.kind {
            EdgeKind::DurationLower => ", style=dashed",
            _ => "",
        };
        writeln!(
            out,
            "  n{} -> n{} [label=\"{}\"{style}];",
            e.from,
            e.to,
            fmt_rational(e.weight)
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

pub fn schedule_to_json(stn: &Stn, schedule: &Schedule) -> String {
    #[derive(Serialize)]
    struct Entry {
        node: usize,
        label: String,
        time: String,
    }
    #[derive(Serialize)]
    struct Doc {
        times: Vec<Entry>,
        makespan: String,
    }
    let doc = Doc {
        times: schedule
            .times
            .iter()
            .enumerate()
            .map(|(i, t)| Entry {
                node: i,
                label: stn.nodes[i].label.clone(),
                time: fmt_rational(*t),
            })
            .collect(),
        makespan: fmt_rational(schedule.makespan),
    };
    serde_json::to_string_pretty(&doc).expect("schedule serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::plan_from_json;

    fn r(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    fn plan_of(json: &str) -> crate::planner::TotalOrderPlan {
        plan_from_json(json).expect("test plan json").0
    }

    #[test]
    fn achievers_of_empty_plan_is_empty() {
        let plan = plan_of(
            r#"{"init": [], "goal": [], "kb_facts": [], "durations": {}, "steps": []}"#,
        );
        let map = achievers(&plan).unwrap();
        assert!(map.is_empty());
    }

    #[test]
    fn single_step_achieved_by_the_initial_state() {
        let plan = plan_of(
            r#"{
              "init": ["clear(b1)"], "goal": ["gripped(a1,b1)"], "kb_facts": [], "durations": {},
              "steps": [{
                "index": 1, "action": "grip_start(a1,b1)",
                "valid": ["clear(b1)"], "invalid": [], "invalid_at_end": [], "kb": [],
                "effects": [{"op": "add", "literal": "gripping(a1,b1)"}],
                "duration_bounds": ["1", "1"]
              }]
            }"#,
        );
        let map = achievers(&plan).unwrap();
        assert_eq!(map.get(1), [0].into_iter().collect());
    }

    #[test]
    fn missing_achiever_is_an_error() {
        let plan = plan_of(
            r#"{
              "init": ["clear(b1)", "gripping(a1,b1)"], "goal": [], "kb_facts": [], "durations": {},
              "steps": [{
                "index": 1, "action": "grip_end(a1,b1)",
                "valid": ["gripping(a1,b1)"], "invalid": [], "invalid_at_end": [], "kb": [],
                "effects": [{"op": "del", "literal": "gripping(a1,b1)"}],
                "duration_bounds": ["1", "1"]
              },
              {
                "index": 2, "action": "grip_start(a1,b1)",
                "valid": ["gripping(a1,b1)"], "invalid": [], "invalid_at_end": [], "kb": [],
                "effects": [{"op": "add", "literal": "held(a1,b1)"}],
                "duration_bounds": ["1", "1"]
              }]
            }"#,
        );
        // step 2 consumes gripping(a1,b1), which step 1 deleted and nothing
        // re-added, and which never counts as initial because the full map
        // only records adders -- here the init copy was deleted, leaving the
        // init adder as the only candidate
        let map = achievers(&plan);
        assert!(map.is_ok(), "init still counts as an adder in the full map");
        // a precondition nobody ever adds is the error case
        let broken = plan_of(
            r#"{
              "init": ["clear(b1)"], "goal": [], "kb_facts": [], "durations": {},
              "steps": [{
                "index": 1, "action": "grip_start(a1,b1)",
                "valid": ["clear(b1)"], "invalid": [], "invalid_at_end": [], "kb": [],
                "effects": [{"op": "add", "literal": "gripping(a1,b1)"}],
                "duration_bounds": ["1", "1"]
              }]
            }"#,
        );
        let mut tampered = broken;
        // swap the precondition for a literal with no adder anywhere
        let schema = crate::domain::ActionSchema {
            name: crate::parse::parse_term("grip_start(a1,b1)").unwrap(),
            valid: vec![crate::parse::parse_term("clear(b9)").unwrap()],
            invalid: vec![],
            invalid_at_end: vec![],
            kb_conds: vec![],
            effects: vec![],
        };
        tampered.steps[0].action =
            crate::domain::GroundAction::new(std::sync::Arc::new(schema), Default::default());
        assert!(matches!(
            achievers(&tampered),
            Err(StnError::MissingAchiever { step: 1, .. })
        ));
    }

    #[test]
    fn last_achiever_prefers_the_re_adder() {
        // clear(b1) holds initially, step 1 deletes it, step 2 re-adds it,
        // step 3 consumes it: the full map has {0, 2}, the last map keeps {2}
        let plan = plan_of(
            r#"{
              "init": ["clear(b1)"], "goal": [], "kb_facts": [], "durations": {},
              "steps": [
                {"index": 1, "action": "wipe_start(x)", "valid": [], "invalid": [],
                 "invalid_at_end": [], "kb": [],
                 "effects": [{"op": "del", "literal": "clear(b1)"}],
                 "duration_bounds": ["1", "1"]},
                {"index": 2, "action": "wipe_end(x)", "valid": [], "invalid": [],
                 "invalid_at_end": [], "kb": [],
                 "effects": [{"op": "add", "literal": "clear(b1)"}],
                 "duration_bounds": ["1", "1"]},
                {"index": 3, "action": "take_start(x)", "valid": ["clear(b1)"], "invalid": [],
                 "invalid_at_end": [], "kb": [],
                 "effects": [{"op": "del", "literal": "clear(b1)"}],
                 "duration_bounds": ["1", "1"]},
                {"index": 4, "action": "take_end(x)", "valid": [], "invalid": [],
                 "invalid_at_end": [], "kb": [],
                 "effects": [], "duration_bounds": ["1", "1"]}
              ]
            }"#,
        );
        let full = achievers(&plan).unwrap();
        assert_eq!(full.get(3), [0, 2].into_iter().collect());
        let la = last_achievers(&plan, &full);
        assert_eq!(la.get(3), [2].into_iter().collect());
    }

    #[test]
    fn build_stn_on_empty_plan_has_only_the_origin() {
        let plan = plan_of(
            r#"{"init": [], "goal": [], "kb_facts": [], "durations": {}, "steps": []}"#,
        );
        let map = achievers(&plan).unwrap();
        let la = last_achievers(&plan, &map);
        let stn = build_stn(&plan, &la, &crate::domain::DurationTable::default()).unwrap();
        assert_eq!(stn.nodes.len(), 1);
        assert!(stn.edges.is_empty());
    }

    #[test]
    fn unmatched_start_is_rejected() {
        let plan = plan_of(
            r#"{
              "init": ["clear(b1)"], "goal": [], "kb_facts": [], "durations": {},
              "steps": [{
                "index": 1, "action": "grip_start(a1,b1)",
                "valid": ["clear(b1)"], "invalid": [], "invalid_at_end": [], "kb": [],
                "effects": [{"op": "add", "literal": "gripping(a1,b1)"}],
                "duration_bounds": ["1", "1"]
              }]
            }"#,
        );
        let map = achievers(&plan).unwrap();
        let la = last_achievers(&plan, &map);
        assert!(matches!(
            build_stn(&plan, &la, &crate::domain::DurationTable::default()),
            Err(StnError::UnmatchedSnap(_))
        ));
    }

    fn pair_stn(lower: i64, upper: i64) -> Stn {
        let mut stn = Stn::generic(3);
        stn.nodes[1].role = Some(SnapRole::Start);
        stn.nodes[2].role = Some(SnapRole::End);
        stn.add_edge(1, 0, r(0), EdgeKind::Ordering);
        stn.add_edge(1, 2, r(upper), EdgeKind::DurationUpper);
        stn.add_edge(2, 1, r(-lower), EdgeKind::DurationLower);
        stn
    }

    #[test]
    fn single_durative_action_schedule() {
        let stn = pair_stn(3, 7);
        let s = earliest_schedule(&stn).unwrap();
        assert_eq!(s.times[1], r(0));
        assert_eq!(s.times[2], r(3));
        assert_eq!(s.makespan, r(3));
    }

    #[test]
    fn empty_stn_makespan_zero() {
        let stn = Stn::generic(1);
        let s = earliest_schedule(&stn).unwrap();
        assert_eq!(s.makespan, r(0));
    }

    #[test]
    fn upper_below_lower_is_negative_cycle() {
        let stn = pair_stn(5, 2);
        match check_consistency(&stn) {
            Consistency::NegativeCycle { witness } => {
                assert_eq!(witness.len(), 2);
                assert!(witness.iter().any(|e| e.kind == EdgeKind::DurationUpper));
                assert!(witness.iter().any(|e| e.kind == EdgeKind::DurationLower));
            }
            Consistency::Consistent => panic!("expected a negative cycle"),
        }
        assert!(matches!(earliest_schedule(&stn), Err(StnError::Inconsistent)));
    }

    #[test]
    fn ordering_cycle_with_positive_lower_bound() {
        let mut stn = Stn::generic(3);
        // t1 before t2 with at least 1 time unit, and t2 before t1
        stn.add_edge(2, 1, r(-1), EdgeKind::DurationLower);
        stn.add_edge(1, 2, r(0), EdgeKind::Ordering);
        match check_consistency(&stn) {
            Consistency::NegativeCycle { witness } => {
                let total: Rational64 = witness.iter().map(|e| e.weight).sum();
                assert!(total < r(0));
            }
            Consistency::Consistent => panic!("expected a negative cycle"),
        }
    }

    #[test]
    fn closure_never_grows_weights() {
        let mut stn = pair_stn(1, 10);
        stn.add_edge(2, 0, r(0), EdgeKind::Ordering);
        let tight = closure(&stn).unwrap();
        for (orig, new) in stn.edges.iter().zip(&tight.edges) {
            assert!(new.weight <= orig.weight);
        }
    }

    #[test]
    fn minimize_matches_earliest() {
        let stn = pair_stn(2, 9);
        let a = earliest_schedule(&stn).unwrap();
        let b = minimize_makespan(&stn).unwrap();
        assert_eq!(a.makespan, b.makespan);
        assert_eq!(a.times, b.times);
    }

    #[test]
    fn json_round_trip() {
        let stn = pair_stn(1, 2);
        let text = stn_to_json(&stn);
        let back = stn_from_json(&text).unwrap();
        assert_eq!(back, stn);
    }

    #[test]
    fn widening_preserves_consistency() {
        let base = pair_stn(2, 4);
        assert!(check_consistency(&base).is_consistent());
        for (lo, hi) in [(1, 4), (2, 9), (0, 100)] {
            let wider = pair_stn(lo, hi);
            assert!(check_consistency(&wider).is_consistent());
        }
    }
}
