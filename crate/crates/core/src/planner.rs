//! Depth-bounded backtracking forward search over ground snap actions.
//!
//! The search is chronological depth-first: schemas are tried in declaration
//! order, bindings in state/kb list order, and a child state already on the
//! current path is pruned. The first plan found is returned; the iterator
//! form resumes the same backtracking search to yield further distinct
//! solutions, which is what the re-plan feedback loop consumes.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    apply_effects, blocked_by_goal, ground_via_kb, satisfies_goal, satisfy_all, violates_any,
    ActionSchema, DurationTable, Effect, EffectError, EffectKind, GoalMode, GroundAction, State,
    StaticKb,
};
use crate::parse::{fmt_rational, parse_term, DomainFile, ParseError};
use crate::term::{unify, Substitution, Term, VarGen};

/// One executed snap action, with the state it was applied in.
#[derive(Debug, Clone)]
pub struct PlanStep {
    /// 1-based position in the plan.
    pub index: usize,
    pub action: GroundAction,
    pub prior_state: State,
    pub next_state: State,
}

/// A total-order plan of ground snap actions.
#[derive(Debug, Clone)]
pub struct TotalOrderPlan {
    pub steps: Vec<PlanStep>,
    pub init: State,
    pub goal: Vec<Term>,
    pub kb_facts: Vec<Term>,
}

impl TotalOrderPlan {
    pub fn final_state(&self) -> &State {
        self.steps.last().map(|s| &s.next_state).unwrap_or(&self.init)
    }

    pub fn kb(&self) -> StaticKb {
        StaticKb::new(self.kb_facts.clone(), self.goal.clone())
    }

    /// Ground action names in order, e.g. for display.
    pub fn action_names(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.action.ground_name.to_string()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub max_depth: usize,
    pub goal_mode: GoalMode,
    pub node_budget: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig { max_depth: 30, goal_mode: GoalMode::Equality, node_budget: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub max_depth_reached: usize,
}

#[derive(Debug, Error)]
pub enum PlanFailure {
    #[error("search exhausted without a plan ({} nodes expanded, depth {} reached)", .0.nodes_expanded, .0.max_depth_reached)]
    Exhausted(SearchStats),
    #[error("node budget exhausted ({} nodes expanded)", .0.nodes_expanded)]
    Budget(SearchStats),
    #[error("bad search input: {0}")]
    Config(String),
}

/// Enumerate ground actions applicable in `state`, in deterministic order:
/// schemas in declaration order; within a schema, valid-condition bindings in
/// state order crossed with kb groundings in kb order. The four checks run
/// in sequence: valid, invalid, goal protection, kb grounding.
pub fn applicable_actions(
    state: &State,
    kb: &StaticKb,
    schemas: &[ActionSchema],
) -> Vec<GroundAction> {
    let mut gen = VarGen::new();
    let mut out = Vec::new();
    for schema in schemas {
        let fresh = Arc::new(schema.rename_apart(&mut gen));
        for s in satisfy_all(&fresh.valid, state, &Substitution::empty()) {
            if violates_any(&fresh.invalid, state, &s) {
                continue;
            }
            if blocked_by_goal(&fresh.invalid_at_end, kb, &s) {
                continue;
            }
            for s2 in ground_via_kb(&fresh.kb_conds, kb, &s) {
                let action = GroundAction::new(Arc::clone(&fresh), s2);
                if !action.ground_name.is_ground() {
                    continue;
                }
                if action.ground_effects().iter().any(|e| !e.literal.is_ground()) {
                    continue;
                }
                out.push(action);
            }
        }
    }
    out
}

struct Node {
    state: State,
    /// Action that produced this node (None for the root).
    via: Option<GroundAction>,
    actions: Option<Vec<GroundAction>>,
    cursor: usize,
    yielded: bool,
}

/// Resumable depth-first search; each `next()` returns the next distinct
/// plan in backtracking order.
pub struct PlanIter {
    goal: Vec<Term>,
    kb: StaticKb,
    schemas: Vec<ActionSchema>,
    cfg: SearchConfig,
    stack: Vec<Node>,
    stats: SearchStats,
    budget_hit: bool,
    init: State,
}

impl PlanIter {
    pub fn new(
        init: State,
        goal: Vec<Term>,
        kb: StaticKb,
        domain: &DomainFile,
        cfg: SearchConfig,
    ) -> Result<PlanIter, PlanFailure> {
        if let Some(bad) = goal.iter().find(|g| !g.is_ground()) {
            return Err(PlanFailure::Config(format!("goal literal not ground: {bad}")));
        }
        if kb.goal_literals != goal {
            return Err(PlanFailure::Config(
                "kb goal literals must equal the goal (goal injection)".into(),
            ));
        }
        let root = Node { state: init.clone(), via: None, actions: None, cursor: 0, yielded: false };
        Ok(PlanIter {
            goal,
            kb,
            schemas: domain.schemas.clone(),
            cfg,
            stack: vec![root],
            stats: SearchStats::default(),
            budget_hit: false,
            init,
        })
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn budget_exhausted(&self) -> bool {
        self.budget_hit
    }

    fn seen_on_path(&self, state: &State) -> bool {
        self.stack.iter().any(|n| n.state == *state)
    }

    fn build_plan(&self) -> TotalOrderPlan {
        let mut steps = Vec::new();
        for i in 1..self.stack.len() {
            steps.push(PlanStep {
                index: i,
                action: self.stack[i].via.clone().expect("non-root node has an action"),
                prior_state: self.stack[i - 1].state.clone(),
                next_state: self.stack[i].state.clone(),
            });
        }
        TotalOrderPlan {
            steps,
            init: self.init.clone(),
            goal: self.goal.clone(),
            kb_facts: self.kb.facts.clone(),
        }
    }
}

impl Iterator for PlanIter {
    type Item = TotalOrderPlan;

    fn next(&mut self) -> Option<TotalOrderPlan> {
        loop {
            let depth = match self.stack.len() {
                0 => return None,
                n => n - 1,
            };

            let top = self.stack.last_mut().expect("nonempty");
            if satisfies_goal(&top.state, &self.goal, self.cfg.goal_mode) {
                if !top.yielded {
                    top.yielded = true;
                    return Some(self.build_plan());
                }
                self.stack.pop();
                continue;
            }

            // the depth guard blocks expansion, not goal recognition
            if depth >= self.cfg.max_depth {
                self.stack.pop();
                continue;
            }

            if top.actions.is_none() {
                if let Some(budget) = self.cfg.node_budget {
                    if self.stats.nodes_expanded >= budget {
                        self.budget_hit = true;
                        return None;
                    }
                }
                self.stats.nodes_expanded += 1;
                top.actions = Some(applicable_actions(&top.state, &self.kb, &self.schemas));
            }

            let mut pushed = false;
            loop {
                let top = self.stack.last_mut().expect("nonempty");
                let actions = top.actions.as_ref().expect("expanded");
                if top.cursor >= actions.len() {
                    break;
                }
                let action = actions[top.cursor].clone();
                top.cursor += 1;
                let next_state = match apply_effects(&top.state, &action.ground_effects()) {
                    Ok(s) => s,
                    Err(_) => continue, // effect not applicable here; backtrack point
                };
                if self.seen_on_path(&next_state) {
                    continue;
                }
                self.stack.push(Node {
                    state: next_state,
                    via: Some(action),
                    actions: None,
                    cursor: 0,
                    yielded: false,
                });
                self.stats.max_depth_reached = self.stats.max_depth_reached.max(depth + 1);
                pushed = true;
                break;
            }
            if !pushed {
                self.stack.pop();
            }
        }
    }
}

/// Run the search and return the first plan found.
pub fn plan(
    init: State,
    goal: Vec<Term>,
    kb: StaticKb,
    domain: &DomainFile,
    cfg: SearchConfig,
) -> Result<TotalOrderPlan, PlanFailure> {
    let mut iter = PlanIter::new(init, goal, kb, domain, cfg)?;
    match iter.next() {
        Some(p) => Ok(p),
        None if iter.budget_exhausted() => Err(PlanFailure::Budget(iter.stats())),
        None => Err(PlanFailure::Exhausted(iter.stats())),
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Error)]
pub enum Violation {
    #[error("step {step}: recorded prior state does not match the simulation")]
    PriorStateMismatch { step: usize },
    #[error("step {step}: valid condition not in state: {literal}")]
    UnsatisfiedValid { step: usize, literal: Term },
    #[error("step {step}: invalid condition holds: {literal}")]
    InvalidHolds { step: usize, literal: Term },
    #[error("step {step}: goal-protection condition triggered: {literal}")]
    GoalProtection { step: usize, literal: Term },
    #[error("step {step}: kb condition unmatched: {literal}")]
    KbCondUnmatched { step: usize, literal: Term },
    #[error("step {step}: effect failed: {source}")]
    EffectFailed {
        step: usize,
        #[source]
        source: EffectError,
    },
    #[error("goal not reached by the final state")]
    GoalNotReached,
}

impl Violation {
    pub fn step(&self) -> Option<usize> {
        match self {
            Violation::PriorStateMismatch { step }
            | Violation::UnsatisfiedValid { step, .. }
            | Violation::InvalidHolds { step, .. }
            | Violation::GoalProtection { step, .. }
            | Violation::KbCondUnmatched { step, .. }
            | Violation::EffectFailed { step, .. } => Some(*step),
            Violation::GoalNotReached => None,
        }
    }
}

/// Re-simulate every step, re-checking all four condition lists and effect
/// applicability; reports the first violation found.
pub fn validate(plan: &TotalOrderPlan, mode: GoalMode) -> Result<(), Violation> {
    let kb = plan.kb();
    let mut state = plan.init.clone();
    for step in &plan.steps {
        let idx = step.index;
        if state != step.prior_state {
            return Err(Violation::PriorStateMismatch { step: idx });
        }
        for lit in step.action.ground_valid() {
            let present = if lit.is_ground() {
                state.contains(&lit)
            } else {
                state
                    .literals()
                    .iter()
                    .any(|l| unify(&lit, l, &Substitution::empty()).is_some())
            };
            if !present {
                return Err(Violation::UnsatisfiedValid { step: idx, literal: lit });
            }
        }
        let inv = step.action.ground_invalid();
        for lit in &inv {
            if violates_any(std::slice::from_ref(lit), &state, &Substitution::empty()) {
                return Err(Violation::InvalidHolds { step: idx, literal: lit.clone() });
            }
        }
        for lit in step.action.ground_invalid_at_end() {
            if blocked_by_goal(std::slice::from_ref(&lit), &kb, &Substitution::empty()) {
                return Err(Violation::GoalProtection { step: idx, literal: lit });
            }
        }
        for lit in step.action.ground_kb_conds() {
            let hit = kb
                .facts
                .iter()
                .chain(kb.goal_literals.iter())
                .any(|e| unify(&lit, e, &Substitution::empty()).is_some());
            if !hit {
                return Err(Violation::KbCondUnmatched { step: idx, literal: lit });
            }
        }
        state = apply_effects(&state, &step.action.ground_effects())
            .map_err(|source| Violation::EffectFailed { step: idx, source })?;
        if state != step.next_state {
            return Err(Violation::PriorStateMismatch { step: idx });
        }
    }
    if !satisfies_goal(&state, &plan.goal, mode) {
        return Err(Violation::GoalNotReached);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON artifact
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum PlanIoError {
    #[error("bad plan json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad term in plan json: {0}")]
    Term(#[from] ParseError),
    #[error("bad plan json: {0}")]
    Malformed(String),
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    init: Vec<String>,
    goal: Vec<String>,
    kb_facts: Vec<String>,
    durations: BTreeMap<String, [String; 2]>,
    steps: Vec<StepJson>,
}

#[derive(Serialize, Deserialize)]
struct StepJson {
    index: usize,
    action: String,
    valid: Vec<String>,
    invalid: Vec<String>,
    invalid_at_end: Vec<String>,
    kb: Vec<String>,
    effects: Vec<EffectJson>,
    duration_bounds: [String; 2],
}

#[derive(Serialize, Deserialize)]
struct EffectJson {
    op: String,
    literal: String,
}

fn terms_to_strings(terms: &[Term]) -> Vec<String> {
    terms.iter().map(|t| t.to_string()).collect()
}

fn strings_to_terms(strings: &[String]) -> Result<Vec<Term>, ParseError> {
    strings.iter().map(|s| parse_term(s)).collect()
}

/// Serialize a plan (with the duration table used downstream) to JSON.
pub fn plan_to_json(plan: &TotalOrderPlan, durations: &DurationTable) -> String {
    let mut dur_map = BTreeMap::new();
    let mut steps = Vec::new();
    for step in &plan.steps {
        let (base, _) = step.action.snap().unwrap_or(("", crate::domain::SnapRole::Start));
        let bounds = durations.get(base);
        dur_map.insert(
            base.to_string(),
            [fmt_rational(bounds.lower), fmt_rational(bounds.upper)],
        );
        steps.push(StepJson {
            index: step.index,
            action: step.action.ground_name.to_string(),
            valid: terms_to_strings(&step.action.ground_valid()),
            invalid: terms_to_strings(&step.action.ground_invalid()),
            invalid_at_end: terms_to_strings(&step.action.ground_invalid_at_end()),
            kb: terms_to_strings(&step.action.ground_kb_conds()),
            effects: step
                .action
                .ground_effects()
                .iter()
                .map(|e| EffectJson {
                    op: match e.kind {
                        EffectKind::Add => "add".into(),
                        EffectKind::Del => "del".into(),
                    },
                    literal: e.literal.to_string(),
                })
                .collect(),
            duration_bounds: [fmt_rational(bounds.lower), fmt_rational(bounds.upper)],
        });
    }
    let doc = PlanJson {
        init: terms_to_strings(plan.init.literals()),
        goal: terms_to_strings(&plan.goal),
        kb_facts: terms_to_strings(&plan.kb_facts),
        durations: dur_map,
        steps,
    };
    serde_json::to_string_pretty(&doc).expect("plan serialization cannot fail")
}

/// Rebuild a plan (and the duration table it was exported with) from JSON.
/// Step states are recovered by replaying the effects from the initial state.
pub fn plan_from_json(text: &str) -> Result<(TotalOrderPlan, DurationTable), PlanIoError> {
    let doc: PlanJson = serde_json::from_str(text)?;
    let init = State::new(strings_to_terms(&doc.init)?)
        .map_err(|e| PlanIoError::Malformed(e.to_string()))?;
    let goal = strings_to_terms(&doc.goal)?;
    let kb_facts = strings_to_terms(&doc.kb_facts)?;

    let mut durations = DurationTable::default();
    for (base, [lo, hi]) in &doc.durations {
        let lower = crate::parse::parse_rational(lo)
            .ok_or_else(|| PlanIoError::Malformed(format!("bad rational '{lo}'")))?;
        let upper = crate::parse::parse_rational(hi)
            .ok_or_else(|| PlanIoError::Malformed(format!("bad rational '{hi}'")))?;
        durations.set(base, crate::domain::DurationBounds::new(lower, upper));
    }

    let mut steps = Vec::new();
    let mut state = init.clone();
    for (i, sj) in doc.steps.iter().enumerate() {
        if sj.index != i + 1 {
            return Err(PlanIoError::Malformed(format!(
                "step indices must be dense and 1-based, got {} at position {}",
                sj.index,
                i + 1
            )));
        }
        let mut effects = Vec::new();
        for ej in &sj.effects {
            let kind = match ej.op.as_str() {
                "add" => EffectKind::Add,
                "del" => EffectKind::Del,
                other => return Err(PlanIoError::Malformed(format!("bad effect op '{other}'"))),
            };
            effects.push(Effect { kind, literal: parse_term(&ej.literal)? });
        }
        let schema = ActionSchema {
            name: parse_term(&sj.action)?,
            valid: strings_to_terms(&sj.valid)?,
            invalid: strings_to_terms(&sj.invalid)?,
            invalid_at_end: strings_to_terms(&sj.invalid_at_end)?,
            kb_conds: strings_to_terms(&sj.kb)?,
            effects,
        };
        let action = GroundAction::new(Arc::new(schema), Substitution::empty());
        let next_state = apply_effects(&state, &action.ground_effects())
            .map_err(|e| PlanIoError::Malformed(format!("step {}: {e}", sj.index)))?;
        steps.push(PlanStep {
            index: sj.index,
            action,
            prior_state: state.clone(),
            next_state: next_state.clone(),
        });
        state = next_state;
    }

    Ok((TotalOrderPlan { steps, init, goal, kb_facts }, durations))
}
