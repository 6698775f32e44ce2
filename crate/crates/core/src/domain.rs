//! States, goals, the static knowledge base, action schemas, and effect
//! application.
//!
//! A state is an insertion-ordered list of ground literals with set
//! semantics for equality. Insertion order is semantically meaningful for
//! enumeration only: condition matching walks literals in list order, which
//! is what makes search results reproducible.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::Rational64;
use thiserror::Error;

use crate::term::{unify, Substitution, Term, VarGen};

pub const SNAP_START: &str = "_start";
pub const SNAP_END: &str = "_end";

/// Start/end half of a durative action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SnapRole {
    Start,
    End,
}

impl SnapRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            SnapRole::Start => "start",
            SnapRole::End => "end",
        }
    }
}

/// Split `grip_start` into `("grip", Start)`; `None` when the functor carries
/// neither suffix.
pub fn snap_parts(functor: &str) -> Option<(&str, SnapRole)> {
    if let Some(base) = functor.strip_suffix(SNAP_START) {
        Some((base, SnapRole::Start))
    } else {
        functor.strip_suffix(SNAP_END).map(|base| (base, SnapRole::End))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("non-ground literal in state: {0}")]
    NonGround(String),
    #[error("duplicate literal in state: {0}")]
    Duplicate(String),
}

/// An insertion-ordered, duplicate-free list of ground literals.
#[derive(Debug, Clone, Default, Hash)]
pub struct State {
    literals: Vec<Term>,
}

impl State {
    pub fn new(literals: Vec<Term>) -> Result<State, StateError> {
        let mut seen: Vec<&Term> = Vec::new();
        for lit in &literals {
            if !lit.is_ground() {
                return Err(StateError::NonGround(lit.to_string()));
            }
            if seen.contains(&lit) {
                return Err(StateError::Duplicate(lit.to_string()));
            }
            seen.push(lit);
        }
        Ok(State { literals })
    }

    pub fn literals(&self) -> &[Term] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn contains(&self, lit: &Term) -> bool {
        self.literals.contains(lit)
    }

    /// Sorted copy used for visited-set membership and equality.
    pub fn canonical(&self) -> Vec<Term> {
        let mut v = self.literals.clone();
        v.sort();
        v
    }
}

/// Set-semantics equality: two states are equal iff their canonical forms
/// are identical.
impl PartialEq for State {
    fn eq(&self, other: &State) -> bool {
        self.len() == other.len() && self.canonical() == other.canonical()
    }
}

impl Eq for State {}

pub fn states_equal(a: &State, b: &State) -> bool {
    a == b
}

/// How a state is tested against the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GoalMode {
    /// The state must equal the goal literal set exactly.
    #[default]
    Equality,
    /// Every goal literal must hold; extra literals are allowed.
    Subset,
}

pub fn satisfies_goal(state: &State, goal: &[Term], mode: GoalMode) -> bool {
    match mode {
        GoalMode::Equality => {
            state.len() == goal.len() && goal.iter().all(|g| state.contains(g))
        }
        GoalMode::Subset => goal.iter().all(|g| state.contains(g)),
    }
}

/// Static facts (`pos(X,Y)` and friends) plus the goal literals, which are
/// injected into the kb so that kb conditions can ground action variables
/// against goal placements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StaticKb {
    pub facts: Vec<Term>,
    pub goal_literals: Vec<Term>,
}

impl StaticKb {
    pub fn new(facts: Vec<Term>, goal_literals: Vec<Term>) -> StaticKb {
        StaticKb { facts, goal_literals }
    }

    fn entries(&self) -> impl Iterator<Item = &Term> {
        self.facts.iter().chain(self.goal_literals.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectKind {
    Add,
    Del,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Effect {
    pub kind: EffectKind,
    pub literal: Term,
}

impl Effect {
    pub fn add(literal: Term) -> Effect {
        Effect { kind: EffectKind::Add, literal }
    }

    pub fn del(literal: Term) -> Effect {
        Effect { kind: EffectKind::Del, literal }
    }
}

/// The six-field action template: a name pattern, four condition lists, and
/// the effect list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: Term,
    /// Conditions that must hold in the current state.
    pub valid: Vec<Term>,
    /// Conditions that must not hold in the current state.
    pub invalid: Vec<Term>,
    /// Goal-protection list: the action is pruned if any of these unifies
    /// with a goal literal.
    pub invalid_at_end: Vec<Term>,
    /// Conditions grounded against the static kb (facts, then goal).
    pub kb_conds: Vec<Term>,
    pub effects: Vec<Effect>,
}

impl ActionSchema {
    /// All fields bundled into one term, so alpha-equivalence comparisons see
    /// variable sharing across fields.
    pub fn as_tuple_term(&self) -> Term {
        let mut args = vec![self.name.clone()];
        args.extend(self.valid.iter().cloned());
        args.extend(self.invalid.iter().cloned());
        args.extend(self.invalid_at_end.iter().cloned());
        args.extend(self.kb_conds.iter().cloned());
        for e in &self.effects {
            let op = match e.kind {
                EffectKind::Add => "add",
                EffectKind::Del => "del",
            };
            args.push(Term::compound(op, vec![e.literal.clone()]));
        }
        Term::compound("schema", args)
    }

    /// Copy with all variables renamed to fresh ids.
    pub fn rename_apart(&self, gen: &mut VarGen) -> ActionSchema {
        let mut map = BTreeMap::new();
        ActionSchema {
            name: self.name.rename_with(gen, &mut map),
            valid: self.valid.iter().map(|t| t.rename_with(gen, &mut map)).collect(),
            invalid: self.invalid.iter().map(|t| t.rename_with(gen, &mut map)).collect(),
            invalid_at_end: self
                .invalid_at_end
                .iter()
                .map(|t| t.rename_with(gen, &mut map))
                .collect(),
            kb_conds: self.kb_conds.iter().map(|t| t.rename_with(gen, &mut map)).collect(),
            effects: self
                .effects
                .iter()
                .map(|e| Effect { kind: e.kind, literal: e.literal.rename_with(gen, &mut map) })
                .collect(),
        }
    }
}

/// Lower/upper duration bounds of a durative action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DurationBounds {
    pub lower: Rational64,
    pub upper: Rational64,
}

impl DurationBounds {
    pub fn new(lower: Rational64, upper: Rational64) -> DurationBounds {
        DurationBounds { lower, upper }
    }

    pub fn integer(lower: i64, upper: i64) -> DurationBounds {
        DurationBounds {
            lower: Rational64::from_integer(lower),
            upper: Rational64::from_integer(upper),
        }
    }
}

/// Duration bounds per durative-action functor (the name without
/// `_start`/`_end`); unlisted actions fall back to the default bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationTable {
    entries: BTreeMap<String, DurationBounds>,
    default: DurationBounds,
}

impl Default for DurationTable {
    fn default() -> DurationTable {
        DurationTable { entries: BTreeMap::new(), default: DurationBounds::integer(1, 10) }
    }
}

impl DurationTable {
    pub fn new(default: DurationBounds) -> DurationTable {
        DurationTable { entries: BTreeMap::new(), default }
    }

    pub fn set(&mut self, base: &str, bounds: DurationBounds) {
        self.entries.insert(base.to_string(), bounds);
    }

    pub fn get(&self, base: &str) -> DurationBounds {
        self.entries.get(base).copied().unwrap_or(self.default)
    }

    pub fn default_bounds(&self) -> DurationBounds {
        self.default
    }

    pub fn set_default(&mut self, bounds: DurationBounds) {
        self.default = bounds;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, DurationBounds)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// A fully instantiated snap action: the schema it came from, the recorded
/// bindings, and the ground name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub schema: Arc<ActionSchema>,
    pub binding: Substitution,
    pub ground_name: Term,
}

impl GroundAction {
    pub fn new(schema: Arc<ActionSchema>, binding: Substitution) -> GroundAction {
        let ground_name = binding.apply(&schema.name);
        GroundAction { schema, binding, ground_name }
    }

    pub fn ground_valid(&self) -> Vec<Term> {
        self.schema.valid.iter().map(|t| self.binding.apply(t)).collect()
    }

    pub fn ground_invalid(&self) -> Vec<Term> {
        self.schema.invalid.iter().map(|t| self.binding.apply(t)).collect()
    }

    pub fn ground_invalid_at_end(&self) -> Vec<Term> {
        self.schema.invalid_at_end.iter().map(|t| self.binding.apply(t)).collect()
    }

    pub fn ground_kb_conds(&self) -> Vec<Term> {
        self.schema.kb_conds.iter().map(|t| self.binding.apply(t)).collect()
    }

    pub fn ground_effects(&self) -> Vec<Effect> {
        self.schema
            .effects
            .iter()
            .map(|e| Effect { kind: e.kind, literal: self.binding.apply(&e.literal) })
            .collect()
    }

    /// Base functor and snap role of the ground name.
    pub fn snap(&self) -> Option<(&str, SnapRole)> {
        self.ground_name.functor().and_then(snap_parts)
    }
}

// ---------------------------------------------------------------------------
// Condition matching
// ---------------------------------------------------------------------------

/// Enumerate every extension of `s` under which each condition unifies with
/// some distinct state literal. Conditions are matched left to right and
/// state literals in list order, so the binding sequence is deterministic.
pub fn satisfy_all<'a>(
    conds: &'a [Term],
    state: &'a State,
    s: &Substitution,
) -> impl Iterator<Item = Substitution> + 'a {
    MatchIter::new(conds, state.literals(), s.clone(), true)
}

/// Like [`satisfy_all`] but over the static kb: facts first, then goal
/// literals, in declaration order. The same entry may satisfy several
/// conditions.
pub fn ground_via_kb<'a>(
    conds: &'a [Term],
    kb: &'a StaticKb,
    s: &Substitution,
) -> impl Iterator<Item = Substitution> + 'a {
    let entries: Vec<&Term> = kb.entries().collect();
    MatchIter::with_entries(conds, entries, s.clone(), false)
}

/// True iff some condition (remaining variables existential) unifies with
/// some state literal.
pub fn violates_any(conds: &[Term], state: &State, s: &Substitution) -> bool {
    conds
        .iter()
        .any(|c| state.literals().iter().any(|lit| unify(c, lit, s).is_some()))
}

/// True iff some condition unifies with a goal literal: the action would
/// disturb an already-specified goal fact and must be pruned.
pub fn blocked_by_goal(conds: &[Term], kb: &StaticKb, s: &Substitution) -> bool {
    conds
        .iter()
        .any(|c| kb.goal_literals.iter().any(|g| unify(c, g, s).is_some()))
}

/// Backtracking join of a condition list against a literal list.
struct MatchIter<'a> {
    conds: &'a [Term],
    literals: Vec<&'a Term>,
    /// frame per matched condition: (cursor into literals, substitution
    /// before this condition, literal index consumed)
    frames: Vec<Frame>,
    distinct: bool,
    done: bool,
}

struct Frame {
    cursor: usize,
    subst: Substitution,
    used: Option<usize>,
}

impl<'a> MatchIter<'a> {
    fn new(conds: &'a [Term], literals: &'a [Term], s: Substitution, distinct: bool) -> Self {
        MatchIter::with_entries(conds, literals.iter().collect(), s, distinct)
    }

    fn with_entries(
        conds: &'a [Term],
        literals: Vec<&'a Term>,
        s: Substitution,
        distinct: bool,
    ) -> Self {
        MatchIter {
            conds,
            literals,
            frames: vec![Frame { cursor: 0, subst: s, used: None }],
            distinct,
            done: false,
        }
    }

    fn is_used(&self, lit_idx: usize) -> bool {
        self.distinct && self.frames.iter().any(|f| f.used == Some(lit_idx))
    }
}

impl Iterator for MatchIter<'_> {
    type Item = Substitution;

    fn next(&mut self) -> Option<Substitution> {
        if self.done {
            return None;
        }
        loop {
            let depth = self.frames.len() - 1;
            if depth == self.conds.len() {
                // all conditions matched: yield, then backtrack
                let out = self.frames.pop().expect("frame").subst;
                if self.frames.is_empty() {
                    self.done = true;
                }
                return Some(out);
            }
            let cond = &self.conds[depth];
            let frame = self.frames.last().expect("frame");
            let base = frame.subst.clone();
            let mut cursor = frame.cursor;
            let mut matched = None;
            while cursor < self.literals.len() {
                if !self.is_used(cursor) {
                    if let Some(s2) = unify(cond, self.literals[cursor], &base) {
                        matched = Some((cursor, s2));
                        break;
                    }
                }
                cursor += 1;
            }
            match matched {
                Some((idx, s2)) => {
                    let frame = self.frames.last_mut().expect("frame");
                    frame.cursor = idx + 1;
                    frame.used = Some(idx);
                    self.frames.push(Frame { cursor: 0, subst: s2, used: None });
                }
                None => {
                    self.frames.pop();
                    if self.frames.is_empty() {
                        self.done = true;
                        return None;
                    }
                    // parent resumes at its own cursor; clear its consumed slot
                    self.frames.last_mut().expect("frame").used = None;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Effects
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EffectError {
    #[error("del target absent from state: {0}")]
    DelMissing(String),
    #[error("add target already present: {0}")]
    AddDuplicate(String),
}

/// Apply effects in list order: `del` removes the matching literal, `add`
/// appends at the tail so the surviving literal order stays stable across a
/// plan. A non-ground del removes the first unifying literal.
pub fn apply_effects(state: &State, effects: &[Effect]) -> Result<State, EffectError> {
    let mut lits = state.literals().to_vec();
    for eff in effects {
        match eff.kind {
            EffectKind::Del => {
                let idx = if eff.literal.is_ground() {
                    lits.iter().position(|l| *l == eff.literal)
                } else {
                    eprintln!("warning: non-ground del {}; removing first unifying literal", eff.literal);
                    lits.iter().position(|l| unify(&eff.literal, l, &Substitution::empty()).is_some())
                };
                match idx {
                    Some(i) => {
                        lits.remove(i);
                    }
                    None => return Err(EffectError::DelMissing(eff.literal.to_string())),
                }
            }
            EffectKind::Add => {
                if lits.contains(&eff.literal) {
                    return Err(EffectError::AddDuplicate(eff.literal.to_string()));
                }
                lits.push(eff.literal.clone());
            }
        }
    }
    Ok(State { literals: lits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_term, parse_term_with};

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn state(lits: &[&str]) -> State {
        State::new(lits.iter().map(|s| t(s)).collect()).unwrap()
    }

    #[test]
    fn satisfy_all_clause_order() {
        let mut gen = VarGen::new();
        let conds = vec![parse_term_with("available(A)", &mut gen).unwrap()];
        let st = state(&["available(a2)", "available(a1)"]);
        let out: Vec<Term> = satisfy_all(&conds, &st, &Substitution::empty())
            .map(|s| s.apply(&conds[0]))
            .collect();
        assert_eq!(out, vec![t("available(a2)"), t("available(a1)")]);
    }

    #[test]
    fn satisfy_all_empty_conds_yields_one_binding() {
        let st = state(&["clear(b1)"]);
        let out: Vec<_> = satisfy_all(&[], &st, &Substitution::empty()).collect();
        assert_eq!(out.len(), 1);
        assert!(out[0].is_empty());
    }

    #[test]
    fn satisfy_all_absent_literal_empty_stream() {
        let st = state(&[
            "available(a1)",
            "available(a2)",
            "ontable(b1,1,1)",
            "ontable(b2,2,2)",
            "clear(b1)",
            "clear(b2)",
        ]);
        let conds = vec![t("clear(b9)")];
        assert_eq!(satisfy_all(&conds, &st, &Substitution::empty()).count(), 0);
    }

    #[test]
    fn satisfy_all_distinct_literals() {
        // two conditions cannot consume the same literal
        let mut gen = VarGen::new();
        let conds = parse_term_with("c(available(A),available(B))", &mut gen)
            .unwrap()
            .args()
            .to_vec();
        let st = state(&["available(a1)"]);
        assert_eq!(satisfy_all(&conds, &st, &Substitution::empty()).count(), 0);
        let st2 = state(&["available(a1)", "available(a2)"]);
        assert_eq!(satisfy_all(&conds, &st2, &Substitution::empty()).count(), 2);
    }

    #[test]
    fn violates_any_grip_listing() {
        let mut gen = VarGen::new();
        let pat = parse_term_with("c(gripped(_,B),gripping(_,B),B)", &mut gen).unwrap();
        let args = pat.args();
        let conds = vec![args[0].clone(), args[1].clone()];
        let b_var = args[2].clone();
        let s = unify(&b_var, &t("b2"), &Substitution::empty()).unwrap();
        let st = state(&["gripping(a1,b2)"]);
        assert!(violates_any(&conds, &st, &s));
        assert!(!violates_any(&[], &st, &Substitution::empty()));
        let st2 = state(&["clear(b1)"]);
        let mut gen2 = VarGen::new();
        let moving = parse_term_with("moving(A,B,_,_,_,_)", &mut gen2).unwrap();
        assert!(!violates_any(&[moving], &st2, &Substitution::empty()));
    }

    #[test]
    fn blocked_by_goal_examples() {
        let kb = StaticKb::new(vec![], vec![t("ontable(b1,2,2)")]);
        assert!(blocked_by_goal(&[t("ontable(b1,2,2)")], &kb, &Substitution::empty()));
        assert!(!blocked_by_goal(&[], &kb, &Substitution::empty()));
        assert!(!blocked_by_goal(&[t("ontable(b1,1,1)")], &kb, &Substitution::empty()));
    }

    #[test]
    fn ground_via_kb_declaration_order() {
        let mut gen = VarGen::new();
        let cond = parse_term_with("pos(X2,Y2)", &mut gen).unwrap();
        let kb = StaticKb::new(vec![t("pos(3,3)"), t("pos(4,4)")], vec![]);
        let out: Vec<Term> = ground_via_kb(std::slice::from_ref(&cond), &kb, &Substitution::empty())
            .map(|s| s.apply(&cond))
            .collect();
        assert_eq!(out, vec![t("pos(3,3)"), t("pos(4,4)")]);
    }

    #[test]
    fn ground_via_kb_reaches_goal_literals() {
        let mut gen = VarGen::new();
        let cond = parse_term_with("on(b1,b2,X,Y)", &mut gen).unwrap();
        let kb = StaticKb::new(vec![t("pos(9,9)")], vec![t("on(b1,b2,3,3)")]);
        let out: Vec<Term> = ground_via_kb(std::slice::from_ref(&cond), &kb, &Substitution::empty())
            .map(|s| s.apply(&cond))
            .collect();
        assert_eq!(out, vec![t("on(b1,b2,3,3)")]);
        // empty condition list: single empty extension
        assert_eq!(ground_via_kb(&[], &kb, &Substitution::empty()).count(), 1);
    }

    #[test]
    fn apply_effects_grip_listing() {
        let st = state(&["available(a1)", "ontable(b1,1,1)", "clear(b1)"]);
        let out = apply_effects(
            &st,
            &[Effect::del(t("available(a1)")), Effect::add(t("gripping(a1,b1)"))],
        )
        .unwrap();
        assert_eq!(
            out.literals(),
            &[t("ontable(b1,1,1)"), t("clear(b1)"), t("gripping(a1,b1)")]
        );
    }

    #[test]
    fn apply_effects_empty_keeps_state() {
        let st = state(&["clear(b1)"]);
        assert_eq!(apply_effects(&st, &[]).unwrap(), st);
    }

    #[test]
    fn apply_effects_errors() {
        let st = state(&["clear(b1)"]);
        assert!(matches!(
            apply_effects(&st, &[Effect::del(t("clear(b2)"))]),
            Err(EffectError::DelMissing(_))
        ));
        assert!(matches!(
            apply_effects(&st, &[Effect::add(t("clear(b1)"))]),
            Err(EffectError::AddDuplicate(_))
        ));
    }

    #[test]
    fn add_then_del_restores_state() {
        let st = state(&["clear(b1)", "available(a1)"]);
        let p = t("gripping(a1,b1)");
        let added = apply_effects(&st, &[Effect::add(p.clone())]).unwrap();
        let back = apply_effects(&added, &[Effect::del(p)]).unwrap();
        assert_eq!(back, st);
    }

    #[test]
    fn states_equal_is_set_semantics() {
        let a = state(&["clear(b1)", "available(a1)"]);
        let b = state(&["available(a1)", "clear(b1)"]);
        assert!(states_equal(&a, &b));
        let c = state(&["available(a1)", "clear(b2)"]);
        assert!(!states_equal(&a, &c));
    }

    #[test]
    fn goal_modes() {
        let st = state(&["clear(b1)", "available(a1)"]);
        let goal = vec![t("clear(b1)")];
        assert!(!satisfies_goal(&st, &goal, GoalMode::Equality));
        assert!(satisfies_goal(&st, &goal, GoalMode::Subset));
    }

    #[test]
    fn satisfy_all_is_deterministic() {
        let mut gen = VarGen::new();
        let conds = parse_term_with("c(available(A),ontable(B,X,Y),clear(B))", &mut gen)
            .unwrap()
            .args()
            .to_vec();
        let st = state(&[
            "available(a2)",
            "available(a1)",
            "ontable(b1,1,1)",
            "ontable(b2,2,2)",
            "clear(b2)",
            "clear(b1)",
        ]);
        let run = || -> Vec<String> {
            satisfy_all(&conds, &st, &Substitution::empty())
                .map(|s| conds.iter().map(|c| s.apply(c).to_string()).collect::<Vec<_>>().join(";"))
                .collect()
        };
        let first = run();
        assert!(!first.is_empty());
        assert_eq!(first, run());
    }

    #[test]
    fn duration_table_default_and_entries() {
        let mut table = DurationTable::default();
        assert_eq!(table.get("grip"), DurationBounds::integer(1, 10));
        table.set("grip", DurationBounds::integer(1, 2));
        assert_eq!(table.get("grip"), DurationBounds::integer(1, 2));
        assert_eq!(table.get("move_block"), DurationBounds::integer(1, 10));
    }
}
