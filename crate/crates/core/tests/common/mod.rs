//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)]

use tempoplan::domain::{DurationTable, GoalMode, StaticKb};
use tempoplan::parse::{parse_domain, parse_problem, DomainFile, ProblemFile};
use tempoplan::planner::{plan, plan_from_json, SearchConfig, TotalOrderPlan};

pub const BLOCKS_DOMAIN: &str = include_str!("../../../../samples/blocks/blocks.domain");
pub const TWO_AGENTS_PROBLEM: &str = include_str!("../../../../samples/blocks/two_agents.problem");
pub const STACK_TWO_PROBLEM: &str = include_str!("../../../../samples/blocks/stack_two.problem");
pub const UNSTACK_PROBLEM: &str = include_str!("../../../../samples/blocks/unstack.problem");
pub const STACK_THREE_PROBLEM: &str = include_str!("../../../../samples/blocks/stack_three.problem");
pub const EXAMPLE_GO_TESTS: &str = include_str!("../../../../samples/blocks/examples.problems");
pub const TWO_AGENTS_PLAN_JSON: &str = include_str!("../golden/two_agents_plan.json");

pub fn blocks_domain() -> DomainFile {
    parse_domain(BLOCKS_DOMAIN).expect("blocks domain parses")
}

pub fn problem(text: &str) -> ProblemFile {
    parse_problem(text).expect("problem parses")
}

pub fn kb_for(p: &ProblemFile) -> StaticKb {
    StaticKb::new(p.kb_facts.clone(), p.goal.clone())
}

pub fn solve(domain: &DomainFile, p: &ProblemFile, max_depth: usize) -> TotalOrderPlan {
    let cfg = SearchConfig { max_depth, goal_mode: GoalMode::Equality, node_budget: None };
    plan(p.init.clone(), p.goal.clone(), kb_for(p), domain, cfg).expect("plan found")
}

/// The two-agent/two-block total-order plan, encoded verbatim as a plan
/// artifact, with unit duration bounds.
pub fn two_agents_plan() -> (TotalOrderPlan, DurationTable) {
    plan_from_json(TWO_AGENTS_PLAN_JSON).expect("golden plan loads")
}

/// Every problem the golden suite runs end to end: (name, problem text,
/// snap-step count of the minimal plan).
pub fn golden_problems() -> Vec<(&'static str, &'static str, usize)> {
    vec![
        ("two_agents", TWO_AGENTS_PROBLEM, 8),
        ("stack_two", STACK_TWO_PROBLEM, 8),
        ("unstack", UNSTACK_PROBLEM, 8),
        ("stack_three", STACK_THREE_PROBLEM, 12),
    ]
}
