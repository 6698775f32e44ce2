//! End-to-end pipeline runs over the sample blocks-world domain: plan,
//! achievers, STN, schedule, behavior tree, simulation.

mod common;

use common::*;
use tempoplan::bt::{emit_bt, serialize_xml, simulate, strip_backward_edges};
use tempoplan::domain::GoalMode;
use tempoplan::planner::validate;
use tempoplan::stn::{
    achievers, build_stn, check_consistency, earliest_schedule, last_achievers,
};

#[test]
fn first_enumerated_action_is_a_grip_start() {
    let domain = blocks_domain();
    let p = problem(TWO_AGENTS_PROBLEM);
    let kb = kb_for(&p);
    let actions = tempoplan::planner::applicable_actions(&p.init, &kb, &domain.schemas);
    assert!(!actions.is_empty());
    assert_eq!(actions[0].ground_name.functor(), Some("grip_start"));
}

#[test]
fn two_agent_problem_solves_in_eight_steps() {
    let domain = blocks_domain();
    let p = problem(TWO_AGENTS_PROBLEM);
    let plan = solve(&domain, &p, 8);
    assert_eq!(plan.steps.len(), 8, "plan: {:?}", plan.action_names());
    assert!(validate(&plan, GoalMode::Equality).is_ok());
}

#[test]
fn all_golden_problems_solve_and_validate() {
    let domain = blocks_domain();
    for (name, text, len) in golden_problems() {
        let p = problem(text);
        let plan = solve(&domain, &p, len);
        assert_eq!(plan.steps.len(), len, "{name}: {:?}", plan.action_names());
        assert!(validate(&plan, GoalMode::Equality).is_ok(), "{name} validates");
    }
}

#[test]
fn golden_plans_flow_to_consistent_schedules() {
    let domain = blocks_domain();
    for (name, text, len) in golden_problems() {
        let p = problem(text);
        let plan = solve(&domain, &p, len);
        let full = achievers(&plan).expect("achievers");
        let la = last_achievers(&plan, &full);
        let stn = build_stn(&plan, &la, &domain.durations).expect("stn builds");
        assert!(check_consistency(&stn).is_consistent(), "{name} stn consistent");
        let schedule = earliest_schedule(&stn).expect("schedule");
        assert!(schedule.makespan > num_rational::Rational64::from_integer(0), "{name}");
    }
}

#[test]
fn golden_plans_simulate_to_goal() {
    let domain = blocks_domain();
    for (name, text, len) in golden_problems() {
        let p = problem(text);
        let plan = solve(&domain, &p, len);
        let full = achievers(&plan).expect("achievers");
        let la = last_achievers(&plan, &full);
        let stn = build_stn(&plan, &la, &domain.durations).expect("stn builds");
        let dag = strip_backward_edges(&stn).expect("dag");
        let bt = emit_bt(&dag, &plan).expect("bt emits");
        let report = simulate(&bt, &plan.init, &plan.goal, &domain.durations, 20, 11);
        assert_eq!(
            report.successes, 20,
            "{name} failures: {:?}",
            report.failures
        );
        // byte-stable serialization
        assert_eq!(serialize_xml(&bt), serialize_xml(&bt));
    }
}

#[test]
fn staged_json_route_matches_direct_route() {
    use tempoplan::planner::{plan_from_json, plan_to_json};
    use tempoplan::stn::stn_to_json;

    let domain = blocks_domain();
    let p = problem(TWO_AGENTS_PROBLEM);
    let plan = solve(&domain, &p, 8);

    let direct_stn = {
        let full = achievers(&plan).unwrap();
        let la = last_achievers(&plan, &full);
        build_stn(&plan, &la, &domain.durations).unwrap()
    };

    let json = plan_to_json(&plan, &domain.durations);
    let (reloaded, durations) = plan_from_json(&json).unwrap();
    let staged_stn = {
        let full = achievers(&reloaded).unwrap();
        let la = last_achievers(&reloaded, &full);
        build_stn(&reloaded, &la, &durations).unwrap()
    };

    assert_eq!(stn_to_json(&direct_stn), stn_to_json(&staged_stn));
}
