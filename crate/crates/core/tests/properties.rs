//! Property-based checks: unification laws, parser totality, effect
//! round-trips, planner soundness on random instances, and STN widening.

mod common;

use common::*;
use num_rational::Rational64;
use proptest::prelude::*;

use tempoplan::bt::{emit_bt, strip_backward_edges};
use tempoplan::domain::{
    apply_effects, DurationBounds, DurationTable, Effect, GoalMode, State, StaticKb,
};
use tempoplan::parse::{parse_domain, parse_problem, parse_term};
use tempoplan::planner::{plan, validate, SearchConfig};
use tempoplan::stn::{achievers, build_stn, check_consistency, last_achievers};
use tempoplan::term::{unify, unify_with, Substitution, Term, VarGen};

fn term_strategy() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        prop_oneof![Just("a1"), Just("b1"), Just("c")].prop_map(Term::atom),
        (0..5i64).prop_map(Term::int),
        (0..3u64).prop_map(|i| Term::var(format!("V{i}"), i)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        (
            prop_oneof![Just("f"), Just("g"), Just("on")],
            prop::collection::vec(inner, 1..=3),
        )
            .prop_map(|(f, args)| Term::compound(f, args))
    })
}

proptest! {
    #[test]
    fn printed_terms_reparse(t in term_strategy()) {
        let text = t.to_string();
        let back = parse_term(&text).unwrap();
        prop_assert!(back.alpha_eq(&t), "{text} reparsed as {back}");
    }

    #[test]
    fn unifier_makes_terms_equal(a in term_strategy(), b in term_strategy()) {
        if let Some(s) = unify_with(&a, &b, &Substitution::empty(), true) {
            prop_assert_eq!(s.apply(&a), s.apply(&b));
        }
    }

    #[test]
    fn unify_success_is_symmetric(a in term_strategy(), b in term_strategy()) {
        let ab = unify(&a, &b, &Substitution::empty()).is_some();
        let ba = unify(&b, &a, &Substitution::empty()).is_some();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn renaming_apart_preserves_satisfiability(a in term_strategy(), b in term_strategy()) {
        let mut gen = VarGen::starting_at(1000);
        let a2 = a.rename_apart(&mut gen);
        let direct = unify(&a2, &b, &Substitution::empty()).is_some();
        // `b` untouched: renaming only separates variables shared with `a`,
        // which never reduces satisfiability
        let shared = unify(&a, &b, &Substitution::empty()).is_some();
        prop_assert!(!shared || direct, "renaming apart lost a unifier");
    }

    #[test]
    fn domain_parser_is_total(text in "\\PC*") {
        let _ = parse_domain(&text);
    }

    #[test]
    fn domain_parser_is_total_on_grammar_soup(
        parts in prop::collection::vec(
            prop_oneof![
                Just("action"), Just("durations"), Just("{"), Just("}"), Just("["), Just("]"),
                Just("("), Just(")"), Just(","), Just(":"), Just("."), Just(":-"),
                Just("valid:"), Just("invalid:"), Just("goal_block:"), Just("kb:"),
                Just("effects:"), Just("add"), Just("del"), Just("grip_start(A,B)"),
                Just("ontable(B,X,Y)"), Just("1"), Just("2.5"), Just("% note\n"), Just(" "),
            ],
            0..40,
        )
    ) {
        let text: String = parts.concat();
        let _ = parse_domain(&text);
        let _ = parse_problem(&text);
    }

    #[test]
    fn add_then_del_is_identity(
        names in prop::collection::btree_set("[a-d][1-3]", 1..4),
        extra in "[e-h][1-3]",
    ) {
        let lits: Vec<Term> = names
            .iter()
            .map(|n| Term::compound("clear", vec![Term::atom(n.clone())]))
            .collect();
        let state = State::new(lits).unwrap();
        let p = Term::compound("clear", vec![Term::atom(extra)]);
        if !state.contains(&p) {
            let there = apply_effects(&state, &[Effect::add(p.clone())]).unwrap();
            let back = apply_effects(&there, &[Effect::del(p)]).unwrap();
            prop_assert_eq!(back, state);
        }
    }
}

/// Coherent random blocks-world instance: blocks partitioned into stacks at
/// distinct positions, agents available. Returns (init literals, goal
/// literals) built from two independent layouts of the same blocks.
fn instance_strategy() -> impl Strategy<Value = (Vec<Term>, Vec<Term>, usize)> {
    let layout = |blocks: Vec<String>, positions: Vec<(i64, i64)>| -> Vec<Term> {
        let mut lits = Vec::new();
        let mut pos_iter = positions.into_iter();
        let mut stack: Vec<String> = Vec::new();
        let flush = |stack: &mut Vec<String>, lits: &mut Vec<Term>, pos: (i64, i64)| {
            for (i, b) in stack.iter().enumerate() {
                if i == 0 {
                    lits.push(
                        parse_term(&format!("ontable({b},{},{})", pos.0, pos.1)).unwrap(),
                    );
                } else {
                    lits.push(
                        parse_term(&format!("on({b},{},{},{})", stack[i - 1], pos.0, pos.1))
                            .unwrap(),
                    );
                }
            }
            if let Some(top) = stack.last() {
                lits.push(parse_term(&format!("clear({top})")).unwrap());
            }
            stack.clear();
        };
        for (i, b) in blocks.iter().enumerate() {
            stack.push(b.clone());
            // break the stack pseudo-randomly but deterministically
            if (i * 7 + blocks.len()) % 3 == 0 {
                let pos = pos_iter.next().expect("enough positions");
                flush(&mut stack, &mut lits, pos);
            }
        }
        if !stack.is_empty() {
            let pos = pos_iter.next().expect("enough positions");
            flush(&mut stack, &mut lits, pos);
        }
        lits
    };

    (2usize..=3, 1usize..=2).prop_flat_map(move |(nblocks, nagents)| {
        let blocks: Vec<String> = (1..=nblocks).map(|i| format!("b{i}")).collect();
        let blocks2 = blocks.clone();
        (
            Just(blocks),
            proptest::sample::subsequence(
                vec![(1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (6, 6)],
                nblocks..=nblocks,
            ),
            Just(blocks2).prop_shuffle(),
            proptest::sample::subsequence(
                vec![(1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (6, 6)],
                nblocks..=nblocks,
            ),
            Just(nagents),
        )
            .prop_map(move |(blocks, init_pos, goal_blocks, goal_pos, nagents)| {
                let agents: Vec<Term> = (1..=nagents)
                    .map(|i| parse_term(&format!("available(a{i})")).unwrap())
                    .collect();
                let mut init = agents.clone();
                init.extend(layout(blocks, init_pos));
                let mut goal = agents;
                goal.extend(layout(goal_blocks, goal_pos));
                (init, goal, nagents)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    /// Soundness: whatever the search returns on a random instance validates,
    /// and its strengthened network stays consistent and emits a tree. When
    /// the search exhausts, a breadth-first enumeration agrees that no plan
    /// exists within the depth bound (path pruning loses no solutions).
    #[test]
    fn random_instances_plan_soundly((init, goal, _) in instance_strategy()) {
        use tempoplan::domain::{apply_effects, satisfies_goal};
        use tempoplan::planner::{applicable_actions, PlanFailure};

        let domain = blocks_domain();
        let init = State::new(init).unwrap();
        let kb = StaticKb::new(vec![], goal.clone());
        let max_depth = 12;
        let cfg = SearchConfig {
            max_depth,
            goal_mode: GoalMode::Equality,
            node_budget: Some(30_000),
        };
        match plan(init.clone(), goal.clone(), kb.clone(), &domain, cfg) {
            Ok(found) => {
                prop_assert!(validate(&found, GoalMode::Equality).is_ok());
                let full = achievers(&found).unwrap();
                let la = last_achievers(&found, &full);
                let stn = build_stn(&found, &la, &domain.durations).unwrap();
                prop_assert!(check_consistency(&stn).is_consistent());
                let dag = strip_backward_edges(&stn).unwrap();
                let bt = emit_bt(&dag, &found).unwrap();
                prop_assert_eq!(bt.action_leaves().len(), found.steps.len());
            }
            Err(PlanFailure::Exhausted(_)) => {
                // breadth-first cross-check with a global visited set
                let mut frontier = vec![init];
                let mut visited = vec![frontier[0].canonical()];
                for _ in 0..=max_depth {
                    prop_assert!(
                        !frontier.iter().any(|s| satisfies_goal(s, &goal, GoalMode::Equality)),
                        "search exhausted although a plan exists within the bound"
                    );
                    let mut next = Vec::new();
                    for state in &frontier {
                        for action in applicable_actions(state, &kb, &domain.schemas) {
                            let Ok(child) = apply_effects(state, &action.ground_effects()) else {
                                continue;
                            };
                            let canon = child.canonical();
                            if !visited.contains(&canon) {
                                visited.push(canon);
                                next.push(child);
                            }
                        }
                    }
                    frontier = next;
                }
            }
            Err(_) => {} // budget hit; nothing to cross-check
        }
    }

    /// Widening a duration interval never breaks consistency.
    #[test]
    fn widening_keeps_consistency(grow_lo in 0i64..=1, grow_hi in 0i64..=20) {
        let (plan, _) = two_agents_plan();
        let full = achievers(&plan).unwrap();
        let la = last_achievers(&plan, &full);

        let mut base = DurationTable::new(DurationBounds::integer(1, 2));
        base.set("grip", DurationBounds::integer(1, 2));
        base.set("move_block", DurationBounds::integer(3, 5));
        let stn = build_stn(&plan, &la, &base).unwrap();
        prop_assert!(check_consistency(&stn).is_consistent());

        let mut widened = DurationTable::new(DurationBounds::integer(1, 2));
        for (name, b) in base.entries() {
            widened.set(
                name,
                DurationBounds::new(
                    (b.lower - Rational64::from_integer(grow_lo)).max(Rational64::from_integer(0)),
                    b.upper + Rational64::from_integer(grow_hi),
                ),
            );
        }
        let wider = build_stn(&plan, &la, &widened).unwrap();
        prop_assert!(check_consistency(&wider).is_consistent());
    }
}
