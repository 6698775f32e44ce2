//! Temporal multi-agent task planning.
//!
//! The pipeline: a logic-term domain description is parsed into action
//! schemas split into start/end snap actions; depth-bounded forward search
//! produces a total-order plan; achiever analysis strengthens it into a
//! Simple Temporal Network with duration bounds; consistency checking and
//! shortest-path scheduling produce dispatch times; and the consistent
//! network is emitted as an executable behavior tree. A companion module
//! builds generation prompts for populating test cases with a language model
//! and statically validates what comes back.

pub mod bt;
pub mod domain;
pub mod llm;
pub mod parse;
pub mod planner;
pub mod stn;
pub mod term;

pub use domain::{
    ActionSchema, DurationBounds, DurationTable, Effect, EffectKind, GoalMode, GroundAction,
    SnapRole, State, StaticKb,
};
pub use parse::{parse_domain, parse_problem, parse_term, DomainFile, ParseError, ProblemFile};
pub use planner::{plan, validate, PlanIter, PlanStep, SearchConfig, TotalOrderPlan};
pub use stn::{
    achievers, build_stn, check_consistency, earliest_schedule, last_achievers, minimize_makespan,
    AchieverMap, Consistency, Schedule, Stn,
};
pub use bt::{emit_bt, parse_xml, serialize_xml, simulate, strip_backward_edges, BtNode, SimReport};
pub use term::{unify, Substitution, Term, VarGen};
