//! Pipeline driver: parse -> plan -> achievers -> STN -> consistency ->
//! schedule -> behavior tree -> simulate, with a re-plan loop on temporal
//! inconsistency, plus staged subcommands that compose through JSON/XML
//! artifacts on disk.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Rational64;

use tempoplan::bt::{
    bt_to_dot, emit_bt, parse_xml, serialize_xml, sim_report_to_json, simulate,
    strip_backward_edges,
};
use tempoplan::domain::{DurationBounds, DurationTable, GoalMode, StaticKb};
use tempoplan::llm::{
    build_prompt, load_example_tests, parse_response, score_against_reference, validate_testcase,
    blocks_world_arities, CurlTransport, LlmRequest, LlmTransport, PromptSpec, ReplayStore,
    SortRules,
};
use tempoplan::parse::{fmt_rational, parse_domain, parse_problem, parse_rational};
use tempoplan::planner::{plan_from_json, plan_to_json, validate, PlanIter, SearchConfig};
use tempoplan::stn::{
    achievers, build_stn, check_consistency, earliest_schedule, last_achievers, schedule_to_json,
    stn_from_json, stn_to_dot, stn_to_json, Consistency,
};

const EXIT_PARSE: u8 = 2;
const EXIT_NO_PLAN: u8 = 3;
const EXIT_INCONSISTENT: u8 = 4;
const EXIT_SIM_FAILURE: u8 = 5;

#[derive(Parser)]
#[command(name = "tempoplan", version, about = "Temporal multi-agent task planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GoalModeArg {
    Equality,
    Subset,
}

impl From<GoalModeArg> for GoalMode {
    fn from(v: GoalModeArg) -> GoalMode {
        match v {
            GoalModeArg::Equality => GoalMode::Equality,
            GoalModeArg::Subset => GoalMode::Subset,
        }
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Domain file (.domain)
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Problem file (.problem)
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Maximum plan length before the search backtracks
    #[arg(long)]
    max_depth: Option<usize>,
    /// Goal satisfaction test
    #[arg(long, value_enum)]
    goal_mode: Option<GoalModeArg>,
    /// Abort the search after this many node expansions
    #[arg(long)]
    node_budget: Option<u64>,
    /// Default duration bounds L:U for actions without an entry
    #[arg(long)]
    default_duration: Option<String>,
    /// Per-action override NAME=L:U (repeatable); bypasses file validation
    #[arg(long = "duration")]
    durations: Vec<String>,
    /// key=value config file; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline and write every artifact
    Run {
        #[command(flatten)]
        search: SearchArgs,
        /// Output directory for artifacts
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Re-plan attempts when the temporal network is inconsistent
        #[arg(long)]
        replan_attempts: Option<u32>,
        /// Simulation trials
        #[arg(long)]
        trials: Option<u32>,
        /// Simulation seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute a total-order plan and write it as JSON
    Plan {
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        json: PathBuf,
    },
    /// Build the STN from a plan artifact
    Stn {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        json: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Check consistency and compute the earliest schedule of an STN
    Schedule {
        #[arg(long)]
        stn: PathBuf,
        #[arg(long)]
        json: PathBuf,
    },
    /// Emit the behavior tree for a plan and its STN
    Bt {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        stn: PathBuf,
        #[arg(long)]
        xml: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Execute a behavior tree with stochastic durations
    Simulate {
        #[arg(long)]
        bt: PathBuf,
        /// Plan artifact supplying init, goal and duration bounds
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Render (and optionally send) a test-case generation prompt
    Prompt {
        /// File of `name :- go([...],[...]).` example clauses
        #[arg(long)]
        examples: PathBuf,
        /// Natural-language task appended to the examples
        #[arg(long, default_value = "")]
        task: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Send the prompt and print the response
        #[arg(long)]
        send: bool,
        /// Transport for --send
        #[arg(long, value_enum, default_value_t = LlmMode::Offline)]
        llm: LlmMode,
        /// Replay directory for the offline transport
        #[arg(long, default_value = "replays")]
        replay_dir: PathBuf,
        /// Endpoint URL for the live transport
        #[arg(long, default_value = "")]
        endpoint: String,
        /// Environment variable holding the API key
        #[arg(long, default_value = "TEMPOPLAN_LLM_KEY")]
        key_env: String,
        /// Model name sent with live requests
        #[arg(long, default_value = "gpt-4")]
        model: String,
    },
    /// Statically validate a model response containing a go(...) clause
    ValidateLlm {
        #[arg(long)]
        response: PathBuf,
        /// Optional reference test (first clause of a .problems file)
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LlmMode {
    Offline,
    Live,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.stage, e.message);
            ExitCode::from(e.code)
        }
    }
}

struct StageError {
    stage: &'static str,
    code: u8,
    message: String,
}

fn err(stage: &'static str, code: u8, message: impl ToString) -> StageError {
    StageError { stage, code, message: message.to_string() }
}

type StageResult<T> = Result<T, StageError>;

fn read(stage: &'static str, path: &Path) -> StageResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| err(stage, 1, format!("{}: {e}", path.display())))
}

fn write(stage: &'static str, path: &Path, content: &str) -> StageResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| err(stage, 1, format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content)
        .map_err(|e| err(stage, 1, format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_bounds(stage: &'static str, text: &str) -> StageResult<DurationBounds> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| err(stage, EXIT_PARSE, format!("bad bounds '{text}', expected L:U")))?;
    let lower = parse_rational(lo)
        .ok_or_else(|| err(stage, EXIT_PARSE, format!("bad rational '{lo}'")))?;
    let upper = parse_rational(hi)
        .ok_or_else(|| err(stage, EXIT_PARSE, format!("bad rational '{hi}'")))?;
    Ok(DurationBounds::new(lower, upper))
}

/// Effective per-run settings: config file first, explicit flags override.
struct Settings {
    domain: PathBuf,
    problem: PathBuf,
    cfg: SearchConfig,
    default_duration: Option<DurationBounds>,
    overrides: Vec<(String, DurationBounds)>,
    replan_attempts: u32,
    trials: u32,
    seed: u64,
}

fn resolve_settings(
    search: &SearchArgs,
    replan_attempts: Option<u32>,
    trials: Option<u32>,
    seed: Option<u64>,
) -> StageResult<Settings> {
    let mut file: std::collections::BTreeMap<String, String> = Default::default();
    if let Some(path) = &search.config {
        for (n, line) in read("config", path)?.lines().enumerate() {
            let line = line.split(['#', '%']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                err(
                    "config",
                    EXIT_PARSE,
                    format!("{}:{}: expected key=value", path.display(), n + 1),
                )
            })?;
            file.insert(k.trim().to_string(), v.trim().to_string());
        }
    }

    let from_file = |key: &str| file.get(key).cloned();
    let domain = search
        .domain
        .clone()
        .or_else(|| from_file("domain").map(PathBuf::from))
        .ok_or_else(|| err("config", EXIT_PARSE, "no domain file given"))?;
    let problem = search
        .problem
        .clone()
        .or_else(|| from_file("problem").map(PathBuf::from))
        .ok_or_else(|| err("config", EXIT_PARSE, "no problem file given"))?;

    let max_depth = match (search.max_depth, from_file("max_depth")) {
        (Some(v), _) => v,
        (None, Some(v)) => v
            .parse()
            .map_err(|_| err("config", EXIT_PARSE, format!("bad max_depth '{v}'")))?,
        (None, None) => SearchConfig::default().max_depth,
    };
    let goal_mode = match (&search.goal_mode, from_file("goal_mode")) {
        (Some(v), _) => (*v).into(),
        (None, Some(v)) => match v.as_str() {
            "equality" => GoalMode::Equality,
            "subset" => GoalMode::Subset,
            other => return Err(err("config", EXIT_PARSE, format!("bad goal_mode '{other}'"))),
        },
        (None, None) => GoalMode::Equality,
    };
    let node_budget = search
        .node_budget
        .or_else(|| from_file("node_budget").and_then(|v| v.parse().ok()));

    let mut default_duration = None;
    if let Some(text) = search
        .default_duration
        .clone()
        .or_else(|| from_file("default_duration"))
    {
        default_duration = Some(parse_bounds("config", &text)?);
    }
    let mut overrides = Vec::new();
    for (key, value) in &file {
        if let Some(name) = key.strip_prefix("duration.") {
            overrides.push((name.to_string(), parse_bounds("config", value)?));
        }
    }
    for entry in &search.durations {
        let (name, bounds) = entry.split_once('=').ok_or_else(|| {
            err("config", EXIT_PARSE, format!("bad --duration '{entry}', expected NAME=L:U"))
        })?;
        overrides.push((name.to_string(), parse_bounds("config", bounds)?));
    }

    let pick_u32 = |flag: Option<u32>, key: &str, fallback: u32| -> u32 {
        flag.or_else(|| from_file(key).and_then(|v| v.parse().ok())).unwrap_or(fallback)
    };
    Ok(Settings {
        domain,
        problem,
        cfg: SearchConfig { max_depth, goal_mode, node_budget },
        default_duration,
        overrides,
        replan_attempts: pick_u32(replan_attempts, "replan_attempts", 5).max(1),
        trials: pick_u32(trials, "trials", 20),
        seed: seed.or_else(|| from_file("seed").and_then(|v| v.parse().ok())).unwrap_or(0),
    })
}

struct LoadedProblem {
    domain: tempoplan::parse::DomainFile,
    problem: tempoplan::parse::ProblemFile,
    durations: DurationTable,
}

fn load_inputs(settings: &Settings) -> StageResult<LoadedProblem> {
    let domain_text = read("parse", &settings.domain)?;
    let mut domain = parse_domain(&domain_text)
        .map_err(|e| err("parse", EXIT_PARSE, format!("{}: {e}", settings.domain.display())))?;
    let problem_text = read("parse", &settings.problem)?;
    let problem = parse_problem(&problem_text)
        .map_err(|e| err("parse", EXIT_PARSE, format!("{}: {e}", settings.problem.display())))?;

    if let Some(bounds) = settings.default_duration {
        domain.durations.set_default(bounds);
    }
    for (name, bounds) in &settings.overrides {
        domain.durations.set(name, *bounds);
    }
    let durations = domain.durations.clone();
    Ok(LoadedProblem { domain, problem, durations })
}

fn print_makespan(makespan: Rational64) {
    println!("makespan {}", fmt_rational(makespan));
}

fn run(cli: Cli) -> StageResult<()> {
    match cli.command {
        Command::Run { search, out, replan_attempts, trials, seed } => {
            let settings = resolve_settings(&search, replan_attempts, trials, seed)?;
            run_pipeline(&settings, &out)
        }
        Command::Plan { search, json } => {
            let settings = resolve_settings(&search, None, None, None)?;
            let loaded = load_inputs(&settings)?;
            let kb = StaticKb::new(loaded.problem.kb_facts.clone(), loaded.problem.goal.clone());
            let found = tempoplan::planner::plan(
                loaded.problem.init.clone(),
                loaded.problem.goal.clone(),
                kb,
                &loaded.domain,
                settings.cfg.clone(),
            )
            .map_err(|e| err("plan", EXIT_NO_PLAN, e))?;
            for name in found.action_names() {
                println!("{name}");
            }
            write("plan", &json, &plan_to_json(&found, &loaded.durations))
        }
        Command::Stn { plan, json, dot } => {
            let (loaded_plan, durations) =
                plan_from_json(&read("stn", &plan)?).map_err(|e| err("stn", EXIT_PARSE, e))?;
            let full = achievers(&loaded_plan).map_err(|e| err("stn", 1, e))?;
            let la = last_achievers(&loaded_plan, &full);
            let stn = build_stn(&loaded_plan, &la, &durations).map_err(|e| err("stn", 1, e))?;
            write("stn", &json, &stn_to_json(&stn))?;
            if let Some(dot_path) = dot {
                write("stn", &dot_path, &stn_to_dot(&stn))?;
            }
            Ok(())
        }
        Command::Schedule { stn, json } => {
            let network = stn_from_json(&read("schedule", &stn)?)
                .map_err(|e| err("schedule", EXIT_PARSE, e))?;
            if let Consistency::NegativeCycle { witness } = check_consistency(&network) {
                let cycle: Vec<String> = witness
                    .iter()
                    .map(|e| format!("{}->{} ({})", e.from, e.to, fmt_rational(e.weight)))
                    .collect();
                return Err(err(
                    "schedule",
                    EXIT_INCONSISTENT,
                    format!("negative cycle: {}", cycle.join(", ")),
                ));
            }
            let schedule = earliest_schedule(&network).map_err(|e| err("schedule", 1, e))?;
            print_makespan(schedule.makespan);
            write("schedule", &json, &schedule_to_json(&network, &schedule))
        }
        Command::Bt { plan, stn, xml, dot } => {
            let (loaded_plan, _) =
                plan_from_json(&read("bt", &plan)?).map_err(|e| err("bt", EXIT_PARSE, e))?;
            let network =
                stn_from_json(&read("bt", &stn)?).map_err(|e| err("bt", EXIT_PARSE, e))?;
            let dag = strip_backward_edges(&network).map_err(|e| err("bt", 1, e))?;
            let tree = emit_bt(&dag, &loaded_plan).map_err(|e| err("bt", 1, e))?;
            write("bt", &xml, &serialize_xml(&tree))?;
            if let Some(dot_path) = dot {
                write("bt", &dot_path, &bt_to_dot(&tree))?;
            }
            Ok(())
        }
        Command::Simulate { bt, plan, trials, seed, json } => {
            let tree =
                parse_xml(&read("simulate", &bt)?).map_err(|e| err("simulate", EXIT_PARSE, e))?;
            let (loaded_plan, durations) = plan_from_json(&read("simulate", &plan)?)
                .map_err(|e| err("simulate", EXIT_PARSE, e))?;
            let report =
                simulate(&tree, &loaded_plan.init, &loaded_plan.goal, &durations, trials, seed);
            println!("simulated {trials} trials: {} reached the goal", report.successes);
            let rendered = sim_report_to_json(&report);
            if let Some(path) = json {
                write("simulate", &path, &rendered)?;
            } else {
                println!("{rendered}");
            }
            if report.successes < trials {
                return Err(err("simulate", EXIT_SIM_FAILURE, "some trials failed"));
            }
            Ok(())
        }
        Command::Prompt {
            examples,
            task,
            out,
            send,
            llm,
            replay_dir,
            endpoint,
            key_env,
            model,
        } => {
            let tests = load_example_tests(&read("prompt", &examples)?)
                .map_err(|e| err("prompt", EXIT_PARSE, e))?;
            let prompt =
                build_prompt(&PromptSpec { example_tests: tests, task_description: task });
            match &out {
                Some(path) => write("prompt", path, &prompt)?,
                None => print!("{prompt}"),
            }
            if send {
                let request = LlmRequest::new(model, prompt);
                let response = match llm {
                    LlmMode::Offline => ReplayStore::new(replay_dir).complete(&request),
                    LlmMode::Live => {
                        CurlTransport { endpoint, api_key_env: key_env }.complete(&request)
                    }
                }
                .map_err(|e| err("prompt", 1, e))?;
                println!("{response}");
            }
            Ok(())
        }
        Command::ValidateLlm { response, reference, json } => {
            let text = read("validate-llm", &response)?;
            let parsed = parse_response(&text).map_err(|e| err("validate-llm", EXIT_PARSE, e))?;
            for warning in &parsed.warnings {
                eprintln!("warning: {warning}");
            }
            let mut report =
                validate_testcase(&parsed.test, &blocks_world_arities(), &SortRules::default());
            if let Some(ref_path) = reference {
                let refs = load_example_tests(&read("validate-llm", &ref_path)?)
                    .map_err(|e| err("validate-llm", EXIT_PARSE, e))?;
                let reference_test = refs.into_iter().next().ok_or_else(|| {
                    err("validate-llm", EXIT_PARSE, "reference file has no tests")
                })?;
                let scored = score_against_reference(&parsed.test, &reference_test);
                report.predicate_errors += scored.predicate_errors;
                report.literal_errors += scored.literal_errors;
                report.issues.extend(scored.issues);
                report.success = report.success && scored.success;
            }
            let rendered = report.to_json();
            match json {
                Some(path) => write("validate-llm", &path, &rendered)?,
                None => println!("{rendered}"),
            }
            println!("success: {}", report.success);
            Ok(())
        }
    }
}

fn run_pipeline(settings: &Settings, out: &Path) -> StageResult<()> {
    let loaded = load_inputs(settings)?;
    let kb = StaticKb::new(loaded.problem.kb_facts.clone(), loaded.problem.goal.clone());
    let mut iter = PlanIter::new(
        loaded.problem.init.clone(),
        loaded.problem.goal.clone(),
        kb,
        &loaded.domain,
        settings.cfg.clone(),
    )
    .map_err(|e| err("plan", EXIT_NO_PLAN, e))?;

    let mut saw_inconsistency = false;
    for attempt in 1..=settings.replan_attempts {
        let Some(found) = iter.next() else {
            if saw_inconsistency {
                eprintln!(
                    "every remaining plan was temporally inconsistent; review the knowledge \
                     base (duration bounds and action conditions) for modeling errors"
                );
                return Err(err("stn", EXIT_INCONSISTENT, "no temporally consistent plan"));
            }
            let stats = iter.stats();
            return Err(err(
                "plan",
                EXIT_NO_PLAN,
                format!(
                    "no plan within depth {} ({} nodes expanded)",
                    settings.cfg.max_depth, stats.nodes_expanded
                ),
            ));
        };

        validate(&found, settings.cfg.goal_mode).map_err(|e| err("validate", 1, e))?;
        let full = achievers(&found).map_err(|e| err("stn", 1, e))?;
        let la = last_achievers(&found, &full);
        let stn = build_stn(&found, &la, &loaded.durations).map_err(|e| err("stn", 1, e))?;

        match check_consistency(&stn) {
            Consistency::NegativeCycle { witness } => {
                saw_inconsistency = true;
                let cycle: Vec<String> = witness
                    .iter()
                    .map(|e| {
                        format!(
                            "{} -> {} ({})",
                            stn.nodes[e.from].label,
                            stn.nodes[e.to].label,
                            fmt_rational(e.weight)
                        )
                    })
                    .collect();
                println!(
                    "attempt {attempt}/{}: temporal network inconsistent (cycle: {}); \
                     requesting the next plan",
                    settings.replan_attempts,
                    cycle.join(", ")
                );
                continue;
            }
            Consistency::Consistent => {}
        }

        println!("plan found on attempt {attempt}: {} snap steps", found.steps.len());
        let schedule = earliest_schedule(&stn).map_err(|e| err("schedule", 1, e))?;
        let dag = strip_backward_edges(&stn).map_err(|e| err("bt", 1, e))?;
        let tree = emit_bt(&dag, &found).map_err(|e| err("bt", 1, e))?;

        let sim_goal = match settings.cfg.goal_mode {
            GoalMode::Equality => found.goal.clone(),
            GoalMode::Subset => found.final_state().literals().to_vec(),
        };
        let report = simulate(
            &tree,
            &found.init,
            &sim_goal,
            &loaded.durations,
            settings.trials,
            settings.seed,
        );

        write("plan", &out.join("plan.json"), &plan_to_json(&found, &loaded.durations))?;
        write("stn", &out.join("stn.json"), &stn_to_json(&stn))?;
        write("stn", &out.join("stn.dot"), &stn_to_dot(&stn))?;
        write("schedule", &out.join("schedule.json"), &schedule_to_json(&stn, &schedule))?;
        write("bt", &out.join("bt.xml"), &serialize_xml(&tree))?;
        write("bt", &out.join("bt.dot"), &bt_to_dot(&tree))?;
        write("simulate", &out.join("sim_report.json"), &sim_report_to_json(&report))?;
        print_makespan(schedule.makespan);
        println!("simulated {} trials: {} reached the goal", settings.trials, report.successes);
        if report.successes < settings.trials {
            return Err(err("simulate", EXIT_SIM_FAILURE, "some trials failed"));
        }
        return Ok(());
    }

    eprintln!(
        "exhausted {} re-plan attempts with an inconsistent temporal network; there may be \
         an error inside the knowledge base (check duration bounds and action conditions)",
        settings.replan_attempts
    );
    Err(err("stn", EXIT_INCONSISTENT, "inconsistent after all re-plan attempts"))
}
