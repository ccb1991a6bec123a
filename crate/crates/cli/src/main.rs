mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use olp_bench::matrix::{records_jsonl, run_matrix, Harness, MatrixConfig, Timing};
use olp_bench::metrics::aggregate_all;
use olp_bench::report::{emit_report, Format};
use olp_bench::scripted::ScriptedResponder;
use olp_core::foon::{parse_olp_json, serialize_olp, ObjectLevelPlan};
use olp_core::grounding::{scene_objects, subgoal_problem_from_state, AliasBinding, GeomThresholds, GroundingError};
use olp_core::pddl::{builtin_blockworld_domain, ground, print_problem, ActionCall, Problem};
use olp_core::planner::{astar, format_plan, parse_plan_text, progress, LmCut};
use olp_core::scene::SceneState;
use olp_core::simulator::{BlockType, Simulator, TaskSpec};
use olp_llm::library::ExemplarLibrary;
use olp_llm::pipeline::{greedy_binding, run_olp_pipeline, scene_descriptors};
use olp_llm::provider::{ChatProvider, Fixtures, HttpProvider, RecordingProvider, ReplayProvider};
use serde_json::json;

use config::{Backend, CliConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderMode {
    Live,
    Replay,
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Markdown => Format::Markdown,
            FormatArg::Json => Format::Json,
        }
    }
}

/// Object-level planning for block-world tasks.
#[derive(Debug, Parser)]
#[command(name = "olp", version)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "replay")]
    provider: ProviderMode,
    /// Fixture directory; overrides the config file.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Seed for `bench`; overrides the matrix file's seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for `bench` (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Print the command's payload as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an object-level plan for a task and plan it in a scene.
    Plan { task: String, scene: PathBuf },
    /// Execute a plan file in a scene.
    Exec {
        scene: PathBuf,
        plan: PathBuf,
        /// Task used for the success check: `tower:4`, `spelling:ROBOT`,
        /// `organize:red=2,green=3,blue=2` or a JSON task object.
        #[arg(long)]
        task: Option<String>,
    },
    /// Run a trial matrix and write a report.
    Bench {
        matrix: PathBuf,
        /// Report zero plan time so reports are byte-stable.
        #[arg(long)]
        no_timing: bool,
    },
    /// Turn an object-level plan into one PDDL problem per unit.
    Foon2pddl {
        olp: PathBuf,
        scene: PathBuf,
        /// JSON map from alias to instance; otherwise aliases are bound greedily.
        #[arg(long)]
        binding: Option<PathBuf>,
    },
}

/// A failure with its exit code: 1 run failed, 2 bad input or config,
/// 3 unsolvable or unbound.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn fail<T>(code: u8, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure { code, message: message.into() })
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_scene(path: &Path) -> Result<SceneState, Failure> {
    let text = read(path)?;
    SceneState::from_json(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

/// `tower:4`, `spelling:ROBOT`, `organize:red=2,green=3,blue=2`, or JSON.
fn parse_task_spec(text: &str) -> Result<TaskSpec, String> {
    let spec = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| e.to_string())?
    } else {
        let (kind, arg) = text.split_once(':').ok_or("expected KIND:ARGS")?;
        match kind {
            "tower" => TaskSpec::Tower { height: arg.parse().map_err(|_| format!("bad height `{arg}`"))? },
            "spelling" => TaskSpec::Spelling { word: arg.to_string() },
            "organize" => TaskSpec::Organize {
                types: arg
                    .split(',')
                    .map(|t| {
                        let (name, n) = t.split_once('=').ok_or(format!("expected NAME=COUNT, got `{t}`"))?;
                        let count = n.parse().map_err(|_| format!("bad count `{n}`"))?;
                        Ok(BlockType { name: name.to_string(), count })
                    })
                    .collect::<Result<_, String>>()?,
            },
            _ => return Err(format!("unknown task kind `{kind}`")),
        }
    };
    spec.validate()?;
    Ok(spec)
}

struct Env {
    cli: Cli,
    config: CliConfig,
}

impl Env {
    fn thresholds(&self) -> GeomThresholds {
        self.config.thresholds
    }

    fn library(&self) -> Result<ExemplarLibrary, Failure> {
        ExemplarLibrary::load(&self.config.library).map_err(|e| input(format!("{}: {e}", self.config.library.display())))
    }

    fn backend(&self) -> Result<Box<dyn ChatProvider>, Failure> {
        Ok(match self.config.provider.backend {
            Backend::Scripted => Box::new(ScriptedResponder::new(self.config.provider.salt)),
            Backend::Http => {
                let cfg = self.config.provider.http_config().map_err(input)?;
                Box::new(HttpProvider::new(cfg).map_err(input)?)
            }
        })
    }

    /// Runs `f` with the provider the flags ask for. Recorded exchanges are
    /// merged into `<fixtures>/recorded.json` afterwards, also on failure.
    fn with_provider<T>(&self, f: impl FnOnce(&dyn ChatProvider) -> Result<T, Failure>) -> Result<T, Failure> {
        match self.cli.provider {
            ProviderMode::Replay => {
                let p = ReplayProvider::from_dir(&self.config.fixtures).map_err(input)?;
                f(&p)
            }
            ProviderMode::Live => f(self.backend()?.as_ref()),
            ProviderMode::Record => {
                let rec = RecordingProvider::new(self.backend()?);
                let out = f(&rec);
                let path = self.config.fixtures.join("recorded.json");
                let mut all = if path.exists() { Fixtures::load_file(&path).map_err(input)? } else { Fixtures::default() };
                all.0.extend(rec.fixtures().0);
                all.save(&path).map_err(input)?;
                log::info!("{} fixtures in {}", all.len(), path.display());
                out
            }
        }
    }
}

struct UnitResult {
    problem: Problem,
    actions: Option<Vec<ActionCall>>,
}

/// Builds each unit's problem from the state the previous units reached
/// and searches it. An unsolvable unit leaves the state unchanged.
fn plan_units(
    olp: &ObjectLevelPlan,
    binding: &AliasBinding,
    scene: &SceneState,
    thr: &GeomThresholds,
) -> Result<Vec<UnitResult>, GroundingError> {
    let domain = builtin_blockworld_domain();
    let objects = scene_objects(scene);
    let mut state = olp_core::grounding::derive_predicates(scene, thr)?;
    let mut out = Vec::new();
    for unit in &olp.units {
        let sub = subgoal_problem_from_state(unit, binding, &state, &objects, &domain)?;
        for w in &sub.warnings {
            log::warn!("unit {}: {w:?}", unit.step);
        }
        let task = ground(&domain, &sub.problem);
        let actions = astar(&task, &LmCut).0.map(|steps| {
            let end = progress(&task, &task.init, &steps).expect("search returns applicable actions");
            state = task.atoms(&end);
            steps.iter().map(|&a| task.actions[a].call()).collect()
        });
        out.push(UnitResult { problem: sub.problem, actions });
    }
    Ok(out)
}

fn write_problems(out: &Path, olp: &ObjectLevelPlan, units: &[UnitResult]) -> Result<Vec<String>, Failure> {
    let mut files = Vec::new();
    for (unit, r) in olp.units.iter().zip(units) {
        let name = format!("unit_{:02}.pddl", unit.step);
        write(&out.join(&name), &print_problem(&r.problem))?;
        files.push(name);
    }
    Ok(files)
}

fn unsolvable(olp: &ObjectLevelPlan, units: &[UnitResult]) -> Result<(), Failure> {
    match olp.units.iter().zip(units).find(|(_, r)| r.actions.is_none()) {
        Some((unit, _)) => fail(3, format!("unit {} ({}) has no plan", unit.step, unit.instruction)),
        None => Ok(()),
    }
}

fn cmd_plan(env: &Env, task: &str, scene_path: &Path) -> Result<serde_json::Value, Failure> {
    let scene = load_scene(scene_path)?;
    let lib = env.library()?;
    let out = &env.cli.out;
    let thr = env.thresholds();
    let run = env.with_provider(|p| Ok(run_olp_pipeline(task, &scene_descriptors(&scene), &scene.instance_ids(), &lib, p)))?;
    write(&out.join("transcripts.json"), &serde_json::to_string_pretty(&run.transcripts).expect("transcripts serialize"))?;
    let tokens = run.usage().total();
    let olp = run.result.map_err(|e| Failure { code: 1, message: e.to_string() })?;
    write(&out.join("olp.json"), &serialize_olp(&olp.plan))?;
    write(&out.join("binding.json"), &serde_json::to_string_pretty(&olp.binding).expect("binding serializes"))?;
    let units = plan_units(&olp.plan, &olp.binding, &scene, &thr).map_err(|e| Failure { code: 3, message: e.to_string() })?;
    let files = write_problems(&out.join("problems"), &olp.plan, &units)?;
    unsolvable(&olp.plan, &units)?;
    let actions: Vec<ActionCall> = units.into_iter().flat_map(|u| u.actions.unwrap_or_default()).collect();
    write(&out.join("plan.txt"), &format_plan(&actions))?;
    Ok(json!({
        "olp": serde_json::from_str::<serde_json::Value>(&serialize_olp(&olp.plan)).expect("olp json"),
        "binding": olp.binding,
        "binding_source": olp.binding_source,
        "problems": files,
        "plan": actions.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "tokens": tokens,
    }))
}

fn cmd_exec(env: &Env, scene_path: &Path, plan_path: &Path, task: Option<&str>) -> Result<(serde_json::Value, bool), Failure> {
    let scene = load_scene(scene_path)?;
    let text = read(plan_path)?;
    let actions = parse_plan_text(&text).map_err(|e| input(format!("{}: {e}", plan_path.display())))?;
    let spec = task.map(parse_task_spec).transpose().map_err(|e| input(format!("--task: {e}")))?;
    let sim = Simulator { thresholds: env.thresholds(), ..Simulator::default() };
    // Without a task the success check has nothing to test; a tower of 0 is never built.
    let check = spec.clone().unwrap_or(TaskSpec::Tower { height: 0 });
    let trace = sim.execute_plan(&scene, &actions, &check);
    write(&env.cli.out.join("trace.jsonl"), &trace.to_jsonl())?;
    write(&env.cli.out.join("final_scene.json"), &trace.final_scene.to_json())?;
    let succeeded = spec.is_some().then_some(trace.succeeded);
    if !env.cli.json {
        println!("completed: {}", trace.completed);
        println!("succeeded: {}", succeeded.map_or("n/a".to_string(), |s| s.to_string()));
        if let Some(last) = trace.steps.last().filter(|_| !trace.completed) {
            println!("failed at {}: {:?}", last.action, last.outcome);
        }
    }
    Ok((json!({ "completed": trace.completed, "succeeded": succeeded, "steps": trace.steps }), trace.completed))
}

fn cmd_bench(env: &Env, matrix_path: &Path, no_timing: bool) -> Result<serde_json::Value, Failure> {
    let mut matrix = MatrixConfig::from_toml(&read(matrix_path)?).map_err(input)?;
    if let Some(seeds) = &env.config.seeds {
        matrix.seeds = seeds.clone();
    }
    if let Some(seed) = env.cli.seed {
        matrix.seeds = vec![seed];
    }
    if no_timing {
        matrix.timing = Timing::Off;
    }
    let lib = env.library()?;
    let configs = matrix.trial_configs();
    let results = env.with_provider(|provider| {
        let harness = Harness {
            library: &lib,
            provider,
            thresholds: env.thresholds(),
            simulator: Simulator {
                thresholds: env.thresholds(),
                motion_failure_rate: matrix.motion_failure_rate,
                ..Simulator::default()
            },
            timing: matrix.timing,
        };
        Ok(run_matrix(&configs, &harness, env.cli.jobs))
    })?;
    let records: Vec<_> = results.into_iter().flat_map(|r| r.records).collect();
    let rows = aggregate_all(&records);
    let format: Format = env.cli.format.into();
    let report = emit_report(&rows, format).map_err(input)?;
    write(&env.cli.out.join(format!("report.{}", format.extension())), &report)?;
    write(&env.cli.out.join("records.jsonl"), &records_jsonl(&records))?;
    if !env.cli.json {
        print!("{report}");
    }
    Ok(json!({ "rows": rows, "trials": records.len() }))
}

fn cmd_foon2pddl(env: &Env, olp_path: &Path, scene_path: &Path, binding: Option<&Path>) -> Result<serde_json::Value, Failure> {
    let olp = parse_olp_json(&read(olp_path)?).map_err(|e| input(format!("{}: {e}", olp_path.display())))?;
    let scene = load_scene(scene_path)?;
    let binding = match binding {
        Some(p) => {
            let b: AliasBinding = serde_json::from_str(&read(p)?).map_err(|e| input(format!("{}: {e}", p.display())))?;
            b.check_total(&olp).map_err(|e| Failure { code: 3, message: e.to_string() })?;
            b
        }
        None => greedy_binding(&olp.aliases(), &scene.instance_ids()).map_err(|e| Failure { code: 3, message: e.to_string() })?,
    };
    let units = plan_units(&olp, &binding, &scene, &env.thresholds()).map_err(|e| Failure { code: 3, message: e.to_string() })?;
    let files = write_problems(&env.cli.out, &olp, &units)?;
    if !env.cli.json {
        for f in &files {
            println!("{}", env.cli.out.join(f).display());
        }
    }
    unsolvable(&olp, &units)?;
    let bound: BTreeMap<&str, &str> = binding.iter().collect();
    Ok(json!({ "problems": files, "binding": bound }))
}

fn run(cli: Cli) -> Result<(serde_json::Value, bool), Failure> {
    let mut config = match &cli.config {
        Some(p) => CliConfig::load(p).map_err(input)?,
        None => CliConfig::default(),
    };
    if let Some(f) = &cli.fixtures {
        config.fixtures = f.clone();
    }
    let library = config.library.clone();
    if !library.exists() {
        return fail(2, format!("exemplar library {} not found", library.display()));
    }
    if cli.provider == ProviderMode::Replay && !config.fixtures.is_dir() {
        return fail(2, format!("fixture directory {} not found", config.fixtures.display()));
    }
    let env = Env { cli, config };
    match &env.cli.command {
        Command::Plan { task, scene } => cmd_plan(&env, task, scene).map(|v| (v, true)),
        Command::Exec { scene, plan, task } => cmd_exec(&env, scene, plan, task.as_deref()),
        Command::Bench { matrix, no_timing } => cmd_bench(&env, matrix, *no_timing).map(|v| (v, true)),
        Command::Foon2pddl { olp, scene, binding } => cmd_foon2pddl(&env, olp, scene, binding.as_deref()).map(|v| (v, true)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let as_json = cli.json;
    match run(cli) {
        Ok((payload, ok)) => {
            if as_json {
                println!("{}", serde_json::to_string_pretty(&payload).expect("payload serializes"));
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            if as_json {
                println!("{}", json!({ "error": f.message, "exit_code": f.code }));
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_shorthand() {
        assert_eq!(parse_task_spec("tower:4").unwrap(), TaskSpec::Tower { height: 4 });
        assert_eq!(parse_task_spec("spelling:ROBOT").unwrap(), TaskSpec::Spelling { word: "ROBOT".into() });
        let TaskSpec::Organize { types } = parse_task_spec("organize:red=2,green=3,blue=2").unwrap() else { panic!() };
        assert_eq!(types[1], BlockType { name: "green".into(), count: 3 });
        assert_eq!(parse_task_spec(r#"{"kind":"tower","height":3}"#).unwrap(), TaskSpec::Tower { height: 3 });
        assert!(parse_task_spec("tower:9").is_err());
        assert!(parse_task_spec("pyramid:3").is_err());
    }
}
