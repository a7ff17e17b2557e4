use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use masmp_core::agent::{
    army_counts, reinforcement_scenario, run_agent_episode, run_episode, tactic_sequence,
    write_decision_traces, Agent, AgentConfig, Mode, OpponentPolicy,
};
use masmp_core::backend::BackendDescriptor;
use masmp_core::eval::{run_eval, transition_report, EvalConfig};
use masmp_core::machine::{parse_spec, MachineSpec};
use masmp_core::sim::{SimConfig, MAX_DIFFICULTY, MIN_DIFFICULTY};

#[derive(Parser)]
#[command(name = "masmp", version, about = "State-machine prompting agents in a macro RTS simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one episode against a scripted opponent.
    Run(RunArgs),
    /// Run the mode x difficulty matrix and write report.csv, results.jsonl and traces.
    Eval(EvalArgs),
    /// Render a decision trace as a transition report.
    Replay {
        trace: PathBuf,
    },
    /// Parse and validate a strategy spec.
    CheckSpec {
        spec: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the scripted reinforcement scenario and print its state sequence.
    Scenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Strategy spec file; the bundled default when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Simulator config (TOML); the bundled default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `oracle` or a backend descriptor TOML file. MASMP_* environment
    /// variables override endpoint, model, key and timeout.
    #[arg(long, default_value = "oracle")]
    backend: String,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "masmp")]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    difficulty: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tick_limit: Option<u32>,
    /// Write the decision trace here (JSON Lines).
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 5)]
    episodes: u32,
    /// Levels as a range `1-7` or a list `1,4,7`.
    #[arg(long, default_value = "1-7")]
    difficulties: String,
    /// Comma-separated modes.
    #[arg(long, default_value = "masmp,baseline")]
    modes: String,
    #[arg(long, default_value = "eval-out")]
    out_dir: PathBuf,
    /// Parallel episodes; defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long)]
    tick_limit: Option<u32>,
}

impl Common {
    fn load(&self) -> Result<(SimConfig, Arc<MachineSpec>, BackendDescriptor)> {
        let catalog = match &self.config {
            Some(p) => SimConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => SimConfig::default_config(),
        };
        let spec = match &self.spec {
            Some(p) => load_spec(p, &catalog)?,
            None => MachineSpec::default_spec(&catalog),
        };
        let backend = if self.backend == "oracle" {
            BackendDescriptor::oracle()
        } else {
            BackendDescriptor::load(Path::new(&self.backend))?
        };
        let backend = backend.with_env_overrides(|k| std::env::var(k).ok())?;
        Ok((catalog, Arc::new(spec), backend))
    }
}

fn load_spec(path: &Path, catalog: &SimConfig) -> Result<MachineSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text, catalog).with_context(|| format!("{}", path.display()))
}

fn parse_difficulties(s: &str) -> Result<Vec<u8>> {
    let levels: Vec<u8> = if let Some((a, b)) = s.split_once('-') {
        let (a, b): (u8, u8) = (a.trim().parse()?, b.trim().parse()?);
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?
    };
    if levels.is_empty() {
        bail!("no difficulties in `{s}`");
    }
    Ok(levels)
}

fn write_trace(path: &Path, traces: &[masmp_core::agent::DecisionStepTrace]) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_decision_traces(BufWriter::new(f), traces)?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let (catalog, spec, backend) = args.common.load()?;
    if !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&args.difficulty) {
        bail!("difficulty must be in {MIN_DIFFICULTY}..={MAX_DIFFICULTY}");
    }
    let mut cfg = AgentConfig::new(args.mode, spec, backend);
    cfg.decision_period = catalog.sim.decision_period;
    let tick_limit = args.tick_limit.unwrap_or(catalog.sim.tick_limit);
    let agent = Agent::new(cfg, catalog.clone())?;
    let opponent = OpponentPolicy::difficulty(&catalog, args.difficulty)?;
    let out = run_agent_episode(&agent, args.seed, opponent, tick_limit)?;
    let r = &out.result;
    let (adv, total) = army_counts(&catalog, &r.early_production.agent);
    println!("mode        {}", r.mode);
    println!("difficulty  {}", args.difficulty);
    println!("seed        {}", r.seed);
    println!("outcome     {:?} at tick {}", r.outcome, r.final_tick);
    println!("decisions   {} ({} holds, {} rejected orders)", r.decisions, r.holds, r.rejected_actions);
    println!("early army  {adv} advanced of {total}");
    if let Some(p) = args.trace_out {
        write_trace(&p, &out.decisions)?;
        println!("trace       {}", p.display());
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let (catalog, spec, backend) = args.common.load()?;
    let mut cfg = EvalConfig::standard(catalog, spec);
    cfg.backend = backend;
    cfg.episodes = args.episodes;
    cfg.difficulties = parse_difficulties(&args.difficulties)?;
    cfg.modes = args
        .modes
        .split(',')
        .map(|m| m.trim().parse().map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;
    cfg.workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cfg.base_seed = args.base_seed;
    if let Some(t) = args.tick_limit {
        cfg.tick_limit = t;
    }
    cfg.out_dir = Some(args.out_dir.clone());
    let out = run_eval(&cfg)?;
    println!("{:<9} {:>5} {:>9} {:>10} {:>10}", "mode", "level", "win_rate", "advanced", "adv_ratio");
    for r in &out.report.rows {
        println!(
            "{:<9} {:>5} {:>8.1}% {:>10.2} {:>9.1}%",
            r.mode.to_string(),
            r.difficulty,
            r.win_rate_pct,
            r.production.mean_advanced,
            r.production.advanced_ratio_pct
        );
    }
    println!("artifacts in {}", args.out_dir.display());
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let traces = masmp_core::agent::read_decision_traces(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    print!("{}", transition_report(&traces));
    Ok(())
}

fn check_spec(path: &Path, config: Option<&Path>) -> Result<()> {
    let catalog = match config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default_config(),
    };
    let spec = load_spec(path, &catalog)?;
    println!("ok: {}", path.display());
    println!("  states       {} (initial {})", spec.states.join(", "), spec.initial_state);
    println!("  variables    {}", spec.variable_names().collect::<Vec<_>>().join(", "));
    println!("  transitions  {}", spec.transitions.len());
    println!("  policies     {}", spec.policies.len());
    println!("  rules        {}", spec.rules.len());
    Ok(())
}

fn scenario(common: Common, trace_out: Option<PathBuf>) -> Result<()> {
    let (catalog, spec, backend) = common.load()?;
    let mut cfg = AgentConfig::new(Mode::Masmp, spec, backend);
    cfg.decision_period = catalog.sim.decision_period;
    let setup = reinforcement_scenario(&catalog, cfg.decision_period);
    let agent = Agent::new(cfg, catalog)?;
    let out = run_episode(&agent, setup)?;
    println!("{}", tactic_sequence(&out.decisions).join(" -> "));
    if let Some(p) = trace_out {
        write_trace(&p, &out.decisions)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Replay { trace } => replay(&trace),
        Command::CheckSpec { spec, config } => check_spec(&spec, config.as_deref()),
        Command::Scenario { common, trace_out } => scenario(common, trace_out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
