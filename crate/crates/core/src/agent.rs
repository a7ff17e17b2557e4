//! The decision loop: prompt, generate, extract, remember, validate, act.
//! Runs in state-machine mode with strategic memory or in the memoryless
//! baseline mode, and drives whole episodes against a scripted opponent.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{ActionCommand, ValidatedAction};
use crate::backend::{Backend, BackendDescriptor, BackendError, DecisionContext, GenerationRequest};
use crate::machine::MachineSpec;
use crate::memory::{MemoryDb, MemoryError, StrategyRecord, StrategyVars, TACTIC};
use crate::output::{extract_actions, extract_strategies, validate_actions, ActionCandidate, ValidityReport};
use crate::prompt::{render_observation, PromptTemplate};
use crate::sim::{
    observe, run_opponent, Observation, OpponentScript, Player, SimConfig, SimError,
    Terminal, TickRecord, UnitRole, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Masmp,
    Baseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Masmp => "masmp",
            Mode::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "masmp" => Ok(Mode::Masmp),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode `{other}` (expected masmp or baseline)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub mode: Mode,
    /// The oracle executes this spec in both modes; only the state-machine
    /// mode shows it in the prompt.
    pub spec: Arc<MachineSpec>,
    pub backend: BackendDescriptor,
    pub decision_period: u32,
    pub retry_budget: u32,
}

impl AgentConfig {
    pub fn new(mode: Mode, spec: Arc<MachineSpec>, backend: BackendDescriptor) -> Self {
        Self {
            mode,
            spec,
            backend,
            decision_period: 8,
            retry_budget: 2,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.decision_period == 0 {
            return Err(AgentError::Config("decision_period must be at least 1".into()));
        }
        self.backend.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of the decision trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionStepTrace {
    pub timestep: u64,
    pub mode: Mode,
    pub prompt_sha256: String,
    pub attempts: Vec<Attempt>,
    pub raw_output: Option<String>,
    pub extracted: Vec<StrategyVars>,
    /// Tactic of the latest record before this step.
    pub tactic_before: Option<String>,
    pub memory_latest: Option<StrategyRecord>,
    pub validity: ValidityReport,
    pub executed: Vec<ActionCommand>,
    /// True when no output was obtained and the agent held.
    pub hold: bool,
    /// Policy interventions, e.g. `unknown_tactic:rush`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl DecisionStepTrace {
    pub fn tactic_after(&self) -> Option<&str> {
        self.memory_latest.as_ref().and_then(|r| r.tactic())
    }
}

pub fn write_decision_traces<W: Write>(mut out: W, traces: &[DecisionStepTrace]) -> io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_decision_traces(text: &str) -> Result<Vec<DecisionStepTrace>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    crate::sim::hex(&Sha256::digest(bytes))
}

/// A configured agent: template, backend and catalog.
pub struct Agent {
    config: AgentConfig,
    catalog: SimConfig,
    template: PromptTemplate,
    backend: Box<dyn Backend>,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("mode", &self.config.mode)
            .field("backend", &self.config.backend.kind)
            .finish()
    }
}

impl Agent {
    pub fn new(config: AgentConfig, catalog: SimConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let backend = config.backend.instantiate(&config.spec)?;
        Ok(Self::with_backend(config, catalog, backend))
    }

    /// Uses `backend` instead of instantiating the descriptor.
    pub fn with_backend(config: AgentConfig, catalog: SimConfig, backend: Box<dyn Backend>) -> Self {
        let template = PromptTemplate::v1(&catalog);
        Self {
            config,
            catalog,
            template,
            backend,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn catalog(&self) -> &SimConfig {
        &self.catalog
    }

    /// The exact generation input for this observation and memory.
    pub fn prompt_for(&self, obs: &Observation, last: Option<&StrategyRecord>) -> String {
        let obs_text = render_observation(obs);
        match self.config.mode {
            Mode::Masmp => self.template.compile_prompt(&self.config.spec, &obs_text, last),
            Mode::Baseline => self.template.compile_baseline_prompt(&obs_text),
        }
    }

    /// One pass of the decision loop at timestep `t`.
    pub fn decide_step(
        &self,
        db: &mut MemoryDb,
        obs: &Observation,
        t: u64,
    ) -> Result<(Vec<ValidatedAction>, DecisionStepTrace), AgentError> {
        let masmp = self.config.mode == Mode::Masmp;
        if let Some(latest) = db.get_latest() {
            if masmp && t <= latest.timestep {
                return Err(MemoryError::NonIncreasing {
                    given: t,
                    latest: latest.timestep,
                }
                .into());
            }
        }
        let last = if masmp { db.get_latest().cloned() } else { None };
        let prompt = self.prompt_for(obs, last.as_ref());
        let request = GenerationRequest {
            max_tokens: self.config.backend.max_tokens,
            temperature: self.config.backend.temperature,
            ..GenerationRequest::new(prompt.clone())
        }
        .with_seed(t)
        .with_context(DecisionContext {
            observation: obs.clone(),
            prev: last.as_ref().map(|r| r.variables.clone()),
        });

        let mut attempts = Vec::new();
        let mut output = None;
        for attempt in 0..=self.config.retry_budget {
            match self.backend.generate(&request) {
                Ok(text) => {
                    attempts.push(Attempt { attempt, error: None });
                    output = Some(text);
                    break;
                }
                Err(e) => {
                    let transient = e.is_transient();
                    attempts.push(Attempt {
                        attempt,
                        error: Some(e.to_string()),
                    });
                    if !transient {
                        break;
                    }
                }
            }
        }

        let mut flags = Vec::new();
        let tactic_before = last.as_ref().and_then(|r| r.tactic()).map(str::to_owned);
        let mut trace = DecisionStepTrace {
            timestep: t,
            mode: self.config.mode,
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            attempts,
            raw_output: output.clone(),
            extracted: Vec::new(),
            tactic_before: tactic_before.clone(),
            memory_latest: None,
            validity: ValidityReport::default(),
            executed: Vec::new(),
            hold: output.is_none(),
            flags: Vec::new(),
        };
        let Some(raw) = output else {
            trace.memory_latest = if masmp { db.get_latest().cloned() } else { None };
            return Ok((Vec::new(), trace));
        };

        let strategies = extract_strategies(&raw);
        if masmp {
            if let Some(first) = strategies.first() {
                let vars = self.sanitize_tactic(first.clone(), tactic_before.as_deref(), &mut flags);
                db.add_memory(vars, t)?;
            }
        }
        trace.extracted = strategies;

        let candidates = extract_actions(&raw);
        let (kept, report) = validate_actions(&candidates, &self.catalog, obs);
        trace.executed = kept.iter().map(|a| a.command().clone()).collect();
        trace.validity = report;
        trace.memory_latest = if masmp { db.get_latest().cloned() } else { None };
        trace.flags = flags;
        Ok((kept, trace))
    }

    /// A Tactic that names no state (or is missing) is replaced by the
    /// previous one, or the initial state if there is none.
    fn sanitize_tactic(
        &self,
        mut vars: StrategyVars,
        previous: Option<&str>,
        flags: &mut Vec<String>,
    ) -> StrategyVars {
        let spec = &self.config.spec;
        let fallback = previous.unwrap_or(&spec.initial_state).to_owned();
        match vars.get(TACTIC) {
            Some(t) if spec.has_state(t) => {}
            Some(t) => {
                flags.push(format!("unknown_tactic:{t}"));
                vars.insert(TACTIC.to_owned(), fallback);
            }
            None => {
                flags.push("missing_tactic".to_owned());
                vars.shift_insert(0, TACTIC.to_owned(), fallback);
            }
        }
        vars
    }
}

// ---------------------------------------------------------------------------
// episodes

/// How player B chooses its orders.
#[derive(Debug, Clone, PartialEq)]
pub enum OpponentPolicy {
    Script(OpponentScript),
    /// Fixed orders keyed by tick.
    Timeline(BTreeMap<u32, Vec<ActionCommand>>),
    Passive,
}

impl OpponentPolicy {
    pub fn difficulty(cfg: &SimConfig, level: u8) -> Result<Self, AgentError> {
        Ok(OpponentPolicy::Script(OpponentScript::for_difficulty(cfg, level)?))
    }

    fn orders(&self, cfg: &SimConfig, world: &WorldState) -> Vec<ActionCommand> {
        match self {
            OpponentPolicy::Script(s) => run_opponent(s, cfg, world, Player::B),
            OpponentPolicy::Timeline(t) => t.get(&world.tick).cloned().unwrap_or_default(),
            OpponentPolicy::Passive => Vec::new(),
        }
    }

    fn level(&self) -> Option<u8> {
        match self {
            OpponentPolicy::Script(s) => Some(s.difficulty),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Loss,
    Draw,
}

/// Catalog name -> count of accepted Train/Build orders.
pub type Tally = BTreeMap<String, u32>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideTallies {
    pub agent: Tally,
    pub opponent: Tally,
}

impl SideTallies {
    fn add(&mut self, player: Player, kinds: &[String]) {
        let t = match player {
            Player::A => &mut self.agent,
            Player::B => &mut self.opponent,
        };
        for k in kinds {
            *t.entry(k.clone()).or_insert(0) += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub mode: Mode,
    pub difficulty: Option<u8>,
    pub seed: u64,
    pub outcome: Outcome,
    pub final_tick: u32,
    /// Accepted orders over the whole episode.
    pub production: SideTallies,
    /// Accepted orders issued before the production cutoff tick.
    pub early_production: SideTallies,
    pub decisions: u32,
    pub holds: u32,
    pub rejected_actions: u32,
    /// Orders the simulator refused despite validation. Always zero unless
    /// the validator and simulator disagree.
    pub contract_violations: u32,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub result: MatchResult,
    pub decisions: Vec<DecisionStepTrace>,
    pub ticks: Vec<TickRecord>,
}

/// Initial conditions of an episode.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub world: WorldState,
    pub memory: MemoryDb,
    pub opponent: OpponentPolicy,
    pub record_ticks: bool,
    /// Stop after this many decisions (the result is then a draw).
    pub max_decisions: Option<u32>,
}

impl EpisodeSetup {
    /// Fresh symmetric start. Opponent income follows its script.
    pub fn standard(cfg: &SimConfig, seed: u64, opponent: OpponentPolicy, tick_limit: u32) -> Self {
        let mut world = WorldState::new(cfg, seed);
        world.tick_limit = tick_limit;
        if let OpponentPolicy::Script(s) = &opponent {
            world.player_mut(Player::B).income_multiplier_milli = s.income_multiplier_milli;
        }
        Self {
            world,
            memory: MemoryDb::new(),
            opponent,
            record_ticks: false,
            max_decisions: None,
        }
    }
}

/// Runs a fresh episode: agent as player A, scripted opponent as player B.
pub fn run_agent_episode(
    agent: &Agent,
    seed: u64,
    opponent: OpponentPolicy,
    tick_limit: u32,
) -> Result<EpisodeOutcome, AgentError> {
    let setup = EpisodeSetup::standard(agent.catalog(), seed, opponent, tick_limit);
    run_episode(agent, setup)
}

pub fn run_episode(agent: &Agent, setup: EpisodeSetup) -> Result<EpisodeOutcome, AgentError> {
    let cfg = agent.catalog().clone();
    let EpisodeSetup {
        mut world,
        mut memory,
        opponent,
        record_ticks,
        max_decisions,
    } = setup;
    let period = agent.config().decision_period;
    let cutoff = cfg.sim.production_cutoff_tick;

    let mut decisions = Vec::new();
    let mut ticks = Vec::new();
    let mut production = SideTallies::default();
    let mut early = SideTallies::default();
    let mut violations = 0;

    while world.terminal() == Terminal::Ongoing {
        if max_decisions.is_some_and(|m| decisions.len() as u32 >= m) {
            break;
        }
        let tick = world.tick;
        let actions_a = if tick % period == 0 {
            let obs = observe(&world, &cfg, Player::A);
            let (acts, trace) = agent.decide_step(&mut memory, &obs, tick as u64)?;
            decisions.push(trace);
            acts
        } else {
            Vec::new()
        };
        let obs_b = observe(&world, &cfg, Player::B);
        let candidates: Vec<ActionCandidate> = opponent
            .orders(&cfg, &world)
            .iter()
            .map(ActionCandidate::from_command)
            .collect();
        let (actions_b, _) = validate_actions(&candidates, &cfg, &obs_b);

        let before = world.clone();
        let report = match world.step(&cfg, &actions_a, &actions_b) {
            Ok(r) => r,
            Err(SimError::ContractViolation { .. }) => {
                violations += 1;
                world = before;
                world.step(&cfg, &[], &[])?
            }
            Err(e) => return Err(e.into()),
        };
        for p in [Player::A, Player::B] {
            production.add(p, &report.enqueued[p.index()]);
            if tick < cutoff {
                early.add(p, &report.enqueued[p.index()]);
            }
        }
        if record_ticks {
            for (p, acts) in [(Player::A, &actions_a), (Player::B, &actions_b)] {
                ticks.push(TickRecord::capture(
                    &world,
                    p,
                    tick,
                    acts.iter().map(|a| a.command().clone()).collect(),
                    report.combat[p.index()],
                ));
            }
        }
    }

    let outcome = match world.terminal() {
        Terminal::WinA => Outcome::Win,
        Terminal::WinB => Outcome::Loss,
        Terminal::Draw | Terminal::Ongoing => Outcome::Draw,
    };
    let result = MatchResult {
        mode: agent.config().mode,
        difficulty: opponent.level(),
        seed: world.rng_seed,
        outcome,
        final_tick: world.tick,
        production,
        early_production: early,
        decisions: decisions.len() as u32,
        holds: decisions.iter().filter(|d| d.hold).count() as u32,
        rejected_actions: decisions.iter().map(|d| d.validity.rejected as u32).sum(),
        contract_violations: violations,
    };
    Ok(EpisodeOutcome {
        result,
        decisions,
        ticks,
    })
}

/// Army units among `tally`, split into (advanced, total).
pub fn army_counts(cfg: &SimConfig, tally: &Tally) -> (u32, u32) {
    let mut advanced = 0;
    let mut total = 0;
    for (name, n) in tally {
        if let Some(u) = cfg.unit(name) {
            if u.role == UnitRole::Army {
                total += n;
                if u.tier == crate::sim::Tier::Advanced {
                    advanced += n;
                }
            }
        }
    }
    (advanced, total)
}

// ---------------------------------------------------------------------------
// reinforcement scenario

/// Number of decisions the reinforcement scenario runs for.
pub const REINFORCEMENT_SCENARIO_DECISIONS: u32 = 4;

/// A mid-game position where the agent, holding defensively, reaches
/// critical mass, pushes into the enemy base, and meets enemy reinforcements
/// that arrive two decision periods after the push begins.
pub fn reinforcement_scenario(cfg: &SimConfig, decision_period: u32) -> EpisodeSetup {
    use crate::sim::{QueueEntry, Structure, Unit};

    let start = 30 * decision_period;
    let mut world = WorldState::new(cfg, 0);
    world.tick = start;
    let unit = |kind: &str| Unit {
        kind: kind.to_owned(),
        hp: cfg.unit(kind).expect("catalog unit").hp,
    };
    let core = cfg
        .structures
        .iter()
        .find(|s| cfg.is_tech(&s.name))
        .expect("catalog has a tech structure");

    let a = world.player_mut(Player::A);
    a.minerals = 0;
    a.gas = 0;
    a.structures.push(Structure {
        kind: core.name.clone(),
        hp: core.hp,
    });
    a.army = (0..14).map(|_| unit("stalker")).collect();
    a.production_queue.push(QueueEntry {
        kind: "stalker".into(),
        remaining: decision_period / 2,
    });

    let b = world.player_mut(Player::B);
    b.minerals = 400;
    b.army = (0..14).map(|_| unit("zealot")).collect();

    // Four zealots join the defenders a few ticks before the fourth decision.
    let build = cfg.unit("zealot").expect("catalog unit").build_ticks;
    let mut timeline = BTreeMap::new();
    timeline.insert(
        (start + 3 * decision_period).saturating_sub(build + 3).max(start),
        vec![ActionCommand::train("zealot"); 4],
    );

    let mut memory = MemoryDb::new();
    let prior: StrategyVars = [
        (TACTIC.to_owned(), "defensive".to_owned()),
        ("PriorityUnit".to_owned(), "stalker".to_owned()),
    ]
    .into_iter()
    .collect();
    memory
        .add_memory(prior, (start - decision_period) as u64)
        .expect("fresh memory accepts a record");

    EpisodeSetup {
        world,
        memory,
        opponent: OpponentPolicy::Timeline(timeline),
        record_ticks: false,
        max_decisions: Some(REINFORCEMENT_SCENARIO_DECISIONS),
    }
}

/// Sequence of Tactic values after each decision.
pub fn tactic_sequence(traces: &[DecisionStepTrace]) -> Vec<String> {
    traces
        .iter()
        .map(|t| t.tactic_after().unwrap_or("").to_owned())
        .collect()
}
