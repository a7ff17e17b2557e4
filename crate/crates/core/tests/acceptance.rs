//! Acceptance suite: one check per headline requirement, each printing a
//! PASS or FAIL line. Run with `--nocapture` to see the lines.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use masmp_core::action::{ActionCommand, Verb};
use masmp_core::agent::{
    reinforcement_scenario, run_episode, tactic_sequence, Agent, AgentConfig, EpisodeSetup,
    MatchResult, Mode, OpponentPolicy, Outcome, SideTallies,
};
use masmp_core::backend::{
    Backend, BackendDescriptor, CorruptingBackend, DecisionContext, GenerationRequest,
    OracleBackend, ScriptedBackend,
};
use masmp_core::eval::{production_metrics, run_eval, win_rate, EvalConfig};
use masmp_core::machine::{symbolic_execute, MachineSpec};
use masmp_core::memory::{MemoryDb, StrategyVars, TACTIC};
use masmp_core::output::{extract_actions, extract_strategies, Verdict};
use masmp_core::prompt::{render_observation, PromptTemplate};
use masmp_core::sim::{observe, Player, SimConfig, WorldState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{cfg, random_observations, random_prev, spec};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn tally(outcome: Outcome, stalkers: u32, zealots: u32) -> MatchResult {
    let mut early = SideTallies::default();
    early.agent.insert("stalker".into(), stalkers);
    early.agent.insert("zealot".into(), zealots);
    MatchResult {
        mode: Mode::Masmp,
        difficulty: Some(1),
        seed: 0,
        outcome,
        final_tick: 0,
        production: early.clone(),
        early_production: early,
        decisions: 0,
        holds: 0,
        rejected_actions: 0,
        contract_violations: 0,
    }
}

fn win_rate_arithmetic(_: &SimConfig) -> Check {
    for (wins, expected) in [(3, 60.0), (4, 80.0), (0, 0.0)] {
        let rs: Vec<_> = (0..5)
            .map(|i| tally(if i < wins { Outcome::Win } else { Outcome::Loss }, 0, 0))
            .collect();
        let got = win_rate(&rs).map_err(|e| e.to_string())?;
        ensure!(got == expected, "{wins}/5 gave {got}, expected {expected}");
    }
    Ok(())
}

fn oracle_round_trip(cfg: &SimConfig) -> Check {
    let start = Instant::now();
    let spec = spec(cfg);
    let oracle = OracleBackend::new(spec.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let observations = random_observations(cfg, 1, 1000);
    ensure!(observations.len() >= 1000, "only {} observations", observations.len());
    for o in observations {
        let prev = random_prev(&spec, &mut rng);
        let expected = symbolic_execute(&spec, &o, prev.as_ref()).map_err(|e| e.to_string())?;
        let req = GenerationRequest::new("p").with_context(DecisionContext { observation: o, prev });
        let text = oracle.generate(&req).map_err(|e| e.to_string())?;
        let frags = extract_strategies(&text);
        ensure!(frags.len() == 1 && frags[0] == expected.variables, "strategy mismatch in {text:?}");
        let actions: Vec<_> = extract_actions(&text)
            .iter()
            .map(|c| {
                let verb = Verb::parse_loose(c.verb.as_deref().unwrap_or_default()).unwrap();
                ActionCommand::new(verb, c.argument.as_deref())
            })
            .collect();
        ensure!(actions == expected.actions, "action mismatch in {text:?}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(())
}

fn oracle_agent(cfg: &SimConfig, mode: Mode) -> Result<Agent, String> {
    Agent::new(AgentConfig::new(mode, spec(cfg), BackendDescriptor::oracle()), cfg.clone())
        .map_err(|e| e.to_string())
}

fn scenario_sequence(cfg: &SimConfig) -> Check {
    let agent = oracle_agent(cfg, Mode::Masmp)?;
    let want = ["defensive", "aggressive", "aggressive", "defensive"];
    for run in 0..10 {
        let out = run_episode(&agent, reinforcement_scenario(cfg, cfg.sim.decision_period))
            .map_err(|e| e.to_string())?;
        let seq = tactic_sequence(&out.decisions);
        ensure!(seq == want, "run {run}: {seq:?}");
    }
    Ok(())
}

fn memory_latest_and_persistence(cfg: &SimConfig) -> Check {
    let spec = spec(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut completions = Vec::new();
    let mut expected = Vec::new();
    for _ in 0..10_000 {
        if rng.gen_bool(0.3) {
            completions.push("no strategy here\nAction: NoOp()\n".to_owned());
            expected.push(None);
        } else {
            let s = spec.states[rng.gen_range(0..spec.states.len())].clone();
            let focus = format!("f{}", rng.gen_range(0..1000));
            completions.push(format!("[Tactic]:<{s}>\n[Focus]:<{focus}>\n\n[Tactic]:<ignored>\n"));
            expected.push(Some((s, focus)));
        }
    }
    let config = AgentConfig::new(Mode::Masmp, spec.clone(), BackendDescriptor::oracle());
    let agent = Agent::with_backend(config, cfg.clone(), Box::new(ScriptedBackend::new(completions)));
    let obs = observe(&WorldState::new(cfg, 0), cfg, Player::A);
    let mut db = MemoryDb::new();
    let mut reference: Option<(u64, StrategyVars)> = None;
    for (i, want) in expected.into_iter().enumerate() {
        let t = i as u64 * 3 + 1;
        agent.decide_step(&mut db, &obs, t).map_err(|e| e.to_string())?;
        if let Some((s, focus)) = want {
            let vars: StrategyVars = [(TACTIC.to_owned(), s), ("Focus".to_owned(), focus)].into_iter().collect();
            reference = Some((t, vars));
        }
        let latest = db.get_latest().map(|r| (r.timestep, r.variables.clone()));
        ensure!(latest == reference, "step {i}: {latest:?} != {reference:?}");
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.jsonl");
    db.persist_to(&path).map_err(|e| e.to_string())?;
    let first = std::fs::read(&path).map_err(|e| e.to_string())?;
    let back = MemoryDb::load(&path).map_err(|e| e.to_string())?;
    ensure!(back.records() == db.records(), "reloaded records differ");
    back.persist_to(&path).map_err(|e| e.to_string())?;
    ensure!(std::fs::read(&path).map_err(|e| e.to_string())? == first, "second write differs");
    Ok(())
}

fn corruption_contained(cfg: &SimConfig) -> Check {
    let spec = spec(cfg);
    let mut rejections = 0;
    for episode in 0..50u64 {
        let backend = CorruptingBackend::new(OracleBackend::new(spec.clone()), 0.2, episode);
        let config = AgentConfig::new(Mode::Masmp, spec.clone(), BackendDescriptor::oracle());
        let agent = Agent::with_backend(config, cfg.clone(), Box::new(backend));
        let level = (episode % 7) as u8 + 1;
        let opponent = OpponentPolicy::difficulty(cfg, level).map_err(|e| e.to_string())?;
        let mut setup = EpisodeSetup::standard(cfg, episode, opponent, 2000);
        setup.record_ticks = true;
        let out = run_episode(&agent, setup).map_err(|e| e.to_string())?;
        ensure!(
            out.result.contract_violations == 0,
            "episode {episode}: {} invalid actions reached the simulator",
            out.result.contract_violations
        );
        for d in &out.decisions {
            let raw = d.raw_output.as_deref().unwrap_or_default();
            ensure!(
                extract_actions(raw).len() == d.validity.verdicts.len(),
                "episode {episode} t={}: an action line has no verdict",
                d.timestep
            );
            let valid = d.validity.verdicts.iter().filter(|v| v.verdict == Verdict::Valid).count();
            ensure!(valid == d.executed.len(), "episode {episode} t={}: executed a rejected action", d.timestep);
            let sent = out
                .ticks
                .iter()
                .find(|r| u64::from(r.tick) == d.timestep && r.acting_player == Player::A)
                .map(|r| r.actions.clone())
                .unwrap_or_default();
            ensure!(sent == d.executed, "episode {episode} t={}: simulator saw other orders", d.timestep);
            rejections += d.validity.rejected;
        }
    }
    ensure!(rejections > 0, "no rejections at all; corruption had no effect");
    Ok(())
}

fn non_markov_witness(cfg: &SimConfig) -> Check {
    let mut o = observe(&WorldState::new(cfg, 0), cfg, Player::A);
    o.tick = 400;
    o.own_army_supply = 26;
    o.visible_enemy_army_supply = 18;
    let memory = |tactic: &str| {
        let mut db = MemoryDb::new();
        let vars: StrategyVars = [(TACTIC.to_owned(), tactic.to_owned())].into_iter().collect();
        db.add_memory(vars, 392).map_err(|e| e.to_string())?;
        Ok::<_, String>(db)
    };
    let decide = |mode, tactic: &str| -> Result<_, String> {
        let mut db = memory(tactic)?;
        let (acts, trace) = oracle_agent(cfg, mode)?
            .decide_step(&mut db, &o, 400)
            .map_err(|e| e.to_string())?;
        let cmds: Vec<_> = acts.iter().map(|a| a.command().clone()).collect();
        Ok((cmds, trace.prompt_sha256))
    };
    let (a, _) = decide(Mode::Masmp, "aggressive")?;
    let (b, _) = decide(Mode::Masmp, "defensive")?;
    ensure!(a != b, "same decision for different memory: {a:?}");
    let (a, ha) = decide(Mode::Baseline, "aggressive")?;
    let (b, hb) = decide(Mode::Baseline, "defensive")?;
    ensure!(ha == hb, "baseline prompt depends on memory");
    ensure!(a == b, "baseline decision depends on memory");
    Ok(())
}

fn eval_reproducible(cfg: &SimConfig) -> Check {
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut c = EvalConfig::standard(cfg.clone(), spec(cfg));
        c.episodes = 5;
        c.tick_limit = 2000;
        c.out_dir = Some(dir.path().to_path_buf());
        let start = Instant::now();
        let out = run_eval(&c).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
        ensure!(out.report.rows.len() == 14, "{} cells", out.report.rows.len());
        let read = |n: &str| std::fs::read(dir.path().join(n)).map_err(|e| e.to_string());
        files.push((read("report.csv")?, read("results.jsonl")?));
    }
    ensure!(files[0] == files[1], "reports differ between runs");
    Ok(())
}

fn production_ratio(cfg: &SimConfig) -> Check {
    for (adv, total, want) in [(1832u32, 4557u32, 40.2), (840, 4286, 19.6)] {
        let rs: Vec<_> = (0..100u32)
            .map(|i| {
                let s = adv / 100 + u32::from(i < adv % 100);
                let z = (total - adv) / 100 + u32::from(i < (total - adv) % 100);
                tally(Outcome::Win, s, z)
            })
            .collect();
        let m = production_metrics(&rs, cfg).map_err(|e| e.to_string())?;
        ensure!(
            (m.advanced_ratio_pct - want).abs() <= 0.05,
            "{}/{} gave {:.4}, expected {want}",
            m.mean_advanced,
            m.mean_total,
            m.advanced_ratio_pct
        );
    }
    Ok(())
}

fn prompt_golden_files(cfg: &SimConfig) -> Check {
    let golden = |name: &str| {
        let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
        std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
    };
    let spec = MachineSpec::default_spec(cfg);
    let t = PromptTemplate::v1(cfg);
    let first = render_observation(&observe(&WorldState::new(cfg, 0), cfg, Player::A));
    let setup = reinforcement_scenario(cfg, cfg.sim.decision_period);
    let mid = render_observation(&observe(&setup.world, cfg, Player::A));
    let rec = setup.memory.get_latest().cloned();
    let cases = [
        ("masmp_first_decision.txt", t.compile_prompt(&spec, &first, None)),
        ("masmp_with_memory.txt", t.compile_prompt(&spec, &mid, rec.as_ref())),
        ("baseline.txt", t.compile_baseline_prompt(&mid)),
    ];
    for (name, actual) in cases {
        ensure!(golden(name)? == actual, "{name} differs");
    }
    Ok(())
}

#[test]
fn acceptance() {
    let cfg = cfg();
    let checks: [(&str, fn(&SimConfig) -> Check); 9] = [
        ("win-rate arithmetic", win_rate_arithmetic),
        ("oracle round-trip over 1000 observations", oracle_round_trip),
        ("reinforcement scenario tactic sequence", scenario_sequence),
        ("memory latest record and byte-exact persistence", memory_latest_and_persistence),
        ("20% corrupted outputs never reach the simulator", corruption_contained),
        ("memory changes decisions, baseline ignores it", non_markov_witness),
        ("14-cell evaluation is fast and reproducible", eval_reproducible),
        ("early production advanced-unit ratio", production_ratio),
        ("prompt golden files", prompt_golden_files),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        match check(&cfg) {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
