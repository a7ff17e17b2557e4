mod common;

use std::path::PathBuf;

use masmp_core::agent::reinforcement_scenario;
use masmp_core::machine::{parse_spec, MachineSpec, DEFAULT_SPEC};
use masmp_core::memory::StrategyRecord;
use masmp_core::prompt::{render_observation, PromptTemplate, NO_PRIOR_STRATEGY};
use masmp_core::sim::{observe, Observation, Player, SimConfig, WorldState};

use common::cfg;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against the stored file; `UPDATE_GOLDEN=1` rewrites it instead.
fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual.as_bytes(),
        "{name} differs from the golden file; rerun with UPDATE_GOLDEN=1 after reviewing"
    );
}

fn fresh_obs(cfg: &SimConfig) -> Observation {
    observe(&WorldState::new(cfg, 0), cfg, Player::A)
}

fn midgame(cfg: &SimConfig) -> (Observation, StrategyRecord) {
    let setup = reinforcement_scenario(cfg, cfg.sim.decision_period);
    let obs = observe(&setup.world, cfg, Player::A);
    (obs, setup.memory.get_latest().unwrap().clone())
}

#[test]
fn golden_first_decision() {
    let cfg = cfg();
    let spec = MachineSpec::default_spec(&cfg);
    let t = PromptTemplate::v1(&cfg);
    let p = t.compile_prompt(&spec, &render_observation(&fresh_obs(&cfg)), None);
    check_golden("masmp_first_decision.txt", &p);
}

#[test]
fn golden_with_memory() {
    let cfg = cfg();
    let spec = MachineSpec::default_spec(&cfg);
    let t = PromptTemplate::v1(&cfg);
    let (obs, rec) = midgame(&cfg);
    let p = t.compile_prompt(&spec, &render_observation(&obs), Some(&rec));
    assert!(p.contains("[Tactic]:<defensive>"));
    check_golden("masmp_with_memory.txt", &p);
}

#[test]
fn golden_baseline() {
    let cfg = cfg();
    let t = PromptTemplate::v1(&cfg);
    let (obs, _) = midgame(&cfg);
    let p = t.compile_baseline_prompt(&render_observation(&obs));
    assert!(!p.contains("[Tactic]"));
    check_golden("baseline.txt", &p);
}

#[test]
fn crlf_template_renders_identically() {
    let cfg = cfg();
    let spec = MachineSpec::default_spec(&cfg);
    let lf = PromptTemplate::v1(&cfg);
    let crlf = PromptTemplate::new(
        &masmp_core::prompt::MASMP_TEMPLATE_V1.replace('\n', "\r\n"),
        &masmp_core::prompt::BASELINE_TEMPLATE_V1.replace('\n', "\r\n"),
        &cfg,
    );
    let obs = render_observation(&fresh_obs(&cfg));
    assert_eq!(lf.compile_prompt(&spec, &obs, None), crlf.compile_prompt(&spec, &obs, None));
    assert_eq!(lf.compile_baseline_prompt(&obs), crlf.compile_baseline_prompt(&obs));
}

#[test]
fn declarations_appear_exactly_once() {
    let cfg = cfg();
    let spec = MachineSpec::default_spec(&cfg);
    let t = PromptTemplate::v1(&cfg);
    let (obs, rec) = midgame(&cfg);
    for last in [None, Some(&rec)] {
        let p = t.compile_prompt(&spec, &render_observation(&obs), last);
        for s in &spec.states {
            let n = p
                .lines()
                .filter(|l| *l == format!("- {s}") || *l == format!("- {s} (initial)"))
                .count();
            assert_eq!(n, 1, "state {s}");
        }
        for tr in &spec.transitions {
            assert_eq!(p.matches(tr.gloss.as_str()).count(), 1, "gloss {}", tr.gloss);
        }
        for v in spec.variable_names() {
            assert_eq!(p.matches(&format!("[{v}]:<value>")).count(), 1, "variable {v}");
        }
    }
}

#[test]
fn memory_sentinel_only_without_record() {
    let cfg = cfg();
    let spec = MachineSpec::default_spec(&cfg);
    let t = PromptTemplate::v1(&cfg);
    let obs = render_observation(&fresh_obs(&cfg));
    let p = t.compile_prompt(&spec, &obs, None);
    let memory = p.split("## MEMORY\n").nth(1).unwrap();
    assert!(memory.contains(NO_PRIOR_STRATEGY));
    assert!(!memory.contains("]:<"));
}

fn differing_lines(a: &str, b: &str) -> Vec<usize> {
    let (a, b): (Vec<_>, Vec<_>) = (a.lines().collect(), b.lines().collect());
    assert_eq!(a.len(), b.len());
    (0..a.len()).filter(|&i| a[i] != b[i]).collect()
}

/// Line range holding the transition list.
fn transitions_block(p: &str) -> std::ops::Range<usize> {
    let lines: Vec<_> = p.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.starts_with("Transitions are checked"))
        .unwrap();
    let end = lines
        .iter()
        .position(|l| *l == "State-action mapping:")
        .unwrap();
    start + 1..end
}

#[test]
fn gloss_change_stays_in_transitions() {
    let cfg = cfg();
    let spec = MachineSpec::default_spec(&cfg);
    let gloss = &spec.transitions[2].gloss;
    let edited = DEFAULT_SPEC.replacen(gloss.as_str(), "Attack now.", 1);
    let other = parse_spec(&edited, &cfg).unwrap();
    assert_ne!(spec, other);

    let t = PromptTemplate::v1(&cfg);
    let (obs, rec) = midgame(&cfg);
    let obs = render_observation(&obs);
    let a = t.compile_prompt(&spec, &obs, Some(&rec));
    let b = t.compile_prompt(&other, &obs, Some(&rec));
    let diff = differing_lines(&a, &b);
    assert_eq!(diff.len(), 1);
    let block = transitions_block(&a);
    assert!(diff.iter().all(|i| block.contains(i)), "{diff:?} outside {block:?}");
}

#[test]
fn baseline_and_masmp_share_observation_slot() {
    let cfg = cfg();
    let spec = MachineSpec::default_spec(&cfg);
    let t = PromptTemplate::v1(&cfg);
    let (obs, rec) = midgame(&cfg);
    let text = render_observation(&obs);
    let slot = format!("## OBSERVATION\n{text}");
    assert!(t.compile_prompt(&spec, &text, Some(&rec)).contains(&slot));
    assert!(t.compile_baseline_prompt(&text).contains(&slot));
}
