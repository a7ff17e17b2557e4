//! Prompt rendering: observation text, the state-machine prompt with its
//! memory slot, and the memoryless baseline prompt.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::machine::{BtNode, MachineSpec};
use crate::memory::StrategyRecord;
use crate::sim::{CombatSummary, Observation, Region, SimConfig};

pub const MASMP_TEMPLATE_V1: &str = include_str!("../assets/prompt/masmp.v1.txt");
pub const BASELINE_TEMPLATE_V1: &str = include_str!("../assets/prompt/baseline.v1.txt");

/// Memory slot text when no strategy has been recorded yet.
pub const NO_PRIOR_STRATEGY: &str = "No prior strategy: this is the first decision of the match.";
/// Observation line used whenever no enemy army is in sight.
pub const NO_ENEMY_VISIBLE: &str = "no enemy units visible";

/// A pair of template texts plus the action vocabulary they advertise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    masmp: String,
    baseline: String,
    units: Vec<String>,
    structures: Vec<String>,
}

impl PromptTemplate {
    pub fn v1(catalog: &SimConfig) -> Self {
        Self::new(MASMP_TEMPLATE_V1, BASELINE_TEMPLATE_V1, catalog)
    }

    pub fn new(masmp: &str, baseline: &str, catalog: &SimConfig) -> Self {
        Self {
            masmp: normalize(masmp),
            baseline: normalize(baseline),
            units: catalog.units.iter().map(|u| u.name.clone()).collect(),
            structures: catalog.structures.iter().map(|s| s.name.clone()).collect(),
        }
    }

    /// State-machine prompt with observation and latest strategy record.
    pub fn compile_prompt(
        &self,
        spec: &MachineSpec,
        obs_text: &str,
        last: Option<&StrategyRecord>,
    ) -> String {
        let states = spec
            .states
            .iter()
            .map(|s| {
                let mark = if *s == spec.initial_state { " (initial)" } else { "" };
                format!("- {s}{mark}")
            })
            .collect::<Vec<_>>()
            .join("\n");

        let mut transitions = String::new();
        for t in &spec.transitions {
            let _ = writeln!(
                transitions,
                "- {} -> {} [priority {}] when {}: {}",
                t.from, t.to, t.priority, t.predicate, t.gloss
            );
        }
        if transitions.is_empty() {
            transitions.push_str("- none\n");
        }

        let mut state_actions = String::new();
        for s in &spec.states {
            let vars: Vec<String> = spec
                .variables
                .iter()
                .filter_map(|v| v.value_for(s).map(|val| format!("{}={val}", v.name)))
                .collect();
            let mut actions: Vec<String> = spec.policies[s]
                .action_templates()
                .into_iter()
                .map(|a| a.to_string())
                .collect();
            dedup_in_order(&mut actions);
            let _ = write!(state_actions, "- in {s}:");
            if !vars.is_empty() {
                let _ = write!(state_actions, " set {};", vars.join(", "));
            }
            let _ = writeln!(state_actions, " may issue {}", actions.join(", "));
        }

        let mut trees = String::new();
        for (state, tree) in &spec.policies {
            let _ = writeln!(trees, "Tree for {state}:");
            render_bt(tree, 1, &mut trees);
        }

        let mut rules = String::new();
        for r in &spec.rules {
            let acts: Vec<String> = r.actions.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(rules, "- when {}: {}. {}", r.predicate, acts.join(", "), r.gloss);
        }
        if rules.is_empty() {
            rules.push_str("- none\n");
        }

        let variable_lines = spec
            .variables
            .iter()
            .map(|v| format!("[{}]:<value>", v.name))
            .collect::<Vec<_>>()
            .join("\n");

        let memory = match last {
            None => NO_PRIOR_STRATEGY.to_owned(),
            Some(rec) => {
                let mut m = format!("Latest strategy, recorded at step {}:\n", rec.timestep);
                for (k, v) in &rec.variables {
                    let _ = writeln!(m, "[{k}]:<{v}>");
                }
                m.pop();
                m
            }
        };

        fill(
            &self.masmp,
            &[
                ("states", states),
                ("transitions", trim_nl(transitions)),
                ("state_actions", trim_nl(state_actions)),
                ("behavior_trees", trim_nl(trees)),
                ("rules", trim_nl(rules)),
                ("variable_lines", variable_lines),
                ("units", self.units.join(", ")),
                ("structures", self.structures.join(", ")),
                ("regions", region_list()),
                ("observation", normalize(obs_text.trim_end())),
                ("memory", memory),
            ],
        )
    }

    /// Memoryless prompt: role, output contract and observation only.
    pub fn compile_baseline_prompt(&self, obs_text: &str) -> String {
        fill(
            &self.baseline,
            &[
                ("units", self.units.join(", ")),
                ("structures", self.structures.join(", ")),
                ("regions", region_list()),
                ("observation", normalize(obs_text.trim_end())),
            ],
        )
    }
}

fn region_list() -> String {
    Region::ALL.map(Region::name).join(", ")
}

fn normalize(s: &str) -> String {
    s.replace("\r\n", "\n")
}

fn trim_nl(mut s: String) -> String {
    while s.ends_with('\n') {
        s.pop();
    }
    s
}

fn dedup_in_order(v: &mut Vec<String>) {
    let mut seen = std::collections::HashSet::new();
    v.retain(|x| seen.insert(x.clone()));
}

fn render_bt(node: &BtNode, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        BtNode::Selector(cs) | BtNode::Sequence(cs) => {
            let kind = if matches!(node, BtNode::Selector(_)) { "selector" } else { "sequence" };
            let _ = writeln!(out, "{pad}{kind}");
            for c in cs {
                render_bt(c, depth + 1, out);
            }
        }
        BtNode::Condition(p) => {
            let _ = writeln!(out, "{pad}condition {p}");
        }
        BtNode::Action(a) => {
            let _ = writeln!(out, "{pad}action {a}");
        }
    }
}

/// Replaces every `{{name}}` in `template`. Unknown slots are a bug in the
/// asset and panic.
fn fill(template: &str, slots: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").expect("unterminated template slot");
        let name = &after[..end];
        let value = slots
            .iter()
            .find(|(n, _)| *n == name)
            .unwrap_or_else(|| panic!("template slot `{name}` has no value"));
        out.push_str(&value.1);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    out
}

fn counts(map: &BTreeMap<String, u32>) -> String {
    if map.is_empty() {
        return "none".into();
    }
    map.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Key-value rendering, one field per line.
pub fn render_observation(o: &Observation) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "{k}: {v}");
    };
    line("tick", o.tick.to_string());
    line("home", o.home.to_string());
    line("enemy_home", o.enemy_home.to_string());
    line("minerals", o.minerals.to_string());
    line("gas", o.gas.to_string());
    line("worker_count", o.worker_count.to_string());
    line("workers_queued", o.workers_queued.to_string());
    line("structures", counts(&o.structures));
    line("tech_structures", o.tech_structures.to_string());
    line("tech_queued", o.tech_queued.to_string());
    let queue = if o.production_queue.is_empty() {
        "none".to_owned()
    } else {
        o.production_queue
            .iter()
            .map(|(k, r)| format!("{k}@{r}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    line("production_queue", queue);
    line("army", counts(&o.army));
    line("army_location", o.army_location.to_string());
    line("own_army_supply", o.own_army_supply.to_string());
    line("own_advanced_count", o.own_advanced_count.to_string());
    match o.visible_enemy_army_region {
        Some(r) => {
            line("visible_enemy_army", counts(&o.visible_enemy_army));
            line("visible_enemy_army_region", r.to_string());
        }
        None => {
            line("visible_enemy_army", NO_ENEMY_VISIBLE.to_owned());
            line("visible_enemy_army_region", "none".into());
        }
    }
    line("visible_enemy_army_supply", o.visible_enemy_army_supply.to_string());
    line("visible_enemy_reinforcements", o.visible_enemy_reinforcements.to_string());
    line("visible_enemy_structures", counts(&o.visible_enemy_structures));
    let combat = match o.last_combat_summary {
        None => "none".to_owned(),
        Some(c) => format!(
            "tick={} region={} own_losses={} enemy_losses={}",
            c.tick, c.region, c.own_losses, c.enemy_losses
        ),
    };
    line("last_combat", combat);
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("observation text line {line}: {message}")]
pub struct ObservationTextError {
    pub line: usize,
    pub message: String,
}

/// Inverse of [`render_observation`].
pub fn parse_observation(text: &str) -> Result<Observation, ObservationTextError> {
    let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let (k, v) = l.split_once(": ").ok_or_else(|| ObservationTextError {
            line: i + 1,
            message: "expected `key: value`".into(),
        })?;
        fields.insert(k, (i + 1, v));
    }
    let get = |k: &str| {
        fields.get(k).copied().ok_or_else(|| ObservationTextError {
            line: 0,
            message: format!("missing field `{k}`"),
        })
    };
    let bad = |line: usize, what: &str| ObservationTextError {
        line,
        message: format!("malformed {what}"),
    };
    let num = |k: &str| -> Result<u32, ObservationTextError> {
        let (l, v) = get(k)?;
        v.parse().map_err(|_| bad(l, k))
    };
    let region = |k: &str| -> Result<Region, ObservationTextError> {
        let (l, v) = get(k)?;
        Region::parse(v).ok_or_else(|| bad(l, k))
    };
    let map = |k: &str| -> Result<BTreeMap<String, u32>, ObservationTextError> {
        let (l, v) = get(k)?;
        if v == "none" || v == NO_ENEMY_VISIBLE {
            return Ok(BTreeMap::new());
        }
        v.split(' ')
            .map(|kv| {
                let (name, n) = kv.split_once('=').ok_or_else(|| bad(l, k))?;
                Ok((name.to_owned(), n.parse().map_err(|_| bad(l, k))?))
            })
            .collect()
    };

    let (ql, qv) = get("production_queue")?;
    let production_queue = if qv == "none" {
        Vec::new()
    } else {
        qv.split(' ')
            .map(|e| {
                let (name, r) = e.split_once('@').ok_or_else(|| bad(ql, "production_queue"))?;
                Ok((name.to_owned(), r.parse().map_err(|_| bad(ql, "production_queue"))?))
            })
            .collect::<Result<_, _>>()?
    };

    let (rl, rv) = get("visible_enemy_army_region")?;
    let visible_enemy_army_region = match rv {
        "none" => None,
        r => Some(Region::parse(r).ok_or_else(|| bad(rl, "visible_enemy_army_region"))?),
    };

    let (cl, cv) = get("last_combat")?;
    let last_combat_summary = if cv == "none" {
        None
    } else {
        let mut kv = BTreeMap::new();
        for part in cv.split(' ') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(cl, "last_combat"))?;
            kv.insert(k, v);
        }
        let n = |k: &str| -> Result<u32, ObservationTextError> {
            kv.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(cl, "last_combat"))
        };
        Some(CombatSummary {
            tick: n("tick")?,
            region: kv
                .get("region")
                .and_then(|r| Region::parse(r))
                .ok_or_else(|| bad(cl, "last_combat"))?,
            own_losses: n("own_losses")?,
            enemy_losses: n("enemy_losses")?,
        })
    };

    Ok(Observation {
        tick: num("tick")?,
        home: region("home")?,
        enemy_home: region("enemy_home")?,
        minerals: num("minerals")?,
        gas: num("gas")?,
        worker_count: num("worker_count")?,
        workers_queued: num("workers_queued")?,
        structures: map("structures")?,
        tech_structures: num("tech_structures")?,
        tech_queued: num("tech_queued")?,
        production_queue,
        army: map("army")?,
        army_location: region("army_location")?,
        own_army_supply: num("own_army_supply")?,
        own_advanced_count: num("own_advanced_count")?,
        visible_enemy_army: map("visible_enemy_army")?,
        visible_enemy_army_region,
        visible_enemy_army_supply: num("visible_enemy_army_supply")?,
        visible_enemy_reinforcements: num("visible_enemy_reinforcements")?,
        visible_enemy_structures: map("visible_enemy_structures")?,
        last_combat_summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::StrategyVars;
    use crate::sim::{observe, Player, WorldState};

    fn setup() -> (SimConfig, MachineSpec, Observation) {
        let cfg = SimConfig::default_config();
        let spec = MachineSpec::default_spec(&cfg);
        let obs = observe(&WorldState::new(&cfg, 0), &cfg, Player::A);
        (cfg, spec, obs)
    }

    fn record(pairs: &[(&str, &str)]) -> StrategyRecord {
        let variables: StrategyVars = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        StrategyRecord {
            timestep: 3,
            variables,
        }
    }

    #[test]
    fn empty_enemy_set_is_stated() {
        let (_, _, obs) = setup();
        let text = render_observation(&obs);
        assert!(text.contains("visible_enemy_army: no enemy units visible\n"));
        assert_eq!(text, render_observation(&obs));
    }

    #[test]
    fn supply_numbers_verbatim() {
        let (_, _, mut obs) = setup();
        obs.own_army_supply = 30;
        obs.visible_enemy_army_supply = 12;
        obs.visible_enemy_army_region = Some(Region::Center);
        obs.visible_enemy_army.insert("zealot".into(), 6);
        let text = render_observation(&obs);
        assert!(text.contains("own_army_supply: 30\n"));
        assert!(text.contains("visible_enemy_army_supply: 12\n"));
        assert_eq!(parse_observation(&text).unwrap(), obs);
    }

    #[test]
    fn memory_slot_embeds_record() {
        let (cfg, spec, obs) = setup();
        let t = PromptTemplate::v1(&cfg);
        let p = t.compile_prompt(&spec, &render_observation(&obs), Some(&record(&[("Tactic", "defensive")])));
        assert!(p.contains("[Tactic]:<defensive>"));
        assert!(!p.contains(NO_PRIOR_STRATEGY));
    }

    #[test]
    fn memory_slot_sentinel() {
        let (cfg, spec, obs) = setup();
        let p = PromptTemplate::v1(&cfg).compile_prompt(&spec, &render_observation(&obs), None);
        let memory = p.split("## MEMORY\n").nth(1).unwrap();
        assert_eq!(memory.trim_end(), NO_PRIOR_STRATEGY);
        assert!(crate::output::extract_strategies(memory).is_empty());
    }

    #[test]
    fn baseline_has_no_tactic() {
        let (cfg, _, obs) = setup();
        let p = PromptTemplate::v1(&cfg).compile_baseline_prompt(&render_observation(&obs));
        assert!(!p.contains("[Tactic]"));
        assert!(!p.contains("{{"));
    }

    #[test]
    fn all_slots_filled() {
        let (cfg, spec, obs) = setup();
        let p = PromptTemplate::v1(&cfg).compile_prompt(&spec, &render_observation(&obs), None);
        assert!(!p.contains("{{") && !p.contains("}}"));
    }

    #[test]
    fn crlf_normalized() {
        let (cfg, spec, obs) = setup();
        let lf = PromptTemplate::v1(&cfg);
        let crlf = PromptTemplate::new(
            &MASMP_TEMPLATE_V1.replace('\n', "\r\n"),
            &BASELINE_TEMPLATE_V1.replace('\n', "\r\n"),
            &cfg,
        );
        let text = render_observation(&obs);
        assert_eq!(
            lf.compile_prompt(&spec, &text, None),
            crlf.compile_prompt(&spec, &text.replace('\n', "\r\n"), None)
        );
    }
}
