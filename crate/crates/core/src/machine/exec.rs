//! Deterministic symbolic executor: the ground-truth interpretation of a
//! machine spec without any language model.

use serde::Serialize;
use thiserror::Error;

use super::spec::{ActionTemplate, Binding, BtNode, MachineSpec, TemplateArg};
use crate::action::ActionCommand;
use crate::memory::{StrategyVars, TACTIC};
use crate::sim::{Observation, Region};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("stale memory: Tactic `{0}` is not a state of this machine")]
    StaleMemory(String),
}

/// Result of one decision cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub previous_state: String,
    pub state: String,
    /// Index into `spec.transitions` of the transition that fired.
    pub fired: Option<usize>,
    pub variables: StrategyVars,
    pub actions: Vec<ActionCommand>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Success,
    Failure,
}

/// Resolves the current state from `prev`, fires the lowest-priority true
/// transition, ticks that state's behavior tree and appends every atomic
/// rule whose predicate holds.
pub fn symbolic_execute(
    spec: &MachineSpec,
    obs: &Observation,
    prev: Option<&StrategyVars>,
) -> Result<Decision, ExecError> {
    let current = match prev.and_then(|p| p.get(TACTIC)) {
        Some(t) if spec.has_state(t) => t.clone(),
        Some(t) => return Err(ExecError::StaleMemory(t.clone())),
        None => spec.initial_state.clone(),
    };

    let fired = spec
        .transitions
        .iter()
        .enumerate()
        .filter(|(_, t)| t.from == current && t.predicate.eval(obs))
        .min_by_key(|(_, t)| t.priority)
        .map(|(i, _)| i);
    let state = fired
        .map(|i| spec.transitions[i].to.clone())
        .unwrap_or_else(|| current.clone());

    let mut variables = StrategyVars::new();
    for decl in &spec.variables {
        let value = if decl.name == TACTIC {
            Some(state.clone())
        } else {
            decl.value_for(&state)
                .map(str::to_owned)
                .or_else(|| prev.and_then(|p| p.get(&decl.name).cloned()))
        };
        if let Some(v) = value {
            variables.insert(decl.name.clone(), v);
        }
    }

    let mut actions = Vec::new();
    let policy = &spec.policies[&state];
    tick(policy, obs, &variables, &mut actions);
    for rule in &spec.rules {
        if rule.predicate.eval(obs) {
            actions.extend(rule.actions.iter().map(|t| instantiate(t, obs, &variables)));
        }
    }

    Ok(Decision {
        previous_state: current,
        state,
        fired,
        variables,
        actions,
    })
}

fn tick(
    node: &BtNode,
    obs: &Observation,
    vars: &StrategyVars,
    out: &mut Vec<ActionCommand>,
) -> Status {
    match node {
        BtNode::Selector(children) => {
            for c in children {
                if tick(c, obs, vars, out) == Status::Success {
                    return Status::Success;
                }
            }
            Status::Failure
        }
        BtNode::Sequence(children) => {
            for c in children {
                if tick(c, obs, vars, out) == Status::Failure {
                    return Status::Failure;
                }
            }
            Status::Success
        }
        BtNode::Condition(p) => {
            if p.eval(obs) {
                Status::Success
            } else {
                Status::Failure
            }
        }
        BtNode::Action(t) => {
            out.push(instantiate(t, obs, vars));
            Status::Success
        }
    }
}

fn instantiate(t: &ActionTemplate, obs: &Observation, vars: &StrategyVars) -> ActionCommand {
    let arg = t.arg.as_ref().map(|a| match a {
        TemplateArg::Literal(s) => s.clone(),
        TemplateArg::Binding(Binding::Home) => obs.home.name().to_owned(),
        TemplateArg::Binding(Binding::EnemyHome) => obs.enemy_home.name().to_owned(),
        TemplateArg::Binding(Binding::Front) => match obs.visible_enemy_army_region {
            Some(r) if r != obs.home => r.name().to_owned(),
            _ => Region::Center.name().to_owned(),
        },
        // The parser guarantees every state assigns the variable.
        TemplateArg::Binding(Binding::Variable(name)) => vars
            .get(name)
            .cloned()
            .expect("action variables are assigned in every state"),
    });
    ActionCommand {
        verb: t.verb,
        argument: arg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Verb;
    use crate::machine::parse_spec;
    use crate::sim::{observe, Player, SimConfig, WorldState};

    const SPEC: &str = r#"
STATES
calm
alert
VARIABLES
Tactic
Focus : calm=zealot alert=stalker
TRANSITIONS
calm -> alert : 2 : minerals >= 100 : "rich"
calm -> calm : 1 : minerals >= 200 : "very rich, stay"
alert -> calm : 1 : minerals < 100 : "poor"
POLICY calm
(sel (seq (cond gas > 0) (act Train($Focus))) (act NoOp()))
POLICY alert
(seq (act Scout($front)) (cond gas > 1000) (act Attack($enemy_home)))
RULES
minerals >= 0 => Train(probe) : "always"
"#;

    fn setup() -> (MachineSpec, Observation) {
        let cfg = SimConfig::default_config();
        let spec = parse_spec(SPEC, &cfg).unwrap();
        let obs = observe(&WorldState::new(&cfg, 0), &cfg, Player::A);
        (spec, obs)
    }

    fn prev(state: &str) -> StrategyVars {
        [(TACTIC.to_string(), state.to_string())].into_iter().collect()
    }

    #[test]
    fn empty_memory_starts_in_initial_state() {
        let (spec, mut obs) = setup();
        obs.minerals = 50;
        let d = symbolic_execute(&spec, &obs, None).unwrap();
        assert_eq!(d.state, "calm");
        assert_eq!(d.fired, None);
        assert_eq!(
            d.actions,
            vec![ActionCommand::noop(), ActionCommand::train("probe")]
        );
        assert_eq!(d.variables["Focus"], "zealot");
    }

    #[test]
    fn lowest_priority_wins_ties() {
        let (spec, mut obs) = setup();
        obs.minerals = 250;
        let d = symbolic_execute(&spec, &obs, Some(&prev("calm"))).unwrap();
        assert_eq!(d.fired, Some(1));
        assert_eq!(d.state, "calm");
        obs.minerals = 150;
        let d = symbolic_execute(&spec, &obs, Some(&prev("calm"))).unwrap();
        assert_eq!(d.fired, Some(0));
        assert_eq!(d.state, "alert");
    }

    #[test]
    fn sequence_stops_at_first_failure() {
        let (spec, mut obs) = setup();
        obs.minerals = 150;
        let d = symbolic_execute(&spec, &obs, Some(&prev("alert"))).unwrap();
        assert_eq!(d.state, "alert");
        assert_eq!(d.actions[0], ActionCommand::scout(Region::Center));
        assert!(d.actions.iter().all(|a| a.verb != Verb::Attack));
        obs.gas = 2000;
        let d = symbolic_execute(&spec, &obs, Some(&prev("alert"))).unwrap();
        assert_eq!(d.actions[1], ActionCommand::attack(Region::HomeB));
    }

    #[test]
    fn stale_memory() {
        let (spec, obs) = setup();
        assert_eq!(
            symbolic_execute(&spec, &obs, Some(&prev("rush"))),
            Err(ExecError::StaleMemory("rush".into()))
        );
    }
}
