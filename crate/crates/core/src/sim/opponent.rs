//! Scripted built-in opponents graded by difficulty 1..=7.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{SimConfig, Tier};
use super::observe::observe;
use super::world::{Player, WorldState};
use super::SimError;
use crate::action::ActionCommand;

pub const MIN_DIFFICULTY: u8 = 1;
pub const MAX_DIFFICULTY: u8 = 7;

/// Army trains attempted per tick.
const MAX_TRAINS_PER_TICK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpponentScript {
    pub difficulty: u8,
    /// Thousandths; 1000 is parity with the agent.
    pub income_multiplier_milli: u32,
    pub first_attack_tick: u32,
    pub attack_period: u32,
    /// Weights over army unit types, in catalog order.
    pub unit_mix: Vec<(String, f64)>,
}

impl OpponentScript {
    /// Linear interpolation between the level-1 and level-7 anchors.
    pub fn for_difficulty(cfg: &SimConfig, difficulty: u8) -> Result<Self, SimError> {
        if !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&difficulty) {
            return Err(SimError::Difficulty(difficulty));
        }
        let lo = &cfg.opponent.level1;
        let hi = &cfg.opponent.level7;
        let f = (difficulty - MIN_DIFFICULTY) as f64 / (MAX_DIFFICULTY - MIN_DIFFICULTY) as f64;
        let lerp = |a: f64, b: f64| a + (b - a) * f;
        let unit_mix = cfg
            .army_units()
            .map(|u| {
                let a = lo.unit_mix.get(&u.name).copied().unwrap_or(0.0);
                let b = hi.unit_mix.get(&u.name).copied().unwrap_or(0.0);
                (u.name.clone(), lerp(a, b))
            })
            .collect();
        Ok(Self {
            difficulty,
            income_multiplier_milli: (lerp(lo.income_multiplier, hi.income_multiplier) * 1000.0)
                .round() as u32,
            first_attack_tick: lerp(lo.first_attack_tick as f64, hi.first_attack_tick as f64)
                .round() as u32,
            attack_period: lerp(lo.attack_period as f64, hi.attack_period as f64).round() as u32,
            unit_mix,
        })
    }

    /// Share of the mix weight on advanced-tier units.
    pub fn advanced_fraction(&self, cfg: &SimConfig) -> f64 {
        let total: f64 = self.unit_mix.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let adv: f64 = self
            .unit_mix
            .iter()
            .filter(|(n, _)| cfg.unit(n).map(|u| u.tier) == Some(Tier::Advanced))
            .map(|(_, w)| w)
            .sum();
        adv / total
    }

    pub fn is_attack_tick(&self, tick: u32) -> bool {
        tick >= self.first_attack_tick && (tick - self.first_attack_tick) % self.attack_period == 0
    }
}

fn tick_rng(world: &WorldState, player: Player) -> ChaCha8Rng {
    let seed = world
        .rng_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((world.tick as u64) << 1 | player.index() as u64);
    ChaCha8Rng::seed_from_u64(seed)
}

/// Orders for the scripted player this tick. Deterministic in
/// (script, world, seed); the caller still validates them.
pub fn run_opponent(
    script: &OpponentScript,
    cfg: &SimConfig,
    world: &WorldState,
    player: Player,
) -> Vec<ActionCommand> {
    let obs = observe(world, cfg, player);
    let mut rng = tick_rng(world, player);
    let mut minerals = obs.minerals;
    let mut gas = obs.gas;
    let mut out = Vec::new();

    let worker = cfg.worker();
    if obs.worker_count + obs.workers_queued < cfg.sim.worker_saturation
        && minerals >= worker.mineral_cost
        && gas >= worker.gas_cost
    {
        out.push(ActionCommand::train(&worker.name));
        minerals -= worker.mineral_cost;
        gas -= worker.gas_cost;
    }

    let wants_tech = script
        .unit_mix
        .iter()
        .any(|(n, w)| *w > 0.0 && cfg.unit(n).and_then(|u| u.prerequisite.as_ref()).is_some());
    let mut saving = false;
    if wants_tech && obs.tech_structures + obs.tech_queued == 0 {
        if let Some(tech) = cfg.structures.iter().find(|s| cfg.is_tech(&s.name)) {
            if minerals >= tech.mineral_cost && gas >= tech.gas_cost {
                out.push(ActionCommand::build(&tech.name));
                minerals -= tech.mineral_cost;
                gas -= tech.gas_cost;
            } else {
                saving = true;
            }
        }
    }

    if !saving {
        let available: Vec<(&str, f64)> = script
            .unit_mix
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .filter(|(n, _)| {
                cfg.unit(n)
                    .and_then(|u| u.prerequisite.as_ref())
                    .map_or(true, |req| obs.structure_count(req) > 0)
            })
            .map(|(n, w)| (n.as_str(), *w))
            .collect();
        let total: f64 = available.iter().map(|(_, w)| w).sum();
        for _ in 0..MAX_TRAINS_PER_TICK {
            if available.is_empty() || total <= 0.0 {
                break;
            }
            let mut pick = rng.gen::<f64>() * total;
            let mut chosen = available[available.len() - 1].0;
            for (name, w) in &available {
                if pick < *w {
                    chosen = name;
                    break;
                }
                pick -= w;
            }
            let def = cfg.unit(chosen).expect("mix names catalog units");
            if minerals < def.mineral_cost || gas < def.gas_cost {
                break;
            }
            minerals -= def.mineral_cost;
            gas -= def.gas_cost;
            out.push(ActionCommand::train(chosen));
        }
    }

    let enemy_at_home = obs.visible_enemy_army_region == Some(obs.home);
    if enemy_at_home && obs.army_location != obs.home && !obs.army.is_empty() {
        out.push(ActionCommand::retreat());
    } else if script.is_attack_tick(obs.tick) && !obs.army.is_empty() {
        out.push(ActionCommand::attack(obs.enemy_home));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Verb;

    #[test]
    fn difficulty_monotone_parameters() {
        let cfg = SimConfig::default_config();
        let scripts: Vec<_> = (1..=7)
            .map(|d| OpponentScript::for_difficulty(&cfg, d).unwrap())
            .collect();
        for pair in scripts.windows(2) {
            assert!(pair[1].income_multiplier_milli >= pair[0].income_multiplier_milli);
            assert!(pair[1].first_attack_tick <= pair[0].first_attack_tick);
            assert!(pair[1].advanced_fraction(&cfg) >= pair[0].advanced_fraction(&cfg));
        }
        assert_eq!(scripts[0].income_multiplier_milli, 500);
        assert_eq!(scripts[6].first_attack_tick, 300);
    }

    #[test]
    fn difficulty_out_of_range() {
        let cfg = SimConfig::default_config();
        assert!(OpponentScript::for_difficulty(&cfg, 0).is_err());
        assert!(OpponentScript::for_difficulty(&cfg, 8).is_err());
    }

    #[test]
    fn no_attack_before_schedule() {
        let cfg = SimConfig::default_config();
        let script = OpponentScript::for_difficulty(&cfg, 4).unwrap();
        let mut w = WorldState::new(&cfg, 9);
        w.players[1].army = vec![crate::sim::Unit { kind: "zealot".into(), hp: 150 }];
        for tick in 0..script.first_attack_tick {
            w.tick = tick;
            let acts = run_opponent(&script, &cfg, &w, Player::B);
            assert!(acts.iter().all(|a| a.verb != Verb::Attack), "tick {tick}");
        }
        w.tick = script.first_attack_tick;
        let acts = run_opponent(&script, &cfg, &w, Player::B);
        assert!(acts.iter().any(|a| a.verb == Verb::Attack));
    }

    #[test]
    fn broke_opponent_only_does_economy() {
        let cfg = SimConfig::default_config();
        let script = OpponentScript::for_difficulty(&cfg, 7).unwrap();
        let mut w = WorldState::new(&cfg, 9);
        w.players[1].minerals = 60;
        let acts = run_opponent(&script, &cfg, &w, Player::B);
        assert!(acts.iter().all(|a| matches!(a.verb, Verb::Train | Verb::Build)));
        assert!(acts.iter().all(|a| a.argument.as_deref() == Some("probe")
            || cfg.structure(a.argument.as_deref().unwrap()).is_some()));
    }

    #[test]
    fn deterministic_in_seed_and_tick() {
        let cfg = SimConfig::default_config();
        let script = OpponentScript::for_difficulty(&cfg, 5).unwrap();
        let mut w = WorldState::new(&cfg, 11);
        w.players[1].minerals = 2000;
        w.players[1].gas = 500;
        w.players[1].structures.push(crate::sim::Structure {
            kind: "cybernetics_core".into(),
            hp: 550,
        });
        let a = run_opponent(&script, &cfg, &w, Player::B);
        let b = run_opponent(&script, &cfg, &w, Player::B);
        assert_eq!(a, b);
    }
}
