#![allow(dead_code)]

use std::sync::Arc;

use masmp_core::action::{ActionCommand, ValidatedAction};
use masmp_core::machine::MachineSpec;
use masmp_core::memory::{StrategyVars, TACTIC};
use masmp_core::output::{validate_actions, ActionCandidate};
use masmp_core::sim::{observe, Observation, Player, Region, SimConfig, Terminal, WorldState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cfg() -> SimConfig {
    SimConfig::default_config()
}

pub fn spec(cfg: &SimConfig) -> Arc<MachineSpec> {
    Arc::new(MachineSpec::default_spec(cfg))
}

/// Every well-formed order the catalog allows, valid or not in a given state.
pub fn order_menu(cfg: &SimConfig) -> Vec<ActionCommand> {
    let mut menu: Vec<ActionCommand> = cfg.units.iter().map(|u| ActionCommand::train(&u.name)).collect();
    menu.extend(cfg.structures.iter().map(|s| ActionCommand::build(&s.name)));
    for r in Region::ALL {
        menu.push(ActionCommand::attack(r));
        menu.push(ActionCommand::scout(r));
    }
    menu.push(ActionCommand::retreat());
    menu.push(ActionCommand::noop());
    menu
}

pub fn random_orders(
    cfg: &SimConfig,
    world: &WorldState,
    player: Player,
    rng: &mut impl Rng,
) -> Vec<ValidatedAction> {
    let menu = order_menu(cfg);
    let n = [0, 0, 1, 1, 2, 3].choose(rng).copied().unwrap();
    let cands: Vec<ActionCandidate> = (0..n)
        .map(|_| ActionCandidate::from_command(menu.choose(rng).unwrap()))
        .collect();
    validate_actions(&cands, cfg, &observe(world, cfg, player)).0
}

/// Worlds visited while both sides play random validated orders.
pub fn random_play(cfg: &SimConfig, seed: u64, steps: usize) -> Vec<WorldState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = WorldState::new(cfg, seed);
    // Richer positions: start with some money and a tech building option.
    for p in &mut world.players {
        p.minerals = rng.gen_range(0..800);
        p.gas = rng.gen_range(0..300);
    }
    let mut out = vec![world.clone()];
    while out.len() < steps && world.terminal() == Terminal::Ongoing {
        let a = random_orders(cfg, &world, Player::A, &mut rng);
        let b = random_orders(cfg, &world, Player::B, &mut rng);
        world.step(cfg, &a, &b).expect("validated orders never violate the contract");
        out.push(world.clone());
    }
    out
}

/// Observations of player A from random play, with numeric fields jittered
/// so thresholds on both sides of every predicate get exercised.
pub fn random_observations(cfg: &SimConfig, seed: u64, n: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = Vec::with_capacity(n);
    let mut episode = 0u64;
    while out.len() < n {
        let worlds = random_play(cfg, seed.wrapping_mul(1000) + episode, 400);
        episode += 1;
        for w in worlds.iter().step_by(7) {
            let mut o = observe(w, cfg, Player::A);
            if rng.gen_bool(0.5) {
                o.minerals = rng.gen_range(0..1200);
                o.gas = rng.gen_range(0..400);
                o.tick = rng.gen_range(0..2000);
                o.own_army_supply = rng.gen_range(0..80);
                o.visible_enemy_army_supply = rng.gen_range(0..60);
                o.visible_enemy_reinforcements = rng.gen_range(0..20).min(o.visible_enemy_army_supply);
                o.worker_count = rng.gen_range(0..30);
                o.tech_structures = rng.gen_range(0..2);
            }
            out.push(o);
            if out.len() == n {
                break;
            }
        }
    }
    out
}

/// Absent, or a record naming a random state of `spec`.
pub fn random_prev(spec: &MachineSpec, rng: &mut impl Rng) -> Option<StrategyVars> {
    if rng.gen_bool(0.2) {
        return None;
    }
    let state = spec.states.choose(rng).unwrap().clone();
    let mut vars = StrategyVars::new();
    vars.insert(TACTIC.to_owned(), state.clone());
    for d in spec.variables.iter().filter(|d| d.name != TACTIC) {
        if let Some(v) = d.value_for(&state) {
            vars.insert(d.name.clone(), v.to_owned());
        }
    }
    Some(vars)
}
