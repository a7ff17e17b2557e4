use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::catalog::{SimConfig, Tier};
use super::world::{CombatSummary, Player, Region, WorldState};

/// One player's fog-of-war filtered view of the world.
///
/// Supply and tier aggregates are computed at observation time so that every
/// predicate feature is a function of the observation alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub tick: u32,
    pub home: Region,
    pub enemy_home: Region,
    pub minerals: u32,
    pub gas: u32,
    pub worker_count: u32,
    pub workers_queued: u32,
    pub structures: BTreeMap<String, u32>,
    pub tech_structures: u32,
    pub tech_queued: u32,
    pub production_queue: Vec<(String, u32)>,
    pub army: BTreeMap<String, u32>,
    pub army_location: Region,
    pub own_army_supply: u32,
    pub own_advanced_count: u32,
    pub visible_enemy_army: BTreeMap<String, u32>,
    pub visible_enemy_army_region: Option<Region>,
    pub visible_enemy_army_supply: u32,
    /// Supply of visible enemy units that joined their army within the
    /// reinforcement window.
    pub visible_enemy_reinforcements: u32,
    pub visible_enemy_structures: BTreeMap<String, u32>,
    pub last_combat_summary: Option<CombatSummary>,
}

impl Observation {
    pub fn own_army_count(&self) -> u32 {
        self.army.values().sum()
    }

    pub fn visible_enemy_army_count(&self) -> u32 {
        self.visible_enemy_army.values().sum()
    }

    pub fn structure_count(&self, kind: &str) -> u32 {
        self.structures.get(kind).copied().unwrap_or(0)
    }
}

/// Regions where `player` has presence: home while any structure stands, the
/// army location while the army is non-empty, and an active scout target.
pub fn presence(world: &WorldState, player: Player) -> Vec<Region> {
    let ps = world.player(player);
    let mut regions = Vec::new();
    if !ps.structures.is_empty() {
        regions.push(player.home());
    }
    if !ps.army.is_empty() {
        regions.push(ps.army_location);
    }
    if let Some((r, _)) = ps.scout {
        regions.push(r);
    }
    regions.sort();
    regions.dedup();
    regions
}

pub fn observe(world: &WorldState, cfg: &SimConfig, player: Player) -> Observation {
    let own = world.player(player);
    let enemy = world.player(player.other());
    let seen = presence(world, player);

    let mut structures = BTreeMap::new();
    for s in &own.structures {
        *structures.entry(s.kind.clone()).or_insert(0) += 1;
    }
    let tech_structures = own
        .structures
        .iter()
        .filter(|s| cfg.is_tech(&s.kind))
        .count() as u32;
    let worker = &cfg.worker().name;
    let workers_queued = own
        .production_queue
        .iter()
        .filter(|q| &q.kind == worker)
        .count() as u32;
    let tech_queued = own
        .production_queue
        .iter()
        .filter(|q| cfg.is_tech(&q.kind))
        .count() as u32;

    let mut army = BTreeMap::new();
    let mut own_advanced_count = 0;
    for u in &own.army {
        *army.entry(u.kind.clone()).or_insert(0) += 1;
        if cfg.unit(&u.kind).map(|d| d.tier) == Some(Tier::Advanced) {
            own_advanced_count += 1;
        }
    }

    let enemy_army_visible = !enemy.army.is_empty() && seen.contains(&enemy.army_location);
    let mut visible_enemy_army = BTreeMap::new();
    let mut visible_enemy_army_supply = 0;
    let mut visible_enemy_reinforcements = 0;
    if enemy_army_visible {
        for u in &enemy.army {
            *visible_enemy_army.entry(u.kind.clone()).or_insert(0) += 1;
        }
        visible_enemy_army_supply = enemy.army_supply(cfg);
        visible_enemy_reinforcements = enemy.arrivals.iter().map(|(_, s)| s).sum();
    }

    let mut visible_enemy_structures = BTreeMap::new();
    if seen.contains(&player.other().home()) {
        for s in &enemy.structures {
            *visible_enemy_structures.entry(s.kind.clone()).or_insert(0) += 1;
        }
    }

    Observation {
        tick: world.tick,
        home: player.home(),
        enemy_home: player.other().home(),
        minerals: own.minerals,
        gas: own.gas,
        worker_count: own.worker_count,
        workers_queued,
        structures,
        tech_structures,
        tech_queued,
        production_queue: own
            .production_queue
            .iter()
            .map(|q| (q.kind.clone(), q.remaining))
            .collect(),
        army,
        army_location: own.army_location,
        own_army_supply: own.army_supply(cfg),
        own_advanced_count,
        visible_enemy_army_region: enemy_army_visible.then_some(enemy.army_location),
        visible_enemy_army,
        visible_enemy_army_supply,
        visible_enemy_reinforcements,
        visible_enemy_structures,
        last_combat_summary: own.last_combat,
    }
}
