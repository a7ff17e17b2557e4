use std::fmt;

use serde::{Deserialize, Serialize};

use super::catalog::{CatalogEntry, SimConfig, UnitRole};
use super::SimError;
use crate::action::{ActionCommand, ValidatedAction, Verb};

/// The three-region map: `home_A -- center -- home_B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "home_A")]
    HomeA,
    #[serde(rename = "center")]
    Center,
    #[serde(rename = "home_B")]
    HomeB,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::HomeA, Region::Center, Region::HomeB];

    pub fn name(self) -> &'static str {
        match self {
            Region::HomeA => "home_A",
            Region::Center => "center",
            Region::HomeB => "home_B",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.name() == s)
    }

    fn index(self) -> i32 {
        match self {
            Region::HomeA => 0,
            Region::Center => 1,
            Region::HomeB => 2,
        }
    }

    /// Next region on the path towards `target`.
    pub fn step_towards(self, target: Region) -> Region {
        match self.index().cmp(&target.index()) {
            std::cmp::Ordering::Less => Region::ALL[(self.index() + 1) as usize],
            std::cmp::Ordering::Greater => Region::ALL[(self.index() - 1) as usize],
            std::cmp::Ordering::Equal => self,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Player {
    A,
    B,
}

impl Player {
    pub fn index(self) -> usize {
        match self {
            Player::A => 0,
            Player::B => 1,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::A => Player::B,
            Player::B => Player::A,
        }
    }

    pub fn home(self) -> Region {
        match self {
            Player::A => Region::HomeA,
            Player::B => Region::HomeB,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::A => "A",
            Player::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub kind: String,
    pub hp: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub kind: String,
    pub hp: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub kind: String,
    pub remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombatSummary {
    pub tick: u32,
    pub region: Region,
    pub own_losses: u32,
    pub enemy_losses: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerState {
    pub minerals: u32,
    pub gas: u32,
    /// Fractional income carried between ticks, in thousandths.
    pub mineral_carry: u32,
    pub gas_carry: u32,
    /// Income multiplier in thousandths (1000 = 1.0).
    pub income_multiplier_milli: u32,
    pub worker_count: u32,
    pub structures: Vec<Structure>,
    pub production_queue: Vec<QueueEntry>,
    pub army: Vec<Unit>,
    pub army_location: Region,
    pub army_destination: Region,
    pub travel_remaining: u32,
    pub scout: Option<(Region, u32)>,
    /// (tick, supply) of units that joined the army recently.
    pub arrivals: Vec<(u32, u32)>,
    pub last_combat: Option<CombatSummary>,
}

impl PlayerState {
    pub fn fresh(cfg: &SimConfig, player: Player) -> Self {
        let base = cfg.base().expect("validated config has a base");
        Self {
            minerals: cfg.sim.start_minerals,
            gas: cfg.sim.start_gas,
            mineral_carry: 0,
            gas_carry: 0,
            income_multiplier_milli: 1000,
            worker_count: cfg.sim.start_workers,
            structures: vec![Structure {
                kind: base.name.clone(),
                hp: base.hp,
            }],
            production_queue: Vec::new(),
            army: Vec::new(),
            army_location: player.home(),
            army_destination: player.home(),
            travel_remaining: 0,
            scout: None,
            arrivals: Vec::new(),
            last_combat: None,
        }
    }

    pub fn has_structure(&self, kind: &str) -> bool {
        self.structures.iter().any(|s| s.kind == kind)
    }

    pub fn army_attack(&self, cfg: &SimConfig) -> u32 {
        self.army
            .iter()
            .map(|u| cfg.unit(&u.kind).map(|d| d.attack).unwrap_or(0))
            .sum()
    }

    pub fn army_supply(&self, cfg: &SimConfig) -> u32 {
        self.army
            .iter()
            .map(|u| cfg.unit(&u.kind).map(|d| d.supply).unwrap_or(0))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Ongoing,
    WinA,
    WinB,
    Draw,
}

/// Ground truth of one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u32,
    pub tick_limit: u32,
    pub rng_seed: u64,
    pub players: [PlayerState; 2],
}

/// What happened during one `step_world` call, for traces and tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StepReport {
    /// Catalog names successfully enqueued, per player.
    pub enqueued: [Vec<String>; 2],
    pub combat: [Option<CombatSummary>; 2],
}

impl WorldState {
    pub fn new(cfg: &SimConfig, seed: u64) -> Self {
        Self {
            tick: 0,
            tick_limit: cfg.sim.tick_limit,
            rng_seed: seed,
            players: [
                PlayerState::fresh(cfg, Player::A),
                PlayerState::fresh(cfg, Player::B),
            ],
        }
    }

    pub fn player(&self, p: Player) -> &PlayerState {
        &self.players[p.index()]
    }

    pub fn player_mut(&mut self, p: Player) -> &mut PlayerState {
        &mut self.players[p.index()]
    }

    /// Advance one tick. Actions are applied first, in list order, then
    /// income, production, movement and combat.
    pub fn step(
        &mut self,
        cfg: &SimConfig,
        actions_a: &[ValidatedAction],
        actions_b: &[ValidatedAction],
    ) -> Result<StepReport, SimError> {
        if self.terminal() != Terminal::Ongoing {
            return Err(SimError::Terminal);
        }
        let mut report = StepReport::default();
        for (player, actions) in [(Player::A, actions_a), (Player::B, actions_b)] {
            for action in actions {
                if let Some(kind) = self.apply_action(cfg, player, action.command())? {
                    report.enqueued[player.index()].push(kind);
                }
            }
        }
        for player in [Player::A, Player::B] {
            self.collect_income(cfg, player);
            self.advance_production(cfg, player);
            self.advance_movement(cfg, player);
        }
        report.combat = self.resolve_combat(cfg);
        for player in [Player::A, Player::B] {
            let tick = self.tick;
            let window = cfg.sim.reinforcement_window;
            let ps = self.player_mut(player);
            if ps.army.is_empty() {
                ps.army_location = player.home();
                ps.army_destination = player.home();
                ps.travel_remaining = 0;
            }
            ps.arrivals.retain(|(t, _)| t + window > tick);
        }
        self.tick += 1;
        Ok(report)
    }

    /// Re-checks the contract the output parser already enforced. Returns the
    /// enqueued catalog name for Train/Build.
    fn apply_action(
        &mut self,
        cfg: &SimConfig,
        player: Player,
        cmd: &ActionCommand,
    ) -> Result<Option<String>, SimError> {
        let violation = |reason: &str| SimError::ContractViolation {
            player,
            action: cmd.to_string(),
            reason: reason.to_owned(),
        };
        let arg = cmd.argument.as_deref();
        match cmd.verb {
            Verb::Train | Verb::Build => {
                let name = arg.ok_or_else(|| violation("missing argument"))?;
                let (minerals, gas, ticks, prereq) = match (cmd.verb, cfg.lookup(name)) {
                    (Verb::Train, Some(CatalogEntry::Unit(u))) => {
                        (u.mineral_cost, u.gas_cost, u.build_ticks, u.prerequisite.as_deref())
                    }
                    (Verb::Build, Some(CatalogEntry::Structure(s))) => {
                        (s.mineral_cost, s.gas_cost, s.build_ticks, s.prerequisite.as_deref())
                    }
                    _ => return Err(violation("unknown argument")),
                };
                let ps = self.player_mut(player);
                if let Some(req) = prereq {
                    if !ps.has_structure(req) {
                        return Err(violation("prerequisite missing"));
                    }
                }
                if ps.minerals < minerals || ps.gas < gas {
                    return Err(violation("unaffordable"));
                }
                ps.minerals -= minerals;
                ps.gas -= gas;
                ps.production_queue.push(QueueEntry {
                    kind: name.to_owned(),
                    remaining: ticks,
                });
                Ok(Some(name.to_owned()))
            }
            Verb::Attack | Verb::Scout => {
                let region = arg
                    .and_then(Region::parse)
                    .ok_or_else(|| violation("unknown region"))?;
                if region == player.home() {
                    return Err(violation("illegal target"));
                }
                let scout_ticks = cfg.sim.scout_ticks;
                let hop = cfg.sim.hop_ticks;
                let ps = self.player_mut(player);
                if cmd.verb == Verb::Scout {
                    ps.scout = Some((region, scout_ticks));
                } else {
                    ps.set_destination(region, hop);
                }
                Ok(None)
            }
            Verb::Retreat => {
                if arg.is_some() {
                    return Err(violation("unexpected argument"));
                }
                let hop = cfg.sim.hop_ticks;
                self.player_mut(player).set_destination(player.home(), hop);
                Ok(None)
            }
            Verb::NoOp => {
                if arg.is_some() {
                    return Err(violation("unexpected argument"));
                }
                Ok(None)
            }
        }
    }

    fn collect_income(&mut self, cfg: &SimConfig, player: Player) {
        let p = &cfg.sim;
        let ps = self.player_mut(player);
        let mining = ps.worker_count.min(p.worker_saturation) as u64;
        let harvesting = ps.worker_count.min(p.gas_worker_cap) as u64;
        let mult = ps.income_multiplier_milli as u64;
        let minerals = ps.mineral_carry as u64 + mining * p.mineral_rate as u64 * mult;
        let gas = ps.gas_carry as u64 + harvesting * p.gas_rate as u64 * mult;
        ps.minerals = ps.minerals.saturating_add((minerals / 1000) as u32);
        ps.mineral_carry = (minerals % 1000) as u32;
        ps.gas = ps.gas.saturating_add((gas / 1000) as u32);
        ps.gas_carry = (gas % 1000) as u32;
    }

    fn advance_production(&mut self, cfg: &SimConfig, player: Player) {
        let tick = self.tick;
        let ps = self.player_mut(player);
        let mut done = Vec::new();
        ps.production_queue.retain_mut(|entry| {
            entry.remaining -= 1;
            if entry.remaining == 0 {
                done.push(entry.kind.clone());
                false
            } else {
                true
            }
        });
        for kind in done {
            match cfg.lookup(&kind) {
                Some(CatalogEntry::Unit(u)) if u.role == UnitRole::Worker => ps.worker_count += 1,
                Some(CatalogEntry::Unit(u)) => {
                    ps.army.push(Unit { kind, hp: u.hp });
                    ps.arrivals.push((tick, u.supply));
                }
                Some(CatalogEntry::Structure(s)) => ps.structures.push(Structure { kind, hp: s.hp }),
                None => unreachable!("queue entries are checked on enqueue"),
            }
        }
    }

    fn advance_movement(&mut self, cfg: &SimConfig, player: Player) {
        let ps = self.player_mut(player);
        if let Some((_, remaining)) = ps.scout.as_mut() {
            *remaining -= 1;
            if *remaining == 0 {
                ps.scout = None;
            }
        }
        if ps.army_location == ps.army_destination {
            return;
        }
        ps.travel_remaining = ps.travel_remaining.saturating_sub(1);
        if ps.travel_remaining == 0 {
            ps.army_location = ps.army_location.step_towards(ps.army_destination);
            if ps.army_location != ps.army_destination {
                ps.travel_remaining = cfg.sim.hop_ticks;
            }
        }
    }

    fn resolve_combat(&mut self, cfg: &SimConfig) -> [Option<CombatSummary>; 2] {
        let tick = self.tick;
        let [a, b] = &mut self.players;
        let mut out = [None, None];
        let a_present = !a.army.is_empty();
        let b_present = !b.army.is_empty();
        if a_present && b_present && a.army_location == b.army_location {
            let region = a.army_location;
            let to_b = a.army_attack(cfg);
            let to_a = b.army_attack(cfg);
            let a_losses = apply_damage(&mut a.army, to_a, |u| &mut u.hp, |u| &u.kind);
            let b_losses = apply_damage(&mut b.army, to_b, |u| &mut u.hp, |u| &u.kind);
            out[0] = Some(CombatSummary {
                tick,
                region,
                own_losses: a_losses,
                enemy_losses: b_losses,
            });
            out[1] = Some(CombatSummary {
                tick,
                region,
                own_losses: b_losses,
                enemy_losses: a_losses,
            });
        } else {
            for player in [Player::A, Player::B] {
                let target = player.other().home();
                let (attacker, defender) = if player == Player::A {
                    (&*a, &mut *b)
                } else {
                    (&*b, &mut *a)
                };
                if attacker.army.is_empty() || attacker.army_location != target {
                    continue;
                }
                let dmg = attacker.army_attack(cfg);
                let destroyed =
                    apply_damage(&mut defender.structures, dmg, |s| &mut s.hp, |s| &s.kind);
                out[player.index()] = Some(CombatSummary {
                    tick,
                    region: target,
                    own_losses: 0,
                    enemy_losses: destroyed,
                });
                out[player.other().index()] = Some(CombatSummary {
                    tick,
                    region: target,
                    own_losses: destroyed,
                    enemy_losses: 0,
                });
            }
        }
        for (ps, summary) in self.players.iter_mut().zip(out) {
            if summary.is_some() {
                ps.last_combat = summary;
            }
        }
        out
    }

    pub fn terminal(&self) -> Terminal {
        terminal_check(self)
    }
}

impl PlayerState {
    fn set_destination(&mut self, region: Region, hop_ticks: u32) {
        if self.army_destination != region {
            self.army_destination = region;
            self.travel_remaining = if self.army_location == region { 0 } else { hop_ticks };
        }
    }
}

/// Applies `damage` lowest-hp-first (ties by name), carrying overflow to the
/// next target. Returns the number of targets removed.
fn apply_damage<T>(
    targets: &mut Vec<T>,
    mut damage: u32,
    hp: impl Fn(&mut T) -> &mut u32,
    name: impl Fn(&T) -> &String,
) -> u32 {
    if damage == 0 || targets.is_empty() {
        return 0;
    }
    let mut order: Vec<(u32, String, usize)> = (0..targets.len())
        .map(|i| {
            let h = *hp(&mut targets[i]);
            (h, name(&targets[i]).clone(), i)
        })
        .collect();
    order.sort();
    let mut dead = vec![false; targets.len()];
    for (_, _, idx) in order {
        if damage == 0 {
            break;
        }
        let h = hp(&mut targets[idx]);
        if damage >= *h {
            damage -= *h;
            *h = 0;
            dead[idx] = true;
        } else {
            *h -= damage;
            damage = 0;
        }
    }
    let losses = dead.iter().filter(|d| **d).count() as u32;
    let mut i = 0;
    targets.retain(|_| {
        let keep = !dead[i];
        i += 1;
        keep
    });
    losses
}

/// Win when the opposing home has no structures left; draw at the tick limit
/// or on mutual destruction.
pub fn terminal_check(world: &WorldState) -> Terminal {
    let a_alive = !world.players[0].structures.is_empty();
    let b_alive = !world.players[1].structures.is_empty();
    match (a_alive, b_alive) {
        (true, false) => Terminal::WinA,
        (false, true) => Terminal::WinB,
        (false, false) => Terminal::Draw,
        (true, true) if world.tick >= world.tick_limit => Terminal::Draw,
        (true, true) => Terminal::Ongoing,
    }
}

/// Functional form of [`WorldState::step`].
pub fn step_world(
    cfg: &SimConfig,
    world: &WorldState,
    actions_a: &[ValidatedAction],
    actions_b: &[ValidatedAction],
) -> Result<WorldState, SimError> {
    let mut next = world.clone();
    next.step(cfg, actions_a, actions_b)?;
    Ok(next)
}
