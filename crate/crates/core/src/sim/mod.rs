//! Deterministic macro-level RTS simulator: three regions, economy, one tech
//! tier, aggregate combat, fog of war and scripted opponents.

mod catalog;
mod observe;
mod opponent;
mod trace;
mod world;

use thiserror::Error;

pub use catalog::{
    CatalogEntry, OpponentAnchor, OpponentAnchors, SimConfig, SimParams, StructureDef,
    StructureRole, Tier, UnitRole, UnitTypeDef, CONFIG_VERSION,
};
pub use observe::{observe, presence, Observation};
pub use opponent::{run_opponent, OpponentScript, MAX_DIFFICULTY, MIN_DIFFICULTY};
pub use trace::{write_tick_records, Resources, TickRecord, TraceHasher};
pub(crate) use trace::hex;
pub use world::{
    step_world, terminal_check, CombatSummary, Player, PlayerState, QueueEntry, Region,
    StepReport, Structure, Terminal, Unit, WorldState,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("difficulty {0} outside 1..=7")]
    Difficulty(u8),
    #[error("world is already terminal")]
    Terminal,
    #[error("contract violation: player {player} issued {action}: {reason}")]
    ContractViolation {
        player: Player,
        action: String,
        reason: String,
    },
}
