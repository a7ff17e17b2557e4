use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::world::{CombatSummary, Player, WorldState};
use crate::action::ActionCommand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub minerals: u32,
    pub gas: u32,
    pub workers: u32,
}

/// One line of the per-tick JSON Lines trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u32,
    pub acting_player: Player,
    pub actions: Vec<ActionCommand>,
    pub combat_summary: Option<CombatSummary>,
    pub resources: Resources,
}

impl TickRecord {
    /// Record for `player` after the tick's step; `tick` is the tick the
    /// actions were issued on.
    pub fn capture(
        world: &WorldState,
        player: Player,
        tick: u32,
        actions: Vec<ActionCommand>,
        combat: Option<CombatSummary>,
    ) -> Self {
        let ps = world.player(player);
        Self {
            tick,
            acting_player: player,
            actions,
            combat_summary: combat,
            resources: Resources {
                minerals: ps.minerals,
                gas: ps.gas,
                workers: ps.worker_count,
            },
        }
    }
}

pub fn write_tick_records<W: Write>(mut out: W, records: &[TickRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Rolling SHA-256 over serialized world states.
#[derive(Debug, Clone, Default)]
pub struct TraceHasher(Sha256);

impl TraceHasher {
    pub fn absorb(&mut self, world: &WorldState) {
        let bytes = serde_json::to_vec(world).expect("world state serializes");
        self.0.update(&bytes);
    }

    pub fn finish(self) -> String {
        hex(&self.0.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
