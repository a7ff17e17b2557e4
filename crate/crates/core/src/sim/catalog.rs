//! Unit catalog, world parameters and opponent anchors loaded from the
//! versioned TOML config.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

pub const CONFIG_VERSION: u32 = 1;

const DEFAULT_CONFIG: &str = include_str!("../../assets/sim_config.v1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Basic,
    Advanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitRole {
    Worker,
    Army,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTypeDef {
    pub name: String,
    pub role: UnitRole,
    pub tier: Tier,
    pub mineral_cost: u32,
    pub gas_cost: u32,
    pub build_ticks: u32,
    pub attack: u32,
    pub hp: u32,
    pub supply: u32,
    #[serde(default)]
    pub prerequisite: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureRole {
    Base,
    Tech,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureDef {
    pub name: String,
    pub role: StructureRole,
    pub mineral_cost: u32,
    pub gas_cost: u32,
    pub build_ticks: u32,
    pub hp: u32,
    #[serde(default)]
    pub prerequisite: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub tick_limit: u32,
    pub decision_period: u32,
    pub production_cutoff_tick: u32,
    pub hop_ticks: u32,
    pub mineral_rate: u32,
    pub gas_rate: u32,
    pub gas_worker_cap: u32,
    pub worker_saturation: u32,
    pub reinforcement_window: u32,
    pub scout_ticks: u32,
    pub start_minerals: u32,
    pub start_gas: u32,
    pub start_workers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpponentAnchor {
    pub income_multiplier: f64,
    pub first_attack_tick: u32,
    pub attack_period: u32,
    pub unit_mix: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpponentAnchors {
    pub level1: OpponentAnchor,
    pub level7: OpponentAnchor,
}

/// Everything the simulator needs besides the world state itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub version: u32,
    pub sim: SimParams,
    pub units: Vec<UnitTypeDef>,
    pub structures: Vec<StructureDef>,
    pub opponent: OpponentAnchors,
}

/// What a name in an action argument refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CatalogEntry<'a> {
    Unit(&'a UnitTypeDef),
    Structure(&'a StructureDef),
}

impl SimConfig {
    /// The checked-in default configuration.
    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("bundled simulator config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        let p = &self.sim;
        if p.tick_limit == 0 || p.decision_period == 0 || p.hop_ticks == 0 {
            return bad("tick_limit, decision_period and hop_ticks must be positive".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for u in &self.units {
            if !names.insert(u.name.as_str()) {
                return bad(format!("duplicate catalog name {}", u.name));
            }
            if u.build_ticks == 0 || u.hp == 0 {
                return bad(format!("unit {}: build_ticks and hp must be positive", u.name));
            }
            if u.mineral_cost == 0 && u.gas_cost == 0 {
                return bad(format!("unit {}: trainable units must cost something", u.name));
            }
            match (u.tier, &u.prerequisite) {
                (Tier::Advanced, None) => {
                    return bad(format!("advanced unit {} needs a prerequisite", u.name))
                }
                (Tier::Basic, Some(_)) => {
                    return bad(format!("basic unit {} must not have a prerequisite", u.name))
                }
                _ => {}
            }
        }
        for s in &self.structures {
            if !names.insert(s.name.as_str()) {
                return bad(format!("duplicate catalog name {}", s.name));
            }
            if s.build_ticks == 0 || s.hp == 0 {
                return bad(format!("structure {}: build_ticks and hp must be positive", s.name));
            }
        }
        for u in &self.units {
            if let Some(req) = &u.prerequisite {
                if self.structure(req).is_none() {
                    return bad(format!("unit {}: unknown prerequisite {req}", u.name));
                }
            }
        }
        for s in &self.structures {
            if let Some(req) = &s.prerequisite {
                if self.structure(req).is_none() {
                    return bad(format!("structure {}: unknown prerequisite {req}", s.name));
                }
            }
        }
        if self.units.iter().filter(|u| u.role == UnitRole::Worker).count() != 1 {
            return bad("exactly one worker unit type is required".into());
        }
        if self.base().is_none() {
            return bad("a base structure is required".into());
        }
        for anchor in [&self.opponent.level1, &self.opponent.level7] {
            if anchor.income_multiplier <= 0.0 || anchor.attack_period == 0 {
                return bad("opponent anchors need positive income_multiplier and attack_period".into());
            }
            if anchor.first_attack_tick == 0 {
                return bad("opponent first_attack_tick must be positive".into());
            }
            for (name, w) in &anchor.unit_mix {
                match self.unit(name) {
                    Some(u) if u.role == UnitRole::Army => {}
                    _ => return bad(format!("opponent unit_mix names unknown army unit {name}")),
                }
                if !(*w >= 0.0) {
                    return bad(format!("opponent unit_mix weight for {name} is negative"));
                }
            }
        }
        Ok(())
    }

    pub fn unit(&self, name: &str) -> Option<&UnitTypeDef> {
        self.units.iter().find(|u| u.name == name)
    }

    pub fn structure(&self, name: &str) -> Option<&StructureDef> {
        self.structures.iter().find(|s| s.name == name)
    }

    pub fn lookup(&self, name: &str) -> Option<CatalogEntry<'_>> {
        self.unit(name)
            .map(CatalogEntry::Unit)
            .or_else(|| self.structure(name).map(CatalogEntry::Structure))
    }

    pub fn worker(&self) -> &UnitTypeDef {
        self.units
            .iter()
            .find(|u| u.role == UnitRole::Worker)
            .expect("validated config has a worker")
    }

    pub fn base(&self) -> Option<&StructureDef> {
        self.structures.iter().find(|s| s.role == StructureRole::Base)
    }

    pub fn army_units(&self) -> impl Iterator<Item = &UnitTypeDef> {
        self.units.iter().filter(|u| u.role == UnitRole::Army)
    }

    pub fn is_tech(&self, structure: &str) -> bool {
        self.structure(structure)
            .map(|s| s.role == StructureRole::Tech)
            .unwrap_or(false)
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::default_config()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_shape() {
        let cfg = SimConfig::default_config();
        let basic = cfg.army_units().filter(|u| u.tier == Tier::Basic).count();
        let advanced = cfg.army_units().filter(|u| u.tier == Tier::Advanced).count();
        assert_eq!((basic, advanced), (2, 2));
        assert_eq!(cfg.worker().name, "probe");
        assert_eq!(cfg.structures.len(), 2);
        assert!(cfg.is_tech("cybernetics_core"));
        assert!(!cfg.is_tech("nexus"));
    }

    #[test]
    fn advanced_without_prerequisite_rejected() {
        let text = DEFAULT_CONFIG.replace("prerequisite = \"cybernetics_core\"\n", "");
        assert!(matches!(
            SimConfig::from_toml_str(&text),
            Err(SimError::Config(msg)) if msg.contains("needs a prerequisite")
        ));
    }

    #[test]
    fn wrong_version_rejected() {
        let text = DEFAULT_CONFIG.replacen("version = 1", "version = 2", 1);
        assert!(SimConfig::from_toml_str(&text).is_err());
    }
}
