//! Action commands and their fixed verb/argument schema.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sim::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verb {
    Train,
    Build,
    Attack,
    Retreat,
    Scout,
    NoOp,
}

/// Argument kind each verb takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    Unit,
    Structure,
    Region,
    None,
}

impl Verb {
    pub const ALL: [Verb; 6] = [
        Verb::Train,
        Verb::Build,
        Verb::Attack,
        Verb::Retreat,
        Verb::Scout,
        Verb::NoOp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Train => "Train",
            Verb::Build => "Build",
            Verb::Attack => "Attack",
            Verb::Retreat => "Retreat",
            Verb::Scout => "Scout",
            Verb::NoOp => "NoOp",
        }
    }

    pub fn arg_kind(self) -> ArgKind {
        match self {
            Verb::Train => ArgKind::Unit,
            Verb::Build => ArgKind::Structure,
            Verb::Attack | Verb::Scout => ArgKind::Region,
            Verb::Retreat | Verb::NoOp => ArgKind::None,
        }
    }

    /// Case-insensitive verb lookup.
    pub fn parse_loose(s: &str) -> Option<Verb> {
        Verb::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Verb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verb::parse_loose(s).ok_or_else(|| format!("unknown verb {s:?}"))
    }
}

/// A schema-shaped command: `Verb(argument)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCommand {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argument: Option<String>,
}

impl ActionCommand {
    pub fn new(verb: Verb, argument: Option<&str>) -> Self {
        Self {
            verb,
            argument: argument.map(str::to_owned),
        }
    }

    pub fn train(unit: &str) -> Self {
        Self::new(Verb::Train, Some(unit))
    }

    pub fn build(structure: &str) -> Self {
        Self::new(Verb::Build, Some(structure))
    }

    pub fn attack(region: Region) -> Self {
        Self::new(Verb::Attack, Some(region.name()))
    }

    pub fn scout(region: Region) -> Self {
        Self::new(Verb::Scout, Some(region.name()))
    }

    pub fn retreat() -> Self {
        Self::new(Verb::Retreat, None)
    }

    pub fn noop() -> Self {
        Self::new(Verb::NoOp, None)
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.verb, self.argument.as_deref().unwrap_or(""))
    }
}

/// An action that passed `validate_actions`. Only the output parser can mint
/// these, so the simulator never sees raw model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidatedAction(ActionCommand);

impl ValidatedAction {
    pub(crate) fn new(cmd: ActionCommand) -> Self {
        Self(cmd)
    }

    pub fn command(&self) -> &ActionCommand {
        &self.0
    }

    pub fn into_command(self) -> ActionCommand {
        self.0
    }
}

impl fmt::Display for ValidatedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_matches_action_line_syntax() {
        assert_eq!(ActionCommand::train("stalker").to_string(), "Train(stalker)");
        assert_eq!(ActionCommand::retreat().to_string(), "Retreat()");
        assert_eq!(ActionCommand::attack(Region::HomeB).to_string(), "Attack(home_B)");
    }

    #[test]
    fn verbs_are_case_insensitive() {
        assert_eq!(Verb::parse_loose("tRaIn"), Some(Verb::Train));
        assert_eq!(Verb::parse_loose("noop"), Some(Verb::NoOp));
        assert_eq!(Verb::parse_loose("Summon"), None);
    }
}
