//! Extraction of strategy variables and action lines from generated text, and
//! the validation gate between parsed actions and the simulator.
//!
//! Line grammar (surrounding whitespace ignored):
//!
//! ```text
//! strategy line  [Name]:<value>      Name = [A-Za-z_][A-Za-z0-9_]*, value = [^<>\s]+
//! action line    Action: Verb(arg)   Verb case-insensitive, arg = [A-Za-z0-9_]* (may be empty)
//! ```
//!
//! Consecutive strategy lines form one fragment; any other line (including a
//! blank one) ends the fragment. A name repeated inside a fragment starts a
//! new fragment. A line that starts with `Action:` but does not match the
//! action grammar becomes an `unknown_verb` candidate.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::action::{ActionCommand, ArgKind, ValidatedAction, Verb};
use crate::memory::StrategyVars;
use crate::sim::{CatalogEntry, Observation, Region, SimConfig};

fn strategy_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[([A-Za-z_][A-Za-z0-9_]*)\]:<([^<>\s]+)>$").unwrap())
}

fn action_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^Action:\s*([A-Za-z]+)\s*\(\s*([A-Za-z0-9_]*)\s*\)$").unwrap())
}

pub fn extract_strategies(raw: &str) -> Vec<StrategyVars> {
    let mut out = Vec::new();
    let mut current = StrategyVars::new();
    for line in raw.lines() {
        match strategy_re().captures(line.trim()) {
            Some(c) => {
                let (name, value) = (c[1].to_owned(), c[2].to_owned());
                if current.contains_key(&name) {
                    out.push(std::mem::take(&mut current));
                }
                current.insert(name, value);
            }
            None if !current.is_empty() => out.push(std::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// A parsed (or unparseable) action line, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCandidate {
    /// Trimmed source line.
    pub raw: String,
    /// Verb text as written; `None` when the line did not match the grammar.
    pub verb: Option<String>,
    pub argument: Option<String>,
}

impl ActionCandidate {
    pub fn from_command(cmd: &ActionCommand) -> Self {
        Self {
            raw: format!("Action: {cmd}"),
            verb: Some(cmd.verb.name().to_owned()),
            argument: cmd.argument.clone(),
        }
    }
}

pub fn extract_actions(raw: &str) -> Vec<ActionCandidate> {
    raw.lines()
        .map(str::trim)
        .filter(|l| l.starts_with("Action:"))
        .map(|line| match action_re().captures(line) {
            Some(c) => ActionCandidate {
                raw: line.to_owned(),
                verb: Some(c[1].to_owned()),
                argument: Some(c[2].to_owned()).filter(|a| !a.is_empty()),
            },
            None => ActionCandidate {
                raw: line.to_owned(),
                verb: None,
                argument: None,
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    UnknownVerb,
    UnknownArgument,
    Unaffordable,
    PrerequisiteMissing,
    IllegalTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVerdict {
    pub candidate: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub verdicts: Vec<ActionVerdict>,
    pub accepted: usize,
    pub rejected: usize,
}

impl ValidityReport {
    pub fn rejections(&self) -> impl Iterator<Item = &ActionVerdict> {
        self.verdicts.iter().filter(|v| v.verdict != Verdict::Valid)
    }
}

/// Keeps schema-valid, affordable, prerequisite-satisfied, target-legal
/// actions. Kept purchases reserve their cost, so a later order in the same
/// batch sees the reduced budget.
pub fn validate_actions(
    candidates: &[ActionCandidate],
    schema: &SimConfig,
    obs: &Observation,
) -> (Vec<ValidatedAction>, ValidityReport) {
    let mut minerals = obs.minerals;
    let mut gas = obs.gas;
    let mut kept = Vec::new();
    let mut report = ValidityReport::default();
    for cand in candidates {
        let verdict = match check(cand, schema, obs, minerals, gas) {
            Ok((cmd, cost)) => {
                minerals -= cost.0;
                gas -= cost.1;
                kept.push(ValidatedAction::new(cmd));
                Verdict::Valid
            }
            Err(v) => v,
        };
        if verdict == Verdict::Valid {
            report.accepted += 1;
        } else {
            report.rejected += 1;
        }
        report.verdicts.push(ActionVerdict {
            candidate: cand.raw.clone(),
            verdict,
        });
    }
    (kept, report)
}

fn check(
    cand: &ActionCandidate,
    schema: &SimConfig,
    obs: &Observation,
    minerals: u32,
    gas: u32,
) -> Result<(ActionCommand, (u32, u32)), Verdict> {
    let verb = cand
        .verb
        .as_deref()
        .and_then(Verb::parse_loose)
        .ok_or(Verdict::UnknownVerb)?;
    let arg = cand.argument.as_deref();
    let cmd = ActionCommand::new(verb, arg);
    match (verb.arg_kind(), arg) {
        (ArgKind::None, None) => Ok((cmd, (0, 0))),
        (ArgKind::None, Some(_)) | (_, None) => Err(Verdict::UnknownArgument),
        (ArgKind::Region, Some(name)) => {
            let region = Region::parse(name).ok_or(Verdict::UnknownArgument)?;
            if region == obs.home {
                return Err(Verdict::IllegalTarget);
            }
            Ok((cmd, (0, 0)))
        }
        (kind @ (ArgKind::Unit | ArgKind::Structure), Some(name)) => {
            let (cost, prereq) = match (kind, schema.lookup(name)) {
                (ArgKind::Unit, Some(CatalogEntry::Unit(u))) => {
                    ((u.mineral_cost, u.gas_cost), u.prerequisite.as_deref())
                }
                (ArgKind::Structure, Some(CatalogEntry::Structure(s))) => {
                    ((s.mineral_cost, s.gas_cost), s.prerequisite.as_deref())
                }
                _ => return Err(Verdict::UnknownArgument),
            };
            if let Some(req) = prereq {
                if obs.structure_count(req) == 0 {
                    return Err(Verdict::PrerequisiteMissing);
                }
            }
            if cost.0 > minerals || cost.1 > gas {
                return Err(Verdict::Unaffordable);
            }
            Ok((cmd, cost))
        }
    }
}
