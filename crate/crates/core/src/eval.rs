//! Batch evaluation: the (mode, difficulty, seed) matrix, win rates,
//! early-game production metrics, and the CSV / JSON Lines artifacts.
//!
//! Report CSV columns, one row per (mode, difficulty):
//!
//! ```text
//! mode                 masmp | baseline
//! difficulty           opponent level
//! episodes             episodes in the cell
//! wins,losses,draws    outcome counts
//! win_rate_pct         wins / episodes * 100
//! mean_advanced        mean advanced-tier army units ordered before the cutoff tick
//! mean_army_total      mean army units (any tier) ordered before the cutoff tick
//! advanced_ratio_pct   mean_advanced / mean_army_total * 100, 0 when nothing was built
//! production_empty     true when no army unit was ordered in the whole cell
//! share_<unit>         that unit type's percentage of the cell's early army production
//! ```
//!
//! Floats are written with four decimals. Rows are sorted by mode, then
//! difficulty.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    run_agent_episode, write_decision_traces, Agent, AgentConfig, AgentError, DecisionStepTrace,
    MatchResult, Mode, OpponentPolicy, Outcome,
};
use crate::backend::{BackendDescriptor, Health};
use crate::machine::MachineSpec;
use crate::memory::TACTIC;
use crate::sim::{SimConfig, Tier, UnitRole, MAX_DIFFICULTY, MIN_DIFFICULTY};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no match results to aggregate")]
    EmptyInput,
    #[error("evaluation configuration: {0}")]
    Config(String),
    #[error("backend health check failed: {0:?}")]
    Unhealthy(Health),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Wins over all episodes, as a percentage. Draws and losses only count in
/// the denominator.
pub fn win_rate(results: &[MatchResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let wins = results.iter().filter(|r| r.outcome == Outcome::Win).count();
    // wins * 100 is exact in f64, so the single division is the only rounding.
    Ok((wins * 100) as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionMetrics {
    pub episodes: usize,
    pub mean_advanced: f64,
    pub mean_total: f64,
    pub advanced_ratio_pct: f64,
    /// Percentage of early army production per unit type.
    pub shares: BTreeMap<String, f64>,
    /// Set when no army unit was produced at all; the ratio is then 0.
    pub empty: bool,
}

/// Early-game army production of the agent side, averaged over episodes.
pub fn production_metrics(
    results: &[MatchResult],
    catalog: &SimConfig,
) -> Result<ProductionMetrics, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut per_type: BTreeMap<String, u64> = catalog
        .army_units()
        .map(|u| (u.name.clone(), 0))
        .collect();
    let mut advanced = 0u64;
    for r in results {
        for (name, &n) in &r.early_production.agent {
            let Some(unit) = catalog.unit(name) else { continue };
            if unit.role != UnitRole::Army {
                continue;
            }
            *per_type.entry(name.clone()).or_insert(0) += u64::from(n);
            if unit.tier == Tier::Advanced {
                advanced += u64::from(n);
            }
        }
    }
    let total: u64 = per_type.values().sum();
    let episodes = results.len();
    let empty = total == 0;
    let pct = |part: u64| if empty { 0.0 } else { (part * 100) as f64 / total as f64 };
    Ok(ProductionMetrics {
        episodes,
        mean_advanced: advanced as f64 / episodes as f64,
        mean_total: total as f64 / episodes as f64,
        advanced_ratio_pct: pct(advanced),
        shares: per_type.iter().map(|(k, &v)| (k.clone(), pct(v))).collect(),
        empty,
    })
}

/// One (mode, difficulty) cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub mode: Mode,
    pub difficulty: u8,
    pub episodes: usize,
    pub wins: usize,
    pub losses: usize,
    pub draws: usize,
    pub win_rate_pct: f64,
    pub production: ProductionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Army unit types, in catalog order; these name the share columns.
    pub unit_types: Vec<String>,
}

impl EvalReport {
    pub fn from_results(results: &[MatchResult], catalog: &SimConfig) -> Result<Self, EvalError> {
        let mut cells: BTreeMap<(Mode, u8), Vec<MatchResult>> = BTreeMap::new();
        for r in results {
            let d = r
                .difficulty
                .ok_or_else(|| EvalError::Config("result without a difficulty level".into()))?;
            cells.entry((r.mode, d)).or_default().push(r.clone());
        }
        if cells.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let mut rows = Vec::with_capacity(cells.len());
        for ((mode, difficulty), cell) in cells {
            let count = |o| cell.iter().filter(|r| r.outcome == o).count();
            rows.push(EvalRow {
                mode,
                difficulty,
                episodes: cell.len(),
                wins: count(Outcome::Win),
                losses: count(Outcome::Loss),
                draws: count(Outcome::Draw),
                win_rate_pct: win_rate(&cell)?,
                production: production_metrics(&cell, catalog)?,
            });
        }
        Ok(Self {
            rows,
            unit_types: catalog.army_units().map(|u| u.name.clone()).collect(),
        })
    }

    pub fn row(&self, mode: Mode, difficulty: u8) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.difficulty == difficulty)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "mode",
            "difficulty",
            "episodes",
            "wins",
            "losses",
            "draws",
            "win_rate_pct",
            "mean_advanced",
            "mean_army_total",
            "advanced_ratio_pct",
            "production_empty",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.unit_types.iter().map(|u| format!("share_{u}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let p = &r.production;
            let mut rec = vec![
                r.mode.to_string(),
                r.difficulty.to_string(),
                r.episodes.to_string(),
                r.wins.to_string(),
                r.losses.to_string(),
                r.draws.to_string(),
                fixed(r.win_rate_pct),
                fixed(p.mean_advanced),
                fixed(p.mean_total),
                fixed(p.advanced_ratio_pct),
                p.empty.to_string(),
            ];
            rec.extend(
                self.unit_types
                    .iter()
                    .map(|u| fixed(p.shares.get(u).copied().unwrap_or(0.0))),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, EvalError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn fixed(x: f64) -> String {
    format!("{x:.4}")
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub modes: Vec<Mode>,
    pub difficulties: Vec<u8>,
    pub episodes: u32,
    /// Episode `i` of every cell uses seed `base_seed + i`, so both modes
    /// face the same starting positions.
    pub base_seed: u64,
    pub tick_limit: u32,
    pub decision_period: u32,
    pub retry_budget: u32,
    pub workers: usize,
    pub backend: BackendDescriptor,
    pub spec: Arc<MachineSpec>,
    pub catalog: SimConfig,
    /// Where artifacts go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl EvalConfig {
    /// Both modes, every difficulty, five episodes per cell, oracle backend.
    pub fn standard(catalog: SimConfig, spec: Arc<MachineSpec>) -> Self {
        Self {
            modes: vec![Mode::Masmp, Mode::Baseline],
            difficulties: (MIN_DIFFICULTY..=MAX_DIFFICULTY).collect(),
            episodes: 5,
            base_seed: 0,
            tick_limit: catalog.sim.tick_limit,
            decision_period: catalog.sim.decision_period,
            retry_budget: 2,
            workers: 1,
            backend: BackendDescriptor::oracle(),
            spec,
            catalog,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Config(m.into()));
        if self.modes.is_empty() {
            return bad("at least one mode is required");
        }
        if self.difficulties.is_empty() {
            return bad("at least one difficulty is required");
        }
        if let Some(d) = self
            .difficulties
            .iter()
            .find(|d| !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(*d))
        {
            return Err(EvalError::Config(format!(
                "difficulty {d} outside {MIN_DIFFICULTY}..={MAX_DIFFICULTY}"
            )));
        }
        if self.episodes == 0 {
            return bad("episodes per cell must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.tick_limit == 0 {
            return bad("tick_limit must be at least 1");
        }
        self.agent_config(Mode::Masmp).validate()?;
        Ok(())
    }

    fn agent_config(&self, mode: Mode) -> AgentConfig {
        let mut c = AgentConfig::new(mode, self.spec.clone(), self.backend.clone());
        c.decision_period = self.decision_period;
        c.retry_budget = self.retry_budget;
        c
    }
}

/// One finished episode with its decision trace.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub result: MatchResult,
    pub decisions: Vec<DecisionStepTrace>,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: EvalReport,
    /// Sorted by (mode, difficulty, seed).
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalOutput {
    pub fn results(&self) -> Vec<MatchResult> {
        self.episodes.iter().map(|e| e.result.clone()).collect()
    }
}

/// File name of an episode's decision trace inside `<out_dir>/traces`.
pub fn trace_file_name(r: &MatchResult) -> String {
    format!(
        "{}_d{}_s{}.jsonl",
        r.mode,
        r.difficulty.map_or_else(|| "x".to_owned(), |d| d.to_string()),
        r.seed
    )
}

/// Runs the full matrix. The backend is health-checked before any episode;
/// each episode gets its own backend instance.
pub fn run_eval(config: &EvalConfig) -> Result<EvalOutput, EvalError> {
    config.validate()?;
    match config.backend.health_check() {
        Health::Ok => {}
        h => return Err(EvalError::Unhealthy(h)),
    }

    let mut jobs = Vec::new();
    for &mode in &config.modes {
        for &difficulty in &config.difficulties {
            for i in 0..config.episodes {
                jobs.push((mode, difficulty, config.base_seed + u64::from(i)));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EvalError::Config(format!("thread pool: {e}")))?;
    let mut episodes = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, difficulty, seed)| {
                let agent = Agent::new(config.agent_config(mode), config.catalog.clone())?;
                let opponent = OpponentPolicy::difficulty(&config.catalog, difficulty)?;
                let out = run_agent_episode(&agent, seed, opponent, config.tick_limit)?;
                Ok(EpisodeRecord {
                    result: out.result,
                    decisions: out.decisions,
                })
            })
            .collect::<Result<Vec<_>, AgentError>>()
    })?;
    episodes.sort_by_key(|e| (e.result.mode, e.result.difficulty, e.result.seed));

    let results: Vec<MatchResult> = episodes.iter().map(|e| e.result.clone()).collect();
    let report = EvalReport::from_results(&results, &config.catalog)?;
    let output = EvalOutput { report, episodes };
    if let Some(dir) = &config.out_dir {
        write_artifacts(dir, &output, &config.catalog)?;
    }
    Ok(output)
}

/// Writes `report.csv`, `results.jsonl`, `sim_config.json` (the catalog the
/// report was computed against) and `traces/<episode>.jsonl`.
pub fn write_artifacts(dir: &Path, output: &EvalOutput, catalog: &SimConfig) -> Result<(), EvalError> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    let mut cat = BufWriter::new(fs::File::create(dir.join("sim_config.json"))?);
    serde_json::to_writer_pretty(&mut cat, catalog)?;
    cat.write_all(b"\n")?;
    cat.flush()?;
    output
        .report
        .write_csv(BufWriter::new(fs::File::create(dir.join("report.csv"))?))?;

    let mut results = BufWriter::new(fs::File::create(dir.join("results.jsonl"))?);
    for e in &output.episodes {
        serde_json::to_writer(&mut results, &e.result)?;
        results.write_all(b"\n")?;
    }
    results.flush()?;

    for e in &output.episodes {
        let mut f = BufWriter::new(fs::File::create(traces.join(trace_file_name(&e.result)))?);
        write_decision_traces(&mut f, &e.decisions)?;
        f.flush()?;
    }
    Ok(())
}

/// Reads `results.jsonl` back.
pub fn read_results(text: &str) -> Result<Vec<MatchResult>, EvalError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(EvalError::from))
        .collect()
}

/// The Tactic a decision settled on: the memory record in state-machine
/// mode, the first extracted fragment in baseline mode.
pub fn decided_tactic(t: &DecisionStepTrace) -> Option<&str> {
    t.tactic_after().or_else(|| {
        t.extracted
            .first()
            .and_then(|f| f.get(TACTIC))
            .map(String::as_str)
    })
}

/// Human-readable account of a decision trace: one line per decision, with
/// state changes called out.
pub fn transition_report(traces: &[DecisionStepTrace]) -> String {
    let mut out = String::new();
    let mut changes = 0;
    let mut prev: Option<String> = None;
    for t in traces {
        let now = decided_tactic(t).map(str::to_owned);
        let from = match t.mode {
            Mode::Masmp => t.tactic_before.clone(),
            Mode::Baseline => prev.clone(),
        };
        let state = match (&from, &now) {
            (Some(a), Some(b)) if a != b => {
                changes += 1;
                format!("{a} -> {b}")
            }
            (None, Some(b)) => format!("start {b}"),
            (_, Some(b)) => format!("stay {b}"),
            (_, None) => "no state".to_owned(),
        };
        let acts = if t.hold {
            "HOLD".to_owned()
        } else if t.executed.is_empty() {
            "-".to_owned()
        } else {
            t.executed
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        out.push_str(&format!("t={:<6} {:<26} {}", t.timestep, state, acts));
        if t.validity.rejected > 0 {
            out.push_str(&format!("  [{} rejected]", t.validity.rejected));
        }
        if !t.flags.is_empty() {
            out.push_str(&format!("  ({})", t.flags.join(", ")));
        }
        out.push('\n');
        prev = now.or(prev);
    }
    out.push_str(&format!(
        "{} decisions, {} state changes\n",
        traces.len(),
        changes
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::SideTallies;

    fn result(outcome: Outcome, early: &[(&str, u32)]) -> MatchResult {
        MatchResult {
            mode: Mode::Masmp,
            difficulty: Some(1),
            seed: 0,
            outcome,
            final_tick: 0,
            production: SideTallies::default(),
            early_production: SideTallies {
                agent: early.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                opponent: Default::default(),
            },
            decisions: 0,
            holds: 0,
            rejected_actions: 0,
            contract_violations: 0,
        }
    }

    #[test]
    fn win_rate_counts_draws_as_non_wins() {
        let rs = [
            result(Outcome::Win, &[]),
            result(Outcome::Draw, &[]),
            result(Outcome::Loss, &[]),
            result(Outcome::Win, &[]),
        ];
        assert_eq!(win_rate(&rs).unwrap(), 50.0);
        assert!(matches!(win_rate(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn probes_are_not_army() {
        let cfg = SimConfig::default_config();
        let rs = [result(Outcome::Win, &[("probe", 20), ("stalker", 4), ("zealot", 6)])];
        let m = production_metrics(&rs, &cfg).unwrap();
        assert_eq!(m.mean_total, 10.0);
        assert_eq!(m.advanced_ratio_pct, 40.0);
        assert_eq!(m.shares["zealot"], 60.0);
    }

    #[test]
    fn empty_production_is_flagged() {
        let cfg = SimConfig::default_config();
        let m = production_metrics(&[result(Outcome::Loss, &[("probe", 3)])], &cfg).unwrap();
        assert!(m.empty);
        assert_eq!(m.advanced_ratio_pct, 0.0);
    }
}
