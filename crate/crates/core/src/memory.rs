//! Strategic memory: an append-only log of strategy records with
//! latest-record retrieval and JSON Lines persistence.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordered `name -> value` strategy variables, e.g. `Tactic -> aggressive`.
pub type StrategyVars = IndexMap<String, String>;

pub const TACTIC: &str = "Tactic";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyRecord {
    #[serde(rename = "t")]
    pub timestep: u64,
    #[serde(rename = "vars")]
    pub variables: StrategyVars,
}

impl StrategyRecord {
    pub fn tactic(&self) -> Option<&str> {
        self.variables.get(TACTIC).map(String::as_str)
    }
}

/// A value token is non-empty and free of angle brackets and whitespace.
pub fn is_valid_value(value: &str) -> bool {
    !value.is_empty() && !value.contains(|c: char| c == '<' || c == '>' || c.is_whitespace())
}

pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("timestep {given} is not after the latest stored timestep {latest}")]
    NonIncreasing { given: u64, latest: u64 },
    #[error("invalid strategy variable {name:?} = {value:?}")]
    InvalidVariable { name: String, value: String },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: timestep {given} does not follow {previous} (file is not monotone)")]
    Integrity {
        line: usize,
        given: u64,
        previous: u64,
    },
    #[error("no persistence path configured")]
    NoPath,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryDb {
    records: Vec<StrategyRecord>,
    path: Option<PathBuf>,
}

impl MemoryDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_path(path: impl Into<PathBuf>) -> Self {
        Self {
            records: Vec::new(),
            path: Some(path.into()),
        }
    }

    pub fn records(&self) -> &[StrategyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Appends `vars` stamped with `t`. Earlier records are never touched.
    pub fn add_memory(&mut self, vars: StrategyVars, t: u64) -> Result<&StrategyRecord, MemoryError> {
        if let Some(latest) = self.records.last() {
            if t <= latest.timestep {
                return Err(MemoryError::NonIncreasing {
                    given: t,
                    latest: latest.timestep,
                });
            }
        }
        for (name, value) in &vars {
            if !is_valid_name(name) || !is_valid_value(value) {
                return Err(MemoryError::InvalidVariable {
                    name: name.clone(),
                    value: value.clone(),
                });
            }
        }
        self.records.push(StrategyRecord {
            timestep: t,
            variables: vars,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Timesteps are strictly increasing, so the last record is the latest.
    pub fn get_latest(&self) -> Option<&StrategyRecord> {
        self.records.last()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn persist(&self) -> Result<(), MemoryError> {
        let path = self.path.as_ref().ok_or(MemoryError::NoPath)?;
        self.persist_to(path)
    }

    pub fn persist_to(&self, path: &Path) -> Result<(), MemoryError> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        self.write_jsonl(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let file = fs::File::open(path)?;
        let mut db = Self::read_jsonl(BufReader::new(file))?;
        db.path = Some(path.to_owned());
        Ok(db)
    }

    /// Blank lines are skipped; every other line must be one record.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, MemoryError> {
        let mut records: Vec<StrategyRecord> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: StrategyRecord =
                serde_json::from_str(&line).map_err(|e| MemoryError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            for (name, value) in &record.variables {
                if !is_valid_name(name) || !is_valid_value(value) {
                    return Err(MemoryError::Malformed {
                        line: line_no,
                        message: format!("invalid variable {name:?} = {value:?}"),
                    });
                }
            }
            if let Some(prev) = records.last() {
                if record.timestep <= prev.timestep {
                    return Err(MemoryError::Integrity {
                        line: line_no,
                        given: record.timestep,
                        previous: prev.timestep,
                    });
                }
            }
            records.push(record);
        }
        Ok(Self {
            records,
            path: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> StrategyVars {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn latest_after_single_add() {
        let mut db = MemoryDb::new();
        assert!(db.get_latest().is_none());
        db.add_memory(vars(&[("Tactic", "aggressive")]), 75).unwrap();
        let latest = db.get_latest().unwrap();
        assert_eq!(latest.timestep, 75);
        assert_eq!(latest.tactic(), Some("aggressive"));
    }

    #[test]
    fn repeated_timestep_rejected() {
        let mut db = MemoryDb::new();
        db.add_memory(vars(&[("Tactic", "aggressive")]), 75).unwrap();
        assert!(matches!(
            db.add_memory(vars(&[("Tactic", "defensive")]), 75),
            Err(MemoryError::NonIncreasing { given: 75, latest: 75 })
        ));
        db.add_memory(vars(&[("Tactic", "defensive")]), 77).unwrap();
        assert_eq!(db.get_latest().unwrap().timestep, 77);
        assert_eq!(db.len(), 2);
    }

    #[test]
    fn bracketed_values_rejected() {
        let mut db = MemoryDb::new();
        assert!(db.add_memory(vars(&[("Tactic", "<x>")]), 1).is_err());
        assert!(db.add_memory(vars(&[("Tactic", "")]), 1).is_err());
        assert!(db.is_empty());
    }

    #[test]
    fn golden_jsonl_bytes() {
        let mut db = MemoryDb::new();
        db.add_memory(vars(&[("Tactic", "defensive"), ("PriorityUnit", "stalker")]), 5)
            .unwrap();
        db.add_memory(vars(&[("Tactic", "aggressive")]), 9).unwrap();
        assert_eq!(
            db.to_jsonl(),
            "{\"t\":5,\"vars\":{\"Tactic\":\"defensive\",\"PriorityUnit\":\"stalker\"}}\n\
             {\"t\":9,\"vars\":{\"Tactic\":\"aggressive\"}}\n"
        );
    }

    #[test]
    fn load_errors() {
        let text = "{\"t\":9,\"vars\":{\"Tactic\":\"a\"}}\n{\"t\":5,\"vars\":{\"Tactic\":\"b\"}}\n";
        assert!(matches!(
            MemoryDb::read_jsonl(text.as_bytes()),
            Err(MemoryError::Integrity { line: 2, given: 5, previous: 9 })
        ));
        let text = "{\"t\":1,\"vars\":{}}\nnot json\n";
        assert!(matches!(
            MemoryDb::read_jsonl(text.as_bytes()),
            Err(MemoryError::Malformed { line: 2, .. })
        ));
        assert!(MemoryDb::read_jsonl("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        let mut db = MemoryDb::with_path(&path);
        for (t, tactic) in [(1, "opening"), (8, "defensive"), (16, "aggressive")] {
            db.add_memory(vars(&[("Tactic", tactic), ("PriorityUnit", "zealot")]), t)
                .unwrap();
        }
        db.persist().unwrap();
        let loaded = MemoryDb::load(&path).unwrap();
        assert_eq!(loaded.records(), db.records());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), loaded.to_jsonl());
    }
}
