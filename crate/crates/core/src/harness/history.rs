//! Line-delimited search history. The first line is a versioned header,
//! then one JSON record per evaluation in completion order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::evolution::{CandidateRecord, EvalDetails, Strategy};
use crate::genome::ArchitectureGenome;
use crate::mutation::MutationDiff;

pub const HISTORY_FORMAT: &str = "gnnevo-history";
pub const HISTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryHeader {
    pub format: String,
    pub version: u32,
    pub strategy: Strategy,
    pub seed: u64,
    pub budget: usize,
    pub max_layers: usize,
    /// The full validated run configuration.
    pub config: serde_json::Value,
}

impl HistoryHeader {
    pub fn new(strategy: Strategy, seed: u64, budget: usize, max_layers: usize, config: serde_json::Value) -> Self {
        Self {
            format: HISTORY_FORMAT.into(),
            version: HISTORY_VERSION,
            strategy,
            seed,
            budget,
            max_layers,
            config,
        }
    }
}

/// One evaluated candidate. `fitness` is null for failed evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub index: u64,
    #[serde(with = "canonical_genome")]
    pub genome: ArchitectureGenome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<MutationDiff>,
    pub seed: u64,
    pub fitness: Option<f64>,
    pub val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(flatten)]
    pub details: EvalDetails,
}

impl HistoryEntry {
    pub fn from_record(rec: &CandidateRecord) -> Self {
        Self {
            index: rec.birth_index,
            genome: rec.genome.clone(),
            parent: rec.parent,
            diff: rec.diff.clone(),
            seed: rec.seed,
            fitness: rec.fitness.is_finite().then_some(rec.fitness),
            val_loss: rec.val_loss,
            error: rec.error.clone(),
            details: rec.details.clone(),
        }
    }

    pub fn fitness_or_neg_inf(&self) -> f64 {
        self.fitness.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Wall time goes to a sidecar so the history itself stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub index: u64,
    pub wall_time_secs: f64,
}

/// The genome is embedded as its canonical JSON text, verbatim.
mod canonical_genome {
    use serde::{de::Error as _, ser::Error as _, Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    use crate::genome::{canonical_parse, canonical_serialize, ArchitectureGenome};

    pub fn serialize<S: Serializer>(g: &ArchitectureGenome, s: S) -> Result<S::Ok, S::Error> {
        RawValue::from_string(canonical_serialize(g))
            .map_err(S::Error::custom)?
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ArchitectureGenome, D::Error> {
        let raw = Box::<RawValue>::deserialize(d)?;
        canonical_parse(raw.get()).map_err(D::Error::custom)
    }
}

/// Append-only writer; every line is flushed so an interrupted run keeps
/// everything written so far.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<(), HarnessError> {
        let line = serde_json::to_string(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        self.write_line(&line).map_err(|e| HarnessError::io(&self.path, e))
    }

    pub fn write_line(&mut self, line: &str) -> std::io::Result<()> {
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub header: Option<HistoryHeader>,
    pub entries: Vec<HistoryEntry>,
    /// Lines that failed to parse, 1-based.
    pub skipped_lines: Vec<usize>,
}

/// Reads a history log. Unparseable lines (a truncated final line after a
/// crash, say) are skipped and reported rather than aborting.
pub fn read_history(path: &Path) -> Result<History, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_history(BufReader::new(file)).map_err(|e| HarnessError::io(path, e))
}

pub fn parse_history<R: BufRead>(reader: R) -> std::io::Result<History> {
    let mut history = History {
        header: None,
        entries: Vec::new(),
        skipped_lines: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(h) = serde_json::from_str::<HistoryHeader>(&line) {
                if h.format == HISTORY_FORMAT && h.version == HISTORY_VERSION {
                    history.header = Some(h);
                    continue;
                }
            }
        }
        match serde_json::from_str::<HistoryEntry>(&line) {
            Ok(e) => history.entries.push(e),
            Err(_) => history.skipped_lines.push(i + 1),
        }
    }
    Ok(history)
}
