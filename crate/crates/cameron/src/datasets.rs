//! Trajectory persistence (JSONL), replay sampling and the cost replay buffer.
//!
//! File layout: one header line carrying `env_name`, `tag` and a schema
//! version, then one transition per line. Reals round-trip at full precision
//! through serde_json, so save/load is lossless.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Default capacity of the cost replay buffer.
pub const DEFAULT_COST_BUFFER_CAPACITY: usize = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub episode_id: usize,
    pub t: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default)]
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    Expert,
    Exploratory,
    Mixed,
}

impl std::fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetTag::Expert => write!(f, "expert"),
            DatasetTag::Exploratory => write!(f, "exploratory"),
            DatasetTag::Mixed => write!(f, "mixed"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    env_name: String,
    tag: DatasetTag,
    schema_version: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub records: Vec<TransitionRecord>,
    pub tag: DatasetTag,
    pub env_name: String,
}

impl TrajectoryDataset {
    pub fn new(records: Vec<TransitionRecord>, tag: DatasetTag, env_name: String) -> Self {
        Self {
            records,
            tag,
            env_name,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks the episode structure: strictly increasing `t` per episode and
    /// `next_state` of record t equal (bitwise) to `state` of record t+1.
    pub fn validate(&self) -> Result<()> {
        for pair in self.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.episode_id == b.episode_id {
                if b.t != a.t + 1 {
                    return Err(Error::Validation(format!(
                        "episode {}: time index jumps from {} to {}",
                        a.episode_id, a.t, b.t
                    )));
                }
                let same = a.next_state.len() == b.state.len()
                    && a.next_state
                        .iter()
                        .zip(b.state.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits());
                if !same {
                    return Err(Error::Validation(format!(
                        "episode {}: next_state at t={} does not match state at t={}",
                        a.episode_id, a.t, b.t
                    )));
                }
            }
        }
        Ok(())
    }

    /// Concatenates datasets, reassigning episode ids so they stay unique.
    pub fn concat(parts: &[&TrajectoryDataset], tag: DatasetTag) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyDataset("no datasets to concatenate".into()))?;
        let mut records = Vec::new();
        let mut episode_offset = 0usize;
        for part in parts {
            if part.env_name != first.env_name {
                return Err(Error::Validation(format!(
                    "cannot concatenate datasets from `{}` and `{}`",
                    first.env_name, part.env_name
                )));
            }
            let max_ep = part.records.iter().map(|r| r.episode_id).max().unwrap_or(0);
            for r in &part.records {
                let mut r = r.clone();
                r.episode_id += episode_offset;
                records.push(r);
            }
            episode_offset += max_ep + 1;
        }
        Ok(Self::new(records, tag, first.env_name.clone()))
    }

    /// Initial states of every episode, for conditioning samplers.
    pub fn episode_starts(&self) -> Vec<&TransitionRecord> {
        self.records.iter().filter(|r| r.t == 0).collect()
    }
}

pub fn save_dataset(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = Header {
        env_name: dataset.env_name.clone(),
        tag: dataset.tag,
        schema_version: SCHEMA_VERSION,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for rec in &dataset.records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing header line".into(),
        })?
        .map_err(Error::Io)?;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported schema version {}", header.schema_version),
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 2,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let ds = TrajectoryDataset::new(records, header.tag, header.env_name);
    ds.validate()?;
    Ok(ds)
}

/// Uniform-with-replacement minibatch; deterministic given the RNG state.
pub fn sample_batch<'a, R: Rng>(
    dataset: &'a TrajectoryDataset,
    n: usize,
    rng: &mut R,
) -> Result<Vec<&'a TransitionRecord>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("cannot sample from empty dataset".into()));
    }
    Ok((0..n)
        .map(|_| &dataset.records[rng.gen_range(0..dataset.records.len())])
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Data,
    Idle,
    Rollout,
}

/// One conditioned future-state sample held by the cost replay buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct CostEntry {
    pub cond_state: Vec<f64>,
    pub future_state: Vec<f64>,
    pub future_action: Vec<f64>,
    pub source: SourceTag,
}

/// Bounded FIFO of future-state samples; oldest entries are evicted first.
#[derive(Clone, Debug)]
pub struct CostReplayBuffer {
    entries: VecDeque<CostEntry>,
    capacity: usize,
}

impl CostReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn push(&mut self, entry: CostEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &CostEntry> {
        self.entries.iter()
    }

    pub fn sample<'a, R: Rng>(&'a self, n: usize, rng: &mut R) -> Result<Vec<&'a CostEntry>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyDataset("cost replay buffer is empty".into()));
        }
        Ok((0..n)
            .map(|_| &self.entries[rng.gen_range(0..self.entries.len())])
            .collect())
    }

    /// Fraction of entries per source tag, for ablation accounting.
    pub fn source_fractions(&self) -> (f64, f64, f64) {
        let n = self.entries.len().max(1) as f64;
        let mut counts = [0usize; 3];
        for e in &self.entries {
            match e.source {
                SourceTag::Data => counts[0] += 1,
                SourceTag::Idle => counts[1] += 1,
                SourceTag::Rollout => counts[2] += 1,
            }
        }
        (
            counts[0] as f64 / n,
            counts[1] as f64 / n,
            counts[2] as f64 / n,
        )
    }
}

/// Empirical state-action frequencies of a dataset over a finite index
/// space; rows sum to the state marginal, the whole table to one.
pub fn state_action_frequencies(
    dataset: &TrajectoryDataset,
    n_states: usize,
    n_actions: usize,
) -> Result<Vec<Vec<f64>>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("no transitions to count".into()));
    }
    let mut freq = vec![vec![0.0; n_actions]; n_states];
    for rec in &dataset.records {
        let s = rec.state[0] as usize;
        let a = rec.action[0] as usize;
        if s >= n_states || a >= n_actions {
            return Err(Error::Validation(format!(
                "record ({s},{a}) outside {n_states}x{n_actions} index space"
            )));
        }
        freq[s][a] += 1.0;
    }
    let total = dataset.len() as f64;
    for row in &mut freq {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(freq)
}

/// Probabilities of the three future-sample sources; they must sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureWeights {
    pub f_data: f64,
    pub f_idle: f64,
    pub f_rollout: f64,
}

impl Default for MixtureWeights {
    fn default() -> Self {
        Self::balanced()
    }
}

impl MixtureWeights {
    pub fn new(f_data: f64, f_idle: f64, f_rollout: f64) -> Result<Self> {
        let w = Self {
            f_data,
            f_idle,
            f_rollout,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn balanced() -> Self {
        Self {
            f_data: 1.0 / 3.0,
            f_idle: 1.0 / 3.0,
            f_rollout: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f_data", self.f_data),
            ("f_idle", self.f_idle),
            ("f_rollout", self.f_rollout),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} not in [0,1]")));
            }
        }
        let sum = self.f_data + self.f_idle + self.f_rollout;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_dataset() -> TrajectoryDataset {
        let records = vec![
            TransitionRecord {
                episode_id: 0,
                t: 0,
                state: vec![0.0],
                action: vec![1.0],
                next_state: vec![1.0],
                cost: Some(0.25),
                terminal: false,
            },
            TransitionRecord {
                episode_id: 0,
                t: 1,
                state: vec![1.0],
                action: vec![0.0],
                next_state: vec![2.0],
                cost: None,
                terminal: true,
            },
        ];
        TrajectoryDataset::new(records, DatasetTag::Expert, "chain5".into())
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn missing_field_is_a_parse_error_naming_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"env_name\":\"chain5\",\"tag\":\"expert\",\"schema_version\":1}\n\
             {\"episode_id\":0,\"t\":0,\"state\":[0.0],\"next_state\":[1.0]}\n",
        )
        .unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("action"), "message: {message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn broken_continuity_is_a_validation_error() {
        let mut ds = toy_dataset();
        ds.records[0].next_state = vec![9.0];
        assert!(matches!(ds.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn sample_batch_empty_and_deterministic() {
        let ds = toy_dataset();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let b1: Vec<_> = sample_batch(&ds, 10, &mut r1).unwrap();
        let b2: Vec<_> = sample_batch(&ds, 10, &mut r2).unwrap();
        assert_eq!(b1, b2);
        assert!(sample_batch(&ds, 0, &mut r1).unwrap().is_empty());
        let empty = TrajectoryDataset::new(vec![], DatasetTag::Mixed, "chain5".into());
        assert!(sample_batch(&empty, 1, &mut r1).is_err());
    }

    #[test]
    fn buffer_respects_capacity_evicting_oldest() {
        let mut buf = CostReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(CostEntry {
                cond_state: vec![i as f64],
                future_state: vec![0.0],
                future_action: vec![0.0],
                source: SourceTag::Data,
            });
        }
        assert_eq!(buf.len(), 3);
        let first = buf.iter().next().unwrap();
        assert_eq!(first.cond_state[0], 2.0);
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        assert!(MixtureWeights::new(0.5, 0.2, 0.2).is_err());
        assert!(MixtureWeights::balanced().validate().is_ok());
    }
}
