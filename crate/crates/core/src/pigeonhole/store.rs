//! Replica box storage in weekly buckets with optional append-log persistence.
//!
//! Log format, one file per bucket named `bucket-<week>.log`:
//!
//! ```text
//! magic "ECHOPH01" (8) ∥ version u16 (2) ∥ week u64 (8)
//! entries: kind u8 (1 = put, 2 = tombstone) ∥ len u32 ∥ encoded BacapBox
//! ```
//!
//! Replaying all logs in week order reproduces the in-memory state; a torn
//! final entry is ignored.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::bacap::{verify, BacapBox};

use super::PigeonholeError;

pub const LOG_MAGIC: &[u8; 8] = b"ECHOPH01";
pub const LOG_VERSION: u16 = 1;
const KIND_PUT: u8 = 1;
const KIND_TOMBSTONE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaRecord {
    pub box_id: [u8; 32],
    pub ciphertext: Vec<u8>,
    pub signature: [u8; 64],
    pub week: u64,
    pub tombstoned: bool,
}

impl ReplicaRecord {
    pub fn to_box(&self) -> Result<BacapBox, PigeonholeError> {
        Ok(BacapBox {
            box_id: crate::crypto::GroupElement::from_bytes(&self.box_id)?,
            ciphertext: self.ciphertext.clone(),
            signature: self.signature,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Stored,
    /// A tombstone replaced a stored message.
    Replaced,
    Duplicate,
    /// A message arrived for a tombstoned box.
    RejectedTombstoned,
    /// A different message already occupies the box.
    RejectedOccupied,
}

impl PutOutcome {
    pub fn accepted(self) -> bool {
        matches!(self, PutOutcome::Stored | PutOutcome::Replaced | PutOutcome::Duplicate)
    }
}

#[derive(Debug, Clone)]
pub struct ReplicaStore {
    buckets: BTreeMap<u64, HashMap<[u8; 32], ReplicaRecord>>,
    current_week: u64,
    retention_weeks: usize,
    dir: Option<PathBuf>,
}

impl ReplicaStore {
    pub fn in_memory(week: u64, retention_weeks: usize) -> Self {
        assert!(retention_weeks >= 1);
        let mut buckets = BTreeMap::new();
        buckets.insert(week, HashMap::new());
        ReplicaStore {
            buckets,
            current_week: week,
            retention_weeks,
            dir: None,
        }
    }

    /// Opens (or creates) a persistent store, replaying any existing logs.
    pub fn open(dir: &Path, week: u64, retention_weeks: usize) -> Result<Self, PigeonholeError> {
        fs::create_dir_all(dir)?;
        let mut store = ReplicaStore::in_memory(week, retention_weeks);
        store.buckets.clear();
        let mut weeks: Vec<u64> = Vec::new();
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(w) = name.strip_prefix("bucket-").and_then(|s| s.strip_suffix(".log")) {
                if let Ok(w) = w.parse() {
                    weeks.push(w);
                }
            }
        }
        weeks.sort_unstable();
        for w in &weeks {
            store.current_week = *w;
            store.buckets.entry(*w).or_default();
            for (_, b) in read_log(&log_path(dir, *w), *w)? {
                store.apply(b);
            }
        }
        store.current_week = week.max(weeks.last().copied().unwrap_or(week));
        store.buckets.entry(store.current_week).or_default();
        store.dir = Some(dir.to_path_buf());
        store.ensure_log(store.current_week)?;
        Ok(store)
    }

    pub fn current_week(&self) -> u64 {
        self.current_week
    }

    pub fn bucket_weeks(&self) -> Vec<u64> {
        self.buckets.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, box_id: &[u8; 32]) -> Option<&ReplicaRecord> {
        self.buckets.values().rev().find_map(|b| b.get(box_id))
    }

    pub fn records(&self) -> impl Iterator<Item = &ReplicaRecord> {
        self.buckets.values().flat_map(|b| b.values())
    }

    /// Stores a verified box, applying tombstone precedence.
    pub fn put(&mut self, b: &BacapBox) -> Result<PutOutcome, PigeonholeError> {
        if !verify(b) {
            return Err(PigeonholeError::BadSignature);
        }
        let outcome = self.apply(b.clone());
        if matches!(outcome, PutOutcome::Stored | PutOutcome::Replaced) {
            if let Some(dir) = self.dir.clone() {
                let kind = if b.is_tombstone() { KIND_TOMBSTONE } else { KIND_PUT };
                append_entry(&log_path(&dir, self.current_week), kind, &b.to_bytes())?;
            }
        }
        Ok(outcome)
    }

    fn apply(&mut self, b: BacapBox) -> PutOutcome {
        let id = b.box_id.to_bytes();
        let existing_week = self
            .buckets
            .iter()
            .rev()
            .find(|(_, m)| m.contains_key(&id))
            .map(|(w, _)| *w);
        if let Some(w) = existing_week {
            let old = &self.buckets[&w][&id];
            if old.tombstoned {
                return if b.is_tombstone() {
                    PutOutcome::Duplicate
                } else {
                    PutOutcome::RejectedTombstoned
                };
            }
            if !b.is_tombstone() {
                return if old.ciphertext == b.ciphertext {
                    PutOutcome::Duplicate
                } else {
                    PutOutcome::RejectedOccupied
                };
            }
            self.buckets.get_mut(&w).expect("bucket").remove(&id);
            self.insert(b, true);
            return PutOutcome::Replaced;
        }
        let tomb = b.is_tombstone();
        self.insert(b, tomb);
        PutOutcome::Stored
    }

    fn insert(&mut self, b: BacapBox, tombstoned: bool) {
        let week = self.current_week;
        let id = b.box_id.to_bytes();
        self.buckets.entry(week).or_default().insert(
            id,
            ReplicaRecord {
                box_id: id,
                ciphertext: b.ciphertext,
                signature: b.signature,
                week,
                tombstoned,
            },
        );
    }

    /// Opens the bucket for `week` and drops the oldest beyond retention.
    /// Returns the number of records discarded.
    pub fn rotate(&mut self, week: u64) -> Result<usize, PigeonholeError> {
        if week <= self.current_week {
            return Ok(0);
        }
        self.current_week = week;
        self.buckets.entry(week).or_default();
        self.ensure_log(week)?;
        let mut dropped = 0;
        while self.buckets.len() > self.retention_weeks {
            let (&oldest, _) = self.buckets.iter().next().expect("non-empty");
            dropped += self.buckets.remove(&oldest).map(|m| m.len()).unwrap_or(0);
            if let Some(dir) = &self.dir {
                let p = log_path(dir, oldest);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
        Ok(dropped)
    }

    fn ensure_log(&self, week: u64) -> Result<(), PigeonholeError> {
        if let Some(dir) = &self.dir {
            let p = log_path(dir, week);
            if !p.exists() {
                let mut f = File::create(p)?;
                f.write_all(LOG_MAGIC)?;
                f.write_all(&LOG_VERSION.to_be_bytes())?;
                f.write_all(&week.to_be_bytes())?;
                f.sync_all()?;
            }
        }
        Ok(())
    }
}

/// Shortest time any accepted box is guaranteed to stay stored: bounded by
/// how long it takes maximum throughput to fill capacity and by bucket
/// retention (a box written at the end of a week loses one week).
pub fn min_retention_secs(capacity_bytes: f64, max_throughput_bytes_per_sec: f64, retention_weeks: usize, week_secs: f64) -> f64 {
    let fill = capacity_bytes / max_throughput_bytes_per_sec;
    let buckets = (retention_weeks.saturating_sub(1)) as f64 * week_secs;
    fill.min(buckets)
}

fn log_path(dir: &Path, week: u64) -> PathBuf {
    dir.join(format!("bucket-{week}.log"))
}

fn append_entry(path: &Path, kind: u8, bytes: &[u8]) -> io::Result<()> {
    let mut f = OpenOptions::new().append(true).open(path)?;
    let mut buf = Vec::with_capacity(5 + bytes.len());
    buf.push(kind);
    buf.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    buf.extend_from_slice(bytes);
    f.write_all(&buf)?;
    f.sync_data()
}

fn read_log(path: &Path, week: u64) -> Result<Vec<(u8, BacapBox)>, PigeonholeError> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 18 || &data[..8] != LOG_MAGIC {
        return Err(PigeonholeError::Malformed("bucket log header"));
    }
    let version = u16::from_be_bytes([data[8], data[9]]);
    if version != LOG_VERSION {
        return Err(PigeonholeError::Malformed("bucket log version"));
    }
    if u64::from_be_bytes(data[10..18].try_into().expect("8")) != week {
        return Err(PigeonholeError::Malformed("bucket log week"));
    }
    let mut out = Vec::new();
    let mut rest = &data[18..];
    while rest.len() >= 5 {
        let kind = rest[0];
        let len = u32::from_be_bytes(rest[1..5].try_into().expect("4")) as usize;
        if rest.len() < 5 + len {
            break;
        }
        let b = BacapBox::from_bytes(&rest[5..5 + len])?;
        if !verify(&b) || (kind == KIND_TOMBSTONE) != b.is_tombstone() {
            return Err(PigeonholeError::Malformed("bucket log entry"));
        }
        out.push((kind, b));
        rest = &rest[5 + len..];
    }
    Ok(out)
}
