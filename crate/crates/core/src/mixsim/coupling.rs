//! Merging application requests into the decoy emission stream.
//!
//! Each emission slot carries either a decoy to a uniformly random service
//! or the head of the application queue. The selection algorithm may look
//! at the history of the merged stream and the queue length, never at the
//! destination it is about to emit; as long as queued destinations are
//! themselves pseudorandom, every emission is uniform over services.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MixsimError;
use crate::crypto::kdf::hash256;
use crate::stats::{chi_square_uniform, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    /// Derived from a BACAP box ID or another pseudorandom source.
    Pseudorandom(u32),
    /// A client's favourite service; breaks coupling.
    Fixed(u32),
}

impl Destination {
    pub fn service(self) -> u32 {
        match self {
            Destination::Pseudorandom(s) | Destination::Fixed(s) => s,
        }
    }
}

/// Service a request for `box_id` is sent to.
pub fn bacap_destination(box_id: &[u8; 32], services: u32) -> u32 {
    let h = hash256(b"mixsim/destination", &[box_id]);
    (u64::from_be_bytes(h[..8].try_into().expect("8")) % services as u64) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Selection {
    /// Send queued application traffic at every opportunity.
    AppFirst,
    /// Application traffic only on every other slot.
    Alternate,
    /// Application traffic only right after a low-numbered destination.
    HistoryDependent,
    /// Hold requests until `size` are queued, then flush back to back.
    Batch { size: usize },
    /// Independent coin with probability `p`.
    Coin { p: f64 },
}

impl Default for Selection {
    fn default() -> Self {
        Selection::AppFirst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emission {
    pub service: u32,
    pub app: bool,
}

#[derive(Debug, Clone)]
pub struct CouplingMux {
    services: u32,
    selection: Selection,
    /// Reject fixed destinations instead of emitting them.
    strict: bool,
    queue: VecDeque<Destination>,
    slots: u64,
    last: Option<Emission>,
    flushing: bool,
}

impl CouplingMux {
    pub fn new(services: u32, selection: Selection, strict: bool) -> Self {
        assert!(services > 0);
        CouplingMux {
            services,
            selection,
            strict,
            queue: VecDeque::new(),
            slots: 0,
            last: None,
            flushing: false,
        }
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn push(&mut self, dest: Destination) -> Result<(), MixsimError> {
        if dest.service() >= self.services {
            return Err(MixsimError::Route(format!("service {} out of range", dest.service())));
        }
        if self.strict {
            if let Destination::Fixed(s) = dest {
                return Err(MixsimError::ContractViolation(format!(
                    "application request pinned to service {s} without pseudorandom cover"
                )));
            }
        }
        self.queue.push_back(dest);
        Ok(())
    }

    fn take_app<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.queue.is_empty() {
            self.flushing = false;
            return false;
        }
        match self.selection {
            Selection::AppFirst => true,
            Selection::Alternate => self.slots % 2 == 0,
            Selection::HistoryDependent => self.last.map(|e| e.service < self.services / 2).unwrap_or(true),
            Selection::Batch { size } => {
                if self.queue.len() >= size.max(1) {
                    self.flushing = true;
                }
                self.flushing
            }
            Selection::Coin { p } => rng.gen_bool(p.clamp(0.0, 1.0)),
        }
    }

    /// Destination of the next emission slot.
    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Emission {
        let e = if self.take_app(rng) {
            let d = self.queue.pop_front().expect("non-empty");
            Emission {
                service: d.service(),
                app: true,
            }
        } else {
            Emission {
                service: rng.gen_range(0..self.services),
                app: false,
            }
        };
        self.slots += 1;
        self.last = Some(e);
        e
    }
}

/// Chi-square uniformity of emitted destinations over `services`.
pub fn destination_uniformity(emissions: &[Emission], services: u32) -> TestResult {
    let mut counts = vec![0u64; services as usize];
    for e in emissions {
        counts[e.service as usize] += 1;
    }
    chi_square_uniform(&counts)
}
