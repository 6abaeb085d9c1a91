use std::collections::{BTreeMap, HashSet};
use std::sync::Mutex;

/// Per-node replay tags, partitioned by key epoch. Check-and-insert is
/// atomic across threads.
#[derive(Debug, Default)]
pub struct ReplayCache {
    epochs: Mutex<BTreeMap<u64, HashSet<[u8; 32]>>>,
}

impl ReplayCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `tag` for `epoch`; returns false if it was already present.
    pub fn check_and_insert(&self, epoch: u64, tag: [u8; 32]) -> bool {
        self.epochs
            .lock()
            .expect("replay cache poisoned")
            .entry(epoch)
            .or_default()
            .insert(tag)
    }

    /// Drops state for epochs older than `oldest_kept`; their keys are retired.
    pub fn prune_before(&self, oldest_kept: u64) {
        let mut map = self.epochs.lock().expect("replay cache poisoned");
        *map = map.split_off(&oldest_kept);
    }

    pub fn len(&self) -> usize {
        self.epochs.lock().expect("replay cache poisoned").values().map(HashSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn concurrent_inserts_admit_each_tag_once() {
        let cache = Arc::new(ReplayCache::new());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let c = Arc::clone(&cache);
                std::thread::spawn(move || (0..500u32).filter(|i| c.check_and_insert(1, [(*i % 256) as u8; 32])).count())
            })
            .collect();
        let admitted: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(admitted, 256);
    }

    #[test]
    fn epochs_are_independent_and_prunable() {
        let c = ReplayCache::new();
        assert!(c.check_and_insert(1, [1; 32]));
        assert!(c.check_and_insert(2, [1; 32]));
        assert!(!c.check_and_insert(2, [1; 32]));
        c.prune_before(2);
        assert_eq!(c.len(), 1);
        assert!(c.check_and_insert(1, [1; 32]));
    }
}
