use crate::crypto::kdf::hash256;

use super::{PigeonholeError, ReplicaId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaDescriptor {
    pub id: ReplicaId,
    /// Long-term identity key; the sharding hash input.
    pub identity_key: [u8; 32],
}

/// Consistent-hash assignment of boxes to `k` of `n` replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardMap {
    replicas: Vec<ReplicaDescriptor>,
    k: usize,
}

fn rank(identity_key: &[u8; 32], box_id: &[u8; 32]) -> [u8; 32] {
    hash256(b"pigeonhole/shard", &[identity_key, box_id])
}

impl ShardMap {
    pub fn new(replicas: Vec<ReplicaDescriptor>, k: usize) -> Result<Self, PigeonholeError> {
        if k == 0 || k > replicas.len() {
            return Err(PigeonholeError::ReplicationFactor { k, n: replicas.len() });
        }
        Ok(ShardMap { replicas, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn replicas(&self) -> &[ReplicaDescriptor] {
        &self.replicas
    }

    /// Replicas ordered by `hash(identity ∥ box_id)`; the first `k` are
    /// responsible for the box.
    pub fn permutation(&self, box_id: &[u8; 32]) -> Vec<ReplicaId> {
        let mut ranked: Vec<([u8; 32], ReplicaId)> =
            self.replicas.iter().map(|r| (rank(&r.identity_key, box_id), r.id)).collect();
        ranked.sort_unstable();
        ranked.into_iter().map(|(_, id)| id).collect()
    }

    pub fn select(&self, box_id: &[u8; 32]) -> Vec<ReplicaId> {
        let mut p = self.permutation(box_id);
        p.truncate(self.k);
        p
    }

    pub fn without(&self, id: ReplicaId) -> Result<Self, PigeonholeError> {
        let replicas = self.replicas.iter().filter(|r| r.id != id).cloned().collect();
        ShardMap::new(replicas, self.k)
    }

    pub fn descriptor(&self, id: ReplicaId) -> Option<&ReplicaDescriptor> {
        self.replicas.iter().find(|r| r.id == id)
    }
}

/// `shard_select(map, box_id)`.
pub fn shard_select(map: &ShardMap, box_id: &[u8; 32]) -> Vec<ReplicaId> {
    map.select(box_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi_square_uniform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashMap;

    pub(crate) fn map(n: usize, k: usize, seed: u64) -> ShardMap {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let replicas = (0..n)
            .map(|i| ReplicaDescriptor {
                id: ReplicaId(i as u16),
                identity_key: rng.gen(),
            })
            .collect();
        ShardMap::new(replicas, k).unwrap()
    }

    #[test]
    fn selection_is_deterministic_and_distinct() {
        let m = map(10, 3, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let b: [u8; 32] = rng.gen();
            let s = m.select(&b);
            assert_eq!(s, m.select(&b));
            assert_eq!(s.len(), 3);
            let mut d = s.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 3);
        }
    }

    #[test]
    fn k_bounds() {
        let m = map(3, 3, 3);
        assert!(m.without(ReplicaId(0)).is_err());
        assert!(ShardMap::new(m.replicas().to_vec(), 0).is_err());
        assert!(ShardMap::new(m.replicas().to_vec(), 4).is_err());
    }

    #[test]
    fn pair_frequencies_uniform_n4_k2() {
        let m = map(4, 2, 4);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut counts: HashMap<(u16, u16), u64> = HashMap::new();
        for _ in 0..100_000 {
            let mut s = m.select(&rng.gen());
            s.sort();
            *counts.entry((s[0].0, s[1].0)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let v: Vec<u64> = counts.values().copied().collect();
        assert!(chi_square_uniform(&v).p_value > 0.01);
    }

    #[test]
    fn removal_reassigns_k_over_n() {
        let m = map(10, 2, 6);
        let removed = ReplicaId(3);
        let m2 = m.without(removed).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let trials = 100_000;
        let mut moved = 0;
        for _ in 0..trials {
            let b: [u8; 32] = rng.gen();
            let before = m.select(&b);
            let after = m2.select(&b);
            if before != after {
                moved += 1;
                // Survivors keep their slot; only the removed one is replaced.
                assert!(before.contains(&removed));
            }
        }
        let frac = moved as f64 / trials as f64;
        assert!((frac - 0.2).abs() < 0.02, "{frac}");
    }

    proptest::proptest! {
        // Removing a replica moves only the boxes it held, and each such box
        // keeps its other holders.
        #[test]
        fn removal_is_minimally_disruptive(
            n in 3usize..12,
            k_off in 0usize..10,
            removed in 0usize..12,
            seed in proptest::prelude::any::<u64>(),
            ids in proptest::collection::vec(proptest::prelude::any::<[u8; 32]>(), 1..50),
        ) {
            let k = 1 + k_off % (n - 1);
            let m = map(n, k, seed);
            let gone = ReplicaId((removed % n) as u16);
            let m2 = m.without(gone).unwrap();
            for id in ids {
                let before = m.select(&id);
                let after = m2.select(&id);
                proptest::prop_assert_eq!(after.len(), k);
                proptest::prop_assert!(!after.contains(&gone));
                if before.contains(&gone) {
                    let kept: Vec<_> = before.iter().filter(|r| **r != gone).collect();
                    proptest::prop_assert!(kept.iter().all(|r| after.contains(r)));
                } else {
                    proptest::prop_assert_eq!(before, after);
                }
            }
        }
    }
}
