//! Closed-form packet sizes.

use serde::Serialize;

use crate::crypto::catalog::{SuiteKind, SuiteSizes, CATALOG};
use crate::crypto::symmetric::{MAC_SIZE, SPRP_KEY_SIZE};

use super::commands::{DELAY_CMD_LEN, NEXT_HOP_CMD_LEN, RECIPIENT_CMD_LEN, SURB_REPLY_CMD_LEN};

/// Version byte plus associated-data byte preceding α.
pub const VERSION_AD_SIZE: usize = 2;
pub const VERSION_AD: [u8; VERSION_AD_SIZE] = [0x01, 0x00];
pub const NODE_ID_SIZE: usize = 32;
pub const SURB_ID_SIZE: usize = 16;
pub const RECIPIENT_SIZE: usize = 64;
/// Zero prefix of the innermost payload checked at the terminal hop.
pub const PAYLOAD_TAG_SIZE: usize = 32;
/// Body flag field preceding the SURB slot.
pub const BODY_FLAGS_SIZE: usize = 2;
/// Hop count for which the reference size table is computed.
pub const REFERENCE_MAX_HOPS: usize = 5;

/// Commands of one hop: a mid-path hop carries next-hop plus delay, the
/// terminal hop carries recipient plus SURB-reply at most.
pub const fn routing_commands_size() -> usize {
    let mid = NEXT_HOP_CMD_LEN + DELAY_CMD_LEN;
    let terminal = RECIPIENT_CMD_LEN + SURB_REPLY_CMD_LEN;
    if mid > terminal {
        mid
    } else {
        terminal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SphinxGeometry {
    pub suite_name: String,
    pub kind: SuiteKind,
    pub max_hops: usize,
    pub payload_size: usize,
    /// Bytes of α: a NIKE public key or a KEM ciphertext.
    pub alpha_size: usize,
    /// One hop's share of β.
    pub slot_size: usize,
    pub beta_size: usize,
    pub gamma_size: usize,
    pub header_size: usize,
    /// First-hop id, reply header and payload key.
    pub surb_size: usize,
    /// Plaintext body carried inside δ: flags, SURB slot and payload.
    pub body_size: usize,
    pub delta_size: usize,
    pub packet_size: usize,
}

impl SphinxGeometry {
    pub fn new(
        suite_name: impl Into<String>,
        kind: SuiteKind,
        element_size: usize,
        max_hops: usize,
        payload_size: usize,
    ) -> Self {
        assert!(max_hops >= 1, "max_hops must be at least 1");
        let commands = routing_commands_size();
        let slot_size = match kind {
            SuiteKind::Nike => commands,
            SuiteKind::Kem => element_size + commands,
        };
        let beta_size = max_hops * slot_size;
        let header_size = VERSION_AD_SIZE + element_size + beta_size + MAC_SIZE;
        let surb_size = NODE_ID_SIZE + header_size + SPRP_KEY_SIZE;
        let body_size = BODY_FLAGS_SIZE + surb_size + payload_size;
        let delta_size = PAYLOAD_TAG_SIZE + body_size;
        SphinxGeometry {
            suite_name: suite_name.into(),
            kind,
            max_hops,
            payload_size,
            alpha_size: element_size,
            slot_size,
            beta_size,
            gamma_size: MAC_SIZE,
            header_size,
            surb_size,
            body_size,
            delta_size,
            packet_size: header_size + delta_size,
        }
    }

    pub fn from_sizes(sizes: &SuiteSizes, max_hops: usize, payload_size: usize) -> Self {
        Self::new(sizes.name, sizes.kind, sizes.element_size, max_hops, payload_size)
    }

    /// Per-packet bytes that are not application payload: header, SURB,
    /// payload tag and body flags.
    pub fn overhead(&self) -> usize {
        self.header_size + self.surb_size + PAYLOAD_TAG_SIZE + BODY_FLAGS_SIZE
    }

    /// Hops of a full echo: out to the service and back via the SURB.
    pub fn round_trip_hops(&self) -> usize {
        2 * self.max_hops - 1
    }
}

/// `geometry(suite, max_hops, payload_size)` for a catalogued suite.
pub fn geometry(suite: &str, kind: SuiteKind, max_hops: usize, payload_size: usize) -> Option<SphinxGeometry> {
    crate::crypto::catalog::lookup(suite, kind).map(|s| SphinxGeometry::from_sizes(s, max_hops, payload_size))
}

/// Geometry of every catalogued suite at `max_hops`.
pub fn size_table(max_hops: usize, payload_size: usize) -> Vec<SphinxGeometry> {
    CATALOG
        .iter()
        .map(|s| SphinxGeometry::from_sizes(s, max_hops, payload_size))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthReport {
    pub packets_per_second: f64,
    pub packet_size: usize,
    pub bytes_per_second: f64,
    pub bytes_per_day: f64,
    pub payload_efficiency: f64,
}

/// Client bandwidth at a constant Poisson emission rate.
pub fn bandwidth(geometry: &SphinxGeometry, packets_per_second: f64) -> BandwidthReport {
    let size = geometry.payload_size + geometry.overhead();
    let bps = packets_per_second * size as f64;
    BandwidthReport {
        packets_per_second,
        packet_size: size,
        bytes_per_second: bps,
        bytes_per_day: bps * 86_400.0,
        payload_efficiency: geometry.payload_size as f64 / size as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(name: &str, kind: SuiteKind) -> usize {
        geometry(name, kind, REFERENCE_MAX_HOPS, 0).unwrap().header_size
    }

    fn header_plus_surb(name: &str, kind: SuiteKind) -> usize {
        let g = geometry(name, kind, REFERENCE_MAX_HOPS, 0).unwrap();
        g.overhead()
    }

    #[test]
    fn reference_header_sizes() {
        use SuiteKind::*;
        assert_eq!(header("X25519", Nike), 476);
        assert_eq!(header("X448", Nike), 500);
        assert_eq!(header("X25519", Kem), 636);
        assert_eq!(header("X448", Kem), 780);
        assert_eq!(header("Xwing", Kem), 7164);
        assert_eq!(header("MLKEM768-X25519", Kem), 7164);
    }

    #[test]
    fn reference_header_and_surb_sizes() {
        use SuiteKind::*;
        assert_eq!(header_plus_surb("X25519", Nike), 1082);
        assert_eq!(header_plus_surb("X448", Nike), 1130);
        assert_eq!(header_plus_surb("X25519", Kem), 1402);
        assert_eq!(header_plus_surb("X448", Kem), 1690);
        assert_eq!(header_plus_surb("Xwing", Kem), 14458);
        assert_eq!(header_plus_surb("MLKEM768-X448", Kem), 14746);
    }

    #[test]
    fn header_is_sum_of_parts_and_monotone() {
        for s in CATALOG {
            let mut prev = 0;
            for hops in 1..=12 {
                let g = SphinxGeometry::from_sizes(s, hops, 100);
                assert_eq!(g.header_size, VERSION_AD_SIZE + g.alpha_size + g.beta_size + g.gamma_size);
                assert_eq!(g.beta_size, hops * g.slot_size);
                assert!(g.header_size > prev);
                prev = g.header_size;
            }
        }
    }

    #[test]
    fn kem_header_exceeds_nike_header() {
        for (name, size) in [("X25519", 32), ("X448", 56)] {
            for hops in 1..=10 {
                let n = SphinxGeometry::new(name, SuiteKind::Nike, size, hops, 0);
                let k = SphinxGeometry::new(name, SuiteKind::Kem, size, hops, 0);
                assert!(k.header_size > n.header_size);
                assert_eq!(k.header_size - n.header_size, hops * size);
            }
        }
    }

    #[test]
    fn single_hop_kem_beta_is_one_ciphertext_and_one_slot() {
        let g = SphinxGeometry::new("X25519", SuiteKind::Kem, 32, 1, 0);
        assert_eq!(g.beta_size, 32 + routing_commands_size());
    }

    #[test]
    fn reference_bandwidth() {
        let g = geometry("X25519", SuiteKind::Nike, REFERENCE_MAX_HOPS, 30_000).unwrap();
        let b = bandwidth(&g, 2.5);
        assert_eq!(b.packet_size, 31_082);
        assert!((b.bytes_per_second - 77_705.0).abs() < 1e-6);
        assert!((b.bytes_per_day / 1e9 - 6.7137).abs() < 1e-3);
        assert!(b.payload_efficiency > 0.96);
    }
}
