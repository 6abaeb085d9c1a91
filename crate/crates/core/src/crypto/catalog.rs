//! Encoded sizes of the primitives the packet geometry is computed for.
//!
//! Only X25519 (NIKE and KEM) and the ML-KEM-768-sized stub are executable
//! in this crate; the remaining entries are size descriptors.

/// Which slot of the Sphinx header a primitive occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Nike,
    Kem,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SuiteSizes {
    pub name: &'static str,
    pub kind: SuiteKind,
    /// NIKE public key size or KEM ciphertext size: the bytes one hop's
    /// key material occupies in a header.
    pub element_size: usize,
}

const fn nike(name: &'static str, element_size: usize) -> SuiteSizes {
    SuiteSizes {
        name,
        kind: SuiteKind::Nike,
        element_size,
    }
}

const fn kem(name: &'static str, element_size: usize) -> SuiteSizes {
    SuiteSizes {
        name,
        kind: SuiteKind::Kem,
        element_size,
    }
}

pub const CATALOG: &[SuiteSizes] = &[
    nike("X25519", 32),
    nike("X448", 56),
    nike("CTIDH1024", 128),
    nike("CTIDH1024-X448", 184),
    kem("X25519", 32),
    kem("X448", 56),
    kem("Xwing", 1120),
    kem("MLKEM768-X25519", 1120),
    kem("MLKEM768-X448", 1144),
];

/// Case-insensitive lookup by name and kind.
pub fn lookup(name: &str, kind: SuiteKind) -> Option<&'static SuiteSizes> {
    CATALOG
        .iter()
        .find(|s| s.kind == kind && s.name.eq_ignore_ascii_case(name))
}
