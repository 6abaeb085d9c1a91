//! Echomix protocol workbench.
//!
//! * [`crypto`]: group arithmetic, KDF, AEAD, NIKE/KEM interfaces and the KEM combiner.
//! * [`bacap`]: blinded box-ID sequences with read and write capabilities.
//! * [`sphinx`]: NIKE and KEM Sphinx packets, SURBs and header geometry.
//! * [`pigeonhole`]: sharded courier/replica storage over BACAP boxes.
//! * [`mixsim`]: deterministic discrete-event simulator of the mix network.
//! * [`selftest`]: fixed-seed statistical checks with fault injection.
//! * [`stats`]: goodness-of-fit helpers used by the statistical checks.

pub mod bacap;
pub mod crypto;
pub mod mixsim;
pub mod pigeonhole;
pub mod selftest;
pub mod sphinx;
pub mod stats;
