//! Two-phase authenticated key exchange over unified Ed25519/X25519
//! identities, with ASCON-128a for confidentiality.

pub mod certs;
pub mod conformance;
pub mod curve;
pub mod field;
pub mod fixtures;
pub mod handshake;
pub mod netsim;
pub mod primitives;
pub mod session;
pub mod wire;
