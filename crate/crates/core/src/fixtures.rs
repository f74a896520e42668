//! Deterministic CA, client and server for tests, benchmarks and examples.

use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::certs::{issue, Certificate, PartyId, TrustAnchor};
use crate::curve::{derive_identity, IdentityKeyPair};
use crate::handshake::{HandshakeConfig, ManualClock, Role};

pub const NOW_MS: u64 = 1_700_000_000_000;
const YEAR_MS: u64 = 365 * 86_400_000;

pub struct Pki {
    pub ca: IdentityKeyPair,
    pub anchor: TrustAnchor,
    pub client: IdentityKeyPair,
    pub client_cert: Certificate,
    pub server: IdentityKeyPair,
    pub server_cert: Certificate,
    pub clock: Arc<ManualClock>,
}

impl Pki {
    pub fn new(seed: u64) -> Pki {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut seed32 = || {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        };
        let ca = derive_identity(&seed32());
        let anchor = TrustAnchor { ca_id: PartyId(*b"ca-root0"), ca_public: *ca.ed_public() };
        let client = derive_identity(&seed32());
        let server = derive_identity(&seed32());
        let window = (NOW_MS - YEAR_MS, NOW_MS + YEAR_MS);
        let client_cert =
            issue(&ca, anchor.ca_id, PartyId(*b"client01"), *client.ed_public(), window.0, window.1).unwrap();
        let server_cert =
            issue(&ca, anchor.ca_id, PartyId(*b"server01"), *server.ed_public(), window.0, window.1).unwrap();
        Pki { ca, anchor, client, client_cert, server, server_cert, clock: Arc::new(ManualClock::new(NOW_MS)) }
    }

    /// Client config that insists on this server and resumes from stored trust.
    pub fn client_config(&self) -> HandshakeConfig {
        let mut c = HandshakeConfig::new(Role::Client, self.client.clone(), self.client_cert.clone(), self.anchor);
        c.clock = self.clock.clone();
        c.expected_peer = Some(self.server_cert.subject_id);
        c
    }

    pub fn server_config(&self) -> HandshakeConfig {
        let mut c = HandshakeConfig::new(Role::Server, self.server.clone(), self.server_cert.clone(), self.anchor);
        c.clock = self.clock.clone();
        c
    }
}
