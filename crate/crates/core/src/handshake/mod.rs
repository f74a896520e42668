//! The two-phase key exchange.
//!
//! Phase 1 runs once per peer pair: each side sends its certificate with a
//! signed timestamp, then both derive `k_init` from a static X25519 exchange
//! of their unified identity keys. Phase 2 runs per session: ephemeral
//! public keys travel sealed under `k_init`, their DH output gives `k_eph`,
//! and the server hands the client a fresh `k_sym` bound to the client's
//! nonce by a confirmation hash.
//!
//! [`ops`] holds the individual steps as free functions. [`ClientHandshake`]
//! and [`ServerHandshake`] sequence them without doing I/O, and
//! [`run_handshake`] drives either one over a [`Channel`](crate::netsim::Channel).

mod machine;
pub mod ops;
mod replay;
mod trust;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::certs::{CertStatus, Certificate, PartyId, TrustAnchor};
use crate::curve::{CurveError, IdentityKeyPair};
use crate::primitives::{AeadKey, PrimitiveError};
use crate::wire::{Direction, Kind, WireError};

pub use machine::{run_handshake, run_loopback, ClientHandshake, HandshakeOutcome, Progress, ServerHandshake};
pub use ops::{
    accept_eph, check_auth_msg, client_finish, client_key_exchange, derive_initial_key, init_salt, make_m1, make_m2,
    server_key_exchange, start_phase2, EphemeralState, InitialKeyMaterial, PeerFacts,
};
pub use replay::ReplayCache;
pub use trust::{PeerTrust, TrustStore, TRUST_RECORD_LEN, TRUST_STORE_MAGIC};

pub const DEFAULT_SKEW_MS: u64 = 5_000;

pub const INFO_INIT: &[u8] = b"LSEG-v1-init";
pub const INFO_EPH: &[u8] = b"LSEG-v1-eph";
pub const INFO_EPH_NONCE: &[u8] = b"LSEG-eph-nonce";
pub const INFO_C1_NONCE: &[u8] = b"LSEG-c1-nonce";
pub const INFO_C2_NONCE: &[u8] = b"LSEG-c2-nonce";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Role {
    Client,
    Server,
}

impl Role {
    /// Direction of the frames this role sends.
    pub fn sending(self) -> Direction {
        match self {
            Role::Client => Direction::ClientToServer,
            Role::Server => Direction::ServerToClient,
        }
    }
}

/// Source of protocol timestamps, in Unix milliseconds.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Deliberate misbehaviour, used by the fault-injection tests and the attack
/// harness.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The server flips one bit of `k_sym` after computing the confirmation
    /// hash and before sealing it.
    FlipKsymBit,
}

pub struct HandshakeConfig {
    pub role: Role,
    pub identity: IdentityKeyPair,
    pub certificate: Certificate,
    pub anchor: TrustAnchor,
    /// Maximum accepted |now - timestamp|.
    pub clock_skew_ms: u64,
    pub clock: Arc<dyn Clock>,
    /// `None` disables replay detection beyond the skew window.
    pub replay_cache: Option<Arc<ReplayCache>>,
    /// For clients: the server identity to resume with and to insist on.
    pub expected_peer: Option<PartyId>,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl HandshakeConfig {
    pub fn new(role: Role, identity: IdentityKeyPair, certificate: Certificate, anchor: TrustAnchor) -> Self {
        HandshakeConfig {
            role,
            identity,
            certificate,
            anchor,
            clock_skew_ms: DEFAULT_SKEW_MS,
            clock: Arc::new(SystemClock),
            replay_cache: Some(Arc::new(ReplayCache::default())),
            expected_peer: None,
            fault: None,
        }
    }

    pub fn my_id(&self) -> PartyId {
        self.certificate.subject_id
    }

    pub fn validate(&self) -> Result<(), HandshakeError> {
        if self.clock_skew_ms == 0 {
            return Err(HandshakeError::Config("clock skew must be positive"));
        }
        if &self.certificate.subject_public != self.identity.ed_public() {
            return Err(HandshakeError::Config("certificate does not carry this identity's public key"));
        }
        Ok(())
    }
}

/// `ID_c || ID_s`, the associated data of every handshake ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionIds {
    pub client: PartyId,
    pub server: PartyId,
}

impl SessionIds {
    pub fn new(role: Role, me: PartyId, peer: PartyId) -> Self {
        match role {
            Role::Client => SessionIds { client: me, server: peer },
            Role::Server => SessionIds { client: peer, server: me },
        }
    }

    pub fn ad(&self) -> [u8; 16] {
        let mut ad = [0u8; 16];
        ad[..8].copy_from_slice(&self.client.0);
        ad[8..].copy_from_slice(&self.server.0);
        ad
    }
}

/// Keys of one established session.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct SessionKeys {
    #[zeroize(skip)]
    pub role: Role,
    #[zeroize(skip)]
    pub my_id: PartyId,
    #[zeroize(skip)]
    pub peer_id: PartyId,
    pub k_eph: AeadKey,
    pub k_sym: AeadKey,
    pub n_r: [u8; 16],
}

impl SessionKeys {
    pub fn ids(&self) -> SessionIds {
        SessionIds::new(self.role, self.my_id, self.peer_id)
    }
}

impl fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionKeys")
            .field("role", &self.role)
            .field("my_id", &self.my_id)
            .field("peer_id", &self.peer_id)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandshakeError {
    #[error("peer certificate rejected: {0:?}")]
    BadCert(CertStatus),
    #[error("timestamp older than the allowed clock skew")]
    StaleTimestamp,
    #[error("timestamp further in the future than the allowed clock skew")]
    FutureTimestamp,
    #[error("signature does not verify under the certificate key")]
    BadSignature,
    #[error("authentication message already seen")]
    Replayed,
    #[error("AEAD authentication failed")]
    AuthFailure,
    #[error("X25519 output is all zero")]
    LowOrderPoint,
    #[error("birational map hit an exceptional point")]
    ExceptionalPoint,
    #[error("ephemeral challenge travelling in the wrong direction")]
    WrongDirection,
    #[error("session key confirmation hash mismatch")]
    ConfirmMismatch,
    #[error("expected {expected}, received {got:?}")]
    UnexpectedMessage { expected: &'static str, got: Kind },
    #[error("peer identity is not the expected one")]
    WrongPeer,
    #[error("no established trust for this peer")]
    UnknownPeer,
    #[error("malformed frame")]
    Malformed,
    #[error("channel closed")]
    ChannelClosed,
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("state error: {0}")]
    State(&'static str),
    #[error("trust store: {0}")]
    TrustStore(String),
}

impl From<PrimitiveError> for HandshakeError {
    fn from(e: PrimitiveError) -> Self {
        match e {
            PrimitiveError::LowOrderPoint => HandshakeError::LowOrderPoint,
            PrimitiveError::AuthFailure | PrimitiveError::TooShort => HandshakeError::AuthFailure,
            PrimitiveError::LengthExceeded => HandshakeError::State("HKDF length exceeded"),
        }
    }
}

impl From<CurveError> for HandshakeError {
    fn from(_: CurveError) -> Self {
        HandshakeError::ExceptionalPoint
    }
}

impl From<WireError> for HandshakeError {
    fn from(_: WireError) -> Self {
        HandshakeError::Malformed
    }
}

impl HandshakeError {
    pub fn code(&self) -> ErrorCode {
        match self {
            HandshakeError::BadCert(_) => ErrorCode::BadCert,
            HandshakeError::StaleTimestamp => ErrorCode::StaleTimestamp,
            HandshakeError::FutureTimestamp => ErrorCode::FutureTimestamp,
            HandshakeError::BadSignature => ErrorCode::BadSignature,
            HandshakeError::Replayed => ErrorCode::Replayed,
            HandshakeError::AuthFailure => ErrorCode::AuthFailure,
            HandshakeError::LowOrderPoint => ErrorCode::LowOrderPoint,
            HandshakeError::ExceptionalPoint => ErrorCode::ExceptionalPoint,
            HandshakeError::WrongDirection => ErrorCode::WrongDirection,
            HandshakeError::ConfirmMismatch => ErrorCode::ConfirmMismatch,
            HandshakeError::UnexpectedMessage { .. } => ErrorCode::UnexpectedMessage,
            HandshakeError::WrongPeer => ErrorCode::WrongPeer,
            HandshakeError::UnknownPeer => ErrorCode::UnknownPeer,
            HandshakeError::Malformed => ErrorCode::Malformed,
            HandshakeError::ChannelClosed => ErrorCode::ChannelClosed,
            HandshakeError::Timeout => ErrorCode::Timeout,
            HandshakeError::Config(_) => ErrorCode::Config,
            HandshakeError::State(_) => ErrorCode::State,
            HandshakeError::TrustStore(_) => ErrorCode::TrustStore,
        }
    }
}

/// Flat error names, stable across releases. The discriminant is the CLI
/// exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ErrorCode {
    BadCert = 10,
    StaleTimestamp = 11,
    FutureTimestamp = 12,
    BadSignature = 13,
    Replayed = 14,
    AuthFailure = 20,
    LowOrderPoint = 21,
    ExceptionalPoint = 22,
    WrongDirection = 23,
    ConfirmMismatch = 24,
    UnexpectedMessage = 30,
    WrongPeer = 31,
    UnknownPeer = 32,
    Malformed = 33,
    ChannelClosed = 40,
    Timeout = 41,
    Config = 50,
    State = 51,
    TrustStore = 52,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 19] = [
        ErrorCode::BadCert,
        ErrorCode::StaleTimestamp,
        ErrorCode::FutureTimestamp,
        ErrorCode::BadSignature,
        ErrorCode::Replayed,
        ErrorCode::AuthFailure,
        ErrorCode::LowOrderPoint,
        ErrorCode::ExceptionalPoint,
        ErrorCode::WrongDirection,
        ErrorCode::ConfirmMismatch,
        ErrorCode::UnexpectedMessage,
        ErrorCode::WrongPeer,
        ErrorCode::UnknownPeer,
        ErrorCode::Malformed,
        ErrorCode::ChannelClosed,
        ErrorCode::Timeout,
        ErrorCode::Config,
        ErrorCode::State,
        ErrorCode::TrustStore,
    ];

    pub fn exit_status(self) -> i32 {
        self as i32
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ErrorCode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCode::ALL.into_iter().find(|c| c.to_string() == s).ok_or_else(|| format!("unknown error name {s:?}"))
    }
}
