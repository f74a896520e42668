//! Frame codec for the handshake and record messages, and transcript
//! accounting.
//!
//! Every frame is `kind(1) | body_len(2, big-endian) | body`. Bodies:
//!
//! | kind | name     | body                                                     |
//! |------|----------|----------------------------------------------------------|
//! | 0x01 | `M1`     | cert(129) timestamp(8) sig(64)                           |
//! | 0x02 | `M2`     | cert(129) timestamp(8) sig(64)                           |
//! | 0x03 | `Eph`    | direction(1) salt(16) sealed_pub(32 + 16)                |
//! | 0x04 | `C1`     | sealed_nonce(16 + 16)                                    |
//! | 0x05 | `C2`     | sealed_key(16 + 16) confirm(32)                          |
//! | 0x06 | `Resume` | client_id(8) server_id(8)                                |
//! | 0x07 | `App`    | seq(8) sealed(n + 16)                                    |
//!
//! Two bit counts are kept per message. `payload_bits` follows the
//! published accounting for the session phase: 256 per ephemeral public key,
//! 128 for the nonce, 128 + 256 for the key plus confirmation hash, and
//! nothing for tags, salts, direction bytes or headers. `wire_bits` is
//! every byte actually sent.

use serde::Serialize;
use thiserror::Error;

use crate::certs::{Certificate, PartyId, CERT_LEN};
use crate::primitives::{Signature, TAG_LEN};

pub const HEADER_LEN: usize = 3;
pub const AUTH_BODY_LEN: usize = CERT_LEN + 8 + 64;
pub const EPH_SALT_LEN: usize = 16;
pub const EPH_SEALED_LEN: usize = 32 + TAG_LEN;
pub const EPH_BODY_LEN: usize = 1 + EPH_SALT_LEN + EPH_SEALED_LEN;
pub const C1_BODY_LEN: usize = 16 + TAG_LEN;
pub const C2_BODY_LEN: usize = 16 + TAG_LEN + 32;
pub const RESUME_BODY_LEN: usize = 16;
pub const MAX_BODY_LEN: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    #[error("transcript does not contain a complete {0}")]
    IncompletePhase(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum Kind {
    M1 = 0x01,
    M2 = 0x02,
    Eph = 0x03,
    C1 = 0x04,
    C2 = 0x05,
    Resume = 0x06,
    App = 0x07,
}

impl Kind {
    pub fn from_byte(b: u8) -> Option<Kind> {
        Some(match b {
            0x01 => Kind::M1,
            0x02 => Kind::M2,
            0x03 => Kind::Eph,
            0x04 => Kind::C1,
            0x05 => Kind::C2,
            0x06 => Kind::Resume,
            0x07 => Kind::App,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::M1 => "m1",
            Kind::M2 => "m2",
            Kind::Eph => "eph",
            Kind::C1 => "c1",
            Kind::C2 => "c2",
            Kind::Resume => "resume",
            Kind::App => "app",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        [Kind::M1, Kind::M2, Kind::Eph, Kind::C1, Kind::C2, Kind::Resume, Kind::App].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum Direction {
    ClientToServer = 0,
    ServerToClient = 1,
}

impl Direction {
    pub fn from_byte(b: u8) -> Option<Direction> {
        match b {
            0 => Some(Direction::ClientToServer),
            1 => Some(Direction::ServerToClient),
            _ => None,
        }
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::ClientToServer => Direction::ServerToClient,
            Direction::ServerToClient => Direction::ClientToServer,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::ClientToServer => "c2s",
            Direction::ServerToClient => "s2c",
        }
    }
}

/// `m1` / `m2`: certificate, timestamp and a signature over both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthMsg {
    pub cert: Certificate,
    pub timestamp: u64,
    pub sig: Signature,
}

impl AuthMsg {
    /// The signed content: `encode(cert) || timestamp_be64`.
    pub fn signed_bytes(cert: &Certificate, timestamp: u64) -> Vec<u8> {
        let mut v = Vec::with_capacity(CERT_LEN + 8);
        v.extend_from_slice(&cert.encode());
        v.extend_from_slice(&timestamp.to_be_bytes());
        v
    }
}

/// Ephemeral key challenge (`E_1` when client-to-server, `E_2` otherwise).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgEph {
    pub direction: Direction,
    pub salt: [u8; EPH_SALT_LEN],
    pub sealed: [u8; EPH_SEALED_LEN],
}

/// `C_1`: the client's nonce sealed under `k_eph`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgC1 {
    pub sealed: [u8; C1_BODY_LEN],
}

/// `C_2` plus the confirmation hash `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgC2 {
    pub sealed: [u8; 16 + TAG_LEN],
    pub confirm: [u8; 32],
}

/// Opens a session that skips authentication because both sides already
/// share `k_init`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resume {
    pub client_id: PartyId,
    pub server_id: PartyId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppFrame {
    pub seq: u64,
    pub sealed: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    M1(AuthMsg),
    M2(AuthMsg),
    Eph(MsgEph),
    C1(MsgC1),
    C2(MsgC2),
    Resume(Resume),
    App(AppFrame),
}

impl Message {
    pub fn kind(&self) -> Kind {
        match self {
            Message::M1(_) => Kind::M1,
            Message::M2(_) => Kind::M2,
            Message::Eph(_) => Kind::Eph,
            Message::C1(_) => Kind::C1,
            Message::C2(_) => Kind::C2,
            Message::Resume(_) => Kind::Resume,
            Message::App(_) => Kind::App,
        }
    }

    fn body(&self) -> Vec<u8> {
        let mut b = Vec::new();
        match self {
            Message::M1(m) | Message::M2(m) => {
                b.extend_from_slice(&m.cert.encode());
                b.extend_from_slice(&m.timestamp.to_be_bytes());
                b.extend_from_slice(&m.sig.0);
            }
            Message::Eph(m) => {
                b.push(m.direction as u8);
                b.extend_from_slice(&m.salt);
                b.extend_from_slice(&m.sealed);
            }
            Message::C1(m) => b.extend_from_slice(&m.sealed),
            Message::C2(m) => {
                b.extend_from_slice(&m.sealed);
                b.extend_from_slice(&m.confirm);
            }
            Message::Resume(m) => {
                b.extend_from_slice(&m.client_id.0);
                b.extend_from_slice(&m.server_id.0);
            }
            Message::App(m) => {
                b.extend_from_slice(&m.seq.to_be_bytes());
                b.extend_from_slice(&m.sealed);
            }
        }
        b
    }

    /// Bits charged under the published accounting convention.
    pub fn payload_bits(&self) -> u64 {
        match self {
            Message::M1(_) | Message::M2(_) => (AUTH_BODY_LEN * 8) as u64,
            Message::Eph(_) => 256,
            Message::C1(_) => 128,
            Message::C2(_) => 128 + 256,
            Message::Resume(_) => 0,
            Message::App(m) => (m.sealed.len().saturating_sub(TAG_LEN) * 8) as u64,
        }
    }

    /// The direction the message travels, where the kind fixes it.
    pub fn direction(&self) -> Option<Direction> {
        match self {
            Message::M1(_) | Message::C1(_) | Message::Resume(_) => Some(Direction::ClientToServer),
            Message::M2(_) | Message::C2(_) => Some(Direction::ServerToClient),
            Message::Eph(m) => Some(m.direction),
            Message::App(_) => None,
        }
    }
}

/// Frames a message.
pub fn encode(msg: &Message) -> Vec<u8> {
    let body = msg.body();
    assert!(body.len() <= MAX_BODY_LEN, "frame body exceeds u16 length field");
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(msg.kind() as u8);
    out.extend_from_slice(&(body.len() as u16).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Total frame length announced by a header.
pub fn frame_len(header: &[u8; HEADER_LEN]) -> usize {
    HEADER_LEN + u16::from_be_bytes([header[1], header[2]]) as usize
}

/// Parses exactly one frame. Any input that is not a well-formed frame of a
/// known kind yields `Malformed`.
pub fn decode(frame: &[u8]) -> Result<Message, WireError> {
    use WireError::Malformed;
    if frame.len() < HEADER_LEN {
        return Err(Malformed("short header"));
    }
    let kind = Kind::from_byte(frame[0]).ok_or(Malformed("unknown kind"))?;
    let len = u16::from_be_bytes([frame[1], frame[2]]) as usize;
    let body = &frame[HEADER_LEN..];
    if body.len() != len {
        return Err(Malformed("length field does not match body"));
    }
    let need = |n: usize| if body.len() == n { Ok(()) } else { Err(Malformed("wrong body length for kind")) };
    Ok(match kind {
        Kind::M1 | Kind::M2 => {
            need(AUTH_BODY_LEN)?;
            let cert = Certificate::decode(&body[..CERT_LEN]).map_err(|_| Malformed("bad certificate"))?;
            let timestamp = u64::from_be_bytes(body[CERT_LEN..CERT_LEN + 8].try_into().unwrap());
            let sig = Signature(body[CERT_LEN + 8..].try_into().unwrap());
            let m = AuthMsg { cert, timestamp, sig };
            if kind == Kind::M1 {
                Message::M1(m)
            } else {
                Message::M2(m)
            }
        }
        Kind::Eph => {
            need(EPH_BODY_LEN)?;
            Message::Eph(MsgEph {
                direction: Direction::from_byte(body[0]).ok_or(Malformed("bad direction"))?,
                salt: body[1..1 + EPH_SALT_LEN].try_into().unwrap(),
                sealed: body[1 + EPH_SALT_LEN..].try_into().unwrap(),
            })
        }
        Kind::C1 => {
            need(C1_BODY_LEN)?;
            Message::C1(MsgC1 { sealed: body.try_into().unwrap() })
        }
        Kind::C2 => {
            need(C2_BODY_LEN)?;
            Message::C2(MsgC2 { sealed: body[..32].try_into().unwrap(), confirm: body[32..].try_into().unwrap() })
        }
        Kind::Resume => {
            need(RESUME_BODY_LEN)?;
            Message::Resume(Resume {
                client_id: PartyId(body[..8].try_into().unwrap()),
                server_id: PartyId(body[8..].try_into().unwrap()),
            })
        }
        Kind::App => {
            if body.len() < 8 + TAG_LEN {
                return Err(Malformed("app frame shorter than seq + tag"));
            }
            Message::App(AppFrame {
                seq: u64::from_be_bytes(body[..8].try_into().unwrap()),
                sealed: body[8..].to_vec(),
            })
        }
    })
}

/// Protocol steps: 1 authentication, 2 initial key (no messages),
/// 3 ephemeral exchange, 4 key exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Step {
    One,
    Two,
    Three,
    Four,
}

impl Step {
    fn of(kind: Kind) -> Option<Step> {
        match kind {
            Kind::M1 | Kind::M2 => Some(Step::One),
            Kind::Eph => Some(Step::Three),
            Kind::C1 | Kind::C2 => Some(Step::Four),
            Kind::Resume | Kind::App => None,
        }
    }

    pub fn phase(self) -> u8 {
        match self {
            Step::One | Step::Two => 1,
            Step::Three | Step::Four => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub kind: Kind,
    pub direction: Option<Direction>,
    pub payload_bits: u64,
    pub wire_bits: u64,
}

/// Ordered record of the frames one endpoint sent and received.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, msg: &Message) {
        self.entries.push(TranscriptEntry {
            kind: msg.kind(),
            direction: msg.direction(),
            payload_bits: msg.payload_bits(),
            wire_bits: (encode(msg).len() * 8) as u64,
        });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    fn has(&self, kind: Kind, dir: Direction) -> bool {
        self.entries.iter().any(|e| e.kind == kind && e.direction == Some(dir))
    }

    fn step_complete(&self, step: Step) -> bool {
        use Direction::*;
        match step {
            Step::One | Step::Two => self.has(Kind::M1, ClientToServer) && self.has(Kind::M2, ServerToClient),
            Step::Three => self.has(Kind::Eph, ClientToServer) && self.has(Kind::Eph, ServerToClient),
            Step::Four => self.has(Kind::C1, ClientToServer) && self.has(Kind::C2, ServerToClient),
        }
    }

    fn step_sum(&self, step: Step) -> u64 {
        self.entries.iter().filter(|e| Step::of(e.kind) == Some(step)).map(|e| e.payload_bits).sum()
    }

    /// Whether this transcript ran authentication (phase 1).
    pub fn ran_phase1(&self) -> bool {
        self.step_complete(Step::One)
    }

    /// Messages exchanged after the ephemeral keys (`C_1`, then `C_2` with `h`).
    pub fn exchanges_after_ephemeral(&self) -> usize {
        self.entries.iter().filter(|e| Step::of(e.kind) == Some(Step::Four)).count()
    }
}

/// Payload bits of one step.
pub fn step_payload_bits(t: &Transcript, step: Step) -> Result<u64, WireError> {
    if !t.step_complete(step) {
        return Err(WireError::IncompletePhase(match step {
            Step::One | Step::Two => "step 1",
            Step::Three => "step 3",
            Step::Four => "step 4",
        }));
    }
    Ok(if step == Step::Two { 0 } else { t.step_sum(step) })
}

/// Payload bits of phase 1 (authentication) or phase 2 (session keys).
pub fn payload_bits(t: &Transcript, phase: u8) -> Result<u64, WireError> {
    match phase {
        1 => step_payload_bits(t, Step::One).map_err(|_| WireError::IncompletePhase("phase 1")),
        2 => {
            let s3 = step_payload_bits(t, Step::Three).map_err(|_| WireError::IncompletePhase("phase 2"))?;
            let s4 = step_payload_bits(t, Step::Four).map_err(|_| WireError::IncompletePhase("phase 2"))?;
            Ok(s3 + s4)
        }
        _ => Err(WireError::IncompletePhase("phase (only 1 and 2 exist)")),
    }
}

/// Every transmitted bit: headers, salts, tags and all.
pub fn wire_bits(t: &Transcript) -> u64 {
    t.entries.iter().map(|e| e.wire_bits).sum()
}
