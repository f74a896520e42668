//! Application records under `k_sym`.
//!
//! Each direction keeps its own 64-bit sequence number. The nonce is
//! `direction(1) | zero(7) | seq_be(8)`, so the two directions never share a
//! nonce and a sender never repeats one. Records must arrive in order.

use thiserror::Error;

use crate::handshake::{SessionIds, SessionKeys};
use crate::netsim::{Channel, ChannelError};
use crate::primitives::{aead_open, aead_seal, AeadKey, AeadNonce};
use crate::wire::{self, AppFrame, Direction, Message};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("sequence numbers exhausted; re-key required")]
    CounterExhausted,
    #[error("record sequence {got} already consumed (next is {expected})")]
    Replayed { expected: u64, got: u64 },
    #[error("record sequence {got} skips ahead of {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("record authentication failed")]
    AuthFailure,
    #[error("malformed record")]
    Malformed,
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
}

pub fn record_nonce(direction: Direction, seq: u64) -> AeadNonce {
    let mut n = [0u8; 16];
    n[0] = direction as u8;
    n[8..].copy_from_slice(&seq.to_be_bytes());
    AeadNonce(n)
}

pub struct Sealer {
    key: AeadKey,
    direction: Direction,
    ad: [u8; 16],
    next: u64,
}

impl Sealer {
    /// Seals one record. The last sequence number, `u64::MAX`, is never used.
    pub fn seal(&mut self, plaintext: &[u8]) -> Result<AppFrame, SessionError> {
        if self.next == u64::MAX {
            return Err(SessionError::CounterExhausted);
        }
        let seq = self.next;
        let sealed = aead_seal(&self.key, &record_nonce(self.direction, seq), &self.ad, plaintext);
        self.next += 1;
        Ok(AppFrame { seq, sealed })
    }

    pub fn next_seq(&self) -> u64 {
        self.next
    }

    #[doc(hidden)]
    pub fn set_next_seq(&mut self, seq: u64) {
        self.next = seq;
    }
}

pub struct Opener {
    key: AeadKey,
    direction: Direction,
    ad: [u8; 16],
    next: u64,
}

impl Opener {
    pub fn open(&mut self, frame: &AppFrame) -> Result<Vec<u8>, SessionError> {
        if self.next == u64::MAX {
            return Err(SessionError::CounterExhausted);
        }
        if frame.seq < self.next {
            return Err(SessionError::Replayed { expected: self.next, got: frame.seq });
        }
        if frame.seq > self.next {
            return Err(SessionError::OutOfOrder { expected: self.next, got: frame.seq });
        }
        let pt = aead_open(&self.key, &record_nonce(self.direction, frame.seq), &self.ad, &frame.sealed)
            .map_err(|_| SessionError::AuthFailure)?;
        self.next += 1;
        Ok(pt)
    }

    pub fn next_seq(&self) -> u64 {
        self.next
    }
}

/// Both record directions for one endpoint.
pub struct RecordCipher {
    pub sealer: Sealer,
    pub opener: Opener,
}

impl RecordCipher {
    pub fn new(keys: &SessionKeys) -> Self {
        let ids: SessionIds = keys.ids();
        let out = keys.role.sending();
        RecordCipher {
            sealer: Sealer { key: keys.k_sym.clone(), direction: out, ad: ids.ad(), next: 0 },
            opener: Opener { key: keys.k_sym.clone(), direction: out.reverse(), ad: ids.ad(), next: 0 },
        }
    }

    pub fn split(self) -> (Sealer, Opener) {
        (self.sealer, self.opener)
    }
}

/// A record cipher bound to a channel.
pub struct SecureChannel<C: Channel> {
    channel: C,
    cipher: RecordCipher,
}

impl<C: Channel> SecureChannel<C> {
    pub fn new(channel: C, keys: &SessionKeys) -> Self {
        SecureChannel { channel, cipher: RecordCipher::new(keys) }
    }

    pub fn send(&mut self, plaintext: &[u8]) -> Result<(), SessionError> {
        let frame = self.cipher.sealer.seal(plaintext)?;
        self.channel.send(&wire::encode(&Message::App(frame)))?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Vec<u8>, SessionError> {
        let bytes = self.channel.recv()?;
        match wire::decode(&bytes) {
            Ok(Message::App(frame)) => self.cipher.opener.open(&frame),
            _ => Err(SessionError::Malformed),
        }
    }

    pub fn into_inner(self) -> C {
        self.channel
    }
}
