//! Compact fixed-layout certificates and a single-level CA.
//!
//! Encoding (big-endian integers, 129 bytes):
//!
//! ```text
//! version(1) | subject_id(8) | subject_public(32) | not_before(8) | not_after(8) | issuer_id(8) | issuer_sig(64)
//! ```
//!
//! `issuer_sig` is an Ed25519 signature over the first 65 bytes.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::curve::IdentityKeyPair;
use crate::primitives::{self, Signature};

pub const CERT_VERSION: u8 = 1;
pub const CERT_TBS_LEN: usize = 65;
pub const CERT_LEN: usize = CERT_TBS_LEN + 64;

pub const CERT_EXT: &str = "lsegc";
pub const KEY_EXT: &str = "lsegk";

/// 8-byte party identifier; also the protocol's `ID_c` / `ID_s`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PartyId(pub [u8; 8]);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartyId({self})")
    }
}

impl FromStr for PartyId {
    type Err = CertError;

    /// Exactly 16 hex characters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 {
            return Err(CertError::BadId(s.to_string()));
        }
        let bytes = hex::decode(s).map_err(|_| CertError::BadId(s.to_string()))?;
        Ok(PartyId(bytes.try_into().expect("16 hex chars decode to 8 bytes")))
    }
}

#[derive(Debug, Error)]
pub enum CertError {
    #[error("validity window is empty (not_before must be < not_after)")]
    InvalidWindow,
    #[error("malformed certificate: {0}")]
    Malformed(&'static str),
    #[error("party id must be 16 hex characters, got {0:?}")]
    BadId(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Certificate {
    pub version: u8,
    pub subject_id: PartyId,
    pub subject_public: [u8; 32],
    pub not_before: u64,
    pub not_after: u64,
    pub issuer_id: PartyId,
    pub issuer_sig: Signature,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TrustAnchor {
    pub ca_id: PartyId,
    pub ca_public: [u8; 32],
}

impl TrustAnchor {
    /// The anchor described by a self-issued CA certificate.
    pub fn from_ca_cert(cert: &Certificate) -> Self {
        TrustAnchor { ca_id: cert.subject_id, ca_public: cert.subject_public }
    }
}

/// Why a certificate was rejected.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum CertStatus {
    Valid,
    BadIssuer,
    BadSignature,
    Expired,
    NotYetValid,
}

impl CertStatus {
    pub fn is_valid(self) -> bool {
        self == CertStatus::Valid
    }
}

impl Certificate {
    fn tbs(&self) -> [u8; CERT_TBS_LEN] {
        let mut out = [0u8; CERT_TBS_LEN];
        out[0] = self.version;
        out[1..9].copy_from_slice(&self.subject_id.0);
        out[9..41].copy_from_slice(&self.subject_public);
        out[41..49].copy_from_slice(&self.not_before.to_be_bytes());
        out[49..57].copy_from_slice(&self.not_after.to_be_bytes());
        out[57..65].copy_from_slice(&self.issuer_id.0);
        out
    }

    pub fn encode(&self) -> [u8; CERT_LEN] {
        let mut out = [0u8; CERT_LEN];
        out[..CERT_TBS_LEN].copy_from_slice(&self.tbs());
        out[CERT_TBS_LEN..].copy_from_slice(&self.issuer_sig.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Certificate, CertError> {
        if bytes.len() != CERT_LEN {
            return Err(CertError::Malformed("wrong length"));
        }
        if bytes[0] != CERT_VERSION {
            return Err(CertError::Malformed("unknown version"));
        }
        let u64_at = |i: usize| u64::from_be_bytes(bytes[i..i + 8].try_into().unwrap());
        Ok(Certificate {
            version: bytes[0],
            subject_id: PartyId(bytes[1..9].try_into().unwrap()),
            subject_public: bytes[9..41].try_into().unwrap(),
            not_before: u64_at(41),
            not_after: u64_at(49),
            issuer_id: PartyId(bytes[57..65].try_into().unwrap()),
            issuer_sig: Signature(bytes[65..].try_into().unwrap()),
        })
    }

    /// Issuer and validity-window checks only; no signature work.
    pub fn check_cheap(&self, anchor: &TrustAnchor, now: u64) -> CertStatus {
        if self.issuer_id != anchor.ca_id {
            CertStatus::BadIssuer
        } else if now < self.not_before {
            CertStatus::NotYetValid
        } else if now > self.not_after {
            CertStatus::Expired
        } else {
            CertStatus::Valid
        }
    }

    pub fn check_signature(&self, anchor: &TrustAnchor) -> CertStatus {
        if primitives::verify(&anchor.ca_public, &self.tbs(), &self.issuer_sig) {
            CertStatus::Valid
        } else {
            CertStatus::BadSignature
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CertError> {
        fs::write(path, self.encode()).map_err(|source| CertError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Certificate, CertError> {
        let bytes = fs::read(path).map_err(|source| CertError::Io { path: path.display().to_string(), source })?;
        Certificate::decode(&bytes)
    }
}

pub fn issue(
    ca: &IdentityKeyPair,
    ca_id: PartyId,
    subject_id: PartyId,
    subject_public: [u8; 32],
    not_before: u64,
    not_after: u64,
) -> Result<Certificate, CertError> {
    if not_before >= not_after {
        return Err(CertError::InvalidWindow);
    }
    let mut cert = Certificate {
        version: CERT_VERSION,
        subject_id,
        subject_public,
        not_before,
        not_after,
        issuer_id: ca_id,
        issuer_sig: Signature([0; 64]),
    };
    cert.issuer_sig = primitives::sign(ca, &cert.tbs());
    Ok(cert)
}

/// Full check: issuer, validity window, then the CA signature.
pub fn verify_cert(cert: &Certificate, anchor: &TrustAnchor, now: u64) -> CertStatus {
    match cert.check_cheap(anchor, now) {
        CertStatus::Valid => cert.check_signature(anchor),
        other => other,
    }
}

/// Writes a 32-byte seed readable only by the owner.
pub fn save_seed(path: &Path, seed: &[u8; 32]) -> Result<(), CertError> {
    let io = |source| CertError::Io { path: path.display().to_string(), source };
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).map_err(io)?;
    f.write_all(seed).map_err(io)
}

pub fn load_seed(path: &Path) -> Result<[u8; 32], CertError> {
    let bytes = fs::read(path).map_err(|source| CertError::Io { path: path.display().to_string(), source })?;
    bytes.try_into().map_err(|_| CertError::Malformed("key file must hold exactly 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::derive_identity;
    use proptest::prelude::*;

    const CA_ID: PartyId = PartyId(*b"ca-root\0");

    fn leaf(ca: &IdentityKeyPair) -> Certificate {
        let subject = derive_identity(&[5; 32]);
        issue(ca, CA_ID, PartyId(*b"meter-01"), *subject.ed_public(), 1_000, 2_000).unwrap()
    }

    fn anchor(ca: &IdentityKeyPair) -> TrustAnchor {
        TrustAnchor { ca_id: CA_ID, ca_public: *ca.ed_public() }
    }

    #[test]
    fn issue_then_verify() {
        let ca = derive_identity(&[1; 32]);
        let cert = leaf(&ca);
        assert_eq!(verify_cert(&cert, &anchor(&ca), 1_500), CertStatus::Valid);
        assert_eq!(verify_cert(&cert, &anchor(&ca), 1_000), CertStatus::Valid);
        assert_eq!(verify_cert(&cert, &anchor(&ca), 2_000), CertStatus::Valid);
    }

    #[test]
    fn window_edges() {
        let ca = derive_identity(&[1; 32]);
        let cert = leaf(&ca);
        assert_eq!(verify_cert(&cert, &anchor(&ca), 2_001), CertStatus::Expired);
        assert_eq!(verify_cert(&cert, &anchor(&ca), 999), CertStatus::NotYetValid);
    }

    #[test]
    fn empty_window_rejected() {
        let ca = derive_identity(&[1; 32]);
        let r = issue(&ca, CA_ID, PartyId([0; 8]), [9; 32], 5, 5);
        assert!(matches!(r, Err(CertError::InvalidWindow)));
    }

    #[test]
    fn corrupt_subject_key_rejected() {
        let ca = derive_identity(&[1; 32]);
        let mut cert = leaf(&ca);
        cert.subject_public[3] ^= 0x10;
        assert_eq!(verify_cert(&cert, &anchor(&ca), 1_500), CertStatus::BadSignature);
    }

    #[test]
    fn other_ca_rejected() {
        let ca = derive_identity(&[1; 32]);
        let rogue = derive_identity(&[2; 32]);
        let subject = derive_identity(&[5; 32]);
        let cert =
            issue(&rogue, PartyId(*b"rogue-ca"), PartyId(*b"meter-01"), *subject.ed_public(), 1_000, 2_000).unwrap();
        assert_eq!(verify_cert(&cert, &anchor(&ca), 1_500), CertStatus::BadIssuer);
        // Same id, different key: the signature check catches it.
        let forged = issue(&rogue, CA_ID, PartyId(*b"meter-01"), *subject.ed_public(), 1_000, 2_000).unwrap();
        assert_eq!(verify_cert(&forged, &anchor(&ca), 1_500), CertStatus::BadSignature);
    }

    #[test]
    fn decode_errors() {
        let ca = derive_identity(&[1; 32]);
        let enc = leaf(&ca).encode();
        assert!(matches!(Certificate::decode(&enc[..CERT_LEN - 1]), Err(CertError::Malformed(_))));
        let mut v2 = enc;
        v2[0] = 2;
        assert!(matches!(Certificate::decode(&v2), Err(CertError::Malformed(_))));
    }

    #[test]
    fn party_id_parsing() {
        assert_eq!("00112233445566ff".parse::<PartyId>().unwrap().0[7], 0xff);
        assert!("0011".parse::<PartyId>().is_err());
        assert!("zz112233445566ff".parse::<PartyId>().is_err());
    }

    #[test]
    fn seed_file_is_owner_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.lsegk");
        save_seed(&p, &[4; 32]).unwrap();
        assert_eq!(load_seed(&p).unwrap(), [4; 32]);
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let mode = std::fs::metadata(&p).unwrap().permissions().mode();
            assert_eq!(mode & 0o077, 0);
        }
    }

    fn arb_cert() -> impl Strategy<Value = Certificate> {
        (
            any::<[u8; 8]>(),
            any::<[u8; 32]>(),
            any::<u64>(),
            any::<u64>(),
            any::<[u8; 8]>(),
            any::<[u8; 32]>(),
            any::<[u8; 32]>(),
        )
            .prop_map(|(sid, pk, nb, na, iid, s1, s2)| {
                let mut sig = [0u8; 64];
                sig[..32].copy_from_slice(&s1);
                sig[32..].copy_from_slice(&s2);
                Certificate {
                    version: CERT_VERSION,
                    subject_id: PartyId(sid),
                    subject_public: pk,
                    not_before: nb,
                    not_after: na,
                    issuer_id: PartyId(iid),
                    issuer_sig: Signature(sig),
                }
            })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(cert in arb_cert()) {
            prop_assert_eq!(Certificate::decode(&cert.encode()).unwrap(), cert);
        }
    }

    #[test]
    fn every_byte_flip_is_rejected() {
        let ca = derive_identity(&[1; 32]);
        let enc = leaf(&ca).encode();
        for i in 0..CERT_LEN {
            for bit in [0x01u8, 0x80] {
                let mut b = enc;
                b[i] ^= bit;
                let accepted =
                    Certificate::decode(&b).map(|c| verify_cert(&c, &anchor(&ca), 1_500).is_valid()).unwrap_or(false);
                assert!(!accepted, "flip at byte {i} bit {bit:#x} accepted");
            }
        }
    }
}
