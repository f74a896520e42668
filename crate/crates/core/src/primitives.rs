//! Uniform adapters over Ed25519, X25519, HKDF-SHA256, ASCON-128a and SHA-256.
//!
//! Every call is counted in a per-thread [`OpCounts`] so tests can assert
//! how much asymmetric work a code path triggered.

use std::cell::Cell;

use ascon_aead::aead::{Aead, KeyInit, Payload};
use ascon_aead::Ascon128a;
use ed25519_dalek::{Signer, VerifyingKey};
use hkdf::Hkdf;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop, Zeroizing};

use crate::curve::{IdentityKeyPair, MontgomeryU};

pub const TAG_LEN: usize = 16;
pub const KEY_LEN: usize = 16;
pub const NONCE_LEN: usize = 16;
pub const HKDF_MAX_OUT: usize = 255 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PrimitiveError {
    #[error("X25519 produced the all-zero output (low-order point)")]
    LowOrderPoint,
    #[error("requested HKDF output exceeds 255 * HashLen")]
    LengthExceeded,
    #[error("AEAD authentication failed")]
    AuthFailure,
    #[error("AEAD input shorter than the tag")]
    TooShort,
}

/// Ed25519 signature `(R, S)`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl core::fmt::Debug for Signature {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Signature({})", hex::encode(self.0))
    }
}

/// Non-zero X25519 output.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct SharedSecret([u8; 32]);

impl SharedSecret {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

/// 128-bit ASCON-128a key.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct AeadKey([u8; KEY_LEN]);

impl AeadKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        AeadKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; KEY_LEN]>::try_from(bytes).ok().map(AeadKey)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl core::fmt::Debug for AeadKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("AeadKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct AeadNonce(pub [u8; NONCE_LEN]);

impl AeadNonce {
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; NONCE_LEN]>::try_from(bytes).ok().map(AeadNonce)
    }
}

/// Per-thread invocation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub sign: u64,
    pub verify: u64,
    pub dh: u64,
    pub keygen: u64,
    pub hkdf: u64,
    pub aead: u64,
    pub hash: u64,
}

impl OpCounts {
    /// Counts accumulated since `earlier` was taken.
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            sign: self.sign - earlier.sign,
            verify: self.verify - earlier.verify,
            dh: self.dh - earlier.dh,
            keygen: self.keygen - earlier.keygen,
            hkdf: self.hkdf - earlier.hkdf,
            aead: self.aead - earlier.aead,
            hash: self.hash - earlier.hash,
        }
    }

    /// sign + verify + dh: the work a flood must not be able to trigger.
    pub fn asymmetric(&self) -> u64 {
        self.sign + self.verify + self.dh
    }

    pub fn add(&mut self, other: &OpCounts) {
        self.sign += other.sign;
        self.verify += other.verify;
        self.dh += other.dh;
        self.keygen += other.keygen;
        self.hkdf += other.hkdf;
        self.aead += other.aead;
        self.hash += other.hash;
    }
}

thread_local! {
    static COUNTS: Cell<OpCounts> = Cell::new(OpCounts::default());
}

fn bump(f: impl FnOnce(&mut OpCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

/// Snapshot of this thread's counters.
pub fn op_counts() -> OpCounts {
    COUNTS.with(|c| c.get())
}

pub fn sign(secret: &IdentityKeyPair, message: &[u8]) -> Signature {
    bump(|c| c.sign += 1);
    Signature(secret.signing_key().sign(message).to_bytes())
}

/// Returns false for malformed keys as well as bad signatures.
pub fn verify(public: &[u8; 32], message: &[u8], sig: &Signature) -> bool {
    bump(|c| c.verify += 1);
    let Ok(key) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    key.verify_strict(message, &sig).is_ok()
}

pub fn dh(scalar: &[u8; 32], peer_public: &MontgomeryU) -> Result<SharedSecret, PrimitiveError> {
    bump(|c| c.dh += 1);
    let out = x25519_dalek::x25519(*scalar, peer_public.to_bytes());
    if out == [0u8; 32] {
        return Err(PrimitiveError::LowOrderPoint);
    }
    Ok(SharedSecret(out))
}

/// Fresh X25519 key pair from 32 random bytes: (clamped scalar, public u).
pub fn x25519_keypair(random: [u8; 32]) -> (Zeroizing<[u8; 32]>, [u8; 32]) {
    bump(|c| c.keygen += 1);
    let secret = x25519_dalek::StaticSecret::from(random);
    let public = x25519_dalek::PublicKey::from(&secret).to_bytes();
    let scalar = Zeroizing::new(crate::curve::clamp_scalar(secret.to_bytes()));
    (scalar, public)
}

pub fn hkdf(ikm: &[u8], salt: &[u8], info: &[u8], out_len: usize) -> Result<Vec<u8>, PrimitiveError> {
    if out_len > HKDF_MAX_OUT {
        return Err(PrimitiveError::LengthExceeded);
    }
    bump(|c| c.hkdf += 1);
    let mut okm = vec![0u8; out_len];
    Hkdf::<Sha256>::new(Some(salt), ikm).expand(info, &mut okm).map_err(|_| PrimitiveError::LengthExceeded)?;
    Ok(okm)
}

/// HKDF with a 16-byte output, the size of every key and nonce in the protocol.
pub fn hkdf16(ikm: &[u8], salt: &[u8], info: &[u8]) -> [u8; 16] {
    let okm = hkdf(ikm, salt, info, 16).expect("16 bytes is within the HKDF limit");
    let mut out = [0u8; 16];
    out.copy_from_slice(&okm);
    out
}

/// Returns `ciphertext ∥ tag`.
pub fn aead_seal(key: &AeadKey, nonce: &AeadNonce, ad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    bump(|c| c.aead += 1);
    Ascon128a::new(key.0.as_ref().into())
        .encrypt(nonce.0.as_ref().into(), Payload { msg: plaintext, aad: ad })
        .expect("ASCON-128a encryption is infallible for in-memory buffers")
}

pub fn aead_open(key: &AeadKey, nonce: &AeadNonce, ad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, PrimitiveError> {
    if sealed.len() < TAG_LEN {
        return Err(PrimitiveError::TooShort);
    }
    bump(|c| c.aead += 1);
    Ascon128a::new(key.0.as_ref().into())
        .decrypt(nonce.0.as_ref().into(), Payload { msg: sealed, aad: ad })
        .map_err(|_| PrimitiveError::AuthFailure)
}

pub fn hash256(data: &[u8]) -> [u8; 32] {
    bump(|c| c.hash += 1);
    Sha256::digest(data).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::derive_identity;
    use proptest::prelude::*;

    fn unhex<const N: usize>(s: &str) -> [u8; N] {
        hex::decode(s).unwrap().try_into().unwrap()
    }

    #[test]
    fn rfc8032_test1_signature() {
        let id = derive_identity(&unhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"));
        let sig = sign(&id, b"");
        assert_eq!(
            hex::encode(sig.0),
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
        );
        assert!(verify(id.ed_public(), b"", &sig));
        assert_eq!(sign(&id, b""), sig);
    }

    #[test]
    fn verify_rejects_flipped_message_bit() {
        let id = derive_identity(&[7; 32]);
        let sig = sign(&id, b"meter reading 42");
        assert!(verify(id.ed_public(), b"meter reading 42", &sig));
        assert!(!verify(id.ed_public(), b"meter reading 43", &sig));
        // a y-coordinate with no curve point is reported as false
        let mut bogus = [0u8; 32];
        bogus[0] = 2;
        assert!(!verify(&bogus, b"x", &sig));
    }

    #[test]
    fn rfc7748_one_iteration() {
        let out = dh(&MontgomeryU::BASE, &MontgomeryU::from_bytes(&MontgomeryU::BASE)).unwrap();
        assert_eq!(hex::encode(out.as_bytes()), "422c8e7a6227d7bca1350b3e2bb7279f7897b87bb6854b783c60e80311ae3079");
    }

    #[test]
    fn low_order_peer_rejected() {
        let id = derive_identity(&[3; 32]);
        let zero = MontgomeryU::from_bytes(&[0u8; 32]);
        assert_eq!(dh(id.x_scalar(), &zero).err(), Some(PrimitiveError::LowOrderPoint));
    }

    #[test]
    fn rfc5869_case1() {
        let okm =
            hkdf(&[0x0b; 22], &unhex::<13>("000102030405060708090a0b0c"), &unhex::<10>("f0f1f2f3f4f5f6f7f8f9"), 42)
                .unwrap();
        assert_eq!(
            hex::encode(okm),
            "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865"
        );
    }

    #[test]
    fn hkdf_length_limit() {
        assert!(hkdf(b"k", b"", b"", HKDF_MAX_OUT).is_ok());
        assert_eq!(hkdf(b"k", b"", b"", HKDF_MAX_OUT + 1), Err(PrimitiveError::LengthExceeded));
    }

    #[test]
    fn hkdf_info_separates() {
        let a = hkdf(b"ikm", b"salt", b"info-a", 32).unwrap();
        let b = hkdf(b"ikm", b"salt", b"info-b", 32).unwrap();
        assert_eq!(a, hkdf(b"ikm", b"salt", b"info-a", 32).unwrap());
        assert_ne!(a, b);
    }

    #[test]
    fn ascon_kat_first_row() {
        let key = AeadKey::from_bytes(unhex("000102030405060708090A0B0C0D0E0F"));
        let nonce = AeadNonce(unhex("000102030405060708090A0B0C0D0E0F"));
        let ct = aead_seal(&key, &nonce, b"", b"");
        assert_eq!(hex::encode_upper(&ct), "7A834E6F09210957067B10FD831F0078");
        assert_eq!(aead_open(&key, &nonce, b"", &ct).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn aead_open_errors() {
        let key = AeadKey::from_bytes([1; 16]);
        let nonce = AeadNonce([2; 16]);
        assert_eq!(aead_open(&key, &nonce, b"", &[0; 15]), Err(PrimitiveError::TooShort));
        let mut ct = aead_seal(&key, &nonce, b"ad", b"payload");
        assert_eq!(ct.len(), 7 + TAG_LEN);
        assert_eq!(aead_open(&key, &nonce, b"aD", &ct), Err(PrimitiveError::AuthFailure));
        ct[0] ^= 1;
        assert_eq!(aead_open(&key, &nonce, b"ad", &ct), Err(PrimitiveError::AuthFailure));
    }

    #[test]
    fn sha256_values() {
        assert_eq!(hex::encode(hash256(b"")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(
            hex::encode(hash256(&[0u8; 16])),
            "374708fff7719dd5979ec875d56cd2286f6d3cf7ec317a3b25632aab28ec37bb"
        );
        assert_ne!(hash256(&[0u8; 16]), hash256(&[1u8; 16]));
    }

    #[test]
    fn counters_track_calls() {
        let before = op_counts();
        let id = derive_identity(&[9; 32]);
        let sig = sign(&id, b"m");
        verify(id.ed_public(), b"m", &sig);
        let d = op_counts().since(&before);
        assert_eq!((d.sign, d.verify, d.dh), (1, 1, 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dh_commutes(a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
            let (sa, pa) = x25519_keypair(a);
            let (sb, pb) = x25519_keypair(b);
            let ab = dh(&sa, &MontgomeryU::from_bytes(&pb)).unwrap();
            let ba = dh(&sb, &MontgomeryU::from_bytes(&pa)).unwrap();
            prop_assert_eq!(ab.as_bytes(), ba.as_bytes());
        }

        #[test]
        fn seal_open_and_single_bit_corruption(
            key in any::<[u8; 16]>(), nonce in any::<[u8; 16]>(),
            ad in proptest::collection::vec(any::<u8>(), 0..32),
            pt in proptest::collection::vec(any::<u8>(), 0..64),
            bit in any::<usize>(),
        ) {
            let key = AeadKey::from_bytes(key);
            let n = AeadNonce(nonce);
            let ct = aead_seal(&key, &n, &ad, &pt);
            prop_assert_eq!(ct.len(), pt.len() + TAG_LEN);
            prop_assert_eq!(aead_open(&key, &n, &ad, &ct).unwrap(), pt);

            let mut bad = ct.clone();
            let i = bit % (bad.len() * 8);
            bad[i / 8] ^= 1 << (i % 8);
            prop_assert_eq!(aead_open(&key, &n, &ad, &bad), Err(PrimitiveError::AuthFailure));

            let mut bad_nonce = n;
            bad_nonce.0[(bit / 8) % 16] ^= 1 << (bit % 8);
            prop_assert_eq!(aead_open(&key, &bad_nonce, &ad, &ct), Err(PrimitiveError::AuthFailure));

            if !ad.is_empty() {
                let mut bad_ad = ad.clone();
                let i = bit % (bad_ad.len() * 8);
                bad_ad[i / 8] ^= 1 << (i % 8);
                prop_assert_eq!(aead_open(&key, &n, &bad_ad, &ct), Err(PrimitiveError::AuthFailure));
            }
        }
    }
}
