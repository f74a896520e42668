//! Montgomery/Edwards coordinate conversions and the unified identity key.
//!
//! A single 32-byte Ed25519 seed yields both the signing key and an X25519
//! scalar. The X25519 public key can be recomputed from the Ed25519 public
//! key alone through the birational map `u = (1 + y) / (1 - y)`, which is
//! what lets a peer's certificate key feed Diffie-Hellman directly.

use ed25519_dalek::SigningKey;
use sha2::{Digest, Sha512};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::field::FieldElement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CurveError {
    #[error("exceptional point: the birational map is undefined here")]
    ExceptionalPoint,
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// Montgomery u-coordinate of a Curve25519 point.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MontgomeryU(pub FieldElement);

impl MontgomeryU {
    pub const BASE: [u8; 32] = {
        let mut b = [0u8; 32];
        b[0] = 9;
        b
    };

    /// Decodes an X25519 u-coordinate; the top bit of byte 31 is ignored.
    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        MontgomeryU(FieldElement::from_bytes(bytes))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

/// Edwards y-coordinate of an edwards25519 point.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EdwardsY(pub FieldElement);

impl EdwardsY {
    /// Decodes a y-coordinate. For a compressed Ed25519 point the x sign
    /// bit lives in bit 255 and is dropped here.
    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        EdwardsY(FieldElement::from_bytes(bytes))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

/// `y = (u - 1) / (u + 1)`.
pub fn mont_to_edwards(u: &MontgomeryU) -> Result<EdwardsY, CurveError> {
    let num = u.0 - FieldElement::ONE;
    let den = u.0 + FieldElement::ONE;
    let inv = den.invert().map_err(|_| CurveError::ExceptionalPoint)?;
    Ok(EdwardsY(num * inv))
}

/// `u = (1 + y) / (1 - y)`.
///
/// The Edwards x sign is not needed: X25519 only ever uses u.
pub fn edwards_to_mont(y: &EdwardsY) -> Result<MontgomeryU, CurveError> {
    let num = FieldElement::ONE + y.0;
    let den = FieldElement::ONE - y.0;
    let inv = den.invert().map_err(|_| CurveError::ExceptionalPoint)?;
    Ok(MontgomeryU(num * inv))
}

/// RFC 7748 scalar clamping.
pub fn clamp_scalar(mut k: [u8; 32]) -> [u8; 32] {
    k[0] &= 248;
    k[31] &= 127;
    k[31] |= 64;
    k
}

/// One long-term key in both of its forms.
#[derive(Clone)]
pub struct IdentityKeyPair {
    seed: Zeroizing<[u8; 32]>,
    signing: SigningKey,
    ed_public: [u8; 32],
    x_scalar: Zeroizing<[u8; 32]>,
    x_public: [u8; 32],
}

impl IdentityKeyPair {
    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn ed_public(&self) -> &[u8; 32] {
        &self.ed_public
    }

    /// The clamped X25519 scalar, `clamp(SHA-512(seed)[..32])`.
    pub fn x_scalar(&self) -> &[u8; 32] {
        &self.x_scalar
    }

    /// X25519 public key computed with the Montgomery ladder from `x_scalar`.
    pub fn x_public(&self) -> &[u8; 32] {
        &self.x_public
    }

    /// The same X25519 public key, reached instead by mapping the Ed25519
    /// public key to Montgomery form.
    pub fn x_public_from_ed(&self) -> Result<[u8; 32], CurveError> {
        ed_public_to_x25519(&self.ed_public)
    }

    pub(crate) fn signing_key(&self) -> &SigningKey {
        &self.signing
    }
}

impl core::fmt::Debug for IdentityKeyPair {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("IdentityKeyPair").field("ed_public", &hex::encode(self.ed_public)).finish_non_exhaustive()
    }
}

/// Maps a compressed Ed25519 public key to its X25519 public key.
pub fn ed_public_to_x25519(ed_public: &[u8; 32]) -> Result<[u8; 32], CurveError> {
    edwards_to_mont(&EdwardsY::from_bytes(ed_public)).map(|u| u.to_bytes())
}

pub fn derive_identity(seed: &[u8; 32]) -> IdentityKeyPair {
    let signing = SigningKey::from_bytes(seed);
    let ed_public = signing.verifying_key().to_bytes();

    let digest: Zeroizing<[u8; 64]> = Zeroizing::new(Sha512::digest(seed).into());
    let mut lower = Zeroizing::new([0u8; 32]);
    lower.copy_from_slice(&digest[..32]);
    let x_scalar = Zeroizing::new(clamp_scalar(*lower));
    let x_public = x25519_dalek::x25519(*x_scalar, MontgomeryU::BASE);

    IdentityKeyPair { seed: Zeroizing::new(*seed), signing, ed_public, x_scalar, x_public }
}
