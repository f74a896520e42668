//! Individual protocol steps.

use std::fmt;

use rand_core::CryptoRngCore;
use zeroize::{Zeroize, ZeroizeOnDrop, Zeroizing};

use crate::certs::{CertStatus, Certificate, PartyId, TrustAnchor};
use crate::curve::{ed_public_to_x25519, mont_to_edwards, IdentityKeyPair, MontgomeryU};
use crate::primitives::{aead_open, aead_seal, dh, hash256, hkdf16, sign, verify, x25519_keypair, AeadKey, AeadNonce};
use crate::wire::{AuthMsg, Direction, Message, MsgC1, MsgC2, MsgEph, C1_BODY_LEN, EPH_SALT_LEN};

use super::{
    HandshakeError, PeerTrust, ReplayCache, Role, SessionIds, INFO_C1_NONCE, INFO_C2_NONCE, INFO_EPH, INFO_EPH_NONCE,
    INFO_INIT,
};

fn auth_msg(identity: &IdentityKeyPair, cert: &Certificate, timestamp: u64) -> AuthMsg {
    let sig = sign(identity, &AuthMsg::signed_bytes(cert, timestamp));
    AuthMsg { cert: cert.clone(), timestamp, sig }
}

pub fn make_m1(identity: &IdentityKeyPair, cert: &Certificate, timestamp: u64) -> Message {
    Message::M1(auth_msg(identity, cert, timestamp))
}

pub fn make_m2(identity: &IdentityKeyPair, cert: &Certificate, timestamp: u64) -> Message {
    Message::M2(auth_msg(identity, cert, timestamp))
}

/// What an accepted `m1`/`m2` tells us about its sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeerFacts {
    pub peer_id: PartyId,
    pub peer_ed_public: [u8; 32],
    pub timestamp: u64,
}

/// Validates an authentication message.
///
/// Checks run cheapest first: certificate issuer and validity window, then
/// timestamp freshness, then the CA signature, then the message signature,
/// and finally the replay cache. A message rejected by either of the first
/// two checks costs no signature verification.
pub fn check_auth_msg(
    msg: &AuthMsg,
    anchor: &TrustAnchor,
    now: u64,
    skew_ms: u64,
    replay_cache: Option<&ReplayCache>,
) -> Result<PeerFacts, HandshakeError> {
    let status = msg.cert.check_cheap(anchor, now);
    if status != CertStatus::Valid {
        return Err(HandshakeError::BadCert(status));
    }
    if now > msg.timestamp.saturating_add(skew_ms) {
        return Err(HandshakeError::StaleTimestamp);
    }
    if msg.timestamp > now.saturating_add(skew_ms) {
        return Err(HandshakeError::FutureTimestamp);
    }
    let status = msg.cert.check_signature(anchor);
    if status != CertStatus::Valid {
        return Err(HandshakeError::BadCert(status));
    }
    if !verify(&msg.cert.subject_public, &AuthMsg::signed_bytes(&msg.cert, msg.timestamp), &msg.sig) {
        return Err(HandshakeError::BadSignature);
    }
    if let Some(cache) = replay_cache {
        if !cache.check_and_insert(msg.cert.subject_id, msg.timestamp, now, skew_ms) {
            return Err(HandshakeError::Replayed);
        }
    }
    Ok(PeerFacts { peer_id: msg.cert.subject_id, peer_ed_public: msg.cert.subject_public, timestamp: msg.timestamp })
}

/// `K_x || K_y`: the static X25519 output and its Edwards image.
#[derive(Zeroize, ZeroizeOnDrop)]
pub struct InitialKeyMaterial {
    pub k_x: [u8; 32],
    pub k_y: [u8; 32],
}

impl fmt::Debug for InitialKeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("InitialKeyMaterial(..)")
    }
}

impl InitialKeyMaterial {
    pub fn compute(me: &IdentityKeyPair, peer_ed_public: &[u8; 32]) -> Result<Self, HandshakeError> {
        let peer_x = ed_public_to_x25519(peer_ed_public)?;
        let shared = dh(me.x_scalar(), &MontgomeryU::from_bytes(&peer_x))?;
        let k_x = *shared.as_bytes();
        let k_y = mont_to_edwards(&MontgomeryU::from_bytes(&k_x))?.to_bytes();
        Ok(InitialKeyMaterial { k_x, k_y })
    }

    pub fn concat(&self) -> Zeroizing<[u8; 64]> {
        let mut out = Zeroizing::new([0u8; 64]);
        out[..32].copy_from_slice(&self.k_x);
        out[32..].copy_from_slice(&self.k_y);
        out
    }
}

/// HKDF salt for `k_init`: `SHA-256(client_x_public || server_x_public)`.
pub fn init_salt(client_x_public: &[u8; 32], server_x_public: &[u8; 32]) -> [u8; 32] {
    let mut both = [0u8; 64];
    both[..32].copy_from_slice(client_x_public);
    both[32..].copy_from_slice(server_x_public);
    hash256(&both)
}

pub fn derive_initial_key(
    me: &IdentityKeyPair,
    peer_ed_public: &[u8; 32],
    role: Role,
) -> Result<AeadKey, HandshakeError> {
    let ikm = InitialKeyMaterial::compute(me, peer_ed_public)?;
    let peer_x = ed_public_to_x25519(peer_ed_public)?;
    let salt = match role {
        Role::Client => init_salt(me.x_public(), &peer_x),
        Role::Server => init_salt(&peer_x, me.x_public()),
    };
    Ok(AeadKey::from_bytes(hkdf16(ikm.concat().as_ref(), &salt, INFO_INIT)))
}

/// One side's ephemeral X25519 key for a Phase-2 session.
///
/// The secret is overwritten as soon as the DH with the peer's ephemeral
/// key has been computed; reading it afterwards is a state error.
pub struct EphemeralState {
    direction: Direction,
    secret: [u8; 32],
    public: [u8; 32],
    erased: bool,
}

impl fmt::Debug for EphemeralState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EphemeralState")
            .field("direction", &self.direction)
            .field("public", &hex::encode(self.public))
            .field("erased", &self.erased)
            .finish()
    }
}

impl Drop for EphemeralState {
    fn drop(&mut self) {
        self.secret.zeroize();
    }
}

impl EphemeralState {
    pub fn secret(&self) -> Result<&[u8; 32], HandshakeError> {
        if self.erased {
            Err(HandshakeError::State("ephemeral secret already erased"))
        } else {
            Ok(&self.secret)
        }
    }

    pub fn public(&self) -> &[u8; 32] {
        &self.public
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn is_erased(&self) -> bool {
        self.erased
    }

    pub fn erase(&mut self) {
        self.secret.zeroize();
        self.erased = true;
    }

    /// Raw bytes of the secret slot, erased or not.
    #[doc(hidden)]
    pub fn storage_snapshot(&self) -> [u8; 32] {
        self.secret
    }
}

pub(crate) fn eph_nonce(k_init: &AeadKey, salt: &[u8; EPH_SALT_LEN], direction: Direction) -> AeadNonce {
    let mut info = INFO_EPH_NONCE.to_vec();
    info.push(direction as u8);
    AeadNonce(hkdf16(k_init.as_bytes(), salt, &info))
}

/// Generates this side's ephemeral key and seals its public half under
/// `k_init`.
pub fn start_phase2(
    trust: &PeerTrust,
    role: Role,
    ids: &SessionIds,
    rng: &mut dyn CryptoRngCore,
) -> (EphemeralState, MsgEph) {
    let mut random = Zeroizing::new([0u8; 32]);
    rng.fill_bytes(random.as_mut());
    let (secret, public) = x25519_keypair(*random);
    let mut salt = [0u8; EPH_SALT_LEN];
    rng.fill_bytes(&mut salt);
    let direction = role.sending();
    let sealed = aead_seal(&trust.k_init, &eph_nonce(&trust.k_init, &salt, direction), &ids.ad(), &public);
    let state = EphemeralState { direction, secret: *secret, public, erased: false };
    let msg = MsgEph { direction, salt, sealed: sealed.try_into().expect("32-byte key plus tag") };
    (state, msg)
}

/// Opens the peer's ephemeral challenge and derives `k_eph`.
///
/// The local ephemeral secret is erased whatever the outcome.
pub fn accept_eph(
    state: &mut EphemeralState,
    msg: &MsgEph,
    trust: &PeerTrust,
    ids: &SessionIds,
) -> Result<AeadKey, HandshakeError> {
    let result = accept_eph_inner(state, msg, trust, ids);
    state.erase();
    result
}

fn accept_eph_inner(
    state: &EphemeralState,
    msg: &MsgEph,
    trust: &PeerTrust,
    ids: &SessionIds,
) -> Result<AeadKey, HandshakeError> {
    if msg.direction != state.direction.reverse() {
        return Err(HandshakeError::WrongDirection);
    }
    let nonce = eph_nonce(&trust.k_init, &msg.salt, msg.direction);
    let peer_public = Zeroizing::new(aead_open(&trust.k_init, &nonce, &ids.ad(), &msg.sealed)?);
    let peer_public: [u8; 32] = peer_public.as_slice().try_into().map_err(|_| HandshakeError::Malformed)?;
    let shared = dh(state.secret()?, &MontgomeryU::from_bytes(&peer_public))?;
    Ok(AeadKey::from_bytes(hkdf16(shared.as_bytes(), &[], INFO_EPH)))
}

pub(crate) fn c_nonce(k_eph: &AeadKey, label: &[u8]) -> AeadNonce {
    AeadNonce(hkdf16(k_eph.as_bytes(), &[], label))
}

/// Picks the client nonce `N_r` and seals it under `k_eph`.
pub fn client_key_exchange(
    k_eph: &AeadKey,
    ids: &SessionIds,
    rng: &mut dyn CryptoRngCore,
) -> (MsgC1, Zeroizing<[u8; 16]>) {
    let mut n_r = Zeroizing::new([0u8; 16]);
    rng.fill_bytes(n_r.as_mut());
    let sealed = aead_seal(k_eph, &c_nonce(k_eph, INFO_C1_NONCE), &ids.ad(), n_r.as_ref());
    let sealed: [u8; C1_BODY_LEN] = sealed.try_into().expect("16-byte nonce plus tag");
    (MsgC1 { sealed }, n_r)
}

pub(crate) fn confirm_hash(k_sym: &AeadKey, n_r: &[u8; 16]) -> [u8; 32] {
    let mut x = Zeroizing::new([0u8; 16]);
    for (i, b) in x.iter_mut().enumerate() {
        *b = k_sym.as_bytes()[i] ^ n_r[i];
    }
    hash256(x.as_ref())
}

/// Opens `C_1`, picks `k_sym`, and returns `C_2` with the confirmation hash
/// along with `k_sym` and the recovered `N_r`.
pub fn server_key_exchange(
    k_eph: &AeadKey,
    ids: &SessionIds,
    msg: &MsgC1,
    rng: &mut dyn CryptoRngCore,
) -> Result<(MsgC2, AeadKey, Zeroizing<[u8; 16]>), HandshakeError> {
    server_key_exchange_with(k_eph, ids, msg, rng, false)
}

pub(crate) fn server_key_exchange_with(
    k_eph: &AeadKey,
    ids: &SessionIds,
    msg: &MsgC1,
    rng: &mut dyn CryptoRngCore,
    flip_ksym_bit: bool,
) -> Result<(MsgC2, AeadKey, Zeroizing<[u8; 16]>), HandshakeError> {
    let opened = Zeroizing::new(aead_open(k_eph, &c_nonce(k_eph, INFO_C1_NONCE), &ids.ad(), &msg.sealed)?);
    let mut n_r = Zeroizing::new([0u8; 16]);
    n_r.copy_from_slice(&opened);
    let mut k = Zeroizing::new([0u8; 16]);
    rng.fill_bytes(k.as_mut());
    let k_sym = AeadKey::from_bytes(*k);
    let confirm = confirm_hash(&k_sym, &n_r);
    let mut sent = *k;
    if flip_ksym_bit {
        sent[0] ^= 1;
    }
    let sealed = aead_seal(k_eph, &c_nonce(k_eph, INFO_C2_NONCE), &ids.ad(), &sent);
    sent.zeroize();
    let msg = MsgC2 { sealed: sealed.try_into().expect("16-byte key plus tag"), confirm };
    Ok((msg, k_sym, n_r))
}

/// Opens `C_2` and checks the confirmation hash against our `N_r`.
pub fn client_finish(
    k_eph: &AeadKey,
    ids: &SessionIds,
    n_r: &[u8; 16],
    msg: &MsgC2,
) -> Result<AeadKey, HandshakeError> {
    let opened = Zeroizing::new(aead_open(k_eph, &c_nonce(k_eph, INFO_C2_NONCE), &ids.ad(), &msg.sealed)?);
    let k_sym = AeadKey::from_slice(&opened).ok_or(HandshakeError::Malformed)?;
    if !ct_eq(&confirm_hash(&k_sym, n_r), &msg.confirm) {
        return Err(HandshakeError::ConfirmMismatch);
    }
    Ok(k_sym)
}

fn ct_eq(a: &[u8; 32], b: &[u8; 32]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certs::issue;
    use crate::curve::derive_identity;
    use crate::primitives::op_counts;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    const NOW: u64 = 1_700_000_000_000;
    const SKEW: u64 = 5_000;

    struct Fixture {
        anchor: TrustAnchor,
        ca: IdentityKeyPair,
        client: IdentityKeyPair,
        client_cert: Certificate,
        server: IdentityKeyPair,
        server_cert: Certificate,
    }

    fn fixture() -> Fixture {
        let ca = derive_identity(&[1; 32]);
        let anchor = TrustAnchor { ca_id: PartyId([0xca; 8]), ca_public: *ca.ed_public() };
        let client = derive_identity(&[2; 32]);
        let server = derive_identity(&[3; 32]);
        let client_cert = issue(&ca, anchor.ca_id, PartyId([0xc1; 8]), *client.ed_public(), 0, u64::MAX).unwrap();
        let server_cert = issue(&ca, anchor.ca_id, PartyId([0x51; 8]), *server.ed_public(), 0, u64::MAX).unwrap();
        Fixture { anchor, ca, client, client_cert, server, server_cert }
    }

    fn auth(m: Message) -> AuthMsg {
        match m {
            Message::M1(a) | Message::M2(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn accepts_fresh_message() {
        let f = fixture();
        let m1 = auth(make_m1(&f.client, &f.client_cert, NOW));
        let facts = check_auth_msg(&m1, &f.anchor, NOW + 10, SKEW, None).unwrap();
        assert_eq!(facts.peer_id, f.client_cert.subject_id);
        assert_eq!(&facts.peer_ed_public, f.client.ed_public());
    }

    #[test]
    fn timestamp_window_edges() {
        let f = fixture();
        let m1 = auth(make_m1(&f.client, &f.client_cert, NOW));
        assert!(check_auth_msg(&m1, &f.anchor, NOW + SKEW, SKEW, None).is_ok());
        assert_eq!(check_auth_msg(&m1, &f.anchor, NOW + SKEW + 1, SKEW, None), Err(HandshakeError::StaleTimestamp));
        assert!(check_auth_msg(&m1, &f.anchor, NOW - SKEW, SKEW, None).is_ok());
        assert_eq!(check_auth_msg(&m1, &f.anchor, NOW - SKEW - 1, SKEW, None), Err(HandshakeError::FutureTimestamp));
    }

    #[test]
    fn replay_cache_catches_in_window_replay() {
        let f = fixture();
        let cache = ReplayCache::default();
        let m1 = auth(make_m1(&f.client, &f.client_cert, NOW));
        assert!(check_auth_msg(&m1, &f.anchor, NOW, SKEW, Some(&cache)).is_ok());
        assert_eq!(check_auth_msg(&m1, &f.anchor, NOW + 1, SKEW, Some(&cache)), Err(HandshakeError::Replayed));
    }

    #[test]
    fn tampered_timestamp_fails_signature() {
        let f = fixture();
        let mut m1 = auth(make_m1(&f.client, &f.client_cert, NOW));
        m1.timestamp += 1;
        assert_eq!(check_auth_msg(&m1, &f.anchor, NOW, SKEW, None), Err(HandshakeError::BadSignature));
    }

    #[test]
    fn stale_reported_before_bad_signature() {
        let f = fixture();
        let mut m1 = auth(make_m1(&f.client, &f.client_cert, NOW));
        m1.sig.0[0] ^= 1;
        assert_eq!(check_auth_msg(&m1, &f.anchor, NOW + SKEW + 1, SKEW, None), Err(HandshakeError::StaleTimestamp));
        assert_eq!(check_auth_msg(&m1, &f.anchor, NOW, SKEW, None), Err(HandshakeError::BadSignature));
    }

    #[test]
    fn salt_is_order_sensitive() {
        let f = fixture();
        let ikm = InitialKeyMaterial::compute(&f.client, f.server.ed_public()).unwrap();
        let good = init_salt(f.client.x_public(), f.server.x_public());
        let swapped = init_salt(f.server.x_public(), f.client.x_public());
        assert_ne!(good, swapped);
        let k = |salt: &[u8; 32]| hkdf16(ikm.concat().as_ref(), salt, INFO_INIT);
        let expected = derive_initial_key(&f.client, f.server.ed_public(), Role::Client).unwrap();
        assert_eq!(&k(&good), expected.as_bytes());
        assert_ne!(&k(&swapped), expected.as_bytes());
    }

    #[test]
    fn ksym_equal_to_nonce_still_confirms() {
        let k = AeadKey::from_bytes([0x42; 16]);
        assert_eq!(confirm_hash(&k, &[0x42; 16]), hash256(&[0u8; 16]));
    }

    #[test]
    fn rogue_ca_rejected_as_bad_cert() {
        let f = fixture();
        let rogue = derive_identity(&[9; 32]);
        let cert = issue(&rogue, f.anchor.ca_id, PartyId([0xc1; 8]), *rogue.ed_public(), 0, u64::MAX).unwrap();
        let m1 = auth(make_m1(&rogue, &cert, NOW));
        assert_eq!(
            check_auth_msg(&m1, &f.anchor, NOW, SKEW, None),
            Err(HandshakeError::BadCert(CertStatus::BadSignature))
        );
    }

    #[test]
    fn cheap_rejections_cost_no_verification() {
        let f = fixture();
        let m1 = auth(make_m1(&f.client, &f.client_cert, NOW));
        let before = op_counts();
        assert_eq!(check_auth_msg(&m1, &f.anchor, NOW + 60_000, SKEW, None), Err(HandshakeError::StaleTimestamp));
        let expired = issue(&f.ca, f.anchor.ca_id, PartyId([7; 8]), *f.client.ed_public(), 0, 10).unwrap();
        let m = auth(make_m1(&f.client, &expired, NOW));
        let before_sign = op_counts();
        assert!(matches!(check_auth_msg(&m, &f.anchor, NOW, SKEW, None), Err(HandshakeError::BadCert(_))));
        assert_eq!(op_counts().since(&before).verify, 0);
        assert_eq!(op_counts().since(&before_sign).asymmetric(), 0);
    }

    #[test]
    fn both_sides_derive_same_initial_key() {
        let f = fixture();
        let kc = derive_initial_key(&f.client, f.server.ed_public(), Role::Client).unwrap();
        let ks = derive_initial_key(&f.server, f.client.ed_public(), Role::Server).unwrap();
        assert_eq!(kc, ks);
        // Roles matter: the salt orders the keys.
        let swapped = derive_initial_key(&f.client, f.server.ed_public(), Role::Server).unwrap();
        assert_ne!(kc, swapped);
    }

    #[test]
    fn initial_key_matches_independent_derivation() {
        use curve25519_dalek::montgomery::MontgomeryPoint;
        use sha2::{Digest, Sha256};
        let f = fixture();
        // Independent route: scalar mult via curve25519-dalek, map via Edwards decompression.
        let server_mont =
            curve25519_dalek::edwards::CompressedEdwardsY(*f.server.ed_public()).decompress().unwrap().to_montgomery();
        let k_x =
            (MontgomeryPoint(server_mont.0) * curve25519_dalek::Scalar::from_bytes_mod_order(*f.client.x_scalar())).0;
        let k_y = mont_to_edwards(&MontgomeryU::from_bytes(&k_x)).unwrap().to_bytes();
        let mut ikm = k_x.to_vec();
        ikm.extend_from_slice(&k_y);
        let mut salt_in = f.client.x_public().to_vec();
        salt_in.extend_from_slice(&server_mont.0);
        let salt = Sha256::digest(&salt_in);
        let mut okm = [0u8; 16];
        hkdf::Hkdf::<Sha256>::new(Some(&salt), &ikm).expand(INFO_INIT, &mut okm).unwrap();
        assert_eq!(derive_initial_key(&f.client, f.server.ed_public(), Role::Client).unwrap().as_bytes(), &okm);
    }

    fn trust_pair(f: &Fixture) -> (PeerTrust, PeerTrust, SessionIds) {
        let k = derive_initial_key(&f.client, f.server.ed_public(), Role::Client).unwrap();
        let ct = PeerTrust {
            peer_id: f.server_cert.subject_id,
            peer_ed_public: *f.server.ed_public(),
            k_init: k.clone(),
            established_at: NOW,
        };
        let st = PeerTrust {
            peer_id: f.client_cert.subject_id,
            peer_ed_public: *f.client.ed_public(),
            k_init: k,
            established_at: NOW,
        };
        let ids = SessionIds { client: f.client_cert.subject_id, server: f.server_cert.subject_id };
        (ct, st, ids)
    }

    #[test]
    fn phase2_agrees_and_erases() {
        let f = fixture();
        let (ct, st, ids) = trust_pair(&f);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (mut ce, e1) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        let (mut se, e2) = start_phase2(&st, Role::Server, &ids, &mut rng);
        let ks = accept_eph(&mut se, &e1, &st, &ids).unwrap();
        let kc = accept_eph(&mut ce, &e2, &ct, &ids).unwrap();
        assert_eq!(ks, kc);
        assert!(ce.is_erased() && se.is_erased());
        assert_eq!(ce.storage_snapshot(), [0; 32]);
        assert!(matches!(ce.secret(), Err(HandshakeError::State(_))));

        let (c1, n_r) = client_key_exchange(&kc, &ids, &mut rng);
        let (c2, k_sym, n_r_server) = server_key_exchange(&ks, &ids, &c1, &mut rng).unwrap();
        assert_eq!(n_r, n_r_server);
        assert_eq!(client_finish(&kc, &ids, &n_r, &c2).unwrap(), k_sym);
    }

    #[test]
    fn reflected_eph_is_wrong_direction() {
        let f = fixture();
        let (ct, _, ids) = trust_pair(&f);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let (mut ce, e1) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        assert_eq!(accept_eph(&mut ce, &e1, &ct, &ids), Err(HandshakeError::WrongDirection));
        assert!(ce.is_erased());
    }

    #[test]
    fn wrong_k_init_fails_before_dh() {
        let f = fixture();
        let (ct, mut st, ids) = trust_pair(&f);
        st.k_init = AeadKey::from_bytes([0x42; 16]);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (_, e1) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        let (mut se, _) = start_phase2(&st, Role::Server, &ids, &mut rng);
        let before = op_counts();
        assert_eq!(accept_eph(&mut se, &e1, &st, &ids), Err(HandshakeError::AuthFailure));
        assert_eq!(op_counts().since(&before).dh, 0);
    }

    #[test]
    fn ids_bind_the_challenge() {
        let f = fixture();
        let (ct, st, ids) = trust_pair(&f);
        let other = SessionIds { client: PartyId([0xee; 8]), server: ids.server };
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let (_, e1) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        let (mut se, _) = start_phase2(&st, Role::Server, &other, &mut rng);
        assert_eq!(accept_eph(&mut se, &e1, &st, &other), Err(HandshakeError::AuthFailure));
    }

    #[test]
    fn eph_nonces_differ_per_session() {
        let f = fixture();
        let (ct, _, ids) = trust_pair(&f);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (_, a) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        let (_, b) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        assert_ne!(eph_nonce(&ct.k_init, &a.salt, a.direction), eph_nonce(&ct.k_init, &b.salt, b.direction));
        assert_ne!(
            eph_nonce(&ct.k_init, &a.salt, Direction::ClientToServer),
            eph_nonce(&ct.k_init, &a.salt, Direction::ServerToClient)
        );
    }

    #[test]
    fn flipped_ksym_fails_confirmation() {
        let f = fixture();
        let (ct, st, ids) = trust_pair(&f);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let (mut ce, e1) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        let (mut se, e2) = start_phase2(&st, Role::Server, &ids, &mut rng);
        let ks = accept_eph(&mut se, &e1, &st, &ids).unwrap();
        let kc = accept_eph(&mut ce, &e2, &ct, &ids).unwrap();
        let (c1, n_r) = client_key_exchange(&kc, &ids, &mut rng);
        let (c2, _, _) = server_key_exchange_with(&ks, &ids, &c1, &mut rng, true).unwrap();
        assert_eq!(client_finish(&kc, &ids, &n_r, &c2), Err(HandshakeError::ConfirmMismatch));
    }

    #[test]
    fn tampered_confirm_rejected() {
        let f = fixture();
        let (ct, st, ids) = trust_pair(&f);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let (mut ce, e1) = start_phase2(&ct, Role::Client, &ids, &mut rng);
        let (mut se, e2) = start_phase2(&st, Role::Server, &ids, &mut rng);
        let ks = accept_eph(&mut se, &e1, &st, &ids).unwrap();
        let kc = accept_eph(&mut ce, &e2, &ct, &ids).unwrap();
        let (c1, n_r) = client_key_exchange(&kc, &ids, &mut rng);
        let (mut c2, _, _) = server_key_exchange(&ks, &ids, &c1, &mut rng).unwrap();
        c2.confirm[31] ^= 0x80;
        assert_eq!(client_finish(&kc, &ids, &n_r, &c2), Err(HandshakeError::ConfirmMismatch));
        c2.confirm[31] ^= 0x80;
        c2.sealed[0] ^= 1;
        assert_eq!(client_finish(&kc, &ids, &n_r, &c2), Err(HandshakeError::AuthFailure));
    }
}
