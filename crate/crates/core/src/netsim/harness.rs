use std::collections::HashMap;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crossbeam_channel::{bounded, select, Receiver, Sender};
use log::debug;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::certs::{issue, Certificate, PartyId, TrustAnchor};
use crate::curve::{derive_identity, IdentityKeyPair, MontgomeryU};
use crate::handshake::ops::{c_nonce, confirm_hash, eph_nonce};
use crate::handshake::{
    derive_initial_key, run_handshake, ErrorCode, HandshakeConfig, ManualClock, ReplayCache, Role, SessionIds,
    TrustStore, INFO_C1_NONCE, INFO_C2_NONCE, INFO_EPH,
};
use crate::primitives::{aead_open, aead_seal, dh, hkdf16, op_counts, sign, x25519_keypair, AeadKey};
use crate::wire::{self, AuthMsg, Direction, Kind, Message, MsgC1, MsgC2, MsgEph, HEADER_LEN};

use super::channel::MemoryChannel;
use super::script::{Action, AdversaryScript, Expect, KeyOwner, Property};

const START_MS: u64 = 1_700_000_000_000;
const SESSION_GAP_MS: u64 = 1_000;
const DAY_MS: u64 = 86_400_000;
const CHANNEL_TIMEOUT: Duration = Duration::from_secs(1);

pub const CLIENT_ID: PartyId = PartyId([0xc1, 0, 0, 0, 0, 0, 0, 1]);
pub const SERVER_ID: PartyId = PartyId([0x5e, 0, 0, 0, 0, 0, 0, 1]);
pub const THIRD_PARTY_ID: PartyId = PartyId([0xc1, 0, 0, 0, 0, 0, 0, 2]);
pub const ADVERSARY_ID: PartyId = PartyId([0xad, 0, 0, 0, 0, 0, 0, 1]);
pub const CA_ID: PartyId = PartyId([0xca, 0, 0, 0, 0, 0, 0, 1]);

#[derive(Clone)]
struct Party {
    id: PartyId,
    identity: IdentityKeyPair,
    cert: Certificate,
}

/// CA plus four registered parties: the attacked client and server, a third
/// party, and the adversary's own identity.
struct World {
    anchor: TrustAnchor,
    client: Party,
    server: Party,
    third: Party,
    adversary: Party,
    clock: Arc<ManualClock>,
}

impl World {
    fn new(seed: u64) -> World {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut seed32 = || {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        };
        let ca = derive_identity(&seed32());
        let anchor = TrustAnchor { ca_id: CA_ID, ca_public: *ca.ed_public() };
        let mut party = |id: PartyId| {
            let identity = derive_identity(&seed32());
            let cert = issue(&ca, CA_ID, id, *identity.ed_public(), START_MS - DAY_MS, START_MS + 365 * DAY_MS)
                .expect("valid window");
            Party { id, identity, cert }
        };
        World {
            client: party(CLIENT_ID),
            server: party(SERVER_ID),
            third: party(THIRD_PARTY_ID),
            adversary: party(ADVERSARY_ID),
            anchor,
            clock: Arc::new(ManualClock::new(START_MS)),
        }
    }

    fn owner(&self, o: KeyOwner) -> &Party {
        match o {
            KeyOwner::Adversary => &self.adversary,
            KeyOwner::LeakedClient => &self.client,
            KeyOwner::LeakedServer => &self.server,
            KeyOwner::ThirdParty => &self.third,
        }
    }

    fn all(&self) -> [&Party; 4] {
        [&self.client, &self.server, &self.third, &self.adversary]
    }

    fn config(&self, role: Role, me: &Party) -> HandshakeConfig {
        let mut cfg = HandshakeConfig::new(role, me.identity.clone(), me.cert.clone(), self.anchor);
        cfg.clock = self.clock.clone();
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndpointReport {
    pub completed: bool,
    pub error: Option<ErrorCode>,
    pub peer: Option<String>,
    pub ran_phase1: bool,
    /// Ed25519 sign + verify calls made by this endpoint.
    pub signature_ops: u64,
    pub dh_ops: u64,
}

impl EndpointReport {
    fn result(&self) -> Result<(), ErrorCode> {
        match self.error {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionReport {
    pub index: usize,
    pub client: EndpointReport,
    pub server: EndpointReport,
    pub keys_agree: bool,
    /// Some endpoint accepted a key the adversary can compute, with a peer
    /// whose key had not leaked.
    pub adversary_computable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttackOutcome {
    pub name: String,
    pub property: Option<Property>,
    pub control: bool,
    pub seed: u64,
    pub sessions: Vec<SessionReport>,
    pub attack_succeeded: bool,
    pub expectations_met: bool,
    /// `Some(false)` if the checked endpoint made signature or DH calls in the
    /// last session.
    pub dos_ok: Option<bool>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl AttackOutcome {
    pub fn last(&self) -> &SessionReport {
        self.sessions.last().expect("at least one session")
    }
}

struct EndpointRun {
    report: EndpointReport,
    k_sym: Option<AeadKey>,
    peer: Option<PartyId>,
}

#[derive(Default)]
struct SessionLog {
    original: Vec<(Direction, Message)>,
    adv_eph: [Option<[u8; 32]>; 2],
    adv_k_sym: Vec<AeadKey>,
}

#[derive(Default)]
struct Derived {
    k_eph_server_side: Option<AeadKey>,
    k_eph_client_side: Option<AeadKey>,
    n_r: Option<[u8; 16]>,
    k_syms: Vec<AeadKey>,
}

fn open_eph(msg: &MsgEph, k_init: &AeadKey, ids: &SessionIds) -> Option<[u8; 32]> {
    let pt = aead_open(k_init, &eph_nonce(k_init, &msg.salt, msg.direction), &ids.ad(), &msg.sealed).ok()?;
    pt.try_into().ok()
}

fn k_eph_from(secret: &Option<[u8; 32]>, public: &Option<[u8; 32]>) -> Option<AeadKey> {
    let shared = dh(secret.as_ref()?, &MontgomeryU::from_bytes(public.as_ref()?)).ok()?;
    Some(AeadKey::from_bytes(hkdf16(shared.as_bytes(), &[], INFO_EPH)))
}

impl SessionLog {
    fn first(&self, kind: Kind, dir: Direction) -> Option<&Message> {
        self.original.iter().find(|(d, m)| *d == dir && m.kind() == kind).map(|(_, m)| m)
    }

    /// Everything the adversary can compute about this session given `k_init`.
    fn derive(&self, k_init: Option<&AeadKey>, ids: &SessionIds) -> Derived {
        let honest_eph = |dir| match (self.first(Kind::Eph, dir), k_init) {
            (Some(Message::Eph(e)), Some(k)) => open_eph(e, k, ids),
            _ => None,
        };
        let c2s = Direction::ClientToServer as usize;
        let s2c = Direction::ServerToClient as usize;
        let mut d = Derived {
            k_eph_server_side: k_eph_from(&self.adv_eph[c2s], &honest_eph(Direction::ServerToClient)),
            k_eph_client_side: k_eph_from(&self.adv_eph[s2c], &honest_eph(Direction::ClientToServer)),
            ..Derived::default()
        };
        if let (Some(Message::C1(c1)), Some(k)) =
            (self.first(Kind::C1, Direction::ClientToServer), &d.k_eph_client_side)
        {
            d.n_r =
                aead_open(k, &c_nonce(k, INFO_C1_NONCE), &ids.ad(), &c1.sealed).ok().and_then(|v| v.try_into().ok());
        }
        if let (Some(Message::C2(c2)), Some(k)) =
            (self.first(Kind::C2, Direction::ServerToClient), &d.k_eph_server_side)
        {
            if let Ok(v) = aead_open(k, &c_nonce(k, INFO_C2_NONCE), &ids.ad(), &c2.sealed) {
                d.k_syms.extend(AeadKey::from_slice(&v));
            }
        }
        d.k_syms.extend(self.adv_k_sym.iter().cloned());
        d
    }
}

/// `k_init` for every pair involving an identity in `held`.
fn k_init_table(world: &World, held: &[&Party]) -> HashMap<(PartyId, PartyId), AeadKey> {
    let mut t = HashMap::new();
    for h in held {
        for p in world.all() {
            if p.id == h.id {
                continue;
            }
            if let Ok(k) = derive_initial_key(&h.identity, p.identity.ed_public(), Role::Client) {
                t.insert((h.id, p.id), k);
            }
            if let Ok(k) = derive_initial_key(&h.identity, p.identity.ed_public(), Role::Server) {
                t.insert((p.id, h.id), k);
            }
        }
    }
    t
}

fn held_parties<'w>(world: &'w World, script: &AdversaryScript, before: bool) -> Vec<&'w Party> {
    [KeyOwner::Adversary, KeyOwner::LeakedClient, KeyOwner::LeakedServer, KeyOwner::ThirdParty]
        .into_iter()
        .filter(|o| script.holds(*o, before))
        .map(|o| world.owner(o))
        .collect()
}

struct Adversary<'a> {
    world: &'a World,
    script: &'a AdversaryScript,
    rng: ChaCha20Rng,
    ids: SessionIds,
    k_init: HashMap<(PartyId, PartyId), AeadKey>,
    counters: HashMap<(Kind, Direction), usize>,
    recorded: HashMap<(Kind, Direction), Vec<Message>>,
    sessions: Vec<SessionLog>,
    notes: Vec<String>,
}

impl<'a> Adversary<'a> {
    fn new(world: &'a World, script: &'a AdversaryScript, seed: u64) -> Self {
        Adversary {
            world,
            script,
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0xad),
            ids: SessionIds { client: world.client.id, server: world.server.id },
            k_init: k_init_table(world, &held_parties(world, script, true)),
            counters: HashMap::new(),
            recorded: HashMap::new(),
            sessions: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn log(&mut self) -> &mut SessionLog {
        self.sessions.last_mut().expect("session started")
    }

    fn relay(&mut self, dir: Direction, frame: Vec<u8>) -> Vec<Vec<u8>> {
        let Ok(msg) = wire::decode(&frame) else {
            return vec![frame];
        };
        let kind = msg.kind();
        let counter = self.counters.entry((kind, dir)).or_insert(0);
        let index = *counter;
        *counter += 1;
        self.recorded.entry((kind, dir)).or_default().push(msg.clone());
        self.log().original.push((dir, msg.clone()));

        let action =
            self.script.rules.iter().find(|r| r.matches(kind, index, dir)).map(|r| r.action).unwrap_or(Action::Pass);
        if action != Action::Pass {
            debug!("adversary: {} #{index} {} -> {action:?}", kind.name(), dir.name());
        }
        match action {
            Action::Pass => vec![frame],
            Action::Drop => vec![],
            Action::Replay(n) => match self.recorded[&(kind, dir)].get(n) {
                Some(old) => vec![wire::encode(old)],
                None => {
                    self.notes.push(format!("replay {n} of {} unavailable; passed", kind.name()));
                    vec![frame]
                }
            },
            Action::TamperByte(off) => {
                let mut f = frame;
                if let Some(b) = f.get_mut(HEADER_LEN + off) {
                    *b ^= 0x01;
                }
                vec![f]
            }
            Action::Delay(ms) => {
                self.world.clock.advance(ms);
                vec![frame]
            }
            Action::ShiftTimestamp(ms) => match msg {
                Message::M1(mut a) => {
                    a.timestamp = a.timestamp.wrapping_add_signed(ms);
                    vec![wire::encode(&Message::M1(a))]
                }
                Message::M2(mut a) => {
                    a.timestamp = a.timestamp.wrapping_add_signed(ms);
                    vec![wire::encode(&Message::M2(a))]
                }
                _ => vec![frame],
            },
            Action::SubstituteKey(owner) => vec![wire::encode(&self.substitute(dir, msg, owner))],
        }
    }

    fn random<const N: usize>(&mut self) -> [u8; N] {
        let mut b = [0u8; N];
        self.rng.fill_bytes(&mut b);
        b
    }

    fn substitute(&mut self, dir: Direction, msg: Message, owner: KeyOwner) -> Message {
        let who = self.world.owner(owner).clone();
        let ids = self.ids;
        match msg {
            Message::M1(a) | Message::M2(a) => {
                let sig = sign(&who.identity, &AuthMsg::signed_bytes(&a.cert, a.timestamp));
                let forged = AuthMsg { sig, ..a };
                if dir == Direction::ClientToServer {
                    Message::M1(forged)
                } else {
                    Message::M2(forged)
                }
            }
            Message::Eph(_) => {
                let pair = if who.id == ids.client || who.id == ids.server {
                    (ids.client, ids.server)
                } else if dir == Direction::ClientToServer {
                    (who.id, ids.server)
                } else {
                    (ids.client, who.id)
                };
                let key = self.k_init.get(&pair).cloned().unwrap_or_else(|| AeadKey::from_bytes(self.random()));
                let (secret, public) = x25519_keypair(self.random());
                let salt = self.random();
                let sealed = aead_seal(&key, &eph_nonce(&key, &salt, dir), &ids.ad(), &public);
                self.log().adv_eph[dir as usize] = Some(*secret);
                Message::Eph(MsgEph { direction: dir, salt, sealed: sealed.try_into().unwrap() })
            }
            Message::C1(_) => {
                let d = self.current();
                let n_r: [u8; 16] = self.random();
                let sealed = match d.k_eph_server_side {
                    Some(k) => aead_seal(&k, &c_nonce(&k, INFO_C1_NONCE), &ids.ad(), &n_r).try_into().unwrap(),
                    None => self.random(),
                };
                Message::C1(MsgC1 { sealed })
            }
            Message::C2(_) => {
                let d = self.current();
                let k_sym = AeadKey::from_bytes(self.random());
                let (sealed, confirm) = match (d.k_eph_client_side, d.n_r) {
                    (Some(k), Some(n_r)) => (
                        aead_seal(&k, &c_nonce(&k, INFO_C2_NONCE), &ids.ad(), k_sym.as_bytes()).try_into().unwrap(),
                        confirm_hash(&k_sym, &n_r),
                    ),
                    _ => (self.random(), self.random()),
                };
                self.log().adv_k_sym.push(k_sym);
                Message::C2(MsgC2 { sealed, confirm })
            }
            other => other,
        }
    }

    fn current(&self) -> Derived {
        let k = self.k_init.get(&(self.ids.client, self.ids.server));
        self.sessions.last().expect("session started").derive(k, &self.ids)
    }

    /// Relays frames until either endpoint hangs up.
    fn run_session(
        &mut self,
        from_client: Receiver<Vec<u8>>,
        to_client: Sender<Vec<u8>>,
        from_server: Receiver<Vec<u8>>,
        to_server: Sender<Vec<u8>>,
    ) {
        self.sessions.push(SessionLog::default());
        loop {
            select! {
                recv(from_client) -> r => match r {
                    Ok(f) => for out in self.relay(Direction::ClientToServer, f) {
                        if to_server.send(out).is_err() { return; }
                    },
                    Err(_) => return,
                },
                recv(from_server) -> r => match r {
                    Ok(f) => for out in self.relay(Direction::ServerToClient, f) {
                        if to_client.send(out).is_err() { return; }
                    },
                    Err(_) => return,
                },
            }
        }
    }
}

fn endpoint(cfg: HandshakeConfig, mut channel: MemoryChannel, store: &TrustStore, seed: u64) -> EndpointRun {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let before = op_counts();
    let result = run_handshake(Arc::new(cfg), &mut channel, store, &mut rng);
    let ops = op_counts().since(&before);
    drop(channel);
    let mut report = EndpointReport {
        completed: false,
        error: None,
        peer: None,
        ran_phase1: false,
        signature_ops: ops.sign + ops.verify,
        dh_ops: ops.dh,
    };
    match result {
        Ok(o) => {
            report.completed = true;
            report.peer = Some(o.keys.peer_id.to_string());
            report.ran_phase1 = o.ran_phase1;
            EndpointRun { report, k_sym: Some(o.keys.k_sym.clone()), peer: Some(o.keys.peer_id) }
        }
        Err(e) => {
            report.error = Some(e.code());
            EndpointRun { report, k_sym: None, peer: None }
        }
    }
}

/// Runs `script` against a fresh client/server pair built from `seed`.
pub fn run_attack(script: &AdversaryScript, seed: u64) -> AttackOutcome {
    let world = World::new(seed);
    let client_store = TrustStore::in_memory();
    let server_store = TrustStore::in_memory();
    let server_cache = script.replay_cache.then(|| Arc::new(ReplayCache::default()));
    let mut adversary = Adversary::new(&world, script, seed);
    let mut seeds = ChaCha20Rng::seed_from_u64(seed ^ 0xe7d);
    let mut runs = Vec::new();

    for i in 0..script.sessions {
        if i > 0 {
            world.clock.advance(SESSION_GAP_MS);
        }
        if script.client_trust_reset {
            client_store.clear().expect("in-memory store");
        }
        let mut client_cfg = world.config(Role::Client, &world.client);
        client_cfg.expected_peer = Some(world.server.id);
        let mut server_cfg = world.config(Role::Server, &world.server);
        server_cfg.replay_cache = server_cache.clone();
        server_cfg.fault = script.fault;

        let (c_tx, a_from_c) = bounded(64);
        let (a_to_c, c_rx) = bounded(64);
        let (s_tx, a_from_s) = bounded(64);
        let (a_to_s, s_rx) = bounded(64);
        let client_ch = MemoryChannel::from_parts(c_tx, c_rx, CHANNEL_TIMEOUT);
        let server_ch = MemoryChannel::from_parts(s_tx, s_rx, CHANNEL_TIMEOUT);
        let (cs, ss) = (seeds.next_u64(), seeds.next_u64());

        let (client, server) = thread::scope(|scope| {
            let c = scope.spawn(|| endpoint(client_cfg, client_ch, &client_store, cs));
            let s = scope.spawn(|| endpoint(server_cfg, server_ch, &server_store, ss));
            adversary.run_session(a_from_c, a_to_c, a_from_s, a_to_s);
            (c.join().expect("client thread"), s.join().expect("server thread"))
        });
        runs.push((client, server));
    }

    // Post-hoc recomputation with every key the adversary ever learns.
    let all_keys = k_init_table(&world, &held_parties(&world, script, false));
    let pair_key = all_keys.get(&(world.client.id, world.server.id));
    let compromised: Vec<PartyId> = held_parties(&world, script, true).iter().map(|p| p.id).collect();
    let mut sessions = Vec::new();
    for (i, ((client, server), log)) in runs.into_iter().zip(&adversary.sessions).enumerate() {
        let candidates = log.derive(pair_key, &adversary.ids).k_syms;
        let computable = [&client, &server].iter().any(|e| match (&e.k_sym, e.peer) {
            (Some(k), Some(peer)) => !compromised.contains(&peer) && candidates.contains(k),
            _ => false,
        });
        let keys_agree = matches!((&client.k_sym, &server.k_sym), (Some(a), Some(b)) if a == b);
        sessions.push(SessionReport {
            index: i,
            client: client.report,
            server: server.report,
            keys_agree,
            adversary_computable: computable,
        });
    }

    let attack_succeeded = sessions.iter().any(|s| s.adversary_computable);
    let last = sessions.last().expect("sessions >= 1");
    let check = |e: Option<Expect>, r: &EndpointReport| e.is_none_or(|e| e.check(r.result()));
    let expectations_met = check(script.expect.client, &last.client)
        && check(script.expect.server, &last.server)
        && script.expect.adversary_succeeds.is_none_or(|want| want == attack_succeeded);
    let dos_ok = script.dos_check.map(|role| {
        let r = match role {
            Role::Client => &last.client,
            Role::Server => &last.server,
        };
        r.signature_ops == 0 && r.dh_ops == 0
    });
    let defended = script.control || !attack_succeeded;
    let passed = defended && expectations_met && dos_ok != Some(false);
    AttackOutcome {
        name: script.name.clone(),
        property: script.property,
        control: script.control,
        seed,
        sessions,
        attack_succeeded,
        expectations_met,
        dos_ok,
        passed,
        notes: adversary.notes,
    }
}
