use std::sync::Arc;

use log::debug;
use rand_core::CryptoRngCore;
use zeroize::Zeroize;

use crate::certs::Certificate;
use crate::netsim::{Channel, ChannelError};
use crate::primitives::AeadKey;
use crate::wire::{self, Kind, Message, Resume, Transcript};

use super::ops::{
    accept_eph, check_auth_msg, client_finish, client_key_exchange, derive_initial_key, make_m1, make_m2,
    server_key_exchange_with, start_phase2, EphemeralState,
};
use super::{Fault, HandshakeConfig, HandshakeError, PeerTrust, Role, SessionIds, SessionKeys, TrustStore};

#[derive(Debug)]
pub struct HandshakeOutcome {
    pub keys: SessionKeys,
    pub trust: PeerTrust,
    pub transcript: Transcript,
    pub ran_phase1: bool,
    /// The peer's certificate, when Phase 1 ran in this session.
    pub peer_cert: Option<Certificate>,
}

/// Result of feeding one message to a state machine.
#[derive(Debug, Default)]
pub struct Progress {
    pub send: Vec<Message>,
    pub outcome: Option<HandshakeOutcome>,
}

fn unexpected(expected: &'static str, got: &Message) -> HandshakeError {
    HandshakeError::UnexpectedMessage { expected, got: got.kind() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClientStage {
    Idle,
    AwaitM2,
    AwaitE2,
    AwaitC2,
    Done,
    Failed,
}

pub struct ClientHandshake {
    cfg: Arc<HandshakeConfig>,
    stage: ClientStage,
    trust: Option<PeerTrust>,
    new_trust: Option<PeerTrust>,
    ids: Option<SessionIds>,
    eph: Option<EphemeralState>,
    k_eph: Option<AeadKey>,
    n_r: [u8; 16],
    transcript: Transcript,
    ran_phase1: bool,
    peer_cert: Option<Certificate>,
}

impl Drop for ClientHandshake {
    fn drop(&mut self) {
        self.n_r.zeroize();
    }
}

impl ClientHandshake {
    /// `resume` skips Phase 1 using previously established trust.
    pub fn new(cfg: Arc<HandshakeConfig>, resume: Option<PeerTrust>) -> Result<Self, HandshakeError> {
        cfg.validate()?;
        if cfg.role != Role::Client {
            return Err(HandshakeError::Config("client handshake needs a client config"));
        }
        Ok(ClientHandshake {
            cfg,
            stage: ClientStage::Idle,
            trust: resume,
            new_trust: None,
            ids: None,
            eph: None,
            k_eph: None,
            n_r: [0; 16],
            transcript: Transcript::new(),
            ran_phase1: false,
            peer_cert: None,
        })
    }

    pub fn start(&mut self, rng: &mut dyn CryptoRngCore) -> Result<Vec<Message>, HandshakeError> {
        if self.stage != ClientStage::Idle {
            return Err(HandshakeError::State("handshake already started"));
        }
        let out = match &self.trust {
            None => {
                let m1 = make_m1(&self.cfg.identity, &self.cfg.certificate, self.cfg.clock.now_ms());
                self.stage = ClientStage::AwaitM2;
                vec![m1]
            }
            Some(trust) => {
                let resume = Message::Resume(Resume { client_id: self.cfg.my_id(), server_id: trust.peer_id });
                let e1 = self.begin_phase2(rng)?;
                self.stage = ClientStage::AwaitE2;
                vec![resume, e1]
            }
        };
        for m in &out {
            self.transcript.record(m);
        }
        Ok(out)
    }

    fn begin_phase2(&mut self, rng: &mut dyn CryptoRngCore) -> Result<Message, HandshakeError> {
        let trust = self.trust.as_ref().ok_or(HandshakeError::State("no trust for Phase 2"))?;
        let ids = SessionIds::new(Role::Client, self.cfg.my_id(), trust.peer_id);
        let (state, e1) = start_phase2(trust, Role::Client, &ids, rng);
        self.ids = Some(ids);
        self.eph = Some(state);
        Ok(Message::Eph(e1))
    }

    pub fn receive(&mut self, msg: &Message, rng: &mut dyn CryptoRngCore) -> Result<Progress, HandshakeError> {
        self.transcript.record(msg);
        let r = self.step(msg, rng);
        match &r {
            Ok(p) => {
                for m in &p.send {
                    self.transcript.record(m);
                }
            }
            Err(e) => {
                debug!("client handshake failed: {e}");
                self.fail();
            }
        }
        r
    }

    fn step(&mut self, msg: &Message, rng: &mut dyn CryptoRngCore) -> Result<Progress, HandshakeError> {
        match self.stage {
            ClientStage::AwaitM2 => {
                let Message::M2(m2) = msg else {
                    return Err(unexpected("m2", msg));
                };
                let cfg = self.cfg.clone();
                let now = cfg.clock.now_ms();
                let facts = check_auth_msg(m2, &cfg.anchor, now, cfg.clock_skew_ms, cfg.replay_cache.as_deref())?;
                if cfg.expected_peer.is_some_and(|p| p != facts.peer_id) {
                    return Err(HandshakeError::WrongPeer);
                }
                let k_init = derive_initial_key(&cfg.identity, &facts.peer_ed_public, Role::Client)?;
                let trust = PeerTrust {
                    peer_id: facts.peer_id,
                    peer_ed_public: facts.peer_ed_public,
                    k_init,
                    established_at: now,
                };
                self.trust = Some(trust.clone());
                self.new_trust = Some(trust);
                self.ran_phase1 = true;
                self.peer_cert = Some(m2.cert.clone());
                let e1 = self.begin_phase2(rng)?;
                self.stage = ClientStage::AwaitE2;
                Ok(Progress { send: vec![e1], outcome: None })
            }
            ClientStage::AwaitE2 => {
                let Message::Eph(e2) = msg else {
                    return Err(unexpected("ephemeral challenge", msg));
                };
                let (trust, ids) = (self.trust.as_ref().unwrap(), self.ids.unwrap());
                let eph = self.eph.as_mut().ok_or(HandshakeError::State("no ephemeral key"))?;
                let k_eph = accept_eph(eph, e2, trust, &ids)?;
                let (c1, n_r) = client_key_exchange(&k_eph, &ids, rng);
                self.n_r = *n_r;
                self.k_eph = Some(k_eph);
                self.stage = ClientStage::AwaitC2;
                Ok(Progress { send: vec![Message::C1(c1)], outcome: None })
            }
            ClientStage::AwaitC2 => {
                let Message::C2(c2) = msg else {
                    return Err(unexpected("c2", msg));
                };
                let ids = self.ids.unwrap();
                let k_eph = self.k_eph.take().ok_or(HandshakeError::State("no ephemeral session key"))?;
                let k_sym = client_finish(&k_eph, &ids, &self.n_r, c2)?;
                let keys = SessionKeys {
                    role: Role::Client,
                    my_id: ids.client,
                    peer_id: ids.server,
                    k_eph,
                    k_sym,
                    n_r: self.n_r,
                };
                self.n_r.zeroize();
                self.stage = ClientStage::Done;
                Ok(Progress { send: vec![], outcome: Some(self.outcome(keys)) })
            }
            ClientStage::Idle => Err(HandshakeError::State("handshake not started")),
            ClientStage::Done | ClientStage::Failed => Err(HandshakeError::State("handshake finished")),
        }
    }

    fn outcome(&mut self, keys: SessionKeys) -> HandshakeOutcome {
        HandshakeOutcome {
            keys,
            trust: self.trust.clone().expect("trust set before completion"),
            transcript: self.transcript.clone(),
            ran_phase1: self.ran_phase1,
            peer_cert: self.peer_cert.clone(),
        }
    }

    fn fail(&mut self) {
        self.stage = ClientStage::Failed;
        if let Some(e) = self.eph.as_mut() {
            e.erase();
        }
        self.k_eph = None;
        self.n_r.zeroize();
    }

    /// Trust established by Phase 1 and not yet collected.
    pub fn take_new_trust(&mut self) -> Option<PeerTrust> {
        self.new_trust.take()
    }

    pub fn is_done(&self) -> bool {
        self.stage == ClientStage::Done
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Raw contents of every slot that can hold an ephemeral secret, `k_eph`
    /// or `N_r`. All zero once the handshake has finished either way.
    #[doc(hidden)]
    pub fn secret_storage_snapshot(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(64);
        v.extend_from_slice(&self.eph.as_ref().map(|e| e.storage_snapshot()).unwrap_or([0; 32]));
        v.extend_from_slice(&self.k_eph.as_ref().map(|k| *k.as_bytes()).unwrap_or([0; 16]));
        v.extend_from_slice(&self.n_r);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ServerStage {
    AwaitHello,
    AwaitE1,
    AwaitC1,
    Done,
    Failed,
}

pub struct ServerHandshake {
    cfg: Arc<HandshakeConfig>,
    stage: ServerStage,
    trust: Option<PeerTrust>,
    new_trust: Option<PeerTrust>,
    ids: Option<SessionIds>,
    eph: Option<EphemeralState>,
    k_eph: Option<AeadKey>,
    transcript: Transcript,
    ran_phase1: bool,
    peer_cert: Option<Certificate>,
}

impl ServerHandshake {
    pub fn new(cfg: Arc<HandshakeConfig>) -> Result<Self, HandshakeError> {
        cfg.validate()?;
        if cfg.role != Role::Server {
            return Err(HandshakeError::Config("server handshake needs a server config"));
        }
        Ok(ServerHandshake {
            cfg,
            stage: ServerStage::AwaitHello,
            trust: None,
            new_trust: None,
            ids: None,
            eph: None,
            k_eph: None,
            transcript: Transcript::new(),
            ran_phase1: false,
            peer_cert: None,
        })
    }

    pub fn receive(
        &mut self,
        msg: &Message,
        store: &TrustStore,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Progress, HandshakeError> {
        self.transcript.record(msg);
        let r = self.step(msg, store, rng);
        match &r {
            Ok(p) => {
                for m in &p.send {
                    self.transcript.record(m);
                }
            }
            Err(e) => {
                debug!("server handshake failed: {e}");
                self.fail();
            }
        }
        r
    }

    fn step(
        &mut self,
        msg: &Message,
        store: &TrustStore,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Progress, HandshakeError> {
        let cfg = self.cfg.clone();
        match (self.stage, msg) {
            (ServerStage::AwaitHello, Message::M1(m1)) => {
                let now = cfg.clock.now_ms();
                let facts = check_auth_msg(m1, &cfg.anchor, now, cfg.clock_skew_ms, cfg.replay_cache.as_deref())?;
                let k_init = derive_initial_key(&cfg.identity, &facts.peer_ed_public, Role::Server)?;
                let trust = PeerTrust {
                    peer_id: facts.peer_id,
                    peer_ed_public: facts.peer_ed_public,
                    k_init,
                    established_at: now,
                };
                self.ids = Some(SessionIds::new(Role::Server, cfg.my_id(), facts.peer_id));
                self.trust = Some(trust.clone());
                self.new_trust = Some(trust);
                self.ran_phase1 = true;
                self.peer_cert = Some(m1.cert.clone());
                self.stage = ServerStage::AwaitE1;
                Ok(Progress { send: vec![make_m2(&cfg.identity, &cfg.certificate, now)], outcome: None })
            }
            (ServerStage::AwaitHello, Message::Resume(r)) => {
                if r.server_id != cfg.my_id() {
                    return Err(HandshakeError::WrongPeer);
                }
                let trust = store.get(&r.client_id).ok_or(HandshakeError::UnknownPeer)?;
                self.ids = Some(SessionIds::new(Role::Server, cfg.my_id(), trust.peer_id));
                self.trust = Some(trust);
                self.stage = ServerStage::AwaitE1;
                Ok(Progress::default())
            }
            (ServerStage::AwaitHello, _) => Err(unexpected("m1 or resume", msg)),
            (ServerStage::AwaitE1, Message::Eph(e1)) => {
                let (trust, ids) = (self.trust.as_ref().unwrap(), self.ids.unwrap());
                let (state, e2) = start_phase2(trust, Role::Server, &ids, rng);
                let eph = self.eph.insert(state);
                let k_eph = accept_eph(eph, e1, trust, &ids)?;
                self.k_eph = Some(k_eph);
                self.stage = ServerStage::AwaitC1;
                Ok(Progress { send: vec![Message::Eph(e2)], outcome: None })
            }
            (ServerStage::AwaitE1, _) => Err(unexpected("ephemeral challenge", msg)),
            (ServerStage::AwaitC1, Message::C1(c1)) => {
                let ids = self.ids.unwrap();
                let k_eph = self.k_eph.take().ok_or(HandshakeError::State("no ephemeral session key"))?;
                let flip = cfg.fault == Some(Fault::FlipKsymBit);
                let (c2, k_sym, n_r) = server_key_exchange_with(&k_eph, &ids, c1, rng, flip)?;
                let keys =
                    SessionKeys { role: Role::Server, my_id: ids.server, peer_id: ids.client, k_eph, k_sym, n_r: *n_r };
                self.stage = ServerStage::Done;
                let mut outcome = HandshakeOutcome {
                    keys,
                    trust: self.trust.clone().unwrap(),
                    transcript: Transcript::new(),
                    ran_phase1: self.ran_phase1,
                    peer_cert: self.peer_cert.clone(),
                };
                let c2 = Message::C2(c2);
                outcome.transcript = self.transcript.clone();
                outcome.transcript.record(&c2);
                Ok(Progress { send: vec![c2], outcome: Some(outcome) })
            }
            (ServerStage::AwaitC1, _) => Err(unexpected("c1", msg)),
            (ServerStage::Done | ServerStage::Failed, _) => Err(HandshakeError::State("handshake finished")),
        }
    }

    fn fail(&mut self) {
        self.stage = ServerStage::Failed;
        if let Some(e) = self.eph.as_mut() {
            e.erase();
        }
        self.k_eph = None;
    }

    pub fn take_new_trust(&mut self) -> Option<PeerTrust> {
        self.new_trust.take()
    }

    pub fn is_done(&self) -> bool {
        self.stage == ServerStage::Done
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    #[doc(hidden)]
    pub fn secret_storage_snapshot(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(48);
        v.extend_from_slice(&self.eph.as_ref().map(|e| e.storage_snapshot()).unwrap_or([0; 32]));
        v.extend_from_slice(&self.k_eph.as_ref().map(|k| *k.as_bytes()).unwrap_or([0; 16]));
        v
    }
}

fn channel_err(e: ChannelError) -> HandshakeError {
    match e {
        ChannelError::Timeout => HandshakeError::Timeout,
        ChannelError::Closed | ChannelError::Io(_) => HandshakeError::ChannelClosed,
    }
}

fn send_all(channel: &mut dyn Channel, msgs: &[Message]) -> Result<(), HandshakeError> {
    for m in msgs {
        channel.send(&wire::encode(m)).map_err(channel_err)?;
    }
    Ok(())
}

fn recv(channel: &mut dyn Channel) -> Result<Message, HandshakeError> {
    let frame = channel.recv().map_err(channel_err)?;
    let msg = wire::decode(&frame)?;
    if msg.kind() == Kind::App {
        return Err(HandshakeError::UnexpectedMessage { expected: "handshake message", got: Kind::App });
    }
    Ok(msg)
}

/// Runs a complete handshake for `cfg.role` over `channel`.
///
/// A client resumes with Phase 2 alone when `store` holds trust for
/// `cfg.expected_peer`. Trust from a successful Phase 1 is written to `store`
/// before Phase 2 starts, so a later Phase-2 failure leaves it in place.
pub fn run_handshake(
    cfg: Arc<HandshakeConfig>,
    channel: &mut dyn Channel,
    store: &TrustStore,
    rng: &mut dyn CryptoRngCore,
) -> Result<HandshakeOutcome, HandshakeError> {
    match cfg.role {
        Role::Client => {
            let resume = cfg.expected_peer.and_then(|p| store.get(&p));
            let mut hs = ClientHandshake::new(cfg, resume)?;
            send_all(channel, &hs.start(rng)?)?;
            loop {
                let msg = recv(channel)?;
                let progress = hs.receive(&msg, rng)?;
                if let Some(t) = hs.take_new_trust() {
                    store.insert(t)?;
                }
                send_all(channel, &progress.send)?;
                if let Some(outcome) = progress.outcome {
                    return Ok(outcome);
                }
            }
        }
        Role::Server => {
            let mut hs = ServerHandshake::new(cfg)?;
            loop {
                let msg = recv(channel)?;
                let progress = hs.receive(&msg, store, rng)?;
                if let Some(t) = hs.take_new_trust() {
                    store.insert(t)?;
                }
                send_all(channel, &progress.send)?;
                if let Some(outcome) = progress.outcome {
                    return Ok(outcome);
                }
            }
        }
    }
}

/// Runs client and server against each other in the calling thread, passing
/// every message through the wire codec. Phase 1 runs unless both stores
/// already hold trust for the pair.
pub fn run_loopback(
    client_cfg: Arc<HandshakeConfig>,
    server_cfg: Arc<HandshakeConfig>,
    client_store: &TrustStore,
    server_store: &TrustStore,
    client_rng: &mut dyn CryptoRngCore,
    server_rng: &mut dyn CryptoRngCore,
) -> Result<(HandshakeOutcome, HandshakeOutcome), HandshakeError> {
    let resume = client_cfg.expected_peer.and_then(|p| client_store.get(&p));
    let mut client = ClientHandshake::new(client_cfg, resume)?;
    let mut server = ServerHandshake::new(server_cfg)?;
    let mut to_server = client.start(client_rng)?;
    let mut server_outcome = None;
    loop {
        let mut to_client = Vec::new();
        for m in to_server.drain(..) {
            let m = wire::decode(&wire::encode(&m))?;
            let p = server.receive(&m, server_store, server_rng)?;
            if let Some(t) = server.take_new_trust() {
                server_store.insert(t)?;
            }
            to_client.extend(p.send);
            if p.outcome.is_some() {
                server_outcome = p.outcome;
            }
        }
        if to_client.is_empty() {
            return Err(HandshakeError::State("loopback stalled"));
        }
        for m in to_client {
            let m = wire::decode(&wire::encode(&m))?;
            let p = client.receive(&m, client_rng)?;
            if let Some(t) = client.take_new_trust() {
                client_store.insert(t)?;
            }
            to_server.extend(p.send);
            if let Some(c) = p.outcome {
                let s = server_outcome.take().ok_or(HandshakeError::State("client finished before server"))?;
                return Ok((c, s));
            }
        }
    }
}
