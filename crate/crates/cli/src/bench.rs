//! Latency and communication-cost benchmarks.
//!
//! Every case goes through the public `lseg` API, so step timings include
//! wire encoding and decoding. Latencies use `Instant`; protocol timestamps
//! come from a fixed clock value.

use std::fmt::Write as _;
use std::hint::black_box;
use std::io;
use std::sync::Arc;
use std::time::Instant;

use lseg::certs::{issue, verify_cert, PartyId};
use lseg::curve::{derive_identity, mont_to_edwards, MontgomeryU};
use lseg::fixtures::{Pki, NOW_MS};
use lseg::handshake::PeerTrust;
use lseg::handshake::{
    accept_eph, check_auth_msg, client_finish, client_key_exchange, derive_initial_key, make_m1, make_m2, run_loopback,
    server_key_exchange, start_phase2, Role, SessionIds, TrustStore, DEFAULT_SKEW_MS,
};
use lseg::primitives::{aead_open, aead_seal, hash256, x25519_keypair, AeadKey, AeadNonce};
use lseg::wire::{self, Kind, Message, Step, Transcript};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

pub const PRIMITIVE_LABELS: [&str; 7] = [
    "certificate generation",
    "certificate verification",
    "ECDH key generation",
    "birational mapping",
    "hashing",
    "AEAD encrypt",
    "AEAD decrypt",
];

pub const CLIENT_TOTAL: &str = "client handshake total";

pub fn step_label(role: Role, step: usize) -> String {
    let who = match role {
        Role::Client => "client",
        Role::Server => "server",
    };
    format!("{who} step {step}")
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub primitive_iters: usize,
    pub step_iters: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { primitive_iters: 1000, step_iters: 100, warmup: 50, seed: 1 }
    }
}

/// One CSV row: `label,unit,mean,median,p95,n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub unit: &'static str,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub n: usize,
}

impl BenchRow {
    fn latency(label: impl Into<String>, mut micros: Vec<f64>) -> BenchRow {
        assert!(!micros.is_empty());
        micros.sort_by(f64::total_cmp);
        let n = micros.len();
        let mean = micros.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 { micros[n / 2] } else { (micros[n / 2 - 1] + micros[n / 2]) / 2.0 };
        let p95 = micros[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1];
        BenchRow { label: label.into(), unit: "us", mean, median, p95, n }
    }

    fn count(label: impl Into<String>, bits: u64) -> BenchRow {
        let v = bits as f64;
        BenchRow { label: label.into(), unit: "bits", mean: v, median: v, p95: v, n: 1 }
    }
}

pub trait BenchCase: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, opts: &BenchOptions) -> Vec<BenchRow>;
}

fn time_loop(warmup: usize, iters: usize, mut op: impl FnMut()) -> Vec<f64> {
    for _ in 0..warmup {
        op();
    }
    (0..iters)
        .map(|_| {
            let t = Instant::now();
            op();
            t.elapsed().as_secs_f64() * 1e6
        })
        .collect()
}

/// A primitive timed in isolation; `setup` runs once, outside the timing.
pub struct PrimitiveCase {
    label: &'static str,
    setup: fn(u64) -> Box<dyn FnMut()>,
}

impl BenchCase for PrimitiveCase {
    fn name(&self) -> &str {
        self.label
    }

    fn run(&self, opts: &BenchOptions) -> Vec<BenchRow> {
        let op = (self.setup)(opts.seed);
        vec![BenchRow::latency(self.label, time_loop(opts.warmup, opts.primitive_iters, op))]
    }
}

const LEAF_ID: PartyId = PartyId(*b"bench-01");

fn primitive_cases() -> Vec<PrimitiveCase> {
    vec![
        PrimitiveCase {
            label: PRIMITIVE_LABELS[0],
            setup: |seed| {
                let pki = Pki::new(seed);
                Box::new(move || {
                    let c = issue(&pki.ca, pki.anchor.ca_id, LEAF_ID, *pki.client.ed_public(), 0, u64::MAX);
                    black_box(c.unwrap());
                })
            },
        },
        PrimitiveCase {
            label: PRIMITIVE_LABELS[1],
            setup: |seed| {
                let pki = Pki::new(seed);
                Box::new(move || {
                    black_box(verify_cert(&pki.client_cert, &pki.anchor, NOW_MS));
                })
            },
        },
        PrimitiveCase {
            label: PRIMITIVE_LABELS[2],
            setup: |seed| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                Box::new(move || {
                    let mut r = [0u8; 32];
                    rng.fill_bytes(&mut r);
                    black_box(x25519_keypair(r));
                })
            },
        },
        PrimitiveCase {
            label: PRIMITIVE_LABELS[3],
            setup: |seed| {
                let u = MontgomeryU::from_bytes(Pki::new(seed).client.x_public());
                Box::new(move || {
                    black_box(mont_to_edwards(black_box(&u)).unwrap());
                })
            },
        },
        PrimitiveCase {
            label: PRIMITIVE_LABELS[4],
            setup: |seed| {
                let data = [seed as u8; 64];
                Box::new(move || {
                    black_box(hash256(black_box(&data)));
                })
            },
        },
        PrimitiveCase {
            label: PRIMITIVE_LABELS[5],
            setup: |seed| {
                let (key, nonce, pt) = aead_inputs(seed);
                Box::new(move || {
                    black_box(aead_seal(&key, &nonce, b"ad", black_box(&pt)));
                })
            },
        },
        PrimitiveCase {
            label: PRIMITIVE_LABELS[6],
            setup: |seed| {
                let (key, nonce, pt) = aead_inputs(seed);
                let sealed = aead_seal(&key, &nonce, b"ad", &pt);
                Box::new(move || {
                    black_box(aead_open(&key, &nonce, b"ad", black_box(&sealed)).unwrap());
                })
            },
        },
    ]
}

/// 32-byte plaintext, the size of an ephemeral public key.
fn aead_inputs(seed: u64) -> (AeadKey, AeadNonce, [u8; 32]) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut k = [0u8; 16];
    let mut n = [0u8; 16];
    let mut pt = [0u8; 32];
    rng.fill_bytes(&mut k);
    rng.fill_bytes(&mut n);
    rng.fill_bytes(&mut pt);
    (AeadKey::from_bytes(k), AeadNonce(n), pt)
}

/// Steps 1 to 4 for one role, timing only that role's work. The peer's
/// messages are produced between timed sections.
///
/// Step 1 covers identity derivation, certificate issuance, producing this
/// side's authentication message and checking the peer's. Step 2 is the
/// `k_init` derivation, step 3 the ephemeral exchange and step 4 the key
/// exchange with confirmation.
pub struct StepCase {
    pub role: Role,
}

#[derive(Default)]
struct Stopwatch(f64);

impl Stopwatch {
    fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0 += t.elapsed().as_secs_f64() * 1e6;
        out
    }
}

impl StepCase {
    fn one_run(&self, pki: &Pki, rng: &mut ChaCha20Rng) -> [f64; 4] {
        let client_role = self.role == Role::Client;
        let mut w = [Stopwatch::default(), Stopwatch::default(), Stopwatch::default(), Stopwatch::default()];
        let (me_id, peer_id) = if client_role {
            (pki.client_cert.subject_id, pki.server_cert.subject_id)
        } else {
            (pki.server_cert.subject_id, pki.client_cert.subject_id)
        };
        let (peer, peer_cert) =
            if client_role { (&pki.server, &pki.server_cert) } else { (&pki.client, &pki.client_cert) };
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);

        // Step 1
        let (me, my_cert, my_auth) = w[0].time(|| {
            let me = derive_identity(&seed);
            let cert = issue(&pki.ca, pki.anchor.ca_id, me_id, *me.ed_public(), 0, u64::MAX).unwrap();
            let auth = if client_role { make_m1(&me, &cert, NOW_MS) } else { make_m2(&me, &cert, NOW_MS) };
            (me, cert, wire::encode(&auth))
        });
        let peer_auth = if client_role { make_m2(peer, peer_cert, NOW_MS) } else { make_m1(peer, peer_cert, NOW_MS) };
        let peer_auth = wire::encode(&peer_auth);
        let facts = w[0].time(|| match wire::decode(&peer_auth).unwrap() {
            Message::M1(a) | Message::M2(a) => check_auth_msg(&a, &pki.anchor, NOW_MS, DEFAULT_SKEW_MS, None).unwrap(),
            _ => unreachable!(),
        });
        black_box((&my_cert, &my_auth));

        // Step 2
        let k_init = w[1].time(|| derive_initial_key(&me, &facts.peer_ed_public, self.role).unwrap());
        let peer_role = if client_role { Role::Server } else { Role::Client };
        let peer_k_init = derive_initial_key(peer, me.ed_public(), peer_role).unwrap();
        let trust = PeerTrust { peer_id, peer_ed_public: facts.peer_ed_public, k_init, established_at: NOW_MS };
        let peer_trust =
            PeerTrust { peer_id: me_id, peer_ed_public: *me.ed_public(), k_init: peer_k_init, established_at: NOW_MS };
        let ids = SessionIds::new(self.role, me_id, peer_id);
        let peer_ids = SessionIds::new(peer_role, peer_id, me_id);

        // Step 3
        let (k_eph, peer_k_eph) = if client_role {
            let (mut st, e1) = w[2].time(|| {
                let (st, e1) = start_phase2(&trust, self.role, &ids, rng);
                (st, wire::encode(&Message::Eph(e1)))
            });
            let Message::Eph(e1) = wire::decode(&e1).unwrap() else { unreachable!() };
            let (mut pst, e2) = start_phase2(&peer_trust, peer_role, &peer_ids, rng);
            let peer_k = accept_eph(&mut pst, &e1, &peer_trust, &peer_ids).unwrap();
            let e2 = wire::encode(&Message::Eph(e2));
            let k = w[2].time(|| {
                let Message::Eph(e2) = wire::decode(&e2).unwrap() else { unreachable!() };
                accept_eph(&mut st, &e2, &trust, &ids).unwrap()
            });
            (k, peer_k)
        } else {
            let (mut pst, e1) = start_phase2(&peer_trust, peer_role, &peer_ids, rng);
            let e1 = wire::encode(&Message::Eph(e1));
            let (k, e2) = w[2].time(|| {
                let Message::Eph(e1) = wire::decode(&e1).unwrap() else { unreachable!() };
                let (mut st, e2) = start_phase2(&trust, self.role, &ids, rng);
                let k = accept_eph(&mut st, &e1, &trust, &ids).unwrap();
                (k, wire::encode(&Message::Eph(e2)))
            });
            let Message::Eph(e2) = wire::decode(&e2).unwrap() else { unreachable!() };
            (k, accept_eph(&mut pst, &e2, &peer_trust, &peer_ids).unwrap())
        };

        // Step 4
        if client_role {
            let (n_r, c1) = w[3].time(|| {
                let (c1, n_r) = client_key_exchange(&k_eph, &ids, rng);
                (n_r, wire::encode(&Message::C1(c1)))
            });
            let Message::C1(c1) = wire::decode(&c1).unwrap() else { unreachable!() };
            let (c2, _, _) = server_key_exchange(&peer_k_eph, &peer_ids, &c1, rng).unwrap();
            let c2 = wire::encode(&Message::C2(c2));
            w[3].time(|| {
                let Message::C2(c2) = wire::decode(&c2).unwrap() else { unreachable!() };
                black_box(client_finish(&k_eph, &ids, &n_r, &c2).unwrap());
            });
        } else {
            let (c1, n_r) = client_key_exchange(&peer_k_eph, &peer_ids, rng);
            let c1 = wire::encode(&Message::C1(c1));
            let c2 = w[3].time(|| {
                let Message::C1(c1) = wire::decode(&c1).unwrap() else { unreachable!() };
                let (c2, k_sym, _) = server_key_exchange(&k_eph, &ids, &c1, rng).unwrap();
                black_box(k_sym);
                wire::encode(&Message::C2(c2))
            });
            let Message::C2(c2) = wire::decode(&c2).unwrap() else { unreachable!() };
            client_finish(&peer_k_eph, &peer_ids, &n_r, &c2).unwrap();
        }
        [w[0].0, w[1].0, w[2].0, w[3].0]
    }
}

impl BenchCase for StepCase {
    fn name(&self) -> &str {
        match self.role {
            Role::Client => "client-steps",
            Role::Server => "server-steps",
        }
    }

    fn run(&self, opts: &BenchOptions) -> Vec<BenchRow> {
        let pki = Pki::new(opts.seed);
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.warmup.min(opts.step_iters) {
            self.one_run(&pki, &mut rng);
        }
        let runs: Vec<[f64; 4]> = (0..opts.step_iters).map(|_| self.one_run(&pki, &mut rng)).collect();
        let mut rows: Vec<BenchRow> = (0..4)
            .map(|i| BenchRow::latency(step_label(self.role, i + 1), runs.iter().map(|r| r[i]).collect()))
            .collect();
        if self.role == Role::Client {
            rows.push(BenchRow::latency(CLIENT_TOTAL, runs.iter().map(|r| r.iter().sum()).collect()));
        }
        rows
    }
}

/// Payload and wire bit counts from a full run and a resumed run.
pub struct BitsCase;

fn sum_bits(t: &Transcript, phase: u8, wire_bits: bool) -> u64 {
    t.entries()
        .iter()
        .filter(|e| match e.kind {
            Kind::M1 | Kind::M2 => phase == 1,
            Kind::Resume | Kind::Eph | Kind::C1 | Kind::C2 => phase == 2,
            Kind::App => false,
        })
        .map(|e| if wire_bits { e.wire_bits } else { e.payload_bits })
        .sum()
}

impl BenchCase for BitsCase {
    fn name(&self) -> &str {
        "bits"
    }

    fn run(&self, opts: &BenchOptions) -> Vec<BenchRow> {
        let pki = Pki::new(opts.seed);
        let (cs, ss) = (TrustStore::in_memory(), TrustStore::in_memory());
        let mut a = ChaCha20Rng::seed_from_u64(opts.seed);
        let mut b = ChaCha20Rng::seed_from_u64(!opts.seed);
        let mut run = || {
            run_loopback(Arc::new(pki.client_config()), Arc::new(pki.server_config()), &cs, &ss, &mut a, &mut b)
                .expect("loopback handshake")
                .0
                .transcript
        };
        let full = run();
        let resumed = run();
        let step = |s| wire::step_payload_bits(&resumed, s).expect("complete step");
        vec![
            BenchRow::count("phase 1 payload", sum_bits(&full, 1, false)),
            BenchRow::count("phase 2 payload", sum_bits(&resumed, 2, false)),
            BenchRow::count("step 3 payload", step(Step::Three)),
            BenchRow::count("step 4 payload", step(Step::Four)),
            BenchRow::count("phase 1 wire", sum_bits(&full, 1, true)),
            BenchRow::count("phase 2 wire", sum_bits(&resumed, 2, true)),
        ]
    }
}

#[derive(Default)]
pub struct BenchRegistry {
    cases: Vec<Box<dyn BenchCase>>,
}

impl BenchRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::new();
        for c in primitive_cases() {
            r.register(Box::new(c));
        }
        r.register(Box::new(StepCase { role: Role::Client }));
        r.register(Box::new(StepCase { role: Role::Server }));
        r.register(Box::new(BitsCase));
        r
    }

    /// Replaces any case with the same name, keeping its position.
    pub fn register(&mut self, case: Box<dyn BenchCase>) {
        match self.cases.iter_mut().find(|c| c.name() == case.name()) {
            Some(slot) => *slot = case,
            None => self.cases.push(case),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.cases.iter().map(|c| c.name())
    }

    /// Keeps only the named cases; returns the first unknown name.
    pub fn select(mut self, names: &[String]) -> Result<Self, String> {
        if let Some(bad) = names.iter().find(|n| !self.cases.iter().any(|c| c.name() == n.as_str())) {
            return Err(bad.clone());
        }
        self.cases.retain(|c| names.iter().any(|n| n == c.name()));
        Ok(self)
    }

    pub fn run(&self, opts: &BenchOptions) -> BenchReport {
        BenchReport { rows: self.cases.iter().flat_map(|c| c.run(opts)).collect() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn get(&self, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<26} {:>5} {:>12} {:>12} {:>12} {:>6}", "label", "unit", "mean", "median", "p95", "n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<26} {:>5} {:>12.2} {:>12.2} {:>12.2} {:>6}",
                r.label, r.unit, r.mean, r.median, r.p95, r.n
            );
        }
        s
    }
}
