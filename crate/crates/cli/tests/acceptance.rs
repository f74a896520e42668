//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lseg::conformance::run_conformance;
use lseg::curve::{derive_identity, edwards_to_mont, mont_to_edwards, MontgomeryU};
use lseg::fixtures::Pki;
use lseg::handshake::{
    accept_eph, make_m1, run_loopback, start_phase2, ClientHandshake, ErrorCode, HandshakeError, HandshakeOutcome,
    Role, ServerHandshake, SessionIds, TrustStore,
};
use lseg::netsim::{run_attack_suite, AttackOutcome, AttackRegistry, DEFAULT_SEED};
use lseg::primitives::op_counts;
use lseg::session::{RecordCipher, SessionError};
use lseg::wire::{payload_bits, step_payload_bits, Kind, Step};
use lseg_cli::bench::{step_label, BenchOptions, BenchRegistry, CLIENT_TOTAL, PRIMITIVE_LABELS};
use num_bigint::BigUint;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha512};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    if took >= limit {
        return Err(format!("took {took:?}, limit {limit:?}"));
    }
    Ok(took)
}

fn loopback_pair(
    pki: &Pki,
    seed: u64,
    cs: &TrustStore,
    ss: &TrustStore,
) -> Result<(HandshakeOutcome, HandshakeOutcome), HandshakeError> {
    let mut a = ChaCha20Rng::seed_from_u64(seed);
    let mut b = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 1);
    run_loopback(Arc::new(pki.client_config()), Arc::new(pki.server_config()), cs, ss, &mut a, &mut b)
}

fn communication_cost() -> Outcome {
    let start = Instant::now();
    let pki = Pki::new(11);
    let (cs, ss) = (TrustStore::in_memory(), TrustStore::in_memory());
    loopback_pair(&pki, 1, &cs, &ss).map_err(|e| e.to_string())?;
    let (c, s) = loopback_pair(&pki, 2, &cs, &ss).map_err(|e| e.to_string())?;
    for t in [&c.transcript, &s.transcript] {
        ensure!(!t.ran_phase1(), "second handshake ran phase 1");
        let total = payload_bits(t, 2).map_err(|e| e.to_string())?;
        let eph = step_payload_bits(t, Step::Three).map_err(|e| e.to_string())?;
        let by_kind = |k: Kind| t.entries().iter().filter(|e| e.kind == k).map(|e| e.payload_bits).sum::<u64>();
        let (c1, c2) = (by_kind(Kind::C1), by_kind(Kind::C2));
        ensure!(total == 1024, "phase 2 payload {total} bits");
        ensure!(eph == 512 && c1 == 128 && c2 == 384, "split {eph}+{c1}+{c2}");
        ensure!(step_payload_bits(t, Step::Four).ok() == Some(512), "step 4 payload");
        ensure!(t.exchanges_after_ephemeral() == 2, "{} post-ephemeral exchanges", t.exchanges_after_ephemeral());
    }
    let took = within(start, Duration::from_secs(1))?;
    Ok(format!("phase 2 payload 1024 = 512 + 128 + 384 bits, 2 exchanges after E ({took:.0?})"))
}

fn key_agreement() -> Outcome {
    let start = Instant::now();
    let pki = Pki::new(12);
    for seed in 0..1000u64 {
        let (cs, ss) = (TrustStore::in_memory(), TrustStore::in_memory());
        let (c, s) = loopback_pair(&pki, seed, &cs, &ss).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(c.trust.k_init.as_bytes() == s.trust.k_init.as_bytes(), "seed {seed}: k_init differs");
        ensure!(c.keys.k_eph.as_bytes() == s.keys.k_eph.as_bytes(), "seed {seed}: k_eph differs");
        ensure!(c.keys.k_sym.as_bytes() == s.keys.k_sym.as_bytes(), "seed {seed}: k_sym differs");
    }
    let took = within(start, Duration::from_secs(30))?;
    Ok(format!("1000 seeded loopback handshakes agree on k_init, k_eph, k_sym ({took:.1?})"))
}

fn vectors_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../vectors")
}

fn conformance() -> Outcome {
    let results = run_conformance(&vectors_dir()).map_err(|e| e.to_string())?;
    let summary: Vec<String> = results.iter().map(|r| format!("{} {}/{}", r.suite, r.passed, r.total)).collect();
    ensure!(results.len() == 4 && results.iter().all(|r| r.ok()), "{}", summary.join(", "));
    Ok(summary.join(", "))
}

fn p() -> BigUint {
    (BigUint::from(1u8) << 255u32) - 19u8
}

fn le_bytes(v: &BigUint) -> [u8; 32] {
    let mut out = [0u8; 32];
    let b = v.to_bytes_le();
    out[..b.len()].copy_from_slice(&b);
    out
}

fn birational_map() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let (mut checked, mut exceptional) = (0, 0);
    while checked < 10_000 {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        let u = MontgomeryU::from_bytes(&b);
        let Ok(y) = mont_to_edwards(&u) else {
            exceptional += 1;
            continue;
        };
        let back = edwards_to_mont(&y).map_err(|e| format!("{}: {e}", hex::encode(b)))?;
        ensure!(back.to_bytes() == u.to_bytes(), "round trip failed for {}", hex::encode(b));
        checked += 1;
    }
    let p = p();
    let expected = (BigUint::from(4u8) * BigUint::from(5u8).modpow(&(&p - 2u8), &p)) % &p;
    let mut nine = [0u8; 32];
    nine[0] = 9;
    let y = mont_to_edwards(&MontgomeryU::from_bytes(&nine)).map_err(|e| e.to_string())?;
    ensure!(y.to_bytes() == le_bytes(&expected), "mont_to_edwards(9) = {}", hex::encode(y.to_bytes()));
    Ok(format!("{checked} round trips ({exceptional} exceptional skipped), base point maps to 4/5"))
}

fn unified_keypair() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    for _ in 0..1000 {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let id = derive_identity(&seed);
        let via_ed = lseg::curve::ed_public_to_x25519(id.ed_public()).map_err(|e| e.to_string())?;
        let h = Sha512::digest(seed);
        let mut scalar = [0u8; 32];
        scalar.copy_from_slice(&h[..32]);
        let direct = x25519_dalek::x25519(scalar, x25519_dalek::X25519_BASEPOINT_BYTES);
        ensure!(via_ed == direct, "seed {}: Edwards-derived X25519 key differs", hex::encode(seed));
        ensure!(*id.x_public() == direct, "seed {}: identity X25519 key differs", hex::encode(seed));
    }
    Ok("1000 seeds: edwards_to_mont(Ed25519 public) equals X25519 of the clamped SHA-512 scalar".into())
}

fn find<'a>(outcomes: &'a [AttackOutcome], name: &str) -> Result<&'a AttackOutcome, String> {
    outcomes.iter().find(|o| o.name == name).ok_or_else(|| format!("no {name} script"))
}

fn attack_suite() -> Outcome {
    let start = Instant::now();
    let report = run_attack_suite(&AttackRegistry::builtin(), DEFAULT_SEED);
    let failed: Vec<&str> = report.outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    ensure!(report.complete(), "{}/8 resisted, failing: {failed:?}", report.resisted);
    ensure!(report.controls_as_expected, "controls misbehaved: {failed:?}");
    let o = &report.outcomes;
    let server_err = |name| find(o, name).map(|x| x.last().server.error);
    let client_err = |name| find(o, name).map(|x| x.last().client.error);
    ensure!(server_err("replay-m1")? == Some(ErrorCode::Replayed), "replay-m1");
    ensure!(server_err("stale-timestamp")? == Some(ErrorCode::StaleTimestamp), "stale-timestamp");
    ensure!(find(o, "stale-timestamp")?.dos_ok == Some(true), "stale-timestamp triggered asymmetric work");
    ensure!(server_err("tamper-e1")? == Some(ErrorCode::AuthFailure), "tamper-e1");
    ensure!(server_err("tamper-c1")? == Some(ErrorCode::AuthFailure), "tamper-c1");
    ensure!(client_err("tamper-c2")? == Some(ErrorCode::AuthFailure), "tamper-c2");
    ensure!(client_err("ksym-fault")? == Some(ErrorCode::ConfirmMismatch), "ksym-fault");
    for name in ["mitm-eph", "mitm-full"] {
        ensure!(!find(o, name)?.attack_succeeded, "{name}: adversary-computable session");
    }
    let insider = find(o, "insider-third-party")?.last();
    ensure!(!insider.client.completed && !insider.server.completed, "insider established a session");

    // Direct flood: N stale m1 messages cost no signature or DH work.
    let pki = Pki::new(16);
    let store = TrustStore::in_memory();
    let cfg = Arc::new(pki.server_config());
    let stale = make_m1(&pki.client, &pki.client_cert, lseg::fixtures::NOW_MS - cfg.clock_skew_ms - 1);
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let before = op_counts();
    for _ in 0..1000 {
        let mut s = ServerHandshake::new(cfg.clone()).map_err(|e| e.to_string())?;
        ensure!(s.receive(&stale, &store, &mut rng).err() == Some(HandshakeError::StaleTimestamp), "flood accepted");
    }
    let used = op_counts().since(&before);
    ensure!(used.asymmetric() == 0, "flood of 1000 caused {used:?}");
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!("8/8 properties resisted, controls as expected, stale flood of 1000 used 0 sign/verify/dh ({took:.1?})"))
}

fn forward_secrecy() -> Outcome {
    let pki = Pki::new(17);
    let store = TrustStore::in_memory();
    let (mut a, mut b) = (ChaCha20Rng::seed_from_u64(1), ChaCha20Rng::seed_from_u64(2));
    let err = |e: HandshakeError| e.to_string();
    let mut client = ClientHandshake::new(Arc::new(pki.client_config()), None).map_err(err)?;
    let mut server = ServerHandshake::new(Arc::new(pki.server_config())).map_err(err)?;
    let m1 = client.start(&mut a).map_err(err)?;
    let m2 = server.receive(&m1[0], &store, &mut b).map_err(err)?.send;
    let e1 = client.receive(&m2[0], &mut a).map_err(err)?.send;
    ensure!(client.secret_storage_snapshot().iter().any(|&x| x != 0), "client holds no ephemeral secret mid-run");
    let e2 = server.receive(&e1[0], &store, &mut b).map_err(err)?.send;
    let c1 = client.receive(&e2[0], &mut a).map_err(err)?.send;
    let c2 = server.receive(&c1[0], &store, &mut b).map_err(err)?;
    let done = client.receive(&c2.send[0], &mut a).map_err(err)?;
    ensure!(c2.outcome.is_some() && done.outcome.is_some(), "handshake did not complete");
    ensure!(client.secret_storage_snapshot().iter().all(|&x| x == 0), "client storage not wiped");
    ensure!(server.secret_storage_snapshot().iter().all(|&x| x == 0), "server storage not wiped");

    let trust = done.outcome.unwrap().trust;
    let ids = SessionIds::new(Role::Client, pki.client_cert.subject_id, pki.server_cert.subject_id);
    let peer_ids = SessionIds::new(Role::Server, pki.server_cert.subject_id, pki.client_cert.subject_id);
    let (mut mine, _) = start_phase2(&trust, Role::Client, &ids, &mut a);
    let (_, theirs) = start_phase2(&trust, Role::Server, &peer_ids, &mut b);
    accept_eph(&mut mine, &theirs, &trust, &ids).map_err(err)?;
    ensure!(matches!(mine.secret(), Err(HandshakeError::State(_))), "ephemeral secret still readable");
    ensure!(mine.storage_snapshot() == [0; 32], "ephemeral scalar bytes remain");
    Ok("ephemeral scalars, k_eph and N_r zeroed after completion; secret() is a state error".into())
}

fn performance() -> Outcome {
    let opts = BenchOptions::default();
    ensure!(opts.primitive_iters >= 1000 && opts.step_iters >= 100, "iteration counts too small");
    let report = BenchRegistry::builtin().run(&opts);
    let row = |l: &str| report.get(l).ok_or_else(|| format!("missing row {l:?}"));
    for l in PRIMITIVE_LABELS {
        row(l)?;
    }
    for i in 1..=4 {
        row(&step_label(Role::Client, i))?;
        row(&step_label(Role::Server, i))?;
    }
    let aead = row("AEAD encrypt")?.median;
    let (gen, ver) = (row("certificate generation")?.median, row("certificate verification")?.median);
    ensure!(gen >= 10.0 * aead, "cert generation {gen:.2}us < 10 x AEAD {aead:.2}us");
    ensure!(ver >= 10.0 * aead, "cert verification {ver:.2}us < 10 x AEAD {aead:.2}us");
    let step = |i| row(&step_label(Role::Client, i)).map(|r| r.median);
    let (s1, rest) = (step(1)?, step(2)? + step(3)? + step(4)?);
    ensure!(s1 > rest, "client step 1 {s1:.1}us <= steps 2-4 {rest:.1}us");
    let total = row(CLIENT_TOTAL)?.mean;
    ensure!(total < 50_000.0, "client handshake {total:.0}us");
    ensure!(row("phase 2 payload")?.mean == 1024.0, "phase 2 payload row");
    Ok(format!(
        "cert gen/verify {:.0}x/{:.0}x AEAD encrypt, step 1 {s1:.0}us > steps 2-4 {rest:.0}us, client handshake {total:.0}us",
        gen / aead,
        ver / aead
    ))
}

fn record_layer() -> Outcome {
    let pki = Pki::new(19);
    let (cs, ss) = (TrustStore::in_memory(), TrustStore::in_memory());
    let (c, s) = loopback_pair(&pki, 19, &cs, &ss).map_err(|e| e.to_string())?;
    let (mut c_seal, mut c_open) = RecordCipher::new(&c.keys).split();
    let (mut s_seal, mut s_open) = RecordCipher::new(&s.keys).split();
    let mut rng = ChaCha20Rng::seed_from_u64(19);
    let (mut to_server, mut to_client) = (0u64, 0u64);
    for i in 0..10_000u32 {
        let body = i.to_be_bytes();
        if rng.next_u32() % 2 == 0 {
            let f = c_seal.seal(&body).map_err(|e| e.to_string())?;
            ensure!(s_open.open(&f).map_err(|e| format!("frame {i}: {e}"))? == body, "frame {i} content");
            to_server += 1;
        } else {
            let f = s_seal.seal(&body).map_err(|e| e.to_string())?;
            ensure!(c_open.open(&f).map_err(|e| format!("frame {i}: {e}"))? == body, "frame {i} content");
            to_client += 1;
        }
    }
    let a = c_seal.seal(b"a").map_err(|e| e.to_string())?;
    let b = c_seal.seal(b"b").map_err(|e| e.to_string())?;
    let got = s_open.open(&b);
    ensure!(got == Err(SessionError::OutOfOrder { expected: to_server, got: to_server + 1 }), "reorder: {got:?}");
    s_open.open(&a).map_err(|e| e.to_string())?;
    let got = s_open.open(&a);
    ensure!(got == Err(SessionError::Replayed { expected: to_server + 1, got: to_server }), "replay: {got:?}");
    Ok(format!("10000 frames ({to_server} c->s, {to_client} s->c) in order; replay and reorder rejected"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("communication cost", communication_cost),
        ("key agreement", key_agreement),
        ("standards conformance", conformance),
        ("birational map", birational_map),
        ("unified keypair", unified_keypair),
        ("attack suite", attack_suite),
        ("forward-secrecy mechanism", forward_secrecy),
        ("performance properties", performance),
        ("record layer", record_layer),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
