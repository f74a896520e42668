//! Prints one deterministic frame of every kind as hex.
//!
//! `cargo run -p lseg-core --example wire_dump`

use std::sync::Arc;

use lseg::fixtures::Pki;
use lseg::handshake::{ClientHandshake, ServerHandshake, TrustStore};
use lseg::session::RecordCipher;
use lseg::wire::{self, Message};
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

fn dump(label: &str, msg: &Message) {
    let bytes = wire::encode(msg);
    println!("{label} ({} bytes, {} payload bits)", bytes.len(), msg.payload_bits());
    for chunk in bytes.chunks(16) {
        println!("  {}", hex::encode(chunk));
    }
    println!();
}

fn main() {
    let pki = Pki::new(0);
    let (cs, ss) = (TrustStore::in_memory(), TrustStore::in_memory());
    let (mut a, mut b) = (ChaCha20Rng::seed_from_u64(1), ChaCha20Rng::seed_from_u64(2));

    let mut client = ClientHandshake::new(Arc::new(pki.client_config()), None).unwrap();
    let mut server = ServerHandshake::new(Arc::new(pki.server_config())).unwrap();
    let m1 = client.start(&mut a).unwrap();
    let m2 = server.receive(&m1[0], &ss, &mut b).unwrap().send;
    client.receive(&m2[0], &mut a).unwrap();
    cs.insert(client.take_new_trust().unwrap()).unwrap();
    ss.insert(server.take_new_trust().unwrap()).unwrap();
    dump("m1", &m1[0]);
    dump("m2", &m2[0]);

    pki.clock.advance(1000);
    let mut client = ClientHandshake::new(Arc::new(pki.client_config()), cs.single()).unwrap();
    let mut server = ServerHandshake::new(Arc::new(pki.server_config())).unwrap();
    let first = client.start(&mut a).unwrap();
    let mut e2 = Vec::new();
    for m in &first {
        e2.extend(server.receive(m, &ss, &mut b).unwrap().send);
    }
    let c1 = client.receive(&e2[0], &mut a).unwrap().send;
    let c2 = server.receive(&c1[0], &ss, &mut b).unwrap();
    let done = client.receive(&c2.send[0], &mut a).unwrap().outcome.unwrap();
    dump("resume", &first[0]);
    dump("eph (E_1)", &first[1]);
    dump("eph (E_2)", &e2[0]);
    dump("c1", &c1[0]);
    dump("c2", &c2.send[0]);

    let mut rc = RecordCipher::new(&done.keys);
    dump("app (seq 0, \"hello\")", &Message::App(rc.sealer.seal(b"hello").unwrap()));
}
