use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use lseg::certs::{verify_cert, CertStatus, Certificate, TrustAnchor};
use lseg_cli::cmd::now_ms;

fn lseg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lseg"));
    c.env_remove("LSEG_TRUST_STORE").env("RUST_LOG", "info");
    c
}

fn run(args: &[&str]) -> Output {
    lseg().args(args).output().expect("spawn lseg")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

struct Pki {
    dir: tempfile::TempDir,
}

impl Pki {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn certgen(&self, extra: &[&str]) -> Output {
        run(&[&["certgen"], extra].concat())
    }

    fn new(ca_id: &str) -> Pki {
        let p = Pki { dir: tempfile::tempdir().unwrap() };
        let ok = |o: Output| assert!(o.status.success(), "{}", text(&o.stderr));
        ok(p.certgen(&["--ca", "--subject-id", ca_id, "--out", &p.s("ca")]));
        let ca_key = p.s("ca.lsegk");
        ok(p.certgen(&["--subject-id", "c100000000000001", "--ca-key", &ca_key, "--out", &p.s("client")]));
        ok(p.certgen(&["--subject-id", "5e00000000000001", "--ca-key", &ca_key, "--out", &p.s("server")]));
        p
    }

    fn anchor(&self) -> TrustAnchor {
        TrustAnchor::from_ca_cert(&Certificate::load(&self.path("ca.lsegc")).unwrap())
    }
}

fn load(p: &Path) -> Certificate {
    Certificate::load(p).unwrap()
}

#[test]
fn certgen_ca_then_leaf_verifies() {
    let pki = Pki::new("ca00000000000001");
    let leaf = load(&pki.path("client.lsegc"));
    assert_eq!(verify_cert(&leaf, &pki.anchor(), now_ms()), CertStatus::Valid);
    assert_eq!(leaf.subject_id.to_string(), "c100000000000001");
    assert_eq!(std::fs::read(pki.path("client.lsegk")).unwrap().len(), 32);
}

#[test]
fn leaf_rejected_by_other_ca() {
    let a = Pki::new("ca00000000000001");
    let b = Pki::new("ca00000000000001");
    let leaf = load(&a.path("server.lsegc"));
    assert_eq!(verify_cert(&leaf, &b.anchor(), now_ms()), CertStatus::BadSignature);
    let c = Pki::new("ca000000000000ff");
    assert_eq!(verify_cert(&leaf, &c.anchor(), now_ms()), CertStatus::BadIssuer);
}

#[test]
fn bad_subject_id_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x").display().to_string();
    for bad in ["abc", "zz00000000000001", "c1000000000000011"] {
        let o = run(&["certgen", "--ca", "--subject-id", bad, "--out", &out]);
        assert_eq!(o.status.code(), Some(2), "{bad}: {}", text(&o.stderr));
    }
    assert_eq!(run(&["certgen", "--subject-id", "c100000000000001", "--out", &out]).status.code(), Some(2));
}

#[test]
fn certgen_refuses_to_overwrite() {
    let pki = Pki::new("ca00000000000001");
    let o = pki.certgen(&["--ca", "--subject-id", "ca00000000000001", "--out", &pki.s("ca")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn echo_trust_reuse_and_wrong_anchor() {
    let pki = Pki::new("ca00000000000001");
    let other = Pki::new("ca00000000000002");
    let mut server = lseg()
        .args(["server", "--listen", "127.0.0.1:0", "--echo", "--connections", "3"])
        .args(["--key", &pki.s("server.lsegk"), "--cert", &pki.s("server.lsegc"), "--anchor", &pki.s("ca.lsegc")])
        .args(["--trust-store", &pki.s("server.trust")])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listen line").to_string();

    let client = |anchor: &str, store: Option<&str>| {
        let mut c = lseg();
        c.args(["client", "--connect", &addr, "--send", "hello"]).args([
            "--key",
            &pki.s("client.lsegk"),
            "--cert",
            &pki.s("client.lsegc"),
            "--anchor",
            anchor,
        ]);
        if let Some(s) = store {
            c.env("LSEG_TRUST_STORE", s);
        }
        c.output().unwrap()
    };
    let store = pki.s("client.trust");
    let first = client(&pki.s("ca.lsegc"), Some(&store));
    assert!(first.status.success(), "{}", text(&first.stderr));
    assert_eq!(text(&first.stdout).trim(), "hello");
    assert!(text(&first.stderr).contains("phase 1 + phase 2"));

    let second = client(&pki.s("ca.lsegc"), Some(&store));
    assert!(second.status.success(), "{}", text(&second.stderr));
    assert_eq!(text(&second.stdout).trim(), "hello");
    assert!(text(&second.stderr).contains("phase 2 only"), "{}", text(&second.stderr));

    let wrong = client(&other.s("ca.lsegc"), None);
    assert_eq!(wrong.status.code(), Some(10));
    assert!(text(&wrong.stderr).contains("BadCert"), "{}", text(&wrong.stderr));

    assert!(server.wait().unwrap().success());
    let mut log = String::new();
    std::io::Read::read_to_string(&mut server.stderr.take().unwrap(), &mut log).unwrap();
    assert!(log.contains("phase 2 only"), "{log}");
}

#[test]
fn attacks_list_select_and_summary() {
    let o = run(&["attacks", "--list"]);
    assert!(o.status.success());
    let listing = text(&o.stdout);
    assert_eq!(listing.lines().count(), 20);
    assert!(listing.contains("replay-m1"));

    assert_eq!(run(&["attacks", "no-such-attack"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let o = run(&["attacks", "baseline", "replay-m1", "--summary", &summary.display().to_string()]);
    assert!(o.status.success(), "{}", text(&o.stdout));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(summary).unwrap()).unwrap();
    assert_eq!(json["outcomes"].as_array().unwrap().len(), 2);
    assert_eq!(json["passed"], true);
}

#[test]
fn attacks_from_directory() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../attacks");
    let o = run(&["attacks", "--list", "--dir", &dir.display().to_string()]);
    assert!(o.status.success());
    assert_eq!(text(&o.stdout).lines().count(), 20);
}

#[test]
fn conformance_command() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../vectors");
    let o = run(&["conformance", "--vectors", &dir.display().to_string()]);
    assert!(o.status.success(), "{}", text(&o.stdout));
    assert_eq!(text(&o.stdout).matches("PASS").count(), 4);
}

#[test]
fn bench_enforces_minimum_iterations() {
    assert_eq!(run(&["bench", "--iters", "10"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "nonexistent"]).status.code(), Some(2));
}

#[test]
fn bench_bits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bits.csv");
    let o = run(&["bench", "bits", "--csv", &csv.display().to_string()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let body = std::fs::read_to_string(csv).unwrap();
    assert!(body.starts_with("label,unit,mean,median,p95,n\n"));
    assert!(body.contains("phase 2 payload,bits,1024.0,1024.0,1024.0,1"));
}
