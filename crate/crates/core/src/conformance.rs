//! Standard test-vector suites, read from their published text formats.
//!
//! | file                        | format                                   |
//! |-----------------------------|------------------------------------------|
//! | `rfc8032_ed25519.txt`       | RFC 8032 section 7.1 listing (`-----TEST n`) |
//! | `rfc7748_x25519.txt`        | RFC 7748 section 5.2 listing             |
//! | `rfc5869_hkdf.txt`          | RFC 5869 appendix A listing              |
//! | `LWC_AEAD_KAT_128_128.txt`  | ASCON-128a KAT (`Count = / Key = / ...`) |

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::curve::{derive_identity, MontgomeryU};
use crate::primitives::{self, AeadKey, AeadNonce, Signature};

pub const ED25519_FILE: &str = "rfc8032_ed25519.txt";
pub const X25519_FILE: &str = "rfc7748_x25519.txt";
pub const HKDF_FILE: &str = "rfc5869_hkdf.txt";
pub const ASCON_FILE: &str = "LWC_AEAD_KAT_128_128.txt";

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub total: usize,
    pub passed: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10} {:>5}/{:<5} {}", self.suite, self.passed, self.total, if self.ok() { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VectorError {
    #[error("{file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("{file}: {msg}")]
    Parse { file: String, msg: String },
}

fn parse_err(file: &str, msg: impl Into<String>) -> VectorError {
    VectorError::Parse { file: file.to_string(), msg: msg.into() }
}

fn hex_bytes(file: &str, s: &str) -> Result<Vec<u8>, VectorError> {
    let clean: String = s.chars().filter(|c| c.is_ascii_hexdigit()).collect();
    hex::decode(&clean).map_err(|e| parse_err(file, format!("bad hex {s:?}: {e}")))
}

fn fixed<const N: usize>(file: &str, v: Vec<u8>) -> Result<[u8; N], VectorError> {
    let len = v.len();
    v.try_into().map_err(|_| parse_err(file, format!("expected {N} bytes, got {len}")))
}

#[derive(Debug, Clone)]
pub struct Ed25519Vector {
    pub name: String,
    pub secret: [u8; 32],
    pub public: [u8; 32],
    pub message: Vec<u8>,
    pub signature: [u8; 64],
}

/// Parses the RFC 8032 listing: blocks opened by `-----TEST`, each with
/// `SECRET KEY:`, `PUBLIC KEY:`, `MESSAGE (...)`, `SIGNATURE:` sections of hex lines.
pub fn parse_rfc8032(text: &str) -> Result<Vec<Ed25519Vector>, VectorError> {
    const F: &str = ED25519_FILE;
    let mut out = Vec::new();
    for block in text.split("-----").filter(|b| b.trim_start().starts_with("TEST")) {
        let name = block.lines().next().unwrap_or_default().trim().to_string();
        let mut section = "";
        let mut fields: [String; 4] = Default::default();
        for line in block.lines().skip(1) {
            let t = line.trim();
            if t.ends_with(':') || t.starts_with("MESSAGE") {
                section = if t.starts_with("SECRET KEY") {
                    "sk"
                } else if t.starts_with("PUBLIC KEY") {
                    "pk"
                } else if t.starts_with("MESSAGE") {
                    "msg"
                } else if t.starts_with("SIGNATURE") {
                    "sig"
                } else {
                    ""
                };
                continue;
            }
            let idx = match section {
                "sk" => 0,
                "pk" => 1,
                "msg" => 2,
                "sig" => 3,
                _ => continue,
            };
            fields[idx].push_str(t);
        }
        out.push(Ed25519Vector {
            name,
            secret: fixed(F, hex_bytes(F, &fields[0])?)?,
            public: fixed(F, hex_bytes(F, &fields[1])?)?,
            message: hex_bytes(F, &fields[2])?,
            signature: fixed(F, hex_bytes(F, &fields[3])?)?,
        });
    }
    if out.is_empty() {
        return Err(parse_err(F, "no TEST blocks"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum X25519Vector {
    Single { scalar: [u8; 32], u: [u8; 32], output: [u8; 32] },
    Iterated { iterations: u32, output: [u8; 32] },
}

/// Parses the RFC 7748 listing: `Input scalar:` / `Input u-coordinate:` /
/// `Output u-coordinate:` triples and `After N iteration(s):` lines. Base-10
/// restatements are skipped.
pub fn parse_rfc7748(text: &str) -> Result<Vec<X25519Vector>, VectorError> {
    const F: &str = X25519_FILE;
    let mut out = Vec::new();
    let mut lines = text.lines().map(str::trim).peekable();
    let (mut scalar, mut u) = (None, None);
    while let Some(line) = lines.next() {
        let next_hex =
            |l: Option<&str>| -> Result<[u8; 32], VectorError> { fixed(F, hex_bytes(F, l.unwrap_or_default())?) };
        if line == "Input scalar:" {
            scalar = Some(next_hex(lines.next())?);
        } else if line == "Input u-coordinate:" {
            u = Some(next_hex(lines.next())?);
        } else if line == "Output u-coordinate:" {
            let output = next_hex(lines.next())?;
            let (Some(s), Some(uu)) = (scalar.take(), u.take()) else {
                return Err(parse_err(F, "output without inputs"));
            };
            out.push(X25519Vector::Single { scalar: s, u: uu, output });
        } else if let Some(rest) = line.strip_prefix("After ") {
            let count: String =
                rest.split_whitespace().next().unwrap_or_default().chars().filter(|c| c.is_ascii_digit()).collect();
            let iterations = if rest.starts_with("one") {
                1
            } else {
                count.parse().map_err(|_| parse_err(F, format!("bad iteration line {line:?}")))?
            };
            out.push(X25519Vector::Iterated { iterations, output: next_hex(lines.next())? });
        }
    }
    if out.is_empty() {
        return Err(parse_err(F, "no vectors"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HkdfVector {
    pub name: String,
    pub ikm: Vec<u8>,
    pub salt: Vec<u8>,
    pub info: Vec<u8>,
    pub len: usize,
    pub okm: Vec<u8>,
}

/// Parses RFC 5869 appendix A: `Test Case n` headers followed by
/// `KEY = 0x...` assignments, continuation lines indented, `(0 octets)` for
/// empty values.
pub fn parse_rfc5869(text: &str) -> Result<Vec<HkdfVector>, VectorError> {
    const F: &str = HKDF_FILE;
    let mut cases: Vec<(String, Vec<(String, String)>)> = Vec::new();
    let mut current_key: Option<String> = None;
    for line in text.lines() {
        let t = line.trim();
        if let Some(pos) = t.find("Test Case") {
            cases.push((t[pos..].to_string(), Vec::new()));
            current_key = None;
            continue;
        }
        let Some((_, fields)) = cases.last_mut() else { continue };
        if let Some((k, v)) = t.split_once('=') {
            let k = k.trim().to_string();
            fields.push((k.clone(), v.trim().to_string()));
            current_key = Some(k);
        } else if t.is_empty() {
            current_key = None;
        } else if let (Some(k), Some(last)) = (&current_key, fields.last_mut()) {
            if &last.0 == k && t.chars().all(|c| c.is_ascii_hexdigit()) {
                last.1.push_str(t);
            }
        }
    }
    let value = |fields: &[(String, String)], key: &str| -> Result<Vec<u8>, VectorError> {
        let v = fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| parse_err(F, format!("missing {key}")))?;
        if v.contains("octets") {
            return Ok(Vec::new());
        }
        hex_bytes(F, v.trim_start_matches("0x"))
    };
    let mut out = Vec::new();
    for (name, fields) in &cases {
        let len = fields
            .iter()
            .find(|(k, _)| k == "L")
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| parse_err(F, format!("{name}: missing L")))?;
        out.push(HkdfVector {
            name: name.clone(),
            ikm: value(fields, "IKM")?,
            salt: value(fields, "salt")?,
            info: value(fields, "info")?,
            len,
            okm: value(fields, "OKM")?,
        });
    }
    if out.is_empty() {
        return Err(parse_err(F, "no test cases"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AsconVector {
    pub count: u32,
    pub key: [u8; 16],
    pub nonce: [u8; 16],
    pub pt: Vec<u8>,
    pub ad: Vec<u8>,
    pub ct: Vec<u8>,
}

/// Parses the ASCON KAT format: blank-line separated records of
/// `Count`, `Key`, `Nonce`, `PT`, `AD`, `CT` (CT includes the tag).
pub fn parse_ascon_kat(text: &str) -> Result<Vec<AsconVector>, VectorError> {
    const F: &str = ASCON_FILE;
    let mut out = Vec::new();
    let mut rec: Vec<(&str, &str)> = Vec::new();
    let flush = |rec: &mut Vec<(&str, &str)>, out: &mut Vec<AsconVector>| -> Result<(), VectorError> {
        if rec.is_empty() {
            return Ok(());
        }
        let get = |k: &str| {
            rec.iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| parse_err(F, format!("record missing {k}")))
        };
        out.push(AsconVector {
            count: get("Count")?.parse().map_err(|_| parse_err(F, "bad Count"))?,
            key: fixed(F, hex_bytes(F, get("Key")?)?)?,
            nonce: fixed(F, hex_bytes(F, get("Nonce")?)?)?,
            pt: hex_bytes(F, get("PT")?)?,
            ad: hex_bytes(F, get("AD")?)?,
            ct: hex_bytes(F, get("CT")?)?,
        });
        rec.clear();
        Ok(())
    };
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            flush(&mut rec, &mut out)?;
        } else if let Some((k, v)) = t.split_once('=') {
            rec.push((k.trim(), v.trim()));
        }
    }
    flush(&mut rec, &mut out)?;
    if out.is_empty() {
        return Err(parse_err(F, "no records"));
    }
    Ok(out)
}

fn tally(suite: &str, results: impl IntoIterator<Item = (String, bool)>) -> SuiteResult {
    let mut r = SuiteResult { suite: suite.to_string(), total: 0, passed: 0, failures: Vec::new() };
    for (name, ok) in results {
        r.total += 1;
        if ok {
            r.passed += 1;
        } else {
            r.failures.push(name);
        }
    }
    r
}

pub fn check_ed25519(vectors: &[Ed25519Vector]) -> SuiteResult {
    tally(
        "ed25519",
        vectors.iter().map(|v| {
            let id = derive_identity(&v.secret);
            let sig = primitives::sign(&id, &v.message);
            let ok = id.ed_public() == &v.public
                && sig.0 == v.signature
                && primitives::verify(&v.public, &v.message, &Signature(v.signature));
            (v.name.clone(), ok)
        }),
    )
}

pub fn check_x25519(vectors: &[X25519Vector]) -> SuiteResult {
    tally(
        "x25519",
        vectors.iter().enumerate().map(|(i, v)| match v {
            X25519Vector::Single { scalar, u, output } => {
                let got = primitives::dh(scalar, &MontgomeryU::from_bytes(u));
                (format!("vector {}", i + 1), got.map(|s| s.as_bytes() == output).unwrap_or(false))
            }
            X25519Vector::Iterated { iterations, output } => {
                let mut k = MontgomeryU::BASE;
                let mut u = MontgomeryU::BASE;
                for _ in 0..*iterations {
                    let r = x25519_dalek::x25519(k, u);
                    u = k;
                    k = r;
                }
                (format!("{iterations} iterations"), &k == output)
            }
        }),
    )
}

pub fn check_hkdf(vectors: &[HkdfVector]) -> SuiteResult {
    tally(
        "hkdf",
        vectors.iter().map(|v| {
            let got = primitives::hkdf(&v.ikm, &v.salt, &v.info, v.len);
            (v.name.clone(), got.map(|o| o == v.okm).unwrap_or(false))
        }),
    )
}

pub fn check_ascon(vectors: &[AsconVector]) -> SuiteResult {
    tally(
        "ascon128a",
        vectors.iter().map(|v| {
            let key = AeadKey::from_bytes(v.key);
            let nonce = AeadNonce(v.nonce);
            let ct = primitives::aead_seal(&key, &nonce, &v.ad, &v.pt);
            let pt = primitives::aead_open(&key, &nonce, &v.ad, &v.ct);
            (format!("Count {}", v.count), ct == v.ct && pt.as_deref() == Ok(&v.pt[..]))
        }),
    )
}

/// Runs all four suites from a `vectors/` directory.
pub fn run_conformance(dir: &Path) -> Result<Vec<SuiteResult>, VectorError> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).map_err(|source| VectorError::Io { file: name.to_string(), source })
    };
    Ok(vec![
        check_ed25519(&parse_rfc8032(&read(ED25519_FILE)?)?),
        check_x25519(&parse_rfc7748(&read(X25519_FILE)?)?),
        check_hkdf(&parse_rfc5869(&read(HKDF_FILE)?)?),
        check_ascon(&parse_ascon_kat(&read(ASCON_FILE)?)?),
    ])
}
