//! Subcommand implementations. `main.rs` only parses flags and maps errors
//! to exit statuses.

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::Args;
use log::{info, warn};
use lseg::certs::{
    self, issue, load_seed, save_seed, verify_cert, Certificate, PartyId, TrustAnchor, CERT_EXT, KEY_EXT,
};
use lseg::conformance::run_conformance;
use lseg::curve::derive_identity;
use lseg::handshake::{run_handshake, HandshakeConfig, HandshakeOutcome, Role, TrustStore, DEFAULT_SKEW_MS};
use lseg::netsim::{run_attack_suite, AttackRegistry, ChannelError, TcpChannel, DEFAULT_SEED};
use lseg::session::{SecureChannel, SessionError};
use rand_core::{OsRng, RngCore};

const DAY_MS: u64 = 86_400_000;
const IO_TIMEOUT: Duration = Duration::from_secs(10);

/// Bad flag values found after clap has parsed them; exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).expect("clock before 1970").as_millis() as u64
}

#[derive(Args, Debug)]
pub struct CertgenArgs {
    /// Self-issue a CA certificate to use as a trust anchor.
    #[arg(long)]
    pub ca: bool,
    /// 16 hex characters.
    #[arg(long)]
    pub subject_id: String,
    /// CA key for a leaf; the CA certificate is read from the same prefix unless --ca-cert is given.
    #[arg(long, required_unless_present = "ca", conflicts_with = "ca")]
    pub ca_key: Option<PathBuf>,
    #[arg(long, requires = "ca_key")]
    pub ca_cert: Option<PathBuf>,
    #[arg(long, default_value_t = 365)]
    pub valid_days: u64,
    /// Writes `<out>.lsegk` (seed) and `<out>.lsegc` (certificate).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn certgen(args: &CertgenArgs) -> Result<Certificate> {
    let subject: PartyId = args.subject_id.parse().map_err(|e: certs::CertError| UsageError(e.to_string()))?;
    if args.valid_days == 0 {
        return Err(UsageError("--valid-days must be at least 1".into()).into());
    }
    let (key_path, cert_path) = (with_ext(&args.out, KEY_EXT), with_ext(&args.out, CERT_EXT));
    if !args.force && (key_path.exists() || cert_path.exists()) {
        bail!("{} or {} already exists (use --force)", key_path.display(), cert_path.display());
    }
    let mut seed = [0u8; 32];
    OsRng.fill_bytes(&mut seed);
    let me = derive_identity(&seed);
    let now = now_ms();
    let (nb, na) = (now.saturating_sub(DAY_MS), now + args.valid_days * DAY_MS);
    let (cert, anchor) = if args.ca {
        let cert = issue(&me, subject, subject, *me.ed_public(), nb, na)?;
        (cert.clone(), TrustAnchor::from_ca_cert(&cert))
    } else {
        let ca_key = args.ca_key.as_ref().expect("clap requires --ca-key");
        let ca_cert_path = args.ca_cert.clone().unwrap_or_else(|| ca_key.with_extension(CERT_EXT));
        let ca = derive_identity(&load_seed(ca_key)?);
        let ca_cert = Certificate::load(&ca_cert_path)?;
        if ca_cert.subject_public != *ca.ed_public() {
            bail!("{} does not belong to {}", ca_cert_path.display(), ca_key.display());
        }
        let anchor = TrustAnchor::from_ca_cert(&ca_cert);
        (issue(&ca, anchor.ca_id, subject, *me.ed_public(), nb, na.min(ca_cert.not_after))?, anchor)
    };
    let status = verify_cert(&cert, &anchor, now);
    if !status.is_valid() {
        bail!("freshly issued certificate does not verify: {status:?}");
    }
    save_seed(&key_path, &seed)?;
    cert.save(&cert_path)?;
    info!("wrote {} and {}", key_path.display(), cert_path.display());
    Ok(cert)
}

#[derive(Args, Debug, Clone)]
pub struct PeerArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub cert: PathBuf,
    /// CA certificate.
    #[arg(long)]
    pub anchor: PathBuf,
    /// Persisted trust; without it Phase 1 runs on every connection.
    #[arg(long, env = "LSEG_TRUST_STORE")]
    pub trust_store: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SKEW_MS)]
    pub skew_ms: u64,
}

pub fn load_anchor(path: &Path) -> Result<TrustAnchor> {
    let cert = Certificate::load(path)?;
    let anchor = TrustAnchor::from_ca_cert(&cert);
    if !cert.check_signature(&anchor).is_valid() {
        bail!("{} is not a self-signed CA certificate", path.display());
    }
    Ok(anchor)
}

impl PeerArgs {
    fn config(&self, role: Role) -> Result<HandshakeConfig> {
        let identity = derive_identity(&load_seed(&self.key)?);
        let mut cfg = HandshakeConfig::new(role, identity, Certificate::load(&self.cert)?, load_anchor(&self.anchor)?);
        cfg.clock_skew_ms = self.skew_ms;
        cfg.validate()?;
        Ok(cfg)
    }

    fn store(&self) -> Result<TrustStore> {
        Ok(match &self.trust_store {
            Some(p) => TrustStore::open(p)?,
            None => TrustStore::in_memory(),
        })
    }
}

fn describe(o: &HandshakeOutcome) -> &'static str {
    if o.ran_phase1 {
        "phase 1 + phase 2"
    } else {
        "phase 2 only (trust reused)"
    }
}

#[derive(Args, Debug)]
pub struct ServerArgs {
    #[arg(long)]
    pub listen: String,
    #[command(flatten)]
    pub peer: PeerArgs,
    /// Echo application frames back to the client.
    #[arg(long)]
    pub echo: bool,
    /// Exit after this many connections.
    #[arg(long)]
    pub connections: Option<usize>,
}

pub fn server(args: &ServerArgs) -> Result<()> {
    let cfg = Arc::new(args.peer.config(Role::Server)?);
    let store = Arc::new(args.peer.store()?);
    let listener = TcpListener::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    std::io::stdout().flush()?;
    let mut handles = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept: {e}");
                continue;
            }
        };
        let (cfg, store, echo) = (cfg.clone(), store.clone(), args.echo);
        handles.push(thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            if let Err(e) = serve_one(stream, cfg, &store, echo) {
                warn!("{peer}: {e:#}");
            }
        }));
        if args.connections.is_some_and(|max| n + 1 >= max) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

fn serve_one(stream: TcpStream, cfg: Arc<HandshakeConfig>, store: &TrustStore, echo: bool) -> Result<()> {
    let mut ch = TcpChannel::new(stream, Some(IO_TIMEOUT))?;
    let outcome = run_handshake(cfg, &mut ch, store, &mut OsRng).map_err(|e| anyhow::anyhow!("{}: {e}", e.code()))?;
    info!("session with {} established: {}", outcome.keys.peer_id, describe(&outcome));
    if !echo {
        return Ok(());
    }
    let mut sc = SecureChannel::new(ch, &outcome.keys);
    loop {
        match sc.recv() {
            Ok(msg) => sc.send(&msg)?,
            Err(SessionError::Channel(ChannelError::Closed)) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}

#[derive(Args, Debug)]
pub struct ClientArgs {
    #[arg(long)]
    pub connect: String,
    #[command(flatten)]
    pub peer: PeerArgs,
    /// Required server id; defaults to the only peer in the trust store.
    #[arg(long)]
    pub server_id: Option<String>,
    /// Send one application frame and print the echo.
    #[arg(long)]
    pub send: Option<String>,
}

pub fn client(args: &ClientArgs) -> Result<Option<String>> {
    let mut cfg = args.peer.config(Role::Client)?;
    let store = args.peer.store()?;
    cfg.expected_peer = match &args.server_id {
        Some(s) => Some(s.parse().map_err(|e: certs::CertError| UsageError(e.to_string()))?),
        None => store.single().map(|t| t.peer_id),
    };
    let stream = TcpStream::connect(&args.connect).with_context(|| format!("connecting to {}", args.connect))?;
    let mut ch = TcpChannel::new(stream, Some(IO_TIMEOUT))?;
    let outcome = run_handshake(Arc::new(cfg), &mut ch, &store, &mut OsRng)?;
    info!("session with {} established: {}", outcome.keys.peer_id, describe(&outcome));
    let Some(text) = &args.send else { return Ok(None) };
    let mut sc = SecureChannel::new(ch, &outcome.keys);
    sc.send(text.as_bytes())?;
    let echoed = String::from_utf8_lossy(&sc.recv()?).into_owned();
    println!("{echoed}");
    Ok(Some(echoed))
}

#[derive(Args, Debug)]
pub struct AttacksArgs {
    /// List scripts and exit.
    #[arg(long)]
    pub list: bool,
    /// Load `*.atk` scripts from this directory instead of the built-in set.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Machine-readable summary.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Run only these scripts.
    pub names: Vec<String>,
}

/// Returns whether the suite passed.
pub fn attacks(args: &AttacksArgs) -> Result<bool> {
    let registry = match &args.dir {
        Some(d) => AttackRegistry::load_dir(d).map_err(|(file, e)| anyhow::anyhow!("{file}: {e}"))?,
        None => AttackRegistry::builtin(),
    };
    if args.list {
        for a in registry.iter() {
            let p = a.property().map(|p| p.to_string()).unwrap_or_else(|| "-".into());
            let kind = if a.is_control() { "control" } else { "attack" };
            println!("{:<26} {:<8} {:<22} {}", a.name(), kind, p, a.summary());
        }
        return Ok(true);
    }
    let registry = if args.names.is_empty() {
        registry
    } else {
        registry.select(&args.names).map_err(|n| UsageError(format!("unknown attack script {n:?}")))?
    };
    let report = run_attack_suite(&registry, args.seed);
    print!("{}", report.table());
    if let Some(path) = &args.summary {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report.passed && report.controls_as_expected)
}

#[derive(Args, Debug)]
pub struct ConformanceArgs {
    #[arg(long, default_value = "vectors")]
    pub vectors: PathBuf,
}

pub fn conformance(args: &ConformanceArgs) -> Result<bool> {
    let results = run_conformance(&args.vectors)?;
    for r in &results {
        println!("{r}");
        for f in &r.failures {
            println!("  {f}");
        }
    }
    Ok(results.iter().all(|r| r.ok()))
}
