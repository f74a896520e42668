use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lseg::handshake::HandshakeError;
use lseg_cli::bench::{BenchOptions, BenchRegistry};
use lseg_cli::cmd::{self, UsageError};

/// LSEG two-phase authenticated key exchange.
///
/// Exit status: 0 success, 1 other failure, 2 usage error, otherwise the
/// handshake error code (10 BadCert, 11 StaleTimestamp, 12 FutureTimestamp,
/// 13 BadSignature, 14 Replayed, 20 AuthFailure, 21 LowOrderPoint,
/// 22 ExceptionalPoint, 23 WrongDirection, 24 ConfirmMismatch,
/// 30 UnexpectedMessage, 31 WrongPeer, 32 UnknownPeer, 33 Malformed,
/// 40 ChannelClosed, 41 Timeout, 50 Config, 51 State, 52 TrustStore).
#[derive(Parser)]
#[command(name = "lseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key and certificate.
    Certgen(cmd::CertgenArgs),
    /// Accept handshakes over TCP.
    Server(cmd::ServerArgs),
    /// Connect, handshake and optionally exchange one frame.
    Client(cmd::ClientArgs),
    /// Run the adversarial attack suite.
    Attacks(cmd::AttacksArgs),
    /// Latency and bit-count benchmarks.
    Bench(BenchArgs),
    /// Check the primitives against the known-answer vectors.
    Conformance(cmd::ConformanceArgs),
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    step_iters: usize,
    #[arg(long, default_value_t = 50)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run only these cases.
    cases: Vec<String>,
}

fn bench(args: &BenchArgs) -> Result<bool> {
    if args.iters < 1000 || args.step_iters < 100 {
        return Err(UsageError("need --iters >= 1000 and --step-iters >= 100".into()).into());
    }
    let mut registry = BenchRegistry::builtin();
    if !args.cases.is_empty() {
        registry = registry.select(&args.cases).map_err(|n| UsageError(format!("unknown bench case {n:?}")))?;
    }
    let opts =
        BenchOptions { primitive_iters: args.iters, step_iters: args.step_iters, warmup: args.warmup, seed: args.seed };
    let report = registry.run(&opts);
    print!("{}", report.table());
    if let Some(path) = &args.csv {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(f)?;
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Certgen(a) => cmd::certgen(&a).map(|c| {
            println!("{} issued by {}", c.subject_id, c.issuer_id);
            true
        }),
        Command::Server(a) => cmd::server(&a).map(|_| true),
        Command::Client(a) => cmd::client(&a).map(|_| true),
        Command::Attacks(a) => cmd::attacks(&a),
        Command::Bench(a) => bench(&a),
        Command::Conformance(a) => cmd::conformance(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<UsageError>() {
                eprintln!("usage error: {u}");
                return ExitCode::from(2);
            }
            if let Some(h) = e.downcast_ref::<HandshakeError>() {
                eprintln!("error: {}: {h}", h.code());
                return ExitCode::from(h.code().exit_status() as u8);
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
