//! Command-line driver: run scenarios, verify and inspect ledgers, export
//! reports, dump conformance vectors.
//!
//! Exit codes: 0 success; 1 chain verification failure (`verify`/`report`);
//! 2 unreadable input or invalid scenario; 3 internal invariant violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;

use oec::identity::{self, KeyPair, SecurityLevel};
use oec::ledger::{parse_ledger_str, Ledger};
use oec::tx::{Block, Payload};
use oec::types::Hash256;

#[derive(Parser)]
#[command(name = "oec", about = "Edge-chain platform simulator and ledger tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress informational output (the RESULT line is always printed).
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SecurityArg {
    Toy,
    Sim,
    Standard,
}

impl From<SecurityArg> for SecurityLevel {
    fn from(v: SecurityArg) -> Self {
        match v {
            SecurityArg::Toy => SecurityLevel::Toy,
            SecurityArg::Sim => SecurityLevel::Sim,
            SecurityArg::Standard => SecurityLevel::Standard,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write the ledger plus metrics CSVs.
    Run {
        scenario: PathBuf,
        /// Output directory for ledger.l1, CSVs and the run summary.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's security level.
        #[arg(long)]
        security: Option<SecurityArg>,
    },
    /// Verify a ledger file's chain integrity.
    Verify {
        ledger: PathBuf,
        /// Group parameters; inferred from the file when omitted.
        #[arg(long)]
        security: Option<SecurityArg>,
    },
    /// Regenerate all metrics CSVs from a ledger file alone.
    Report {
        ledger: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        security: Option<SecurityArg>,
    },
    /// Dump hash and proof test vectors for cross-implementation checks.
    Vectors,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            security,
        } => cmd_run(&scenario, &out, seed, security.map(Into::into), cli.quiet),
        Command::Verify { ledger, security } => {
            cmd_verify(&ledger, security.map(Into::into), cli.quiet)
        }
        Command::Report {
            ledger,
            out,
            security,
        } => cmd_report(&ledger, &out, security.map(Into::into), cli.quiet),
        Command::Vectors => cmd_vectors(),
    }
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn result_line(ok: bool, hash: Hash256) {
    println!("RESULT {} {}", if ok { "ok" } else { "fail" }, hash);
}

fn cmd_run(
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    security: Option<SecurityLevel>,
    quiet: bool,
) -> ExitCode {
    let text = match fs::read_to_string(scenario_path) {
        Ok(t) => t,
        Err(e) => return fail(2, &format!("cannot read scenario: {e}")),
    };
    let mut scenario: oec::Scenario = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return fail(2, &format!("invalid scenario: {e}")),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(level) = security {
        scenario.security = level;
    }

    let run = match oec::run_scenario(&scenario) {
        Ok(run) => run,
        Err(oec::SimError::InvalidScenario(msg)) => {
            return fail(2, &format!("invalid scenario: {msg}"))
        }
        Err(e) => return fail(3, &format!("{e}")),
    };

    // The chain we just built must verify; anything else is a bug.
    if let Err(fault) = run.ledger.verify_chain() {
        return fail(3, &format!("fresh ledger failed verification: {fault}"));
    }

    if let Err(e) = fs::create_dir_all(out) {
        return fail(2, &format!("cannot create output dir: {e}"));
    }
    if let Err(e) = fs::write(out.join("ledger.l1"), run.ledger.export_string()) {
        return fail(2, &format!("cannot write ledger: {e}"));
    }
    if let Err(e) = run.metrics.write_reports(out) {
        return fail(2, &format!("cannot write reports: {e}"));
    }

    if !quiet {
        for (name, id) in &run.node_ids {
            println!("node {name} = {id}");
        }
        for (i, system) in run.system_ids.iter().enumerate() {
            if let Some(id) = system {
                println!("system {i} = {id}");
            }
        }
        println!(
            "wrote {} blocks to {}",
            run.ledger.blocks().len(),
            out.join("ledger.l1").display()
        );
    }
    result_line(true, run.ledger.tip().hash);
    ExitCode::SUCCESS
}

/// Read blocks and pick group parameters: an explicit level wins, otherwise
/// infer from the first subscribed public key's size (an empty chain has no
/// proofs to check, so any group works).
fn load_blocks(
    path: &Path,
    security: Option<SecurityLevel>,
) -> Result<(Vec<Block>, SecurityLevel), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read ledger: {e}"))?;
    let blocks = parse_ledger_str(&text).map_err(|e| format!("unreadable ledger: {e}"))?;
    let level = security.unwrap_or_else(|| infer_security(&blocks));
    Ok((blocks, level))
}

fn infer_security(blocks: &[Block]) -> SecurityLevel {
    for block in blocks {
        for tx in &block.txs {
            if let Payload::Subscribe { profile } = &tx.payload {
                return match profile.pk.bits() {
                    0..=16 => SecurityLevel::Toy,
                    17..=512 => SecurityLevel::Sim,
                    _ => SecurityLevel::Standard,
                };
            }
        }
    }
    SecurityLevel::Toy
}

fn cmd_verify(path: &Path, security: Option<SecurityLevel>, quiet: bool) -> ExitCode {
    let (blocks, level) = match load_blocks(path, security) {
        Ok(v) => v,
        Err(e) => return fail(2, &e),
    };
    let params = identity::generate_params(level);
    let claimed_tip = blocks.last().map(|b| b.hash).unwrap_or(Hash256::ZERO);
    match oec::verify_blocks(&params, &blocks) {
        Ok(()) => {
            if !quiet {
                println!("chain ok: {} blocks", blocks.len());
            }
            result_line(true, claimed_tip);
            ExitCode::SUCCESS
        }
        Err(fault) => {
            println!("bad block index: {}", fault.index);
            if !quiet {
                println!("reason: {}", fault.reason);
            }
            result_line(false, claimed_tip);
            ExitCode::from(1)
        }
    }
}

fn cmd_report(path: &Path, out: &Path, security: Option<SecurityLevel>, quiet: bool) -> ExitCode {
    let (blocks, level) = match load_blocks(path, security) {
        Ok(v) => v,
        Err(e) => return fail(2, &e),
    };
    let params = identity::generate_params(level);
    let claimed_tip = blocks.last().map(|b| b.hash).unwrap_or(Hash256::ZERO);
    let ledger = match Ledger::from_blocks(params, blocks) {
        Ok(l) => l,
        Err(fault) => {
            println!("bad block index: {}", fault.index);
            result_line(false, claimed_tip);
            return ExitCode::from(1);
        }
    };
    let metrics = match oec::compute_metrics(&ledger) {
        Ok(m) => m,
        Err(fault) => {
            println!("bad block index: {}", fault.index);
            result_line(false, claimed_tip);
            return ExitCode::from(1);
        }
    };
    if let Err(e) = metrics.write_reports(out) {
        return fail(2, &format!("cannot write reports: {e}"));
    }
    if !quiet {
        println!("reports written to {}", out.display());
    }
    result_line(true, ledger.tip().hash);
    ExitCode::SUCCESS
}

/// Conformance vectors: canonical-encoding hashes and proof transcripts
/// with derived challenges, one record per line.
fn cmd_vectors() -> ExitCode {
    println!("# oec conformance vectors");
    println!("# HASHVEC <name> <canonical-hex> <sha256-hex>");
    let genesis = Block::genesis();
    let genesis_bytes = genesis.hash_preimage();
    println!(
        "HASHVEC genesis-preimage {} {}",
        hex::encode(&genesis_bytes),
        Hash256::digest(&genesis_bytes)
    );

    println!("# NIZKVEC <p-hex> <q-hex> <g-hex> <sk-hex> <nonce-hex> <context-hex> <t-hex> <s-hex>");
    let toy = identity::generate_params(SecurityLevel::Toy);
    let vectors: [(SecurityLevel, u64, u64, &[u8]); 4] = [
        (SecurityLevel::Toy, 7, 3, b"oec-vector-0"),
        (SecurityLevel::Toy, 4, 9, b"oec-vector-1"),
        (SecurityLevel::Sim, 0xDEAD_BEEF, 0x1234_5678, b"oec-vector-2"),
        (SecurityLevel::Standard, 0xCAFE_F00D, 0x0BAD_5EED, b"oec-vector-3"),
    ];
    for (level, sk, nonce, context) in vectors {
        let params = identity::generate_params(level);
        let kp = KeyPair::from_secret(&params, BigUint::from(sk)).expect("vector secret in range");
        let nonce = BigUint::from(nonce);
        let proof = identity::prove_knowledge(&params, &kp, context, &nonce)
            .expect("vector nonce in range");
        debug_assert!(identity::verify_proof(&params, &kp.pk, &proof));
        println!(
            "NIZKVEC {:x} {:x} {:x} {:x} {:x} {} {:x} {:x}",
            params.p,
            params.q,
            params.g,
            kp.sk,
            nonce,
            hex::encode(context),
            proof.commitment,
            proof.response,
        );
    }
    let _ = toy;
    ExitCode::SUCCESS
}

mod hex {
    pub fn encode(bytes: impl AsRef<[u8]>) -> String {
        bytes
            .as_ref()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
