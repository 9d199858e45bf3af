//! `padctl`: pack and inspect PADs, run the hospital scenario, the
//! overhead benchmark, the scaling simulation, and a delegator service.
//!
//! Every failure exits nonzero with a single diagnostic line of the form
//! `error: <CODE>: <message>` on stderr.

use std::collections::HashMap;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use ed25519_dalek::SigningKey;
use rand::RngCore;
use uuid::Uuid;

use pad_cli::bench::{self, BenchConfig};
use pad_cli::docs::{self, DelegatorConfigDoc, PayloadDoc, SimCommandDoc};
use pad_cli::scenario::{self, ScenarioSpec};
use pad_core::codec::{self, PadMetadataFields, PlaintextPayload};
use pad_core::crypto::CryptoSuite;
use pad_delegator::attest::Role;
use pad_delegator::{serve, AllowList, LocalIdentity, MockAttestationRoot, ServerConfig};

#[derive(Parser)]
#[command(name = "padctl", about = "Policy-attached data toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seal a payload and its policies into a PAD file.
    Pack {
        /// Payload description JSON (data, custodian, delegator, attributes).
        #[arg(long)]
        payload: String,
        /// Policy JSON: one policy object or an array of them.
        #[arg(long)]
        policy: String,
        /// Where to write the generated data key (hex).
        #[arg(long)]
        key_out: String,
        /// Where to write the PAD.
        #[arg(long)]
        out: String,
    },
    /// Print the plaintext metadata of a PAD. Never touches the payload.
    Inspect { pad: String },
    /// Run the hospital joint-training scenario end to end on loopback.
    Scenario {
        /// Scenario spec JSON; omit for the default three-hospital setup.
        #[arg(long)]
        spec: Option<String>,
    },
    /// Measure the per-phase overhead breakdown against a loopback delegator.
    Bench {
        #[arg(long, default_value_t = 20)]
        iters: usize,
        /// Payload size in bytes.
        #[arg(long, default_value_t = 1024)]
        payload_bytes: usize,
        /// Also write the rows as CSV to this path.
        #[arg(long)]
        csv: Option<String>,
    },
    /// Run the scaling simulation and write a CSV of results.
    Simulate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
    },
    /// Serve a key delegator until interrupted.
    ServeDelegator {
        #[arg(long)]
        config: String,
    },
}

fn fail(code: &str, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {code}: {message}");
    ExitCode::FAILURE
}

fn read_file(path: &str) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Pack {
            payload,
            policy,
            key_out,
            out,
        } => cmd_pack(&payload, &policy, &key_out, &out),
        Command::Inspect { pad } => cmd_inspect(&pad),
        Command::Scenario { spec } => cmd_scenario(spec.as_deref()),
        Command::Bench {
            iters,
            payload_bytes,
            csv,
        } => cmd_bench(iters, payload_bytes, csv.as_deref()),
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::ServeDelegator { config } => cmd_serve_delegator(&config),
    }
}

fn cmd_pack(payload_path: &str, policy_path: &str, key_out: &str, out: &str) -> ExitCode {
    let payload_json = match read_file(payload_path) {
        Ok(s) => s,
        Err(e) => return fail("IO", e),
    };
    let doc: PayloadDoc = match serde_json::from_str(&payload_json) {
        Ok(d) => d,
        Err(e) => return fail("JSON", format!("{payload_path}: {e}")),
    };
    let policy_json = match read_file(policy_path) {
        Ok(s) => s,
        Err(e) => return fail("IO", e),
    };
    let policies = match docs::parse_policies(&policy_json) {
        Ok(p) => p,
        Err(e) => return fail("JSON", format!("{policy_path}: {e}")),
    };
    let raw_data = match doc.raw_data() {
        Ok(d) => d,
        Err(e) => return fail("JSON", e),
    };
    let attributes = match doc.data_attributes() {
        Ok(a) => a,
        Err(e) => return fail("JSON", e),
    };
    let suite = match CryptoSuite::by_id(doc.suite()) {
        Ok(s) => s,
        Err(e) => return fail("PAD", e),
    };
    let data_id = Uuid::new_v4();
    let mut key = vec![0u8; suite.key_length];
    rand::rngs::OsRng.fill_bytes(&mut key);
    let pad = match codec::pack_pad(
        &PlaintextPayload {
            raw_data,
            policies,
            attributes,
        },
        &PadMetadataFields {
            data_id,
            custodian_id: doc.custodian_id,
            crypto_suite: doc.suite(),
            key_delegator_uri: doc.delegator_uri.clone(),
        },
        &key,
    ) {
        Ok(p) => p,
        Err(e) => return fail("PAD", e),
    };
    if let Err(e) = std::fs::write(out, &pad) {
        return fail("IO", format!("{out}: {e}"));
    }
    if let Err(e) = std::fs::write(key_out, hex::encode(&key)) {
        return fail("IO", format!("{key_out}: {e}"));
    }
    println!("{data_id}");
    ExitCode::SUCCESS
}

fn cmd_inspect(pad_path: &str) -> ExitCode {
    let bytes = match std::fs::read(pad_path) {
        Ok(b) => b,
        Err(e) => return fail("IO", format!("{pad_path}: {e}")),
    };
    let metadata = match codec::parse_metadata(&bytes) {
        Ok(m) => m,
        Err(e) => return fail("PAD", e),
    };
    println!("format_version:    {}", metadata.format_version);
    println!("data_id:           {}", metadata.data_id);
    println!("custodian_id:      {}", metadata.custodian_id);
    println!("crypto_suite:      0x{:04x}", metadata.crypto_suite);
    println!("key_delegator_uri: {}", metadata.key_delegator_uri);
    println!("payload_length:    {} bytes (sealed)", metadata.payload_length);
    ExitCode::SUCCESS
}

fn cmd_scenario(spec_path: Option<&str>) -> ExitCode {
    let spec: ScenarioSpec = match spec_path {
        Some(path) => {
            let json = match read_file(path) {
                Ok(s) => s,
                Err(e) => return fail("IO", e),
            };
            match serde_json::from_str(&json) {
                Ok(s) => s,
                Err(e) => return fail("JSON", format!("{path}: {e}")),
            }
        }
        None => scenario::default_spec(),
    };
    let outcome = match scenario::run(&spec) {
        Ok(o) => o,
        Err(e) => return fail("SCENARIO", e),
    };
    for case in &outcome.cases {
        let verdict = if case.ok { "ok" } else { "FAILED" };
        let expectation = if case.expected_deny {
            "EXPECTED-DENY"
        } else {
            "EXPECTED-PASS"
        };
        println!("{verdict:6} {expectation:13} {:32} {}", case.name, case.detail);
    }
    println!();
    println!("{:44} {:>12}", "phase", "ms");
    for (phase, ms) in &outcome.timings {
        println!("{phase:44} {ms:12.3}");
    }
    if outcome.all_ok() {
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = outcome
            .cases
            .iter()
            .filter(|c| !c.ok)
            .map(|c| c.name.as_str())
            .collect();
        fail("SCENARIO", format!("failing cases: {}", failed.join(", ")))
    }
}

fn cmd_bench(iters: usize, payload_bytes: usize, csv: Option<&str>) -> ExitCode {
    let report = match bench::run(&BenchConfig {
        iterations: iters,
        payload_bytes,
    }) {
        Ok(r) => r,
        Err(e) => return fail("BENCH", e),
    };
    println!(
        "{:40} {:>12}   ({} iterations, {} byte payloads)",
        "phase", "mean ms", iters, payload_bytes
    );
    for row in &report.rows {
        println!("{:40} {:12.3}", row.phase, row.mean_ms);
    }
    if let Some(path) = csv {
        if let Err(e) = std::fs::write(path, report.csv()) {
            return fail("IO", format!("{path}: {e}"));
        }
    }
    ExitCode::SUCCESS
}

fn cmd_simulate(config_path: &str, out: &str) -> ExitCode {
    let json = match read_file(config_path) {
        Ok(s) => s,
        Err(e) => return fail("IO", e),
    };
    let doc: SimCommandDoc = match serde_json::from_str(&json) {
        Ok(d) => d,
        Err(e) => return fail("JSON", format!("{config_path}: {e}")),
    };
    let configs = match doc.configs() {
        Ok(c) => c,
        Err(e) => return fail("CONFIG", e),
    };
    let results = match pad_sim::sweep(&configs) {
        Ok(r) => r,
        Err(e) => return fail("CONFIG", e),
    };
    let csv = pad_sim::results_csv(&configs, &results);
    if let Err(e) = std::fs::write(out, csv) {
        return fail("IO", format!("{out}: {e}"));
    }
    println!("{} cells -> {out}", configs.len());
    ExitCode::SUCCESS
}

fn cmd_serve_delegator(config_path: &str) -> ExitCode {
    let json = match read_file(config_path) {
        Ok(s) => s,
        Err(e) => return fail("IO", e),
    };
    let doc: DelegatorConfigDoc = match serde_json::from_str(&json) {
        Ok(d) => d,
        Err(e) => return fail("JSON", format!("{config_path}: {e}")),
    };
    let config = match server_config(&doc) {
        Ok(c) => c,
        Err(e) => return fail("CONFIG", e),
    };
    let mut server = match serve(config) {
        Ok(s) => s,
        Err(e) => return fail("NET", e),
    };
    println!("delegator listening on {}", server.local_addr());
    let stop = Arc::new(AtomicBool::new(false));
    let handler_stop = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || handler_stop.store(true, Ordering::SeqCst)) {
        return fail("CONFIG", format!("signal handler: {e}"));
    }
    while !stop.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    server.shutdown();
    println!("delegator stopped");
    ExitCode::SUCCESS
}

fn server_config(doc: &DelegatorConfigDoc) -> Result<ServerConfig, String> {
    let root_seed = docs::hex32("attestation_root_seed_hex", &doc.attestation_root_seed_hex)?;
    let root = Arc::new(MockAttestationRoot::new(SigningKey::from_bytes(&root_seed)));
    let measurement = docs::hex32("measurement_hex", &doc.measurement_hex)?;
    let mut allow = AllowList::default();
    for m in &doc.allowed_consumer_measurements_hex {
        allow.allow(Role::ConsumerMiddleware, docs::hex32("consumer measurement", m)?);
    }
    for m in &doc.allowed_producer_measurements_hex {
        allow.allow(Role::Producer, docs::hex32("producer measurement", m)?);
    }
    let mut custodian_keys = HashMap::new();
    for entry in &doc.custodians {
        let key_bytes = docs::hex32("custodian verifying key", &entry.verifying_key_hex)?;
        let key = ed25519_dalek::VerifyingKey::from_bytes(&key_bytes)
            .map_err(|e| format!("custodian {}: {e}", entry.custodian_id))?;
        custodian_keys.insert(entry.custodian_id, key);
    }
    Ok(ServerConfig {
        bind_addr: doc.bind_addr.clone(),
        identity: LocalIdentity {
            measurement,
            role: Role::Delegator,
            attestation_root: root.clone(),
        },
        attestation_root_key: root.verifying_key(),
        allow,
        custodian_keys,
        idle_timeout: Duration::from_secs(doc.idle_timeout_secs),
    })
}
