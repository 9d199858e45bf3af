//! Single-node overhead breakdown benchmark.
//!
//! Reproduces the structure of the overhead table: per-phase mean
//! latencies for dataset creation, attestation, key fetching (cold
//! session vs warm session), payload decryption, policy checking, data
//! access and output derivation, all against a real loopback delegator.
//! Absolute numbers are hardware-specific; the interesting properties
//! are the ratios (warm ≪ cold) and which phases scale with data size.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ed25519_dalek::SigningKey;
use rand::RngCore;
use uuid::Uuid;

use pad_core::codec::{self, DataAttribute, PadMetadataFields, PlaintextPayload};
use pad_core::crypto::SUITE_CHACHA20_POLY1305;
use pad_core::engine::{EngineRegistry, DATA_COUNT_ATTRIBUTE, TRAINING_DATA_LANG_ID};
use pad_core::middleware::Middleware;
use pad_core::policy::{CapPercent, Digest32, Policy, ProgramKind, ProgramManifest, Rule};
use pad_core::secret::{CustodianCredential, KeyTransport, SecretStore};
use pad_delegator::attest::Role;
use pad_delegator::{
    serve, AllowList, ClientConfig, DelegatorClient, DelegatorServer, LocalIdentity,
    MockAttestationRoot, ServerConfig,
};

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub iterations: usize,
    pub payload_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct PhaseStat {
    pub phase: String,
    pub mean_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub payload_bytes: usize,
    pub rows: Vec<PhaseStat>,
}

impl BenchReport {
    pub fn mean_of(&self, phase: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.phase == phase).map(|r| r.mean_ms)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("phase,payload_bytes,mean_ms\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6}\n",
                row.phase, self.payload_bytes, row.mean_ms
            ));
        }
        out
    }
}

pub const PHASE_NEW_DATASET: &str = "new dataset";
pub const PHASE_FETCH_COLD: &str = "fetch key (cold session)";
pub const PHASE_FETCH_WARM: &str = "fetch key (warm session)";
pub const PHASE_ATTESTATION: &str = "attestation (cold minus warm)";
pub const PHASE_DECRYPT: &str = "decrypt payload";
pub const PHASE_POLICY_CHECK: &str = "policy matching + evaluation";
pub const PHASE_ACCESS: &str = "data access";
pub const PHASE_OUTPUT: &str = "output evaluation + pack + key push";

const DELEGATOR_MEASUREMENT: [u8; 32] = [0xAD; 32];
const CONSUMER_MEASUREMENT: [u8; 32] = [0xAC; 32];

struct Rig {
    _server: DelegatorServer,
    uri: String,
    root: Arc<MockAttestationRoot>,
    root_key: ed25519_dalek::VerifyingKey,
    credential: CustodianCredential,
}

fn rig() -> Result<Rig, String> {
    let mut seed = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    let root = Arc::new(MockAttestationRoot::new(SigningKey::from_bytes(&seed)));
    let mut cred_seed = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut cred_seed);
    let credential = CustodianCredential {
        custodian_id: Uuid::new_v4(),
        signing_key: SigningKey::from_bytes(&cred_seed),
    };
    let mut allow = AllowList::default();
    allow.allow(Role::ConsumerMiddleware, CONSUMER_MEASUREMENT);
    let server = serve(ServerConfig {
        bind_addr: "127.0.0.1:0".into(),
        identity: LocalIdentity {
            measurement: DELEGATOR_MEASUREMENT,
            role: Role::Delegator,
            attestation_root: root.clone(),
        },
        attestation_root_key: root.verifying_key(),
        allow,
        custodian_keys: HashMap::from([(
            credential.custodian_id,
            credential.signing_key.verifying_key(),
        )]),
        idle_timeout: Duration::from_secs(60),
    })
    .map_err(|e| format!("delegator bind: {e}"))?;
    let uri = server.uri();
    let root_key = root.verifying_key();
    Ok(Rig {
        _server: server,
        uri,
        root,
        root_key,
        credential,
    })
}

fn consumer(rig: &Rig) -> DelegatorClient {
    DelegatorClient::new(ClientConfig {
        identity: LocalIdentity {
            measurement: CONSUMER_MEASUREMENT,
            role: Role::ConsumerMiddleware,
            attestation_root: rig.root.clone(),
        },
        attestation_root_key: rig.root_key,
        allowed_delegators: HashSet::from([DELEGATOR_MEASUREMENT]),
    })
}

fn bench_policy(program_hash: Digest32, custodian: Uuid) -> Policy {
    Policy::new(
        TRAINING_DATA_LANG_ID,
        vec![Rule::ShareCap {
            cap_percent: CapPercent::whole(100).expect("100 is valid"),
        }],
        vec![Rule::ProgramHash {
            allowed_hashes: [program_hash].into(),
        }],
        vec![Rule::Custodian {
            required_custodian: custodian,
        }],
    )
    .expect("well-formed policy")
}

pub fn run(config: &BenchConfig) -> Result<BenchReport, String> {
    if config.iterations == 0 {
        return Err("iterations must be positive".into());
    }
    let rig = rig()?;
    let artifact = b"bench consumer".to_vec();
    let manifest =
        ProgramManifest::for_artifact(&artifact, Uuid::new_v4(), ProgramKind::Training);
    let policy = bench_policy(manifest.program_hash, rig.credential.custodian_id);

    // Pre-pack one PAD per iteration and push its key; the consumer side
    // is what gets measured.
    let mut pads = Vec::new();
    let mut keys = Vec::new();
    let push_client = consumer(&rig);
    for i in 0..config.iterations {
        let mut raw = vec![0u8; config.payload_bytes];
        rand::rngs::OsRng.fill_bytes(&mut raw);
        let data_id = Uuid::new_v4();
        let mut key = vec![0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut key);
        let payload = PlaintextPayload {
            raw_data: raw,
            policies: vec![policy.clone()],
            attributes: vec![DataAttribute::u64(DATA_COUNT_ATTRIBUTE, 1)],
        };
        let pad = codec::pack_pad(
            &payload,
            &PadMetadataFields {
                data_id,
                custodian_id: rig.credential.custodian_id,
                crypto_suite: SUITE_CHACHA20_POLY1305,
                key_delegator_uri: rig.uri.clone(),
            },
            &key,
        )
        .map_err(|e| e.to_string())?;
        push_client
            .push_key(&rig.uri, data_id, &key, &rig.credential)
            .map_err(|e| format!("push (iteration {i}): {e}"))?;
        pads.push(pad);
        keys.push((data_id, key));
    }

    let mut cold = Vec::new();
    let mut warm = Vec::new();
    for (data_id, expected) in &keys {
        // Fresh client: the fetch pays the full handshake.
        let client = consumer(&rig);
        let start = Instant::now();
        let got = client
            .fetch_key(&rig.uri, *data_id)
            .map_err(|e| e.to_string())?;
        cold.push(start.elapsed().as_secs_f64() * 1e3);
        assert_eq!(&got, expected);
        // Same client again: session reuse, fetch only.
        let start = Instant::now();
        client
            .fetch_key(&rig.uri, *data_id)
            .map_err(|e| e.to_string())?;
        warm.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let mut decrypt = Vec::new();
    for (pad, (_, key)) in pads.iter().zip(&keys) {
        let start = Instant::now();
        codec::decrypt_payload(pad, key).map_err(|e| e.to_string())?;
        decrypt.push(start.elapsed().as_secs_f64() * 1e3);
    }

    // Middleware phases over a warm shared session.
    let secrets = Arc::new(SecretStore::new(Box::new(consumer(&rig))));
    let middleware = Middleware::new(Arc::new(EngineRegistry::with_builtin_engines()), secrets);
    middleware.add_custodian_credential(rig.credential.clone());
    let mut new_dataset = Vec::new();
    let mut check = Vec::new();
    let mut access = Vec::new();
    let mut output = Vec::new();
    for pad in &pads {
        let start = Instant::now();
        let mut ds = middleware.dataset_new();
        new_dataset.push(start.elapsed().as_secs_f64() * 1e3);
        middleware.dataset_add(&mut ds, pad).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let passed = middleware
            .dataset_check(&mut ds, &manifest)
            .map_err(|e| e.to_string())?;
        check.push(start.elapsed().as_secs_f64() * 1e3);
        if !passed {
            return Err("benchmark policy unexpectedly denied".into());
        }
        let start = Instant::now();
        middleware.dataset_access(&ds, 0).map_err(|e| e.to_string())?;
        access.push(start.elapsed().as_secs_f64() * 1e3);
        let start = Instant::now();
        middleware
            .propose_output(
                &ds,
                &pad_core::engine::OutputProposal {
                    raw_data: b"derived".to_vec(),
                    attributes: vec![],
                    policies: vec![policy.clone()],
                    custodian_id: rig.credential.custodian_id,
                    delegator_uri: rig.uri.clone(),
                },
            )
            .map_err(|e| e.to_string())?;
        output.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cold_mean = mean(&cold);
    let warm_mean = mean(&warm);
    let rows = vec![
        PhaseStat {
            phase: PHASE_NEW_DATASET.into(),
            mean_ms: mean(&new_dataset),
        },
        PhaseStat {
            phase: PHASE_FETCH_COLD.into(),
            mean_ms: cold_mean,
        },
        PhaseStat {
            phase: PHASE_FETCH_WARM.into(),
            mean_ms: warm_mean,
        },
        PhaseStat {
            phase: PHASE_ATTESTATION.into(),
            mean_ms: (cold_mean - warm_mean).max(0.0),
        },
        PhaseStat {
            phase: PHASE_DECRYPT.into(),
            mean_ms: mean(&decrypt),
        },
        PhaseStat {
            phase: PHASE_POLICY_CHECK.into(),
            mean_ms: mean(&check),
        },
        PhaseStat {
            phase: PHASE_ACCESS.into(),
            mean_ms: mean(&access),
        },
        PhaseStat {
            phase: PHASE_OUTPUT.into(),
            mean_ms: mean(&output),
        },
    ];
    Ok(BenchReport {
        payload_bytes: config.payload_bytes,
        rows,
    })
}
