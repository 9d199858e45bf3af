//! The trusted enforcement core: dataset staging, one-shot policy checks,
//! gated raw-data access, and the output derivation pipeline.
//!
//! Consumer programs run against [`HostApi`], a capability surface of
//! exactly six calls. Nothing else is reachable from a consumer entry
//! function, so every datum entering or leaving the program traverses a
//! policy gate.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use thiserror::Error;
use uuid::Uuid;

use crate::codec::{self, CodecError, DecryptedPad, PadMetadataFields};
use crate::crypto::SUITE_CHACHA20_POLY1305;
use crate::engine::{EngineRegistry, OutputProposal};
use crate::policy::{Digest32, ProgramManifest};
use crate::secret::{CustodianCredential, SecretStore, SecretStoreError};

/// Wall-clock source, injectable so tests control rate-limit windows.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenyReason {
    /// No engine registered for a policy language found in the dataset.
    NoEngine(Uuid),
    /// An engine returned false for the input-side check.
    InputConstraint(Uuid),
    /// An engine returned false for the output-side check.
    OutputConstraint(Uuid),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Unchecked,
    Passed,
    Denied(DenyReason),
}

#[derive(Debug, Error)]
pub enum MiddlewareError {
    #[error("pad error: {0}")]
    Pad(#[from] CodecError),
    #[error("secret store: {0}")]
    Secret(#[from] SecretStoreError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has not passed a policy check")]
    NotChecked,
    #[error("policy check denied access")]
    PolicyDenied,
    #[error("entry index out of range")]
    IndexOutOfRange,
    #[error("no program bound to the dataset")]
    NoProgramBound,
    #[error("output denied: {0:?}")]
    OutputDenied(DenyReason),
    #[error("no custodian credential for {0}; output key cannot be provisioned")]
    MissingCustodianCredential(Uuid),
    #[error("delegator unreachable, PAD withheld: {0}")]
    DelegatorUnreachable(String),
    #[error("program manifest hash does not match the artifact")]
    ManifestMismatch,
    #[error("unknown dataset handle")]
    UnknownHandle,
}

/// Staged, access-locked collection of decrypted PADs awaiting a policy
/// verdict. Entries are never readable before a passing check, and any
/// mutation resets the verdict.
pub struct Dataset {
    entries: Vec<DecryptedPad>,
    verdict: Verdict,
    bound_program: Option<ProgramManifest>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn verdict(&self) -> &Verdict {
        &self.verdict
    }
}

/// The middleware owns the engine registry, the secret store and the
/// custodian credentials it may provision output keys with. Datasets are
/// confined to one consumer session; the registry and store are the only
/// cross-session state.
pub struct Middleware {
    registry: Arc<EngineRegistry>,
    secrets: Arc<SecretStore>,
    credentials: Mutex<HashMap<Uuid, CustodianCredential>>,
    clock: Arc<dyn Clock>,
    approvals: AtomicU64,
    emissions: AtomicU64,
}

impl Middleware {
    pub fn new(registry: Arc<EngineRegistry>, secrets: Arc<SecretStore>) -> Self {
        Self::with_clock(registry, secrets, Arc::new(SystemClock))
    }

    pub fn with_clock(
        registry: Arc<EngineRegistry>,
        secrets: Arc<SecretStore>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Middleware {
            registry,
            secrets,
            credentials: Mutex::new(HashMap::new()),
            clock,
            approvals: AtomicU64::new(0),
            emissions: AtomicU64::new(0),
        }
    }

    /// Authorize this middleware to provision output keys for a custodian.
    pub fn add_custodian_credential(&self, credential: CustodianCredential) {
        self.credentials
            .lock()
            .unwrap()
            .insert(credential.custodian_id, credential);
    }

    pub fn secrets(&self) -> &Arc<SecretStore> {
        &self.secrets
    }

    pub fn dataset_new(&self) -> Dataset {
        Dataset {
            entries: Vec::new(),
            verdict: Verdict::Unchecked,
            bound_program: None,
        }
    }

    /// Parse, key-resolve and decrypt a PAD, staging it access-locked.
    /// On any failure nothing is staged and the dataset is unchanged.
    pub fn dataset_add(&self, dataset: &mut Dataset, pad_bytes: &[u8]) -> Result<(), MiddlewareError> {
        let metadata = codec::parse_metadata(pad_bytes)?;
        let key = self
            .secrets
            .get(metadata.data_id, &metadata.key_delegator_uri)?;
        let payload = codec::decrypt_payload(pad_bytes, &key)?;
        dataset.entries.push(DecryptedPad { metadata, payload });
        dataset.verdict = Verdict::Unchecked;
        Ok(())
    }

    /// One-shot input policy check over the whole dataset. Groups entries
    /// by policy language, dispatches each group to its engine, and passes
    /// only on unanimous approval. Binds `program` to the dataset.
    pub fn dataset_check(
        &self,
        dataset: &mut Dataset,
        program: &ProgramManifest,
    ) -> Result<bool, MiddlewareError> {
        if dataset.entries.is_empty() {
            return Err(MiddlewareError::EmptyDataset);
        }
        dataset.bound_program = Some(program.clone());
        let now_ms = self.clock.now_ms();
        for (lang, pads) in group_by_language(&dataset.entries) {
            let Some(engine) = self.registry.get(&lang) else {
                dataset.verdict = Verdict::Denied(DenyReason::NoEngine(lang));
                return Ok(false);
            };
            if !engine.input_eval(&pads, program, now_ms) {
                dataset.verdict = Verdict::Denied(DenyReason::InputConstraint(lang));
                return Ok(false);
            }
        }
        dataset.verdict = Verdict::Passed;
        Ok(true)
    }

    /// Raw data of one entry; only reachable after a passing check of the
    /// current entry set.
    pub fn dataset_access<'a>(
        &self,
        dataset: &'a Dataset,
        index: usize,
    ) -> Result<&'a [u8], MiddlewareError> {
        let entry = self.dataset_entry(dataset, index)?;
        Ok(&entry.payload.raw_data)
    }

    /// Full decrypted entry (attributes and policies included), gated the
    /// same way as raw data access.
    pub fn dataset_entry<'a>(
        &self,
        dataset: &'a Dataset,
        index: usize,
    ) -> Result<&'a DecryptedPad, MiddlewareError> {
        match &dataset.verdict {
            Verdict::Unchecked => return Err(MiddlewareError::NotChecked),
            Verdict::Denied(_) => return Err(MiddlewareError::PolicyDenied),
            Verdict::Passed => {}
        }
        dataset
            .entries
            .get(index)
            .ok_or(MiddlewareError::IndexOutOfRange)
    }

    /// Run the output pipeline: evaluate the proposal against every input
    /// PAD's engine, and on unanimous approval pack a new PAD, provision
    /// its key to the proposal's delegator, and release the bytes. The key
    /// is pushed before the PAD is released; if the push fails the PAD is
    /// withheld.
    pub fn propose_output(
        &self,
        dataset: &Dataset,
        proposal: &OutputProposal,
    ) -> Result<Vec<u8>, MiddlewareError> {
        match &dataset.verdict {
            Verdict::Unchecked => return Err(MiddlewareError::NotChecked),
            Verdict::Denied(_) => return Err(MiddlewareError::PolicyDenied),
            Verdict::Passed => {}
        }
        let program = dataset
            .bound_program
            .as_ref()
            .ok_or(MiddlewareError::NoProgramBound)?;
        if proposal.policies.is_empty() {
            return Err(MiddlewareError::Pad(CodecError::EmptyPolicies));
        }
        for (lang, pads) in group_by_language(&dataset.entries) {
            let Some(engine) = self.registry.get(&lang) else {
                return Err(MiddlewareError::OutputDenied(DenyReason::NoEngine(lang)));
            };
            if !engine.output_eval(proposal, &pads, program) {
                return Err(MiddlewareError::OutputDenied(DenyReason::OutputConstraint(
                    lang,
                )));
            }
        }
        self.approvals.fetch_add(1, Ordering::SeqCst);

        let credential = self
            .credentials
            .lock()
            .unwrap()
            .get(&proposal.custodian_id)
            .cloned()
            .ok_or(MiddlewareError::MissingCustodianCredential(
                proposal.custodian_id,
            ))?;
        let data_id = Uuid::new_v4();
        let mut data_key = vec![0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut data_key);
        let payload = codec::PlaintextPayload {
            raw_data: proposal.raw_data.clone(),
            policies: proposal.policies.clone(),
            attributes: proposal.attributes.clone(),
        };
        let pad = codec::pack_pad(
            &payload,
            &PadMetadataFields {
                data_id,
                custodian_id: proposal.custodian_id,
                crypto_suite: SUITE_CHACHA20_POLY1305,
                key_delegator_uri: proposal.delegator_uri.clone(),
            },
            &data_key,
        )?;
        self.secrets
            .push_to_delegator(data_id, &data_key, &credential, &proposal.delegator_uri)
            .map_err(|e| MiddlewareError::DelegatorUnreachable(e.to_string()))?;
        self.emissions.fetch_add(1, Ordering::SeqCst);
        Ok(pad)
    }

    /// Execute a consumer program with a [`HostApi`] as its only
    /// capability. Panics are contained; the middleware survives.
    pub fn run_consumer(&self, program: ConsumerProgram) -> Result<ExitStatus, MiddlewareError> {
        if Digest32::of(&program.artifact) != program.manifest.program_hash {
            return Err(MiddlewareError::ManifestMismatch);
        }
        let host = HostApi::new(self, program.manifest.clone());
        let entry = program.entry;
        match catch_unwind(AssertUnwindSafe(move || entry(&host))) {
            Ok(Ok(())) => Ok(ExitStatus::Completed),
            Ok(Err(msg)) => Ok(ExitStatus::Failed(msg)),
            Err(_) => Ok(ExitStatus::Panicked),
        }
    }

    pub fn approval_count(&self) -> u64 {
        self.approvals.load(Ordering::SeqCst)
    }

    pub fn emission_count(&self) -> u64 {
        self.emissions.load(Ordering::SeqCst)
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }
}

/// Each group holds every entry carrying at least one policy of that
/// language; an entry with mixed-language policies lands in every group.
fn group_by_language(entries: &[DecryptedPad]) -> Vec<(Uuid, Vec<&DecryptedPad>)> {
    let mut order: Vec<Uuid> = Vec::new();
    let mut groups: HashMap<Uuid, Vec<&DecryptedPad>> = HashMap::new();
    for entry in entries {
        let mut langs: Vec<Uuid> = Vec::new();
        for policy in &entry.payload.policies {
            if !langs.contains(&policy.policy_lang_id) {
                langs.push(policy.policy_lang_id);
            }
        }
        for lang in langs {
            let group = groups.entry(lang).or_insert_with(|| {
                order.push(lang);
                Vec::new()
            });
            group.push(entry);
        }
    }
    order
        .into_iter()
        .map(|lang| (lang, groups.remove(&lang).unwrap()))
        .collect()
}

#[derive(Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Completed,
    Failed(String),
    Panicked,
}

pub type ConsumerEntry = Box<dyn FnOnce(&HostApi<'_>) -> Result<(), String>>;

/// A consumer program: its artifact bytes, the manifest claiming their
/// identity, and the entry function invoked with the host capability.
pub struct ConsumerProgram {
    pub manifest: ProgramManifest,
    pub artifact: Vec<u8>,
    pub entry: ConsumerEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DatasetHandle(u64);

/// The declared capability surface of a consumer program. An audit test
/// asserts the reachable interface equals exactly this list.
pub const HOST_API_CALLS: [&str; 6] = [
    "dataset_new",
    "dataset_add",
    "dataset_check",
    "dataset_access",
    "propose_output",
    "monotonic_clock",
];

/// Capability interface handed to consumer programs. No file, network,
/// environment or process capabilities exist on this surface.
pub struct HostApi<'m> {
    middleware: &'m Middleware,
    manifest: ProgramManifest,
    datasets: Mutex<HashMap<DatasetHandle, Dataset>>,
    next_handle: AtomicU64,
}

impl<'m> HostApi<'m> {
    pub fn new(middleware: &'m Middleware, manifest: ProgramManifest) -> Self {
        HostApi {
            middleware,
            manifest,
            datasets: Mutex::new(HashMap::new()),
            next_handle: AtomicU64::new(1),
        }
    }

    pub fn dataset_new(&self) -> DatasetHandle {
        let handle = DatasetHandle(self.next_handle.fetch_add(1, Ordering::SeqCst));
        self.datasets
            .lock()
            .unwrap()
            .insert(handle, self.middleware.dataset_new());
        handle
    }

    pub fn dataset_add(&self, handle: DatasetHandle, pad_bytes: &[u8]) -> Result<(), MiddlewareError> {
        let mut datasets = self.datasets.lock().unwrap();
        let dataset = datasets
            .get_mut(&handle)
            .ok_or(MiddlewareError::UnknownHandle)?;
        self.middleware.dataset_add(dataset, pad_bytes)
    }

    /// Policy check with the program manifest this session was started
    /// with; consumer programs cannot claim another identity.
    pub fn dataset_check(&self, handle: DatasetHandle) -> Result<bool, MiddlewareError> {
        let mut datasets = self.datasets.lock().unwrap();
        let dataset = datasets
            .get_mut(&handle)
            .ok_or(MiddlewareError::UnknownHandle)?;
        self.middleware.dataset_check(dataset, &self.manifest)
    }

    pub fn dataset_access(
        &self,
        handle: DatasetHandle,
        index: usize,
    ) -> Result<Vec<u8>, MiddlewareError> {
        let datasets = self.datasets.lock().unwrap();
        let dataset = datasets.get(&handle).ok_or(MiddlewareError::UnknownHandle)?;
        self.middleware
            .dataset_access(dataset, index)
            .map(|b| b.to_vec())
    }

    pub fn propose_output(
        &self,
        handle: DatasetHandle,
        proposal: &OutputProposal,
    ) -> Result<Vec<u8>, MiddlewareError> {
        let datasets = self.datasets.lock().unwrap();
        let dataset = datasets.get(&handle).ok_or(MiddlewareError::UnknownHandle)?;
        self.middleware.propose_output(dataset, proposal)
    }

    pub fn monotonic_clock(&self) -> u64 {
        self.middleware.now_ms()
    }
}
