//! Pluggable policy engines keyed by policy language id, plus the two
//! built-in languages: one for training data (share caps + program hash)
//! and one for model data (authorized users, rate limits, custody and
//! policy inheritance on derived models).
//!
//! Every engine is deny-closed: rule kinds a language does not implement,
//! and unknown rule types, fail the owning PAD's check.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;
use uuid::Uuid;

use crate::codec::{DataAttribute, DecryptedPad};
use crate::policy::{policy_set_contains, Policy, ProgramKind, ProgramManifest, Rule};

/// Language id of the training-data policy engine.
pub const TRAINING_DATA_LANG_ID: Uuid = Uuid::from_u128(0x7d9c1b2a_34e5_48f1_9a07_c1d2e3f40516);
/// Language id of the model-data policy engine.
pub const MODEL_DATA_LANG_ID: Uuid = Uuid::from_u128(0x2a6e8d90_4c1b_47e3_b82f_90a1b2c3d4e5);

/// Attribute consulted by the training engine for share computation.
pub const DATA_COUNT_ATTRIBUTE: &str = "data_count";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("an engine is already registered for language {0}")]
    DuplicateEngine(Uuid),
}

/// Derived data proposed by a consumer program for output.
#[derive(Debug, Clone)]
pub struct OutputProposal {
    pub raw_data: Vec<u8>,
    pub attributes: Vec<DataAttribute>,
    pub policies: Vec<Policy>,
    pub custodian_id: Uuid,
    pub delegator_uri: String,
}

/// A policy engine makes Boolean verdicts for one policy language. Both
/// calls are total and side-effect free apart from engine-local state
/// (the model engine's rate limiter).
pub trait PolicyEngine: Send + Sync {
    /// Verdict on whether `program` may access the staged `pads`.
    fn input_eval(&self, pads: &[&DecryptedPad], program: &ProgramManifest, now_ms: u64) -> bool;

    /// Verdict on whether `proposal` may leave the middleware given the
    /// input `pads` it was derived from.
    fn output_eval(
        &self,
        proposal: &OutputProposal,
        pads: &[&DecryptedPad],
        program: &ProgramManifest,
    ) -> bool;
}

#[derive(Default)]
pub struct EngineRegistry {
    engines: RwLock<HashMap<Uuid, Arc<dyn PolicyEngine>>>,
}

impl EngineRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry pre-loaded with the two built-in engines.
    pub fn with_builtin_engines() -> Self {
        let registry = Self::new();
        registry
            .register(TRAINING_DATA_LANG_ID, Arc::new(TrainingDataEngine))
            .expect("empty registry");
        registry
            .register(MODEL_DATA_LANG_ID, Arc::new(ModelDataEngine::new()))
            .expect("empty registry");
        registry
    }

    pub fn register(
        &self,
        policy_lang_id: Uuid,
        engine: Arc<dyn PolicyEngine>,
    ) -> Result<(), EngineError> {
        let mut engines = self.engines.write().unwrap();
        if engines.contains_key(&policy_lang_id) {
            return Err(EngineError::DuplicateEngine(policy_lang_id));
        }
        engines.insert(policy_lang_id, engine);
        Ok(())
    }

    pub fn get(&self, policy_lang_id: &Uuid) -> Option<Arc<dyn PolicyEngine>> {
        self.engines.read().unwrap().get(policy_lang_id).cloned()
    }
}

fn policies_of<'a>(pad: &'a DecryptedPad, lang: Uuid) -> impl Iterator<Item = &'a Policy> {
    pad.payload
        .policies
        .iter()
        .filter(move |p| p.policy_lang_id == lang)
}

/// Engine for the training-data language: per-custodian share caps on the
/// input side, program hashes on the program side, custodian designation
/// on the output side.
pub struct TrainingDataEngine;

impl PolicyEngine for TrainingDataEngine {
    fn input_eval(&self, pads: &[&DecryptedPad], program: &ProgramManifest, _now_ms: u64) -> bool {
        // Total entry count over the dataset; every PAD must state its own.
        let mut per_custodian: HashMap<Uuid, u64> = HashMap::new();
        let mut total: u64 = 0;
        for pad in pads {
            let Some(count) = pad.payload.u64_attribute(DATA_COUNT_ATTRIBUTE) else {
                return false;
            };
            total = total.saturating_add(count);
            *per_custodian.entry(pad.metadata.custodian_id).or_insert(0) += count;
        }
        for pad in pads {
            let custodian_total = per_custodian[&pad.metadata.custodian_id];
            for policy in policies_of(pad, TRAINING_DATA_LANG_ID) {
                if policy.has_unknown_rules() {
                    return false;
                }
                for rule in &policy.program_constraints {
                    match rule {
                        Rule::ProgramHash { allowed_hashes } => {
                            if !allowed_hashes.contains(&program.program_hash) {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
                for rule in &policy.input_constraints {
                    match rule {
                        Rule::ShareCap { cap_percent } => {
                            // Share is the custodian's aggregate over the
                            // whole dataset, compared exactly.
                            if cap_percent.exceeded_by(custodian_total, total) {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
            }
        }
        true
    }

    fn output_eval(
        &self,
        proposal: &OutputProposal,
        pads: &[&DecryptedPad],
        _program: &ProgramManifest,
    ) -> bool {
        for pad in pads {
            for policy in policies_of(pad, TRAINING_DATA_LANG_ID) {
                if policy.has_unknown_rules() {
                    return false;
                }
                for rule in &policy.output_constraints {
                    match rule {
                        Rule::Custodian { required_custodian } => {
                            if proposal.custodian_id != *required_custodian {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
            }
        }
        true
    }
}

/// Fixed one-minute window counters, per owner. Counts are attempts in
/// the current window; the window rolls on wall-clock minute boundaries.
#[derive(Debug, Default)]
pub struct RateLimiterState {
    window_minute: u64,
    counts: HashMap<Uuid, u32>,
}

impl RateLimiterState {
    /// Records one query attempt and reports whether it stays within
    /// `limit` for the owner's current window.
    fn record_attempt(&mut self, owner: Uuid, limit: u32, now_ms: u64) -> bool {
        let minute = now_ms / 60_000;
        if minute != self.window_minute {
            self.window_minute = minute;
            self.counts.clear();
        }
        let count = self.counts.entry(owner).or_insert(0);
        *count += 1;
        *count <= limit
    }
}

/// Engine for the model-data language of derived models: authorized
/// owners and query rate limits on input, program hashes on program,
/// custody and `SAME_POLICY` inheritance on fine-tuned output.
pub struct ModelDataEngine {
    state: Mutex<RateLimiterState>,
}

impl ModelDataEngine {
    pub fn new() -> Self {
        ModelDataEngine {
            state: Mutex::new(RateLimiterState::default()),
        }
    }
}

impl Default for ModelDataEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl PolicyEngine for ModelDataEngine {
    fn input_eval(&self, pads: &[&DecryptedPad], program: &ProgramManifest, now_ms: u64) -> bool {
        for pad in pads {
            for policy in policies_of(pad, MODEL_DATA_LANG_ID) {
                if policy.has_unknown_rules() {
                    return false;
                }
                for rule in &policy.program_constraints {
                    match rule {
                        Rule::ProgramHash { allowed_hashes } => {
                            if !allowed_hashes.contains(&program.program_hash) {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
                for rule in &policy.input_constraints {
                    match rule {
                        Rule::AuthUser { authorized_owners } => {
                            if !authorized_owners.contains(&program.owner_id) {
                                return false;
                            }
                        }
                        Rule::RateLimit { per_owner_limits } => {
                            // Only query programs consume rate budget.
                            if program.program_kind == ProgramKind::Query {
                                let Some(&limit) = per_owner_limits.get(&program.owner_id) else {
                                    return false;
                                };
                                let within = self.state.lock().unwrap().record_attempt(
                                    program.owner_id,
                                    limit,
                                    now_ms,
                                );
                                if !within {
                                    return false;
                                }
                            }
                        }
                        _ => return false,
                    }
                }
            }
        }
        true
    }

    fn output_eval(
        &self,
        proposal: &OutputProposal,
        pads: &[&DecryptedPad],
        program: &ProgramManifest,
    ) -> bool {
        let fine_tune = program.program_kind == ProgramKind::FineTune;
        for pad in pads {
            for policy in policies_of(pad, MODEL_DATA_LANG_ID) {
                if policy.has_unknown_rules() {
                    return false;
                }
                for rule in &policy.output_constraints {
                    match rule {
                        Rule::Custodian { required_custodian } => {
                            if fine_tune && proposal.custodian_id != *required_custodian {
                                return false;
                            }
                        }
                        Rule::SamePolicy => {
                            // The derived model must carry this policy
                            // verbatim; additions are permitted.
                            if fine_tune && !policy_set_contains(&proposal.policies, policy) {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
            }
        }
        true
    }
}
