//! Policy-attached data (PAD) framework core.
//!
//! Data travels as sealed PAD containers binding raw data, the policies
//! governing its use, and descriptive attributes under one encryption
//! envelope, with plaintext metadata pointing at the key delegator that
//! holds the data key. This crate provides the container codec, the
//! policy model and engines, secret management, the consumer-side
//! enforcement middleware, and the producer.

pub mod codec;
pub mod crypto;
pub mod engine;
pub mod middleware;
pub mod policy;
pub mod producer;
pub mod secret;
mod wire;

pub use codec::{
    decrypt_payload, open_pad, pack_pad, parse_metadata, DataAttribute, DecryptedPad, PadMetadata,
    PadMetadataFields, PlaintextPayload,
};
pub use engine::{
    EngineRegistry, ModelDataEngine, OutputProposal, PolicyEngine, TrainingDataEngine,
    MODEL_DATA_LANG_ID, TRAINING_DATA_LANG_ID,
};
pub use middleware::{ConsumerProgram, Dataset, HostApi, Middleware, Verdict};
pub use policy::{policy_set_contains, Digest32, Policy, ProgramKind, ProgramManifest, Rule};
pub use secret::{CustodianCredential, KeyTransport, SecretStore, TransportError};
