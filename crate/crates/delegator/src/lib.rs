//! Attested key-delegator service and client.
//!
//! The delegator is the only party besides a custodian that ever holds a
//! data key in the clear. Custodians push keys to it under a signature;
//! attested consumer middleware fetches them over a mutually attested,
//! sealed channel. The attestation here is a mock (an ed25519 root
//! signing quotes over ephemeral key-exchange keys) with the verifier
//! behind a trait so real hardware evidence can replace it.

pub mod attest;
pub mod client;
pub mod server;
pub mod session;
pub mod wire;

pub use attest::{AttestationQuote, LocalIdentity, MockAttestationRoot, MockRootVerifier, Role};
pub use client::{ClientConfig, DelegatorClient};
pub use server::{serve, DelegatorServer, ServerConfig};
pub use session::{AllowList, HandshakeError, ReplayGuard};
