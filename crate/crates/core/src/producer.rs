//! Data producer: packs raw data and custodian-supplied policies into a
//! PAD and routes the fresh data key to the delegator.

use rand::RngCore;
use thiserror::Error;
use uuid::Uuid;

use crate::codec::{self, CodecError, DataAttribute, PadMetadataFields, PlaintextPayload};
use crate::crypto::CryptoSuite;
use crate::policy::Policy;
use crate::secret::{CustodianCredential, KeyTransport, TransportError};

#[derive(Debug, Error)]
pub enum ProduceError {
    #[error("pack failed: {0}")]
    Pack(#[from] CodecError),
    #[error("delegator unreachable, PAD withheld: {0}")]
    DelegatorUnreachable(TransportError),
}

/// Custodian instructions for a producer: where keys go, which suite to
/// use, and the policies every produced PAD carries.
pub struct ProducerConfig {
    pub credential: CustodianCredential,
    pub delegator_uri: String,
    pub crypto_suite: u16,
    pub policy_templates: Vec<Policy>,
}

impl ProducerConfig {
    pub fn custodian_id(&self) -> Uuid {
        self.credential.custodian_id
    }
}

/// Create a PAD: fresh data id and key, payload sealed, key pushed to the
/// delegator under the custodian signature, then erased from producer
/// state. The PAD is withheld if the key cannot be provisioned.
pub fn produce(
    raw_data: &[u8],
    attributes: Vec<DataAttribute>,
    config: &ProducerConfig,
    transport: &dyn KeyTransport,
) -> Result<(Vec<u8>, Uuid), ProduceError> {
    let suite = CryptoSuite::by_id(config.crypto_suite).map_err(CodecError::Crypto)?;
    let data_id = Uuid::new_v4();
    let mut data_key = vec![0u8; suite.key_length];
    rand::rngs::OsRng.fill_bytes(&mut data_key);

    let payload = PlaintextPayload {
        raw_data: raw_data.to_vec(),
        policies: config.policy_templates.clone(),
        attributes,
    };
    let pad = codec::pack_pad(
        &payload,
        &PadMetadataFields {
            data_id,
            custodian_id: config.custodian_id(),
            crypto_suite: config.crypto_suite,
            key_delegator_uri: config.delegator_uri.clone(),
        },
        &data_key,
    )?;
    transport
        .push_key(&config.delegator_uri, data_id, &data_key, &config.credential)
        .map_err(ProduceError::DelegatorUnreachable)?;
    // Best-effort zeroization; only custodian and delegator retain the key.
    data_key.iter_mut().for_each(|b| *b = 0);
    Ok((pad, data_id))
}
