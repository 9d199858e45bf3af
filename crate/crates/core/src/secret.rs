//! Secret management: the data-id → data-key map, with remote misses
//! resolved through a key transport (the delegator client) and custodian
//! pushes going the other way.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::SystemTime;

use ed25519_dalek::{Signature, Signer, SigningKey};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyOrigin {
    LocalGenerated,
    Fetched,
    CustodianProvisioned,
}

#[derive(Debug, Clone)]
pub struct KeyRecord {
    pub data_id: Uuid,
    pub data_key: Vec<u8>,
    pub origin: KeyOrigin,
    pub fetched_at: SystemTime,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("attestation failed: {0}")]
    AttestationFailed(String),
    #[error("delegator has no key for this data id")]
    KeyNotFound,
    #[error("custodian signature rejected")]
    NotCustodian,
    #[error("channel error: {0}")]
    Channel(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SecretStoreError {
    #[error("data id already mapped to a different key")]
    KeyConflict,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Proof of custodian authority: possession of a signing key whose public
/// half the delegator learned at provisioning time.
#[derive(Clone)]
pub struct CustodianCredential {
    pub custodian_id: Uuid,
    pub signing_key: SigningKey,
}

impl CustodianCredential {
    /// Signature over data_id ‖ SHA-256(data_key), the payload a delegator
    /// verifies before accepting a pushed key.
    pub fn sign_push(&self, data_id: &Uuid, data_key: &[u8]) -> Signature {
        self.signing_key.sign(&push_message(data_id, data_key))
    }
}

/// Message bytes a key-push signature covers.
pub fn push_message(data_id: &Uuid, data_key: &[u8]) -> Vec<u8> {
    let mut msg = Vec::with_capacity(48);
    msg.extend_from_slice(data_id.as_bytes());
    msg.extend_from_slice(&Sha256::digest(data_key));
    msg
}

/// Network side of the secret store. Implementations keep one attested
/// session per delegator and reuse it across fetches.
pub trait KeyTransport: Send + Sync {
    fn fetch_key(&self, delegator_uri: &str, data_id: Uuid) -> Result<Vec<u8>, TransportError>;

    fn push_key(
        &self,
        delegator_uri: &str,
        data_id: Uuid,
        data_key: &[u8],
        credential: &CustodianCredential,
    ) -> Result<(), TransportError>;
}

enum Slot {
    Ready(KeyRecord),
    /// A fetch for this id is in flight on another thread.
    Pending,
}

/// Process-lifetime key cache with single-flight fetch: concurrent gets
/// for the same missing id perform one transport call.
pub struct SecretStore {
    transport: Box<dyn KeyTransport>,
    slots: Mutex<HashMap<Uuid, Slot>>,
    cond: Condvar,
}

impl SecretStore {
    pub fn new(transport: Box<dyn KeyTransport>) -> Self {
        SecretStore {
            transport,
            slots: Mutex::new(HashMap::new()),
            cond: Condvar::new(),
        }
    }

    pub fn put_local(&self, data_id: Uuid, data_key: Vec<u8>) -> Result<(), SecretStoreError> {
        self.insert(data_id, data_key, KeyOrigin::LocalGenerated)
    }

    fn insert(
        &self,
        data_id: Uuid,
        data_key: Vec<u8>,
        origin: KeyOrigin,
    ) -> Result<(), SecretStoreError> {
        let mut slots = self.slots.lock().unwrap();
        match slots.get(&data_id) {
            Some(Slot::Ready(existing)) => {
                if existing.data_key == data_key {
                    Ok(()) // idempotent re-insert
                } else {
                    Err(SecretStoreError::KeyConflict)
                }
            }
            Some(Slot::Pending) | None => {
                slots.insert(
                    data_id,
                    Slot::Ready(KeyRecord {
                        data_id,
                        data_key,
                        origin,
                        fetched_at: SystemTime::now(),
                    }),
                );
                self.cond.notify_all();
                Ok(())
            }
        }
    }

    /// Local hit returns immediately; a miss fetches from the delegator
    /// (attesting first if this is the first contact) and caches the key.
    pub fn get(&self, data_id: Uuid, delegator_uri: &str) -> Result<Vec<u8>, SecretStoreError> {
        {
            let mut slots = self.slots.lock().unwrap();
            loop {
                match slots.get(&data_id) {
                    Some(Slot::Ready(rec)) => return Ok(rec.data_key.clone()),
                    Some(Slot::Pending) => {
                        slots = self.cond.wait(slots).unwrap();
                    }
                    None => {
                        slots.insert(data_id, Slot::Pending);
                        break;
                    }
                }
            }
        }
        let fetched = self.transport.fetch_key(delegator_uri, data_id);
        let mut slots = self.slots.lock().unwrap();
        match fetched {
            Ok(key) => {
                slots.insert(
                    data_id,
                    Slot::Ready(KeyRecord {
                        data_id,
                        data_key: key.clone(),
                        origin: KeyOrigin::Fetched,
                        fetched_at: SystemTime::now(),
                    }),
                );
                self.cond.notify_all();
                Ok(key)
            }
            Err(e) => {
                // Failed fetches leave no residue; the next get retries.
                slots.remove(&data_id);
                self.cond.notify_all();
                Err(SecretStoreError::Transport(e))
            }
        }
    }

    pub fn push_to_delegator(
        &self,
        data_id: Uuid,
        data_key: &[u8],
        credential: &CustodianCredential,
        delegator_uri: &str,
    ) -> Result<(), SecretStoreError> {
        self.transport
            .push_key(delegator_uri, data_id, data_key, credential)?;
        Ok(())
    }

    pub fn origin_of(&self, data_id: &Uuid) -> Option<KeyOrigin> {
        match self.slots.lock().unwrap().get(data_id) {
            Some(Slot::Ready(rec)) => Some(rec.origin),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    #[derive(Default)]
    struct FakeTransport {
        table: Mutex<HashMap<Uuid, Vec<u8>>>,
        fetches: AtomicU64,
        delay_ms: u64,
    }

    impl KeyTransport for Arc<FakeTransport> {
        fn fetch_key(&self, _uri: &str, data_id: Uuid) -> Result<Vec<u8>, TransportError> {
            self.fetches.fetch_add(1, Ordering::SeqCst);
            if self.delay_ms > 0 {
                std::thread::sleep(std::time::Duration::from_millis(self.delay_ms));
            }
            self.table
                .lock()
                .unwrap()
                .get(&data_id)
                .cloned()
                .ok_or(TransportError::KeyNotFound)
        }

        fn push_key(
            &self,
            _uri: &str,
            data_id: Uuid,
            data_key: &[u8],
            _credential: &CustodianCredential,
        ) -> Result<(), TransportError> {
            self.table.lock().unwrap().insert(data_id, data_key.to_vec());
            Ok(())
        }
    }

    #[test]
    fn put_then_get_hits_locally() {
        let transport = Arc::new(FakeTransport::default());
        let store = SecretStore::new(Box::new(transport.clone()));
        let id = Uuid::new_v4();
        store.put_local(id, vec![1; 32]).unwrap();
        assert_eq!(store.get(id, "127.0.0.1:1").unwrap(), vec![1; 32]);
        assert_eq!(transport.fetches.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn put_is_idempotent_but_conflicts_on_differing_key() {
        let store = SecretStore::new(Box::new(Arc::new(FakeTransport::default())));
        let id = Uuid::new_v4();
        store.put_local(id, vec![1; 32]).unwrap();
        store.put_local(id, vec![1; 32]).unwrap();
        assert_eq!(
            store.put_local(id, vec![2; 32]).unwrap_err(),
            SecretStoreError::KeyConflict
        );
    }

    #[test]
    fn miss_fetches_and_caches() {
        let transport = Arc::new(FakeTransport::default());
        let id = Uuid::new_v4();
        transport.table.lock().unwrap().insert(id, vec![7; 32]);
        let store = SecretStore::new(Box::new(transport.clone()));
        assert_eq!(store.get(id, "127.0.0.1:1").unwrap(), vec![7; 32]);
        assert_eq!(store.get(id, "127.0.0.1:1").unwrap(), vec![7; 32]);
        assert_eq!(transport.fetches.load(Ordering::SeqCst), 1);
        assert_eq!(store.origin_of(&id), Some(KeyOrigin::Fetched));
    }

    #[test]
    fn unknown_id_is_key_not_found_and_not_cached() {
        let transport = Arc::new(FakeTransport::default());
        let store = SecretStore::new(Box::new(transport.clone()));
        let id = Uuid::new_v4();
        assert_eq!(
            store.get(id, "127.0.0.1:1").unwrap_err(),
            SecretStoreError::Transport(TransportError::KeyNotFound)
        );
        assert!(store.origin_of(&id).is_none());
    }

    #[test]
    fn concurrent_gets_single_flight() {
        let transport = Arc::new(FakeTransport {
            delay_ms: 30,
            ..FakeTransport::default()
        });
        let id = Uuid::new_v4();
        transport.table.lock().unwrap().insert(id, vec![5; 32]);
        let store = Arc::new(SecretStore::new(Box::new(transport.clone())));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let store = store.clone();
            handles.push(std::thread::spawn(move || {
                store.get(id, "127.0.0.1:1").unwrap()
            }));
        }
        for h in handles {
            assert_eq!(h.join().unwrap(), vec![5; 32]);
        }
        assert_eq!(transport.fetches.load(Ordering::SeqCst), 1);
    }
}
