//! Delegator client: the consumer/producer side of the key transport.
//!
//! Keeps one attested sealed session per delegator URI and reuses it for
//! every fetch and push, so attestation cost is paid once per delegator
//! rather than once per key. Counters expose how many handshakes and
//! requests actually happened, which is how amortization is observable
//! from the outside.

use std::collections::{HashMap, HashSet};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use uuid::Uuid;

use pad_core::secret::{CustodianCredential, KeyTransport, TransportError};

use crate::attest::{LocalIdentity, MockRootVerifier, Role};
use crate::server::{STATUS_CONFLICT, STATUS_NOT_FOUND, STATUS_OK};
use crate::session::{handshake_initiator, AllowList, HandshakeError, SealedChannel, SessionError};
use crate::wire::{MSG_KEY_FETCH, MSG_KEY_PUSH, MSG_KEY_RESP, MSG_PUSH_ACK};

pub struct ClientConfig {
    pub identity: LocalIdentity,
    /// Attestation root trusted for delegator quotes.
    pub attestation_root_key: ed25519_dalek::VerifyingKey,
    /// Delegator measurements this client will talk to.
    pub allowed_delegators: HashSet<[u8; 32]>,
}

pub struct DelegatorClient {
    identity: LocalIdentity,
    verifier: MockRootVerifier,
    allow: AllowList,
    sessions: Mutex<HashMap<String, SealedChannel<TcpStream>>>,
    attestations: AtomicU64,
    fetch_requests: AtomicU64,
    push_requests: AtomicU64,
}

impl DelegatorClient {
    pub fn new(config: ClientConfig) -> Self {
        let mut allow = AllowList::default();
        for m in config.allowed_delegators {
            allow.allow(Role::Delegator, m);
        }
        DelegatorClient {
            identity: config.identity,
            verifier: MockRootVerifier {
                root: config.attestation_root_key,
            },
            allow,
            sessions: Mutex::new(HashMap::new()),
            attestations: AtomicU64::new(0),
            fetch_requests: AtomicU64::new(0),
            push_requests: AtomicU64::new(0),
        }
    }

    /// Handshakes performed so far; stays flat while sessions are reused.
    pub fn attestation_count(&self) -> u64 {
        self.attestations.load(Ordering::SeqCst)
    }

    pub fn fetch_request_count(&self) -> u64 {
        self.fetch_requests.load(Ordering::SeqCst)
    }

    pub fn push_request_count(&self) -> u64 {
        self.push_requests.load(Ordering::SeqCst)
    }

    fn connect(&self, uri: &str) -> Result<SealedChannel<TcpStream>, TransportError> {
        let stream = TcpStream::connect(uri)
            .map_err(|e| TransportError::Channel(format!("connect {uri}: {e}")))?;
        let _ = stream.set_nodelay(true);
        let channel = handshake_initiator(
            stream,
            &self.identity,
            &self.verifier,
            &self.allow,
            Role::Delegator,
        )
        .map_err(|e| match e {
            HandshakeError::Io(err) => TransportError::Channel(err.to_string()),
            other => TransportError::AttestationFailed(other.to_string()),
        })?;
        self.attestations.fetch_add(1, Ordering::SeqCst);
        Ok(channel)
    }

    /// Run one request/response over the cached session for `uri`,
    /// establishing it first if needed. A dead session is discarded so
    /// the next call re-attests.
    fn call(&self, uri: &str, msg_type: u8, body: &[u8]) -> Result<(u8, Vec<u8>), TransportError> {
        let mut sessions = self.sessions.lock().unwrap();
        if !sessions.contains_key(uri) {
            let channel = self.connect(uri)?;
            sessions.insert(uri.to_string(), channel);
        }
        let channel = sessions.get_mut(uri).expect("just inserted");
        let result = channel
            .send(msg_type, body)
            .and_then(|()| channel.recv())
            .map_err(|e| match e {
                SessionError::PeerError(msg) => TransportError::Channel(msg),
                other => TransportError::Channel(other.to_string()),
            });
        if result.is_err() {
            sessions.remove(uri);
        }
        result
    }
}

fn unexpected(msg_type: u8) -> TransportError {
    TransportError::Channel(format!("unexpected response frame 0x{msg_type:02x}"))
}

impl KeyTransport for DelegatorClient {
    fn fetch_key(&self, delegator_uri: &str, data_id: Uuid) -> Result<Vec<u8>, TransportError> {
        self.fetch_requests.fetch_add(1, Ordering::SeqCst);
        let (msg_type, resp) = self.call(delegator_uri, MSG_KEY_FETCH, data_id.as_bytes())?;
        if msg_type != MSG_KEY_RESP {
            return Err(unexpected(msg_type));
        }
        match resp.first() {
            Some(&STATUS_OK) => {
                if resp.len() < 3 {
                    return Err(TransportError::Channel("short key response".into()));
                }
                let len = u16::from_le_bytes(resp[1..3].try_into().expect("2 bytes")) as usize;
                if resp.len() != 3 + len {
                    return Err(TransportError::Channel("key length mismatch".into()));
                }
                Ok(resp[3..].to_vec())
            }
            Some(&STATUS_NOT_FOUND) => Err(TransportError::KeyNotFound),
            _ => Err(TransportError::Channel("fetch refused".into())),
        }
    }

    fn push_key(
        &self,
        delegator_uri: &str,
        data_id: Uuid,
        data_key: &[u8],
        credential: &CustodianCredential,
    ) -> Result<(), TransportError> {
        self.push_requests.fetch_add(1, Ordering::SeqCst);
        let signature = credential.sign_push(&data_id, data_key);
        let mut body = Vec::with_capacity(16 + 16 + 2 + data_key.len() + 64);
        body.extend_from_slice(data_id.as_bytes());
        body.extend_from_slice(credential.custodian_id.as_bytes());
        body.extend_from_slice(&(data_key.len() as u16).to_le_bytes());
        body.extend_from_slice(data_key);
        body.extend_from_slice(&signature.to_bytes());
        let (msg_type, resp) = self.call(delegator_uri, MSG_KEY_PUSH, &body)?;
        if msg_type != MSG_PUSH_ACK {
            return Err(unexpected(msg_type));
        }
        match resp.first() {
            Some(&STATUS_OK) => Ok(()),
            Some(&STATUS_CONFLICT) => Err(TransportError::Channel(
                "delegator already holds a different key for this data id".into(),
            )),
            _ => Err(TransportError::NotCustodian),
        }
    }
}
