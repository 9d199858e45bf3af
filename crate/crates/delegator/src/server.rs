//! Attested key-delegator service.
//!
//! Holds the data-id → data-key table for the custodians it serves.
//! Every connection must complete the mutual attestation handshake
//! before any key moves: fetches are answered only for attested consumer
//! middleware on the allow-list, and pushes are accepted only with a
//! valid signature from a provisioned custodian key. Keys cross the wire
//! exclusively inside the sealed channel.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use ed25519_dalek::{Signature, Verifier, VerifyingKey};
use uuid::Uuid;

use pad_core::secret::push_message;

use crate::attest::{LocalIdentity, MockRootVerifier, Role};
use crate::session::{handshake_responder, AllowList, ReplayGuard};
use crate::wire::{MSG_KEY_FETCH, MSG_KEY_PUSH, MSG_KEY_RESP, MSG_PUSH_ACK};

/// KEY_RESP / PUSH_ACK status bytes.
pub const STATUS_OK: u8 = 0;
pub const STATUS_NOT_FOUND: u8 = 1;
pub const STATUS_NOT_CUSTODIAN: u8 = 1;
pub const STATUS_CONFLICT: u8 = 2;
pub const STATUS_MALFORMED: u8 = 3;
pub const STATUS_FORBIDDEN: u8 = 4;

pub struct ServerConfig {
    pub bind_addr: String,
    pub identity: LocalIdentity,
    /// Attestation root the server trusts for client quotes.
    pub attestation_root_key: VerifyingKey,
    /// Client measurements allowed to connect, per role.
    pub allow: AllowList,
    /// Custodians this delegator serves: id → push-signature key.
    pub custodian_keys: HashMap<Uuid, VerifyingKey>,
    /// Connections silent for this long are closed.
    pub idle_timeout: Duration,
}

struct Shared {
    verifier: MockRootVerifier,
    identity: LocalIdentity,
    allow: AllowList,
    custodian_keys: HashMap<Uuid, VerifyingKey>,
    keys: Mutex<HashMap<Uuid, Vec<u8>>>,
    replay: ReplayGuard,
    idle_timeout: Duration,
    shutting_down: AtomicBool,
    live_streams: Mutex<Vec<TcpStream>>,
    /// Completed handshakes, i.e. attestations this server performed.
    handshakes: AtomicU64,
    fetches_served: AtomicU64,
}

/// Running delegator instance; dropping it stops the service.
pub struct DelegatorServer {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    accept_thread: Option<JoinHandle<()>>,
}

pub fn serve(config: ServerConfig) -> io::Result<DelegatorServer> {
    let listener = TcpListener::bind(&config.bind_addr)?;
    let local_addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        verifier: MockRootVerifier {
            root: config.attestation_root_key,
        },
        identity: config.identity,
        allow: config.allow,
        custodian_keys: config.custodian_keys,
        keys: Mutex::new(HashMap::new()),
        replay: ReplayGuard::default(),
        idle_timeout: config.idle_timeout,
        shutting_down: AtomicBool::new(false),
        live_streams: Mutex::new(Vec::new()),
        handshakes: AtomicU64::new(0),
        fetches_served: AtomicU64::new(0),
    });
    let accept_shared = shared.clone();
    let accept_thread = std::thread::spawn(move || accept_loop(listener, accept_shared));
    Ok(DelegatorServer {
        local_addr,
        shared,
        accept_thread: Some(accept_thread),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.shutting_down.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(_) => continue,
        };
        if let Ok(clone) = stream.try_clone() {
            shared.live_streams.lock().unwrap().push(clone);
        }
        let conn_shared = shared.clone();
        std::thread::spawn(move || {
            // The shutdown list holds a clone of this socket, so close it
            // explicitly when the handler is done with it.
            let raw = stream.try_clone().ok();
            let _ = serve_connection(stream, &conn_shared);
            if let Some(raw) = raw {
                let _ = raw.shutdown(std::net::Shutdown::Both);
            }
        });
    }
}

fn serve_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_read_timeout(Some(shared.idle_timeout))?;
    let _ = stream.set_nodelay(true);
    let mut channel = match handshake_responder(
        stream,
        &shared.identity,
        &shared.verifier,
        &shared.allow,
        &shared.replay,
    ) {
        Ok(ch) => ch,
        // The handshake path already sent the peer an ERROR frame.
        Err(_) => return Ok(()),
    };
    shared.handshakes.fetch_add(1, Ordering::SeqCst);
    loop {
        let (msg_type, body) = match channel.recv() {
            Ok(m) => m,
            // EOF, idle timeout, tamper, or replay: drop the connection.
            Err(_) => return Ok(()),
        };
        match msg_type {
            MSG_KEY_FETCH => {
                let resp = handle_fetch(shared, channel.peer_role, &body);
                if channel.send(MSG_KEY_RESP, &resp).is_err() {
                    return Ok(());
                }
            }
            MSG_KEY_PUSH => {
                let status = handle_push(shared, &body);
                if channel.send(MSG_PUSH_ACK, &[status]).is_err() {
                    return Ok(());
                }
            }
            _ => return Ok(()),
        }
    }
}

fn handle_fetch(shared: &Shared, peer_role: Role, body: &[u8]) -> Vec<u8> {
    if peer_role != Role::ConsumerMiddleware {
        return vec![STATUS_FORBIDDEN];
    }
    let Ok(id_bytes) = <[u8; 16]>::try_from(body) else {
        return vec![STATUS_MALFORMED];
    };
    let data_id = Uuid::from_bytes(id_bytes);
    match shared.keys.lock().unwrap().get(&data_id) {
        Some(key) => {
            shared.fetches_served.fetch_add(1, Ordering::SeqCst);
            let mut resp = Vec::with_capacity(3 + key.len());
            resp.push(STATUS_OK);
            resp.extend_from_slice(&(key.len() as u16).to_le_bytes());
            resp.extend_from_slice(key);
            resp
        }
        None => vec![STATUS_NOT_FOUND],
    }
}

/// Push body: data_id (16) ‖ custodian_id (16) ‖ key length (u16 LE) ‖
/// key ‖ ed25519 signature (64) over data_id ‖ SHA-256(key).
fn handle_push(shared: &Shared, body: &[u8]) -> u8 {
    if body.len() < 16 + 16 + 2 {
        return STATUS_MALFORMED;
    }
    let data_id = Uuid::from_bytes(body[..16].try_into().expect("16 bytes"));
    let custodian_id = Uuid::from_bytes(body[16..32].try_into().expect("16 bytes"));
    let key_len = u16::from_le_bytes(body[32..34].try_into().expect("2 bytes")) as usize;
    let rest = &body[34..];
    if rest.len() != key_len + 64 {
        return STATUS_MALFORMED;
    }
    let key = &rest[..key_len];
    let sig_bytes: [u8; 64] = rest[key_len..].try_into().expect("64 bytes");
    let Some(custodian_key) = shared.custodian_keys.get(&custodian_id) else {
        return STATUS_NOT_CUSTODIAN;
    };
    let signature = Signature::from_bytes(&sig_bytes);
    if custodian_key
        .verify(&push_message(&data_id, key), &signature)
        .is_err()
    {
        return STATUS_NOT_CUSTODIAN;
    }
    let mut table = shared.keys.lock().unwrap();
    match table.get(&data_id) {
        Some(existing) if existing.as_slice() == key => STATUS_OK, // idempotent
        Some(_) => STATUS_CONFLICT,
        None => {
            table.insert(data_id, key.to_vec());
            STATUS_OK
        }
    }
}

impl DelegatorServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn uri(&self) -> String {
        format!("{}:{}", self.local_addr.ip(), self.local_addr.port())
    }

    /// Handshakes this server has completed (one per attested session).
    pub fn attestation_count(&self) -> u64 {
        self.shared.handshakes.load(Ordering::SeqCst)
    }

    pub fn fetches_served(&self) -> u64 {
        self.shared.fetches_served.load(Ordering::SeqCst)
    }

    pub fn key_count(&self) -> usize {
        self.shared.keys.lock().unwrap().len()
    }

    /// Stop accepting, sever live connections, and join the accept loop.
    pub fn shutdown(&mut self) {
        self.shared.shutting_down.store(true, Ordering::SeqCst);
        // Wake the blocking accept with a throwaway connection.
        let _ = TcpStream::connect(self.local_addr);
        for stream in self.shared.live_streams.lock().unwrap().drain(..) {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for DelegatorServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}
