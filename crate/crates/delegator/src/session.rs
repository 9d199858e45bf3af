//! Mutually attested session establishment and the sealed channel that
//! carries everything after the handshake.
//!
//! Handshake (two frames): the initiator sends HELLO carrying its quote
//! over a fresh X25519 public key; the responder answers HELLO_ACK with
//! its own. Both sides verify the peer quote against the attestation
//! root, check the peer measurement against the allow-list for its role,
//! and derive the session key from the full transcript:
//!
//! ```text
//! session_key = SHA-256(domain ‖ initiator_quote ‖ responder_quote ‖ dh_shared)
//! ```
//!
//! Binding the quotes into the derivation means a handshake only
//! completes if both sides saw the same, untampered evidence. Subsequent
//! frames are AEAD-sealed with a per-direction nonce counter and the
//! sequence number as associated data, so recorded frames cannot be
//! replayed or reordered within a session.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::sync::Mutex;

use rand::rngs::OsRng;
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{EphemeralSecret, PublicKey};

use pad_core::crypto::{CryptoSuite, SUITE_CHACHA20_POLY1305};

use crate::attest::{AttestError, AttestationQuote, LocalIdentity, QuoteVerifier, Role};
use crate::wire::{self, MSG_ERROR, MSG_HELLO, MSG_HELLO_ACK};

const KEY_DERIVATION_DOMAIN: &[u8] = b"pad-delegator-session-v1";

const DIR_INITIATOR: u8 = 0;
const DIR_RESPONDER: u8 = 1;

#[derive(Debug, Error)]
pub enum HandshakeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("attestation: {0}")]
    Attest(#[from] AttestError),
    #[error("peer measurement not in allow-list")]
    MeasurementRejected,
    #[error("peer presented role {actual:?}, expected {expected:?}")]
    RoleMismatch { expected: Role, actual: Role },
    #[error("handshake replay: ephemeral public key seen before")]
    ReplayDetected,
    #[error("peer reported: {0}")]
    PeerRejected(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("degenerate key exchange")]
    NonContributory,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame failed authentication")]
    SealBroken,
    #[error("unexpected sequence number (replay or reorder)")]
    BadSequence,
    #[error("peer reported: {0}")]
    PeerError(String),
}

/// Which peer measurements are acceptable, per role. Empty set for a
/// role means no peer of that role is accepted.
#[derive(Debug, Default, Clone)]
pub struct AllowList {
    delegators: HashSet<[u8; 32]>,
    consumers: HashSet<[u8; 32]>,
    producers: HashSet<[u8; 32]>,
}

impl AllowList {
    pub fn allow(&mut self, role: Role, measurement: [u8; 32]) -> &mut Self {
        self.set_mut(role).insert(measurement);
        self
    }

    pub fn allows(&self, role: Role, measurement: &[u8; 32]) -> bool {
        match role {
            Role::Delegator => self.delegators.contains(measurement),
            Role::ConsumerMiddleware => self.consumers.contains(measurement),
            Role::Producer => self.producers.contains(measurement),
        }
    }

    fn set_mut(&mut self, role: Role) -> &mut HashSet<[u8; 32]> {
        match role {
            Role::Delegator => &mut self.delegators,
            Role::ConsumerMiddleware => &mut self.consumers,
            Role::Producer => &mut self.producers,
        }
    }
}

/// Records ephemeral public keys from completed and attempted handshakes
/// so a recorded HELLO cannot be replayed against the responder.
#[derive(Default)]
pub struct ReplayGuard {
    seen: Mutex<HashSet<[u8; 32]>>,
}

impl ReplayGuard {
    /// Returns false if the key was seen before.
    pub fn first_use(&self, dh_public: &[u8; 32]) -> bool {
        self.seen.lock().unwrap().insert(*dh_public)
    }
}

/// Authenticated, encrypted, sequence-checked channel over a byte stream.
pub struct SealedChannel<S> {
    stream: S,
    suite: CryptoSuite,
    session_key: [u8; 32],
    send_dir: u8,
    send_seq: u64,
    recv_seq: u64,
    /// Measurement the peer attested to during the handshake.
    pub peer_measurement: [u8; 32],
    pub peer_role: Role,
}

fn derive_session_key(
    initiator_quote: &AttestationQuote,
    responder_quote: &AttestationQuote,
    dh_shared: &[u8; 32],
) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(KEY_DERIVATION_DOMAIN);
    h.update(initiator_quote.encode());
    h.update(responder_quote.encode());
    h.update(dh_shared);
    h.finalize().into()
}

fn check_peer(
    quote: &AttestationQuote,
    verifier: &dyn QuoteVerifier,
    allow: &AllowList,
    expected_role: Option<Role>,
) -> Result<(), HandshakeError> {
    verifier.verify(quote)?;
    if let Some(expected) = expected_role {
        if quote.role != expected {
            return Err(HandshakeError::RoleMismatch {
                expected,
                actual: quote.role,
            });
        }
    }
    if !allow.allows(quote.role, &quote.measurement) {
        return Err(HandshakeError::MeasurementRejected);
    }
    Ok(())
}

/// Client side of the handshake. `expected_role` pins what the peer must
/// be (a delegator, for every current caller).
pub fn handshake_initiator<S: Read + Write>(
    mut stream: S,
    identity: &LocalIdentity,
    verifier: &dyn QuoteVerifier,
    allow: &AllowList,
    expected_role: Role,
) -> Result<SealedChannel<S>, HandshakeError> {
    let secret = EphemeralSecret::random_from_rng(OsRng);
    let dh_public = PublicKey::from(&secret);
    let my_quote = identity.quote_for(dh_public.to_bytes());
    wire::write_frame(&mut stream, MSG_HELLO, &my_quote.encode())?;

    let (msg_type, body) = wire::read_frame(&mut stream)?;
    let peer_quote = match msg_type {
        MSG_HELLO_ACK => AttestationQuote::decode(&body)?,
        MSG_ERROR => return Err(HandshakeError::PeerRejected(describe_error_body(&body))),
        other => {
            return Err(HandshakeError::Protocol(format!(
                "unexpected frame type 0x{other:02x} during handshake"
            )))
        }
    };
    check_peer(&peer_quote, verifier, allow, Some(expected_role))?;

    let shared = secret.diffie_hellman(&PublicKey::from(peer_quote.dh_public));
    if !shared.was_contributory() {
        return Err(HandshakeError::NonContributory);
    }
    let session_key = derive_session_key(&my_quote, &peer_quote, shared.as_bytes());
    Ok(SealedChannel {
        stream,
        suite: CryptoSuite::by_id(SUITE_CHACHA20_POLY1305).expect("builtin suite"),
        session_key,
        send_dir: DIR_INITIATOR,
        send_seq: 0,
        recv_seq: 0,
        peer_measurement: peer_quote.measurement,
        peer_role: peer_quote.role,
    })
}

/// Server side of the handshake. On rejection an ERROR frame naming the
/// reason is sent before the error is returned, so a client can
/// distinguish "not allowed" from a dropped connection.
pub fn handshake_responder<S: Read + Write>(
    mut stream: S,
    identity: &LocalIdentity,
    verifier: &dyn QuoteVerifier,
    allow: &AllowList,
    replay: &ReplayGuard,
) -> Result<SealedChannel<S>, HandshakeError> {
    let (msg_type, body) = wire::read_frame(&mut stream)?;
    if msg_type != MSG_HELLO {
        let err = HandshakeError::Protocol(format!(
            "expected HELLO, got frame type 0x{msg_type:02x}"
        ));
        send_handshake_error(&mut stream, &err);
        return Err(err);
    }
    let peer_quote = match AttestationQuote::decode(&body) {
        Ok(q) => q,
        Err(e) => {
            let err = HandshakeError::Attest(e);
            send_handshake_error(&mut stream, &err);
            return Err(err);
        }
    };
    // Any non-delegator role in the allow-list may connect; the quote
    // itself says which role the peer claims.
    if let Err(err) = check_peer(&peer_quote, verifier, allow, None) {
        send_handshake_error(&mut stream, &err);
        return Err(err);
    }
    if !replay.first_use(&peer_quote.dh_public) {
        let err = HandshakeError::ReplayDetected;
        send_handshake_error(&mut stream, &err);
        return Err(err);
    }

    let secret = EphemeralSecret::random_from_rng(OsRng);
    let dh_public = PublicKey::from(&secret);
    let my_quote = identity.quote_for(dh_public.to_bytes());
    wire::write_frame(&mut stream, MSG_HELLO_ACK, &my_quote.encode())?;

    let shared = secret.diffie_hellman(&PublicKey::from(peer_quote.dh_public));
    if !shared.was_contributory() {
        return Err(HandshakeError::NonContributory);
    }
    let session_key = derive_session_key(&peer_quote, &my_quote, shared.as_bytes());
    Ok(SealedChannel {
        stream,
        suite: CryptoSuite::by_id(SUITE_CHACHA20_POLY1305).expect("builtin suite"),
        session_key,
        send_dir: DIR_RESPONDER,
        send_seq: 0,
        recv_seq: 0,
        peer_measurement: peer_quote.measurement,
        peer_role: peer_quote.role,
    })
}

fn send_handshake_error<S: Write>(stream: &mut S, err: &HandshakeError) {
    let code = match err {
        HandshakeError::Attest(AttestError::BadSignature) => wire::ERR_BAD_SIGNATURE,
        HandshakeError::MeasurementRejected => wire::ERR_MEASUREMENT_REJECTED,
        HandshakeError::RoleMismatch { .. } => wire::ERR_ROLE_MISMATCH,
        HandshakeError::ReplayDetected => wire::ERR_REPLAY_DETECTED,
        _ => wire::ERR_PROTOCOL,
    };
    let mut body = vec![code];
    body.extend_from_slice(err.to_string().as_bytes());
    // Best effort; the connection is being torn down either way.
    let _ = wire::write_frame(stream, MSG_ERROR, &body);
}

pub fn describe_error_body(body: &[u8]) -> String {
    if body.is_empty() {
        return "unspecified error".into();
    }
    let text = String::from_utf8_lossy(&body[1..]);
    format!("code {}: {}", body[0], text)
}

impl<S: Read + Write> SealedChannel<S> {
    /// Nonce layout: direction byte, three zero bytes, sequence LE. Each
    /// direction has its own counter, so nonces never collide under one
    /// session key.
    fn nonce(dir: u8, seq: u64) -> [u8; 12] {
        let mut n = [0u8; 12];
        n[0] = dir;
        n[4..].copy_from_slice(&seq.to_le_bytes());
        n
    }

    fn aad(msg_type: u8, seq: u64) -> [u8; 9] {
        let mut a = [0u8; 9];
        a[0] = msg_type;
        a[1..].copy_from_slice(&seq.to_le_bytes());
        a
    }

    pub fn send(&mut self, msg_type: u8, plaintext: &[u8]) -> Result<(), SessionError> {
        let seq = self.send_seq;
        let nonce = Self::nonce(self.send_dir, seq);
        let sealed = self
            .suite
            .seal(&self.session_key, &nonce, &Self::aad(msg_type, seq), plaintext)
            .map_err(|_| SessionError::SealBroken)?;
        let mut body = Vec::with_capacity(8 + sealed.len());
        body.extend_from_slice(&seq.to_le_bytes());
        body.extend_from_slice(&sealed);
        wire::write_frame(&mut self.stream, msg_type, &body)?;
        self.send_seq += 1;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<(u8, Vec<u8>), SessionError> {
        let (msg_type, body) = wire::read_frame(&mut self.stream)?;
        if msg_type == MSG_ERROR && body.len() < 8 {
            // Plaintext error frame (pre-session failures on the peer).
            return Err(SessionError::PeerError(describe_error_body(&body)));
        }
        if body.len() < 8 {
            return Err(SessionError::BadSequence);
        }
        let seq = u64::from_le_bytes(body[..8].try_into().expect("8 bytes"));
        if seq != self.recv_seq {
            return Err(SessionError::BadSequence);
        }
        let peer_dir = 1 - self.send_dir;
        let nonce = Self::nonce(peer_dir, seq);
        let plaintext = self
            .suite
            .open(&self.session_key, &nonce, &Self::aad(msg_type, seq), &body[8..])
            .map_err(|_| SessionError::SealBroken)?;
        self.recv_seq += 1;
        Ok((msg_type, plaintext))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attest::MockAttestationRoot;
    use ed25519_dalek::SigningKey;
    use std::net::{TcpListener, TcpStream};
    use std::sync::Arc;

    fn root() -> Arc<MockAttestationRoot> {
        Arc::new(MockAttestationRoot::new(SigningKey::from_bytes(&[5u8; 32])))
    }

    fn identity(root: &Arc<MockAttestationRoot>, m: u8, role: Role) -> LocalIdentity {
        LocalIdentity {
            measurement: [m; 32],
            role,
            attestation_root: root.clone(),
        }
    }

    fn pair() -> (TcpStream, TcpStream) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let client = TcpStream::connect(addr).unwrap();
        let (server, _) = listener.accept().unwrap();
        (client, server)
    }

    fn run_handshake(
        client_allow: AllowList,
        server_allow: AllowList,
        server_verifier_root: ed25519_dalek::VerifyingKey,
    ) -> (
        Result<SealedChannel<TcpStream>, HandshakeError>,
        Result<SealedChannel<TcpStream>, HandshakeError>,
    ) {
        let r = root();
        let client_id = identity(&r, 1, Role::ConsumerMiddleware);
        let server_id = identity(&r, 2, Role::Delegator);
        let (client_stream, server_stream) = pair();
        let guard = ReplayGuard::default();
        let server_verifier = crate::attest::MockRootVerifier {
            root: server_verifier_root,
        };
        let client_verifier = crate::attest::MockRootVerifier {
            root: r.verifying_key(),
        };
        let server_thread = std::thread::spawn(move || {
            handshake_responder(server_stream, &server_id, &server_verifier, &server_allow, &guard)
        });
        let client_result = handshake_initiator(
            client_stream,
            &client_id,
            &client_verifier,
            &client_allow,
            Role::Delegator,
        );
        (client_result, server_thread.join().unwrap())
    }

    fn allow_both() -> (AllowList, AllowList) {
        let mut client_allow = AllowList::default();
        client_allow.allow(Role::Delegator, [2u8; 32]);
        let mut server_allow = AllowList::default();
        server_allow.allow(Role::ConsumerMiddleware, [1u8; 32]);
        (client_allow, server_allow)
    }

    #[test]
    fn mutual_handshake_then_sealed_round_trip() {
        let (ca, sa) = allow_both();
        let (client, server) = run_handshake(ca, sa, root().verifying_key());
        let mut client = client.unwrap();
        let mut server = server.unwrap();
        assert_eq!(client.peer_measurement, [2u8; 32]);
        assert_eq!(server.peer_measurement, [1u8; 32]);
        client.send(0x03, b"ping").unwrap();
        let (t, body) = server.recv().unwrap();
        assert_eq!((t, body.as_slice()), (0x03, b"ping".as_slice()));
        server.send(0x04, b"pong").unwrap();
        let (t, body) = client.recv().unwrap();
        assert_eq!((t, body.as_slice()), (0x04, b"pong".as_slice()));
    }

    #[test]
    fn unlisted_client_measurement_rejected_both_sides() {
        let (ca, _) = allow_both();
        let mut sa = AllowList::default();
        sa.allow(Role::ConsumerMiddleware, [9u8; 32]); // not the client's
        let (client, server) = run_handshake(ca, sa, root().verifying_key());
        assert!(matches!(
            server.err(),
            Some(HandshakeError::MeasurementRejected)
        ));
        // The client learns why instead of seeing a bare hangup.
        assert!(matches!(client.err(), Some(HandshakeError::PeerRejected(_))));
    }

    #[test]
    fn wrong_attestation_root_rejected() {
        let (ca, sa) = allow_both();
        let other_root = MockAttestationRoot::new(SigningKey::from_bytes(&[6u8; 32]));
        let (client, server) = run_handshake(ca, sa, other_root.verifying_key());
        assert!(matches!(
            server.err(),
            Some(HandshakeError::Attest(AttestError::BadSignature))
        ));
        assert!(matches!(client.err(), Some(HandshakeError::PeerRejected(_))));
    }

    #[test]
    fn tampered_sealed_frame_fails_closed() {
        let (ca, sa) = allow_both();
        let (client, server) = run_handshake(ca, sa, root().verifying_key());
        let mut client = client.unwrap();
        let mut server = server.unwrap();
        // Write a frame manually with a flipped ciphertext byte.
        client.send(0x03, b"secret").unwrap();
        let (_, mut raw) = wire::read_frame(client_stream_of(&mut server)).unwrap();
        let last = raw.len() - 1;
        raw[last] ^= 1;
        // Feed the tampered body back through the open path.
        let seq = u64::from_le_bytes(raw[..8].try_into().unwrap());
        let nonce = SealedChannel::<TcpStream>::nonce(DIR_INITIATOR, seq);
        let aad = SealedChannel::<TcpStream>::aad(0x03, seq);
        let suite = CryptoSuite::by_id(SUITE_CHACHA20_POLY1305).unwrap();
        assert!(suite
            .open(&server.session_key, &nonce, &aad, &raw[8..])
            .is_err());
    }

    fn client_stream_of<'a>(ch: &'a mut SealedChannel<TcpStream>) -> &'a mut TcpStream {
        &mut ch.stream
    }
}
