//! Unified cryptographic suite interface.
//!
//! A suite identifier travels in the PAD metadata so that heterogeneous
//! nodes can agree on the algorithm without negotiation. Suite `0x0001`
//! is an AEAD with 32-byte keys, 12-byte nonces and 16-byte tags.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::ChaCha20Poly1305;
use thiserror::Error;

/// AEAD suite: ChaCha20-Poly1305.
pub const SUITE_CHACHA20_POLY1305: u16 = 0x0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CryptoSuite {
    pub suite_id: u16,
    pub key_length: usize,
    pub nonce_length: usize,
    pub tag_length: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unknown crypto suite 0x{0:04x}")]
    UnknownSuite(u16),
    #[error("key length mismatch: suite 0x{suite:04x} expects {expected} bytes, got {actual}")]
    KeyLengthMismatch {
        suite: u16,
        expected: usize,
        actual: usize,
    },
    #[error("nonce length mismatch: expected {expected} bytes, got {actual}")]
    NonceLengthMismatch { expected: usize, actual: usize },
    #[error("authentication failed")]
    IntegrityFailure,
}

impl CryptoSuite {
    /// Look up a suite by identifier. Unknown identifiers are rejected so
    /// a parser never silently proceeds with an algorithm it cannot run.
    pub fn by_id(suite_id: u16) -> Result<Self, CryptoError> {
        match suite_id {
            SUITE_CHACHA20_POLY1305 => Ok(CryptoSuite {
                suite_id,
                key_length: 32,
                nonce_length: 12,
                tag_length: 16,
            }),
            other => Err(CryptoError::UnknownSuite(other)),
        }
    }

    pub fn check_key(&self, key: &[u8]) -> Result<(), CryptoError> {
        if key.len() != self.key_length {
            return Err(CryptoError::KeyLengthMismatch {
                suite: self.suite_id,
                expected: self.key_length,
                actual: key.len(),
            });
        }
        Ok(())
    }

    /// Encrypt `plaintext` binding `aad`; output is ciphertext followed by
    /// the authentication tag.
    pub fn seal(
        &self,
        key: &[u8],
        nonce: &[u8],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, CryptoError> {
        self.check_key(key)?;
        if nonce.len() != self.nonce_length {
            return Err(CryptoError::NonceLengthMismatch {
                expected: self.nonce_length,
                actual: nonce.len(),
            });
        }
        let cipher = ChaCha20Poly1305::new(key.into());
        cipher
            .encrypt(
                nonce.into(),
                Payload {
                    msg: plaintext,
                    aad,
                },
            )
            .map_err(|_| CryptoError::IntegrityFailure)
    }

    /// Decrypt and verify; fails closed on any tag or AAD mismatch.
    pub fn open(
        &self,
        key: &[u8],
        nonce: &[u8],
        aad: &[u8],
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, CryptoError> {
        self.check_key(key)?;
        if nonce.len() != self.nonce_length {
            return Err(CryptoError::NonceLengthMismatch {
                expected: self.nonce_length,
                actual: nonce.len(),
            });
        }
        let cipher = ChaCha20Poly1305::new(key.into());
        cipher
            .decrypt(
                nonce.into(),
                Payload {
                    msg: ciphertext,
                    aad,
                },
            )
            .map_err(|_| CryptoError::IntegrityFailure)
    }
}
