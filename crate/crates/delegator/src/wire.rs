//! Length-prefixed binary framing for the delegator protocol.
//!
//! Every frame is `u32 length (LE)` followed by a 1-byte message type and
//! the frame body. Handshake frames carry plaintext bodies; everything
//! after the handshake carries `u64 sequence (LE)` plus an AEAD-sealed
//! body (see [`crate::session`]).

use std::io::{self, Read, Write};

pub const MSG_HELLO: u8 = 0x01;
pub const MSG_HELLO_ACK: u8 = 0x02;
pub const MSG_KEY_FETCH: u8 = 0x03;
pub const MSG_KEY_RESP: u8 = 0x04;
pub const MSG_KEY_PUSH: u8 = 0x05;
pub const MSG_PUSH_ACK: u8 = 0x06;
pub const MSG_ERROR: u8 = 0x0F;

/// Error codes carried in an ERROR frame body.
pub const ERR_BAD_SIGNATURE: u8 = 1;
pub const ERR_MEASUREMENT_REJECTED: u8 = 2;
pub const ERR_ROLE_MISMATCH: u8 = 3;
pub const ERR_REPLAY_DETECTED: u8 = 4;
pub const ERR_PROTOCOL: u8 = 5;

const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;

pub fn write_frame(w: &mut impl Write, msg_type: u8, body: &[u8]) -> io::Result<()> {
    let len = (body.len() + 1) as u32;
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    // One buffer, one write: a frame split across small TCP segments can
    // stall on Nagle + delayed-ACK interaction.
    let mut frame = Vec::with_capacity(5 + body.len());
    frame.extend_from_slice(&len.to_le_bytes());
    frame.push(msg_type);
    frame.extend_from_slice(body);
    w.write_all(&frame)?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> io::Result<(u8, Vec<u8>)> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes);
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad frame length"));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    let msg_type = buf[0];
    buf.remove(0);
    Ok((msg_type, buf))
}
