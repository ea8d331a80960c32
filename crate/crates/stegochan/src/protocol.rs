//! Message framing and the session state machine.
//!
//! Wire layout of one frame, big-endian throughout:
//!
//! ```text
//! [4 bytes] session id
//! [4 bytes] request id
//! [4 bytes] next transaction key
//! [2 bytes] payload length N
//! [N bytes] ciphertext
//! [4 bytes] CRC-32 of header || ciphertext
//! ```
//!
//! Overhead is exactly 144 bits regardless of payload. The embedding
//! positions for a frame derive from the key established *before* it; the
//! header carries the key for the *next* frame, so both endpoints advance
//! in lockstep and a replayed or forged frame no longer lines up with the
//! receiver's expectations.

use std::fmt;

use crate::crypto::{checksum, decrypt, encrypt, CipherMode};
use crate::error::{Error, Result};
use crate::formula::{
    derive_next_key, derive_request_id, derive_session_id, KeyMode, TransactionKey,
};
use crate::raster::Raster;
use crate::stego::{self, StegoParams};

pub const HEADER_BYTES: usize = 14;
pub const HEADER_BITS: usize = HEADER_BYTES * 8;
pub const CHECK_BITS: usize = 32;
/// Header plus check value: 144 bits.
pub const FRAME_OVERHEAD_BITS: usize = HEADER_BITS + CHECK_BITS;

/// Fixed-layout frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub session_id: u32,
    pub request_id: u32,
    pub next_key: TransactionKey,
    pub payload_len: u16,
}

impl FrameHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[0..4].copy_from_slice(&self.session_id.to_be_bytes());
        out[4..8].copy_from_slice(&self.request_id.to_be_bytes());
        out[8..12].copy_from_slice(&self.next_key.value().to_be_bytes());
        out[12..14].copy_from_slice(&self.payload_len.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; HEADER_BYTES]) -> Self {
        Self {
            session_id: u32::from_be_bytes(bytes[0..4].try_into().unwrap()),
            request_id: u32::from_be_bytes(bytes[4..8].try_into().unwrap()),
            next_key: TransactionKey::new(u32::from_be_bytes(bytes[8..12].try_into().unwrap())),
            payload_len: u16::from_be_bytes(bytes[12..14].try_into().unwrap()),
        }
    }
}

/// One complete hidden message: header, ciphertext, check value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub header: FrameHeader,
    pub ciphertext: Vec<u8>,
    pub check: u32,
}

impl Frame {
    /// Builds a frame over an already-encrypted payload, computing the
    /// check value over `header || ciphertext`.
    pub fn assemble(
        session_id: u32,
        request_id: u32,
        next_key: TransactionKey,
        ciphertext: Vec<u8>,
    ) -> Result<Self> {
        let payload_len = u16::try_from(ciphertext.len()).map_err(|_| Error::Capacity {
            needed: ciphertext.len(),
            available: usize::from(u16::MAX),
        })?;
        let header = FrameHeader {
            session_id,
            request_id,
            next_key,
            payload_len,
        };
        let mut body = header.to_bytes().to_vec();
        body.extend_from_slice(&ciphertext);
        let check = checksum(&body);
        Ok(Self {
            header,
            ciphertext,
            check,
        })
    }

    /// Parses a frame from exactly `14 + payload_len + 4` bytes. The check
    /// value is stored as read; call [`Frame::verify`] to validate it.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES + 4 {
            return Err(Error::Parameter(format!(
                "frame needs at least {} bytes, got {}",
                HEADER_BYTES + 4,
                bytes.len()
            )));
        }
        let header = FrameHeader::from_bytes(bytes[..HEADER_BYTES].try_into().unwrap());
        let expected = HEADER_BYTES + usize::from(header.payload_len) + 4;
        if bytes.len() != expected {
            return Err(Error::Parameter(format!(
                "frame length {} does not match header payload length (expected {expected})",
                bytes.len()
            )));
        }
        let ciphertext = bytes[HEADER_BYTES..expected - 4].to_vec();
        let check = u32::from_be_bytes(bytes[expected - 4..].try_into().unwrap());
        Ok(Self {
            header,
            ciphertext,
            check,
        })
    }

    /// Recomputes the checksum over `header || ciphertext` and compares.
    pub fn verify(&self) -> bool {
        let mut body = self.header.to_bytes().to_vec();
        body.extend_from_slice(&self.ciphertext);
        checksum(&body) == self.check
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes().to_vec();
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.check.to_be_bytes());
        out
    }

    /// Frame as a bit sequence, MSB first per byte, ready for embedding.
    pub fn to_bits(&self) -> Vec<u8> {
        stego::bytes_to_bits(&self.to_bytes())
    }

    pub fn bit_len(&self) -> usize {
        FRAME_OVERHEAD_BITS + 8 * self.ciphertext.len()
    }
}

/// Session lifecycle phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PreAuth,
    Authenticated,
    Closed,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::PreAuth => "pre-auth",
            Phase::Authenticated => "authenticated",
            Phase::Closed => "closed",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-endpoint protocol state. The session id stays constant from
/// authentication to close; the current key advances after every
/// successfully processed message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub phase: Phase,
    pub session_id: u32,
    pub current_key: TransactionKey,
    pub message_index: u64,
}

impl SessionState {
    fn require_phase(&self, expected: Phase) -> Result<()> {
        if self.phase != expected {
            return Err(Error::Phase {
                expected: expected.name(),
                actual: self.phase.name(),
            });
        }
        Ok(())
    }

    /// Completes authentication: the transaction session id replaces the
    /// temporary one and the shared post-auth key becomes current.
    /// Credential verification itself is outside this crate; `auth_key`
    /// models the secret both ends hold once it succeeds.
    pub fn authenticate(&mut self, auth_key: TransactionKey) -> Result<()> {
        self.require_phase(Phase::PreAuth)?;
        self.phase = Phase::Authenticated;
        self.session_id = derive_session_id(auth_key);
        self.current_key = auth_key;
        self.message_index = 0;
        Ok(())
    }

    pub fn close(&mut self) {
        self.phase = Phase::Closed;
    }
}

/// Opens a connection: both endpoints enter pre-auth with a temporary
/// session id derived from the shared default key.
pub fn open_session(default_key: TransactionKey) -> (SessionState, SessionState) {
    let state = SessionState {
        phase: Phase::PreAuth,
        session_id: derive_session_id(default_key),
        current_key: default_key,
        message_index: 0,
    };
    (state.clone(), state)
}

/// Receiver outcome for one delivered image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiverVerdict {
    Processed { plaintext: Vec<u8> },
    RejectSession,
    RejectRequest,
    /// Integrity check failed; the sender should deliver the frame again.
    Retransmit,
    DecodeFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictKind {
    Processed,
    RejectSession,
    RejectRequest,
    Retransmit,
    DecodeFailure,
}

impl ReceiverVerdict {
    pub fn kind(&self) -> VerdictKind {
        match self {
            ReceiverVerdict::Processed { .. } => VerdictKind::Processed,
            ReceiverVerdict::RejectSession => VerdictKind::RejectSession,
            ReceiverVerdict::RejectRequest => VerdictKind::RejectRequest,
            ReceiverVerdict::Retransmit => VerdictKind::Retransmit,
            ReceiverVerdict::DecodeFailure => VerdictKind::DecodeFailure,
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::Processed => "processed",
            VerdictKind::RejectSession => "reject-session",
            VerdictKind::RejectRequest => "reject-request",
            VerdictKind::Retransmit => "retransmit",
            VerdictKind::DecodeFailure => "decode-failure",
        })
    }
}

/// Builds the next outgoing frame for an authenticated session. State is
/// not advanced here; that happens when the send completes.
pub fn build_frame(
    state: &SessionState,
    plaintext: &[u8],
    next_key: TransactionKey,
    mode: CipherMode,
) -> Result<Frame> {
    state.require_phase(Phase::Authenticated)?;
    let request_id = derive_request_id(state.current_key);
    let ciphertext = encrypt(plaintext, state.current_key, mode);
    Frame::assemble(state.session_id, request_id, next_key, ciphertext)
}

/// Full sender pipeline: decide the next key, build the frame, embed it
/// under the current key. On success the state advances to the next key;
/// on any error it is left untouched.
pub fn send_message(
    state: &mut SessionState,
    plaintext: &[u8],
    cover: &Raster,
    params: &StegoParams,
    mode: CipherMode,
    key_mode: KeyMode,
    entropy: Option<u32>,
) -> Result<Raster> {
    let next_key = derive_next_key(state.current_key, key_mode, entropy)?;
    let frame = build_frame(state, plaintext, next_key, mode)?;
    let stego = stego::embed(cover, state.current_key, &frame.to_bits(), params)?;
    state.current_key = next_key;
    state.message_index += 1;
    Ok(stego)
}

/// Full receiver pipeline, checked strictly in order: session id, request
/// id, integrity, decryption. Every outcome is a verdict, never a fault,
/// and only a processed message advances the state.
pub fn receive_message(
    state: &mut SessionState,
    stego: &Raster,
    params: &StegoParams,
    mode: CipherMode,
) -> ReceiverVerdict {
    if state.phase != Phase::Authenticated {
        return ReceiverVerdict::RejectSession;
    }
    let key = state.current_key;

    let header_bits = match stego::extract(stego, key, HEADER_BITS, params) {
        Ok(bits) => bits,
        Err(_) => return ReceiverVerdict::DecodeFailure,
    };
    let header_bytes: [u8; HEADER_BYTES] = stego::bits_to_bytes(&header_bits)
        .try_into()
        .expect("112 bits pack to 14 bytes");
    let header = FrameHeader::from_bytes(&header_bytes);

    if header.session_id != state.session_id {
        return ReceiverVerdict::RejectSession;
    }
    if header.request_id != derive_request_id(key) {
        return ReceiverVerdict::RejectRequest;
    }

    let frame_bits = FRAME_OVERHEAD_BITS + 8 * usize::from(header.payload_len);
    let all_bits = match stego::extract(stego, key, frame_bits, params) {
        Ok(bits) => bits,
        Err(_) => return ReceiverVerdict::DecodeFailure,
    };
    let frame = match Frame::parse(&stego::bits_to_bytes(&all_bits)) {
        Ok(frame) => frame,
        Err(_) => return ReceiverVerdict::DecodeFailure,
    };
    if !frame.verify() {
        return ReceiverVerdict::Retransmit;
    }

    let plaintext = decrypt(&frame.ciphertext, key, mode);
    state.current_key = frame.header.next_key;
    state.message_index += 1;
    ReceiverVerdict::Processed { plaintext }
}
