//! Payload encryption and integrity checking.
//!
//! Two cipher modes share one contract: `decrypt(encrypt(p, k), k) == p`.
//! Inversion is the trivial bitwise complement; keyed-stream XORs the
//! payload with the ENC-domain keystream so the same transaction key that
//! places the bits also scrambles them. Integrity is a 32-bit CRC
//! (reflected polynomial 0xEDB88320, init and final XOR 0xFFFFFFFF).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::formula::{domain, expand_key, TransactionKey};

/// Payload cipher selection; must be identical at both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CipherMode {
    /// Every byte is replaced with its bitwise complement.
    Inversion,
    /// XOR with the ENC-domain keystream, words consumed least-significant
    /// byte first.
    #[default]
    KeyedStream,
}

impl fmt::Display for CipherMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CipherMode::Inversion => "inversion",
            CipherMode::KeyedStream => "stream",
        })
    }
}

impl FromStr for CipherMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inversion" => Ok(CipherMode::Inversion),
            "stream" => Ok(CipherMode::KeyedStream),
            other => Err(Error::Parameter(format!(
                "cipher mode must be 'inversion' or 'stream', got {other:?}"
            ))),
        }
    }
}

fn xor_keystream(data: &[u8], key: TransactionKey) -> Vec<u8> {
    let mut stream = expand_key(key, domain::ENC);
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(8) {
        let pad = stream.next_word().to_le_bytes();
        out.extend(chunk.iter().zip(pad.iter()).map(|(&b, &p)| b ^ p));
    }
    out
}

/// Encrypts a payload. Output length always equals input length.
pub fn encrypt(plain: &[u8], key: TransactionKey, mode: CipherMode) -> Vec<u8> {
    match mode {
        CipherMode::Inversion => plain.iter().map(|b| !b).collect(),
        CipherMode::KeyedStream => xor_keystream(plain, key),
    }
}

/// Exact inverse of [`encrypt`] under the same key and mode. Both modes are
/// involutions, so this applies the same transform again.
pub fn decrypt(cipher: &[u8], key: TransactionKey, mode: CipherMode) -> Vec<u8> {
    encrypt(cipher, key, mode)
}

/// 32-bit cyclic redundancy check over the input bytes.
pub fn checksum(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}
