//! Keyed derivation engine.
//!
//! A single 32-bit transaction key drives every derivation in the stack:
//! slot selection, per-slot bit selection, session and request identifiers,
//! key chaining, the payload keystream, and decoy placement. Each role gets
//! its own 64-bit domain constant so the streams never collide, and each
//! stream is a splitmix64 counter walk, fixed bit-for-bit so independent
//! implementations agree.

use std::fmt;

use crate::error::{Error, Result};

/// Domain-separation constants, one per derivation role.
pub mod domain {
    pub const PIXEL: u64 = 0x5049584C53455100;
    pub const BIT: u64 = 0x4249545345510000;
    pub const SESS: u64 = 0x5345535349440000;
    pub const REQ: u64 = 0x5245514944000000;
    pub const ENC: u64 = 0x454E435259505400;
    pub const KEYGEN: u64 = 0x4B455947454E0000;
    pub const DECOY: u64 = 0x4445434F59000000;

    /// All constants with their names, for golden-vector generation.
    pub const ALL: [(&str, u64); 7] = [
        ("PIXEL", PIXEL),
        ("BIT", BIT),
        ("SESS", SESS),
        ("REQ", REQ),
        ("ENC", ENC),
        ("KEYGEN", KEYGEN),
        ("DECOY", DECOY),
    ];
}

const GOLDEN_GAMMA: u64 = 0x9E3779B97F4A7C15;

/// Per-transaction key. Any 32-bit value is valid, including zero; equal
/// keys always yield bit-identical derived sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransactionKey(u32);

impl TransactionKey {
    pub const fn new(value: u32) -> Self {
        Self(value)
    }

    pub const fn value(self) -> u32 {
        self.0
    }

    /// Parses a key from exactly eight hex digits.
    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() != 8 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Parameter(format!(
                "key must be exactly 8 hex digits, got {s:?}"
            )));
        }
        let value = u32::from_str_radix(s, 16)
            .map_err(|e| Error::Parameter(format!("bad key {s:?}: {e}")))?;
        Ok(Self(value))
    }
}

impl fmt::Display for TransactionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08X}", self.0)
    }
}

impl From<u32> for TransactionKey {
    fn from(value: u32) -> Self {
        Self(value)
    }
}

impl std::str::FromStr for TransactionKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s)
    }
}

/// Counter-mixed 64-bit keystream. Advancing is pure: the same state always
/// yields the same next word and next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeystreamState {
    state: u64,
    domain: u64,
}

impl KeystreamState {
    /// Raw stream over an arbitrary 64-bit seed, with no key or domain
    /// separation. Used for synthetic data (simulator covers, seeded
    /// entropy), never for protocol derivations.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            state: seed,
            domain: 0,
        }
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    /// Advances the counter and returns the next keystream word.
    pub fn next_word(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
}

/// Single avalanche pass: the output word of one stream step started at `x`.
pub fn mix64(x: u64) -> u64 {
    KeystreamState {
        state: x,
        domain: 0,
    }
    .next_word()
}

/// Seeds a keystream from a key under a domain constant.
pub fn expand_key(key: TransactionKey, domain: u64) -> KeystreamState {
    KeystreamState {
        state: mix64(u64::from(key.value()) ^ domain),
        domain,
    }
}

/// Draws `needed` pairwise-distinct slot indices in `[0, total_slots)` by
/// rejection sampling against `used`. Slots already marked in `used` are
/// never returned; accepted slots are marked. Callers must leave at least
/// `needed` unmarked slots or the walk cannot terminate.
fn sample_distinct(
    stream: &mut KeystreamState,
    total_slots: usize,
    needed: usize,
    used: &mut [bool],
) -> Vec<usize> {
    let mut out = Vec::with_capacity(needed);
    while out.len() < needed {
        let candidate = (stream.next_word() % total_slots as u64) as usize;
        if !used[candidate] {
            used[candidate] = true;
            out.push(candidate);
        }
    }
    out
}

/// The first formula: the keyed series of slot indices that will carry data.
///
/// Returns `needed` pairwise-distinct indices in `[0, total_slots)`,
/// deterministic in `(key, total_slots, needed)` and prefix-stable: asking
/// for more slots never changes the ones already produced.
pub fn pixel_sequence(
    key: TransactionKey,
    total_slots: usize,
    needed: usize,
) -> Result<Vec<usize>> {
    if needed > total_slots {
        return Err(Error::Capacity {
            needed,
            available: total_slots,
        });
    }
    if needed == 0 {
        return Ok(Vec::new());
    }
    let mut stream = expand_key(key, domain::PIXEL);
    let mut used = vec![false; total_slots];
    Ok(sample_distinct(&mut stream, total_slots, needed, &mut used))
}

/// The second formula: one bit position per data slot.
///
/// Position `i` is `(slot_i XOR w_i) mod bit_planes` where `w_i` is the
/// i-th word of the BIT-domain keystream, so the second formula consumes
/// the first formula's output.
pub fn bit_positions(
    key: TransactionKey,
    data_slots: &[usize],
    bit_planes: u8,
) -> Result<Vec<u8>> {
    check_bit_planes(bit_planes)?;
    let mut stream = expand_key(key, domain::BIT);
    Ok(data_slots
        .iter()
        .map(|&slot| ((slot as u64 ^ stream.next_word()) % u64::from(bit_planes)) as u8)
        .collect())
}

fn check_bit_planes(bit_planes: u8) -> Result<()> {
    if !(1..=8).contains(&bit_planes) {
        return Err(Error::Parameter(format!(
            "bit_planes must be in 1..=8, got {bit_planes}"
        )));
    }
    Ok(())
}

/// Session identifier derived from a key (the default key pre-auth, the
/// authenticated key afterwards).
pub fn derive_session_id(key: TransactionKey) -> u32 {
    expand_key(key, domain::SESS).next_word() as u32
}

/// Request identifier for the next message, derived from the key of the
/// previous transaction. Consecutive ids are not at equal intervals.
pub fn derive_request_id(previous_key: TransactionKey) -> u32 {
    expand_key(previous_key, domain::REQ).next_word() as u32
}

/// How the next transaction key is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyMode {
    /// Chain deterministically from the current key. Makes full protocol
    /// runs reproducible.
    Deterministic,
    /// Use caller-supplied entropy verbatim.
    Random,
}

/// Decides the key for the next transaction.
pub fn derive_next_key(
    current_key: TransactionKey,
    mode: KeyMode,
    entropy: Option<u32>,
) -> Result<TransactionKey> {
    match mode {
        KeyMode::Deterministic => Ok(TransactionKey::new(
            expand_key(current_key, domain::KEYGEN).next_word() as u32,
        )),
        KeyMode::Random => entropy.map(TransactionKey::new).ok_or_else(|| {
            Error::Parameter("random key mode requires caller-supplied entropy".into())
        }),
    }
}

/// Complete keyed plan for one embedding: which slots carry data, which bit
/// of each slot, and which extra slots get a decoy flip.
///
/// Data and decoy slots are pairwise distinct, decoy count equals data
/// count, and every index is below the raster's slot count.
#[derive(Debug, Clone)]
pub struct EmbeddingPlan {
    data_slots: Vec<usize>,
    bit_positions: Vec<u8>,
    decoy_slots: Vec<usize>,
    decoy_bits: Vec<u8>,
    bit_planes: u8,
}

impl EmbeddingPlan {
    /// Derives the plan for `data_bits` payload bits over `total_slots`.
    ///
    /// Data slots come from the PIXEL stream, bit positions from the BIT
    /// stream. Decoys continue rejection sampling under the DECOY stream,
    /// excluding every slot already taken; after each accepted decoy slot
    /// one further DECOY word picks the bit position to flip.
    pub fn derive(
        key: TransactionKey,
        total_slots: usize,
        data_bits: usize,
        bit_planes: u8,
    ) -> Result<Self> {
        check_bit_planes(bit_planes)?;
        let needed = data_bits.checked_mul(2).ok_or(Error::Capacity {
            needed: usize::MAX,
            available: total_slots,
        })?;
        if needed > total_slots {
            return Err(Error::Capacity {
                needed,
                available: total_slots,
            });
        }

        let mut used = vec![false; total_slots];
        let mut pixel_stream = expand_key(key, domain::PIXEL);
        let data_slots = sample_distinct(&mut pixel_stream, total_slots, data_bits, &mut used);
        let positions = bit_positions(key, &data_slots, bit_planes)?;

        let mut decoy_stream = expand_key(key, domain::DECOY);
        let mut decoy_slots = Vec::with_capacity(data_bits);
        let mut decoy_bits = Vec::with_capacity(data_bits);
        while decoy_slots.len() < data_bits {
            let candidate = (decoy_stream.next_word() % total_slots as u64) as usize;
            if used[candidate] {
                continue;
            }
            used[candidate] = true;
            decoy_slots.push(candidate);
            decoy_bits.push((decoy_stream.next_word() % u64::from(bit_planes)) as u8);
        }

        Ok(Self {
            data_slots,
            bit_positions: positions,
            decoy_slots,
            decoy_bits,
            bit_planes,
        })
    }

    pub fn data_slots(&self) -> &[usize] {
        &self.data_slots
    }

    pub fn bit_positions(&self) -> &[u8] {
        &self.bit_positions
    }

    pub fn decoy_slots(&self) -> &[usize] {
        &self.decoy_slots
    }

    /// Bit position flipped in each decoy slot, parallel to `decoy_slots`.
    pub fn decoy_bits(&self) -> &[u8] {
        &self.decoy_bits
    }

    pub fn bit_planes(&self) -> u8 {
        self.bit_planes
    }
}
