//! Bit-level embedding and extraction.
//!
//! A frame travels as individual bits written into keyed slot positions of
//! the raster. For every data bit an additional decoy slot gets one low bit
//! flipped, so a cover/stego diff shows twice as many touched bytes as
//! there are data bits, none of them sequential.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::formula::{bit_positions, pixel_sequence, EmbeddingPlan, TransactionKey};
use crate::raster::Raster;

/// Fraction of raster slots eligible for embedding, kept rational so the
/// capacity arithmetic is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UsageFraction {
    num: u32,
    den: u32,
}

impl UsageFraction {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::Parameter(format!(
                "usage fraction must be in (0, 1], got {num}/{den}"
            )));
        }
        Ok(Self { num, den })
    }

    /// Slots eligible under this fraction: `floor(total * num / den)`.
    pub fn used_slots(&self, total_slots: usize) -> usize {
        (total_slots as u128 * u128::from(self.num) / u128::from(self.den)) as usize
    }
}

impl Default for UsageFraction {
    fn default() -> Self {
        Self { num: 1, den: 100 }
    }
}

impl fmt::Display for UsageFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for UsageFraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (num, den) = s
            .split_once('/')
            .ok_or_else(|| Error::Parameter(format!("usage fraction must look like 1/100, got {s:?}")))?;
        let parse = |part: &str| {
            part.parse::<u32>()
                .map_err(|e| Error::Parameter(format!("bad usage fraction {s:?}: {e}")))
        };
        Self::new(parse(num)?, parse(den)?)
    }
}

pub const DEFAULT_BIT_PLANES: u8 = 3;

/// Embedding parameters shared by sender and receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StegoParams {
    pub usage: UsageFraction,
    pub bit_planes: u8,
}

impl Default for StegoParams {
    fn default() -> Self {
        Self {
            usage: UsageFraction::default(),
            bit_planes: DEFAULT_BIT_PLANES,
        }
    }
}

impl StegoParams {
    pub fn used_slots(&self, total_slots: usize) -> usize {
        self.usage.used_slots(total_slots)
    }
}

/// Characters storable in `used_slots` one-bit slots after the header:
/// `floor((used_slots - header_bits) / 8)`.
pub fn capacity_chars(used_slots: usize, header_bits: usize) -> Result<usize> {
    if used_slots < header_bits {
        return Err(Error::Capacity {
            needed: header_bits,
            available: used_slots,
        });
    }
    Ok((used_slots - header_bits) / 8)
}

/// Unpacks bytes into bits, most significant bit of each byte first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for &byte in bytes {
        for shift in (0..8).rev() {
            bits.push((byte >> shift) & 1);
        }
    }
    bits
}

/// Packs bits (MSB first) back into bytes, zero-padding a trailing partial
/// byte.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(bits.len().div_ceil(8));
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &bit) in chunk.iter().enumerate() {
            byte |= (bit & 1) << (7 - i);
        }
        bytes.push(byte);
    }
    bytes
}

/// Writes `frame_bits` into a copy of `cover` at keyed slot positions and
/// applies one decoy flip per data bit. The cover is never mutated.
pub fn embed(
    cover: &Raster,
    key: TransactionKey,
    frame_bits: &[u8],
    params: &StegoParams,
) -> Result<Raster> {
    if frame_bits.is_empty() {
        return Ok(cover.clone());
    }
    let total = cover.total_slots();
    let budget = params.used_slots(total);
    if frame_bits.len() > budget {
        return Err(Error::Capacity {
            needed: frame_bits.len(),
            available: budget,
        });
    }
    let plan = EmbeddingPlan::derive(key, total, frame_bits.len(), params.bit_planes)?;

    let mut bytes = cover.bytes().to_vec();
    for ((&slot, &pos), &bit) in plan
        .data_slots()
        .iter()
        .zip(plan.bit_positions())
        .zip(frame_bits)
    {
        let mask = 1u8 << pos;
        if bit & 1 == 1 {
            bytes[slot] |= mask;
        } else {
            bytes[slot] &= !mask;
        }
    }
    for (&slot, &pos) in plan.decoy_slots().iter().zip(plan.decoy_bits()) {
        bytes[slot] ^= 1 << pos;
    }
    Raster::new(cover.width(), cover.height(), cover.channels(), bytes)
}

/// Reads `frame_bit_count` bits back from the keyed slot positions. Decoy
/// slots are never consulted; the data-slot walk is prefix-stable, so a
/// header can be read before the full frame length is known.
pub fn extract(
    stego: &Raster,
    key: TransactionKey,
    frame_bit_count: usize,
    params: &StegoParams,
) -> Result<Vec<u8>> {
    let total = stego.total_slots();
    let budget = params.used_slots(total);
    if frame_bit_count > budget {
        return Err(Error::Capacity {
            needed: frame_bit_count,
            available: budget,
        });
    }
    let slots = pixel_sequence(key, total, frame_bit_count)?;
    let positions = bit_positions(key, &slots, params.bit_planes)?;
    Ok(slots
        .iter()
        .zip(&positions)
        .map(|(&slot, &pos)| (stego.bytes()[slot] >> pos) & 1)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::KeystreamState;
    use proptest::prelude::*;

    fn noise_raster(width: u32, height: u32, channels: u8, seed: u64) -> Raster {
        let len = (width * height * u32::from(channels)) as usize;
        let mut stream = KeystreamState::from_seed(seed);
        let bytes = (0..len).map(|_| stream.next_word() as u8).collect();
        Raster::new(width, height, channels, bytes).unwrap()
    }

    fn loose_params() -> StegoParams {
        StegoParams {
            usage: UsageFraction::new(1, 4).unwrap(),
            bit_planes: 3,
        }
    }

    #[test]
    fn capacity_matches_worked_examples() {
        assert_eq!(capacity_chars(1000, 100).unwrap(), 112);
        assert_eq!(capacity_chars(900, 100).unwrap(), 100);
        assert_eq!(capacity_chars(100, 100).unwrap(), 0);
        assert!(capacity_chars(99, 100).is_err());
    }

    #[test]
    fn empty_frame_leaves_cover_untouched() {
        let cover = noise_raster(16, 16, 3, 1);
        let out = embed(&cover, TransactionKey::new(5), &[], &loose_params()).unwrap();
        assert_eq!(out, cover);
    }

    #[test]
    fn embed_extract_roundtrip() {
        let cover = noise_raster(32, 32, 3, 2);
        let bits = bytes_to_bits(b"hidden in plain sight");
        let key = TransactionKey::new(0xABCD);
        let stego = embed(&cover, key, &bits, &loose_params()).unwrap();
        let back = extract(&stego, key, bits.len(), &loose_params()).unwrap();
        assert_eq!(back, bits);
    }

    #[test]
    fn wrong_key_extracts_garbage() {
        let cover = noise_raster(32, 32, 3, 3);
        let bits = bytes_to_bits(b"confidential payload here");
        let stego = embed(&cover, TransactionKey::new(100), &bits, &loose_params()).unwrap();
        let wrong = extract(&stego, TransactionKey::new(101), bits.len(), &loose_params()).unwrap();
        assert_ne!(wrong, bits);
    }

    #[test]
    fn wrong_key_mismatch_rate_over_random_pairs() {
        // Empirical run: for 100 random key pairs and frames of at least
        // 64 bits, extraction under the wrong key must mismatch in at
        // least 99 of them.
        let mut stream = KeystreamState::from_seed(0x9A1B);
        let mut mismatches = 0;
        for trial in 0..100 {
            let cover = noise_raster(24, 24, 3, stream.next_word());
            let key = TransactionKey::new(stream.next_word() as u32);
            let mut other = TransactionKey::new(stream.next_word() as u32);
            if other == key {
                other = TransactionKey::new(other.value().wrapping_add(1));
            }
            let payload: Vec<u8> = (0..16).map(|_| stream.next_word() as u8).collect();
            let bits = bytes_to_bits(&payload);
            let stego = embed(&cover, key, &bits, &loose_params()).unwrap();
            let read = extract(&stego, other, bits.len(), &loose_params()).unwrap();
            if read != bits {
                mismatches += 1;
            } else {
                eprintln!("trial {trial}: wrong key reproduced the frame");
            }
        }
        assert!(mismatches >= 99, "only {mismatches}/100 mismatched");
    }

    #[test]
    fn changed_bytes_between_data_and_twice_data() {
        let cover = noise_raster(48, 48, 3, 4);
        let bits = bytes_to_bits(b"0123456789abcdef0123456789abcdef");
        let stego = embed(&cover, TransactionKey::new(7), &bits, &loose_params()).unwrap();
        let changed = cover
            .bytes()
            .iter()
            .zip(stego.bytes())
            .filter(|(a, b)| a != b)
            .count();
        assert!(changed >= bits.len(), "{changed} < {}", bits.len());
        assert!(changed <= 2 * bits.len(), "{changed} > {}", 2 * bits.len());
    }

    #[test]
    fn only_planned_slots_and_low_planes_change() {
        let cover = noise_raster(40, 40, 3, 5);
        let bits = bytes_to_bits(b"slot discipline");
        let key = TransactionKey::new(31);
        let params = loose_params();
        let stego = embed(&cover, key, &bits, &params).unwrap();
        let plan =
            EmbeddingPlan::derive(key, cover.total_slots(), bits.len(), params.bit_planes).unwrap();
        let mut touchable = vec![false; cover.total_slots()];
        for &s in plan.data_slots().iter().chain(plan.decoy_slots()) {
            touchable[s] = true;
        }
        for (i, (&a, &b)) in cover.bytes().iter().zip(stego.bytes()).enumerate() {
            if a != b {
                assert!(touchable[i], "byte {i} outside the plan changed");
                assert!(a ^ b < 1 << params.bit_planes, "high bit changed at {i}");
            }
        }
    }

    #[test]
    fn data_slots_are_not_an_arithmetic_progression() {
        let cover = noise_raster(64, 64, 3, 6);
        for key in [1u32, 2, 3, 500, 0xFFFF_FFFF] {
            let plan = EmbeddingPlan::derive(TransactionKey::new(key), cover.total_slots(), 64, 3)
                .unwrap();
            let slots = plan.data_slots();
            let step = slots[1] as i64 - slots[0] as i64;
            let arithmetic = slots
                .windows(2)
                .all(|w| w[1] as i64 - w[0] as i64 == step);
            assert!(!arithmetic, "key {key} produced sequential slots");
        }
    }

    #[test]
    fn embed_rejects_frames_over_budget() {
        let cover = noise_raster(10, 10, 1, 7);
        let params = StegoParams::default(); // 1/100 of 100 slots -> 1 slot
        let bits = vec![1u8; 2];
        let err = embed(&cover, TransactionKey::new(1), &bits, &params).unwrap_err();
        assert!(matches!(err, Error::Capacity { needed: 2, available: 1 }));
    }

    #[test]
    fn extract_rejects_over_budget_counts() {
        let stego = noise_raster(10, 10, 1, 8);
        assert!(extract(&stego, TransactionKey::new(1), 26, &loose_params()).is_err());
    }

    #[test]
    fn usage_parsing() {
        let frac: UsageFraction = "1/100".parse().unwrap();
        assert_eq!(frac.used_slots(10_000), 100);
        assert_eq!("1/1".parse::<UsageFraction>().unwrap().used_slots(7), 7);
        assert!("0/5".parse::<UsageFraction>().is_err());
        assert!("3/2".parse::<UsageFraction>().is_err());
        assert!("1".parse::<UsageFraction>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn roundtrip_over_random_inputs(
            seed in any::<u64>(),
            key in any::<u32>(),
            side in 24u32..48,
            payload_len in 0usize..32,
            planes in 1u8..=8,
        ) {
            let cover = noise_raster(side, side, 3, seed);
            let params = StegoParams {
                usage: UsageFraction::new(1, 4).unwrap(),
                bit_planes: planes,
            };
            let mut stream = KeystreamState::from_seed(seed ^ 0xF00D);
            let payload: Vec<u8> = (0..payload_len).map(|_| stream.next_word() as u8).collect();
            let bits = bytes_to_bits(&payload);
            let key = TransactionKey::new(key);
            let stego = embed(&cover, key, &bits, &params).unwrap();
            prop_assert_eq!(extract(&stego, key, bits.len(), &params).unwrap(), bits);
        }

        #[test]
        fn bits_bytes_roundtrip(data in proptest::collection::vec(any::<u8>(), 0..64)) {
            let bits = bytes_to_bits(&data);
            prop_assert_eq!(bits.len(), data.len() * 8);
            prop_assert_eq!(bits_to_bytes(&bits), data);
        }
    }
}
