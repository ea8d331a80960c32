//! Independent scalar reference for the keyed derivations and the
//! checksum. Written as plain loops against the published construction,
//! deliberately sharing no code with the library, so the two routes can
//! disagree if either drifts.

#![allow(dead_code)]

pub const REF_DOMAINS: [(&str, u64); 7] = [
    ("PIXEL", 0x5049584C53455100),
    ("BIT", 0x4249545345510000),
    ("SESS", 0x5345535349440000),
    ("REQ", 0x5245514944000000),
    ("ENC", 0x454E435259505400),
    ("KEYGEN", 0x4B455947454E0000),
    ("DECOY", 0x4445434F59000000),
];

pub fn ref_step(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58476D1CE4E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn ref_seed(key: u32, domain: u64) -> u64 {
    let mut x = u64::from(key) ^ domain;
    ref_step(&mut x)
}

pub fn ref_first_word(key: u32, domain: u64) -> u64 {
    let mut state = ref_seed(key, domain);
    ref_step(&mut state)
}

pub fn ref_words(key: u32, domain: u64, count: usize) -> Vec<u64> {
    let mut state = ref_seed(key, domain);
    (0..count).map(|_| ref_step(&mut state)).collect()
}

pub fn ref_pixel_walk(key: u32, total_slots: usize, needed: usize) -> Vec<usize> {
    let mut state = ref_seed(key, REF_DOMAINS[0].1);
    let mut taken = vec![false; total_slots];
    let mut out = Vec::new();
    while out.len() < needed {
        let candidate = (ref_step(&mut state) % total_slots as u64) as usize;
        if !taken[candidate] {
            taken[candidate] = true;
            out.push(candidate);
        }
    }
    out
}

pub fn ref_bit_positions(key: u32, slots: &[usize], planes: u8) -> Vec<u8> {
    let mut state = ref_seed(key, REF_DOMAINS[1].1);
    slots
        .iter()
        .map(|&s| ((s as u64 ^ ref_step(&mut state)) % u64::from(planes)) as u8)
        .collect()
}

pub fn ref_session_id(key: u32) -> u32 {
    ref_first_word(key, REF_DOMAINS[2].1) as u32
}

pub fn ref_request_id(key: u32) -> u32 {
    ref_first_word(key, REF_DOMAINS[3].1) as u32
}

pub fn ref_next_key(key: u32) -> u32 {
    ref_first_word(key, REF_DOMAINS[5].1) as u32
}

pub fn ref_enc_bytes(key: u32, count: usize) -> Vec<u8> {
    let mut state = ref_seed(key, REF_DOMAINS[4].1);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        out.extend_from_slice(&ref_step(&mut state).to_le_bytes());
    }
    out.truncate(count);
    out
}

/// Bitwise, table-free CRC-32: reflected polynomial 0xEDB88320, initial
/// value 0xFFFFFFFF, final XOR 0xFFFFFFFF.
pub fn ref_crc32(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &byte in data {
        crc ^= u32::from(byte);
        for _ in 0..8 {
            crc = if crc & 1 == 1 {
                (crc >> 1) ^ 0xEDB8_8320
            } else {
                crc >> 1
            };
        }
    }
    crc ^ 0xFFFF_FFFF
}

/// Reference frame assembly: big-endian header, stream-mode ciphertext,
/// trailing CRC over header plus ciphertext.
pub fn ref_frame(session: u32, request: u32, next_key: u32, key: u32, plaintext: &[u8]) -> Vec<u8> {
    let pad = ref_enc_bytes(key, plaintext.len());
    let ciphertext: Vec<u8> = plaintext.iter().zip(&pad).map(|(&p, &k)| p ^ k).collect();
    let mut out = Vec::new();
    out.extend_from_slice(&session.to_be_bytes());
    out.extend_from_slice(&request.to_be_bytes());
    out.extend_from_slice(&next_key.to_be_bytes());
    out.extend_from_slice(&(ciphertext.len() as u16).to_be_bytes());
    out.extend_from_slice(&ciphertext);
    let check = ref_crc32(&out);
    out.extend_from_slice(&check.to_be_bytes());
    out
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
