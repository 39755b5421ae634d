//! Seed-replay oracle for the mock backend.
//!
//! Written against the documented derivation only: SHA-256 keyed seeds, a
//! ChaCha8 keystream (implemented here from the cipher definition) and the
//! 53-bit float conversion. It shares no code with the harness, so agreement
//! between the two is evidence that both follow the derivation.

use sha2::{Digest, Sha256};

pub const TEMPLATE_IDS: [&str; 10] = [
    "t1-normal",
    "t1-swapped",
    "t2-normal",
    "t2-swapped",
    "t3-normal",
    "t3-swapped",
    "t4-normal",
    "t4-swapped",
    "t5-normal",
    "t5-swapped",
];

pub fn trial_seed(master: u64, category: &str, phase: &str, template: &str, rep: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(b"bias-probe/seed/v1\0");
    h.update(master.to_le_bytes());
    for part in [category, phase, template] {
        h.update(part.as_bytes());
        h.update(b"\0");
    }
    h.update(rep.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn stream_key(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"bias-probe/stream/v1\0");
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

fn quarter(s: &mut [u32; 16], a: usize, b: usize, c: usize, d: usize) {
    s[a] = s[a].wrapping_add(s[b]);
    s[d] = (s[d] ^ s[a]).rotate_left(16);
    s[c] = s[c].wrapping_add(s[d]);
    s[b] = (s[b] ^ s[c]).rotate_left(12);
    s[a] = s[a].wrapping_add(s[b]);
    s[d] = (s[d] ^ s[a]).rotate_left(8);
    s[c] = s[c].wrapping_add(s[d]);
    s[b] = (s[b] ^ s[c]).rotate_left(7);
}

/// One ChaCha8 block: 64-bit block counter, zero stream id.
pub fn chacha8_block(key: &[u8; 32], counter: u64) -> [u32; 16] {
    let mut input = [0u32; 16];
    input[..4].copy_from_slice(&[0x6170_7865, 0x3320_646e, 0x7962_2d32, 0x6b20_6574]);
    for i in 0..8 {
        input[4 + i] = u32::from_le_bytes(key[4 * i..4 * i + 4].try_into().unwrap());
    }
    input[12] = counter as u32;
    input[13] = (counter >> 32) as u32;
    let mut s = input;
    for _ in 0..4 {
        quarter(&mut s, 0, 4, 8, 12);
        quarter(&mut s, 1, 5, 9, 13);
        quarter(&mut s, 2, 6, 10, 14);
        quarter(&mut s, 3, 7, 11, 15);
        quarter(&mut s, 0, 5, 10, 15);
        quarter(&mut s, 1, 6, 11, 12);
        quarter(&mut s, 2, 7, 8, 13);
        quarter(&mut s, 3, 4, 9, 14);
    }
    for i in 0..16 {
        s[i] = s[i].wrapping_add(input[i]);
    }
    s
}

/// First 64-bit output of the stream: words 0 (low) and 1 (high) of block 0.
pub fn first_u64(seed: u64, label: &str) -> u64 {
    let b = chacha8_block(&stream_key(seed, label), 0);
    (b[0] as u64) | ((b[1] as u64) << 32)
}

/// Uniform in [0, 1) from the top 53 bits.
pub fn first_unit(seed: u64, label: &str) -> f64 {
    (first_u64(seed, label) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stereotype count for one (category, phase) cell: the mock answers
/// stereotypically exactly when its first draw falls below `p`.
pub fn stereotype_count(master: u64, category: &str, phase: &str, reps: u32, p: f64) -> usize {
    let mut k = 0;
    for t in TEMPLATE_IDS {
        for rep in 0..reps {
            if first_unit(trial_seed(master, category, phase, t, rep), "mock") < p {
                k += 1;
            }
        }
    }
    k
}
