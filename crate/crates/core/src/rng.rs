//! Deterministic per-entity random streams.
//!
//! Every consumer of randomness (a room, a structure, a CV trial, a restart)
//! gets its own ChaCha stream keyed by the run seed plus a path of labels, so
//! results never depend on the order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(u64);

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(splitmix64(seed))
    }

    fn absorb(self, tag: u8, bytes: &[u8]) -> Self {
        let mut h = FNV_OFFSET ^ self.0;
        h ^= u64::from(tag);
        h = h.wrapping_mul(FNV_PRIME);
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // length terminator keeps ("ab","c") and ("a","bc") apart
        h ^= bytes.len() as u64;
        StreamKey(splitmix64(h))
    }

    pub fn with_str(self, label: &str) -> Self {
        self.absorb(1, label.as_bytes())
    }

    pub fn with_u64(self, value: u64) -> Self {
        self.absorb(2, &value.to_le_bytes())
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
