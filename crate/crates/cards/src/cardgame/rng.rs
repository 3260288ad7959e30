//! The shuffle generator. Every implementation must agree bit for bit:
//!
//! ```text
//! splitmix64(z):
//!     z += 0x9E3779B97F4A7C15
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!     return z ^ (z >> 31)
//!
//! state = splitmix64(seed), or 0x9E3779B97F4A7C15 if that is 0
//! next():                      (xorshift64*)
//!     x = state
//!     x ^= x >> 12; x ^= x << 25; x ^= x >> 27
//!     state = x
//!     return x * 0x2545F4914F6CDD1D
//! below(n) = (next() * n) >> 64     (128-bit product)
//!
//! shuffle(cards): for i from len-1 down to 1: swap(i, below(i + 1))
//! ```
//!
//! All arithmetic wraps modulo 2^64.

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeckRng {
    state: u64,
}

impl DeckRng {
    pub fn new(seed: u64) -> Self {
        let s = splitmix64(seed);
        DeckRng {
            state: if s == 0 { GOLDEN_GAMMA } else { s },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform-ish value in `0..n` by multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
