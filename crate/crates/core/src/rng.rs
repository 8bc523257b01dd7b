//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit master seed and a stream name, with the ChaCha stream id set to an
//! index (usually the sample index). Sample `i` therefore sees the same
//! numbers regardless of block size or thread count.
//!
//! Named streams in use: `"plant"`, `"sample"`, `"features"`, `"folds"`,
//! `"bandwidth"`, `"leap-mc"`, `"chisq"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// A master seed expanded into named, indexed streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Streams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    fn key(&self, name: &str) -> [u8; 32] {
        let mut state = self.master ^ fnv1a(name).rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    /// Generator for stream `name`, sub-stream `index`.
    pub fn rng(&self, name: &str, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key(name));
        rng.set_stream(index);
        rng
    }

    /// A derived master seed, for handing a whole sub-computation its own streams.
    pub fn child(&self, name: &str) -> Streams {
        let mut state = self.master ^ fnv1a(name);
        Streams::new(splitmix64(&mut state))
    }
}
