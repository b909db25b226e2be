//! Addressable random streams.
//!
//! A [`RandomStream`] is a root seed plus a path of substream identifiers
//! (e.g. `job / instance / round`). The path is folded into a ChaCha key, so
//! any record can be regenerated from its address alone without replaying the
//! streams that precede it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    seed: u64,
    path: Vec<u64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            seed,
            path: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream addressed by `id`. Distinct ids give independent streams.
    pub fn substream(&self, id: u64) -> Self {
        let mut path = self.path.clone();
        path.push(id);
        RandomStream {
            seed: self.seed,
            path,
        }
    }

    /// Human-readable address, e.g. `42/3/17`.
    pub fn address(&self) -> String {
        let mut s = self.seed.to_string();
        for p in &self.path {
            s.push('/');
            s.push_str(&p.to_string());
        }
        s
    }

    fn key(&self) -> [u8; 32] {
        let mut words = [
            splitmix64(self.seed),
            splitmix64(self.seed ^ 0xA5A5_A5A5_A5A5_A5A5),
            splitmix64(self.seed.rotate_left(17)),
            splitmix64(self.path.len() as u64),
        ];
        for (depth, &id) in self.path.iter().enumerate() {
            for (lane, w) in words.iter_mut().enumerate() {
                *w = splitmix64(*w ^ splitmix64(id.wrapping_add((depth as u64) << 8 | lane as u64)));
            }
        }
        let mut key = [0u8; 32];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        key
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}
