//! Deterministic random streams.
//!
//! Every stochastic step draws from a stream identified by
//! `(seed, domain, index)`. Two computations with the same identifier see
//! the same variates no matter which thread runs them or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Independent purposes that must never share variates for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Estimation = 1,
    Diagnostic = 2,
    DiagnosticPoint = 3,
    Simulation = 4,
    Figures = 5,
    FullSample = 6,
}

const INDEX_BITS: u32 = 48;

#[derive(Debug, Clone)]
pub struct RandomStream {
    inner: ChaCha12Rng,
}

impl RandomStream {
    /// A stream determined by `seed` alone.
    pub fn new(seed: u64) -> Self {
        RandomStream {
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Substream `index` of `domain` under `seed`.
    pub fn substream(seed: u64, domain: Domain, index: u64) -> Self {
        assert!(index < (1 << INDEX_BITS), "substream index {index} too large");
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(((domain as u64) << INDEX_BITS) | index);
        RandomStream { inner }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
