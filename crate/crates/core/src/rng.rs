//! Deterministic pseudo-randomness.
//!
//! Every run derives all randomness from one master seed. Each consumer
//! (a vehicle's driver model, a node's protocol logic, the penetration
//! sampler, ...) gets its own stream keyed by a domain tag and an id, so
//! adding or removing one consumer never perturbs the draws of another.
//! The generator is xoshiro256** seeded through splitmix64, implemented
//! here so output is bit-identical across platforms and toolchains.

/// Domain tags keeping unrelated streams independent under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Mobility(u64),
    Penetration,
    Protocol(u64),
    Hdc(u64),
    UnitGen,
    Fixture(u64),
}

impl StreamId {
    fn tag(self) -> (u64, u64) {
        match self {
            StreamId::Mobility(id) => (1, id),
            StreamId::Penetration => (2, 0),
            StreamId::Protocol(id) => (3, id),
            StreamId::Hdc(id) => (4, id),
            StreamId::UnitGen => (5, 0),
            StreamId::Fixture(id) => (6, id),
        }
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// xoshiro256** stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    s: [u64; 4],
}

impl RngStream {
    /// Derive an independent stream from the master seed.
    pub fn derive(master_seed: u64, id: StreamId) -> Self {
        let (domain, sub) = id.tag();
        let mut sm = master_seed ^ domain.wrapping_mul(0xd6e8feb86659fd93) ^ sub.rotate_left(17);
        let mut s = [0u64; 4];
        for w in s.iter_mut() {
            *w = splitmix64(&mut sm);
        }
        // All-zero state is invalid for xoshiro.
        if s == [0, 0, 0, 0] {
            s[0] = 1;
        }
        RngStream { s }
    }

    /// Raw seeding, used by tests that pin reference vectors.
    pub fn from_raw_state(s: [u64; 4]) -> Self {
        RngStream { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in [0, n). n must be > 0.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
