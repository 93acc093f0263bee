//! Counter-based random numbers (Philox2x64-10).
//!
//! Every draw is a pure function of (key, stream, counter), so ensembles can
//! be evaluated in any order — or split across any number of threads — and
//! reproduce bit-identical results for a given master seed.

/// Philox 2x64 multiplier.
const M: u64 = 0xD2B7_4407_B1CE_6E93;
/// Weyl constant added to the key each round.
const W: u64 = 0x9E37_79B9_7F4A_7C15;
const ROUNDS: usize = 10;

/// One Philox2x64-10 block: two 64-bit output words from a 128-bit counter
/// and a 64-bit key.
pub fn philox2x64(counter: [u64; 2], key: u64) -> [u64; 2] {
    let [mut x0, mut x1] = counter;
    let mut k = key;
    for _ in 0..ROUNDS {
        let prod = (x0 as u128) * (M as u128);
        let hi = (prod >> 64) as u64;
        let lo = prod as u64;
        x0 = hi ^ k ^ x1;
        x1 = lo;
        k = k.wrapping_add(W);
    }
    [x0, x1]
}

/// Uniform f64 in [0, 1) from the top 53 bits of a word.
pub fn u64_to_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A stateful view over the Philox stream `(key, stream)`, drawing words in
/// counter order.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    stream: u64,
    counter: u64,
    buffer: [u64; 2],
    buffered: usize,
}

impl CounterRng {
    /// Stream starting at counter 0. `stream` separates independent users of
    /// the same key (e.g. one per trajectory).
    pub fn new(key: u64, stream: u64) -> Self {
        CounterRng {
            key,
            stream,
            counter: 0,
            buffer: [0; 2],
            buffered: 0,
        }
    }

    /// Stream positioned at a fixed step: draws start at counter `step << 32`,
    /// giving each step room for 2^32 blocks without overlap.
    pub fn at_step(key: u64, stream: u64, step: u64) -> Self {
        CounterRng {
            key,
            stream,
            counter: step << 32,
            buffer: [0; 2],
            buffered: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.buffered == 0 {
            self.buffer = philox2x64([self.counter, self.stream], self.key);
            self.counter += 1;
            self.buffered = 2;
        }
        self.buffered -= 1;
        self.buffer[1 - self.buffered]
    }

    pub fn next_f64(&mut self) -> f64 {
        u64_to_f64(self.next_u64())
    }

    /// Index into `weights` drawn proportionally to the weights, which must
    /// sum to something positive.
    pub fn sample_weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0);
        let mut u = self.next_f64() * total;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }
}
