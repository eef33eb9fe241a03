//! Counter-based random streams.
//!
//! Every random quantity of a path is drawn from a ChaCha8 keystream addressed
//! by `(master_seed, path_index, substream)`: the master seed is the key, the
//! path index is the stream nonce and the substream selects a disjoint window
//! of the block counter. Paths can therefore be generated in any order, on any
//! number of threads, and always see the same numbers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Words reserved for each substream (2^48 words of 32 bits).
const SUBSTREAM_WORDS: u128 = 1 << 48;

/// Address of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSeed {
    pub master: u64,
    pub path: u64,
}

impl PathSeed {
    pub fn new(master: u64, path: u64) -> Self {
        Self { master, path }
    }

    pub fn stream(&self, which: Substream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.path);
        rng.set_word_pos(which as u128 * SUBSTREAM_WORDS);
        rng
    }

    /// A derived seed for an independent family of paths (e.g. one rung of a
    /// ladder), keeping the path index.
    pub fn with_master(&self, master: u64) -> Self {
        Self { master, path: self.path }
    }
}

impl From<u64> for PathSeed {
    fn from(master: u64) -> Self {
        Self { master, path: 0 }
    }
}

/// Disjoint substreams of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Substream {
    /// Poisson event counts.
    Count = 0,
    /// Event times.
    Times = 1,
    /// Jump marks.
    Marks = 2,
    /// Soft-killing clock.
    Clock = 3,
    /// Initial conditions (random frames, ...).
    Init = 4,
    /// Exact increments used by experiment-specific samplers.
    Exact = 5,
    /// Anything else owned by a single caller.
    Aux = 6,
    /// Candidate events of state-dependent jumps.
    Thinning = 7,
}

/// Mixes a scenario-level tag into a master seed so that distinct arms of an
/// experiment never share keystreams.
pub fn derive_master(master: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on (0, 1], never zero.
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on (0, 1] together with an independent fair sign, from one draw.
#[inline]
pub fn open01_with_sign<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    let w = rng.next_u64();
    let u = ((w >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let s = if w & 1 == 0 { 1.0 } else { -1.0 };
    (u, s)
}

/// Poisson variate. Small means use inversion from a single uniform, so that
/// counts for nested horizons are coupled (common random numbers).
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        let u = open01(rng);
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p < f64::MIN_POSITIVE && cdf < u {
                // u is beyond the representable tail
                break;
            }
        }
        k
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    }
}

/// Uniformly distributed unit vector in R^dim written into `out`.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    match out.len() {
        0 => {}
        1 => out[0] = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 },
        2 => {
            let phi = std::f64::consts::TAU * open01(rng);
            let (s, c) = phi.sin_cos();
            out[0] = c;
            out[1] = s;
        }
        _ => loop {
            let mut norm2 = 0.0;
            for v in out.iter_mut() {
                *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
                norm2 += *v * *v;
            }
            if norm2 > 1e-300 {
                let inv = norm2.sqrt().recip();
                out.iter_mut().for_each(|v| *v *= inv);
                return;
            }
        },
    }
}
