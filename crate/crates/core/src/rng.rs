//! Deterministic keyed random streams.
//!
//! Every stochastic draw derives from a short key such as
//! `(run seed, tick, node, substep)`. Each key opens an independent stream,
//! so results are reproducible and do not depend on the order in which nodes
//! or ticks are processed.

use rand::RngCore;
use rand_distr::{Binomial, Distribution};

/// Substep labels used to separate streams within one (tick, node) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substep {
    React,
    DiffuseSusceptible,
    DiffuseInfected,
    ThetaDraw,
    Attachment,
}

impl Substep {
    fn tag(self) -> u64 {
        match self {
            Substep::React => 0x01,
            Substep::DiffuseSusceptible => 0x02,
            Substep::DiffuseInfected => 0x03,
            Substep::ThetaDraw => 0x04,
            Substep::Attachment => 0x05,
        }
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Absorb one key word into a hash state.
#[inline]
pub fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ word.wrapping_mul(0xA24B_AED4_963E_E407).wrapping_add(0x9E37_79B9_7F4A_7C15))
}

/// Deterministic stream RNG (splitmix64 sequence from a keyed state).
///
/// Not cryptographically secure; statistical quality is sufficient for
/// Monte Carlo use. A fresh stream should be opened per key rather than
/// reusing one stream across logically independent draws.
#[derive(Debug, Clone)]
pub struct KeyedRng {
    state: u64,
}

impl KeyedRng {
    pub fn from_state(state: u64) -> Self {
        Self { state }
    }

    /// Open the stream identified by `parts` under `seed`.
    pub fn from_key(seed: u64, parts: &[u64]) -> Self {
        let mut state = absorb(0x243F_6A88_85A3_08D3, seed);
        for &p in parts {
            state = absorb(state, p);
        }
        Self { state }
    }

    /// Stream for one simulation substep.
    pub fn substep(seed: u64, tick: u64, node: u64, substep: Substep) -> Self {
        Self::from_key(seed, &[tick, node, substep.tag()])
    }

    #[inline]
    pub fn next_raw(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_raw() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    pub fn next_standard_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in [0, bound) by rejection.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_raw();
            if v < zone {
                return v % bound;
            }
        }
    }
}

impl RngCore for KeyedRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_raw().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// Binomial draw with the trial probability clamped into [0, 1].
pub fn binomial_draw(rng: &mut KeyedRng, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials, p)
        .expect("probability checked above")
        .sample(rng)
}

/// Multinomial draw over `probs` (which may sum to less than one; the
/// remainder is the implicit final category). Returns one count per entry of
/// `probs`; the untallied remainder is `trials - sum(counts)`.
///
/// Sampled as a chain of conditional binomials, which reproduces the
/// multinomial distribution exactly.
pub fn multinomial_draw(rng: &mut KeyedRng, trials: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining_trials = trials;
    let mut remaining_mass = 1.0f64;
    for (slot, &p) in counts.iter_mut().zip(probs) {
        if remaining_trials == 0 {
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let cond = (p / remaining_mass).clamp(0.0, 1.0);
        let drawn = binomial_draw(rng, remaining_trials, cond);
        *slot = drawn;
        remaining_trials -= drawn;
        remaining_mass -= p;
        if remaining_mass <= 0.0 {
            remaining_mass = 0.0;
        }
    }
    counts
}
