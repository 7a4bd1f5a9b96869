//! End-to-end learned communication systems.
//!
//! A transmitter network maps each of `M` messages to a point in `m` real
//! dimensions, a stochastic channel corrupts it, and a receiver network
//! reconstructs the message. Training maximizes an evidence lower bound: a
//! reconstruction likelihood penalized by the KL divergence between the
//! channel-induced distribution of the received point and a fixed prior.
//! The KL term acts as a soft transmit-power constraint, so the encoder has
//! no normalization layer.
//!
//! Modules:
//! - [`nn`]: dense networks, backpropagation and Adam.
//! - [`channels`]: AWGN, Rayleigh block fading (with pilot equalization),
//!   Laplace and Cauchy noise.
//! - [`objectives`]: reconstruction losses, closed-form KL terms and their
//!   gradients.
//! - [`systems`]: encoder/channel/decoder assembly, training and checkpoints.
//! - [`baselines`]: Gray-labeled QAM, constellation files and minimum-distance
//!   detection.
//! - [`eval`]: Monte Carlo BLER/BER, packing density, Gray statistics and
//!   mutual-information bounds.
//! - [`config`]: the flat key-value configuration format.

pub mod baselines;
pub mod channels;
pub mod config;
pub mod error;
pub mod eval;
pub mod nn;
pub mod objectives;
pub mod systems;

pub use error::{Error, Result};
pub use systems::{Constellation, SystemConfig, TrainedSystem};

/// Deterministic RNG used everywhere a seed is accepted.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a path of indices.
///
/// Used to give every work chunk its own stream so Monte Carlo results do not
/// depend on how chunks are scheduled across threads.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    // splitmix64 finalizer over the folded path
    let mut x = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in path {
        x = x.wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}
