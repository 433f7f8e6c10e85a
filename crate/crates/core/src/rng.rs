//! Round-keyed random streams.
//!
//! Every random quantity in a session is drawn from a stream identified by
//! `(seed, domain, round)`, so round `t` can be regenerated without replaying
//! earlier rounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    AuctionRound = 1,
    NewsvendorDemand = 2,
    OracleSamples = 3,
    Profiles = 4,
    SyntheticHumans = 5,
    Bootstrap = 6,
    Environment = 7,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"econaudt");
    ChaCha8Rng::from_seed(key)
}

/// SplitMix64 finalizer, used to derive child seeds from a parent seed.
pub fn derive_seed(parent: u64, salt: u64) -> u64 {
    let mut z = parent ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
