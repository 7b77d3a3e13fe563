//! Reproducible random streams.
//!
//! Every random draw in the engine comes from a stream keyed by
//! `(seed, domain, index)`. Streams are independent of evaluation order, so
//! calibration and prediction give the same answer on one thread or many.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Named stream domains. Keeping them in one place avoids two call sites
/// accidentally sharing randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Exogenous draws `Z_k` for calibration point `k`.
    Calib,
    /// Exogenous draws for test point `i`.
    Test,
    /// Second sample used to estimate the model radius at calibration point `k`.
    CalibTau,
    /// Second sample used at test point `i`.
    TestTau,
    Data,
    Split,
    Fit,
    Directions,
    Replication,
    Custom(u64),
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Calib => 0x6361_6c69_6200_0001,
            Domain::Test => 0x7465_7374_0000_0002,
            Domain::CalibTau => 0x6361_6c74_6175_0003,
            Domain::TestTau => 0x7465_7374_7461_0004,
            Domain::Data => 0x6461_7461_0000_0005,
            Domain::Split => 0x7370_6c69_7400_0006,
            Domain::Fit => 0x6669_7400_0000_0007,
            Domain::Directions => 0x6469_7273_0000_0008,
            Domain::Replication => 0x7265_706c_0000_0009,
            Domain::Custom(v) => splitmix64(v ^ 0x6375_7374_6f6d_000a),
        }
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit child seed from a parent seed, a domain and an index.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    let a = splitmix64(seed ^ domain.tag());
    splitmix64(a ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Opens the stream for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> Stream {
    let mut bytes = [0u8; 32];
    let mut s = derive_seed(seed, domain, index);
    for chunk in bytes.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    Stream::from_seed(bytes)
}
