//! Stable seed derivation. Every random stream in the pipeline is a
//! ChaCha8 generator keyed by a hash of its coordinates, so results do not
//! depend on generation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(parts))
}

/// Domain tags keep streams for different purposes apart.
pub mod tag {
    pub const PHANTOM: u64 = 0x5048_414E; // "PHAN"
    pub const INSTANCE: u64 = 0x494E_5354; // "INST"
    pub const INPUT_PICK: u64 = 0x5049_434B; // "PICK"
    pub const INIT: u64 = 0x494E_4954; // "INIT"
    pub const EPOCH: u64 = 0x4550_4F43; // "EPOC"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_order_sensitive() {
        assert_eq!(derive_seed(&[1, 2, 3]), derive_seed(&[1, 2, 3]));
        assert_ne!(derive_seed(&[1, 2, 3]), derive_seed(&[1, 3, 2]));
        assert_ne!(derive_seed(&[0]), derive_seed(&[0, 0]));
    }
}
