#![allow(dead_code)]

use std::sync::OnceLock;

use keyforge::he::{keygen, HeParams, PublicKey, SecretKey};
use keyforge::lda::UserSamples;
use keyforge::pplda::UserTemplate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn params512() -> HeParams {
    HeParams { modulus_bits: 512, ..HeParams::default() }
}

/// One 512-bit key pair shared by every test in a binary.
pub fn keys() -> &'static (PublicKey, SecretKey) {
    static KEYS: OnceLock<(PublicKey, SecretKey)> = OnceLock::new();
    KEYS.get_or_init(|| keygen(&params512(), &mut ChaCha20Rng::seed_from_u64(2024)).unwrap())
}

pub fn secret() -> SecretKey {
    keys().1.clone()
}

/// Samples `mean +- delta` in pairs, so the mean and the scatter matrix are
/// integers.
pub fn paired_user(mean: &[i64], deltas: &[Vec<i64>]) -> UserSamples {
    let mut rows = Vec::new();
    for d in deltas {
        rows.push(mean.iter().zip(d).map(|(m, e)| (m + e) as f64).collect());
        rows.push(mean.iter().zip(d).map(|(m, e)| (m - e) as f64).collect());
    }
    UserSamples::from_rows(&rows).unwrap()
}

/// Random integer-template population in `[0, 2^d)`.
pub fn population(rng: &mut impl Rng, users: usize, n: usize, pairs: usize, d: u32) -> Vec<UserSamples> {
    let top = 1i64 << d;
    (0..users)
        .map(|_| {
            let mean: Vec<i64> = (0..n).map(|_| rng.gen_range(8..top - 8)).collect();
            let deltas: Vec<Vec<i64>> = (0..pairs).map(|_| (0..n).map(|_| rng.gen_range(-8..=8)).collect()).collect();
            paired_user(&mean, &deltas)
        })
        .collect()
}

pub fn templates(users: &[UserSamples]) -> Vec<UserTemplate> {
    users.iter().map(UserTemplate::from_samples).collect()
}
