//! Per-user key sizing and key padding.
//!
//! A user whose enrollment samples vary little gets a higher polynomial
//! degree, hence less error correction and a longer key. The caller's key is
//! padded with random bits up to the planned size and truncated back after
//! decoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::SecretKey;
use crate::error::{Error, Result};
use crate::features::{count_mismatches, quantize, RawFeatureVector, UserRepresentation};
use crate::gfpoly::FIELD_BITS;

/// Upper bound on the planned correction capacity.
pub const MAX_EPSILON: usize = 6;
/// Lowest polynomial degree a plan may produce.
pub const MIN_DEGREE: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyPlan {
    pub e: usize,
    pub epsilon: usize,
    pub k: usize,
    pub ks: usize,
    pub ks_original: usize,
    pub pad_len: usize,
}

/// epsilon = min(e, 6), k = t - 2 epsilon - 1, ks = 16 (k + 1).
///
/// For `t < 20` epsilon is further capped so that k stays at least 7.
pub fn plan_key_size(e: usize, t: usize, ks_original: usize) -> Result<KeyPlan> {
    if t < MIN_DEGREE + 1 {
        return Err(Error::BadParams(format!("t = {t} cannot carry a degree-{MIN_DEGREE} polynomial")));
    }
    let epsilon = e.min(MAX_EPSILON).min((t - MIN_DEGREE - 1) / 2);
    let k = t - 2 * epsilon - 1;
    let ks = FIELD_BITS as usize * (k + 1);
    if ks_original > ks {
        return Err(Error::KeyTooLarge { ks: ks_original, max: ks });
    }
    Ok(KeyPlan { e, epsilon, k, ks, ks_original, pad_len: ks - ks_original })
}

/// Plan for a fixed polynomial degree, ignoring variability.
pub fn fixed_plan(k: usize, t: usize, ks_original: usize) -> Result<KeyPlan> {
    if t < k + 1 {
        return Err(Error::BadParams(format!("t = {t} < k + 1 = {}", k + 1)));
    }
    let ks = FIELD_BITS as usize * (k + 1);
    if ks_original > ks {
        return Err(Error::KeyTooLarge { ks: ks_original, max: ks });
    }
    Ok(KeyPlan { e: 0, epsilon: (t - k - 1) / 2, k, ks, ks_original, pad_len: ks - ks_original })
}

/// Appends `plan.pad_len` seeded random bits.
pub fn pad_key(key: &SecretKey, plan: &KeyPlan, rng_seed: u64) -> Result<SecretKey> {
    if key.bits() > plan.ks {
        return Err(Error::KeyTooLarge { ks: key.bits(), max: plan.ks });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut out = key.clone();
    for _ in key.bits()..plan.ks {
        out.push_bit(rng.random());
    }
    Ok(out)
}

/// Keeps the first `ks_original` bits.
pub fn unpad_key(key: &SecretKey, ks_original: usize) -> Result<SecretKey> {
    if ks_original > key.bits() {
        return Err(Error::BadLength { ks: key.bits(), want: ks_original });
    }
    SecretKey::from_bits(key.as_bytes(), ks_original)
}

/// Maximum number of window mismatches over all pairs of enrollment
/// templates; 0 with fewer than two templates.
pub fn intra_variability(templates: &[RawFeatureVector], ur: &UserRepresentation) -> Result<usize> {
    let q = templates.iter().map(|t| quantize(t, ur)).collect::<Result<Vec<_>>>()?;
    let mut worst = 0;
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            worst = worst.max(count_mismatches(&q[i], &q[j], ur));
        }
    }
    Ok(worst)
}
