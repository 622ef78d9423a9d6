//! Brute-force security of a vault and a Monte-Carlo attack to check it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::codec::{coeffs_to_key, key_digest, KeyDigest};
use crate::error::{Error, Result};
use crate::gfpoly::poly_interpolate;
use crate::vault::VaultRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecurityEstimate {
    /// C((alpha + 1) t, k + 1) (1 / omega)^(k + 1).
    pub trials: f64,
    pub entropy_bits: f64,
    /// `trials` divided by the C(t, k + 1) all-genuine selections.
    pub refined_trials: f64,
    pub refined_bits: f64,
}

fn log2_binomial(n: f64, k: f64) -> f64 {
    (ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)) / std::f64::consts::LN_2
}

pub fn estimate_security(t: usize, k: usize, alpha: f64, omega: f64) -> Result<SecurityEstimate> {
    if t < k + 1 {
        return Err(Error::BadParams(format!("t = {t} < k + 1 = {}", k + 1)));
    }
    if !(omega > 0.0 && omega <= 1.0) || alpha.is_nan() || alpha < 0.0 {
        return Err(Error::BadParams(format!(
            "need 0 < omega <= 1 and alpha >= 0, got omega = {omega}, alpha = {alpha}"
        )));
    }
    let picks = (k + 1) as f64;
    let entropy_bits = log2_binomial((alpha + 1.0) * t as f64, picks) - picks * omega.log2();
    let refined_bits = entropy_bits - log2_binomial(t as f64, picks);
    Ok(SecurityEstimate {
        trials: entropy_bits.exp2(),
        entropy_bits,
        refined_trials: refined_bits.exp2(),
        refined_bits,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackStats {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
}

const CHUNK: u64 = 4096;

/// Repeatedly picks `k + 1` distinct x-groups, one random point from each,
/// interpolates and checks the digest. Chunks run in parallel on seeds
/// derived from `rng_seed`, so the result does not depend on thread count.
pub fn monte_carlo_attack(
    vault: &VaultRecord,
    k: usize,
    expected: &KeyDigest,
    max_trials: u64,
    rng_seed: u64,
) -> AttackStats {
    let groups: Vec<_> = vault.populated_groups().into_iter().map(|x| vault.group(x)).collect();
    if k + 1 > groups.len() || k + 1 > vault.params().t || max_trials == 0 {
        return AttackStats { trials: max_trials, successes: 0, rate: 0.0 };
    }
    let chunks = max_trials.div_ceil(CHUNK);
    let successes: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
            rng.set_stream(c);
            let n = CHUNK.min(max_trials - c * CHUNK);
            let mut pts = Vec::with_capacity(k + 1);
            let mut hits = 0;
            for _ in 0..n {
                pts.clear();
                for g in rand::seq::index::sample(&mut rng, groups.len(), k + 1) {
                    let grp = groups[g];
                    let pt = grp[rng.random_range(0..grp.len())];
                    pts.push((pt.a, pt.p));
                }
                let Ok(poly) = poly_interpolate(&pts, k) else { continue };
                if key_digest(&coeffs_to_key(&poly)) == *expected {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    AttackStats { trials: max_trials, successes, rate: successes as f64 / max_trials as f64 }
}
