//! Fuzzy vault locking and unlocking.
//!
//! Every populated x-group (one per virtual index) holds an equally spaced
//! grid of value symbols. For genuine groups the template's quantized value is
//! one of the grid points; its rank in the grid is drawn so that, for a
//! uniformly distributed feature value, every rank is equally likely. G2
//! groups carry the same kind of grid around a random anchor and sit on
//! virtual indexes not used by the user representation.

use std::collections::BTreeSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::{correction_capacity, key_to_coeffs, rs_reconstruct, KeyDigest, SecretKey};
use crate::error::{Error, Result};
use crate::features::{join_halves, quantize, split_halves, QuantizedVector, RawFeatureVector, UserRepresentation};
use crate::gfpoly::{FieldElem, FieldPoly, FIELD_BITS, HALF_SIZE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChaffMode {
    /// Fixed normalized separation Omega: round(1 / Omega) points per group.
    Uniform { omega: f64 },
    /// Per-feature separation 3 delta_i.
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaultParams {
    pub t: usize,
    pub k: usize,
    /// Chaff group ratio: G2 groups per genuine group.
    pub alpha: f64,
    pub chaff: ChaffMode,
}

impl VaultParams {
    pub fn l(&self) -> u32 {
        FIELD_BITS
    }

    pub fn g2_groups(&self) -> Result<usize> {
        let g = self.alpha * self.t as f64;
        if self.alpha.is_nan() || self.alpha < 0.0 || (g - g.round()).abs() > 1e-9 {
            return Err(Error::BadParams(format!("alpha * t = {g} must be a non-negative integer")));
        }
        Ok(g.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < self.k + 1 {
            return Err(Error::BadParams(format!("t = {} < k + 1 = {}", self.t, self.k + 1)));
        }
        let groups = self.t + self.g2_groups()?;
        if groups > HALF_SIZE as usize {
            return Err(Error::BadParams(format!("{groups} x-groups exceed {HALF_SIZE} virtual indexes")));
        }
        if let ChaffMode::Uniform { omega } = self.chaff {
            uniform_points_per_group(omega)?;
        }
        Ok(())
    }
}

/// round(1 / omega), requiring 0 < omega <= 0.5 and a grid step of at least two symbols.
pub fn uniform_points_per_group(omega: f64) -> Result<usize> {
    if !(omega > 0.0 && omega <= 0.5) {
        return Err(Error::BadParams(format!("omega = {omega} must lie in (0, 0.5]")));
    }
    let n = (1.0 / omega).round() as usize;
    if n < 2 || HALF_SIZE as usize / n < 2 {
        return Err(Error::BadParams(format!("omega = {omega} gives {n} points, which do not fit the value range")));
    }
    Ok(n)
}

/// Grid step for feature variability delta, max(2, round(3 delta 2^(l/2))),
/// capped so a group holds at least two points.
pub fn adaptive_step(delta: f64) -> u32 {
    ((3.0 * delta * HALF_SIZE as f64).round() as u32).clamp(2, HALF_SIZE / 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VaultPoint {
    pub a: FieldElem,
    pub p: FieldElem,
}

impl VaultPoint {
    pub fn x(&self) -> u8 {
        split_halves(self.a).0
    }

    pub fn y(&self) -> u8 {
        split_halves(self.a).1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaultRecord {
    points: Vec<VaultPoint>,
    params: VaultParams,
    salt: [u8; 16],
}

impl VaultRecord {
    /// Sorts the points canonically and rejects repeated abscissas.
    pub fn from_parts(mut points: Vec<VaultPoint>, params: VaultParams, salt: [u8; 16]) -> Result<Self> {
        params.validate()?;
        points.sort_unstable();
        if points.windows(2).any(|w| w[0].a == w[1].a) {
            return Err(Error::BadParams("vault abscissas must be distinct".into()));
        }
        Ok(VaultRecord { points, params, salt })
    }

    pub fn points(&self) -> &[VaultPoint] {
        &self.points
    }

    pub fn params(&self) -> &VaultParams {
        &self.params
    }

    pub fn salt(&self) -> &[u8; 16] {
        &self.salt
    }

    /// r, the total point count.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// z = r - t.
    pub fn chaff_count(&self) -> usize {
        self.points.len().saturating_sub(self.params.t)
    }

    /// Points whose index half equals `x`, ascending by value half.
    pub fn group(&self, x: u8) -> &[VaultPoint] {
        let lo = self.points.partition_point(|p| p.a < join_halves(x, 0));
        let hi = self.points.partition_point(|p| p.a <= join_halves(x, u8::MAX));
        &self.points[lo..hi]
    }

    /// Distinct populated index halves.
    pub fn populated_groups(&self) -> Vec<u8> {
        self.points.iter().map(|p| p.x()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Points-per-group ratio actually stored, groups / r.
    pub fn effective_omega(&self) -> f64 {
        self.populated_groups().len() as f64 / self.len().max(1) as f64
    }
}

/// Places an `n`-point grid of step `step` so that it contains `anchor`.
/// Returns the grid's first value and the anchor's rank.
fn place_grid<R: Rng + ?Sized>(rng: &mut R, anchor: u8, n: usize, step: u32) -> (u32, usize) {
    debug_assert!(n as u32 * step <= HALF_SIZE);
    let u: f64 = rng.random();
    let rank = (((anchor as f64 + u) * n as f64) / HALF_SIZE as f64).floor() as usize;
    let rank = rank.min(n - 1);
    let start = anchor as u32 - rank as u32 * step;
    (start, rank)
}

fn chaff_ordinate<R: Rng + ?Sized>(rng: &mut R, poly: &FieldPoly, a: FieldElem) -> FieldElem {
    let truth = poly.eval(a);
    loop {
        let v = FieldElem(rng.random());
        if v != truth {
            return v;
        }
    }
}

/// Locks `key` under `template`.
pub fn encode_vault(
    template: &RawFeatureVector,
    ur: &UserRepresentation,
    key: &SecretKey,
    params: &VaultParams,
    rng_seed: u64,
) -> Result<VaultRecord> {
    params.validate()?;
    ur.validate()?;
    if ur.t() != params.t {
        return Err(Error::BadParams(format!("representation has t = {}, params say {}", ur.t(), params.t)));
    }
    if key.bits() != FIELD_BITS as usize * (params.k + 1) {
        return Err(Error::KeyMismatch { ks: key.bits(), k: params.k });
    }
    let poly = key_to_coeffs(key)?;
    let locking = quantize(template, ur)?;
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);

    let steps: Vec<(usize, u32)> = match params.chaff {
        ChaffMode::Uniform { omega } => {
            let n = uniform_points_per_group(omega)?;
            vec![(n, HALF_SIZE / n as u32); params.t]
        }
        ChaffMode::Adaptive => ur
            .delta
            .iter()
            .map(|&d| {
                let s = adaptive_step(d);
                ((HALF_SIZE / s) as usize, s)
            })
            .collect(),
    };

    let mut points = Vec::new();
    for (i, &(n, step)) in steps.iter().enumerate() {
        let (x, y) = (locking.x[i], locking.y[i]);
        let (start, _) = place_grid(&mut rng, y, n, step);
        for j in 0..n as u32 {
            let v = (start + j * step) as u8;
            let a = join_halves(x, v);
            let p = if v == y { poly.eval(a) } else { chaff_ordinate(&mut rng, &poly, a) };
            points.push(VaultPoint { a, p });
        }
    }

    let (g2_n, g2_step) = match params.chaff {
        ChaffMode::Uniform { .. } => steps[0],
        ChaffMode::Adaptive => {
            let mean = steps.iter().map(|&(_, s)| s as f64).sum::<f64>() / steps.len() as f64;
            let s = (mean.round() as u32).clamp(2, HALF_SIZE / 2);
            ((HALF_SIZE / s) as usize, s)
        }
    };
    let used: BTreeSet<u8> = ur.vi.iter().copied().collect();
    let free: Vec<u8> = (0..HALF_SIZE).map(|v| v as u8).filter(|v| !used.contains(v)).collect();
    let g2 = params.g2_groups()?;
    for idx in rand::seq::index::sample(&mut rng, free.len(), g2) {
        let x = free[idx];
        let anchor: u8 = rng.random();
        let (start, _) = place_grid(&mut rng, anchor, g2_n, g2_step);
        for j in 0..g2_n as u32 {
            let a = join_halves(x, (start + j * g2_step) as u8);
            points.push(VaultPoint { a, p: chaff_ordinate(&mut rng, &poly, a) });
        }
    }

    let mut salt = [0u8; 16];
    rng.fill_bytes(&mut salt);
    VaultRecord::from_parts(points, *params, salt)
}

/// Outcome of the matching stage of one decode attempt.
///
/// `e_genuine` counts slots left unmatched; `e_chaff` counts slots matched to
/// a point off the key polynomial. `e_chaff` and `decode_predicted` need the
/// polynomial and are `None` when it is unknown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchDiagnostics {
    pub n_matched: usize,
    pub e_genuine: usize,
    pub e_chaff: Option<usize>,
    pub decode_predicted: Option<bool>,
}

impl MatchDiagnostics {
    fn resolve(matched: &[VaultPoint], t: usize, k: usize, poly: Option<&FieldPoly>) -> Self {
        let n = matched.len();
        let e_chaff = poly.map(|p| matched.iter().filter(|v| p.eval(v.a) != v.p).count());
        let decode_predicted = e_chaff.map(|e| correction_capacity(n, k).is_ok_and(|cap| e <= cap));
        MatchDiagnostics { n_matched: n, e_genuine: t - n, e_chaff, decode_predicted }
    }
}

/// For each unlocking element the nearest vault point of its x-group within
/// the window, ties to the smaller value. Unmatched slots are dropped.
pub fn match_points(vault: &VaultRecord, unlocking: &QuantizedVector, windows: &[u32]) -> Vec<VaultPoint> {
    (0..unlocking.len())
        .filter_map(|i| {
            let yq = unlocking.y[i] as i32;
            let mut best: Option<(u32, VaultPoint)> = None;
            for &pt in vault.group(unlocking.x[i]) {
                let d = (pt.y() as i32 - yq).unsigned_abs();
                if d <= windows[i] && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, pt));
                }
            }
            best.map(|(_, p)| p)
        })
        .collect()
}

fn unlocking_set(query: &RawFeatureVector, ur: &UserRepresentation) -> Result<(QuantizedVector, Vec<u32>)> {
    let q = quantize(query, ur)?;
    let windows = (0..ur.t()).map(|i| ur.window(i)).collect();
    Ok((q, windows))
}

/// Unlocks with the user representation restored from the password.
pub fn decode_vault(
    query: &RawFeatureVector,
    ur: &UserRepresentation,
    vault: &VaultRecord,
    expected: &KeyDigest,
) -> (Result<SecretKey>, MatchDiagnostics) {
    let (q, windows) = match unlocking_set(query, ur) {
        Ok(v) => v,
        Err(e) => return (Err(e), MatchDiagnostics::default()),
    };
    let matched = match_points(vault, &q, &windows);
    let k = vault.params.k;
    let pts: Vec<_> = matched.iter().map(|v| (v.a, v.p)).collect();
    let result = rs_reconstruct(&pts, k, expected);
    let poly = result.as_ref().ok().and_then(|key| key_to_coeffs(key).ok());
    let diag = MatchDiagnostics::resolve(&matched, ur.t(), k, poly.as_ref());
    (result, diag)
}

/// Matching diagnostics against the known key; the ground truth for the
/// decoder's success condition.
pub fn diagnose(
    query: &RawFeatureVector,
    ur: &UserRepresentation,
    vault: &VaultRecord,
    key: &SecretKey,
) -> Result<MatchDiagnostics> {
    let (q, windows) = unlocking_set(query, ur)?;
    let matched = match_points(vault, &q, &windows);
    let poly = key_to_coeffs(key)?;
    Ok(MatchDiagnostics::resolve(&matched, ur.t(), vault.params.k, Some(&poly)))
}

/// Unlocking attempt by someone without the password: the representation
/// is a guess, so nothing keeps it away from G2 groups.
pub fn decode_with_guess(
    query: &RawFeatureVector,
    guess: &UserRepresentation,
    vault: &VaultRecord,
    expected: &KeyDigest,
) -> (Result<SecretKey>, MatchDiagnostics) {
    decode_vault(query, guess, vault, expected)
}

/// Attacker's guess: `t` random feature indexes below `dim`, `t` random
/// populated x-groups of the vault, and a uniform variability.
pub fn random_guess<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    vault: &VaultRecord,
    delta: f64,
) -> Result<UserRepresentation> {
    let t = vault.params.t;
    if dim < t {
        return Err(Error::BadParams(format!("cannot guess {t} features out of {dim}")));
    }
    let groups = vault.populated_groups();
    let fi = rand::seq::index::sample(rng, dim, t).into_vec();
    let vi = rand::seq::index::sample(rng, groups.len(), t).into_iter().map(|i| groups[i]).collect();
    UserRepresentation::new(fi, vi, vec![delta; t])
}
