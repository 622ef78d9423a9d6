//! Key <-> polynomial mapping and error-tolerant polynomial reconstruction.

use std::fmt;

use sha2::{Digest, Sha256};
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::error::{Error, Result};
use crate::gfpoly::{gf_inv, poly_divmod, poly_interpolate, FieldElem, FieldPoly, FIELD_BITS};

const L: usize = FIELD_BITS as usize;

/// Secret key material of arbitrary bit length.
///
/// Bits are packed MSB-first; unused trailing bits of the last byte are zero.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SecretKey {
    bytes: Vec<u8>,
    bits: usize,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bits)", self.bits)
    }
}

impl SecretKey {
    /// Takes the first `bits` bits of `bytes`.
    pub fn from_bits(bytes: &[u8], bits: usize) -> Result<SecretKey> {
        if bytes.len() * 8 < bits {
            return Err(Error::BadLength { ks: bytes.len() * 8, want: bits });
        }
        let mut out = bytes[..bits.div_ceil(8)].to_vec();
        if !bits.is_multiple_of(8) {
            let last = out.len() - 1;
            out[last] &= 0xFFu8 << (8 - bits % 8);
        }
        Ok(SecretKey { bytes: out, bits })
    }

    pub fn from_bytes(bytes: &[u8]) -> SecretKey {
        SecretKey { bytes: bytes.to_vec(), bits: bytes.len() * 8 }
    }

    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R, bits: usize) -> SecretKey {
        let mut buf = vec![0u8; bits.div_ceil(8)];
        rng.fill_bytes(&mut buf);
        SecretKey::from_bits(&buf, bits).expect("buffer sized for bits")
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bytes[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub(crate) fn push_bit(&mut self, b: bool) {
        if self.bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if b {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 1 << (7 - self.bits % 8);
        }
        self.bits += 1;
    }
}

/// SHA-256 of the key bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyDigest(pub [u8; 32]);

impl fmt::Debug for KeyDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyDigest({})", hex::encode(self.0))
    }
}

pub fn key_digest(key: &SecretKey) -> KeyDigest {
    KeyDigest(Sha256::digest(key.as_bytes()).into())
}

/// Splits the key into `ks / 16` big-endian chunks; chunk 0 becomes c_0.
pub fn key_to_coeffs(key: &SecretKey) -> Result<FieldPoly> {
    if key.bits == 0 || !key.bits.is_multiple_of(L) {
        return Err(Error::BadKeySize(key.bits));
    }
    let coeffs = key.bytes.chunks_exact(2).map(|c| FieldElem(u16::from_be_bytes([c[0], c[1]]))).collect();
    Ok(FieldPoly::new(coeffs))
}

pub fn coeffs_to_key(p: &FieldPoly) -> SecretKey {
    let bytes: Vec<u8> = p.coeffs().iter().flat_map(|c| c.0.to_be_bytes()).collect();
    SecretKey::from_bytes(&bytes)
}

/// Number of wrong points a degree-`k` decode over `t` points tolerates.
pub fn correction_capacity(t: usize, k: usize) -> Result<usize> {
    if t < k + 1 {
        return Err(Error::TooFewPoints { got: t, degree: k });
    }
    Ok((t - k - 1) / 2)
}

fn check_distinct(points: &[(FieldElem, FieldElem)]) -> Result<()> {
    let mut xs: Vec<u16> = points.iter().map(|p| p.0 .0).collect();
    xs.sort_unstable();
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DuplicateX);
    }
    Ok(())
}

fn agreements(p: &FieldPoly, points: &[(FieldElem, FieldElem)]) -> usize {
    points.iter().filter(|&&(x, y)| p.eval(x) == y).count()
}

fn accept(
    p: FieldPoly,
    k: usize,
    points: &[(FieldElem, FieldElem)],
    max_err: usize,
    expected: &KeyDigest,
) -> Option<SecretKey> {
    let p = p.resized(k + 1)?;
    if agreements(&p, points) + max_err < points.len() {
        return None;
    }
    let key = coeffs_to_key(&p);
    (key_digest(&key) == *expected).then_some(key)
}

/// Berlekamp-Welch decoding with digest verification.
///
/// Succeeds iff some polynomial of degree at most `k` disagrees with at most
/// `floor((n - k - 1) / 2)` of the `n` points and its key hashes to `expected`.
pub fn rs_reconstruct(points: &[(FieldElem, FieldElem)], k: usize, expected: &KeyDigest) -> Result<SecretKey> {
    check_distinct(points)?;
    let n = points.len();
    let max_err = correction_capacity(n, k).map_err(|_| Error::DecodeFailed)?;
    let p = berlekamp_welch(points, k, max_err).ok_or(Error::DecodeFailed)?;
    accept(p, k, points, max_err, expected).ok_or(Error::DecodeFailed)
}

/// Solves Q(x_i) = y_i E(x_i) with E monic of degree `e`, deg Q <= e + k,
/// and returns Q / E when the division is exact.
fn berlekamp_welch(points: &[(FieldElem, FieldElem)], k: usize, e: usize) -> Option<FieldPoly> {
    let q_len = e + k + 1;
    let cols = q_len + e;
    let mut rows: Vec<Vec<FieldElem>> = points
        .iter()
        .map(|&(x, y)| {
            let mut row = Vec::with_capacity(cols + 1);
            let mut xp = FieldElem::ONE;
            let mut powers = Vec::with_capacity(q_len);
            for _ in 0..q_len {
                powers.push(xp);
                xp *= x;
            }
            row.extend_from_slice(&powers);
            // -y x^j for E's free coefficients; char 2 drops the sign
            row.extend(powers[..e].iter().map(|&p| y * p));
            row.push(y * powers[e]);
            row
        })
        .collect();

    let sol = solve(&mut rows, cols)?;
    let q = &sol[..q_len];
    let mut err_loc = sol[q_len..].to_vec();
    err_loc.push(FieldElem::ONE);
    let (quot, rem) = poly_divmod(q, &err_loc).ok()?;
    if rem.iter().any(|c| !c.is_zero()) {
        return None;
    }
    Some(FieldPoly::new(quot))
}

/// Gauss-Jordan elimination on an augmented matrix. Free variables are set
/// to zero; `None` if the system is inconsistent.
fn solve(rows: &mut [Vec<FieldElem>], cols: usize) -> Option<Vec<FieldElem>> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = gf_inv(rows[r][c]).ok()?;
        for v in rows[r].iter_mut() {
            *v *= inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c];
            for (v, &pv) in row.iter_mut().zip(pivot_row.iter()) {
                *v += f * pv;
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    if rows[r..].iter().any(|row| !row[cols].is_zero()) {
        return None;
    }
    let mut sol = vec![FieldElem::ZERO; cols];
    for (i, &c) in pivots.iter().enumerate() {
        sol[c] = rows[i][cols];
    }
    Some(sol)
}

/// Reference decoder: interpolates every (k+1)-subset and applies the same
/// acceptance rule as [`rs_reconstruct`]. Exponential in `n`; meant for
/// cross-checking on small instances.
pub fn reconstruct_by_enumeration(
    points: &[(FieldElem, FieldElem)],
    k: usize,
    expected: &KeyDigest,
) -> Result<SecretKey> {
    check_distinct(points)?;
    let n = points.len();
    let max_err = correction_capacity(n, k).map_err(|_| Error::DecodeFailed)?;
    let mut idx: Vec<usize> = (0..=k).collect();
    let mut subset = Vec::with_capacity(k + 1);
    loop {
        subset.clear();
        subset.extend(idx.iter().map(|&i| points[i]));
        let p = poly_interpolate(&subset, k)?;
        if let Some(key) = accept(p, k, points, max_err, expected) {
            return Ok(key);
        }
        // next combination in lexicographic order
        let Some(pos) = (0..=k).rev().find(|&i| idx[i] < n - (k + 1 - i)) else {
            return Err(Error::DecodeFailed);
        };
        idx[pos] += 1;
        for i in pos + 1..=k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}
