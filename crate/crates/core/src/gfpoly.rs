//! Arithmetic in GF(2^16) and dense polynomials over it.
//!
//! The field is GF(2)[x] / (x^16 + x^12 + x^3 + x + 1). Multiplication goes
//! through log/antilog tables built once on first use; [`mul_shift_add`] is
//! the carry-less reference the tables are checked against.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Sub};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Field size in bits.
pub const FIELD_BITS: u32 = 16;
/// Width of the index and value halves of a vault abscissa.
pub const HALF_BITS: u32 = FIELD_BITS / 2;
/// Number of symbols representable in one half (2^(l/2)).
pub const HALF_SIZE: u32 = 1 << HALF_BITS;

/// x^16 + x^12 + x^3 + x + 1.
pub const MODULUS: u32 = 0x1_100B;

const ORDER: usize = (1 << FIELD_BITS) - 1;

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElem(pub u16);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    #[inline]
    pub fn value(self) -> u16 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn inv(self) -> Result<FieldElem> {
        gf_inv(self)
    }

    pub fn pow(self, mut e: u32) -> FieldElem {
        let mut base = self;
        let mut acc = FieldElem::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }
}

impl fmt::Debug for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

impl From<u16> for FieldElem {
    fn from(v: u16) -> Self {
        FieldElem(v)
    }
}

struct Tables {
    log: Vec<u16>,
    exp: Vec<u16>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut log = vec![0u16; ORDER + 1];
        // doubled so exp[log a + log b] needs no reduction
        let mut exp = vec![0u16; 2 * ORDER];
        let mut x: u32 = 1;
        for i in 0..ORDER {
            exp[i] = x as u16;
            exp[i + ORDER] = x as u16;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & (1 << FIELD_BITS) != 0 {
                x ^= MODULUS;
            }
        }
        Tables { log, exp }
    })
}

/// Characteristic-2 addition.
#[inline]
pub fn gf_add(a: FieldElem, b: FieldElem) -> FieldElem {
    FieldElem(a.0 ^ b.0)
}

#[inline]
pub fn gf_mul(a: FieldElem, b: FieldElem) -> FieldElem {
    if a.0 == 0 || b.0 == 0 {
        return FieldElem::ZERO;
    }
    let t = tables();
    FieldElem(t.exp[t.log[a.0 as usize] as usize + t.log[b.0 as usize] as usize])
}

/// Carry-less shift-and-add multiplication with interleaved reduction.
pub fn mul_shift_add(a: FieldElem, b: FieldElem) -> FieldElem {
    let mut a = a.0 as u32;
    let mut b = b.0;
    let mut acc: u32 = 0;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & (1 << FIELD_BITS) != 0 {
            a ^= MODULUS;
        }
    }
    FieldElem(acc as u16)
}

pub fn gf_inv(a: FieldElem) -> Result<FieldElem> {
    if a.0 == 0 {
        return Err(Error::ZeroInverse);
    }
    let t = tables();
    Ok(FieldElem(t.exp[(ORDER - t.log[a.0 as usize] as usize) % ORDER]))
}

impl Add for FieldElem {
    type Output = FieldElem;
    #[inline]
    fn add(self, rhs: FieldElem) -> FieldElem {
        gf_add(self, rhs)
    }
}

impl Sub for FieldElem {
    type Output = FieldElem;
    #[inline]
    fn sub(self, rhs: FieldElem) -> FieldElem {
        gf_add(self, rhs)
    }
}

impl AddAssign for FieldElem {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: FieldElem) {
        self.0 ^= rhs.0;
    }
}

impl Mul for FieldElem {
    type Output = FieldElem;
    #[inline]
    fn mul(self, rhs: FieldElem) -> FieldElem {
        gf_mul(self, rhs)
    }
}

impl MulAssign for FieldElem {
    #[inline]
    fn mul_assign(&mut self, rhs: FieldElem) {
        *self = gf_mul(*self, rhs);
    }
}

/// Polynomial with coefficients stored lowest degree first.
///
/// The coefficient count is authoritative: a key of `k + 1` chunks maps to a
/// length `k + 1` polynomial even when the leading chunk is zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldPoly {
    coeffs: Vec<FieldElem>,
}

impl fmt::Debug for FieldPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coeffs.iter()).finish()
    }
}

impl FieldPoly {
    /// Panics on an empty coefficient list.
    pub fn new(coeffs: Vec<FieldElem>) -> Self {
        assert!(!coeffs.is_empty(), "a polynomial needs at least one coefficient");
        FieldPoly { coeffs }
    }

    pub fn zero(len: usize) -> Self {
        FieldPoly::new(vec![FieldElem::ZERO; len.max(1)])
    }

    pub fn coeffs(&self) -> &[FieldElem] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<FieldElem> {
        self.coeffs
    }

    /// Nominal degree, `len - 1`.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Degree ignoring zero leading coefficients; `None` for the zero polynomial.
    pub fn true_degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| !c.is_zero())
    }

    pub fn eval(&self, x: FieldElem) -> FieldElem {
        poly_eval(self, x)
    }

    /// Pads with zero coefficients up to `len` or drops zero leading terms down to it.
    /// Returns `None` if a nonzero coefficient would be dropped.
    pub fn resized(&self, len: usize) -> Option<FieldPoly> {
        let len = len.max(1);
        if self.coeffs.len() > len && self.coeffs[len..].iter().any(|c| !c.is_zero()) {
            return None;
        }
        let mut c = self.coeffs.clone();
        c.resize(len, FieldElem::ZERO);
        Some(FieldPoly::new(c))
    }
}

/// Horner evaluation.
pub fn poly_eval(p: &FieldPoly, x: FieldElem) -> FieldElem {
    p.coeffs.iter().rev().fold(FieldElem::ZERO, |acc, &c| acc * x + c)
}

/// Lagrange interpolation through the first `degree_bound + 1` points.
///
/// Every supplied point must have a distinct x coordinate, including the
/// ones past the prefix that is actually used.
pub fn poly_interpolate(points: &[(FieldElem, FieldElem)], degree_bound: usize) -> Result<FieldPoly> {
    let n = degree_bound + 1;
    if points.len() < n {
        return Err(Error::TooFewPoints { got: points.len(), degree: degree_bound });
    }
    let mut xs: Vec<u16> = points.iter().map(|p| p.0 .0).collect();
    xs.sort_unstable();
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DuplicateX);
    }
    let pts = &points[..n];

    // master = prod (x - x_j), degree n
    let mut master = vec![FieldElem::ZERO; n + 1];
    master[0] = FieldElem::ONE;
    for (deg, &(xj, _)) in pts.iter().enumerate() {
        for i in (1..=deg + 1).rev() {
            master[i] = master[i - 1] + master[i] * xj;
        }
        master[0] *= xj;
    }

    let mut out = vec![FieldElem::ZERO; n];
    let mut basis = vec![FieldElem::ZERO; n];
    for (j, &(xj, yj)) in pts.iter().enumerate() {
        // synthetic division master / (x - x_j)
        let mut carry = FieldElem::ZERO;
        for i in (0..n).rev() {
            carry = master[i + 1] + carry * xj;
            basis[i] = carry;
        }
        let denom =
            pts.iter().enumerate().filter(|&(m, _)| m != j).fold(FieldElem::ONE, |acc, (_, &(xm, _))| acc * (xj - xm));
        let scale = yj * gf_inv(denom)?;
        for (o, &b) in out.iter_mut().zip(basis.iter()) {
            *o += b * scale;
        }
    }
    Ok(FieldPoly::new(out))
}

/// Product of two coefficient vectors, lowest degree first.
pub fn poly_mul(a: &[FieldElem], b: &[FieldElem]) -> Vec<FieldElem> {
    let mut out = vec![FieldElem::ZERO; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Long division; returns (quotient, remainder). `divisor` must have a nonzero
/// leading coefficient.
pub(crate) fn poly_divmod(num: &[FieldElem], divisor: &[FieldElem]) -> Result<(Vec<FieldElem>, Vec<FieldElem>)> {
    let dlen = divisor.iter().rposition(|c| !c.is_zero()).map(|d| d + 1).ok_or(Error::ZeroInverse)?;
    let lead_inv = gf_inv(divisor[dlen - 1])?;
    let mut rem = num.to_vec();
    if rem.len() < dlen {
        return Ok((vec![FieldElem::ZERO], rem));
    }
    let mut quot = vec![FieldElem::ZERO; rem.len() - dlen + 1];
    for i in (0..quot.len()).rev() {
        let coef = rem[i + dlen - 1] * lead_inv;
        quot[i] = coef;
        if coef.is_zero() {
            continue;
        }
        for (j, &d) in divisor[..dlen].iter().enumerate() {
            rem[i + j] += coef * d;
        }
    }
    rem.truncate(dlen - 1);
    if rem.is_empty() {
        rem.push(FieldElem::ZERO);
    }
    Ok((quot, rem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fe(v: u16) -> FieldElem {
        FieldElem(v)
    }

    #[test]
    fn add_examples() {
        assert_eq!(gf_add(fe(0), fe(0x1234)), fe(0x1234));
        assert_eq!(gf_add(fe(0xABCD), fe(0xABCD)), fe(0));
        assert_eq!(gf_add(fe(3), fe(5)), fe(6));
    }

    #[test]
    fn mul_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = fe(rng.random());
            assert_eq!(gf_mul(fe(0), x), fe(0));
            assert_eq!(gf_mul(fe(1), x), x);
        }
        assert_eq!(gf_mul(fe(2), fe(3)), fe(6));
        // x^15 * x = x^16 = x^12 + x^3 + x + 1
        assert_eq!(gf_mul(fe(0x8000), fe(2)), fe(0x100B));
    }

    #[test]
    fn modulus_is_primitive() {
        let g = fe(2);
        let mut x = FieldElem::ONE;
        for i in 1..=ORDER {
            x *= g;
            if x == FieldElem::ONE {
                assert_eq!(i, ORDER, "x has order {i}");
            }
        }
        assert_eq!(x, FieldElem::ONE);
    }

    #[test]
    fn tables_match_shift_add() {
        for a in (0..=u16::MAX).step_by(97) {
            for b in (0..=u16::MAX).step_by(1031) {
                assert_eq!(gf_mul(fe(a), fe(b)), mul_shift_add(fe(a), fe(b)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20_000 {
            let (a, b) = (fe(rng.random()), fe(rng.random()));
            assert_eq!(gf_mul(a, b), mul_shift_add(a, b));
        }
    }

    #[test]
    fn inverse() {
        assert_eq!(gf_inv(fe(1)).unwrap(), fe(1));
        assert!(matches!(gf_inv(fe(0)), Err(Error::ZeroInverse)));
        for a in 1..=u16::MAX {
            assert_eq!(mul_shift_add(fe(a), gf_inv(fe(a)).unwrap()), FieldElem::ONE);
        }
    }

    #[test]
    fn field_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let (a, b, c) = (fe(rng.random()), fe(rng.random()), fe(rng.random()));
            assert_eq!(a * b, b * a);
            assert_eq!(a + b, b + a);
            assert_eq!((a * b) * c, a * (b * c));
            assert_eq!((a + b) + c, a + (b + c));
            assert_eq!(a * (b + c), a * b + a * c);
        }
    }

    fn power_sum(p: &FieldPoly, x: FieldElem) -> FieldElem {
        p.coeffs().iter().enumerate().fold(FieldElem::ZERO, |acc, (i, &c)| acc + c * x.pow(i as u32))
    }

    #[test]
    fn eval_examples() {
        let c = FieldPoly::new(vec![fe(0x77)]);
        assert_eq!(poly_eval(&c, fe(0x1234)), fe(0x77));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p = FieldPoly::new((0..8).map(|_| fe(rng.random())).collect());
            assert_eq!(poly_eval(&p, FieldElem::ZERO), p.coeffs()[0]);
            let x = fe(rng.random());
            assert_eq!(poly_eval(&p, x), power_sum(&p, x));
        }
    }

    #[test]
    fn interpolate_examples() {
        let p = poly_interpolate(&[(fe(9), fe(42))], 0).unwrap();
        assert_eq!(p.coeffs(), &[fe(42)]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = FieldPoly::new((0..8).map(|_| fe(rng.random())).collect());
            let mut xs: Vec<u16> = Vec::new();
            while xs.len() < 8 {
                let x = rng.random();
                if !xs.contains(&x) {
                    xs.push(x);
                }
            }
            let pts: Vec<_> = xs.iter().map(|&x| (fe(x), p.eval(fe(x)))).collect();
            assert_eq!(poly_interpolate(&pts, 7).unwrap(), p);
        }

        let dup = [(fe(1), fe(2)), (fe(1), fe(3))];
        assert!(matches!(poly_interpolate(&dup, 1), Err(Error::DuplicateX)));
    }

    #[test]
    fn divmod_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let a: Vec<_> = (0..6).map(|_| fe(rng.random())).collect();
            let mut b: Vec<_> = (0..4).map(|_| fe(rng.random())).collect();
            b[3] = fe(rng.random_range(1..=u16::MAX));
            let prod = poly_mul(&a, &b);
            let (q, r) = poly_divmod(&prod, &b).unwrap();
            assert_eq!(q, a);
            assert!(r.iter().all(|c| c.is_zero()));
        }
    }
}
