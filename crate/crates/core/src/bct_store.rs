//! Bio-cryptography template persistence.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "OSFV1"
//! u32 len | params   : u8 l, u16 t, u16 k, f64 alpha, u8 mode (0 uniform, 1 adaptive), f64 omega, [u8; 16] vault salt
//! u32 len | points   : r pairs of u16 words (a, p), ascending by (a, p)
//! u32 len | kdf salt : 16 bytes
//! u32 len | eur      : u32 m_cost, u32 t_cost, u32 p_cost, 12-byte nonce, ChaCha20-Poly1305 ciphertext
//! u32 len | digest   : 32 bytes, SHA-256 of the (padded) key
//! ```
//!
//! The encrypted payload holds FI, VI, delta, the original key size and the
//! optional signature-verification reference; none of it appears in clear.

use std::fs;
use std::io::Write;
use std::path::Path;

use argon2::{Algorithm, Argon2, Params, Version};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use zeroize::Zeroizing;

use crate::codec::KeyDigest;
use crate::error::{Error, Result};
use crate::features::UserRepresentation;
use crate::gfpoly::{FieldElem, FIELD_BITS};
use crate::harness::SvGate;
use crate::vault::{ChaffMode, VaultParams, VaultPoint, VaultRecord};

pub const FORMAT_VERSION: &str = "OSFV1";
const ENSEMBLE_MAGIC: &[u8] = b"OSFVJ1";
const EUR_AAD: &[u8] = b"OSFV1 user representation";
const NONCE_LEN: usize = 12;
/// Largest stored KDF cost accepted when opening (4 GiB, 64 passes).
const MAX_M_COST_KIB: u32 = 4 << 20;
const MAX_T_COST: u32 = 64;

/// Argon2id cost parameters, stored alongside the ciphertext.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KdfParams {
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams { m_cost_kib: 19 * 1024, t_cost: 2, p_cost: 1 }
    }
}

impl KdfParams {
    /// Minimal cost, for tests and bulk evaluation only.
    pub fn insecure_fast() -> Self {
        KdfParams { m_cost_kib: 8, t_cost: 1, p_cost: 1 }
    }
}

/// Everything sealed under the password.
#[derive(Clone, Debug, PartialEq)]
pub struct SealedUr {
    pub ur: UserRepresentation,
    pub ks_original: usize,
    pub sv_gate: Option<SvGate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BioCryptoTemplate {
    pub vault: VaultRecord,
    pub eur: Vec<u8>,
    pub kdf_salt: [u8; 16],
    pub key_digest: KeyDigest,
}

fn derive_key(pw: &[u8], salt: &[u8; 16], kdf: &KdfParams) -> Result<Zeroizing<[u8; 32]>> {
    let params = Params::new(kdf.m_cost_kib, kdf.t_cost, kdf.p_cost, Some(32))
        .map_err(|e| Error::BadParams(format!("kdf: {e}")))?;
    let mut out = Zeroizing::new([0u8; 32]);
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(pw, salt, out.as_mut())
        .map_err(|e| Error::BadParams(format!("kdf: {e}")))?;
    Ok(out)
}

pub fn seal_ur(payload: &SealedUr, pw: &str, kdf: &KdfParams) -> Result<(Vec<u8>, [u8; 16])> {
    if pw.is_empty() {
        return Err(Error::EmptyPassword);
    }
    let mut rng = rand::rng();
    let mut salt = [0u8; 16];
    rng.fill_bytes(&mut salt);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);

    let key = derive_key(pw.as_bytes(), &salt, kdf)?;
    let plain = Zeroizing::new(encode_payload(payload)?);
    let ct = ChaCha20Poly1305::new(Key::from_slice(key.as_ref()))
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: &plain, aad: EUR_AAD })
        .map_err(|_| Error::BadParams("encryption failed".into()))?;

    let mut blob = Vec::with_capacity(12 + NONCE_LEN + ct.len());
    for v in [kdf.m_cost_kib, kdf.t_cost, kdf.p_cost] {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    blob.extend_from_slice(&nonce);
    blob.extend_from_slice(&ct);
    Ok((blob, salt))
}

/// Any failure to authenticate, including a mangled blob, is `AuthFailure`.
pub fn open_ur(eur: &[u8], kdf_salt: &[u8; 16], pw: &str) -> Result<SealedUr> {
    let mut r = Reader::new(eur);
    let header = (|| Some((r.u32()?, r.u32()?, r.u32()?, r.take(NONCE_LEN)?)))().ok_or(Error::AuthFailure)?;
    let (m, t, p, nonce) = header;
    if m > MAX_M_COST_KIB || t > MAX_T_COST {
        return Err(Error::AuthFailure);
    }
    let kdf = KdfParams { m_cost_kib: m, t_cost: t, p_cost: p };
    let key = derive_key(pw.as_bytes(), kdf_salt, &kdf).map_err(|_| Error::AuthFailure)?;
    let plain = ChaCha20Poly1305::new(Key::from_slice(key.as_ref()))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: r.rest(), aad: EUR_AAD })
        .map_err(|_| Error::AuthFailure)?;
    let plain = Zeroizing::new(plain);
    decode_payload(&plain)
}

fn encode_payload(p: &SealedUr) -> Result<Vec<u8>> {
    let ur = &p.ur;
    ur.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(&(ur.t() as u16).to_le_bytes());
    for &f in &ur.fi {
        let f = u32::try_from(f).map_err(|_| Error::BadParams(format!("feature index {f} too large")))?;
        out.extend_from_slice(&f.to_le_bytes());
    }
    out.extend_from_slice(&ur.vi);
    for d in &ur.delta {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(p.ks_original as u32).to_le_bytes());
    match &p.sv_gate {
        None => out.push(0),
        Some(g) => {
            out.push(1);
            out.extend_from_slice(&(g.centroid.len() as u32).to_le_bytes());
            for c in &g.centroid {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&g.threshold.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode_payload(buf: &[u8]) -> Result<SealedUr> {
    let bad = || Error::CorruptFile("malformed user representation".into());
    let mut r = Reader::new(buf);
    let t = r.u16().ok_or_else(bad)? as usize;
    let fi = (0..t).map(|_| r.u32().map(|v| v as usize)).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
    let vi = r.take(t).ok_or_else(bad)?.to_vec();
    let delta = (0..t).map(|_| r.f64()).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
    let ks_original = r.u32().ok_or_else(bad)? as usize;
    let sv_gate = match r.u8().ok_or_else(bad)? {
        0 => None,
        1 => {
            let dim = r.u32().ok_or_else(bad)? as usize;
            let centroid = (0..dim).map(|_| r.f64()).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
            let threshold = r.f64().ok_or_else(bad)?;
            Some(SvGate { centroid, threshold })
        }
        _ => return Err(bad()),
    };
    if !r.rest().is_empty() {
        return Err(bad());
    }
    let ur = UserRepresentation::new(fi, vi, delta).map_err(|_| bad())?;
    Ok(SealedUr { ur, ks_original, sv_gate })
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Some(head)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn section(&mut self) -> Option<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }
}

fn push_section(out: &mut Vec<u8>, body: &[u8]) {
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
}

fn encode_params(v: &VaultRecord) -> Vec<u8> {
    let p = v.params();
    let mut out = Vec::with_capacity(38);
    out.push(FIELD_BITS as u8);
    out.extend_from_slice(&(p.t as u16).to_le_bytes());
    out.extend_from_slice(&(p.k as u16).to_le_bytes());
    out.extend_from_slice(&p.alpha.to_le_bytes());
    let (mode, omega) = match p.chaff {
        ChaffMode::Uniform { omega } => (0u8, omega),
        ChaffMode::Adaptive => (1u8, 0.0),
    };
    out.push(mode);
    out.extend_from_slice(&omega.to_le_bytes());
    out.extend_from_slice(v.salt());
    out
}

fn encode_points(v: &VaultRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * v.len());
    for pt in v.points() {
        out.extend_from_slice(&pt.a.0.to_le_bytes());
        out.extend_from_slice(&pt.p.0.to_le_bytes());
    }
    out
}

fn decode_vault(params: &[u8], points: &[u8]) -> Result<VaultRecord> {
    let bad = |m: &str| Error::CorruptFile(m.to_string());
    let mut r = Reader::new(params);
    let fields = (|| Some((r.u8()?, r.u16()?, r.u16()?, r.f64()?, r.u8()?, r.f64()?, r.take(16)?)))();
    let (l, t, k, alpha, mode, omega, salt) = fields.ok_or_else(|| bad("short params block"))?;
    if !r.rest().is_empty() {
        return Err(bad("oversized params block"));
    }
    if l as u32 != FIELD_BITS {
        return Err(bad("unsupported field size"));
    }
    let chaff = match mode {
        0 => ChaffMode::Uniform { omega },
        1 => ChaffMode::Adaptive,
        _ => return Err(bad("unknown chaff mode")),
    };
    let params = VaultParams { t: t as usize, k: k as usize, alpha, chaff };
    if !points.len().is_multiple_of(4) {
        return Err(bad("ragged point section"));
    }
    let pts: Vec<VaultPoint> = points
        .chunks_exact(4)
        .map(|c| VaultPoint {
            a: FieldElem(u16::from_le_bytes([c[0], c[1]])),
            p: FieldElem(u16::from_le_bytes([c[2], c[3]])),
        })
        .collect();
    if pts.windows(2).any(|w| w[0].a >= w[1].a) {
        return Err(bad("vault points not in canonical order"));
    }
    VaultRecord::from_parts(pts, params, salt.try_into().unwrap()).map_err(|e| bad(&e.to_string()))
}

fn check_magic<'a>(r: &mut Reader<'a>, magic: &[u8]) -> Result<()> {
    let head = r.take(magic.len()).ok_or_else(|| Error::CorruptFile("truncated header".into()))?;
    if head == magic {
        return Ok(());
    }
    if head.starts_with(b"OSFV") {
        return Err(Error::VersionMismatch(String::from_utf8_lossy(head).into_owned()));
    }
    Err(Error::CorruptFile("not a template file".into()))
}

pub fn encode_bct(bct: &BioCryptoTemplate) -> Vec<u8> {
    let mut out = FORMAT_VERSION.as_bytes().to_vec();
    push_section(&mut out, &encode_params(&bct.vault));
    push_section(&mut out, &encode_points(&bct.vault));
    push_section(&mut out, &bct.kdf_salt);
    push_section(&mut out, &bct.eur);
    push_section(&mut out, &bct.key_digest.0);
    out
}

pub fn decode_bct(buf: &[u8]) -> Result<BioCryptoTemplate> {
    let mut r = Reader::new(buf);
    check_magic(&mut r, FORMAT_VERSION.as_bytes())?;
    let truncated = || Error::CorruptFile("truncated section".into());
    let params = r.section().ok_or_else(truncated)?;
    let points = r.section().ok_or_else(truncated)?;
    let salt = r.section().ok_or_else(truncated)?;
    let eur = r.section().ok_or_else(truncated)?;
    let digest = r.section().ok_or_else(truncated)?;
    if !r.rest().is_empty() {
        return Err(Error::CorruptFile("trailing bytes".into()));
    }
    let vault = decode_vault(params, points)?;
    Ok(BioCryptoTemplate {
        vault,
        eur: eur.to_vec(),
        kdf_salt: salt.try_into().map_err(|_| Error::CorruptFile("kdf salt must be 16 bytes".into()))?,
        key_digest: KeyDigest(digest.try_into().map_err(|_| Error::CorruptFile("digest must be 32 bytes".into()))?),
    })
}

/// Sidecar holding the additional vaults of an ensemble enrollment.
pub fn encode_ensemble(vaults: &[VaultRecord]) -> Vec<u8> {
    let mut out = ENSEMBLE_MAGIC.to_vec();
    out.extend_from_slice(&(vaults.len() as u32).to_le_bytes());
    for v in vaults {
        push_section(&mut out, &encode_params(v));
        push_section(&mut out, &encode_points(v));
    }
    out
}

pub fn decode_ensemble(buf: &[u8]) -> Result<Vec<VaultRecord>> {
    let mut r = Reader::new(buf);
    check_magic(&mut r, ENSEMBLE_MAGIC)?;
    let truncated = || Error::CorruptFile("truncated ensemble file".into());
    let n = r.u32().ok_or_else(truncated)?;
    let mut out = Vec::new();
    for _ in 0..n {
        let params = r.section().ok_or_else(truncated)?;
        let points = r.section().ok_or_else(truncated)?;
        out.push(decode_vault(params, points)?);
    }
    if !r.rest().is_empty() {
        return Err(Error::CorruptFile("trailing bytes".into()));
    }
    Ok(out)
}

/// Writes to a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_bct(bct: &BioCryptoTemplate, path: &Path) -> Result<()> {
    write_atomic(path, &encode_bct(bct))
}

pub fn read_bct(path: &Path) -> Result<BioCryptoTemplate> {
    decode_bct(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{key_digest, SecretKey};
    use crate::features::RawFeatureVector;
    use crate::vault::encode_vault;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sample_ur(rng: &mut ChaCha20Rng) -> UserRepresentation {
        let fi = rand::seq::index::sample(rng, 500, 20).into_vec();
        let vi = UserRepresentation::assign_virtual_indexes(rng, 20).unwrap();
        let delta = (0..20).map(|_| rng.random_range(0.004..0.1)).collect();
        UserRepresentation::new(fi, vi, delta).unwrap()
    }

    fn sample_bct(seed: u64, chaff: ChaffMode) -> BioCryptoTemplate {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ur = sample_ur(&mut rng);
        let tpl = RawFeatureVector::new((0..500).map(|_| rng.random()).collect()).unwrap();
        let key = SecretKey::random(&mut rng, 128);
        let params = VaultParams { t: 20, k: 7, alpha: 1.0, chaff };
        let vault = encode_vault(&tpl, &ur, &key, &params, seed).unwrap();
        let payload = SealedUr { ur, ks_original: 128, sv_gate: None };
        let (eur, kdf_salt) = seal_ur(&payload, "pw", &KdfParams::insecure_fast()).unwrap();
        BioCryptoTemplate { vault, eur, kdf_salt, key_digest: key_digest(&key) }
    }

    #[test]
    fn seal_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let payload = SealedUr {
            ur: sample_ur(&mut rng),
            ks_original: 100,
            sv_gate: Some(SvGate { centroid: vec![0.25, 0.5, 0.125], threshold: 0.3 }),
        };
        let kdf = KdfParams::insecure_fast();
        let (blob, salt) = seal_ur(&payload, "correct horse", &kdf).unwrap();
        assert_eq!(open_ur(&blob, &salt, "correct horse").unwrap(), payload);

        let (blob2, salt2) = seal_ur(&payload, "correct horse", &kdf).unwrap();
        assert_ne!(blob, blob2);
        assert_ne!(salt, salt2);

        assert!(matches!(open_ur(&blob, &salt, "correct hors"), Err(Error::AuthFailure)));
        assert!(matches!(open_ur(&blob[..20], &salt, "correct horse"), Err(Error::AuthFailure)));
        assert!(matches!(seal_ur(&payload, "", &kdf), Err(Error::EmptyPassword)));

        let mut greedy = blob.clone();
        greedy[..4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(open_ur(&greedy, &salt, "correct horse"), Err(Error::AuthFailure)));
    }

    #[test]
    fn ciphertext_hides_representation() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let payload = SealedUr { ur: sample_ur(&mut rng), ks_original: 128, sv_gate: None };
        let plain = encode_payload(&payload).unwrap();
        let (blob, _) = seal_ur(&payload, "pw", &KdfParams::insecure_fast()).unwrap();
        // no 8-byte window of the serialized representation survives
        for w in plain.windows(8) {
            assert!(!blob.windows(8).any(|b| b == w));
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for (seed, chaff) in [(1, ChaffMode::Uniform { omega: 0.025 }), (2, ChaffMode::Adaptive)] {
            let bct = sample_bct(seed, chaff);
            let path = dir.path().join(format!("u{seed}.bct"));
            write_bct(&bct, &path).unwrap();
            assert_eq!(read_bct(&path).unwrap(), bct);
            let bytes = fs::read(&path).unwrap();
            assert_eq!(encode_bct(&decode_bct(&bytes).unwrap()), bytes);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode_bct(&sample_bct(3, ChaffMode::Uniform { omega: 0.1 }));
        for cut in [0, 3, 5, 9, 60, bytes.len() - 1] {
            assert!(matches!(decode_bct(&bytes[..cut]), Err(Error::CorruptFile(_))), "cut {cut}");
        }
        let mut v2 = bytes.clone();
        v2[4] = b'2';
        assert!(matches!(decode_bct(&v2), Err(Error::VersionMismatch(v)) if v == "OSFV2"));
        let mut junk = bytes.clone();
        junk[0] = b'X';
        assert!(matches!(decode_bct(&junk), Err(Error::CorruptFile(_))));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(decode_bct(&trailing), Err(Error::CorruptFile(_))));

        // swap two points to break canonical order
        let mut unsorted = bytes.clone();
        let points_at = 5 + 4 + 38 + 4;
        let (a, b) = unsorted[points_at..points_at + 8].split_at_mut(4);
        a.swap_with_slice(b);
        assert!(matches!(decode_bct(&unsorted), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn ensemble_roundtrip() {
        let vs: Vec<_> = (0..3).map(|s| sample_bct(10 + s, ChaffMode::Adaptive).vault).collect();
        let bytes = encode_ensemble(&vs);
        assert_eq!(decode_ensemble(&bytes).unwrap(), vs);
        assert!(decode_ensemble(&bytes[..bytes.len() - 2]).is_err());
    }
}
