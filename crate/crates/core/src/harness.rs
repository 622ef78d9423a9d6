//! Enrollment, unlocking and the FRR/FAR evaluation pipeline.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::bct_store::{open_ur, seal_ur, BioCryptoTemplate, KdfParams, SealedUr};
use crate::codec::{key_digest, KeyDigest, SecretKey};
use crate::error::{Error, Result};
use crate::features::{
    estimate_variability, rank_prototypes, select_features_wd, select_features_wi, synth_user, Dataset,
    DissimilaritySample, PairLabel, RawFeatureVector, Sample, SampleLabel, UserRepresentation, DELTA_MIN,
};
use crate::keytools::{fixed_plan, intra_variability, pad_key, plan_key_size, unpad_key, KeyPlan, MIN_DEGREE};
use crate::security::{estimate_security, SecurityEstimate};
use crate::vault::{decode_vault, decode_with_guess, encode_vault, random_guess, ChaffMode, VaultParams, VaultRecord};

/// SplitMix64 finalizer; derives independent seeds from (seed, tag).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Centroid-distance verifier run before any vault is touched.
#[derive(Clone, Debug, PartialEq)]
pub struct SvGate {
    pub centroid: Vec<f64>,
    pub threshold: f64,
}

impl SvGate {
    pub const THRESHOLD_FACTOR: f64 = 1.5;

    /// Threshold is 1.5 times the largest template-to-centroid distance.
    pub fn fit(templates: &[RawFeatureVector]) -> Result<SvGate> {
        if templates.len() < 2 {
            return Err(Error::TooFewTemplates { need: 2, got: templates.len() });
        }
        let dim = templates[0].dim();
        let n = templates.len() as f64;
        let centroid: Vec<f64> = (0..dim).map(|j| templates.iter().map(|t| t.values()[j]).sum::<f64>() / n).collect();
        let mut gate = SvGate { centroid, threshold: 0.0 };
        let spread = templates.iter().map(|t| gate.distance(t)).fold(0.0, f64::max);
        gate.threshold = Self::THRESHOLD_FACTOR * spread.max(f64::EPSILON);
        Ok(gate)
    }

    pub fn distance(&self, q: &RawFeatureVector) -> f64 {
        self.centroid.iter().zip(q.values()).map(|(c, v)| (c - v).powi(2)).sum::<f64>().sqrt()
    }

    pub fn accepts(&self, q: &RawFeatureVector) -> bool {
        q.dim() == self.centroid.len() && self.distance(q) <= self.threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnrollOptions {
    pub t: usize,
    /// Dimension of the writer-independent representation.
    pub wi_dim: usize,
    pub alpha: f64,
    pub chaff: ChaffMode,
    pub adaptive_key: bool,
    /// Number of vaults, each locked with a different template.
    pub ensemble: usize,
    pub sv_gate: bool,
    pub select_prototype: bool,
    pub kdf: KdfParams,
    pub seed: u64,
}

impl Default for EnrollOptions {
    fn default() -> Self {
        EnrollOptions {
            t: 20,
            wi_dim: 60,
            alpha: 1.0,
            chaff: ChaffMode::Uniform { omega: 0.2 },
            adaptive_key: false,
            ensemble: 1,
            sv_gate: false,
            select_prototype: true,
            kdf: KdfParams::default(),
            seed: 0,
        }
    }
}

/// Writer-independent model learned on development writers.
#[derive(Clone, Debug)]
pub struct DevModel {
    pub wi: Vec<usize>,
    negatives: Vec<(u32, RawFeatureVector)>,
}

const DEV_GENUINE_PER_USER: usize = 6;
const DEV_REFS_PER_FORGERY: usize = 3;

impl DevModel {
    /// Genuine/genuine pairs against genuine/forgery pairs per writer; writers
    /// without forgeries are contrasted with the next writer's genuine samples.
    pub fn fit(dev: &Dataset, wi_dim: usize) -> Result<DevModel> {
        let users = dev.users();
        let mut samples = Vec::new();
        let mut negatives = Vec::new();
        for (ui, &u) in users.iter().enumerate() {
            let gen = dev.of(u, SampleLabel::Genuine);
            let gen = &gen[..gen.len().min(DEV_GENUINE_PER_USER)];
            if let Some(first) = gen.first() {
                negatives.push((u, first.clone()));
            }
            for i in 0..gen.len() {
                for j in i + 1..gen.len() {
                    samples.push(DissimilaritySample::between(&gen[i], &gen[j], PairLabel::Genuine));
                }
            }
            let mut forgeries: Vec<_> = SampleLabel::FORGERIES.iter().flat_map(|&l| dev.of(u, l)).collect();
            if forgeries.is_empty() && users.len() > 1 {
                forgeries = dev.of(users[(ui + 1) % users.len()], SampleLabel::Genuine);
            }
            for f in &forgeries {
                for g in gen.iter().take(DEV_REFS_PER_FORGERY) {
                    samples.push(DissimilaritySample::between(g, f, PairLabel::Forgery));
                }
            }
        }
        let wi_dim = wi_dim.min(dev.dim);
        let wi = select_features_wi(&samples, wi_dim)?;
        Ok(DevModel { wi, negatives })
    }

    /// One genuine sample per development writer other than `exclude`.
    pub fn negatives(&self, exclude: Option<u32>) -> Vec<RawFeatureVector> {
        self.negatives.iter().filter(|(u, _)| Some(*u) != exclude).map(|(_, v)| v.clone()).collect()
    }
}

/// Everything derived from a user's enrollment templates.
#[derive(Clone, Debug)]
pub struct UserModel {
    pub ur: UserRepresentation,
    /// Template indexes, best prototype first.
    pub prototypes: Vec<usize>,
    pub plan: KeyPlan,
    pub sv_gate: Option<SvGate>,
}

pub fn build_user_model<R: Rng>(
    templates: &[RawFeatureVector],
    dev: &DevModel,
    exclude_user: Option<u32>,
    opts: &EnrollOptions,
    ks_original: usize,
    rng: &mut R,
) -> Result<UserModel> {
    if templates.is_empty() {
        return Err(Error::TooFewTemplates { need: 1, got: 0 });
    }
    let t = opts.t;
    if dev.wi.len() < t {
        return Err(Error::BadParams(format!("WI representation has {} features, need t = {t}", dev.wi.len())));
    }
    let negatives = dev.negatives(exclude_user);

    let fi = if templates.len() >= 2 && !negatives.is_empty() {
        let mut user_samples = Vec::new();
        for i in 0..templates.len() {
            for j in i + 1..templates.len() {
                user_samples.push(
                    DissimilaritySample::between(&templates[i], &templates[j], PairLabel::Genuine).project(&dev.wi),
                );
            }
            for n in &negatives {
                user_samples.push(DissimilaritySample::between(&templates[i], n, PairLabel::Forgery).project(&dev.wi));
            }
        }
        select_features_wd(&user_samples, &dev.wi, t)?
    } else {
        dev.wi[..t].to_vec()
    };
    let delta = if templates.len() >= 2 { estimate_variability(templates, &fi)? } else { vec![DELTA_MIN; t] };
    let vi = UserRepresentation::assign_virtual_indexes(rng, t)?;
    let ur = UserRepresentation::new(fi, vi, delta)?;

    let prototypes = if opts.select_prototype && templates.len() >= 2 {
        rank_prototypes(templates, templates, &negatives, &ur)?
    } else {
        (0..templates.len()).collect()
    };
    let plan = if opts.adaptive_key {
        plan_key_size(intra_variability(templates, &ur)?, t, ks_original)?
    } else {
        fixed_plan(ks_original.div_ceil(16).saturating_sub(1).max(MIN_DEGREE), t, ks_original)?
    };
    let sv_gate = if opts.sv_gate { Some(SvGate::fit(templates)?) } else { None };
    Ok(UserModel { ur, prototypes, plan, sv_gate })
}

/// Pads the key per the plan and locks it in `opts.ensemble` vaults.
pub fn lock_key(
    templates: &[RawFeatureVector],
    model: &UserModel,
    key: &SecretKey,
    opts: &EnrollOptions,
    seed: u64,
) -> Result<(Vec<VaultRecord>, KeyDigest)> {
    if opts.ensemble == 0 || opts.ensemble > model.prototypes.len() {
        return Err(Error::BadParams(format!(
            "ensemble of {} needs as many templates, have {}",
            opts.ensemble,
            model.prototypes.len()
        )));
    }
    let padded = pad_key(key, &model.plan, derive_seed(seed, 1))?;
    let params = VaultParams { t: opts.t, k: model.plan.k, alpha: opts.alpha, chaff: opts.chaff };
    let vaults = model.prototypes[..opts.ensemble]
        .iter()
        .enumerate()
        .map(|(j, &ti)| encode_vault(&templates[ti], &model.ur, &padded, &params, derive_seed(seed, 100 + j as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((vaults, key_digest(&padded)))
}

/// Decodes every vault and releases the key agreed on by a strict majority.
pub fn release_key(
    vaults: &[VaultRecord],
    digest: &KeyDigest,
    sealed: &SealedUr,
    query: &RawFeatureVector,
    use_gate: bool,
) -> Result<SecretKey> {
    if use_gate {
        let gate =
            sealed.sv_gate.as_ref().ok_or_else(|| Error::BadParams("template has no verification reference".into()))?;
        if !gate.accepts(query) {
            return Err(Error::SvReject);
        }
    }
    let decoded: Vec<SecretKey> =
        vaults.iter().filter_map(|v| decode_vault(query, &sealed.ur, v, digest).0.ok()).collect();
    majority(&decoded, vaults.len()).map_or(Err(Error::DecodeFailed), |k| unpad_key(k, sealed.ks_original))
}

fn majority(keys: &[SecretKey], voters: usize) -> Option<&SecretKey> {
    keys.iter().find(|k| keys.iter().filter(|o| o == k).count() * 2 > voters)
}

#[derive(Clone, Debug)]
pub struct Enrollment {
    pub bct: BioCryptoTemplate,
    /// Vaults beyond the first when an ensemble was requested.
    pub extra_vaults: Vec<VaultRecord>,
    pub plan: KeyPlan,
}

impl Enrollment {
    pub fn vaults(&self) -> Vec<VaultRecord> {
        std::iter::once(self.bct.vault.clone()).chain(self.extra_vaults.iter().cloned()).collect()
    }
}

pub fn enroll(
    templates: &[RawFeatureVector],
    dev: &Dataset,
    pw: &str,
    key: &SecretKey,
    opts: &EnrollOptions,
) -> Result<Enrollment> {
    if pw.is_empty() {
        return Err(Error::EmptyPassword);
    }
    let dev_model = DevModel::fit(dev, opts.wi_dim)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let model = build_user_model(templates, &dev_model, None, opts, key.bits(), &mut rng)?;
    let (mut vaults, digest) = lock_key(templates, &model, key, opts, rng.random())?;
    let sealed = SealedUr { ur: model.ur, ks_original: key.bits(), sv_gate: model.sv_gate };
    let (eur, kdf_salt) = seal_ur(&sealed, pw, &opts.kdf)?;
    let extra_vaults = vaults.split_off(1);
    let bct = BioCryptoTemplate { vault: vaults.remove(0), eur, kdf_salt, key_digest: digest };
    Ok(Enrollment { bct, extra_vaults, plan: model.plan })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UnlockOptions {
    pub sv_gate: bool,
}

/// Password first, then the optional verification gate, then the vaults.
pub fn unlock(
    bct: &BioCryptoTemplate,
    extra_vaults: &[VaultRecord],
    query: &RawFeatureVector,
    pw: &str,
    opts: &UnlockOptions,
) -> Result<SecretKey> {
    let sealed = open_ur(&bct.eur, &bct.kdf_salt, pw)?;
    let vaults: Vec<VaultRecord> = std::iter::once(bct.vault.clone()).chain(extra_vaults.iter().cloned()).collect();
    release_key(&vaults, &bct.key_digest, &sealed, query, opts.sv_gate)
}

/// Eq. 5 estimate for a stored template; adaptive-chaff vaults use their
/// effective omega.
pub fn report_entropy(vault: &VaultRecord) -> Result<SecurityEstimate> {
    let p = vault.params();
    let omega = match p.chaff {
        ChaffMode::Uniform { omega } => omega,
        ChaffMode::Adaptive => vault.effective_omega(),
    };
    estimate_security(p.t, p.k, p.alpha, omega)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub enroll: EnrollOptions,
    /// Enrollment templates per user; the remaining genuine samples are queries.
    pub enroll_count: usize,
    pub key_bits: usize,
    /// When false, forgeries attack the vault with guessed indexes.
    pub attacker_has_password: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { enroll: EnrollOptions::default(), enroll_count: 5, key_bits: 128, attacker_has_password: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub trials: usize,
    pub errors: usize,
}

impl Tally {
    fn add(&mut self, error: bool) {
        self.trials += 1;
        self.errors += error as usize;
    }

    fn merge(&mut self, o: Tally) {
        self.trials += o.trials;
        self.errors += o.errors;
    }

    /// Percentage; `None` without trials.
    pub fn rate(&self) -> Option<f64> {
        (self.trials > 0).then(|| 100.0 * self.errors as f64 / self.trials as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserRow {
    pub user_id: u32,
    pub e: usize,
    pub k: usize,
    /// Effective omega of the user's first vault.
    pub omega: f64,
    pub entropy_bits: f64,
    pub genuine: Tally,
    pub random: Tally,
    pub simple: Tally,
    pub simulated: Tally,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub frr: f64,
    pub far_random: Option<f64>,
    pub far_simple: Option<f64>,
    pub far_simulated: Option<f64>,
    /// Unweighted mean of FRR and the available FAR classes.
    pub aer_all: f64,
    pub mean_k: f64,
    pub mean_entropy_bits: f64,
    pub entropy_at_mean_k: f64,
    pub per_user: Vec<UserRow>,
    pub options: EvalOptions,
}

fn evaluate_user(
    dataset: &Dataset,
    dev: &DevModel,
    exclude_dev_self: bool,
    user: u32,
    opts: &EvalOptions,
) -> Result<UserRow> {
    let genuine = dataset.of(user, SampleLabel::Genuine);
    if genuine.len() <= opts.enroll_count || opts.enroll_count == 0 {
        return Err(Error::InsufficientSamples(format!(
            "user {user} has {} genuine samples, need more than {}",
            genuine.len(),
            opts.enroll_count
        )));
    }
    let (templates, queries) = genuine.split_at(opts.enroll_count);
    let seed = derive_seed(opts.enroll.seed, user as u64);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = SecretKey::random(&mut rng, opts.key_bits);
    let exclude = exclude_dev_self.then_some(user);
    let model = build_user_model(templates, dev, exclude, &opts.enroll, opts.key_bits, &mut rng)?;
    let (vaults, digest) = lock_key(templates, &model, &key, &opts.enroll, rng.random())?;
    let sealed = SealedUr { ur: model.ur.clone(), ks_original: opts.key_bits, sv_gate: model.sv_gate.clone() };
    let accepted =
        |q: &RawFeatureVector| release_key(&vaults, &digest, &sealed, q, opts.enroll.sv_gate).is_ok_and(|k| k == key);

    let mut row = UserRow {
        user_id: user,
        e: model.plan.e,
        k: model.plan.k,
        omega: vaults[0].effective_omega(),
        entropy_bits: report_entropy(&vaults[0])?.entropy_bits,
        genuine: Tally::default(),
        random: Tally::default(),
        simple: Tally::default(),
        simulated: Tally::default(),
    };
    for q in queries {
        row.genuine.add(!accepted(q));
    }
    for label in SampleLabel::FORGERIES {
        let tally = match label {
            SampleLabel::Random => &mut row.random,
            SampleLabel::Simple => &mut row.simple,
            _ => &mut row.simulated,
        };
        for f in dataset.of(user, label) {
            let hit = if opts.attacker_has_password {
                accepted(&f)
            } else {
                let guess = random_guess(&mut rng, dataset.dim, &vaults[0], DELTA_MIN * 4.0)?;
                decode_with_guess(&f, &guess, &vaults[0], &digest).0.is_ok()
            };
            tally.add(hit);
        }
    }
    Ok(row)
}

/// Per-user enroll/attack protocol. WI selection uses `dev` when given,
/// otherwise the evaluation set itself (each user's own samples are then
/// kept out of its negatives).
pub fn evaluate(dataset: &Dataset, dev: Option<&Dataset>, opts: &EvalOptions) -> Result<EvalReport> {
    let users = dataset.users();
    if users.is_empty() {
        return Err(Error::InsufficientSamples("dataset has no users".into()));
    }
    let dev_model = DevModel::fit(dev.unwrap_or(dataset), opts.enroll.wi_dim)?;
    let rows = users
        .par_iter()
        .map(|&u| evaluate_user(dataset, &dev_model, dev.is_none(), u, opts))
        .collect::<Result<Vec<_>>>()?;

    let mut pooled = [Tally::default(); 4];
    for r in &rows {
        for (p, t) in pooled.iter_mut().zip([r.genuine, r.random, r.simple, r.simulated]) {
            p.merge(t);
        }
    }
    let frr = pooled[0].rate().unwrap_or(0.0);
    let fars: Vec<Option<f64>> = pooled[1..].iter().map(Tally::rate).collect();
    let present: Vec<f64> = std::iter::once(frr).chain(fars.iter().flatten().copied()).collect();
    let aer_all = present.iter().sum::<f64>() / present.len() as f64;

    let n = rows.len() as f64;
    let mean_k = rows.iter().map(|r| r.k as f64).sum::<f64>() / n;
    let mean_entropy_bits = rows.iter().map(|r| r.entropy_bits).sum::<f64>() / n;
    let omega = match opts.enroll.chaff {
        ChaffMode::Uniform { omega } => omega,
        ChaffMode::Adaptive => (rows.iter().map(|r| r.omega.log2()).sum::<f64>() / n).exp2(),
    };
    let entropy_at_mean_k = entropy_fractional_k(opts.enroll.t, mean_k, opts.enroll.alpha, omega);

    Ok(EvalReport {
        frr,
        far_random: fars[0],
        far_simple: fars[1],
        far_simulated: fars[2],
        aer_all,
        mean_k,
        mean_entropy_bits,
        entropy_at_mean_k,
        per_user: rows,
        options: *opts,
    })
}

/// Eq. 5 in bits with a real-valued degree (for averaged k).
fn entropy_fractional_k(t: usize, k: f64, alpha: f64, omega: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let n = (alpha + 1.0) * t as f64;
    let picks = k + 1.0;
    (ln_gamma(n + 1.0) - ln_gamma(picks + 1.0) - ln_gamma(n - picks + 1.0)) / std::f64::consts::LN_2
        - picks * omega.log2()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |r| format!("{r:.2}"))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.options;
        let chaff = match o.enroll.chaff {
            ChaffMode::Uniform { omega } => format!("uniform(omega={omega})"),
            ChaffMode::Adaptive => "adaptive".to_string(),
        };
        writeln!(
            f,
            "users={} t={} alpha={} chaff={} key={} ensemble={} sv_gate={} password_known={}",
            self.per_user.len(),
            o.enroll.t,
            o.enroll.alpha,
            chaff,
            if o.enroll.adaptive_key { "adaptive" } else { "fixed" },
            o.enroll.ensemble,
            o.enroll.sv_gate,
            o.attacker_has_password
        )?;
        writeln!(f, "{:<14}{:>8}", "metric", "%")?;
        writeln!(f, "{:<14}{:>8.2}", "FRR", self.frr)?;
        writeln!(f, "{:<14}{:>8}", "FAR_random", pct(self.far_random))?;
        writeln!(f, "{:<14}{:>8}", "FAR_simple", pct(self.far_simple))?;
        writeln!(f, "{:<14}{:>8}", "FAR_simulated", pct(self.far_simulated))?;
        writeln!(f, "{:<14}{:>8.2}", "AER_all", self.aer_all)?;
        writeln!(
            f,
            "mean k = {:.2}, mean entropy = {:.1} bits, entropy at mean k = {:.1} bits",
            self.mean_k, self.mean_entropy_bits, self.entropy_at_mean_k
        )
    }
}

impl EvalReport {
    /// Machine-readable rows: one per user, then an `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,e,k,entropy_bits,frr,far_random,far_simple,far_simulated\n");
        for r in &self.per_user {
            out.push_str(&format!(
                "{},{},{},{:.3},{},{},{},{}\n",
                r.user_id,
                r.e,
                r.k,
                r.entropy_bits,
                pct(r.genuine.rate()),
                pct(r.random.rate()),
                pct(r.simple.rate()),
                pct(r.simulated.rate())
            ));
        }
        out.push_str(&format!(
            "all,,{:.3},{:.3},{:.2},{},{},{}\n",
            self.mean_k,
            self.mean_entropy_bits,
            self.frr,
            pct(self.far_random),
            pct(self.far_simple),
            pct(self.far_simulated)
        ));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleCounts {
    pub genuine: usize,
    pub forgery: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts { genuine: 15, forgery: 10 }
    }
}

/// Synthetic cohort of `n_users` writers with ids starting at `first_user`.
pub fn gen_dataset(seed: u64, n_users: usize, dim: usize, counts: SampleCounts, first_user: u32) -> Result<Dataset> {
    let mut samples = Vec::new();
    for u in 0..n_users as u32 {
        let uid = first_user + u;
        let (_, s) = synth_user(derive_seed(seed, uid as u64), dim, counts.genuine, counts.forgery)?;
        let mut next = 0u32;
        for (label, set) in [
            (SampleLabel::Genuine, s.genuine),
            (SampleLabel::Random, s.random),
            (SampleLabel::Simple, s.simple),
            (SampleLabel::Simulated, s.simulated),
        ] {
            for features in set {
                samples.push(Sample { user_id: uid, sample_id: next, label, features });
                next += 1;
            }
        }
    }
    Ok(Dataset { dim, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_opts() -> EnrollOptions {
        EnrollOptions { kdf: KdfParams::insecure_fast(), wi_dim: 40, ..EnrollOptions::default() }
    }

    #[test]
    fn gate_fit() {
        let a = RawFeatureVector::new(vec![0.0, 0.0]).unwrap();
        let b = RawFeatureVector::new(vec![0.2, 0.0]).unwrap();
        let g = SvGate::fit(&[a.clone(), b]).unwrap();
        assert_eq!(g.centroid, vec![0.1, 0.0]);
        assert!((g.threshold - 0.15).abs() < 1e-12);
        assert!(g.accepts(&a));
        assert!(!g.accepts(&RawFeatureVector::new(vec![0.3, 0.0]).unwrap()));
        assert!(SvGate::fit(&[a]).is_err());
    }

    #[test]
    fn majority_rule() {
        let a = SecretKey::from_bytes(&[1]);
        let b = SecretKey::from_bytes(&[2]);
        assert_eq!(majority(std::slice::from_ref(&a), 1), Some(&a));
        assert_eq!(majority(std::slice::from_ref(&a), 3), None);
        assert_eq!(majority(&[a.clone(), a.clone()], 3), Some(&a));
        assert_eq!(majority(&[a.clone(), b.clone()], 3), None);
        assert_eq!(majority(&[], 1), None);
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
        assert_eq!(derive_seed(9, 9), derive_seed(9, 9));
    }

    #[test]
    fn single_template_uses_wi_prefix() {
        let dev = gen_dataset(1, 8, 50, SampleCounts { genuine: 6, forgery: 3 }, 100).unwrap();
        let user = gen_dataset(2, 1, 50, SampleCounts { genuine: 2, forgery: 0 }, 0).unwrap();
        let tpl = user.of(0, SampleLabel::Genuine);
        let model = DevModel::fit(&dev, 40).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m = build_user_model(&tpl[..1], &model, None, &fast_opts(), 128, &mut rng).unwrap();
        assert_eq!(m.ur.fi, model.wi[..20].to_vec());
        assert_eq!(m.ur.delta, vec![DELTA_MIN; 20]);
        assert_eq!(m.prototypes, vec![0]);

        let key = SecretKey::random(&mut rng, 128);
        let e = enroll(&tpl[..1], &dev, "pw", &key, &fast_opts()).unwrap();
        let got = unlock(&e.bct, &e.extra_vaults, &tpl[0], "pw", &UnlockOptions::default()).unwrap();
        assert_eq!(got, key);
    }

    #[test]
    fn report_rates_are_consistent() {
        let ds = gen_dataset(4, 4, 60, SampleCounts { genuine: 8, forgery: 3 }, 0).unwrap();
        let opts = EvalOptions { enroll: fast_opts(), ..EvalOptions::default() };
        let r = evaluate(&ds, None, &opts).unwrap();
        for rate in [Some(r.frr), r.far_random, r.far_simple, r.far_simulated].into_iter().flatten() {
            assert!((0.0..=100.0).contains(&rate));
        }
        let mean = (r.frr + r.far_random.unwrap() + r.far_simple.unwrap() + r.far_simulated.unwrap()) / 4.0;
        assert!((r.aer_all - mean).abs() < 1e-12);
        assert_eq!(r.per_user.len(), 4);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(format!("{r}").contains("AER_all"));

        let short = gen_dataset(4, 2, 60, SampleCounts { genuine: 5, forgery: 1 }, 0).unwrap();
        assert!(matches!(evaluate(&short, None, &opts), Err(Error::InsufficientSamples(_))));
    }
}
