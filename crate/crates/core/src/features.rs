//! Feature vectors, quantization, variability and feature/prototype selection.
//!
//! Raw features are reals in [0, 1]. Each selected feature is quantized to an
//! 8-bit value symbol and paired with an 8-bit virtual index; the two halves
//! form one 16-bit vault abscissa.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gfpoly::{FieldElem, HALF_BITS, HALF_SIZE};

/// One quantization step in normalized units; floor for every variability.
pub const DELTA_MIN: f64 = 1.0 / HALF_SIZE as f64;
/// Regularizer in the Fisher ratio denominator.
pub const FISHER_ZETA: f64 = 1e-9;

const MAX_SYMBOL: f64 = (HALF_SIZE - 1) as f64;

#[derive(Clone, Debug, PartialEq)]
pub struct RawFeatureVector(Vec<f64>);

impl RawFeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Dataset(format!("feature value {v} outside [0, 1]")));
        }
        Ok(RawFeatureVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    fn get(&self, index: usize) -> Result<f64> {
        self.0.get(index).copied().ok_or(Error::IndexOutOfRange { index, dim: self.0.len() })
    }
}

/// Per-user model needed to lock and unlock: selected feature indexes, their
/// virtual indexes in the vault, and expected variabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct UserRepresentation {
    pub fi: Vec<usize>,
    pub vi: Vec<u8>,
    pub delta: Vec<f64>,
}

impl UserRepresentation {
    pub fn new(fi: Vec<usize>, vi: Vec<u8>, delta: Vec<f64>) -> Result<Self> {
        let ur = UserRepresentation { fi, vi, delta };
        ur.validate()?;
        Ok(ur)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.fi.len();
        if self.vi.len() != t || self.delta.len() != t {
            return Err(Error::BadParams("FI, VI and delta lengths differ".into()));
        }
        if self.fi.iter().collect::<BTreeSet<_>>().len() != t {
            return Err(Error::BadParams("feature indexes must be distinct".into()));
        }
        if self.vi.iter().collect::<BTreeSet<_>>().len() != t {
            return Err(Error::BadParams("virtual indexes must be distinct".into()));
        }
        if self.delta.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::BadParams("variabilities must be positive".into()));
        }
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.fi.len()
    }

    /// Matching window of feature `i` in quantization steps, round(2 delta_i 2^(l/2)).
    pub fn window(&self, i: usize) -> u32 {
        matching_window(self.delta[i])
    }

    /// Draws `t` distinct virtual indexes.
    pub fn assign_virtual_indexes<R: Rng + ?Sized>(rng: &mut R, t: usize) -> Result<Vec<u8>> {
        if t > HALF_SIZE as usize {
            return Err(Error::BadParams(format!("t = {t} exceeds {HALF_SIZE} virtual indexes")));
        }
        Ok(rand::seq::index::sample(rng, HALF_SIZE as usize, t).into_iter().map(|v| v as u8).collect())
    }
}

pub fn matching_window(delta: f64) -> u32 {
    (2.0 * delta * HALF_SIZE as f64).round() as u32
}

/// Quantized locking/unlocking set: virtual index and value symbol per feature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedVector {
    pub x: Vec<u8>,
    pub y: Vec<u8>,
}

impl QuantizedVector {
    /// The 16-bit vault abscissa x || y of element `i`.
    pub fn abscissa(&self, i: usize) -> FieldElem {
        join_halves(self.x[i], self.y[i])
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn join_halves(x: u8, y: u8) -> FieldElem {
    FieldElem((x as u16) << HALF_BITS | y as u16)
}

pub fn split_halves(a: FieldElem) -> (u8, u8) {
    ((a.0 >> HALF_BITS) as u8, a.0 as u8)
}

/// round(v * (2^(l/2) - 1)), half away from zero, clamped to the symbol range.
pub fn quantize_value(v: f64) -> u8 {
    (v * MAX_SYMBOL).round().clamp(0.0, MAX_SYMBOL) as u8
}

pub fn quantize(raw: &RawFeatureVector, ur: &UserRepresentation) -> Result<QuantizedVector> {
    let y = ur.fi.iter().map(|&f| raw.get(f).map(quantize_value)).collect::<Result<Vec<_>>>()?;
    Ok(QuantizedVector { x: ur.vi.clone(), y })
}

/// Sample standard deviation of each selected feature, floored at [`DELTA_MIN`].
pub fn estimate_variability(templates: &[RawFeatureVector], fi: &[usize]) -> Result<Vec<f64>> {
    if templates.len() < 2 {
        return Err(Error::TooFewTemplates { need: 2, got: templates.len() });
    }
    let n = templates.len() as f64;
    fi.iter()
        .map(|&f| {
            let vals = templates.iter().map(|t| t.get(f)).collect::<Result<Vec<_>>>()?;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(var.sqrt().max(DELTA_MIN))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairLabel {
    Genuine,
    Forgery,
}

/// Per-feature absolute differences between a query and a reference sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DissimilaritySample {
    pub dist: Vec<f64>,
    pub label: PairLabel,
}

impl DissimilaritySample {
    pub fn between(a: &RawFeatureVector, b: &RawFeatureVector, label: PairLabel) -> Self {
        let dist = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
        DissimilaritySample { dist, label }
    }

    /// Restriction to the given feature indexes.
    pub fn project(&self, indexes: &[usize]) -> Self {
        DissimilaritySample { dist: indexes.iter().map(|&i| self.dist[i]).collect(), label: self.label }
    }
}

/// Fisher ratio per dimension:
/// (mean_forgery - mean_genuine)^2 / (var_genuine + var_forgery + zeta).
pub fn fisher_scores(samples: &[DissimilaritySample]) -> Result<Vec<f64>> {
    let dim = samples.first().map_or(0, |s| s.dist.len());
    let (gen, forg): (Vec<_>, Vec<_>) = samples.iter().partition(|s| s.label == PairLabel::Genuine);
    if gen.is_empty() || forg.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    if samples.iter().any(|s| s.dist.len() != dim) {
        return Err(Error::Dataset("dissimilarity samples differ in dimension".into()));
    }
    let stats = |class: &[&DissimilaritySample], j: usize| {
        let n = class.len() as f64;
        let mean = class.iter().map(|s| s.dist[j]).sum::<f64>() / n;
        let var = class.iter().map(|s| (s.dist[j] - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    };
    Ok((0..dim)
        .map(|j| {
            let (mg, vg) = stats(&gen, j);
            let (mf, vf) = stats(&forg, j);
            (mf - mg).powi(2) / (vg + vf + FISHER_ZETA)
        })
        .collect())
}

/// Indexes sorted by descending score, ties to the lower index.
fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Writer-independent selection over a development population.
pub fn select_features_wi(dev_samples: &[DissimilaritySample], target_dim: usize) -> Result<Vec<usize>> {
    let scores = fisher_scores(dev_samples)?;
    if target_dim > scores.len() {
        return Err(Error::BadParams(format!("target_dim {target_dim} exceeds dimension {}", scores.len())));
    }
    let mut ranked = rank_by_score(&scores);
    ranked.truncate(target_dim);
    Ok(ranked)
}

/// Writer-dependent re-ranking of the WI features on one user's samples.
/// `user_samples` live in the WI-reduced space (one entry per `wi_indexes`).
pub fn select_features_wd(user_samples: &[DissimilaritySample], wi_indexes: &[usize], t: usize) -> Result<Vec<usize>> {
    if t > wi_indexes.len() {
        return Err(Error::BadParams(format!("t = {t} exceeds {} WI features", wi_indexes.len())));
    }
    let scores = fisher_scores(user_samples)?;
    if scores.len() != wi_indexes.len() {
        return Err(Error::Dataset("user samples are not in the WI-reduced space".into()));
    }
    Ok(rank_by_score(&scores).into_iter().take(t).map(|j| wi_indexes[j]).collect())
}

/// Count of features where two quantized vectors differ by more than the
/// matching window.
pub fn count_mismatches(a: &QuantizedVector, b: &QuantizedVector, ur: &UserRepresentation) -> usize {
    (0..ur.t()).filter(|&i| (a.y[i] as i32 - b.y[i] as i32).unsigned_abs() > ur.window(i)).count()
}

/// Margin of every template: min forgery errors minus max genuine errors.
pub fn prototype_margins(
    templates: &[RawFeatureVector],
    user_genuine: &[RawFeatureVector],
    user_forgery: &[RawFeatureVector],
    ur: &UserRepresentation,
) -> Result<Vec<i64>> {
    let quant = |set: &[RawFeatureVector]| set.iter().map(|s| quantize(s, ur)).collect::<Result<Vec<_>>>();
    let (tq, gq, fq) = (quant(templates)?, quant(user_genuine)?, quant(user_forgery)?);
    Ok(tq
        .iter()
        .map(|t| {
            let worst_gen = gq.iter().map(|g| count_mismatches(t, g, ur)).max().unwrap_or(0) as i64;
            let best_forg = fq.iter().map(|f| count_mismatches(t, f, ur)).min().unwrap_or(ur.t()) as i64;
            best_forg - worst_gen
        })
        .collect())
}

/// Templates ordered best-first by margin, ties to the lower index.
pub fn rank_prototypes(
    templates: &[RawFeatureVector],
    user_genuine: &[RawFeatureVector],
    user_forgery: &[RawFeatureVector],
    ur: &UserRepresentation,
) -> Result<Vec<usize>> {
    let margins = prototype_margins(templates, user_genuine, user_forgery, ur)?;
    let mut idx: Vec<usize> = (0..margins.len()).collect();
    idx.sort_by(|&a, &b| margins[b].cmp(&margins[a]).then(a.cmp(&b)));
    Ok(idx)
}

pub fn select_prototype(
    templates: &[RawFeatureVector],
    user_genuine: &[RawFeatureVector],
    user_forgery: &[RawFeatureVector],
    ur: &UserRepresentation,
) -> Result<usize> {
    if templates.len() <= 1 {
        return Ok(0);
    }
    Ok(rank_prototypes(templates, user_genuine, user_forgery, ur)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SampleLabel {
    Genuine,
    Random,
    Simple,
    Simulated,
}

impl SampleLabel {
    pub const FORGERIES: [SampleLabel; 3] = [SampleLabel::Random, SampleLabel::Simple, SampleLabel::Simulated];

    pub fn is_forgery(self) -> bool {
        self != SampleLabel::Genuine
    }
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleLabel::Genuine => "genuine",
            SampleLabel::Random => "random",
            SampleLabel::Simple => "simple",
            SampleLabel::Simulated => "simulated",
        })
    }
}

impl FromStr for SampleLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "genuine" => Ok(SampleLabel::Genuine),
            "random" => Ok(SampleLabel::Random),
            "simple" => Ok(SampleLabel::Simple),
            "simulated" => Ok(SampleLabel::Simulated),
            other => Err(Error::Dataset(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub user_id: u32,
    pub sample_id: u32,
    pub label: SampleLabel,
    pub features: RawFeatureVector,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn users(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.user_id).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn of(&self, user: u32, label: SampleLabel) -> Vec<RawFeatureVector> {
        self.samples.iter().filter(|s| s.user_id == user && s.label == label).map(|s| s.features.clone()).collect()
    }

    /// Header `user_id,sample_id,label,f0,...` then one row per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["user_id".to_string(), "sample_id".into(), "label".into()];
        header.extend((0..self.dim).map(|i| format!("f{i}")));
        out.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut row = vec![s.user_id.to_string(), s.sample_id.to_string(), s.label.to_string()];
            row.extend(s.features.values().iter().map(|v| format!("{v}")));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let dim = rdr
            .headers()
            .map_err(csv_err)?
            .len()
            .checked_sub(3)
            .ok_or_else(|| Error::Dataset("header needs user_id, sample_id, label columns".into()))?;
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Dataset("short row".into()));
            let parse_u32 = |i: usize| -> Result<u32> {
                field(i)?.parse().map_err(|_| Error::Dataset(format!("bad integer {:?}", rec.get(i))))
            };
            let values = (3..3 + dim)
                .map(|i| field(i)?.parse::<f64>().map_err(|_| Error::Dataset(format!("bad number {:?}", rec.get(i)))))
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample {
                user_id: parse_u32(0)?,
                sample_id: parse_u32(1)?,
                label: field(2)?.parse()?,
                features: RawFeatureVector::new(values)?,
            });
        }
        Ok(Dataset { dim, samples })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Dataset(e.to_string())
}

/// Parametric synthetic writer: per-feature genuine mean and spread plus
/// forgery biases expressed in units of the spread.
///
/// Half of the writers are consistent; the others produce a per-writer
/// fraction of sloppy samples drawn with a wider spread. Forgeries are drawn
/// with [`SynthUser::FORGERY_SPREAD`] times the genuine spread.
#[derive(Clone, Debug)]
pub struct SynthUser {
    pub mean: Vec<f64>,
    pub spread: Vec<f64>,
    pub simulated_bias: Vec<f64>,
    pub simple_bias: Vec<f64>,
    pub sloppy_rate: f64,
    seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct SynthSamples {
    pub genuine: Vec<RawFeatureVector>,
    pub random: Vec<RawFeatureVector>,
    pub simple: Vec<RawFeatureVector>,
    pub simulated: Vec<RawFeatureVector>,
}

fn signed_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

impl SynthUser {
    pub const MAX_SLOPPY_RATE: f64 = 0.6;
    pub const SLOPPY_SPREAD: f64 = 2.5;
    pub const FORGERY_SPREAD: f64 = 1.5;

    pub fn new(seed: u64, dim: usize) -> SynthUser {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mean = (0..dim).map(|_| rng.random_range(0.2..0.8)).collect();
        let spread: Vec<f64> = (0..dim).map(|_| rng.random_range(0.01..0.08)).collect();
        let simulated_bias = spread.iter().map(|s| s * signed_uniform(&mut rng, 1.0, 3.0)).collect();
        let simple_bias = spread.iter().map(|s| s * signed_uniform(&mut rng, 2.0, 5.0)).collect();
        let sloppy_rate = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..Self::MAX_SLOPPY_RATE) };
        SynthUser { mean, spread, simulated_bias, simple_bias, sloppy_rate, seed }
    }

    fn draw<R: Rng>(&self, rng: &mut R, bias: Option<&[f64]>, spread_scale: f64) -> RawFeatureVector {
        let scale = if rng.random_bool(self.sloppy_rate) { spread_scale * Self::SLOPPY_SPREAD } else { spread_scale };
        let values = (0..self.mean.len())
            .map(|i| {
                let mu = self.mean[i] + bias.map_or(0.0, |b| b[i]);
                let n = Normal::new(mu, self.spread[i] * scale).expect("positive spread");
                n.sample(rng).clamp(0.0, 1.0)
            })
            .collect();
        RawFeatureVector(values)
    }

    pub fn genuine<R: Rng>(&self, rng: &mut R) -> RawFeatureVector {
        self.draw(rng, None, 1.0)
    }

    pub fn simulated<R: Rng>(&self, rng: &mut R) -> RawFeatureVector {
        self.draw(rng, Some(&self.simulated_bias), Self::FORGERY_SPREAD)
    }

    pub fn simple<R: Rng>(&self, rng: &mut R) -> RawFeatureVector {
        self.draw(rng, Some(&self.simple_bias), Self::FORGERY_SPREAD)
    }

    /// The writer whose genuine samples serve as this user's random forgeries.
    pub fn random_forger(&self) -> SynthUser {
        SynthUser::new(self.seed ^ 0x9E37_79B9_7F4A_7C15, self.mean.len())
    }
}

/// Deterministic synthetic user with `n_genuine` genuine samples and
/// `n_forgery` samples of each forgery class.
pub fn synth_user(seed: u64, dim: usize, n_genuine: usize, n_forgery: usize) -> Result<(SynthUser, SynthSamples)> {
    if dim == 0 {
        return Err(Error::BadParams("dim must be at least 1".into()));
    }
    let user = SynthUser::new(seed, dim);
    let forger = user.random_forger();
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(1));
    let samples = SynthSamples {
        genuine: (0..n_genuine).map(|_| user.genuine(&mut rng)).collect(),
        random: (0..n_forgery).map(|_| forger.genuine(&mut rng)).collect(),
        simple: (0..n_forgery).map(|_| user.simple(&mut rng)).collect(),
        simulated: (0..n_forgery).map(|_| user.simulated(&mut rng)).collect(),
    };
    Ok((user, samples))
}
