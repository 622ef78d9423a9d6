use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use osfv::bct_store::{open_ur, KdfParams, SealedUr};
use osfv::codec::SecretKey;
use osfv::features::{Dataset, RawFeatureVector, Sample, SampleLabel};
use osfv::harness::{
    enroll, evaluate, gen_dataset, release_key, unlock, EnrollOptions, EvalOptions, SampleCounts, SvGate, UnlockOptions,
};
use osfv::Error;

const DIM: usize = 60;

fn opts() -> EnrollOptions {
    EnrollOptions { kdf: KdfParams::insecure_fast(), wi_dim: 40, ..EnrollOptions::default() }
}

fn dev() -> Dataset {
    gen_dataset(11, 12, DIM, SampleCounts { genuine: 6, forgery: 3 }, 1000).unwrap()
}

/// A very consistent writer: samples scatter 0.005 around a fixed mean.
fn easy_user(seed: u64, n: usize) -> (Vec<RawFeatureVector>, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mean: Vec<f64> = (0..DIM).map(|_| rng.random_range(0.2..0.8)).collect();
    let noise = Normal::new(0.0, 0.005).unwrap();
    let samples = (0..n)
        .map(|_| {
            RawFeatureVector::new(mean.iter().map(|m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect()).unwrap()
        })
        .collect();
    (samples, mean)
}

fn shifted(mean: &[f64], by: f64) -> RawFeatureVector {
    RawFeatureVector::new(mean.iter().map(|m| (m + by).clamp(0.0, 1.0)).collect()).unwrap()
}

#[test]
fn enroll_then_unlock_with_held_out_sample() {
    let (samples, _) = easy_user(1, 8);
    let key = SecretKey::random(&mut ChaCha20Rng::seed_from_u64(2), 128);
    let e = enroll(&samples[..5], &dev(), "hunter2", &key, &opts()).unwrap();
    assert!(e.extra_vaults.is_empty());
    for q in &samples[5..] {
        assert_eq!(unlock(&e.bct, &[], q, "hunter2", &UnlockOptions::default()).unwrap(), key);
    }
}

#[test]
fn wrong_password_is_an_auth_failure() {
    let (samples, _) = easy_user(3, 6);
    let key = SecretKey::random(&mut ChaCha20Rng::seed_from_u64(4), 128);
    let e = enroll(&samples[..5], &dev(), "right", &key, &opts()).unwrap();
    let got = unlock(&e.bct, &[], &samples[5], "wrong", &UnlockOptions::default());
    assert!(matches!(got, Err(Error::AuthFailure)));
    assert!(matches!(enroll(&samples[..5], &dev(), "", &key, &opts()), Err(Error::EmptyPassword)));
}

#[test]
fn single_template_enrollment() {
    let (samples, _) = easy_user(5, 2);
    let key = SecretKey::random(&mut ChaCha20Rng::seed_from_u64(6), 100);
    let e = enroll(&samples[..1], &dev(), "pw", &key, &opts()).unwrap();
    assert_eq!(unlock(&e.bct, &[], &samples[0], "pw", &UnlockOptions::default()).unwrap(), key);
}

#[test]
fn ensemble_of_three() {
    let (samples, _) = easy_user(7, 7);
    let key = SecretKey::random(&mut ChaCha20Rng::seed_from_u64(8), 128);
    let o = EnrollOptions { ensemble: 3, ..opts() };
    let e = enroll(&samples[..5], &dev(), "pw", &key, &o).unwrap();
    let vaults = e.vaults();
    assert_eq!(vaults.len(), 3);
    assert_ne!(vaults[0].points(), vaults[1].points());
    assert_ne!(vaults[1].points(), vaults[2].points());
    for q in &samples[5..] {
        assert_eq!(unlock(&e.bct, &e.extra_vaults, q, "pw", &UnlockOptions::default()).unwrap(), key);
    }
    // the first vault alone is a one-voter ensemble
    let got = unlock(&e.bct, &[], &samples[5], "pw", &UnlockOptions::default());
    assert_eq!(got.unwrap(), key);
    let far = shifted(samples[0].values(), 0.3);
    assert!(matches!(unlock(&e.bct, &e.extra_vaults, &far, "pw", &UnlockOptions::default()), Err(Error::DecodeFailed)));

    let too_many = EnrollOptions { ensemble: 6, ..opts() };
    assert!(matches!(enroll(&samples[..5], &dev(), "pw", &key, &too_many), Err(Error::BadParams(_))));
}

#[test]
fn verification_gate() {
    let (samples, mean) = easy_user(9, 7);
    let key = SecretKey::random(&mut ChaCha20Rng::seed_from_u64(10), 128);
    let o = EnrollOptions { sv_gate: true, ..opts() };
    let e = enroll(&samples[..5], &dev(), "pw", &key, &o).unwrap();
    let gated = UnlockOptions { sv_gate: true };
    assert_eq!(unlock(&e.bct, &[], &samples[5], "pw", &gated).unwrap(), key);
    let forgery = shifted(&mean, 0.1);
    assert!(matches!(unlock(&e.bct, &[], &forgery, "pw", &gated), Err(Error::SvReject)));
    assert!(matches!(unlock(&e.bct, &[], &forgery, "pw", &UnlockOptions::default()), Err(Error::DecodeFailed)));
    // password is checked before the gate
    assert!(matches!(unlock(&e.bct, &[], &forgery, "nope", &gated), Err(Error::AuthFailure)));
}

#[test]
fn unbounded_gate_matches_no_gate() {
    let (samples, mean) = easy_user(12, 5);
    let key = SecretKey::random(&mut ChaCha20Rng::seed_from_u64(13), 128);
    let e = enroll(&samples, &dev(), "pw", &key, &opts()).unwrap();
    let sealed = open_ur(&e.bct.eur, &e.bct.kdf_salt, "pw").unwrap();
    let open =
        SealedUr { sv_gate: Some(SvGate { centroid: mean.clone(), threshold: f64::INFINITY }), ..sealed.clone() };
    let vaults = e.vaults();
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let mut released = 0;
    for i in 0..40 {
        let spread = Normal::new(0.0, 0.002 * i as f64 + 1e-4).unwrap();
        let q = RawFeatureVector::new(mean.iter().map(|m| (m + spread.sample(&mut rng)).clamp(0.0, 1.0)).collect())
            .unwrap();
        let a = release_key(&vaults, &e.bct.key_digest, &sealed, &q, false);
        let b = release_key(&vaults, &e.bct.key_digest, &open, &q, true);
        assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            assert_eq!(a, b);
            released += 1;
        }
    }
    assert!(released > 0 && released < 40, "{released}");
}

fn eval_opts() -> EvalOptions {
    EvalOptions { enroll: EnrollOptions { seed: 3, ..opts() }, ..EvalOptions::default() }
}

#[test]
fn evaluation_is_deterministic() {
    let data = gen_dataset(21, 6, DIM, SampleCounts { genuine: 9, forgery: 4 }, 0).unwrap();
    let a = evaluate(&data, None, &eval_opts()).unwrap();
    let b = evaluate(&data, None, &eval_opts()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

/// Replaces every forgery of every user with copies of that user's genuine
/// samples at the given positions.
fn forgeries_from_genuine(data: &Dataset, pick: impl Fn(usize) -> usize) -> Dataset {
    let mut samples = Vec::new();
    for u in data.users() {
        let genuine = data.of(u, SampleLabel::Genuine);
        let mut id = 0;
        for g in &genuine {
            samples.push(Sample { user_id: u, sample_id: id, label: SampleLabel::Genuine, features: g.clone() });
            id += 1;
        }
        for label in SampleLabel::FORGERIES {
            for i in 0..4 {
                let features = genuine[pick(i)].clone();
                samples.push(Sample { user_id: u, sample_id: id, label, features });
                id += 1;
            }
        }
    }
    Dataset { dim: data.dim, samples }
}

#[test]
fn forgeries_equal_to_templates_are_all_accepted() {
    let base = gen_dataset(22, 5, DIM, SampleCounts { genuine: 9, forgery: 0 }, 0).unwrap();
    let opts = EvalOptions { enroll: EnrollOptions { select_prototype: false, ..eval_opts().enroll }, ..eval_opts() };
    let r = evaluate(&forgeries_from_genuine(&base, |_| 0), None, &opts).unwrap();
    assert_eq!((r.far_random, r.far_simple, r.far_simulated), (Some(100.0), Some(100.0), Some(100.0)));
}

#[test]
fn forgeries_equal_to_queries_mirror_frr() {
    let base = gen_dataset(23, 5, DIM, SampleCounts { genuine: 9, forgery: 0 }, 0).unwrap();
    let r = evaluate(&forgeries_from_genuine(&base, |i| 5 + i), None, &eval_opts()).unwrap();
    for far in [r.far_random, r.far_simple, r.far_simulated] {
        assert!((far.unwrap() - (100.0 - r.frr)).abs() < 1e-9, "{far:?} vs FRR {}", r.frr);
    }
}

#[test]
fn dataset_file_roundtrip() {
    let data = gen_dataset(24, 3, 8, SampleCounts { genuine: 2, forgery: 1 }, 40).unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), data);
    assert_eq!(data.users(), vec![40, 41, 42]);
}
