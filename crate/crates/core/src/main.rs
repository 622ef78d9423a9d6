use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use osfv::bct_store::{decode_ensemble, encode_ensemble, read_bct, write_atomic, write_bct, KdfParams};
use osfv::codec::SecretKey;
use osfv::features::{Dataset, RawFeatureVector, SampleLabel};
use osfv::harness::{self, EnrollOptions, EvalOptions, SampleCounts, UnlockOptions};
use osfv::security::estimate_security;
use osfv::vault::ChaffMode;
use osfv::Error;

#[derive(Parser)]
#[command(name = "osfv", version, about = "Offline-signature fuzzy vault")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bind a key to enrollment templates and write a template file.
    Enroll(EnrollArgs),
    /// Release the key bound in a template file.
    Unlock(UnlockArgs),
    /// Run the enroll/attack protocol over a labelled dataset.
    Evaluate(EvaluateArgs),
    /// Brute-force entropy of a vault configuration.
    Entropy(EntropyArgs),
    /// Write a synthetic labelled dataset.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct VaultArgs {
    #[arg(long, default_value_t = 20)]
    t: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Genuine-to-total point ratio of uniform chaff.
    #[arg(long, default_value_t = 0.2)]
    omega: f64,
    /// Chaff spacing follows each feature's variability instead of omega.
    #[arg(long)]
    adaptive_chaff: bool,
    /// Size the key from enrollment variability.
    #[arg(long)]
    adaptive_key: bool,
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    /// Fit a centroid verifier that must accept a query before decoding.
    #[arg(long)]
    sv_gate: bool,
    #[arg(long, default_value_t = 60)]
    wi_dim: usize,
    /// Lock with templates in file order instead of the best prototype first.
    #[arg(long)]
    no_prototype: bool,
}

impl VaultArgs {
    fn options(&self, seed: u64, kdf: KdfParams) -> EnrollOptions {
        EnrollOptions {
            t: self.t,
            wi_dim: self.wi_dim,
            alpha: self.alpha,
            chaff: if self.adaptive_chaff { ChaffMode::Adaptive } else { ChaffMode::Uniform { omega: self.omega } },
            adaptive_key: self.adaptive_key,
            ensemble: self.ensemble,
            sv_gate: self.sv_gate,
            select_prototype: !self.no_prototype,
            kdf,
            seed,
        }
    }
}

#[derive(Args)]
struct EnrollArgs {
    /// CSV of enrollment samples; genuine rows of the first user are used.
    #[arg(long)]
    templates: PathBuf,
    /// CSV of development writers for feature selection.
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    pw: String,
    #[arg(long, default_value_t = 128)]
    key_bits: usize,
    /// Key to bind, hex; random when omitted.
    #[arg(long)]
    key: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Argon2 memory cost in KiB.
    #[arg(long, default_value_t = KdfParams::default().m_cost_kib)]
    kdf_memory_kib: u32,
    #[arg(long, default_value_t = KdfParams::default().t_cost)]
    kdf_iterations: u32,
    #[command(flatten)]
    vault: VaultArgs,
}

#[derive(Args)]
struct UnlockArgs {
    #[arg(long)]
    bct: PathBuf,
    /// CSV holding the query; see --row.
    #[arg(long)]
    query: PathBuf,
    /// Zero-based row of the query file.
    #[arg(long, default_value_t = 0)]
    row: usize,
    #[arg(long)]
    pw: String,
    #[arg(long)]
    sv_gate: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Separate development writers; the dataset itself is used when omitted.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    enroll_count: usize,
    #[arg(long, default_value_t = 128)]
    key_bits: usize,
    /// Forgers do not know the password and guess the feature indexes.
    #[arg(long)]
    no_password: bool,
    /// Also write the per-user rows to this file.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[command(flatten)]
    vault: VaultArgs,
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long, default_value_t = 20)]
    t: usize,
    #[arg(long, default_value_t = 7)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.025)]
    omega: f64,
    /// Report on a stored template instead of the parameters above.
    #[arg(long)]
    bct: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    users: usize,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 15)]
    genuine: usize,
    /// Samples per forgery class.
    #[arg(long, default_value_t = 10)]
    forgery: usize,
    #[arg(long, default_value_t = 0)]
    first_user: u32,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path) -> osfv::Result<Dataset> {
    Dataset::read_csv(BufReader::new(File::open(path)?))
}

fn ensemble_path(bct: &Path) -> PathBuf {
    let mut s = bct.as_os_str().to_owned();
    s.push(".ens");
    PathBuf::from(s)
}

fn enroll(a: EnrollArgs) -> osfv::Result<()> {
    let data = load(&a.templates)?;
    let user = *data.users().first().ok_or_else(|| Error::InsufficientSamples("no templates".into()))?;
    let templates = data.of(user, SampleLabel::Genuine);
    let dev = load(&a.dev)?;
    let key = match &a.key {
        Some(h) => {
            let bytes = hex::decode(h).map_err(|e| Error::BadParams(format!("key: {e}")))?;
            SecretKey::from_bytes(&bytes)
        }
        None => SecretKey::random(&mut ChaCha20Rng::from_os_rng(), a.key_bits),
    };
    let kdf = KdfParams { m_cost_kib: a.kdf_memory_kib, t_cost: a.kdf_iterations, ..KdfParams::default() };
    let e = harness::enroll(&templates, &dev, &a.pw, &key, &a.vault.options(a.seed, kdf))?;
    write_bct(&e.bct, &a.out)?;
    if !e.extra_vaults.is_empty() {
        write_atomic(&ensemble_path(&a.out), &encode_ensemble(&e.extra_vaults))?;
    }
    println!("key {}", key.to_hex());
    println!("k {} ks {} vault points {}", e.plan.k, e.plan.ks, e.bct.vault.len());
    Ok(())
}

fn unlock(a: UnlockArgs) -> osfv::Result<()> {
    let bct = read_bct(&a.bct)?;
    let ens = ensemble_path(&a.bct);
    let extra = if ens.exists() { decode_ensemble(&std::fs::read(ens)?)? } else { Vec::new() };
    let data = load(&a.query)?;
    let query: RawFeatureVector = data
        .samples
        .get(a.row)
        .map(|s| s.features.clone())
        .ok_or_else(|| Error::InsufficientSamples(format!("query file has no row {}", a.row)))?;
    let key = harness::unlock(&bct, &extra, &query, &a.pw, &UnlockOptions { sv_gate: a.sv_gate })?;
    println!("{}", key.to_hex());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> osfv::Result<()> {
    let data = load(&a.dataset)?;
    let dev = a.dev.as_deref().map(load).transpose()?;
    let opts = EvalOptions {
        enroll: a.vault.options(a.seed, KdfParams::default()),
        enroll_count: a.enroll_count,
        key_bits: a.key_bits,
        attacker_has_password: !a.no_password,
    };
    let report = harness::evaluate(&data, dev.as_ref(), &opts)?;
    let _ = write!(io::stdout().lock(), "{report}\n{}", report.to_csv());
    if let Some(p) = a.csv_out {
        write_atomic(&p, report.to_csv().as_bytes())?;
    }
    Ok(())
}

fn entropy(a: EntropyArgs) -> osfv::Result<()> {
    let s = match a.bct {
        Some(p) => harness::report_entropy(&read_bct(&p)?.vault)?,
        None => estimate_security(a.t, a.k, a.alpha, a.omega)?,
    };
    println!("entropy_bits {:.3}", s.entropy_bits);
    println!("trials {:.6e}", s.trials);
    println!("refined_bits {:.3}", s.refined_bits);
    Ok(())
}

fn gen_data(a: GenDataArgs) -> osfv::Result<()> {
    let counts = SampleCounts { genuine: a.genuine, forgery: a.forgery };
    let data = harness::gen_dataset(a.seed, a.users, a.dim, counts, a.first_user)?;
    match a.out {
        Some(p) => {
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            write_atomic(&p, &buf)
        }
        None => data.write_csv(io::stdout().lock()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::AuthFailure | Error::SvReject => 2,
        Error::DecodeFailed => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let result = match Cli::parse().cmd {
        Command::Enroll(a) => enroll(a),
        Command::Unlock(a) => unlock(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Entropy(a) => entropy(a),
        Command::GenData(a) => gen_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
