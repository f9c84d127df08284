use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::rngs::OsRng;
use serde::Serialize;

use keyforge::commitment::{commit, decommit, Commitment, Decommitment};
use keyforge::eval::{
    bench_pplda, generate_population, parse_grid, parse_sweep, protocol_template, run_crossval_lda, run_zero_effort,
    BenchConfig, Dataset, EvalConfig, PopulationConfig,
};
use keyforge::features::{
    build_template, clean_outliers, observe, parse_keystroke_log, FeatureRange, FeatureVector, KeystrokeEvent, Window,
};
use keyforge::he::{keygen, HeParams, SecretKey};
use keyforge::pplda::{net, BatchPolicy, MatrixPublisher, ProtocolConfig, UserTemplate};
use keyforge::spc::derive_scaling;
use keyforge::{Error, Result};

#[derive(Parser)]
#[command(name = "keyforge", version, about = "Biometric keys from keystroke dynamics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Plain,
    Lda,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic population: two session logs per user.
    Gen {
        #[arg(long, default_value_t = 10)]
        users: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 45.0)]
        minutes: f64,
        /// JSON population config; `--users` and `--minutes` override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// FAR/FRR sweep over a dataset directory.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "plain")]
        mode: EvalMode,
        #[arg(long = "slice-min", default_value_t = 4.0)]
        slice_min: f64,
        #[arg(long = "min-samples", default_value_t = 1)]
        min_samples: usize,
        /// `a:b:step`; defaults to quarter-octave steps from 1/8 to 128.
        #[arg(long = "kappa-sweep")]
        kappa_sweep: Option<String>,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[arg(long = "lda-bits", default_value_t = 16)]
        lda_bits: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure protocol cost over an `(n, m)` grid.
    BenchPplda {
        /// `n=2,4;m=10,20` or `2x10,4x20`.
        #[arg(long, default_value = "n=2,3,4;m=2,4,6")]
        grid: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the matrix publisher's key pair.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the matrix publisher.
    Mp {
        #[arg(long)]
        listen: String,
        #[arg(long, default_value_t = 1)]
        batch: u64,
        #[arg(long)]
        keyfile: PathBuf,
        #[arg(long, default_value_t = 32)]
        features: usize,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        /// Stop after this many ES connections.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run the enrollment server.
    Es {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        mp: String,
        /// Expected feature count; checked against the MP announcement.
        #[arg(long)]
        features: Option<usize>,
        /// Stop after this many users.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Enroll one user template with an ES.
    Enroll {
        #[arg(long)]
        es: String,
        #[arg(long)]
        template: PathBuf,
        /// Where to write the published model, if one comes back.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a protocol template from a keystroke log.
    Template {
        #[arg(long)]
        log: PathBuf,
        #[arg(long = "slice-min", default_value_t = 4.0)]
        slice_min: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Commit to a fresh key with the whole of a keystroke log.
    Commit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Try to open a commitment with each slice of a keystroke log.
    Decommit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        commitment: PathBuf,
        #[arg(long = "slice-min", default_value_t = 4.0)]
        slice_min: f64,
        /// Key-derivation input.
        #[arg(long, default_value = "keyforge")]
        z: String,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("keyforge: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn read_log(path: &Path) -> Result<Vec<KeystrokeEvent>> {
    let log = parse_keystroke_log(&std::fs::read_to_string(path)?)?;
    for d in &log.diagnostics {
        eprintln!("{}: {d:?}", path.display());
    }
    Ok(log.events)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen { users, seed, out, minutes, config } => {
            let mut cfg: PopulationConfig = match config {
                Some(p) => read_json(&p)?,
                None => PopulationConfig::default(),
            };
            cfg.users = users;
            cfg.session_minutes = minutes;
            let (pop, data) = generate_population(&cfg, seed)?;
            pop.write(&data, &out)?;
            eprintln!("wrote {} session files to {}", 2 * data.users.len(), out.display());
        }
        Cmd::Eval { dataset, mode, slice_min, min_samples, kappa_sweep, bits, lda_bits, out } => {
            let mut cfg = EvalConfig { slice_minutes: slice_min, min_samples, bits, lda_bits, ..EvalConfig::default() };
            if let Some(s) = kappa_sweep {
                cfg.kappas = parse_sweep(&s)?;
            }
            let data = Dataset::load(&dataset)?;
            let report = match mode {
                EvalMode::Plain => run_zero_effort(&data, &cfg)?,
                EvalMode::Lda => run_crossval_lda(&data, &cfg)?,
            };
            eprintln!(
                "EER point: kappa {:.3} FAR {:.4} FRR {:.4}, availability {:.4}, entropy {:.2}%",
                report.eer.kappa,
                report.eer.far,
                report.eer.frr,
                report.availability,
                100.0 * report.entropy_pct
            );
            write_json(&report, out.as_deref())?;
        }
        Cmd::BenchPplda { grid, seed, out } => {
            let cfg = BenchConfig { grid: parse_grid(&grid)?, params: HeParams::from_env()?, seed, ..BenchConfig::default() };
            let report = bench_pplda(&cfg)?;
            for r in &report.rows {
                eprintln!(
                    "n={:<3} m={:<4} user {:.2}s  es {:.2}s  mp {:.2}s  user-es {} B  es-mp {} B",
                    r.n, r.m, r.seconds.user, r.seconds.es, r.seconds.mp, r.user_es_bytes, r.es_mp_bytes
                );
            }
            write_json(&report, out.as_deref())?;
        }
        Cmd::Keygen { out } => {
            let (_, sk) = keygen(&HeParams::from_env()?, &mut OsRng)?;
            write_json(&sk, Some(&out))?;
            eprintln!("key {} written to {}", sk.public().key_id(), out.display());
        }
        Cmd::Mp { listen, batch, keyfile, features, bits, limit } => {
            let sk: SecretKey = read_json(&keyfile)?;
            let mut mp = MatrixPublisher::new(sk, ProtocolConfig::new(features, bits), BatchPolicy::new(batch)?)?;
            let listener = TcpListener::bind(&listen)?;
            eprintln!("mp: listening on {}", listener.local_addr()?);
            net::serve_mp(&listener, &mut mp, limit)?;
        }
        Cmd::Es { listen, mp, features, limit } => {
            let (mut es, mut link) = net::connect_es(&mp, &mut OsRng)?;
            let n = es.announce().config.n;
            if let Some(f) = features.filter(|&f| f != n) {
                return Err(Error::Param(format!("MP announces {n} features, expected {f}")));
            }
            let listener = TcpListener::bind(&listen)?;
            eprintln!("es: listening on {} ({n} features)", listener.local_addr()?);
            net::serve_es(&listener, &mut es, &mut link, &mut OsRng, limit)?;
        }
        Cmd::Enroll { es, template, out } => {
            let t: UserTemplate = read_json(&template)?;
            let publish = net::enroll(&es, t, &mut OsRng)?;
            eprintln!("enrolled as user {} ({} pending)", publish.users, publish.pending);
            if let (Some(model), Some(p)) = (&publish.model, out) {
                write_json(model, Some(&p))?;
            }
        }
        Cmd::Template { log, slice_min, out } => {
            let cfg = EvalConfig { slice_minutes: slice_min, ..EvalConfig::default() };
            write_json(&protocol_template(&read_log(&log)?, &cfg)?, Some(&out))?;
        }
        Cmd::Commit { log, kappa, bits, out } => {
            let cfg = EvalConfig { bits, ..EvalConfig::default() };
            let whole = clean_outliers(&observe(&read_log(&log)?, &cfg.features).window(Window::all()), cfg.outlier_ms);
            let template = build_template(&[whole], bits, &FeatureRange::uniform(cfg.features.len()))?;
            // scalings from this user's own deviations, in cells
            let sigma: Vec<f64> = template.variance.iter().map(|v| v.sqrt()).collect();
            let cells = vec![FeatureRange::new(0.0, ((1u64 << bits) - 1) as f64); sigma.len()];
            let code = derive_scaling(&sigma, kappa, bits, &cells)?;
            let (com, _) = commit(&template.mean, &code, &mut OsRng)?;
            write_json(&com, Some(&out))?;
            eprintln!("committed {} key bits", code.key_bits());
        }
        Cmd::Decommit { log, commitment, slice_min, z } => {
            let com: Commitment = read_json(&commitment)?;
            let cfg = EvalConfig { bits: com.code.d(), ..EvalConfig::default() };
            let ranges = FeatureRange::uniform(cfg.features.len());
            let slice_ms = (slice_min * 60_000.0).round() as u64;
            for (k, s) in observe(&read_log(&log)?, &cfg.features).slices(slice_ms).iter().enumerate() {
                let s = clean_outliers(s, cfg.outlier_ms);
                let Some(means) = s.discretized_means(cfg.bits, &ranges)? else { continue };
                if let Decommitment::Key(key) = decommit(&FeatureVector::from_reals(&means, cfg.bits)?, &com, z.as_bytes())? {
                    println!("{}", key.to_hex());
                    eprintln!("opened with slice {k}");
                    return Ok(());
                }
            }
            return Err(Error::Validation("no slice opens the commitment".into()));
        }
    }
    Ok(())
}
