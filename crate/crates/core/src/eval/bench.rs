use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::he::{keygen, HeParams, OpCounts};
use crate::lda::UserSamples;
pub use crate::pplda::RoleTimes;
use crate::pplda::{BatchPolicy, LocalDeployment, ProtocolConfig, UserTemplate};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// `(n, m)`: features, and users enrolled once the measured user is in.
    pub grid: Vec<(usize, usize)>,
    pub params: HeParams,
    pub bits: u32,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { grid: parse_grid("n=2,3,4;m=2,4,6").expect("static grid"), params: HeParams::default(), bits: 8, seed: 1 }
    }
}

/// Cost of enrolling the `m`-th user with `n` features.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub user_ops: OpCounts,
    pub es_ops: OpCounts,
    pub mp_ops: OpCounts,
    pub seconds: RoleTimes,
    /// Both rounds, both directions.
    pub user_es_bytes: usize,
    /// ES output plus the publication.
    pub es_mp_bytes: usize,
    pub es_output_ciphertexts: usize,
}

/// Least-squares fit of one measured quantity on the cost monomials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountFit {
    pub quantity: String,
    pub coefficients: Vec<(String, f64)>,
    /// Largest absolute residual over the grid.
    pub max_residual: f64,
}

impl CountFit {
    pub fn coefficient(&self, term: &str) -> f64 {
        self.coefficients.iter().find(|(t, _)| t == term).map_or(0.0, |(_, c)| *c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub modulus_bits: u32,
    pub rows: Vec<BenchRow>,
    pub fits: Vec<CountFit>,
}

pub const TERMS: [&str; 5] = ["m n^2", "n^2", "m n", "n", "1"];

/// Parses `n=2,4;m=10,20` (cartesian product) or `2x10,4x20` (pairs).
pub fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    let bad = || Error::Param(format!("bad grid {text:?}"));
    let nums = |s: &str| -> Result<Vec<usize>> {
        s.split(',').map(|x| x.trim().parse::<usize>().map_err(|_| bad())).collect()
    };
    let grid: Vec<(usize, usize)> = if text.contains('=') {
        let (mut ns, mut ms) = (None, None);
        for part in text.split(';') {
            match part.trim().split_once('=') {
                Some(("n", v)) => ns = Some(nums(v)?),
                Some(("m", v)) => ms = Some(nums(v)?),
                _ => return Err(bad()),
            }
        }
        let (ns, ms) = (ns.ok_or_else(bad)?, ms.ok_or_else(bad)?);
        ns.iter().flat_map(|&n| ms.iter().map(move |&m| (n, m))).collect()
    } else {
        text.split(',')
            .map(|p| {
                let (n, m) = p.trim().split_once('x').ok_or_else(bad)?;
                Ok((n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?))
            })
            .collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.iter().any(|&(n, m)| n == 0 || m == 0) {
        return Err(bad());
    }
    Ok(grid)
}

fn random_template(rng: &mut ChaCha20Rng, n: usize, bits: u32) -> Result<UserTemplate> {
    let top = 1i64 << bits;
    let mean: Vec<i64> = (0..n).map(|_| rng.gen_range(top / 8..top - top / 8)).collect();
    let mut rows = Vec::new();
    for _ in 0..2 {
        let delta: Vec<i64> = (0..n).map(|_| rng.gen_range(-(top / 16)..=top / 16)).collect();
        rows.push(mean.iter().zip(&delta).map(|(m, e)| (m + e) as f64).collect());
        rows.push(mean.iter().zip(&delta).map(|(m, e)| (m - e) as f64).collect());
    }
    Ok(UserTemplate::from_samples(&UserSamples::from_rows(&rows)?))
}

/// Runs one real enrollment per grid point on top of a ledger holding
/// `m - 1` users, and fits operation counts and bytes to the monomials in
/// [`TERMS`].
pub fn bench_pplda(config: &BenchConfig) -> Result<BenchReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (_, sk) = keygen(&config.params, &mut rng)?;
    let mut rows = Vec::with_capacity(config.grid.len());
    for &(n, m) in &config.grid {
        let mut pc = ProtocolConfig::new(n, config.bits);
        pc.max_users = pc.max_users.max(m as u64);
        let existing: Vec<UserTemplate> = (0..m - 1).map(|_| random_template(&mut rng, n, config.bits)).collect::<Result<_>>()?;
        let mut dep = LocalDeployment::with_ledger(sk.clone(), pc, BatchPolicy::new(1)?, &existing, rng.gen())?;
        let rec = dep.enroll(random_template(&mut rng, n, config.bits)?)?;
        let b = rec.bytes;
        rows.push(BenchRow {
            n,
            m,
            user_ops: rec.user_ops,
            es_ops: rec.es_ops,
            mp_ops: rec.mp_ops,
            seconds: rec.times,
            user_es_bytes: b.enroll1 + b.es_reply + b.enroll2,
            es_mp_bytes: b.es_output + b.mp_publish,
            es_output_ciphertexts: rec.es_output_ciphertexts,
        });
    }
    let quantities: [(&str, fn(&BenchRow) -> f64); 8] = [
        ("user encryptions", |r| r.user_ops.encryptions as f64),
        ("user exponentiations", |r| r.user_ops.exponentiations as f64),
        ("es exponentiations", |r| r.es_ops.exponentiations as f64),
        ("es additions", |r| r.es_ops.additions as f64),
        ("es rerandomizations", |r| r.es_ops.rerandomizations as f64),
        ("mp decryptions", |r| r.mp_ops.decryptions as f64),
        ("user-es bytes", |r| r.user_es_bytes as f64),
        ("es-mp ciphertexts", |r| r.es_output_ciphertexts as f64),
    ];
    let fits = quantities.iter().map(|(name, f)| fit(name, &rows, *f)).collect();
    Ok(BenchReport { modulus_bits: config.params.modulus_bits, rows, fits })
}

fn monomials(n: usize, m: usize) -> [f64; 5] {
    let (n, m) = (n as f64, m as f64);
    [m * n * n, n * n, m * n, n, 1.0]
}

fn fit(name: &str, rows: &[BenchRow], f: fn(&BenchRow) -> f64) -> CountFit {
    let a = DMatrix::from_fn(rows.len(), TERMS.len(), |r, c| monomials(rows[r].n, rows[r].m)[c]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(f));
    let coef = a.clone().svd(true, true).solve(&y, 1e-9).unwrap_or_else(|_| DVector::zeros(TERMS.len()));
    let max_residual = (&a * &coef - &y).amax();
    CountFit {
        quantity: name.to_string(),
        // snap float noise so exact integer fits print as integers
        coefficients: TERMS.iter().zip(coef.iter()).map(|(t, &c)| (t.to_string(), snap(c))).collect(),
        max_residual,
    }
}

fn snap(c: f64) -> f64 {
    if (c - c.round()).abs() < 1e-6 {
        c.round()
    } else {
        c
    }
}
