//! Evaluation harness: synthetic populations, FAR/FRR sweeps, entropy and
//! protocol cost benchmarks.

mod bench;
mod dataset;
mod run;
mod synth;

pub use bench::{bench_pplda, parse_grid, BenchConfig, BenchReport, BenchRow, CountFit, RoleTimes};
pub use dataset::{Dataset, UserData};
pub use run::{crossval_fold, prepare, protocol_template, run_crossval_lda, run_zero_effort, EvalConfig, Fold, PreparedUser};
pub use synth::{generate_population, PopulationConfig, SyntheticPopulation, SyntheticUser};

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::spc::SpcCode;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Lda,
}

/// FAR and FRR at one value of the scaling multiplier, with the counts they
/// come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub kappa: f64,
    pub far: f64,
    pub frr: f64,
    pub impostor_trials: u64,
    pub false_accepts: u64,
    pub genuine_trials: u64,
    pub false_rejects: u64,
    /// Mean over folds in cross-validation.
    pub key_bits: f64,
    pub entropy_pct: f64,
}

impl OperatingPoint {
    fn from_counts(kappa: f64, t: &Tally, key_bits: f64, entropy_pct: f64) -> Self {
        Self {
            kappa,
            far: ratio(t.false_accepts, t.impostor_trials),
            frr: ratio(t.false_rejects, t.genuine_trials),
            impostor_trials: t.impostor_trials,
            false_accepts: t.false_accepts,
            genuine_trials: t.genuine_trials,
            false_rejects: t.false_rejects,
            key_bits,
            entropy_pct,
        }
    }
}

fn ratio(k: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Tally {
    pub impostor_trials: u64,
    pub false_accepts: u64,
    pub genuine_trials: u64,
    pub false_rejects: u64,
}

impl std::ops::AddAssign for Tally {
    fn add_assign(&mut self, o: Tally) {
        self.impostor_trials += o.impostor_trials;
        self.false_accepts += o.false_accepts;
        self.genuine_trials += o.genuine_trials;
        self.false_rejects += o.false_rejects;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub kappa: f64,
    pub far: f64,
    pub frr: f64,
    /// `(far + frr) / 2`, the single number used to compare reports.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub user: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub slice_minutes: f64,
    pub min_samples: usize,
    /// Bits per codeword symbol.
    pub code_bits: u32,
    pub features: usize,
    pub users: usize,
    /// Folds actually evaluated (cross-validation only).
    pub folds: usize,
    pub sweep: Vec<OperatingPoint>,
    pub eer: EerPoint,
    pub key_bits: f64,
    pub entropy_pct: f64,
    /// Complete test slices over all test slices.
    pub availability: f64,
    pub complete_slices: u64,
    pub total_slices: u64,
    pub skipped_users: Vec<Skipped>,
    pub skipped_folds: Vec<Skipped>,
    /// Impostor/victim pairs not tried because the impostor had no usable
    /// slice or the victim had no commitment.
    pub skipped_pairs: u64,
}

impl EvalReport {
    pub(crate) fn finish(mut self) -> Result<Self> {
        let pts: Vec<(f64, f64, f64)> = self.sweep.iter().map(|p| (p.kappa, p.far, p.frr)).collect();
        let (kappa, far, frr) = compute_eer(&pts)?;
        self.eer = EerPoint { kappa, far, frr, rate: (far + frr) / 2.0 };
        let at = self.sweep.iter().find(|p| p.kappa == kappa).expect("eer point comes from the sweep");
        self.key_bits = at.key_bits;
        self.entropy_pct = at.entropy_pct;
        Ok(self)
    }
}

/// Picks the point where FAR and FRR are closest. Ties go to the smaller
/// `FAR + FRR`, then to the smaller `kappa`.
pub fn compute_eer(sweep: &[(f64, f64, f64)]) -> Result<(f64, f64, f64)> {
    let key = |&(k, a, r): &(f64, f64, f64)| ((a - r).abs(), a + r, k);
    sweep
        .iter()
        .copied()
        .min_by(|x, y| key(x).partial_cmp(&key(y)).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or_else(|| Error::Validation("empty sweep".into()))
}

/// Parses `a:b:step` into the inclusive list `a, a + step, ...`.
pub fn parse_sweep(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Param(format!("bad sweep {text:?}, want a:b:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if !(a > 0.0 && b >= a && step > 0.0) || !b.is_finite() {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    if count > 10_000 {
        return Err(Error::Param(format!("sweep {text:?} has {count} points")));
    }
    Ok((0..count).map(|k| a + k as f64 * step).collect())
}

/// Code capacity and population entropy of discretized templates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// `log2 |C|`.
    pub key_bits: u32,
    /// `sum_i (d - l_i)`: bits above the scalings, parity bit included.
    pub retained_bits: u32,
    pub entropy_pct: f64,
}

/// Empirical Shannon entropy (bits) of each feature's template values
/// across users, capped at the bits the code retains, as a share of `n d`.
pub fn compute_entropy(code: &SpcCode, templates: &[FeatureVector]) -> Result<EntropyReport> {
    if templates.len() < 2 {
        return Err(Error::Validation("entropy needs at least two templates".into()));
    }
    let n = code.n();
    let d = code.d();
    if let Some(t) = templates.iter().find(|t| t.len() != n) {
        return Err(Error::Dimension { expected: n, got: t.len() });
    }
    let columns: Vec<Vec<u32>> = (0..n).map(|i| templates.iter().map(|t| t.values[i]).collect()).collect();
    let caps: Vec<u32> = code.l().iter().map(|&l| d - l).collect();
    Ok(EntropyReport {
        key_bits: code.key_bits(),
        retained_bits: caps.iter().sum(),
        entropy_pct: entropy_share(&columns, &caps, d),
    })
}

/// `sum_i min(H_i, caps_i) / (n d)` for per-feature value columns.
pub fn entropy_share(columns: &[Vec<u32>], caps: &[u32], d: u32) -> f64 {
    let total: f64 = columns.iter().zip(caps).map(|(c, &cap)| shannon(c).min(cap as f64)).sum();
    total / (columns.len() as f64 * d as f64)
}

fn shannon(values: &[u32]) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let n = values.len() as f64;
    counts.values().map(|&c| {
        let p = c as f64 / n;
        -p * p.log2()
    }).sum()
}
