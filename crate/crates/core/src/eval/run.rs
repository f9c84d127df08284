use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::dataset::Dataset;
use super::{compute_entropy, EvalReport, EerPoint, Mode, OperatingPoint, Skipped, Tally};
use crate::commitment::{commit, decommit, Commitment};
use crate::features::{
    build_template, clean_outliers, default_features, observe, FeatureRange, FeatureSpec, FeatureVector, Template,
    Window, DEFAULT_BITS, DEFAULT_OUTLIER_MS,
};
use crate::lda::{scatter_between, scatter_within, solve_lda_auto, transform, transform_variance, LdaModel, UserSamples};
use crate::spc::{derive_scaling, SpcCode};
use crate::{Error, Result};

const KEY_INPUT: &[u8] = b"keyforge-eval";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub features: Vec<FeatureSpec>,
    /// Discretization bits of raw features.
    pub bits: u32,
    /// Discretization bits of projected features.
    pub lda_bits: u32,
    pub slice_minutes: f64,
    pub min_samples: usize,
    pub kappas: Vec<f64>,
    pub outlier_ms: f64,
    /// Padding of the projected training box on each side, as a share of
    /// its width.
    pub box_margin: f64,
    /// Seeds the codewords drawn for commitments.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            features: default_features(),
            bits: DEFAULT_BITS,
            lda_bits: 16,
            slice_minutes: 4.0,
            min_samples: 1,
            // quarter-octave steps from 1/8 to 128
            kappas: (-12..=28).map(|k| 2f64.powf(k as f64 / 4.0)).collect(),
            outlier_ms: DEFAULT_OUTLIER_MS,
            box_margin: 0.25,
            seed: 0,
        }
    }
}

impl EvalConfig {
    fn validate(&self) -> Result<()> {
        if self.features.is_empty() || self.kappas.is_empty() {
            return Err(Error::Param("need at least one feature and one kappa".into()));
        }
        if !(self.slice_minutes > 0.0) || self.min_samples == 0 {
            return Err(Error::Param("slice length and minimum samples must be positive".into()));
        }
        for b in [self.bits, self.lda_bits] {
            if !(2..=24).contains(&b) {
                return Err(Error::Param(format!("bit width {b} not in 2..=24")));
            }
        }
        if !(self.box_margin >= 0.0) {
            return Err(Error::Param("box margin must be non-negative".into()));
        }
        Ok(())
    }

    fn slice_ms(&self) -> u64 {
        (self.slice_minutes * 60_000.0).round().max(1.0) as u64
    }
}

/// Per-user inputs to both evaluations, in discretized cells.
#[derive(Clone, Debug)]
pub struct PreparedUser {
    pub id: String,
    /// Whole training session; `None` when some feature never occurs.
    pub template: Option<Template>,
    /// Per-feature means of each complete training slice.
    pub train_rows: Vec<Vec<f64>>,
    /// Per-feature means of each complete testing slice.
    pub test_rows: Vec<Vec<f64>>,
    pub test_slices: usize,
}

fn cell_ranges(n: usize, bits: u32) -> Vec<FeatureRange> {
    vec![FeatureRange::new(0.0, ((1u64 << bits) - 1) as f64); n]
}

/// Extracts, cleans and slices both sessions of every user.
pub fn prepare(data: &Dataset, config: &EvalConfig) -> Result<Vec<PreparedUser>> {
    config.validate()?;
    let ranges = FeatureRange::uniform(config.features.len());
    let rows = |events: &[_]| -> Result<(Vec<Vec<f64>>, usize)> {
        let obs = observe(events, &config.features);
        let slices = obs.slices(config.slice_ms());
        let total = slices.len();
        let mut out = Vec::new();
        for s in slices {
            let s = clean_outliers(&s, config.outlier_ms);
            if s.is_complete(config.min_samples) {
                out.push(s.discretized_means(config.bits, &ranges)?.expect("complete slice"));
            }
        }
        Ok((out, total))
    };
    data.users
        .iter()
        .map(|u| {
            let whole = clean_outliers(&observe(&u.train, &config.features).window(Window::all()), config.outlier_ms);
            let template = match build_template(&[whole], config.bits, &ranges) {
                Ok(t) => Some(t),
                Err(Error::Availability(_)) => None,
                Err(e) => return Err(e),
            };
            let (train_rows, _) = rows(&u.train)?;
            let (test_rows, test_slices) = rows(&u.test)?;
            Ok(PreparedUser { id: u.id.clone(), template, train_rows, test_rows, test_slices })
        })
        .collect()
}

fn empty_report(mode: Mode, config: &EvalConfig, users: &[PreparedUser], code_bits: u32) -> EvalReport {
    let complete: u64 = users.iter().map(|u| u.test_rows.len() as u64).sum();
    let total: u64 = users.iter().map(|u| u.test_slices as u64).sum();
    EvalReport {
        mode,
        slice_minutes: config.slice_minutes,
        min_samples: config.min_samples,
        code_bits,
        features: config.features.len(),
        users: users.len(),
        folds: 0,
        sweep: vec![],
        eer: EerPoint { kappa: 0.0, far: 0.0, frr: 0.0, rate: 0.0 },
        key_bits: 0.0,
        entropy_pct: 0.0,
        availability: if total == 0 { 0.0 } else { complete as f64 / total as f64 },
        complete_slices: complete,
        total_slices: total,
        skipped_users: vec![],
        skipped_folds: vec![],
        skipped_pairs: 0,
    }
}

fn commit_all(templates: &[&FeatureVector], code: &SpcCode, seed: u64) -> Result<Vec<Commitment>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    templates.iter().map(|t| Ok(commit(t, code, &mut rng)?.0)).collect()
}

fn opens(y: &FeatureVector, com: &Commitment) -> Result<bool> {
    Ok(decommit(y, com, KEY_INPUT)?.is_key())
}

fn vectors(rows: &[Vec<f64>], bits: u32) -> Result<Vec<FeatureVector>> {
    rows.iter().map(|r| FeatureVector::from_reals(r, bits)).collect()
}

/// Zero-effort attack on raw features: commitments from each user's whole
/// training session, decommitment attempts from testing-session slices of
/// the user (genuine) and of everyone else (impostor).
pub fn run_zero_effort(data: &Dataset, config: &EvalConfig) -> Result<EvalReport> {
    let users = prepare(data, config)?;
    if users.len() < 2 {
        return Err(Error::Validation("zero-effort evaluation needs at least two users".into()));
    }
    let mut report = empty_report(Mode::Plain, config, &users, config.bits);
    let enrolled: Vec<usize> = (0..users.len()).filter(|&u| users[u].template.is_some()).collect();
    for u in users.iter().filter(|u| u.template.is_none()) {
        report.skipped_users.push(Skipped { user: u.id.clone(), reason: "feature missing from training session".into() });
    }
    if enrolled.len() < 2 {
        return Err(Error::Availability("fewer than two users have every feature".into()));
    }
    let n = config.features.len();
    let sigma: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = enrolled.iter().map(|&u| users[u].template.as_ref().unwrap().variance[i]).sum();
            (s / enrolled.len() as f64).sqrt()
        })
        .collect();
    let tests: Vec<Vec<FeatureVector>> = users.iter().map(|u| vectors(&u.test_rows, config.bits)).collect::<Result<_>>()?;
    let means: Vec<&FeatureVector> = enrolled.iter().map(|&u| &users[u].template.as_ref().unwrap().mean).collect();
    let is_enrolled: Vec<bool> = (0..users.len()).map(|u| users[u].template.is_some()).collect();
    for a in 0..users.len() {
        for b in 0..users.len() {
            if a != b && (tests[a].is_empty() || !is_enrolled[b]) {
                report.skipped_pairs += 1;
            }
        }
    }

    let ranges = cell_ranges(n, config.bits);
    for (k, &kappa) in config.kappas.iter().enumerate() {
        let code = derive_scaling(&sigma, kappa, config.bits, &ranges)?;
        let coms = commit_all(&means, &code, config.seed ^ (k as u64) << 32)?;
        let mut t = Tally::default();
        for (slot, &victim) in enrolled.iter().enumerate() {
            let com = &coms[slot];
            for (a, vecs) in tests.iter().enumerate() {
                for y in vecs {
                    let ok = opens(y, com)?;
                    if a == victim {
                        t.genuine_trials += 1;
                        t.false_rejects += u64::from(!ok);
                    } else {
                        t.impostor_trials += 1;
                        t.false_accepts += u64::from(ok);
                    }
                }
            }
        }
        let owned: Vec<FeatureVector> = means.iter().map(|m| (*m).clone()).collect();
        let e = compute_entropy(&code, &owned)?;
        report.sweep.push(OperatingPoint::from_counts(kappa, &t, e.key_bits as f64, e.entropy_pct));
    }
    report.finish()
}

/// One leave-one-out fold: a model trained without the impostor, and the
/// enrolled users' templates in the projected, discretized space.
#[derive(Clone, Debug)]
pub struct Fold {
    pub impostor: usize,
    pub enrolled: Vec<usize>,
    pub model: LdaModel,
    /// Projected box, per output dimension.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Per-dimension deviations in cells.
    pub sigma: Vec<f64>,
    pub templates: Vec<FeatureVector>,
    bits: u32,
}

impl Fold {
    /// Projects and discretizes a raw row.
    pub fn project(&self, row: &[f64]) -> Result<FeatureVector> {
        let y = transform(row, &self.model)?;
        let top = ((1u64 << self.bits) - 1) as f64;
        let cells: Vec<f64> = y.iter().enumerate().map(|(k, v)| (v - self.lo[k]) / (self.hi[k] - self.lo[k]) * top).collect();
        FeatureVector::from_reals(&cells, self.bits)
    }
}

/// Trains the fold for `impostor` on every other user with at least two
/// complete training slices.
pub fn crossval_fold(users: &[PreparedUser], impostor: usize, config: &EvalConfig) -> Result<Fold> {
    let enrolled: Vec<usize> = (0..users.len()).filter(|&u| u != impostor && users[u].train_rows.len() >= 2).collect();
    if enrolled.len() < 2 {
        return Err(Error::Availability("fewer than two users to train on".into()));
    }
    let samples: Vec<UserSamples> =
        enrolled.iter().map(|&u| UserSamples::from_rows(&users[u].train_rows)).collect::<Result<_>>()?;
    let sw = scatter_within(&samples)?;
    let sb = scatter_between(&samples.iter().map(UserSamples::mean).collect::<Vec<_>>())?;
    let (mut model, _) = solve_lda_auto(&sw, &sb)?;
    // S_B has rank at most users - 1; the remaining directions carry no
    // between-user spread and only add decoding noise
    let keep = model.output_dim().min(enrolled.len() - 1);
    model.w = model.w.columns(0, keep).into_owned();
    model.lambda.truncate(keep);
    let n = sw.nrows();
    let mut var = vec![0.0; n];
    for s in &samples {
        for (acc, v) in var.iter_mut().zip(s.variance().iter()) {
            *acc += v / samples.len() as f64;
        }
    }
    model.v = transform_variance(&var, &model)?;

    let out = model.output_dim();
    let (mut lo, mut hi) = (vec![f64::INFINITY; out], vec![f64::NEG_INFINITY; out]);
    for &u in &enrolled {
        for row in &users[u].train_rows {
            for (k, y) in transform(row, &model)?.into_iter().enumerate() {
                lo[k] = lo[k].min(y);
                hi[k] = hi[k].max(y);
            }
        }
    }
    for k in 0..out {
        let pad = ((hi[k] - lo[k]) * config.box_margin).max(1e-9);
        lo[k] -= pad;
        hi[k] += pad;
    }
    let top = ((1u64 << config.lda_bits) - 1) as f64;
    let sigma = (0..out).map(|k| model.v[k].sqrt() * top / (hi[k] - lo[k])).collect();
    let mut fold = Fold { impostor, enrolled, model, lo, hi, sigma, templates: vec![], bits: config.lda_bits };
    fold.templates = samples
        .iter()
        .map(|s| fold.project(s.mean().as_slice()))
        .collect::<Result<_>>()?;
    Ok(fold)
}

/// Leave-one-user-out cross-validation in the LDA space. Each fold's
/// impostor attacks every enrolled commitment; enrolled users' own slices
/// count as genuine attempts.
pub fn run_crossval_lda(data: &Dataset, config: &EvalConfig) -> Result<EvalReport> {
    let users = prepare(data, config)?;
    if users.len() < 3 {
        return Err(Error::Validation("cross-validation needs at least three users".into()));
    }
    let mut report = empty_report(Mode::Lda, config, &users, config.lda_bits);
    for u in users.iter().filter(|u| u.train_rows.len() < 2) {
        report.skipped_users.push(Skipped { user: u.id.clone(), reason: "fewer than two complete training slices".into() });
    }
    let kn = config.kappas.len();
    let mut tallies = vec![Tally::default(); kn];
    let mut bits = vec![0.0; kn];
    let mut entropy = vec![0.0; kn];
    for imp in 0..users.len() {
        let fold = match crossval_fold(&users, imp, config) {
            Ok(f) => f,
            Err(e) => {
                report.skipped_folds.push(Skipped { user: users[imp].id.clone(), reason: e.to_string() });
                continue;
            }
        };
        report.folds += 1;
        if users[imp].test_rows.is_empty() {
            report.skipped_pairs += fold.enrolled.len() as u64;
        }
        let attack: Vec<FeatureVector> = users[imp].test_rows.iter().map(|r| fold.project(r)).collect::<Result<_>>()?;
        let genuine: Vec<Vec<FeatureVector>> = fold
            .enrolled
            .iter()
            .map(|&u| users[u].test_rows.iter().map(|r| fold.project(r)).collect())
            .collect::<Result<_>>()?;
        let ranges = cell_ranges(fold.sigma.len(), config.lda_bits);
        let templates: Vec<&FeatureVector> = fold.templates.iter().collect();
        for (k, &kappa) in config.kappas.iter().enumerate() {
            let code = derive_scaling(&fold.sigma, kappa, config.lda_bits, &ranges)?;
            let coms = commit_all(&templates, &code, config.seed ^ (k as u64) << 32 ^ (imp as u64) << 48)?;
            let t = &mut tallies[k];
            for (com, own) in coms.iter().zip(&genuine) {
                for y in own {
                    t.genuine_trials += 1;
                    t.false_rejects += u64::from(!opens(y, com)?);
                }
                for y in &attack {
                    t.impostor_trials += 1;
                    t.false_accepts += u64::from(opens(y, com)?);
                }
            }
            let e = compute_entropy(&code, &fold.templates)?;
            bits[k] += e.key_bits as f64;
            entropy[k] += e.entropy_pct;
        }
    }
    if report.folds == 0 {
        return Err(Error::Validation("every cross-validation fold failed".into()));
    }
    let f = report.folds as f64;
    report.sweep = (0..kn)
        .map(|k| OperatingPoint::from_counts(config.kappas[k], &tallies[k], bits[k] / f, entropy[k] / f))
        .collect();
    report.finish()
}

/// Protocol input built from one session: complete slices are the samples.
pub fn protocol_template(events: &[crate::features::KeystrokeEvent], config: &EvalConfig) -> Result<crate::pplda::UserTemplate> {
    config.validate()?;
    let ranges = FeatureRange::uniform(config.features.len());
    let mut rows = Vec::new();
    for s in observe(events, &config.features).slices(config.slice_ms()) {
        let s = clean_outliers(&s, config.outlier_ms);
        if s.is_complete(config.min_samples) {
            rows.push(s.discretized_means(config.bits, &ranges)?.expect("complete slice"));
        }
    }
    if rows.is_empty() {
        return Err(Error::Availability("no complete slice in the session".into()));
    }
    Ok(crate::pplda::UserTemplate::from_samples(&UserSamples::from_rows(&rows)?))
}
