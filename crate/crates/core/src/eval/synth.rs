//! Seeded synthetic typists.
//!
//! Each user types random words. Every latency is Gaussian around a
//! per-user mean for its key or letter pair, plus a shift common to all
//! latencies that drifts once per block of typing time and once per session.
//! The common shift enters each feature through a population-wide loading,
//! which is what gives the features their correlation.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, UserData};
use crate::features::{write_keystroke_log, FeatureSpec, KeystrokeEvent};
use crate::{Error, Result};

const WORDS: &[&str] = &[
    "the", "and", "that", "have", "with", "this", "they", "there", "their", "then", "when", "where",
    "here", "other", "rather", "hand", "and", "end", "send", "mind", "kind", "find", "behind",
    "under", "understand", "know", "knew", "take", "make", "like", "work", "keep", "week", "back",
    "very", "every", "give", "over", "even", "never", "have", "love", "live", "five", "seven",
    "in", "into", "thing", "think", "nothing", "begin", "again", "rain", "train", "line", "inside",
    "friend", "ten", "went", "been", "seen", "green", "often", "open", "garden", "answer", "many",
    "any", "want", "plan", "than", "can", "man", "began", "are", "more", "before", "here", "read",
    "red", "free", "tree", "three", "great", "after", "water", "paper", "number", "order", "early",
    "were", "her", "he", "she", "them", "these", "those", "had", "has", "happy", "half", "hat",
    "what", "about", "would", "could", "should", "people", "year", "good", "some", "time", "day",
    "way", "well", "because", "people", "place", "small", "world", "still", "help", "back", "city",
    "family", "question", "school", "study", "morning", "evening", "weekend", "keyboard", "quick",
    "brown", "fox", "jumps", "lazy", "dog", "zero", "box", "jazz", "quiet", "voice", "view",
];

/// Population hyper-parameters. Millisecond units throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub users: usize,
    pub session_minutes: f64,
    /// Mean and spread of per-user keyhold means.
    pub hold_mean: (f64, f64),
    /// Mean and spread of per-user press-to-press gaps.
    pub gap_mean: (f64, f64),
    /// Range of per-user, per-feature noise deviations.
    pub noise_sd: (f64, f64),
    /// Deviation of the common shift redrawn every block.
    pub block_shift_sd: f64,
    pub block_minutes: f64,
    /// Deviation of the common shift redrawn every session.
    pub session_shift_sd: f64,
    /// Range of per-feature loadings on the common shift.
    pub loading: (f64, f64),
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            users: 10,
            session_minutes: 45.0,
            hold_mean: (100.0, 5.0),
            gap_mean: (190.0, 8.0),
            noise_sd: (15.0, 35.0),
            block_shift_sd: 10.0,
            block_minutes: 1.0,
            session_shift_sd: 6.0,
            loading: (0.5, 1.5),
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let range = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a >= 0.0 && b >= a;
        if self.users == 0 || self.users > 999 {
            return Err(Error::Param(format!("users must be in 1..=999, got {}", self.users)));
        }
        if !pos(self.session_minutes) || !pos(self.block_minutes) {
            return Err(Error::Param("session and block lengths must be positive".into()));
        }
        let gauss = |(m, sd): (f64, f64)| pos(m) && sd.is_finite() && sd >= 0.0;
        if !gauss(self.hold_mean) || !gauss(self.gap_mean) || !range(self.noise_sd) || !range(self.loading) {
            return Err(Error::Param("distribution parameters must be finite and non-negative".into()));
        }
        if !(self.block_shift_sd >= 0.0 && self.session_shift_sd >= 0.0) {
            return Err(Error::Param("shift deviations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generative parameters of one user. Keys are key labels (`"E"`,
/// `"Spacebar"`) and pair labels (`"TH"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUser {
    pub id: String,
    pub hold_mean: HashMap<String, f64>,
    pub hold_sd: HashMap<String, f64>,
    /// Gap for pairs without a dedicated entry.
    pub base_gap: f64,
    pub gap_mean: HashMap<String, f64>,
    pub gap_sd: f64,
    pub digraph_sd: HashMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulation {
    pub seed: u64,
    pub config: PopulationConfig,
    /// Loading of each key or pair label on the common shift.
    pub loading: HashMap<String, f64>,
    pub users: Vec<SyntheticUser>,
}

fn key_label(ch: char) -> String {
    if ch == ' ' {
        "Spacebar".into()
    } else {
        ch.to_ascii_uppercase().to_string()
    }
}

fn all_keys() -> Vec<String> {
    std::iter::once("Spacebar".to_string()).chain(('A'..='Z').map(|c| c.to_string())).collect()
}

fn all_pairs(digraphs: &[FeatureSpec]) -> Vec<String> {
    digraphs
        .iter()
        .filter_map(|f| match f {
            FeatureSpec::Digraph { first, second } => Some(format!("{first}{second}")),
            FeatureSpec::Keyhold { .. } => None,
        })
        .collect()
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite non-negative deviation")
}

/// Draws a population and both sessions of every user. The same seed and
/// config always give the same logs.
pub fn generate_population(config: &PopulationConfig, seed: u64) -> Result<(SyntheticPopulation, Dataset)> {
    let population = SyntheticPopulation::draw(config, seed)?;
    let data = population.sessions();
    Ok((population, data))
}

impl SyntheticPopulation {
    /// Draws per-user parameters from the population hyper-parameters.
    pub fn draw(config: &PopulationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pairs = all_pairs(&crate::features::default_digraphs());
        let keys = all_keys();
        let mut loading = HashMap::new();
        for label in keys.iter().chain(&pairs).chain(std::iter::once(&"*".to_string())) {
            loading.insert(label.clone(), rng.gen_range(config.loading.0..=config.loading.1));
        }
        let mut users = Vec::with_capacity(config.users);
        for u in 0..config.users {
            let mut noise = || rng.gen_range(config.noise_sd.0..=config.noise_sd.1);
            let hold_sd: HashMap<String, f64> = keys.iter().map(|k| (k.clone(), noise())).collect();
            let digraph_sd: HashMap<String, f64> = pairs.iter().map(|p| (p.clone(), noise())).collect();
            let gap_sd = noise();
            let hold = normal(config.hold_mean.0, config.hold_mean.1);
            let gap = normal(config.gap_mean.0, config.gap_mean.1);
            let hold_mean = keys.iter().map(|k| (k.clone(), hold.sample(&mut rng).max(20.0))).collect();
            let gap_mean = pairs.iter().map(|p| (p.clone(), gap.sample(&mut rng).max(40.0))).collect();
            let base_gap = gap.sample(&mut rng).max(40.0);
            users.push(SyntheticUser {
                id: format!("user{u:03}"),
                hold_mean,
                hold_sd,
                base_gap,
                gap_mean,
                gap_sd,
                digraph_sd,
            });
        }
        Ok(Self { seed, config: config.clone(), loading, users })
    }

    /// Types a training and a testing session for every user, from a
    /// separate stream of the population seed.
    pub fn sessions(&self) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let users = self
            .users
            .iter()
            .map(|user| {
                let train = type_session(self, user, &mut rng);
                let test = type_session(self, user, &mut rng);
                UserData { id: user.id.clone(), train, test }
            })
            .collect();
        Dataset { users }
    }
}

fn type_session(pop: &SyntheticPopulation, user: &SyntheticUser, rng: &mut ChaCha20Rng) -> Vec<KeystrokeEvent> {
    let cfg = &pop.config;
    let end = (cfg.session_minutes * 60_000.0) as u64;
    let block = ((cfg.block_minutes * 60_000.0) as u64).max(1);
    let session_shift = normal(0.0, cfg.session_shift_sd).sample(rng);
    let block_dist = normal(0.0, cfg.block_shift_sd);
    let mut block_shift = block_dist.sample(rng);
    let mut block_idx = 0u64;

    let mut events = Vec::new();
    let mut t = 0u64;
    let mut prev: Option<(String, u64)> = None;
    'typing: loop {
        let word = WORDS[rng.gen_range(0..WORDS.len())];
        for ch in word.chars().chain(std::iter::once(' ')) {
            let key = key_label(ch);
            if t / block != block_idx {
                block_idx = t / block;
                block_shift = block_dist.sample(rng);
            }
            let shift = session_shift + block_shift;
            if let Some((pk, release)) = &prev {
                let pair = format!("{pk}{key}");
                let (mean, sd, load) = match user.gap_mean.get(&pair) {
                    Some(&m) => (m, user.digraph_sd[&pair], pop.loading[&pair]),
                    None => (user.base_gap, user.gap_sd, pop.loading["*"]),
                };
                let mut gap = (normal(mean, sd).sample(rng) + load * shift).round().max(1.0) as u64;
                if *pk == key {
                    // a repeated key is released before it is pressed again
                    gap = gap.max(release - t + 1);
                }
                t += gap;
                if t >= end {
                    break 'typing;
                }
            }
            let hold = normal(user.hold_mean[&key], user.hold_sd[&key]).sample(rng) + pop.loading[&key] * shift;
            let hold = hold.round().max(0.0) as u64;
            events.push(KeystrokeEvent::press(&key, t));
            events.push(KeystrokeEvent::release(&key, t + hold));
            prev = Some((key, t + hold));
        }
    }
    events.sort_by_key(|e| e.timestamp);
    events
}

impl SyntheticPopulation {
    /// Writes `<id>_s1.csv`, `<id>_s2.csv` per user and `population.json`.
    pub fn write(&self, data: &Dataset, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for u in &data.users {
            std::fs::write(dir.join(format!("{}_s1.csv", u.id)), write_keystroke_log(&u.train))?;
            std::fs::write(dir.join(format!("{}_s2.csv", u.id)), write_keystroke_log(&u.test))?;
        }
        // maps serialize through a sorted map, so the file is stable
        let json = serde_json::to_value(self)?;
        std::fs::write(dir.join("population.json"), serde_json::to_string_pretty(&json)? + "\n")?;
        Ok(())
    }
}
