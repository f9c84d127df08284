use nalgebra::DMatrix;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::message::{EsOutput, KeyAnnounce, MpPublish};
use super::{idx, ProtocolConfig};
use crate::he::{Ciphertext, FixedPointCodec, SecretKey};
use crate::lda::{solve_lda_auto, transform_variance, LdaModel};
use crate::{Error, Result};

/// Publish only after `w` enrollments since the previous publication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPolicy {
    pub w: u64,
}

impl BatchPolicy {
    pub fn new(w: u64) -> Result<Self> {
        if w == 0 {
            return Err(Error::Param("batch size must be at least 1".into()));
        }
        Ok(Self { w })
    }
}

/// What the matrix publisher decrypted for one publication.
#[derive(Clone, Debug, PartialEq)]
pub struct Publication {
    pub model: LdaModel,
    pub users: u64,
    /// Decrypted fixed-point `S_W`, row-major.
    pub s_w_raw: Vec<i128>,
    /// Decrypted fixed-point `m^2 S_B`, row-major.
    pub s_b_raw: Vec<i128>,
    /// Decrypted fixed-point sum of variances.
    pub var_raw: Vec<i128>,
    pub s_w: DMatrix<f64>,
    pub s_b: DMatrix<f64>,
    /// Average per-feature variance before projection.
    pub var: Vec<f64>,
    pub ridge: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MpOutcome {
    Deferred { pending: u64 },
    Published(Box<Publication>),
}

impl MpOutcome {
    pub fn publication(&self) -> Option<&Publication> {
        match self {
            MpOutcome::Published(p) => Some(p),
            MpOutcome::Deferred { .. } => None,
        }
    }

    pub fn to_message(&self, users: u64) -> MpPublish {
        match self {
            MpOutcome::Deferred { pending } => MpPublish { users, pending: *pending, model: None },
            MpOutcome::Published(p) => MpPublish { users, pending: 0, model: Some(p.model.clone()) },
        }
    }
}

/// Key holder. Decrypts only full batches.
#[derive(Debug)]
pub struct MatrixPublisher {
    sk: SecretKey,
    config: ProtocolConfig,
    codec: FixedPointCodec,
    policy: BatchPolicy,
    since_last: u64,
    generation: u64,
    last_users: u64,
    latest: Option<Publication>,
}

impl MatrixPublisher {
    pub fn new(sk: SecretKey, config: ProtocolConfig, policy: BatchPolicy) -> Result<Self> {
        config.validate(sk.public().params())?;
        let codec = config.codec(sk.public().params())?;
        Ok(Self { sk, config, codec, policy, since_last: 0, generation: 0, last_users: 0, latest: None })
    }

    pub fn announce(&self) -> KeyAnnounce {
        KeyAnnounce { public_key: self.sk.public().detached(), config: self.config }
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn latest(&self) -> Option<&Publication> {
        self.latest.as_ref()
    }

    /// Treats `users` enrollments as already seen and published.
    pub fn skip_to(&mut self, users: u64) {
        self.last_users = users;
        self.since_last = 0;
    }

    pub fn process(&mut self, out: &EsOutput) -> Result<MpOutcome> {
        let n = self.config.n;
        if out.s_w.len() != n * n || out.s_b.len() != n * n || out.var.len() != n {
            return Err(Error::Protocol("ES output has the wrong shape".into()));
        }
        if out.users <= self.last_users {
            return Err(Error::Protocol(format!("user count {} did not advance past {}", out.users, self.last_users)));
        }
        self.since_last += out.users - self.last_users;
        self.last_users = out.users;
        if self.since_last < self.policy.w {
            return Ok(MpOutcome::Deferred { pending: self.since_last });
        }
        let publication = self.decrypt_and_solve(out)?;
        self.since_last = 0;
        self.generation += 1;
        self.latest = Some(publication.clone());
        Ok(MpOutcome::Published(Box::new(publication)))
    }

    fn decrypt_all(&self, v: &[Ciphertext]) -> Result<Vec<i128>> {
        v.iter().map(|c| self.sk.decrypt(c)).collect()
    }

    fn decrypt_and_solve(&self, out: &EsOutput) -> Result<Publication> {
        let n = self.config.n;
        let m = out.users as i128;
        let s_w_raw = self.decrypt_all(&out.s_w)?;
        let s_b_raw = self.decrypt_all(&out.s_b)?;
        let var_raw = self.decrypt_all(&out.var)?;
        // m^2 S_B = m^2 sum_t M_t - m K is always a multiple of m
        if let Some(bad) = s_b_raw.iter().find(|x| !x.is_multiple_of(&m)) {
            return Err(Error::Integrity(format!("m^2 S_B entry {bad} is not divisible by m = {m}")));
        }
        let f = self.codec.scale();
        let s_w = DMatrix::from_fn(n, n, |i, j| s_w_raw[idx(n, i, j)] as f64 / f);
        let s_b = DMatrix::from_fn(n, n, |i, j| {
            let per_m = s_b_raw[idx(n, i, j)] / m;
            per_m as f64 / (m as f64 * f * f)
        });
        let var: Vec<f64> = var_raw.iter().map(|&v| v as f64 / f / m as f64).collect();
        let (mut model, ridge) = solve_lda_auto(&s_w, &s_b)?;
        model.v = transform_variance(&var, &model)?;
        model.generation = self.generation + 1;
        Ok(Publication { model, users: out.users, s_w_raw, s_b_raw, var_raw, s_w, s_b, var, ridge })
    }
}
