//! Privacy-preserving population LDA.
//!
//! Three roles cooperate to enroll users one at a time:
//!
//! * the [`UserClient`] encrypts its template statistics under the matrix
//!   publisher's key and computes the cross products it is asked for,
//! * the [`EnrollmentServer`] keeps the encrypted ledger and assembles
//!   encrypted `S_W`, `m^2 S_B` and variance sums without ever decrypting,
//! * the [`MatrixPublisher`] decrypts those aggregates in batches and
//!   publishes the LDA projection.
//!
//! For a new user `u` with mean `mu_u` and the stale sum of means `s`:
//!
//! ```text
//! K   += P + P^T + N            K[i][j]   = s_i s_j
//! L_t += R_t^T   (t != u)       L_t[i][j] = s_i mu_{t,j}
//! L_u  = P + N
//! m^2 S_B = sum_t (m^2 M_t - m L_t - m L_t^T) + m K
//! ```
//!
//! where `N = mu_u mu_u^T`, `P[i][j] = s_i mu_{u,j}` and
//! `R_t[i][j] = mu_{t,i} mu_{u,j}`.

mod es;
mod local;
mod message;
mod mp;
pub mod net;
mod user;
pub mod wire;

pub use es::{EnrollmentLedger, EnrollmentServer};
pub use local::{ByteCounts, EnrollmentRecord, LocalDeployment, RoleTimes};
pub use message::{
    EnrollRound1, EnrollRound2, EsOutput, EsReply, KeyAnnounce, Message, MpPublish, RoundTag,
};
pub use mp::{BatchPolicy, MatrixPublisher, MpOutcome, Publication};
pub use user::UserClient;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::he::{validate_capacity, CapacityQuery, FixedPointCodec, HeParams};
use crate::lda::UserSamples;
use crate::{Error, Result};

/// Public parameters fixed by the matrix publisher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Features per template.
    pub n: usize,
    /// Template discretization width; means lie in `[0, 2^d)`.
    pub d: u32,
    pub fractional_bits: u32,
    pub max_users: u64,
    pub max_samples: u64,
}

impl ProtocolConfig {
    pub fn new(n: usize, d: u32) -> Self {
        Self { n, d, fractional_bits: 0, max_users: 500, max_samples: CapacityQuery::DEFAULT_SAMPLES }
    }

    pub fn codec(&self, params: &HeParams) -> Result<FixedPointCodec> {
        FixedPointCodec::for_params(params, self.fractional_bits)
    }

    /// Fails with the binding quantity when the plaintext space is too small.
    pub fn validate(&self, params: &HeParams) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Param("need at least one feature".into()));
        }
        let query = CapacityQuery { n: self.n, users: self.max_users, d: self.d, samples_per_user: self.max_samples };
        validate_capacity(params, &self.codec(params)?, &query).ensure()
    }
}

/// What a user contributes: mean, per-feature variance and scatter matrix
/// of their own samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserTemplate {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Row-major `n x n`.
    pub scatter: Vec<Vec<f64>>,
    pub samples: u64,
}

impl UserTemplate {
    pub fn from_samples(s: &UserSamples) -> Self {
        let sc = s.scatter();
        Self {
            mean: s.mean().iter().copied().collect(),
            variance: s.variance().iter().copied().collect(),
            scatter: (0..sc.nrows()).map(|i| sc.row(i).iter().copied().collect()).collect(),
            samples: s.count() as u64,
        }
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn scatter_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.scatter[i][j])
    }

    /// Checks shapes and worst-case magnitudes against `config`.
    pub fn validate(&self, config: &ProtocolConfig) -> Result<()> {
        let n = config.n;
        if self.mean.len() != n || self.variance.len() != n {
            return Err(Error::Dimension { expected: n, got: self.mean.len().min(self.variance.len()) });
        }
        if self.scatter.len() != n || self.scatter.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: self.scatter.len() });
        }
        if self.samples == 0 || self.samples > config.max_samples {
            return Err(Error::Capacity(format!("{} samples outside [1, {}]", self.samples, config.max_samples)));
        }
        let top = 2f64.powi(config.d as i32);
        if let Some(m) = self.mean.iter().find(|m| !(**m >= 0.0 && **m < top)) {
            return Err(Error::Capacity(format!("mean {m} outside [0, 2^{})", config.d)));
        }
        let var_cap = top * top;
        if let Some(v) = self.variance.iter().find(|v| !(**v >= 0.0 && **v <= var_cap)) {
            return Err(Error::Capacity(format!("variance {v} exceeds 2^{}", 2 * config.d)));
        }
        let sc_cap = var_cap * self.samples as f64;
        if self.scatter.iter().flatten().any(|x| !(x.abs() <= sc_cap)) {
            return Err(Error::Capacity("scatter entry exceeds its bound".into()));
        }
        Ok(())
    }
}

/// Row-major index of `(i, j)` in an `n x n` matrix.
#[inline]
pub(crate) fn idx(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_from_samples() {
        let s = UserSamples::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let t = UserTemplate::from_samples(&s);
        assert_eq!(t.mean, vec![1.0, 1.0]);
        assert_eq!(t.variance, vec![1.0, 1.0]);
        assert_eq!(t.scatter, vec![vec![2.0, 2.0], vec![2.0, 2.0]]);
        t.validate(&ProtocolConfig::new(2, 8)).unwrap();
        assert!(matches!(t.validate(&ProtocolConfig::new(3, 8)), Err(Error::Dimension { .. })));
        let mut big = t.clone();
        big.mean[0] = 256.0;
        assert!(matches!(big.validate(&ProtocolConfig::new(2, 8)), Err(Error::Capacity(_))));
    }

    #[test]
    fn config_capacity() {
        let p = HeParams::default();
        ProtocolConfig::new(31, 8).validate(&p).unwrap();
        let mut c = ProtocolConfig::new(31, 24);
        c.fractional_bits = 16;
        assert!(c.validate(&p).unwrap_err().to_string().contains("S_B"));
    }
}
