use rand::{CryptoRng, RngCore};

use super::message::{EnrollRound1, EnrollRound2, EsReply, KeyAnnounce};
use super::{ProtocolConfig, UserTemplate};
use crate::he::{Ciphertext, FixedPointCodec, PublicKey};
use crate::{Error, Result};

#[derive(Debug, PartialEq, Eq)]
enum State {
    Fresh,
    SentRound1,
    Done,
}

/// One user's side of an enrollment.
#[derive(Debug)]
pub struct UserClient {
    pk: PublicKey,
    config: ProtocolConfig,
    codec: FixedPointCodec,
    template: UserTemplate,
    mean: Vec<i128>,
    session: u64,
    state: State,
}

impl UserClient {
    /// Validates the template and capacity before anything is encrypted.
    pub fn new<R: RngCore + ?Sized>(announce: &KeyAnnounce, template: UserTemplate, rng: &mut R) -> Result<Self> {
        let pk = announce.public_key.detached();
        let config = announce.config;
        config.validate(pk.params())?;
        template.validate(&config)?;
        let codec = config.codec(pk.params())?;
        let mean = template.mean.iter().map(|&m| codec.encode(m)).collect::<Result<_>>()?;
        Ok(Self { pk, config, codec, template, mean, session: rng.next_u64(), state: State::Fresh })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    /// Fixed-point mean as used in the exponents.
    pub fn encoded_mean(&self) -> &[i128] {
        &self.mean
    }

    pub fn round1<R: RngCore + CryptoRng + ?Sized>(&mut self, rng: &mut R) -> Result<EnrollRound1> {
        if self.state != State::Fresh {
            return Err(Error::Session("round 1 already sent".into()));
        }
        let mut enc = |x: f64| self.pk.encrypt(self.codec.encode(x)?, rng);
        let s_w = self.template.scatter.iter().flatten().map(|&x| enc(x)).collect::<Result<_>>()?;
        let var = self.template.variance.iter().map(|&x| enc(x)).collect::<Result<_>>()?;
        let mean = self.mean.iter().map(|&m| self.pk.encrypt(m, rng)).collect::<Result<_>>()?;
        self.state = State::SentRound1;
        Ok(EnrollRound1 { session: self.session, s_w, var, mean })
    }

    /// `N` fresh, `P[i][j] = mu_bar_i ^ mu_{u,j}`, `R_t[i][j] = mu_{t,i} ^ mu_{u,j}`.
    pub fn round2<R: RngCore + CryptoRng + ?Sized>(&mut self, reply: &EsReply, rng: &mut R) -> Result<EnrollRound2> {
        if self.state != State::SentRound1 {
            return Err(Error::Session("round 2 out of order".into()));
        }
        if reply.session != self.session {
            return Err(Error::Session(format!("reply for session {} in session {}", reply.session, self.session)));
        }
        let n = self.config.n;
        let shape_ok = reply.mu.len() == n
            && reply.mu_bar.len() == n
            && reply.mu_t.iter().all(|m| m.len() == n)
            && (reply.mu_t.len() as u64) < self.config.max_users;
        if !shape_ok {
            return Err(Error::Protocol("malformed ES reply".into()));
        }
        let mu = &self.mean;
        let mut n_mat = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                n_mat.push(self.pk.encrypt(mu[i] * mu[j], rng)?);
            }
        }
        let outer = |v: &[Ciphertext]| -> Result<Vec<Ciphertext>> {
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push(self.pk.scalar_mul(&v[i], mu[j])?);
                }
            }
            Ok(out)
        };
        let p_mat = outer(&reply.mu_bar)?;
        let r_t = reply.mu_t.iter().map(|v| outer(v)).collect::<Result<_>>()?;
        self.state = State::Done;
        Ok(EnrollRound2 { session: self.session, n_mat, p_mat, r_t })
    }
}
