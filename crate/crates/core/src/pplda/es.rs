use rand::{CryptoRng, RngCore};

use super::message::{EnrollRound1, EnrollRound2, EsOutput, EsReply, KeyAnnounce};
use super::{idx, ProtocolConfig, UserTemplate};
use crate::he::{Ciphertext, PublicKey};
use crate::{Error, Result};

/// Encrypted state kept by the enrollment server.
///
/// `l_t[t][i n + j]` holds `[[s_i mu_{t,j}]]` for the current sum of means `s`.
#[derive(Clone, Debug)]
pub struct EnrollmentLedger {
    pub s_w: Vec<Ciphertext>,
    pub mu_bar: Vec<Ciphertext>,
    pub var_bar: Vec<Ciphertext>,
    pub k: Vec<Ciphertext>,
    pub mu_t: Vec<Vec<Ciphertext>>,
    pub m_t: Vec<Vec<Ciphertext>>,
    pub l_t: Vec<Vec<Ciphertext>>,
}

impl EnrollmentLedger {
    /// Every aggregate starts as an encryption of zero.
    fn seeded<R: RngCore + CryptoRng + ?Sized>(pk: &PublicKey, n: usize, rng: &mut R) -> Result<Self> {
        let mut zeros = |k: usize| (0..k).map(|_| pk.encrypt(0, rng)).collect::<Result<Vec<_>>>();
        Ok(Self {
            s_w: zeros(n * n)?,
            mu_bar: zeros(n)?,
            var_bar: zeros(n)?,
            k: zeros(n * n)?,
            mu_t: vec![],
            m_t: vec![],
            l_t: vec![],
        })
    }

    pub fn users(&self) -> usize {
        self.m_t.len()
    }
}

#[derive(Debug)]
struct Pending {
    session: u64,
    mu: Vec<Ciphertext>,
    var: Vec<Ciphertext>,
    s_w: Vec<Ciphertext>,
    mean_u: Vec<Ciphertext>,
}

/// The enrollment server. Holds only the public key.
#[derive(Debug)]
pub struct EnrollmentServer {
    announce: KeyAnnounce,
    pk: PublicKey,
    config: ProtocolConfig,
    ledger: EnrollmentLedger,
    pending: Option<Pending>,
}

impl EnrollmentServer {
    pub fn new<R: RngCore + CryptoRng + ?Sized>(announce: KeyAnnounce, rng: &mut R) -> Result<Self> {
        let pk = announce.public_key.detached();
        let config = announce.config;
        config.validate(pk.params())?;
        let ledger = EnrollmentLedger::seeded(&pk, config.n, rng)?;
        Ok(Self { announce, pk, config, ledger, pending: None })
    }

    /// Builds the ledger that enrolling `templates` in order would leave,
    /// by encrypting the plaintext aggregates directly. For benchmarks.
    pub fn fast_forward<R: RngCore + CryptoRng + ?Sized>(
        announce: KeyAnnounce,
        templates: &[UserTemplate],
        rng: &mut R,
    ) -> Result<Self> {
        let mut es = Self::new(announce, rng)?;
        let n = es.config.n;
        let codec = es.config.codec(es.pk.params())?;
        let mut means = Vec::with_capacity(templates.len());
        let mut sum = vec![0i128; n];
        let mut s_w = vec![0i128; n * n];
        let mut var = vec![0i128; n];
        for t in templates {
            t.validate(&es.config)?;
            let mu = t.mean.iter().map(|&x| codec.encode(x)).collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                sum[i] += mu[i];
                var[i] += codec.encode(t.variance[i])?;
                for j in 0..n {
                    s_w[idx(n, i, j)] += codec.encode(t.scatter[i][j])?;
                }
            }
            means.push(mu);
        }
        let pk = es.pk.clone();
        let mut enc = |v: i128| pk.encrypt(v, rng);
        let mut square = |f: &dyn Fn(usize, usize) -> i128| -> Result<Vec<Ciphertext>> {
            (0..n * n).map(|k| enc(f(k / n, k % n))).collect()
        };
        let l = &mut es.ledger;
        l.s_w = square(&|i, j| s_w[idx(n, i, j)])?;
        l.k = square(&|i, j| sum[i] * sum[j])?;
        for mu in &means {
            l.m_t.push(square(&|i, j| mu[i] * mu[j])?);
            l.l_t.push(square(&|i, j| sum[i] * mu[j])?);
        }
        let mut enc = |v: i128| pk.encrypt(v, rng);
        l.mu_bar = sum.iter().map(|&v| enc(v)).collect::<Result<_>>()?;
        l.var_bar = var.iter().map(|&v| enc(v)).collect::<Result<_>>()?;
        for mu in &means {
            l.mu_t.push(mu.iter().map(|&v| enc(v)).collect::<Result<_>>()?);
        }
        es.pk = es.pk.detached();
        Ok(es)
    }

    pub fn announce(&self) -> &KeyAnnounce {
        &self.announce
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn ledger(&self) -> &EnrollmentLedger {
        &self.ledger
    }

    pub fn users(&self) -> usize {
        self.ledger.users()
    }

    /// Drops a half-finished session.
    pub fn abort(&mut self) {
        self.pending = None;
    }

    fn add_vec(&self, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Vec<Ciphertext>> {
        a.iter().zip(b).map(|(x, y)| self.pk.add(x, y)).collect()
    }

    fn rerandomize<R: RngCore + CryptoRng + ?Sized>(&self, v: &[Ciphertext], rng: &mut R) -> Result<Vec<Ciphertext>> {
        v.iter().map(|c| self.pk.rerandomize(c, rng)).collect()
    }

    pub fn round1<R: RngCore + CryptoRng + ?Sized>(&mut self, msg: &EnrollRound1, rng: &mut R) -> Result<EsReply> {
        if let Some(p) = &self.pending {
            return Err(Error::Session(if p.session == msg.session {
                format!("round 1 replayed in session {}", msg.session)
            } else {
                format!("session {} still open", p.session)
            }));
        }
        let n = self.config.n;
        if msg.s_w.len() != n * n || msg.var.len() != n || msg.mean.len() != n {
            return Err(Error::Protocol("round 1 payload has the wrong shape".into()));
        }
        if self.users() as u64 >= self.config.max_users {
            return Err(Error::Capacity(format!("ledger is full at {} users", self.users())));
        }
        let l = &self.ledger;
        let pending = Pending {
            session: msg.session,
            mu: self.add_vec(&l.mu_bar, &msg.mean)?,
            var: self.add_vec(&l.var_bar, &msg.var)?,
            s_w: self.add_vec(&l.s_w, &msg.s_w)?,
            mean_u: msg.mean.clone(),
        };
        let reply = EsReply {
            session: msg.session,
            mu: self.rerandomize(&pending.mu, rng)?,
            mu_bar: self.rerandomize(&l.mu_bar, rng)?,
            mu_t: l.mu_t.iter().map(|m| self.rerandomize(m, rng)).collect::<Result<_>>()?,
        };
        self.pending = Some(pending);
        Ok(reply)
    }

    pub fn round2(&mut self, msg: &EnrollRound2) -> Result<EsOutput> {
        match &self.pending {
            None => return Err(Error::Session("round 2 without round 1".into())),
            Some(p) if p.session != msg.session => {
                return Err(Error::Session(format!("round 2 for session {} in session {}", msg.session, p.session)))
            }
            Some(_) => {}
        }
        let n = self.config.n;
        let v = self.users();
        let shape_ok = msg.n_mat.len() == n * n
            && msg.p_mat.len() == n * n
            && msg.r_t.len() == v
            && msg.r_t.iter().all(|r| r.len() == n * n);
        if !shape_ok {
            return Err(Error::Protocol("round 2 payload has the wrong shape".into()));
        }
        let pk = &self.pk;
        let (pm, nm) = (&msg.p_mat, &msg.n_mat);

        let mut k = Vec::with_capacity(n * n);
        let mut l_u = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let a = pk.add(&self.ledger.k[idx(n, i, j)], &pm[idx(n, i, j)])?;
                let b = pk.add(&a, &pm[idx(n, j, i)])?;
                k.push(pk.add(&b, &nm[idx(n, i, j)])?);
                l_u.push(pk.add(&pm[idx(n, i, j)], &nm[idx(n, i, j)])?);
            }
        }
        let mut l_t = Vec::with_capacity(v + 1);
        for (old, r) in self.ledger.l_t.iter().zip(&msg.r_t) {
            let mut updated = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    updated.push(pk.add(&old[idx(n, i, j)], &r[idx(n, j, i)])?);
                }
            }
            l_t.push(updated);
        }
        l_t.push(l_u);
        let mut m_t = self.ledger.m_t.clone();
        m_t.push(nm.clone());

        let s_b = self.scatter_between(&m_t, &l_t, &k)?;

        let p = self.pending.take().expect("checked above");
        let l = &mut self.ledger;
        l.k = k;
        l.l_t = l_t;
        l.m_t = m_t;
        l.mu_t.push(p.mean_u);
        l.mu_bar = p.mu;
        l.var_bar = p.var;
        l.s_w = p.s_w;
        Ok(self.output_with(s_b))
    }

    /// Output for the current ledger without enrolling anyone.
    pub fn output(&self) -> Result<EsOutput> {
        let l = &self.ledger;
        let s_b = self.scatter_between(&l.m_t, &l.l_t, &l.k)?;
        Ok(self.output_with(s_b))
    }

    fn output_with(&self, s_b: Vec<Ciphertext>) -> EsOutput {
        EsOutput {
            users: self.users() as u64,
            s_w: self.ledger.s_w.clone(),
            s_b,
            var: self.ledger.var_bar.clone(),
        }
    }

    /// `[[m^2 S_B]][i][j] = prod_t M_t^{m^2} L_t[i][j]^{-m} L_t[j][i]^{-m} K^m`.
    fn scatter_between(&self, m_t: &[Vec<Ciphertext>], l_t: &[Vec<Ciphertext>], k: &[Ciphertext]) -> Result<Vec<Ciphertext>> {
        let n = self.config.n;
        let m = m_t.len() as i128;
        let pk = &self.pk;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = pk.scalar_mul(&k[idx(n, i, j)], m)?;
                for (mt, lt) in m_t.iter().zip(l_t) {
                    let a = pk.scalar_mul(&mt[idx(n, i, j)], m * m)?;
                    let b = pk.scalar_mul(&lt[idx(n, i, j)], -m)?;
                    let c = pk.scalar_mul(&lt[idx(n, j, i)], -m)?;
                    acc = pk.add(&acc, &a)?;
                    acc = pk.add(&acc, &b)?;
                    acc = pk.add(&acc, &c)?;
                }
                out.push(acc);
            }
        }
        Ok(out)
    }
}
