use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::es::EnrollmentServer;
use super::message::{KeyAnnounce, Message};
use super::mp::{BatchPolicy, MatrixPublisher, MpOutcome};
use super::user::UserClient;
use super::{wire, ProtocolConfig, UserTemplate};
use crate::he::{OpCounts, SecretKey};
use crate::Result;

/// Encoded frame sizes of one enrollment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ByteCounts {
    pub enroll1: usize,
    pub es_reply: usize,
    pub enroll2: usize,
    pub es_output: usize,
    pub mp_publish: usize,
}

impl ByteCounts {
    pub fn total(&self) -> usize {
        self.enroll1 + self.es_reply + self.enroll2 + self.es_output + self.mp_publish
    }
}

/// Wall-clock seconds spent in each role.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RoleTimes {
    pub user: f64,
    pub es: f64,
    pub mp: f64,
}

#[derive(Clone, Debug)]
pub struct EnrollmentRecord {
    pub outcome: MpOutcome,
    pub bytes: ByteCounts,
    pub user_ops: OpCounts,
    pub es_ops: OpCounts,
    pub mp_ops: OpCounts,
    pub times: RoleTimes,
    /// Ciphertexts in the ES output.
    pub es_output_ciphertexts: usize,
}

/// All three roles in one process. Every message passes through the wire
/// codec so byte counts match a networked run.
#[derive(Debug)]
pub struct LocalDeployment {
    pub es: EnrollmentServer,
    pub mp: MatrixPublisher,
    rng: ChaCha20Rng,
}

fn through_wire(msg: Message, size: &mut usize) -> Result<Message> {
    let bytes = wire::encode(&msg)?;
    *size = bytes.len();
    wire::decode(&bytes)
}

impl LocalDeployment {
    pub fn new(sk: SecretKey, config: ProtocolConfig, policy: BatchPolicy, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mp = MatrixPublisher::new(sk, config, policy)?;
        let es = EnrollmentServer::new(mp.announce(), &mut rng)?;
        Ok(Self { es, mp, rng })
    }

    /// Starts from a fast-forwarded ledger holding `templates`.
    pub fn with_ledger(
        sk: SecretKey,
        config: ProtocolConfig,
        policy: BatchPolicy,
        templates: &[UserTemplate],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mp = MatrixPublisher::new(sk, config, policy)?;
        let es = EnrollmentServer::fast_forward(mp.announce(), templates, &mut rng)?;
        let mut dep = Self { es, mp, rng };
        dep.mp.skip_to(templates.len() as u64);
        Ok(dep)
    }

    pub fn announce(&self) -> KeyAnnounce {
        self.es.announce().clone()
    }

    pub fn enroll(&mut self, template: UserTemplate) -> Result<EnrollmentRecord> {
        let mut bytes = ByteCounts::default();
        let es_before = self.es.public_key().counts();
        let mp_before = self.mp.secret_key().public().counts();

        let mut times = RoleTimes::default();
        let lap = |slot: &mut f64, since: &mut Instant| {
            *slot += since.elapsed().as_secs_f64();
            *since = Instant::now();
        };
        let mut since = Instant::now();

        let mut user = UserClient::new(&self.announce(), template, &mut self.rng)?;
        let r1 = user.round1(&mut self.rng)?;
        lap(&mut times.user, &mut since);
        let m1 = through_wire(Message::Enroll1(r1), &mut bytes.enroll1)?;
        since = Instant::now();
        let reply = self.es.round1(&m1.into_enroll1()?, &mut self.rng)?;
        lap(&mut times.es, &mut since);
        let reply = through_wire(Message::EsReply(reply), &mut bytes.es_reply)?.into_es_reply()?;
        since = Instant::now();
        let m2 = user.round2(&reply, &mut self.rng).inspect_err(|_| self.es.abort())?;
        lap(&mut times.user, &mut since);
        let m2 = through_wire(Message::Enroll2(m2), &mut bytes.enroll2)?.into_enroll2()?;
        since = Instant::now();
        let out = self.es.round2(&m2)?;
        lap(&mut times.es, &mut since);
        let es_output_ciphertexts = out.s_w.len() + out.s_b.len() + out.var.len();
        let out = through_wire(Message::EsOutput(out), &mut bytes.es_output)?.into_es_output()?;
        since = Instant::now();
        let outcome = self.mp.process(&out)?;
        lap(&mut times.mp, &mut since);
        through_wire(Message::MpPublish(outcome.to_message(out.users)), &mut bytes.mp_publish)?;

        Ok(EnrollmentRecord {
            outcome,
            bytes,
            user_ops: user.public_key().counts(),
            es_ops: self.es.public_key().counts() - es_before,
            mp_ops: self.mp.secret_key().public().counts() - mp_before,
            times,
            es_output_ciphertexts,
        })
    }
}
