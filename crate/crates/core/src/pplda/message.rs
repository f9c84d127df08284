use serde::{Deserialize, Serialize};

use super::ProtocolConfig;
use crate::he::{Ciphertext, PublicKey};
use crate::lda::LdaModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum RoundTag {
    Enroll1 = 1,
    EsReply = 2,
    Enroll2 = 3,
    EsOutput = 4,
    MpPublish = 5,
    KeyAnnounce = 6,
}

impl TryFrom<u8> for RoundTag {
    type Error = Error;
    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => RoundTag::Enroll1,
            2 => RoundTag::EsReply,
            3 => RoundTag::Enroll2,
            4 => RoundTag::EsOutput,
            5 => RoundTag::MpPublish,
            6 => RoundTag::KeyAnnounce,
            _ => return Err(Error::Wire(format!("unknown round tag {b}"))),
        })
    }
}

/// User to ES: `[[S_Wu]]` (row-major), `[[v'_u]]`, `[[mu_u]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrollRound1 {
    pub session: u64,
    pub s_w: Vec<Ciphertext>,
    pub var: Vec<Ciphertext>,
    pub mean: Vec<Ciphertext>,
}

/// ES to user: updated sum `[[mu]]`, stale sum `[[mu_bar]]` and the mean of
/// every previously enrolled user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsReply {
    pub session: u64,
    pub mu: Vec<Ciphertext>,
    pub mu_bar: Vec<Ciphertext>,
    pub mu_t: Vec<Vec<Ciphertext>>,
}

/// User to ES: `[[N]]`, `[[P]]` and one `[[R_t]]` per enrolled user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrollRound2 {
    pub session: u64,
    pub n_mat: Vec<Ciphertext>,
    pub p_mat: Vec<Ciphertext>,
    pub r_t: Vec<Vec<Ciphertext>>,
}

/// ES to MP after every enrollment. `s_b` decrypts to `m^2 S_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsOutput {
    pub users: u64,
    pub s_w: Vec<Ciphertext>,
    pub s_b: Vec<Ciphertext>,
    pub var: Vec<Ciphertext>,
}

/// MP's answer to an output. `model` is absent while the batch is filling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpPublish {
    pub users: u64,
    pub pending: u64,
    pub model: Option<LdaModel>,
}

/// MP's public key and protocol parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyAnnounce {
    pub public_key: PublicKey,
    pub config: ProtocolConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Enroll1(EnrollRound1),
    EsReply(EsReply),
    Enroll2(EnrollRound2),
    EsOutput(EsOutput),
    MpPublish(MpPublish),
    KeyAnnounce(KeyAnnounce),
}

impl Message {
    pub fn tag(&self) -> RoundTag {
        match self {
            Message::Enroll1(_) => RoundTag::Enroll1,
            Message::EsReply(_) => RoundTag::EsReply,
            Message::Enroll2(_) => RoundTag::Enroll2,
            Message::EsOutput(_) => RoundTag::EsOutput,
            Message::MpPublish(_) => RoundTag::MpPublish,
            Message::KeyAnnounce(_) => RoundTag::KeyAnnounce,
        }
    }

    pub(crate) fn payload(&self) -> Result<Vec<u8>> {
        Ok(match self {
            Message::Enroll1(m) => serde_json::to_vec(m)?,
            Message::EsReply(m) => serde_json::to_vec(m)?,
            Message::Enroll2(m) => serde_json::to_vec(m)?,
            Message::EsOutput(m) => serde_json::to_vec(m)?,
            Message::MpPublish(m) => serde_json::to_vec(m)?,
            Message::KeyAnnounce(m) => serde_json::to_vec(m)?,
        })
    }

    pub(crate) fn from_payload(tag: RoundTag, bytes: &[u8]) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Wire(format!("{tag:?} payload: {e}"));
        Ok(match tag {
            RoundTag::Enroll1 => Message::Enroll1(serde_json::from_slice(bytes).map_err(bad)?),
            RoundTag::EsReply => Message::EsReply(serde_json::from_slice(bytes).map_err(bad)?),
            RoundTag::Enroll2 => Message::Enroll2(serde_json::from_slice(bytes).map_err(bad)?),
            RoundTag::EsOutput => Message::EsOutput(serde_json::from_slice(bytes).map_err(bad)?),
            RoundTag::MpPublish => Message::MpPublish(serde_json::from_slice(bytes).map_err(bad)?),
            RoundTag::KeyAnnounce => Message::KeyAnnounce(serde_json::from_slice(bytes).map_err(bad)?),
        })
    }

    /// Fails with a protocol error unless the message carries `tag`.
    pub fn expect(self, tag: RoundTag) -> Result<Self> {
        if self.tag() == tag {
            Ok(self)
        } else {
            Err(Error::Protocol(format!("expected {tag:?}, got {:?}", self.tag())))
        }
    }
}

macro_rules! into_variant {
    ($name:ident, $variant:ident, $ty:ty) => {
        impl Message {
            pub fn $name(self) -> Result<$ty> {
                match self {
                    Message::$variant(m) => Ok(m),
                    other => Err(Error::Protocol(format!(
                        "expected {:?}, got {:?}",
                        RoundTag::$variant,
                        other.tag()
                    ))),
                }
            }
        }
    };
}

into_variant!(into_enroll1, Enroll1, EnrollRound1);
into_variant!(into_es_reply, EsReply, EsReply);
into_variant!(into_enroll2, Enroll2, EnrollRound2);
into_variant!(into_es_output, EsOutput, EsOutput);
into_variant!(into_mp_publish, MpPublish, MpPublish);
into_variant!(into_key_announce, KeyAnnounce, KeyAnnounce);
