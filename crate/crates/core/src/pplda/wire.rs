//! Framing: 4-byte big-endian length, version byte, round tag, JSON payload.
//! The length counts everything after itself.

use std::io::{Read, Write};

use super::message::{Message, RoundTag};
use crate::{Error, Result};

pub const VERSION: u8 = 0x01;

/// Upper bound on a frame body; large enough for a 500-user reply at
/// 1024-bit keys.
pub const MAX_FRAME: usize = 1 << 30;

pub fn encode(msg: &Message) -> Result<Vec<u8>> {
    let payload = msg.payload()?;
    let len = payload.len() + 2;
    if len > MAX_FRAME {
        return Err(Error::Wire(format!("frame of {len} bytes exceeds the limit")));
    }
    let mut out = Vec::with_capacity(4 + len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    out.push(VERSION);
    out.push(msg.tag() as u8);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Message> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::Wire(format!("{} trailing bytes after frame", bytes.len() - used)));
    }
    Ok(msg)
}

/// Decodes the frame at the start of `bytes`, returning it and its length.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Message, usize)> {
    if bytes.len() < 4 {
        return Err(Error::Wire("truncated frame header".into()));
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    check_len(len)?;
    let body = bytes.get(4..4 + len).ok_or_else(|| Error::Wire(format!("truncated frame: want {len} bytes")))?;
    Ok((decode_body(body)?, 4 + len))
}

fn check_len(len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::Wire(format!("frame length {len} too short")));
    }
    if len > MAX_FRAME {
        return Err(Error::Wire(format!("frame length {len} exceeds the limit")));
    }
    Ok(())
}

fn decode_body(body: &[u8]) -> Result<Message> {
    if body[0] != VERSION {
        return Err(Error::Wire(format!("unsupported version {:#04x}", body[0])));
    }
    let tag = RoundTag::try_from(body[1])?;
    Message::from_payload(tag, &body[2..])
}

/// Writes one frame and returns the number of bytes written.
pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<usize> {
    let bytes = encode(msg)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(bytes.len())
}

/// Reads one frame. A clean end of stream before the header is an error too.
pub fn read_message<R: Read>(r: &mut R) -> Result<(Message, usize)> {
    let mut header = [0u8; 4];
    r.read_exact(&mut header).map_err(truncated)?;
    let len = u32::from_be_bytes(header) as usize;
    check_len(len)?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(truncated)?;
    Ok((decode_body(&body)?, 4 + len))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Wire("truncated frame".into())
    } else {
        Error::Io(e)
    }
}

/// Expects a frame with `tag`.
pub fn read_expect<R: Read>(r: &mut R, tag: RoundTag) -> Result<(Message, usize)> {
    let (msg, n) = read_message(r)?;
    if msg.tag() != tag {
        return Err(Error::Wire(format!("expected {tag:?}, got {:?}", msg.tag())));
    }
    Ok((msg, n))
}

#[cfg(test)]
mod tests {
    use super::super::message::*;
    use crate::he::{keygen, HeParams};
    use super::super::ProtocolConfig;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn samples() -> Vec<Message> {
        let params = HeParams { modulus_bits: 256, ..HeParams::default() };
        let (pk, _) = keygen(&params, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let pk = &pk;
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut ct = |m| pk.encrypt(m, &mut rng).unwrap();
        vec![
            Message::Enroll1(EnrollRound1 { session: 7, s_w: vec![ct(1), ct(2)], var: vec![ct(3)], mean: vec![ct(4)] }),
            Message::EsReply(EsReply { session: 7, mu: vec![ct(5)], mu_bar: vec![ct(6)], mu_t: vec![vec![ct(7)], vec![]] }),
            Message::Enroll2(EnrollRound2 { session: 7, n_mat: vec![ct(8)], p_mat: vec![ct(9)], r_t: vec![] }),
            Message::EsOutput(EsOutput { users: 3, s_w: vec![ct(-1)], s_b: vec![ct(0)], var: vec![ct(2)] }),
            Message::MpPublish(MpPublish { users: 3, pending: 1, model: None }),
            Message::KeyAnnounce(KeyAnnounce { public_key: pk.clone(), config: ProtocolConfig::new(2, 8) }),
        ]
    }

    #[test]
    fn round_trip_all_kinds() {
        for msg in samples() {
            let bytes = encode(&msg).unwrap();
            assert_eq!(bytes[4], VERSION);
            assert_eq!(bytes[5], msg.tag() as u8);
            assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 4);
            assert_eq!(decode(&bytes).unwrap(), msg);
            let mut cur = std::io::Cursor::new(bytes.clone());
            assert_eq!(read_message(&mut cur).unwrap(), (msg, bytes.len()));
        }
    }

    #[test]
    fn malformed_frames_are_errors() {
        let bytes = encode(&samples()[0]).unwrap();
        for cut in [0, 3, 5, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Wire(_))), "cut {cut}");
            let mut cur = std::io::Cursor::new(bytes[..cut].to_vec());
            assert!(matches!(read_message(&mut cur), Err(Error::Wire(_))));
        }
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(decode(&v).unwrap_err().to_string().contains("version"));
        let mut t = bytes.clone();
        t[5] = 9;
        assert!(decode(&t).unwrap_err().to_string().contains("tag"));
        // payload of one round under another round's tag
        let mut w = bytes.clone();
        w[5] = RoundTag::EsOutput as u8;
        assert!(decode(&w).is_err());
        let mut cur = std::io::Cursor::new(bytes.clone());
        assert!(read_expect(&mut cur, RoundTag::Enroll2).is_err());
        let mut huge = bytes;
        huge[..4].copy_from_slice(&u32::MAX.to_be_bytes());
        assert!(decode(&huge).is_err());
    }

    #[test]
    fn fuzzed_bytes_only_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let seeds: Vec<Vec<u8>> = samples().iter().map(|m| encode(m).unwrap()).collect();
        for i in 0..5000 {
            let mut b = seeds[i % seeds.len()].clone();
            match i % 3 {
                0 => {
                    for _ in 0..rng.gen_range(1..8) {
                        let k = rng.gen_range(0..b.len());
                        b[k] = rng.gen();
                    }
                }
                1 => b.truncate(rng.gen_range(0..b.len())),
                _ => b = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect(),
            }
            let _ = decode(&b);
        }
    }
}
