//! Fuzzy commitments over the scaled parity code.
//!
//! A fresh codeword `c` is committed as `(PRF_c(0), x - c mod 2^d)`. Anyone
//! holding a template `y` close to `x` recovers `c` by decoding `y - delta`
//! and derives keys as `PRF_c(z)`. The PRF is HMAC-SHA-256 keyed by the
//! canonical codeword encoding.

use hmac::{Hmac, Mac};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::features::FeatureVector;
use crate::spc::{add_mod, decode, sample_codeword, sub_mod, Codeword, SpcCode};
use crate::{Error, Result};

type HmacSha256 = Hmac<Sha256>;

/// PRF input reserved for the commitment tag. Every encoded key input is at
/// least four bytes long, so the two can never collide.
const TAG_INPUT: [u8; 1] = [0];

/// `HMAC-SHA-256(key = codeword bytes, message = input)`.
pub fn prf(codeword: &Codeword, input: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(&codeword.to_bytes()).expect("HMAC accepts any key length");
    mac.update(input);
    mac.finalize().into_bytes().into()
}

/// Length-prefixed (4-byte big-endian) encoding of a key-derivation input.
/// The input must be non-empty.
pub fn encode_key_input(z: &[u8]) -> Result<Vec<u8>> {
    if z.is_empty() {
        return Err(Error::Validation("key-derivation input must be non-empty".into()));
    }
    let len = u32::try_from(z.len()).map_err(|_| Error::Validation("key input too long".into()))?;
    let mut out = Vec::with_capacity(4 + z.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(z);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    #[serde(with = "hex_array")]
    pub tag: [u8; 32],
    pub delta: Vec<u32>,
    pub code: SpcCode,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct DerivedKey(pub [u8; 32]);

impl DerivedKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for DerivedKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DerivedKey(..)")
    }
}

/// Result of a decommitment attempt. A tag mismatch yields `NoKey` and
/// reveals nothing about the decoded codeword.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decommitment {
    Key(DerivedKey),
    NoKey,
}

impl Decommitment {
    pub fn key(&self) -> Option<&DerivedKey> {
        match self {
            Decommitment::Key(k) => Some(k),
            Decommitment::NoKey => None,
        }
    }

    pub fn is_key(&self) -> bool {
        matches!(self, Decommitment::Key(_))
    }
}

fn check_vector(x: &FeatureVector, code: &SpcCode) -> Result<()> {
    if x.len() != code.n() {
        return Err(Error::Dimension { expected: code.n(), got: x.len() });
    }
    if x.d != code.d() {
        return Err(Error::Param(format!("vector width {} differs from code width {}", x.d, code.d())));
    }
    Ok(())
}

/// Commits to a uniformly drawn codeword using template `x`.
pub fn commit<R: Rng + ?Sized>(
    x: &FeatureVector,
    code: &SpcCode,
    rng: &mut R,
) -> Result<(Commitment, Codeword)> {
    check_vector(x, code)?;
    let c = sample_codeword(code, rng);
    let d = code.d();
    let delta = x.values.iter().zip(&c.symbols).map(|(&xi, &ci)| sub_mod(xi, ci, d)).collect();
    let tag = prf(&c, &TAG_INPUT);
    Ok((Commitment { tag, delta, code: code.clone() }, c))
}

/// Key for codeword `c` and input `z`, as derived after a successful decommit.
pub fn derive_key(c: &Codeword, z: &[u8]) -> Result<DerivedKey> {
    Ok(DerivedKey(prf(c, &encode_key_input(z)?)))
}

/// Attempts to open `com` with template `y`.
pub fn decommit(y: &FeatureVector, com: &Commitment, z: &[u8]) -> Result<Decommitment> {
    let input = encode_key_input(z)?;
    match open(y, com)? {
        Some(c) => Ok(Decommitment::Key(DerivedKey(prf(&c, &input)))),
        None => Ok(Decommitment::NoKey),
    }
}

/// Decodes `y - delta` and checks the tag; returns the codeword on success.
pub(crate) fn open(y: &FeatureVector, com: &Commitment) -> Result<Option<Codeword>> {
    check_vector(y, &com.code)?;
    if com.delta.len() != com.code.n() {
        return Err(Error::Dimension { expected: com.code.n(), got: com.delta.len() });
    }
    let d = com.code.d();
    let gamma: Vec<u32> = y.values.iter().zip(&com.delta).map(|(&yi, &di)| sub_mod(yi, di, d)).collect();
    let c = decode(&gamma, &com.code)?;
    Ok((prf(&c, &TAG_INPUT) == com.tag).then_some(c))
}

/// `x = delta + c mod 2^d`; used by tests to check the offset arithmetic.
pub fn reconstruct_template(com: &Commitment, c: &Codeword) -> Vec<u32> {
    let d = com.code.d();
    com.delta.iter().zip(&c.symbols).map(|(&di, &ci)| add_mod(di, ci, d)).collect()
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes.try_into().map_err(|_| serde::de::Error::custom("tag must be 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spc::is_codeword;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[u32], d: u32) -> FeatureVector {
        FeatureVector::new(v.to_vec(), d).unwrap()
    }

    #[test]
    fn prf_reproduces_hmac_test_vector() {
        // RFC 4231 test case 3: key 0xaa x 20, data 0xdd x 50
        let c = Codeword { symbols: vec![0xaaaa_aaaa; 5] };
        let code = SpcCode::new(32, vec![0, 1, 1, 1, 1]).unwrap();
        assert!(is_codeword(&c.symbols, &code));
        assert_eq!(
            hex::encode(prf(&c, &[0xdd; 50])),
            "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"
        );
    }

    #[test]
    fn prf_is_deterministic_and_input_sensitive() {
        let c = Codeword { symbols: vec![4, 8, 12] };
        assert_eq!(prf(&c, b"a"), prf(&c, b"a"));
        assert_ne!(prf(&c, b"a"), prf(&c, b"b"));
        assert_ne!(prf(&c, &TAG_INPUT), prf(&c, &encode_key_input(&[0]).unwrap()));
    }

    #[test]
    fn empty_key_input_rejected() {
        assert!(encode_key_input(b"").is_err());
    }

    #[test]
    fn round_trip_and_independent_codewords() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let code = SpcCode::from_scalings(8, &[16, 8, 32, 4]).unwrap();
        let x = fv(&[100, 7, 250, 33], 8);
        let (com, c) = commit(&x, &code, &mut rng).unwrap();
        let got = decommit(&x, &com, b"pin").unwrap();
        assert_eq!(got.key().copied(), Some(derive_key(&c, b"pin").unwrap()));
        let (com2, _) = commit(&x, &code, &mut rng).unwrap();
        assert_ne!(com.delta, com2.delta);
        assert_eq!(reconstruct_template(&com, &c), x.values);
    }

    #[test]
    fn single_feature_perturbation_recovers_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let code = SpcCode::from_scalings(8, &[16, 16, 16]).unwrap();
        let x = fv(&[40, 90, 200], 8);
        let (com, c) = commit(&x, &code, &mut rng).unwrap();
        let expect = derive_key(&c, b"z").unwrap();
        for shift in [-7i32, -1, 1, 7] {
            for i in 0..3 {
                let mut y = x.values.clone();
                y[i] = (y[i] as i32 + shift).rem_euclid(256) as u32;
                assert_eq!(decommit(&fv(&y, 8), &com, b"z").unwrap().key(), Some(&expect));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let code = SpcCode::from_scalings(8, &[16, 16]).unwrap();
        assert!(matches!(commit(&fv(&[1, 2, 3], 8), &code, &mut rng), Err(Error::Dimension { .. })));
        let (com, _) = commit(&fv(&[1, 2], 8), &code, &mut rng).unwrap();
        assert!(matches!(decommit(&fv(&[1], 8), &com, b"z"), Err(Error::Dimension { .. })));
    }

    #[test]
    fn delta_leaks_exactly_the_low_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let code = SpcCode::from_scalings(8, &[1, 4, 32, 2]).unwrap();
        let x = fv(&[201, 13, 77, 250], 8);
        for _ in 0..200 {
            let (com, _) = commit(&x, &code, &mut rng).unwrap();
            for i in 0..4 {
                let s = code.scaling(i) as u32;
                assert_eq!(com.delta[i] % s, x.values[i] % s);
            }
        }
    }

    #[test]
    fn delta_matches_brute_force_subtraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let d = rng.gen_range(2..=6u32);
            let code = SpcCode::new(d, vec![rng.gen_range(0..d), rng.gen_range(1..d)]).unwrap();
            let x: Vec<u32> = (0..2).map(|_| rng.gen_range(0..(1u32 << d))).collect();
            let (com, c) = commit(&fv(&x, d), &code, &mut rng).unwrap();
            for i in 0..2 {
                // smallest non-negative t with c_i + t == x_i (mod 2^d)
                let t = (0..(1u32 << d)).find(|t| (c.symbols[i] + t) % (1 << d) == x[i]).unwrap();
                assert_eq!(com.delta[i], t);
            }
        }
    }

    #[test]
    fn commitment_json_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let code = SpcCode::from_scalings(8, &[4, 4]).unwrap();
        let (com, _) = commit(&fv(&[10, 20], 8), &code, &mut rng).unwrap();
        let v: serde_json::Value = serde_json::to_value(&com).unwrap();
        assert_eq!(v["tag"].as_str().unwrap().len(), 64);
        assert_eq!(v["code"]["l"], serde_json::json!([2, 2]));
        assert_eq!(serde_json::from_value::<Commitment>(v).unwrap(), com);
    }
}
