use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::HeParams;
use crate::{Error, Result};

/// First eight bytes of `SHA-256(N)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyId(pub u64);

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({:016x})", self.0)
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub encryptions: u64,
    pub decryptions: u64,
    pub additions: u64,
    pub exponentiations: u64,
    pub rerandomizations: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.encryptions + self.decryptions + self.additions + self.exponentiations + self.rerandomizations
    }
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, o: OpCounts) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions - o.encryptions,
            decryptions: self.decryptions - o.decryptions,
            additions: self.additions - o.additions,
            exponentiations: self.exponentiations - o.exponentiations,
            rerandomizations: self.rerandomizations - o.rerandomizations,
        }
    }
}

/// Thread-safe operation counters, shared by clones of a key.
#[derive(Debug, Default)]
pub struct OpCounter {
    encryptions: AtomicU64,
    decryptions: AtomicU64,
    additions: AtomicU64,
    exponentiations: AtomicU64,
    rerandomizations: AtomicU64,
}

impl OpCounter {
    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions.load(Ordering::Relaxed),
            decryptions: self.decryptions.load(Ordering::Relaxed),
            additions: self.additions.load(Ordering::Relaxed),
            exponentiations: self.exponentiations.load(Ordering::Relaxed),
            rerandomizations: self.rerandomizations.load(Ordering::Relaxed),
        }
    }

    fn bump(c: &AtomicU64) {
        c.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    key: KeyId,
    value: BigUint,
    /// Byte length of `N^2`; serializations are padded to it.
    width: usize,
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = self.value.to_str_radix(16);
        write!(f, "Ciphertext({}, {}..)", self.key, &hex[..hex.len().min(12)])
    }
}

impl Ciphertext {
    pub fn key_id(&self) -> KeyId {
        self.key
    }

    /// Fixed-width big-endian encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let raw = self.value.to_bytes_be();
        let mut out = vec![0u8; self.width.saturating_sub(raw.len())];
        out.extend_from_slice(&raw);
        out
    }

    /// 4-byte big-endian length followed by [`Self::to_bytes`].
    pub fn to_wire(&self) -> Vec<u8> {
        let body = self.to_bytes();
        let mut out = (body.len() as u32).to_be_bytes().to_vec();
        out.extend_from_slice(&body);
        out
    }

    /// Parses a wire encoding produced under `pk`.
    pub fn from_wire(bytes: &[u8], pk: &PublicKey) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Wire("truncated ciphertext length".into()));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if bytes.len() != 4 + len {
            return Err(Error::Wire(format!("ciphertext length {len} does not match {} bytes", bytes.len() - 4)));
        }
        pk.ciphertext_from_bytes(&bytes[4..])
    }
}

impl Serialize for Ciphertext {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            k: String,
            c: &'a str,
        }
        Repr { k: self.key.to_string(), c: &hex::encode(self.to_bytes()) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ciphertext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            k: String,
            c: String,
        }
        let r = Repr::deserialize(d)?;
        let key = u64::from_str_radix(&r.k, 16).map_err(serde::de::Error::custom)?;
        let bytes = hex::decode(&r.c).map_err(serde::de::Error::custom)?;
        if bytes.is_empty() {
            return Err(serde::de::Error::custom("empty ciphertext"));
        }
        Ok(Ciphertext { key: KeyId(key), value: BigUint::from_bytes_be(&bytes), width: bytes.len() })
    }
}

#[derive(Clone)]
pub struct PublicKey {
    params: HeParams,
    n: BigUint,
    n2: BigUint,
    h: BigUint,
    id: KeyId,
    width: usize,
    counter: Arc<OpCounter>,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}, {} bits)", self.id, self.n.bits())
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, o: &Self) -> bool {
        self.params == o.params && self.n == o.n && self.h == o.h
    }
}

impl PublicKey {
    fn from_parts(params: HeParams, n: BigUint, h: BigUint) -> Result<Self> {
        if n.bits() != params.modulus_bits as u64 {
            return Err(Error::Param(format!("modulus has {} bits, expected {}", n.bits(), params.modulus_bits)));
        }
        let n2 = &n * &n;
        if h.is_zero() || h >= n2 {
            return Err(Error::Param("randomizer base outside Z_{N^2}".into()));
        }
        let digest = Sha256::digest(n.to_bytes_be());
        let id = KeyId(u64::from_be_bytes(digest[..8].try_into().unwrap()));
        let width = n2.bits().div_ceil(8) as usize;
        Ok(Self { params, n, n2, h, id, width, counter: Arc::default() })
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn key_id(&self) -> KeyId {
        self.id
    }

    /// Byte length of a serialized ciphertext.
    pub fn ciphertext_len(&self) -> usize {
        self.width
    }

    pub fn counts(&self) -> OpCounts {
        self.counter.snapshot()
    }

    /// Same key with its own zeroed counters.
    pub fn detached(&self) -> Self {
        Self { counter: Arc::default(), ..self.clone() }
    }

    pub fn ciphertext_from_bytes(&self, bytes: &[u8]) -> Result<Ciphertext> {
        if bytes.len() != self.width {
            return Err(Error::Wire(format!("ciphertext is {} bytes, expected {}", bytes.len(), self.width)));
        }
        let value = BigUint::from_bytes_be(bytes);
        if value.is_zero() || value >= self.n2 {
            return Err(Error::Wire("ciphertext outside Z_{N^2}".into()));
        }
        Ok(Ciphertext { key: self.id, value, width: self.width })
    }

    fn check(&self, c: &Ciphertext) -> Result<()> {
        if c.key != self.id {
            return Err(Error::KeyMismatch);
        }
        if c.width != self.width || c.value.is_zero() || c.value >= self.n2 {
            return Err(Error::Wire("malformed ciphertext".into()));
        }
        Ok(())
    }

    fn wrap(&self, value: BigUint) -> Ciphertext {
        Ciphertext { key: self.id, value, width: self.width }
    }

    /// `g^m mod N^2 = 1 + (m mod N) N`.
    fn encode(&self, m: i128) -> Result<BigUint> {
        let (lo, hi) = self.params.plaintext_range();
        if m < lo || m > hi {
            return Err(Error::PlaintextRange(m));
        }
        let m = BigInt::from(m).mod_floor(&BigInt::from(self.n.clone()));
        let m = m.to_biguint().expect("non-negative after mod_floor");
        Ok((BigUint::one() + m * &self.n) % &self.n2)
    }

    fn noise<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> BigUint {
        let r = rng.gen_biguint(self.params.subgroup_bits as u64);
        self.h.modpow(&r, &self.n2)
    }

    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(&self, m: i128, rng: &mut R) -> Result<Ciphertext> {
        let gm = self.encode(m)?;
        OpCounter::bump(&self.counter.encryptions);
        Ok(self.wrap(gm * self.noise(rng) % &self.n2))
    }

    /// Encrypts the unsigned representative `u` in `[0, 2^t)`, read as a
    /// two's-complement value.
    pub fn encrypt_unsigned<R: RngCore + CryptoRng + ?Sized>(&self, u: u128, rng: &mut R) -> Result<Ciphertext> {
        let t = self.params.plaintext_bits;
        if u >> t != 0 {
            return Err(Error::Validation(format!("{u} does not fit in {t} bits")));
        }
        let signed = if u >> (t - 1) == 1 { u as i128 - (1i128 << t) } else { u as i128 };
        self.encrypt(signed, rng)
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        OpCounter::bump(&self.counter.additions);
        Ok(self.wrap(&a.value * &b.value % &self.n2))
    }

    /// `[[a - b]]`, via the group inverse of `b`.
    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        let inv = self.invert(&b.value)?;
        OpCounter::bump(&self.counter.additions);
        Ok(self.wrap(&a.value * inv % &self.n2))
    }

    fn invert(&self, v: &BigUint) -> Result<BigUint> {
        v.modinv(&self.n2).ok_or_else(|| Error::Integrity("ciphertext is not invertible".into()))
    }

    /// `[[a k]]`. Negative `k` exponentiates the inverse ciphertext.
    pub fn scalar_mul(&self, a: &Ciphertext, k: i128) -> Result<Ciphertext> {
        self.check(a)?;
        let base = if k < 0 { self.invert(&a.value)? } else { a.value.clone() };
        OpCounter::bump(&self.counter.exponentiations);
        Ok(self.wrap(base.modpow(&BigUint::from(k.unsigned_abs()), &self.n2)))
    }

    /// `[[a k]]` for a big-integer scalar.
    pub fn scalar_mul_big(&self, a: &Ciphertext, k: &BigInt) -> Result<Ciphertext> {
        self.check(a)?;
        let base = if k.is_negative() { self.invert(&a.value)? } else { a.value.clone() };
        OpCounter::bump(&self.counter.exponentiations);
        Ok(self.wrap(base.modpow(k.magnitude(), &self.n2)))
    }

    /// Fresh ciphertext of the same plaintext.
    pub fn rerandomize<R: RngCore + CryptoRng + ?Sized>(&self, a: &Ciphertext, rng: &mut R) -> Result<Ciphertext> {
        self.check(a)?;
        OpCounter::bump(&self.counter.rerandomizations);
        Ok(self.wrap(&a.value * self.noise(rng) % &self.n2))
    }
}

#[derive(Serialize, Deserialize)]
struct PublicKeyRepr {
    #[serde(flatten)]
    params: HeParams,
    n: String,
    h: String,
}

fn parse_decimal<E: serde::de::Error>(s: &str) -> std::result::Result<BigUint, E> {
    BigUint::parse_bytes(s.as_bytes(), 10).ok_or_else(|| E::custom("expected a decimal integer"))
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PublicKeyRepr { params: self.params, n: self.n.to_string(), h: self.h.to_string() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PublicKeyRepr::deserialize(d)?;
        r.params.validate().map_err(serde::de::Error::custom)?;
        PublicKey::from_parts(r.params, parse_decimal(&r.n)?, parse_decimal(&r.h)?).map_err(serde::de::Error::custom)
    }
}

/// Decryption key. Decrypts with the CRT over `p^2` and `q^2`.
#[derive(Clone)]
pub struct SecretKey {
    pk: PublicKey,
    p: BigUint,
    q: BigUint,
    p2: BigUint,
    q2: BigUint,
    /// `((p - 1) q)^{-1} mod p`
    hp: BigUint,
    /// `((q - 1) p)^{-1} mod q`
    hq: BigUint,
    /// `q^{-1} mod p`
    q_inv: BigUint,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", self.pk.id)
    }
}

impl SecretKey {
    fn from_primes(params: HeParams, p: BigUint, q: BigUint, h: Option<BigUint>, rng: Option<&mut dyn RngCore>) -> Result<Self> {
        if p == q {
            return Err(Error::Param("primes must differ".into()));
        }
        let n = &p * &q;
        let one = BigUint::one();
        let phi = (&p - &one) * (&q - &one);
        if !n.gcd(&phi).is_one() {
            return Err(Error::Param("gcd(N, phi(N)) != 1".into()));
        }
        let h = match (h, rng) {
            (Some(h), _) => h,
            (None, Some(rng)) => {
                let n2 = &n * &n;
                loop {
                    let x = rng.gen_biguint_range(&BigUint::from(2u32), &n);
                    if x.gcd(&n).is_one() {
                        break x.modpow(&n, &n2);
                    }
                }
            }
            (None, None) => unreachable!("caller supplies h or rng"),
        };
        let pk = PublicKey::from_parts(params, n, h)?;
        let inv = |a: &BigUint, m: &BigUint| a.modinv(m).ok_or_else(|| Error::Param("non-invertible CRT term".into()));
        let hp = inv(&((&p - &one) * &q % &p), &p)?;
        let hq = inv(&((&q - &one) * &p % &q), &q)?;
        let q_inv = inv(&(&q % &p), &p)?;
        Ok(Self { p2: &p * &p, q2: &q * &q, pk, p, q, hp, hq, q_inv })
    }

    pub fn public(&self) -> &PublicKey {
        &self.pk
    }

    fn residue(c: &BigUint, prime: &BigUint, square: &BigUint, h: &BigUint) -> BigUint {
        let x = c.modpow(&(prime - 1u32), square);
        let l = (x - 1u32) / prime;
        l * h % prime
    }

    /// Decrypts to the signed `t`-bit representative.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<i128> {
        self.pk.check(c)?;
        OpCounter::bump(&self.pk.counter.decryptions);
        let mp = Self::residue(&c.value, &self.p, &self.p2, &self.hp);
        let mq = Self::residue(&c.value, &self.q, &self.q2, &self.hq);
        // m = mq + q ((mp - mq) q^{-1} mod p)
        let diff = (BigInt::from(mp) - BigInt::from(mq.clone())).mod_floor(&BigInt::from(self.p.clone()));
        let k = diff.to_biguint().unwrap() * &self.q_inv % &self.p;
        let m = mq + k * &self.q;
        Ok(self.reduce(m))
    }

    /// Centers `m` mod `N`, then wraps into `t`-bit two's complement.
    fn reduce(&self, m: BigUint) -> i128 {
        let n = &self.pk.n;
        let centered = if &m > &(n >> 1) { BigInt::from(m) - BigInt::from(n.clone()) } else { BigInt::from(m) };
        let t = self.pk.params.plaintext_bits;
        let modulus = BigInt::one() << t;
        let mut r = centered.mod_floor(&modulus);
        if r >= (BigInt::one() << (t - 1)) {
            r -= modulus;
        }
        r.to_i128().expect("t <= 127")
    }
}

#[derive(Serialize, Deserialize)]
struct SecretKeyRepr {
    public: PublicKey,
    p: String,
    q: String,
}

impl Serialize for SecretKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SecretKeyRepr { public: self.pk.clone(), p: self.p.to_string(), q: self.q.to_string() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SecretKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SecretKeyRepr::deserialize(d)?;
        let (p, q) = (parse_decimal(&r.p)?, parse_decimal(&r.q)?);
        if &p * &q != r.public.n {
            return Err(serde::de::Error::custom("p q does not match the public modulus"));
        }
        SecretKey::from_primes(r.public.params, p, q, Some(r.public.h.clone()), None).map_err(serde::de::Error::custom)
    }
}

/// Generates a key pair of `params.modulus_bits` bits.
pub fn keygen<R: RngCore + CryptoRng>(params: &HeParams, rng: &mut R) -> Result<(PublicKey, SecretKey)> {
    params.validate()?;
    let half = params.modulus_bits as usize / 2;
    loop {
        let p = glass_pumpkin::prime::from_rng(half, rng).map_err(|e| Error::Param(e.to_string()))?;
        let q = glass_pumpkin::prime::from_rng(half, rng).map_err(|e| Error::Param(e.to_string()))?;
        if p == q || (&p * &q).bits() != params.modulus_bits as u64 {
            continue;
        }
        let sk = SecretKey::from_primes(*params, p, q, None, Some(rng))?;
        return Ok((sk.pk.clone(), sk));
    }
}
