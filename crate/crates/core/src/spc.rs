//! Scaled parity code over `Z_{2^d}` and Lee-metric helpers.
//!
//! A vector `c` is a codeword iff every symbol `c_i` is a multiple of its
//! scaling `s_i = 2^{l_i}` and `sum(c_i / s_i)` is even. Low bits of each
//! symbol absorb noise; the parity constraint lets the decoder repair one
//! symbol that was rounded to the wrong neighbour.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{discretize, FeatureRange, FeatureVector, MAX_BITS};
use crate::{Error, Result};

/// Per-feature scalings of a scaled parity code.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpcCodeRepr", into = "SpcCodeRepr")]
pub struct SpcCode {
    d: u32,
    l: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct SpcCodeRepr {
    n: usize,
    d: u32,
    l: Vec<u32>,
}

impl TryFrom<SpcCodeRepr> for SpcCode {
    type Error = Error;

    fn try_from(r: SpcCodeRepr) -> Result<Self> {
        if r.n != r.l.len() {
            return Err(Error::Dimension { expected: r.n, got: r.l.len() });
        }
        SpcCode::new(r.d, r.l)
    }
}

impl From<SpcCode> for SpcCodeRepr {
    fn from(c: SpcCode) -> Self {
        SpcCodeRepr { n: c.l.len(), d: c.d, l: c.l }
    }
}

impl SpcCode {
    /// Builds a code from bit width `d` and log-scalings `l`.
    ///
    /// Requires `n >= 1`, `2 <= d <= 32`, every `l_i <= d - 1`, and `l_n >= 1`.
    pub fn new(d: u32, l: Vec<u32>) -> Result<Self> {
        if !(2..=MAX_BITS).contains(&d) {
            return Err(Error::Param(format!("bit width {d} not in 2..={MAX_BITS}")));
        }
        if l.is_empty() {
            return Err(Error::Param("code needs at least one symbol".into()));
        }
        if let Some((i, li)) = l.iter().enumerate().find(|(_, &li)| li > d - 1) {
            return Err(Error::Param(format!("l[{i}] = {li} exceeds d - 1 = {}", d - 1)));
        }
        if *l.last().unwrap() == 0 {
            return Err(Error::Param("last symbol needs l_n >= 1 for its parity bit".into()));
        }
        Ok(Self { d, l })
    }

    /// Builds a code from power-of-two scalings.
    pub fn from_scalings(d: u32, s: &[u64]) -> Result<Self> {
        let l = s
            .iter()
            .map(|&si| {
                if si.is_power_of_two() {
                    Ok(si.trailing_zeros())
                } else {
                    Err(Error::Param(format!("scaling {si} is not a power of two")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, l)
    }

    pub fn n(&self) -> usize {
        self.l.len()
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn l(&self) -> &[u32] {
        &self.l
    }

    pub fn scaling(&self, i: usize) -> u64 {
        1u64 << self.l[i]
    }

    pub fn scalings(&self) -> Vec<u64> {
        self.l.iter().map(|&li| 1u64 << li).collect()
    }

    pub fn modulus(&self) -> u64 {
        1u64 << self.d
    }

    /// `log2 |C|`: all free high bits minus one bit fixed by parity.
    pub fn key_bits(&self) -> u32 {
        self.l.iter().map(|&li| self.d - li).sum::<u32>() - 1
    }

    fn check_vector(&self, v: &[u32]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: v.len() });
        }
        if let Some(&x) = v.iter().find(|&&x| (x as u64) >= self.modulus()) {
            return Err(Error::OutOfRange { value: x as u64, d: self.d });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Codeword {
    pub symbols: Vec<u32>,
}

impl Codeword {
    /// Canonical byte encoding: each symbol as 4-byte big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.symbols.iter().flat_map(|s| s.to_be_bytes()).collect()
    }
}

/// Lee weight of one element of `Z_{2^d}`.
pub fn lee_weight(x: u32, d: u32) -> Result<u64> {
    if !(1..=MAX_BITS).contains(&d) {
        return Err(Error::Param(format!("bit width {d} not in 1..={MAX_BITS}")));
    }
    let q = 1u64 << d;
    let x = x as u64;
    if x >= q {
        return Err(Error::OutOfRange { value: x, d });
    }
    Ok(if x <= q / 2 { x } else { q - x })
}

/// Sum of element Lee weights.
pub fn lee_weight_vec(x: &[u32], d: u32) -> Result<u64> {
    x.iter().map(|&xi| lee_weight(xi, d)).sum()
}

/// `lee_weight(x - y mod 2^d)`.
pub fn lee_distance(x: &[u32], y: &[u32], d: u32) -> Result<u64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    x.iter().zip(y).map(|(&a, &b)| lee_weight(sub_mod(a, b, d), d)).sum()
}

pub(crate) fn sub_mod(a: u32, b: u32, d: u32) -> u32 {
    ((a as u64).wrapping_sub(b as u64) & ((1u64 << d) - 1)) as u32
}

pub(crate) fn add_mod(a: u32, b: u32, d: u32) -> u32 {
    ((a as u64 + b as u64) & ((1u64 << d) - 1)) as u32
}

/// Tie rule when a scaling falls exactly between two powers of two.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerTie {
    #[default]
    Down,
    Up,
}

/// Nearest power of two to `x`, at least one.
pub fn nearest_power_of_two(x: u64, tie: PowerTie) -> u64 {
    if x <= 1 {
        return 1;
    }
    let lo = 1u64 << (63 - x.leading_zeros());
    if lo == x {
        return x;
    }
    let hi = lo << 1;
    match (x - lo).cmp(&(hi - x)) {
        Ordering::Less => lo,
        Ordering::Greater => hi,
        Ordering::Equal => match tie {
            PowerTie::Down => lo,
            PowerTie::Up => hi,
        },
    }
}

/// Derives the code scalings from per-feature standard deviations: each
/// `sigma_i * kappa` is discretized and mapped to the nearest power of two.
pub fn derive_scaling(sigma: &[f64], kappa: f64, d: u32, ranges: &[FeatureRange]) -> Result<SpcCode> {
    derive_scaling_with(sigma, kappa, d, ranges, PowerTie::Down)
}

pub fn derive_scaling_with(
    sigma: &[f64],
    kappa: f64,
    d: u32,
    ranges: &[FeatureRange],
    tie: PowerTie,
) -> Result<SpcCode> {
    if !(kappa > 0.0) {
        return Err(Error::Param(format!("kappa must be positive, got {kappa}")));
    }
    if ranges.len() != sigma.len() {
        return Err(Error::Dimension { expected: sigma.len(), got: ranges.len() });
    }
    if sigma.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::Param("standard deviations must be non-negative".into()));
    }
    if !(2..=MAX_BITS).contains(&d) {
        return Err(Error::Param(format!("bit width {d} not in 2..={MAX_BITS}")));
    }
    let cap = 1u64 << (d - 1);
    let mut scalings = Vec::with_capacity(sigma.len());
    for (s, r) in sigma.iter().zip(ranges) {
        let raw = discretize(s * kappa, d, r.min, r.max)? as u64;
        scalings.push(nearest_power_of_two(raw, tie).min(cap));
    }
    if let Some(last) = scalings.last_mut() {
        *last = (*last).max(2);
    }
    SpcCode::from_scalings(d, &scalings)
}

/// Draws a codeword uniformly from the code.
///
/// Every symbol gets uniformly random bits above its scaling; the lowest
/// retained bit of the last symbol is then chosen to make the parity even.
pub fn sample_codeword<R: Rng + ?Sized>(code: &SpcCode, rng: &mut R) -> Codeword {
    let n = code.n();
    let d = code.d;
    let mut symbols = Vec::with_capacity(n);
    let mut parity = 0u64;
    for i in 0..n - 1 {
        let free = d - code.l[i];
        let high: u64 = rng.gen_range(0..(1u64 << free));
        parity ^= high & 1;
        symbols.push((high << code.l[i]) as u32);
    }
    let free = d - code.l[n - 1];
    let upper: u64 = if free > 1 { rng.gen_range(0..(1u64 << (free - 1))) } else { 0 };
    let high = (upper << 1) | parity;
    symbols.push((high << code.l[n - 1]) as u32);
    Codeword { symbols }
}

/// Membership test: every `s_i | v_i` and `sum(v_i / s_i)` is even.
pub fn is_codeword(v: &[u32], code: &SpcCode) -> bool {
    if code.check_vector(v).is_err() {
        return false;
    }
    let mut parity = 0u64;
    for (i, &x) in v.iter().enumerate() {
        let s = code.scaling(i);
        if x as u64 % s != 0 {
            return false;
        }
        parity ^= (x as u64 / s) & 1;
    }
    parity == 0
}

/// Decodes `gamma` to a codeword.
///
/// Each symbol is rounded to the nearest multiple of its scaling (an error of
/// exactly half a step rounds down). If the rounded vector has odd parity, the
/// symbol with the largest relative error is moved one step toward `gamma`;
/// ties pick the lowest index and a zero error moves up.
pub fn decode(gamma: &[u32], code: &SpcCode) -> Result<Codeword> {
    code.check_vector(gamma)?;
    let d = code.d;
    let n = code.n();
    let mut err = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let mut parity = 0u64;
    for (i, &g) in gamma.iter().enumerate() {
        let s = code.scaling(i) as i64;
        let mut e = (g as u64 % s as u64) as i64;
        if 2 * e > s {
            e -= s;
        }
        let c = ((g as i64 - e).rem_euclid(1i64 << d)) as u32;
        parity ^= (c as u64 >> code.l[i]) & 1;
        err.push(e);
        out.push(c);
    }
    if parity == 1 {
        let mut k = 0;
        for i in 1..n {
            // |e_i| / s_i > |e_k| / s_k, compared exactly
            if (err[i].unsigned_abs() << code.l[k]) > (err[k].unsigned_abs() << code.l[i]) {
                k = i;
            }
        }
        let step = code.scaling(k) as u32;
        out[k] = if err[k] < 0 { sub_mod(out[k], step, d) } else { add_mod(out[k], step, d) };
    }
    Ok(Codeword { symbols: out })
}

/// Applies [`decode`] to a feature vector.
pub fn decode_vector(gamma: &FeatureVector, code: &SpcCode) -> Result<Codeword> {
    if gamma.d != code.d {
        return Err(Error::Param(format!("vector width {} differs from code width {}", gamma.d, code.d)));
    }
    decode(&gamma.values, code)
}

/// Every codeword of a small code, by brute force. Intended for tests and
/// visualization; the size is `2^{key_bits}`.
pub fn enumerate_codewords(code: &SpcCode) -> Vec<Codeword> {
    let q = code.modulus();
    let n = code.n();
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    loop {
        if is_codeword(&cur, code) {
            out.push(Codeword { symbols: cur.clone() });
        }
        // odometer over multiples of the scalings
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            let next = cur[i] as u64 + code.scaling(i);
            if next < q {
                cur[i] = next as u32;
                break;
            }
            cur[i] = 0;
            i += 1;
        }
    }
}
