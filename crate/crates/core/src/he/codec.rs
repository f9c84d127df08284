//! Fixed-point encoding of real statistics and worst-case capacity checks.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use super::HeParams;
use crate::features::round_half_up;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    pub fractional_bits: u32,
    /// Largest accepted magnitude before scaling.
    pub bound: f64,
    pub plaintext_bits: u32,
}

impl FixedPointCodec {
    pub fn new(fractional_bits: u32, bound: f64, params: &HeParams) -> Result<Self> {
        let t = params.plaintext_bits;
        if fractional_bits + 1 >= t {
            return Err(Error::Param(format!("{fractional_bits} fractional bits leave no integer part in {t} bits")));
        }
        if !(bound >= 0.0) || bound * 2f64.powi(fractional_bits as i32) > 2f64.powi(t as i32 - 1) {
            return Err(Error::Param(format!("bound {bound} does not fit {t}-bit plaintexts at f = {fractional_bits}")));
        }
        Ok(Self { fractional_bits, bound, plaintext_bits: t })
    }

    /// Widest bound the plaintext space admits at `f` fractional bits.
    pub fn for_params(params: &HeParams, fractional_bits: u32) -> Result<Self> {
        let bound = 2f64.powi(params.plaintext_bits as i32 - 1 - fractional_bits as i32) - 1.0;
        Self::new(fractional_bits, bound, params)
    }

    pub fn scale(&self) -> f64 {
        2f64.powi(self.fractional_bits as i32)
    }

    /// `round(x 2^f)`, halves rounded up.
    pub fn encode(&self, x: f64) -> Result<i128> {
        if !x.is_finite() || x.abs() > self.bound {
            return Err(Error::Capacity(format!("{x} exceeds the codec bound {}", self.bound)));
        }
        let v = round_half_up(x * self.scale()) as i128;
        let half = 1i128 << (self.plaintext_bits - 1);
        if v < -half || v >= half {
            return Err(Error::Capacity(format!("{x} overflows {} bits", self.plaintext_bits)));
        }
        Ok(v)
    }

    pub fn decode(&self, v: i128) -> f64 {
        v as f64 / self.scale()
    }
}

/// Shape of one enrollment run, for capacity checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityQuery {
    /// Features per template.
    pub n: usize,
    /// Largest number of enrolled users.
    pub users: u64,
    /// Discretization width.
    pub d: u32,
    /// Largest number of samples behind one user's template.
    pub samples_per_user: u64,
}

impl CapacityQuery {
    pub const DEFAULT_SAMPLES: u64 = 4096;

    pub fn new(n: usize, users: u64, d: u32) -> Self {
        Self { n, users, d, samples_per_user: Self::DEFAULT_SAMPLES }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CapacityCheck {
    pub quantity: &'static str,
    /// Worst-case magnitude of one entry.
    pub bound: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CapacityReport {
    pub limit: BigUint,
    pub checks: Vec<CapacityCheck>,
}

impl CapacityReport {
    pub fn is_ok(&self) -> bool {
        self.binding().is_none()
    }

    /// Violated check with the largest bound.
    pub fn binding(&self) -> Option<&CapacityCheck> {
        self.checks.iter().filter(|c| c.bound >= self.limit).max_by(|a, b| a.bound.cmp(&b.bound))
    }

    pub fn ensure(&self) -> Result<()> {
        match self.binding() {
            None => Ok(()),
            Some(c) => Err(Error::Capacity(format!(
                "{} may reach 2^{:.1}, limit 2^{}",
                c.quantity,
                log2(&c.bound),
                self.limit.bits() - 1
            ))),
        }
    }
}

fn log2(x: &BigUint) -> f64 {
    let bits = x.bits();
    let shift = bits.saturating_sub(53);
    let top = (x >> shift).to_f64().unwrap_or(f64::MAX);
    top.log2() + shift as f64
}

/// Worst-case per-entry magnitudes of every encrypted protocol quantity,
/// compared against `2^{t-1}`.
///
/// With means in `[0, 2^d)` scaled by `2^f` and `m` users:
/// mean products reach `2^{2(d+f)}`, the summed products `K` reach
/// `m^2 2^{2(d+f)}`, and `m^2 S_B` reaches `m^3 2^{2(d+f)}` since each of its
/// `m` terms is a product of two differences bounded by `m 2^{d+f}`.
/// Within-class scatter sums and variances carry the codec scale once.
pub fn validate_capacity(params: &HeParams, codec: &FixedPointCodec, q: &CapacityQuery) -> CapacityReport {
    let limit = BigUint::one() << (params.plaintext_bits - 1);
    if q.n == 0 || q.users == 0 {
        return CapacityReport { limit, checks: vec![] };
    }
    let f = codec.fractional_bits as u64;
    let d = q.d as u64;
    let m = BigUint::from(q.users);
    let pow = |e: u64| BigUint::one() << e;
    let product = pow(2 * (d + f));
    let checks = vec![
        CapacityCheck { quantity: "mean products", bound: product.clone() },
        CapacityCheck { quantity: "K", bound: &m * &m * &product },
        CapacityCheck { quantity: "S_B", bound: &m * &m * &m * &product },
        CapacityCheck { quantity: "S_W", bound: &m * BigUint::from(q.samples_per_user) * pow(2 * d + f) },
        CapacityCheck { quantity: "v'", bound: &m * pow(2 * d + f) },
    ];
    CapacityReport { limit, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let p = HeParams::default();
        let c0 = FixedPointCodec::for_params(&p, 0).unwrap();
        assert_eq!(c0.encode(0.0).unwrap(), 0);
        let c8 = FixedPointCodec::for_params(&p, 8).unwrap();
        assert_eq!(c8.encode(1.5).unwrap(), 384);
        assert_eq!(c8.encode(-1.5).unwrap(), -384);
        assert_eq!(c8.decode(384), 1.5);
        let tight = FixedPointCodec::new(8, 10.0, &p).unwrap();
        assert!(matches!(tight.encode(10.5), Err(Error::Capacity(_))));
        assert!(tight.encode(f64::NAN).is_err());
    }

    #[test]
    fn decode_is_within_half_ulp() {
        let p = HeParams::default();
        let c = FixedPointCodec::for_params(&p, 12).unwrap();
        for i in 0..2000 {
            let x = (i as f64 - 1000.0) * 0.3719;
            let err = (c.decode(c.encode(x).unwrap()) - x).abs();
            assert!(err <= 2f64.powi(-13) + 1e-12);
        }
    }

    #[test]
    fn capacity_examples() {
        let p = HeParams::default();
        let c0 = FixedPointCodec::for_params(&p, 0).unwrap();
        let ok = validate_capacity(&p, &c0, &CapacityQuery::new(31, 500, 8));
        assert!(ok.is_ok(), "{ok:?}");

        let c16 = FixedPointCodec::for_params(&p, 16).unwrap();
        let bad = validate_capacity(&p, &c16, &CapacityQuery::new(31, 500, 24));
        assert_eq!(bad.binding().unwrap().quantity, "S_B");
        assert!(bad.ensure().unwrap_err().to_string().contains("S_B"));

        assert!(validate_capacity(&p, &c16, &CapacityQuery::new(0, 500, 24)).is_ok());
    }

    #[test]
    fn capacity_bounds_are_exact_powers() {
        let p = HeParams::default();
        let c = FixedPointCodec::for_params(&p, 0).unwrap();
        let r = validate_capacity(&p, &c, &CapacityQuery::new(4, 2, 8));
        let sb = r.checks.iter().find(|c| c.quantity == "S_B").unwrap();
        assert_eq!(sb.bound, BigUint::from(8u32 << 16));
    }
}
