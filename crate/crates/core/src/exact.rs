//! JSON encoding of exact rationals as `{"num": "...", "den": "..."}`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalJson {
    pub num: String,
    pub den: String,
}

impl From<&BigRational> for RationalJson {
    fn from(x: &BigRational) -> Self {
        RationalJson {
            num: x.numer().to_string(),
            den: x.denom().to_string(),
        }
    }
}

impl TryFrom<RationalJson> for BigRational {
    type Error = String;

    fn try_from(r: RationalJson) -> Result<Self, String> {
        let num: BigInt = r.num.parse().map_err(|e| format!("numerator {:?}: {e}", r.num))?;
        let den: BigInt = r.den.parse().map_err(|e| format!("denominator {:?}: {e}", r.den))?;
        if den.is_zero() {
            return Err("zero denominator".into());
        }
        Ok(BigRational::new(num, den))
    }
}

/// Parse `"3"`, `"-1/6"`, `"0.05"` or `"2.5e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational, String> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|e| format!("{t:?}: {e}"))?;
        let d: BigInt = d.trim().parse().map_err(|e| format!("{t:?}: {e}"))?;
        if d.is_zero() {
            return Err(format!("{t:?}: zero denominator"));
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|e| format!("{t:?}: {e}"))?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit())
    {
        return Err(format!("{t:?} is not a decimal or fraction"));
    }
    let all: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|e| format!("{t:?}: {e}"))?;
    let shift = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut x = BigRational::from_integer(all);
    if shift >= 0 {
        x *= BigRational::from_integer(num_traits::pow(ten, shift as usize));
    } else {
        x /= BigRational::from_integer(num_traits::pow(ten, shift.unsigned_abs() as usize));
    }
    Ok(if neg { -x } else { x })
}

pub fn serialize<S: Serializer>(x: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    RationalJson::from(x).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
    RationalJson::deserialize(d)?
        .try_into()
        .map_err(serde::de::Error::custom)
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(RationalJson::from))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        Vec::<RationalJson>::deserialize(d)?
            .into_iter()
            .map(|r| r.try_into().map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
        x.as_ref().map(RationalJson::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
        Option::<RationalJson>::deserialize(d)?
            .map(|r| r.try_into().map_err(serde::de::Error::custom))
            .transpose()
    }
}

pub mod map {
    use super::*;

    pub fn serialize<K: Serialize, S: Serializer>(m: &BTreeMap<K, BigRational>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (k, RationalJson::from(v))))
    }
}

/// `Vec<(n, value)>` pairs.
pub mod pairs {
    use super::*;

    pub fn serialize<K: Serialize, S: Serializer>(xs: &[(K, BigRational)], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(|(k, v)| (k, RationalJson::from(v))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Wrap {
        #[serde(with = "super")]
        x: BigRational,
        #[serde(with = "super::vec")]
        xs: Vec<BigRational>,
        #[serde(with = "super::option")]
        o: Option<BigRational>,
    }

    #[test]
    fn parse_decimals_and_fractions() {
        let q = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        assert_eq!(parse_rational("0.05").unwrap(), q(1, 20));
        assert_eq!(parse_rational("1/6").unwrap(), q(1, 6));
        assert_eq!(parse_rational("-2.5e-1").unwrap(), q(-1, 4));
        assert_eq!(parse_rational("3").unwrap(), q(3, 1));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
        assert_eq!(parse_rational("1E2").unwrap(), q(100, 1));
        for bad in ["", "abc", "1/0", "1.2.3", "."] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn round_trip() {
        let w = Wrap {
            x: BigRational::new((-3).into(), 6.into()),
            xs: vec![BigRational::from_integer(7.into())],
            o: None,
        };
        let text = serde_json::to_string(&w).unwrap();
        assert_eq!(
            text,
            r#"{"x":{"num":"-1","den":"2"},"xs":[{"num":"7","den":"1"}],"o":null}"#
        );
        assert_eq!(serde_json::from_str::<Wrap>(&text).unwrap(), w);
        assert!(serde_json::from_str::<Wrap>(r#"{"x":{"num":"1","den":"0"},"xs":[],"o":null}"#).is_err());
    }
}
