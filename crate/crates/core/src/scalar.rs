use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// A multiplier or weight: an exact 128-bit integer when the generator
/// produces integers, a binary64 otherwise.
///
/// Serialized as a decimal string (`"815"`, `"0.5"`) so large integers survive
/// JSON round trips; plain JSON numbers are accepted on input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Int(i128),
    Real(f64),
}

impl Scalar {
    pub const ZERO: Scalar = Scalar::Int(0);
    pub const ONE: Scalar = Scalar::Int(1);

    pub fn to_f64(self) -> f64 {
        match self {
            Scalar::Int(v) => v as f64,
            Scalar::Real(v) => v,
        }
    }

    pub fn abs_f64(self) -> f64 {
        self.to_f64().abs()
    }

    /// |value| as an exact unsigned integer, when the scalar is an integer.
    pub fn abs_exact(self) -> Option<u128> {
        match self {
            Scalar::Int(v) => Some(v.unsigned_abs()),
            Scalar::Real(_) => None,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Scalar::Int(v) => v == 0,
            Scalar::Real(v) => v == 0.0,
        }
    }

    pub fn is_finite(self) -> bool {
        match self {
            Scalar::Int(_) => true,
            Scalar::Real(v) => v.is_finite(),
        }
    }

    pub fn parse(s: &str) -> Option<Scalar> {
        let s = s.trim();
        if let Ok(v) = s.parse::<i128>() {
            return Some(Scalar::Int(v));
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Scalar::Real)
    }
}

impl From<i128> for Scalar {
    fn from(v: i128) -> Self {
        Scalar::Int(v)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Real(v)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Real(v) => write!(f, "{v:?}"),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => {
                Scalar::parse(&s).ok_or_else(|| de::Error::custom(format!("invalid scalar '{s}'")))
            }
            Raw::Int(v) => Ok(Scalar::Int(v as i128)),
            Raw::Float(v) if v.is_finite() => Ok(Scalar::Real(v)),
            Raw::Float(_) => Err(de::Error::custom("non-finite scalar")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_prefers_integers() {
        assert_eq!(Scalar::parse("815"), Some(Scalar::Int(815)));
        assert_eq!(Scalar::parse("-3"), Some(Scalar::Int(-3)));
        assert_eq!(Scalar::parse("0.5"), Some(Scalar::Real(0.5)));
        assert_eq!(Scalar::parse("inf"), None);
        assert_eq!(Scalar::parse("x"), None);
    }

    #[test]
    fn json_round_trip_keeps_big_integers() {
        let big = Scalar::Int(170_141_183_460_469_231_731_687_303_715_884_105_727);
        let s = serde_json::to_string(&big).unwrap();
        assert_eq!(s, "\"170141183460469231731687303715884105727\"");
        assert_eq!(serde_json::from_str::<Scalar>(&s).unwrap(), big);
        assert_eq!(serde_json::from_str::<Scalar>("2").unwrap(), Scalar::Int(2));
        assert_eq!(
            serde_json::from_str::<Scalar>("0.25").unwrap(),
            Scalar::Real(0.25)
        );
    }
}
