//! State-space vectors.
//!
//! Every vector is stored sparsely as a sorted list of `(index, value)` pairs
//! with 1-based indices. An `EllOne` vector is a finitely supported element of
//! ℓ¹(ℕ); every coordinate beyond the stored support is zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Largest admissible coordinate or operator index (2^127 - 1).
pub const MAX_INDEX: u128 = (1u128 << 127) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// ℝ with the absolute value.
    RealLine,
    /// ℝ^d with the Euclidean norm.
    RealFiniteDim(u32),
    /// Finitely supported vectors of ℓ¹(ℕ) with the ℓ¹ norm.
    EllOne,
}

impl Space {
    pub fn check_index(self, index: u128) -> Result<()> {
        if index == 0 {
            return Err(Error::InvalidVector("coordinate indices start at 1".into()));
        }
        match self {
            Space::RealLine if index != 1 => Err(Error::InvalidVector(format!(
                "the real line has a single coordinate, got index {index}"
            ))),
            Space::RealFiniteDim(d) if index > d as u128 => Err(Error::InvalidVector(format!(
                "index {index} exceeds dimension {d}"
            ))),
            Space::EllOne if index > MAX_INDEX => Err(Error::IndexOverflow(index)),
            _ => Ok(()),
        }
    }

    fn norm_of<'a, I: Iterator<Item = &'a f64>>(self, values: I) -> f64 {
        match self {
            Space::RealFiniteDim(_) => values
                .map(|v| v * v)
                .collect::<CompensatedSum>()
                .value()
                .sqrt(),
            Space::RealLine | Space::EllOne => {
                values.map(|v| v.abs()).collect::<CompensatedSum>().value()
            }
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::RealLine => write!(f, "R"),
            Space::RealFiniteDim(d) => write!(f, "R^{d}"),
            Space::EllOne => write!(f, "l1"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    #[serde(with = "crate::serde_dec")]
    pub index: u128,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    space: Space,
    coords: Vec<Coord>,
}

impl Vector {
    /// Builds a vector from arbitrary-order coordinates. Zero entries are
    /// pruned; duplicate indices and non-finite values are rejected.
    pub fn new(space: Space, coords: impl IntoIterator<Item = (u128, f64)>) -> Result<Self> {
        let mut list: Vec<Coord> = Vec::new();
        for (index, value) in coords {
            space.check_index(index)?;
            if !value.is_finite() {
                return Err(Error::InvalidVector(format!(
                    "coordinate {index} is not finite"
                )));
            }
            list.push(Coord { index, value });
        }
        list.sort_by_key(|c| c.index);
        if let Some(w) = list.windows(2).find(|w| w[0].index == w[1].index) {
            return Err(Error::InvalidVector(format!(
                "duplicate coordinate index {}",
                w[0].index
            )));
        }
        list.retain(|c| c.value != 0.0);
        Ok(Vector {
            space,
            coords: list,
        })
    }

    pub fn zero(space: Space) -> Self {
        Vector {
            space,
            coords: Vec::new(),
        }
    }

    pub fn real(value: f64) -> Result<Self> {
        Vector::new(Space::RealLine, [(1, value)])
    }

    /// The unit vector e_j.
    pub fn basis(space: Space, j: u128) -> Result<Self> {
        Vector::new(space, [(j, 1.0)])
    }

    pub fn ell_one(coords: impl IntoIterator<Item = (u128, f64)>) -> Result<Self> {
        Vector::new(Space::EllOne, coords)
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn is_zero(&self) -> bool {
        self.coords.is_empty()
    }

    /// Value of coordinate `j` (zero off the support).
    pub fn get(&self, j: u128) -> f64 {
        self.coords
            .binary_search_by_key(&j, |c| c.index)
            .map(|p| self.coords[p].value)
            .unwrap_or(0.0)
    }

    /// Largest index carrying a non-zero value.
    pub fn support_end(&self) -> Option<u128> {
        self.coords.last().map(|c| c.index)
    }

    pub fn norm(&self) -> f64 {
        self.space.norm_of(self.coords.iter().map(|c| &c.value))
    }

    /// Norm of the coordinates with index strictly greater than `i`, i.e. ‖Bⁱx‖.
    pub fn tail_norm(&self, i: u128) -> f64 {
        let start = self.coords.partition_point(|c| c.index <= i);
        self.space
            .norm_of(self.coords[start..].iter().map(|c| &c.value))
    }

    /// Piecewise-constant description of `i ↦ ‖Bⁱx‖`.
    ///
    /// Returns `(first_i, value)` breakpoints: the tail norm equals `value` for
    /// `i` in `[first_i, next_first_i)`, and the last entry has value zero.
    pub fn tail_profile(&self) -> Vec<(u128, f64)> {
        let mut out = Vec::with_capacity(self.coords.len() + 1);
        let mut first = 0u128;
        for c in &self.coords {
            out.push((first, self.tail_norm(first)));
            first = c.index;
        }
        out.push((first, 0.0));
        out
    }

    pub fn scale(&self, alpha: f64) -> Vector {
        if alpha == 0.0 {
            return Vector::zero(self.space);
        }
        Vector {
            space: self.space,
            coords: self
                .coords
                .iter()
                .map(|c| Coord {
                    index: c.index,
                    value: alpha * c.value,
                })
                .filter(|c| c.value != 0.0)
                .collect(),
        }
    }

    /// Returns `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Vector, beta: f64) -> Result<Vector> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                expected: self.space,
                found: other.space,
            });
        }
        let (a, b) = (&self.coords, &other.coords);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut p, mut q) = (0, 0);
        while p < a.len() || q < b.len() {
            let (index, value) = match (a.get(p), b.get(q)) {
                (Some(x), Some(y)) if x.index == y.index => {
                    p += 1;
                    q += 1;
                    (x.index, alpha * x.value + beta * y.value)
                }
                (Some(x), Some(y)) if x.index < y.index => {
                    p += 1;
                    (x.index, alpha * x.value)
                }
                (Some(x), None) => {
                    p += 1;
                    (x.index, alpha * x.value)
                }
                (_, Some(y)) => {
                    q += 1;
                    (y.index, beta * y.value)
                }
                (None, None) => unreachable!(),
            };
            if !value.is_finite() {
                return Err(Error::InvalidVector(format!(
                    "combination overflowed at coordinate {index}"
                )));
            }
            if value != 0.0 {
                out.push(Coord { index, value });
            }
        }
        Ok(Vector {
            space: self.space,
            coords: out,
        })
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.combine(1.0, other, -1.0)
    }

    /// Σ αₗ vₗ over a non-empty family of vectors in one space.
    pub fn linear_combination(coeffs: &[f64], vectors: &[Vector]) -> Result<Vector> {
        if coeffs.len() != vectors.len() {
            return Err(Error::invalid("coefficient and vector counts differ"));
        }
        let first = vectors.first().ok_or(Error::EmptySamples)?;
        let mut acc = Vector::zero(first.space);
        for (a, v) in coeffs.iter().zip(vectors) {
            acc = acc.combine(1.0, v, *a)?;
        }
        Ok(acc)
    }

    /// Parses a vector literal.
    ///
    /// * `2.5` is a real scalar (on `RealLine`, or `2.5·e_1` elsewhere);
    /// * `e7` is the unit vector e_7;
    /// * `e2,e5` and `2:0.5,7:-1` list terms separated by commas, where a term
    ///   is `eJ`, `J:value` or `value*eJ`.
    pub fn parse(space: Space, literal: &str) -> Result<Vector> {
        let literal = literal.trim();
        if literal.is_empty() {
            return Err(Error::InvalidVector("empty vector literal".into()));
        }
        if let Ok(v) = literal.parse::<f64>() {
            return Vector::new(space, [(1, v)]);
        }
        let mut coords = Vec::new();
        for term in literal.split(',') {
            let term = term.trim();
            let bad = || Error::InvalidVector(format!("cannot parse vector term '{term}'"));
            let (index, value) = if let Some((j, v)) = term.split_once(':') {
                let j = j.trim().trim_start_matches('e');
                (
                    j.parse::<u128>().map_err(|_| bad())?,
                    v.trim().parse::<f64>().map_err(|_| bad())?,
                )
            } else if let Some((v, j)) = term.split_once('*') {
                let j = j.trim().strip_prefix('e').ok_or_else(bad)?;
                (
                    j.parse::<u128>().map_err(|_| bad())?,
                    v.trim().parse::<f64>().map_err(|_| bad())?,
                )
            } else {
                let j = term.strip_prefix('e').ok_or_else(bad)?;
                (j.parse::<u128>().map_err(|_| bad())?, 1.0)
            };
            coords.push((index, value));
        }
        Vector::new(space, coords)
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.space == Space::RealLine {
            return write!(f, "{}", self.get(1));
        }
        if self.coords.is_empty() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coords
            .iter()
            .map(|c| {
                if c.value == 1.0 {
                    format!("e{}", c.index)
                } else {
                    format!("{}:{}", c.index, c.value)
                }
            })
            .collect();
        write!(f, "{}", terms.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_sorts_and_prunes() {
        let v = Vector::ell_one([(5, 2.0), (2, -1.0), (3, 0.0)]).unwrap();
        assert_eq!(v.coords().len(), 2);
        assert_eq!(v.coords()[0].index, 2);
        assert_eq!(v.norm(), 3.0);
    }

    #[test]
    fn duplicates_and_bad_indices_rejected() {
        assert!(Vector::ell_one([(2, 1.0), (2, 1.0)]).is_err());
        assert!(Vector::new(Space::RealLine, [(2, 1.0)]).is_err());
        assert!(Vector::new(Space::RealFiniteDim(3), [(4, 1.0)]).is_err());
        assert!(Vector::ell_one([(0, 1.0)]).is_err());
        assert!(Vector::ell_one([(MAX_INDEX + 1, 1.0)]).is_err());
        assert!(Vector::ell_one([(1, f64::NAN)]).is_err());
    }

    #[test]
    fn euclidean_norm_in_finite_dim() {
        let v = Vector::new(Space::RealFiniteDim(2), [(1, 3.0), (2, 4.0)]).unwrap();
        assert_eq!(v.norm(), 5.0);
        assert_eq!(v.tail_norm(1), 4.0);
    }

    #[test]
    fn tail_profile_is_stepwise() {
        let v = Vector::ell_one([(2, 1.0), (5, 3.0)]).unwrap();
        let p = v.tail_profile();
        assert_eq!(p, vec![(0, 4.0), (2, 3.0), (5, 0.0)]);
        assert_eq!(v.tail_norm(0), 4.0);
        assert_eq!(v.tail_norm(1), 4.0);
        assert_eq!(v.tail_norm(2), 3.0);
        assert_eq!(v.tail_norm(4), 3.0);
        assert_eq!(v.tail_norm(5), 0.0);
    }

    #[test]
    fn combine_merges_supports() {
        let x = Vector::ell_one([(1, 1.0), (3, 2.0)]).unwrap();
        let y = Vector::ell_one([(2, 5.0), (3, 2.0)]).unwrap();
        let d = x.sub(&y).unwrap();
        assert_eq!(d.coords().len(), 2);
        assert_eq!(d.get(2), -5.0);
        assert_eq!(d.get(3), 0.0);
        assert!(x.add(&Vector::real(1.0).unwrap()).is_err());
    }

    #[test]
    fn literals() {
        assert_eq!(Vector::parse(Space::RealLine, "3").unwrap().get(1), 3.0);
        let v = Vector::parse(Space::EllOne, "e2, 0.5*e7, 9:-1").unwrap();
        assert_eq!(v.get(2), 1.0);
        assert_eq!(v.get(7), 0.5);
        assert_eq!(v.get(9), -1.0);
        assert_eq!(v.to_string(), "e2,7:0.5,9:-1");
        assert!(Vector::parse(Space::EllOne, "x3").is_err());
        assert!(Vector::parse(Space::EllOne, "").is_err());
    }
}
