use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schedules::{BlockOp, BlockSchedule};
use crate::vector::MAX_INDEX;

/// Largest index range enumerated one index at a time when a rule has no
/// piecewise-constant structure.
pub const ENUMERATION_CAP: u128 = 1 << 20;

/// A scalar rule `i ↦ λ_i` for `i ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSequence {
    Constant(Scalar),
    /// `p(i) = Σ_k coeffs[k]·i^k`, evaluated in binary64.
    Polynomial(Vec<f64>),
    /// `n` at `i = 2^n` (n ≥ 1), `1` elsewhere.
    PowerOfTwoSpike,
    /// `values[(i − 1) mod len]`.
    Periodic(Vec<Scalar>),
    /// `off` on the schedule's `O` blocks and the block multiplier elsewhere.
    FromBlockSchedule {
        schedule: Box<BlockSchedule>,
        off: Scalar,
    },
}

/// A maximal run `[start, end)` on which a weight is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSegment {
    pub start: u128,
    pub end: u128,
    pub value: Scalar,
}

impl WeightSequence {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSequence::Constant(c) if !c.is_finite() => {
                Err(Error::invalid("non-finite constant weight"))
            }
            WeightSequence::Polynomial(c) if c.is_empty() || c.iter().any(|v| !v.is_finite()) => {
                Err(Error::invalid("polynomial needs finite coefficients"))
            }
            WeightSequence::Periodic(v) if v.is_empty() || v.iter().any(|s| !s.is_finite()) => Err(
                Error::invalid("periodic weights need at least one finite value"),
            ),
            WeightSequence::FromBlockSchedule { off, .. } if !off.is_finite() => {
                Err(Error::invalid("non-finite off value"))
            }
            _ => Ok(()),
        }
    }

    pub fn weight(&self, i: u128) -> Result<Scalar> {
        if i == 0 || i > MAX_INDEX {
            return Err(Error::IndexOverflow(i));
        }
        Ok(match self {
            WeightSequence::Constant(c) => *c,
            WeightSequence::Polynomial(coeffs) => {
                let x = i as f64;
                let v = coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                if !v.is_finite() {
                    return Err(Error::NonFinite(i));
                }
                Scalar::Real(v)
            }
            WeightSequence::PowerOfTwoSpike => {
                if i >= 2 && i.is_power_of_two() {
                    Scalar::Int(i.trailing_zeros() as i128)
                } else {
                    Scalar::ONE
                }
            }
            WeightSequence::Periodic(values) => values[((i - 1) % values.len() as u128) as usize],
            WeightSequence::FromBlockSchedule { schedule, off } => {
                let b = schedule.block_at(i)?;
                match b.op {
                    BlockOp::Zero => *off,
                    BlockOp::Identity => b.multiplier,
                }
            }
        })
    }

    /// Supremum of |λ_i| over all indices, if finite and known.
    pub fn sup_abs(&self) -> Option<f64> {
        match self {
            WeightSequence::Constant(c) => Some(c.abs_f64()),
            WeightSequence::Polynomial(c) => {
                if c.iter().skip(1).all(|v| *v == 0.0) {
                    Some(c[0].abs())
                } else {
                    None
                }
            }
            WeightSequence::PowerOfTwoSpike => None,
            WeightSequence::Periodic(v) => Some(v.iter().map(|s| s.abs_f64()).fold(0.0, f64::max)),
            WeightSequence::FromBlockSchedule { schedule, off } => Some(
                schedule
                    .blocks()
                    .iter()
                    .map(|b| match b.op {
                        BlockOp::Zero => off.abs_f64(),
                        BlockOp::Identity => b.multiplier.abs_f64(),
                    })
                    .fold(0.0, f64::max),
            ),
        }
    }

    /// Constant runs covering `[lo, hi]` (inclusive), or `None` when the rule
    /// has no usable structure and the range exceeds [`ENUMERATION_CAP`].
    pub fn segments(&self, lo: u128, hi: u128) -> Result<Option<Vec<WeightSegment>>> {
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("bad index range [{lo}, {hi}]")));
        }
        if hi > MAX_INDEX {
            return Err(Error::IndexOverflow(hi));
        }
        let end = hi + 1;
        let mut out: Vec<WeightSegment> = Vec::new();
        match self {
            WeightSequence::Constant(c) => push_merge(&mut out, lo, end, *c),
            WeightSequence::Polynomial(c) if c.iter().skip(1).all(|v| *v == 0.0) => {
                push_merge(&mut out, lo, end, Scalar::Real(c[0]))
            }
            WeightSequence::PowerOfTwoSpike => {
                let mut cursor = lo;
                let mut n = 1u32;
                while n < 128 && cursor < end {
                    let p = 1u128 << n;
                    if p >= cursor && p < end {
                        push_merge(&mut out, cursor, p, Scalar::ONE);
                        push_merge(&mut out, p, p + 1, Scalar::Int(n as i128));
                        cursor = p + 1;
                    }
                    n += 1;
                }
                push_merge(&mut out, cursor, end, Scalar::ONE);
            }
            WeightSequence::FromBlockSchedule { schedule, off } => {
                if hi >= schedule.coverage_end() {
                    return Err(Error::BeyondSchedule {
                        index: hi,
                        end: schedule.coverage_end(),
                    });
                }
                let first = schedule.blocks().partition_point(|b| b.end <= lo);
                for b in &schedule.blocks()[first..] {
                    if b.start >= end {
                        break;
                    }
                    let v = match b.op {
                        BlockOp::Zero => *off,
                        BlockOp::Identity => b.multiplier,
                    };
                    push_merge(&mut out, b.start.max(lo), b.end.min(end), v);
                }
            }
            _ => {
                if end - lo > ENUMERATION_CAP {
                    return Ok(None);
                }
                for i in lo..end {
                    push_merge(&mut out, i, i + 1, self.weight(i)?);
                }
            }
        }
        Ok(Some(out))
    }
}

fn push_merge(out: &mut Vec<WeightSegment>, start: u128, end: u128, value: Scalar) {
    if start >= end {
        return;
    }
    if let Some(last) = out.last_mut() {
        if last.end == start && last.value == value {
            last.end = end;
            return;
        }
    }
    out.push(WeightSegment { start, end, value });
}
