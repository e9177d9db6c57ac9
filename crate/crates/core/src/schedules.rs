//! Block schedules and the explicit operator sequences built from them.
//!
//! A block schedule assigns `O` or `m·I` to each half-open index interval
//! `[start, end)`. Boundaries are exact 128-bit integers; generators report
//! [`Error::Overflow`] instead of wrapping.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{OperatorKind, OperatorSequenceSpec};
use crate::scalar::Scalar;
use crate::vector::{Space, MAX_INDEX};
use crate::weights::WeightSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOp {
    Zero,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Factorial,
    Cubic,
    PowerOfTwoSpike,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    #[serde(with = "crate::serde_dec")]
    pub start: u128,
    #[serde(with = "crate::serde_dec")]
    pub end: u128,
    pub multiplier: Scalar,
    pub op: BlockOp,
}

impl Block {
    pub fn zero(start: u128, end: u128) -> Self {
        Block {
            start,
            end,
            multiplier: Scalar::ZERO,
            op: BlockOp::Zero,
        }
    }

    pub fn scaled(start: u128, end: u128, multiplier: Scalar) -> Self {
        Block {
            start,
            end,
            multiplier,
            op: BlockOp::Identity,
        }
    }

    /// The scalar `m` with `T_i = m·I` on this block (0 for `O`).
    pub fn effective(&self) -> Scalar {
        match self.op {
            BlockOp::Zero => Scalar::ZERO,
            BlockOp::Identity => self.multiplier,
        }
    }

    pub fn width(&self) -> u128 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    tag: GeneratorTag,
    blocks: Vec<Block>,
}

impl BlockSchedule {
    /// Validates that `blocks` tile `[1, end)` without gaps or overlaps.
    pub fn new(tag: GeneratorTag, blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidSchedule("no blocks".into()));
        }
        let mut expected = 1u128;
        for b in &blocks {
            if b.start != expected {
                return Err(Error::InvalidSchedule(format!(
                    "block starting at {} leaves a gap or overlap (expected start {expected})",
                    b.start
                )));
            }
            if b.end <= b.start {
                return Err(Error::InvalidSchedule(format!(
                    "empty block [{}, {})",
                    b.start, b.end
                )));
            }
            if !b.multiplier.is_finite() {
                return Err(Error::InvalidSchedule("non-finite multiplier".into()));
            }
            expected = b.end;
        }
        if expected - 1 > MAX_INDEX {
            return Err(Error::IndexOverflow(expected - 1));
        }
        Ok(BlockSchedule { tag, blocks })
    }

    pub fn tag(&self) -> GeneratorTag {
        self.tag
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Exclusive end of the covered index range.
    pub fn coverage_end(&self) -> u128 {
        self.blocks.last().map(|b| b.end).unwrap_or(1)
    }

    /// Largest index with a defined operator.
    pub fn max_index(&self) -> u128 {
        self.coverage_end() - 1
    }

    pub fn block_at(&self, i: u128) -> Result<&Block> {
        if i == 0 || i >= self.coverage_end() {
            return Err(Error::BeyondSchedule {
                index: i,
                end: self.coverage_end(),
            });
        }
        let p = self.blocks.partition_point(|b| b.end <= i);
        Ok(&self.blocks[p])
    }

    pub fn multiplier_at(&self, i: u128) -> Result<Scalar> {
        self.block_at(i).map(Block::effective)
    }

    /// Blocks clipped to `[1, horizon]`.
    pub fn clipped(&self, horizon: u128) -> Result<Vec<Block>> {
        if horizon >= self.coverage_end() {
            return Err(Error::BeyondSchedule {
                index: horizon,
                end: self.coverage_end(),
            });
        }
        Ok(self
            .blocks
            .iter()
            .take_while(|b| b.start <= horizon)
            .map(|b| Block {
                end: b.end.min(horizon + 1),
                ..b.clone()
            })
            .collect())
    }

    /// Schedule dump: a JSON array of `{start, end, multiplier}` with every
    /// number written as a decimal string (`O` blocks dump multiplier `"0"`).
    pub fn to_dump_json(&self) -> String {
        let entries: Vec<DumpEntry> = self
            .blocks
            .iter()
            .map(|b| DumpEntry {
                start: b.start.to_string(),
                end: b.end.to_string(),
                multiplier: b.effective().to_string(),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("dump entries serialize")
    }

    /// Parses the dump format back into a `Custom` schedule.
    pub fn from_dump_json(text: &str) -> Result<Self> {
        let entries: Vec<DumpEntry> = serde_json::from_str(text)
            .map_err(|e| Error::InvalidSchedule(format!("malformed schedule dump: {e}")))?;
        let parse_index = |s: &str| {
            s.trim()
                .parse::<u128>()
                .map_err(|_| Error::InvalidSchedule(format!("bad index '{s}'")))
        };
        let blocks = entries
            .iter()
            .map(|e| {
                let start = parse_index(&e.start)?;
                let end = parse_index(&e.end)?;
                let m = Scalar::parse(&e.multiplier).ok_or_else(|| {
                    Error::InvalidSchedule(format!("bad multiplier '{}'", e.multiplier))
                })?;
                Ok(if m.is_zero() {
                    Block::zero(start, end)
                } else {
                    Block::scaled(start, end, m)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BlockSchedule::new(GeneratorTag::Custom, blocks)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpEntry {
    start: String,
    end: String,
    multiplier: String,
}

fn factorial(n: u32) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| {
        acc.checked_mul(k)
            .ok_or_else(|| Error::overflow(format!("{n}! exceeds 128 bits")))
    })
}

fn ovf(what: &str) -> Error {
    Error::overflow(what.to_string())
}

/// `(a_n, b_n) = (2·n! − 1, (n+1)! + n! − 1)`.
pub fn factorial_bounds(n: u32) -> Result<(u128, u128)> {
    if n == 0 {
        return Err(Error::invalid("factorial blocks are indexed from n = 1"));
    }
    let f = factorial(n)?;
    let f1 = factorial(n + 1)?;
    let a = f.checked_mul(2).ok_or_else(|| ovf("a_n"))? - 1;
    let b = f1.checked_add(f).ok_or_else(|| ovf("b_n"))? - 1;
    Ok((a, b))
}

/// Pairs `(c_n, d_n)` for `n = 1..=count`, with `c_1 = 1`, `d_n = c_n + n³c_n`
/// and `c_{n+1} = d_n + n`.
pub fn cubic_bounds(count: u32) -> Result<Vec<(u128, u128)>> {
    let mut out = Vec::with_capacity(count as usize);
    let mut c = 1u128;
    for n in 1..=count as u128 {
        let d = n
            .checked_pow(3)
            .and_then(|n3| c.checked_mul(n3))
            .and_then(|v| v.checked_add(c))
            .ok_or_else(|| ovf("d_n"))?;
        out.push((c, d));
        c = d.checked_add(n).ok_or_else(|| ovf("c_n"))?;
    }
    Ok(out)
}

/// `c_n` for `n ≥ 1`.
pub fn cubic_c(n: u32) -> Result<u128> {
    if n == 0 {
        return Err(Error::invalid("c_n is indexed from n = 1"));
    }
    if n == 1 {
        return Ok(1);
    }
    let (c, d) = *cubic_bounds(n - 1)?.last().expect("n - 1 >= 1");
    let _ = c;
    d.checked_add((n - 1) as u128).ok_or_else(|| ovf("c_n"))
}

/// Factorial block schedule of depth `n_max`: `O` on `[a_n, b_n)` and `2I` on
/// `[b_n, a_{n+1})` for `n = 1..=n_max`.
pub fn factorial_schedule(n_max: u32) -> Result<BlockSchedule> {
    if n_max == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let mut blocks = Vec::with_capacity(2 * n_max as usize);
    for n in 1..=n_max {
        let (a, b) = factorial_bounds(n)?;
        let (a_next, _) = factorial_bounds(n + 1)?;
        blocks.push(Block::zero(a, b));
        blocks.push(Block::scaled(b, a_next, Scalar::Int(2)));
    }
    BlockSchedule::new(GeneratorTag::Factorial, blocks)
}

/// Cubic block schedule of depth `n_max`: `O` on `[c_n, d_n)` and `c_{n+1}·I`
/// on `[d_n, c_{n+1})`.
pub fn cubic_schedule(n_max: u32) -> Result<BlockSchedule> {
    if n_max == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let bounds = cubic_bounds(n_max)?;
    let mut blocks = Vec::with_capacity(2 * n_max as usize);
    for (k, &(c, d)) in bounds.iter().enumerate() {
        let n = k as u128 + 1;
        let c_next = d.checked_add(n).ok_or_else(|| ovf("c_n"))?;
        let m = i128::try_from(c_next).map_err(|_| ovf("multiplier c_n"))?;
        blocks.push(Block::zero(c, d));
        blocks.push(Block::scaled(d, c_next, Scalar::Int(m)));
    }
    BlockSchedule::new(GeneratorTag::Cubic, blocks)
}

pub fn factorial_example(n_max: u32) -> Result<OperatorSequenceSpec> {
    Ok(OperatorSequenceSpec::new(
        format!("factorial(depth={n_max})"),
        Space::RealLine,
        OperatorKind::ScalarBlocks(factorial_schedule(n_max)?),
    ))
}

pub fn cubic_example(n_max: u32) -> Result<OperatorSequenceSpec> {
    Ok(OperatorSequenceSpec::new(
        format!("cubic(depth={n_max})"),
        Space::RealLine,
        OperatorKind::ScalarBlocks(cubic_schedule(n_max)?),
    ))
}

/// `T_i = n·I` when `i = 2^n` (n ≥ 1), `T_i = I` otherwise.
pub fn power2_spike_example() -> OperatorSequenceSpec {
    OperatorSequenceSpec::new(
        "power2-spike",
        Space::RealLine,
        OperatorKind::ScaledIdentity(WeightSequence::PowerOfTwoSpike),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockEnd {
    /// Last index of the `O` block (`b_n − 1`, resp. `d_n − 1`).
    EndOfZeroBlock,
    /// Last index of the scaled block (`a_{n+1} − 1`, resp. `c_{n+1} − 1`).
    EndOfOnBlock,
}

/// An exact rational coefficient times ‖x‖.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledRational {
    pub coeff: Ratio<i128>,
    pub xnorm: f64,
}

impl ScaledRational {
    pub fn value(&self) -> f64 {
        ratio_to_f64(&self.coeff) * self.xnorm
    }
}

pub fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn to_i128(v: u128) -> Result<i128> {
    i128::try_from(v).map_err(|_| ovf("value exceeds i128"))
}

/// Closed-form Cesàro average of the factorial example at the end of block `n`:
///
/// * `EndOfZeroBlock`: `f(b_n − 1) = 2(n! − 1) / ((n+1)! + n! − 2)`
/// * `EndOfOnBlock`: `f(a_{n+1} − 1) = 2((n+1)! − 1) / (2(n+1)! − 2)`
pub fn closed_form_factorial_average(n: u32, at: BlockEnd, xnorm: f64) -> Result<ScaledRational> {
    if n == 0 {
        return Err(Error::invalid("block index starts at 1"));
    }
    if !(xnorm >= 0.0) {
        return Err(Error::invalid("xnorm must be non-negative"));
    }
    let f = to_i128(factorial(n)?)?;
    let f1 = to_i128(factorial(n + 1)?)?;
    let (num, den) = match at {
        BlockEnd::EndOfZeroBlock => (
            (f - 1).checked_mul(2).ok_or_else(|| ovf("numerator"))?,
            f1.checked_add(f).ok_or_else(|| ovf("denominator"))? - 2,
        ),
        BlockEnd::EndOfOnBlock => (
            (f1 - 1).checked_mul(2).ok_or_else(|| ovf("numerator"))?,
            f1.checked_mul(2).ok_or_else(|| ovf("denominator"))? - 2,
        ),
    };
    Ok(ScaledRational {
        coeff: Ratio::new(num, den),
        xnorm,
    })
}

/// Σ_{j=2}^{n} (j−1)·c_j, the exact multiplier mass of the cubic example up to
/// index `d_n − 1`.
pub fn cubic_weighted_sum(n: u32) -> Result<u128> {
    if n < 2 {
        return Ok(0);
    }
    let bounds = cubic_bounds(n)?;
    let mut acc = 0u128;
    for j in 2..=n as usize {
        let c_j = bounds[j - 1].0;
        acc = c_j
            .checked_mul(j as u128 - 1)
            .and_then(|t| acc.checked_add(t))
            .ok_or_else(|| ovf("cubic partial sum"))?;
    }
    Ok(acc)
}

/// Exact Cesàro averages of the cubic example at block ends:
///
/// * `EndOfZeroBlock`: `A_{d_n − 1} = Σ_{j=2}^{n}(j−1)c_j / (d_n − 1)`
/// * `EndOfOnBlock`: `A_{c_{n+1} − 1} = Σ_{j=2}^{n+1}(j−1)c_j / (c_{n+1} − 1)`
pub fn closed_form_cubic_average(n: u32, at: BlockEnd, xnorm: f64) -> Result<ScaledRational> {
    if n == 0 {
        return Err(Error::invalid("block index starts at 1"));
    }
    let (num, den) = match at {
        BlockEnd::EndOfZeroBlock => {
            let d_n = cubic_bounds(n)?[n as usize - 1].1;
            (cubic_weighted_sum(n)?, d_n - 1)
        }
        BlockEnd::EndOfOnBlock => (cubic_weighted_sum(n + 1)?, cubic_c(n + 1)? - 1),
    };
    Ok(ScaledRational {
        coeff: Ratio::new(to_i128(num)?, to_i128(den)?),
        xnorm,
    })
}
