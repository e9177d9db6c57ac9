//! Prefix sums `S_n = Σ_{i≤n} ‖T_i x‖` and averages `A_n = S_n / n`.
//!
//! Two engines produce the same [`CesaroTrace`]: [`stream_trace`] visits every
//! index, [`block_trace`] works segment by segment on a piecewise-constant
//! norm profile. When every `T_i` is an integer multiple of the identity the
//! sums are also tracked exactly as `S_n = K_n·‖x‖` with `K_n` an integer.

use std::io::{self, Write};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::operator::{NormSegment, OperatorSequenceSpec};
use crate::vector::Vector;

/// Largest horizon for which `CheckpointRule::All` may be materialized by the
/// block engine.
pub const ALL_CHECKPOINTS_CAP: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointRule {
    All,
    /// `n_0 = 1`, `n_{k+1} = max(n_k + 1, ⌊r·n_k⌋)`.
    Geometric(f64),
    /// The last index of every constant run and of the run before it.
    BlockBoundaries,
    Explicit(#[serde(with = "crate::serde_dec::vec")] Vec<u128>),
    Union(Vec<CheckpointRule>),
}

impl Default for CheckpointRule {
    fn default() -> Self {
        CheckpointRule::Union(vec![
            CheckpointRule::BlockBoundaries,
            CheckpointRule::Geometric(1.1),
        ])
    }
}

impl CheckpointRule {
    /// The same rule with block boundaries replaced by a ratio-1.1 grid.
    pub fn without_boundaries(&self) -> CheckpointRule {
        match self {
            CheckpointRule::BlockBoundaries => CheckpointRule::Geometric(1.1),
            CheckpointRule::Union(parts) => {
                CheckpointRule::Union(parts.iter().map(|p| p.without_boundaries()).collect())
            }
            other => other.clone(),
        }
    }

    fn contains_all(&self) -> bool {
        match self {
            CheckpointRule::All => true,
            CheckpointRule::Union(parts) => parts.iter().any(|p| p.contains_all()),
            _ => false,
        }
    }

    fn collect(
        &self,
        horizon: u128,
        segments: Option<&[NormSegment]>,
        out: &mut Vec<u128>,
    ) -> Result<()> {
        match self {
            CheckpointRule::All => {
                if horizon > ALL_CHECKPOINTS_CAP {
                    return Err(Error::invalid(format!(
                        "checkpoint rule 'all' is limited to horizons up to {ALL_CHECKPOINTS_CAP}"
                    )));
                }
                out.extend(1..=horizon);
            }
            CheckpointRule::Geometric(r) => {
                if !(r.is_finite() && *r > 1.0) {
                    return Err(Error::invalid("geometric ratio must exceed 1"));
                }
                let mut n = 1u128;
                while n <= horizon {
                    out.push(n);
                    let next = (n as f64 * r).floor();
                    let next = if next >= u128::MAX as f64 {
                        u128::MAX
                    } else {
                        next as u128
                    };
                    n = next.max(n + 1);
                }
            }
            CheckpointRule::BlockBoundaries => {
                let segs = segments.ok_or(Error::NotBlockStructured)?;
                for s in segs {
                    if s.start > 1 {
                        out.push(s.start - 1);
                    }
                    out.push(s.end - 1);
                }
            }
            CheckpointRule::Explicit(list) => {
                out.extend(list.iter().copied().filter(|&n| n >= 1 && n <= horizon));
            }
            CheckpointRule::Union(parts) => {
                for p in parts {
                    p.collect(horizon, segments, out)?;
                }
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated checkpoint indices in `[1, horizon]`, always
    /// including `horizon`.
    pub fn indices(&self, horizon: u128, segments: Option<&[NormSegment]>) -> Result<Vec<u128>> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let mut out = Vec::new();
        self.collect(horizon, segments, &mut out)?;
        out.push(horizon);
        out.retain(|&n| n >= 1 && n <= horizon);
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(with = "crate::serde_dec")]
    pub n: u128,
    pub sum: f64,
    pub avg: f64,
    /// `K_n` with `S_n = K_n·‖x‖`, when tracked exactly.
    #[serde(
        with = "crate::serde_dec::opt",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub exact_sum: Option<u128>,
}

impl Checkpoint {
    fn new(n: u128, sum: f64, exact_sum: Option<u128>, xnorm: f64) -> Self {
        let sum = match exact_sum {
            Some(k) => k as f64 * xnorm,
            None => sum,
        };
        Checkpoint {
            n,
            sum,
            avg: sum / n as f64,
            exact_sum,
        }
    }

    /// `K_n / n` as an exact rational, so that `A_n = exact_avg·‖x‖`.
    pub fn exact_avg(&self) -> Option<Ratio<i128>> {
        let k = i128::try_from(self.exact_sum?).ok()?;
        let n = i128::try_from(self.n).ok()?;
        Some(Ratio::new(k, n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesaroTrace {
    pub spec: String,
    pub vector: Vector,
    #[serde(with = "crate::serde_dec")]
    pub horizon: u128,
    pub xnorm: f64,
    /// Whether every checkpoint carries an exact integer sum.
    pub exact: bool,
    pub checkpoints: Vec<Checkpoint>,
}

impl CesaroTrace {
    fn finish(
        spec: &OperatorSequenceSpec,
        x: &Vector,
        horizon: u128,
        cps: Vec<Checkpoint>,
    ) -> Self {
        CesaroTrace {
            spec: spec.label.clone(),
            vector: x.clone(),
            horizon,
            xnorm: x.norm(),
            exact: !cps.is_empty() && cps.iter().all(|c| c.exact_sum.is_some()),
            checkpoints: cps,
        }
    }

    pub fn at(&self, n: u128) -> Option<&Checkpoint> {
        self.checkpoints
            .binary_search_by_key(&n, |c| c.n)
            .ok()
            .map(|p| &self.checkpoints[p])
    }

    pub fn last(&self) -> &Checkpoint {
        self.checkpoints
            .last()
            .expect("trace has the horizon checkpoint")
    }

    /// Checkpoints with `n` in the final decade `[horizon/10, horizon]`.
    pub fn final_decade(&self) -> &[Checkpoint] {
        let lo = (self.horizon / 10).max(1);
        let p = self.checkpoints.partition_point(|c| c.n < lo);
        &self.checkpoints[p..]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,S,A")?;
        for c in &self.checkpoints {
            writeln!(w, "{},{:?},{:?}", c.n, c.sum, c.avg)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Checks that `horizon` lies inside the sequence's defined range.
fn check_horizon(spec: &OperatorSequenceSpec, horizon: u128) -> Result<()> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if horizon > spec.max_index() {
        return Err(Error::BeyondSchedule {
            index: horizon,
            end: spec.max_index() + 1,
        });
    }
    Ok(())
}

fn stream_generic<F>(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    horizon: u128,
    rule: &CheckpointRule,
    mut norm_at: F,
) -> Result<Vec<Checkpoint>>
where
    F: FnMut(u128) -> Result<(f64, Option<u128>)>,
{
    check_horizon(spec, horizon)?;
    let all = rule.contains_all();
    let wanted = if all {
        Vec::new()
    } else {
        let segments = match rule.indices(horizon, None) {
            Err(Error::NotBlockStructured) => spec.norm_segments(x, horizon)?,
            Err(e) => return Err(e),
            Ok(_) => None,
        };
        rule.indices(horizon, segments.as_deref())?
    };
    let xnorm = x.norm();
    let mut sum = CompensatedSum::new();
    let mut exact = Some(0u128);
    let mut out = Vec::with_capacity(if all { horizon as usize } else { wanted.len() });
    let mut next = 0usize;
    for i in 1..=horizon {
        let (v, k) = norm_at(i)?;
        sum.add(v);
        exact = match (exact, k) {
            (Some(acc), Some(k)) => acc.checked_add(k),
            _ => None,
        };
        if all || wanted.get(next) == Some(&i) {
            out.push(Checkpoint::new(i, sum.value(), exact, xnorm));
            next += 1;
        }
    }
    Ok(out)
}

/// Visits every index `1..=horizon`, accumulating `‖T_i x‖` with compensated
/// summation.
pub fn stream_trace(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    horizon: u128,
    rule: &CheckpointRule,
) -> Result<CesaroTrace> {
    let cps = stream_generic(spec, x, horizon, rule, |i| {
        Ok((spec.image_norm(i, x)?, spec.exact_multiplier(i)?))
    })?;
    Ok(CesaroTrace::finish(spec, x, horizon, cps))
}

/// Stream trace of `‖T_i x − T_i y‖`, computed from the two materialized images.
pub fn stream_pair_trace(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    y: &Vector,
    horizon: u128,
    rule: &CheckpointRule,
) -> Result<CesaroTrace> {
    let diff = x.sub(y)?;
    let cps = stream_generic(spec, &diff, horizon, rule, |i| {
        let tx = spec.apply(i, x)?;
        let ty = spec.apply(i, y)?;
        Ok((tx.sub(&ty)?.norm(), None))
    })?;
    let mut trace = CesaroTrace::finish(spec, &diff, horizon, cps);
    trace.spec = format!("{} (pair)", spec.label);
    Ok(trace)
}

/// Prefix sums over a piecewise-constant norm profile, queryable at any `n`.
#[derive(Debug, Clone)]
pub struct SegmentedSums {
    segments: Vec<NormSegment>,
    before: Vec<f64>,
    before_exact: Vec<Option<u128>>,
    xnorm: f64,
}

impl SegmentedSums {
    pub fn new(segments: Vec<NormSegment>, xnorm: f64) -> Result<Self> {
        if segments.is_empty() || segments[0].start != 1 {
            return Err(Error::invalid("segments must start at index 1"));
        }
        if segments.windows(2).any(|w| w[0].end != w[1].start) {
            return Err(Error::invalid("segments must be contiguous"));
        }
        let mut before = Vec::with_capacity(segments.len());
        let mut before_exact = Vec::with_capacity(segments.len());
        let mut acc = CompensatedSum::new();
        let mut exact = Some(0u128);
        for s in &segments {
            before.push(acc.value());
            before_exact.push(exact);
            acc.add(s.width() as f64 * s.norm);
            exact = match (exact, s.exact) {
                (Some(a), Some(k)) => k.checked_mul(s.width()).and_then(|t| a.checked_add(t)),
                _ => None,
            };
        }
        Ok(SegmentedSums {
            segments,
            before,
            before_exact,
            xnorm,
        })
    }

    pub fn segments(&self) -> &[NormSegment] {
        &self.segments
    }

    pub fn horizon(&self) -> u128 {
        self.segments.last().map(|s| s.end - 1).unwrap_or(0)
    }

    pub fn checkpoint(&self, n: u128) -> Result<Checkpoint> {
        if n == 0 || n > self.horizon() {
            return Err(Error::BeyondSchedule {
                index: n,
                end: self.horizon() + 1,
            });
        }
        let p = self.segments.partition_point(|s| s.end <= n);
        let s = &self.segments[p];
        let width = n - s.start + 1;
        let sum = self.before[p] + width as f64 * s.norm;
        let exact = match (self.before_exact[p], s.exact) {
            (Some(a), Some(k)) => k.checked_mul(width).and_then(|t| a.checked_add(t)),
            _ => None,
        };
        Ok(Checkpoint::new(n, sum, exact, self.xnorm))
    }

    pub fn avg_at(&self, n: u128) -> Result<f64> {
        self.checkpoint(n).map(|c| c.avg)
    }
}

/// Segment-accelerated trace: cost grows with the number of constant runs and
/// checkpoints, not with the horizon.
pub fn block_trace(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    horizon: u128,
    rule: &CheckpointRule,
) -> Result<CesaroTrace> {
    check_horizon(spec, horizon)?;
    let segments = spec
        .norm_segments(x, horizon)?
        .ok_or(Error::NotBlockStructured)?;
    let sums = SegmentedSums::new(segments, x.norm())?;
    let cps = rule
        .indices(horizon, Some(sums.segments()))?
        .into_iter()
        .map(|n| sums.checkpoint(n))
        .collect::<Result<Vec<_>>>()?;
    Ok(CesaroTrace::finish(spec, x, horizon, cps))
}

/// Block engine when the norm profile is segmentable, stream engine otherwise.
pub fn trace(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    horizon: u128,
    rule: &CheckpointRule,
) -> Result<CesaroTrace> {
    match block_trace(spec, x, horizon, rule) {
        Err(Error::NotBlockStructured) => {
            stream_trace(spec, x, horizon, &rule.without_boundaries())
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(with = "crate::serde_dec")]
    pub n: u128,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaSummary {
    /// `(n, min A over checkpoints ≥ n)`, listed where the tail minimum changes.
    pub running_min_tail: Vec<Witness>,
    pub running_max: Witness,
    pub dip_witnesses: Vec<Witness>,
    pub peak_witnesses: Vec<Witness>,
}

/// Dips (`A_n < eps`) and peaks (`A_n > m`) over the trace's checkpoints.
/// Ties count as neither.
pub fn extrema(trace: &CesaroTrace, eps: f64, m: f64) -> ExtremaSummary {
    let cps = &trace.checkpoints;
    let mut max = Witness {
        n: 0,
        value: f64::NEG_INFINITY,
    };
    let mut dips = Vec::new();
    let mut peaks = Vec::new();
    for c in cps {
        if c.avg > max.value {
            max = Witness {
                n: c.n,
                value: c.avg,
            };
        }
        if c.avg < eps {
            dips.push(Witness {
                n: c.n,
                value: c.avg,
            });
        }
        if c.avg > m {
            peaks.push(Witness {
                n: c.n,
                value: c.avg,
            });
        }
    }
    let mut tail = Vec::new();
    let mut current = f64::INFINITY;
    for c in cps.iter().rev() {
        if c.avg < current {
            current = c.avg;
            tail.push(Witness {
                n: c.n,
                value: current,
            });
        } else if let Some(last) = tail.last_mut() {
            last.n = c.n;
        }
    }
    tail.reverse();
    ExtremaSummary {
        running_min_tail: tail,
        running_max: max,
        dip_witnesses: dips,
        peak_witnesses: peaks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    DipBelow(f64),
    PeakAbove(f64),
}

/// Checkpoint indices satisfying the predicate, in increasing order.
pub fn extract_subsequence(trace: &CesaroTrace, predicate: Selection) -> Result<Vec<u128>> {
    let out: Vec<u128> = trace
        .checkpoints
        .iter()
        .filter(|c| match predicate {
            Selection::DipBelow(eps) => c.avg < eps,
            Selection::PeakAbove(m) => c.avg > m,
        })
        .map(|c| c.n)
        .collect();
    if out.is_empty() {
        Err(Error::EmptySelection)
    } else {
        Ok(out)
    }
}
