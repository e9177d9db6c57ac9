use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::scalar::Scalar;
use crate::schedules::BlockSchedule;
use crate::vector::{Space, Vector, MAX_INDEX};
use crate::weights::WeightSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeRule {
    /// `T_i` is part `(i − 1) mod len`, evaluated at `i`.
    Alternate,
    /// `T_i = P_1,i ∘ P_2,i ∘ … ∘ P_k,i` (the last part acts first).
    Compose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `T_i = m·I` on each block, `O` on zero blocks.
    ScalarBlocks(BlockSchedule),
    /// `T_i = λ_i·Bⁱ`.
    WeightedShiftPowers(WeightSequence),
    /// `T_i = λ_i·I`.
    ScaledIdentity(WeightSequence),
    /// `T_i = c·B^power` for every `i`.
    FixedShift { power: u32, weight: Scalar },
    /// `T_i = D` for every `i`, with `(Dx)_j = w_j x_j`.
    CoordinateScaling(WeightSequence),
    Composite {
        rule: CompositeRule,
        parts: Vec<OperatorKind>,
    },
}

/// A declarative description of an operator sequence `(T_i)_{i ≥ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSequenceSpec {
    pub label: String,
    pub space: Space,
    pub kind: OperatorKind,
}

/// A run `[start, end)` on which `‖T_i x‖` is constant. When `exact` is set the
/// norm equals `exact·‖x‖` with `exact` an integer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSegment {
    pub start: u128,
    pub end: u128,
    pub norm: f64,
    pub exact: Option<u128>,
}

impl NormSegment {
    pub fn width(&self) -> u128 {
        self.end - self.start
    }
}

impl OperatorSequenceSpec {
    pub fn new(label: impl Into<String>, space: Space, kind: OperatorKind) -> Self {
        OperatorSequenceSpec {
            label: label.into(),
            space,
            kind,
        }
    }

    /// `T_i = λ_i Bⁱ` on ℓ¹.
    pub fn weighted_shift(label: impl Into<String>, weights: WeightSequence) -> Self {
        Self::new(
            label,
            Space::EllOne,
            OperatorKind::WeightedShiftPowers(weights),
        )
    }

    /// Checks weights and, for coordinate scalings, boundedness.
    pub fn validate(&self) -> Result<()> {
        validate_kind(&self.kind)
    }

    fn check(&self, i: u128, x: &Vector) -> Result<()> {
        if x.space() != self.space {
            return Err(Error::SpaceMismatch {
                expected: self.space,
                found: x.space(),
            });
        }
        if i == 0 {
            return Err(Error::invalid("operator index starts at 1"));
        }
        if i > MAX_INDEX {
            return Err(Error::IndexOverflow(i));
        }
        Ok(())
    }

    pub fn apply(&self, i: u128, x: &Vector) -> Result<Vector> {
        self.check(i, x)?;
        apply_kind(&self.kind, i, x)
    }

    /// `‖T_i x‖`, without materializing the image for scalar and shift kinds.
    pub fn image_norm(&self, i: u128, x: &Vector) -> Result<f64> {
        self.check(i, x)?;
        image_norm_kind(&self.kind, i, x)
    }

    /// An upper bound on the operator norm of `T_i`.
    pub fn norm_bound(&self, i: u128) -> Result<f64> {
        if i == 0 || i > MAX_INDEX {
            return Err(Error::IndexOverflow(i));
        }
        norm_bound_kind(&self.kind, i)
    }

    /// `|m|` when `T_i = m·I` with `m` an integer.
    pub fn exact_multiplier(&self, i: u128) -> Result<Option<u128>> {
        Ok(match &self.kind {
            OperatorKind::ScalarBlocks(s) => s.multiplier_at(i)?.abs_exact(),
            OperatorKind::ScaledIdentity(w) => w.weight(i)?.abs_exact(),
            _ => None,
        })
    }

    /// Largest index with a defined operator.
    pub fn max_index(&self) -> u128 {
        max_index_kind(&self.kind)
    }

    /// Piecewise-constant description of `i ↦ ‖T_i x‖` on `[1, horizon]`, or
    /// `None` when the sequence has no usable structure for this `x`.
    pub fn norm_segments(&self, x: &Vector, horizon: u128) -> Result<Option<Vec<NormSegment>>> {
        self.check(horizon.max(1), x)?;
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let xnorm = x.norm();
        let mut out = Vec::new();
        match &self.kind {
            OperatorKind::ScalarBlocks(schedule) => {
                for b in schedule.clipped(horizon)? {
                    let m = b.effective();
                    push_norm(&mut out, b.start, b.end, m.abs_f64() * xnorm, m.abs_exact());
                }
            }
            OperatorKind::ScaledIdentity(w) => match w.segments(1, horizon)? {
                Some(segs) => {
                    for s in segs {
                        let m = s.value;
                        push_norm(&mut out, s.start, s.end, m.abs_f64() * xnorm, m.abs_exact());
                    }
                }
                None => return Ok(None),
            },
            OperatorKind::WeightedShiftPowers(w) => {
                let live_end = x.support_end().unwrap_or(1).min(horizon + 1);
                if live_end > 1 {
                    let Some(segs) = w.segments(1, live_end - 1)? else {
                        return Ok(None);
                    };
                    let profile = x.tail_profile();
                    let mut p = 0usize;
                    for s in segs {
                        let mut cursor = s.start;
                        while cursor < s.end {
                            while p + 1 < profile.len() && profile[p + 1].0 <= cursor {
                                p += 1;
                            }
                            let next = profile
                                .get(p + 1)
                                .map(|q| q.0)
                                .unwrap_or(u128::MAX)
                                .min(s.end);
                            let norm = s.value.abs_f64() * profile[p].1;
                            push_norm(&mut out, cursor, next, norm, None);
                            cursor = next;
                        }
                    }
                }
                push_norm(&mut out, live_end, horizon + 1, 0.0, None);
            }
            OperatorKind::FixedShift { .. } | OperatorKind::CoordinateScaling(_) => {
                let norm = self.image_norm(1, x)?;
                push_norm(&mut out, 1, horizon + 1, norm, None);
            }
            OperatorKind::Composite { .. } => return Ok(None),
        }
        if horizon > max_index_kind(&self.kind) {
            return Err(Error::BeyondSchedule {
                index: horizon,
                end: max_index_kind(&self.kind) + 1,
            });
        }
        Ok(Some(out))
    }
}

fn push_norm(out: &mut Vec<NormSegment>, start: u128, end: u128, norm: f64, exact: Option<u128>) {
    if start >= end {
        return;
    }
    if let Some(last) = out.last_mut() {
        if last.end == start && last.norm == norm && last.exact == exact {
            last.end = end;
            return;
        }
    }
    out.push(NormSegment {
        start,
        end,
        norm,
        exact,
    });
}

fn validate_kind(kind: &OperatorKind) -> Result<()> {
    match kind {
        OperatorKind::ScalarBlocks(_) => Ok(()),
        OperatorKind::WeightedShiftPowers(w) | OperatorKind::ScaledIdentity(w) => w.validate(),
        OperatorKind::FixedShift { weight, .. } => {
            if weight.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid("non-finite shift weight"))
            }
        }
        OperatorKind::CoordinateScaling(w) => {
            w.validate()?;
            if w.sup_abs().is_none() {
                return Err(Error::invalid(
                    "coordinate scaling must have bounded weights",
                ));
            }
            Ok(())
        }
        OperatorKind::Composite { parts, .. } => {
            if parts.is_empty() {
                return Err(Error::invalid("composite needs at least one part"));
            }
            parts.iter().try_for_each(validate_kind)
        }
    }
}

fn shift(x: &Vector, power: u128, weight: f64) -> Result<Vector> {
    Vector::new(
        x.space(),
        x.coords()
            .iter()
            .filter(|c| c.index > power)
            .map(|c| (c.index - power, weight * c.value)),
    )
}

fn apply_kind(kind: &OperatorKind, i: u128, x: &Vector) -> Result<Vector> {
    match kind {
        OperatorKind::ScalarBlocks(s) => Ok(x.scale(s.multiplier_at(i)?.to_f64())),
        OperatorKind::ScaledIdentity(w) => Ok(x.scale(w.weight(i)?.to_f64())),
        OperatorKind::WeightedShiftPowers(w) => shift(x, i, w.weight(i)?.to_f64()),
        OperatorKind::FixedShift { power, weight } => shift(x, *power as u128, weight.to_f64()),
        OperatorKind::CoordinateScaling(w) => {
            let coords = x
                .coords()
                .iter()
                .map(|c| Ok((c.index, w.weight(c.index)?.to_f64() * c.value)))
                .collect::<Result<Vec<_>>>()?;
            Vector::new(x.space(), coords)
        }
        OperatorKind::Composite { rule, parts } => match rule {
            CompositeRule::Alternate => {
                apply_kind(&parts[((i - 1) % parts.len() as u128) as usize], i, x)
            }
            CompositeRule::Compose => parts
                .iter()
                .rev()
                .try_fold(x.clone(), |acc, p| apply_kind(p, i, &acc)),
        },
    }
}

fn image_norm_kind(kind: &OperatorKind, i: u128, x: &Vector) -> Result<f64> {
    match kind {
        OperatorKind::ScalarBlocks(s) => Ok(s.multiplier_at(i)?.abs_f64() * x.norm()),
        OperatorKind::ScaledIdentity(w) => Ok(w.weight(i)?.abs_f64() * x.norm()),
        OperatorKind::WeightedShiftPowers(w) => {
            let tail = x.tail_norm(i);
            if tail == 0.0 {
                return Ok(0.0);
            }
            Ok(w.weight(i)?.abs_f64() * tail)
        }
        OperatorKind::FixedShift { power, weight } => {
            Ok(weight.abs_f64() * x.tail_norm(*power as u128))
        }
        OperatorKind::Composite {
            rule: CompositeRule::Alternate,
            parts,
        } => image_norm_kind(&parts[((i - 1) % parts.len() as u128) as usize], i, x),
        _ => apply_kind(kind, i, x).map(|v| v.norm()),
    }
}

fn norm_bound_kind(kind: &OperatorKind, i: u128) -> Result<f64> {
    match kind {
        OperatorKind::ScalarBlocks(s) => Ok(s.multiplier_at(i)?.abs_f64()),
        OperatorKind::ScaledIdentity(w) | OperatorKind::WeightedShiftPowers(w) => {
            Ok(w.weight(i)?.abs_f64())
        }
        OperatorKind::FixedShift { weight, .. } => Ok(weight.abs_f64()),
        OperatorKind::CoordinateScaling(w) => w
            .sup_abs()
            .ok_or_else(|| Error::invalid("coordinate scaling must have bounded weights")),
        OperatorKind::Composite { rule, parts } => match rule {
            CompositeRule::Alternate => {
                norm_bound_kind(&parts[((i - 1) % parts.len() as u128) as usize], i)
            }
            CompositeRule::Compose => {
                let mut acc = CompensatedSum::new();
                let mut product = 1.0;
                for p in parts {
                    product *= norm_bound_kind(p, i)?;
                }
                acc.add(product);
                Ok(acc.value())
            }
        },
    }
}

fn max_index_kind(kind: &OperatorKind) -> u128 {
    match kind {
        OperatorKind::ScalarBlocks(s) => s.max_index(),
        OperatorKind::WeightedShiftPowers(WeightSequence::FromBlockSchedule {
            schedule, ..
        })
        | OperatorKind::ScaledIdentity(WeightSequence::FromBlockSchedule { schedule, .. }) => {
            schedule.max_index()
        }
        OperatorKind::Composite { parts, .. } => {
            parts.iter().map(max_index_kind).min().unwrap_or(MAX_INDEX)
        }
        _ => MAX_INDEX,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{cubic_example, factorial_example, power2_spike_example};

    fn unit_shift() -> OperatorSequenceSpec {
        OperatorSequenceSpec::weighted_shift("shift", WeightSequence::Constant(Scalar::ONE))
    }

    #[test]
    fn shift_moves_coordinates_down() {
        let s = unit_shift();
        let e3 = Vector::basis(Space::EllOne, 3).unwrap();
        assert_eq!(
            s.apply(2, &e3).unwrap(),
            Vector::basis(Space::EllOne, 1).unwrap()
        );
        let e1 = Vector::basis(Space::EllOne, 1).unwrap();
        assert_eq!(s.image_norm(1, &e1).unwrap(), 0.0);
        assert!(s.apply(1, &e1).unwrap().is_zero());
    }

    #[test]
    fn scalar_examples() {
        let one = Vector::real(1.0).unwrap();
        let f = factorial_example(3).unwrap();
        assert_eq!(f.apply(2, &one).unwrap(), Vector::real(2.0).unwrap());
        let c = cubic_example(3).unwrap();
        assert_eq!(c.image_norm(2, &one).unwrap(), 3.0);
        let p = power2_spike_example();
        assert_eq!(p.image_norm(8, &one).unwrap(), 3.0);
        assert_eq!(p.exact_multiplier(8).unwrap(), Some(3));
        let zero = Vector::zero(Space::RealLine);
        assert!(c.apply(5, &zero).unwrap().is_zero());
    }

    #[test]
    fn space_and_index_errors() {
        let s = unit_shift();
        let x = Vector::real(1.0).unwrap();
        assert!(matches!(s.apply(1, &x), Err(Error::SpaceMismatch { .. })));
        let e = Vector::basis(Space::EllOne, 1).unwrap();
        assert!(matches!(
            s.apply(MAX_INDEX + 1, &e),
            Err(Error::IndexOverflow(_))
        ));
        let f = factorial_example(1).unwrap();
        assert!(matches!(
            f.apply(3, &x),
            Err(Error::BeyondSchedule { index: 3, end: 3 })
        ));
    }

    #[test]
    fn composite_rules() {
        let b = OperatorKind::FixedShift {
            power: 1,
            weight: Scalar::ONE,
        };
        let d = OperatorKind::CoordinateScaling(WeightSequence::Periodic(vec![
            Scalar::Int(1),
            Scalar::Int(2),
        ]));
        let alt = OperatorSequenceSpec::new(
            "alt",
            Space::EllOne,
            OperatorKind::Composite {
                rule: CompositeRule::Alternate,
                parts: vec![b.clone(), d.clone()],
            },
        );
        alt.validate().unwrap();
        let x = Vector::ell_one([(1, 1.0), (2, 1.0)]).unwrap();
        assert_eq!(
            alt.apply(1, &x).unwrap(),
            Vector::ell_one([(1, 1.0)]).unwrap()
        );
        assert_eq!(alt.image_norm(2, &x).unwrap(), 3.0);
        let comp = OperatorSequenceSpec::new(
            "bd",
            Space::EllOne,
            OperatorKind::Composite {
                rule: CompositeRule::Compose,
                parts: vec![b, d],
            },
        );
        assert_eq!(
            comp.apply(7, &x).unwrap(),
            Vector::ell_one([(1, 2.0)]).unwrap()
        );
        assert_eq!(comp.norm_bound(3).unwrap(), 2.0);
        let unbounded = OperatorSequenceSpec::new(
            "u",
            Space::EllOne,
            OperatorKind::CoordinateScaling(WeightSequence::Polynomial(vec![0.0, 1.0])),
        );
        assert!(unbounded.validate().is_err());
    }

    fn brute_segments(spec: &OperatorSequenceSpec, x: &Vector, horizon: u128) {
        let segs = spec.norm_segments(x, horizon).unwrap().unwrap();
        assert_eq!(segs[0].start, 1);
        assert_eq!(segs.last().unwrap().end, horizon + 1);
        for s in &segs {
            for i in s.start..s.end {
                let direct = spec.image_norm(i, x).unwrap();
                assert!(
                    (direct - s.norm).abs() <= 1e-12 * (1.0 + direct),
                    "{} at {i}",
                    spec.label
                );
                if let Some(k) = s.exact {
                    assert_eq!(k as f64 * x.norm(), s.norm);
                }
            }
        }
    }

    #[test]
    fn norm_segments_match_pointwise_norms() {
        let x = Vector::real(-1.5).unwrap();
        brute_segments(&factorial_example(4).unwrap(), &x, 119);
        brute_segments(&cubic_example(3).unwrap(), &x, 814);
        brute_segments(&power2_spike_example(), &x, 1000);
        let y = Vector::ell_one([(2, 1.0), (5, -2.0), (40, 0.5)]).unwrap();
        brute_segments(&unit_shift(), &y, 100);
        brute_segments(&unit_shift(), &y, 3);
        let poly =
            OperatorSequenceSpec::weighted_shift("p", WeightSequence::Polynomial(vec![1.0, 1.0]));
        brute_segments(&poly, &y, 500);
        let cub = OperatorSequenceSpec::weighted_shift(
            "c",
            WeightSequence::FromBlockSchedule {
                schedule: Box::new(crate::schedules::cubic_schedule(3).unwrap()),
                off: Scalar::ZERO,
            },
        );
        brute_segments(&cub, &y, 814);
    }

    #[test]
    fn segments_beyond_schedule_fail() {
        let x = Vector::real(1.0).unwrap();
        assert!(factorial_example(2).unwrap().norm_segments(&x, 11).is_err());
    }
}
