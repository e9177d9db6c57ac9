//! Weighted backward shifts `T_i = λ_i Bⁱ` on ℓ¹.
//!
//! For these sequences `‖T_i x‖ = |λ_i|·Σ_{j>i}|x_j|`, so everything reduces
//! to the weight averages `L_n = (1/n) Σ_{i≤n} |λ_i|` and the tail mass of `x`.

use serde::{Deserialize, Serialize};

use crate::cesaro::{self, CheckpointRule, Witness};
use crate::error::{Error, Result};
use crate::operator::{OperatorKind, OperatorSequenceSpec};
use crate::vector::{Space, Vector};
use crate::weights::WeightSequence;

pub fn shift_spec(weights: &WeightSequence) -> OperatorSequenceSpec {
    OperatorSequenceSpec::weighted_shift("weighted-shift", weights.clone())
}

/// `T_i = λ_i I` on the line: its Cesàro averages at `x = 1` are exactly `L_n`.
fn weight_average_spec(weights: &WeightSequence) -> OperatorSequenceSpec {
    OperatorSequenceSpec::new(
        "weight-averages",
        Space::RealLine,
        OperatorKind::ScaledIdentity(weights.clone()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaVerdict {
    UnboundedEvidence,
    BoundedAtHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaProfile {
    /// `(n, L_n)` at the checkpoints.
    pub averages: Vec<Witness>,
    pub max: Witness,
    pub m: f64,
    #[serde(with = "crate::serde_dec")]
    pub horizon: u128,
    pub verdict: LambdaVerdict,
}

impl LambdaProfile {
    /// `L_n` at a checkpoint.
    pub fn at(&self, n: u128) -> Option<f64> {
        self.averages
            .binary_search_by_key(&n, |w| w.n)
            .ok()
            .map(|p| self.averages[p].value)
    }
}

pub fn lambda_averages(
    weights: &WeightSequence,
    horizon: u128,
    rule: &CheckpointRule,
) -> Result<Vec<Witness>> {
    weights.validate()?;
    let trace = cesaro::trace(
        &weight_average_spec(weights),
        &Vector::real(1.0)?,
        horizon,
        rule,
    )?;
    Ok(trace
        .checkpoints
        .iter()
        .map(|c| Witness {
            n: c.n,
            value: c.avg,
        })
        .collect())
}

/// `UnboundedEvidence` iff some `L_n > m` with `n ≤ horizon`.
pub fn lambda_criterion(weights: &WeightSequence, horizon: u128, m: f64) -> Result<LambdaProfile> {
    let averages = lambda_averages(weights, horizon, &CheckpointRule::default())?;
    let max = averages.iter().copied().fold(
        Witness {
            n: 0,
            value: f64::NEG_INFINITY,
        },
        |b, w| {
            if w.value > b.value {
                w
            } else {
                b
            }
        },
    );
    Ok(LambdaProfile {
        verdict: if max.value > m {
            LambdaVerdict::UnboundedEvidence
        } else {
            LambdaVerdict::BoundedAtHorizon
        },
        averages,
        max,
        m,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    /// `max L_n` at the horizon.
    pub c: f64,
    pub eps: f64,
    /// First `N₀` with `Σ_{j>N₀} |x_j| < ε/C`.
    #[serde(with = "crate::serde_dec")]
    pub n0_tail: u128,
    /// First `n` with `S_{N₀}·‖x‖/n ≤ ε²/C`, where `S_{N₀} = Σ_{i≤N₀}|λ_i|`.
    #[serde(with = "crate::serde_dec")]
    pub n_eventual: u128,
    /// `max(N₀ + 1, n_eventual)`: from here on the bound must hold.
    #[serde(with = "crate::serde_dec")]
    pub n_start: u128,
    /// `ε + ε²/C`.
    pub bound: f64,
    pub max_after_start: f64,
    pub checked_points: usize,
    pub holds: bool,
}

/// Tolerance added to `ε + ε²/C` when comparing averages.
pub const VANISHING_TOL: f64 = 1e-12;

pub fn verify_bounded_implies_vanishing(
    weights: &WeightSequence,
    x: &Vector,
    eps: f64,
    horizon: u128,
) -> Result<VanishingReport> {
    if x.space() != Space::EllOne {
        return Err(Error::SpaceMismatch {
            expected: Space::EllOne,
            found: x.space(),
        });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let profile = lambda_criterion(weights, horizon, f64::INFINITY)?;
    let c = profile.max.value.max(0.0);
    let (n0_tail, n_eventual, bound) = if c == 0.0 {
        (0, 1, eps)
    } else {
        let target = eps / c;
        let n0 = x
            .tail_profile()
            .into_iter()
            .find(|&(_, tail)| tail < target)
            .map(|(i, _)| i)
            .unwrap_or(0);
        let s_n0 = if n0 == 0 {
            0.0
        } else {
            let l = lambda_averages(weights, n0, &CheckpointRule::Explicit(vec![n0]))?;
            l.last().expect("horizon checkpoint").value * n0 as f64
        };
        let need = (s_n0 * x.norm() * c / (eps * eps)).ceil();
        let n_eventual = if need >= u128::MAX as f64 {
            u128::MAX
        } else {
            (need as u128).max(1)
        };
        (n0, n_eventual, eps + eps * eps / c)
    };
    let n_start = (n0_tail + 1).max(n_eventual);
    let mut checked_points = 0usize;
    let mut max_after_start = 0.0f64;
    if n_start <= horizon {
        let rule = CheckpointRule::Union(vec![
            CheckpointRule::default(),
            CheckpointRule::Explicit(vec![n_start]),
        ]);
        let trace = cesaro::trace(&shift_spec(weights), x, horizon, &rule)?;
        for cp in trace.checkpoints.iter().filter(|cp| cp.n >= n_start) {
            checked_points += 1;
            max_after_start = max_after_start.max(cp.avg);
        }
    }
    Ok(VanishingReport {
        c,
        eps,
        n0_tail,
        n_eventual,
        n_start,
        bound,
        max_after_start,
        checked_points,
        holds: checked_points > 0 && max_after_start <= bound + VANISHING_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreEntry {
    /// Last support index `s` of `x − y` (0 when the pair coincides).
    #[serde(with = "crate::serde_dec")]
    pub support_end: u128,
    /// `K = S_{s−1}(x − y)`; beyond the support `A_n = K/n`.
    pub k: f64,
    /// Largest `n·A_n/K` observed for `n ≥ s` (1 when the identity is exact).
    pub max_ratio: f64,
    pub avg_at_horizon: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    pub entries: Vec<CoreEntry>,
    #[serde(with = "crate::serde_dec")]
    pub horizon: u128,
    pub holds: bool,
}

/// Checks that finitely supported pairs are mean asymptotic with rate `1/n`.
pub fn mean_asymptotic_core(
    weights: &WeightSequence,
    pairs: &[(Vector, Vector)],
    horizon: u128,
) -> Result<CoreReport> {
    let spec = shift_spec(weights);
    let mut entries = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        let d = x.sub(y)?;
        let Some(s) = d.support_end() else {
            entries.push(CoreEntry {
                support_end: 0,
                k: 0.0,
                max_ratio: 0.0,
                avg_at_horizon: 0.0,
                holds: true,
            });
            continue;
        };
        if s > horizon {
            return Err(Error::invalid("horizon must exceed the support of x - y"));
        }
        let rule = CheckpointRule::Union(vec![
            CheckpointRule::default(),
            CheckpointRule::Explicit(vec![s]),
        ]);
        let trace = cesaro::trace(&spec, &d, horizon, &rule)?;
        let k = trace.at(s).map(|c| c.sum).unwrap_or(0.0);
        let mut max_ratio = 0.0f64;
        let mut holds = true;
        for cp in trace.checkpoints.iter().filter(|c| c.n >= s) {
            let nk = cp.avg * cp.n as f64;
            if k == 0.0 {
                holds &= cp.avg == 0.0;
            } else {
                let r = nk / k;
                max_ratio = max_ratio.max(r);
                holds &= r <= 1.0 + 1e-12;
            }
        }
        entries.push(CoreEntry {
            support_end: s,
            k,
            max_ratio,
            avg_at_horizon: trace.last().avg,
            holds,
        });
    }
    Ok(CoreReport {
        holds: entries.iter().all(|e| e.holds),
        entries,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;
    use crate::schedules::{cubic_c, cubic_schedule};

    fn cubic_weights(depth: u32) -> WeightSequence {
        WeightSequence::FromBlockSchedule {
            schedule: Box::new(cubic_schedule(depth).unwrap()),
            off: Scalar::ZERO,
        }
    }

    fn e(j: u128) -> Vector {
        Vector::basis(Space::EllOne, j).unwrap()
    }

    #[test]
    fn lambda_examples() {
        let one = lambda_criterion(&WeightSequence::Constant(Scalar::ONE), 1 << 40, 1.5).unwrap();
        assert_eq!(one.max.value, 1.0);
        assert_eq!(one.verdict, LambdaVerdict::BoundedAtHorizon);

        let lin =
            lambda_criterion(&WeightSequence::Polynomial(vec![0.0, 1.0]), 10_000, 100.0).unwrap();
        for w in &lin.averages {
            assert!((w.value - (w.n as f64 + 1.0) / 2.0).abs() < 1e-9);
        }
        assert_eq!(lin.verdict, LambdaVerdict::UnboundedEvidence);

        let h = cubic_c(9).unwrap() - 1;
        let cub = lambda_criterion(&cubic_weights(8), h, 7.5).unwrap();
        assert_eq!(cub.verdict, LambdaVerdict::UnboundedEvidence);
        assert_eq!(cub.max.n, h);
    }

    #[test]
    fn shift_identity_on_next_basis_vector() {
        let w = cubic_weights(4);
        let spec = shift_spec(&w);
        let l = lambda_averages(&w, 5000, &CheckpointRule::All).unwrap();
        for k in [1u128, 2, 3, 28, 29, 811, 814, 5000] {
            let t = cesaro::trace(&spec, &e(k + 1), k, &CheckpointRule::default()).unwrap();
            assert!((t.last().avg - l[k as usize - 1].value).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_unit_weights() {
        let x = Vector::ell_one((1..=10).map(|j| (j, 1.0))).unwrap();
        let r = verify_bounded_implies_vanishing(
            &WeightSequence::Constant(Scalar::ONE),
            &x,
            0.1,
            1 << 30,
        )
        .unwrap();
        assert_eq!(r.c, 1.0);
        assert_eq!(r.n0_tail, 10);
        assert!(r.holds, "{r:?}");
        let t = cesaro::trace(
            &shift_spec(&WeightSequence::Constant(Scalar::ONE)),
            &x,
            100_000,
            &CheckpointRule::default(),
        )
        .unwrap();
        // S_n = 9 + 8 + ... + 1 = 45 once n >= 9
        assert!(t
            .checkpoints
            .iter()
            .filter(|c| c.n >= 9)
            .all(|c| c.sum == 45.0));
        assert!(t
            .checkpoints
            .iter()
            .filter(|c| c.n >= 225)
            .all(|c| c.avg <= 0.2));

        let r = verify_bounded_implies_vanishing(
            &WeightSequence::Constant(Scalar::ONE),
            &e(1),
            0.1,
            1000,
        )
        .unwrap();
        assert_eq!(r.max_after_start, 0.0);
    }

    #[test]
    fn vanishing_alternating_weights() {
        let w = WeightSequence::Periodic(vec![Scalar::ZERO, Scalar::ONE]);
        let t = cesaro::trace(&shift_spec(&w), &e(5), 1000, &CheckpointRule::All).unwrap();
        assert!(t
            .checkpoints
            .iter()
            .all(|c| c.avg <= 4.0 / c.n as f64 + 1e-15));
        let r = verify_bounded_implies_vanishing(&w, &e(5), 0.05, 1 << 20).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn core_pairs() {
        let w = cubic_weights(3);
        let pairs = vec![
            (e(3), e(7)),
            (e(5), e(5)),
            (Vector::zero(Space::EllOne), e(2)),
        ];
        let r = mean_asymptotic_core(&w, &pairs, 800).unwrap();
        assert!(r.holds, "{r:?}");
        assert_eq!(r.entries[1].support_end, 0);
        // B^i e_2 vanishes for i >= 2 and λ_1 = 0
        assert_eq!(r.entries[2].k, 0.0);
        let ones = mean_asymptotic_core(
            &WeightSequence::Constant(Scalar::ONE),
            &[(e(3), e(7))],
            1000,
        )
        .unwrap();
        assert_eq!(ones.entries[0].k, 8.0);
        assert!((ones.entries[0].avg_at_horizon - 8.0 / 1000.0).abs() < 1e-15);
    }
}
