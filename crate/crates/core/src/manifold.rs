//! Finite-depth construction of an irregular manifold `span{x_1, …, x_D}`.
//!
//! Level `m` perturbs the anchor `z_m` to `x_m = z_m + γ·w` and records where
//! `x_m` dips and peaks:
//!
//! * `s^(m,j) ⊆ s^(m−1,j)` for `j < m`, and `s^(m,m) ⊆ t^(m−1)`, are indices
//!   with `A_n(x_m) < ε_m = ε_dip / 2^m`;
//! * `t^(m)` are indices with `A_n(x_m) > M_m = M_peak·m`.
//!
//! Candidate indices come from block-boundary checkpoints past a burn-in.
//! Every family is filtered from its stored parent and then truncated, so the
//! nesting survives truncation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cesaro::{self, CesaroTrace, CheckpointRule, Witness};
use crate::classify::{self, Thresholds, Verdict};
use crate::error::Error;
use crate::operator::OperatorSequenceSpec;
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// Directions tried per level.
    pub max_directions: usize,
    /// Step sizes tried per direction: `γ = 1/(2m), 1/(4m), …`.
    pub gamma_steps: u32,
    /// Indices below this never enter a family.
    #[serde(with = "crate::serde_dec")]
    pub burn_in: u128,
    /// Largest family size kept.
    pub family_cap: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_directions: 64,
            gamma_steps: 12,
            burn_in: 100,
            family_cap: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Parent {
    /// Dips of `x_1` itself.
    Base,
    /// `s^(m−1, j)`.
    Dip { level: usize, j: usize },
    /// `t^(m−1)`.
    Peak { level: usize },
    /// Peaks of `x_m` itself.
    Own,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub parent: Parent,
    #[serde(with = "crate::serde_dec::vec")]
    pub indices: Vec<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub m: usize,
    pub anchor: Vector,
    pub x: Vector,
    pub direction: Vector,
    pub gamma: f64,
    pub distance: f64,
    pub eps_m: f64,
    pub m_m: f64,
    /// `s^(m,1), …, s^(m,m)`.
    pub dips: Vec<Family>,
    /// `t^(m)`.
    pub peaks: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum LedgerStatus {
    Certified,
    /// The search budget ran out at `level`; this never claims the hypothesis
    /// is false.
    BudgetExhausted {
        level: usize,
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsequenceLedger {
    pub spec: String,
    #[serde(with = "crate::serde_dec")]
    pub horizon: u128,
    pub depth: usize,
    pub thresholds: Thresholds,
    pub budgets: Budgets,
    pub seed: u64,
    pub levels: Vec<Level>,
    pub status: LedgerStatus,
}

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("the sequence shows no mean-sensitivity witness at the horizon")]
    NoSensitivity,
    #[error("search budget exhausted at level {level}")]
    SearchExhausted {
        level: usize,
        partial: Box<SubsequenceLedger>,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

pub fn eps_schedule(eps_dip: f64, m: usize) -> f64 {
    eps_dip / 2f64.powi(m as i32)
}

pub fn peak_schedule(m_peak: f64, m: usize) -> f64 {
    m_peak * m as f64
}

/// Normalized peak a direction needs before it can certify level `depth`:
/// `x_D = z_D + γ·w` with `γ ≤ 1/(2D)` must exceed `M_D = M_peak·D`.
pub fn precondition_peak(m_peak: f64, depth: usize) -> f64 {
    2.0 * (depth * depth) as f64 * m_peak
}

fn family_trace(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    horizon: u128,
    extra: &[u128],
) -> Result<CesaroTrace, Error> {
    let rule = CheckpointRule::Union(vec![
        CheckpointRule::BlockBoundaries,
        CheckpointRule::Explicit(extra.to_vec()),
    ]);
    cesaro::trace(spec, x, horizon, &rule)
}

fn avg_at(trace: &CesaroTrace, n: u128) -> f64 {
    trace.at(n).map(|c| c.avg).unwrap_or(f64::INFINITY)
}

/// Candidate `x_m` and its families, if it certifies.
fn certify(
    spec: &OperatorSequenceSpec,
    levels: &[Level],
    m: usize,
    x: &Vector,
    t: &Thresholds,
    b: &Budgets,
) -> Result<Option<(Vec<Family>, Family)>, Error> {
    let eps_m = eps_schedule(t.eps_dip, m);
    let m_m = peak_schedule(t.m_peak, m);
    let mut parents: Vec<(Parent, &[u128])> = Vec::new();
    if let Some(prev) = levels.last() {
        for (j, f) in prev.dips.iter().enumerate() {
            parents.push((
                Parent::Dip {
                    level: m - 1,
                    j: j + 1,
                },
                &f.indices,
            ));
        }
        parents.push((Parent::Peak { level: m - 1 }, &prev.peaks.indices));
    }
    let extra: Vec<u128> = parents
        .iter()
        .flat_map(|(_, ix)| ix.iter().copied())
        .collect();
    let trace = family_trace(spec, x, t.horizon, &extra)?;
    let eligible = |n: u128| n >= b.burn_in;

    let mut dips = Vec::with_capacity(m);
    if parents.is_empty() {
        let base: Vec<u128> = trace
            .checkpoints
            .iter()
            .filter(|c| eligible(c.n) && c.avg < eps_m)
            .map(|c| c.n)
            .take(b.family_cap)
            .collect();
        if base.is_empty() {
            return Ok(None);
        }
        dips.push(Family {
            parent: Parent::Base,
            indices: base,
        });
    } else {
        for (parent, indices) in parents {
            let child: Vec<u128> = indices
                .iter()
                .copied()
                .filter(|&n| eligible(n) && avg_at(&trace, n) < eps_m)
                .take(b.family_cap)
                .collect();
            if child.is_empty() {
                return Ok(None);
            }
            dips.push(Family {
                parent,
                indices: child,
            });
        }
    }
    let peaks: Vec<u128> = trace
        .checkpoints
        .iter()
        .filter(|c| eligible(c.n) && c.avg > m_m)
        .map(|c| c.n)
        .take(b.family_cap)
        .collect();
    if peaks.is_empty() {
        return Ok(None);
    }
    Ok(Some((
        dips,
        Family {
            parent: Parent::Own,
            indices: peaks,
        },
    )))
}

/// Unit-norm directions from the sensitivity samples, latest peak first.
fn directions(
    spec: &OperatorSequenceSpec,
    samples: &[Vector],
    horizon: u128,
) -> Result<Vec<Vector>, Error> {
    let mut keyed = Vec::new();
    for s in samples.iter().filter(|s| !s.is_zero()) {
        let trace = classify::evaluate(spec, s, horizon)?;
        let peak = cesaro::extrema(&trace, 0.0, f64::INFINITY).running_max;
        keyed.push((peak.n, s.scale(1.0 / s.norm())));
    }
    keyed.sort_by(|a, b| b.0.cmp(&a.0));
    Ok(keyed.into_iter().map(|(_, v)| v).collect())
}

/// Builds the ledger level by level. `samples` seed the sensitivity check and
/// the search directions; `None` uses [`classify::default_samples`].
pub fn build_irregular_manifold(
    spec: &OperatorSequenceSpec,
    anchors: &[Vector],
    depth: usize,
    t: &Thresholds,
    budgets: &Budgets,
    samples: Option<&[Vector]>,
    seed: u64,
) -> Result<SubsequenceLedger, ManifoldError> {
    t.validate()?;
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1").into());
    }
    if anchors.len() < depth {
        return Err(Error::invalid(format!("need {depth} anchors, got {}", anchors.len())).into());
    }
    let owned;
    let samples = match samples {
        Some(s) => s,
        None => {
            owned = classify::default_samples(spec, t.horizon)?;
            &owned
        }
    };
    let pre = Thresholds {
        m_peak: precondition_peak(t.m_peak, depth),
        ..*t
    };
    let dich = classify::dichotomy_report(spec, samples, &pre)?;
    if !dich.has(Verdict::MsWitness) {
        return Err(ManifoldError::NoSensitivity);
    }
    let dirs = directions(spec, samples, t.horizon)?;

    let mut ledger = SubsequenceLedger {
        spec: spec.label.clone(),
        horizon: t.horizon,
        depth,
        thresholds: *t,
        budgets: *budgets,
        seed,
        levels: Vec::with_capacity(depth),
        status: LedgerStatus::Certified,
    };
    for m in 1..=depth {
        let z = &anchors[m - 1];
        let mut found = None;
        'search: for w in dirs.iter().take(budgets.max_directions) {
            let mut gamma = 1.0 / (2.0 * m as f64);
            for _ in 0..budgets.gamma_steps {
                let x = z.combine(1.0, w, gamma)?;
                let distance = x.sub(z)?.norm();
                if distance < 1.0 / m as f64 {
                    if let Some((dips, peaks)) = certify(spec, &ledger.levels, m, &x, t, budgets)? {
                        found = Some(Level {
                            m,
                            anchor: z.clone(),
                            x,
                            direction: w.clone(),
                            gamma,
                            distance,
                            eps_m: eps_schedule(t.eps_dip, m),
                            m_m: peak_schedule(t.m_peak, m),
                            dips,
                            peaks,
                        });
                        break 'search;
                    }
                }
                gamma *= 0.5;
            }
        }
        match found {
            Some(level) => ledger.levels.push(level),
            None => {
                ledger.status = LedgerStatus::BudgetExhausted {
                    level: m,
                    note: format!(
                        "no candidate among {} directions x {} step sizes certified level {m}",
                        dirs.len().min(budgets.max_directions),
                        budgets.gamma_steps
                    ),
                };
                return Err(ManifoldError::SearchExhausted {
                    level: m,
                    partial: Box::new(ledger),
                });
            }
        }
    }
    Ok(ledger)
}

/// Structural check: every family lies inside its declared parent and every
/// level is within `1/m` of its anchor.
pub fn check_ledger_structure(ledger: &SubsequenceLedger) -> Result<(), String> {
    for (k, level) in ledger.levels.iter().enumerate() {
        let m = k + 1;
        if level.m != m {
            return Err(format!("level {k} is labelled {}", level.m));
        }
        if !(level.distance < 1.0 / m as f64) {
            return Err(format!("level {m} is {} from its anchor", level.distance));
        }
        if level.dips.len() != m {
            return Err(format!("level {m} has {} dip families", level.dips.len()));
        }
        let families = level.dips.iter().chain(std::iter::once(&level.peaks));
        for f in families {
            if f.indices.is_empty() || f.indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!(
                    "level {m}: family {:?} is empty or unsorted",
                    f.parent
                ));
            }
            let parent: Option<&[u128]> = match &f.parent {
                Parent::Base | Parent::Own => None,
                Parent::Dip { level: p, j } => Some(&ledger.levels[p - 1].dips[j - 1].indices),
                Parent::Peak { level: p } => Some(&ledger.levels[p - 1].peaks.indices),
            };
            if let Some(parent) = parent {
                if let Some(n) = f.indices.iter().find(|n| parent.binary_search(n).is_err()) {
                    return Err(format!(
                        "level {m}: index {n} missing from parent {:?}",
                        f.parent
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Re-evaluates each `x_m` on its families.
pub fn check_ledger_certificates(
    spec: &OperatorSequenceSpec,
    ledger: &SubsequenceLedger,
) -> Result<Result<(), String>, Error> {
    for level in &ledger.levels {
        let mut all: Vec<u128> = level.peaks.indices.clone();
        for f in &level.dips {
            all.extend_from_slice(&f.indices);
        }
        let trace = cesaro::trace(
            spec,
            &level.x,
            ledger.horizon,
            &CheckpointRule::Explicit(all),
        )?;
        for f in &level.dips {
            if let Some(n) = f
                .indices
                .iter()
                .find(|&&n| avg_at(&trace, n) >= level.eps_m)
            {
                return Ok(Err(format!("x_{} does not dip at {n}", level.m)));
            }
        }
        if let Some(n) = level
            .peaks
            .indices
            .iter()
            .find(|&&n| avg_at(&trace, n) <= level.m_m)
        {
            return Ok(Err(format!("x_{} does not peak at {n}", level.m)));
        }
    }
    Ok(Ok(()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub alpha: Vec<f64>,
    /// First level with a non-zero coefficient (1-based).
    pub l_prime: usize,
    pub dip: Option<Witness>,
    pub peak: Option<Witness>,
    pub triangle_ok: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub total: usize,
    pub passed: usize,
    pub seed: u64,
    pub eps_dip: f64,
    pub m_peak: f64,
    pub combos: Vec<ComboResult>,
}

impl SpanReport {
    pub fn failing(&self) -> impl Iterator<Item = &ComboResult> {
        self.combos.iter().filter(|c| !c.pass)
    }
}

/// Slack allowed in the triangle inequality at certified dips.
pub const TRIANGLE_TOL: f64 = 1e-9;

/// Checks one combination `Σ α_l x_l`: a dip below `ε_dip·max|α|` on
/// `s^(D,1)`, and a peak above `M_peak·|α_l'|` on `s^(D,l'+1)` (or on `t^(D)`
/// when `l' = D`).
pub fn verify_combination(
    spec: &OperatorSequenceSpec,
    ledger: &SubsequenceLedger,
    alpha: &[f64],
    t: &Thresholds,
) -> Result<ComboResult, Error> {
    let depth = ledger.levels.len();
    if alpha.len() != depth {
        return Err(Error::invalid("one coefficient per level is required"));
    }
    let Some(lp) = alpha.iter().position(|a| *a != 0.0) else {
        return Err(Error::ZeroVector);
    };
    let top = &ledger.levels[depth - 1];
    let dip_family = &top.dips[0].indices;
    let peak_family = if lp + 1 < depth {
        &top.dips[lp + 1].indices
    } else {
        &top.peaks.indices
    };
    let mut all = dip_family.clone();
    all.extend_from_slice(peak_family);
    let rule = CheckpointRule::Explicit(all);
    let xs: Vec<Vector> = ledger.levels.iter().map(|l| l.x.clone()).collect();
    let y = Vector::linear_combination(alpha, &xs)?;
    let max_abs = alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if y.is_zero() {
        return Ok(ComboResult {
            alpha: alpha.to_vec(),
            l_prime: lp + 1,
            dip: None,
            peak: None,
            triangle_ok: true,
            pass: false,
        });
    }
    let ty = cesaro::trace(spec, &y, ledger.horizon, &rule)?;
    let parts = xs
        .iter()
        .map(|x| cesaro::trace(spec, x, ledger.horizon, &rule))
        .collect::<Result<Vec<_>, _>>()?;

    let mut triangle_ok = true;
    let mut dip: Option<Witness> = None;
    for &n in dip_family {
        let a = avg_at(&ty, n);
        let bound: f64 = alpha
            .iter()
            .zip(&parts)
            .map(|(c, p)| c.abs() * avg_at(p, n))
            .sum();
        triangle_ok &= a <= bound + TRIANGLE_TOL;
        if dip.is_none_or(|d| a < d.value) {
            dip = Some(Witness { n, value: a });
        }
    }
    let peak = peak_family
        .iter()
        .map(|&n| Witness {
            n,
            value: avg_at(&ty, n),
        })
        .fold(None, |best: Option<Witness>, w| match best {
            Some(b) if b.value >= w.value => Some(b),
            _ => Some(w),
        });
    let dip_ok = dip.is_some_and(|d| d.value < t.eps_dip * max_abs);
    let peak_ok = peak.is_some_and(|p| p.value > t.m_peak * alpha[lp].abs());
    Ok(ComboResult {
        alpha: alpha.to_vec(),
        l_prime: lp + 1,
        dip,
        peak,
        triangle_ok,
        pass: dip_ok && peak_ok && triangle_ok,
    })
}

/// `n_combos` random coefficient vectors with entries uniform in `[-1, 1]`.
pub fn verify_span_irregular(
    spec: &OperatorSequenceSpec,
    ledger: &SubsequenceLedger,
    n_combos: usize,
    t: &Thresholds,
    seed: u64,
) -> Result<SpanReport, Error> {
    let depth = ledger.levels.len();
    if depth == 0 {
        return Err(Error::invalid("ledger has no levels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut combos = Vec::with_capacity(n_combos);
    while combos.len() < n_combos {
        let alpha: Vec<f64> = (0..depth).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if alpha.iter().all(|a| *a == 0.0) {
            continue;
        }
        combos.push(verify_combination(spec, ledger, &alpha, t)?);
    }
    Ok(SpanReport {
        total: combos.len(),
        passed: combos.iter().filter(|c| c.pass).count(),
        seed,
        eps_dip: t.eps_dip,
        m_peak: t.m_peak,
        combos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;
    use crate::schedules::{cubic_c, cubic_schedule};
    use crate::vector::Space;
    use crate::weights::WeightSequence;

    fn cubic_shift() -> OperatorSequenceSpec {
        OperatorSequenceSpec::weighted_shift(
            "cubic-shift",
            WeightSequence::FromBlockSchedule {
                schedule: Box::new(cubic_schedule(15).unwrap()),
                off: Scalar::ZERO,
            },
        )
    }

    fn thresholds() -> Thresholds {
        Thresholds::new(0.1, 0.5, 0.5, cubic_c(16).unwrap() - 1, 1).unwrap()
    }

    fn anchors() -> Vec<Vector> {
        (2..=4)
            .map(|j| Vector::basis(Space::EllOne, j).unwrap())
            .collect()
    }

    #[test]
    fn schedules() {
        assert_eq!(eps_schedule(0.1, 2), 0.025);
        assert_eq!(peak_schedule(0.5, 3), 1.5);
        assert_eq!(precondition_peak(0.5, 3), 9.0);
    }

    #[test]
    fn depth_three_ledger() {
        let spec = cubic_shift();
        let t = thresholds();
        let ledger =
            build_irregular_manifold(&spec, &anchors(), 3, &t, &Budgets::default(), None, 0)
                .unwrap();
        assert_eq!(ledger.levels.len(), 3);
        check_ledger_structure(&ledger).unwrap();
        check_ledger_certificates(&spec, &ledger).unwrap().unwrap();
        let report = verify_span_irregular(&spec, &ledger, 20, &t, 7).unwrap();
        assert_eq!(report.passed, report.total, "{:?}", report.failing().next());
        let adversarial = verify_combination(&spec, &ledger, &[1e-3, 1.0, -1.0], &t).unwrap();
        assert!(adversarial.pass, "{adversarial:?}");
        assert_eq!(adversarial.l_prime, 1);
        let single = verify_combination(&spec, &ledger, &[0.0, 0.0, 2.0], &t).unwrap();
        assert!(single.pass);
        assert_eq!(single.l_prime, 3);
    }

    #[test]
    fn depth_one() {
        let spec = cubic_shift();
        let ledger = build_irregular_manifold(
            &spec,
            &anchors(),
            1,
            &thresholds(),
            &Budgets::default(),
            None,
            0,
        )
        .unwrap();
        assert_eq!(ledger.levels[0].dips[0].parent, Parent::Base);
        check_ledger_structure(&ledger).unwrap();
    }

    #[test]
    fn unit_shift_has_no_sensitivity() {
        let spec =
            OperatorSequenceSpec::weighted_shift("shift", WeightSequence::Constant(Scalar::ONE));
        for depth in 1..=3 {
            let t = Thresholds::new(0.1, 0.5, 0.5, 1 << 40, 1).unwrap();
            let err = build_irregular_manifold(
                &spec,
                &anchors(),
                depth,
                &t,
                &Budgets::default(),
                None,
                0,
            );
            assert!(
                matches!(err, Err(ManifoldError::NoSensitivity)),
                "depth {depth}"
            );
        }
    }

    #[test]
    fn tiny_budget_returns_partial_ledger() {
        let spec = cubic_shift();
        let budgets = Budgets {
            max_directions: 1,
            gamma_steps: 1,
            ..Budgets::default()
        };
        match build_irregular_manifold(&spec, &anchors(), 3, &thresholds(), &budgets, None, 0) {
            Err(ManifoldError::SearchExhausted { level, partial }) => {
                assert_eq!(partial.levels.len(), level - 1);
                assert!(matches!(
                    partial.status,
                    LedgerStatus::BudgetExhausted { .. }
                ));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn depth_zero_rejected() {
        let err = build_irregular_manifold(
            &cubic_shift(),
            &anchors(),
            0,
            &thresholds(),
            &Budgets::default(),
            None,
            0,
        );
        assert!(matches!(
            err,
            Err(ManifoldError::Core(Error::InvalidArgument(_)))
        ));
    }
}
