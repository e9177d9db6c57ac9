//! Finite-horizon classifiers: pair and vector taxonomy, the
//! sensitivity/equicontinuity dichotomy, structural checks on the sequence and
//! the mean Li-Yorke chaos criterion.
//!
//! Every verdict is evidence at the stated horizon. Dip and asymptotic tests
//! look at the final decade `[horizon/10, horizon]` of checkpoints so that
//! early transients (such as `T_1 = O`) do not count as dips.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cesaro::{self, CesaroTrace, Checkpoint, CheckpointRule, Witness};
use crate::error::{Error, Result};
use crate::operator::{OperatorKind, OperatorSequenceSpec};
use crate::schedules::BlockOp;
use crate::vector::{Space, Vector};
use crate::weights::WeightSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub eps_dip: f64,
    pub delta: f64,
    pub m_peak: f64,
    #[serde(with = "crate::serde_dec")]
    pub horizon: u128,
    pub k_growth: u32,
}

impl Thresholds {
    pub fn new(
        eps_dip: f64,
        delta: f64,
        m_peak: f64,
        horizon: u128,
        k_growth: u32,
    ) -> Result<Self> {
        let t = Thresholds {
            eps_dip,
            delta,
            m_peak,
            horizon,
            k_growth,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.eps_dip, self.delta, self.m_peak]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !finite {
            return Err(Error::invalid("thresholds must be positive and finite"));
        }
        if !(self.eps_dip < self.delta && self.delta <= self.m_peak) {
            return Err(Error::invalid(
                "thresholds must satisfy eps_dip < delta <= m_peak",
            ));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(())
    }

    pub fn with_horizon(mut self, horizon: u128) -> Self {
        self.horizon = horizon;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    MeanAsymptoticAtHorizon,
    MeanProximalAtHorizon,
    LiYorkeDelta,
    ExtremeAtHorizon,
    SemiIrregularAtHorizon,
    IrregularAtHorizon,
    #[serde(rename = "MS-witness")]
    MsWitness,
    #[serde(rename = "ME-evidence")]
    MeEvidence,
    Positive,
    Negative,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("verdict serializes");
        write!(f, "{}", s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Subject {
    Sequence,
    Pair { x: Vector, y: Vector },
    Vector { x: Vector },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessRecord {
    pub kind: String,
    #[serde(with = "crate::serde_dec")]
    pub n: u128,
    pub value: f64,
}

impl WitnessRecord {
    fn new(kind: &str, w: Witness) -> Self {
        WitnessRecord {
            kind: kind.to_string(),
            n: w.n,
            value: w.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub subject: Subject,
    pub verdicts: Vec<Verdict>,
    pub witnesses: Vec<WitnessRecord>,
    pub thresholds: Thresholds,
    #[serde(with = "crate::serde_dec")]
    pub horizon: u128,
    pub seed: u64,
    pub spec: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ClassificationReport {
    fn new(spec: &OperatorSequenceSpec, subject: Subject, t: &Thresholds) -> Self {
        ClassificationReport {
            subject,
            verdicts: Vec::new(),
            witnesses: Vec::new(),
            thresholds: *t,
            horizon: t.horizon,
            seed: 0,
            spec: spec.label.clone(),
            c_hat: None,
            notes: Vec::new(),
        }
    }

    pub fn has(&self, v: Verdict) -> bool {
        self.verdicts.contains(&v)
    }
}

/// Trace with the default checkpoint rule, falling back to the stream engine
/// when the norm profile has no block structure.
pub fn evaluate(spec: &OperatorSequenceSpec, x: &Vector, horizon: u128) -> Result<CesaroTrace> {
    cesaro::trace(spec, x, horizon, &CheckpointRule::default())
}

fn min_of<'a>(cps: impl IntoIterator<Item = &'a Checkpoint>) -> Option<Witness> {
    cps.into_iter()
        .map(|c| Witness {
            n: c.n,
            value: c.avg,
        })
        .fold(None, |best: Option<Witness>, w| match best {
            Some(b) if b.value <= w.value => Some(b),
            _ => Some(w),
        })
}

fn max_of<'a>(cps: impl IntoIterator<Item = &'a Checkpoint>) -> Option<Witness> {
    cps.into_iter()
        .map(|c| Witness {
            n: c.n,
            value: c.avg,
        })
        .fold(None, |best: Option<Witness>, w| match best {
            Some(b) if b.value >= w.value => Some(b),
            _ => Some(w),
        })
}

/// Final-decade minimum and maximum of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSummary {
    pub min: Witness,
    pub max: Witness,
}

pub fn tail_summary(trace: &CesaroTrace) -> TailSummary {
    let tail = trace.final_decade();
    TailSummary {
        min: min_of(tail).expect("final decade holds the horizon"),
        max: max_of(tail).expect("final decade holds the horizon"),
    }
}

fn pair_verdicts(trace: &CesaroTrace, t: &Thresholds, report: &mut ClassificationReport) {
    let s = tail_summary(trace);
    report.witnesses.push(WitnessRecord::new("tail_min", s.min));
    report.witnesses.push(WitnessRecord::new("tail_max", s.max));
    if s.max.value < t.eps_dip {
        report.verdicts.push(Verdict::MeanAsymptoticAtHorizon);
    }
    if s.min.value < t.eps_dip {
        report.verdicts.push(Verdict::MeanProximalAtHorizon);
        report.witnesses.push(WitnessRecord::new("dip", s.min));
        let asymptotic = s.max.value < t.eps_dip;
        if !asymptotic && s.max.value >= t.delta {
            report.verdicts.push(Verdict::LiYorkeDelta);
            report.witnesses.push(WitnessRecord::new("peak", s.max));
        }
        if !asymptotic && s.max.value >= t.m_peak {
            report.verdicts.push(Verdict::ExtremeAtHorizon);
        }
    }
}

/// Pair taxonomy through the trace of `x − y`.
pub fn classify_pair(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    y: &Vector,
    t: &Thresholds,
) -> Result<ClassificationReport> {
    t.validate()?;
    let d = x.sub(y)?;
    if d.is_zero() {
        return Err(Error::DegeneratePair);
    }
    let trace = evaluate(spec, &d, t.horizon)?;
    let mut report = ClassificationReport::new(
        spec,
        Subject::Pair {
            x: x.clone(),
            y: y.clone(),
        },
        t,
    );
    pair_verdicts(&trace, t, &mut report);
    Ok(report)
}

pub fn detect_irregular_vector(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    t: &Thresholds,
) -> Result<ClassificationReport> {
    t.validate()?;
    if x.is_zero() {
        return Err(Error::ZeroVector);
    }
    let trace = evaluate(spec, x, t.horizon)?;
    let s = tail_summary(&trace);
    let mut report = ClassificationReport::new(spec, Subject::Vector { x: x.clone() }, t);
    report.witnesses.push(WitnessRecord::new("tail_min", s.min));
    report.witnesses.push(WitnessRecord::new("tail_max", s.max));
    if s.min.value < t.eps_dip {
        if s.max.value > t.delta {
            report.verdicts.push(Verdict::SemiIrregularAtHorizon);
        }
        if s.max.value > t.m_peak {
            report.verdicts.push(Verdict::IrregularAtHorizon);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcbEstimate {
    pub c_hat: f64,
    pub sample: usize,
    #[serde(with = "crate::serde_dec")]
    pub n: u128,
}

/// `max A_n(x)/‖x‖` over the samples and the default checkpoints.
pub fn estimate_acb_constant(
    spec: &OperatorSequenceSpec,
    samples: &[Vector],
    horizon: u128,
) -> Result<AcbEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut best: Option<AcbEstimate> = None;
    for (k, x) in samples.iter().enumerate() {
        if x.is_zero() {
            return Err(Error::ZeroVector);
        }
        let trace = evaluate(spec, x, horizon)?;
        let xn = x.norm();
        for c in &trace.checkpoints {
            let r = c.avg / xn;
            if best.as_ref().is_none_or(|b| r > b.c_hat) {
                best = Some(AcbEstimate {
                    c_hat: r,
                    sample: k,
                    n: c.n,
                });
            }
        }
    }
    Ok(best.expect("samples are non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityWitness {
    pub candidate: usize,
    pub vector: Vector,
    /// Checkpoint of the largest normalized average.
    #[serde(with = "crate::serde_dec")]
    pub n: u128,
    /// `A_n(y)/‖y‖` at `n`.
    pub value: f64,
    /// First checkpoint where the normalized average exceeds `m_peak`.
    #[serde(with = "crate::serde_dec")]
    pub first_crossing: u128,
}

/// First candidate whose normalized averages exceed `m_peak`.
pub fn mean_sensitivity_witness(
    spec: &OperatorSequenceSpec,
    candidates: &[Vector],
    t: &Thresholds,
) -> Result<Option<SensitivityWitness>> {
    for (k, y) in candidates.iter().enumerate() {
        if y.is_zero() {
            continue;
        }
        let trace = evaluate(spec, y, t.horizon)?;
        let yn = y.norm();
        let first = trace.checkpoints.iter().find(|c| c.avg / yn > t.m_peak);
        if let Some(first) = first {
            let peak = max_of(&trace.checkpoints).expect("non-empty trace");
            return Ok(Some(SensitivityWitness {
                candidate: k,
                vector: y.clone(),
                n: peak.n,
                value: peak.value / yn,
                first_crossing: first.n,
            }));
        }
    }
    Ok(None)
}

/// `y = x + (ε / 2‖x₀‖)·x₀`, so that `‖x − y‖ = ε/2`.
pub fn irregularize(x: &Vector, x0: &Vector, eps: f64) -> Result<Vector> {
    if x0.is_zero() {
        return Err(Error::ZeroDirection);
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    x.combine(1.0, x0, eps / (2.0 * x0.norm()))
}

/// Exactly one of `MS-witness` / `ME-evidence`.
pub fn dichotomy_report(
    spec: &OperatorSequenceSpec,
    samples: &[Vector],
    t: &Thresholds,
) -> Result<ClassificationReport> {
    t.validate()?;
    let mut report = ClassificationReport::new(spec, Subject::Sequence, t);
    match mean_sensitivity_witness(spec, samples, t)? {
        Some(w) => {
            report.verdicts.push(Verdict::MsWitness);
            report.witnesses.push(WitnessRecord {
                kind: "ms_peak".into(),
                n: w.n,
                value: w.value,
            });
            report.witnesses.push(WitnessRecord {
                kind: "ms_first_crossing".into(),
                n: w.first_crossing,
                value: t.m_peak,
            });
            report.notes.push(format!("witness vector {}", w.vector));
        }
        None => {
            let acb = estimate_acb_constant(spec, samples, t.horizon)?;
            report.verdicts.push(Verdict::MeEvidence);
            report.c_hat = Some(acb.c_hat);
            report.witnesses.push(WitnessRecord {
                kind: "acb_max".into(),
                n: acb.n,
                value: acb.c_hat,
            });
            report
                .notes
                .push(format!("maximizing sample {}", samples[acb.sample]));
        }
    }
    Ok(report)
}

/// Sample vectors used when none are supplied: `1` on the line, the basis in
/// finite dimension, and on ℓ¹ a few low basis vectors plus `e_{j+1}` at the
/// last index `j` of every scaled block of the weights.
pub fn default_samples(spec: &OperatorSequenceSpec, horizon: u128) -> Result<Vec<Vector>> {
    match spec.space {
        Space::RealLine => Ok(vec![Vector::real(1.0)?]),
        Space::RealFiniteDim(d) => (1..=d as u128)
            .map(|j| Vector::basis(spec.space, j))
            .collect(),
        Space::EllOne => {
            let mut idx: Vec<u128> = (2..=10).collect();
            let weights = match &spec.kind {
                OperatorKind::WeightedShiftPowers(w) => Some(w),
                _ => None,
            };
            match weights {
                Some(WeightSequence::FromBlockSchedule { schedule, .. }) => {
                    idx.extend(
                        schedule
                            .blocks()
                            .iter()
                            .filter(|b| b.op == BlockOp::Identity && b.end <= horizon + 1)
                            .map(|b| b.end),
                    );
                }
                Some(WeightSequence::PowerOfTwoSpike) => {
                    idx.extend(
                        (1..127)
                            .map(|n| (1u128 << n) + 1)
                            .filter(|&j| j <= horizon + 1),
                    );
                }
                _ => {}
            }
            idx.sort_unstable();
            idx.dedup();
            idx.into_iter()
                .map(|j| Vector::basis(Space::EllOne, j))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum SubmultiplicativeResult {
    /// Smallest constant consistent with every sampled triple.
    Bounded {
        c_min: f64,
        sample: usize,
        #[serde(with = "crate::serde_dec")]
        i: u128,
        #[serde(with = "crate::serde_dec")]
        m: u128,
    },
    /// `‖T_i T_m z‖ = 0` while `‖T_{i+m} z‖ > 0`: no finite constant exists.
    Violation {
        sample: usize,
        #[serde(with = "crate::serde_dec")]
        i: u128,
        #[serde(with = "crate::serde_dec")]
        m: u128,
        lhs: f64,
    },
    /// Every sampled triple was 0/0.
    Vacuous,
}

pub fn check_submultiplicative(
    spec: &OperatorSequenceSpec,
    samples: &[Vector],
    index_pairs: &[(u128, u128)],
) -> Result<SubmultiplicativeResult> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut best: Option<SubmultiplicativeResult> = None;
    let mut best_c = f64::NEG_INFINITY;
    for (k, z) in samples.iter().enumerate() {
        if z.is_zero() {
            return Err(Error::ZeroVector);
        }
        for &(i, m) in index_pairs {
            let sum = i
                .checked_add(m)
                .ok_or_else(|| Error::overflow("i + m exceeds 128 bits"))?;
            let lhs = spec.image_norm(sum, z)?;
            let rhs = spec.image_norm(i, &spec.apply(m, z)?)?;
            if rhs == 0.0 {
                if lhs > 0.0 {
                    return Ok(SubmultiplicativeResult::Violation {
                        sample: k,
                        i,
                        m,
                        lhs,
                    });
                }
                continue;
            }
            let c = lhs / rhs;
            if c > best_c {
                best_c = c;
                best = Some(SubmultiplicativeResult::Bounded {
                    c_min: c,
                    sample: k,
                    i,
                    m,
                });
            }
        }
    }
    Ok(best.unwrap_or(SubmultiplicativeResult::Vacuous))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "tol")]
pub enum CommuteVerdict {
    DecaysBelow(f64),
    PersistsAbove(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommuteProfile {
    #[serde(with = "crate::serde_dec")]
    pub k: u128,
    pub points: Vec<Witness>,
    pub tail_max: f64,
    pub verdict: CommuteVerdict,
}

/// `‖T_i T_k x − T_k T_i x‖` on a geometric grid (and its successors, so both
/// parities are sampled) up to `horizon`.
pub fn check_almost_commuting(
    spec: &OperatorSequenceSpec,
    x: &Vector,
    k: u128,
    horizon: u128,
    tol: f64,
) -> Result<CommuteProfile> {
    if k == 0 || k > horizon {
        return Err(Error::invalid("need 1 <= k <= horizon"));
    }
    let grid = CheckpointRule::Geometric(1.1).indices(horizon, None)?;
    let mut idx: Vec<u128> = grid
        .iter()
        .flat_map(|&n| [n, n + 1])
        .filter(|&n| n <= horizon)
        .collect();
    idx.sort_unstable();
    idx.dedup();
    let tkx = spec.apply(k, x)?;
    let points = idx
        .into_iter()
        .map(|i| {
            let a = spec.apply(i, &tkx)?;
            let b = spec.apply(k, &spec.apply(i, x)?)?;
            Ok(Witness {
                n: i,
                value: a.sub(&b)?.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lo = (horizon / 10).max(1);
    let tail_max = points
        .iter()
        .filter(|w| w.n >= lo)
        .map(|w| w.value)
        .fold(0.0, f64::max);
    let verdict = if tail_max < tol {
        CommuteVerdict::DecaysBelow(tol)
    } else {
        CommuteVerdict::PersistsAbove(tol)
    };
    Ok(CommuteProfile {
        k,
        points,
        tail_max,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantEntry {
    pub sample: usize,
    #[serde(with = "crate::serde_dec")]
    pub k: u128,
    /// Largest `A_N(x)` over the second half of the `N` sequence.
    pub base_tail_max: f64,
    /// Largest `A_N(T_k x)` over the same indices.
    pub image_tail_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub entries: Vec<InvariantEntry>,
    pub max_observed: f64,
    pub tol: f64,
    pub holds: bool,
}

pub fn verify_invariant_subspace(
    spec: &OperatorSequenceSpec,
    samples: &[Vector],
    n_sequence: &[u128],
    k_set: &[u128],
    tol: f64,
) -> Result<InvariantReport> {
    if n_sequence.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut ns = n_sequence.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let horizon = *ns.last().expect("non-empty");
    let tail_from = ns[ns.len() / 2];
    let rule = CheckpointRule::Explicit(ns.clone());
    let tail_max = |v: &Vector| -> Result<f64> {
        let t = cesaro::trace(spec, v, horizon, &rule)?;
        Ok(t.checkpoints
            .iter()
            .filter(|c| ns.binary_search(&c.n).is_ok() && c.n >= tail_from)
            .map(|c| c.avg)
            .fold(0.0, f64::max))
    };
    let mut entries = Vec::new();
    for (s, x) in samples.iter().enumerate() {
        let base = tail_max(x)?;
        for &k in k_set {
            let image = spec.apply(k, x)?;
            entries.push(InvariantEntry {
                sample: s,
                k,
                base_tail_max: base,
                image_tail_max: tail_max(&image)?,
            });
        }
    }
    let max_observed = entries.iter().map(|e| e.image_tail_max).fold(0.0, f64::max);
    Ok(InvariantReport {
        entries,
        max_observed,
        tol,
        holds: max_observed < tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthWitness {
    pub k: u32,
    /// Coefficients on the samples.
    pub coeffs: Vec<f64>,
    #[serde(with = "crate::serde_dec")]
    pub n: u128,
    /// `A_n(y) / ‖y‖`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub verdict: Verdict,
    /// Final-decade minimum per sample, when below `eps_dip`.
    pub dips: Vec<Option<Witness>>,
    pub growth: Vec<GrowthWitness>,
    pub missing_k: Vec<u32>,
    pub candidates_searched: usize,
    pub thresholds: Thresholds,
    pub seed: u64,
}

/// Number of random combinations tried after the samples and pairwise sums.
pub const RANDOM_COMBINATIONS: usize = 200;

pub fn mly_criterion_check(
    spec: &OperatorSequenceSpec,
    x0: &[Vector],
    t: &Thresholds,
    seed: u64,
) -> Result<CriterionReport> {
    t.validate()?;
    if x0.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut dips = Vec::with_capacity(x0.len());
    for x in x0 {
        let trace = evaluate(spec, x, t.horizon)?;
        let s = tail_summary(&trace);
        dips.push((s.min.value < t.eps_dip).then_some(s.min));
    }

    let d = x0.len();
    let mut combos: Vec<Vec<f64>> = Vec::new();
    for a in 0..d {
        let mut c = vec![0.0; d];
        c[a] = 1.0;
        combos.push(c);
    }
    for a in 0..d {
        for b in a + 1..d {
            for sign in [1.0, -1.0] {
                let mut c = vec![0.0; d];
                c[a] = 1.0;
                c[b] = sign;
                combos.push(c);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_COMBINATIONS {
        let mut c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            c.iter_mut().for_each(|v| *v /= norm);
        }
        combos.push(c);
    }

    let mut growth: Vec<GrowthWitness> = Vec::new();
    let mut k_next = 1u32;
    let mut searched = 0usize;
    for c in &combos {
        if k_next > t.k_growth {
            break;
        }
        let y = Vector::linear_combination(c, x0)?;
        searched += 1;
        if y.is_zero() {
            continue;
        }
        let trace = evaluate(spec, &y, t.horizon)?;
        let yn = y.norm();
        let best = max_of(&trace.checkpoints).expect("non-empty trace");
        let ratio = best.value / yn;
        while k_next <= t.k_growth && ratio >= k_next as f64 {
            growth.push(GrowthWitness {
                k: k_next,
                coeffs: c.clone(),
                n: best.n,
                ratio,
            });
            k_next += 1;
        }
    }
    let missing_k: Vec<u32> = (k_next..=t.k_growth).collect();
    let positive = dips.iter().all(Option::is_some) && missing_k.is_empty();
    Ok(CriterionReport {
        verdict: if positive {
            Verdict::Positive
        } else {
            Verdict::Negative
        },
        dips,
        growth,
        missing_k,
        candidates_searched: searched,
        thresholds: *t,
        seed,
    })
}
