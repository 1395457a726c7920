//! Value types shared across the crate: parameter points, losses, scenario
//! records and datasets.
//!
//! A scenario carries a ground-truth estimate `p_hat` built from `n` real
//! observations and one or two simulator estimates built from `k` simulator
//! draws. All three live in the same parameter space, represented by
//! [`ParamPoint`].

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the simplex normalisation constraint.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector with at least two categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidPoint(format!(
                "simplex needs at least 2 categories, got {}",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidPoint(format!(
                "simplex component {bad} outside [0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidPoint(format!(
                "simplex components sum to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Two-category point `(p, 1 - p)`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(vec![p, 1.0 - p])
    }

    /// Normalised histogram of category counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidPoint("all category counts are zero".into()));
        }
        let t = total as f64;
        Self::new(counts.iter().map(|&c| c as f64 / t).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for Simplex {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Simplex> for Vec<f64> {
    fn from(s: Simplex) -> Self {
        s.0
    }
}

/// A scalar outcome mean on a known bounded domain `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundedRepr", into = "BoundedRepr")]
pub struct BoundedScalar {
    value: f64,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
struct BoundedRepr {
    value: f64,
    domain: [f64; 2],
}

impl TryFrom<BoundedRepr> for BoundedScalar {
    type Error = Error;
    fn try_from(r: BoundedRepr) -> Result<Self> {
        Self::new(r.value, r.domain[0], r.domain[1])
    }
}

impl From<BoundedScalar> for BoundedRepr {
    fn from(b: BoundedScalar) -> Self {
        BoundedRepr {
            value: b.value,
            domain: [b.lo, b.hi],
        }
    }
}

impl BoundedScalar {
    pub fn new(value: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidPoint(format!("empty domain [{lo}, {hi}]")));
        }
        if !(lo..=hi).contains(&value) {
            return Err(Error::InvalidPoint(format!(
                "value {value} outside domain [{lo}, {hi}]"
            )));
        }
        Ok(Self { value, lo, hi })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// A one-dimensional empirical distribution, stored as sorted samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalRepr", into = "EmpiricalRepr")]
pub struct Empirical1D {
    samples: Vec<f64>,
    sigma: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmpiricalRepr {
    samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

impl TryFrom<EmpiricalRepr> for Empirical1D {
    type Error = Error;
    fn try_from(r: EmpiricalRepr) -> Result<Self> {
        Self::new(r.samples, r.sigma)
    }
}

impl From<Empirical1D> for EmpiricalRepr {
    fn from(e: Empirical1D) -> Self {
        EmpiricalRepr {
            samples: e.samples,
            sigma: e.sigma,
        }
    }
}

impl Empirical1D {
    /// Builds the distribution; samples are sorted here, so callers may pass
    /// them in any order.
    pub fn new(mut samples: Vec<f64>, sigma: Option<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidPoint("empirical distribution has no samples".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("non-finite sample".into()));
        }
        if let Some(s) = sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NonpositiveSigma);
            }
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, sigma })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::NonpositiveSigma);
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// A point of the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ParamPoint {
    Simplex { probs: Simplex },
    BoundedScalar { point: BoundedScalar },
    Empirical1D { dist: Empirical1D },
}

impl From<Simplex> for ParamPoint {
    fn from(probs: Simplex) -> Self {
        ParamPoint::Simplex { probs }
    }
}

impl From<BoundedScalar> for ParamPoint {
    fn from(point: BoundedScalar) -> Self {
        ParamPoint::BoundedScalar { point }
    }
}

impl From<Empirical1D> for ParamPoint {
    fn from(dist: Empirical1D) -> Self {
        ParamPoint::Empirical1D { dist }
    }
}

impl ParamPoint {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ParamPoint::Simplex { .. } => "simplex",
            ParamPoint::BoundedScalar { .. } => "bounded-scalar",
            ParamPoint::Empirical1D { .. } => "empirical-1d",
        }
    }

    pub fn same_variant(&self, other: &ParamPoint) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    /// Same variant and same dimension (simplex) or domain (bounded scalar).
    pub fn compatible_with(&self, other: &ParamPoint) -> bool {
        match (self, other) {
            (ParamPoint::Simplex { probs: a }, ParamPoint::Simplex { probs: b }) => a.dim() == b.dim(),
            (ParamPoint::BoundedScalar { point: a }, ParamPoint::BoundedScalar { point: b }) => {
                a.domain() == b.domain()
            }
            (ParamPoint::Empirical1D { .. }, ParamPoint::Empirical1D { .. }) => true,
            _ => false,
        }
    }

    pub fn as_simplex(&self) -> Option<&Simplex> {
        match self {
            ParamPoint::Simplex { probs } => Some(probs),
            _ => None,
        }
    }

    pub fn as_bounded(&self) -> Option<&BoundedScalar> {
        match self {
            ParamPoint::BoundedScalar { point } => Some(point),
            _ => None,
        }
    }

    pub fn as_empirical(&self) -> Option<&Empirical1D> {
        match self {
            ParamPoint::Empirical1D { dist } => Some(dist),
            _ => None,
        }
    }
}

/// Discrepancy function `L(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    SquaredError,
    AbsoluteError,
    /// `KL(u || v)`; a positive `smoothing` maps both arguments through
    /// `x -> (x + s) / (1 + d s)` before evaluation.
    Kl { smoothing: f64 },
    TotalVariation,
    Wasserstein1,
}

impl LossSpec {
    pub fn id(&self) -> &'static str {
        match self {
            LossSpec::SquaredError => "squared",
            LossSpec::AbsoluteError => "absolute",
            LossSpec::Kl { .. } => "kl",
            LossSpec::TotalVariation => "tv",
            LossSpec::Wasserstein1 => "w1",
        }
    }

    pub fn accepts(&self, point: &ParamPoint) -> bool {
        matches!(
            (self, point),
            (LossSpec::SquaredError | LossSpec::AbsoluteError, ParamPoint::BoundedScalar { .. })
                | (LossSpec::Kl { .. } | LossSpec::TotalVariation, ParamPoint::Simplex { .. })
                | (LossSpec::Wasserstein1, ParamPoint::Empirical1D { .. })
        )
    }

    /// The natural loss for a parameter variant.
    pub fn default_for(point: &ParamPoint) -> Self {
        match point {
            ParamPoint::Simplex { .. } => LossSpec::Kl { smoothing: 0.0 },
            ParamPoint::BoundedScalar { .. } => LossSpec::SquaredError,
            ParamPoint::Empirical1D { .. } => LossSpec::Wasserstein1,
        }
    }

    pub(crate) fn incompatible(&self, point: &ParamPoint) -> Error {
        Error::IncompatibleVariant {
            loss: self.id().to_string(),
            point: point.variant_name().to_string(),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Kl { smoothing } if *smoothing > 0.0 => write!(f, "kl(smoothing={smoothing})"),
            other => f.write_str(other.id()),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Parses `squared`, `absolute`, `kl`, `tv` or `w1`; KL smoothing is set
    /// separately.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squared" | "squared_error" | "squared-error" => Ok(LossSpec::SquaredError),
            "absolute" | "absolute_error" | "absolute-error" => Ok(LossSpec::AbsoluteError),
            "kl" => Ok(LossSpec::Kl { smoothing: 0.0 }),
            "tv" | "total_variation" | "total-variation" => Ok(LossSpec::TotalVariation),
            "w1" | "wasserstein1" | "wasserstein-1" => Ok(LossSpec::Wasserstein1),
            other => Err(Error::InvalidParameter(format!("unknown loss `{other}`"))),
        }
    }
}

/// Smoothing map applied to both KL arguments.
pub fn smooth(probs: &[f64], smoothing: f64) -> Vec<f64> {
    let d = probs.len() as f64;
    probs.iter().map(|&x| (x + smoothing) / (1.0 + d * smoothing)).collect()
}

/// `KL(u || v)` with `0 log(0 / .) = 0`.
pub fn kl_divergence(u: &[f64], v: &[f64]) -> Result<f64> {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = 0.0;
    for (i, (&a, &b)) in u.iter().zip(v).enumerate() {
        if a <= 0.0 {
            continue;
        }
        if b <= 0.0 {
            return Err(Error::KlUndefined { index: i });
        }
        acc += a * (a / b).ln();
    }
    // Rounding can push KL(u || u) a hair below zero.
    Ok(acc.max(0.0))
}

/// Bernoulli KL `KL(a || b)`; `+inf` when undefined.
pub fn kl_bernoulli(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| -> f64 {
        if x <= 0.0 {
            0.0
        } else if y <= 0.0 {
            f64::INFINITY
        } else {
            x * (x / y).ln()
        }
    };
    (term(a, b) + term(1.0 - a, 1.0 - b)).max(0.0)
}

pub fn total_variation(u: &[f64], v: &[f64]) -> f64 {
    0.5 * u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Exact 1-Wasserstein distance between two sorted samples, as the integral
/// of the absolute difference of their quantile functions.
pub fn wasserstein1_sorted(x: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (x.len(), y.len());
    assert!(n > 0 && m > 0, "empty sample");
    let (mut i, mut j) = (0usize, 0usize);
    let mut acc = 0.0;
    let mut prev = 0.0;
    // Breakpoints (i+1)/n and (j+1)/m compared in integer arithmetic.
    while i < n && j < m {
        let a = (i + 1) * m;
        let b = (j + 1) * n;
        let next = if a <= b { (i + 1) as f64 / n as f64 } else { (j + 1) as f64 / m as f64 };
        acc += (next - prev) * (x[i] - y[j]).abs();
        prev = next;
        if a <= b {
            i += 1;
        }
        if b <= a {
            j += 1;
        }
    }
    acc
}

/// Evaluates `L(u, v)`.
pub fn evaluate_loss(loss: &LossSpec, u: &ParamPoint, v: &ParamPoint) -> Result<f64> {
    if !loss.accepts(u) {
        return Err(loss.incompatible(u));
    }
    if !loss.accepts(v) || !u.compatible_with(v) {
        return Err(loss.incompatible(v));
    }
    match (loss, u, v) {
        (LossSpec::SquaredError, ParamPoint::BoundedScalar { point: a }, ParamPoint::BoundedScalar { point: b }) => {
            Ok((a.value() - b.value()).powi(2))
        }
        (LossSpec::AbsoluteError, ParamPoint::BoundedScalar { point: a }, ParamPoint::BoundedScalar { point: b }) => {
            Ok((a.value() - b.value()).abs())
        }
        (LossSpec::Kl { smoothing }, ParamPoint::Simplex { probs: a }, ParamPoint::Simplex { probs: b }) => {
            kl_probs(a.probs(), b.probs(), *smoothing)
        }
        (LossSpec::TotalVariation, ParamPoint::Simplex { probs: a }, ParamPoint::Simplex { probs: b }) => {
            Ok(total_variation(a.probs(), b.probs()))
        }
        (LossSpec::Wasserstein1, ParamPoint::Empirical1D { dist: a }, ParamPoint::Empirical1D { dist: b }) => {
            Ok(wasserstein1_sorted(a.samples(), b.samples()))
        }
        _ => unreachable!("loss/point compatibility checked above"),
    }
}

/// KL on raw probability slices with optional smoothing of both sides.
pub(crate) fn kl_probs(u: &[f64], v: &[f64], smoothing: f64) -> Result<f64> {
    if smoothing > 0.0 {
        kl_divergence(&smooth(u, smoothing), &smooth(v, smoothing))
    } else {
        kl_divergence(u, v)
    }
}

/// One scenario `(id, p_hat, n, q_hat, q_hat_2, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario_id: String,
    pub p_hat: ParamPoint,
    pub n: u64,
    pub q_hat: ParamPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_hat_2: Option<ParamPoint>,
    pub k: u64,
}

/// An ordered collection of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<ScenarioRecord>,
    /// Asserts that every record shares the first record's `k`.
    #[serde(default)]
    pub k_uniform: bool,
}

impl Dataset {
    pub fn new(records: Vec<ScenarioRecord>) -> Self {
        let k_uniform = records.windows(2).all(|w| w[0].k == w[1].k);
        Self { records, k_uniform }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Validates and returns the dataset, or every finding at once.
    pub fn validated(self) -> Result<Self> {
        let findings = validate_dataset(&self);
        if findings.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidDataset(findings))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    EmptyDataset,
    DuplicateId,
    MixedVariant,
    IncompatiblePoints,
    ZeroSampleCount,
    ZeroBudget,
    NonUniformBudget,
    RegimeWarning,
}

/// A violated dataset invariant, located by record index and id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub index: Option<usize>,
    pub scenario_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.index, &self.scenario_id) {
            (Some(i), Some(id)) => write!(f, "record {i} (`{id}`): {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// Lists every violated dataset invariant; empty when the dataset is valid.
pub fn validate_dataset(d: &Dataset) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut push = |kind, index: Option<usize>, rec: Option<&ScenarioRecord>, message: String| {
        findings.push(Finding {
            kind,
            index,
            scenario_id: rec.map(|r| r.scenario_id.clone()),
            message,
        })
    };

    let Some(first) = d.records.first() else {
        push(FindingKind::EmptyDataset, None, None, "dataset has no scenarios".into());
        return findings;
    };

    let mut seen = HashSet::new();
    let mut variant_reported = false;
    for (i, rec) in d.records.iter().enumerate() {
        if !seen.insert(rec.scenario_id.as_str()) {
            push(
                FindingKind::DuplicateId,
                Some(i),
                Some(rec),
                format!("duplicate scenario_id `{}`", rec.scenario_id),
            );
        }
        if !rec.p_hat.same_variant(&first.p_hat) && !variant_reported {
            variant_reported = true;
            push(
                FindingKind::MixedVariant,
                Some(i),
                Some(rec),
                format!(
                    "{} record in a dataset of {} records",
                    rec.p_hat.variant_name(),
                    first.p_hat.variant_name()
                ),
            );
        }
        let sims = std::iter::once(&rec.q_hat).chain(rec.q_hat_2.as_ref());
        for (which, q) in sims.enumerate() {
            if !rec.p_hat.compatible_with(q) {
                push(
                    FindingKind::IncompatiblePoints,
                    Some(i),
                    Some(rec),
                    format!(
                        "simulator {} estimate ({}) does not match p_hat ({})",
                        which + 1,
                        q.variant_name(),
                        rec.p_hat.variant_name()
                    ),
                );
            }
        }
        if rec.n == 0 {
            push(FindingKind::ZeroSampleCount, Some(i), Some(rec), "n must be at least 1".into());
        }
        if rec.k == 0 {
            push(FindingKind::ZeroBudget, Some(i), Some(rec), "k must be at least 1".into());
        }
        if d.k_uniform && rec.k != first.k {
            push(
                FindingKind::NonUniformBudget,
                Some(i),
                Some(rec),
                format!("k = {} differs from the uniform budget {}", rec.k, first.k),
            );
        }
    }
    findings
}
