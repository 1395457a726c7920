//! Quantile curves of pseudo-gaps, the finite-sample correction, calibrated
//! summaries, new-scenario sets and the two-sided band.

use serde::{Deserialize, Serialize};

use crate::discrepancy::{compute_pseudo_gaps, GapMode, PseudoGap, SolverSettings};
use crate::domain::{evaluate_loss, kl_bernoulli, Dataset, LossSpec, ParamPoint};
use crate::error::{Error, Result};

/// Sorted sample `x_(1) <= ... <= x_(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileCurve {
    values: Vec<f64>,
}

impl QuantileCurve {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyCurve);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in quantile curve".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn from_upper(gaps: &[PseudoGap]) -> Result<Self> {
        Self::new(gaps.iter().map(|g| g.upper).collect())
    }

    pub fn from_lower(gaps: &[PseudoGap]) -> Result<Self> {
        Self::new(gaps.iter().map(|g| g.lower).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for QuantileCurve {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileCurve> for Vec<f64> {
    fn from(c: QuantileCurve) -> Self {
        c.values
    }
}

/// `ceil(m * level)`, snapping products within 1e-9 of an integer so that
/// grid levels like `0.3` at `m = 10` land on index 3 rather than 4.
fn ceil_index(m: usize, level: f64) -> usize {
    let x = m as f64 * level;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 { r } else { x.ceil() };
    k as usize
}

/// 1-based order-statistic index of the `alpha`-quantile, clamped to `[1, m]`.
pub fn quantile_index(m: usize, alpha: f64) -> usize {
    ceil_index(m, alpha).clamp(1, m)
}

/// `x_(ceil(m alpha))`.
pub fn empirical_quantile(curve: &QuantileCurve, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(curve.values[quantile_index(curve.len(), alpha) - 1])
}

/// Finite-sample remainder
/// `sqrt(2 a L + (L^2 + 4L)/m) + (L + 2)/sqrt(m) + sqrt(ln(4/eta)/2)`
/// with `L = ln(2m/eta)`.
pub fn epsilon_correction(alpha: f64, m: usize, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidEta(eta));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let mf = m as f64;
    let l = (2.0 * mf / eta).ln();
    let first = (2.0 * alpha * l + (l * l + 4.0 * l) / mf).sqrt();
    let second = (l + 2.0) / mf.sqrt();
    let third = ((4.0 / eta).ln() / 2.0).sqrt();
    Ok(first + second + third)
}

/// Coverage guarantee of the threshold `V(1 - alpha/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub alpha: f64,
    pub threshold: f64,
    pub epsilon: f64,
    /// `1 - alpha - epsilon / sqrt(m)`, possibly negative.
    pub raw: f64,
    pub clamped: f64,
    pub vacuous: bool,
}

pub fn guaranteed_coverage(curve: &QuantileCurve, alpha: f64, eta: f64) -> Result<Coverage> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let m = curve.len();
    let epsilon = epsilon_correction(alpha, m, eta)?;
    let raw = 1.0 - alpha - epsilon / (m as f64).sqrt();
    Ok(Coverage {
        alpha,
        threshold: empirical_quantile(curve, 1.0 - alpha / 2.0)?,
        epsilon,
        raw,
        clamped: raw.clamp(0.0, 1.0),
        vacuous: raw <= 0.0,
    })
}

/// `V((1 + tau) / 2)`.
pub fn calibrated_curve(curve: &QuantileCurve, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::AlphaOutOfRange(tau));
    }
    empirical_quantile(curve, (1.0 + tau) / 2.0)
}

/// Exact integral of the calibrated step curve over `[a, b]`.
///
/// Order statistic `i` is selected on `tau in (2(i-1)/m - 1, 2i/m - 1]`.
pub fn integrate_calibrated(curve: &QuantileCurve, a: f64, b: f64) -> f64 {
    let m = curve.len() as f64;
    let first = ceil_index(curve.len(), 0.5).max(1);
    let mut total = 0.0;
    for (idx, &v) in curve.values.iter().enumerate().skip(first - 1) {
        let i = (idx + 1) as f64;
        let lo = (2.0 * (i - 1.0) / m - 1.0).max(a);
        let hi = (2.0 * i / m - 1.0).min(b);
        if hi > lo {
            total += v * (hi - lo);
        }
    }
    total
}

/// `int_0^1 V_cal(tau) d tau`.
pub fn auc_cal(curve: &QuantileCurve) -> f64 {
    integrate_calibrated(curve, 0.0, 1.0)
}

/// `(1/alpha) int_{1-alpha}^1 V_cal(tau) d tau`.
pub fn cvar_cal(curve: &QuantileCurve, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(integrate_calibrated(curve, 1.0 - alpha, 1.0) / alpha)
}

/// `{u : L(u, q_hat) <= tau}` in closed form where one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Scalar or two-category set; for simplices the bounds are on `u_0`.
    Interval { lo: f64, hi: f64 },
    /// Simplex set described only by membership.
    LossBall { center: Vec<f64>, radius: f64 },
    /// Wasserstein-1 ball around an empirical distribution.
    W1Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewScenarioSet {
    pub alpha_bar: f64,
    pub threshold: f64,
    pub q_hat: ParamPoint,
    pub loss: LossSpec,
    pub region: Region,
}

impl NewScenarioSet {
    pub fn contains(&self, u: &ParamPoint) -> Result<bool> {
        Ok(evaluate_loss(&self.loss, u, &self.q_hat)? <= self.threshold)
    }
}

/// Roots of `KL((u, 1-u) || (q, 1-q)) = t` on either side of `q`, taken
/// from inside so the returned interval lies within the set.
fn kl_level_interval(q: f64, t: f64, smoothing: f64) -> (f64, f64) {
    let s = |x: f64| (x + smoothing) / (1.0 + 2.0 * smoothing);
    let f = |u: f64| kl_bernoulli(s(u), s(q));
    let root = |inside: f64, outside: f64| {
        if f(outside) <= t {
            return outside;
        }
        let (mut a, mut b) = (inside, outside);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if f(mid) <= t {
                a = mid;
            } else {
                b = mid;
            }
            if (a - b).abs() < 1e-14 {
                break;
            }
        }
        a
    };
    (root(q, 0.0), root(q, 1.0))
}

pub fn new_scenario_set(curve: &QuantileCurve, q_hat: &ParamPoint, alpha_bar: f64, loss: &LossSpec) -> Result<NewScenarioSet> {
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha_bar));
    }
    if !loss.accepts(q_hat) {
        return Err(loss.incompatible(q_hat));
    }
    let t = empirical_quantile(curve, 1.0 - alpha_bar / 2.0)?.max(0.0);
    let region = match (q_hat, loss) {
        (ParamPoint::BoundedScalar { point }, _) => {
            let w = if *loss == LossSpec::SquaredError { t.sqrt() } else { t };
            let (a, b) = point.domain();
            Region::Interval {
                lo: (point.value() - w).max(a),
                hi: (point.value() + w).min(b),
            }
        }
        (ParamPoint::Simplex { probs }, LossSpec::TotalVariation) if probs.dim() == 2 => {
            let q = probs.probs()[0];
            Region::Interval {
                lo: (q - t).max(0.0),
                hi: (q + t).min(1.0),
            }
        }
        (ParamPoint::Simplex { probs }, LossSpec::Kl { smoothing }) if probs.dim() == 2 => {
            let (lo, hi) = kl_level_interval(probs.probs()[0], t, *smoothing);
            Region::Interval { lo, hi }
        }
        (ParamPoint::Simplex { probs }, _) => Region::LossBall {
            center: probs.probs().to_vec(),
            radius: t,
        },
        (ParamPoint::Empirical1D { dist }, _) => Region::W1Ball {
            center: dist.samples().to_vec(),
            radius: t,
        },
    };
    Ok(NewScenarioSet {
        alpha_bar,
        threshold: t,
        q_hat: q_hat.clone(),
        loss: *loss,
        region,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub tau: f64,
    pub lo: f64,
    pub hi: f64,
    /// `gamma * tau` fell below the first order statistic; `lo` is the minimum.
    pub lo_at_minimum: bool,
}

/// `(V_lower(gamma tau), V_upper(gamma + (1 - gamma) tau))`. The upper side
/// carries an asymptotically vanishing term and widens near the ends.
pub fn band(upper: &QuantileCurve, lower: &QuantileCurve, gamma: f64, tau: f64) -> Result<BandPoint> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::AlphaOutOfRange(tau));
    }
    let lo_level = gamma * tau;
    let lo_at_minimum = ceil_index(lower.len(), lo_level) == 0;
    let lo = if lo_at_minimum {
        lower.min()
    } else {
        empirical_quantile(lower, lo_level)?
    };
    let hi = empirical_quantile(upper, gamma + (1.0 - gamma) * tau)?;
    Ok(BandPoint {
        tau,
        lo,
        hi,
        lo_at_minimum,
    })
}

/// `{0.01, 0.02, ..., 0.99}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub gamma: f64,
    pub eta: f64,
    pub loss: LossSpec,
    pub mode: GapMode,
    pub alpha_grid: Vec<f64>,
    pub cvar_levels: Vec<f64>,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            eta: 0.05,
            loss: LossSpec::SquaredError,
            mode: GapMode::SimEstimateTarget,
            alpha_grid: default_alpha_grid(),
            cvar_levels: vec![0.1, 0.25, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvarEntry {
    pub alpha: f64,
    pub cvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub m: usize,
    pub params: CalibrationParams,
    pub gaps: Vec<PseudoGap>,
    pub curve: QuantileCurve,
    pub lower_curve: QuantileCurve,
    pub coverage: Vec<Coverage>,
    pub auc_cal: f64,
    pub cvar_cal: Vec<CvarEntry>,
}

impl CalibrationReport {
    pub fn from_gaps(gaps: Vec<PseudoGap>, params: CalibrationParams) -> Result<Self> {
        let curve = QuantileCurve::from_upper(&gaps)?;
        let lower_curve = QuantileCurve::from_lower(&gaps)?;
        let coverage = params
            .alpha_grid
            .iter()
            .map(|&a| guaranteed_coverage(&curve, a, params.eta))
            .collect::<Result<Vec<_>>>()?;
        let cvar = params
            .cvar_levels
            .iter()
            .map(|&alpha| Ok(CvarEntry { alpha, cvar: cvar_cal(&curve, alpha)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            m: curve.len(),
            auc_cal: auc_cal(&curve),
            cvar_cal: cvar,
            params,
            gaps,
            curve,
            lower_curve,
            coverage,
        })
    }

    /// `V(1 - alpha/2)`.
    pub fn threshold(&self, alpha: f64) -> Result<f64> {
        empirical_quantile(&self.curve, 1.0 - alpha / 2.0)
    }
}

/// Pseudo-gaps, curves, coverage table and summaries for a dataset.
pub fn calibrate(d: &Dataset, params: &CalibrationParams, settings: &SolverSettings) -> Result<CalibrationReport> {
    if !(params.gamma > 0.0 && params.gamma < 1.0) {
        return Err(Error::InvalidGamma(params.gamma));
    }
    epsilon_correction(0.5, 1, params.eta)?;
    let gaps = compute_pseudo_gaps(d, params.gamma, &params.loss, params.mode, settings)?;
    CalibrationReport::from_gaps(gaps, params.clone())
}
