//! Per-scenario confidence sets around a ground-truth estimate.
//!
//! Each family pairs a parameter variant with a concentration inequality:
//!
//! | variant        | family       | radius                                        |
//! |----------------|--------------|-----------------------------------------------|
//! | bounded scalar | `IntervalAbs`| `(b - a) sqrt(log(2/δ) / 2n)` (Hoeffding)     |
//! | simplex, d = 2 | `KlBall`     | `log(2/δ) / n` (Chernoff)                     |
//! | simplex, d > 2 | `KlBall`     | `(d-1)/n log(2(d-1)/δ)`                       |
//! | empirical 1D   | `W1Ball`     | `512σ/√n + σ sqrt(256e/n log(1/δ))`           |
//!
//! where `δ = 1 - γ` is the permitted failure probability, so each set
//! contains the true parameter with probability at least `γ`.

use serde::{Deserialize, Serialize};

use crate::domain::{
    kl_divergence, wasserstein1_sorted, Dataset, Finding, FindingKind, ParamPoint, ScenarioRecord,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetFamily {
    IntervalAbs,
    KlBall,
    W1Ball,
}

impl SetFamily {
    pub fn for_point(point: &ParamPoint) -> Self {
        match point {
            ParamPoint::BoundedScalar { .. } => SetFamily::IntervalAbs,
            ParamPoint::Simplex { .. } => SetFamily::KlBall,
            ParamPoint::Empirical1D { .. } => SetFamily::W1Ball,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SetFamily::IntervalAbs => "interval-abs",
            SetFamily::KlBall => "kl-ball",
            SetFamily::W1Ball => "w1-ball",
        }
    }
}

/// A region around `center` that holds the true parameter with probability
/// at least `gamma`.
///
/// For `KlBall` membership of `u` means `KL(center || u) <= radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub family: SetFamily,
    pub center: ParamPoint,
    pub radius: f64,
    pub gamma: f64,
    pub n: u64,
}

impl ConfidenceSet {
    /// A set with an explicit radius. The family is implied by the center.
    pub fn with_radius(center: ParamPoint, radius: f64, gamma: f64, n: u64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius {radius} must be finite and >= 0")));
        }
        Ok(Self {
            family: SetFamily::for_point(&center),
            center,
            radius,
            gamma,
            n,
        })
    }

    /// Membership predicate.
    pub fn contains(&self, u: &ParamPoint) -> bool {
        match (&self.center, u) {
            (ParamPoint::BoundedScalar { point: c }, ParamPoint::BoundedScalar { point: x }) => {
                (c.value() - x.value()).abs() <= self.radius
            }
            (ParamPoint::Simplex { probs: c }, ParamPoint::Simplex { probs: x }) if c.dim() == x.dim() => {
                kl_divergence(c.probs(), x.probs()).is_ok_and(|kl| kl <= self.radius)
            }
            (ParamPoint::Empirical1D { dist: c }, ParamPoint::Empirical1D { dist: x }) => {
                wasserstein1_sorted(c.samples(), x.samples()) <= self.radius
            }
            _ => false,
        }
    }

    /// Clipped interval `[max(a, c - r), min(b, c + r)]` for `IntervalAbs` sets.
    pub fn interval(&self) -> Option<(f64, f64)> {
        let c = self.center.as_bounded()?;
        let (a, b) = c.domain();
        Some(((c.value() - self.radius).max(a), (c.value() + self.radius).min(b)))
    }
}

fn check_gamma(gamma: f64) -> Result<f64> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(1.0 - gamma)
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

fn check_n(n: u64) -> Result<f64> {
    if n == 0 {
        Err(Error::InvalidParameter("sample size must be at least 1".into()))
    } else {
        Ok(n as f64)
    }
}

/// Hoeffding radius for a mean of outcomes bounded in `[a, b]`.
pub fn radius_bounded(n: u64, gamma: f64, a: f64, b: f64) -> Result<f64> {
    let fail = check_gamma(gamma)?;
    let n = check_n(n)?;
    if !(a < b) {
        return Err(Error::InvalidParameter(format!("empty domain [{a}, {b}]")));
    }
    Ok((b - a) * ((2.0 / fail).ln() / (2.0 * n)).sqrt())
}

/// KL radius for a Bernoulli proportion, in nats.
pub fn radius_bernoulli(n: u64, gamma: f64) -> Result<f64> {
    let fail = check_gamma(gamma)?;
    let n = check_n(n)?;
    Ok((2.0 / fail).ln() / n)
}

/// KL radius for a `d`-category histogram, in nats.
pub fn radius_multinomial(n: u64, d: usize, gamma: f64) -> Result<f64> {
    let fail = check_gamma(gamma)?;
    let n = check_n(n)?;
    if d < 2 {
        return Err(Error::InvalidParameter(format!("need d >= 2 categories, got {d}")));
    }
    let dm1 = (d - 1) as f64;
    Ok(dm1 / n * (2.0 * dm1 / fail).ln())
}

/// W1 radius for a sigma-sub-Gaussian empirical distribution.
pub fn radius_w1(n: u64, gamma: f64, sigma: f64) -> Result<f64> {
    let fail = check_gamma(gamma)?;
    let n = check_n(n)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NonpositiveSigma);
    }
    let e = std::f64::consts::E;
    Ok(512.0 * sigma / n.sqrt() + sigma * ((256.0 * e / n) * (1.0 / fail).ln()).sqrt())
}

/// `C0 = e^3 / (2 pi)`, the constant in the multinomial tail lemma's validity regime.
pub fn multinomial_regime_c0() -> f64 {
    std::f64::consts::E.powi(3) / (2.0 * std::f64::consts::PI)
}

/// Whether `d <= (n C0 / 4)^(1/3)`, where the multinomial radius is proven.
pub fn multinomial_regime_holds(n: u64, d: usize) -> bool {
    (d as f64) <= (n as f64 * multinomial_regime_c0() / 4.0).cbrt()
}

/// Confidence set of the natural family around `center` at sample size `n`.
pub fn confidence_set_for(center: &ParamPoint, n: u64, gamma: f64) -> Result<ConfidenceSet> {
    let radius = match center {
        ParamPoint::BoundedScalar { point } => {
            let (a, b) = point.domain();
            radius_bounded(n, gamma, a, b)?
        }
        ParamPoint::Simplex { probs } if probs.dim() == 2 => radius_bernoulli(n, gamma)?,
        ParamPoint::Simplex { probs } => radius_multinomial(n, probs.dim(), gamma)?,
        ParamPoint::Empirical1D { dist } => {
            radius_w1(n, gamma, dist.sigma().ok_or(Error::NonpositiveSigma)?)?
        }
    };
    Ok(ConfidenceSet {
        family: SetFamily::for_point(center),
        center: center.clone(),
        radius,
        gamma,
        n,
    })
}

/// Confidence set on the ground-truth parameter of `rec`, built from
/// `(p_hat, n)`.
pub fn build_confidence_set(
    rec: &ScenarioRecord,
    gamma: f64,
    family_hint: Option<SetFamily>,
) -> Result<ConfidenceSet> {
    if let Some(hint) = family_hint {
        if hint != SetFamily::for_point(&rec.p_hat) {
            return Err(Error::IncompatibleHint {
                family: hint.name().into(),
                point: rec.p_hat.variant_name().into(),
            });
        }
    }
    confidence_set_for(&rec.p_hat, rec.n, gamma)
}

/// Confidence set on the simulator parameter of `rec`, built from
/// `(q_hat, k)`. Empirical estimates without their own sigma borrow the
/// ground-truth sigma.
pub fn build_sim_confidence_set(rec: &ScenarioRecord, gamma: f64) -> Result<ConfidenceSet> {
    match (&rec.q_hat, &rec.p_hat) {
        (ParamPoint::Empirical1D { dist: q }, ParamPoint::Empirical1D { dist: p }) if q.sigma().is_none() => {
            let sigma = p.sigma().ok_or(Error::NonpositiveSigma)?;
            let q: ParamPoint = q.clone().with_sigma(sigma)?.into();
            confidence_set_for(&q, rec.k, gamma)
        }
        (q, _) => confidence_set_for(q, rec.k, gamma),
    }
}

/// Splits a joint coverage level into equal per-side levels whose product is
/// `gamma_joint`.
pub fn split_gamma_joint(gamma_joint: f64) -> Result<(f64, f64)> {
    if !(gamma_joint > 0.0 && gamma_joint <= 1.0) {
        return Err(Error::InvalidGamma(gamma_joint));
    }
    let g = gamma_joint.sqrt();
    Ok((g, g))
}

/// Warnings for simplex records outside the multinomial radius regime.
pub fn regime_warnings(d: &Dataset) -> Vec<Finding> {
    d.records
        .iter()
        .enumerate()
        .filter_map(|(i, rec)| {
            let dim = rec.p_hat.as_simplex()?.dim();
            (dim > 2 && !multinomial_regime_holds(rec.n, dim)).then(|| Finding {
                kind: FindingKind::RegimeWarning,
                index: Some(i),
                scenario_id: Some(rec.scenario_id.clone()),
                message: format!(
                    "d = {dim} exceeds (n C0 / 4)^(1/3) at n = {}; multinomial radius may be loose",
                    rec.n
                ),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundedScalar, Empirical1D, Simplex};

    fn rec(p: ParamPoint, n: u64) -> ScenarioRecord {
        ScenarioRecord {
            scenario_id: "s".into(),
            q_hat: p.clone(),
            p_hat: p,
            n,
            q_hat_2: None,
            k: 10,
        }
    }

    #[test]
    fn bounded_radius_value() {
        let r = radius_bounded(50, 0.5, -1.0, 1.0).unwrap();
        // 2 * sqrt(ln 4 / 100)
        let expected = 2.0 * (4f64.ln() / 100.0).sqrt();
        assert!((r - expected).abs() < 1e-15);
        assert!((r - 0.235_482).abs() < 1e-6);
        let quarter = radius_bounded(200, 0.5, -1.0, 1.0).unwrap();
        assert!((quarter - r / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_radius_value() {
        let r = radius_bernoulli(100, 0.5).unwrap();
        assert!((r - 4f64.ln() / 100.0).abs() < 1e-16);
        assert!((r - 0.013_862_9).abs() < 1e-7);
        assert!((radius_bernoulli(200, 0.5).unwrap() - r / 2.0).abs() < 1e-16);
        // log(2 / (1 - gamma)) = 2 at gamma = 1 - 2/e^2
        let g = 1.0 - 2.0 / std::f64::consts::E.powi(2);
        assert!((radius_bernoulli(1, g).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn multinomial_radius_value() {
        let r = radius_multinomial(500, 5, 0.5).unwrap();
        assert!((r - 0.008 * 16f64.ln()).abs() < 1e-15);
        assert!((r - 0.022_180_7).abs() < 1e-7);
        for n in [1, 10, 1000] {
            for g in [0.1, 0.5, 0.9] {
                assert!((radius_multinomial(n, 2, g).unwrap() - radius_bernoulli(n, g).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn w1_radius_value() {
        let r = radius_w1(10_000, 0.5, 1.0).unwrap();
        let expected = 5.12 + (0.0256 * std::f64::consts::E * 2f64.ln()).sqrt();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 5.3396).abs() < 1e-3);
        let tiny = radius_w1(100, 1e-12, 2.0).unwrap();
        assert!((tiny - 512.0 * 2.0 / 10.0).abs() < 1e-3);
        assert_eq!(radius_w1(10, 0.5, 0.0), Err(Error::NonpositiveSigma));
    }

    #[test]
    fn gamma_is_validated() {
        for g in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(radius_bounded(10, g, 0.0, 1.0), Err(Error::InvalidGamma(_))));
            assert!(matches!(radius_bernoulli(10, g), Err(Error::InvalidGamma(_))));
            assert!(matches!(radius_multinomial(10, 3, g), Err(Error::InvalidGamma(_))));
            assert!(matches!(radius_w1(10, g, 1.0), Err(Error::InvalidGamma(_))));
        }
    }

    #[test]
    fn radius_positive_near_one() {
        assert!(radius_bounded(1_000_000, 0.999_999, 0.0, 1.0).unwrap() > 0.0);
        assert!(radius_bernoulli(1_000_000, 1e-9).unwrap() > 0.0);
    }

    #[test]
    fn build_by_variant() {
        let p: ParamPoint = BoundedScalar::new(0.3, -1.0, 1.0).unwrap().into();
        let cs = build_confidence_set(&rec(p, 50), 0.5, None).unwrap();
        assert_eq!(cs.family, SetFamily::IntervalAbs);
        assert!((cs.radius - radius_bounded(50, 0.5, -1.0, 1.0).unwrap()).abs() == 0.0);

        let p: ParamPoint = Simplex::bernoulli(0.4).unwrap().into();
        let cs = build_confidence_set(&rec(p, 80), 0.5, Some(SetFamily::KlBall)).unwrap();
        assert_eq!(cs.family, SetFamily::KlBall);
        assert_eq!(cs.radius, radius_bernoulli(80, 0.5).unwrap());

        let p: ParamPoint = Empirical1D::new(vec![0.0, 1.0], None).unwrap().into();
        assert_eq!(build_confidence_set(&rec(p, 2), 0.5, None), Err(Error::NonpositiveSigma));
    }

    #[test]
    fn incompatible_hint() {
        let p: ParamPoint = Simplex::bernoulli(0.4).unwrap().into();
        assert!(matches!(
            build_confidence_set(&rec(p, 80), 0.5, Some(SetFamily::W1Ball)),
            Err(Error::IncompatibleHint { .. })
        ));
    }

    #[test]
    fn joint_split() {
        let (a, b) = split_gamma_joint(0.5).unwrap();
        assert!((a - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(a, b);
        assert!((a * b - 0.5).abs() < 1e-15);
        assert_eq!(split_gamma_joint(1.0).unwrap(), (1.0, 1.0));
        assert!(split_gamma_joint(0.0).is_err());
    }

    #[test]
    fn regime() {
        assert!(multinomial_regime_holds(500, 5));
        assert!(!multinomial_regime_holds(10, 5));
        let p: ParamPoint = Simplex::new(vec![0.2; 5]).unwrap().into();
        let d = Dataset::new(vec![rec(p, 10)]);
        let w = regime_warnings(&d);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].kind, FindingKind::RegimeWarning);
    }

    #[test]
    fn membership_at_center() {
        let p: ParamPoint = Simplex::new(vec![0.2, 0.3, 0.5]).unwrap().into();
        let cs = ConfidenceSet::with_radius(p.clone(), 0.0, 0.5, 10).unwrap();
        assert!(cs.contains(&p));
    }
}
