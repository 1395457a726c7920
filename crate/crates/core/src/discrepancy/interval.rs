//! Closed forms for bounded-scalar (interval) confidence sets.

use crate::confidence_sets::{ConfidenceSet, SetFamily};
use crate::domain::{BoundedScalar, LossSpec};
use crate::error::{Error, Result};

pub(crate) fn scalar_loss(loss: &LossSpec, u: f64, q: f64) -> Result<f64> {
    match loss {
        LossSpec::SquaredError => Ok((u - q) * (u - q)),
        LossSpec::AbsoluteError => Ok((u - q).abs()),
        other => Err(Error::IncompatibleVariant {
            loss: other.id().into(),
            point: "bounded-scalar".into(),
        }),
    }
}

fn clipped(set: &ConfidenceSet, q_hat: &BoundedScalar) -> Result<(f64, f64)> {
    if set.family != SetFamily::IntervalAbs {
        return Err(Error::IncompatibleHint {
            family: set.family.name().into(),
            point: "bounded-scalar".into(),
        });
    }
    let center = set.center.as_bounded().expect("interval sets wrap bounded scalars");
    if center.domain() != q_hat.domain() {
        return Err(Error::InvalidParameter(format!(
            "domains differ: {:?} vs {:?}",
            center.domain(),
            q_hat.domain()
        )));
    }
    let (lo, hi) = set.interval().expect("interval sets wrap bounded scalars");
    // center lies in its own domain, so the clipped interval is nonempty
    assert!(lo <= hi, "empty interval [{lo}, {hi}]");
    Ok((lo, hi))
}

/// `sup_{u in I} L(u, q_hat)`: a convex loss peaks at an endpoint.
pub fn sup_loss_interval(set: &ConfidenceSet, q_hat: &BoundedScalar, loss: &LossSpec) -> Result<f64> {
    let (lo, hi) = clipped(set, q_hat)?;
    let q = q_hat.value();
    Ok(scalar_loss(loss, lo, q)?.max(scalar_loss(loss, hi, q)?))
}

/// `inf_{u in I} L(u, q_hat)`: zero when `q_hat` is inside, else the nearest
/// endpoint.
pub fn inf_loss_interval(set: &ConfidenceSet, q_hat: &BoundedScalar, loss: &LossSpec) -> Result<f64> {
    let (lo, hi) = clipped(set, q_hat)?;
    let q = q_hat.value();
    scalar_loss(loss, q.clamp(lo, hi), q)
}

/// `sup_{u in [lo, hi]} L(u, q1) - L(u, q2)`.
///
/// For squared error the difference `(q2 - q1)(2u - q1 - q2)` is linear in
/// `u`; for absolute error it is piecewise linear with kinks at `q1` and `q2`.
/// Checking the endpoints and in-range kinks is exact in both cases.
pub(crate) fn pairwise_on_interval(loss: &LossSpec, lo: f64, hi: f64, q1: f64, q2: f64) -> Result<f64> {
    if q1 == q2 {
        return Ok(0.0);
    }
    let diff = |u: f64| -> Result<f64> {
        match loss {
            LossSpec::SquaredError => Ok((q2 - q1) * (2.0 * u - q1 - q2)),
            _ => Ok(scalar_loss(loss, u, q1)? - scalar_loss(loss, u, q2)?),
        }
    };
    let mut best = diff(lo)?.max(diff(hi)?);
    for kink in [q1, q2] {
        if (lo..=hi).contains(&kink) {
            best = best.max(diff(kink)?);
        }
    }
    Ok(best)
}

/// `(sup, inf)` of `L(u, v)` over `u in [a_lo, a_hi]`, `v in [b_lo, b_hi]`.
/// Both losses are convex in `u - v`: corners give the supremum, the gap
/// between the intervals gives the infimum.
pub(crate) fn joint_on_intervals(loss: &LossSpec, a: (f64, f64), b: (f64, f64)) -> Result<(f64, f64)> {
    let upper = scalar_loss(loss, a.0, b.1)?.max(scalar_loss(loss, a.1, b.0)?);
    let gap = if a.1 < b.0 {
        b.0 - a.1
    } else if b.1 < a.0 {
        a.0 - b.1
    } else {
        0.0
    };
    Ok((upper, scalar_loss(loss, gap, 0.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ParamPoint;

    fn set(c: f64, rho: f64) -> ConfidenceSet {
        let center: ParamPoint = BoundedScalar::new(c, -1.0, 1.0).unwrap().into();
        ConfidenceSet::with_radius(center, rho, 0.5, 10).unwrap()
    }

    fn q(v: f64) -> BoundedScalar {
        BoundedScalar::new(v, -1.0, 1.0).unwrap()
    }

    /// Dense-grid brute force over the clipped interval.
    fn grid(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let steps = ((hi - lo) / 1e-5).ceil() as usize;
        let mut mx = f64::NEG_INFINITY;
        let mut mn = f64::INFINITY;
        for i in 0..=steps {
            let u = (lo + i as f64 * 1e-5).min(hi);
            mx = mx.max(f(u));
            mn = mn.min(f(u));
        }
        (mx, mn)
    }

    #[test]
    fn sup_example_matches_grid() {
        let s = set(0.3, 0.1);
        let sup = sup_loss_interval(&s, &q(0.5), &LossSpec::SquaredError).unwrap();
        let (mx, _) = grid(0.2, 0.4, |u| (u - 0.5) * (u - 0.5));
        assert!((sup - 0.09).abs() < 1e-12);
        assert!((sup - mx).abs() < 1e-9);
    }

    #[test]
    fn inf_example_matches_grid() {
        let s = set(0.3, 0.1);
        let inf = inf_loss_interval(&s, &q(0.5), &LossSpec::SquaredError).unwrap();
        let (_, mn) = grid(0.2, 0.4, |u| (u - 0.5) * (u - 0.5));
        assert!((inf - 0.01).abs() < 1e-12);
        assert!((inf - mn).abs() < 1e-9);
        assert_eq!(inf_loss_interval(&s, &q(0.35), &LossSpec::SquaredError).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_radius_is_plug_in() {
        let s = set(0.3, 0.0);
        for loss in [LossSpec::SquaredError, LossSpec::AbsoluteError] {
            let plug = scalar_loss(&loss, 0.3, -0.2).unwrap();
            assert_eq!(sup_loss_interval(&s, &q(-0.2), &loss).unwrap(), plug);
            assert_eq!(inf_loss_interval(&s, &q(-0.2), &loss).unwrap(), plug);
        }
    }

    #[test]
    fn absolute_loss_at_center_is_radius() {
        let s = set(0.3, 0.25);
        assert!((sup_loss_interval(&s, &q(0.3), &LossSpec::AbsoluteError).unwrap() - 0.25).abs() < 1e-15);
        // clipped at the domain edge
        let s = set(0.9, 0.25);
        assert!((sup_loss_interval(&s, &q(0.9), &LossSpec::AbsoluteError).unwrap() - 0.25).abs() < 1e-15);
        let s = set(0.95, 0.25);
        let v = sup_loss_interval(&s, &q(0.95), &LossSpec::AbsoluteError).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let v = sup_loss_interval(&s, &q(-0.7), &LossSpec::AbsoluteError).unwrap();
        assert!((v - 1.7).abs() < 1e-15, "right end clipped at 1: {v}");
    }

    #[test]
    fn pairwise_squared_example() {
        // C = [0.2, 0.4], q1 = 0.5, q2 = 0.1: 0.4 (0.6 - 2u) peaks at u = 0.2
        let v = pairwise_on_interval(&LossSpec::SquaredError, 0.2, 0.4, 0.5, 0.1).unwrap();
        let (mx, _) = grid(0.2, 0.4, |u| (u - 0.5).powi(2) - (u - 0.1).powi(2));
        assert!((v - 0.08).abs() < 1e-12);
        assert!((v - mx).abs() < 1e-9);
    }

    #[test]
    fn pairwise_absolute_kinks() {
        let v = pairwise_on_interval(&LossSpec::AbsoluteError, -0.5, 0.5, 0.0, 0.1).unwrap();
        let (mx, _) = grid(-0.5, 0.5, |u| (u - 0.0f64).abs() - (u - 0.1f64).abs());
        assert!((v - mx).abs() < 1e-12);
    }

    #[test]
    fn joint_intervals() {
        let (up, low) = joint_on_intervals(&LossSpec::SquaredError, (0.0, 0.2), (0.5, 0.6)).unwrap();
        assert!((up - 0.36).abs() < 1e-15);
        assert!((low - 0.09).abs() < 1e-15);
        let (_, low) = joint_on_intervals(&LossSpec::AbsoluteError, (0.0, 0.2), (0.1, 0.6)).unwrap();
        assert_eq!(low, 0.0);
    }
}
