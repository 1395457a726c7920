//! Per-scenario pseudo-discrepancies.
//!
//! For a scenario with confidence set `C` around `p_hat` the upper value is
//! `sup_{u in C} L(u, q_hat)`, the lower value `inf_{u in C} L(u, q_hat)`.
//! Closed forms are used where they exist; elsewhere a certified
//! branch-and-bound returns an over-approximation of every supremum and an
//! under-approximation of every infimum, never the other way round.

mod certified;
mod interval;
mod kl_ball;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence_sets::{
    build_confidence_set, build_sim_confidence_set, split_gamma_joint, ConfidenceSet,
};
use crate::domain::{
    evaluate_loss, kl_divergence, wasserstein1_sorted, Dataset, Empirical1D, LossSpec, ParamPoint,
    ScenarioRecord, Simplex,
};
use crate::error::{Error, Result};

use certified::{BallBlock, BranchAndBound, Objective, SimplexLoss};

pub use interval::{inf_loss_interval, sup_loss_interval};
pub use kl_ball::{
    kl_ball_boundary_1d, max_linear_kl_ball, sup_inf_kl_loss_bernoulli, sup_tv_kl_ball, BOUNDARY_TOL,
};

/// How a pseudo-gap's upper value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    EndpointConvexity,
    SignPatternDual,
    CertifiedGrid,
    TriangleBound,
}

/// Which parameter the pseudo-gap is conservative for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// `L(p, q_hat)`: the simulator at its fixed budget `k`.
    #[default]
    SimEstimateTarget,
    /// `L(p, q)`: confidence sets around both `p_hat` and `q_hat`.
    TrueSimTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoGap {
    pub scenario_id: String,
    pub upper: f64,
    pub lower: f64,
    pub plug_in: f64,
    pub method: Method,
    /// Certified over-approximation margin of `upper`.
    pub slack: f64,
    /// Certified under-approximation margin of `lower`.
    #[serde(default)]
    pub lower_slack: f64,
}

/// Optimiser knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Target certified gap of the branch-and-bound.
    pub mesh: f64,
    /// Largest acceptable certified gap.
    pub slack_cap: f64,
    /// Largest dimension handled by exact subset enumeration for TV.
    pub exact_dim: usize,
    /// Cell budget per optimisation.
    pub max_cells: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mesh: 1e-4,
            slack_cap: 1e-3,
            exact_dim: 12,
            max_cells: 400_000,
        }
    }
}

fn simplex_loss(loss: &LossSpec) -> Result<SimplexLoss> {
    match *loss {
        LossSpec::Kl { smoothing } => Ok(SimplexLoss::Kl { smoothing }),
        LossSpec::TotalVariation => Ok(SimplexLoss::Tv),
        other => Err(Error::IncompatibleVariant {
            loss: other.id().into(),
            point: "simplex".into(),
        }),
    }
}

/// KL objectives need a strictly positive reference after smoothing.
fn check_kl_reference(loss: &LossSpec, q: &[f64]) -> Result<()> {
    if let LossSpec::Kl { smoothing } = *loss {
        if smoothing <= 0.0 {
            if let Some(index) = q.iter().position(|&x| x <= 0.0) {
                return Err(Error::KlUndefined { index });
            }
        }
    }
    Ok(())
}

fn ball(set: &ConfidenceSet) -> Result<(&Simplex, BallBlock)> {
    let p = set.center.as_simplex().ok_or_else(|| Error::IncompatibleHint {
        family: set.family.name().into(),
        point: set.center.variant_name().into(),
    })?;
    Ok((
        p,
        BallBlock {
            center: p.probs().to_vec(),
            radius: set.radius,
        },
    ))
}

fn finish(out: certified::BnbOutcome, settings: &SolverSettings) -> Result<(f64, f64)> {
    let slack = out.slack();
    if slack > settings.slack_cap {
        return Err(Error::MeshTooCoarse {
            slack,
            cap: settings.slack_cap,
        });
    }
    Ok((out.value, slack))
}

/// Certified `sup_{u in C} L(u, q_hat)` over a KL ball by branch and bound.
///
/// Returns `(value, slack)` with `value <= sup <= value + slack`; the search
/// stops once the slack is at most `settings.mesh`.
pub fn certified_grid_sup(
    set: &ConfidenceSet,
    q_hat: &Simplex,
    loss: &LossSpec,
    settings: &SolverSettings,
) -> Result<(f64, f64)> {
    let (p, block) = ball(set)?;
    if p.dim() != q_hat.dim() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    check_kl_reference(loss, q_hat.probs())?;
    let l = simplex_loss(loss)?;
    if set.radius == 0.0 {
        return Ok((l.value(p.probs(), q_hat.probs()), 0.0));
    }
    let out = BranchAndBound {
        blocks: std::slice::from_ref(&block),
        objective: Objective::Loss { loss: l, q: q_hat.probs() },
        tolerance: settings.mesh,
        max_cells: settings.max_cells,
    }
    .run();
    finish(out, settings)
}

/// Certified `inf_{u in C} L(u, q_hat)`: returns `(lower_bound, slack)`.
pub fn certified_grid_inf(
    set: &ConfidenceSet,
    q_hat: &Simplex,
    loss: &LossSpec,
    settings: &SolverSettings,
) -> Result<(f64, f64)> {
    let (p, block) = ball(set)?;
    check_kl_reference(loss, q_hat.probs())?;
    let l = simplex_loss(loss)?;
    if kl_divergence(p.probs(), q_hat.probs()).is_ok_and(|kl| kl <= set.radius) {
        return Ok((0.0, 0.0));
    }
    if set.radius == 0.0 {
        return Ok((l.value(p.probs(), q_hat.probs()), 0.0));
    }
    let out = BranchAndBound {
        blocks: std::slice::from_ref(&block),
        objective: Objective::NegLoss { loss: l, q: q_hat.probs() },
        tolerance: settings.mesh,
        max_cells: settings.max_cells,
    }
    .run();
    let (neg_best, slack) = finish(out, settings)?;
    // max(-L) <= out.upper, so -out.upper is a lower bound on inf L.
    Ok(((-neg_best - slack).max(0.0), slack))
}

/// Pseudo-gap for a W1 ball: the triangle inequality bounds the supremum by
/// `W1 + r` and the infimum from below by `max(W1 - r, 0)`.
pub fn pseudo_gap_w1(set: &ConfidenceSet, q_hat: &Empirical1D) -> Result<PseudoGap> {
    let p = set.center.as_empirical().ok_or_else(|| Error::IncompatibleHint {
        family: set.family.name().into(),
        point: set.center.variant_name().into(),
    })?;
    let plug_in = wasserstein1_sorted(p.samples(), q_hat.samples());
    Ok(PseudoGap {
        scenario_id: String::new(),
        upper: plug_in + set.radius,
        lower: (plug_in - set.radius).max(0.0),
        plug_in,
        method: Method::TriangleBound,
        slack: 0.0,
        lower_slack: 0.0,
    })
}

/// Upper and lower pseudo-discrepancy over one confidence set.
pub fn pseudo_gap(set: &ConfidenceSet, q_hat: &ParamPoint, loss: &LossSpec, settings: &SolverSettings) -> Result<PseudoGap> {
    if !loss.accepts(&set.center) {
        return Err(loss.incompatible(&set.center));
    }
    let plug_in = evaluate_loss(loss, &set.center, q_hat)?;
    let mut gap = match (&set.center, q_hat) {
        (ParamPoint::BoundedScalar { .. }, ParamPoint::BoundedScalar { point: q }) => PseudoGap {
            scenario_id: String::new(),
            upper: sup_loss_interval(set, q, loss)?,
            lower: inf_loss_interval(set, q, loss)?,
            plug_in,
            method: Method::ClosedForm,
            slack: 0.0,
            lower_slack: 0.0,
        },
        (ParamPoint::Simplex { probs: p }, ParamPoint::Simplex { probs: q }) if p.dim() == 2 => {
            let (lo, hi) = kl_ball_boundary_1d(p.probs()[0], set.radius);
            let (upper, lower) = kl_ball::sup_inf_on_segment(loss, lo, hi, q.probs()[0])?;
            PseudoGap {
                scenario_id: String::new(),
                upper,
                lower,
                plug_in,
                method: Method::EndpointConvexity,
                slack: 0.0,
                lower_slack: 0.0,
            }
        }
        (ParamPoint::Simplex { probs: p }, ParamPoint::Simplex { probs: q }) => {
            let (lower, lower_slack) = certified_grid_inf(set, q, loss, settings)?;
            let (upper, method, slack) = match loss {
                LossSpec::TotalVariation if p.dim() <= settings.exact_dim => {
                    (sup_tv_kl_ball(p, set.radius, q), Method::SignPatternDual, 0.0)
                }
                _ => {
                    let (value, slack) = certified_grid_sup(set, q, loss, settings)?;
                    (value + slack, Method::CertifiedGrid, slack)
                }
            };
            PseudoGap {
                scenario_id: String::new(),
                upper,
                lower,
                plug_in,
                method,
                slack,
                lower_slack,
            }
        }
        (ParamPoint::Empirical1D { .. }, ParamPoint::Empirical1D { dist: q }) => pseudo_gap_w1(set, q)?,
        _ => return Err(loss.incompatible(q_hat)),
    };
    // The center belongs to every set, so plug-in is a valid bound both ways.
    gap.upper = gap.upper.max(plug_in);
    gap.lower = gap.lower.min(plug_in);
    Ok(gap)
}

/// Pseudo-gap over confidence sets on both the real and the simulator
/// parameter: `sup / inf_{u in Cp, v in Cq} L(u, v)`.
pub fn pseudo_gap_joint(
    p_set: &ConfidenceSet,
    q_set: &ConfidenceSet,
    loss: &LossSpec,
    settings: &SolverSettings,
) -> Result<PseudoGap> {
    let plug_in = evaluate_loss(loss, &p_set.center, &q_set.center)?;
    let mut gap = match (&p_set.center, &q_set.center) {
        (ParamPoint::BoundedScalar { .. }, ParamPoint::BoundedScalar { .. }) => {
            let a = p_set.interval().expect("bounded");
            let b = q_set.interval().expect("bounded");
            let (upper, lower) = interval::joint_on_intervals(loss, a, b)?;
            PseudoGap {
                scenario_id: String::new(),
                upper,
                lower,
                plug_in,
                method: Method::ClosedForm,
                slack: 0.0,
                lower_slack: 0.0,
            }
        }
        (ParamPoint::Simplex { probs: p }, ParamPoint::Simplex { probs: q }) if p.dim() == 2 => {
            let (a_lo, a_hi) = kl_ball_boundary_1d(p.probs()[0], p_set.radius);
            let (b_lo, b_hi) = kl_ball_boundary_1d(q.probs()[0], q_set.radius);
            // jointly convex: corners for the sup; for disjoint intervals the
            // loss is monotone towards the nearest pair of endpoints
            let mut upper = 0.0f64;
            for u in [a_lo, a_hi] {
                for v in [b_lo, b_hi] {
                    upper = upper.max(kl_ball::bernoulli_loss(loss, u, v)?);
                }
            }
            let lower = if a_hi < b_lo {
                kl_ball::bernoulli_loss(loss, a_hi, b_lo)?
            } else if b_hi < a_lo {
                kl_ball::bernoulli_loss(loss, a_lo, b_hi)?
            } else {
                0.0
            };
            PseudoGap {
                scenario_id: String::new(),
                upper,
                lower,
                plug_in,
                method: Method::EndpointConvexity,
                slack: 0.0,
                lower_slack: 0.0,
            }
        }
        (ParamPoint::Simplex { .. }, ParamPoint::Simplex { .. }) => {
            let l = simplex_loss(loss)?;
            let (_, pb) = ball(p_set)?;
            let (_, qb) = ball(q_set)?;
            let blocks = [pb, qb];
            let sup = BranchAndBound {
                blocks: &blocks,
                objective: Objective::JointLoss { loss: l },
                tolerance: settings.mesh,
                max_cells: settings.max_cells,
            }
            .run();
            let (value, slack) = finish(sup, settings)?;
            let (lower, lower_slack) = if p_set.radius + q_set.radius == 0.0 {
                (plug_in, 0.0)
            } else {
                let inf = BranchAndBound {
                    blocks: &blocks,
                    objective: Objective::NegJointLoss { loss: l },
                    tolerance: settings.mesh,
                    max_cells: settings.max_cells,
                }
                .run();
                let (neg, s) = finish(inf, settings)?;
                ((-neg - s).max(0.0), s)
            };
            PseudoGap {
                scenario_id: String::new(),
                upper: value + slack,
                lower,
                plug_in,
                method: Method::CertifiedGrid,
                slack,
                lower_slack,
            }
        }
        (ParamPoint::Empirical1D { .. }, ParamPoint::Empirical1D { .. }) => {
            let r = p_set.radius + q_set.radius;
            PseudoGap {
                scenario_id: String::new(),
                upper: plug_in + r,
                lower: (plug_in - r).max(0.0),
                plug_in,
                method: Method::TriangleBound,
                slack: 0.0,
                lower_slack: 0.0,
            }
        }
        _ => return Err(loss.incompatible(&q_set.center)),
    };
    gap.upper = gap.upper.max(plug_in);
    gap.lower = gap.lower.min(plug_in);
    Ok(gap)
}

/// `sup_{u in C} L(u, q1) - L(u, q2)`, exact or over-approximated.
pub fn pairwise_sup(
    set: &ConfidenceSet,
    q1: &ParamPoint,
    q2: &ParamPoint,
    loss: &LossSpec,
    settings: &SolverSettings,
) -> Result<f64> {
    let plug = evaluate_loss(loss, &set.center, q1)? - evaluate_loss(loss, &set.center, q2)?;
    if q1 == q2 {
        return Ok(0.0);
    }
    let value = match (&set.center, q1, q2) {
        (ParamPoint::BoundedScalar { .. }, ParamPoint::BoundedScalar { point: a }, ParamPoint::BoundedScalar { point: b }) => {
            let (lo, hi) = set.interval().expect("bounded");
            interval::pairwise_on_interval(loss, lo, hi, a.value(), b.value())?
        }
        (ParamPoint::Simplex { probs: p }, ParamPoint::Simplex { probs: a }, ParamPoint::Simplex { probs: b })
            if p.dim() == 2 =>
        {
            // KL difference is linear in u; TV difference is piecewise linear
            // with kinks at the two references.
            let (lo, hi) = kl_ball_boundary_1d(p.probs()[0], set.radius);
            let (a1, b1) = (a.probs()[0], b.probs()[0]);
            let mut best = f64::NEG_INFINITY;
            for u in [lo, hi, a1, b1] {
                if (lo..=hi).contains(&u) {
                    let v = kl_ball::bernoulli_loss(loss, u, a1)? - kl_ball::bernoulli_loss(loss, u, b1)?;
                    best = best.max(v);
                }
            }
            best
        }
        (ParamPoint::Simplex { probs: p }, ParamPoint::Simplex { probs: a }, ParamPoint::Simplex { probs: b }) => {
            match *loss {
                LossSpec::Kl { smoothing } => {
                    check_kl_reference(loss, a.probs())?;
                    check_kl_reference(loss, b.probs())?;
                    // KL(s(u)||s(a)) - KL(s(u)||s(b)) = sum_i s(u)_i log(s(b)_i / s(a)_i)
                    let d = p.dim() as f64;
                    let scale = 1.0 / (1.0 + d * smoothing);
                    let w: Vec<f64> = a
                        .probs()
                        .iter()
                        .zip(b.probs())
                        .map(|(&x, &y)| ((y + smoothing) / (x + smoothing)).ln())
                        .collect();
                    let c: Vec<f64> = w.iter().map(|wi| wi * scale).collect();
                    let constant = smoothing * scale * w.iter().sum::<f64>();
                    max_linear_kl_ball(p.probs(), set.radius, &c) + constant
                }
                _ => {
                    let (_, block) = ball(set)?;
                    let out = BranchAndBound {
                        blocks: std::slice::from_ref(&block),
                        objective: Objective::Difference {
                            loss: simplex_loss(loss)?,
                            q1: a.probs(),
                            q2: b.probs(),
                        },
                        tolerance: settings.mesh,
                        max_cells: settings.max_cells,
                    }
                    .run();
                    let (value, slack) = finish(out, settings)?;
                    value + slack
                }
            }
        }
        (ParamPoint::Empirical1D { dist: p }, ParamPoint::Empirical1D { dist: a }, ParamPoint::Empirical1D { dist: b }) => {
            let w1 = wasserstein1_sorted(p.samples(), a.samples());
            let w2 = wasserstein1_sorted(p.samples(), b.samples());
            w1 + set.radius - (w2 - set.radius).max(0.0)
        }
        _ => return Err(loss.incompatible(q1)),
    };
    Ok(value.max(plug))
}

/// Pseudo-gap of one scenario.
pub fn scenario_gap(
    rec: &ScenarioRecord,
    gamma: f64,
    loss: &LossSpec,
    mode: GapMode,
    settings: &SolverSettings,
) -> Result<PseudoGap> {
    let mut gap = match mode {
        GapMode::SimEstimateTarget => {
            let set = build_confidence_set(rec, gamma, None)?;
            pseudo_gap(&set, &rec.q_hat, loss, settings)?
        }
        GapMode::TrueSimTarget => {
            let (gp, gq) = split_gamma_joint(gamma)?;
            let p_set = build_confidence_set(rec, gp, None)?;
            let q_set = build_sim_confidence_set(rec, gq)?;
            pseudo_gap_joint(&p_set, &q_set, loss, settings)?
        }
    };
    gap.scenario_id = rec.scenario_id.clone();
    Ok(gap)
}

/// One pseudo-gap per scenario, in dataset order. Any scenario failure
/// aborts the run.
pub fn compute_pseudo_gaps(
    d: &Dataset,
    gamma: f64,
    loss: &LossSpec,
    mode: GapMode,
    settings: &SolverSettings,
) -> Result<Vec<PseudoGap>> {
    let findings = crate::domain::validate_dataset(d);
    if !findings.is_empty() {
        return Err(Error::InvalidDataset(findings));
    }
    if !loss.accepts(&d.records[0].p_hat) {
        return Err(loss.incompatible(&d.records[0].p_hat));
    }
    d.records
        .par_iter()
        .map(|rec| scenario_gap(rec, gamma, loss, mode, settings).map_err(|e| e.in_scenario(&rec.scenario_id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence_sets::radius_bernoulli;
    use crate::domain::BoundedScalar;

    fn simplex(p: &[f64]) -> Simplex {
        Simplex::new(p.to_vec()).unwrap()
    }

    fn kl_set(p: &[f64], r: f64) -> ConfidenceSet {
        ConfidenceSet::with_radius(simplex(p).into(), r, 0.5, 100).unwrap()
    }

    #[test]
    fn w1_gap_examples() {
        let p = Empirical1D::new(vec![0.0, 1.0], Some(1.0)).unwrap();
        let set = ConfidenceSet::with_radius(p.clone().into(), 0.0, 0.5, 2).unwrap();
        let g = pseudo_gap_w1(&set, &p).unwrap();
        assert_eq!((g.upper, g.lower, g.plug_in), (0.0, 0.0, 0.0));

        let q = Empirical1D::new(vec![1.0, 2.0], None).unwrap();
        let set = ConfidenceSet::with_radius(p.clone().into(), 0.3, 0.5, 2).unwrap();
        let g = pseudo_gap_w1(&set, &q).unwrap();
        assert!((g.upper - 1.3).abs() < 1e-15 && (g.lower - 0.7).abs() < 1e-15);

        let q = Empirical1D::new(vec![0.2, 1.2], None).unwrap();
        let set = ConfidenceSet::with_radius(p.into(), 0.5, 0.5, 2).unwrap();
        let g = pseudo_gap_w1(&set, &q).unwrap();
        assert!((g.plug_in - 0.2).abs() < 1e-15);
        assert_eq!(g.lower, 0.0);
    }

    #[test]
    fn certified_zero_radius_is_plug_in() {
        let set = kl_set(&[0.2, 0.3, 0.5], 0.0);
        let q = simplex(&[0.3, 0.3, 0.4]);
        let loss = LossSpec::Kl { smoothing: 0.0 };
        let (v, s) = certified_grid_sup(&set, &q, &loss, &SolverSettings::default()).unwrap();
        let plug = kl_divergence(&[0.2, 0.3, 0.5], &[0.3, 0.3, 0.4]).unwrap();
        assert_eq!((v, s), (plug, 0.0));
    }

    #[test]
    fn certified_brackets_bernoulli_exact() {
        let loss = LossSpec::Kl { smoothing: 0.0 };
        for &(p, q, r) in &[(0.5, 0.5, 2f64.ln()), (0.2, 0.6, 0.05), (0.9, 0.3, 0.01)] {
            let set = kl_set(&[p, 1.0 - p], r);
            let qs = simplex(&[q, 1.0 - q]);
            let (exact, _) = sup_inf_kl_loss_bernoulli(set.center.as_simplex().unwrap(), r, &qs, 0.0).unwrap();
            let (v, s) = certified_grid_sup(&set, &qs, &loss, &SolverSettings::default()).unwrap();
            assert!(v <= exact + 1e-9, "{v} > {exact}");
            assert!(v + s >= exact - 1e-9, "{} < {exact}", v + s);
        }
    }

    #[test]
    fn certified_slack_bounded_by_mesh() {
        let set = kl_set(&[0.2, 0.3, 0.5], 0.05);
        let q = simplex(&[0.4, 0.4, 0.2]);
        let loss = LossSpec::Kl { smoothing: 0.0 };
        for mesh in [1e-3, 5e-4, 2.5e-4] {
            let settings = SolverSettings { mesh, ..Default::default() };
            let (_, s) = certified_grid_sup(&set, &q, &loss, &settings).unwrap();
            assert!(s <= mesh, "slack {s} above mesh {mesh}");
        }
    }

    #[test]
    fn mesh_too_coarse() {
        let set = kl_set(&[0.2, 0.3, 0.5], 0.5);
        let q = simplex(&[0.4, 0.4, 0.2]);
        let settings = SolverSettings {
            mesh: 1e-9,
            slack_cap: 1e-10,
            max_cells: 4,
            ..Default::default()
        };
        let err = certified_grid_sup(&set, &q, &LossSpec::Kl { smoothing: 0.0 }, &settings).unwrap_err();
        assert!(matches!(err, Error::MeshTooCoarse { .. }));
    }

    #[test]
    fn pairwise_identical_simulators_is_zero() {
        let set = kl_set(&[0.2, 0.3, 0.5], 0.1);
        let q: ParamPoint = simplex(&[0.1, 0.1, 0.8]).into();
        for loss in [LossSpec::Kl { smoothing: 0.0 }, LossSpec::TotalVariation] {
            assert_eq!(pairwise_sup(&set, &q, &q, &loss, &SolverSettings::default()).unwrap(), 0.0);
        }
    }

    #[test]
    fn pairwise_zero_radius_is_plug_in() {
        let c: ParamPoint = BoundedScalar::new(0.3, -1.0, 1.0).unwrap().into();
        let set = ConfidenceSet::with_radius(c.clone(), 0.0, 0.5, 10).unwrap();
        let a: ParamPoint = BoundedScalar::new(0.5, -1.0, 1.0).unwrap().into();
        let b: ParamPoint = BoundedScalar::new(-0.1, -1.0, 1.0).unwrap().into();
        let v = pairwise_sup(&set, &a, &b, &LossSpec::SquaredError, &SolverSettings::default()).unwrap();
        assert!((v - (0.04 - 0.16)).abs() < 1e-15);
    }

    #[test]
    fn simplex_gap_orders_bounds() {
        let set = kl_set(&[0.2, 0.3, 0.5], radius_bernoulli(200, 0.5).unwrap());
        let q: ParamPoint = simplex(&[0.35, 0.25, 0.4]).into();
        for loss in [LossSpec::Kl { smoothing: 0.0 }, LossSpec::TotalVariation] {
            let g = pseudo_gap(&set, &q, &loss, &SolverSettings::default()).unwrap();
            assert!(g.lower <= g.plug_in && g.plug_in <= g.upper, "{g:?}");
        }
    }
}
