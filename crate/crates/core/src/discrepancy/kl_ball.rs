//! Exact optimisation over KL balls `{u : KL(p || u) <= r}`.

use crate::domain::{kl_bernoulli, kl_probs, LossSpec, Simplex};
use crate::error::{Error, Result};

/// Absolute tolerance of boundary bisection.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Roots `u_lo <= p <= u_hi` of `KL(p || u) = r` for a Bernoulli `p`.
///
/// Each root is approached from outside the ball, so `[u_lo, u_hi]` contains
/// the exact interval and exceeds it by less than [`BOUNDARY_TOL`] per side.
pub fn kl_ball_boundary_1d(p_hat: f64, r: f64) -> (f64, f64) {
    assert!((0.0..=1.0).contains(&p_hat), "p_hat = {p_hat} outside [0, 1]");
    assert!(r >= 0.0, "negative radius {r}");
    if r == 0.0 {
        return (p_hat, p_hat);
    }
    let inside = |u: f64| kl_bernoulli(p_hat, u) <= r;

    let lo = if p_hat == 0.0 || inside(0.0) {
        0.0
    } else {
        // outside at a, inside at b
        let (mut a, mut b) = (0.0, p_hat);
        while b - a > BOUNDARY_TOL {
            let mid = 0.5 * (a + b);
            if inside(mid) {
                b = mid;
            } else {
                a = mid;
            }
        }
        a
    };
    let hi = if p_hat == 1.0 || inside(1.0) {
        1.0
    } else {
        let (mut a, mut b) = (p_hat, 1.0);
        while b - a > BOUNDARY_TOL {
            let mid = 0.5 * (a + b);
            if inside(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        b
    };
    (lo, hi)
}

/// Loss of a two-category point `(u, 1 - u)` against `q`.
pub(crate) fn bernoulli_loss(loss: &LossSpec, u: f64, q: f64) -> Result<f64> {
    match loss {
        LossSpec::Kl { smoothing } => kl_probs(&[u, 1.0 - u], &[q, 1.0 - q], *smoothing),
        LossSpec::TotalVariation => Ok((u - q).abs()),
        _ => Err(Error::IncompatibleVariant {
            loss: loss.id().into(),
            point: "simplex".into(),
        }),
    }
}

/// Supremum and infimum of a convex Bernoulli loss `L(u, q)` over
/// `u in [lo, hi]`, with `L(q, q) = 0`.
pub(crate) fn sup_inf_on_segment(loss: &LossSpec, lo: f64, hi: f64, q: f64) -> Result<(f64, f64)> {
    let at_lo = bernoulli_loss(loss, lo, q)?;
    let at_hi = bernoulli_loss(loss, hi, q)?;
    let upper = at_lo.max(at_hi);
    let lower = if q < lo {
        at_lo
    } else if q > hi {
        at_hi
    } else {
        0.0
    };
    Ok((upper, lower))
}

/// `(upper, lower)` of `KL(u || q_hat)` over a two-category KL ball.
///
/// The loss is convex in `u`, so the supremum sits at an endpoint of the
/// ball's interval and the infimum is zero unless `q_hat` lies outside it.
pub fn sup_inf_kl_loss_bernoulli(
    p_hat: &Simplex,
    radius: f64,
    q_hat: &Simplex,
    smoothing: f64,
) -> Result<(f64, f64)> {
    if p_hat.dim() != 2 || q_hat.dim() != 2 {
        return Err(Error::InvalidParameter("Bernoulli KL ball needs d = 2".into()));
    }
    let (lo, hi) = kl_ball_boundary_1d(p_hat.probs()[0], radius);
    sup_inf_on_segment(&LossSpec::Kl { smoothing }, lo, hi, q_hat.probs()[0])
}

/// Upper bound on `max c.u` over `{u in simplex : KL(p || u) <= r}`.
///
/// On the support of `p` the maximiser has the tilted form
/// `u_i = lam p_i / (mu - c_i)`; `mu` is found by bisection on the active
/// constraint, approached from the infeasible side so the returned value is
/// never below the true maximum. When a coordinate outside the support has a
/// larger coefficient than the support multiplier, the remaining mass moves
/// there and the multiplier pins to that coefficient.
pub fn max_linear_kl_ball(p: &[f64], r: f64, c: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), c.len());
    let dot = |u: &[f64]| -> f64 { u.iter().zip(c).map(|(a, b)| a * b).sum() };
    if r <= 0.0 {
        return dot(p);
    }
    let support: Vec<(f64, f64)> = p
        .iter()
        .zip(c)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &ci)| (pi, ci))
        .collect();
    let c_off = p
        .iter()
        .zip(c)
        .filter(|(&pi, _)| pi <= 0.0)
        .map(|(_, &ci)| ci)
        .fold(f64::NEG_INFINITY, f64::max);
    let c_max = support.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let c_min = support.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let spread = c_max - c_min;
    let scale = c_max.abs().max(c_min.abs()).max(1.0);

    // Objective is constant on the support.
    if spread <= 1e-15 * scale {
        if c_off > c_max {
            let t = -(-r).exp_m1();
            return (1.0 - t) * c_max + t * c_off;
        }
        return c_max;
    }

    // mu = c_max + spread * exp(s)
    let kl_at = |s: f64| -> f64 {
        let gap = spread * s.exp();
        let mu = c_max + gap;
        let mut sum_w = 0.0;
        let mut sum_log = 0.0;
        for &(pi, ci) in &support {
            let d = mu - ci;
            sum_w += pi / d;
            sum_log += pi * d.ln();
        }
        sum_log + sum_w.ln()
    };
    let value_at = |s: f64| -> (f64, f64) {
        let mu = c_max + spread * s.exp();
        let sum_w: f64 = support.iter().map(|&(pi, ci)| pi / (mu - ci)).sum();
        let v: f64 = support.iter().map(|&(pi, ci)| ci * pi / ((mu - ci) * sum_w)).sum();
        (v, mu)
    };

    // KL is decreasing in s; bracket with kl(lo) >= r >= kl(hi).
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while kl_at(lo) < r && lo > -600.0 {
        lo = (2.0 * lo).max(-600.0);
    }
    while kl_at(hi) > r && hi < 600.0 {
        hi = (2.0 * hi).min(600.0);
    }
    let (support_value, mu) = if kl_at(lo) < r {
        // the ball reaches the vertex face of the largest coefficient
        (c_max, c_max)
    } else {
        for _ in 0..200 {
            if hi - lo <= 1e-14 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if kl_at(mid) >= r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        value_at(lo)
    };
    if c_off <= mu {
        return support_value;
    }

    // Multiplier pinned at c_off: log lam = sum p_i log(c_off - c_i) - r.
    let log_lam: f64 = support.iter().map(|&(pi, ci)| pi * (c_off - ci).ln()).sum::<f64>() - r;
    let lam = log_lam.exp();
    let mut mass = 0.0;
    let mut value = 0.0;
    for &(pi, ci) in &support {
        let ui = lam * pi / (c_off - ci);
        mass += ui;
        value += ci * ui;
    }
    value + (1.0 - mass).max(0.0) * c_off
}

/// Exact `sup TV(u, q)` over a KL ball by enumerating the category subsets
/// `A` in `TV(u, q) = max_A u(A) - q(A)`, each a linear maximisation.
pub fn sup_tv_kl_ball(p_hat: &Simplex, radius: f64, q_hat: &Simplex) -> f64 {
    let p = p_hat.probs();
    let q = q_hat.probs();
    let d = p.len();
    assert_eq!(d, q.len());
    assert!(d <= 30, "subset enumeration over {d} categories");
    let mut best = 0.0f64;
    let mut c = vec![0.0; d];
    for mask in 1u32..(1u32 << d) - 1 {
        let mut q_mass = 0.0;
        for (i, ci) in c.iter_mut().enumerate() {
            let inside = mask & (1 << i) != 0;
            *ci = if inside { 1.0 } else { 0.0 };
            if inside {
                q_mass += q[i];
            }
        }
        let v = max_linear_kl_ball(p, radius, &c).min(1.0) - q_mass;
        best = best.max(v);
    }
    best
}
