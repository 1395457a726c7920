//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

/// `KL(a || b)` for two-category distributions, written out directly.
pub fn kl2(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

/// `KL(p || u)` over a full probability vector.
pub fn kl(p: &[f64], u: &[f64]) -> f64 {
    p.iter()
        .zip(u)
        .map(|(&x, &y)| if x == 0.0 { 0.0 } else if y == 0.0 { f64::INFINITY } else { x * (x / y).ln() })
        .sum()
}

pub fn smoothed(u: &[f64], beta: f64) -> Vec<f64> {
    let d = u.len() as f64;
    u.iter().map(|x| (x + beta) / (1.0 + d * beta)).collect()
}

pub fn tv(u: &[f64], v: &[f64]) -> f64 {
    0.5 * u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Interval `{u : KL(p || u) <= r}` for a Bernoulli `p`, by plain bisection
/// kept on the feasible side.
pub fn kl_interval(p: f64, r: f64) -> (f64, f64) {
    let solve = |mut inside: f64, mut outside: f64| {
        if kl2(p, outside) <= r {
            return outside;
        }
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if kl2(p, mid) <= r {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    (solve(p, 0.0), solve(p, 1.0))
}

/// `(max, min)` of `f` on `[lo, hi]` over a uniform grid with both endpoints.
pub fn grid_extrema(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let steps = ((hi - lo) / step).ceil().max(1.0) as usize;
    let mut mx = f64::NEG_INFINITY;
    let mut mn = f64::INFINITY;
    for i in 0..=steps {
        let u = if i == steps { hi } else { lo + i as f64 * step };
        let v = f(u);
        mx = mx.max(v);
        mn = mn.min(v);
    }
    (mx, mn)
}

/// Boundary point of `{u in simplex : KL(p || u) <= r}` along a direction in
/// the plane `sum u = 1`, approached from inside.
fn ray_boundary(p: &[f64], dir: &[f64], r: f64) -> Vec<f64> {
    let mut t_max = f64::INFINITY;
    for (pi, di) in p.iter().zip(dir) {
        if *di < 0.0 {
            t_max = t_max.min(pi / -di);
        }
    }
    let at = |t: f64| -> Vec<f64> { p.iter().zip(dir).map(|(a, b)| (a + t * b).max(0.0)).collect() };
    if kl(p, &at(t_max)) <= r {
        return at(t_max);
    }
    let (mut a, mut b) = (0.0, t_max);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if kl(p, &at(mid)) <= r {
            a = mid;
        } else {
            b = mid;
        }
    }
    at(a)
}

/// `(max, min)` of `f` over the boundary of a three-category KL ball by a
/// dense angular sweep followed by local refinement around each extremum.
/// Every evaluated point is feasible.
pub fn sweep_boundary3(p: &[f64], r: f64, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let s6 = 1.0 / 6f64.sqrt();
    let e1 = [s2, -s2, 0.0];
    let e2 = [s6, s6, -2.0 * s6];
    let eval = |theta: f64| {
        let (c, s) = (theta.cos(), theta.sin());
        let dir: Vec<f64> = (0..3).map(|i| c * e1[i] + s * e2[i]).collect();
        f(&ray_boundary(p, &dir, r))
    };
    let coarse = 20_000;
    let h = std::f64::consts::TAU / coarse as f64;
    let (mut imax, mut imin) = (0, 0);
    let (mut vmax, mut vmin) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..coarse {
        let v = eval(i as f64 * h);
        if v > vmax {
            vmax = v;
            imax = i;
        }
        if v < vmin {
            vmin = v;
            imin = i;
        }
    }
    let fine = 4000;
    for j in 0..=fine {
        let off = (j as f64 / fine as f64 - 0.5) * 2.0 * h;
        vmax = vmax.max(eval(imax as f64 * h + off));
        vmin = vmin.min(eval(imin as f64 * h + off));
    }
    (vmax, vmin)
}

/// `int |F - G|` between two empirical distributions via their CDFs.
pub fn w1_cdf(x: &[f64], y: &[f64]) -> f64 {
    let mut pts: Vec<f64> = x.iter().chain(y).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let cdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    pts.windows(2).map(|w| (cdf(x, w[0]) - cdf(y, w[0])).abs() * (w[1] - w[0])).sum()
}

/// Midpoint Riemann sum of `tau -> x_(ceil(m (1 + tau) / 2))` over `[a, b]`.
pub fn riemann_calibrated(sorted: &[f64], a: f64, b: f64, step: f64) -> f64 {
    let m = sorted.len();
    let steps = ((b - a) / step).round() as usize;
    let h = (b - a) / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let tau = a + (i as f64 + 0.5) * h;
        let idx = ((m as f64 * (1.0 + tau) / 2.0).ceil() as usize).clamp(1, m);
        total += sorted[idx - 1] * h;
    }
    total
}

/// Smallest sample value `t` with at least `alpha m` values `<= t`.
pub fn naive_quantile(values: &[f64], alpha: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    for &t in &v {
        let count = v.iter().filter(|&&x| x <= t).count() as f64;
        if count / m >= alpha - 1e-12 {
            return t;
        }
    }
    v[v.len() - 1]
}
