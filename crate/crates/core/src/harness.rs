//! Synthetic scenario pools with known ground truth, and Monte Carlo checks
//! of coverage, tightness and the two-sided band.
//!
//! Every scenario draws from its own ChaCha stream keyed by
//! `(seed, replication, role)` with the scenario index as stream id, so
//! results do not depend on thread scheduling.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Hypergeometric, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    band, calibrated_curve, empirical_quantile, epsilon_correction, QuantileCurve,
};
use crate::discrepancy::{compute_pseudo_gaps, GapMode, PseudoGap, SolverSettings};
use crate::domain::{
    evaluate_loss, BoundedScalar, Dataset, Empirical1D, LossSpec, ParamPoint, ScenarioRecord, Simplex,
};
use crate::error::{Error, Result};

/// Outcome model of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Two-point outcomes on `{lo, hi}` parametrised by their mean.
    Bounded { lo: f64, hi: f64 },
    Bernoulli,
    Multinomial { d: usize },
    /// Normal outcomes with known scale.
    Empirical1d { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NLaw {
    Fixed { n: u64 },
    /// Uniform over the integers `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
}

impl NLaw {
    fn sample(&self, rng: &mut impl Rng) -> u64 {
        match *self {
            NLaw::Fixed { n } => n,
            NLaw::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

/// Law of the true parameter `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthLaw {
    /// Scalar mean, success probability, or Normal location.
    Uniform { lo: f64, hi: f64 },
    /// Symmetric Dirichlet over the simplex.
    Dirichlet { concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub m_calibration: usize,
    pub m_holdout: usize,
    pub family: Family,
    pub n_law: NLaw,
    pub k: u64,
    pub truth_law: TruthLaw,
    /// Shift (scalar), logit shift (Bernoulli), tilt strength (simplex) or
    /// location shift (Normal) mapping `p` to the simulator parameter `q`.
    pub simulator_bias: f64,
    /// Bias of an optional second simulator.
    #[serde(default)]
    pub simulator_bias_2: Option<f64>,
    pub replications: usize,
    /// Draws representing a Normal truth in W1 evaluations.
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
}

fn default_truth_draws() -> usize {
    4000
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.m_calibration == 0 || self.m_holdout == 0 || self.k == 0 || self.replications == 0 {
            return bad("m_calibration, m_holdout, k and replications must be positive");
        }
        match self.n_law {
            NLaw::Fixed { n: 0 } => return bad("n must be positive"),
            NLaw::Uniform { lo, hi } if lo == 0 || lo > hi => return bad("n_law needs 1 <= lo <= hi"),
            _ => {}
        }
        match (self.family, self.truth_law) {
            (Family::Bounded { lo, hi }, TruthLaw::Uniform { lo: a, hi: b }) if lo < hi && lo <= a && a <= b && b <= hi => {}
            (Family::Bernoulli, TruthLaw::Uniform { lo, hi }) if (0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0 => {}
            (Family::Multinomial { d }, TruthLaw::Dirichlet { concentration }) if d >= 2 && concentration > 0.0 => {}
            (Family::Empirical1d { sigma }, TruthLaw::Uniform { lo, hi }) if sigma > 0.0 && lo <= hi && self.truth_draws > 0 => {}
            _ => return bad("truth_law does not fit the family"),
        }
        Ok(())
    }

    /// Advisory messages for legal but unusual configurations.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m_holdout < 10 * self.m_calibration {
            out.push(format!(
                "m_holdout = {} is below 10 x m_calibration = {}",
                self.m_holdout,
                10 * self.m_calibration
            ));
        }
        out
    }
}

/// True parameters of one scenario, withheld from calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub p: ParamPoint,
    pub q: ParamPoint,
    pub q2: Option<ParamPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    pub oracle: Vec<Oracle>,
}

/// Which pool a scenario stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Calibration = 0,
    Holdout = 1,
    Master = 2,
    Subsample = 3,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for scenario `index` of `(seed, replication, role)`.
pub fn scenario_rng(seed: u64, replication: u64, role: Role, index: u64) -> ChaCha8Rng {
    let key = mix(mix(mix(seed) ^ replication) ^ role as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Latent parameter of a scenario: a scalar for the one-dimensional
/// families, a probability vector for the multinomial one.
#[derive(Debug, Clone, PartialEq)]
enum Latent {
    Scalar(f64),
    Probs(Vec<f64>),
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sample_truth(cfg: &GeneratorConfig, rng: &mut impl Rng) -> Latent {
    match (cfg.truth_law, cfg.family) {
        (TruthLaw::Dirichlet { concentration }, Family::Multinomial { d }) => {
            let g = Gamma::new(concentration, 1.0).expect("validated");
            let x: Vec<f64> = (0..d).map(|_| g.sample(rng)).collect();
            let s: f64 = x.iter().sum();
            Latent::Probs(x.iter().map(|v| v / s).collect())
        }
        (TruthLaw::Uniform { lo, hi }, _) => Latent::Scalar(if lo == hi { lo } else { rng.random_range(lo..=hi) }),
        _ => unreachable!("validated"),
    }
}

fn apply_bias(family: Family, p: &Latent, bias: f64) -> Latent {
    match (family, p) {
        (Family::Bounded { lo, hi }, Latent::Scalar(x)) => Latent::Scalar((x + bias).clamp(lo, hi)),
        (Family::Bernoulli, Latent::Scalar(x)) => {
            if *x <= 0.0 || *x >= 1.0 || bias == 0.0 {
                Latent::Scalar(*x)
            } else {
                Latent::Scalar(logistic(logit(*x) + bias))
            }
        }
        (Family::Empirical1d { .. }, Latent::Scalar(x)) => Latent::Scalar(x + bias),
        (Family::Multinomial { d }, Latent::Probs(p)) => {
            let w: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(i, pi)| pi * (bias * i as f64 / (d - 1) as f64).exp())
                .collect();
            let s: f64 = w.iter().sum();
            Latent::Probs(w.iter().map(|v| v / s).collect())
        }
        _ => unreachable!("latent matches family"),
    }
}

fn binomial(n: u64, p: f64, rng: &mut impl Rng) -> u64 {
    Binomial::new(n, p.clamp(0.0, 1.0)).expect("valid binomial").sample(rng)
}

fn multinomial_counts(n: u64, p: &[f64], rng: &mut impl Rng) -> Vec<u64> {
    let mut counts = Vec::with_capacity(p.len());
    let mut rem_n = n;
    let mut rem_mass = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        if i + 1 == p.len() {
            counts.push(rem_n);
            break;
        }
        let c = if rem_mass > 0.0 { binomial(rem_n, pi / rem_mass, rng) } else { 0 };
        counts.push(c);
        rem_n -= c;
        rem_mass -= pi;
    }
    counts
}

/// Raw outcome sample of size `n`, in the sufficient form of each family.
#[derive(Debug, Clone, PartialEq)]
enum Sample {
    /// Category counts (two categories for the scalar families).
    Counts(Vec<u64>),
    Draws(Vec<f64>),
}

fn draw(family: Family, latent: &Latent, n: u64, rng: &mut impl Rng) -> Sample {
    match (family, latent) {
        (Family::Bounded { lo, hi }, Latent::Scalar(x)) => {
            let w = (x - lo) / (hi - lo);
            let up = binomial(n, w, rng);
            Sample::Counts(vec![up, n - up])
        }
        (Family::Bernoulli, Latent::Scalar(x)) => {
            let s = binomial(n, *x, rng);
            Sample::Counts(vec![s, n - s])
        }
        (Family::Multinomial { .. }, Latent::Probs(p)) => Sample::Counts(multinomial_counts(n, p, rng)),
        (Family::Empirical1d { sigma }, Latent::Scalar(mu)) => {
            let nd = Normal::new(*mu, sigma).expect("validated");
            Sample::Draws((0..n).map(|_| nd.sample(rng)).collect())
        }
        _ => unreachable!("latent matches family"),
    }
}

fn estimate(family: Family, s: &Sample) -> ParamPoint {
    match (family, s) {
        (Family::Bounded { lo, hi }, Sample::Counts(c)) => {
            let n = (c[0] + c[1]) as f64;
            let x = lo + (hi - lo) * c[0] as f64 / n;
            BoundedScalar::new(x.clamp(lo, hi), lo, hi).expect("inside domain").into()
        }
        (Family::Bernoulli, Sample::Counts(c)) => {
            let n = (c[0] + c[1]) as f64;
            Simplex::bernoulli(c[0] as f64 / n).expect("valid probability").into()
        }
        (Family::Multinomial { .. }, Sample::Counts(c)) => Simplex::from_counts(c).expect("positive total").into(),
        (Family::Empirical1d { sigma }, Sample::Draws(x)) => {
            Empirical1D::new(x.clone(), Some(sigma)).expect("finite draws").into()
        }
        _ => unreachable!("sample matches family"),
    }
}

fn latent_point(cfg: &GeneratorConfig, latent: &Latent, rng: &mut impl Rng) -> ParamPoint {
    match (cfg.family, latent) {
        (Family::Bounded { lo, hi }, Latent::Scalar(x)) => BoundedScalar::new(*x, lo, hi).expect("inside domain").into(),
        (Family::Bernoulli, Latent::Scalar(x)) => Simplex::bernoulli(*x).expect("valid probability").into(),
        (Family::Multinomial { .. }, Latent::Probs(p)) => Simplex::new(p.clone()).expect("normalised").into(),
        (Family::Empirical1d { sigma }, Latent::Scalar(mu)) => {
            let nd = Normal::new(*mu, sigma).expect("validated");
            let x = (0..cfg.truth_draws).map(|_| nd.sample(rng)).collect();
            Empirical1D::new(x, Some(sigma)).expect("finite draws").into()
        }
        _ => unreachable!("latent matches family"),
    }
}

struct RawScenario {
    n: u64,
    p: Latent,
    q: Latent,
    q2: Option<Latent>,
}

fn raw_scenario(cfg: &GeneratorConfig, rng: &mut impl Rng) -> RawScenario {
    let p = sample_truth(cfg, rng);
    let n = cfg.n_law.sample(rng);
    let q = apply_bias(cfg.family, &p, cfg.simulator_bias);
    let q2 = cfg.simulator_bias_2.map(|b| apply_bias(cfg.family, &p, b));
    RawScenario { n, p, q, q2 }
}

fn scenario(cfg: &GeneratorConfig, id: String, rng: &mut ChaCha8Rng) -> (ScenarioRecord, Oracle) {
    let raw = raw_scenario(cfg, rng);
    let p_hat = estimate(cfg.family, &draw(cfg.family, &raw.p, raw.n, rng));
    let q_hat = estimate(cfg.family, &draw(cfg.family, &raw.q, cfg.k, rng));
    let q_hat_2 = raw
        .q2
        .as_ref()
        .map(|q2| estimate(cfg.family, &draw(cfg.family, q2, cfg.k, rng)));
    let oracle = Oracle {
        p: latent_point(cfg, &raw.p, rng),
        q: latent_point(cfg, &raw.q, rng),
        q2: raw.q2.as_ref().map(|q2| latent_point(cfg, q2, rng)),
    };
    let rec = ScenarioRecord {
        scenario_id: id,
        p_hat,
        n: raw.n,
        q_hat,
        q_hat_2,
        k: cfg.k,
    };
    (rec, oracle)
}

/// `m` scenarios of one pool.
pub fn generate_pool(cfg: &GeneratorConfig, replication: u64, role: Role, m: usize) -> Generated {
    let prefix = match role {
        Role::Calibration => "cal",
        Role::Holdout => "hold",
        Role::Master => "master",
        Role::Subsample => "sub",
    };
    let (records, oracle): (Vec<_>, Vec<_>) = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut rng = scenario_rng(cfg.seed, replication, role, j as u64);
            scenario(cfg, format!("{prefix}-{replication}-{j:06}"), &mut rng)
        })
        .unzip();
    Generated {
        dataset: Dataset::new(records),
        oracle,
    }
}

/// Calibration pool of replication 0.
pub fn generate(cfg: &GeneratorConfig) -> Result<Generated> {
    cfg.validate()?;
    Ok(generate_pool(cfg, 0, Role::Calibration, cfg.m_calibration))
}

/// Shared knobs of the Monte Carlo experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub gamma: f64,
    pub eta: f64,
    pub loss: LossSpec,
    pub mode: GapMode,
    pub settings: SolverSettings,
}

impl ExperimentParams {
    pub fn new(gamma: f64, eta: f64, loss: LossSpec) -> Self {
        Self {
            gamma,
            eta,
            loss,
            mode: GapMode::SimEstimateTarget,
            settings: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub alpha: f64,
    pub raw_bound: f64,
    pub mean_coverage: f64,
    /// Fraction of replications whose holdout coverage reaches `raw_bound`.
    pub frac_meeting_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    /// `coverage[r][a]`: holdout coverage of replication `r` at `alpha_grid[a]`.
    pub coverage: Vec<Vec<f64>>,
}

impl CoverageTable {
    pub fn row(&self, alpha: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| (r.alpha - alpha).abs() < 1e-12)
    }
}

/// Holdout target of the theorem: `L(p, q_hat)` with the simulator at budget
/// `k`, or `L(p, q)` when calibrating joint sets.
fn holdout_targets(pool: &Generated, params: &ExperimentParams) -> Result<Vec<f64>> {
    pool.dataset
        .records
        .par_iter()
        .zip(&pool.oracle)
        .map(|(rec, or)| match params.mode {
            GapMode::SimEstimateTarget => evaluate_loss(&params.loss, &or.p, &rec.q_hat),
            GapMode::TrueSimTarget => evaluate_loss(&params.loss, &or.p, &or.q),
        })
        .collect()
}

fn calibration_gaps(cfg: &GeneratorConfig, rep: u64, params: &ExperimentParams) -> Result<Vec<PseudoGap>> {
    let pool = generate_pool(cfg, rep, Role::Calibration, cfg.m_calibration);
    compute_pseudo_gaps(&pool.dataset, params.gamma, &params.loss, params.mode, &params.settings)
}

/// Holdout coverage of `V(1 - alpha/2)` over replications.
pub fn coverage_experiment(cfg: &GeneratorConfig, params: &ExperimentParams, alpha_grid: &[f64]) -> Result<CoverageTable> {
    cfg.validate()?;
    let m = cfg.m_calibration;
    let bounds = alpha_grid
        .iter()
        .map(|&a| Ok(1.0 - a - epsilon_correction(a, m, params.eta)? / (m as f64).sqrt()))
        .collect::<Result<Vec<_>>>()?;
    let coverage = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let gaps = calibration_gaps(cfg, rep, params)?;
            let curve = QuantileCurve::from_upper(&gaps)?;
            let holdout = generate_pool(cfg, rep, Role::Holdout, cfg.m_holdout);
            let targets = holdout_targets(&holdout, params)?;
            alpha_grid
                .iter()
                .map(|&a| {
                    let t = empirical_quantile(&curve, 1.0 - a / 2.0)?;
                    Ok(targets.iter().filter(|&&x| x <= t).count() as f64 / targets.len() as f64)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let reps = coverage.len() as f64;
    let rows = alpha_grid
        .iter()
        .zip(&bounds)
        .enumerate()
        .map(|(i, (&alpha, &raw_bound))| CoverageRow {
            alpha,
            raw_bound,
            mean_coverage: coverage.iter().map(|c| c[i]).sum::<f64>() / reps,
            frac_meeting_bound: coverage.iter().filter(|c| c[i] >= raw_bound).count() as f64 / reps,
        })
        .collect();
    Ok(CoverageTable { rows, coverage })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub n: u64,
    pub mean_distance: f64,
    /// Per-seed sup distance.
    pub distances: Vec<f64>,
}

/// Levels at which calibrated curves are compared.
pub fn tightness_tau_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Subsample `n` of the master outcomes without replacement.
fn subsample(master: &Sample, n: u64, rng: &mut impl Rng) -> Sample {
    match master {
        Sample::Counts(c) => {
            let mut total: u64 = c.iter().sum();
            let mut left = n.min(total);
            let mut out = Vec::with_capacity(c.len());
            for (i, &ci) in c.iter().enumerate() {
                if i + 1 == c.len() {
                    out.push(left);
                    break;
                }
                let x = if left == 0 || ci == 0 {
                    0
                } else if ci == total {
                    left
                } else {
                    match Hypergeometric::new(total, ci, left) {
                        Ok(h) => h.sample(rng),
                        // inverse transform underflows on some large urns
                        Err(_) => index::sample(rng, total as usize, left as usize)
                            .iter()
                            .filter(|&k| (k as u64) < ci)
                            .count() as u64,
                    }
                };
                out.push(x);
                total -= ci;
                left -= x;
            }
            Sample::Counts(out)
        }
        Sample::Draws(x) => {
            let amount = (n as usize).min(x.len());
            Sample::Draws(index::sample(rng, x.len(), amount).iter().map(|i| x[i]).collect())
        }
    }
}

/// Sup over `tau` of the distance between the calibrated curve built from
/// subsampled estimates and the same index-adjusted curve of oracle gaps
/// `L(p, q_hat)`, where `p` is the master-sample estimate. Each seed is one
/// replication; `cfg.m_calibration` scenarios per seed.
pub fn tightness_experiment(
    cfg: &GeneratorConfig,
    params: &ExperimentParams,
    master_size: u64,
    n_sweep: &[u64],
    seeds: usize,
) -> Result<Vec<TightnessRow>> {
    cfg.validate()?;
    let taus = tightness_tau_grid();
    let per_seed = (0..seeds as u64)
        .into_par_iter()
        .map(|rep| {
            let m = cfg.m_calibration;
            let mut masters = Vec::with_capacity(m);
            let mut base = Vec::with_capacity(m);
            for j in 0..m {
                let mut rng = scenario_rng(cfg.seed, rep, Role::Master, j as u64);
                let raw = raw_scenario(cfg, &mut rng);
                let master = draw(cfg.family, &raw.p, master_size, &mut rng);
                let p = estimate(cfg.family, &master);
                let q_hat = estimate(cfg.family, &draw(cfg.family, &raw.q, cfg.k, &mut rng));
                masters.push(master);
                base.push((p, q_hat));
            }
            let oracle: Vec<f64> = base
                .iter()
                .map(|(p, q)| evaluate_loss(&params.loss, p, q))
                .collect::<Result<_>>()?;
            let oracle = QuantileCurve::new(oracle)?;
            n_sweep
                .iter()
                .enumerate()
                .map(|(ni, &n)| {
                    let records = (0..m)
                        .map(|j| {
                            let mut rng = scenario_rng(cfg.seed, rep, Role::Subsample, (ni * m + j) as u64);
                            ScenarioRecord {
                                scenario_id: format!("t-{rep}-{j:06}"),
                                p_hat: estimate(cfg.family, &subsample(&masters[j], n, &mut rng)),
                                n,
                                q_hat: base[j].1.clone(),
                                q_hat_2: None,
                                k: cfg.k,
                            }
                        })
                        .collect();
                    let gaps = compute_pseudo_gaps(
                        &Dataset::new(records),
                        params.gamma,
                        &params.loss,
                        params.mode,
                        &params.settings,
                    )?;
                    let curve = QuantileCurve::from_upper(&gaps)?;
                    let mut dist = 0.0f64;
                    for &t in &taus {
                        dist = dist.max((calibrated_curve(&curve, t)? - calibrated_curve(&oracle, t)?).abs());
                    }
                    Ok(dist)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(n_sweep
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let distances: Vec<f64> = per_seed.iter().map(|d| d[ni]).collect();
            TightnessRow {
                n,
                mean_distance: distances.iter().sum::<f64>() / distances.len() as f64,
                distances,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub tau: f64,
    pub lower_violation_rate: f64,
    pub upper_violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub rows: Vec<BandRow>,
    /// Replications where the lower side fails at some `tau`.
    pub lower_violation_rate: f64,
    /// Replications where the upper side fails at some `tau` beyond the tolerance.
    pub upper_violation_rate: f64,
    /// Replications with `lo <= hi` at every `tau`.
    pub sandwich_rate: f64,
}

/// Checks `V_lower(gamma tau) <= V_oracle(tau) <= V_upper(gamma + (1-gamma) tau) + tolerance`
/// with `V_oracle` the empirical quantile of holdout targets.
pub fn band_experiment(
    cfg: &GeneratorConfig,
    params: &ExperimentParams,
    tau_grid: &[f64],
    tolerance: f64,
) -> Result<BandTable> {
    cfg.validate()?;
    let per_rep = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let gaps = calibration_gaps(cfg, rep, params)?;
            let upper = QuantileCurve::from_upper(&gaps)?;
            let lower = QuantileCurve::from_lower(&gaps)?;
            let holdout = generate_pool(cfg, rep, Role::Holdout, cfg.m_holdout);
            let oracle = QuantileCurve::new(holdout_targets(&holdout, params)?)?;
            tau_grid
                .iter()
                .map(|&t| {
                    let b = band(&upper, &lower, params.gamma, t)?;
                    let v = empirical_quantile(&oracle, t)?;
                    Ok((b.lo > v, v > b.hi + tolerance, b.lo <= b.hi))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let reps = per_rep.len() as f64;
    let rate = |f: &dyn Fn(&Vec<(bool, bool, bool)>) -> bool| per_rep.iter().filter(|r| f(r)).count() as f64 / reps;
    let rows = tau_grid
        .iter()
        .enumerate()
        .map(|(i, &tau)| BandRow {
            tau,
            lower_violation_rate: rate(&|r| r[i].0),
            upper_violation_rate: rate(&|r| r[i].1),
        })
        .collect();
    Ok(BandTable {
        rows,
        lower_violation_rate: rate(&|r| r.iter().any(|x| x.0)),
        upper_violation_rate: rate(&|r| r.iter().any(|x| x.1)),
        sandwich_rate: rate(&|r| r.iter().all(|x| x.2)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli_cfg() -> GeneratorConfig {
        GeneratorConfig {
            seed: 7,
            m_calibration: 50,
            m_holdout: 500,
            family: Family::Bernoulli,
            n_law: NLaw::Uniform { lo: 450, hi: 500 },
            k: 200,
            truth_law: TruthLaw::Uniform { lo: 0.05, hi: 0.95 },
            simulator_bias: 0.4,
            simulator_bias_2: Some(1.0),
            replications: 3,
            truth_draws: 4000,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = bernoulli_cfg();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().dataset, generate(&other).unwrap().dataset);
    }

    #[test]
    fn large_n_estimates_are_close() {
        for family in [Family::Bernoulli, Family::Bounded { lo: -1.0, hi: 1.0 }] {
            let truth = match family {
                Family::Bernoulli => TruthLaw::Uniform { lo: 0.05, hi: 0.95 },
                _ => TruthLaw::Uniform { lo: -0.8, hi: 0.8 },
            };
            let cfg = GeneratorConfig {
                family,
                truth_law: truth,
                n_law: NLaw::Fixed { n: 1_000_000 },
                ..bernoulli_cfg()
            };
            let g = generate(&cfg).unwrap();
            for (rec, or) in g.dataset.records.iter().zip(&g.oracle) {
                let d = match (&rec.p_hat, &or.p) {
                    (ParamPoint::Simplex { probs: a }, ParamPoint::Simplex { probs: b }) => (a.probs()[0] - b.probs()[0]).abs(),
                    (ParamPoint::BoundedScalar { point: a }, ParamPoint::BoundedScalar { point: b }) => (a.value() - b.value()).abs(),
                    _ => unreachable!(),
                };
                assert!(d < 0.005, "{d}");
            }
        }
    }

    #[test]
    fn multinomial_and_empirical_generate() {
        let cfg = GeneratorConfig {
            family: Family::Multinomial { d: 4 },
            truth_law: TruthLaw::Dirichlet { concentration: 1.0 },
            ..bernoulli_cfg()
        };
        let g = generate(&cfg).unwrap();
        assert!(g.dataset.records.iter().all(|r| r.p_hat.as_simplex().unwrap().dim() == 4));
        let cfg = GeneratorConfig {
            family: Family::Empirical1d { sigma: 1.0 },
            truth_law: TruthLaw::Uniform { lo: -1.0, hi: 1.0 },
            n_law: NLaw::Fixed { n: 30 },
            truth_draws: 100,
            ..bernoulli_cfg()
        };
        let g = generate(&cfg).unwrap();
        assert!(g.dataset.records.iter().all(|r| r.p_hat.as_empirical().unwrap().len() == 30));
        assert_eq!(g.oracle[0].p.as_empirical().unwrap().len(), 100);
    }

    #[test]
    fn identity_bias_gives_full_coverage() {
        let cfg = GeneratorConfig {
            simulator_bias: 0.0,
            truth_law: TruthLaw::Uniform { lo: 0.0, hi: 0.0 },
            ..bernoulli_cfg()
        };
        let params = ExperimentParams::new(0.5, 0.05, LossSpec::TotalVariation);
        let t = coverage_experiment(&cfg, &params, &[0.1, 0.5]).unwrap();
        for row in &t.rows {
            assert_eq!(row.mean_coverage, 1.0);
        }
    }

    #[test]
    fn subsample_counts_preserve_totals() {
        let mut rng = scenario_rng(1, 0, Role::Subsample, 0);
        let s = subsample(&Sample::Counts(vec![30, 50, 20]), 40, &mut rng);
        let Sample::Counts(c) = s else { panic!() };
        assert_eq!(c.iter().sum::<u64>(), 40);
        assert!(c[0] <= 30 && c[1] <= 50 && c[2] <= 20);
        let s = subsample(&Sample::Counts(vec![30, 50, 20]), 100, &mut rng);
        assert_eq!(s, Sample::Counts(vec![30, 50, 20]));
    }

    #[test]
    fn rejects_inconsistent_config() {
        let cfg = GeneratorConfig {
            truth_law: TruthLaw::Dirichlet { concentration: 1.0 },
            ..bernoulli_cfg()
        };
        assert!(generate(&cfg).is_err());
        assert_eq!(bernoulli_cfg().warnings().len(), 0);
        let cfg = GeneratorConfig { m_holdout: 100, ..bernoulli_cfg() };
        assert_eq!(cfg.warnings().len(), 1);
    }
}
