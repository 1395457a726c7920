//! Comparing two simulators on one scenario pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{empirical_quantile, epsilon_correction, QuantileCurve};
use crate::confidence_sets::build_confidence_set;
use crate::discrepancy::{pairwise_sup, SolverSettings};
use crate::domain::{evaluate_loss, validate_dataset, Dataset, LossSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseGap {
    pub scenario_id: String,
    /// `sup_{u in C} L(u, q1) - L(u, q2)`.
    pub delta: f64,
    /// `L(p_hat, q1) - L(p_hat, q2)`.
    pub plug_in: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub alpha: f64,
    /// `U(1 - alpha/2)`.
    pub threshold: f64,
    pub epsilon: f64,
    pub raw: f64,
    /// Guaranteed fraction of scenarios on which simulator 1 is at least as good.
    pub fraction: f64,
    /// `threshold <= 0`.
    pub certified: bool,
    /// `threshold < 0`.
    pub strict: bool,
    /// `threshold == 0`.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub m: usize,
    pub gamma: f64,
    pub eta: f64,
    pub loss: LossSpec,
    pub gaps: Vec<PairwiseGap>,
    pub u_curve: QuantileCurve,
    pub dominance: Vec<Dominance>,
}

impl PairwiseReport {
    pub fn at(&self, alpha: f64) -> Option<&Dominance> {
        self.dominance.iter().find(|d| (d.alpha - alpha).abs() < 1e-12)
    }
}

pub fn dominance_table(curve: &QuantileCurve, eta: f64, alpha_grid: &[f64]) -> Result<Vec<Dominance>> {
    let m = curve.len();
    alpha_grid
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::AlphaOutOfRange(alpha));
            }
            let threshold = empirical_quantile(curve, 1.0 - alpha / 2.0)?;
            let epsilon = epsilon_correction(alpha, m, eta)?;
            let raw = 1.0 - alpha - epsilon / (m as f64).sqrt();
            Ok(Dominance {
                alpha,
                threshold,
                epsilon,
                raw,
                fraction: raw.clamp(0.0, 1.0),
                certified: threshold <= 0.0,
                strict: threshold < 0.0,
                tie: threshold == 0.0,
            })
        })
        .collect()
}

/// Per-scenario `delta_j`, the curve `U` and the dominance table.
pub fn compute_pairwise(
    d: &Dataset,
    gamma: f64,
    loss: &LossSpec,
    eta: f64,
    alpha_grid: &[f64],
    settings: &SolverSettings,
) -> Result<PairwiseReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    let findings = validate_dataset(d);
    if !findings.is_empty() {
        return Err(Error::InvalidDataset(findings));
    }
    if let Some(rec) = d.records.iter().find(|r| r.q_hat_2.is_none()) {
        return Err(Error::MissingSecondSimulator(rec.scenario_id.clone()));
    }
    if d.records.windows(2).any(|w| w[0].k != w[1].k) {
        return Err(Error::MixedBudgets);
    }
    let gaps = d
        .records
        .par_iter()
        .map(|rec| {
            let run = || -> Result<PairwiseGap> {
                let q2 = rec.q_hat_2.as_ref().expect("checked above");
                let set = build_confidence_set(rec, gamma, None)?;
                let plug_in = evaluate_loss(loss, &rec.p_hat, &rec.q_hat)? - evaluate_loss(loss, &rec.p_hat, q2)?;
                Ok(PairwiseGap {
                    scenario_id: rec.scenario_id.clone(),
                    delta: pairwise_sup(&set, &rec.q_hat, q2, loss, settings)?,
                    plug_in,
                })
            };
            run().map_err(|e| e.in_scenario(&rec.scenario_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let u_curve = QuantileCurve::new(gaps.iter().map(|g| g.delta).collect())?;
    Ok(PairwiseReport {
        m: gaps.len(),
        gamma,
        eta,
        loss: *loss,
        dominance: dominance_table(&u_curve, eta, alpha_grid)?,
        gaps,
        u_curve,
    })
}
