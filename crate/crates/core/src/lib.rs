//! Calibrated quantile curves of simulator-to-reality discrepancies.
//!
//! Each scenario contributes a pseudo-gap: the largest loss between the
//! simulator estimate and any parameter in a confidence set around the
//! ground-truth estimate. Order statistics of the pseudo-gaps, shifted by a
//! finite-sample correction, bound the fraction of new scenarios whose
//! discrepancy stays below a threshold.

pub mod calibration;
pub mod confidence_sets;
pub mod discrepancy;
pub mod domain;
pub mod error;
pub mod harness;
pub mod io;
pub mod pairwise;

pub use calibration::{
    auc_cal, band, calibrate, calibrated_curve, cvar_cal, empirical_quantile, epsilon_correction,
    guaranteed_coverage, new_scenario_set, CalibrationParams, CalibrationReport, QuantileCurve,
};
pub use confidence_sets::{build_confidence_set, ConfidenceSet, SetFamily};
pub use discrepancy::{compute_pseudo_gaps, pairwise_sup, GapMode, PseudoGap, SolverSettings};
pub use domain::{Dataset, LossSpec, ParamPoint, ScenarioRecord};
pub use error::{Error, Result};
pub use pairwise::{compute_pairwise, PairwiseReport};
