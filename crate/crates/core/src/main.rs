use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use simgap::calibration::{band, default_alpha_grid, new_scenario_set, CalibrationParams};
use simgap::discrepancy::{GapMode, SolverSettings};
use simgap::domain::{BoundedScalar, Empirical1D, LossSpec, ParamPoint, Simplex};
use simgap::harness::{self, ExperimentParams, Family};
use simgap::io::{self, Experiment, IngestOptions, IoError, Provenance, RunConfig};
use simgap::{calibrate, compute_pairwise, Dataset, Error};

#[derive(Parser)]
#[command(name = "simgap", version, about = "Calibrated quantile curves of simulator-to-reality discrepancy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pseudo-gaps, calibrated quantile curve, coverage table, AUC and CVaR.
    Calibrate(Common),
    /// Certify whether simulator 1 is at least as good as simulator 2.
    Compare(Common),
    /// Two-sided quantile band.
    Band {
        #[command(flatten)]
        common: Common,
        /// Comma-separated tau levels.
        #[arg(long, env = "SIMGAP_TAU_GRID", default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        tau_grid: String,
    },
    /// Parameter set for a new scenario given its simulator estimate.
    NewScenario {
        #[command(flatten)]
        common: Common,
        /// Simulator estimate as JSON: a number, or an array for multinomial and empirical data.
        #[arg(long)]
        q_hat: String,
        /// Miscoverage level of the set.
        #[arg(long)]
        alpha: f64,
    },
    /// Synthetic experiments and dataset generation from a config file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the generator seed.
        #[arg(long, env = "SIMGAP_SEED")]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON Lines).
    #[arg(long, short, env = "SIMGAP_INPUT")]
    input: Option<PathBuf>,
    /// TOML config; command-line flags and environment take precedence.
    #[arg(long, env = "SIMGAP_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, env = "SIMGAP_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "SIMGAP_GAMMA")]
    gamma: Option<f64>,
    #[arg(long, env = "SIMGAP_ETA")]
    eta: Option<f64>,
    /// squared, absolute, kl, tv or w1.
    #[arg(long, env = "SIMGAP_LOSS")]
    loss: Option<String>,
    /// KL smoothing.
    #[arg(long, env = "SIMGAP_SMOOTHING")]
    smoothing: Option<f64>,
    /// Sub-Gaussian scale for empirical records without one.
    #[arg(long, env = "SIMGAP_SIGMA")]
    sigma: Option<f64>,
    /// sim-estimate or true-sim.
    #[arg(long, env = "SIMGAP_MODE")]
    mode: Option<String>,
    /// lo:hi:step or a comma-separated list.
    #[arg(long, env = "SIMGAP_ALPHA_GRID")]
    alpha_grid: Option<String>,
    /// Certified optimiser tolerance.
    #[arg(long, env = "SIMGAP_MESH")]
    mesh: Option<f64>,
}

impl Common {
    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(base.merged(RunConfig {
            input: self.input.clone(),
            out: self.out.clone(),
            gamma: self.gamma,
            eta: self.eta,
            loss: self.loss.clone(),
            smoothing: self.smoothing,
            sigma: self.sigma,
            mode: self.mode.clone(),
            alpha_grid: self.alpha_grid.clone(),
            mesh: self.mesh,
            cvar_levels: None,
            simulate: None,
        }))
    }
}

fn parse_mode(s: &str) -> anyhow::Result<GapMode> {
    match s {
        "sim-estimate" | "sim_estimate" => Ok(GapMode::SimEstimateTarget),
        "true-sim" | "true_sim" => Ok(GapMode::TrueSimTarget),
        other => bail!(Error::InvalidParameter(format!("unknown mode `{other}`"))),
    }
}

/// Fully resolved settings; written back into every report.
struct Resolved {
    config: RunConfig,
    params: CalibrationParams,
    settings: SolverSettings,
}

fn resolve(mut cfg: RunConfig, example: Option<&ParamPoint>) -> anyhow::Result<Resolved> {
    let mut loss = match (&cfg.loss, example) {
        (Some(s), _) => s.parse::<LossSpec>()?,
        (None, Some(p)) => LossSpec::default_for(p),
        (None, None) => LossSpec::SquaredError,
    };
    if let LossSpec::Kl { smoothing } = &mut loss {
        *smoothing = cfg.smoothing.unwrap_or(0.0);
        if !(*smoothing >= 0.0) {
            bail!(Error::InvalidParameter("smoothing must be nonnegative".into()));
        }
    }
    let alpha_grid = match &cfg.alpha_grid {
        Some(s) => io::parse_alpha_grid(s).map_err(Error::InvalidParameter)?,
        None => default_alpha_grid(),
    };
    let mode = parse_mode(cfg.mode.as_deref().unwrap_or("sim-estimate"))?;
    let mut settings = SolverSettings::default();
    if let Some(mesh) = cfg.mesh {
        if !(mesh > 0.0) {
            bail!(Error::InvalidParameter("mesh must be positive".into()));
        }
        settings.mesh = mesh;
        settings.slack_cap = settings.slack_cap.max(10.0 * mesh);
    }
    let params = CalibrationParams {
        gamma: cfg.gamma.unwrap_or(0.5),
        eta: cfg.eta.unwrap_or(0.05),
        loss,
        mode,
        alpha_grid,
        cvar_levels: cfg.cvar_levels.clone().unwrap_or_else(|| CalibrationParams::default().cvar_levels),
    };
    cfg.gamma = Some(params.gamma);
    cfg.eta = Some(params.eta);
    cfg.loss = Some(loss.id().into());
    if let LossSpec::Kl { smoothing } = loss {
        cfg.smoothing = Some(smoothing);
    }
    cfg.mode = Some(match mode {
        GapMode::SimEstimateTarget => "sim-estimate".into(),
        GapMode::TrueSimTarget => "true-sim".into(),
    });
    cfg.alpha_grid = Some(cfg.alpha_grid.take().unwrap_or_else(|| "0.01:0.99:0.01".into()));
    cfg.mesh = Some(settings.mesh);
    cfg.cvar_levels = Some(params.cvar_levels.clone());
    Ok(Resolved { config: cfg, params, settings })
}

fn load_dataset(cfg: &RunConfig) -> anyhow::Result<(Dataset, String)> {
    let path = cfg.input.clone().context("no input file given (--input)")?;
    let d = io::ingest(&path, &IngestOptions { sigma: cfg.sigma })?;
    for w in simgap::confidence_sets::regime_warnings(&d) {
        eprintln!("warning: {w}");
    }
    let hash = io::file_sha256(&path)?;
    Ok((d, hash))
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("simgap-out"))
}

fn report_written(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn parse_q_hat(text: &str, like: &ParamPoint, sigma: Option<f64>) -> anyhow::Result<ParamPoint> {
    let v: serde_json::Value = serde_json::from_str(text).context("--q-hat is not valid JSON")?;
    let nums = || -> anyhow::Result<Vec<f64>> {
        v.as_array()
            .context("--q-hat must be an array")?
            .iter()
            .map(|x| x.as_f64().context("--q-hat must contain numbers"))
            .collect()
    };
    Ok(match like {
        ParamPoint::BoundedScalar { point } => {
            let (a, b) = point.domain();
            BoundedScalar::new(v.as_f64().context("--q-hat must be a number")?, a, b)?.into()
        }
        ParamPoint::Simplex { probs } if probs.dim() == 2 && v.is_number() => Simplex::bernoulli(v.as_f64().unwrap_or(0.0))?.into(),
        ParamPoint::Simplex { .. } => Simplex::new(nums()?)?.into(),
        ParamPoint::Empirical1D { dist } => Empirical1D::new(nums()?, sigma.or(dist.sigma()))?.into(),
    })
}

fn default_simulate_loss(family: Family) -> &'static str {
    match family {
        Family::Bounded { .. } => "squared",
        Family::Bernoulli | Family::Multinomial { .. } => "kl",
        Family::Empirical1d { .. } => "w1",
    }
}

fn simulate(common: &Common, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = common.run_config()?;
    let Some(mut sim) = cfg.simulate.clone() else {
        bail!(IoError::Config("simulate needs a [simulate] section in --config".into()));
    };
    if let Some(s) = seed {
        sim.generator.seed = s;
    }
    cfg.simulate = Some(sim.clone());
    if cfg.loss.is_none() {
        cfg.loss = Some(default_simulate_loss(sim.generator.family).into());
    }
    let r = resolve(cfg, None)?;
    sim.generator.validate()?;
    for w in sim.generator.warnings() {
        eprintln!("warning: {w}");
    }
    let out = out_dir(&r.config);
    let prov = Provenance::now(None);
    let params = ExperimentParams {
        gamma: r.params.gamma,
        eta: r.params.eta,
        loss: r.params.loss,
        mode: r.params.mode,
        settings: r.settings,
    };
    let files = match sim.experiment {
        Experiment::Generate => {
            let g = harness::generate(&sim.generator)?;
            std::fs::create_dir_all(&out).map_err(|source| IoError::File { path: out.clone(), source })?;
            let path = out.join("dataset.jsonl");
            io::write_dataset(&g.dataset, &path)?;
            vec![path]
        }
        Experiment::Coverage => {
            let t = harness::coverage_experiment(&sim.generator, &params, &r.params.alpha_grid)?;
            io::emit_experiment("coverage", &io::coverage_csv(&t), &t, &r.config, &prov, &out)?
        }
        Experiment::Tightness => {
            let sweep = sim.n_sweep.clone().unwrap_or_else(|| vec![100, 200, 500, 1000]);
            let rows = harness::tightness_experiment(
                &sim.generator,
                &params,
                sim.master_size.unwrap_or(20_000),
                &sweep,
                sim.seeds.unwrap_or(20),
            )?;
            io::emit_experiment("tightness", &io::tightness_csv(&rows), &rows, &r.config, &prov, &out)?
        }
        Experiment::Band => {
            let taus = sim.tau_grid.clone().unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect());
            let t = harness::band_experiment(&sim.generator, &params, &taus, sim.band_tolerance.unwrap_or(0.0))?;
            io::emit_experiment("band", &io::band_table_csv(&t), &t, &r.config, &prov, &out)?
        }
    };
    report_written(&files);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Calibrate(common) => {
            let cfg = common.run_config()?;
            let (d, hash) = load_dataset(&cfg)?;
            let r = resolve(cfg, Some(&d.records[0].p_hat))?;
            let report = calibrate(&d, &r.params, &r.settings)?;
            let files = io::emit_report(&report, &r.config, &Provenance::now(Some(hash)), &out_dir(&r.config))?;
            print!("{}", io::calibration_summary(&report));
            report_written(&files);
        }
        Command::Compare(common) => {
            let cfg = common.run_config()?;
            let (d, hash) = load_dataset(&cfg)?;
            let r = resolve(cfg, Some(&d.records[0].p_hat))?;
            let report = compute_pairwise(&d, r.params.gamma, &r.params.loss, r.params.eta, &r.params.alpha_grid, &r.settings)?;
            let files = io::emit_pairwise(&report, &r.config, &Provenance::now(Some(hash)), &out_dir(&r.config))?;
            print!("{}", io::pairwise_summary(&report));
            report_written(&files);
        }
        Command::Band { common, tau_grid } => {
            let cfg = common.run_config()?;
            let (d, hash) = load_dataset(&cfg)?;
            let r = resolve(cfg, Some(&d.records[0].p_hat))?;
            let taus: Vec<f64> = tau_grid
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Error::InvalidParameter(format!("tau grid `{tau_grid}`")))?;
            let report = calibrate(&d, &r.params, &r.settings)?;
            let points = taus
                .iter()
                .map(|&t| band(&report.curve, &report.lower_curve, r.params.gamma, t))
                .collect::<Result<Vec<_>, _>>()?;
            let files = io::emit_band(&report, &points, &r.config, &Provenance::now(Some(hash)), &out_dir(&r.config))?;
            print!("{}", io::band_csv(&points));
            report_written(&files);
        }
        Command::NewScenario { common, q_hat, alpha } => {
            let cfg = common.run_config()?;
            let (d, hash) = load_dataset(&cfg)?;
            let r = resolve(cfg, Some(&d.records[0].p_hat))?;
            let q = parse_q_hat(&q_hat, &d.records[0].p_hat, r.config.sigma)?;
            let report = calibrate(&d, &r.params, &r.settings)?;
            let set = new_scenario_set(&report.curve, &q, alpha, &r.params.loss)?;
            let files = io::emit_new_scenario(&set, &r.config, &Provenance::now(Some(hash)), &out_dir(&r.config))?;
            println!("{}", serde_json::to_string(&set.region)?);
            report_written(&files);
        }
        Command::Simulate { common, seed } => simulate(&common, seed)?,
    }
    Ok(())
}

/// 2 validation, 3 numerical, 4 IO.
fn exit_code(e: &anyhow::Error) -> u8 {
    let core = e
        .downcast_ref::<Error>()
        .or_else(|| match e.downcast_ref::<IoError>() {
            Some(IoError::Core(c)) => Some(c),
            _ => None,
        })
        .map(Error::root);
    if let Some(Error::MeshTooCoarse { .. }) = core {
        return 3;
    }
    if let Some(IoError::File { .. }) = e.downcast_ref::<IoError>() {
        return 4;
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::InvalidDataset(findings)) = e.downcast_ref::<IoError>().and_then(|x| match x {
                IoError::Core(c) => Some(c),
                _ => None,
            }) {
                for f in findings {
                    eprintln!("  {f}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
