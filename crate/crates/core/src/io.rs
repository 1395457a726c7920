//! JSON Lines ingest, dataset writing, run configuration and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::calibration::{calibrated_curve, BandPoint, CalibrationReport, NewScenarioSet};
use crate::domain::{BoundedScalar, Dataset, Empirical1D, ParamPoint, ScenarioRecord, Simplex};
use crate::error::Error;
use crate::harness::{BandTable, CoverageTable, GeneratorConfig, TightnessRow};
use crate::pairwise::PairwiseReport;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("{}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Decimal rendering with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-7..=20).contains(&exp) {
        return sci;
    }
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
    };
    format!("{sign}{body}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    Bounded,
    Bernoulli,
    Multinomial,
    Empirical1d,
}

/// One input line before aggregation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    scenario_id: Option<String>,
    family: Option<FamilyTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_hat: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_hat: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_hat_2: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim_samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim2_samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_counts: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim_counts: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim2_counts: Option<Vec<u64>>,
}

/// Ingest defaults for fields a record may omit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IngestOptions {
    /// Sub-Gaussian scale for Empirical1D records without `sigma`.
    pub sigma: Option<f64>,
}

struct Ctx {
    family: FamilyTag,
    domain: Option<(f64, f64)>,
    sigma: Option<f64>,
}

impl Ctx {
    fn domain(&self) -> Result<(f64, f64), String> {
        self.domain.ok_or_else(|| "bounded records need \"domain\": [a, b]".to_string())
    }

    fn point_from_value(&self, v: &Value, field: &str) -> Result<ParamPoint, String> {
        let num = |v: &Value| v.as_f64().ok_or_else(|| format!("`{field}` must be a number"));
        let nums = |v: &Value| -> Result<Vec<f64>, String> {
            v.as_array()
                .ok_or_else(|| format!("`{field}` must be an array of numbers"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| format!("`{field}` must be an array of numbers")))
                .collect()
        };
        let point: crate::error::Result<ParamPoint> = match self.family {
            FamilyTag::Bounded => {
                let (a, b) = self.domain()?;
                BoundedScalar::new(num(v)?, a, b).map(Into::into)
            }
            FamilyTag::Bernoulli => Simplex::bernoulli(num(v)?).map(Into::into),
            FamilyTag::Multinomial => Simplex::new(nums(v)?).map(Into::into),
            FamilyTag::Empirical1d => Empirical1D::new(nums(v)?, self.sigma).map(Into::into),
        };
        point.map_err(|e| format!("`{field}`: {e}"))
    }

    fn point_from_samples(&self, x: &[f64], field: &str) -> Result<ParamPoint, String> {
        if x.is_empty() {
            return Err(format!("`{field}` is empty"));
        }
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let point: crate::error::Result<ParamPoint> = match self.family {
            FamilyTag::Bounded => {
                let (a, b) = self.domain()?;
                if x.iter().any(|v| !(a..=b).contains(v)) {
                    return Err(format!("`{field}` has values outside the domain"));
                }
                BoundedScalar::new(mean.clamp(a, b), a, b).map(Into::into)
            }
            FamilyTag::Bernoulli => {
                if x.iter().any(|v| *v != 0.0 && *v != 1.0) {
                    return Err(format!("`{field}` must contain only 0 and 1"));
                }
                Simplex::bernoulli(mean).map(Into::into)
            }
            FamilyTag::Multinomial => return Err(format!("multinomial records take counts, not `{field}`")),
            FamilyTag::Empirical1d => Empirical1D::new(x.to_vec(), self.sigma).map(Into::into),
        };
        point.map_err(|e| format!("`{field}`: {e}"))
    }

    fn point_from_counts(&self, c: &[u64], field: &str) -> Result<ParamPoint, String> {
        match self.family {
            FamilyTag::Bernoulli if c.len() != 2 => Err(format!("`{field}` needs two counts for bernoulli")),
            FamilyTag::Bernoulli | FamilyTag::Multinomial => Simplex::from_counts(c)
                .map(Into::into)
                .map_err(|e| format!("`{field}`: {e}")),
            _ => Err(format!("`{field}` applies to bernoulli or multinomial records")),
        }
    }

    /// Point from exactly one of the three representations, plus its count.
    fn point(
        &self,
        hat: &Option<Value>,
        samples: &Option<Vec<f64>>,
        counts: &Option<Vec<u64>>,
        names: [&str; 3],
    ) -> Result<Option<(ParamPoint, Option<u64>)>, String> {
        match (hat, samples, counts) {
            (None, None, None) => Ok(None),
            (Some(v), None, None) => Ok(Some((self.point_from_value(v, names[0])?, None))),
            (None, Some(x), None) => Ok(Some((self.point_from_samples(x, names[1])?, Some(x.len() as u64)))),
            (None, None, Some(c)) => Ok(Some((self.point_from_counts(c, names[2])?, Some(c.iter().sum())))),
            _ => Err(format!("give only one of `{}`, `{}`, `{}`", names[0], names[1], names[2])),
        }
    }
}

fn record_from_raw(raw: RawRecord, opts: &IngestOptions) -> Result<ScenarioRecord, String> {
    let scenario_id = raw.scenario_id.ok_or("missing `scenario_id`")?;
    let family = raw.family.ok_or("missing `family`")?;
    let k = raw.k.ok_or("missing `k`")?;
    if let Some([a, b]) = raw.domain {
        if family != FamilyTag::Bounded {
            return Err("`domain` applies to bounded records only".into());
        }
        if !(a < b) {
            return Err("`domain` must satisfy a < b".into());
        }
    }
    let ctx = Ctx {
        family,
        domain: raw.domain.map(|[a, b]| (a, b)),
        sigma: raw.sigma.or(opts.sigma),
    };
    let (p_hat, n_obs) = ctx
        .point(&raw.p_hat, &raw.gt_samples, &raw.gt_counts, ["p_hat", "gt_samples", "gt_counts"])?
        .ok_or("missing `p_hat`, `gt_samples` or `gt_counts`")?;
    let (q_hat, _) = ctx
        .point(&raw.q_hat, &raw.sim_samples, &raw.sim_counts, ["q_hat", "sim_samples", "sim_counts"])?
        .ok_or("missing `q_hat`, `sim_samples` or `sim_counts`")?;
    let q_hat_2 = ctx
        .point(&raw.q_hat_2, &raw.sim2_samples, &raw.sim2_counts, ["q_hat_2", "sim2_samples", "sim2_counts"])?
        .map(|(p, _)| p);
    let n = match (raw.n, n_obs) {
        (Some(n), Some(obs)) if n != obs => return Err(format!("`n` = {n} but the ground-truth data has {obs} observations")),
        (Some(n), _) => n,
        (None, Some(obs)) => obs,
        (None, None) => return Err("missing `n`".into()),
    };
    Ok(ScenarioRecord {
        scenario_id,
        p_hat,
        n,
        q_hat,
        q_hat_2,
        k,
    })
}

/// Parses JSON Lines text; blank lines are skipped. The dataset is
/// validated and any finding is fatal.
pub fn parse_dataset(text: &str, opts: &IngestOptions) -> IoResult<Dataset> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| IoError::Schema { line: i + 1, message };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        records.push(record_from_raw(raw, opts).map_err(schema)?);
    }
    Ok(Dataset::new(records).validated()?)
}

pub fn ingest(path: &Path, opts: &IngestOptions) -> IoResult<Dataset> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_dataset(&text, opts)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> IoResult<String> {
    let bytes = fs::read(path).map_err(file_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Two-category simplices `(p, 1 - p)` that a single probability reproduces
/// bit for bit.
fn is_bernoulli(s: &Simplex) -> bool {
    let p = s.probs();
    p.len() == 2 && p[1] == 1.0 - p[0]
}

fn point_value(p: &ParamPoint, bernoulli: bool) -> Value {
    match p {
        ParamPoint::BoundedScalar { point } => point.value().into(),
        ParamPoint::Simplex { probs } if bernoulli => probs.probs()[0].into(),
        ParamPoint::Simplex { probs } => probs.probs().into(),
        ParamPoint::Empirical1D { dist } => dist.samples().into(),
    }
}

/// One JSON line per record in the precomputed-estimate form.
pub fn dataset_to_jsonl(d: &Dataset) -> String {
    let mut out = String::new();
    for rec in &d.records {
        let bernoulli = [Some(&rec.p_hat), Some(&rec.q_hat), rec.q_hat_2.as_ref()]
            .into_iter()
            .flatten()
            .all(|p| p.as_simplex().is_some_and(is_bernoulli));
        let point_value = |p: &ParamPoint| point_value(p, bernoulli);
        let mut raw = RawRecord {
            scenario_id: Some(rec.scenario_id.clone()),
            n: Some(rec.n),
            k: Some(rec.k),
            p_hat: Some(point_value(&rec.p_hat)),
            q_hat: Some(point_value(&rec.q_hat)),
            q_hat_2: rec.q_hat_2.as_ref().map(point_value),
            ..Default::default()
        };
        match &rec.p_hat {
            ParamPoint::BoundedScalar { point } => {
                raw.family = Some(FamilyTag::Bounded);
                raw.domain = Some(point.domain().into());
            }
            ParamPoint::Simplex { .. } if bernoulli => raw.family = Some(FamilyTag::Bernoulli),
            ParamPoint::Simplex { .. } => raw.family = Some(FamilyTag::Multinomial),
            ParamPoint::Empirical1D { dist } => {
                raw.family = Some(FamilyTag::Empirical1d);
                raw.sigma = dist.sigma();
            }
        }
        out.push_str(&serde_json::to_string(&raw).expect("serialisable record"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(d: &Dataset, path: &Path) -> IoResult<()> {
    fs::write(path, dataset_to_jsonl(d)).map_err(file_err(path))
}

/// Optional settings shared by the config file and the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub loss: Option<String>,
    pub smoothing: Option<f64>,
    pub sigma: Option<f64>,
    pub mode: Option<String>,
    pub alpha_grid: Option<String>,
    pub mesh: Option<f64>,
    pub cvar_levels: Option<Vec<f64>>,
    pub simulate: Option<SimulateConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> IoResult<Self> {
        toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(file_err(path))?)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(self, over: RunConfig) -> RunConfig {
        RunConfig {
            input: over.input.or(self.input),
            out: over.out.or(self.out),
            gamma: over.gamma.or(self.gamma),
            eta: over.eta.or(self.eta),
            loss: over.loss.or(self.loss),
            smoothing: over.smoothing.or(self.smoothing),
            sigma: over.sigma.or(self.sigma),
            mode: over.mode.or(self.mode),
            alpha_grid: over.alpha_grid.or(self.alpha_grid),
            mesh: over.mesh.or(self.mesh),
            cvar_levels: over.cvar_levels.or(self.cvar_levels),
            simulate: over.simulate.or(self.simulate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Write the calibration pool as a dataset file.
    Generate,
    Coverage,
    Tightness,
    Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub experiment: Experiment,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub n_sweep: Option<Vec<u64>>,
    #[serde(default)]
    pub master_size: Option<u64>,
    #[serde(default)]
    pub seeds: Option<usize>,
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub band_tolerance: Option<f64>,
}

/// Parses `"lo:hi:step"` or a comma-separated list.
pub fn parse_alpha_grid(spec: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("alpha grid `{spec}`: expected lo:hi:step or a comma-separated list");
    let grid: Vec<f64> = if let [lo, hi, step] = spec.split(':').collect::<Vec<_>>()[..] {
        let (lo, hi, step): (f64, f64, f64) = (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        // integer multiples avoid accumulated drift
        (0..=count).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(format!("alpha grid `{spec}`: levels must lie in (0, 1)"));
    }
    Ok(grid)
}

/// Metadata stamped on every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub dataset_sha256: Option<String>,
}

impl Provenance {
    pub fn now(dataset_sha256: Option<String>) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp,
            dataset_sha256,
        }
    }
}

fn write(dir: &Path, name: &str, body: &str) -> IoResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(file_err(&path))?;
    Ok(path)
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable report");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct ReportFile<'a, T: Serialize> {
    provenance: &'a Provenance,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

/// `(alpha, V(1 - alpha/2))` over the report's grid.
pub fn curve_csv(report: &CalibrationReport) -> String {
    let mut s = String::from("alpha,threshold\n");
    for c in &report.coverage {
        let _ = writeln!(s, "{},{}", fmt17(c.alpha), fmt17(c.threshold));
    }
    s
}

/// `(tau, V_cal(tau))` for `tau = 0, 0.01, ..., 1`.
pub fn calibrated_csv(report: &CalibrationReport) -> String {
    let mut s = String::from("tau,value\n");
    for i in 0..=100 {
        let tau = i as f64 / 100.0;
        let v = calibrated_curve(&report.curve, tau).expect("tau in [0, 1]");
        let _ = writeln!(s, "{},{}", fmt17(tau), fmt17(v));
    }
    s
}

pub fn calibration_summary(report: &CalibrationReport) -> String {
    let p = &report.params;
    let mut s = String::new();
    let _ = writeln!(s, "scenarios: {}", report.m);
    let _ = writeln!(s, "loss: {}", p.loss);
    let _ = writeln!(s, "gamma: {}", fmt17(p.gamma));
    let _ = writeln!(s, "eta: {}", fmt17(p.eta));
    let _ = writeln!(s, "AUC_cal: {}", fmt17(report.auc_cal));
    for c in &report.cvar_cal {
        let _ = writeln!(s, "CVaR_cal(alpha = {}): {}", fmt17(c.alpha), fmt17(c.cvar));
    }
    let vacuous: Vec<_> = report.coverage.iter().filter(|c| c.vacuous).collect();
    for c in report.coverage.iter().filter(|c| [0.05, 0.1, 0.2].iter().any(|a| (c.alpha - a).abs() < 1e-12)) {
        let _ = writeln!(
            s,
            "alpha = {}: threshold {} covers at least {} of new scenarios{}",
            fmt17(c.alpha),
            fmt17(c.threshold),
            fmt17(c.clamped),
            if c.vacuous { " (vacuous at this m)" } else { "" }
        );
    }
    let _ = writeln!(s, "vacuous grid levels: {} of {}", vacuous.len(), report.coverage.len());
    s
}

/// Writes `report.json`, `curve.csv`, `calibrated.csv` and `summary.txt`.
pub fn emit_report(report: &CalibrationReport, config: &RunConfig, prov: &Provenance, out: &Path) -> IoResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(file_err(out))?;
    let file = ReportFile {
        provenance: prov,
        config,
        body: report,
    };
    Ok(vec![
        write(out, "report.json", &json(&file))?,
        write(out, "curve.csv", &curve_csv(report))?,
        write(out, "calibrated.csv", &calibrated_csv(report))?,
        write(out, "summary.txt", &calibration_summary(report))?,
    ])
}

pub fn pairwise_csv(report: &PairwiseReport) -> String {
    let mut s = String::from("alpha,threshold,fraction,certified,strict,tie\n");
    for d in &report.dominance {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt17(d.alpha),
            fmt17(d.threshold),
            fmt17(d.fraction),
            d.certified,
            d.strict,
            d.tie
        );
    }
    s
}

pub fn pairwise_summary(report: &PairwiseReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenarios: {}", report.m);
    let _ = writeln!(s, "loss: {}", report.loss);
    for d in &report.dominance {
        if d.certified {
            let _ = writeln!(
                s,
                "alpha = {}: simulator 1 at least as good as simulator 2, certified on >= {} of scenarios (threshold {}{})",
                fmt17(d.alpha),
                fmt17(d.fraction),
                fmt17(d.threshold),
                if d.tie { ", tie" } else { "" }
            );
        }
    }
    if !report.dominance.iter().any(|d| d.certified) {
        let _ = writeln!(s, "no dominance certificate on the alpha grid");
    }
    s
}

/// Writes `pairwise.json`, `pairwise.csv` and `summary.txt`.
pub fn emit_pairwise(report: &PairwiseReport, config: &RunConfig, prov: &Provenance, out: &Path) -> IoResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(file_err(out))?;
    let file = ReportFile {
        provenance: prov,
        config,
        body: report,
    };
    Ok(vec![
        write(out, "pairwise.json", &json(&file))?,
        write(out, "pairwise.csv", &pairwise_csv(report))?,
        write(out, "summary.txt", &pairwise_summary(report))?,
    ])
}

pub fn band_csv(points: &[BandPoint]) -> String {
    let mut s = String::from("tau,lo,hi,lo_at_minimum\n");
    for b in points {
        let _ = writeln!(s, "{},{},{},{}", fmt17(b.tau), fmt17(b.lo), fmt17(b.hi), b.lo_at_minimum);
    }
    s
}

#[derive(Serialize)]
struct BandBody<'a> {
    gamma: f64,
    note: &'static str,
    band: &'a [BandPoint],
    calibration: &'a CalibrationReport,
}

/// Writes `band.json` and `band.csv`.
pub fn emit_band(
    report: &CalibrationReport,
    points: &[BandPoint],
    config: &RunConfig,
    prov: &Provenance,
    out: &Path,
) -> IoResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(file_err(out))?;
    let file = ReportFile {
        provenance: prov,
        config,
        body: BandBody {
            gamma: report.params.gamma,
            note: "upper side holds up to a term vanishing as m grows; the band is conservative near tau = 0 and tau = 1",
            band: points,
            calibration: report,
        },
    };
    Ok(vec![write(out, "band.json", &json(&file))?, write(out, "band.csv", &band_csv(points))?])
}

pub fn emit_new_scenario(set: &NewScenarioSet, config: &RunConfig, prov: &Provenance, out: &Path) -> IoResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(file_err(out))?;
    let file = ReportFile {
        provenance: prov,
        config,
        body: set,
    };
    Ok(vec![write(out, "new_scenario.json", &json(&file))?])
}

pub fn coverage_csv(t: &CoverageTable) -> String {
    let mut s = String::from("alpha,raw_bound,mean_coverage,frac_meeting_bound\n");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt17(r.alpha),
            fmt17(r.raw_bound),
            fmt17(r.mean_coverage),
            fmt17(r.frac_meeting_bound)
        );
    }
    s
}

pub fn tightness_csv(rows: &[TightnessRow]) -> String {
    let mut s = String::from("n,mean_distance\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.n, fmt17(r.mean_distance));
    }
    s
}

pub fn band_table_csv(t: &BandTable) -> String {
    let mut s = String::from("tau,lower_violation_rate,upper_violation_rate\n");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt17(r.tau),
            fmt17(r.lower_violation_rate),
            fmt17(r.upper_violation_rate)
        );
    }
    s
}

/// Writes an experiment table as `<name>.csv` plus the full result as `<name>.json`.
pub fn emit_experiment<T: Serialize>(
    name: &str,
    csv: &str,
    result: &T,
    config: &RunConfig,
    prov: &Provenance,
    out: &Path,
) -> IoResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(file_err(out))?;
    let file = ReportFile {
        provenance: prov,
        config,
        body: serde_json::json!({ "result": result }),
    };
    Ok(vec![
        write(out, &format!("{name}.json"), &json(&file))?,
        write(out, &format!("{name}.csv"), csv)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_digits() {
        assert_eq!(fmt17(3.0), "3.0000000000000000");
        assert_eq!(fmt17(0.1), "0.10000000000000001");
        assert_eq!(fmt17(-0.25), "-0.25000000000000000");
        assert_eq!(fmt17(0.0), "0");
        assert_eq!(fmt17(1234.5), "1234.5000000000000");
        for x in [0.1, 1.0 / 3.0, -2.5e-5, 6.02e19, 1e-300, 123456789.123] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn counts_infer_n() {
        let line = r#"{"scenario_id":"a","family":"multinomial","k":50,"gt_counts":[45,30,25],"q_hat":[0.2,0.3,0.5]}"#;
        let d = parse_dataset(line, &IngestOptions::default()).unwrap();
        assert_eq!(d.records[0].n, 100);
        assert_eq!(d.records[0].p_hat.as_simplex().unwrap().probs(), &[0.45, 0.30, 0.25]);
    }

    #[test]
    fn missing_k_is_schema_error() {
        let text = "{\"scenario_id\":\"a\",\"family\":\"bernoulli\",\"n\":10,\"p_hat\":0.2,\"q_hat\":0.3,\"k\":5}\n\
                    {\"scenario_id\":\"b\",\"family\":\"bernoulli\",\"n\":10,\"p_hat\":0.2,\"q_hat\":0.3}";
        match parse_dataset(text, &IngestOptions::default()) {
            Err(IoError::Schema { line: 2, message }) => assert!(message.contains("`k`")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_families_fatal() {
        let text = "{\"scenario_id\":\"a\",\"family\":\"bernoulli\",\"n\":10,\"k\":5,\"p_hat\":0.2,\"q_hat\":0.3}\n\
                    {\"scenario_id\":\"b\",\"family\":\"bounded\",\"domain\":[0,1],\"n\":10,\"k\":5,\"p_hat\":0.2,\"q_hat\":0.3}";
        assert!(matches!(
            parse_dataset(text, &IngestOptions::default()),
            Err(IoError::Core(Error::InvalidDataset(_)))
        ));
    }

    #[test]
    fn samples_aggregate() {
        let text = r#"{"scenario_id":"a","family":"bounded","domain":[-1,1],"k":4,"gt_samples":[0.5,-0.5,1.0,0.0],"sim_samples":[0.2,0.2,0.2,0.2]}"#;
        let d = parse_dataset(text, &IngestOptions::default()).unwrap();
        assert_eq!(d.records[0].n, 4);
        assert_eq!(d.records[0].p_hat.as_bounded().unwrap().value(), 0.25);
        let text = r#"{"scenario_id":"a","family":"empirical1d","k":2,"sigma":1.5,"gt_samples":[3,1,2],"sim_samples":[0,1]}"#;
        let d = parse_dataset(text, &IngestOptions::default()).unwrap();
        let e = d.records[0].p_hat.as_empirical().unwrap();
        assert_eq!((e.samples(), e.sigma()), (&[1.0, 2.0, 3.0][..], Some(1.5)));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"scenario_id":"a","family":"bernoulli","n":10,"k":5,"p_hat":0.2,"q_hat":0.3,"extra":1}"#;
        assert!(matches!(parse_dataset(text, &IngestOptions::default()), Err(IoError::Schema { line: 1, .. })));
        assert!(RunConfig::from_toml("gama = 0.5").is_err());
    }

    #[test]
    fn alpha_grids() {
        let g = parse_alpha_grid("0.01:0.99:0.01").unwrap();
        assert_eq!(g.len(), 99);
        assert_eq!((g[0], g[29], g[98]), (0.01, 0.3, 0.99));
        assert_eq!(parse_alpha_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_alpha_grid("0:1:0.5").is_err());
        assert!(parse_alpha_grid("x").is_err());
    }

    #[test]
    fn config_merge_prefers_override() {
        let base = RunConfig::from_toml("gamma = 0.6\neta = 0.1").unwrap();
        let over = RunConfig {
            gamma: Some(0.7),
            ..Default::default()
        };
        let m = base.merged(over);
        assert_eq!((m.gamma, m.eta), (Some(0.7), Some(0.1)));
    }
}
