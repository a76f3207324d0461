//! Batch front end: flat `key = value` experiment configs, execution and
//! result files.
//!
//! Every run writes `manifest.json` (configuration, version, seeds, wall time
//! and the effective tolerances), CSV sample files with columns
//! `replica,value,seed_lane`, and two-column plot data files (`*.dat`).

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{LabError, Result};
use crate::mc_lab::{
    ks_two_sample, ldp_exponent_fit, map_replicas, run_replicas, tail_thresholds, write_samples_csv, McEstimate,
    ReplicaRun, TailCurve,
};
use crate::potential_field::{sample_f_representation, PotentialParams};
use crate::renorm::{zeta_square_samples, CellRule, RenormGrid};
use crate::riesz_core::{eta, mean_eta, QuadratureSpec, RieszParams, TimeRule};
use crate::rng::{purpose, Lane};
use crate::spectral::{default_refinement, eta_smoothed_freq_with, FrequencyRule, SpectralWeight};
use crate::stable_sim::sample_path;
use crate::variational::{ldp_rate_constant, rho_continuum, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Eta,
    Gamma,
    Zeta,
    Spectral,
    Rho,
    Potential,
    Tailfit,
    ScalingKs,
}

impl ExperimentKind {
    const ALL: [(ExperimentKind, &'static str); 8] = [
        (Self::Eta, "eta"),
        (Self::Gamma, "gamma"),
        (Self::Zeta, "zeta"),
        (Self::Spectral, "spectral"),
        (Self::Rho, "rho"),
        (Self::Potential, "potential"),
        (Self::Tailfit, "tailfit"),
        (Self::ScalingKs, "scaling-ks"),
    ];
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Self::ALL.iter().find(|(k, _)| k == self).map(|(_, n)| *n).unwrap_or("?");
        f.write_str(name)
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(k, _)| *k)
            .ok_or_else(|| LabError::Config(format!("unknown experiment kind '{s}'")))
    }
}

/// A flat experiment description. Unset optional keys are written as `auto`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub d: usize,
    pub beta: f64,
    pub sigma: f64,
    /// Exponent of the potential (kind `potential`, or target `potential`).
    pub p: Option<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub replicas: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub mean_correction: bool,
    pub rule: TimeRule,
    pub band_width: Option<f64>,
    pub grading: Option<f64>,
    pub nodes_per_cell: usize,
    pub lambda_cells: usize,
    pub levels: u32,
    pub alpha: f64,
    pub epsilon: f64,
    pub periods: Vec<f64>,
    pub restarts: usize,
    pub window_factor: f64,
    pub solver_tol: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub thresholds: usize,
    /// ρ used to report the predicted rate constant in `tailfit`.
    pub rho: Option<f64>,
    /// Time scale factor c of `scaling-ks`.
    pub scale: f64,
    pub target: ExperimentKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Eta,
            d: 1,
            beta: 2.0,
            sigma: 0.5,
            p: None,
            horizon: 1.0,
            steps: 256,
            replicas: 1000,
            seed: 1,
            out: PathBuf::from("riesz-out"),
            mean_correction: false,
            rule: TimeRule::RightEndpoint,
            band_width: None,
            grading: None,
            nodes_per_cell: 16,
            lambda_cells: 512,
            levels: 6,
            alpha: 0.2,
            epsilon: 0.5,
            periods: vec![8.0, 16.0, 32.0, 64.0],
            restarts: 5,
            window_factor: 4.0,
            solver_tol: SolverOptions::default().tol,
            q_lo: 0.95,
            q_hi: 0.999,
            thresholds: 12,
            rho: None,
            scale: 2.0,
            target: ExperimentKind::Eta,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| LabError::Config(format!("key '{key}': cannot parse '{v}'")))
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(LabError::Config(format!("key '{key}': expected a boolean, got '{v}'"))),
    }
}

fn opt_text(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "auto".into())
}

impl ExperimentConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "kind" => self.kind = v.parse()?,
            "d" => self.d = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "sigma" => self.sigma = parse_num(key, v)?,
            "p" => self.p = parse_opt(key, v)?,
            "horizon" => self.horizon = parse_num(key, v)?,
            "steps" => self.steps = parse_num(key, v)?,
            "replicas" => self.replicas = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "mean_correction" => self.mean_correction = parse_bool(key, v)?,
            "rule" => {
                self.rule = match v {
                    "right" => TimeRule::RightEndpoint,
                    "midpoint" => TimeRule::Midpoint,
                    _ => return Err(LabError::Config(format!("key 'rule': expected right or midpoint, got '{v}'"))),
                }
            }
            "band_width" => self.band_width = parse_opt(key, v)?,
            "grading" => self.grading = parse_opt(key, v)?,
            "nodes_per_cell" => self.nodes_per_cell = parse_num(key, v)?,
            "lambda_cells" => self.lambda_cells = parse_num(key, v)?,
            "levels" => self.levels = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "periods" => {
                self.periods = v
                    .split(',')
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "restarts" => self.restarts = parse_num(key, v)?,
            "window_factor" => self.window_factor = parse_num(key, v)?,
            "solver_tol" => self.solver_tol = parse_num(key, v)?,
            "q_lo" => self.q_lo = parse_num(key, v)?,
            "q_hi" => self.q_hi = parse_num(key, v)?,
            "thresholds" => self.thresholds = parse_num(key, v)?,
            "rho" => self.rho = parse_opt(key, v)?,
            "scale" => self.scale = parse_num(key, v)?,
            "target" => self.target = v.parse()?,
            _ => return Err(LabError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// All keys in a fixed order; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let rule = match self.rule {
            TimeRule::RightEndpoint => "right",
            TimeRule::Midpoint => "midpoint",
        };
        let periods: Vec<String> = self.periods.iter().map(|m| m.to_string()).collect();
        let rows: Vec<(&str, String)> = vec![
            ("kind", self.kind.to_string()),
            ("d", self.d.to_string()),
            ("beta", self.beta.to_string()),
            ("sigma", self.sigma.to_string()),
            ("p", opt_text(self.p)),
            ("horizon", self.horizon.to_string()),
            ("steps", self.steps.to_string()),
            ("replicas", self.replicas.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("mean_correction", self.mean_correction.to_string()),
            ("rule", rule.into()),
            ("band_width", opt_text(self.band_width)),
            ("grading", opt_text(self.grading)),
            ("nodes_per_cell", self.nodes_per_cell.to_string()),
            ("lambda_cells", self.lambda_cells.to_string()),
            ("levels", self.levels.to_string()),
            ("alpha", self.alpha.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("periods", periods.join(",")),
            ("restarts", self.restarts.to_string()),
            ("window_factor", self.window_factor.to_string()),
            ("solver_tol", self.solver_tol.to_string()),
            ("q_lo", self.q_lo.to_string()),
            ("q_hi", self.q_hi.to_string()),
            ("thresholds", self.thresholds.to_string()),
            ("rho", opt_text(self.rho)),
            ("scale", self.scale.to_string()),
            ("target", self.target.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            band_width: self.band_width,
            mean_correction: self.mean_correction,
            rule: self.rule,
            grading_exponent: self.grading,
            nodes_per_cell: self.nodes_per_cell,
            lambda_cells: self.lambda_cells,
            lambda_radius: None,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            restarts: self.restarts,
            window_factor: self.window_factor,
            tol: self.solver_tol,
            seed: self.seed,
            ..SolverOptions::default()
        }
    }

    fn potential(&self) -> Result<PotentialParams> {
        let p = self
            .p
            .ok_or_else(|| LabError::Config("the potential experiment needs key 'p'".into()))?;
        PotentialParams::new(self.d, self.beta, p)
    }

    fn riesz(&self) -> Result<RieszParams> {
        RieszParams::from_dims(self.d, self.beta, self.sigma)
    }

    /// Parameter and regime checks, run before any computation.
    pub fn validate(&self) -> Result<()> {
        self.quadrature().validate()?;
        if !(self.horizon > 0.0) {
            return Err(LabError::Config("horizon must be > 0".into()));
        }
        if self.steps == 0 {
            return Err(LabError::Config("steps must be > 0".into()));
        }
        self.validate_kind(self.kind)?;
        if self.kind == ExperimentKind::ScalingKs {
            if matches!(self.target, ExperimentKind::Rho | ExperimentKind::Tailfit | ExperimentKind::ScalingKs) {
                return Err(LabError::Config(format!("no scaling law for target '{}'", self.target)));
            }
            if !(self.scale > 0.0) {
                return Err(LabError::Config("scale must be > 0".into()));
            }
            self.validate_kind(self.target)?;
        }
        Ok(())
    }

    fn validate_kind(&self, kind: ExperimentKind) -> Result<()> {
        match kind {
            ExperimentKind::Potential => {
                self.potential()?.rp().require_subcritical("the action F")?;
            }
            ExperimentKind::Eta | ExperimentKind::Tailfit => self.riesz()?.require_subcritical("eta")?,
            ExperimentKind::Gamma => self.riesz()?.require_renormalizable("gamma")?,
            ExperimentKind::Zeta => self.riesz()?.require_mutual("zeta")?,
            ExperimentKind::Spectral | ExperimentKind::Rho => {
                self.riesz()?.require_sigma_below_d("the spectral weight")?;
                SpectralWeight::new(self.riesz()?, self.alpha, self.epsilon)?;
                if kind == ExperimentKind::Rho && self.periods.len() < 3 {
                    return Err(LabError::Config("rho needs at least three periods".into()));
                }
            }
            ExperimentKind::ScalingKs => {}
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub replicas: Option<u64>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        if let Some(r) = self.replicas {
            cfg.replicas = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(())
    }
}

/// Summary returned by [`run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn path_lane(seed: u64) -> Lane {
    Lane::derive(seed, purpose::PATH)
}

/// Samples of the functional named by `kind` on `[0, horizon]`.
///
/// `spectral` uses `(alpha, epsilon)` as given; `gamma` builds its dyadic grid
/// on `[0, horizon]`. Values are deterministic in `(cfg, horizon, seed)`.
pub fn sample_functional(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    horizon: f64,
    alpha: f64,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let q = cfg.quadrature();
    let n = cfg.replicas;
    let lane = path_lane(seed);
    match kind {
        ExperimentKind::Eta | ExperimentKind::Tailfit => {
            let rp = cfg.riesz()?;
            map_replicas(n, |i| {
                let path = sample_path(rp.stable(), horizon, cfg.steps, lane.replica(i))?;
                eta(&path, &rp, &q)
            })
        }
        ExperimentKind::Gamma => {
            let rp = cfg.riesz()?;
            let grid = RenormGrid::new(horizon, cfg.levels, CellRule::from_spec(&q, &rp)?)?;
            map_replicas(n, |i| {
                let path = grid.sample_path(&rp, lane.replica(i))?;
                Ok(grid.gamma(&path, &rp)?.value)
            })
        }
        ExperimentKind::Zeta => {
            let rp = cfg.riesz()?;
            zeta_square_samples(&rp, horizon, n, lane, Lane::derive(seed, purpose::PATH_B), &q)
        }
        ExperimentKind::Spectral => {
            let rp = cfg.riesz()?;
            let sw = SpectralWeight::new(rp, alpha, epsilon)?;
            let rule = FrequencyRule::new(cfg.d, cfg.lambda_cells, default_refinement(&sw))?;
            map_replicas(n, |i| {
                let path = sample_path(rp.stable(), horizon, cfg.steps, lane.replica(i))?;
                Ok(0.5 * eta_smoothed_freq_with(&path, &sw, &q, &rule)?)
            })
        }
        ExperimentKind::Potential => {
            let pp = cfg.potential()?;
            let noise = Lane::derive(seed, purpose::NOISE);
            map_replicas(n, |i| {
                let path = sample_path(pp.rp().stable(), horizon, cfg.steps, lane.replica(i))?;
                sample_f_representation(&path, &pp, &q, &mut noise.replica(i).rng())
            })
        }
        ExperimentKind::Rho | ExperimentKind::ScalingKs => Err(LabError::Config(format!(
            "'{kind}' is not a sampled functional"
        ))),
    }
}

/// Scaling factor and transported `(α, ε)` for comparing the functional on
/// `[0, c t]` with `factor ×` the functional on `[0, t]`.
pub fn scaling_transport(cfg: &ExperimentConfig, kind: ExperimentKind, c: f64) -> Result<(f64, f64, f64)> {
    let d = cfg.d as f64;
    match kind {
        ExperimentKind::Potential => {
            let pp = cfg.potential()?;
            Ok((c.powf(pp.scaling_exponent()), cfg.alpha, cfg.epsilon))
        }
        _ => {
            let rp = cfg.riesz()?;
            let p = rp.ratio();
            let alpha = cfg.alpha * c.powf((d - rp.sigma()) / rp.beta());
            let eps = cfg.epsilon * c.powf(-1.0 / rp.beta());
            Ok((c.powf(2.0 - p), alpha, eps))
        }
    }
}

fn write_dat(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# {header}")?;
    for (x, y) in rows {
        writeln!(f, "{x:.12e} {y:.12e}")?;
    }
    Ok(())
}

fn replica_run(samples: Vec<f64>, seed: u64) -> ReplicaRun {
    let mut estimate = McEstimate::from_samples(&samples);
    estimate.lineage.push((seed, 0, samples.len() as u64));
    ReplicaRun {
        samples,
        estimate,
        base_seed: seed,
        first_replica: 0,
    }
}

fn estimate_json(e: &McEstimate) -> serde_json::Value {
    json!({
        "n": e.n,
        "mean": e.mean,
        "stderr": e.stderr(),
        "variance": e.variance(),
        "min": e.min,
        "max": e.max,
    })
}

/// Runs one experiment and writes its artifacts under `cfg.out`.
pub fn run(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::Config(format!("worker pool: {e}")))?;
    let (files, summary) = pool.install(|| execute(cfg))?;
    let manifest = json!({
        "tool": "riesz-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "config_text": cfg.to_text(),
        "seeds": {
            "base": cfg.seed,
            "path_lane": path_lane(cfg.seed).seed,
            "path_b_lane": Lane::derive(cfg.seed, purpose::PATH_B).seed,
            "noise_lane": Lane::derive(cfg.seed, purpose::NOISE).seed,
        },
        "jobs": jobs,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "tolerances": {
            "quadrature": cfg.quadrature(),
            "solver": cfg.solver(),
            "ks_alpha": 0.01,
        },
        "outputs": files.iter().map(|f| f.file_name().map(|s| s.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "summary": summary,
    });
    let manifest_path = cfg.out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    let mut all = vec![manifest_path];
    all.extend(files);
    Ok(RunReport {
        out: cfg.out.clone(),
        files: all,
        summary,
    })
}

fn execute(cfg: &ExperimentConfig) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let out = &cfg.out;
    let mut files = Vec::new();
    let summary = match cfg.kind {
        ExperimentKind::Eta | ExperimentKind::Zeta | ExperimentKind::Spectral | ExperimentKind::Potential => {
            let samples = sample_functional(cfg, cfg.kind, cfg.horizon, cfg.alpha, cfg.epsilon, cfg.seed)?;
            let run = replica_run(samples, cfg.seed);
            let csv = out.join("samples.csv");
            write_samples_csv(&csv, &run)?;
            files.push(csv);
            let mut s = json!({ "estimate": estimate_json(&run.estimate) });
            if cfg.kind == ExperimentKind::Eta {
                s["exact_mean"] = json!(mean_eta(&cfg.riesz()?, cfg.horizon)?);
            }
            s
        }
        ExperimentKind::Gamma => {
            let rp = cfg.riesz()?;
            let q = cfg.quadrature();
            let grid = RenormGrid::new(cfg.horizon, cfg.levels, CellRule::from_spec(&q, &rp)?)?;
            let lane = path_lane(cfg.seed);
            let results = map_replicas(cfg.replicas, |i| {
                let path = grid.sample_path(&rp, lane.replica(i))?;
                grid.gamma(&path, &rp)
            })?;
            let run = replica_run(results.iter().map(|r| r.value).collect(), cfg.seed);
            let csv = out.join("samples.csv");
            write_samples_csv(&csv, &run)?;
            files.push(csv);
            let rows: Vec<(f64, f64)> = (0..=cfg.levels as usize)
                .map(|k| {
                    let xs: Vec<f64> = results.iter().map(|r| r.level_sums[k]).collect();
                    let v = McEstimate::from_samples(&xs).variance().unwrap_or(f64::NAN);
                    (k as f64, v.log2())
                })
                .collect();
            let dat = out.join("level_variance.dat");
            write_dat(&dat, "k log2_variance", &rows)?;
            files.push(dat);
            json!({ "estimate": estimate_json(&run.estimate), "level_log2_variance": rows })
        }
        ExperimentKind::Tailfit => {
            let rp = cfg.riesz()?;
            let samples = sample_functional(cfg, cfg.kind, cfg.horizon, cfg.alpha, cfg.epsilon, cfg.seed)?;
            let exponent = rp.beta() / rp.sigma();
            let thresholds = tail_thresholds(&samples, cfg.q_lo, cfg.q_hi, cfg.thresholds, exponent)?;
            let curve = TailCurve::from_samples(&samples, &thresholds)?;
            let fit = ldp_exponent_fit(&curve, rp.beta(), rp.sigma())?;
            let run = replica_run(samples, cfg.seed);
            let csv = out.join("samples.csv");
            write_samples_csv(&csv, &run)?;
            let curve_csv = out.join("tail_curve.csv");
            {
                let mut f = std::io::BufWriter::new(std::fs::File::create(&curve_csv)?);
                writeln!(f, "threshold,count,p_hat,ci_low,ci_high")?;
                for p in &curve.points {
                    writeln!(
                        f,
                        "{:.12e},{},{:.12e},{:.12e},{:.12e}",
                        p.threshold, p.count, p.p_hat, p.ci_low, p.ci_high
                    )?;
                }
            }
            let plot = out.join("tail_plot.dat");
            curve.write_plot_data(&plot, exponent)?;
            let fit_path = out.join("fit.json");
            std::fs::write(&fit_path, serde_json::to_vec_pretty(&fit)?)?;
            files.extend([csv, curve_csv, plot, fit_path]);
            let predicted = match cfg.rho {
                Some(rho) => Some(-ldp_rate_constant(rp.beta(), rp.sigma(), rho)?),
                None => None,
            };
            json!({
                "estimate": estimate_json(&run.estimate),
                "fit": fit,
                "monotone": curve.is_monotone(),
                "predicted_slope": predicted,
            })
        }
        ExperimentKind::Rho => {
            let sw = SpectralWeight::new(cfg.riesz()?, cfg.alpha, cfg.epsilon)?;
            let r = rho_continuum(&sw, &cfg.periods, cfg.solver())?;
            let seq = out.join("rho_sequence.dat");
            let rows: Vec<(f64, f64)> = r.periods.iter().cloned().zip(r.continuum_values.iter().cloned()).collect();
            write_dat(&seq, "M (2pi/M)^d*rho_M", &rows)?;
            let trace = out.join("rho_trace.dat");
            let last = r.traces.last().cloned().unwrap_or_default();
            let trows: Vec<(f64, f64)> = last.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect();
            write_dat(&trace, "iteration objective", &trows)?;
            files.extend([seq, trace]);
            json!({
                "periods": r.periods,
                "continuum_values": r.continuum_values,
                "relative_changes": r.relative_changes,
                "extrapolated": r.extrapolated,
                "observed_order": r.observed_order,
                "non_monotone": r.non_monotone,
                "restart_spreads": r.restart_spreads,
            })
        }
        ExperimentKind::ScalingKs => {
            let c = cfg.scale;
            let (factor, alpha, eps) = scaling_transport(cfg, cfg.target, c)?;
            let big = sample_functional(cfg, cfg.target, c * cfg.horizon, cfg.alpha, cfg.epsilon, cfg.seed)?;
            let other = cfg.seed ^ 0x9e37_79b9_7f4a_7c15;
            let small: Vec<f64> = sample_functional(cfg, cfg.target, cfg.horizon, alpha, eps, other)?
                .into_iter()
                .map(|v| factor * v)
                .collect();
            let ks = ks_two_sample(&big, &small)?;
            let a = out.join("samples_scaled_horizon.csv");
            let b = out.join("samples_rescaled.csv");
            write_samples_csv(&a, &replica_run(big, cfg.seed))?;
            write_samples_csv(&b, &replica_run(small, other))?;
            files.extend([a, b]);
            json!({
                "target": cfg.target,
                "scale": c,
                "factor": factor,
                "ks_statistic": ks.statistic,
                "ks_p_value": ks.p_value,
                "pass": ks.p_value > 0.01,
            })
        }
    };
    Ok((files, summary))
}

/// Reads the config, applies overrides and runs.
pub fn run_file(config: &Path, opts: &RunOptions) -> Result<RunReport> {
    let mut cfg = ExperimentConfig::load(config)?;
    opts.apply(&mut cfg)?;
    run(&cfg, opts.jobs)
}

/// Same-horizon replica run for `eta` used by callers that only need numbers.
pub fn eta_replicas(cfg: &ExperimentConfig) -> Result<ReplicaRun> {
    let rp = cfg.riesz()?;
    rp.require_subcritical("eta")?;
    let q = cfg.quadrature();
    let lane = path_lane(cfg.seed);
    run_replicas(cfg.replicas, cfg.seed, 0, |i| {
        let path = sample_path(rp.stable(), cfg.horizon, cfg.steps, lane.replica(i))?;
        eta(&path, &rp, &q)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn config_round_trip_and_errors() {
        let mut c = ExperimentConfig::default();
        c.kind = ExperimentKind::ScalingKs;
        c.p = Some(0.75);
        c.periods = vec![4.0, 8.5, 16.0];
        c.rule = TimeRule::Midpoint;
        c.band_width = Some(0.125);
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("beta = two").is_err());
        assert!(ExperimentConfig::parse("kind = nope").is_err());
        assert!(ExperimentConfig::parse("just text").is_err());
        let parsed = ExperimentConfig::parse("# comment\n\nkind = rho # trailing\nalpha=0.3\n").unwrap();
        assert_eq!(parsed.kind, ExperimentKind::Rho);
        assert_eq!(parsed.alpha, 0.3);
    }

    #[test]
    fn regime_gate_names_the_inequality() {
        let mut c = ExperimentConfig::default();
        c.sigma = 2.0;
        c.beta = 2.0;
        c.d = 3;
        let err = c.validate().unwrap_err();
        assert!(matches!(err, LabError::Regime(_)));
        assert!(err.to_string().contains("sigma < min(beta, d)"), "{err}");
        c.kind = ExperimentKind::Gamma;
        assert!(c.validate().is_ok());
        c.sigma = 3.0;
        assert!(c.validate().unwrap_err().to_string().contains("3*beta/2"));
    }

    #[test]
    fn runs_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::default();
        c.replicas = 20;
        c.steps = 32;
        c.mean_correction = true;
        let mut bytes = Vec::new();
        for k in 0..2 {
            c.out = dir.path().join(format!("r{k}"));
            let rep = run(&c, Some(1)).unwrap();
            assert!(rep.files.iter().all(|f| f.exists()));
            bytes.push(std::fs::read(c.out.join("samples.csv")).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
        let text = String::from_utf8(bytes[0].clone()).unwrap();
        assert!(text.starts_with("replica,value,seed_lane\n"));
        assert_eq!(text.lines().count(), 21);
    }

    #[test]
    fn rho_run_writes_sequence_and_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::default();
        c.kind = ExperimentKind::Rho;
        c.periods = vec![4.0, 6.0, 8.0];
        c.out = dir.path().to_path_buf();
        run(&c, None).unwrap();
        for f in ["manifest.json", "rho_sequence.dat", "rho_trace.dat"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let seq = std::fs::read_to_string(dir.path().join("rho_sequence.dat")).unwrap();
        assert_eq!(seq.lines().count(), 4);
    }

    #[test]
    fn scaling_transport_factors() {
        let mut c = ExperimentConfig::default();
        let (f, a, e) = scaling_transport(&c, ExperimentKind::Spectral, 4.0).unwrap();
        assert!((f - 4f64.powf(1.75)).abs() < 1e-12);
        assert!((a - 0.2 * 4f64.powf(0.25)).abs() < 1e-12);
        assert!((e - 0.25).abs() < 1e-12);
        c.p = Some(0.75);
        let (f, _, _) = scaling_transport(&c, ExperimentKind::Potential, 4.0).unwrap();
        assert!((f - 4f64.powf(0.875)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn numeric_keys_round_trip(beta in 0.1f64..2.0, frac in 0.01f64..0.99, seed in any::<u64>(), alpha in 0.0f64..10.0) {
            let mut c = ExperimentConfig::default();
            c.beta = beta;
            c.sigma = frac * beta;
            c.seed = seed;
            c.alpha = alpha;
            prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        }
    }
}
