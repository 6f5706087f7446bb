//! Monte Carlo driver: error-probability curves, exponent fits and the
//! comparison against closed-form bounds.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::{self, LBoundsInput, Normalization, ScalarBoundsInput};
use crate::ciglrt_l::{check_l_preconditions, central_run_trial, l_run_trial_unchecked, LSchedule, LTrialConfig, ScalarParams};
use crate::ciglrt_nl::{nl_run_trial, NlSchedule, NlSystem, NlTrialConfig, Trajectory};
use crate::config::{Algorithm, ExperimentConfig, ModelSpec};
use crate::error::{Error, Result};
use crate::network::{make_weights, make_weights_with_delta, min_consensus_rounds, spectrum, ConsensusWeights, Graph, Spectrum};
use crate::presets;
use crate::sensing::{
    monotonicity_constant_nl, trig_model, Hypothesis, LinearModel, NonlinearModel, ObservationModel, TruthConfig,
};

/// z-value of a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Miss,
    FalseAlarm,
}

impl ErrorKind {
    pub fn for_hypothesis(h: Hypothesis) -> Self {
        match h {
            Hypothesis::H0 => ErrorKind::FalseAlarm,
            Hypothesis::H1 => ErrorKind::Miss,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Miss => "miss",
            ErrorKind::FalseAlarm => "false_alarm",
        }
    }

    /// Whether statistic `z` at threshold `eta` is an error of this kind.
    pub fn is_error(self, z: f64, eta: f64) -> bool {
        match self {
            ErrorKind::Miss => z <= eta,
            ErrorKind::FalseAlarm => z > eta,
        }
    }
}

/// 95% binomial interval: normal approximation, or Wilson when fewer than
/// five successes or failures were observed.
pub fn binomial_ci(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    if (successes as f64) < 5.0 || ((n - successes) as f64) < 5.0 {
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        // the Wilson interval always contains p; keep that exact under rounding
        ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
    } else {
        let half = Z95 * (p * (1.0 - p) / nf).sqrt();
        ((p - half).max(0.0), (p + half).min(1.0))
    }
}

/// Error probability of one agent over the recorded times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub agent: usize,
    pub kind: ErrorKind,
    pub trials: usize,
    pub times: Vec<usize>,
    pub p_hat: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

impl ErrorCurve {
    pub fn from_counts(agent: usize, kind: ErrorKind, trials: usize, times: Vec<usize>, counts: &[usize]) -> Self {
        let (ci_lo, ci_hi) = counts.iter().map(|&c| binomial_ci(c, trials)).unzip();
        Self {
            agent,
            kind,
            trials,
            times,
            p_hat: counts.iter().map(|&c| c as f64 / trials as f64).collect(),
            ci_lo,
            ci_hi,
        }
    }

    pub fn ci_halfwidth(&self, i: usize) -> f64 {
        0.5 * (self.ci_hi[i] - self.ci_lo[i])
    }
}

/// Least-squares decay rate of `p_hat(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimate {
    /// Slope of `-ln p_hat` against `t`.
    pub slope: f64,
    pub std_error: f64,
    pub window: (usize, usize),
    pub points: usize,
    pub normalization: Normalization,
}

/// Fits `-ln p_hat(t) ~ c + slope * t`. Without a window, the last half of the
/// times with `p_hat` in `(1/trials, 1 - 1/trials)` are used; with a window,
/// every time inside it with `p_hat` in `(0, 1)`.
pub fn fit_exponent(
    times: &[usize],
    p_hat: &[f64],
    trials: usize,
    window: Option<(usize, usize)>,
    normalization: Normalization,
) -> Result<ExponentEstimate> {
    if times.len() != p_hat.len() {
        return Err(Error::InvalidInput("times and p_hat differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = match window {
        Some((a, b)) => times
            .iter()
            .zip(p_hat)
            .filter(|(&t, &p)| t >= a && t <= b && p > 0.0 && p < 1.0)
            .map(|(&t, &p)| (t as f64, p))
            .collect(),
        None => {
            let lo = 1.0 / trials as f64;
            let ok: Vec<(f64, f64)> = times
                .iter()
                .zip(p_hat)
                .filter(|(_, &p)| p > lo && p < 1.0 - lo)
                .map(|(&t, &p)| (t as f64, p))
                .collect();
            let skip = ok.len() / 2;
            ok[skip..].to_vec()
        }
    };
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable points, need 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ys: Vec<f64> = pts.iter().map(|p| -p.1.ln()).collect();
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&ys).map(|(p, y)| (p.0 - mt) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all usable points share one time".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mt;
    let ssr: f64 = pts.iter().zip(&ys).map(|(p, y)| (y - icpt - slope * p.0).powi(2)).sum();
    let std_error = if pts.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let scale = bounds::per_tick_rate(1.0, normalization);
    Ok(ExponentEstimate {
        slope: slope * scale,
        std_error: std_error * scale,
        window: (pts[0].0 as usize, pts[pts.len() - 1].0 as usize),
        points: pts.len(),
        normalization: Normalization::PerTick,
    })
}

/// Whether `t` is in the 1-2-5 checkpoint series used for per-dimension errors.
pub fn is_checkpoint(t: usize, horizon: usize) -> bool {
    if t == horizon {
        return true;
    }
    if t == 0 {
        return false;
    }
    let mut p = 1usize;
    while p <= t {
        if t == p || t == 2 * p || t == 5 * p {
            return true;
        }
        p *= 10;
    }
    false
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median and mean of the estimation error across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationSummary {
    pub times: Vec<usize>,
    /// `[time][agent]` median of `|theta_n(t) - theta*|`.
    pub median_err: Vec<Vec<f64>>,
    pub mean_err: Vec<Vec<f64>>,
    pub checkpoints: Vec<usize>,
    /// `[checkpoint][agent][dim]` median of `|theta_{n,i}(t) - theta*_i|`.
    pub median_dim_err: Vec<Vec<Vec<f64>>>,
}

impl EstimationSummary {
    pub fn median_at(&self, t: usize, agent: usize) -> Option<f64> {
        self.times.iter().position(|&x| x == t).map(|i| self.median_err[i][agent])
    }

    pub fn median_dim_at(&self, t: usize, agent: usize) -> Option<&[f64]> {
        self.checkpoints.iter().position(|&x| x == t).map(|i| self.median_dim_err[i][agent].as_slice())
    }
}

/// Bound attached to the measured error kind, per agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentComparison {
    pub agent: usize,
    pub empirical: Option<ExponentEstimate>,
    pub fit_error: Option<String>,
    /// `slope >= bound - 2 se`.
    pub consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsComparison {
    pub algorithm: Algorithm,
    pub kind: ErrorKind,
    pub eta: f64,
    /// Name of the compared rate, e.g. `LD1`.
    pub bound_name: Option<String>,
    pub bound_rate: Option<f64>,
    pub agents: Vec<AgentComparison>,
    pub bounds: Value,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub kind: ErrorKind,
    pub curves: Vec<ErrorCurve>,
    pub estimation: EstimationSummary,
    pub comparison: BoundsComparison,
    pub sample: Trajectory,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; all cores when `None`.
    pub threads: Option<usize>,
    /// Fail with [`Error::Infeasible`] when a bound is vacuous for this configuration.
    pub strict: bool,
    /// Directory against which relative paths in the config resolve.
    pub base_dir: Option<PathBuf>,
}

enum BuiltModel {
    Linear(LinearModel),
    Nonlinear(NonlinearModel),
}

impl BuiltModel {
    fn as_dyn(&self) -> &dyn ObservationModel {
        match self {
            BuiltModel::Linear(m) => m,
            BuiltModel::Nonlinear(m) => m,
        }
    }
}

/// Graph, weights, model and truth built from a config.
pub struct Setup {
    pub graph: Graph,
    pub spectrum: Spectrum,
    pub weights: ConsensusWeights,
    model: BuiltModel,
    pub truth: TruthConfig,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let graph = cfg.graph.build(base)?;
        let spec = spectrum(&graph);
        let weights = match cfg.delta {
            Some(d) => make_weights_with_delta(&spec, d)?,
            None => make_weights(&spec)?,
        };
        let n = graph.n_agents();
        let model = match &cfg.model {
            ModelSpec::Linear { .. } => BuiltModel::Linear(cfg.model.linear_config().expect("linear").build()?),
            ModelSpec::Scalar { n1, h, sigma2 } => BuiltModel::Linear(LinearModel::scalar(n, *n1, *h, *sigma2)?),
            ModelSpec::Trig10 { noise_variance } => {
                let mut m = trig_model(*noise_variance)?;
                if !cfg.project {
                    m.set_domain(None);
                }
                BuiltModel::Nonlinear(m)
            }
        };
        if model.as_dyn().n_agents() != n {
            return Err(Error::InvalidInput(format!(
                "model has {} agents but the graph has {n}",
                model.as_dyn().n_agents()
            )));
        }
        let m = model.as_dyn().param_dim();
        let theta = match &cfg.theta_star {
            Some(t) => DVector::from_vec(t.clone()),
            None => DVector::zeros(m),
        };
        if theta.len() != m {
            return Err(Error::InvalidInput(format!("theta_star has length {}, model expects {m}", theta.len())));
        }
        let truth = TruthConfig::new(cfg.hypothesis, theta);
        Ok(Self { graph, spectrum: spec, weights, model, truth })
    }

    pub fn model(&self) -> &dyn ObservationModel {
        self.model.as_dyn()
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.model {
            BuiltModel::Linear(m) => Some(m),
            BuiltModel::Nonlinear(_) => None,
        }
    }

    fn require_linear(&self) -> Result<&LinearModel> {
        self.linear().ok_or_else(|| Error::InvalidInput("this algorithm needs a linear model".into()))
    }
}

fn l_schedule(cfg: &ExperimentConfig) -> Result<LSchedule> {
    let s = &cfg.schedule;
    let sched = LSchedule::new(s.a, s.delta2.unwrap_or(0.5))?;
    match s.b {
        Some(b) => sched.with_consensus_gain(b),
        None => Ok(sched),
    }
}

fn nl_schedule(cfg: &ExperimentConfig) -> Result<NlSchedule> {
    let s = &cfg.schedule;
    NlSchedule::new(s.a, s.b.unwrap_or(s.a), s.tau2.unwrap_or(0.25))
}

fn refresh_period(cfg: &ExperimentConfig, setup: &Setup) -> Result<usize> {
    match cfg.k {
        Some(k) => Ok(k),
        None if setup.weights.r > 0.0 => min_consensus_rounds(setup.graph.n_agents(), setup.weights.r),
        None => Ok(1),
    }
}

fn scalar_params(cfg: &ExperimentConfig) -> Option<(usize, f64, f64)> {
    match cfg.model {
        ModelSpec::Scalar { n1, h, sigma2 } => Some((n1, h, sigma2)),
        _ => None,
    }
}

/// Closed-form bounds for a config, with the rate matching the configured hypothesis.
pub fn compute_bounds(cfg: &ExperimentConfig, setup: &Setup) -> Result<(Value, Option<(String, f64)>, Vec<String>)> {
    let kind = ErrorKind::for_hypothesis(cfg.hypothesis);
    let theta = match &cfg.theta_star {
        Some(t) => DVector::from_vec(t.clone()),
        None => DVector::zeros(setup.model().param_dim()),
    };
    let mut flags = Vec::new();
    match cfg.algorithm {
        Algorithm::Nl => {
            let m = setup.model();
            let b = bounds::nl_bounds(m.n_agents(), &m.obs_dims(), setup.weights.r, m, &theta, cfg.eta)?;
            if !b.feasible {
                flags.push(format!("empty threshold range ({:.6}, {:.6})", b.eta_lo, b.eta_hi));
            } else if !b.threshold_in_range {
                flags.push(format!("eta = {} outside ({:.6}, {:.6})", cfg.eta, b.eta_lo, b.eta_hi));
            }
            if b.inconclusive_signal {
                flags.push("signal too weak for the threshold range to be nonempty".into());
            }
            let rate = match kind {
                ErrorKind::FalseAlarm => Some(("LE".to_string(), b.fa_exponent.max(0.0))),
                ErrorKind::Miss => None,
            };
            Ok((serde_json::to_value(&b)?, rate, flags))
        }
        Algorithm::L => {
            let model = setup.require_linear()?;
            let sched = l_schedule(cfg)?;
            let k = refresh_period(cfg, setup)?;
            let b = bounds::l_bounds(&LBoundsInput {
                spec: &setup.spectrum,
                model,
                schedule: &sched,
                theta_star: &theta,
                r: setup.weights.r,
                k,
                eta: cfg.eta,
            })?;
            if !b.feasible {
                flags.push(format!("empty threshold range ({:.6}, {:.6})", b.eta_lo, b.eta_hi));
            } else if !b.threshold_in_range {
                flags.push(format!("eta = {} outside ({:.6}, {:.6})", cfg.eta, b.eta_lo, b.eta_hi));
            }
            if b.inconclusive_signal {
                flags.push("|theta*| below the detectability floor".into());
            }
            if b.miss_bound_undefined && kind == ErrorKind::Miss {
                flags.push("miss exponent bound undefined (reported as 0)".into());
            }
            if !b.gain_condition_met {
                flags.push("innovation gain below 1/(2 c1) + 2".into());
            }
            let rate = match kind {
                ErrorKind::FalseAlarm => ("LD0".to_string(), b.ld0),
                ErrorKind::Miss => ("LD1".to_string(), b.ld1),
            };
            Ok((serde_json::to_value(&b)?, Some(rate), flags))
        }
        Algorithm::Central => {
            let (n1, h, sigma2) = scalar_params(cfg).ok_or_else(|| Error::InvalidInput("central needs a scalar model".into()))?;
            let sched = l_schedule(cfg)?;
            let b = bounds::scalar_bounds(&ScalarBoundsInput {
                n: setup.graph.n_agents(),
                n1,
                h,
                sigma2,
                spec: &setup.spectrum,
                schedule: &sched,
                r: setup.weights.r,
                k: refresh_period(cfg, setup)?,
                eta: cfg.eta,
                theta_star: theta[0],
                g: cfg.schedule.g.unwrap_or(0.0),
            })?;
            if !(b.central_eta_lo < cfg.eta && cfg.eta < b.central_eta_hi) {
                flags.push(format!("eta = {} outside ({}, {:.6})", cfg.eta, b.central_eta_lo, b.central_eta_hi));
            }
            if !b.central_theta_feasible {
                flags.push("|theta*| below the fusion-center detectability floor".into());
            }
            if b.central_miss_bound_undefined && kind == ErrorKind::Miss {
                flags.push("miss exponent bound undefined (reported as 0)".into());
            }
            let rate = match kind {
                ErrorKind::FalseAlarm => ("LD0_c".to_string(), b.ld0_c),
                ErrorKind::Miss => ("LD1_c".to_string(), b.ld1_c),
            };
            Ok((serde_json::to_value(&b)?, Some(rate), flags))
        }
    }
}

struct TrialOut {
    z_at: Vec<Vec<f64>>,
    err_at: Vec<Vec<f64>>,
    dim_err_at: Vec<Vec<Vec<f64>>>,
    traj: Option<Trajectory>,
}

fn summarize(traj: Trajectory, truth: &TruthConfig, horizon: usize, keep: bool) -> TrialOut {
    let z_at = traj.times.iter().map(|&t| traj.z[t].clone()).collect();
    let dim_err_at = traj
        .times
        .iter()
        .zip(&traj.theta)
        .filter(|(&t, _)| is_checkpoint(t, horizon))
        .map(|(_, th)| th.iter().map(|v| (v - &truth.theta_star).iter().map(|e| e.abs()).collect()).collect())
        .collect();
    TrialOut { z_at, err_at: traj.err_norm.clone(), dim_err_at, traj: keep.then_some(traj) }
}

/// Runs every trial of `cfg` and aggregates curves, fits and bounds.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    let setup = Setup::new(cfg, opts.base_dir.as_deref())?;
    let kind = ErrorKind::for_hypothesis(cfg.hypothesis);
    let mut warnings = Vec::new();

    let (bounds_json, rate, flags) = compute_bounds(cfg, &setup)?;
    if opts.strict && !flags.is_empty() {
        return Err(Error::Infeasible(flags.join("; ")));
    }
    warnings.extend(flags.iter().cloned());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;

    let (horizon, stride, seed) = (cfg.horizon, cfg.stride, cfg.seed);
    let truth = &setup.truth;
    let outs: Vec<TrialOut> = match cfg.algorithm {
        Algorithm::Nl => {
            let model = setup.model();
            let schedule = nl_schedule(cfg)?;
            let probe = monotonicity_constant_nl(model, 200, seed)?;
            if !schedule.satisfies_gain_condition(probe.c1_hat) {
                warnings.push(format!("a = {} is below 1/c1 for the probed c1 = {:.4}", schedule.a, probe.c1_hat));
            }
            let tcfg = NlTrialConfig {
                system: NlSystem { model, graph: &setup.graph, weights: &setup.weights, schedule, project: cfg.project },
                truth,
                horizon,
                stride,
                theta0: None,
            };
            pool.install(|| {
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|i| nl_run_trial(&tcfg, seed, i as u64).map(|tr| summarize(tr, truth, horizon, i == 0)))
                    .collect::<Result<Vec<_>>>()
            })?
        }
        Algorithm::L => {
            let model = setup.require_linear()?;
            let tcfg = LTrialConfig {
                model,
                graph: &setup.graph,
                weights: &setup.weights,
                schedule: l_schedule(cfg)?,
                k: refresh_period(cfg, &setup)?,
                truth,
                horizon,
                stride,
                allow_violations: cfg.allow_assumption_violations,
            };
            warnings.extend(check_l_preconditions(&tcfg)?);
            pool.install(|| {
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|i| {
                        l_run_trial_unchecked(&tcfg, seed, i as u64, Vec::new())
                            .map(|tr| summarize(tr, truth, horizon, i == 0))
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        }
        Algorithm::Central => {
            let model = setup.require_linear()?;
            let (n1, h, sigma2) = scalar_params(cfg).expect("validated");
            let params = ScalarParams { h, sigma2, n1 };
            let g = cfg.schedule.g.expect("validated");
            pool.install(|| {
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|i| {
                        central_run_trial(model, &params, g, truth, horizon, stride, seed, i as u64)
                            .map(|tr| summarize(tr, truth, horizon, i == 0))
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        }
    };

    let mut outs = outs;
    let sample = outs[0].traj.take().expect("trial 0 keeps its trajectory");
    let times = sample.times.clone();
    let n_agents = sample.n_agents;
    let checkpoints: Vec<usize> = times.iter().copied().filter(|&t| is_checkpoint(t, horizon)).collect();

    let curves: Vec<ErrorCurve> = (0..n_agents)
        .map(|a| {
            let counts: Vec<usize> = (0..times.len())
                .map(|i| outs.iter().filter(|o| kind.is_error(o.z_at[i][a], cfg.eta)).count())
                .collect();
            ErrorCurve::from_counts(a, kind, cfg.trials, times.clone(), &counts)
        })
        .collect();

    let mut median_err = Vec::with_capacity(times.len());
    let mut mean_err = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let mut med = Vec::with_capacity(n_agents);
        let mut mean = Vec::with_capacity(n_agents);
        for a in 0..n_agents {
            let mut v: Vec<f64> = outs.iter().map(|o| o.err_at[i][a]).collect();
            mean.push(v.iter().sum::<f64>() / v.len() as f64);
            med.push(median(&mut v));
        }
        median_err.push(med);
        mean_err.push(mean);
    }
    let dims = setup.model().param_dim();
    let median_dim_err = (0..checkpoints.len())
        .map(|c| {
            (0..n_agents)
                .map(|a| {
                    (0..dims)
                        .map(|d| median(&mut outs.iter().map(|o| o.dim_err_at[c][a][d]).collect::<Vec<_>>()))
                        .collect()
                })
                .collect()
        })
        .collect();

    let agents = curves
        .iter()
        .map(|c| match fit_exponent(&c.times, &c.p_hat, c.trials, None, Normalization::PerTick) {
            Ok(e) => AgentComparison {
                agent: c.agent,
                consistent: rate.as_ref().map(|(_, r)| e.slope >= r - 2.0 * e.std_error),
                empirical: Some(e),
                fit_error: None,
            },
            Err(err) => AgentComparison { agent: c.agent, empirical: None, fit_error: Some(err.to_string()), consistent: None },
        })
        .collect();

    Ok(ExperimentResult {
        config: cfg.clone(),
        kind,
        curves,
        estimation: EstimationSummary { times, median_err, mean_err, checkpoints, median_dim_err },
        comparison: BoundsComparison {
            algorithm: cfg.algorithm,
            kind,
            eta: cfg.eta,
            bound_name: rate.as_ref().map(|r| r.0.clone()),
            bound_rate: rate.map(|r| r.1),
            agents,
            bounds: bounds_json,
            flags,
            reference: None,
        },
        sample,
        warnings,
    })
}

/// Values quoted with the published ring experiment, next to the recomputed ones.
pub fn ring_reference(cfg: &ExperimentConfig, setup: &Setup) -> Result<Value> {
    let model = setup.require_linear()?;
    let theta = presets::ring_theta_star();
    let published = LSchedule::new(presets::RING_PUBLISHED_A, presets::RING_DELTA2)?;
    let sim = l_schedule(cfg)?;
    let consts_pub = bounds::l_constants(&setup.spectrum, model, &published)?;
    let consts_sim = bounds::l_constants(&setup.spectrum, model, &sim)?;
    let mut rows = Vec::new();
    for (label, consts, sched) in [("published_schedule", &consts_pub, &published), ("simulation_schedule", &consts_sim, &sim)] {
        for (r_label, r) in [("computed_r", setup.weights.r), ("quoted_r", presets::RING_QUOTED_R)] {
            for (e_label, eta) in [("quoted_eta", presets::RING_QUOTED_ETA), ("config_eta", cfg.eta)] {
                let b = bounds::l_bounds_with(
                    consts,
                    &LBoundsInput { spec: &setup.spectrum, model, schedule: sched, theta_star: &theta, r, k: presets::RING_K, eta },
                )?;
                rows.push(json!({ "schedule": label, "r": r_label, "eta_source": e_label, "bounds": b }));
            }
        }
    }
    Ok(json!({
        "quoted": { "r": presets::RING_QUOTED_R, "eta": presets::RING_QUOTED_ETA, "LD1": presets::RING_QUOTED_LD1, "k": presets::RING_K },
        "computed_r": setup.weights.r,
        "k_min_computed_r": min_consensus_rounds(setup.graph.n_agents(), setup.weights.r)?,
        "k_min_quoted_r": min_consensus_rounds(setup.graph.n_agents(), presets::RING_QUOTED_R)?,
        "recomputed": rows,
    }))
}

/// Knobs a caller may change on a canned experiment.
#[derive(Debug, Clone, Default)]
pub struct ReproduceOptions {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub stride: Option<usize>,
    pub overrides: Vec<String>,
}

pub fn reproduce(name: &str, ro: &ReproduceOptions, opts: &RunOptions) -> Result<ExperimentResult> {
    let mut cfg = ExperimentConfig::preset(name)?;
    if let Some(t) = ro.trials {
        cfg.trials = t;
    }
    if let Some(s) = ro.seed {
        cfg.seed = s;
    }
    if let Some(h) = ro.horizon {
        cfg.horizon = h;
    }
    if let Some(s) = ro.stride {
        cfg.stride = s;
    }
    let cfg = cfg.with_overrides(&ro.overrides)?;
    let mut res = run_experiment(&cfg, opts)?;
    if name == "l_vic" {
        let setup = Setup::new(&cfg, None)?;
        res.comparison.reference = Some(ring_reference(&cfg, &setup)?);
    }
    Ok(res)
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

/// Writes `config.json`, `curves.csv`, `estimation.csv`, `estimation_dims.csv`,
/// `exponents.json`, `bounds_vs_empirical.json` and `trajectory_sample.csv`.
pub fn write_outputs(res: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), res.config.to_json() + "\n")?;

    let mut curves = String::from("t,agent,kind,p_hat,ci_lo,ci_hi,ci_halfwidth\n");
    for c in &res.curves {
        for (i, &t) in c.times.iter().enumerate() {
            curves.push_str(&format!(
                "{t},{},{},{},{},{},{}\n",
                c.agent,
                c.kind.as_str(),
                fmt_f(c.p_hat[i]),
                fmt_f(c.ci_lo[i]),
                fmt_f(c.ci_hi[i]),
                fmt_f(c.ci_halfwidth(i))
            ));
        }
    }
    fs::write(dir.join("curves.csv"), curves)?;

    let est = &res.estimation;
    let mut e = String::from("t,agent,median_err,mean_err\n");
    for (i, &t) in est.times.iter().enumerate() {
        for a in 0..est.median_err[i].len() {
            e.push_str(&format!("{t},{a},{},{}\n", est.median_err[i][a], est.mean_err[i][a]));
        }
    }
    fs::write(dir.join("estimation.csv"), e)?;

    let mut d = String::from("t,agent,dim,median_abs_err\n");
    for (c, &t) in est.checkpoints.iter().enumerate() {
        for (a, row) in est.median_dim_err[c].iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                d.push_str(&format!("{t},{a},{k},{v}\n"));
            }
        }
    }
    fs::write(dir.join("estimation_dims.csv"), d)?;

    let exps: Vec<Value> = res
        .comparison
        .agents
        .iter()
        .map(|a| json!({ "agent": a.agent, "kind": res.kind, "estimate": a.empirical, "error": a.fit_error }))
        .collect();
    fs::write(dir.join("exponents.json"), serde_json::to_string_pretty(&exps)? + "\n")?;
    let mut cmp = serde_json::to_value(&res.comparison)?;
    cmp["warnings"] = json!(res.warnings);
    fs::write(dir.join("bounds_vs_empirical.json"), serde_json::to_string_pretty(&cmp)? + "\n")?;
    fs::write(dir.join("trajectory_sample.csv"), res.sample.to_csv())?;
    Ok(())
}
