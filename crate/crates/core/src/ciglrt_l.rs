//! Linear consensus+innovations GLRT detector and the centralized scalar baseline.
//!
//! The linear detector keeps a running average of each agent's observations.
//! Every `k` ticks the agents evaluate a plug-in statistic from their current
//! estimate and average, mix it over `k - 1` consensus rounds, and hold the
//! result for the next `k` ticks.

use nalgebra::{DMatrix, DVector};

use crate::ciglrt_nl::{is_recorded, nl_decide, Trajectory, DIVERGENCE_LIMIT};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{min_consensus_rounds, ConsensusWeights, Graph};
use crate::sensing::{add_noise, Hypothesis, LinearModel, NoiseSampler, ObservationModel, TruthConfig};

/// Gains `alpha_t = a/(t+1)` and `beta_t = b/(t+1)^delta2`, where `b`
/// defaults to `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LSchedule {
    pub a: f64,
    pub delta2: f64,
    pub consensus_gain: Option<f64>,
}

impl LSchedule {
    pub fn new(a: f64, delta2: f64) -> Result<Self> {
        if !(a >= 1.0) {
            return Err(Error::InvalidParameter(format!("a must be at least 1, got {a}")));
        }
        if !(delta2 > 0.0 && delta2 <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta2 must lie in (0, 1], got {delta2}")));
        }
        Ok(Self { a, delta2, consensus_gain: None })
    }

    /// Uses a separate consensus gain `b` in `beta_t`.
    pub fn with_consensus_gain(mut self, b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::InvalidParameter(format!("consensus gain must be positive, got {b}")));
        }
        self.consensus_gain = Some(b);
        Ok(self)
    }

    pub fn b(&self) -> f64 {
        self.consensus_gain.unwrap_or(self.a)
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.a / (t as f64 + 1.0)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.b() / (t as f64 + 1.0).powf(self.delta2)
    }

    /// Smallest admissible `a` for a given `c1`: `max(1, 1/(2 c1) + 2)`.
    pub fn min_gain(c1: f64) -> f64 {
        (1.0 / (2.0 * c1) + 2.0).max(1.0)
    }

    pub fn check_gain(&self, c1: f64) -> Result<()> {
        let need = Self::min_gain(c1);
        if self.a < need {
            return Err(Error::AssumptionViolated(format!(
                "a = {} is below 1/(2 c1) + 2 = {need:.6} (c1 = {c1:.6})",
                self.a
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LState {
    pub t: usize,
    pub theta: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub z_hat: DVector<f64>,
    pub z: DVector<f64>,
    pub k: usize,
    /// `(theta(tau), s(tau))` captured at the last tick with `tau % k == 0`.
    snapshot: Option<(Vec<DVector<f64>>, Vec<DVector<f64>>)>,
    pending: Option<DVector<f64>>,
}

impl LState {
    pub fn zeros(model: &LinearModel, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let n = model.n_agents();
        Ok(Self {
            t: 0,
            theta: vec![DVector::zeros(model.param_dim()); n],
            s: (0..n).map(|i| DVector::zeros(model.obs_dim(i))).collect(),
            z_hat: DVector::zeros(n),
            z: DVector::zeros(n),
            k,
            snapshot: None,
            pending: None,
        })
    }
}

fn check_dims(theta: &[DVector<f64>], model: &LinearModel, y: &[DVector<f64>]) -> Result<()> {
    if theta.len() != model.n_agents() || y.len() != model.n_agents() {
        return Err(Error::InvalidInput("agent count mismatch between state, model and data".into()));
    }
    for (i, (th, yn)) in theta.iter().zip(y).enumerate() {
        if th.len() != model.param_dim() || yn.len() != model.obs_dim(i) {
            return Err(Error::InvalidInput(format!("agent {i}: dimension mismatch")));
        }
    }
    Ok(())
}

/// Per-agent estimate update.
pub fn l_step_estimate(
    state: &LState,
    model: &LinearModel,
    graph: &Graph,
    schedule: &LSchedule,
    y: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    check_dims(&state.theta, model, y)?;
    let (alpha, beta) = (schedule.alpha(state.t), schedule.beta(state.t));
    let next: Vec<DVector<f64>> = (0..model.n_agents())
        .map(|n| {
            let th = &state.theta[n];
            let mut consensus = DVector::zeros(th.len());
            for &l in graph.neighbors(n) {
                consensus += th - &state.theta[l];
            }
            let h = model.h(n);
            let innov = h.transpose() * (model.noise(n).sigma_inv() * (&y[n] - h * th));
            th - consensus * beta + innov * alpha
        })
        .collect();
    let sq: f64 = next.iter().map(|v| v.norm_squared()).sum();
    if !sq.is_finite() || sq.sqrt() > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { t: state.t + 1 });
    }
    Ok(next)
}

/// Stacked form `theta - beta (L (x) I) theta + alpha G_H Sigma^{-1} (y - G_H^T theta)`.
pub fn l_step_estimate_stacked(
    theta: &DVector<f64>,
    t: usize,
    model: &LinearModel,
    laplacian: &DMatrix<f64>,
    schedule: &LSchedule,
    y: &DVector<f64>,
) -> DVector<f64> {
    let m = model.param_dim();
    let gh = crate::sensing::stacked_gh(model);
    let si = crate::sensing::stacked_sigma_inv(model);
    let lk = laplacian.kronecker(&DMatrix::identity(m, m));
    theta - (lk * theta) * schedule.beta(t) + &gh * (si * (y - gh.transpose() * theta)) * schedule.alpha(t)
}

/// `s(t) = s(t-1) t/(t+1) + y(t)/(t+1)`; at `t = 0` this is `y(0)`.
pub fn l_update_running_average(s_prev: &DVector<f64>, y: &DVector<f64>, t: usize) -> DVector<f64> {
    if t == 0 {
        return y.clone();
    }
    let tf = t as f64;
    s_prev * (tf / (tf + 1.0)) + y / (tf + 1.0)
}

/// Local statistic `theta^T H^T Sigma^{-1} (s - H theta / 2)`.
pub fn l_local_statistic(model: &LinearModel, n: usize, theta: &DVector<f64>, s: &DVector<f64>) -> f64 {
    let h_theta = model.h(n) * theta;
    let si_h = model.noise(n).sigma_inv() * &h_theta;
    si_h.dot(&(s - h_theta * 0.5))
}

/// Refresh step, legal only at ticks `tau = k t - k + 1`.
///
/// Computes local statistics from the data captured at `k (t - 1)`, mixes
/// them with `w_pow = W^{k-1}`, and schedules the result for publication at
/// tick `k t`.
pub fn l_refresh_statistic(state: &mut LState, model: &LinearModel, w_pow: &DMatrix<f64>) -> Result<()> {
    let k = state.k;
    if state.t == 0 || (state.t - 1) % k != 0 {
        return Err(Error::ContractViolation(format!(
            "refresh called at tick {} but refreshes happen at ticks 1 mod {k}",
            state.t
        )));
    }
    let (theta, s) = state
        .snapshot
        .take()
        .ok_or_else(|| Error::ContractViolation("no snapshot available for refresh".into()))?;
    if w_pow.nrows() != model.n_agents() {
        return Err(Error::InvalidInput("mixing matrix size mismatch".into()));
    }
    let local = DVector::from_fn(model.n_agents(), |n, _| l_local_statistic(model, n, &theta[n], &s[n]));
    let mixed = w_pow * local;
    if mixed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: state.t });
    }
    state.z_hat = mixed.clone();
    state.pending = Some(mixed);
    publish_if_due(state);
    Ok(())
}

fn publish_if_due(state: &mut LState) -> bool {
    if state.t % state.k == 0 {
        if let Some(p) = state.pending.take() {
            state.z = p;
            return true;
        }
    }
    false
}

/// H1 iff `z > eta`.
pub fn l_decide(z: f64, eta: f64) -> Hypothesis {
    nl_decide(z, eta)
}

#[derive(Clone, Copy)]
pub struct LSystem<'a> {
    pub model: &'a LinearModel,
    pub graph: &'a Graph,
    pub schedule: LSchedule,
    /// `W^{k-1}`, computed once.
    pub w_pow: &'a DMatrix<f64>,
}

/// Cached `W^{k-1}`.
pub fn mixing_power(weights: &ConsensusWeights, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(weights.power(k - 1))
}

/// One tick. Returns whether a refreshed statistic was published.
pub fn l_advance(state: &mut LState, sys: &LSystem<'_>, y: &[DVector<f64>]) -> Result<bool> {
    check_dims(&state.theta, sys.model, y)?;
    let tau = state.t;
    state.s = state.s.iter().zip(y).map(|(s, yn)| l_update_running_average(s, yn, tau)).collect();
    if tau % state.k == 0 {
        state.snapshot = Some((state.theta.clone(), state.s.clone()));
    }
    state.theta = l_step_estimate(state, sys.model, sys.graph, &sys.schedule, y)?;
    state.t += 1;
    if (state.t - 1) % state.k == 0 {
        l_refresh_statistic(state, sys.model, sys.w_pow)?;
        return Ok(state.t % state.k == 0);
    }
    Ok(publish_if_due(state))
}

#[derive(Clone)]
pub struct LTrialConfig<'a> {
    pub model: &'a LinearModel,
    pub graph: &'a Graph,
    pub weights: &'a ConsensusWeights,
    pub schedule: LSchedule,
    pub k: usize,
    pub truth: &'a TruthConfig,
    pub horizon: usize,
    pub stride: usize,
    /// Turn the `k >= k_min` and gain checks into warnings.
    pub allow_violations: bool,
}

/// Validates `k` and the gain; returns warnings when violations are allowed.
pub fn check_l_preconditions(cfg: &LTrialConfig<'_>) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    let n = cfg.model.n_agents();
    if cfg.weights.r > 0.0 {
        let k_min = min_consensus_rounds(n, cfg.weights.r)?;
        if cfg.k < k_min {
            let msg = format!("k = {} is below the minimum {k_min} consensus rounds", cfg.k);
            if !cfg.allow_violations {
                return Err(Error::AssumptionViolated(msg));
            }
            warnings.push(msg);
        }
    }
    let c1 = crate::sensing::c1_linear(&crate::network::spectrum(cfg.graph), cfg.model)?;
    if let Err(e) = cfg.schedule.check_gain(c1) {
        if !cfg.allow_violations {
            return Err(e);
        }
        warnings.push(e.to_string());
    }
    Ok(warnings)
}

pub fn l_run_trial(cfg: &LTrialConfig<'_>, seed: u64, stream: u64) -> Result<Trajectory> {
    let warnings = check_l_preconditions(cfg)?;
    l_run_trial_unchecked(cfg, seed, stream, warnings)
}

/// Trial loop without precondition checks, for callers that validated once.
pub fn l_run_trial_unchecked(
    cfg: &LTrialConfig<'_>,
    seed: u64,
    stream: u64,
    warnings: Vec<String>,
) -> Result<Trajectory> {
    if cfg.stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let model = cfg.model;
    let w_pow = mixing_power(cfg.weights, cfg.k)?;
    let sys = LSystem { model, graph: cfg.graph, schedule: cfg.schedule, w_pow: &w_pow };
    let signal = cfg.truth.signal(model)?;
    let mut sampler = NoiseSampler::new(model, seed, stream);
    let mut state = LState::zeros(model, cfg.k)?;
    let mut traj = Trajectory::new(model.n_agents());
    traj.warnings = warnings;
    traj.record_estimate(0, &state.theta, &cfg.truth.theta_star);
    traj.z.push(state.z.iter().copied().collect());
    for t in 0..cfg.horizon {
        let y = add_noise(&signal, &mut sampler);
        if l_advance(&mut state, &sys, &y)? {
            traj.refresh_ticks.push(state.t);
        }
        traj.z.push(state.z.iter().copied().collect());
        if is_recorded(t + 1, cfg.stride, cfg.horizon) {
            traj.record_estimate(t + 1, &state.theta, &cfg.truth.theta_star);
        }
    }
    Ok(traj)
}

/// Scalar model seen by the fusion center: `N1` informative agents with gain `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarParams {
    pub h: f64,
    pub sigma2: f64,
    pub n1: usize,
}

/// Fusion-center recursion with gain `kappa_t = g/(t+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralState {
    pub t: usize,
    pub theta_c: f64,
    pub z_c: f64,
    pub g: f64,
    s: Vec<f64>,
    /// `(theta_c(t-1), sum_j s_j(t-1))`.
    prev: Option<(f64, f64)>,
}

impl CentralState {
    pub fn new(params: &ScalarParams, g: f64) -> Result<Self> {
        if params.n1 == 0 {
            return Err(Error::InvalidInput("the fusion center needs at least one informative agent".into()));
        }
        if !(params.sigma2 > 0.0) {
            return Err(Error::InvalidInput("sigma2 must be positive".into()));
        }
        if !(2.0 * params.h * params.h * g > params.sigma2) {
            return Err(Error::AssumptionViolated(format!(
                "2 h^2 g = {} must exceed sigma^2 = {}",
                2.0 * params.h * params.h * g,
                params.sigma2
            )));
        }
        Ok(Self { t: 0, theta_c: 0.0, z_c: 0.0, g, s: vec![0.0; params.n1], prev: None })
    }

    pub fn kappa(&self, t: usize) -> f64 {
        self.g / (t as f64 + 1.0)
    }
}

/// One fusion-center tick. `y` holds at least the `N1` informative observations.
pub fn central_step(state: &mut CentralState, params: &ScalarParams, y: &[f64]) -> Result<()> {
    let n1 = params.n1;
    if y.len() < n1 || state.s.len() != n1 {
        return Err(Error::InvalidInput(format!("expected {n1} informative observations, got {}", y.len())));
    }
    let t = state.t;
    let (h, s2, n1f) = (params.h, params.sigma2, n1 as f64);
    for (s, &yj) in state.s.iter_mut().zip(y) {
        *s = if t == 0 { yj } else { *s * (t as f64 / (t as f64 + 1.0)) + yj / (t as f64 + 1.0) };
    }
    if let Some((th_prev, s_prev)) = state.prev {
        state.z_c = (h * th_prev / (n1f * s2)) * (s_prev - h * th_prev / 2.0);
    }
    state.prev = Some((state.theta_c, state.s.iter().sum()));
    let ysum: f64 = y[..n1].iter().sum();
    state.theta_c += state.kappa(t) / (n1f * s2) * (h * ysum - n1f * h * h * state.theta_c);
    if !state.theta_c.is_finite() || state.theta_c.abs() > DIVERGENCE_LIMIT || !state.z_c.is_finite() {
        return Err(Error::Divergence { t: t + 1 });
    }
    state.t += 1;
    Ok(())
}

/// Scalar fusion-center trial; output uses a single pseudo-agent.
pub fn central_run_trial(
    model: &LinearModel,
    params: &ScalarParams,
    g: f64,
    truth: &TruthConfig,
    horizon: usize,
    stride: usize,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let signal = truth.signal(model)?;
    let mut sampler = NoiseSampler::new(model, seed, stream);
    let mut state = CentralState::new(params, g)?;
    let mut traj = Trajectory::new(1);
    let target = truth.theta_star[0];
    let rec = |traj: &mut Trajectory, t: usize, th: f64| {
        traj.times.push(t);
        traj.err_norm.push(vec![(th - target).abs()]);
        traj.theta.push(vec![DVector::from_element(1, th)]);
    };
    rec(&mut traj, 0, state.theta_c);
    traj.z.push(vec![state.z_c]);
    for t in 0..horizon {
        let y: Vec<f64> = add_noise(&signal, &mut sampler).iter().map(|v| v[0]).collect();
        central_step(&mut state, params, &y)?;
        traj.z.push(vec![state.z_c]);
        if is_recorded(t + 1, stride, horizon) {
            rec(&mut traj, t + 1, state.theta_c);
        }
    }
    Ok(traj)
}

/// Stacked equivalent of the per-agent layout, for cross-checks.
pub fn stacked_theta(state: &LState) -> DVector<f64> {
    linalg::stack(&state.theta)
}
