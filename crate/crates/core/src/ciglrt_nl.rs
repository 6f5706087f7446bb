//! Nonlinear consensus+innovations GLRT detector.
//!
//! Each tick every agent mixes its estimate with its neighbours', corrects it
//! with its own observation, and folds a plug-in log-likelihood ratio into a
//! consensus-averaged decision statistic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{ConsensusWeights, Graph};
use crate::sensing::{add_noise, Hypothesis, NoiseSampler, ObservationModel, TruthConfig};

/// Estimates whose stacked norm exceeds this abort the trial.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Gains `alpha_t = a/(t+1)`, `beta_t = b/(t+1)^tau2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlSchedule {
    pub a: f64,
    pub b: f64,
    pub tau2: f64,
}

impl NlSchedule {
    pub fn new(a: f64, b: f64, tau2: f64) -> Result<Self> {
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::InvalidParameter(format!("gains must be positive (a={a}, b={b})")));
        }
        if !(tau2 > 0.0 && tau2 < 0.5) {
            return Err(Error::InvalidParameter(format!("tau2 must lie in (0, 1/2), got {tau2}")));
        }
        Ok(Self { a, b, tau2 })
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.a / (t as f64 + 1.0)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.b / (t as f64 + 1.0).powf(self.tau2)
    }

    /// Whether `a * c1 >= 1` for a (probed) monotonicity constant.
    pub fn satisfies_gain_condition(&self, c1_hat: f64) -> bool {
        self.a * c1_hat >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlState {
    pub t: usize,
    pub theta: Vec<DVector<f64>>,
    pub z: DVector<f64>,
}

impl NlState {
    pub fn zeros(n_agents: usize, param_dim: usize) -> Self {
        Self { t: 0, theta: vec![DVector::zeros(param_dim); n_agents], z: DVector::zeros(n_agents) }
    }
}

fn check_dims(state: &NlState, model: &dyn ObservationModel, y: &[DVector<f64>]) -> Result<()> {
    let n = model.n_agents();
    if state.theta.len() != n || state.z.len() != n || y.len() != n {
        return Err(Error::InvalidInput("agent count mismatch between state, model and data".into()));
    }
    for (i, (th, yn)) in state.theta.iter().zip(y).enumerate() {
        if th.len() != model.param_dim() || yn.len() != model.obs_dim(i) {
            return Err(Error::InvalidInput(format!("agent {i}: dimension mismatch")));
        }
    }
    Ok(())
}

fn guard(theta: &[DVector<f64>], t: usize) -> Result<()> {
    let sq: f64 = theta.iter().map(|v| v.norm_squared()).sum();
    if !sq.is_finite() || sq.sqrt() > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { t });
    }
    Ok(())
}

/// One estimate update, agent by agent.
pub fn nl_step_estimate(
    state: &NlState,
    model: &dyn ObservationModel,
    graph: &Graph,
    schedule: &NlSchedule,
    y: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    check_dims(state, model, y)?;
    let (alpha, beta) = (schedule.alpha(state.t), schedule.beta(state.t));
    let next: Vec<DVector<f64>> = (0..model.n_agents())
        .map(|n| {
            let th = &state.theta[n];
            let mut consensus = DVector::zeros(th.len());
            for &l in graph.neighbors(n) {
                consensus += th - &state.theta[l];
            }
            let resid = &y[n] - model.sense(n, th);
            let innov = model.gradient(n, th) * (model.noise(n).sigma_inv() * resid);
            th - consensus * beta + innov * alpha
        })
        .collect();
    guard(&next, state.t + 1)?;
    Ok(next)
}

/// The same update written on stacked vectors:
/// `theta - beta (L (x) I) theta + alpha G(theta) Sigma^{-1} (y - h(theta))`.
pub fn nl_step_estimate_stacked(
    state: &NlState,
    model: &dyn ObservationModel,
    laplacian: &DMatrix<f64>,
    schedule: &NlSchedule,
    y: &[DVector<f64>],
) -> Result<DVector<f64>> {
    check_dims(state, model, y)?;
    let m = model.param_dim();
    let theta = linalg::stack(&state.theta);
    let grads: Vec<_> = (0..model.n_agents()).map(|n| model.gradient(n, &state.theta[n])).collect();
    let g = linalg::block_diag(&grads);
    let sigma_inv = crate::sensing::stacked_sigma_inv(model);
    let h: Vec<_> = (0..model.n_agents()).map(|n| model.sense(n, &state.theta[n])).collect();
    let resid = linalg::stack(y) - linalg::stack(&h);
    let lk = laplacian.kronecker(&DMatrix::identity(m, m));
    let next = &theta - (lk * &theta) * schedule.beta(state.t) + g * (sigma_inv * resid) * schedule.alpha(state.t);
    let sizes = vec![m; model.n_agents()];
    guard(&linalg::unstack(&next, &sizes), state.t + 1)?;
    Ok(next)
}

/// `h_n(theta)^T Sigma^{-1} y - h_n(theta)^T Sigma^{-1} h_n(theta) / 2`.
pub fn nl_llr(model: &dyn ObservationModel, n: usize, theta_n: &DVector<f64>, y_n: &DVector<f64>) -> f64 {
    let h = model.sense(n, theta_n);
    let si_h = model.noise(n).sigma_inv() * &h;
    si_h.dot(y_n) - 0.5 * si_h.dot(&h)
}

/// `z(t+1) = t/(t+1) W z(t) + 1/(t+1) llr(theta(t), y(t))`.
pub fn nl_step_statistic(
    state: &NlState,
    model: &dyn ObservationModel,
    weights: &ConsensusWeights,
    y: &[DVector<f64>],
) -> Result<DVector<f64>> {
    check_dims(state, model, y)?;
    if weights.n() != model.n_agents() {
        return Err(Error::InvalidInput("weight matrix size mismatch".into()));
    }
    let t = state.t as f64;
    let llr = DVector::from_fn(model.n_agents(), |n, _| nl_llr(model, n, &state.theta[n], &y[n]));
    let z = (&weights.w * &state.z) * (t / (t + 1.0)) + llr / (t + 1.0);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: state.t + 1 });
    }
    Ok(z)
}

/// H1 iff `z > eta`.
pub fn nl_decide(z: f64, eta: f64) -> Hypothesis {
    if z > eta {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// Everything a tick needs besides the state and the data.
#[derive(Clone, Copy)]
pub struct NlSystem<'a> {
    pub model: &'a dyn ObservationModel,
    pub graph: &'a Graph,
    pub weights: &'a ConsensusWeights,
    pub schedule: NlSchedule,
    /// Clamp estimates to the model's domain box after every update.
    pub project: bool,
}

/// One full tick: statistic from `theta(t)`, then the estimate update.
pub fn nl_advance(state: &mut NlState, sys: &NlSystem<'_>, y: &[DVector<f64>]) -> Result<()> {
    let z = nl_step_statistic(state, sys.model, sys.weights, y)?;
    let mut theta = nl_step_estimate(state, sys.model, sys.graph, &sys.schedule, y)?;
    if sys.project {
        if let Some(dom) = sys.model.domain() {
            theta.iter_mut().for_each(|th| dom.project(th));
        }
    }
    state.theta = theta;
    state.z = z;
    state.t += 1;
    Ok(())
}

/// Recorded history of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n_agents: usize,
    /// Times at which estimates were recorded (multiples of the stride, plus the horizon).
    pub times: Vec<usize>,
    /// `theta[k][n]` at `times[k]`.
    pub theta: Vec<Vec<DVector<f64>>>,
    /// `err_norm[k][n] = |theta_n - theta*|` at `times[k]`.
    pub err_norm: Vec<Vec<f64>>,
    /// `z[t][n]` for every tick `0..=horizon`.
    pub z: Vec<Vec<f64>>,
    /// Ticks at which a refreshed statistic was published (linear detector only).
    pub refresh_ticks: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn new(n_agents: usize) -> Self {
        Self {
            n_agents,
            times: Vec::new(),
            theta: Vec::new(),
            err_norm: Vec::new(),
            z: Vec::new(),
            refresh_ticks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn record_estimate(&mut self, t: usize, theta: &[DVector<f64>], theta_star: &DVector<f64>) {
        self.times.push(t);
        self.err_norm.push(theta.iter().map(|th| (th - theta_star).norm()).collect());
        self.theta.push(theta.to_vec());
    }

    pub fn decisions(&self, eta: f64) -> Vec<Vec<Hypothesis>> {
        self.z.iter().map(|row| row.iter().map(|&z| nl_decide(z, eta)).collect()).collect()
    }

    /// CSV with columns `t,agent,err_norm,z` at the recorded times.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,agent,err_norm,z");
        let with_refresh = !self.refresh_ticks.is_empty();
        if with_refresh {
            out.push_str(",z_refresh_tick");
        }
        out.push('\n');
        for (k, &t) in self.times.iter().enumerate() {
            for n in 0..self.n_agents {
                out.push_str(&format!("{t},{n},{},{}", self.err_norm[k][n], self.z[t][n]));
                if with_refresh {
                    let flag = self.refresh_ticks.binary_search(&t).is_ok() as u8;
                    out.push_str(&format!(",{flag}"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// CSV with columns `t,agent,decision` at the recorded times.
    pub fn decisions_csv(&self, eta: f64) -> String {
        let mut out = String::from("t,agent,decision\n");
        for &t in &self.times {
            for n in 0..self.n_agents {
                let d = match nl_decide(self.z[t][n], eta) {
                    Hypothesis::H0 => "H0",
                    Hypothesis::H1 => "H1",
                };
                out.push_str(&format!("{t},{n},{d}\n"));
            }
        }
        out
    }
}

/// Whether estimates are recorded at tick `t`.
pub fn is_recorded(t: usize, stride: usize, horizon: usize) -> bool {
    t % stride == 0 || t == horizon
}

/// Trial settings shared by every Monte Carlo path.
#[derive(Clone)]
pub struct NlTrialConfig<'a> {
    pub system: NlSystem<'a>,
    pub truth: &'a TruthConfig,
    pub horizon: usize,
    pub stride: usize,
    /// Initial estimates; zeros when absent.
    pub theta0: Option<Vec<DVector<f64>>>,
}

/// Runs one path on noise stream `stream` of generator `seed`.
pub fn nl_run_trial(cfg: &NlTrialConfig<'_>, seed: u64, stream: u64) -> Result<Trajectory> {
    let model = cfg.system.model;
    if cfg.stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let signal = cfg.truth.signal(model)?;
    let mut sampler = NoiseSampler::new(model, seed, stream);
    let mut state = NlState::zeros(model.n_agents(), model.param_dim());
    if let Some(t0) = &cfg.theta0 {
        if t0.len() != model.n_agents() {
            return Err(Error::InvalidInput("theta0 has the wrong number of agents".into()));
        }
        state.theta = t0.clone();
    }
    let mut traj = Trajectory::new(model.n_agents());
    traj.record_estimate(0, &state.theta, &cfg.truth.theta_star);
    traj.z.push(state.z.iter().copied().collect());
    for t in 0..cfg.horizon {
        let y = add_noise(&signal, &mut sampler);
        nl_advance(&mut state, &cfg.system, &y)?;
        traj.z.push(state.z.iter().copied().collect());
        if is_recorded(t + 1, cfg.stride, cfg.horizon) {
            traj.record_estimate(t + 1, &state.theta, &cfg.truth.theta_star);
        }
    }
    Ok(traj)
}
