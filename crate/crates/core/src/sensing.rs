//! Observation models, Gaussian noise generation and model diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::Spectrum;

/// Which hypothesis generated the data, or which one an agent decides for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Zero-mean Gaussian noise with a fixed covariance.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    sigma: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianNoise {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
            return Err(Error::InvalidInput("covariance must be square and non-empty".into()));
        }
        if (&sigma - sigma.transpose()).abs().max() > 1e-12 * (1.0 + sigma.abs().max()) {
            return Err(Error::InvalidInput("covariance must be symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?;
        let sigma_inv = chol.inverse();
        Ok(Self { chol: chol.l(), sigma_inv, sigma })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidInput(format!("noise variance must be positive, got {variance}")));
        }
        Self::new(DMatrix::identity(dim, dim) * variance)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    /// Lower Cholesky factor.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }
}

/// Axis-aligned box constraint on the parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl BoxDomain {
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: DVector::from_element(dim, lo), hi: DVector::from_element(dim, hi) }
    }

    pub fn project(&self, theta: &mut DVector<f64>) {
        for i in 0..theta.len() {
            theta[i] = theta[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.lo.len(), |i, _| self.lo[i] + (self.hi[i] - self.lo[i]) * rng.gen::<f64>())
    }
}

/// Per-agent sensing maps `h_n` together with their noise.
pub trait ObservationModel: Send + Sync {
    fn n_agents(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn obs_dim(&self, n: usize) -> usize;
    /// `h_n(theta)`.
    fn sense(&self, n: usize, theta: &DVector<f64>) -> DVector<f64>;
    /// `grad h_n(theta)`, an `M x M_n` matrix.
    fn gradient(&self, n: usize, theta: &DVector<f64>) -> DMatrix<f64>;
    fn noise(&self, n: usize) -> &GaussianNoise;
    /// Lipschitz constant `k_n` of `h_n`.
    fn lipschitz(&self, n: usize) -> f64;
    fn domain(&self) -> Option<&BoxDomain> {
        None
    }

    fn obs_dims(&self) -> Vec<usize> {
        (0..self.n_agents()).map(|n| self.obs_dim(n)).collect()
    }

    fn total_obs_dim(&self) -> usize {
        self.obs_dims().iter().sum()
    }
}

/// `y_n = H_n theta + noise`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    h: Vec<DMatrix<f64>>,
    noise: Vec<GaussianNoise>,
    param_dim: usize,
}

impl LinearModel {
    pub fn new(h: Vec<DMatrix<f64>>, sigma: Vec<DMatrix<f64>>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidInput("model needs at least one agent".into()));
        }
        if h.len() != sigma.len() {
            return Err(Error::InvalidInput(format!(
                "{} observation matrices but {} covariances",
                h.len(),
                sigma.len()
            )));
        }
        let param_dim = h[0].ncols();
        if param_dim == 0 {
            return Err(Error::InvalidInput("parameter dimension must be positive".into()));
        }
        let mut noise = Vec::with_capacity(h.len());
        for (n, (hn, sn)) in h.iter().zip(sigma).enumerate() {
            if hn.ncols() != param_dim || hn.nrows() == 0 {
                return Err(Error::InvalidInput(format!("agent {n}: H_n has shape {:?}", hn.shape())));
            }
            if sn.nrows() != hn.nrows() {
                return Err(Error::InvalidInput(format!(
                    "agent {n}: covariance is {}x{}, expected {}",
                    sn.nrows(),
                    sn.ncols(),
                    hn.nrows()
                )));
            }
            noise.push(GaussianNoise::new(sn).map_err(|e| Error::InvalidInput(format!("agent {n}: {e}")))?);
        }
        Ok(Self { h, noise, param_dim })
    }

    /// Scalar model: `N` agents, the first `n1` observe `h * theta`, the rest pure noise.
    pub fn scalar(n: usize, n1: usize, h: f64, sigma2: f64) -> Result<Self> {
        if n1 > n || n == 0 {
            return Err(Error::InvalidInput(format!("need 0 <= N1 <= N, got N1={n1}, N={n}")));
        }
        let hs = (0..n).map(|i| DMatrix::from_element(1, 1, if i < n1 { h } else { 0.0 })).collect();
        let ss = vec![DMatrix::from_element(1, 1, sigma2); n];
        Self::new(hs, ss)
    }

    pub fn h(&self, n: usize) -> &DMatrix<f64> {
        &self.h[n]
    }
}

impl ObservationModel for LinearModel {
    fn n_agents(&self) -> usize {
        self.h.len()
    }
    fn param_dim(&self) -> usize {
        self.param_dim
    }
    fn obs_dim(&self, n: usize) -> usize {
        self.h[n].nrows()
    }
    fn sense(&self, n: usize, theta: &DVector<f64>) -> DVector<f64> {
        &self.h[n] * theta
    }
    fn gradient(&self, n: usize, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.h[n].transpose()
    }
    fn noise(&self, n: usize) -> &GaussianNoise {
        &self.noise[n]
    }
    fn lipschitz(&self, n: usize) -> f64 {
        linalg::spectral_norm(&self.h[n])
    }
}

/// One agent's nonlinear sensing map.
pub trait SensorMap: Send + Sync {
    fn out_dim(&self) -> usize;
    fn value(&self, theta: &DVector<f64>) -> DVector<f64>;
    /// `M x out_dim` gradient.
    fn gradient(&self, theta: &DVector<f64>) -> DMatrix<f64>;
    fn lipschitz(&self) -> f64;
}

/// `amplitude * sin(theta_i + theta_j)`.
#[derive(Debug, Clone)]
pub struct TrigPairSensor {
    pub i: usize,
    pub j: usize,
    pub amplitude: f64,
    pub param_dim: usize,
}

impl SensorMap for TrigPairSensor {
    fn out_dim(&self) -> usize {
        1
    }
    fn value(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.amplitude * (theta[self.i] + theta[self.j]).sin())
    }
    fn gradient(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let c = self.amplitude * (theta[self.i] + theta[self.j]).cos();
        let mut g = DMatrix::zeros(self.param_dim, 1);
        g[(self.i, 0)] += c;
        g[(self.j, 0)] += c;
        g
    }
    fn lipschitz(&self) -> f64 {
        self.amplitude * if self.i == self.j { 2.0 } else { 2f64.sqrt() }
    }
}

/// Model built from arbitrary per-agent sensor maps.
pub struct NonlinearModel {
    sensors: Vec<Box<dyn SensorMap>>,
    noise: Vec<GaussianNoise>,
    param_dim: usize,
    domain: Option<BoxDomain>,
}

impl std::fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("n_agents", &self.sensors.len())
            .field("param_dim", &self.param_dim)
            .field("domain", &self.domain)
            .finish()
    }
}

impl NonlinearModel {
    pub fn new(
        sensors: Vec<Box<dyn SensorMap>>,
        noise: Vec<GaussianNoise>,
        param_dim: usize,
        domain: Option<BoxDomain>,
    ) -> Result<Self> {
        if sensors.is_empty() || sensors.len() != noise.len() {
            return Err(Error::InvalidInput("need one noise model per sensor".into()));
        }
        for (n, (s, g)) in sensors.iter().zip(&noise).enumerate() {
            if s.out_dim() != g.dim() {
                return Err(Error::InvalidInput(format!("agent {n}: noise dimension mismatch")));
            }
            if s.value(&DVector::zeros(param_dim)).norm() > 1e-12 {
                return Err(Error::InvalidInput(format!("agent {n}: h_n(0) must be 0")));
            }
        }
        if let Some(d) = &domain {
            if d.lo.len() != param_dim || d.hi.len() != param_dim || (0..param_dim).any(|i| d.lo[i] > d.hi[i]) {
                return Err(Error::InvalidInput("malformed domain box".into()));
            }
        }
        Ok(Self { sensors, noise, param_dim, domain })
    }

    pub fn set_domain(&mut self, domain: Option<BoxDomain>) {
        self.domain = domain;
    }
}

impl ObservationModel for NonlinearModel {
    fn n_agents(&self) -> usize {
        self.sensors.len()
    }
    fn param_dim(&self) -> usize {
        self.param_dim
    }
    fn obs_dim(&self, n: usize) -> usize {
        self.sensors[n].out_dim()
    }
    fn sense(&self, n: usize, theta: &DVector<f64>) -> DVector<f64> {
        self.sensors[n].value(theta)
    }
    fn gradient(&self, n: usize, theta: &DVector<f64>) -> DMatrix<f64> {
        self.sensors[n].gradient(theta)
    }
    fn noise(&self, n: usize) -> &GaussianNoise {
        &self.noise[n]
    }
    fn lipschitz(&self, n: usize) -> f64 {
        self.sensors[n].lipschitz()
    }
    fn domain(&self) -> Option<&BoxDomain> {
        self.domain.as_ref()
    }
}

/// Coordinate pairs of the ten-agent trigonometric benchmark (0-indexed).
pub const TRIG10_PAIRS: [(usize, usize); 10] =
    [(0, 1), (2, 1), (2, 3), (3, 4), (0, 4), (0, 2), (3, 1), (2, 4), (0, 3), (0, 4)];

/// Ten agents sensing `5 sin(theta_i + theta_j)` of a 5-dimensional
/// parameter restricted to `[-pi/4, pi/4]^5`.
pub fn trig_model(noise_variance: f64) -> Result<NonlinearModel> {
    let m = 5;
    let sensors: Vec<Box<dyn SensorMap>> = TRIG10_PAIRS
        .iter()
        .map(|&(i, j)| Box::new(TrigPairSensor { i, j, amplitude: 5.0, param_dim: m }) as Box<dyn SensorMap>)
        .collect();
    let noise = (0..sensors.len())
        .map(|_| GaussianNoise::isotropic(1, noise_variance))
        .collect::<Result<Vec<_>>>()?;
    let q = std::f64::consts::FRAC_PI_4;
    NonlinearModel::new(sensors, noise, m, Some(BoxDomain::uniform(m, -q, q)))
}

/// Ground truth for a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthConfig {
    pub hypothesis: Hypothesis,
    pub theta_star: DVector<f64>,
}

impl TruthConfig {
    pub fn h0(param_dim: usize) -> Self {
        Self { hypothesis: Hypothesis::H0, theta_star: DVector::zeros(param_dim) }
    }

    pub fn h1(theta_star: DVector<f64>) -> Self {
        Self { hypothesis: Hypothesis::H1, theta_star }
    }

    /// Builds a truth; under H0 the parameter is forced to zero.
    pub fn new(hypothesis: Hypothesis, theta_star: DVector<f64>) -> Self {
        match hypothesis {
            Hypothesis::H0 => Self::h0(theta_star.len()),
            Hypothesis::H1 => Self::h1(theta_star),
        }
    }

    /// Noise-free part of each agent's observation.
    pub fn signal(&self, model: &dyn ObservationModel) -> Result<Vec<DVector<f64>>> {
        if self.theta_star.len() != model.param_dim() {
            return Err(Error::InvalidInput(format!(
                "theta_star has length {}, model expects {}",
                self.theta_star.len(),
                model.param_dim()
            )));
        }
        Ok((0..model.n_agents())
            .map(|n| match self.hypothesis {
                Hypothesis::H0 => DVector::zeros(model.obs_dim(n)),
                Hypothesis::H1 => model.sense(n, &self.theta_star),
            })
            .collect())
    }
}

/// Draws per-agent noise vectors from one seeded stream.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    rng: ChaCha8Rng,
    chol: Vec<DMatrix<f64>>,
    silent: bool,
}

impl NoiseSampler {
    /// Sampler on stream `stream` of the generator seeded by `seed`; distinct
    /// streams are independent, so trial `i` can use stream `i`.
    pub fn new(model: &dyn ObservationModel, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, chol: (0..model.n_agents()).map(|n| model.noise(n).chol().clone()).collect(), silent: false }
    }

    /// Sampler that always returns zero noise.
    pub fn silent(model: &dyn ObservationModel) -> Self {
        let mut s = Self::new(model, 0, 0);
        s.silent = true;
        s
    }

    pub fn n_agents(&self) -> usize {
        self.chol.len()
    }

    pub fn sample(&mut self) -> Vec<DVector<f64>> {
        let silent = self.silent;
        let rng = &mut self.rng;
        self.chol
            .iter()
            .map(|l| {
                if silent {
                    DVector::zeros(l.nrows())
                } else {
                    let xi = DVector::from_fn(l.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
                    l * xi
                }
            })
            .collect()
    }
}

/// One tick of observations: `y_n = h_n(theta*) + noise` under H1, pure noise under H0.
pub fn sample_observation(
    model: &dyn ObservationModel,
    truth: &TruthConfig,
    sampler: &mut NoiseSampler,
) -> Result<Vec<DVector<f64>>> {
    if sampler.n_agents() != model.n_agents() {
        return Err(Error::InvalidInput("sampler and model disagree on agent count".into()));
    }
    let signal = truth.signal(model)?;
    Ok(add_noise(&signal, sampler))
}

/// Adds one noise draw to a precomputed signal.
pub fn add_noise(signal: &[DVector<f64>], sampler: &mut NoiseSampler) -> Vec<DVector<f64>> {
    sampler.sample().into_iter().zip(signal).map(|(g, s)| g + s).collect()
}

/// `G = sum_n H_n^T Sigma_n^{-1} H_n`.
pub fn gram_matrix(m: &LinearModel) -> DMatrix<f64> {
    let p = m.param_dim();
    let mut g = DMatrix::zeros(p, p);
    for n in 0..m.n_agents() {
        g += m.h(n).transpose() * m.noise(n).sigma_inv() * m.h(n);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservabilityDiagnostic {
    pub observable: bool,
    pub min_eigenvalue: f64,
}

pub fn check_global_observability(m: &LinearModel) -> ObservabilityDiagnostic {
    let min_eigenvalue = linalg::sym_min_eigenvalue(&gram_matrix(m));
    ObservabilityDiagnostic { observable: min_eigenvalue > 1e-9, min_eigenvalue }
}

/// `G_H = blockdiag(H_1^T, ..., H_N^T)`, shape `NM x sum M_n`.
pub fn stacked_gh(m: &LinearModel) -> DMatrix<f64> {
    let blocks: Vec<_> = (0..m.n_agents()).map(|n| m.h(n).transpose()).collect();
    linalg::block_diag(&blocks)
}

/// Block-diagonal `Sigma^{-1}`.
pub fn stacked_sigma_inv(m: &dyn ObservationModel) -> DMatrix<f64> {
    let blocks: Vec<_> = (0..m.n_agents()).map(|n| m.noise(n).sigma_inv().clone()).collect();
    linalg::block_diag(&blocks)
}

/// `K = G_H Sigma^{-1} G_H^T = blockdiag(H_n^T Sigma_n^{-1} H_n)`.
pub fn innovation_matrix(m: &LinearModel) -> DMatrix<f64> {
    let blocks: Vec<_> =
        (0..m.n_agents()).map(|n| m.h(n).transpose() * m.noise(n).sigma_inv() * m.h(n)).collect();
    linalg::block_diag(&blocks)
}

/// `L (x) I_M + K`.
pub fn contraction_matrix(spec: &Spectrum, m: &LinearModel) -> Result<DMatrix<f64>> {
    if spec.n() != m.n_agents() {
        return Err(Error::InvalidInput("graph and model disagree on agent count".into()));
    }
    let p = m.param_dim();
    Ok(spec.laplacian.kronecker(&DMatrix::identity(p, p)) + innovation_matrix(m))
}

/// `c_1 = lambda_min(L (x) I_M + K)`.
pub fn c1_linear(spec: &Spectrum, m: &LinearModel) -> Result<f64> {
    let c1 = linalg::sym_min_eigenvalue(&contraction_matrix(spec, m)?);
    if c1 <= 1e-12 {
        return Err(Error::ModelDegenerate(format!(
            "lambda_min(L(x)I + K) = {c1:e}; the model is not globally observable over this graph"
        )));
    }
    Ok(c1)
}

/// Result of the random monotonicity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityProbe {
    pub c1_hat: f64,
    pub probes: usize,
    /// Set when the probe found a nonpositive constant.
    pub violated: bool,
}

/// Empirical minimum of
/// `sum_n (x - x')^T grad h_n(x) Sigma_n^{-1} (h_n(x) - h_n(x')) / |x - x'|^2`
/// over random pairs in the model's domain (or `[-1, 1]^M` without one).
pub fn monotonicity_constant_nl(model: &dyn ObservationModel, probes: usize, seed: u64) -> Result<MonotonicityProbe> {
    if probes < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 probes, got {probes}")));
    }
    let fallback = BoxDomain::uniform(model.param_dim(), -1.0, 1.0);
    let dom = model.domain().unwrap_or(&fallback);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let mut used = 0;
    for _ in 0..probes {
        let x = dom.sample(&mut rng);
        let xp = dom.sample(&mut rng);
        let d = &x - &xp;
        let d2 = d.norm_squared();
        if d2 < 1e-20 {
            continue;
        }
        used += 1;
        let mut acc = 0.0;
        for n in 0..model.n_agents() {
            let diff = model.sense(n, &x) - model.sense(n, &xp);
            let v = model.gradient(n, &x) * (model.noise(n).sigma_inv() * diff);
            acc += d.dot(&v);
        }
        best = best.min(acc / d2);
    }
    if used == 0 {
        return Err(Error::InvalidInput("every probe pair was degenerate".into()));
    }
    Ok(MonotonicityProbe { c1_hat: best, probes: used, violated: best <= 0.0 })
}

/// Largest observed `|h_n(x) - h_n(x')| / |x - x'|` per agent.
pub fn lipschitz_probe(model: &dyn ObservationModel, pairs: usize, seed: u64) -> Vec<f64> {
    let fallback = BoxDomain::uniform(model.param_dim(), -1.0, 1.0);
    let dom = model.domain().unwrap_or(&fallback);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0_f64; model.n_agents()];
    for _ in 0..pairs {
        let x = dom.sample(&mut rng);
        let xp = dom.sample(&mut rng);
        let d = (&x - &xp).norm();
        if d < 1e-12 {
            continue;
        }
        for (n, o) in out.iter_mut().enumerate() {
            *o = o.max((model.sense(n, &x) - model.sense(n, &xp)).norm() / d);
        }
    }
    out
}

/// Covariance given either as one scalar (times identity) or per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Scalar(f64),
    Matrices(Vec<Vec<Vec<f64>>>),
}

/// JSON description of a linear model; matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModelConfig {
    #[serde(rename = "H")]
    pub h: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "Sigma")]
    pub sigma: SigmaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<Hypothesis>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::InvalidInput(format!("{what}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl LinearModelConfig {
    pub fn build(&self) -> Result<LinearModel> {
        let h = self
            .h
            .iter()
            .enumerate()
            .map(|(n, rows)| rows_to_matrix(rows, &format!("H[{n}]")))
            .collect::<Result<Vec<_>>>()?;
        let sigma = match &self.sigma {
            SigmaSpec::Scalar(v) => {
                if !(*v > 0.0) {
                    return Err(Error::InvalidInput(format!("Sigma scalar must be positive, got {v}")));
                }
                h.iter().map(|hn| DMatrix::identity(hn.nrows(), hn.nrows()) * *v).collect()
            }
            SigmaSpec::Matrices(ms) => ms
                .iter()
                .enumerate()
                .map(|(n, rows)| rows_to_matrix(rows, &format!("Sigma[{n}]")))
                .collect::<Result<Vec<_>>>()?,
        };
        LinearModel::new(h, sigma)
    }

    /// Truth described by the optional `theta_star`/`hypothesis` fields.
    pub fn truth(&self, model: &LinearModel) -> Result<TruthConfig> {
        let hyp = self.hypothesis.unwrap_or(Hypothesis::H1);
        match (&self.theta_star, hyp) {
            (_, Hypothesis::H0) => Ok(TruthConfig::h0(model.param_dim())),
            (Some(t), Hypothesis::H1) => Ok(TruthConfig::h1(DVector::from_vec(t.clone()))),
            (None, Hypothesis::H1) => Err(Error::InvalidInput("theta_star is required under H1".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_complete, build_ring, spectrum};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ring_rows() -> Vec<[f64; 5]> {
        vec![
            [1., 1., 0., 0., 0.],
            [0., 1., 1., 0., 0.],
            [0., 0., 1., 1., 0.],
            [0., 0., 0., 1., 1.],
            [1., 0., 0., 0., 1.],
            [1., 0., 1., 0., 0.],
            [0., 1., 0., 1., 0.],
            [0., 0., 1., 0., 1.],
            [1., 0., 0., 1., 0.],
            [0., 1., 0., 0., 1.],
        ]
    }

    fn ring_model() -> LinearModel {
        let h = ring_rows().iter().map(|r| DMatrix::from_row_slice(1, 5, r)).collect();
        LinearModel::new(h, vec![DMatrix::from_element(1, 1, 3.0); 10]).unwrap()
    }

    #[test]
    fn gram_single_identity() {
        let m = LinearModel::new(vec![DMatrix::identity(3, 3)], vec![DMatrix::identity(3, 3)]).unwrap();
        assert_eq!(gram_matrix(&m), DMatrix::identity(3, 3));
    }

    #[test]
    fn gram_ring_model() {
        let m = ring_model();
        let mut expected = DMatrix::zeros(5, 5);
        for r in ring_rows() {
            let h = DMatrix::from_row_slice(1, 5, &r);
            expected += h.transpose() * h / 3.0;
        }
        assert!((gram_matrix(&m) - expected).abs().max() < 1e-14);
        assert!(check_global_observability(&m).observable);
    }

    #[test]
    fn gram_zero() {
        let m = LinearModel::new(vec![DMatrix::zeros(1, 2)], vec![DMatrix::identity(1, 1)]).unwrap();
        assert_eq!(gram_matrix(&m), DMatrix::zeros(2, 2));
        assert!(!check_global_observability(&m).observable);
    }

    #[test]
    fn rank_deficient_single_agent() {
        let m = LinearModel::new(vec![DMatrix::from_row_slice(1, 2, &[1.0, 0.0])], vec![DMatrix::identity(1, 1)])
            .unwrap();
        assert!(!check_global_observability(&m).observable);
    }

    #[test]
    fn scalar_model_observable_iff_informative_agent() {
        assert!(check_global_observability(&LinearModel::scalar(4, 1, 1.0, 1.0).unwrap()).observable);
        assert!(!check_global_observability(&LinearModel::scalar(4, 0, 1.0, 1.0).unwrap()).observable);
    }

    #[test]
    fn c1_examples() {
        let m = LinearModel::new(vec![DMatrix::from_element(1, 1, 2.0)], vec![DMatrix::identity(1, 1)]).unwrap();
        let g = crate::network::Graph::new(1, []).unwrap();
        assert_abs_diff_eq!(c1_linear(&spectrum(&g), &m).unwrap(), 4.0, epsilon = 1e-12);

        let m = LinearModel::scalar(2, 1, 1.0, 1.0).unwrap();
        let s = spectrum(&build_complete(2).unwrap());
        // L + K = [[2, -1], [-1, 1]]
        assert_abs_diff_eq!(c1_linear(&s, &m).unwrap(), (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn c1_ring_model_matches_inverse_power_iteration() {
        let m = ring_model();
        let s = spectrum(&build_ring(10).unwrap());
        let c1 = c1_linear(&s, &m).unwrap();
        assert!(c1 > 0.0);
        let inv = contraction_matrix(&s, &m).unwrap().try_inverse().unwrap();
        let mut v = DVector::from_fn(50, |i, _| 1.0 + (i as f64 * 0.37).sin());
        let mut est = 0.0;
        for _ in 0..5000 {
            let w = &inv * &v;
            est = w.norm() / v.norm();
            v = w.normalize();
        }
        assert_abs_diff_eq!(1.0 / est, c1, epsilon = 1e-8);
        let g = gram_matrix(&m);
        assert!(c1 <= crate::linalg::sym_min_eigenvalue(&g) + s.lambda_max());
    }

    #[test]
    fn c1_degenerate() {
        let m = LinearModel::scalar(3, 0, 1.0, 1.0).unwrap();
        let s = spectrum(&build_ring(3).unwrap());
        assert!(matches!(c1_linear(&s, &m), Err(Error::ModelDegenerate(_))));
    }

    #[test]
    fn silent_sampler_gives_signal() {
        let m = trig_model(2.0).unwrap();
        let theta = DVector::from_vec(vec![PI / 6., -PI / 4., PI / 4., -PI / 5., PI / 6.]);
        let truth = TruthConfig::h1(theta.clone());
        let y = sample_observation(&m, &truth, &mut NoiseSampler::silent(&m)).unwrap();
        assert_abs_diff_eq!(y[0][0], 5.0 * (-PI / 12.0).sin(), epsilon = 1e-14);
        for (n, yn) in y.iter().enumerate() {
            assert_eq!(yn, &m.sense(n, &theta));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = ring_model();
        let truth = TruthConfig::h1(DVector::zeros(3));
        assert!(sample_observation(&m, &truth, &mut NoiseSampler::new(&m, 1, 0)).is_err());
    }

    #[test]
    fn h0_mean_is_zero() {
        let m = LinearModel::new(
            vec![DMatrix::identity(2, 2)],
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])],
        )
        .unwrap();
        let truth = TruthConfig::h0(2);
        let mut s = NoiseSampler::new(&m, 9, 0);
        let draws = 100_000;
        let mut sum = DVector::zeros(2);
        for _ in 0..draws {
            sum += &sample_observation(&m, &truth, &mut s).unwrap()[0];
        }
        let mean = sum / draws as f64;
        assert!(mean[0].abs() < 4.0 * 2f64.sqrt() / (draws as f64).sqrt());
        assert!(mean[1].abs() < 4.0 / (draws as f64).sqrt());
    }

    #[test]
    fn h1_covariance_matches() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = LinearModel::new(vec![DMatrix::identity(2, 2)], vec![sigma.clone()]).unwrap();
        let truth = TruthConfig::h1(DVector::from_vec(vec![1.0, -2.0]));
        let mut s = NoiseSampler::new(&m, 10, 3);
        let draws = 100_000;
        let ys: Vec<_> = (0..draws).map(|_| sample_observation(&m, &truth, &mut s).unwrap()[0].clone()).collect();
        let mean = ys.iter().fold(DVector::zeros(2), |a, y| a + y) / draws as f64;
        let cov = ys.iter().fold(DMatrix::zeros(2, 2), |a, y| a + (y - &mean) * (y - &mean).transpose())
            / (draws - 1) as f64;
        // sd of a sample covariance entry is about sqrt(2/draws) * variance scale
        assert!((cov - sigma).abs().max() < 0.05);
        assert!((mean - &truth.theta_star).abs().max() < 0.02);
    }

    #[test]
    fn sampler_determinism_and_stream_independence() {
        let m = ring_model();
        let mut a = NoiseSampler::new(&m, 42, 5);
        let mut b = NoiseSampler::new(&m, 42, 5);
        let mut c = NoiseSampler::new(&m, 42, 6);
        let (ya, yb, yc) = (a.sample(), b.sample(), c.sample());
        assert_eq!(ya, yb);
        assert_ne!(ya, yc);
    }

    #[test]
    fn trig_basics() {
        let m = trig_model(2.0).unwrap();
        assert_eq!(m.n_agents(), 10);
        let z = DVector::zeros(5);
        assert_eq!(m.sense(0, &z)[0], 0.0);
        let g = m.gradient(0, &z);
        assert_eq!(g[(0, 0)], 5.0);
        assert_eq!(g[(1, 0)], 5.0);
        assert_eq!(g.column(0).iter().filter(|v| **v != 0.0).count(), 2);
        for n in 0..10 {
            assert_abs_diff_eq!(m.lipschitz(n), 5.0 * 2f64.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn trig_lipschitz_probe() {
        let m = trig_model(2.0).unwrap();
        for k in lipschitz_probe(&m, 10_000, 4) {
            assert!(k <= 5.0 * 2f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn trig_gradient_matches_finite_differences() {
        let m = trig_model(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let dom = m.domain().unwrap().clone();
        let h = 1e-5;
        for _ in 0..100 {
            let x = dom.sample(&mut rng);
            for n in 0..10 {
                let g = m.gradient(n, &x);
                for i in 0..5 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (m.sense(n, &xp)[0] - m.sense(n, &xm)[0]) / (2.0 * h);
                    assert!((fd - g[(i, 0)]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn trig_monotonicity_positive() {
        let m = trig_model(2.0).unwrap();
        let p = monotonicity_constant_nl(&m, 5_000, 1).unwrap();
        assert!(p.c1_hat > 0.0 && !p.violated);
    }

    #[test]
    fn linear_monotonicity_dominates_gram() {
        let m = ring_model();
        let p = monotonicity_constant_nl(&m, 2_000, 3).unwrap();
        assert!(p.c1_hat >= crate::linalg::sym_min_eigenvalue(&gram_matrix(&m)) - 1e-9);
    }

    #[test]
    fn monotonicity_rejects_bad_probes() {
        let m = trig_model(2.0).unwrap();
        assert!(monotonicity_constant_nl(&m, 10, 1).is_err());
        let mut flat = trig_model(2.0).unwrap();
        flat.set_domain(Some(BoxDomain::uniform(5, 0.1, 0.1)));
        assert!(matches!(monotonicity_constant_nl(&flat, 200, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn config_scalar_sigma_shorthand() {
        let text = r#"{"H": [[[1, 0]], [[0, 1]]], "Sigma": 2.0, "theta_star": [1, 2]}"#;
        let cfg: LinearModelConfig = serde_json::from_str(text).unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(m.noise(1).sigma()[(0, 0)], 2.0);
        assert_eq!(cfg.truth(&m).unwrap().theta_star[1], 2.0);
        let bad = r#"{"H": [[[1, 0]]], "Sigma": 2.0, "extra": 1}"#;
        assert!(serde_json::from_str::<LinearModelConfig>(bad).is_err());
        let full = r#"{"H": [[[1, 0]]], "Sigma": [[[4.0]]], "hypothesis": "H0"}"#;
        let cfg: LinearModelConfig = serde_json::from_str(full).unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(cfg.truth(&m).unwrap().hypothesis, Hypothesis::H0);
    }

    #[test]
    fn non_pd_covariance_rejected() {
        let r = LinearModel::new(vec![DMatrix::identity(2, 2)], vec![DMatrix::from_row_slice(2, 2, &[1., 2., 2., 1.])]);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn gram_is_symmetric_psd(entries in proptest::collection::vec(-3.0f64..3.0, 12), var in 0.1f64..5.0) {
            let h = vec![
                DMatrix::from_row_slice(2, 3, &entries[0..6]),
                DMatrix::from_row_slice(2, 3, &entries[6..12]),
            ];
            let m = LinearModel::new(h, vec![DMatrix::identity(2, 2) * var; 2]).unwrap();
            let g = gram_matrix(&m);
            prop_assert!((&g - g.transpose()).abs().max() < 1e-12);
            prop_assert!(crate::linalg::sym_min_eigenvalue(&g) >= -1e-10);
        }
    }
}
