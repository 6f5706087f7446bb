//! Closed-form threshold ranges and large-deviations exponents.
//!
//! All exponents are reported as nonnegative decay rates per tick: a rate
//! `X` means the error probability behaves like `exp(-X t)` or better. When
//! a bound is vacuous the rate is reported as 0 and a flag says why.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ciglrt_l::LSchedule;
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::Spectrum;
use crate::sensing::{c1_linear, gram_matrix, innovation_matrix, LinearModel, ObservationModel};

/// How an exponent's time axis is counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Normalization {
    /// `(1/t) log P` with `t` counting ticks.
    PerTick,
    /// `(1/t) log P` with `t` counting refresh periods of `k` ticks.
    PerRefresh { k: usize },
}

/// Converts a rate to the per-tick scale.
pub fn per_tick_rate(rate: f64, norm: Normalization) -> f64 {
    match norm {
        Normalization::PerTick => rate,
        Normalization::PerRefresh { k } => rate / k as f64,
    }
}

/// Threshold range and false-alarm exponent of the nonlinear detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlBounds {
    pub eta: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub lambda_star: f64,
    /// `LE(lambda*)` with `lambda*` clipped to `[0, 1]`; 0 below the floor.
    #[serde(rename = "LE")]
    pub fa_exponent: f64,
    pub feasible: bool,
    pub threshold_in_range: bool,
    pub inconclusive_signal: bool,
}

/// `LE(lambda) = eta lambda / c + (sum M_n / 2) log(1 - lambda b / c)` with
/// `c = 1/N + sqrt(N)` and `b = 1/N + sqrt(N) r`.
pub fn nl_le(lambda: f64, n: usize, sum_m: f64, r: f64, eta: f64) -> f64 {
    let nf = n as f64;
    let c = 1.0 / nf + nf.sqrt();
    let b = 1.0 / nf + nf.sqrt() * r;
    eta * lambda / c + 0.5 * sum_m * (1.0 - lambda * b / c).ln()
}

pub fn nl_lambda_star(n: usize, sum_m: f64, r: f64, eta: f64) -> f64 {
    let nf = n as f64;
    let c = 1.0 / nf + nf.sqrt();
    let b = 1.0 / nf + nf.sqrt() * r;
    c / b - c * sum_m / (2.0 * eta)
}

pub fn nl_bounds(
    n: usize,
    m_sizes: &[usize],
    r: f64,
    model: &dyn ObservationModel,
    theta_star: &DVector<f64>,
    eta: f64,
) -> Result<NlBounds> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!("r must lie in [0,1), got {r}")));
    }
    if n != model.n_agents() || m_sizes.len() != n {
        return Err(Error::InvalidInput("agent count mismatch".into()));
    }
    if theta_star.len() != model.param_dim() {
        return Err(Error::InvalidInput("theta_star dimension mismatch".into()));
    }
    let nf = n as f64;
    let sum_m: f64 = m_sizes.iter().sum::<usize>() as f64;
    let mut quad = 0.0;
    let mut norm2 = 0.0;
    let mut lam_max_inv = 0.0_f64;
    for i in 0..n {
        let h = model.sense(i, theta_star);
        quad += h.dot(&(model.noise(i).sigma_inv() * &h));
        norm2 += h.norm_squared();
        lam_max_inv = lam_max_inv.max(linalg::sym_max_eigenvalue(model.noise(i).sigma_inv()));
    }
    let eta_lo = (1.0 / nf + nf.sqrt() * r) * sum_m / 2.0;
    let eta_hi = quad / (2.0 * nf);
    let lambda_star = nl_lambda_star(n, sum_m, r, eta);
    let fa_exponent = nl_le(lambda_star.clamp(0.0, 1.0), n, sum_m, r, eta);
    Ok(NlBounds {
        eta,
        eta_lo,
        eta_hi,
        lambda_star,
        fa_exponent,
        feasible: eta_hi > eta_lo,
        threshold_in_range: eta_lo < eta && eta < eta_hi,
        inconclusive_signal: norm2 < (1.0 + nf * nf.sqrt() * r) * sum_m / lam_max_inv,
    })
}

/// Burn-in times of the linear recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurnIn {
    /// First `t` with `beta_t lambda_N + alpha_t lambda_max(K) < 1`.
    pub t2: usize,
    /// First `t` with `c1 alpha_t < 1`.
    pub t3: usize,
    /// First `t` from which `beta_t >= alpha_t`; `None` if never.
    pub t4: Option<usize>,
    pub t1: usize,
}

/// Least `t` such that `pred` holds, for a predicate that stays true once true.
fn first_true(pred: impl Fn(usize) -> bool) -> Option<usize> {
    if pred(0) {
        return Some(0);
    }
    let mut hi = 1usize;
    while !pred(hi) {
        if hi > usize::MAX / 4 {
            return None;
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// `t1 = max(t2, t3, t4)`. With the default `b = a` the `t4` term is 0.
pub fn l_burnin_times(spec: &Spectrum, model: &LinearModel, schedule: &LSchedule) -> Result<BurnIn> {
    let c1 = c1_linear(spec, model)?;
    let k_max = linalg::sym_max_eigenvalue(&innovation_matrix(model));
    let ln = spec.lambda_max();
    let t2 = first_true(|t| schedule.beta(t) * ln + schedule.alpha(t) * k_max < 1.0)
        .ok_or_else(|| Error::Resource("t2 search overflowed".into()))?;
    let t3 = first_true(|t| c1 * schedule.alpha(t) < 1.0)
        .ok_or_else(|| Error::Resource("t3 search overflowed".into()))?;
    let t4 = if schedule.delta2 >= 1.0 {
        (schedule.b() >= schedule.a).then_some(0)
    } else {
        first_true(|t| schedule.beta(t) >= schedule.alpha(t))
    };
    Ok(BurnIn { t2, t3, t4, t1: t2.max(t3).max(t4.unwrap_or(0)) })
}

/// `A(u) = I - beta_u (L (x) I) - alpha_u K`.
pub fn transition_matrix(lk: &DMatrix<f64>, k: &DMatrix<f64>, schedule: &LSchedule, u: usize) -> DMatrix<f64> {
    let nm = lk.nrows();
    DMatrix::identity(nm, nm) - lk * schedule.beta(u) - k * schedule.alpha(u)
}

fn kron_laplacian(spec: &Spectrum, m: usize) -> DMatrix<f64> {
    spec.laplacian.kronecker(&DMatrix::identity(m, m))
}

/// `||A(t)||_2`.
pub fn contraction_norm(spec: &Spectrum, model: &LinearModel, schedule: &LSchedule, t: usize) -> f64 {
    let lk = kron_laplacian(spec, model.param_dim());
    linalg::sym_norm(&transition_matrix(&lk, &innovation_matrix(model), schedule, t))
}

/// `ln c3` where `c3 = sum_{v < t1} alpha_v^2 prod_{u=v+1}^{t1-1} ||A(u)||`.
pub fn log_c3(spec: &Spectrum, model: &LinearModel, schedule: &LSchedule, t1: usize) -> f64 {
    if t1 == 0 {
        return f64::NEG_INFINITY;
    }
    let lk = kron_laplacian(spec, model.param_dim());
    let k = innovation_matrix(model);
    let mut suffix = 0.0;
    let mut terms = Vec::with_capacity(t1);
    for v in (0..t1).rev() {
        terms.push(2.0 * schedule.alpha(v).ln() + suffix);
        suffix += linalg::sym_norm(&transition_matrix(&lk, &k, schedule, v)).ln();
    }
    log_sum_exp(&terms)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Nonnegative false-alarm rate `(S/2)(u - 1 - ln u)` with `u = 2 eta / (b S)`,
/// the minimum over `lambda in [0,1)` of `-lambda eta / b - (S/2) ln(1 - lambda)`.
/// Zero for `u <= 1`.
pub fn fa_rate(eta: f64, b: f64, s: f64) -> f64 {
    let u = 2.0 * eta / (b * s);
    if !(u > 1.0) {
        return 0.0;
    }
    0.5 * s * (u - 1.0 - u.ln())
}

/// Threshold range and exponents of the linear detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LBounds {
    pub eta: f64,
    pub r: f64,
    pub k: usize,
    pub t2: usize,
    pub t3: usize,
    pub t4: Option<usize>,
    pub t1: usize,
    pub c1: f64,
    pub c3: f64,
    pub log_c3: f64,
    pub c4: f64,
    pub c4_star: f64,
    pub eta2: f64,
    pub norm_k: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
    /// False-alarm rate.
    #[serde(rename = "LD0")]
    pub ld0: f64,
    /// Miss rate `min(gaussian_rate, LD(min{c4, c4*}))`.
    #[serde(rename = "LD1")]
    pub ld1: f64,
    pub gaussian_rate: f64,
    pub ld_rate: f64,
    pub feasible: bool,
    pub threshold_in_range: bool,
    pub inconclusive_signal: bool,
    pub miss_bound_undefined: bool,
    pub gain_condition_met: bool,
    pub normalization: Normalization,
}

/// Inputs to [`l_bounds`]. `r` is passed separately so a quoted value can be
/// evaluated next to the computed one.
pub struct LBoundsInput<'a> {
    pub spec: &'a Spectrum,
    pub model: &'a LinearModel,
    pub schedule: &'a LSchedule,
    pub theta_star: &'a DVector<f64>,
    pub r: f64,
    pub k: usize,
    pub eta: f64,
}

/// Schedule- and model-dependent constants shared by every `(eta, r, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LConstants {
    pub burn: BurnIn,
    pub c1: f64,
    pub log_c3: f64,
    pub norm_k: f64,
    /// `2 c1 a`.
    pub e: f64,
    pub a0: f64,
}

pub fn l_constants(spec: &Spectrum, model: &LinearModel, schedule: &LSchedule) -> Result<LConstants> {
    let burn = l_burnin_times(spec, model, schedule)?;
    let c1 = c1_linear(spec, model)?;
    Ok(LConstants {
        burn,
        c1,
        log_c3: log_c3(spec, model, schedule, burn.t1),
        norm_k: linalg::sym_max_eigenvalue(&innovation_matrix(model)),
        e: 2.0 * c1 * schedule.a,
        a0: schedule.a,
    })
}

impl LConstants {
    /// `c4` for refresh period `k`; 0 when `2 c1 a <= 1`.
    pub fn c4(&self, k: usize, norm_k: f64) -> f64 {
        let (a0, e) = (self.a0, self.e);
        let t1f = self.burn.t1.max(1) as f64;
        let kf = k as f64;
        let transient = (self.log_c3 + e * (self.burn.t1 as f64 + 1.0).ln() - kf.ln() - (e - 1.0) * t1f.ln()).exp();
        let denom = norm_k * (transient + a0 * a0 / (kf * t1f) + a0 * a0 / (e - 1.0));
        if e > 1.0 && denom.is_finite() {
            1.0 / denom
        } else {
            0.0
        }
    }
}

pub fn l_bounds(inp: &LBoundsInput<'_>) -> Result<LBounds> {
    let consts = l_constants(inp.spec, inp.model, inp.schedule)?;
    l_bounds_with(&consts, inp)
}

/// [`l_bounds`] with precomputed constants, for sweeps over `eta`, `r` or `k`.
pub fn l_bounds_with(cm: &LConstants, inp: &LBoundsInput<'_>) -> Result<LBounds> {
    let model = inp.model;
    if inp.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&inp.r) {
        return Err(Error::InvalidParameter(format!("r must lie in [0,1), got {}", inp.r)));
    }
    if inp.theta_star.len() != model.param_dim() {
        return Err(Error::InvalidInput("theta_star dimension mismatch".into()));
    }
    let n = model.n_agents() as f64;
    let m = model.param_dim() as f64;
    let sum_m = model.total_obs_dim() as f64;
    let norm_k = cm.norm_k;
    let gram = gram_matrix(model);
    let tgt = inp.theta_star.dot(&(&gram * inp.theta_star));
    let lam_min_g = linalg::sym_min_eigenvalue(&gram);
    let c4 = cm.c4(inp.k, norm_k);
    let a0 = cm.a0;
    let e = cm.e;

    let rk = inp.r.powi(inp.k as i32 - 1);
    let q = n * n.sqrt() * rk;
    let b = 1.0 / n + n.sqrt() * rk;
    let eta = inp.eta;

    let eta2 = (-2.0 * n * eta + tgt * (1.0 - q)) / (4.0 * norm_k * (1.0 + q));
    let c4_star = (e - 1.0) / (a0 * a0 * norm_k) - n * m / (2.0 * eta2);
    let eta_lo = b * sum_m / 2.0;
    let eta_hi = tgt * (1.0 - q) / (2.0 * n) - m * a0 * a0 * norm_k * norm_k * (1.0 + q) / (e - 1.0);
    let inconclusive_signal = if q >= 1.0 || lam_min_g <= 0.0 {
        true
    } else {
        let bound = (1.0 + q) * sum_m / (lam_min_g * (1.0 - q))
            + 2.0 * m * n * a0 * a0 * norm_k * norm_k * (1.0 + q) / (lam_min_g * (e - 1.0) * (1.0 - q));
        inp.theta_star.norm_squared() < bound
    };

    let ld0 = fa_rate(eta, b, sum_m);

    let inner = -eta / 4.0 + tgt * (1.0 / n - n.sqrt() * rk) / 8.0;
    let gaussian_rate = if inner > 0.0 { inner * inner / (2.0 * tgt * b * b) } else { 0.0 };
    let lam = c4.min(c4_star);
    let ld_val = if eta2 > 0.0 && c4_star > 0.0 && lam > 0.0 && e > 1.0 {
        lam * eta2 + 0.5 * n * m * (1.0 - lam * a0 * a0 * norm_k / (e - 1.0)).ln()
    } else {
        f64::NAN
    };
    let miss_bound_undefined = !(ld_val > 0.0) || !(gaussian_rate > 0.0);
    let ld_rate = if ld_val > 0.0 { ld_val } else { 0.0 };
    let ld1 = if miss_bound_undefined { 0.0 } else { gaussian_rate.min(ld_rate) };

    Ok(LBounds {
        eta,
        r: inp.r,
        k: inp.k,
        t2: cm.burn.t2,
        t3: cm.burn.t3,
        t4: cm.burn.t4,
        t1: cm.burn.t1,
        c1: cm.c1,
        c3: cm.log_c3.exp(),
        log_c3: cm.log_c3,
        c4,
        c4_star,
        eta2,
        norm_k,
        eta_lo,
        eta_hi,
        ld0,
        ld1,
        gaussian_rate,
        ld_rate,
        feasible: eta_hi > eta_lo,
        threshold_in_range: eta_lo < eta && eta < eta_hi,
        inconclusive_signal,
        miss_bound_undefined,
        gain_condition_met: inp.schedule.a >= LSchedule::min_gain(cm.c1),
        normalization: Normalization::PerTick,
    })
}

/// Scalar model: `N1` of `N` agents observe `h theta + noise(sigma2)`.
pub struct ScalarBoundsInput<'a> {
    pub n: usize,
    pub n1: usize,
    pub h: f64,
    pub sigma2: f64,
    pub spec: &'a Spectrum,
    pub schedule: &'a LSchedule,
    pub r: f64,
    pub k: usize,
    pub eta: f64,
    pub theta_star: f64,
    /// Fusion-center gain `kappa_0 = g`.
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarBounds {
    pub eta: f64,
    pub t1: usize,
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    pub c4_star: f64,
    pub eta2: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub theta_feasible: bool,
    #[serde(rename = "LD0")]
    pub ld0: f64,
    #[serde(rename = "LD1")]
    pub ld1: f64,
    pub miss_bound_undefined: bool,
    pub central_theta_feasible: bool,
    pub central_eta_lo: f64,
    pub central_eta_hi: f64,
    #[serde(rename = "LD0_c")]
    pub ld0_c: f64,
    #[serde(rename = "LD1_c")]
    pub ld1_c: f64,
    pub d1_star: f64,
    pub eta_c: f64,
    pub central_miss_bound_undefined: bool,
}

pub fn scalar_bounds(inp: &ScalarBoundsInput<'_>) -> Result<ScalarBounds> {
    if inp.n1 == 0 || inp.h == 0.0 {
        return Err(Error::ModelDegenerate("the scalar model needs N1 >= 1 and h != 0".into()));
    }
    if inp.n1 > inp.n || inp.spec.n() != inp.n {
        return Err(Error::InvalidInput("agent counts disagree".into()));
    }
    if inp.k == 0 || !(0.0..1.0).contains(&inp.r) || !(inp.sigma2 > 0.0) {
        return Err(Error::InvalidParameter("need k >= 1, r in [0,1), sigma2 > 0".into()));
    }
    let model = LinearModel::scalar(inp.n, inp.n1, inp.h, inp.sigma2)?;
    let (n, n1, h2, s2, th2) =
        (inp.n as f64, inp.n1 as f64, inp.h * inp.h, inp.sigma2, inp.theta_star * inp.theta_star);
    let cm = l_constants(inp.spec, &model, inp.schedule)?;
    let c4 = cm.c4(inp.k, h2 / s2);
    let (a0, e, eta) = (inp.schedule.a, cm.e, inp.eta);
    let rk = inp.r.powi(inp.k as i32 - 1);
    let q = n * n.sqrt() * rk;
    let b = 1.0 / n + n.sqrt() * rk;

    let theta_feasible = q < 1.0
        && th2 >= (1.0 + q) / (1.0 - q) * (n * s2 / (n1 * h2) + 2.0 * n * a0 * a0 * h2 / (n1 * s2 * (e - 1.0)));
    let eta_lo = b * n1 / 2.0;
    let eta_hi = n1 * h2 * th2 * (1.0 - q) / (2.0 * n * s2) - a0 * a0 * h2 * h2 * (1.0 + q) / (s2 * s2 * (e - 1.0));
    let eta2 = (-2.0 * n * s2 * eta + n1 * h2 * th2 * (1.0 - q)) / (4.0 * h2 * (1.0 + q));
    let c4_star = s2 * (e - 1.0) / (a0 * a0 * h2) - n / (2.0 * eta2);
    let ld0 = fa_rate(eta, b, n1);
    let inner = -eta / 4.0 + n1 * h2 * th2 * (1.0 / n - n.sqrt() * rk) / (8.0 * s2);
    let gauss = if inner > 0.0 { inner * inner / (2.0 * n1 * h2 * th2 * b * b / s2) } else { 0.0 };
    let lam = c4.min(c4_star);
    let ld_val = if eta2 > 0.0 && c4_star > 0.0 && lam > 0.0 && e > 1.0 {
        lam * eta2 + 0.5 * n * (1.0 - lam * a0 * a0 * h2 / (s2 * (e - 1.0))).ln()
    } else {
        f64::NAN
    };
    let miss_bound_undefined = !(ld_val > 0.0) || !(gauss > 0.0);
    let ld1 = if miss_bound_undefined { 0.0 } else { gauss.min(ld_val) };

    let g = inp.g;
    let gden = 2.0 * h2 * g - s2;
    let central_theta_feasible = gden > 0.0 && th2 >= 2.0 * n1 * h2 * g * g / gden + n1 * s2 / h2;
    let central_eta_lo = 0.5;
    let central_eta_hi = h2 * th2 / (2.0 * n1 * s2) - 2.0 * g * g * h2 * h2 / (n1 * s2 * (h2 * g - s2));
    let ld0_c = fa_rate(eta, 1.0 / n1, n1);
    let eta_c = (n1 * s2 / h2) * (-eta / 2.0 + h2 * th2 / (4.0 * n1 * s2));
    let d1_star = (2.0 * h2 * n1 * g - n1 * s2) / (g * g * h2) - n1 / (2.0 * eta_c);
    let ldc = d1_star * eta_c + n1 * (1.0 - d1_star * g * g * h2 / gden).ln();
    let inner_c = -eta / 4.0 + h2 * th2 / (8.0 * s2);
    let gauss_c = if inner_c > 0.0 { s2 * inner_c * inner_c / (2.0 * h2 * th2) } else { 0.0 };
    let central_miss_bound_undefined = !(eta_c > 0.0 && d1_star > 0.0 && ldc > 0.0) || !(gauss_c > 0.0);
    let ld1_c = if central_miss_bound_undefined { 0.0 } else { gauss_c.min(ldc) };

    Ok(ScalarBounds {
        eta,
        t1: cm.burn.t1,
        c1: cm.c1,
        c3: cm.log_c3.exp(),
        c4,
        c4_star,
        eta2,
        eta_lo,
        eta_hi,
        theta_feasible,
        ld0,
        ld1,
        miss_bound_undefined,
        central_theta_feasible,
        central_eta_lo,
        central_eta_hi,
        ld0_c,
        ld1_c,
        d1_star,
        eta_c,
        central_miss_bound_undefined,
    })
}

/// Largest `t * N * M` accepted by [`pt_diagnostic`].
pub const PT_SIZE_CAP: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PtDiagnostic {
    pub t: usize,
    pub t1: usize,
    pub pt_norm_times_t: f64,
    /// `t || sum_i alpha_i^2 Phi_i^T Phi_i ||`, the same norm computed on the small side.
    pub gram_norm_times_t: f64,
    pub min_eigenvalue: f64,
    pub bound: f64,
}

/// Assembles `P_t` with blocks `alpha_i alpha_j Phi_i Phi_j^T`,
/// `Phi_i = A(t-1) ... A(i+1)`, and compares `t ||P_t||` with
/// `c3 (t1+1)^{2 c1 a} / t^{2 c1 a - 1} + a^2 / t + a^2 / (2 c1 a - 1)`.
pub fn pt_diagnostic(spec: &Spectrum, model: &LinearModel, schedule: &LSchedule, t: usize) -> Result<PtDiagnostic> {
    let nm = model.n_agents() * model.param_dim();
    if t == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if t * nm > PT_SIZE_CAP {
        return Err(Error::Resource(format!("P_t would be {0}x{0}; cap is {PT_SIZE_CAP}", t * nm)));
    }
    let lk = kron_laplacian(spec, model.param_dim());
    let k = innovation_matrix(model);
    let mut phi = vec![DMatrix::identity(nm, nm); t];
    for i in (0..t.saturating_sub(1)).rev() {
        phi[i] = &phi[i + 1] * transition_matrix(&lk, &k, schedule, i + 1);
    }
    let mut p = DMatrix::zeros(nm * t, nm * t);
    for i in 0..t {
        for j in 0..=i {
            let block: DMatrix<f64> = &phi[i] * phi[j].transpose() * (schedule.alpha(i) * schedule.alpha(j));
            p.view_mut((i * nm, j * nm), (nm, nm)).copy_from(&block);
            if i != j {
                p.view_mut((j * nm, i * nm), (nm, nm)).copy_from(&block.transpose());
            }
        }
    }
    let ev = linalg::sym_eigenvalues(&p);
    let gram = (0..t).fold(DMatrix::zeros(nm, nm), |acc, i| {
        acc + phi[i].transpose() * &phi[i] * schedule.alpha(i).powi(2)
    });
    let cm = l_constants(spec, model, schedule)?;
    let (burn, lc3, a0, e) = (cm.burn, cm.log_c3, cm.a0, cm.e);
    let tf = t as f64;
    let bound = (lc3 + e * (burn.t1 as f64 + 1.0).ln() - (e - 1.0) * tf.ln()).exp() + a0 * a0 / tf + a0 * a0 / (e - 1.0);
    Ok(PtDiagnostic {
        t,
        t1: burn.t1,
        pt_norm_times_t: tf * ev.last().copied().unwrap_or(0.0),
        gram_norm_times_t: tf * linalg::sym_max_eigenvalue(&gram),
        min_eigenvalue: ev.first().copied().unwrap_or(0.0),
        bound: if e > 1.0 { bound } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_complete, build_path, build_ring, make_weights, spectrum, Graph};
    use crate::presets;
    use crate::sensing::trig_model;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid_min(f: impl Fn(f64) -> f64) -> f64 {
        (1..200_000).map(|i| f(i as f64 / 200_000.0)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn le_at_zero() {
        assert_eq!(nl_le(0.0, 10, 10.0, 0.39, 7.0), 0.0);
    }

    #[test]
    fn lambda_star_single_agent_complete() {
        // c = 2, b = 1 -> lambda* = 2 - 2 * 1 / 2 = 1
        let ls = nl_lambda_star(1, 1.0, 0.0, 1.0);
        assert_abs_diff_eq!(ls, 1.0, epsilon = 1e-15);
        let (arg, _) = (1..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|l| (l, nl_le(l, 1, 1.0, 0.0, 1.0)))
            .fold((0.0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
        assert_abs_diff_eq!(arg, ls, epsilon = 1e-4);
    }

    #[test]
    fn lambda_star_is_argmax_interior() {
        let (n, s, r, eta) = (4, 4.0, 0.2, 1.5);
        let ls = nl_lambda_star(n, s, r, eta);
        assert!(ls > 0.0 && ls < 1.0);
        let best = (1..100_000).map(|i| i as f64 / 100_000.0).fold(f64::NEG_INFINITY, |a, l| a.max(nl_le(l, n, s, r, eta)));
        assert_abs_diff_eq!(nl_le(ls, n, s, r, eta), best, epsilon = 1e-8);
    }

    #[test]
    fn le_is_concave() {
        let h = 1e-3;
        for i in 1..999 {
            let l = i as f64 * 1e-3;
            let d2 = nl_le(l + h, 10, 10.0, 0.4, 7.0) - 2.0 * nl_le(l, 10, 10.0, 0.4, 7.0) + nl_le(l - h, 10, 10.0, 0.4, 7.0);
            assert!(d2 <= 1e-12);
        }
    }

    #[test]
    fn nl_bounds_trig_benchmark() {
        let m = trig_model(2.0).unwrap();
        let th = presets::trig_theta_star();
        let b = nl_bounds(10, &[1; 10], 0.3904, &m, &th, 7.0).unwrap();
        assert_abs_diff_eq!(b.eta_lo, (0.1 + 10f64.sqrt() * 0.3904) * 5.0, epsilon = 1e-12);
        let quad: f64 = (0..10).map(|n| m.sense(n, &th)[0].powi(2) / 2.0).sum();
        assert_abs_diff_eq!(b.eta_hi, quad / 20.0, epsilon = 1e-12);
        assert!(!b.threshold_in_range);
    }

    #[test]
    fn nl_fa_exponent_positive_above_floor() {
        let m = trig_model(2.0).unwrap();
        let th = presets::trig_theta_star();
        let floor = nl_bounds(10, &[1; 10], 0.1, &m, &th, 1.0).unwrap().eta_lo;
        for eta in [floor * 1.01, floor * 1.5, floor * 3.0] {
            assert!(nl_bounds(10, &[1; 10], 0.1, &m, &th, eta).unwrap().fa_exponent >= 0.0);
        }
    }

    #[test]
    fn nl_fa_exponent_zero_below_floor() {
        let m = trig_model(2.0).unwrap();
        let th = presets::trig_theta_star();
        let b = nl_bounds(10, &[1; 10], 0.6862, &m, &th, 7.0).unwrap();
        assert!(b.lambda_star < 0.0);
        assert_eq!(b.fa_exponent, 0.0);
    }

    #[test]
    fn fa_rate_matches_numeric_minimum() {
        for (eta, b, s) in [(1.0, 1.0, 1.0), (3.0, 0.5, 4.0), (0.7, 0.2, 2.0)] {
            let numeric = grid_min(|l| -l * eta / b - 0.5 * s * (1.0 - l).ln());
            assert_abs_diff_eq!(-fa_rate(eta, b, s), numeric.min(0.0), epsilon = 1e-6);
        }
        assert_abs_diff_eq!(fa_rate(0.5, 1.0, 1.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn first_true_boundaries() {
        assert_eq!(first_true(|_| true), Some(0));
        assert_eq!(first_true(|t| t >= 7999), Some(7999));
        assert_eq!(first_true(|t| t >= 1), Some(1));
    }

    fn ring() -> (Spectrum, LinearModel) {
        (spectrum(&build_ring(10).unwrap()), presets::ring_linear_model().unwrap())
    }

    #[test]
    fn burnin_ring_published_schedule() {
        let (s, m) = ring();
        let sched = LSchedule::new(9.1, 0.4).unwrap();
        let b = l_burnin_times(&s, &m, &sched).unwrap();
        // direct scan
        let c1 = c1_linear(&s, &m).unwrap();
        let kmax = 2.0 / 3.0;
        let scan2 = (0..).find(|&t| sched.beta(t) * 4.0 + sched.alpha(t) * kmax < 1.0).unwrap();
        let scan3 = (0..).find(|&t| c1 * sched.alpha(t) < 1.0).unwrap();
        assert_eq!(b.t2, scan2);
        assert_eq!(b.t3, scan3);
        assert_eq!(b.t4, Some(0));
        assert_eq!(b.t1, scan2.max(scan3));
    }

    #[test]
    fn burnin_trivial_and_t3_boundary() {
        // single agent, h^2/sigma^2 = 1 -> c1 = 1, a = 1 -> c1 alpha_0 = 1 exactly
        let g = Graph::new(1, []).unwrap();
        let s = spectrum(&g);
        let m = LinearModel::scalar(1, 1, 1.0, 1.0).unwrap();
        let sched = LSchedule::new(1.0, 0.5).unwrap();
        let b = l_burnin_times(&s, &m, &sched).unwrap();
        assert_eq!(b.t3, 1);
        let m = LinearModel::scalar(1, 1, 0.5, 1.0).unwrap();
        let b = l_burnin_times(&s, &m, &sched).unwrap();
        assert_eq!((b.t2, b.t3, b.t1), (0, 0, 0));
    }

    #[test]
    fn lower_endpoint_rate_is_zero() {
        let (s, m) = ring();
        let sched = LSchedule::new(10.5, 0.4).unwrap();
        let r = make_weights(&s).unwrap().r;
        let th = presets::ring_theta_star();
        let mut inp = LBoundsInput { spec: &s, model: &m, schedule: &sched, theta_star: &th, r, k: 20, eta: 1.0 };
        let floor = l_bounds(&inp).unwrap().eta_lo;
        inp.eta = floor;
        assert_abs_diff_eq!(l_bounds(&inp).unwrap().ld0, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ld0_nondecreasing_in_eta() {
        let (s, m) = ring();
        let sched = LSchedule::new(10.5, 0.4).unwrap();
        let th = presets::ring_theta_star();
        let mut inp = LBoundsInput { spec: &s, model: &m, schedule: &sched, theta_star: &th, r: 0.3, k: 20, eta: 0.0 };
        let cm = l_constants(&s, &m, &sched).unwrap();
        let mut prev = -1.0;
        for i in 0..50 {
            inp.eta = 0.4 + i as f64 * 0.05;
            let v = l_bounds_with(&cm, &inp).unwrap().ld0;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn k_monotonicity_of_interval() {
        let (s, m) = ring();
        let sched = LSchedule::new(10.5, 0.4).unwrap();
        let r = make_weights(&s).unwrap().r;
        let th = presets::ring_theta_star() * 10.0;
        let k_min = crate::network::min_consensus_rounds(10, r).unwrap();
        let cm = l_constants(&s, &m, &sched).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for k in k_min..=k_min + 10 {
            let b = l_bounds_with(&cm, &LBoundsInput { spec: &s, model: &m, schedule: &sched, theta_star: &th, r, k, eta: 1.0 }).unwrap();
            if let Some((lo, hi)) = prev {
                assert!(b.eta_lo <= lo + 1e-15 && b.eta_hi >= hi - 1e-12);
            }
            prev = Some((b.eta_lo, b.eta_hi));
        }
    }

    #[test]
    fn ring_published_interval_is_empty() {
        let (s, m) = ring();
        let sched = LSchedule::new(9.1, 0.4).unwrap();
        let th = presets::ring_theta_star();
        let r = make_weights(&s).unwrap().r;
        for rr in [r, presets::RING_QUOTED_R] {
            let b = l_bounds(&LBoundsInput { spec: &s, model: &m, schedule: &sched, theta_star: &th, r: rr, k: 20, eta: 0.828 }).unwrap();
            assert!(!b.feasible);
            assert!(b.inconclusive_signal);
            assert!(b.miss_bound_undefined);
            assert_eq!(b.ld1, 0.0);
        }
    }

    #[test]
    fn json_names() {
        let (s, m) = ring();
        let sched = LSchedule::new(10.5, 0.4).unwrap();
        let th = presets::ring_theta_star();
        let b = l_bounds(&LBoundsInput { spec: &s, model: &m, schedule: &sched, theta_star: &th, r: 0.8, k: 20, eta: 1.0 }).unwrap();
        let v = serde_json::to_value(&b).unwrap();
        for key in ["t1", "c1", "c3", "c4", "c4_star", "eta2", "LD0", "LD1"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let nb = nl_bounds(10, &[1; 10], 0.3, &trig_model(2.0).unwrap(), &presets::trig_theta_star(), 7.0).unwrap();
        let v = serde_json::to_value(&nb).unwrap();
        assert!(v.get("LE").is_some() && v.get("lambda_star").is_some());
    }

    fn scalar_input<'a>(s: &'a Spectrum, sched: &'a LSchedule, r: f64, k: usize, eta: f64) -> ScalarBoundsInput<'a> {
        ScalarBoundsInput { n: s.n(), n1: s.n(), h: 1.0, sigma2: 1.0, spec: s, schedule: sched, r, k, eta, theta_star: 3.0, g: 2.0 }
    }

    #[test]
    fn centralized_floor_rate_is_zero() {
        let s = spectrum(&build_complete(4).unwrap());
        let sched = LSchedule::new(4.0, 0.5).unwrap();
        let b = scalar_bounds(&scalar_input(&s, &sched, 0.0, 2, 0.5)).unwrap();
        assert_abs_diff_eq!(b.ld0_c, 0.0, epsilon = 1e-12);
        let b = scalar_bounds(&scalar_input(&s, &sched, 0.0, 2, 1.5)).unwrap();
        // N1 eta - (N1/2)(1 + ln 2 eta)
        assert_abs_diff_eq!(b.ld0_c, 4.0 * 1.5 - 2.0 * (1.0 + 3f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn distributed_fa_rate_tends_to_centralized() {
        let s = spectrum(&build_complete(4).unwrap());
        let sched = LSchedule::new(4.0, 0.5).unwrap();
        let cent = scalar_bounds(&scalar_input(&s, &sched, 0.5, 2, 1.2)).unwrap().ld0_c;
        let mut prev_gap = f64::INFINITY;
        for k in [5, 10, 20, 40, 80] {
            let d = scalar_bounds(&scalar_input(&s, &sched, 0.5, k, 1.2)).unwrap().ld0;
            let gap = (d - cent).abs();
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-9);
    }

    #[test]
    fn scalar_observability_error() {
        let s = spectrum(&build_complete(3).unwrap());
        let sched = LSchedule::new(4.0, 0.5).unwrap();
        let mut inp = scalar_input(&s, &sched, 0.1, 2, 1.0);
        inp.h = 0.0;
        assert!(matches!(scalar_bounds(&inp), Err(Error::ModelDegenerate(_))));
    }

    #[test]
    fn scalar_matches_general_linear_bounds() {
        let s = spectrum(&build_ring(5).unwrap());
        let sched = LSchedule::new(30.0, 0.6).unwrap();
        let r = make_weights(&s).unwrap().r;
        let inp = ScalarBoundsInput { n: 5, n1: 5, h: 1.0, sigma2: 1.0, spec: &s, schedule: &sched, r, k: 25, eta: 0.6, theta_star: 40.0, g: 2.0 };
        let sb = scalar_bounds(&inp).unwrap();
        let m = LinearModel::scalar(5, 5, 1.0, 1.0).unwrap();
        let th = DVector::from_element(1, 40.0);
        let lb = l_bounds(&LBoundsInput { spec: &s, model: &m, schedule: &sched, theta_star: &th, r, k: 25, eta: 0.6 }).unwrap();
        assert_abs_diff_eq!(sb.eta2, lb.eta2, epsilon = 1e-9);
        assert_abs_diff_eq!(sb.c4, lb.c4, epsilon = 1e-12);
        assert_abs_diff_eq!(sb.c4_star, lb.c4_star, epsilon = 1e-9);
        assert_abs_diff_eq!(sb.ld0, lb.ld0, epsilon = 1e-12);
        assert_abs_diff_eq!(sb.ld1, lb.ld1, epsilon = 1e-9);
        assert!(!sb.miss_bound_undefined);
    }

    #[test]
    fn pt_first_horizon() {
        let s = spectrum(&build_path(2).unwrap());
        let m = LinearModel::new(vec![DMatrix::identity(1, 1), DMatrix::zeros(1, 1)], vec![DMatrix::identity(1, 1); 2]).unwrap();
        let sched = LSchedule::new(3.5, 0.6).unwrap();
        let d = pt_diagnostic(&s, &m, &sched, 1).unwrap();
        assert_abs_diff_eq!(d.pt_norm_times_t, 3.5 * 3.5, epsilon = 1e-12);
    }

    #[test]
    fn pt_size_cap() {
        let (s, m) = ring();
        let sched = LSchedule::new(10.5, 0.4).unwrap();
        assert!(matches!(pt_diagnostic(&s, &m, &sched, 100), Err(Error::Resource(_))));
    }

    #[test]
    fn pt_small_system_bound() {
        let s = spectrum(&build_path(2).unwrap());
        let m = LinearModel::new(vec![DMatrix::identity(1, 1), DMatrix::zeros(1, 1)], vec![DMatrix::identity(1, 1); 2]).unwrap();
        let sched = LSchedule::new(3.5, 0.6).unwrap();
        let d = pt_diagnostic(&s, &m, &sched, 50).unwrap();
        assert!(d.t1 <= 50);
        assert!(d.pt_norm_times_t <= d.bound);
        assert!(d.min_eigenvalue >= -1e-9);
        assert_abs_diff_eq!(d.pt_norm_times_t, d.gram_norm_times_t, epsilon = 1e-9 * d.pt_norm_times_t);
    }

    proptest! {
        #[test]
        fn eta_lo_monotone_in_r(r1 in 0.0f64..0.99, r2 in 0.0f64..0.99) {
            let m = trig_model(2.0).unwrap();
            let th = presets::trig_theta_star();
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let a = nl_bounds(10, &[1; 10], lo, &m, &th, 7.0).unwrap().eta_lo;
            let b = nl_bounds(10, &[1; 10], hi, &m, &th, 7.0).unwrap().eta_lo;
            prop_assert!(a <= b);
            prop_assert!((a - (0.1 + 10f64.sqrt() * lo) * 5.0).abs() < 1e-12);
        }

        #[test]
        fn per_tick_conversion(rate in 0.0f64..3.0, k in 1usize..50) {
            prop_assert_eq!(per_tick_rate(rate, Normalization::PerTick), rate);
            let norm = Normalization::PerRefresh { k };
            prop_assert!((per_tick_rate(rate * k as f64, norm) - rate).abs() < 1e-12);
        }
    }
}
