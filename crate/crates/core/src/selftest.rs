//! Quick checks of small closed-form cases, run by `cidetect selftest`.

use nalgebra::{DMatrix, DVector};

use crate::bounds::{self, LBoundsInput};
use crate::ciglrt_l::{l_decide, l_update_running_average, LSchedule};
use crate::ciglrt_nl::nl_decide;
use crate::harness::{binomial_ci, fit_exponent};
use crate::network::{build_complete, build_path, build_ring, make_weights, min_consensus_rounds, spectrum};
use crate::sensing::{Hypothesis, LinearModel};

pub struct CheckResult {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn check(name: &'static str, f: impl FnOnce() -> std::result::Result<(), String>) -> CheckResult {
    CheckResult { name, outcome: f() }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> std::result::Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {a}, expected {b}"))
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("network/complete graph mixes in one step", || {
            let w = make_weights(&spectrum(&build_complete(5).map_err(err)?)).map_err(err)?;
            close(w.r, 0.0, 1e-12, "r")?;
            close(w.delta, 0.2, 1e-12, "delta")
        }),
        check("network/ring of ten", || {
            let w = make_weights(&spectrum(&build_ring(10).map_err(err)?)).map_err(err)?;
            let (l2, ln) = (2.0 - 2.0 * (2.0 * std::f64::consts::PI / 10.0).cos(), 4.0);
            close(w.r, (ln - l2) / (ln + l2), 1e-12, "r")
        }),
        check("network/minimum rounds", || {
            let k = min_consensus_rounds(10, 0.8404).map_err(err)?;
            (k == 20).then_some(()).ok_or(format!("k_min = {k}"))
        }),
        check("sensing/path graph rejects unobservable agent split", || {
            let m = LinearModel::new(vec![DMatrix::zeros(1, 1); 2], vec![DMatrix::identity(1, 1); 2]);
            let s = spectrum(&build_path(2).map_err(err)?);
            match m.and_then(|m| crate::sensing::c1_linear(&s, &m)) {
                Ok(c) => Err(format!("expected an error, got c1 = {c}")),
                Err(_) => Ok(()),
            }
        }),
        check("detectors/ties decide H0", || {
            (nl_decide(1.0, 1.0) == Hypothesis::H0 && l_decide(1.0, 1.0) == Hypothesis::H0)
                .then_some(())
                .ok_or("tie decided H1".into())
        }),
        check("ciglrt_l/running mean of 1..4", || {
            let mut s = DVector::zeros(1);
            for (t, y) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
                s = l_update_running_average(&s, &DVector::from_element(1, *y), t);
            }
            close(s[0], 2.5, 1e-15, "mean")
        }),
        check("bounds/LE(0) = 0", || close(bounds::nl_le(0.0, 10, 10.0, 0.5, 7.0), 0.0, 0.0, "LE(0)")),
        check("bounds/LD0 vanishes at the floor", || {
            let g = build_complete(2).map_err(err)?;
            let s = spectrum(&g);
            let m = LinearModel::scalar(2, 2, 1.0, 1.0).map_err(err)?;
            let sched = LSchedule::new(3.0, 0.6).map_err(err)?;
            let th = DVector::from_element(1, 5.0);
            let mut inp = LBoundsInput { spec: &s, model: &m, schedule: &sched, theta_star: &th, r: 0.0, k: 1, eta: 1.0 };
            inp.eta = bounds::l_bounds(&inp).map_err(err)?.eta_lo;
            close(bounds::l_bounds(&inp).map_err(err)?.ld0, 0.0, 1e-9, "LD0")
        }),
        check("bounds/P_t at t = 1 is alpha_0^2", || {
            let s = spectrum(&build_path(2).map_err(err)?);
            let m = LinearModel::new(vec![DMatrix::identity(1, 1), DMatrix::zeros(1, 1)], vec![DMatrix::identity(1, 1); 2])
                .map_err(err)?;
            let sched = LSchedule::new(3.5, 0.6).map_err(err)?;
            close(bounds::pt_diagnostic(&s, &m, &sched, 1).map_err(err)?.pt_norm_times_t, 12.25, 1e-12, "t|P_1|")
        }),
        check("harness/exact exponential slope", || {
            let t: Vec<usize> = (0..50).map(|i| 10 * i).collect();
            let p: Vec<f64> = t.iter().map(|&x| (-0.05 * x as f64).exp()).collect();
            let e = fit_exponent(&t, &p, usize::MAX, Some((0, 1000)), bounds::Normalization::PerTick).map_err(err)?;
            close(e.slope, 0.05, 1e-9, "slope")
        }),
        check("harness/interval contains the estimate", || {
            let (lo, hi) = binomial_ci(3, 40);
            (lo <= 0.075 && 0.075 <= hi).then_some(()).ok_or(format!("[{lo}, {hi}]"))
        }),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn suite_passes() {
        for c in super::run_all() {
            assert!(c.outcome.is_ok(), "{}: {:?}", c.name, c.outcome);
        }
    }
}
