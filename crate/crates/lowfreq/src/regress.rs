//! Least-squares recovery of the quadratic trend ½t²·w2 + t·w1 + w0 from
//! late-time snapshots.
//!
//! The design matrix is built on centered times t' = t − t̄ and the
//! coefficients are un-shifted afterwards; the raw basis {½t², t, 1} is
//! needlessly ill-conditioned away from t = 0.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::loworder::{LowOrderModel, Route, StepResponse};

/// Condition estimate above which the fit is flagged.
pub const COND_WARN: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct FitReport {
    pub w2_hat: DVector<f64>,
    pub w1_hat: DVector<f64>,
    pub w0_hat: DVector<f64>,
    /// Root-mean-square fit residual per DOF.
    pub residual_rms_per_dof: DVector<f64>,
    /// Global RMS residual over all DOFs and window samples.
    pub residual_rms: f64,
    /// Condition estimate of the 3×3 regression Gram matrix.
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

impl FitReport {
    pub fn into_low_order_model(self) -> LowOrderModel {
        let n = self.w2_hat.len();
        let mut residuals = BTreeMap::new();
        residuals.insert("residual_rms".to_string(), self.residual_rms);
        residuals.insert("condition_estimate".to_string(), self.condition_estimate);
        LowOrderModel {
            w2: DMatrix::from_column_slice(n, 1, self.w2_hat.as_slice()),
            w1: DMatrix::from_column_slice(n, 1, self.w1_hat.as_slice()),
            w0: DMatrix::from_column_slice(n, 1, self.w0_hat.as_slice()),
            route: Route::Regression,
            residuals,
        }
    }
}

/// Fit the trend on `window` (indices into `resp.times`); needs ≥ 3 distinct
/// times. Solved by QR of the 3-column design matrix, which is equivalent to
/// the normal equations but better conditioned.
pub fn fit_trend(resp: &StepResponse, window: std::ops::Range<usize>) -> Result<FitReport> {
    if window.end > resp.times.len() || window.start >= window.end {
        return Err(Error::InvalidInput(format!(
            "window {window:?} out of range for {} samples",
            resp.times.len()
        )));
    }
    let times: Vec<f64> = resp.times[window.clone()].to_vec();
    let mut distinct = times.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidInput(
            "underdetermined: window must contain at least 3 distinct times".into(),
        ));
    }

    let nt = times.len();
    let t_bar = times.iter().sum::<f64>() / nt as f64;
    let mut design = DMatrix::zeros(nt, 3);
    for (i, &t) in times.iter().enumerate() {
        let tc = t - t_bar;
        design[(i, 0)] = 0.5 * tc * tc;
        design[(i, 1)] = tc;
        design[(i, 2)] = 1.0;
    }

    let svd = design.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition_estimate = if smin > 0.0 {
        (smax / smin).powi(2) // Gram matrix condition = squared design condition
    } else {
        f64::INFINITY
    };

    // one QR factorization shared by every DOF
    let qr = design.qr();
    let n = resp.snapshots.nrows();
    let rhs = resp
        .snapshots
        .columns(window.start, nt)
        .transpose()
        .into_owned(); // nt × n
    let mut coeffs = qr.q().transpose() * &rhs; // 3-ish × n after triangular solve
    let r = qr.r();
    let mut sol = DMatrix::zeros(3, n);
    sol.copy_from(&coeffs.rows(0, 3));
    if !r.rows(0, 3).into_owned().solve_upper_triangular_mut(&mut sol) {
        return Err(Error::Numerical("rank-deficient regression design".into()));
    }
    coeffs = sol;

    // un-shift: ½(t−t̄)²a + (t−t̄)b + c = ½t²·a + t·(b−a·t̄) + (½a·t̄² − b·t̄ + c)
    let mut w2 = DVector::zeros(n);
    let mut w1 = DVector::zeros(n);
    let mut w0 = DVector::zeros(n);
    for dof in 0..n {
        let a = coeffs[(0, dof)];
        let b = coeffs[(1, dof)];
        let c = coeffs[(2, dof)];
        w2[dof] = a;
        w1[dof] = b - a * t_bar;
        w0[dof] = 0.5 * a * t_bar * t_bar - b * t_bar + c;
    }

    // residuals of the fitted trend against the window snapshots
    let mut per_dof = DVector::zeros(n);
    let mut total = 0.0;
    for dof in 0..n {
        let mut ss = 0.0;
        for (i, &t) in times.iter().enumerate() {
            let model = 0.5 * t * t * w2[dof] + t * w1[dof] + w0[dof];
            let r = resp.snapshots[(dof, window.start + i)] - model;
            ss += r * r;
        }
        per_dof[dof] = (ss / nt as f64).sqrt();
        total += ss;
    }
    let residual_rms = (total / (nt * n) as f64).sqrt();

    Ok(FitReport {
        w2_hat: w2,
        w1_hat: w1,
        w0_hat: w0,
        residual_rms_per_dof: per_dof,
        residual_rms,
        condition_estimate,
        ill_conditioned: condition_estimate > COND_WARN,
    })
}

/// Default window: the last 11 samples.
pub fn default_window(resp: &StepResponse) -> std::ops::Range<usize> {
    let n = resp.times.len();
    n.saturating_sub(11)..n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn synthetic(times: &[f64], w2: f64, w1: f64, w0: f64) -> StepResponse {
        let snapshots = DMatrix::from_fn(1, times.len(), |_, j| {
            let t = times[j];
            0.5 * t * t * w2 + t * w1 + w0
        });
        StepResponse {
            times: times.to_vec(),
            snapshots,
            velocity0: DVector::zeros(1),
            u0: DVector::from_element(1, 1.0),
            dt: 1.0,
        }
    }

    #[test]
    fn exact_quadratic_recovered() {
        // w(t) = t² + 3t + 5 on t ∈ {0, 1, 2}
        let resp = synthetic(&[0.0, 1.0, 2.0], 2.0, 3.0, 5.0);
        let fit = fit_trend(&resp, 0..3).unwrap();
        assert_abs_diff_eq!(fit.w2_hat[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.w1_hat[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.w0_hat[0], 5.0, epsilon = 1e-12);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn underdetermined_window_rejected() {
        let resp = synthetic(&[1.0, 1.0, 1.0], 1.0, 0.0, 0.0);
        assert!(fit_trend(&resp, 0..3).is_err());
        let resp = synthetic(&[1.0, 2.0, 3.0], 1.0, 0.0, 0.0);
        assert!(fit_trend(&resp, 0..2).is_err());
    }

    #[test]
    fn matches_explicit_normal_equations() {
        // well-conditioned window: QR result equals the textbook
        // (ΣxᵢxᵢᵀΣ)⁻¹Σxᵢy normal-equation solution to 1e-10 relative
        let times: Vec<f64> = (0..11).map(|i| 3.0 + 0.1 * i as f64).collect();
        let resp = synthetic(&times, 0.7, -1.3, 2.9);
        let fit = fit_trend(&resp, 0..11).unwrap();

        let mut gram = DMatrix::zeros(3, 3);
        let mut rhs = DVector::zeros(3);
        for &t in &times {
            let x = DVector::from_row_slice(&[0.5 * t * t, t, 1.0]);
            gram += &x * x.transpose();
            rhs += &x * (0.5 * t * t * 0.7 + t * (-1.3) + 2.9);
        }
        let sol = gram.lu().solve(&rhs).unwrap();
        assert_abs_diff_eq!(fit.w2_hat[0], sol[0], epsilon = 1e-10);
        assert_abs_diff_eq!(fit.w1_hat[0], sol[1], epsilon = 1e-10);
        assert_abs_diff_eq!(fit.w0_hat[0], sol[2], epsilon = 1e-10);
    }

    #[test]
    fn window_shift_stable_for_pure_trend() {
        let times: Vec<f64> = (0..21).map(|i| 3.0 + 0.1 * i as f64).collect();
        let resp = synthetic(&times, 0.4, 0.2, -1.0);
        let a = fit_trend(&resp, 0..11).unwrap();
        let b = fit_trend(&resp, 10..21).unwrap();
        assert_abs_diff_eq!(a.w0_hat[0], b.w0_hat[0], epsilon = 1e-10);
    }

    proptest! {
        /// Any trajectory with ω_st ≡ 0 is recovered to machine precision
        /// from any ≥3-point window.
        #[test]
        fn exact_trend_recovery(
            w2 in -10.0..10.0f64,
            w1 in -10.0..10.0f64,
            w0 in -10.0..10.0f64,
            start in 0.0..100.0f64,
            step in 0.05..2.0f64,
            count in 3usize..20,
        ) {
            let times: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
            let resp = synthetic(&times, w2, w1, w0);
            let fit = fit_trend(&resp, 0..count).unwrap();
            let scale = w2.abs().max(w1.abs()).max(w0.abs()).max(1.0);
            prop_assert!((fit.w2_hat[0] - w2).abs() < 1e-9 * scale);
            prop_assert!((fit.w1_hat[0] - w1).abs() < 1e-9 * scale);
            prop_assert!((fit.w0_hat[0] - w0).abs() < 1e-9 * scale);
            let data_norm = resp.snapshots.norm();
            prop_assert!(fit.residual_rms <= 1e-10 * data_norm.max(1.0));
        }
    }
}
