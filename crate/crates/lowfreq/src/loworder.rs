//! Low-order model container and the residual checks every route must pass.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::SecondOrderSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Spectral,
    Algebraic,
    Regression,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Spectral => "spectral",
            Route::Algebraic => "algebraic",
            Route::Regression => "regression",
        }
    }

    pub fn parse(s: &str) -> Result<Route> {
        match s {
            "spectral" => Ok(Route::Spectral),
            "algebraic" => Ok(Route::Algebraic),
            "regression" => Ok(Route::Regression),
            other => Err(Error::InvalidInput(format!("unknown route `{other}`"))),
        }
    }
}

/// (w2, w1, w0) per input channel: columns are the response coefficients of
/// `w(t) ≈ ½t²·w2 + t·w1 + w0` for a unit step on channel j.
#[derive(Debug, Clone)]
pub struct LowOrderModel {
    pub w2: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub w0: DMatrix<f64>,
    pub route: Route,
    pub residuals: BTreeMap<String, f64>,
}

impl LowOrderModel {
    pub fn n_dof(&self) -> usize {
        self.w2.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.w2.ncols()
    }

    /// Response coefficients for a combined step amplitude `u0`.
    pub fn combine(&self, u0: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (&self.w2 * u0, &self.w1 * u0, &self.w0 * u0)
    }
}

/// Basis V spanning ker(K), with cached Gram matrix VᵀMV.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub basis: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Eigenpairs of K φ = λ M φ with M-orthonormal Φ, plus the damping values
/// μₙ = φₙᵀDφₙ and the zero-mode index sets.
#[derive(Debug, Clone)]
pub struct ModalDecomposition {
    pub lambdas: DVector<f64>,
    pub mus: DVector<f64>,
    pub phi: DMatrix<f64>,
    /// Indices with λₙ ≈ 0 (rigid-body modes).
    pub set_i: Vec<usize>,
    /// Indices with μₙ ≈ 0 (undamped modes).
    pub set_j: Vec<usize>,
    /// ‖offdiag(ΦᵀDΦ)‖_F; nonzero means non-proportional damping.
    pub proportional_defect: f64,
}

impl ModalDecomposition {
    pub fn set_j_subset_of_i(&self) -> bool {
        self.set_j.iter().all(|j| self.set_i.contains(j))
    }
}

/// Time grid and displacement snapshots of a step response.
#[derive(Debug, Clone)]
pub struct StepResponse {
    pub times: Vec<f64>,
    /// n × (#times) displacement snapshots.
    pub snapshots: DMatrix<f64>,
    /// Post-jump initial velocity M⁻¹ b1 u0.
    pub velocity0: DVector<f64>,
    /// Applied step amplitude per channel.
    pub u0: DVector<f64>,
    /// Fixed integration step.
    pub dt: f64,
}

/// Named residuals of the defining equations, per input channel (max over
/// channels is reported).
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub residuals: BTreeMap<String, f64>,
    pub tol: f64,
}

impl ConsistencyReport {
    pub fn pass(&self) -> bool {
        self.residuals.values().all(|r| *r <= self.tol)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |a, b| a.max(*b))
    }
}

/// Residuals of the defining equations of the expansion:
/// ‖K w2‖, ‖D w2 + K w1‖, ‖M w2 + D w1 + K w0 − b0‖ and, when a basis `V`
/// of ker(K)∩ker(D) is supplied, ‖Vᵀ M w0‖.
pub fn check_consistency_with_kernel(
    sys: &SecondOrderSystem,
    lom: &LowOrderModel,
    tol: f64,
    joint_kernel: Option<&DMatrix<f64>>,
) -> Result<ConsistencyReport> {
    if lom.n_dof() != sys.n_dof {
        return Err(Error::dim("check_consistency", sys.n_dof, lom.n_dof()));
    }
    if lom.n_inputs() != sys.n_inputs {
        return Err(Error::dim(
            "check_consistency channels",
            sys.n_inputs,
            lom.n_inputs(),
        ));
    }

    let k_w2 = sys.stiffness.matmul(&lom.w2);
    let d_w2 = sys.damping.matmul(&lom.w2);
    let k_w1 = sys.stiffness.matmul(&lom.w1);
    let d_w1 = sys.damping.matmul(&lom.w1);
    let k_w0 = sys.stiffness.matmul(&lom.w0);
    let m_w2 = sys.mass.matmul(&lom.w2);

    let mut residuals = BTreeMap::new();
    residuals.insert("K_w2".to_string(), k_w2.norm());
    residuals.insert("D_w2_plus_K_w1".to_string(), (&d_w2 + &k_w1).norm());
    residuals.insert(
        "force_balance".to_string(),
        (&m_w2 + &d_w1 + &k_w0 - &sys.b0).norm(),
    );
    if let Some(v) = joint_kernel {
        let m_w0 = sys.mass.matmul(&lom.w0);
        residuals.insert("kernel_orthogonality".to_string(), (v.transpose() * m_w0).norm());
    }
    Ok(ConsistencyReport { residuals, tol })
}

/// As [`check_consistency_with_kernel`], computing a basis of
/// ker(K)∩ker(D) internally (dense eigensolve).
pub fn check_consistency(
    sys: &SecondOrderSystem,
    lom: &LowOrderModel,
    tol: f64,
) -> Result<ConsistencyReport> {
    let v = crate::algebraic::joint_kernel(sys, crate::algebraic::TOL_KERNEL)?;
    check_consistency_with_kernel(sys, lom, tol, Some(&v.basis))
}
