//! Spectral route: modal decomposition of (K, M) and the closed-form
//! assembly of (w2, w1, w0) from the modal coefficients.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::loworder::{LowOrderModel, ModalDecomposition, Route};
use crate::system::SecondOrderSystem;

/// Relative threshold classifying an eigenvalue as zero.
pub const TOL_ZERO: f64 = 1e-8;
/// Relative bound on ‖offdiag(ΦᵀDΦ)‖ above which the damping is treated as
/// non-proportional and the route refuses.
pub const TOL_PROP: f64 = 1e-8;

/// Solve K φ = λ M φ with M-orthonormal Φ via Cholesky reduction of M to a
/// standard symmetric eigenproblem. Eigenvalues come back sorted ascending.
pub fn modal_decompose(sys: &SecondOrderSystem, tol_zero: f64) -> Result<ModalDecomposition> {
    let n = sys.n_dof;
    let chol = sys.mass.cholesky_dense("M must be SPD for modal decomposition")?;
    let l = chol.l();

    // A = L⁻¹ K L⁻ᵀ, symmetrized against round-off
    let k = sys.stiffness.to_dense();
    let mut a = l.solve_lower_triangular(&k).ok_or_else(|| {
        Error::Numerical("singular Cholesky factor in modal reduction".into())
    })?;
    a.transpose_mut();
    let mut a = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor in modal reduction".into()))?;
    a = (&a + a.transpose()) * 0.5;

    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let mut lambdas = DVector::zeros(n);
    let mut y = DMatrix::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        lambdas[col] = eig.eigenvalues[idx].max(0.0);
        y.set_column(col, &eig.eigenvectors.column(idx));
    }

    // Φ = L⁻ᵀ Y gives ΦᵀMΦ = I
    let phi = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor in modal reduction".into()))?;

    let dphi = sys.damping.matmul(&phi);
    let modal_d = phi.transpose() * dphi;
    let mut mus = DVector::zeros(n);
    let mut defect_sq = 0.0;
    for i in 0..n {
        mus[i] = modal_d[(i, i)].max(0.0);
        for j in 0..n {
            if i != j {
                defect_sq += modal_d[(i, j)] * modal_d[(i, j)];
            }
        }
    }

    let lambda_max = lambdas.max().max(0.0);
    let mu_max = mus.max().max(0.0);
    let set_i = (0..n).filter(|&i| lambdas[i] <= tol_zero * lambda_max.max(1e-300)).collect();
    let set_j = (0..n).filter(|&i| mus[i] <= tol_zero * mu_max.max(1e-300)).collect();

    Ok(ModalDecomposition {
        lambdas,
        mus,
        phi,
        set_i,
        set_j,
        proportional_defect: defect_sq.sqrt(),
    })
}

/// One channel of the spectral formulas: sums of αₙφₙ, βₙφₙ, γₙφₙ over the
/// zero / nonzero mode index sets. Inner products ⟨φ, M⁻¹b⟩_M reduce to φᵀb.
pub fn low_order_spectral_channel(
    modal: &ModalDecomposition,
    sys: &SecondOrderSystem,
    channel: usize,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    check_applicability(modal, sys)?;

    let b0 = sys.b0_channel(channel)?;
    let b1 = sys.b1_channel(channel)?;
    let n = sys.n_dof;

    let in_i = membership(&modal.set_i, n);
    let in_j = membership(&modal.set_j, n);

    let mut w2 = DVector::zeros(n);
    let mut w1 = DVector::zeros(n);
    let mut w0 = DVector::zeros(n);
    for m in 0..n {
        let phi = modal.phi.column(m);
        let p0 = phi.dot(&b0);
        let p1 = phi.dot(&b1);
        if in_j[m] {
            // rigid undamped: accelerates and drifts
            w2.axpy(p0, &phi, 1.0);
            w1.axpy(p1, &phi, 1.0);
        } else if in_i[m] {
            // rigid damped: terminal velocity plus offset
            let mu = modal.mus[m];
            w1.axpy(p0 / mu, &phi, 1.0);
            w0.axpy(p1 / mu - p0 / (mu * mu), &phi, 1.0);
        } else {
            // flexible: static deflection
            w0.axpy(p0 / modal.lambdas[m], &phi, 1.0);
        }
    }
    Ok((w2, w1, w0))
}

/// All channels assembled into a [`LowOrderModel`] with residual diagnostics.
pub fn low_order_spectral(sys: &SecondOrderSystem) -> Result<LowOrderModel> {
    let modal = modal_decompose(sys, TOL_ZERO)?;
    let n = sys.n_dof;
    let m = sys.n_inputs;
    let mut w2 = DMatrix::zeros(n, m);
    let mut w1 = DMatrix::zeros(n, m);
    let mut w0 = DMatrix::zeros(n, m);
    for j in 0..m {
        let (c2, c1, c0) = low_order_spectral_channel(&modal, sys, j)?;
        w2.set_column(j, &c2);
        w1.set_column(j, &c1);
        w0.set_column(j, &c0);
    }
    let mut lom = LowOrderModel {
        w2,
        w1,
        w0,
        route: Route::Spectral,
        residuals: BTreeMap::new(),
    };
    let report = crate::loworder::check_consistency(sys, &lom, f64::INFINITY)?;
    lom.residuals = report.residuals;
    Ok(lom)
}

fn check_applicability(modal: &ModalDecomposition, sys: &SecondOrderSystem) -> Result<()> {
    if !modal.set_j_subset_of_i() {
        return Err(Error::RoutePrecondition(
            "ker D ⊄ ker K, spectral formulas inapplicable".into(),
        ));
    }
    let d_norm = sys.damping.frobenius_norm();
    if modal.proportional_defect > TOL_PROP * d_norm.max(1e-300) && d_norm > 0.0 {
        return Err(Error::RoutePrecondition(format!(
            "non-proportional damping (defect {:.3e} > {:.3e}) — use regression route",
            modal.proportional_defect,
            TOL_PROP * d_norm
        )));
    }
    Ok(())
}

fn membership(set: &[usize], n: usize) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &i in set {
        mask[i] = true;
    }
    mask
}
