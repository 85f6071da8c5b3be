//! Algebraic route: kernel-constrained direct solve of the bordered system
//!
//! ```text
//! [ K    MV ] [ w0 ]   [ b0 ]
//! [ VᵀM  0  ] [ a2 ] = [ 0  ]
//! ```
//!
//! valid when ker D = ker K (e.g. structural damping D = βK). The second
//! block row enforces M-orthogonality of the compliance field to the rigid
//! modes; a2 gives w2 = V a2 and the Gram solve gives w1.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::loworder::{KernelBasis, LowOrderModel, Route};
use crate::system::SecondOrderSystem;

/// Relative residual below which a vector counts as a kernel vector of K.
pub const TOL_KERNEL: f64 = 1e-8;
/// Relative bound on ‖DV‖ enforcing the ker D = ker K precondition.
pub const TOL_KER_D: f64 = 1e-8;

/// Compute an M-orthonormal basis of {v : ‖Kv‖ ≤ tol·‖K‖} from a dense
/// symmetric eigendecomposition of K.
pub fn kernel_basis(sys: &SecondOrderSystem, tol_kernel: f64) -> Result<KernelBasis> {
    let k = sys.stiffness.to_dense();
    let k = (&k + k.transpose()) * 0.5;
    let eig = k.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1e-300);
    let mut cols: Vec<usize> = (0..sys.n_dof)
        .filter(|&i| eig.eigenvalues[i].abs() <= tol_kernel * scale)
        .collect();
    cols.sort();
    let mut v = DMatrix::zeros(sys.n_dof, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        v.set_column(j, &eig.eigenvectors.column(i));
    }
    let v = m_orthonormalize(sys, &v)?;
    let gram = v.transpose() * sys.mass.matmul(&v);
    Ok(KernelBasis { basis: v, gram })
}

/// Validate an analytically supplied kernel basis without recomputing it.
/// Columns are kept as given; only ‖Kvⱼ‖ and the Gram matrix are checked.
pub fn validate_kernel_basis(
    sys: &SecondOrderSystem,
    basis: DMatrix<f64>,
    tol_kernel: f64,
) -> Result<KernelBasis> {
    if basis.nrows() != sys.n_dof {
        return Err(Error::dim("kernel basis", sys.n_dof, basis.nrows()));
    }
    let k_norm = sys.stiffness.frobenius_norm().max(1e-300);
    let mut bad = Vec::new();
    for j in 0..basis.ncols() {
        let col = basis.column(j).into_owned();
        let r = sys.stiffness.matvec(&col).norm() / (k_norm * col.norm().max(1e-300));
        if r > tol_kernel {
            bad.push(format!("column {j}: rel residual {r:.3e}"));
        }
    }
    if !bad.is_empty() {
        return Err(Error::InvalidInput(format!(
            "supplied kernel basis fails ‖KV‖ tolerance: {}",
            bad.join("; ")
        )));
    }
    let gram = basis.transpose() * sys.mass.matmul(&basis);
    if gram.clone().cholesky().is_none() {
        return Err(Error::InvalidInput(
            "supplied kernel basis is rank deficient (VᵀMV not SPD)".into(),
        ));
    }
    Ok(KernelBasis { basis, gram })
}

/// Basis of ker(K) ∩ ker(D), M-orthonormalized.
pub fn joint_kernel(sys: &SecondOrderSystem, tol: f64) -> Result<KernelBasis> {
    let kb = kernel_basis(sys, tol)?;
    if kb.dim() == 0 {
        return Ok(kb);
    }
    let dv = sys.damping.matmul(&kb.basis);
    let small = dv.transpose() * &dv; // k×k, kernel directions of D within span(V)
    let eig = ((&small + small.transpose()) * 0.5).symmetric_eigen();
    let scale = sys.damping.frobenius_norm().powi(2).max(1e-300);
    let keep: Vec<usize> = (0..kb.dim())
        .filter(|&i| eig.eigenvalues[i].abs() <= (tol * tol) * scale)
        .collect();
    let mut v = DMatrix::zeros(sys.n_dof, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        v.set_column(j, &(&kb.basis * eig.eigenvectors.column(i)));
    }
    let v = m_orthonormalize(sys, &v)?;
    let gram = v.transpose() * sys.mass.matmul(&v);
    Ok(KernelBasis { basis: v, gram })
}

/// Solve the bordered system for one channel; returns (w0, a2).
pub fn solve_saddle(
    sys: &SecondOrderSystem,
    kernel: &KernelBasis,
    channel: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_ker_d(sys, kernel)?;
    let b0 = sys.b0_channel(channel)?;
    let (lu, mv) = factor_bordered(sys, kernel)?;
    solve_bordered(sys, kernel, &lu, &mv, &b0)
}

/// Rigid-mode coefficients for one channel: w2 = V a2 and
/// w1 = V (VᵀMV)⁻¹ Vᵀ b1 (the Gram solve for the drift term).
pub fn rigid_coeffs(
    sys: &SecondOrderSystem,
    kernel: &KernelBasis,
    channel: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (_, a2) = solve_saddle(sys, kernel, channel)?;
    let w2 = &kernel.basis * &a2;
    let w1 = rigid_drift(sys, kernel, &sys.b1_channel(channel)?)?;
    Ok((w2, w1))
}

fn rigid_drift(
    sys: &SecondOrderSystem,
    kernel: &KernelBasis,
    b1: &DVector<f64>,
) -> Result<DVector<f64>> {
    if kernel.dim() == 0 {
        return Ok(DVector::zeros(sys.n_dof));
    }
    let rhs = kernel.basis.transpose() * b1;
    let a1 = kernel
        .gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("kernel Gram matrix not SPD".into()))?
        .solve(&rhs);
    Ok(&kernel.basis * a1)
}

/// All channels assembled into a [`LowOrderModel`], factorizing the bordered
/// matrix once.
pub fn low_order_algebraic(sys: &SecondOrderSystem, kernel: &KernelBasis) -> Result<LowOrderModel> {
    check_ker_d(sys, kernel)?;
    let (lu, mv) = factor_bordered(sys, kernel)?;
    let n = sys.n_dof;
    let m = sys.n_inputs;
    let mut w2 = DMatrix::zeros(n, m);
    let mut w1 = DMatrix::zeros(n, m);
    let mut w0 = DMatrix::zeros(n, m);
    for j in 0..m {
        let b0 = sys.b0_channel(j)?;
        let (w0_j, a2) = solve_bordered(sys, kernel, &lu, &mv, &b0)?;
        w0.set_column(j, &w0_j);
        w2.set_column(j, &(&kernel.basis * a2));
        w1.set_column(j, &rigid_drift(sys, kernel, &sys.b1_channel(j)?)?);
    }
    let mut lom = LowOrderModel {
        w2,
        w1,
        w0,
        route: Route::Algebraic,
        residuals: BTreeMap::new(),
    };
    let report =
        crate::loworder::check_consistency_with_kernel(sys, &lom, f64::INFINITY, Some(&kernel.basis))?;
    lom.residuals = report.residuals;
    Ok(lom)
}

fn check_ker_d(sys: &SecondOrderSystem, kernel: &KernelBasis) -> Result<()> {
    let d_norm = sys.damping.frobenius_norm();
    if d_norm == 0.0 || kernel.dim() == 0 {
        return Ok(());
    }
    let dv = sys.damping.matmul(&kernel.basis);
    if dv.norm() > TOL_KER_D * d_norm * kernel.basis.norm() {
        return Err(Error::RoutePrecondition(
            "ker D ≠ ker K — use regression route".into(),
        ));
    }
    Ok(())
}

type DenseLu = nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// Bordered matrix [[K, MV],[VᵀM, 0]], factored by dense LU with partial
/// pivoting (the saddle structure rules out plain Cholesky).
fn factor_bordered(
    sys: &SecondOrderSystem,
    kernel: &KernelBasis,
) -> Result<(DenseLu, DMatrix<f64>)> {
    let n = sys.n_dof;
    let k = kernel.dim();
    let mv = sys.mass.matmul(&kernel.basis);
    let mut bordered = DMatrix::zeros(n + k, n + k);
    bordered.view_mut((0, 0), (n, n)).copy_from(&sys.stiffness.to_dense());
    bordered.view_mut((0, n), (n, k)).copy_from(&mv);
    bordered.view_mut((n, 0), (k, n)).copy_from(&mv.transpose());
    let lu = bordered.lu();
    if lu.determinant() == 0.0 {
        return Err(Error::Numerical(
            "singular bordered system: rigid modes not fully captured by V".into(),
        ));
    }
    Ok((lu, mv))
}

fn solve_bordered(
    sys: &SecondOrderSystem,
    kernel: &KernelBasis,
    lu: &DenseLu,
    mv: &DMatrix<f64>,
    b0: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = sys.n_dof;
    let k = kernel.dim();
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(b0);
    let mut sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular bordered system".into()))?;

    // one step of iterative refinement
    let residual = &rhs - apply_bordered(sys, kernel, mv, &sol);
    if let Some(corr) = lu.solve(&residual) {
        sol += corr;
    }

    let w0 = sol.rows(0, n).into_owned();
    let a2 = sol.rows(n, k).into_owned();
    Ok((w0, a2))
}

fn apply_bordered(
    sys: &SecondOrderSystem,
    kernel: &KernelBasis,
    mv: &DMatrix<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    let n = sys.n_dof;
    let k = kernel.dim();
    let xw = x.rows(0, n).into_owned();
    let xa = x.rows(n, k).into_owned();
    let mut out = DVector::zeros(n + k);
    out.rows_mut(0, n)
        .copy_from(&(sys.stiffness.matvec(&xw) + mv * xa));
    out.rows_mut(n, k).copy_from(&(mv.transpose() * xw));
    out
}

/// Gram–Schmidt in the M inner product; drops nothing, errors on rank loss.
fn m_orthonormalize(sys: &SecondOrderSystem, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = v.clone();
    for j in 0..out.ncols() {
        for _pass in 0..2 {
            for i in 0..j {
                let qi = out.column(i).into_owned();
                let proj = qi.dot(&sys.mass.matvec(&out.column(j).into_owned()));
                let col = out.column(j) - &qi * proj;
                out.set_column(j, &col);
            }
        }
        let cj = out.column(j).into_owned();
        let norm = cj.dot(&sys.mass.matvec(&cj)).sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::Numerical("kernel basis rank deficient".into()));
        }
        out.set_column(j, &(cj / norm));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymMatrix;
    use approx::assert_abs_diff_eq;

    fn sys_diag(k: &[f64], m_ident: bool) -> SecondOrderSystem {
        let n = k.len();
        let kd = DMatrix::from_diagonal(&DVector::from_row_slice(k));
        let m = if m_ident {
            SymMatrix::identity(n)
        } else {
            SymMatrix::identity(n)
        };
        SecondOrderSystem::new(
            m,
            SymMatrix::zeros(n),
            SymMatrix::Dense(kd),
            DMatrix::zeros(n, 1),
            DMatrix::zeros(n, 1),
        )
        .unwrap()
    }

    #[test]
    fn kernel_of_diagonal_stiffness() {
        let sys = sys_diag(&[0.0, 0.0, 1.0], true);
        let kb = kernel_basis(&sys, TOL_KERNEL).unwrap();
        assert_eq!(kb.dim(), 2);
        // span{e1, e2}: third component of every basis vector vanishes
        for j in 0..2 {
            assert_abs_diff_eq!(kb.basis[(2, j)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_rank_matches_svd_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 10;
        let l = DMatrix::from_fn(n - 2, n, |_, _| rng.gen_range(-1.0..1.0));
        let k = l.transpose() * &l;
        let sys = SecondOrderSystem::new(
            SymMatrix::identity(n),
            SymMatrix::zeros(n),
            SymMatrix::Dense(k.clone()),
            DMatrix::zeros(n, 1),
            DMatrix::zeros(n, 1),
        )
        .unwrap();
        let kb = kernel_basis(&sys, TOL_KERNEL).unwrap();

        let svd = k.svd(false, false);
        let smax = svd.singular_values.max();
        let null = svd
            .singular_values
            .iter()
            .filter(|s| **s <= TOL_KERNEL * smax)
            .count();
        assert_eq!(kb.dim(), null);
        assert_eq!(kb.dim(), 2);
    }

    #[test]
    fn no_rigid_modes_reduces_to_plain_solve() {
        let sys = SecondOrderSystem::new(
            SymMatrix::identity(2),
            SymMatrix::zeros(2),
            SymMatrix::identity(2),
            DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let kb = kernel_basis(&sys, TOL_KERNEL).unwrap();
        assert_eq!(kb.dim(), 0);
        let (w0, a2) = solve_saddle(&sys, &kb, 0).unwrap();
        assert_abs_diff_eq!(w0[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w0[1], 2.0, epsilon = 1e-13);
        assert_eq!(a2.len(), 0);
    }

    #[test]
    fn two_dof_saddle_against_dense_oracle() {
        // M = I, K = diag(0,1), V = e1, b0 = [1,1]: bordered 3×3 solve gives
        // w0 = [0,1], a2 = [1]
        let sys = SecondOrderSystem::new(
            SymMatrix::identity(2),
            SymMatrix::zeros(2),
            SymMatrix::Dense(DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, 1.0]))),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let kb = kernel_basis(&sys, TOL_KERNEL).unwrap();
        assert_eq!(kb.dim(), 1);
        let (w0, a2) = solve_saddle(&sys, &kb, 0).unwrap();
        assert_abs_diff_eq!(w0[0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w0[1], 1.0, epsilon = 1e-13);
        assert_eq!(a2.len(), 1);
        // w2 = V a2 must equal e1 regardless of the sign of the basis vector
        let w2 = &kb.basis * &a2;
        assert_abs_diff_eq!(w2[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w2[1], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn refuses_when_ker_d_differs() {
        // K = diag(0,1) has kernel e1, but D = diag(1,0) does not annihilate it
        let sys = SecondOrderSystem::new(
            SymMatrix::identity(2),
            SymMatrix::Dense(DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 0.0]))),
            SymMatrix::Dense(DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, 1.0]))),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let kb = kernel_basis(&sys, TOL_KERNEL).unwrap();
        let err = solve_saddle(&sys, &kb, 0);
        assert!(matches!(err, Err(Error::RoutePrecondition(_))));
    }

    #[test]
    fn basis_invariance() {
        // same kernel, rotated basis: results identical
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let l = DMatrix::from_fn(n - 2, n, |_, _| rng.gen_range(-1.0..1.0));
        let k = l.transpose() * &l;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let m = &raw * raw.transpose() + DMatrix::identity(n, n) * (n as f64);
        let b0 = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        let b1 = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        let sys = SecondOrderSystem::new(
            SymMatrix::Dense(m),
            SymMatrix::zeros(n),
            SymMatrix::Dense(k),
            b0,
            b1,
        )
        .unwrap();
        let kb = kernel_basis(&sys, TOL_KERNEL).unwrap();
        let theta: f64 = 0.7;
        let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let rotated = validate_kernel_basis(&sys, &kb.basis * rot, TOL_KERNEL).unwrap();

        let a = low_order_algebraic(&sys, &kb).unwrap();
        let b = low_order_algebraic(&sys, &rotated).unwrap();
        assert!((&a.w2 - &b.w2).norm() < 1e-10);
        assert!((&a.w1 - &b.w1).norm() < 1e-10);
        assert!((&a.w0 - &b.w0).norm() < 1e-10);
    }
}
