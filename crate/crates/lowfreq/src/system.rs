//! The discrete second-order model `M ẅ + D ẇ + K w = b0 u + b1 u̇`,
//! the single currency shared by every solution route.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// Relative tolerance against which symmetry / semidefiniteness are checked.
pub const TOL_SYM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Displacement,
    SlopeX,
    SlopeY,
    Twist,
}

impl DofKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DofKind::Displacement => "displacement",
            DofKind::SlopeX => "slope_x",
            DofKind::SlopeY => "slope_y",
            DofKind::Twist => "twist",
        }
    }

    pub fn parse(s: &str) -> Result<DofKind> {
        match s {
            "displacement" => Ok(DofKind::Displacement),
            "slope_x" => Ok(DofKind::SlopeX),
            "slope_y" => Ok(DofKind::SlopeY),
            "twist" => Ok(DofKind::Twist),
            other => Err(Error::InvalidInput(format!("unknown dof kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofLabel {
    pub kind: DofKind,
    pub x: f64,
    pub y: Option<f64>,
}

/// Discrete model (M, D, K, b0, b1) with optional per-DOF metadata.
///
/// M is SPD; D and K are symmetric positive semidefinite. Columns of
/// `b0`/`b1` are the force / rate-of-input distributions per input channel.
#[derive(Debug, Clone)]
pub struct SecondOrderSystem {
    pub n_dof: usize,
    pub n_inputs: usize,
    pub mass: SymMatrix,
    pub damping: SymMatrix,
    pub stiffness: SymMatrix,
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub dof_labels: Option<Vec<DofLabel>>,
}

impl SecondOrderSystem {
    pub fn new(
        mass: SymMatrix,
        damping: SymMatrix,
        stiffness: SymMatrix,
        b0: DMatrix<f64>,
        b1: DMatrix<f64>,
    ) -> Result<SecondOrderSystem> {
        let n = mass.nrows();
        for (name, m) in [("D", &damping), ("K", &stiffness)] {
            if m.nrows() != n {
                return Err(Error::dim(name, n, m.nrows()));
            }
        }
        if b0.nrows() != n || b1.nrows() != n || b0.ncols() != b1.ncols() {
            return Err(Error::dim(
                "b0/b1",
                format!("{n}×m with matching m"),
                format!("{}×{} and {}×{}", b0.nrows(), b0.ncols(), b1.nrows(), b1.ncols()),
            ));
        }
        let n_inputs = b0.ncols();
        Ok(SecondOrderSystem {
            n_dof: n,
            n_inputs,
            mass,
            damping,
            stiffness,
            b0,
            b1,
            dof_labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<DofLabel>) -> Result<SecondOrderSystem> {
        if labels.len() != self.n_dof {
            return Err(Error::dim("dof_labels", self.n_dof, labels.len()));
        }
        self.dof_labels = Some(labels);
        Ok(self)
    }

    /// Structural validation: symmetry of all three matrices and M SPD.
    /// Semidefiniteness of K and D is checked by eigenvalue bound only for
    /// dense systems (a full spectrum at sparse scale is not worth it here).
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("M", &self.mass),
            ("D", &self.damping),
            ("K", &self.stiffness),
        ] {
            let defect = m.symmetry_defect();
            let scale = m.frobenius_norm().max(1.0);
            if defect > TOL_SYM * scale {
                return Err(Error::InvalidInput(format!(
                    "{name} not symmetric: defect {defect:.3e} vs norm {scale:.3e}"
                )));
            }
        }
        self.mass.cholesky_dense("M (Cholesky failed)")?;
        if self.n_dof <= crate::matrix::SPARSE_THRESHOLD {
            for (name, m) in [("K", &self.stiffness), ("D", &self.damping)] {
                let dense = m.to_dense();
                let sym = (&dense + dense.transpose()) * 0.5;
                let eig = sym.symmetric_eigenvalues();
                let min = eig.min();
                let scale = m.frobenius_norm().max(1.0);
                if min < -TOL_SYM * scale {
                    return Err(Error::InvalidInput(format!(
                        "{name} not positive semidefinite: min eigenvalue {min:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Column `channel` of the load matrix `b0`.
    pub fn b0_channel(&self, channel: usize) -> Result<DVector<f64>> {
        if channel >= self.n_inputs {
            return Err(Error::dim("channel", format!("< {}", self.n_inputs), channel));
        }
        Ok(self.b0.column(channel).into_owned())
    }

    pub fn b1_channel(&self, channel: usize) -> Result<DVector<f64>> {
        if channel >= self.n_inputs {
            return Err(Error::dim("channel", format!("< {}", self.n_inputs), channel));
        }
        Ok(self.b1.column(channel).into_owned())
    }

    /// Indices of transversal-displacement DOFs (all DOFs when unlabelled).
    pub fn displacement_dofs(&self) -> Vec<usize> {
        match &self.dof_labels {
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.kind == DofKind::Displacement)
                .map(|(i, _)| i)
                .collect(),
            None => (0..self.n_dof).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_dimension_mismatch() {
        let err = SecondOrderSystem::new(
            SymMatrix::identity(3),
            SymMatrix::zeros(2),
            SymMatrix::zeros(3),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(3, 1),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn validate_rejects_indefinite_mass() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let sys = SecondOrderSystem::new(
            SymMatrix::Dense(m),
            SymMatrix::zeros(2),
            SymMatrix::zeros(2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert!(sys.validate().is_err());
    }
}
