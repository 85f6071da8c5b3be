//! Step-response simulation: trapezoidal (Crank-Nicolson) integration of the
//! first-order descriptor form
//!
//! ```text
//! [M 0] d [w]   [ 0   M] [w]   [ 0    ]
//! [0 M] — [v] = [-K  -D] [v] + [ b0 u0]
//!         dt
//! ```
//!
//! from w(0)=0 with the post-jump initial velocity v(0⁺) = M⁻¹ b1 u0.
//! Eliminating the displacement update leaves one solve per step with the
//! constant step matrix S = M + (dt/2)·D + (dt²/4)·K, factored once.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::loworder::StepResponse;
use crate::system::SecondOrderSystem;

/// Fixed-step trapezoidal integrator state for one system.
pub struct Integrator<'a> {
    sys: &'a SecondOrderSystem,
    dt: f64,
    step_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> Integrator<'a> {
    pub fn new(sys: &'a SecondOrderSystem, dt: f64) -> Result<Integrator<'a>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let s = sys
            .mass
            .lincomb_dense(1.0, &sys.damping, dt / 2.0, &sys.stiffness, dt * dt / 4.0);
        let step_lu = s.lu();
        if step_lu.determinant() == 0.0 {
            return Err(Error::Numerical(
                "step matrix M + dt/2·D + dt²/4·K is singular".into(),
            ));
        }
        Ok(Integrator { sys, dt, step_lu })
    }

    /// One trapezoidal step of (w, v) under constant force f.
    pub fn step(&self, w: &mut DVector<f64>, v: &mut DVector<f64>, f: &DVector<f64>) -> Result<()> {
        let dt = self.dt;
        let sys = self.sys;
        // rhs = (M − dt/2 D − dt²/4 K) v − dt K w + dt f
        let mut rhs = sys.mass.matvec(v);
        rhs.axpy(-dt / 2.0, &sys.damping.matvec(v), 1.0);
        let kv = sys.stiffness.matvec(v);
        rhs.axpy(-dt * dt / 4.0, &kv, 1.0);
        rhs.axpy(-dt, &sys.stiffness.matvec(w), 1.0);
        rhs.axpy(dt, f, 1.0);
        let v_new = self
            .step_lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("step matrix solve failed".into()))?;
        w.axpy(dt / 2.0, &(&v_new + &*v), 1.0);
        *v = v_new;
        Ok(())
    }
}

/// Integrate the step response and record displacement snapshots at
/// `sample_times` (each snapped to the dt grid; snapped times are returned).
pub fn step_response(
    sys: &SecondOrderSystem,
    u0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<StepResponse> {
    if u0.len() != sys.n_inputs {
        return Err(Error::dim("u0", sys.n_inputs, u0.len()));
    }
    if sample_times.is_empty() {
        return Err(Error::InvalidInput("no sample times requested".into()));
    }
    let n_steps = (t_end / dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::InvalidInput("t_end shorter than one step".into()));
    }

    // snap requested times to the step grid
    let mut sample_steps: Vec<usize> = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        if t < -1e-12 || t > t_end + dt / 2.0 {
            return Err(Error::InvalidInput(format!(
                "sample time {t} outside [0, {t_end}]"
            )));
        }
        sample_steps.push((t / dt).round() as usize);
    }

    let f = &sys.b0 * u0;
    let b1u = &sys.b1 * u0;
    let v0 = sys
        .mass
        .cholesky_dense("M must be SPD to form the initial velocity")?
        .solve(&b1u);

    let integ = Integrator::new(sys, dt)?;
    let mut w = DVector::zeros(sys.n_dof);
    let mut v = v0.clone();
    let mut snapshots = DMatrix::zeros(sys.n_dof, sample_steps.len());
    let mut times = vec![0.0; sample_steps.len()];

    for (slot, &s) in sample_steps.iter().enumerate() {
        if s == 0 {
            times[slot] = 0.0;
            // w(0) = 0; the column is already zero
        }
    }
    for step in 1..=n_steps {
        integ.step(&mut w, &mut v, &f)?;
        for (slot, &s) in sample_steps.iter().enumerate() {
            if s == step {
                times[slot] = step as f64 * dt;
                snapshots.set_column(slot, &w);
            }
        }
    }

    Ok(StepResponse {
        times,
        snapshots,
        velocity0: v0,
        u0: u0.clone(),
        dt,
    })
}

/// Parse a `start:step:end` sample specification into explicit times.
pub fn parse_sample_spec(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "sample spec `{spec}` is not of the form start:step:end"
        )));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad number in sample spec `{spec}`")))?;
    let step: f64 = parts[1]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad number in sample spec `{spec}`")))?;
    let end: f64 = parts[2]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad number in sample spec `{spec}`")))?;
    if step <= 0.0 || end < start {
        return Err(Error::InvalidInput(format!("empty sample spec `{spec}`")));
    }
    let count = ((end - start) / step).round() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}
