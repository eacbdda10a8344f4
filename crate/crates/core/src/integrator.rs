//! Fixed-step RK4 for the enlarged system (the resolving operator), the
//! closed loop, and the coupled system, with norm-threshold blow-up detection.

use nalgebra::DVector;

use crate::coupled::CoupledSystem;
use crate::error::{CoreError, Result};
use crate::model::QuadraticSystem;
use crate::signal::{Side, Signal, TimeGrid};

/// State threshold past which the solver reports blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    samples: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn from_samples(grid: TimeGrid, samples: Vec<DVector<f64>>) -> Result<Trajectory> {
        if samples.len() != grid.steps() + 1 {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {} samples, got {}",
                grid.steps() + 1,
                samples.len()
            )));
        }
        if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(CoreError::NonFinite("trajectory samples".into()));
        }
        Ok(Trajectory { grid, samples })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.samples[k]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.samples.last().expect("trajectory is never empty")
    }

    /// Linear interpolation between nodes.
    pub fn at(&self, t: f64) -> DVector<f64> {
        self.as_signal_ref().value(t)
    }

    pub fn into_signal(self) -> Signal {
        Signal::from_samples(self.grid, self.samples).expect("sample count matches grid")
    }

    fn as_signal_ref(&self) -> Signal {
        Signal::from_samples(self.grid, self.samples.clone()).expect("sample count matches grid")
    }

    /// Trajectory samples viewed as a signal (linear interpolation).
    pub fn as_signal(&self) -> Signal {
        self.as_signal_ref()
    }

    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Per-component `L²` errors against a reference sampled on the same grid.
    pub fn componentwise_l2_distance(&self, reference: &[DVector<f64>]) -> Vec<f64> {
        let dim = self.samples[0].len();
        let h = self.grid.h();
        let mut acc = vec![0.0; dim];
        for k in 0..self.grid.steps() {
            for c in 0..dim {
                let a = self.samples[k][c] - reference[k][c];
                let b = self.samples[k + 1][c] - reference[k + 1][c];
                acc[c] += 0.5 * h * (a * a + b * b);
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    pub fn to_csv(&self) -> String {
        samples_to_csv(self.grid, &self.samples)
    }
}

/// CSV with header `t, x_0, …, x_{n−1}` and full double precision.
pub fn samples_to_csv(grid: TimeGrid, samples: &[DVector<f64>]) -> String {
    let dim = samples.first().map(|v| v.len()).unwrap_or(0);
    let mut out = String::from("t");
    for c in 0..dim {
        out.push_str(&format!(", x_{c}"));
    }
    out.push('\n');
    for (k, v) in samples.iter().enumerate() {
        out.push_str(&format!("{:.16e}", grid.node(k)));
        for c in 0..dim {
            out.push_str(&format!(", {:.16e}", v[c]));
        }
        out.push('\n');
    }
    out
}

pub fn signal_to_csv(signal: &Signal) -> String {
    samples_to_csv(signal.grid(), &signal.sample_at_nodes())
}

/// Classical RK4 with a side hint: the right-endpoint stage takes left
/// limits so node-aligned jumps in the inputs stay outside each step.
pub fn rk4<F>(grid: TimeGrid, x0: DVector<f64>, rhs: F) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>, Side) -> DVector<f64>,
{
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite("initial state".into()));
    }
    let n = grid.steps();
    let h = grid.h();
    let mut samples = Vec::with_capacity(n + 1);
    let mut x = x0;
    samples.push(x.clone());
    for k in 0..n {
        let t = grid.node(k);
        let k1 = rhs(t, &x, Side::Right);
        let k2 = rhs(t + 0.5 * h, &(&x + &k1 * (0.5 * h)), Side::Right);
        let k3 = rhs(t + 0.5 * h, &(&x + &k2 * (0.5 * h)), Side::Right);
        let k4 = rhs(grid.node(k + 1), &(&x + &k3 * h), Side::Left);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let norm = x.norm();
        if !norm.is_finite() || norm > BLOWUP_THRESHOLD {
            return Err(CoreError::BlowUp { t_blow: grid.node(k + 1) });
        }
        samples.push(x.clone());
    }
    Ok(Trajectory { grid, samples })
}

/// The resolving operator: RK4 solution of
/// `ẇ = γ − A(w+ζ) − f(w+ζ)`, `w(0) = w₀`.
pub fn resolve(
    sys: &QuadraticSystem,
    w0: DVector<f64>,
    zeta: &Signal,
    gamma: &Signal,
    grid: TimeGrid,
) -> Result<Trajectory> {
    if w0.len() != sys.n_x() || zeta.dim() != sys.n_x() || gamma.dim() != sys.n_x() {
        return Err(CoreError::DimensionMismatch("resolve: state dimension mismatch".into()));
    }
    rk4(grid, w0, |t, w, side| {
        sys.rhs_extended(w, &zeta.value_side(t, side), &gamma.value_side(t, side))
    })
}

/// Closed-loop simulation `ẋ + Ax + f(x) = Bu`.
pub fn simulate_closed_loop(
    sys: &QuadraticSystem,
    x0: DVector<f64>,
    u: &Signal,
    grid: TimeGrid,
) -> Result<Trajectory> {
    if u.dim() != sys.n_u() {
        return Err(CoreError::DimensionMismatch("closed loop: control dimension mismatch".into()));
    }
    let gamma = u.map_matrix(sys.b())?;
    let zeta = Signal::zero(grid, sys.n_x());
    resolve(sys, x0, &zeta, &gamma, grid)
}

/// Stacked RK4 of the driven system together with the coupled layer
/// `ż + Γ̃(z, x) + F(z) = 0`.
pub fn resolve_coupled(
    coupled: &CoupledSystem,
    x0: DVector<f64>,
    z0: DVector<f64>,
    u: &Signal,
    grid: TimeGrid,
) -> Result<(Trajectory, Trajectory)> {
    let sys = coupled.driver();
    let n_x = sys.n_x();
    let n_z = coupled.n_z();
    if x0.len() != n_x || z0.len() != n_z {
        return Err(CoreError::DimensionMismatch("coupled: initial state dimensions".into()));
    }
    if u.dim() != sys.n_u() {
        return Err(CoreError::DimensionMismatch("coupled: control dimension".into()));
    }
    let b = sys.b().clone();
    let mut stacked0 = DVector::zeros(n_x + n_z);
    stacked0.rows_mut(0, n_x).copy_from(&x0);
    stacked0.rows_mut(n_x, n_z).copy_from(&z0);
    let traj = rk4(grid, stacked0, |t, s, side| {
        let x = s.rows(0, n_x).into_owned();
        let z = s.rows(n_x, n_z).into_owned();
        let bu = &b * u.value_side(t, side);
        let dx = bu - sys.a() * &x - sys.eval_f(&x);
        let dz = -coupled.gamma_tilde(&z, &x) - coupled.eval_reaction(&z);
        let mut out = DVector::zeros(n_x + n_z);
        out.rows_mut(0, n_x).copy_from(&dx);
        out.rows_mut(n_x, n_z).copy_from(&dz);
        out
    })?;
    let xs: Vec<DVector<f64>> = traj.samples().iter().map(|s| s.rows(0, n_x).into_owned()).collect();
    let zs: Vec<DVector<f64>> = traj.samples().iter().map(|s| s.rows(n_x, n_z).into_owned()).collect();
    Ok((Trajectory { grid, samples: xs }, Trajectory { grid, samples: zs }))
}
