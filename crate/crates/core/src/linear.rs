//! Linear input-output theory: the forward map, its adjoint, explicit
//! adjoint-kernel witnesses showing that tracking controllability fails when
//! `B` is not onto, and the weak (integrated-output) variant via the extended
//! system.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::integrator::rk4;
use crate::signal::{Signal, TimeGrid};
use crate::subspace::{column_span, SubspaceBasis};

/// Rank tolerance for the onto decision.
pub const ONTO_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LinearTriple {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl LinearTriple {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(CoreError::DimensionMismatch("linear triple dimensions".into()));
        }
        for m in [&a, &b, &c] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite("linear triple entries".into()));
            }
        }
        Ok(LinearTriple { a, b, c })
    }

    /// Full-state output (`C = I`).
    pub fn full_state(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Forward map: `u ↦ C z` where `ż = Az + Bu`, `z(0) = 0` (the Duhamel
/// convolution, computed by one RK4 pass).
pub fn apply_forward_map(lin: &LinearTriple, u: &Signal, grid: TimeGrid) -> Result<Signal> {
    if u.dim() != lin.b.ncols() {
        return Err(CoreError::DimensionMismatch("forward map: input dimension".into()));
    }
    let traj = rk4(grid, DVector::zeros(lin.n()), |t, z, side| {
        &lin.a * z + &lin.b * u.value_side(t, side)
    })?;
    traj.into_signal().map_matrix(&lin.c)
}

/// Adjoint map: `g ↦ B*q` where `q̇ = −A*q − C*g`, `q(τ) = 0`. Solved
/// forward in reversed time `p(s) = q(τ−s)`.
pub fn apply_adjoint(lin: &LinearTriple, g: &Signal, grid: TimeGrid) -> Result<Signal> {
    if g.dim() != lin.c.nrows() {
        return Err(CoreError::DimensionMismatch("adjoint map: output dimension".into()));
    }
    let at = lin.a.transpose();
    let ct = lin.c.transpose();
    let tau = grid.tau();
    let rev = rk4(grid, DVector::zeros(lin.n()), |s, p, side| {
        let flipped = match side {
            crate::signal::Side::Left => crate::signal::Side::Right,
            crate::signal::Side::Right => crate::signal::Side::Left,
        };
        &at * p + &ct * g.value_side(tau - s, flipped)
    })?;
    let n = grid.steps();
    let bt = lin.b.transpose();
    let values: Vec<DVector<f64>> = (0..=n).map(|k| &bt * rev.state(n - k)).collect();
    Signal::from_samples(grid, values)
}

/// Onto decision for `B` plus an orthonormal basis of `null(B*)` (the
/// orthogonal complement of the column span).
pub fn onto_check(b: &DMatrix<f64>) -> Result<(bool, SubspaceBasis)> {
    let range = column_span(b, ONTO_TOL)?;
    let null = range.complement()?;
    Ok((null.dim() == 0, null))
}

/// The adjoint-kernel witness for a non-onto `B`:
/// `g(t) = −(τ−t)A*η + η` with `B*η = 0`. Its adjoint image vanishes
/// identically, so the output direction `η` is untrackable.
pub fn kernel_witness(lin: &LinearTriple, eta: &DVector<f64>, grid: TimeGrid) -> Result<Signal> {
    if eta.len() != lin.n() {
        return Err(CoreError::DimensionMismatch("witness: eta dimension".into()));
    }
    let bt_eta = lin.b.transpose() * eta;
    if bt_eta.norm() > 1e-10 {
        return Err(CoreError::InvalidParam(format!(
            "eta is not in the null space of B*: |B* eta| = {:.3e}",
            bt_eta.norm()
        )));
    }
    let at_eta = lin.a.transpose() * eta;
    let tau = grid.tau();
    let eta = eta.clone();
    let value: std::sync::Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync> =
        std::sync::Arc::new(move |t: f64| &eta - &at_eta * (tau - t));
    Ok(Signal::analytic(grid, lin.n(), value, None))
}

/// Intermediate identity behind the witness: for `g` from [`kernel_witness`],
/// `∫_σ^τ exp((t−σ)A*) g(t) dt = (τ−σ)η`. Returns the maximal deviation over
/// grid nodes (computed via the backward adjoint solve with `C = I`).
pub fn witness_identity_defect(
    lin: &LinearTriple,
    eta: &DVector<f64>,
    grid: TimeGrid,
) -> Result<f64> {
    let g = kernel_witness(lin, eta, grid)?;
    // the inner integral is the adjoint state q(σ) before applying B*
    let inner = LinearTriple::full_state(lin.a.clone(), DMatrix::identity(lin.n(), lin.n()))?;
    let q = apply_adjoint(&inner, &g, grid)?; // B = I, so this is q itself
    let tau = grid.tau();
    let mut worst: f64 = 0.0;
    for k in 0..=grid.steps() {
        let sigma = grid.node(k);
        worst = worst.max((q.value(sigma) - eta * (tau - sigma)).norm());
    }
    Ok(worst)
}

/// Weak adjoint of the extended system (state augmented by its running
/// integral): `(Ψ̃g)(σ) = B*[∫₀^{τ−σ} ∫_ξ^τ exp((t−ξ)A*) g(t) dt dξ]`.
/// The inner integral is one backward adjoint solve; the outer one is a
/// cumulative trapezoid.
pub fn extended_weak_adjoint(lin: &LinearTriple, g: &Signal, grid: TimeGrid) -> Result<Signal> {
    let n = lin.n();
    let inner_triple = LinearTriple::full_state(lin.a.clone(), DMatrix::identity(n, n))?;
    let q = apply_adjoint(&inner_triple, g, grid)?; // q(ξ) = ∫_ξ^τ exp((t−ξ)A*) g(t) dt
    let cumulative = q.running_integral(); // ∫₀^s q(ξ) dξ
    let bt = lin.b.transpose();
    let nsteps = grid.steps();
    let values: Vec<DVector<f64>> = (0..=nsteps)
        .map(|k| &bt * cumulative.value(grid.node(nsteps - k)))
        .collect();
    Signal::from_samples(grid, values)
}

/// Closed-form value of the extended weak adjoint on the witness shape:
/// `(Ψ̃g)(σ) = (τ²−σ²)/2 · B*η`, obtained from
/// `∫₀^{τ−σ} (τ−ξ) dξ = (τ²−σ²)/2`. In particular it vanishes identically
/// when `B*η = 0`.
pub fn extended_witness_closed_form(
    lin: &LinearTriple,
    eta: &DVector<f64>,
    tau: f64,
    sigma: f64,
) -> DVector<f64> {
    let factor = (tau * tau - sigma * sigma) / 2.0;
    lin.b.transpose() * eta * factor
}
