//! Coupled systems `ż + Γ̃(z, x) + F(z) = 0` driven through the quadratic
//! control system: reference planning (dynamic motion planning for the
//! componentwise coupling), tracking through the dynamic controller, and the
//! Hölder-stability probe of the z-layer with respect to the relaxation norm
//! of the driver.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::integrator::{resolve_coupled, rk4, Trajectory};
use crate::model::QuadraticSystem;
use crate::saturation::SaturationChain;
use crate::signal::{Signal, TimeGrid};
use crate::synthesis::{
    synthesize_tracking_control, SynthesisError, SynthesisParams, SynthesisReport, TargetCurve,
};

/// Reaction term `F` of the z-layer, restricted to named closed forms so the
/// experiment surface stays deterministic.
#[derive(Debug, Clone)]
pub enum ReactionMap {
    Zero,
    /// `F(z) = M z`.
    Linear(DMatrix<f64>),
    /// Componentwise polynomial `F_l(z) = c₀ + c₁ z_l + c₂ z_l² + c₃ z_l³`.
    ComponentwisePoly(Vec<[f64; 4]>),
}

#[derive(Debug, Clone)]
pub struct CoupledSystem {
    driver: QuadraticSystem,
    n_z: usize,
    /// `Γ̃(z, x)_l = zᵀ G_l x` with `G_l` of size `n_z × n_x`.
    gamma_tilde: Vec<DMatrix<f64>>,
    reaction: ReactionMap,
}

impl CoupledSystem {
    pub fn new(
        driver: QuadraticSystem,
        gamma_tilde: Vec<DMatrix<f64>>,
        reaction: ReactionMap,
    ) -> Result<Self> {
        let n_z = gamma_tilde.len();
        if n_z == 0 {
            return Err(CoreError::InvalidParam("coupled system needs n_z >= 1".into()));
        }
        for g in &gamma_tilde {
            if g.nrows() != n_z || g.ncols() != driver.n_x() {
                return Err(CoreError::DimensionMismatch(format!(
                    "Gamma_tilde blocks must be {}x{}",
                    n_z,
                    driver.n_x()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite("Gamma_tilde entries".into()));
            }
        }
        match &reaction {
            ReactionMap::Linear(m) => {
                if m.nrows() != n_z || m.ncols() != n_z {
                    return Err(CoreError::DimensionMismatch("linear reaction matrix shape".into()));
                }
            }
            ReactionMap::ComponentwisePoly(coeffs) => {
                if coeffs.len() != n_z {
                    return Err(CoreError::DimensionMismatch("polynomial reaction coefficients".into()));
                }
            }
            ReactionMap::Zero => {}
        }
        Ok(CoupledSystem { driver, n_z, gamma_tilde, reaction })
    }

    /// Componentwise product coupling `Γ̃(z, x)_l = z_l x_l` (requires
    /// `n_z = n_x`).
    pub fn componentwise(driver: QuadraticSystem, reaction: ReactionMap) -> Result<Self> {
        let d = driver.n_x();
        let blocks: Vec<DMatrix<f64>> = (0..d)
            .map(|l| {
                let mut m = DMatrix::zeros(d, d);
                m[(l, l)] = 1.0;
                m
            })
            .collect();
        CoupledSystem::new(driver, blocks, reaction)
    }

    pub fn driver(&self) -> &QuadraticSystem {
        &self.driver
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn reaction(&self) -> &ReactionMap {
        &self.reaction
    }

    pub fn gamma_tilde(&self, z: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_z, |l, _| (z.transpose() * &self.gamma_tilde[l] * x)[(0, 0)])
    }

    pub fn eval_reaction(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.reaction {
            ReactionMap::Zero => DVector::zeros(self.n_z),
            ReactionMap::Linear(m) => m * z,
            ReactionMap::ComponentwisePoly(coeffs) => DVector::from_fn(self.n_z, |l, _| {
                let zl = z[l];
                let c = &coeffs[l];
                c[0] + c[1] * zl + c[2] * zl * zl + c[3] * zl * zl * zl
            }),
        }
    }

    fn is_componentwise(&self) -> bool {
        if self.n_z != self.driver.n_x() {
            return false;
        }
        self.gamma_tilde.iter().enumerate().all(|(l, g)| {
            g.iter().enumerate().all(|(idx, v)| {
                let (r, c) = (idx % self.n_z, idx / self.n_z);
                if r == l && c == l { (*v - 1.0).abs() < 1e-14 } else { v.abs() < 1e-14 }
            })
        })
    }
}

/// Simulates the z-layer alone under a prescribed driver trajectory `x`.
pub fn simulate_z_layer(
    coupled: &CoupledSystem,
    z0: DVector<f64>,
    x: &Signal,
    grid: TimeGrid,
) -> Result<Trajectory> {
    if x.dim() != coupled.driver.n_x() {
        return Err(CoreError::DimensionMismatch("z layer: driver signal dimension".into()));
    }
    rk4(grid, z0, |t, z, side| {
        -coupled.gamma_tilde(z, &x.value_side(t, side)) - coupled.eval_reaction(z)
    })
}

/// A reference `(z̄, x̄)` satisfying the coupled equation, with the
/// closed-form derivative of the fitted `z̄` retained for residual checks.
#[derive(Debug, Clone)]
pub struct ReferencePair {
    pub z_bar: Trajectory,
    pub x_bar: Trajectory,
    pub z_dot: Vec<DVector<f64>>,
}

/// Sup-norm residual of `ż̄ + Γ̃(z̄, x̄) + F(z̄)` over grid nodes.
pub fn reference_residual(coupled: &CoupledSystem, pair: &ReferencePair) -> f64 {
    let grid = pair.z_bar.grid();
    let mut worst: f64 = 0.0;
    for k in 0..=grid.steps() {
        let z = pair.z_bar.state(k);
        let x = pair.x_bar.state(k);
        let r = &pair.z_dot[k] + coupled.gamma_tilde(z, x) + coupled.eval_reaction(z);
        worst = worst.max(r.norm());
    }
    worst
}

/// Least-squares dictionary fit on one scalar channel: polynomials up to
/// degree 6 plus three sin/cos harmonics. Returns value and derivative
/// samples of the fit.
fn dictionary_fit(grid: TimeGrid, samples: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let tau = grid.tau();
    let omega = 2.0 * std::f64::consts::PI / tau;
    let n = grid.steps();
    let nfun = 7 + 6;
    let basis = |t: f64, j: usize| -> f64 {
        if j < 7 {
            (t / tau).powi(j as i32)
        } else {
            let k = ((j - 7) / 2 + 1) as f64;
            if (j - 7) % 2 == 0 { (k * omega * t).sin() } else { (k * omega * t).cos() }
        }
    };
    let basis_dot = |t: f64, j: usize| -> f64 {
        if j < 7 {
            if j == 0 { 0.0 } else { (j as f64 / tau) * (t / tau).powi(j as i32 - 1) }
        } else {
            let k = ((j - 7) / 2 + 1) as f64;
            if (j - 7) % 2 == 0 {
                k * omega * (k * omega * t).cos()
            } else {
                -k * omega * (k * omega * t).sin()
            }
        }
    };
    let a = DMatrix::from_fn(n + 1, nfun, |i, j| basis(grid.node(i), j));
    let rhs = DVector::from_column_slice(samples);
    let coeffs = a
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .expect("least-squares solve on a full-rank dictionary");
    let value: Vec<f64> = (0..=n)
        .map(|i| (0..nfun).map(|j| coeffs[j] * basis(grid.node(i), j)).sum())
        .collect();
    let deriv: Vec<f64> = (0..=n)
        .map(|i| (0..nfun).map(|j| coeffs[j] * basis_dot(grid.node(i), j)).sum())
        .collect();
    (value, deriv)
}

/// Dynamic motion planning for the componentwise coupling: smooths the
/// requested `z_ref`, verifies the orthant condition, and reads off the
/// driver reference `x̄_l = (F_l(z̄) − ż̄_l)/z̄_l`.
pub fn plan_reference(
    coupled: &CoupledSystem,
    z_ref: &Trajectory,
    eps: f64,
) -> Result<ReferencePair> {
    if !coupled.is_componentwise() {
        return Err(CoreError::InvalidParam(
            "reference planning covers the componentwise coupling only; supply an external pair otherwise".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(CoreError::InvalidParam("eps must be positive".into()));
    }
    let grid = z_ref.grid();
    let d = coupled.n_z;
    let n = grid.steps();
    let mut z_bar = vec![DVector::zeros(d); n + 1];
    let mut z_dot = vec![DVector::zeros(d); n + 1];
    for l in 0..d {
        let channel: Vec<f64> = z_ref.samples().iter().map(|s| s[l]).collect();
        let (v, dv) = dictionary_fit(grid, &channel);
        for k in 0..=n {
            z_bar[k][l] = v[k];
            z_dot[k][l] = dv[k];
        }
    }
    let sup_dist = z_bar
        .iter()
        .zip(z_ref.samples())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if sup_dist >= eps / 2.0 {
        return Err(CoreError::InvalidParam(format!(
            "smoothed reference deviates by {sup_dist:.3e} >= eps/2; refine z_ref or enlarge eps"
        )));
    }
    for l in 0..d {
        let sign = z_bar[0][l].signum();
        if z_bar.iter().any(|z| z[l] * sign <= 0.0) {
            return Err(CoreError::OrthantViolation { component: l });
        }
    }
    let x_bar: Vec<DVector<f64>> = (0..=n)
        .map(|k| {
            let f = coupled.eval_reaction(&z_bar[k]);
            DVector::from_fn(d, |l, _| -(z_dot[k][l] + f[l]) / z_bar[k][l])
        })
        .collect();
    Ok(ReferencePair {
        z_bar: Trajectory::from_samples(grid, z_bar)?,
        x_bar: Trajectory::from_samples(grid, x_bar)?,
        z_dot,
    })
}

#[derive(Debug, Clone)]
pub struct TrackCoupledReport {
    pub synthesis: SynthesisReport,
    pub x: Trajectory,
    pub z: Trajectory,
    pub sup_z_error: f64,
    pub endpoint_x_error: f64,
    pub relaxation_x_error: f64,
    pub eps_x_used: f64,
}

/// Tracks the z-layer through the dynamic controller: synthesizes a driver
/// control toward `x̄`, simulates the coupled loop, and bisects the driver
/// budget until the measured z-error passes (the Hölder constant linking the
/// two is unknown a priori).
pub fn track_coupled(
    coupled: &CoupledSystem,
    chain: &SaturationChain,
    reference: &ReferencePair,
    eps: f64,
    params: &SynthesisParams,
) -> Result<TrackCoupledReport> {
    if !chain.saturated {
        return Err(CoreError::InvalidParam("saturation chain must be saturated".into()));
    }
    let grid = params.grid;
    let target = TargetCurve::sampled(reference.x_bar.grid(), reference.x_bar.samples().to_vec())?;
    let mut eps_x = eps;
    let mut best: Option<TrackCoupledReport> = None;
    for _ in 0..=6 {
        let report = match synthesize_tracking_control(coupled.driver(), chain, &target, eps_x, params)
        {
            Ok(r) => r,
            Err(SynthesisError::Core(e)) => return Err(e),
            Err(SynthesisError::BudgetExhausted { .. }) => {
                eps_x /= 2.0;
                continue;
            }
        };
        let x0 = reference.x_bar.state(0).clone();
        let z0 = reference.z_bar.state(0).clone();
        let (x, z) = resolve_coupled(coupled, x0, z0, &report.control, grid)?;
        let z_bar_sig = reference.z_bar.as_signal();
        let sup_z_error = (0..=grid.steps())
            .map(|k| (z.state(k) - z_bar_sig.value(grid.node(k))).norm())
            .fold(0.0, f64::max);
        let out = TrackCoupledReport {
            endpoint_x_error: report.endpoint_error,
            relaxation_x_error: report.relaxation_error,
            synthesis: report,
            x,
            z,
            sup_z_error,
            eps_x_used: eps_x,
        };
        let better = best.as_ref().map_or(true, |b| out.sup_z_error < b.sup_z_error);
        if better {
            best = Some(out);
        }
        if best.as_ref().unwrap().sup_z_error < eps {
            return Ok(best.unwrap());
        }
        eps_x /= 2.0;
    }
    Err(CoreError::BudgetExhausted {
        best_error: best.map_or(f64::INFINITY, |b| b.sup_z_error),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct HolderProbe {
    /// `sup_t |z̃(t) − ẑ(t)|`.
    pub lhs: f64,
    /// `|||x̃ − x̂|||^{1/2}`.
    pub rhs_base: f64,
    pub ratio: f64,
}

/// Measures the Hölder-stability ratio of the z-layer: two driver signals,
/// one shared initial z-state.
pub fn holder_probe(
    coupled: &CoupledSystem,
    z0: DVector<f64>,
    x_tilde: &Signal,
    x_hat: &Signal,
    grid: TimeGrid,
) -> Result<HolderProbe> {
    let zt = simulate_z_layer(coupled, z0.clone(), x_tilde, grid)?;
    let zh = simulate_z_layer(coupled, z0, x_hat, grid)?;
    let lhs = zt.sup_distance(&zh);
    let rhs_base = x_tilde.sub_sampled(x_hat)?.resample(grid)?.relaxation_norm().sqrt();
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs_base };
    Ok(HolderProbe { lhs, rhs_base, ratio })
}
