//! Experiment configuration schemas. Unknown fields are rejected so a typo
//! in a config file fails loudly instead of silently using a default.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;

use qtrack_core::model::{
    lorenz_system, net_system, r6_system, QuadraticSystem, SystemJson,
};
use qtrack_core::signal::TimeGrid;
use qtrack_core::synthesis::TargetCurve;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Named(String),
    Inline(SystemJson),
    File { file: String },
}

impl SystemRef {
    pub fn build(&self, base: &Path) -> Result<QuadraticSystem, String> {
        match self {
            SystemRef::Named(name) => match name.as_str() {
                "lorenz" => Ok(lorenz_system(10.0, 28.0, 8.0 / 3.0)),
                "net" | "example00" => Ok(net_system()),
                "r6" => Ok(r6_system()),
                other => Err(format!("unknown named system '{other}'")),
            },
            SystemRef::Inline(doc) => {
                QuadraticSystem::from_json(doc).map_err(|e| format!("invalid system: {e}"))
            }
            SystemRef::File { file } => {
                let text = std::fs::read_to_string(base.join(file))
                    .map_err(|e| format!("cannot read system file '{file}': {e}"))?;
                let doc: SystemJson = serde_json::from_str(&text)
                    .map_err(|e| format!("invalid system file '{file}': {e}"))?;
                QuadraticSystem::from_json(&doc).map_err(|e| format!("invalid system: {e}"))
            }
        }
    }
}

fn default_max_depth() -> usize {
    4
}
fn default_p_max() -> usize {
    4
}
fn default_attempts() -> usize {
    64
}
fn default_pieces() -> usize {
    8
}
fn default_n_osc_start() -> usize {
    8
}
fn default_n_osc_max() -> usize {
    1024
}
fn default_taper_width() -> f64 {
    0.01
}
fn default_grid_steps() -> usize {
    4096
}
fn default_tau() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturateConfig {
    pub system: SystemRef,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    pub seed: u64,
    /// Also run the one-shot decomposability check on every unit direction.
    #[serde(default)]
    pub check_assumption1: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Circle of `radius` around `center` in the plane of `axes`.
    Circle { center: Vec<f64>, radius: f64, turns: f64, axes: [usize; 2] },
    /// `amplitude * sin^2(pi t / tau)` in one component, zero elsewhere.
    Bump { component: usize, amplitude: f64 },
    Constant { value: Vec<f64> },
    Line { from: Vec<f64>, to: Vec<f64> },
    /// Trajectory-layout CSV with matching dimension.
    Samples { file: String },
}

impl TargetSpec {
    pub fn build(
        &self,
        dim: usize,
        grid: TimeGrid,
        base: &Path,
    ) -> Result<TargetCurve, String> {
        let tau = grid.tau();
        match self {
            TargetSpec::Circle { center, radius, turns, axes } => {
                if center.len() != dim || axes.iter().any(|&a| a >= dim) {
                    return Err("circle target: center/axes dimension mismatch".into());
                }
                let c = DVector::from_vec(center.clone());
                let (r, omega) = (*radius, 2.0 * std::f64::consts::PI * turns / tau);
                let [i, j] = *axes;
                let cv = c.clone();
                let value = Arc::new(move |t: f64| {
                    let mut v = cv.clone();
                    v[i] += r * ((omega * t).cos() - 1.0);
                    v[j] += r * (omega * t).sin();
                    v
                });
                let deriv = Arc::new(move |t: f64| {
                    let mut v = DVector::zeros(dim);
                    v[i] = -r * omega * (omega * t).sin();
                    v[j] = r * omega * (omega * t).cos();
                    v
                });
                Ok(TargetCurve::closed_form(grid, dim, value, deriv))
            }
            TargetSpec::Bump { component, amplitude } => {
                if *component >= dim {
                    return Err("bump target: component out of range".into());
                }
                let (c, a) = (*component, *amplitude);
                let w = std::f64::consts::PI / tau;
                let value = Arc::new(move |t: f64| {
                    let mut v = DVector::zeros(dim);
                    v[c] = a * (w * t).sin().powi(2);
                    v
                });
                let deriv = Arc::new(move |t: f64| {
                    let mut v = DVector::zeros(dim);
                    v[c] = a * w * (2.0 * w * t).sin();
                    v
                });
                Ok(TargetCurve::closed_form(grid, dim, value, deriv))
            }
            TargetSpec::Constant { value } => {
                if value.len() != dim {
                    return Err("constant target: dimension mismatch".into());
                }
                let v = DVector::from_vec(value.clone());
                let vz = DVector::zeros(dim);
                Ok(TargetCurve::closed_form(
                    grid,
                    dim,
                    Arc::new(move |_| v.clone()),
                    Arc::new(move |_| vz.clone()),
                ))
            }
            TargetSpec::Line { from, to } => {
                if from.len() != dim || to.len() != dim {
                    return Err("line target: dimension mismatch".into());
                }
                let a = DVector::from_vec(from.clone());
                let d = DVector::from_vec(to.clone()) - &a;
                let slope = &d / tau;
                Ok(TargetCurve::closed_form(
                    grid,
                    dim,
                    Arc::new(move |t: f64| &a + &d * (t / tau)),
                    Arc::new(move |_| slope.clone()),
                ))
            }
            TargetSpec::Samples { file } => {
                let (sgrid, samples) = read_csv_samples(&base.join(file), dim)?;
                TargetCurve::sampled(sgrid, samples).map_err(|e| format!("samples target: {e}"))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeConfig {
    pub system: SystemRef,
    pub target: TargetSpec,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub eps: f64,
    #[serde(default = "default_pieces")]
    pub pieces: usize,
    #[serde(default = "default_n_osc_start")]
    pub n_osc_start: usize,
    #[serde(default = "default_n_osc_max")]
    pub n_osc_max: usize,
    #[serde(default = "default_taper_width")]
    pub taper_width: f64,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSpec {
    Zero,
    Constant { value: Vec<f64> },
    /// Square wave: phase vectors cycled `cycles` times over [0, tau].
    Wave { phases: Vec<Vec<f64>>, cycles: usize },
    Samples { file: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemRef,
    pub x0: Vec<f64>,
    pub control: ControlSpec,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDemoConfig {
    pub n_x: usize,
    pub n_u: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    pub seed: u64,
}

impl LinearDemoConfig {
    pub fn matrices(&self) -> Result<(DMatrix<f64>, DMatrix<f64>), String> {
        if self.a.len() != self.n_x * self.n_x || self.b.len() != self.n_x * self.n_u {
            return Err("linear-demo: matrix size mismatch".into());
        }
        Ok((
            DMatrix::from_row_slice(self.n_x, self.n_x, &self.a),
            DMatrix::from_row_slice(self.n_x, self.n_u, &self.b),
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionSpec {
    Zero,
    Linear { matrix: Vec<f64> },
    /// Per-component polynomial `c0 + c1 z + c2 z^2 + c3 z^3`.
    Poly { coeffs: Vec<[f64; 4]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZRefSpec {
    Constant { value: Vec<f64> },
    /// `scale_l * exp(-rate t)` per component.
    ExpDecay { scale: Vec<f64>, rate: f64 },
    Samples { file: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledDemoConfig {
    pub system: SystemRef,
    pub n_z: usize,
    /// Row-major n_z x n_x coupling matrices, one per z-component; omit for
    /// the componentwise product coupling (requires n_z = n_x).
    #[serde(rename = "Gamma_tilde")]
    pub gamma_tilde: Option<Vec<Vec<f64>>>,
    #[serde(rename = "F")]
    pub reaction: ReactionSpec,
    pub z_ref: ZRefSpec,
    pub z0: Vec<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub eps: f64,
    #[serde(default = "default_pieces")]
    pub pieces: usize,
    #[serde(default = "default_n_osc_start")]
    pub n_osc_start: usize,
    #[serde(default = "default_n_osc_max")]
    pub n_osc_max: usize,
    #[serde(default = "default_taper_width")]
    pub taper_width: f64,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example00Config {
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub eps: f64,
    pub amplitude: f64,
    #[serde(default = "default_pieces")]
    pub pieces: usize,
    #[serde(default = "default_n_osc_start")]
    pub n_osc_start: usize,
    #[serde(default = "default_n_osc_max")]
    pub n_osc_max: usize,
    #[serde(default = "default_taper_width")]
    pub taper_width: f64,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    pub seed: u64,
}

impl ReactionSpec {
    pub fn build(&self, n_z: usize) -> Result<qtrack_core::coupled::ReactionMap, String> {
        use qtrack_core::coupled::ReactionMap;
        match self {
            ReactionSpec::Zero => Ok(ReactionMap::Zero),
            ReactionSpec::Linear { matrix } => {
                if matrix.len() != n_z * n_z {
                    return Err("F.linear: matrix size mismatch".into());
                }
                Ok(ReactionMap::Linear(DMatrix::from_row_slice(n_z, n_z, matrix)))
            }
            ReactionSpec::Poly { coeffs } => {
                if coeffs.len() != n_z {
                    return Err("F.poly: one coefficient row per component required".into());
                }
                Ok(ReactionMap::ComponentwisePoly(coeffs.clone()))
            }
        }
    }
}

/// Reads a trajectory-layout CSV (`t, x_0, …`) into a grid and samples.
pub fn read_csv_samples(
    path: &Path,
    dim: usize,
) -> Result<(TimeGrid, Vec<DVector<f64>>), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read '{}': {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty CSV")?;
    if !header.trim_start().starts_with('t') {
        return Err("CSV must start with the trajectory header".into());
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for line in lines {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad CSV cell: {e}"))?;
        if cells.len() != dim + 1 {
            return Err(format!("CSV row has {} columns, expected {}", cells.len(), dim + 1));
        }
        times.push(cells[0]);
        samples.push(DVector::from_vec(cells[1..].to_vec()));
    }
    if samples.len() < 2 {
        return Err("CSV needs at least two rows".into());
    }
    let steps = samples.len() - 1;
    let tau = times[steps];
    let grid = TimeGrid::new(tau, steps).map_err(|e| e.to_string())?;
    for (k, &t) in times.iter().enumerate() {
        if (t - grid.node(k)).abs() > 1e-9 * tau.max(1.0) {
            return Err("CSV time column is not a uniform grid".into());
        }
    }
    Ok((grid, samples))
}
