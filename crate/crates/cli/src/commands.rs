//! Command implementations. Each runner consumes a parsed config, writes its
//! artifacts under the output directory, and returns the report value that
//! was serialized (for tests).

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;

use qtrack_core::coupled::{plan_reference, track_coupled, CoupledSystem};
use qtrack_core::error::CoreError;
use qtrack_core::integrator::{signal_to_csv, simulate_closed_loop, Trajectory};
use qtrack_core::linear::{
    apply_adjoint, apply_forward_map, extended_weak_adjoint, kernel_witness, onto_check,
    LinearTriple,
};
use qtrack_core::model::net_system;
use qtrack_core::saturation::{
    assumption1_to_json, chain_to_json, check_assumption1, saturation_chain,
};
use qtrack_core::signal::{Signal, TimeGrid};
use qtrack_core::synthesis::{
    synthesize_tracking_control, SynthesisError, SynthesisParams, SynthesisReport, TargetCurve,
};

use crate::config::*;

/// Failure modes mapped onto the exit-code contract: 1 config, 2 budget,
/// 3 blow-up.
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Budget(String),
    BlowUp(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Budget(_) => 2,
            RunError::BlowUp(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Budget(m) | RunError::BlowUp(m) => m,
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BlowUp { .. } => RunError::BlowUp(e.to_string()),
            CoreError::BudgetExhausted { .. } => RunError::Budget(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<String> for RunError {
    fn from(m: String) -> Self {
        RunError::Config(m)
    }
}

pub type RunResult = Result<Value, RunError>;

fn meta(config_text: &str) -> Value {
    let hash = Sha256::digest(config_text.as_bytes());
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": format!("{hash:x}"),
    })
}

fn write_report(out: &Path, report: &Value) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| RunError::Config(format!("report serialization: {e}")))?;
    std::fs::write(out.join("report.json"), text + "\n")
        .map_err(|e| RunError::Config(format!("cannot write report: {e}")))?;
    Ok(())
}

fn write_csv(out: &Path, name: &str, text: String) -> Result<(), RunError> {
    std::fs::write(out.join(name), text)
        .map_err(|e| RunError::Config(format!("cannot write {name}: {e}")))
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, RunError> {
    serde_json::from_str(text).map_err(|e| RunError::Config(format!("config parse error: {e}")))
}

fn synthesis_report_json(report: &SynthesisReport) -> Value {
    json!({
        "relaxation_error": report.relaxation_error,
        "sup_error": report.sup_error,
        "l2_error": report.l2_error,
        "endpoint_error": report.endpoint_error,
        "range_residual": report.range_residual,
        "eps": report.eps,
        "grid_steps": report.validation_grid.steps(),
        "per_level": report.per_level.iter().map(|l| json!({
            "level": l.level,
            "n_osc": l.n_osc,
            "error": l.error,
        })).collect::<Vec<_>>(),
    })
}

fn map_synthesis_error(e: SynthesisError) -> RunError {
    match e {
        SynthesisError::Core(c) => c.into(),
        SynthesisError::BudgetExhausted { report } => RunError::Budget(format!(
            "oscillation budget exhausted (achieved {:.3e} vs eps {:.3e})",
            report.relaxation_error + report.endpoint_error,
            report.eps
        )),
    }
}

pub fn run_saturate(config_text: &str, base: &Path, out: &Path) -> RunResult {
    let cfg: SaturateConfig = parse(config_text)?;
    let sys = cfg.system.build(base)?;
    let chain = saturation_chain(&sys, cfg.max_depth, cfg.p_max, cfg.attempts, cfg.seed)?;
    let mut report = json!({
        "meta": meta(config_text),
        "chain": chain_to_json(&chain),
    });
    if cfg.check_assumption1 {
        let a1 = check_assumption1(&sys, cfg.attempts, cfg.seed)?;
        report["assumption1"] = assumption1_to_json(&a1);
    }
    write_report(out, &report)?;
    Ok(report)
}

fn build_target(
    spec: &TargetSpec,
    dim: usize,
    grid: TimeGrid,
    base: &Path,
) -> Result<TargetCurve, RunError> {
    spec.build(dim, grid, base).map_err(RunError::Config)
}

pub fn run_synthesize(config_text: &str, base: &Path, out: &Path) -> RunResult {
    let cfg: SynthesizeConfig = parse(config_text)?;
    let sys = cfg.system.build(base)?;
    let grid = TimeGrid::new(cfg.tau, cfg.grid_steps)?;
    let target = build_target(&cfg.target, sys.n_x(), grid, base)?;
    let chain = saturation_chain(&sys, sys.n_x().max(2), 4, 64, cfg.seed)?;
    let params = SynthesisParams {
        pieces: cfg.pieces,
        n_osc_start: cfg.n_osc_start,
        n_osc_max: cfg.n_osc_max,
        taper_width: cfg.taper_width,
        grid,
    };
    let (report, budget_err) =
        match synthesize_tracking_control(&sys, &chain, &target, cfg.eps, &params) {
            Ok(r) => (r, None),
            Err(SynthesisError::BudgetExhausted { report }) => {
                let msg = format!(
                    "oscillation budget exhausted (achieved {:.3e} vs eps {:.3e})",
                    report.relaxation_error + report.endpoint_error,
                    report.eps
                );
                (*report, Some(RunError::Budget(msg)))
            }
            Err(e) => return Err(map_synthesis_error(e)),
        };
    let x = simulate_closed_loop(&sys, target.initial(), &report.control, report.validation_grid)?;
    write_csv(out, "control.csv", signal_to_csv(&report.control))?;
    write_csv(out, "trajectory.csv", x.to_csv())?;
    let doc = json!({
        "meta": meta(config_text),
        "saturated": chain.saturated,
        "n_X": chain.n_big_x,
        "synthesis": synthesis_report_json(&report),
        "succeeded": budget_err.is_none(),
    });
    write_report(out, &doc)?;
    match budget_err {
        Some(e) => Err(e),
        None => Ok(doc),
    }
}

fn build_control(
    spec: &ControlSpec,
    dim: usize,
    grid: TimeGrid,
    base: &Path,
) -> Result<Signal, RunError> {
    match spec {
        ControlSpec::Zero => Ok(Signal::zero(grid, dim)),
        ControlSpec::Constant { value } => {
            if value.len() != dim {
                return Err(RunError::Config("control value dimension mismatch".into()));
            }
            Ok(Signal::constant(grid, DVector::from_vec(value.clone())))
        }
        ControlSpec::Wave { phases, cycles } => {
            let vecs: Vec<DVector<f64>> =
                phases.iter().map(|p| DVector::from_vec(p.clone())).collect();
            if vecs.iter().any(|v| v.len() != dim) {
                return Err(RunError::Config("wave phase dimension mismatch".into()));
            }
            Signal::from_pieces(
                grid,
                vec![qtrack_core::signal::Piece { phases: vecs, cycles: *cycles }],
            )
            .map_err(RunError::from)
        }
        ControlSpec::Samples { file } => {
            let (sgrid, samples) = read_csv_samples(&base.join(file), dim)?;
            Ok(Signal::from_samples(sgrid, samples)?)
        }
    }
}

pub fn run_simulate(config_text: &str, base: &Path, out: &Path) -> RunResult {
    let cfg: SimulateConfig = parse(config_text)?;
    let sys = cfg.system.build(base)?;
    if cfg.x0.len() != sys.n_x() {
        return Err(RunError::Config("x0 dimension mismatch".into()));
    }
    let grid = TimeGrid::new(cfg.tau, cfg.grid_steps)?;
    let u = build_control(&cfg.control, sys.n_u(), grid, base)?;
    let x = simulate_closed_loop(&sys, DVector::from_vec(cfg.x0.clone()), &u, grid)?;
    write_csv(out, "trajectory.csv", x.to_csv())?;
    let final_state: Vec<f64> = x.final_state().iter().copied().collect();
    let report = json!({
        "meta": meta(config_text),
        "final_state": final_state,
        "sup_norm": x.as_signal().sup_norm(),
    });
    write_report(out, &report)?;
    Ok(report)
}

pub fn run_linear_demo(config_text: &str, _base: &Path, out: &Path) -> RunResult {
    let cfg: LinearDemoConfig = parse(config_text)?;
    let (a, b) = cfg.matrices()?;
    let grid = TimeGrid::new(cfg.tau, cfg.grid_steps)?;
    let lin = LinearTriple::full_state(a.clone(), b.clone())?;
    let (onto, null) = onto_check(&b)?;

    let mut witness_max_residual = 0.0_f64;
    let mut weak_witness_max_residual = 0.0_f64;
    if !onto {
        // one eta per direction missing from Range(B)
        for eta in null.vectors() {
            let g = kernel_witness(&lin, eta, grid)?;
            let psi = apply_adjoint(&lin, &g, grid)?;
            witness_max_residual = witness_max_residual.max(psi.sup_norm());
            let weak = extended_weak_adjoint(&lin, &g, grid)?;
            weak_witness_max_residual = weak_witness_max_residual.max(weak.sup_norm());
        }
    }

    // duality spot-check with a seeded smooth pair
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let smooth = |rng: &mut rand_chacha::ChaCha8Rng, dim: usize| -> Signal {
        let coeff: Vec<(DVector<f64>, DVector<f64>)> = (1..=3)
            .map(|_| {
                (
                    DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)),
                    DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let tau = grid.tau();
        Signal::analytic(
            grid,
            dim,
            Arc::new(move |t: f64| {
                let mut v = DVector::zeros(dim);
                for (k, (c, s)) in coeff.iter().enumerate() {
                    let w = 2.0 * std::f64::consts::PI * (k + 1) as f64 / tau;
                    v += c * (w * t).cos() + s * (w * t).sin();
                }
                v
            }),
            None,
        )
    };
    let u = smooth(&mut rng, cfg.n_u);
    let g = smooth(&mut rng, cfg.n_x);
    let fu = apply_forward_map(&lin, &u, grid)?;
    let psig = apply_adjoint(&lin, &g, grid)?;
    let inner = |x: &Signal, y: &Signal| -> f64 {
        let h = grid.h();
        let mut acc = 0.0;
        for k in 0..=grid.steps() {
            let w = if k == 0 || k == grid.steps() { 0.5 } else { 1.0 };
            acc += w * h * x.value(grid.node(k)).dot(&y.value(grid.node(k)));
        }
        acc
    };
    let scale = (u.l2_norm() * g.l2_norm()).max(1e-30);
    let duality_residual = (inner(&fu, &g) - inner(&u, &psig)).abs() / scale;

    let report = json!({
        "meta": meta(config_text),
        "onto": onto,
        "witness_max_residual": witness_max_residual,
        "weak_witness_max_residual": weak_witness_max_residual,
        "duality_residual": duality_residual,
    });
    write_report(out, &report)?;
    Ok(report)
}

pub fn run_coupled_demo(config_text: &str, base: &Path, out: &Path) -> RunResult {
    let cfg: CoupledDemoConfig = parse(config_text)?;
    let driver = cfg.system.build(base)?;
    let reaction = cfg.reaction.build(cfg.n_z)?;
    let coupled = match &cfg.gamma_tilde {
        None => CoupledSystem::componentwise(driver, reaction)?,
        Some(mats) => {
            if mats.len() != cfg.n_z {
                return Err(RunError::Config("Gamma_tilde: one matrix per z-component".into()));
            }
            let n_x = driver.n_x();
            let parsed: Result<Vec<DMatrix<f64>>, RunError> = mats
                .iter()
                .map(|m| {
                    if m.len() != cfg.n_z * n_x {
                        Err(RunError::Config("Gamma_tilde: matrix size mismatch".into()))
                    } else {
                        Ok(DMatrix::from_row_slice(cfg.n_z, n_x, m))
                    }
                })
                .collect();
            CoupledSystem::new(driver, parsed?, reaction)?
        }
    };
    if cfg.z0.len() != cfg.n_z {
        return Err(RunError::Config("z0 dimension mismatch".into()));
    }
    let grid = TimeGrid::new(cfg.tau, cfg.grid_steps)?;
    let z_ref = match &cfg.z_ref {
        ZRefSpec::Constant { value } => {
            if value.len() != cfg.n_z {
                return Err(RunError::Config("z_ref dimension mismatch".into()));
            }
            let v = DVector::from_vec(value.clone());
            Trajectory::from_samples(grid, vec![v; grid.steps() + 1])?
        }
        ZRefSpec::ExpDecay { scale, rate } => {
            if scale.len() != cfg.n_z {
                return Err(RunError::Config("z_ref dimension mismatch".into()));
            }
            let s = DVector::from_vec(scale.clone());
            let samples =
                (0..=grid.steps()).map(|k| &s * (-rate * grid.node(k)).exp()).collect();
            Trajectory::from_samples(grid, samples)?
        }
        ZRefSpec::Samples { file } => {
            let (sgrid, samples) = read_csv_samples(&base.join(file), cfg.n_z)?;
            Trajectory::from_samples(sgrid, samples)?
        }
    };
    let reference = plan_reference(&coupled, &z_ref, cfg.eps)?;
    let chain = saturation_chain(&coupled.driver().clone(), 4, 4, 64, cfg.seed)?;
    let params = SynthesisParams {
        pieces: cfg.pieces,
        n_osc_start: cfg.n_osc_start,
        n_osc_max: cfg.n_osc_max,
        taper_width: cfg.taper_width,
        grid,
    };
    let report = track_coupled(&coupled, &chain, &reference, cfg.eps, &params)?;
    write_csv(out, "z.csv", report.z.to_csv())?;
    write_csv(out, "x.csv", report.x.to_csv())?;
    write_csv(out, "z_bar.csv", reference.z_bar.to_csv())?;
    let doc = json!({
        "meta": meta(config_text),
        "sup_z_error": report.sup_z_error,
        "endpoint_x_error": report.endpoint_x_error,
        "relaxation_x_error": report.relaxation_x_error,
        "eps_x_used": report.eps_x_used,
        "synthesis": synthesis_report_json(&report.synthesis),
    });
    write_report(out, &doc)?;
    Ok(doc)
}

pub fn run_example00_demo(config_text: &str, _base: &Path, out: &Path) -> RunResult {
    let cfg: Example00Config = parse(config_text)?;
    let sys = net_system();
    let grid = TimeGrid::new(cfg.tau, cfg.grid_steps)?;
    let tau = cfg.tau;
    let amp = cfg.amplitude;
    let w = std::f64::consts::PI / tau;
    // smooth bump of the given amplitude in the directly actuated first
    // component; the other components have zero targets
    let value = Arc::new(move |t: f64| {
        DVector::from_vec(vec![amp * (w * t).sin().powi(2), 0.0, 0.0])
    });
    let deriv = Arc::new(move |t: f64| {
        DVector::from_vec(vec![amp * w * (2.0 * w * t).sin(), 0.0, 0.0])
    });
    let target = TargetCurve::closed_form(grid, 3, value, deriv);
    let chain = saturation_chain(&sys, 4, 4, 64, cfg.seed)?;
    let params = SynthesisParams {
        pieces: cfg.pieces,
        n_osc_start: cfg.n_osc_start,
        n_osc_max: cfg.n_osc_max,
        taper_width: cfg.taper_width,
        grid,
    };
    let report = synthesize_tracking_control(&sys, &chain, &target, cfg.eps, &params)
        .map_err(map_synthesis_error)?;
    let x = simulate_closed_loop(&sys, target.initial(), &report.control, report.validation_grid)?;
    // componentwise L2 errors against the target curve
    let vgrid = report.validation_grid;
    let h = vgrid.h();
    let mut l2 = vec![0.0_f64; 3];
    for k in 0..=vgrid.steps() {
        let wgt = if k == 0 || k == vgrid.steps() { 0.5 } else { 1.0 };
        let d = x.state(k) - target.value(vgrid.node(k));
        for c in 0..3 {
            l2[c] += wgt * h * d[c] * d[c];
        }
    }
    let l2: Vec<f64> = l2.into_iter().map(f64::sqrt).collect();
    write_csv(out, "trajectory.csv", x.to_csv())?;
    write_csv(out, "control.csv", signal_to_csv(&report.control))?;
    let doc = json!({
        "meta": meta(config_text),
        "weak_error": report.relaxation_error + report.endpoint_error,
        "synthesis": synthesis_report_json(&report),
        "l2_per_component": l2,
        "l2_x2": l2[2],
    });
    write_report(out, &doc)?;
    Ok(doc)
}

pub fn run_command(
    command: &str,
    config_text: &str,
    base: &Path,
    out: &Path,
) -> RunResult {
    std::fs::create_dir_all(out)
        .map_err(|e| RunError::Config(format!("cannot create output dir: {e}")))?;
    match command {
        "saturate" => run_saturate(config_text, base, out),
        "synthesize" => run_synthesize(config_text, base, out),
        "simulate" => run_simulate(config_text, base, out),
        "linear-demo" => run_linear_demo(config_text, base, out),
        "coupled-demo" => run_coupled_demo(config_text, base, out),
        "example00-demo" => run_example00_demo(config_text, base, out),
        other => Err(RunError::Config(format!("unknown command '{other}'"))),
    }
}
