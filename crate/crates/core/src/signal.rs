//! Time grids, signals, and the metrics of the synthesis pipeline: the
//! relaxation norm, the running-integral operator, square-wave oscillators,
//! tapering to compact support, and smooth surrogates for square waves.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::model::QuadraticSystem;

/// Uniform time grid on `[0, tau]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    tau: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, steps: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(CoreError::InvalidParam(format!("horizon tau = {tau} must be positive")));
        }
        if steps == 0 {
            return Err(CoreError::InvalidParam("grid needs at least one step".into()));
        }
        Ok(TimeGrid { tau, steps })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.tau / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.tau * k as f64 / self.steps as f64
    }

    /// Grid with the same horizon and `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> TimeGrid {
        TimeGrid { tau: self.tau, steps: self.steps * factor }
    }
}

/// Which one-sided limit to take at a discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// One piece of a piecewise wave: `cycles` repetitions of an `m`-phase
/// pattern, each phase holding one constant level vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub phases: Vec<DVector<f64>>,
    pub cycles: usize,
}

impl Piece {
    pub fn constant(v: DVector<f64>) -> Piece {
        Piece { phases: vec![v], cycles: 1 }
    }
}

type AnalyticFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum SignalKind {
    /// Node samples with linear interpolation in between.
    Sampled(Vec<DVector<f64>>),
    /// Equal-length pieces of phase-constant waves; jumps sit on grid nodes.
    Waves(Vec<Piece>),
    /// Closed-form signal, optionally with a closed-form derivative.
    Analytic { value: AnalyticFn, derivative: Option<AnalyticFn> },
}

#[derive(Clone)]
pub struct Signal {
    grid: TimeGrid,
    dim: usize,
    kind: SignalKind,
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            SignalKind::Sampled(_) => "sampled",
            SignalKind::Waves(_) => "waves",
            SignalKind::Analytic { .. } => "analytic",
        };
        write!(f, "Signal({kind}, dim={}, steps={})", self.dim, self.grid.steps())
    }
}

impl Signal {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    pub fn zero(grid: TimeGrid, dim: usize) -> Signal {
        Signal::constant(grid, DVector::zeros(dim))
    }

    pub fn constant(grid: TimeGrid, v: DVector<f64>) -> Signal {
        let dim = v.len();
        Signal { grid, dim, kind: SignalKind::Waves(vec![Piece::constant(v)]) }
    }

    pub fn from_samples(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Signal> {
        if values.len() != grid.steps() + 1 {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {} samples, got {}",
                grid.steps() + 1,
                values.len()
            )));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(CoreError::DimensionMismatch("ragged sample list".into()));
        }
        Ok(Signal { grid, dim, kind: SignalKind::Sampled(values) })
    }

    pub fn analytic(grid: TimeGrid, dim: usize, value: AnalyticFn, derivative: Option<AnalyticFn>) -> Signal {
        Signal { grid, dim, kind: SignalKind::Analytic { value, derivative } }
    }

    /// Piecewise-constant signal over equal pieces; `grid.steps` must be
    /// divisible by the piece count.
    pub fn piecewise_constant(grid: TimeGrid, pieces: Vec<DVector<f64>>) -> Result<Signal> {
        if pieces.is_empty() {
            return Err(CoreError::InvalidParam("need at least one piece".into()));
        }
        let wave_pieces: Vec<Piece> = pieces.into_iter().map(Piece::constant).collect();
        Signal::from_pieces(grid, wave_pieces)
    }

    /// General per-piece wave; checks that every phase boundary lands on a
    /// grid node.
    pub fn from_pieces(grid: TimeGrid, pieces: Vec<Piece>) -> Result<Signal> {
        let p = pieces.len();
        if p == 0 {
            return Err(CoreError::InvalidParam("need at least one piece".into()));
        }
        if grid.steps() % p != 0 {
            return Err(CoreError::Divisibility {
                steps: grid.steps(),
                required: p,
                context: "piece boundaries must sit on grid nodes".into(),
            });
        }
        let steps_per_piece = grid.steps() / p;
        let dim = pieces[0].phases.first().map(|v| v.len()).unwrap_or(0);
        for piece in &pieces {
            let m = piece.phases.len();
            if m == 0 || piece.cycles == 0 {
                return Err(CoreError::InvalidParam("piece needs at least one phase and one cycle".into()));
            }
            if piece.phases.iter().any(|v| v.len() != dim) {
                return Err(CoreError::DimensionMismatch("ragged phase vectors".into()));
            }
            let segments = m * piece.cycles;
            if steps_per_piece % segments != 0 {
                return Err(CoreError::Divisibility {
                    steps: steps_per_piece,
                    required: segments,
                    context: "phase boundaries must sit on grid nodes".into(),
                });
            }
        }
        Ok(Signal { grid, dim, kind: SignalKind::Waves(pieces) })
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        self.value_side(t, Side::Right)
    }

    pub fn value_side(&self, t: f64, side: Side) -> DVector<f64> {
        let tau = self.grid.tau();
        let t = t.clamp(0.0, tau);
        match &self.kind {
            SignalKind::Sampled(values) => {
                let pos = t / self.grid.h();
                let k = (pos.floor() as usize).min(values.len() - 2);
                let frac = pos - k as f64;
                &values[k] * (1.0 - frac) + &values[k + 1] * frac
            }
            SignalKind::Waves(pieces) => {
                let p = pieces.len();
                let piece_len = tau / p as f64;
                let ip = segment_index(t / piece_len, p, side);
                let piece = &pieces[ip];
                let local = t - ip as f64 * piece_len;
                let m = piece.phases.len();
                let segments = m * piece.cycles;
                let phase_len = piece_len / segments as f64;
                let seg = segment_index(local / phase_len, segments, side);
                piece.phases[seg % m].clone()
            }
            SignalKind::Analytic { value, .. } => value(t),
        }
    }

    /// Closed-form derivative, when the representation carries one.
    pub fn derivative(&self, t: f64) -> Option<DVector<f64>> {
        match &self.kind {
            SignalKind::Analytic { derivative: Some(d), .. } => Some(d(t)),
            _ => None,
        }
    }

    pub fn has_derivative(&self) -> bool {
        matches!(&self.kind, SignalKind::Analytic { derivative: Some(_), .. })
    }

    pub fn sample_at_nodes(&self) -> Vec<DVector<f64>> {
        (0..=self.grid.steps()).map(|k| self.value(self.grid.node(k))).collect()
    }

    /// Resamples onto another grid with the same horizon.
    pub fn resample(&self, grid: TimeGrid) -> Result<Signal> {
        if (grid.tau() - self.grid.tau()).abs() > 1e-12 * self.grid.tau() {
            return Err(CoreError::InvalidParam("resample requires matching horizon".into()));
        }
        let values = (0..=grid.steps()).map(|k| self.value(grid.node(k))).collect();
        Signal::from_samples(grid, values)
    }

    /// Cumulative integral `(𝒦v)(t) = ∫₀ᵗ v`, sampled on the grid. Exact for
    /// piecewise-constant kinds (jumps sit on nodes), trapezoid otherwise.
    pub fn running_integral(&self) -> Signal {
        let n = self.grid.steps();
        let h = self.grid.h();
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = DVector::zeros(self.dim);
        out.push(acc.clone());
        match &self.kind {
            SignalKind::Waves(_) => {
                for k in 0..n {
                    // constant on each step interval
                    acc += self.value_side(self.grid.node(k), Side::Right) * h;
                    out.push(acc.clone());
                }
            }
            _ => {
                let mut prev = self.value(0.0);
                for k in 1..=n {
                    let cur = self.value(self.grid.node(k));
                    acc += (&prev + &cur) * (0.5 * h);
                    out.push(acc.clone());
                    prev = cur;
                }
            }
        }
        Signal::from_samples(self.grid, out).expect("length matches by construction")
    }

    /// Relaxation norm `|||v||| = sup_t |∫₀ᵗ v|`, evaluated over grid nodes.
    pub fn relaxation_norm(&self) -> f64 {
        self.running_integral()
            .sample_at_nodes()
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.sample_at_nodes().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `L²` norm by trapezoid quadrature (exact in the piecewise-constant case).
    pub fn l2_norm(&self) -> f64 {
        self.integral_of(|v| v.norm_squared()).sqrt()
    }

    /// `L¹` norm by trapezoid quadrature (exact in the piecewise-constant case).
    pub fn l1_norm(&self) -> f64 {
        self.integral_of(|v| v.norm())
    }

    fn integral_of(&self, weight: impl Fn(&DVector<f64>) -> f64) -> f64 {
        let n = self.grid.steps();
        let h = self.grid.h();
        match &self.kind {
            SignalKind::Waves(_) => (0..n)
                .map(|k| weight(&self.value_side(self.grid.node(k), Side::Right)) * h)
                .sum(),
            _ => {
                let mut acc = 0.0;
                let mut prev = weight(&self.value(0.0));
                for k in 1..=n {
                    let cur = weight(&self.value(self.grid.node(k)));
                    acc += 0.5 * h * (prev + cur);
                    prev = cur;
                }
                acc
            }
        }
    }

    /// Pointwise sum; exact kinds are preserved only through closed forms.
    pub fn add(&self, other: &Signal) -> Result<Signal> {
        if self.dim != other.dim {
            return Err(CoreError::DimensionMismatch("signal dims differ".into()));
        }
        let a = self.clone();
        let b = other.clone();
        let value: AnalyticFn = Arc::new(move |t| a.value(t) + b.value(t));
        let grid = if self.grid.steps() >= other.grid.steps() { self.grid } else { other.grid };
        Ok(Signal::analytic(grid, self.dim, value, None))
    }

    pub fn scale(&self, factor: f64) -> Signal {
        match &self.kind {
            SignalKind::Sampled(values) => Signal {
                grid: self.grid,
                dim: self.dim,
                kind: SignalKind::Sampled(values.iter().map(|v| v * factor).collect()),
            },
            SignalKind::Waves(pieces) => Signal {
                grid: self.grid,
                dim: self.dim,
                kind: SignalKind::Waves(
                    pieces
                        .iter()
                        .map(|p| Piece {
                            phases: p.phases.iter().map(|v| v * factor).collect(),
                            cycles: p.cycles,
                        })
                        .collect(),
                ),
            },
            SignalKind::Analytic { value, derivative } => {
                let v = value.clone();
                let value: AnalyticFn = Arc::new(move |t| v(t) * factor);
                let derivative = derivative.clone().map(|d| {
                    let f: AnalyticFn = Arc::new(move |t| d(t) * factor);
                    f
                });
                Signal { grid: self.grid, dim: self.dim, kind: SignalKind::Analytic { value, derivative } }
            }
        }
    }

    /// Left-multiplies every value by a matrix (maps a `U`-valued signal to
    /// `Bu`, etc.). Exact for sampled and wave kinds.
    pub fn map_matrix(&self, m: &nalgebra::DMatrix<f64>) -> Result<Signal> {
        if m.ncols() != self.dim {
            return Err(CoreError::DimensionMismatch(format!(
                "matrix is {}x{}, signal dim {}",
                m.nrows(),
                m.ncols(),
                self.dim
            )));
        }
        let dim = m.nrows();
        let kind = match &self.kind {
            SignalKind::Sampled(values) => SignalKind::Sampled(values.iter().map(|v| m * v).collect()),
            SignalKind::Waves(pieces) => SignalKind::Waves(
                pieces
                    .iter()
                    .map(|p| Piece { phases: p.phases.iter().map(|v| m * v).collect(), cycles: p.cycles })
                    .collect(),
            ),
            SignalKind::Analytic { value, derivative } => {
                let mm = m.clone();
                let v = value.clone();
                let value: AnalyticFn = Arc::new(move |t| &mm * v(t));
                let derivative = derivative.clone().map(|d| {
                    let mm = m.clone();
                    let f: AnalyticFn = Arc::new(move |t| &mm * d(t));
                    f
                });
                SignalKind::Analytic { value, derivative }
            }
        };
        Ok(Signal { grid: self.grid, dim, kind })
    }

    pub fn sub_sampled(&self, other: &Signal) -> Result<Signal> {
        Ok(self.add(&other.scale(-1.0))?)
    }
}

/// Segment index of `pos = t / segment_len` among `count` segments, with
/// one-sided handling of node-exact boundaries.
fn segment_index(pos: f64, count: usize, side: Side) -> usize {
    let rounded = pos.round();
    let idx = if (pos - rounded).abs() < 1e-9 {
        match side {
            Side::Right => rounded as isize,
            Side::Left => rounded as isize - 1,
        }
    } else {
        pos.floor() as isize
    };
    idx.clamp(0, count as isize - 1) as usize
}

/// The `m = 2p` phase square wave of the oscillatory reduction: phase levels
/// `√(m/2)·ξᵢ` followed by their negatives, `n` cycles over the horizon.
/// Per-period mean is zero.
pub fn square_wave(xis: &[DVector<f64>], n: usize, grid: TimeGrid) -> Result<Signal> {
    let p = xis.len();
    if p == 0 || n == 0 {
        return Err(CoreError::InvalidParam("square wave needs p >= 1 and n >= 1".into()));
    }
    let m = 2 * p;
    if grid.steps() % (m * n) != 0 {
        return Err(CoreError::Divisibility {
            steps: grid.steps(),
            required: m * n,
            context: "square-wave phases must align with grid nodes".into(),
        });
    }
    let amp = (m as f64 / 2.0).sqrt();
    let mut phases: Vec<DVector<f64>> = xis.iter().map(|xi| xi * amp).collect();
    phases.extend(xis.iter().map(|xi| xi * (-amp)));
    Signal::from_pieces(grid, vec![Piece { phases, cycles: n }])
}

/// Smooth ramp built from `exp(-1/s)`: 0 for `s <= 0`, 1 for `s >= 1`, C-infinity.
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        a / (a + b)
    }
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_deriv(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        let denom = (a + b) * (a + b);
        a * b * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s))) / denom
    }
}

/// Sine-corrected ramp used inside jump windows of the wave surrogate.
///
/// With weight `g(s) = s + a·sin(2πs) + b·sin(4πs)` on the right phase (and
/// `1 − g` on the left), the blended profile reproduces both the first moment
/// `∫ζ` and the second moment `∫ζ⊗ζ` of the exact jump over the window, for
/// any pair of adjacent phase values. This removes the secular quadratic
/// defect that a plain monotone ramp would inject into the drift at every
/// phase switch, so the surrogate error decays with the window width squared
/// instead of accumulating coherently across windows. The coefficients solve
/// `1 + 2πa + 4πb = 0` (C¹ junctions, `g′ = 0` at both edges) together with
/// `∫g² = 1/2` (second-moment match; the first moment `∫g = 1/2` holds for
/// any sine correction).
fn moment_ramp(s: f64) -> f64 {
    use std::f64::consts::PI;
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s + MOMENT_RAMP_A * (2.0 * PI * s).sin() + MOMENT_RAMP_B * (4.0 * PI * s).sin()
    }
}

fn moment_ramp_deriv(s: f64) -> f64 {
    use std::f64::consts::PI;
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        1.0 + MOMENT_RAMP_A * 2.0 * PI * (2.0 * PI * s).cos()
            + MOMENT_RAMP_B * 4.0 * PI * (4.0 * PI * s).cos()
    }
}

const MOMENT_RAMP_A: f64 = -0.357_242_836_402_426_9;
const MOMENT_RAMP_B: f64 = 0.099_043_946_655_265_8;

fn bump_profile(t: f64, tau: f64, width: f64) -> f64 {
    let w = width * tau;
    smoothstep(t / w) * smoothstep((tau - t) / w)
}

fn bump_profile_deriv(t: f64, tau: f64, width: f64) -> f64 {
    let w = width * tau;
    smoothstep_deriv(t / w) / w * smoothstep((tau - t) / w)
        - smoothstep(t / w) * smoothstep_deriv((tau - t) / w) / w
}

/// Multiplies a signal by a smooth bump that vanishes at `t = 0` and `t = τ`
/// and equals one on `[wτ, (1−w)τ]`. The result carries a closed-form
/// derivative when the input does.
pub fn taper_to_compact_support(zeta: &Signal, taper_width: f64) -> Result<Signal> {
    if !(taper_width > 0.0 && taper_width < 0.25) {
        return Err(CoreError::InvalidParam(format!(
            "taper width {taper_width} must lie in (0, 1/4)"
        )));
    }
    let tau = zeta.grid().tau();
    let inner = zeta.clone();
    let value: AnalyticFn = Arc::new(move |t| {
        let b = bump_profile(t, tau, taper_width);
        if b == 0.0 {
            DVector::zeros(inner.dim())
        } else {
            inner.value(t) * b
        }
    });
    let derivative = if zeta.has_derivative() {
        let inner = zeta.clone();
        let d: AnalyticFn = Arc::new(move |t| {
            let b = bump_profile(t, tau, taper_width);
            let db = bump_profile_deriv(t, tau, taper_width);
            let v = inner.value(t);
            let dv = inner.derivative(t).expect("checked above");
            v * db + dv * b
        });
        Some(d)
    } else {
        None
    };
    Ok(Signal::analytic(zeta.grid(), zeta.dim(), value, derivative))
}

struct Jump {
    t: f64,
    left: DVector<f64>,
    right: DVector<f64>,
    width: f64,
}

/// Replaces every jump of a wave signal by a moment-matched ramp transition.
/// The per-jump window is a fixed fraction of the oscillation period; since
/// the ramp reproduces the first and second moments of the exact jump, the
/// surrogate error decays with the window width squared rather than the
/// window measure. Returns a closed-form signal with derivative.
pub fn smooth_wave_surrogate(wave: &Signal, window_divisor: f64) -> Result<Signal> {
    let pieces = match wave.kind() {
        SignalKind::Waves(p) => p.clone(),
        _ => return Err(CoreError::InvalidParam("smooth surrogate applies to wave signals".into())),
    };
    if !(window_divisor > 1.0) {
        return Err(CoreError::InvalidParam("window divisor must exceed 1".into()));
    }
    let grid = wave.grid();
    let tau = grid.tau();
    let np = pieces.len();
    let piece_len = tau / np as f64;

    // enumerate jump instants with one-sided values and per-jump windows
    let mut jumps: Vec<Jump> = Vec::new();
    let mut boundaries: Vec<(f64, f64)> = Vec::new(); // (time, local window)
    for (ip, piece) in pieces.iter().enumerate() {
        let m = piece.phases.len();
        let segments = m * piece.cycles;
        let seg_len = piece_len / segments as f64;
        let period = piece_len / piece.cycles as f64;
        let window = (period / window_divisor)
            .max(4.0 * grid.h())
            .min(0.9 * seg_len);
        let start = ip as f64 * piece_len;
        for s in 0..=segments {
            let t = start + s as f64 * seg_len;
            boundaries.push((t, window));
        }
    }
    boundaries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    boundaries.dedup_by(|a, b| {
        if (a.0 - b.0).abs() < 1e-12 * tau {
            b.1 = b.1.min(a.1);
            true
        } else {
            false
        }
    });
    for &(t, window) in &boundaries {
        if t <= 1e-12 * tau || t >= tau * (1.0 - 1e-12) {
            continue; // the wave does not jump at the horizon ends
        }
        let left = wave.value_side(t, Side::Left);
        let right = wave.value_side(t, Side::Right);
        if (&left - &right).norm() > 0.0 {
            jumps.push(Jump { t, left, right, width: window });
        }
    }
    let jumps = Arc::new(jumps);
    let base = wave.clone();

    let locate = |jumps: &[Jump], t: f64| -> Option<usize> {
        // index of the jump whose window contains t, if any
        let idx = jumps.partition_point(|j| j.t + j.width / 2.0 < t);
        if idx < jumps.len() && (jumps[idx].t - t).abs() <= jumps[idx].width / 2.0 {
            Some(idx)
        } else {
            None
        }
    };

    let j1 = jumps.clone();
    let b1 = base.clone();
    let value: AnalyticFn = Arc::new(move |t| match locate(&j1, t) {
        Some(i) => {
            let j = &j1[i];
            let s = (t - (j.t - j.width / 2.0)) / j.width;
            &j.left + (&j.right - &j.left) * moment_ramp(s)
        }
        None => b1.value(t),
    });
    let j2 = jumps.clone();
    let dim = wave.dim();
    let derivative: AnalyticFn = Arc::new(move |t| match locate(&j2, t) {
        Some(i) => {
            let j = &j2[i];
            let s = (t - (j.t - j.width / 2.0)) / j.width;
            (&j.right - &j.left) * (moment_ramp_deriv(s) / j.width)
        }
        None => DVector::zeros(dim),
    });
    Ok(Signal::analytic(grid, dim, value, Some(derivative)))
}

/// Measures `‖𝒦 h_n‖_sup` for the averaging remainder
/// `h_n = f(w₁+ζ_n) − (1/m)Σᵢ f(w₁+ζⁱ) + Aζ_n` of the oscillatory reduction,
/// with `ζ_n` the `n`-cycle square wave built from `xis`.
pub fn lemma52_probe(
    sys: &QuadraticSystem,
    w1: &Signal,
    xis: &[DVector<f64>],
    n: usize,
) -> Result<f64> {
    let grid = w1.grid();
    let zeta = square_wave(xis, n, grid)?;
    let p = xis.len();
    let m = 2 * p;
    let amp = (m as f64 / 2.0).sqrt();
    let mut levels: Vec<DVector<f64>> = xis.iter().map(|xi| xi * amp).collect();
    levels.extend(xis.iter().map(|xi| xi * (-amp)));

    let h_at = |t: f64, side: Side| -> DVector<f64> {
        let w = w1.value(t);
        let z = zeta.value_side(t, side);
        let mut avg = DVector::zeros(sys.n_x());
        for level in &levels {
            avg += sys.eval_f(&(&w + level));
        }
        avg /= m as f64;
        sys.eval_f(&(&w + &z)) - avg + sys.a() * z
    };

    // side-aware trapezoid so phase jumps (which sit on nodes) cost nothing
    let nsteps = grid.steps();
    let h = grid.h();
    let mut acc = DVector::zeros(sys.n_x());
    let mut sup: f64 = 0.0;
    for k in 0..nsteps {
        let a = h_at(grid.node(k), Side::Right);
        let b = h_at(grid.node(k + 1), Side::Left);
        acc += (a + b) * (0.5 * h);
        sup = sup.max(acc.norm());
    }
    Ok(sup)
}
