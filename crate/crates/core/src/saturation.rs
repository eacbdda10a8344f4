//! Subspace growth by decomposition certificates: the certified
//! under-approximation of the saturation step, the saturation chain, and the
//! direct single-step controllability check on canonical directions.
//!
//! A decomposition certificate witnesses `γ = ξ₀ − Σᵢ f(ξᵢ)` with all ξ in a
//! given source subspace. Certificates are found by multi-start Gauss–Newton
//! with a deterministic seeded generator, so identical seeds reproduce
//! identical chains bit-for-bit.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{CoreError, Result};
use crate::model::QuadraticSystem;
use crate::subspace::{column_span, SubspaceBasis, DEFAULT_TOL};

/// Residual tolerance for accepting a certificate.
pub const CERT_TOL: f64 = 1e-9;
/// Default number of summands `p` tried in a decomposition.
pub const DEFAULT_P_MAX: usize = 4;
/// Default number of random restarts per (direction, p).
pub const DEFAULT_ATTEMPTS: usize = 64;
/// Coordinate box for the Gauss–Newton search. Certificates with huge
/// amplitudes are useless downstream (oscillation amplitudes scale with √|ξ|),
/// so the search space is bounded; the infimum over the box is what failure
/// reports quote as the residual floor.
pub const SEARCH_BOX_RADIUS: f64 = 2.5;

/// Witness of `γ = ξ₀ − Σᵢ f(ξᵢ)` with `ξ₀, ξᵢ` in a source subspace.
#[derive(Debug, Clone)]
pub struct DecompositionCertificate {
    pub gamma: DVector<f64>,
    pub xi0: DVector<f64>,
    pub xis: Vec<DVector<f64>>,
    pub residual: f64,
}

impl DecompositionCertificate {
    /// Recomputes `|γ − ξ₀ + Σ f(ξᵢ)|` from scratch.
    pub fn recompute_residual(&self, sys: &QuadraticSystem) -> f64 {
        let mut r = &self.gamma - &self.xi0;
        for xi in &self.xis {
            r += sys.eval_f(xi);
        }
        r.norm()
    }

    pub fn is_valid(&self, sys: &QuadraticSystem, source: &SubspaceBasis) -> bool {
        self.recompute_residual(sys) <= CERT_TOL * (1.0 + self.gamma.norm())
            && source.contains(&self.xi0).unwrap_or(false)
            && self.xis.iter().all(|xi| source.contains(xi).unwrap_or(false))
    }
}

/// Outcome of a certificate search. Absence of a certificate is data, not an
/// error: the search cannot prove nonexistence, only exhaustion of its budget.
#[derive(Debug, Clone)]
pub enum Representable {
    Found(DecompositionCertificate),
    NotFound { best_residual: f64 },
}

impl Representable {
    pub fn found(&self) -> Option<&DecompositionCertificate> {
        match self {
            Representable::Found(c) => Some(c),
            Representable::NotFound { .. } => None,
        }
    }
}

/// Jacobian of `f` at `x`: row `k` is `2 (Γₖ x)ᵀ`.
fn jacobian_f(sys: &QuadraticSystem, x: &DVector<f64>) -> DMatrix<f64> {
    let n = sys.n_x();
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let row = sys.gamma_component(k) * x * 2.0;
        j.row_mut(k).copy_from(&row.transpose());
    }
    j
}

/// Damped Gauss–Newton over box-clamped parameters. `residual` maps the
/// parameter vector to the residual vector, `jac` to its Jacobian.
fn gauss_newton<R, J>(
    theta0: DVector<f64>,
    residual: R,
    jac: J,
    target: f64,
) -> (DVector<f64>, f64)
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let clamp = |v: &mut DVector<f64>| {
        for x in v.iter_mut() {
            *x = x.clamp(-SEARCH_BOX_RADIUS, SEARCH_BOX_RADIUS);
        }
    };
    let mut theta = theta0;
    clamp(&mut theta);
    let mut r = residual(&theta);
    let mut cost = r.norm();
    let mut lambda = 1e-3;
    for _ in 0..80 {
        if cost <= 0.5 * target {
            break;
        }
        let j = jac(&theta);
        let jt = j.transpose();
        let mut normal = &jt * &j;
        let grad = &jt * &r;
        for i in 0..normal.nrows() {
            normal[(i, i)] += lambda;
        }
        let step = match normal.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => break,
        };
        let mut trial = &theta - &step;
        clamp(&mut trial);
        let tr = residual(&trial);
        let tcost = tr.norm();
        if tcost < cost {
            theta = trial;
            r = tr;
            if (cost - tcost) < 1e-15 * (1.0 + cost) {
                cost = tcost;
                break;
            }
            cost = tcost;
            lambda = (lambda * 0.3).max(1e-12);
        } else {
            lambda *= 10.0;
            if lambda > 1e8 {
                break;
            }
        }
    }
    (theta, cost)
}

/// Searches for a decomposition certificate of `gamma` over the source
/// subspace, sweeping `p = 0..=p_max` and taking the first success.
pub fn representable(
    sys: &QuadraticSystem,
    source: &SubspaceBasis,
    gamma: &DVector<f64>,
    p_max: usize,
    attempts: usize,
    seed: u64,
) -> Result<Representable> {
    if gamma.len() != sys.n_x() {
        return Err(CoreError::DimensionMismatch("representable: gamma dimension".into()));
    }
    if !gamma.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite("representable: gamma".into()));
    }
    let tol = CERT_TOL * (1.0 + gamma.norm());
    let d = source.dim();

    // p = 0 is pure projection
    let proj = source.project(gamma);
    let mut best_residual = (gamma - &proj).norm();
    if best_residual <= tol {
        return Ok(Representable::Found(DecompositionCertificate {
            gamma: gamma.clone(),
            xi0: proj,
            xis: Vec::new(),
            residual: best_residual,
        }));
    }
    if d == 0 {
        return Ok(Representable::NotFound { best_residual });
    }

    let basis_mat = source.as_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in 1..=p_max {
        let nvars = d * (p + 1);
        let unpack = |theta: &DVector<f64>| -> (DVector<f64>, Vec<DVector<f64>>) {
            let xi0 = &basis_mat * theta.rows(0, d).into_owned();
            let xis = (0..p)
                .map(|i| &basis_mat * theta.rows(d * (i + 1), d).into_owned())
                .collect();
            (xi0, xis)
        };
        let res_fn = |theta: &DVector<f64>| -> DVector<f64> {
            let (xi0, xis) = unpack(theta);
            let mut r = gamma - xi0;
            for xi in &xis {
                r += sys.eval_f(xi);
            }
            r
        };
        let jac_fn = |theta: &DVector<f64>| -> DMatrix<f64> {
            let (_, xis) = unpack(theta);
            let mut j = DMatrix::zeros(sys.n_x(), nvars);
            j.columns_mut(0, d).copy_from(&(-&basis_mat));
            for (i, xi) in xis.iter().enumerate() {
                let block = jacobian_f(sys, xi) * &basis_mat;
                j.columns_mut(d * (i + 1), d).copy_from(&block);
            }
            j
        };
        for _ in 0..attempts {
            let theta0 = DVector::from_fn(nvars, |_, _| rng.gen_range(-1.5..1.5));
            let (theta, cost) = gauss_newton(theta0, res_fn, jac_fn, tol);
            best_residual = best_residual.min(cost);
            if cost <= tol {
                let (xi0, xis) = unpack(&theta);
                return Ok(Representable::Found(DecompositionCertificate {
                    gamma: gamma.clone(),
                    xi0,
                    xis,
                    residual: cost,
                }));
            }
        }
    }
    Ok(Representable::NotFound { best_residual })
}

/// Two-sided certificates for one admitted growth direction.
#[derive(Debug, Clone)]
pub struct CertificatePair {
    pub direction: DVector<f64>,
    pub plus: DecompositionCertificate,
    pub minus: DecompositionCertificate,
}

fn trivial_pair(direction: &DVector<f64>) -> CertificatePair {
    let cert = |sign: f64| DecompositionCertificate {
        gamma: direction * sign,
        xi0: direction * sign,
        xis: Vec::new(),
        residual: 0.0,
    };
    CertificatePair { direction: direction.clone(), plus: cert(1.0), minus: cert(-1.0) }
}

fn subseed(seed: u64, counter: u64) -> u64 {
    seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One growth step: returns a certified under-approximation of the grown
/// subspace together with certificates for every admitted basis vector.
/// Candidates are the source itself plus all polarizations of basis pairs; a
/// candidate is admitted only if both `+g` and `−g` carry certificates.
pub fn grow_subspace(
    sys: &QuadraticSystem,
    e: &SubspaceBasis,
    p_max: usize,
    attempts: usize,
    seed: u64,
) -> Result<(SubspaceBasis, Vec<CertificatePair>)> {
    let mut grown = e.clone();
    let mut certs: Vec<CertificatePair> = e.vectors().iter().map(trivial_pair).collect();
    let mut counter = 0u64;
    let d = e.dim();
    for i in 0..d {
        for j in i..d {
            let g = sys.polarize(&e.vectors()[i], &e.vectors()[j]);
            let norm = g.norm();
            if norm <= DEFAULT_TOL {
                continue;
            }
            let g = g / norm;
            if grown.contains(&g)? {
                continue;
            }
            counter += 1;
            let plus = representable(sys, e, &g, p_max, attempts, subseed(seed, 2 * counter))?;
            let minus =
                representable(sys, e, &(-&g), p_max, attempts, subseed(seed, 2 * counter + 1))?;
            if let (Representable::Found(pc), Representable::Found(mc)) = (plus, minus) {
                grown = grown.extended(&g)?;
                certs.push(CertificatePair { direction: g, plus: pc, minus: mc });
            }
        }
    }
    Ok((grown, certs))
}

#[derive(Debug, Clone)]
pub struct SaturationChain {
    pub levels: Vec<SubspaceBasis>,
    /// Certificates for the basis vectors admitted at each growth step
    /// (entry `l` explains level `l+1` in terms of level `l`).
    pub certificates: Vec<Vec<CertificatePair>>,
    pub saturated: bool,
    /// Depth at which full dimension was reached, when saturated.
    pub n_big_x: Option<usize>,
}

/// Iterates subspace growth from `Range(B)` until full dimension, stagnation,
/// or `max_depth`.
pub fn saturation_chain(
    sys: &QuadraticSystem,
    max_depth: usize,
    p_max: usize,
    attempts: usize,
    seed: u64,
) -> Result<SaturationChain> {
    if max_depth == 0 {
        return Err(CoreError::InvalidParam("max_depth must be at least 1".into()));
    }
    let e0 = column_span(sys.b(), DEFAULT_TOL)?;
    let mut levels = vec![e0];
    let mut certificates = Vec::new();
    for depth in 0..max_depth {
        let current = levels.last().unwrap();
        if current.is_full() {
            break;
        }
        let (next, certs) = grow_subspace(sys, current, p_max, attempts, subseed(seed, depth as u64))?;
        let grew = next.dim() > current.dim();
        if grew {
            certificates.push(certs);
            levels.push(next);
        } else {
            break;
        }
    }
    let saturated = levels.last().unwrap().is_full();
    let n_big_x = if saturated { Some(levels.len() - 1) } else { None };
    Ok(SaturationChain { levels, certificates, saturated, n_big_x })
}

#[derive(Debug, Clone)]
pub struct DirectCertificate {
    pub direction: DVector<f64>,
    pub u: DVector<f64>,
    pub xi: DVector<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct DirectFailure {
    pub direction: DVector<f64>,
    pub best_residual: f64,
}

/// Result of checking the single-step decomposition `γ = Bu − f(Bξ)` on every
/// canonical direction. A failure means only "no witness found within the
/// search budget and box"; it is not a proof of nonexistence.
#[derive(Debug, Clone)]
pub struct Assumption1Report {
    pub certificates: Vec<DirectCertificate>,
    pub failures: Vec<DirectFailure>,
}

impl Assumption1Report {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Searches `(u, ξ)` with `|γ − Bu + f(Bξ)| ≤ cert_tol·(1+|γ|)`.
pub fn direct_search(
    sys: &QuadraticSystem,
    gamma: &DVector<f64>,
    attempts: usize,
    seed: u64,
) -> Result<std::result::Result<DirectCertificate, DirectFailure>> {
    if gamma.len() != sys.n_x() {
        return Err(CoreError::DimensionMismatch("direct_search: gamma dimension".into()));
    }
    let tol = CERT_TOL * (1.0 + gamma.norm());
    let nu = sys.n_u();
    let b = sys.b().clone();
    let unpack = |theta: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        (theta.rows(0, nu).into_owned(), theta.rows(nu, nu).into_owned())
    };
    let res_fn = |theta: &DVector<f64>| -> DVector<f64> {
        let (u, xi) = unpack(theta);
        gamma - &b * u + sys.eval_f(&(&b * xi))
    };
    let jac_fn = |theta: &DVector<f64>| -> DMatrix<f64> {
        let (_, xi) = unpack(theta);
        let mut j = DMatrix::zeros(sys.n_x(), 2 * nu);
        j.columns_mut(0, nu).copy_from(&(-&b));
        let block = jacobian_f(sys, &(&b * xi)) * &b;
        j.columns_mut(nu, nu).copy_from(&block);
        j
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..attempts {
        let theta0 = DVector::from_fn(2 * nu, |_, _| rng.gen_range(-1.5..1.5));
        let (theta, cost) = gauss_newton(theta0, res_fn, jac_fn, tol);
        best = best.min(cost);
        if cost <= tol {
            let (u, xi) = unpack(&theta);
            return Ok(Ok(DirectCertificate {
                direction: gamma.clone(),
                u,
                xi,
                residual: cost,
            }));
        }
    }
    Ok(Err(DirectFailure { direction: gamma.clone(), best_residual: best }))
}

/// Checks the single-step decomposition on every canonical basis direction.
pub fn check_assumption1(sys: &QuadraticSystem, attempts: usize, seed: u64) -> Result<Assumption1Report> {
    let mut certificates = Vec::new();
    let mut failures = Vec::new();
    for k in 0..sys.n_x() {
        let mut gamma = DVector::zeros(sys.n_x());
        gamma[k] = 1.0;
        match direct_search(sys, &gamma, attempts, subseed(seed, k as u64))? {
            Ok(c) => certificates.push(c),
            Err(f) => failures.push(f),
        }
    }
    Ok(Assumption1Report { certificates, failures })
}

fn vec_json(v: &DVector<f64>) -> serde_json::Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn cert_json(c: &DecompositionCertificate) -> serde_json::Value {
    json!({
        "gamma": vec_json(&c.gamma),
        "xi0": vec_json(&c.xi0),
        "xis": c.xis.iter().map(vec_json).collect::<Vec<_>>(),
        "residual": c.residual,
    })
}

pub fn chain_to_json(chain: &SaturationChain) -> serde_json::Value {
    json!({
        "levels": chain
            .levels
            .iter()
            .map(|l| l.vectors().iter().map(vec_json).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "certificates": chain
            .certificates
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|pair| {
                        json!({
                            "direction": vec_json(&pair.direction),
                            "plus": cert_json(&pair.plus),
                            "minus": cert_json(&pair.minus),
                        })
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
        "saturated": chain.saturated,
        "n_X": chain.n_big_x,
    })
}

pub fn assumption1_to_json(report: &Assumption1Report) -> serde_json::Value {
    json!({
        "holds": report.holds(),
        "certificates": report
            .certificates
            .iter()
            .map(|c| {
                json!({
                    "direction": vec_json(&c.direction),
                    "u": vec_json(&c.u),
                    "xi": vec_json(&c.xi),
                    "residual": c.residual,
                })
            })
            .collect::<Vec<_>>(),
        "failures": report
            .failures
            .iter()
            .map(|f| {
                json!({
                    "direction": vec_json(&f.direction),
                    "best_residual": f.best_residual,
                })
            })
            .collect::<Vec<_>>(),
    })
}
