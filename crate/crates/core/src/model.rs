//! Quadratic control systems `ẋ + Ax + Γ(x,x) = Bu` and the enlarged
//! two-input system `ẇ + A(w+ζ) + f(w+ζ) = γ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A finite-dimensional control system with linear drift `A`, control map `B`
/// and quadratic nonlinearity `f(x) = Γ(x,x)`.
///
/// `Γ` is stored densely as one symmetric `n_x × n_x` matrix per output
/// component: `f(x)_k = xᵀ Γ_k x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    n_x: usize,
    n_u: usize,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    gamma: Vec<DMatrix<f64>>,
}

/// On-disk description of a [`QuadraticSystem`]; all matrices row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub n_x: usize,
    pub n_u: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "Gamma")]
    pub gamma: Vec<Vec<f64>>,
}

fn check_finite(name: &str, it: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in it {
        if !v.is_finite() {
            return Err(CoreError::NonFinite(name.to_string()));
        }
    }
    Ok(())
}

/// Builds a system from raw data, symmetrizing each `Γ` component via
/// `(M + Mᵀ)/2`.
pub fn make_system(
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    gamma_raw: Vec<DMatrix<f64>>,
) -> Result<QuadraticSystem> {
    let n_x = a.nrows();
    if n_x == 0 {
        return Err(CoreError::InvalidParam("state dimension must be positive".into()));
    }
    if a.ncols() != n_x {
        return Err(CoreError::DimensionMismatch(format!(
            "A must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.nrows() != n_x || b.ncols() == 0 {
        return Err(CoreError::DimensionMismatch(format!(
            "B must be {}xn_u with n_u >= 1, got {}x{}",
            n_x,
            b.nrows(),
            b.ncols()
        )));
    }
    if gamma_raw.len() != n_x {
        return Err(CoreError::DimensionMismatch(format!(
            "Gamma needs {} component matrices, got {}",
            n_x,
            gamma_raw.len()
        )));
    }
    for (k, g) in gamma_raw.iter().enumerate() {
        if g.nrows() != n_x || g.ncols() != n_x {
            return Err(CoreError::DimensionMismatch(format!(
                "Gamma[{k}] must be {n_x}x{n_x}, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
    }
    check_finite("A", a.iter().copied())?;
    check_finite("B", b.iter().copied())?;
    for g in &gamma_raw {
        check_finite("Gamma", g.iter().copied())?;
    }
    let gamma = gamma_raw
        .into_iter()
        .map(|g| {
            let gt = g.transpose();
            (g + gt) * 0.5
        })
        .collect();
    let n_u = b.ncols();
    Ok(QuadraticSystem { n_x, n_u, a, b, gamma })
}

impl QuadraticSystem {
    pub fn from_json(doc: &SystemJson) -> Result<Self> {
        let n_x = doc.n_x;
        let n_u = doc.n_u;
        if doc.a.len() != n_x * n_x {
            return Err(CoreError::DimensionMismatch(format!(
                "A has {} entries, expected {}",
                doc.a.len(),
                n_x * n_x
            )));
        }
        if doc.b.len() != n_x * n_u {
            return Err(CoreError::DimensionMismatch(format!(
                "B has {} entries, expected {}",
                doc.b.len(),
                n_x * n_u
            )));
        }
        let a = DMatrix::from_row_slice(n_x, n_x, &doc.a);
        let b = DMatrix::from_row_slice(n_x, n_u, &doc.b);
        if doc.gamma.len() != n_x {
            return Err(CoreError::DimensionMismatch(format!(
                "Gamma has {} components, expected {}",
                doc.gamma.len(),
                n_x
            )));
        }
        let mut gamma = Vec::with_capacity(n_x);
        for comp in &doc.gamma {
            if comp.len() != n_x * n_x {
                return Err(CoreError::DimensionMismatch(format!(
                    "Gamma component has {} entries, expected {}",
                    comp.len(),
                    n_x * n_x
                )));
            }
            gamma.push(DMatrix::from_row_slice(n_x, n_x, comp));
        }
        make_system(a, b, gamma)
    }

    pub fn to_json(&self) -> SystemJson {
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(m.nrows() * m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push(m[(i, j)]);
                }
            }
            out
        };
        SystemJson {
            n_x: self.n_x,
            n_u: self.n_u,
            a: row_major(&self.a),
            b: row_major(&self.b),
            gamma: self.gamma.iter().map(row_major).collect(),
        }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn gamma_component(&self, k: usize) -> &DMatrix<f64> {
        &self.gamma[k]
    }

    /// `f(x) = Γ(x,x)`.
    pub fn eval_f(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_x, |k, _| (x.transpose() * &self.gamma[k] * x)[(0, 0)])
    }

    /// `Γ(a,b) = (f(a+b) − f(a−b))/4`.
    ///
    /// Computed through `f` so the result is symmetric in `(a, b)` exactly,
    /// bit for bit (`f(−v) = f(v)` with identical rounding).
    pub fn polarize(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let sum = self.eval_f(&(a + b));
        let diff = self.eval_f(&(a - b));
        (sum - diff) * 0.25
    }

    /// Right-hand side of the enlarged system:
    /// `ẇ = −A(w+ζ) − f(w+ζ) + γ`.
    pub fn rhs_extended(
        &self,
        w: &DVector<f64>,
        zeta_t: &DVector<f64>,
        gamma_t: &DVector<f64>,
    ) -> DVector<f64> {
        let s = w + zeta_t;
        gamma_t - &self.a * &s - self.eval_f(&s)
    }
}

/// The Lorenz system of the running example: 3 states, 2 controls.
pub fn lorenz_system(sigma: f64, rho: f64, beta: f64) -> QuadraticSystem {
    let a = DMatrix::from_row_slice(3, 3, &[sigma, -sigma, 0.0, -rho, 1.0, 0.0, 0.0, 0.0, beta]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    // f(x) = [0, x2 x3, -x1 x2]
    let mut g1 = DMatrix::zeros(3, 3);
    g1[(1, 2)] = 1.0; // symmetrized to 1/2 on both entries
    let mut g2 = DMatrix::zeros(3, 3);
    g2[(0, 1)] = -1.0;
    make_system(a, b, vec![DMatrix::zeros(3, 3), g1, g2]).expect("static data")
}

/// The 3-state, 2-input system of the impossibility example:
/// `ẋ₁ + x₁x₂ = u₁, ẋ₂ + x₃² − x₁² = 0, ẋ₃ − x₃x₂ = u₂`.
pub fn net_system() -> QuadraticSystem {
    let a = DMatrix::zeros(3, 3);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    // f(x) = [x1 x2, x3^2 - x1^2, -x3 x2]
    let mut g0 = DMatrix::zeros(3, 3);
    g0[(0, 1)] = 1.0;
    let mut g1 = DMatrix::zeros(3, 3);
    g1[(2, 2)] = 1.0;
    g1[(0, 0)] = -1.0;
    let mut g2 = DMatrix::zeros(3, 3);
    g2[(2, 1)] = -1.0;
    make_system(a, b, vec![g0, g1, g2]).expect("static data")
}

/// The 6-state, 3-input system where one-step saturation is needed:
/// `f(x) = [0,0,0, x₁x₂, x₁x₃, x₂x₃]`, `B = [I₃; 0]`.
pub fn r6_system() -> QuadraticSystem {
    let a = DMatrix::zeros(6, 6);
    let mut b = DMatrix::zeros(6, 3);
    for i in 0..3 {
        b[(i, i)] = 1.0;
    }
    let mut gamma = vec![DMatrix::zeros(6, 6); 3];
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let mut g = DMatrix::zeros(6, 6);
        g[(i, j)] = 1.0;
        gamma.push(g);
    }
    make_system(a, b, gamma).expect("static data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_system(rng: &mut impl Rng, n_x: usize, n_u: usize) -> QuadraticSystem {
        let a = DMatrix::from_fn(n_x, n_x, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(n_x, n_u, |_, _| rng.gen_range(-1.0..1.0));
        let gamma = (0..n_x)
            .map(|_| DMatrix::from_fn(n_x, n_x, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        make_system(a, b, gamma).unwrap()
    }

    #[test]
    fn zero_nonlinearity_is_valid() {
        let sys = make_system(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            vec![DMatrix::zeros(2, 2); 2],
        )
        .unwrap();
        assert_eq!(sys.eval_f(&DVector::from_vec(vec![1.0, 2.0])), DVector::zeros(2));
    }

    #[test]
    fn lorenz_dimensions() {
        let sys = lorenz_system(10.0, 28.0, 8.0 / 3.0);
        assert_eq!((sys.n_x(), sys.n_u()), (3, 2));
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let f = sys.eval_f(&x);
        assert_relative_eq!(f[0], 0.0);
        assert_relative_eq!(f[1], 6.0); // x2 x3
        assert_relative_eq!(f[2], -2.0); // -x1 x2
    }

    #[test]
    fn symmetrization_preserves_f() {
        // an asymmetric Gamma component defines the same quadratic form
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<DMatrix<f64>> = (0..3)
            .map(|_| DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let sys = make_system(DMatrix::zeros(3, 3), DMatrix::identity(3, 3), raw.clone()).unwrap();
        for _ in 0..100 {
            let x = random_vec(&mut rng, 3);
            let direct = DVector::from_fn(3, |k, _| (x.transpose() * &raw[k] * &x)[(0, 0)]);
            let f = sys.eval_f(&x);
            assert_relative_eq!(f, direct, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn eval_f_net_example() {
        // f(x) = [x1 x2, x3^2 - x1^2, -x3 x2] at x = [1,2,3]
        let sys = net_system();
        let f = sys.eval_f(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_relative_eq!(f[0], 2.0);
        assert_relative_eq!(f[1], 8.0);
        assert_relative_eq!(f[2], -6.0);
    }

    #[test]
    fn eval_f_zero_and_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_system(&mut rng, 4, 2);
        assert_eq!(sys.eval_f(&DVector::zeros(4)), DVector::zeros(4));
        for _ in 0..50 {
            let x = random_vec(&mut rng, 4);
            let lam: f64 = rng.gen_range(-3.0..3.0);
            let lhs = sys.eval_f(&(&x * lam));
            let rhs = sys.eval_f(&x) * (lam * lam);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn polarize_basics() {
        let sys = net_system();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_vec(&mut rng, 3);
        assert_eq!(sys.polarize(&a, &DVector::zeros(3)), DVector::zeros(3));
        let pa = sys.polarize(&a, &a);
        assert_relative_eq!(pa, sys.eval_f(&a), epsilon = 1e-12, max_relative = 1e-12);
        // e1, e2 -> [1/2, 0, 0]
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let p = sys.polarize(&e1, &e2);
        assert_relative_eq!(p[0], 0.5);
        assert_relative_eq!(p[1], 0.0);
        assert_relative_eq!(p[2], 0.0);
    }

    #[test]
    fn polarize_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_system(&mut rng, 5, 2);
        for _ in 0..50 {
            let a = random_vec(&mut rng, 5);
            let b = random_vec(&mut rng, 5);
            assert_eq!(sys.polarize(&a, &b), sys.polarize(&b, &a));
        }
    }

    #[test]
    fn polarization_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sys = random_system(&mut rng, 4, 2);
        for _ in 0..200 {
            let a = random_vec(&mut rng, 4);
            let b = random_vec(&mut rng, 4);
            let lhs = sys.eval_f(&a) + sys.eval_f(&b);
            let rhs = (sys.eval_f(&(&a + &b)) + sys.eval_f(&(&a - &b))) * 0.5;
            let bound = 1e-10 * (1.0 + a.norm_squared() + b.norm_squared());
            assert!((lhs - rhs).norm() <= bound);
        }
    }

    #[test]
    fn rhs_extended_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sys = random_system(&mut rng, 4, 3);
        let zero = DVector::zeros(4);
        assert_eq!(sys.rhs_extended(&zero, &zero, &zero), DVector::zeros(4));
        for _ in 0..50 {
            let w = random_vec(&mut rng, 4);
            let zeta = random_vec(&mut rng, 4);
            let g = random_vec(&mut rng, 4);
            // closed-loop reduction: zeta = 0, gamma = Bu
            let u = random_vec(&mut rng, 3);
            let bu = sys.b() * &u;
            let rhs = sys.rhs_extended(&w, &zero, &bu);
            let direct = &bu - sys.a() * &w - sys.eval_f(&w);
            assert_relative_eq!(rhs, direct, epsilon = 1e-12);
            // dependence on w and zeta only through w + zeta
            let lhs = sys.rhs_extended(&w, &zeta, &g);
            let shifted = sys.rhs_extended(&(&w + &zeta), &zero, &g);
            assert!((lhs - shifted).norm() <= 1e-12 * (1.0 + w.norm() + zeta.norm()));
        }
    }

    #[test]
    fn json_round_trip_rejects_unknown_fields() {
        let sys = lorenz_system(10.0, 28.0, 8.0 / 3.0);
        let doc = sys.to_json();
        let text = serde_json::to_string(&doc).unwrap();
        let parsed: SystemJson = serde_json::from_str(&text).unwrap();
        let back = QuadraticSystem::from_json(&parsed).unwrap();
        assert_eq!(back, sys);
        let with_extra = text.replace("{", "{\"bogus\":1,");
        assert!(serde_json::from_str::<SystemJson>(&with_extra).is_err());
    }

    #[test]
    fn make_system_rejects_bad_input() {
        assert!(make_system(
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 1),
            vec![DMatrix::zeros(2, 2); 2]
        )
        .is_err());
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = f64::NAN;
        assert!(make_system(a, DMatrix::identity(2, 2), vec![DMatrix::zeros(2, 2); 2]).is_err());
    }
}
