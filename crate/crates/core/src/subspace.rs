//! Orthonormal bases of subspaces of the state space: modified Gram-Schmidt
//! with one re-orthogonalization pass, membership tests, span unions.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Default membership tolerance, well above double roundoff and below any
/// experiment-scale epsilon.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    ambient_dim: usize,
    vectors: Vec<DVector<f64>>,
    tol: f64,
}

impl SubspaceBasis {
    /// Zero-dimensional subspace of the given ambient space.
    pub fn empty(ambient_dim: usize, tol: f64) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(CoreError::InvalidParam("ambient dimension must be positive".into()));
        }
        Ok(SubspaceBasis { ambient_dim, vectors: Vec::new(), tol })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &DVector<f64> {
        &self.vectors[i]
    }

    /// Orthogonal projection of `v` onto the span.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ambient_dim);
        for q in &self.vectors {
            out += q * q.dot(v);
        }
        out
    }

    /// Coordinates of the projection of `v` in this basis.
    pub fn coordinates(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.vectors.len(), |i, _| self.vectors[i].dot(v))
    }

    /// Reassembles an ambient vector from basis coordinates.
    pub fn from_coordinates(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ambient_dim);
        for (q, ci) in self.vectors.iter().zip(c.iter()) {
            out += q * *ci;
        }
        out
    }

    /// Residual of `v` against the span.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.project(v)
    }

    /// True iff the distance from `v` to the span is at most `tol·(1+|v|)`.
    pub fn contains(&self, v: &DVector<f64>) -> Result<bool> {
        if v.len() != self.ambient_dim {
            return Err(CoreError::DimensionMismatch(format!(
                "vector has dim {}, ambient is {}",
                v.len(),
                self.ambient_dim
            )));
        }
        Ok(self.residual(v).norm() <= self.tol * (1.0 + v.norm()))
    }

    /// Basis vectors as the columns of a matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ambient_dim, self.vectors.len());
        for (j, v) in self.vectors.iter().enumerate() {
            m.column_mut(j).copy_from(v);
        }
        m
    }

    /// Basis extended by one more direction (no-op if `v` already lies in
    /// the span).
    pub fn extended(&self, v: &DVector<f64>) -> Result<SubspaceBasis> {
        let mut all = self.vectors.clone();
        all.push(v.clone());
        orthonormalize_in(self.ambient_dim, &all, self.tol)
    }

    /// Spans the whole ambient space.
    pub fn is_full(&self) -> bool {
        self.vectors.len() == self.ambient_dim
    }

    /// Basis of the orthogonal complement.
    pub fn complement(&self) -> Result<SubspaceBasis> {
        let n = self.ambient_dim;
        let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let e = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
            candidates.push(self.residual(&e));
        }
        orthonormalize(&candidates, self.tol)
    }
}

/// Modified Gram-Schmidt with a single re-orthogonalization pass. Vectors
/// whose residual after projection onto the previous ones is below `tol`
/// (relative to their own norm plus one) are dropped.
pub fn orthonormalize(vectors: &[DVector<f64>], tol: f64) -> Result<SubspaceBasis> {
    let ambient_dim = match vectors.first() {
        Some(v) => v.len(),
        None => {
            return Err(CoreError::InvalidParam(
                "cannot infer ambient dimension from an empty list; use SubspaceBasis::empty".into(),
            ))
        }
    };
    orthonormalize_in(ambient_dim, vectors, tol)
}

/// As [`orthonormalize`] with an explicit ambient dimension (allows an empty
/// input list).
pub fn orthonormalize_in(
    ambient_dim: usize,
    vectors: &[DVector<f64>],
    tol: f64,
) -> Result<SubspaceBasis> {
    if ambient_dim == 0 {
        return Err(CoreError::InvalidParam("ambient dimension must be positive".into()));
    }
    let mut basis = SubspaceBasis::empty(ambient_dim, tol)?;
    for v in vectors {
        if v.len() != ambient_dim {
            return Err(CoreError::DimensionMismatch(format!(
                "vector has dim {}, ambient is {}",
                v.len(),
                ambient_dim
            )));
        }
        let mut r = basis.residual(v);
        // one re-orthogonalization pass
        r = basis.residual(&r);
        if r.norm() > tol * (1.0 + v.norm()) {
            let r = r.clone() / r.norm();
            basis.vectors.push(r);
        }
        if basis.is_full() {
            break;
        }
    }
    Ok(basis)
}

/// Basis of the column span of a matrix.
pub fn column_span(m: &DMatrix<f64>, tol: f64) -> Result<SubspaceBasis> {
    let cols: Vec<DVector<f64>> = (0..m.ncols()).map(|j| m.column(j).into_owned()).collect();
    orthonormalize_in(m.nrows(), &cols, tol)
}

/// Basis of the sum of two subspaces.
pub fn span_union(b1: &SubspaceBasis, b2: &SubspaceBasis) -> Result<SubspaceBasis> {
    if b1.ambient_dim != b2.ambient_dim {
        return Err(CoreError::DimensionMismatch(format!(
            "ambient dims differ: {} vs {}",
            b1.ambient_dim, b2.ambient_dim
        )));
    }
    let mut all = b1.vectors.clone();
    all.extend(b2.vectors.iter().cloned());
    orthonormalize_in(b1.ambient_dim, &all, b1.tol.min(b2.tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(n: usize, i: usize) -> DVector<f64> {
        DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn collinear_inputs_collapse() {
        let vs = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
        ];
        let b = orthonormalize(&vs, 1e-8).unwrap();
        assert_eq!(b.dim(), 1);
        assert!(b.contains(&e(2, 0)).unwrap());
    }

    #[test]
    fn empty_span() {
        let b = SubspaceBasis::empty(3, 1e-8).unwrap();
        assert_eq!(b.dim(), 0);
        assert!(b.contains(&DVector::zeros(3)).unwrap());
        assert!(!b.contains(&e(3, 0)).unwrap());
    }

    #[test]
    fn two_dim_span_in_r3() {
        let vs = vec![
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
            DVector::from_vec(vec![1.0, -1.0, 0.0]),
        ];
        let b = orthonormalize(&vs, 1e-8).unwrap();
        assert_eq!(b.dim(), 2);
        assert!(b.contains(&e(3, 0)).unwrap());
        assert!(b.contains(&e(3, 1)).unwrap());
        assert!(!b.contains(&e(3, 2)).unwrap());
    }

    #[test]
    fn contains_diagonal() {
        let b = orthonormalize(&[DVector::from_vec(vec![1.0, 1.0])], 1e-8).unwrap();
        assert!(b.contains(&DVector::from_vec(vec![3.0, 3.0])).unwrap());
        let b1 = orthonormalize(&[e(2, 0)], 1e-8).unwrap();
        assert!(!b1.contains(&e(2, 1)).unwrap());
    }

    #[test]
    fn union_rules() {
        let b1 = orthonormalize(&[e(2, 0)], 1e-8).unwrap();
        let b2 = orthonormalize(&[e(2, 1)], 1e-8).unwrap();
        assert_eq!(span_union(&b1, &b2).unwrap().dim(), 2);
        let zero = SubspaceBasis::empty(2, 1e-8).unwrap();
        assert_eq!(span_union(&b1, &zero).unwrap().dim(), 1);
        let b3 = orthonormalize(&[DVector::from_vec(vec![1.0, 1.0])], 1e-8).unwrap();
        assert_eq!(span_union(&b1, &b3).unwrap().dim(), 2);
    }

    #[test]
    fn complement_of_column_span() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let span = column_span(&b, 1e-10).unwrap();
        let comp = span.complement().unwrap();
        assert_eq!(comp.dim(), 1);
        // complement of span{e1, e2+e3} is (e2 - e3)/sqrt(2)
        let v = comp.vector(0);
        assert!(v[0].abs() < 1e-12);
        assert!((v[1] + v[2]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn orthonormalize_keeps_members(seed in 0u64..500) {
            use rand::prelude::*;
            use rand_chacha::ChaCha8Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..6usize);
            let k = rng.gen_range(0..=n);
            let vs: Vec<DVector<f64>> = (0..k)
                .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let b = orthonormalize_in(n, &vs, 1e-8).unwrap();
            // orthonormality
            for (i, u) in b.vectors().iter().enumerate() {
                prop_assert!((u.norm() - 1.0).abs() <= 1e-10);
                for v in b.vectors().iter().skip(i + 1) {
                    prop_assert!(u.dot(v).abs() <= 1e-10);
                }
            }
            // every input vector is contained
            for v in &vs {
                prop_assert!(b.contains(v).unwrap());
            }
            // idempotence
            let b2 = orthonormalize_in(n, b.vectors(), 1e-8).unwrap();
            prop_assert_eq!(b2.dim(), b.dim());
        }

        #[test]
        fn union_dim_bounds(seed in 0u64..200) {
            use rand::prelude::*;
            use rand_chacha::ChaCha8Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..6usize);
            let mk = |rng: &mut ChaCha8Rng| {
                let k = rng.gen_range(0..=n);
                let vs: Vec<DVector<f64>> = (0..k)
                    .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
                    .collect();
                orthonormalize_in(n, &vs, 1e-8).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let u = span_union(&a, &b).unwrap();
            prop_assert!(u.dim() <= a.dim() + b.dim());
            prop_assert!(u.dim() >= a.dim().max(b.dim()));
        }
    }
}
