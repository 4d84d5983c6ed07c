//! Dense real/complex matrix primitives: singular values, minimum
//! expansion, exterior (compound) powers, adjugate and realification.
//!
//! Matrices are small (dimensions of a few dozen at most), so all
//! decompositions go through nalgebra's dense routines.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Hard cap on the dimension of a compound matrix.
pub const COMPOUND_DIM_LIMIT: usize = 5000;

/// A dense matrix over the complex scalars. Real matrices are complex
/// matrices with vanishing imaginary parts, flagged `real`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: DMatrix<C64>,
    real: bool,
}

/// Nonincreasing sequence of singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest singular value, i.e. the operator norm.
    pub fn norm(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Smallest singular value.
    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

impl Matrix {
    pub fn from_dmatrix(data: DMatrix<C64>) -> Self {
        let real = data.iter().all(|e| e.im == 0.0);
        Matrix { data, real }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> C64>(rows: usize, cols: usize, f: F) -> Self {
        Self::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_real_rows(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self::from_dmatrix(DMatrix::from_row_slice(
            rows,
            cols,
            &entries.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>(),
        ))
    }

    pub fn from_complex_rows(rows: usize, cols: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn identity(n: usize) -> Self {
        Matrix {
            data: DMatrix::identity(n, n),
            real: true,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            data: DMatrix::zeros(rows, cols),
            real: true,
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|e| e.re.is_finite() && e.im.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix {
            data: self.data.transpose(),
            real: self.real,
        }
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix {
            data: self.data.adjoint(),
            real: self.real,
        }
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        Matrix {
            data: &self.data * &rhs.data,
            real: self.real && rhs.real,
        }
    }

    pub fn scale(&self, s: C64) -> Matrix {
        Matrix {
            data: self.data.map(|e| e * s),
            real: self.real && s.im == 0.0,
        }
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        Matrix {
            data: &self.data + &rhs.data,
            real: self.real && rhs.real,
        }
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        Matrix {
            data: &self.data - &rhs.data,
            real: self.real && rhs.real,
        }
    }

    pub fn determinant(&self) -> C64 {
        assert!(self.is_square());
        self.data.clone().lu().determinant()
    }

    pub fn try_inverse(&self) -> Option<Matrix> {
        self.data.clone().try_inverse().map(|m| Matrix {
            data: m,
            real: self.real,
        })
    }

    /// Operator 2-norm (largest singular value).
    pub fn norm(&self) -> f64 {
        self.data.clone().singular_values().max()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    /// Sub-block copy: `rows x cols` starting at `(i0, j0)`.
    pub fn block(&self, i0: usize, j0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_dmatrix(self.data.view((i0, j0), (rows, cols)).into_owned())
    }

    /// Assemble a 2x2 block matrix [[a, b], [c, d]].
    pub fn from_blocks(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Matrix {
        assert_eq!(a.rows(), b.rows());
        assert_eq!(c.rows(), d.rows());
        assert_eq!(a.cols(), c.cols());
        assert_eq!(b.cols(), d.cols());
        let rows = a.rows() + c.rows();
        let cols = a.cols() + b.cols();
        Matrix::from_fn(rows, cols, |i, j| {
            if i < a.rows() {
                if j < a.cols() {
                    a.get(i, j)
                } else {
                    b.get(i, j - a.cols())
                }
            } else if j < a.cols() {
                c.get(i - a.rows(), j)
            } else {
                d.get(i - a.rows(), j - a.cols())
            }
        })
    }
}

/// All singular values of `a`, sorted nonincreasing.
pub fn singular_values(a: &Matrix) -> Result<SingularSpectrum> {
    if !a.is_finite() {
        return Err(Error::InvalidInput(
            "matrix has non-finite entries".into(),
        ));
    }
    let mut values: Vec<f64> = a
        .as_dmatrix()
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    values.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(SingularSpectrum { values })
}

/// Minimum expansion m(A): the least singular value of a square matrix.
/// Equals ||A^{-1}||^{-1} when A is invertible.
pub fn min_expansion(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "min_expansion requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(singular_values(a)?.min())
}

/// Lower bound m(P) >= eps / B^{d-1} for any P with |det P| >= eps and
/// ||P|| <= B.
pub fn min_expansion_from_det(eps: f64, b: f64, d: usize) -> Result<f64> {
    if eps <= 0.0 || b <= 0.0 || d == 0 {
        return Err(Error::InvalidInput(format!(
            "min_expansion_from_det needs eps > 0, B > 0, d >= 1 (got eps={eps}, B={b}, d={d})"
        )));
    }
    if eps > b.powi(d as i32) * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "inconsistent inputs: eps={eps} exceeds B^d={}",
            b.powi(d as i32)
        )));
    }
    Ok(eps / b.powi(d as i32 - 1))
}

/// Lexicographically ordered k-subsets of {0, ..., n-1}.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        // advance to the next subset in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - (k - i) {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// The k-th compound matrix (det A_{IxJ})_{I,J} with index sets ordered
/// lexicographically. Functorial: wedge_k(AB) = wedge_k(A) wedge_k(B).
pub fn exterior_power(a: &Matrix, k: usize) -> Result<Matrix> {
    let (n, m) = (a.rows(), a.cols());
    if k == 0 || k > n.min(m) {
        return Err(Error::Dimension(format!(
            "exterior power order k={k} out of range for a {n}x{m} matrix"
        )));
    }
    let dim_r = binomial(n, k);
    let dim_c = binomial(m, k);
    if dim_r.max(dim_c) > COMPOUND_DIM_LIMIT {
        return Err(Error::CompoundOverflow {
            m: n.max(m),
            k,
            dim: dim_r.max(dim_c),
            limit: COMPOUND_DIM_LIMIT,
        });
    }
    if k == 1 {
        return Ok(a.clone());
    }
    let row_sets = k_subsets(n, k);
    let col_sets = k_subsets(m, k);
    let mut out = DMatrix::zeros(dim_r, dim_c);
    let mut minor = DMatrix::zeros(k, k);
    for (ri, rows) in row_sets.iter().enumerate() {
        for (ci, cols) in col_sets.iter().enumerate() {
            for (ii, &i) in rows.iter().enumerate() {
                for (jj, &j) in cols.iter().enumerate() {
                    minor[(ii, jj)] = a.get(i, j);
                }
            }
            out[(ri, ci)] = minor.clone().lu().determinant();
        }
    }
    Ok(Matrix::from_dmatrix(out))
}

/// Adjugate W~ of a square matrix: A * W~ = det(A) * I exactly, and
/// det(W~) = det(A)^{d-1}. Computed by cofactor expansion so it stays
/// valid for singular A.
pub fn adjugate(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "adjugate requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let d = a.rows();
    if d == 1 {
        return Ok(Matrix::identity(1));
    }
    let mut minor = DMatrix::zeros(d - 1, d - 1);
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut mi = 0;
            for r in 0..d {
                if r == i {
                    continue;
                }
                let mut mj = 0;
                for c in 0..d {
                    if c == j {
                        continue;
                    }
                    minor[(mi, mj)] = a.get(r, c);
                    mj += 1;
                }
                mi += 1;
            }
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            // adj(A)_{ji} = (-1)^{i+j} M_{ij}
            out[(j, i)] = minor.clone().lu().determinant() * C64::new(sign, 0.0);
        }
    }
    Ok(Matrix::from_dmatrix(out))
}

/// Realification: each complex entry a+ib becomes the 2x2 real block
/// [[a, -b], [b, a]]. An algebra homomorphism; singular values double in
/// multiplicity, norms and minimum expansion are preserved.
pub fn realify(a: &Matrix) -> Matrix {
    let (n, m) = (a.rows(), a.cols());
    let mut out = DMatrix::zeros(2 * n, 2 * m);
    for i in 0..n {
        for j in 0..m {
            let e = a.get(i, j);
            out[(2 * i, 2 * j)] = C64::new(e.re, 0.0);
            out[(2 * i, 2 * j + 1)] = C64::new(-e.im, 0.0);
            out[(2 * i + 1, 2 * j)] = C64::new(e.im, 0.0);
            out[(2 * i + 1, 2 * j + 1)] = C64::new(e.re, 0.0);
        }
    }
    Matrix {
        data: out,
        real: true,
    }
}

/// QR factorization with the positive-diagonal convention: R has real
/// positive diagonal entries, making the factorization unique.
pub fn qr_positive(a: &Matrix) -> (Matrix, Matrix) {
    let qr = a.as_dmatrix().clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let k = r.nrows().min(r.ncols());
    for i in 0..k {
        let d = r[(i, i)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            if (phase - C64::new(1.0, 0.0)).norm() > 1e-15 {
                let pc = phase.conj();
                for j in 0..r.ncols() {
                    r[(i, j)] *= pc;
                }
                for j in 0..q.nrows() {
                    q[(j, i)] *= phase;
                }
            }
        }
    }
    (Matrix::from_dmatrix(q), Matrix::from_dmatrix(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_matrix(n: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_real_matrix(n: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0))
    }

    /// Random orthogonal factor from QR of a random real matrix.
    fn random_orthogonal(n: usize, seed: u64) -> Matrix {
        let (q, _) = qr_positive(&random_real_matrix(n, seed));
        q
    }

    #[test]
    fn singular_values_identity() {
        let s = singular_values(&Matrix::identity(3)).unwrap();
        assert_eq!(s.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn singular_values_diagonal() {
        let a = Matrix::from_real_rows(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let s = singular_values(&a).unwrap();
        assert!(approx(s.values()[0], 2.0, 1e-12));
        assert!(approx(s.values()[1], 0.5, 1e-12));
    }

    #[test]
    fn singular_values_rotation() {
        let a = Matrix::from_real_rows(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let s = singular_values(&a).unwrap();
        assert!(approx(s.values()[0], 1.0, 1e-12));
        assert!(approx(s.values()[1], 1.0, 1e-12));
    }

    #[test]
    fn singular_values_rejects_non_finite() {
        let a = Matrix::from_real_rows(1, 1, &[f64::NAN]);
        assert!(matches!(
            singular_values(&a),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn min_expansion_identity_and_diag() {
        assert!(approx(min_expansion(&Matrix::identity(4)).unwrap(), 1.0, 1e-12));
        let a = Matrix::from_real_rows(2, 2, &[3.0, 0.0, 0.0, 2.0]);
        assert!(approx(min_expansion(&a).unwrap(), 2.0, 1e-12));
    }

    #[test]
    fn min_expansion_rejects_rectangular() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(min_expansion(&a), Err(Error::Dimension(_))));
    }

    #[test]
    fn min_expansion_planted_svd() {
        // A = R1 D R2 from random orthogonal factors and a known D.
        let d = Matrix::from_real_rows(4, 4, &[
            5.0, 0.0, 0.0, 0.0,
            0.0, 3.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.25,
        ]);
        let a = random_orthogonal(4, 7).mul(&d).mul(&random_orthogonal(4, 8));
        assert!(approx(min_expansion(&a).unwrap(), 0.25, 1e-10));
    }

    #[test]
    fn exterior_power_k1_is_identity_map() {
        let a = random_matrix(3, 1);
        let e = exterior_power(&a, 1).unwrap();
        assert_eq!(a, e);
    }

    #[test]
    fn exterior_power_diagonal() {
        let a = Matrix::from_real_rows(3, 3, &[
            2.0, 0.0, 0.0,
            0.0, 3.0, 0.0,
            0.0, 0.0, 5.0,
        ]);
        let e = exterior_power(&a, 2).unwrap();
        // lexicographic pairs: {0,1}, {0,2}, {1,2} -> 6, 10, 15
        assert!(approx(e.get(0, 0).re, 6.0, 1e-12));
        assert!(approx(e.get(1, 1).re, 10.0, 1e-12));
        assert!(approx(e.get(2, 2).re, 15.0, 1e-12));
        assert!(approx(e.norm(), 15.0, 1e-12));
    }

    #[test]
    fn exterior_power_norm_is_top_singular_product() {
        let a = random_matrix(4, 3);
        let s = singular_values(&a).unwrap();
        let e = exterior_power(&a, 2).unwrap();
        let expect = s.values()[0] * s.values()[1];
        assert!((e.norm() - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn exterior_power_multiplicative() {
        for n in [4usize, 5] {
            let a = random_matrix(n, 10 + n as u64);
            let b = random_matrix(n, 20 + n as u64);
            let lhs = exterior_power(&a.mul(&b), 2).unwrap();
            let rhs = exterior_power(&a, 2).unwrap().mul(&exterior_power(&b, 2).unwrap());
            assert!(lhs.sub(&rhs).max_abs() < 1e-9);
        }
    }

    #[test]
    fn exterior_power_rejects_bad_k() {
        let a = random_matrix(3, 4);
        assert!(exterior_power(&a, 0).is_err());
        assert!(exterior_power(&a, 4).is_err());
    }

    #[test]
    fn adjugate_identity_and_2x2() {
        let id = Matrix::identity(3);
        assert!(adjugate(&id).unwrap().sub(&id).max_abs() < 1e-14);
        let a = Matrix::from_real_rows(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let adj = adjugate(&a).unwrap();
        let want = Matrix::from_real_rows(2, 2, &[4.0, -2.0, -3.0, 1.0]);
        assert!(adj.sub(&want).max_abs() < 1e-14);
    }

    #[test]
    fn adjugate_inverse_relation() {
        let a = random_matrix(3, 42);
        let det = a.determinant();
        let prod = adjugate(&a).unwrap().mul(&a).scale(C64::new(1.0, 0.0) / det);
        assert!(prod.sub(&Matrix::identity(3)).max_abs() < 1e-10);
        // det(adj A) = det(A)^{d-1}
        let dadj = adjugate(&a).unwrap().determinant();
        assert!((dadj - det * det).norm() < 1e-10 * det.norm().powi(2).max(1.0));
    }

    #[test]
    fn realify_1x1_i() {
        let a = Matrix::from_complex_rows(1, 1, &[C64::new(0.0, 1.0)]);
        let r = realify(&a);
        let want = Matrix::from_real_rows(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(r.sub(&want).max_abs() == 0.0);
        assert!(approx(r.determinant().re, 1.0, 1e-14));
    }

    #[test]
    fn realify_hermitian_is_symmetric() {
        let a = Matrix::from_complex_rows(2, 2, &[
            C64::new(1.0, 0.0), C64::new(0.5, -0.7),
            C64::new(0.5, 0.7), C64::new(-2.0, 0.0),
        ]);
        let r = realify(&a);
        assert!(r.sub(&r.transpose()).max_abs() == 0.0);
    }

    #[test]
    fn realify_doubles_singular_values() {
        let a = random_matrix(3, 99);
        let sa = singular_values(&a).unwrap();
        let sr = singular_values(&realify(&a)).unwrap();
        for (i, &s) in sa.values().iter().enumerate() {
            assert!(approx(sr.values()[2 * i], s, 1e-9));
            assert!(approx(sr.values()[2 * i + 1], s, 1e-9));
        }
        let da = a.determinant();
        assert!(approx(realify(&a).determinant().re, da.norm_sqr(), 1e-9));
    }

    #[test]
    fn realify_is_homomorphism() {
        let a = random_matrix(3, 5);
        let b = random_matrix(3, 6);
        let lhs = realify(&a.mul(&b));
        let rhs = realify(&a).mul(&realify(&b));
        assert!(lhs.sub(&rhs).max_abs() < 1e-12);
        assert!(realify(&a.adjoint()).sub(&realify(&a).transpose()).max_abs() < 1e-14);
    }

    #[test]
    fn min_expansion_from_det_values() {
        assert!(approx(min_expansion_from_det(1.0, 1.0, 3).unwrap(), 1.0, 1e-15));
        assert!(approx(min_expansion_from_det(0.5, 2.0, 2).unwrap(), 0.25, 1e-15));
        assert!(min_expansion_from_det(-1.0, 1.0, 2).is_err());
        assert!(min_expansion_from_det(2.0, 1.0, 2).is_err());
    }

    #[test]
    fn min_expansion_from_det_is_a_lower_bound() {
        for seed in 0..20 {
            let a = random_matrix(3, 1000 + seed);
            let b = a.norm();
            let eps = a.determinant().norm();
            let bound = min_expansion_from_det(eps, b, 3).unwrap();
            assert!(min_expansion(&a).unwrap() >= bound - 1e-12);
        }
    }

    #[test]
    fn super_multiplicativity_and_norm_order() {
        for seed in 0..20 {
            let a = random_matrix(4, 2000 + seed);
            let b = random_matrix(4, 3000 + seed);
            let ma = min_expansion(&a).unwrap();
            let mb = min_expansion(&b).unwrap();
            assert!(ma <= a.norm() + 1e-12);
            assert!(min_expansion(&a.mul(&b)).unwrap() >= ma * mb - 1e-12);
        }
    }

    #[test]
    fn perturbation_of_identity() {
        for seed in 0..20 {
            let p = random_matrix(3, 4000 + seed);
            let delta = 0.9;
            let p = p.scale(C64::new(delta / p.norm(), 0.0));
            let m = min_expansion(&Matrix::identity(3).add(&p)).unwrap();
            assert!(m >= 1.0 - delta - 1e-12);
        }
    }

    #[test]
    fn det_is_product_of_singular_values() {
        let a = random_matrix(5, 77);
        let s = singular_values(&a).unwrap();
        let prod: f64 = s.values().iter().product();
        let det = a.determinant().norm();
        assert!((det - prod).abs() <= 1e-9 * prod.max(1.0));
    }

    #[test]
    fn exterior_power_singular_value_product_law() {
        for (n, seed) in [(4usize, 11u64), (5, 12)] {
            let a = random_matrix(n, seed);
            let s = singular_values(&a).unwrap();
            for k in 1..=n {
                let e = exterior_power(&a, k).unwrap();
                let se = singular_values(&e).unwrap();
                // largest = product of top k, smallest = product of bottom k
                let top: f64 = s.values()[..k].iter().product();
                let bot: f64 = s.values()[n - k..].iter().product();
                assert!((se.norm() - top).abs() <= 1e-9 * top.max(1.0));
                assert!((se.min() - bot).abs() <= 1e-9 * top.max(1.0));
            }
        }
    }

    #[test]
    fn qr_positive_diagonal() {
        let a = random_matrix(4, 55);
        let (q, r) = qr_positive(&a);
        for i in 0..4 {
            let d = r.get(i, i);
            assert!(d.im.abs() < 1e-12 && d.re > 0.0);
        }
        assert!(q.mul(&r).sub(&a).max_abs() < 1e-12);
        // Q unitary
        assert!(q.adjoint().mul(&q).sub(&Matrix::identity(4)).max_abs() < 1e-12);
    }
}
