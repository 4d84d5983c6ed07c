//! Genericity certificates for matrix potentials: elementary symmetric
//! functions of matrices, exact jets of analytic matrix functions, and
//! the derivative matrix whose invertibility at one point certifies that
//! no single energy is an eigenvalue of V(x) for every x.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::LaurentMatrixFunction;
use crate::matrix::{exterior_power, Matrix, C64};

/// The jet (V(x), V'(x), ..., V^(d)(x)) of a matrix function at a torus
/// point, with derivatives taken in the torus chart d/dx.
#[derive(Debug, Clone)]
pub struct Jet {
    pub order: usize,
    pub values: Vec<Matrix>,
    pub x: f64,
}

/// (e_1(A), ..., e_d(A)) with e_k = (-1)^k tr(wedge_k A); these are the
/// coefficients of the characteristic polynomial in the convention
/// det(A - E I) = (-1)^d sum_k e_k(A) E^{d-k} with e_0 = 1.
pub fn elementary_symmetric(a: &Matrix) -> Result<Vec<C64>> {
    if !a.is_square() {
        return Err(Error::Dimension(
            "elementary symmetric functions need a square matrix".into(),
        ));
    }
    let d = a.rows();
    let mut out = Vec::with_capacity(d);
    for k in 1..=d {
        let wedge = exterior_power(a, k)?;
        let mut tr = C64::new(0.0, 0.0);
        for i in 0..wedge.rows() {
            tr += wedge.get(i, i);
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        out.push(tr * C64::new(sign, 0.0));
    }
    Ok(out)
}

/// Evaluates (-1)^d sum_{k=0}^d e_k E^{d-k} (with e_0 = 1), i.e.
/// det(A - E I) for the elementary symmetric values of A.
pub fn characteristic_eval(e: &[C64], energy: C64) -> C64 {
    let d = e.len();
    let mut acc = C64::new(1.0, 0.0);
    for ek in e {
        acc = acc * energy + ek;
    }
    if d % 2 == 1 {
        acc = -acc;
    }
    acc
}

/// The exact jet of V at x to the given order: the k-th derivative of
/// entry sum c_j z^j is sum c_j (2 pi i j)^k z^j at z = e^{2 pi i x}.
pub fn jet_of(v: &LaurentMatrixFunction, x: f64, order: usize) -> Jet {
    let two_pi_i = C64::new(0.0, 2.0 * std::f64::consts::PI);
    let z = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * x);
    let values = (0..=order)
        .map(|k| {
            Matrix::from_fn(v.rows(), v.cols(), |i, j| {
                let mut acc = C64::new(0.0, 0.0);
                for (deg, c) in v.entry(i, j).coeffs() {
                    let factor = (two_pi_i * C64::new(deg as f64, 0.0)).powu(k as u32);
                    acc += c * factor * z.powf(deg as f64);
                }
                acc
            })
        })
        .collect();
    Jet {
        order,
        values,
        x,
    }
}

/// Polynomials in a formal parameter t truncated at degree `deg`, with
/// matrix coefficients handled entrywise.
#[derive(Clone)]
struct PolyMatrix {
    /// coeffs[k] is the t^k coefficient, a dim x dim matrix.
    coeffs: Vec<Matrix>,
    dim: usize,
}

impl PolyMatrix {
    fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn identity(dim: usize, deg: usize) -> Self {
        let mut coeffs = vec![Matrix::zeros(dim, dim); deg + 1];
        coeffs[0] = Matrix::identity(dim);
        PolyMatrix { coeffs, dim }
    }

    fn mul(&self, rhs: &PolyMatrix) -> PolyMatrix {
        let deg = self.truncation();
        let mut coeffs = vec![Matrix::zeros(self.dim, self.dim); deg + 1];
        for a in 0..=deg {
            for b in 0..=(deg - a) {
                coeffs[a + b] = coeffs[a + b].add(&self.coeffs[a].mul(&rhs.coeffs[b]));
            }
        }
        PolyMatrix {
            coeffs,
            dim: self.dim,
        }
    }

    fn add_scalar_poly(&self, s: &[C64]) -> PolyMatrix {
        let mut out = self.clone();
        for (k, &c) in s.iter().enumerate() {
            if k < out.coeffs.len() {
                out.coeffs[k] = out.coeffs[k].add(&Matrix::identity(self.dim).scale(c));
            }
        }
        out
    }

    fn trace(&self) -> Vec<C64> {
        self.coeffs
            .iter()
            .map(|m| {
                let mut tr = C64::new(0.0, 0.0);
                for i in 0..self.dim {
                    tr += m.get(i, i);
                }
                tr
            })
            .collect()
    }
}

/// e_k of a matrix with truncated-polynomial entries, k = 1..d, via the
/// Faddeev-LeVerrier recursion carried over the polynomial ring.
fn elementary_symmetric_poly(a: &PolyMatrix) -> Vec<Vec<C64>> {
    let d = a.dim;
    let deg = a.truncation();
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(d);
    // char poly lambda^d + c_1 lambda^{d-1} + ... + c_d has c_k = e_k
    let mut m = PolyMatrix::identity(d, deg);
    let mut c_prev: Vec<C64> = vec![C64::new(0.0, 0.0); deg + 1];
    for k in 1..=d {
        let am = if k == 1 {
            a.clone()
        } else {
            a.mul(&m.add_scalar_poly(&c_prev))
        };
        let tr = am.trace();
        let ck: Vec<C64> = tr
            .iter()
            .map(|&t| -t / C64::new(k as f64, 0.0))
            .collect();
        m = am;
        c_prev = ck.clone();
        out.push(ck);
    }
    out
}

/// The d x d matrix whose (i, j) entry is the i-th derivative at x of
/// x -> e_j(V(x)), computed symbolically from the jet by expanding
/// t -> e_j(sum t^k / k! V^(k)(x)) in truncated polynomial arithmetic.
pub fn nondegeneracy_matrix(jet: &Jet) -> Result<Matrix> {
    let d = jet.order;
    if jet.values.len() != d + 1 {
        return Err(Error::InvalidInput(format!(
            "jet of order {d} must carry {} matrices",
            d + 1
        )));
    }
    let dim = jet.values[0].rows();
    if dim != d {
        return Err(Error::Dimension(format!(
            "nondegeneracy matrix needs jet order equal to the matrix dimension ({dim})"
        )));
    }
    // curve C(t) = sum t^k / k! V^(k)(x), truncated at degree d
    let mut factorial = 1.0;
    let mut coeffs = Vec::with_capacity(d + 1);
    for k in 0..=d {
        if k > 0 {
            factorial *= k as f64;
        }
        coeffs.push(jet.values[k].scale(C64::new(1.0 / factorial, 0.0)));
    }
    let curve = PolyMatrix { coeffs, dim };
    let e_polys = elementary_symmetric_poly(&curve);
    // row i: i-th t-derivative at 0, i.e. i! times the t^i coefficient
    let mut factorials = vec![1.0_f64; d + 1];
    for i in 1..=d {
        factorials[i] = factorials[i - 1] * i as f64;
    }
    Ok(Matrix::from_fn(d, d, |i, j| {
        e_polys[j][i + 1] * C64::new(factorials[i + 1], 0.0)
    }))
}

/// Outcome of the constant-eigenvalue scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GenericityCertificate {
    /// The derivative matrix is invertible at the witness point, which
    /// rules out constant eigenvalues.
    CertifiedYes { witness: f64, det_modulus: f64 },
    /// Degenerate at every scanned point; nothing can be concluded (the
    /// criterion is sufficient, not necessary).
    Inconclusive,
}

/// Scans torus points for one where the nondegeneracy matrix of the
/// order-d jet is invertible.
pub fn has_no_constant_eigenvalues(
    v: &LaurentMatrixFunction,
    scan: usize,
) -> Result<GenericityCertificate> {
    if v.rows() != v.cols() {
        return Err(Error::Dimension("square matrix function required".into()));
    }
    let d = v.rows();
    let scan = scan.max(1);
    for i in 0..scan {
        let x = i as f64 / scan as f64;
        let jet = jet_of(v, x, d);
        let nd = nondegeneracy_matrix(&jet)?;
        // scale the zero test by the product of row norms, so it errs
        // toward Inconclusive
        let mut scale = 1.0_f64;
        for r in 0..d {
            let row_norm: f64 = (0..d).map(|c| nd.get(r, c).norm().powi(2)).sum::<f64>().sqrt();
            scale *= row_norm.max(1e-300);
        }
        let det = nd.determinant().norm();
        if det > 1e-10 * scale {
            return Ok(GenericityCertificate::CertifiedYes {
                witness: x,
                det_modulus: det,
            });
        }
    }
    Ok(GenericityCertificate::Inconclusive)
}
