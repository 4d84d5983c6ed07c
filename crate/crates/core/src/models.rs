//! Cocycle families over an irrational circle rotation: block cocycles
//! with a distinguished corner, the 1d Schrödinger cocycle, the band
//! Jacobi cocycle and its adjugate-regularized and symplectic variants,
//! plus transfer-matrix products with overflow-safe rescaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::{constant_eigenvalues, LaurentMatrixFunction, LaurentScalar};
use crate::matrix::{adjugate, realify, Matrix, C64};

/// Phase-distance tolerance to the singular set of weighted models.
const SINGULAR_PHASE_TOL: f64 = 1e-9;

/// Rescale the running transfer product whenever its norm leaves this range.
const RESCALE_LO: f64 = 1.0 / 1024.0;
const RESCALE_HI: f64 = 1024.0;

/// The circle rotation x -> x + omega with omega checked irrational
/// (no rational p/q with q <= 10^6 within double precision).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    omega: f64,
}

impl Rotation {
    pub fn new(omega: f64) -> Result<Self> {
        if !(0.0 < omega && omega < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rotation number {omega} must lie in (0,1)"
            )));
        }
        // continued-fraction expansion: stop once denominators exceed 10^6;
        // hitting an (effectively) exact convergent before that means omega
        // is rational with small denominator
        let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
        let mut y = omega;
        loop {
            let a = y.floor();
            let p2 = a as i64 * p1 + p0;
            let q2 = a as i64 * q1 + q0;
            if q2 > 1_000_000 {
                break;
            }
            if q2 > 0 && (omega - p2 as f64 / q2 as f64).abs() < 1e-12 / q2 as f64 {
                return Err(Error::InvalidInput(format!(
                    "rotation number {omega} is rational ({p2}/{q2})"
                )));
            }
            let frac = y - a;
            if frac < 1e-15 {
                return Err(Error::InvalidInput(format!(
                    "rotation number {omega} is rational"
                )));
            }
            y = 1.0 / frac;
            p0 = p1;
            q0 = q1;
            p1 = p2;
            q1 = q2;
        }
        Ok(Rotation { omega })
    }

    /// The inverse golden mean (sqrt(5) - 1)/2, the default test frequency.
    pub fn golden() -> Self {
        Rotation {
            omega: (5.0_f64.sqrt() - 1.0) / 2.0,
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// One rotation step in the annulus variable: z -> z e^{2 pi i omega}.
    pub fn step(&self, z: C64) -> C64 {
        z * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * self.omega)
    }
}

/// Family tag for reporting and the CLI config format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CocycleKind {
    ALambda,
    ALambdaE,
    Schrodinger1d,
    BandJacobi,
    AdjugateRegularized,
    SymplecticWeighted,
    Scalar,
}

#[derive(Debug, Clone)]
enum Generator {
    /// A matrix function evaluated as-is (scalar and constant cocycles).
    Direct(LaurentMatrixFunction),
    ALambda {
        v: LaurentMatrixFunction,
        wb: LaurentMatrixFunction,
        ws: LaurentMatrixFunction,
        o: LaurentMatrixFunction,
    },
    ALambdaE {
        u: LaurentMatrixFunction,
        v: LaurentMatrixFunction,
        wb: LaurentMatrixFunction,
        ws: LaurentMatrixFunction,
        o: LaurentMatrixFunction,
    },
    Schrodinger {
        v: LaurentScalar,
    },
    Jacobi {
        w: LaurentMatrixFunction,
        /// W composed with the rotation (i.e. W(z + omega)).
        w_rot: LaurentMatrixFunction,
        /// g = det W and its rotate, for the regularized variant.
        g: LaurentScalar,
        g_rot: LaurentScalar,
        /// lambda V = lambda D - R, precomputed over the Laurent ring.
        lambda_v: LaurentMatrixFunction,
        variant: JacobiVariant,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JacobiVariant {
    Plain,
    Adjugate,
    Symplectic,
}

/// A quasi-periodic cocycle z -> A(z) over a rotation, with a designated
/// d x d upper-left corner block inside the m x m generator.
#[derive(Debug, Clone)]
pub struct BlockCocycle {
    kind: CocycleKind,
    m: usize,
    d: usize,
    lambda: f64,
    /// Energy in the operator's original units.
    e: f64,
    rot: Rotation,
    rho: f64,
    realified: bool,
    generator: Generator,
}

fn check_dims(name: &str, f: &LaurentMatrixFunction, rows: usize, cols: usize) -> Result<()> {
    if f.rows() != rows || f.cols() != cols {
        return Err(Error::Dimension(format!(
            "block {name} must be {rows}x{cols}, got {}x{}",
            f.rows(),
            f.cols()
        )));
    }
    Ok(())
}

fn check_det_not_identically_zero(name: &str, f: &LaurentMatrixFunction) -> Result<()> {
    let det = f.determinant()?;
    if det.is_negligible(1e-12 * f.max_abs_coeff().max(1.0)) {
        return Err(Error::TransversalityViolation(format!(
            "det {name} is identically zero"
        )));
    }
    Ok(())
}

fn check_no_constant_eigenvalues(name: &str, v: &LaurentMatrixFunction) -> Result<()> {
    let eigs = constant_eigenvalues(v)?;
    if !eigs.is_empty() {
        return Err(Error::TransversalityViolation(format!(
            "{name} has constant eigenvalue(s): {eigs:?}"
        )));
    }
    Ok(())
}

impl BlockCocycle {
    /// Block cocycle with corner lambda V and prescribed off-blocks.
    pub fn build_a_lambda(
        v: LaurentMatrixFunction,
        wb: LaurentMatrixFunction,
        ws: LaurentMatrixFunction,
        o: LaurentMatrixFunction,
        lambda: f64,
        rot: Rotation,
    ) -> Result<Self> {
        let d = v.rows();
        check_dims("V", &v, d, d)?;
        let md = wb.cols();
        check_dims("Wb", &wb, d, md)?;
        check_dims("Ws", &ws, md, d)?;
        check_dims("O", &o, md, md)?;
        check_det_not_identically_zero("V", &v)?;
        let rho = v.rho();
        Ok(BlockCocycle {
            kind: CocycleKind::ALambda,
            m: d + md,
            d,
            lambda,
            e: 0.0,
            rot,
            rho,
            realified: false,
            generator: Generator::ALambda { v, wb, ws, o },
        })
    }

    /// Block cocycle with corner lambda U (V - E I).
    pub fn build_a_lambda_e(
        u: LaurentMatrixFunction,
        v: LaurentMatrixFunction,
        wb: LaurentMatrixFunction,
        ws: LaurentMatrixFunction,
        o: LaurentMatrixFunction,
        lambda: f64,
        e: f64,
        rot: Rotation,
    ) -> Result<Self> {
        let d = v.rows();
        check_dims("V", &v, d, d)?;
        check_dims("U", &u, d, d)?;
        let md = wb.cols();
        check_dims("Wb", &wb, d, md)?;
        check_dims("Ws", &ws, md, d)?;
        check_dims("O", &o, md, md)?;
        if !v.is_symmetric() && !v.is_hermitian_on_torus() {
            return Err(Error::InvalidInput(
                "V must be symmetric or Hermitian-valued".into(),
            ));
        }
        check_det_not_identically_zero("U", &u)?;
        check_no_constant_eigenvalues("V", &v)?;
        let rho = v.rho();
        Ok(BlockCocycle {
            kind: CocycleKind::ALambdaE,
            m: d + md,
            d,
            lambda,
            e,
            rot,
            rho,
            realified: false,
            generator: Generator::ALambdaE { u, v, wb, ws, o },
        })
    }

    /// The SL(2) Schrödinger cocycle [[lambda v - E, -1], [1, 0]].
    pub fn build_schrodinger_1d(v: LaurentScalar, lambda: f64, e: f64, rot: Rotation) -> Self {
        BlockCocycle {
            kind: CocycleKind::Schrodinger1d,
            m: 2,
            d: 1,
            lambda,
            e,
            rot,
            rho: 0.5,
            realified: false,
            generator: Generator::Schrodinger { v },
        }
    }

    fn build_jacobi_family(
        w: LaurentMatrixFunction,
        r: LaurentMatrixFunction,
        d_blk: LaurentMatrixFunction,
        lambda: f64,
        e: f64,
        rot: Rotation,
        variant: JacobiVariant,
        kind: CocycleKind,
    ) -> Result<Self> {
        let d = d_blk.rows();
        check_dims("D", &d_blk, d, d)?;
        check_dims("W", &w, d, d)?;
        check_dims("R", &r, d, d)?;
        if !d_blk.is_symmetric() && !d_blk.is_hermitian_on_torus() {
            return Err(Error::InvalidInput(
                "D must be symmetric or Hermitian-valued".into(),
            ));
        }
        if lambda <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "coupling lambda={lambda} must be positive"
            )));
        }
        check_det_not_identically_zero("W", &w)?;
        check_no_constant_eigenvalues("D", &d_blk)?;
        let rho = d_blk.rho();
        // lambda V = lambda (D - R/lambda) = lambda D - R
        let mut lambda_v = LaurentMatrixFunction::zero(d, d, rho);
        for i in 0..d {
            for j in 0..d {
                *lambda_v.entry_mut(i, j) = d_blk
                    .entry(i, j)
                    .scale(C64::new(lambda, 0.0))
                    .sub(r.entry(i, j));
            }
        }
        let w_rot = w.rotate(rot.omega());
        let g = w.determinant()?;
        let g_rot = w_rot.determinant()?;
        Ok(BlockCocycle {
            kind,
            m: 2 * d,
            d,
            lambda,
            e,
            rot,
            rho,
            realified: false,
            generator: Generator::Jacobi {
                w,
                w_rot,
                g,
                g_rot,
                lambda_v,
                variant,
            },
        })
    }

    /// Band Jacobi cocycle; E is in the operator's units (internally the
    /// corner carries lambda V - E I = lambda (V - (E/lambda) I)).
    pub fn build_band_jacobi(
        w: LaurentMatrixFunction,
        r: LaurentMatrixFunction,
        d_blk: LaurentMatrixFunction,
        lambda: f64,
        e: f64,
        rot: Rotation,
    ) -> Result<Self> {
        Self::build_jacobi_family(
            w,
            r,
            d_blk,
            lambda,
            e,
            rot,
            JacobiVariant::Plain,
            CocycleKind::BandJacobi,
        )
    }

    /// Adjugate-regularized variant: det W (z+omega) times the Jacobi
    /// generator, holomorphic everywhere on the annulus.
    pub fn build_adjugate_regularized(
        w: LaurentMatrixFunction,
        r: LaurentMatrixFunction,
        d_blk: LaurentMatrixFunction,
        lambda: f64,
        e: f64,
        rot: Rotation,
    ) -> Result<Self> {
        Self::build_jacobi_family(
            w,
            r,
            d_blk,
            lambda,
            e,
            rot,
            JacobiVariant::Adjugate,
            CocycleKind::AdjugateRegularized,
        )
    }

    /// The symplectic conjugate of the Jacobi cocycle by C = diag(W, I).
    pub fn build_symplectic_weighted(
        w: LaurentMatrixFunction,
        r: LaurentMatrixFunction,
        d_blk: LaurentMatrixFunction,
        lambda: f64,
        e: f64,
        rot: Rotation,
    ) -> Result<Self> {
        Self::build_jacobi_family(
            w,
            r,
            d_blk,
            lambda,
            e,
            rot,
            JacobiVariant::Symplectic,
            CocycleKind::SymplecticWeighted,
        )
    }

    /// One-dimensional cocycle given by a scalar function.
    pub fn scalar(f: LaurentScalar, rot: Rotation, rho: f64) -> Self {
        BlockCocycle {
            kind: CocycleKind::Scalar,
            m: 1,
            d: 1,
            lambda: 1.0,
            e: 0.0,
            rot,
            rho,
            realified: false,
            generator: Generator::Direct(LaurentMatrixFunction::scalar(f, rho)),
        }
    }

    /// Cocycle given directly by a matrix-valued function (constant
    /// cocycles are the constant special case).
    pub fn from_matrix_function(f: LaurentMatrixFunction, rot: Rotation) -> Result<Self> {
        if f.rows() != f.cols() {
            return Err(Error::Dimension("generator must be square".into()));
        }
        let m = f.rows();
        let rho = f.rho();
        Ok(BlockCocycle {
            kind: CocycleKind::Scalar,
            m,
            d: m,
            lambda: 1.0,
            e: 0.0,
            rot,
            rho,
            realified: false,
            generator: Generator::Direct(f),
        })
    }

    pub fn from_constant_matrix(a: &Matrix, rot: Rotation) -> Result<Self> {
        Self::from_matrix_function(LaurentMatrixFunction::constant(a, 0.5), rot)
    }

    /// The same cocycle with every generator value realified (complex
    /// entries become 2x2 real blocks; ambient dimension doubles).
    pub fn realified(mut self) -> Self {
        self.realified = true;
        self
    }

    pub fn kind(&self) -> CocycleKind {
        self.kind
    }

    pub fn corner_dim(&self) -> usize {
        self.d
    }

    /// Dimension of the matrices the cocycle actually produces.
    pub fn ambient_dim(&self) -> usize {
        if self.realified {
            2 * self.m
        } else {
            self.m
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn energy(&self) -> f64 {
        self.e
    }

    pub fn rotation(&self) -> Rotation {
        self.rot
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Zeros of det W near the unit circle (the singular phase set); empty
    /// for every other family.
    pub fn singular_phases(&self) -> Result<Vec<C64>> {
        match &self.generator {
            Generator::Jacobi {
                g,
                variant: JacobiVariant::Plain | JacobiVariant::Symplectic,
                ..
            } => Ok(crate::laurent::zeros_in_annulus(g, self.rho.min(0.9))?
                .zeros
                .iter()
                .map(|z| z.location())
                .collect()),
            _ => Ok(vec![]),
        }
    }

    fn invert_weight(&self, w: &LaurentMatrixFunction, g: &LaurentScalar, z: C64) -> Result<Matrix> {
        let det = g.evaluate_unchecked(z);
        let tol = SINGULAR_PHASE_TOL * g.max_abs_coeff().max(1e-300);
        if det.norm() <= tol {
            return Err(Error::SingularPhase {
                re: z.re,
                im: z.im,
                modulus: det.norm(),
            });
        }
        let m = w.evaluate(z)?;
        m.try_inverse()
            .ok_or_else(|| Error::SingularPhase {
                re: z.re,
                im: z.im,
                modulus: det.norm(),
            })
    }

    /// The generator A(z).
    pub fn evaluate(&self, z: C64) -> Result<Matrix> {
        let a = self.evaluate_complex(z)?;
        Ok(if self.realified { realify(&a) } else { a })
    }

    fn evaluate_complex(&self, z: C64) -> Result<Matrix> {
        let lam = C64::new(self.lambda, 0.0);
        match &self.generator {
            Generator::Direct(f) => f.evaluate(z),
            Generator::ALambda { v, wb, ws, o } => {
                let top_left = v.evaluate(z)?.scale(lam);
                Ok(Matrix::from_blocks(
                    &top_left,
                    &wb.evaluate(z)?,
                    &ws.evaluate(z)?,
                    &o.evaluate(z)?,
                ))
            }
            Generator::ALambdaE { u, v, wb, ws, o } => {
                let shifted = v
                    .evaluate(z)?
                    .sub(&Matrix::identity(self.d).scale(C64::new(self.e, 0.0)));
                let top_left = u.evaluate(z)?.mul(&shifted).scale(lam);
                Ok(Matrix::from_blocks(
                    &top_left,
                    &wb.evaluate(z)?,
                    &ws.evaluate(z)?,
                    &o.evaluate(z)?,
                ))
            }
            Generator::Schrodinger { v } => {
                let top = lam * v.evaluate(z)? - C64::new(self.e, 0.0);
                Ok(Matrix::from_complex_rows(
                    2,
                    2,
                    &[
                        top,
                        C64::new(-1.0, 0.0),
                        C64::new(1.0, 0.0),
                        C64::new(0.0, 0.0),
                    ],
                ))
            }
            Generator::Jacobi {
                w,
                w_rot,
                g,
                g_rot,
                lambda_v,
                variant,
            } => {
                let d = self.d;
                // corner factor lambda V(z) - E I = lambda D - R - E I
                let corner_core = lambda_v
                    .evaluate(z)?
                    .sub(&Matrix::identity(d).scale(C64::new(self.e, 0.0)));
                let wt = w.evaluate(z)?.transpose();
                match variant {
                    JacobiVariant::Plain => {
                        let w_inv = self.invert_weight(w_rot, g_rot, z)?;
                        Ok(Matrix::from_blocks(
                            &w_inv.mul(&corner_core),
                            &w_inv.mul(&wt).scale(C64::new(-1.0, 0.0)),
                            &Matrix::identity(d),
                            &Matrix::zeros(d, d),
                        ))
                    }
                    JacobiVariant::Adjugate => {
                        let w_adj = adjugate(&w_rot.evaluate(z)?)?;
                        let gz = g_rot.evaluate_unchecked(z);
                        Ok(Matrix::from_blocks(
                            &w_adj.mul(&corner_core),
                            &w_adj.mul(&wt).scale(C64::new(-1.0, 0.0)),
                            &Matrix::identity(d).scale(gz),
                            &Matrix::zeros(d, d),
                        ))
                    }
                    JacobiVariant::Symplectic => {
                        let w_inv = self.invert_weight(w, g, z)?;
                        Ok(Matrix::from_blocks(
                            &corner_core.mul(&w_inv),
                            &wt.scale(C64::new(-1.0, 0.0)),
                            &w_inv,
                            &Matrix::zeros(d, d),
                        ))
                    }
                }
            }
        }
    }
}

/// A rescaled transfer product M_n(z) = A(z_{n-1}) ... A(z_0) with exact
/// log bookkeeping; exp(log_scale) * matrix is the true product.
#[derive(Debug, Clone)]
pub struct TransferProduct {
    pub n: usize,
    pub log_scale: f64,
    pub matrix: Matrix,
}

impl TransferProduct {
    /// (1/n) log ||M_n||, the finite-n top-exponent estimate.
    pub fn log_norm_rate(&self) -> f64 {
        (self.log_scale + self.matrix.norm().ln()) / self.n as f64
    }

    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.matrix.norm().ln()
    }
}

/// The ordered product of the first n generator values along the rotation
/// orbit of z, renormalized to avoid overflow.
pub fn transfer(c: &BlockCocycle, z: C64, n: usize) -> Result<TransferProduct> {
    if n == 0 {
        return Err(Error::InvalidInput("transfer length n must be >= 1".into()));
    }
    let mut phase = z;
    let mut matrix = c.evaluate(phase)?;
    let mut log_scale = 0.0_f64;
    let renorm = |m: &mut Matrix, log_scale: &mut f64, force: bool| {
        let nrm = m.norm();
        if nrm > 0.0 && (force || !(RESCALE_LO..=RESCALE_HI).contains(&nrm)) {
            *log_scale += nrm.ln();
            *m = m.scale(C64::new(1.0 / nrm, 0.0));
        }
    };
    renorm(&mut matrix, &mut log_scale, false);
    for _ in 1..n {
        phase = c.rotation().step(phase);
        matrix = c.evaluate(phase)?.mul(&matrix);
        renorm(&mut matrix, &mut log_scale, false);
    }
    renorm(&mut matrix, &mut log_scale, true);
    if !matrix.is_finite() {
        return Err(Error::InvalidInput(
            "transfer product produced non-finite entries".into(),
        ));
    }
    Ok(TransferProduct {
        n,
        log_scale,
        matrix,
    })
}
