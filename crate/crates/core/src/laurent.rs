//! Finite Laurent-series representation of analytic functions on the
//! torus with holomorphic extension to annuli around the unit circle,
//! together with the annulus measurements (zero counts, factored
//! minimum modulus, good circles) used by the certified bounds.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, C64};

/// Relative tolerance used when clustering nearby roots into one zero
/// with multiplicity.
const CLUSTER_TOL: f64 = 1e-7;

/// Tolerance collapsing the closed/strict annulus-membership distinction.
const MEMBERSHIP_TOL: f64 = 1e-9;

/// A finite Laurent polynomial f(z) = sum c_k z^k, holomorphic on C \ {0}.
///
/// On the unit circle z = e^{2 pi i x} this is a trigonometric polynomial
/// in x; it is real-valued there exactly when c_{-k} = conj(c_k).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaurentScalar {
    coeffs: BTreeMap<i64, C64>,
}

impl LaurentScalar {
    pub fn zero() -> Self {
        LaurentScalar::default()
    }

    pub fn constant(c: C64) -> Self {
        let mut f = LaurentScalar::default();
        f.set(0, c);
        f
    }

    pub fn real_constant(c: f64) -> Self {
        Self::constant(C64::new(c, 0.0))
    }

    pub fn monomial(k: i64, c: C64) -> Self {
        let mut f = LaurentScalar::default();
        f.set(k, c);
        f
    }

    /// 2 cos(2 pi x) = z + 1/z.
    pub fn two_cos() -> Self {
        let mut f = LaurentScalar::default();
        f.set(1, C64::new(1.0, 0.0));
        f.set(-1, C64::new(1.0, 0.0));
        f
    }

    /// cos(2 pi x) = (z + 1/z)/2.
    pub fn cos() -> Self {
        Self::two_cos().scale(C64::new(0.5, 0.0))
    }

    /// Monic product of (z - r) over the given roots.
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut f = LaurentScalar::constant(C64::new(1.0, 0.0));
        for &r in roots {
            let mut factor = LaurentScalar::monomial(1, C64::new(1.0, 0.0));
            factor.set(0, -r);
            f = f.mul(&factor);
        }
        f
    }

    pub fn set(&mut self, k: i64, c: C64) {
        if c == C64::new(0.0, 0.0) {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, c);
        }
    }

    pub fn coeff(&self, k: i64) -> C64 {
        self.coeffs.get(&k).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (k, c))
    }

    pub fn min_degree(&self) -> i64 {
        self.coeffs.keys().next().copied().unwrap_or(0)
    }

    pub fn max_degree(&self) -> i64 {
        self.coeffs.keys().next_back().copied().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Treats coefficients below `tol` (relative to the largest) as noise.
    pub fn is_negligible(&self, tol: f64) -> bool {
        self.max_abs_coeff() <= tol
    }

    /// Whether c_{-k} = conj(c_k) holds, i.e. f is real on the unit circle.
    pub fn is_real_on_torus(&self) -> bool {
        self.coeffs
            .iter()
            .all(|(&k, &c)| (self.coeff(-k) - c.conj()).norm() <= 1e-14 * self.max_abs_coeff().max(1.0))
    }

    pub fn add(&self, rhs: &LaurentScalar) -> LaurentScalar {
        let mut out = self.clone();
        for (&k, &c) in &rhs.coeffs {
            out.set(k, out.coeff(k) + c);
        }
        out
    }

    pub fn sub(&self, rhs: &LaurentScalar) -> LaurentScalar {
        self.add(&rhs.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> LaurentScalar {
        let mut out = LaurentScalar::default();
        for (&k, &c) in &self.coeffs {
            out.set(k, c * s);
        }
        out
    }

    pub fn mul(&self, rhs: &LaurentScalar) -> LaurentScalar {
        let mut out = LaurentScalar::default();
        for (&k1, &c1) in &self.coeffs {
            for (&k2, &c2) in &rhs.coeffs {
                out.set(k1 + k2, out.coeff(k1 + k2) + c1 * c2);
            }
        }
        out
    }

    /// Torus-chart derivative: d/dx of f(e^{2 pi i x}), i.e. c_k -> 2 pi i k c_k.
    pub fn derivative_torus(&self) -> LaurentScalar {
        let mut out = LaurentScalar::default();
        for (&k, &c) in &self.coeffs {
            out.set(k, c * C64::new(0.0, 2.0 * std::f64::consts::PI * k as f64));
        }
        out
    }

    /// Complex derivative d/dz.
    pub fn derivative_z(&self) -> LaurentScalar {
        let mut out = LaurentScalar::default();
        for (&k, &c) in &self.coeffs {
            if k != 0 {
                out.set(k - 1, c * C64::new(k as f64, 0.0));
            }
        }
        out
    }

    /// Horner evaluation in z (nonnegative degrees) and 1/z (negative).
    pub fn evaluate(&self, z: C64) -> Result<C64> {
        if z == C64::new(0.0, 0.0) {
            return Err(Error::Domain("Laurent evaluation at z = 0".into()));
        }
        Ok(self.evaluate_unchecked(z))
    }

    pub(crate) fn evaluate_unchecked(&self, z: C64) -> C64 {
        let mut pos = C64::new(0.0, 0.0);
        let max_pos = self.max_degree().max(0);
        if max_pos > 0 {
            for k in (1..=max_pos).rev() {
                pos = pos * z + self.coeff(k);
            }
            pos *= z;
        }
        let mut neg = C64::new(0.0, 0.0);
        let min_neg = self.min_degree().min(0);
        if min_neg < 0 {
            // Horner in w = 1/z: sum_{j=1..-min_neg} c_{-j} w^j
            let w = C64::new(1.0, 0.0) / z;
            for j in (1..=(-min_neg)).rev() {
                neg = neg * w + self.coeff(-j);
            }
            neg *= w;
        }
        pos + neg + self.coeff(0)
    }

    pub fn evaluate_at_phase(&self, x: f64) -> C64 {
        let z = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * x);
        self.evaluate_unchecked(z)
    }

    /// Coefficients of the ordinary polynomial z^m f(z), ascending degree,
    /// where m = -min_degree (0 for a plain polynomial).
    pub fn to_polynomial(&self) -> (Vec<C64>, i64) {
        if self.is_zero() {
            return (vec![], 0);
        }
        let m = (-self.min_degree()).max(0);
        let deg = (self.max_degree() + m) as usize;
        let mut coeffs = vec![C64::new(0.0, 0.0); deg + 1];
        for (&k, &c) in &self.coeffs {
            coeffs[(k + m) as usize] = c;
        }
        (coeffs, m)
    }
}

/// A zero with multiplicity obtained by clustering nearby roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub location_re: f64,
    pub location_im: f64,
    pub multiplicity: usize,
}

impl Zero {
    pub fn location(&self) -> C64 {
        C64::new(self.location_re, self.location_im)
    }
}

/// Divisor of f on an annulus: zeros with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ZeroDivisor {
    pub zeros: Vec<Zero>,
}

impl ZeroDivisor {
    pub fn total_count(&self) -> usize {
        self.zeros.iter().map(|z| z.multiplicity).sum()
    }
}

/// Annulus measurements (N_rho, beta_rho) of a scalar function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusMeasurements {
    /// Zero count (with multiplicity) in the closed annulus A_rho.
    pub n: usize,
    /// Minimum modulus over A_rho of the function with nearby zeros
    /// factored out; always positive.
    pub beta: f64,
    pub rho: f64,
    /// Outer analyticity radius parameter used for the factoring.
    pub r_outer: f64,
}

/// Roots of the polynomial with the given ascending coefficients, via
/// companion-matrix eigenvalues followed by Newton polishing.
pub fn polynomial_roots(coeffs: &[C64]) -> Vec<C64> {
    let max_abs = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max_abs == 0.0 {
        return vec![];
    }
    // strip negligible leading coefficients (they produce spurious huge roots)
    let mut hi = coeffs.len();
    while hi > 0 && coeffs[hi - 1].norm() <= 1e-14 * max_abs {
        hi -= 1;
    }
    // strip zero trailing coefficients: roots at the origin, reported as such
    let mut lo = 0;
    while lo < hi && coeffs[lo].norm() == 0.0 {
        lo += 1;
    }
    let c = &coeffs[lo..hi];
    let deg = c.len().saturating_sub(1);
    let mut roots: Vec<C64> = vec![C64::new(0.0, 0.0); lo];
    if deg == 0 {
        return roots;
    }
    // The QR iteration can stall on companion matrices with symmetric
    // eigenvalue configurations (e.g. polynomials in z^2, whose roots come
    // in +- pairs), so bound the iterations and, on failure, retry on the
    // shifted polynomial p(w + s) — a generic shift breaks the symmetry.
    let mut shifted: Vec<C64> = c.to_vec();
    let mut total_shift = C64::new(0.0, 0.0);
    let radius_scale = 1.0
        + c[..deg]
            .iter()
            .map(|a| (a / c[deg]).norm())
            .fold(0.0, f64::max);
    for attempt in 0..6 {
        if let Some(eigen) = companion_eigenvalues(&shifted) {
            for &e in eigen.iter() {
                roots.push(polish_root(c, e + total_shift));
            }
            return roots;
        }
        let s = C64::from_polar(
            0.37 * radius_scale * (attempt + 1) as f64,
            2.399963 * (attempt + 1) as f64,
        );
        shifted = taylor_shift(c, s);
        total_shift = s;
    }
    // every shift stalled; only the origin roots are reported
    roots
}

/// Eigenvalues of the companion matrix, or None if the QR iteration does
/// not converge within the cap.
fn companion_eigenvalues(c: &[C64]) -> Option<Vec<C64>> {
    let deg = c.len() - 1;
    let lead = c[deg];
    let mut companion = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -c[i] / lead;
    }
    let schur = nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 200 * deg.max(4))?;
    let eigen = schur.eigenvalues()?;
    Some(eigen.iter().copied().collect())
}

/// Coefficients of p(w + s) from those of p(z).
fn taylor_shift(c: &[C64], s: C64) -> Vec<C64> {
    let n = c.len();
    let mut out = c.to_vec();
    // repeated synthetic division (Horner/Ruffini) accumulates the Taylor
    // coefficients of p at s
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let next = out[j + 1];
            out[j] = out[j] + next * s;
        }
    }
    out
}

/// A few Newton steps on the polynomial, kept only if they reduce |p|.
fn polish_root(coeffs: &[C64], mut z: C64) -> C64 {
    let eval = |z: C64| -> (C64, C64) {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for &c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    let (mut best_val, _) = eval(z);
    let mut best = z;
    for _ in 0..8 {
        let (p, dp) = eval(z);
        if dp.norm() == 0.0 {
            break;
        }
        z -= p / dp;
        let (pn, _) = eval(z);
        if pn.norm() < best_val.norm() {
            best_val = pn;
            best = z;
        } else {
            break;
        }
    }
    best
}

/// Cluster nearby roots into zeros with multiplicities.
pub fn cluster_roots(roots: &[C64]) -> ZeroDivisor {
    let mut sorted: Vec<C64> = roots.to_vec();
    sorted.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    for &r in &sorted {
        let mut placed = false;
        for (center, count) in clusters.iter_mut() {
            let tol = CLUSTER_TOL * center.norm().max(1.0);
            if (r - *center).norm() <= tol {
                // running mean keeps the cluster centered
                let n = *count as f64;
                *center = (*center * C64::new(n, 0.0) + r) / C64::new(n + 1.0, 0.0);
                *count += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push((r, 1));
        }
    }
    ZeroDivisor {
        zeros: clusters
            .into_iter()
            .map(|(c, m)| Zero {
                location_re: c.re,
                location_im: c.im,
                multiplicity: m,
            })
            .collect(),
    }
}

/// All zeros of f in C \ {0} (roots of z^m f(z), excluding the origin).
pub fn all_zeros(f: &LaurentScalar) -> Result<ZeroDivisor> {
    if f.is_zero() {
        return Err(Error::InvalidInput(
            "zero finding on the identically-zero function".into(),
        ));
    }
    let (coeffs, _) = f.to_polynomial();
    let roots: Vec<C64> = polynomial_roots(&coeffs)
        .into_iter()
        .filter(|z| z.norm() > 1e-12)
        .collect();
    Ok(cluster_roots(&roots))
}

/// Zeros of f in the annulus 1-r <= |z| <= 1+r, with multiplicities.
pub fn zeros_in_annulus(f: &LaurentScalar, r: f64) -> Result<ZeroDivisor> {
    if !(0.0 < r && r < 1.0) {
        return Err(Error::InvalidInput(format!(
            "annulus half-width r={r} must lie in (0,1)"
        )));
    }
    let div = all_zeros(f)?;
    Ok(ZeroDivisor {
        zeros: div
            .zeros
            .into_iter()
            .filter(|z| (z.location().norm() - 1.0).abs() <= r + MEMBERSHIP_TOL)
            .collect(),
    })
}

fn min_modulus_on_circle_raw(f: &LaurentScalar, radius: f64, samples: usize) -> (f64, f64) {
    let mut best = f64::INFINITY;
    let mut best_theta = 0.0;
    for j in 0..samples {
        let theta = (j as f64 + 0.5) / samples as f64;
        let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * theta);
        let v = f.evaluate_unchecked(z).norm();
        if v < best {
            best = v;
            best_theta = theta;
        }
    }
    (best, best_theta)
}

/// Golden-section polish of theta -> |f(r e^{2 pi i theta})| around a seed.
fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimum modulus of f on the circle of the given radius.
pub fn min_modulus_on_circle(f: &LaurentScalar, radius: f64, samples: usize) -> f64 {
    let (coarse, theta) = min_modulus_on_circle_raw(f, radius, samples);
    let h = 1.5 / samples as f64;
    let (_, polished) = golden_min(
        |t| {
            let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * t);
            f.evaluate_unchecked(z).norm()
        },
        theta - h,
        theta + h,
        60,
    );
    coarse.min(polished)
}

/// Winding number of f along the circle of the given radius, computed by
/// tracking the continuous argument. Fails if a zero sits on the circle.
fn winding_number(f: &LaurentScalar, radius: f64, scale: f64) -> Result<i64> {
    // polished scan catches zeros sitting exactly on the circle, which a
    // coarse grid would step over
    let polished_min = min_modulus_on_circle(f, radius, 4096);
    if polished_min <= 1e-9 * scale {
        return Err(Error::BoundaryDegenerate {
            radius,
            modulus: polished_min,
        });
    }
    let mut samples = 512usize;
    loop {
        let min_mod = min_modulus_on_circle_raw(f, radius, samples).0;
        if min_mod <= 1e-9 * scale {
            return Err(Error::BoundaryDegenerate {
                radius,
                modulus: min_mod,
            });
        }
        let mut total = 0.0_f64;
        let mut ok = true;
        let mut prev = f.evaluate_unchecked(C64::new(radius, 0.0));
        for j in 1..=samples {
            let theta = j as f64 / samples as f64;
            let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * theta);
            let cur = f.evaluate_unchecked(z);
            let step = (cur / prev).arg();
            if step.abs() > std::f64::consts::FRAC_PI_2 {
                ok = false;
                break;
            }
            total += step;
            prev = cur;
        }
        if ok {
            let winding = total / (2.0 * std::f64::consts::PI);
            let nearest = winding.round();
            if (winding - nearest).abs() >= 0.01 {
                return Err(Error::InvalidInput(format!(
                    "winding number {winding} did not settle near an integer"
                )));
            }
            return Ok(nearest as i64);
        }
        samples *= 2;
        if samples > (1 << 22) {
            return Err(Error::InvalidInput(
                "argument tracking failed to resolve the winding number".into(),
            ));
        }
    }
}

/// Zero count (with multiplicity) of f in the annulus r_inner <= |z| <= r_outer
/// via the argument principle on the two boundary circles.
pub fn count_zeros_by_argument_principle(
    f: &LaurentScalar,
    r_inner: f64,
    r_outer: f64,
) -> Result<i64> {
    if f.is_zero() {
        return Err(Error::InvalidInput(
            "argument-principle count of the identically-zero function".into(),
        ));
    }
    if !(0.0 < r_inner && r_inner < r_outer) {
        return Err(Error::InvalidInput(format!(
            "need 0 < r_inner < r_outer, got [{r_inner}, {r_outer}]"
        )));
    }
    let scale = f.max_abs_coeff();
    let outer = winding_number(f, r_outer, scale)?;
    let inner = winding_number(f, r_inner, scale)?;
    Ok(outer - inner)
}

/// The factored function g = f / prod ((z - z_j)/(2(R+1)))^{n_j} over the
/// zeros with | |z_j| - 1 | < divide_radius.
struct FactoredFunction<'a> {
    f: &'a LaurentScalar,
    factored: Vec<Zero>,
    normalization: f64,
}

impl<'a> FactoredFunction<'a> {
    fn new(f: &'a LaurentScalar, divisor: &ZeroDivisor, divide_radius: f64, r_outer: f64) -> Self {
        let factored: Vec<Zero> = divisor
            .zeros
            .iter()
            .filter(|z| (z.location().norm() - 1.0).abs() < divide_radius + MEMBERSHIP_TOL)
            .cloned()
            .collect();
        FactoredFunction {
            f,
            factored,
            normalization: 2.0 * (r_outer + 1.0),
        }
    }

    fn modulus(&self, z: C64) -> f64 {
        let mut v = self.f.evaluate_unchecked(z).norm();
        for zero in &self.factored {
            let d = (z - zero.location()).norm() / self.normalization;
            // near a factored zero the quotient is evaluated by the
            // derivative limit below; away from it plain division is stable
            v /= d.powi(zero.multiplicity as i32);
        }
        if v.is_finite() {
            v
        } else {
            self.modulus_near_zero(z)
        }
    }

    /// Fallback when z coincides with a factored zero: use a small offset.
    fn modulus_near_zero(&self, z: C64) -> f64 {
        let eps = 1e-9;
        let mut acc = 0.0_f64;
        for dir in 0..4 {
            let angle = std::f64::consts::FRAC_PI_2 * dir as f64;
            let zz = z + C64::from_polar(eps, angle);
            let mut v = self.f.evaluate_unchecked(zz).norm();
            for zero in &self.factored {
                let d = (zz - zero.location()).norm() / self.normalization;
                v /= d.powi(zero.multiplicity as i32);
            }
            acc = acc.max(if v.is_finite() { v } else { 0.0 });
        }
        acc
    }
}

/// Grid used for the minimum of |g| over the annulus: the function is
/// zero-free and holomorphic there, so the minimum sits on the boundary,
/// but the interior is still scanned coarsely as a safeguard.
const BETA_RADII: usize = 64;
const BETA_ANGLES: usize = 4096;
const BETA_BOUNDARY_ANGLES: usize = 16384;

fn min_over_annulus(g: &FactoredFunction, rho: f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut best_at = (1.0, 0.0);
    for i in 0..BETA_RADII {
        let radius = 1.0 - rho + 2.0 * rho * i as f64 / (BETA_RADII - 1) as f64;
        for j in 0..BETA_ANGLES {
            let theta = (j as f64 + 0.5) / BETA_ANGLES as f64;
            let v = g.modulus(C64::from_polar(radius, 2.0 * std::f64::consts::PI * theta));
            if v < best {
                best = v;
                best_at = (radius, theta);
            }
        }
    }
    // boundary circles at higher angular resolution
    for radius in [1.0 - rho, 1.0 + rho] {
        for j in 0..BETA_BOUNDARY_ANGLES {
            let theta = (j as f64 + 0.5) / BETA_BOUNDARY_ANGLES as f64;
            let v = g.modulus(C64::from_polar(radius, 2.0 * std::f64::consts::PI * theta));
            if v < best {
                best = v;
                best_at = (radius, theta);
            }
        }
    }
    // local pattern-search refinement around the best cell
    let (mut radius, mut theta) = best_at;
    let mut hr = 2.0 * rho / (BETA_RADII - 1) as f64;
    let mut ht = 1.0 / BETA_ANGLES as f64;
    for _ in 0..70 {
        let mut improved = false;
        for (dr, dt) in [
            (hr, 0.0),
            (-hr, 0.0),
            (0.0, ht),
            (0.0, -ht),
            (hr, ht),
            (hr, -ht),
            (-hr, ht),
            (-hr, -ht),
        ] {
            let r2 = (radius + dr).clamp(1.0 - rho, 1.0 + rho);
            let t2 = theta + dt;
            let v = g.modulus(C64::from_polar(r2, 2.0 * std::f64::consts::PI * t2));
            if v < best {
                best = v;
                radius = r2;
                theta = t2;
                improved = true;
            }
        }
        if !improved {
            hr *= 0.5;
            ht *= 0.5;
        }
    }
    best
}

/// Default outer radius when only rho is given: halfway between rho and 1.
pub fn default_outer_radius(rho: f64) -> f64 {
    (1.0 + rho) / 2.0
}

/// The annulus measurements N_rho(f) and beta_rho(f), factoring the zeros
/// with | |z_j| - 1 | < (rho + R)/2 out of f before minimizing.
pub fn measure_n_beta(f: &LaurentScalar, rho: f64, r_outer: f64) -> Result<AnnulusMeasurements> {
    if f.is_zero() {
        return Err(Error::InvalidInput(
            "annulus measurements of the identically-zero function".into(),
        ));
    }
    if !(0.0 < rho && rho < r_outer && r_outer < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < rho < R < 1, got rho={rho}, R={r_outer}"
        )));
    }
    let divisor = all_zeros(f)?;
    let n: usize = divisor
        .zeros
        .iter()
        .filter(|z| (z.location().norm() - 1.0).abs() <= rho + MEMBERSHIP_TOL)
        .map(|z| z.multiplicity)
        .sum();
    let divide_radius = (rho + r_outer) / 2.0;
    let g = FactoredFunction::new(f, &divisor, divide_radius, r_outer);
    let beta = min_over_annulus(&g, rho);
    Ok(AnnulusMeasurements {
        n,
        beta,
        rho,
        r_outer,
    })
}

/// The explicit lower-bound constant eps_0 = beta (delta / (2 (rho+1) N))^N,
/// with eps_0 = beta when N = 0.
pub fn epsilon0(rho: f64, delta: f64, n: usize, beta: f64) -> Result<f64> {
    if !(0.0 < delta && delta < rho) || beta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "epsilon0 needs 0 < delta < rho and beta > 0 (got rho={rho}, delta={delta}, beta={beta})"
        )));
    }
    if n == 0 {
        return Ok(beta);
    }
    Ok(beta * (delta / (2.0 * (rho + 1.0) * n as f64)).powi(n as i32))
}

/// Result of the good-circle search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoodCircle {
    /// The circle has radius 1 + y0.
    pub y0: f64,
    /// Minimum modulus of f measured on the circle.
    pub min_modulus: f64,
    /// The guaranteed floor eps_0 the measurement must exceed.
    pub guarantee: f64,
}

/// Finds a circle of radius 1 + y0 inside the open sub-annulus
/// {1 + inner < |z| < 1 + inner + width} avoiding disks of radius
/// eta_0 = (width/2)/N around every zero of f near the unit circle.
pub fn find_good_circle(
    f: &LaurentScalar,
    inner: f64,
    width: f64,
    rho: f64,
) -> Result<GoodCircle> {
    if f.is_zero() {
        return Err(Error::InvalidInput(
            "good-circle search on the identically-zero function".into(),
        ));
    }
    if !(width > 0.0 && inner > -1.0 && inner + width <= rho + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "sub-annulus [1+{inner}, 1+{}] must sit inside A_rho (rho={rho})",
            inner + width
        )));
    }
    let r_outer = default_outer_radius(rho);
    let measurements = measure_n_beta(f, rho, r_outer)?;
    let delta = width / 2.0;
    let guarantee = epsilon0(rho, delta, measurements.n, measurements.beta)?;
    let divisor = all_zeros(f)?;
    let eta0 = if measurements.n == 0 {
        0.0
    } else {
        delta / measurements.n as f64
    };
    // forbidden radial intervals (relative to the unit circle)
    let mut forbidden: Vec<(f64, f64)> = divisor
        .zeros
        .iter()
        .map(|z| {
            let y = z.location().norm() - 1.0;
            (y - eta0, y + eta0)
        })
        .filter(|&(lo, hi)| hi > inner && lo < inner + width)
        .collect();
    forbidden.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // walk the gaps, keep the widest
    let mut best_gap: Option<(f64, f64)> = None;
    let mut cursor = inner;
    let push_gap = |lo: f64, hi: f64, best: &mut Option<(f64, f64)>| {
        // rounding can leave degenerate slivers when the forbidden bands
        // exactly tile the sub-annulus; those are not usable circles
        if hi > lo + 1e-12 {
            if best.map_or(true, |(a, b)| hi - lo > b - a) {
                *best = Some((lo, hi));
            }
        }
    };
    for &(lo, hi) in &forbidden {
        push_gap(cursor, lo.min(inner + width), &mut best_gap);
        cursor = cursor.max(hi);
    }
    push_gap(cursor, inner + width, &mut best_gap);
    let (lo, hi) = best_gap.ok_or(Error::NoGoodCircle {
        inner,
        outer: inner + width,
    })?;
    let y0 = (lo + hi) / 2.0;
    let min_modulus = min_modulus_on_circle(f, 1.0 + y0, 8192);
    Ok(GoodCircle {
        y0,
        min_modulus,
        guarantee,
    })
}

// ---------------------------------------------------------------------------
// Matrix-valued Laurent functions
// ---------------------------------------------------------------------------

/// A matrix of finite Laurent series: a real-analytic matrix-valued
/// function on the torus with holomorphic extension to every annulus.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentMatrixFunction {
    rows: usize,
    cols: usize,
    entries: Vec<LaurentScalar>,
    rho: f64,
}

impl LaurentMatrixFunction {
    pub fn new(rows: usize, cols: usize, entries: Vec<LaurentScalar>, rho: f64) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{cols} matrix function, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if !(0.0 < rho && rho < 1.0) {
            return Err(Error::InvalidInput(format!("rho={rho} must lie in (0,1)")));
        }
        Ok(LaurentMatrixFunction {
            rows,
            cols,
            entries,
            rho,
        })
    }

    pub fn constant(m: &Matrix, rho: f64) -> Self {
        let entries = (0..m.rows() * m.cols())
            .map(|idx| LaurentScalar::constant(m.get(idx / m.cols(), idx % m.cols())))
            .collect();
        LaurentMatrixFunction {
            rows: m.rows(),
            cols: m.cols(),
            entries,
            rho,
        }
    }

    pub fn identity(d: usize, rho: f64) -> Self {
        Self::constant(&Matrix::identity(d), rho)
    }

    pub fn zero(rows: usize, cols: usize, rho: f64) -> Self {
        LaurentMatrixFunction {
            rows,
            cols,
            entries: vec![LaurentScalar::zero(); rows * cols],
            rho,
        }
    }

    pub fn scalar(f: LaurentScalar, rho: f64) -> Self {
        LaurentMatrixFunction {
            rows: 1,
            cols: 1,
            entries: vec![f],
            rho,
        }
    }

    pub fn diagonal(diag: Vec<LaurentScalar>, rho: f64) -> Self {
        let d = diag.len();
        let mut entries = vec![LaurentScalar::zero(); d * d];
        for (i, f) in diag.into_iter().enumerate() {
            entries[i * d + i] = f;
        }
        LaurentMatrixFunction {
            rows: d,
            cols: d,
            entries,
            rho,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn entry(&self, i: usize, j: usize) -> &LaurentScalar {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut LaurentScalar {
        &mut self.entries[i * self.cols + j]
    }

    pub fn evaluate(&self, z: C64) -> Result<Matrix> {
        if z == C64::new(0.0, 0.0) {
            return Err(Error::Domain("Laurent evaluation at z = 0".into()));
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| {
            self.entry(i, j).evaluate_unchecked(z)
        }))
    }

    pub fn transpose(&self) -> LaurentMatrixFunction {
        let mut entries = Vec::with_capacity(self.rows * self.cols);
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.entry(i, j).clone());
            }
        }
        LaurentMatrixFunction {
            rows: self.cols,
            cols: self.rows,
            entries,
            rho: self.rho,
        }
    }

    /// The function z -> F(z e^{2 pi i omega}) (composition with the rotation):
    /// c_k -> c_k e^{2 pi i k omega}.
    pub fn rotate(&self, omega: f64) -> LaurentMatrixFunction {
        let entries = self
            .entries
            .iter()
            .map(|f| {
                let mut out = LaurentScalar::default();
                for (k, c) in f.coeffs() {
                    out.set(
                        k,
                        c * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 * omega),
                    );
                }
                out
            })
            .collect();
        LaurentMatrixFunction {
            rows: self.rows,
            cols: self.cols,
            entries,
            rho: self.rho,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let d = self.entry(i, j).sub(self.entry(j, i));
                if !d.is_negligible(1e-12 * self.max_abs_coeff().max(1.0)) {
                    return false;
                }
            }
        }
        true
    }

    /// Hermitian as a function on the torus: V(x)* = V(x) for real x.
    pub fn is_hermitian_on_torus(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs_coeff().max(1.0);
        for i in 0..self.rows {
            for j in 0..self.cols {
                // entry (j,i) must equal conj of entry (i,j) on |z| = 1,
                // i.e. coefficients satisfy c^{ji}_k = conj(c^{ij}_{-k})
                let a = self.entry(i, j);
                let b = self.entry(j, i);
                for (k, c) in a.coeffs() {
                    if (b.coeff(-k) - c.conj()).norm() > 1e-12 * scale {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.entries
            .iter()
            .map(|f| f.max_abs_coeff())
            .fold(0.0, f64::max)
    }

    /// Sup of the operator norm over A_rho; the norm is subharmonic in z so
    /// the boundary circles suffice, scanned on a grid.
    pub fn norm_rho(&self) -> f64 {
        let samples = 512;
        let mut best: f64 = 0.0;
        for radius in [1.0 - self.rho, 1.0 + self.rho] {
            for j in 0..samples {
                let theta = j as f64 / samples as f64;
                let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * theta);
                let m = Matrix::from_fn(self.rows, self.cols, |i, jj| {
                    self.entry(i, jj).evaluate_unchecked(z)
                });
                best = best.max(m.norm());
            }
        }
        best
    }

    /// det(F(z)) as a Laurent scalar, by cofactor expansion over the
    /// Laurent ring.
    pub fn determinant(&self) -> Result<LaurentScalar> {
        if self.rows != self.cols {
            return Err(Error::Dimension(format!(
                "determinant of a {}x{} matrix function",
                self.rows, self.cols
            )));
        }
        Ok(laurent_det(&self.entries, self.rows))
    }

    /// F(z) - E * I as a matrix function.
    pub fn shift_by_energy(&self, e: f64) -> LaurentMatrixFunction {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            let shifted = out.entry(i, i).sub(&LaurentScalar::real_constant(e));
            *out.entry_mut(i, i) = shifted;
        }
        out
    }
}

fn laurent_det(entries: &[LaurentScalar], d: usize) -> LaurentScalar {
    if d == 1 {
        return entries[0].clone();
    }
    let mut det = LaurentScalar::zero();
    for j in 0..d {
        if entries[j].is_zero() {
            continue;
        }
        let mut minor = Vec::with_capacity((d - 1) * (d - 1));
        for r in 1..d {
            for c in 0..d {
                if c != j {
                    minor.push(entries[r * d + c].clone());
                }
            }
        }
        let cof = entries[j].mul(&laurent_det(&minor, d - 1));
        if j % 2 == 0 {
            det = det.add(&cof);
        } else {
            det = det.sub(&cof);
        }
    }
    det
}

/// Constant eigenvalues of a matrix-valued function: complex numbers E
/// with det(V(z) - E I) identically zero in z. Detected exactly from the
/// Laurent coefficients of the characteristic polynomial.
pub fn constant_eigenvalues(v: &LaurentMatrixFunction) -> Result<Vec<C64>> {
    let d = v.rows();
    if d != v.cols() {
        return Err(Error::Dimension("square matrix function required".into()));
    }
    // det(V(z) - E I) = sum_k a_k(z) E^k; a constant eigenvalue E0 is a
    // common root of the degree-wise polynomials q_j(E) = sum_k c_{k,j} E^k.
    let mut e_coeffs: Vec<LaurentScalar> = Vec::with_capacity(d + 1);
    {
        // expand the determinant as a polynomial in E via evaluation at
        // d+1 interpolation nodes in E, entrywise over the Laurent ring
        let nodes: Vec<f64> = (0..=d).map(|i| i as f64 - d as f64 / 2.0).collect();
        let mut dets: Vec<LaurentScalar> = Vec::with_capacity(d + 1);
        for &e in &nodes {
            dets.push(v.shift_by_energy(e).determinant()?);
        }
        // Lagrange interpolation to recover the E-coefficients
        for k in 0..=d {
            let mut acc = LaurentScalar::zero();
            for (i, &xi) in nodes.iter().enumerate() {
                // coefficient of E^k in the i-th Lagrange basis polynomial
                let mut basis = vec![C64::new(1.0, 0.0)];
                let mut denom = C64::new(1.0, 0.0);
                for (j, &xj) in nodes.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    denom *= C64::new(xi - xj, 0.0);
                    let mut next = vec![C64::new(0.0, 0.0); basis.len() + 1];
                    for (p, &b) in basis.iter().enumerate() {
                        next[p + 1] += b;
                        next[p] -= b * C64::new(xj, 0.0);
                    }
                    basis = next;
                }
                let bk = basis.get(k).copied().unwrap_or(C64::new(0.0, 0.0)) / denom;
                acc = acc.add(&dets[i].scale(bk));
            }
            e_coeffs.push(acc);
        }
    }
    let scale = e_coeffs
        .iter()
        .map(|f| f.max_abs_coeff())
        .fold(0.0, f64::max)
        .max(1.0);
    // collect Laurent degrees present in any coefficient
    let mut degrees: Vec<i64> = Vec::new();
    for f in &e_coeffs {
        for (k, _) in f.coeffs() {
            if !degrees.contains(&k) {
                degrees.push(k);
            }
        }
    }
    degrees.sort_unstable();
    if degrees.is_empty() {
        // det(V - E I) is identically zero as a bivariate function
        return Ok(vec![C64::new(0.0, 0.0)]);
    }
    // q_j(E) for each Laurent degree j; pick a non-negligible one as the
    // candidate source, then require all others to vanish at its roots
    let q = |j: i64| -> Vec<C64> { e_coeffs.iter().map(|f| f.coeff(j)).collect() };
    let source = degrees
        .iter()
        .max_by(|&&a, &&b| {
            let na = q(a).iter().map(|c| c.norm()).fold(0.0, f64::max);
            let nb = q(b).iter().map(|c| c.norm()).fold(0.0, f64::max);
            na.partial_cmp(&nb).unwrap()
        })
        .copied()
        .unwrap();
    let candidates = polynomial_roots(&q(source));
    let mut out = Vec::new();
    for e0 in candidates {
        let all_vanish = degrees.iter().all(|&j| {
            let coeffs = q(j);
            let mut p = C64::new(0.0, 0.0);
            for &c in coeffs.iter().rev() {
                p = p * e0 + c;
            }
            p.norm() <= 1e-9 * scale * e0.norm().max(1.0).powi(d as i32)
        });
        if all_vanish {
            out.push(e0);
        }
    }
    Ok(out)
}

/// Grid-certified worst-case measurements over all real energies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HatMeasurements {
    pub n_hat: usize,
    pub beta_hat: f64,
    /// Energy achieving the zero-count maximum on the scan grid.
    pub argmax_e: f64,
    /// Energy achieving the beta minimum on the scan grid.
    pub argmin_e: f64,
    /// Half-width of the scanned energy interval.
    pub e_bound: f64,
    pub grid_points: usize,
    /// The extremization over E is certified only up to grid resolution.
    pub grid_certified_only: bool,
}

/// Worst-case N and beta of det(V(z) - E I) over real energies E, scanned
/// on a uniform grid over [-2 ||V||_rho, 2 ||V||_rho] (outside it the
/// determinant has no zeros and beta >= 1) with golden-section refinement
/// near the extrema.
pub fn measure_hat(
    v: &LaurentMatrixFunction,
    rho: f64,
    r_outer: f64,
    grid_points: usize,
) -> Result<HatMeasurements> {
    if !v.is_symmetric() && !v.is_hermitian_on_torus() {
        return Err(Error::InvalidInput(
            "hat measurements require a symmetric or Hermitian matrix function".into(),
        ));
    }
    let constant = constant_eigenvalues(v)?;
    if !constant.is_empty() {
        return Err(Error::TransversalityViolation(format!(
            "matrix function has constant eigenvalue(s): {:?}",
            constant
        )));
    }
    let e_bound = 2.0 * v.norm_rho();
    let grid_points = grid_points.max(3);
    let f_of = |e: f64| -> Result<LaurentScalar> { v.shift_by_energy(e).determinant() };
    // fast beta proxy used during the scan: the factored minimum over the
    // two boundary circles only (the minimum modulus principle puts the
    // true minimum there)
    let beta_of = |e: f64| -> Result<(usize, f64)> {
        let f = f_of(e)?;
        let m = measure_n_beta_boundary(&f, rho, r_outer)?;
        Ok(m)
    };
    let mut n_max = 0usize;
    let mut argmax_e = 0.0;
    let mut beta_min = f64::INFINITY;
    let mut argmin_e = 0.0;
    let mut es: Vec<f64> = (0..grid_points)
        .map(|i| -e_bound + 2.0 * e_bound * i as f64 / (grid_points - 1) as f64)
        .collect();
    let step = 2.0 * e_bound / (grid_points - 1) as f64;
    let scan = |es: &[f64],
                    n_max: &mut usize,
                    argmax_e: &mut f64,
                    beta_min: &mut f64,
                    argmin_e: &mut f64|
     -> Result<()> {
        for &e in es {
            let (n, beta) = beta_of(e)?;
            if n > *n_max {
                *n_max = n;
                *argmax_e = e;
            }
            if beta < *beta_min {
                *beta_min = beta;
                *argmin_e = e;
            }
        }
        Ok(())
    };
    scan(&es, &mut n_max, &mut argmax_e, &mut beta_min, &mut argmin_e)?;
    // refine around the extrema with a finer local grid
    for center in [argmax_e, argmin_e] {
        es = (0..41)
            .map(|i| center - step + 2.0 * step * i as f64 / 40.0)
            .collect();
        scan(&es, &mut n_max, &mut argmax_e, &mut beta_min, &mut argmin_e)?;
    }
    // golden-section polish of the beta minimum
    let (e_star, beta_star) = golden_min(
        |e| beta_of(e).map(|(_, b)| b).unwrap_or(f64::INFINITY),
        argmin_e - step,
        argmin_e + step,
        40,
    );
    if beta_star < beta_min {
        beta_min = beta_star;
        argmin_e = e_star;
    }
    // final full-annulus measurement at the winning energies
    let full_min = measure_n_beta(&f_of(argmin_e)?, rho, r_outer)?;
    beta_min = beta_min.min(full_min.beta);
    let full_max = measure_n_beta(&f_of(argmax_e)?, rho, r_outer)?;
    n_max = n_max.max(full_max.n);
    Ok(HatMeasurements {
        n_hat: n_max,
        beta_hat: beta_min,
        argmax_e,
        argmin_e,
        e_bound,
        grid_points,
        grid_certified_only: true,
    })
}

/// Boundary-circle version of the N/beta measurement, used inside the
/// energy scan where the full annulus grid would be wasteful.
fn measure_n_beta_boundary(f: &LaurentScalar, rho: f64, r_outer: f64) -> Result<(usize, f64)> {
    if f.is_zero() {
        return Err(Error::InvalidInput(
            "annulus measurements of the identically-zero function".into(),
        ));
    }
    let divisor = all_zeros(f)?;
    let n: usize = divisor
        .zeros
        .iter()
        .filter(|z| (z.location().norm() - 1.0).abs() <= rho + MEMBERSHIP_TOL)
        .map(|z| z.multiplicity)
        .sum();
    let divide_radius = (rho + r_outer) / 2.0;
    let g = FactoredFunction::new(f, &divisor, divide_radius, r_outer);
    let mut best = f64::INFINITY;
    for radius in [1.0 - rho, 1.0 + rho] {
        for j in 0..2048 {
            let theta = (j as f64 + 0.5) / 2048.0;
            let v = g.modulus(C64::from_polar(radius, 2.0 * std::f64::consts::PI * theta));
            best = best.min(v);
        }
    }
    Ok((n, best))
}

// ---------------------------------------------------------------------------
// Serialization (JSON wire format used by the CLI config loader)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TermWire {
    k: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct LmfWire {
    rows: usize,
    cols: usize,
    rho: f64,
    /// Row-major list of entries; each entry is a list of {k, re, im} terms.
    entries: Vec<Vec<TermWire>>,
}

impl Serialize for LaurentMatrixFunction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self
            .entries
            .iter()
            .map(|f| {
                f.coeffs()
                    .map(|(k, c)| TermWire {
                        k,
                        re: c.re,
                        im: c.im,
                    })
                    .collect()
            })
            .collect();
        LmfWire {
            rows: self.rows,
            cols: self.cols,
            rho: self.rho,
            entries,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LaurentMatrixFunction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = LmfWire::deserialize(deserializer)?;
        if wire.entries.len() != wire.rows * wire.cols {
            return Err(serde::de::Error::custom(format!(
                "expected {} entries, got {}",
                wire.rows * wire.cols,
                wire.entries.len()
            )));
        }
        let entries = wire
            .entries
            .into_iter()
            .map(|terms| {
                let mut f = LaurentScalar::default();
                for t in terms {
                    f.set(t.k, f.coeff(t.k) + C64::new(t.re, t.im));
                }
                f
            })
            .collect();
        LaurentMatrixFunction::new(wire.rows, wire.cols, entries, wire.rho)
            .map_err(serde::de::Error::custom)
    }
}
