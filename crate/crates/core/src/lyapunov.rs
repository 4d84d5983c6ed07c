//! Lyapunov spectrum estimation: discrete-QR exponents along rotation
//! orbits, exterior-power sums of the top exponents, exact Birkhoff means
//! of scalar log-cocycles, and the weighted-band decomposition that trades
//! a singular cocycle for a holomorphic one plus a scalar mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::{polynomial_roots, LaurentMatrixFunction, LaurentScalar};
use crate::matrix::{exterior_power, qr_positive, Matrix, C64};
use crate::models::{BlockCocycle, Rotation};

/// Steps between QR re-orthonormalizations.
const QR_PERIOD: usize = 10;

/// Estimated exponents with estimator metadata; `spread` is the max-min
/// variation of each exponent across phase samples, an error proxy rather
/// than a rigorous bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    pub exponents: Vec<f64>,
    pub n: usize,
    pub samples: usize,
    pub spread: Vec<f64>,
    pub seed: u64,
}

impl LyapunovSpectrum {
    pub fn top(&self) -> f64 {
        self.exponents[0]
    }

    pub fn max_spread(&self) -> f64 {
        self.spread.iter().copied().fold(0.0, f64::max)
    }

    /// Sum of the k largest exponents.
    pub fn top_sum(&self, k: usize) -> f64 {
        self.exponents.iter().take(k).sum()
    }
}

/// Low-discrepancy phase set: the rotation orbit of a seeded random start.
fn sample_phases(rot: Rotation, z_modulus: f64, samples: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0: f64 = rng.gen();
    (0..samples)
        .map(|j| {
            let theta = (theta0 + j as f64 * rot.omega()).fract();
            C64::from_polar(z_modulus, 2.0 * std::f64::consts::PI * theta)
        })
        .collect()
}

fn qr_exponents_at(c: &BlockCocycle, z: C64, n: usize) -> Result<Vec<f64>> {
    let m = c.ambient_dim();
    let mut q = Matrix::identity(m);
    let mut logs = vec![0.0_f64; m];
    let mut phase = z;
    let mut steps_since_qr = 0;
    for _ in 0..n {
        q = c.evaluate(phase)?.mul(&q);
        phase = c.rotation().step(phase);
        steps_since_qr += 1;
        // re-orthonormalize early once the running block grows large:
        // waiting the full period destroys the contracting directions in
        // f64 for strongly hyperbolic generators
        if steps_since_qr == QR_PERIOD || q.max_abs() > 1e4 {
            let (qq, r) = qr_positive(&q);
            for i in 0..m {
                let rii = r.get(i, i).norm();
                if rii > 0.0 {
                    logs[i] += rii.ln();
                }
            }
            q = qq;
            steps_since_qr = 0;
        }
    }
    if steps_since_qr > 0 {
        let (_, r) = qr_positive(&q);
        for i in 0..m {
            let rii = r.get(i, i).norm();
            if rii > 0.0 {
                logs[i] += rii.ln();
            }
        }
    }
    Ok(logs.into_iter().map(|l| l / n as f64).collect())
}

/// Discrete-QR estimate of the full Lyapunov spectrum, averaged over
/// phases sampled on the circle of the given modulus.
pub fn spectrum_qr(
    c: &BlockCocycle,
    z_modulus: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<LyapunovSpectrum> {
    if n < 100 {
        return Err(Error::InvalidInput(format!(
            "iteration length n={n} must be at least 100"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one phase sample".into()));
    }
    let m = c.ambient_dim();
    let phases = sample_phases(c.rotation(), z_modulus, samples, seed);
    let mut per_sample: Vec<Vec<f64>> = Vec::with_capacity(samples);
    for &z in &phases {
        per_sample.push(qr_exponents_at(c, z, n)?);
    }
    let mut exponents = vec![0.0_f64; m];
    let mut spread = vec![0.0_f64; m];
    for i in 0..m {
        let vals: Vec<f64> = per_sample.iter().map(|s| s[i]).collect();
        exponents[i] = vals.iter().sum::<f64>() / samples as f64;
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        spread[i] = max - min;
    }
    // QR exponents converge in decreasing order; enforce it on the output
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| exponents[b].partial_cmp(&exponents[a]).unwrap());
    let exponents = order.iter().map(|&i| exponents[i]).collect();
    let spread = order.iter().map(|&i| spread[i]).collect();
    Ok(LyapunovSpectrum {
        exponents,
        n,
        samples,
        spread,
        seed,
    })
}

/// (1/n) log || wedge_k M_n(z) ||, by an incrementally rescaled product of
/// compound matrices.
pub fn exterior_log_norm_rate(c: &BlockCocycle, k: usize, z: C64, n: usize) -> Result<f64> {
    let mut phase = z;
    let mut matrix = exterior_power(&c.evaluate(phase)?, k)?;
    let mut log_scale = 0.0_f64;
    let renorm = |m: &mut Matrix, log_scale: &mut f64| {
        let nrm = m.norm();
        if nrm > 0.0 && !(1e-6..=1e6).contains(&nrm) {
            *log_scale += nrm.ln();
            *m = m.scale(C64::new(1.0 / nrm, 0.0));
        }
    };
    renorm(&mut matrix, &mut log_scale);
    for _ in 1..n {
        phase = c.rotation().step(phase);
        matrix = exterior_power(&c.evaluate(phase)?, k)?.mul(&matrix);
        renorm(&mut matrix, &mut log_scale);
    }
    Ok((log_scale + matrix.norm().ln()) / n as f64)
}

/// Estimates L^(1) + ... + L^(k) as the phase-average growth rate of the
/// k-th compound product; an independent cross-check of the QR exponents.
pub fn topk_sum_via_exterior(
    c: &BlockCocycle,
    k: usize,
    z_modulus: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 || n == 0 {
        return Err(Error::InvalidInput("need n >= 1 and samples >= 1".into()));
    }
    let phases = sample_phases(c.rotation(), z_modulus, samples, seed);
    let mut acc = 0.0;
    for &z in &phases {
        acc += exterior_log_norm_rate(c, k, z, n)?;
    }
    Ok(acc / samples as f64)
}

/// Exact Birkhoff mean L(g) = integral of log |g| over the torus, via
/// Jensen's formula on the Laurent factorization (the Mahler measure of
/// z^m g(z)), cross-checked against singularity-aware quadrature.
pub fn scalar_log_mean(g: &LaurentScalar) -> Result<f64> {
    let jensen = scalar_log_mean_jensen(g)?;
    let quad = scalar_log_mean_quadrature(g)?;
    if (jensen - quad).abs() > 1e-6 * jensen.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "Jensen mean {jensen} and quadrature mean {quad} disagree"
        )));
    }
    Ok(jensen)
}

fn scalar_log_mean_jensen(g: &LaurentScalar) -> Result<f64> {
    if g.is_zero() {
        return Err(Error::InvalidInput(
            "log-mean of the identically-zero function".into(),
        ));
    }
    let (coeffs, _) = g.to_polynomial();
    // strip negligible leading coefficients for a stable leading term
    let max_abs = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut hi = coeffs.len();
    while hi > 0 && coeffs[hi - 1].norm() <= 1e-14 * max_abs {
        hi -= 1;
    }
    let lead = coeffs[hi - 1];
    let roots = polynomial_roots(&coeffs[..hi]);
    let mut mean = lead.norm().ln();
    for r in roots {
        let modulus = r.norm();
        if modulus > 1.0 {
            mean += modulus.ln();
        }
    }
    Ok(mean)
}

/// Gauss-Legendre nodes/weights on [-1, 1], 16 points.
const GL_NODES: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL_WEIGHTS: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

fn gl_integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = (a + b) / 2.0;
    let half = (b - a) / 2.0;
    let mut acc = 0.0;
    for i in 0..8 {
        acc += GL_WEIGHTS[i] * (f(mid + half * GL_NODES[i]) + f(mid - half * GL_NODES[i]));
    }
    acc * half
}

/// Integrates with geometric panel refinement toward both endpoints, which
/// absorbs integrable log singularities there.
fn gl_integrate_refined<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = (a + b) / 2.0;
    let mut acc = 0.0;
    // panels [a + h/2^{j}, a + h/2^{j-1}] shrinking toward a, mirrored at b
    let h = mid - a;
    let levels = 50;
    for j in 1..=levels {
        let lo = a + h / (1u64 << j) as f64;
        let hi = a + h / (1u64 << (j - 1)) as f64;
        acc += gl_integrate(f, lo, hi);
        acc += gl_integrate(f, b - (hi - a), b - (lo - a));
    }
    acc
}

fn scalar_log_mean_quadrature(g: &LaurentScalar) -> Result<f64> {
    if g.is_zero() {
        return Err(Error::InvalidInput(
            "log-mean of the identically-zero function".into(),
        ));
    }
    // singular angles: arguments of roots on (or within 1e-8 of) the circle
    let (coeffs, _) = g.to_polynomial();
    let mut singular: Vec<f64> = polynomial_roots(&coeffs)
        .into_iter()
        .filter(|r| (r.norm() - 1.0).abs() < 1e-8)
        .map(|r| {
            let mut t = r.arg() / (2.0 * std::f64::consts::PI);
            if t < 0.0 {
                t += 1.0;
            }
            t
        })
        .collect();
    singular.sort_by(|x, y| x.partial_cmp(y).unwrap());
    singular.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let f = |t: f64| g.evaluate_at_phase(t).norm().max(1e-300).ln();
    if singular.is_empty() {
        let mut acc = 0.0;
        let panels = 64;
        for p in 0..panels {
            acc += gl_integrate(&f, p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
        }
        return Ok(acc);
    }
    // integrate between consecutive singular angles (wrapping around),
    // refining toward each singular endpoint
    let mut acc = 0.0;
    let count = singular.len();
    for i in 0..count {
        let a = singular[i];
        let b = if i + 1 < count {
            singular[i + 1]
        } else {
            singular[0] + 1.0
        };
        if b - a > 1e-12 {
            acc += gl_integrate_refined(&f, a, b);
        }
    }
    Ok(acc)
}

/// Spectrum of a weighted band model computed through its regularized
/// variant: the adjugate cocycle is holomorphic, and its exponents exceed
/// the original ones by exactly the scalar mean L(det W).
pub fn decomposed_band_spectrum(
    w: &LaurentMatrixFunction,
    r: &LaurentMatrixFunction,
    d_blk: &LaurentMatrixFunction,
    lambda: f64,
    e: f64,
    rot: Rotation,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<(LyapunovSpectrum, f64)> {
    let regularized = BlockCocycle::build_adjugate_regularized(
        w.clone(),
        r.clone(),
        d_blk.clone(),
        lambda,
        e,
        rot,
    )?;
    let tilde = spectrum_qr(&regularized, 1.0, n, samples, seed)?;
    // mean of g(z + omega) equals the mean of g = det W
    let l_g = scalar_log_mean(&w.determinant()?)?;
    let spectrum = LyapunovSpectrum {
        exponents: tilde.exponents.iter().map(|l| l - l_g).collect(),
        n: tilde.n,
        samples: tilde.samples,
        spread: tilde.spread.clone(),
        seed: tilde.seed,
    };
    Ok((spectrum, l_g))
}

/// Mean of the k-th compound growth rate over the circle of radius r, by
/// uniform angular quadrature; the input to the log-convexity checks.
pub fn circle_mean(
    c: &BlockCocycle,
    k: usize,
    r: f64,
    n: usize,
    angle_samples: usize,
) -> Result<f64> {
    if angle_samples == 0 {
        return Err(Error::InvalidInput("need at least one angle sample".into()));
    }
    let mut acc = 0.0;
    for j in 0..angle_samples {
        let theta = j as f64 / angle_samples as f64;
        let z = C64::from_polar(r, 2.0 * std::f64::consts::PI * theta);
        acc += exterior_log_norm_rate(c, k, z, n)?;
    }
    Ok(acc / angle_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::realify;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn constant_cocycle(entries: &[f64], m: usize) -> BlockCocycle {
        BlockCocycle::from_constant_matrix(&Matrix::from_real_rows(m, m, entries), Rotation::golden())
            .unwrap()
    }

    #[test]
    fn constant_diagonal_spectrum() {
        let cocycle = constant_cocycle(&[2.0, 0.0, 0.0, 0.5], 2);
        let s = spectrum_qr(&cocycle, 1.0, 1000, 2, 7).unwrap();
        assert!((s.exponents[0] - 2.0_f64.ln()).abs() < 1e-10);
        assert!((s.exponents[1] + 2.0_f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn constant_free_schrodinger_spectrum() {
        // eigenvalues of [[-3,-1],[1,0]] have moduli (3+sqrt5)/2 and its inverse
        let cocycle = constant_cocycle(&[-3.0, -1.0, 1.0, 0.0], 2);
        let s = spectrum_qr(&cocycle, 1.0, 10_000, 2, 3).unwrap();
        let want = ((3.0 + 5.0_f64.sqrt()) / 2.0).ln();
        assert!((s.exponents[0] - want).abs() < 1e-4, "{} vs {want}", s.exponents[0]);
        assert!((s.exponents[1] + want).abs() < 1e-4);
    }

    #[test]
    fn herman_lower_bound_small() {
        let rot = Rotation::golden();
        let sch = BlockCocycle::build_schrodinger_1d(LaurentScalar::two_cos(), 10.0, 0.0, rot);
        let s = spectrum_qr(&sch, 1.0, 20_000, 4, 11).unwrap();
        assert!(s.exponents[0] >= 10.0_f64.ln() - 1e-2, "L1 = {}", s.exponents[0]);
    }

    #[test]
    fn exterior_full_rank_is_log_det() {
        // k = m: growth rate of det, = 0 for the SL2 Schrödinger cocycle
        let rot = Rotation::golden();
        let sch = BlockCocycle::build_schrodinger_1d(LaurentScalar::two_cos(), 3.0, 0.7, rot);
        let v = topk_sum_via_exterior(&sch, 2, 1.0, 2000, 2, 5).unwrap();
        assert!(v.abs() < 1e-9, "sum of both exponents = {v}");
    }

    #[test]
    fn exterior_matches_qr_partial_sums() {
        let rot = Rotation::golden();
        let sch = BlockCocycle::build_schrodinger_1d(LaurentScalar::two_cos(), 4.0, 0.3, rot);
        let s = spectrum_qr(&sch, 1.0, 10_000, 4, 9).unwrap();
        for k in 1..=2 {
            let ext = topk_sum_via_exterior(&sch, k, 1.0, 10_000, 4, 9).unwrap();
            let qr: f64 = s.top_sum(k);
            let tol = (3.0 * s.max_spread()).max(1e-3);
            assert!((ext - qr).abs() < tol, "k={k}: {ext} vs {qr}");
        }
    }

    #[test]
    fn exterior_constant_diagonal() {
        let cocycle = constant_cocycle(&[2.0, 0.0, 0.0, 0.5], 2);
        let v = topk_sum_via_exterior(&cocycle, 1, 1.0, 500, 1, 1).unwrap();
        assert!((v - 2.0_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn scalar_means() {
        assert!(
            (scalar_log_mean(&LaurentScalar::real_constant(-4.0)).unwrap() - 4.0_f64.ln()).abs()
                < 1e-12
        );
        assert!(scalar_log_mean(&LaurentScalar::two_cos()).unwrap().abs() < 1e-8);
        assert!(
            (scalar_log_mean(&LaurentScalar::cos()).unwrap() + 2.0_f64.ln()).abs() < 1e-8
        );
    }

    #[test]
    fn scalar_mean_matches_offcircle_roots() {
        // g = (z - 2)(z - 1/4): mean = log 2 (only the outside root counts)
        let g = LaurentScalar::from_roots(&[c(2.0, 0.0), c(0.25, 0.0)]);
        assert!((scalar_log_mean(&g).unwrap() - 2.0_f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn scalar_mean_shifted_weight() {
        // 2 + cos: roots of z^2/2 + 2z + 1/2 at -2 +- sqrt(3); mean = log((2+sqrt3)/2)
        let g = LaurentScalar::real_constant(2.0).add(&LaurentScalar::cos());
        let want = ((2.0 + 3.0_f64.sqrt()) / 2.0).ln();
        assert!((scalar_log_mean(&g).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn determinant_identity_for_spectrum() {
        // sum of all exponents = mean of log |det generator|
        let rot = Rotation::golden();
        let sch = BlockCocycle::build_schrodinger_1d(LaurentScalar::two_cos(), 2.0, 0.4, rot);
        let s = spectrum_qr(&sch, 1.0, 10_000, 4, 13).unwrap();
        let total: f64 = s.exponents.iter().sum();
        assert!(total.abs() < 1e-3, "sum = {total}");
    }

    #[test]
    fn decomposition_identity_weight() {
        // W = I: g = 1, L(g) = 0, decomposition changes nothing
        let rot = Rotation::golden();
        let w = LaurentMatrixFunction::identity(1, 0.5);
        let r = LaurentMatrixFunction::zero(1, 1, 0.5);
        let d_blk = LaurentMatrixFunction::scalar(LaurentScalar::two_cos(), 0.5);
        let (spec, l_g) =
            decomposed_band_spectrum(&w, &r, &d_blk, 3.0, 0.5, rot, 5000, 2, 17).unwrap();
        assert_eq!(l_g, 0.0);
        let direct = BlockCocycle::build_band_jacobi(w, r, d_blk, 3.0, 0.5, rot).unwrap();
        let s = spectrum_qr(&direct, 1.0, 5000, 2, 17).unwrap();
        for i in 0..2 {
            assert!((spec.exponents[i] - s.exponents[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn decomposition_nontrivial_weight() {
        let rot = Rotation::golden();
        let w = LaurentMatrixFunction::scalar(
            LaurentScalar::real_constant(2.0).add(&LaurentScalar::cos()),
            0.5,
        );
        let r = LaurentMatrixFunction::zero(1, 1, 0.5);
        let d_blk = LaurentMatrixFunction::scalar(LaurentScalar::two_cos(), 0.5);
        let (spec, l_g) =
            decomposed_band_spectrum(&w, &r, &d_blk, 5.0, 0.3, rot, 10_000, 4, 23).unwrap();
        let want_lg = ((2.0 + 3.0_f64.sqrt()) / 2.0).ln();
        assert!((l_g - want_lg).abs() < 1e-10);
        let direct = BlockCocycle::build_band_jacobi(w, r, d_blk, 5.0, 0.3, rot).unwrap();
        let s = spectrum_qr(&direct, 1.0, 10_000, 4, 23).unwrap();
        let tol = (3.0 * (spec.max_spread() + s.max_spread())).max(1e-2);
        assert!(
            (spec.exponents[0] - s.exponents[0]).abs() < tol,
            "decomposed {} vs direct {}",
            spec.exponents[0],
            s.exponents[0]
        );
    }

    #[test]
    fn circle_mean_constant_cocycle() {
        let cocycle = constant_cocycle(&[2.0, 1.0, 0.0, 0.5], 2);
        let m1 = circle_mean(&cocycle, 1, 0.8, 200, 16).unwrap();
        let m2 = circle_mean(&cocycle, 1, 1.25, 200, 16).unwrap();
        assert!((m1 - m2).abs() < 1e-12);
    }

    #[test]
    fn realification_preserves_exponents() {
        // complex 1x1 cocycle a(z): realified 2x2 has the exponent twice
        let rot = Rotation::golden();
        let f = LaurentScalar::monomial(1, c(0.3, 0.4)).add(&LaurentScalar::constant(c(2.0, 1.0)));
        let complex_cocycle = BlockCocycle::scalar(f.clone(), rot, 0.5);
        let real_cocycle = complex_cocycle.clone().realified();
        let sc = spectrum_qr(&complex_cocycle, 1.0, 5000, 4, 29).unwrap();
        let sr = spectrum_qr(&real_cocycle, 1.0, 5000, 4, 29).unwrap();
        assert!((sc.exponents[0] - sr.exponents[0]).abs() < 1e-3);
        assert!((sc.exponents[0] - sr.exponents[1]).abs() < 1e-3);
        // and the common value is the scalar mean of log |f| (finite-n
        // Birkhoff averaging converges like 1/n)
        let mean = scalar_log_mean(&f).unwrap();
        assert!((sc.exponents[0] - mean).abs() < 1e-3);
    }

    #[test]
    fn realify_matrix_consistency() {
        // sanity: realified generator values match matrix realification
        let rot = Rotation::golden();
        let f = LaurentScalar::constant(c(1.0, 2.0));
        let cocycle = BlockCocycle::scalar(f, rot, 0.5);
        let z = C64::from_polar(1.0, 0.4);
        let a = cocycle.evaluate(z).unwrap();
        let b = cocycle.clone().realified().evaluate(z).unwrap();
        assert!(realify(&a).sub(&b).max_abs() < 1e-15);
    }

    #[test]
    fn rejects_short_runs() {
        let cocycle = constant_cocycle(&[2.0, 0.0, 0.0, 0.5], 2);
        assert!(spectrum_qr(&cocycle, 1.0, 50, 1, 0).is_err());
    }
}
