//! Quantitative machinery for certified lower bounds: the block-corner
//! growth lemma and its compound-matrix corollary, the subharmonic mean
//! estimate across concentric circles, the explicit coupling thresholds
//! and per-exponent constants, and end-to-end verification that measured
//! exponents beat the predicted bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::epsilon0;
use crate::lyapunov::{circle_mean, spectrum_qr};
use crate::matrix::{min_expansion, singular_values, Matrix, C64};
use crate::models::BlockCocycle;

/// A sequence of block matrices satisfying the growth-lemma hypotheses:
/// every corner expands by at least lambda, all other blocks have norm at
/// most B, and lambda > 3B. All of it is checked at construction.
#[derive(Debug, Clone)]
pub struct GrowthHypothesis {
    pub lambda: f64,
    pub b: f64,
    pub d: usize,
    pub m: usize,
    blocks: Vec<Matrix>,
}

impl GrowthHypothesis {
    pub fn new(lambda: f64, b: f64, d: usize, m: usize, blocks: Vec<Matrix>) -> Result<Self> {
        if !(b > 0.0 && lambda > 3.0 * b) {
            return Err(Error::Precondition(format!(
                "need lambda > 3B > 0, got lambda={lambda}, B={b}"
            )));
        }
        if !(1 <= d && d < m) {
            return Err(Error::Precondition(format!(
                "need 1 <= d < m, got d={d}, m={m}"
            )));
        }
        if blocks.is_empty() {
            return Err(Error::Precondition("need at least one block".into()));
        }
        let slack = 1e-9;
        for (j, blk) in blocks.iter().enumerate() {
            if blk.rows() != m || blk.cols() != m {
                return Err(Error::Dimension(format!(
                    "block {j} is {}x{}, expected {m}x{m}",
                    blk.rows(),
                    blk.cols()
                )));
            }
            let corner = blk.block(0, 0, d, d);
            let mexp = min_expansion(&corner)?;
            if mexp < lambda * (1.0 - slack) {
                return Err(Error::Precondition(format!(
                    "block {j}: corner minimum expansion {mexp} < lambda = {lambda}"
                )));
            }
            for (name, off) in [
                ("top-right", blk.block(0, d, d, m - d)),
                ("bottom-left", blk.block(d, 0, m - d, d)),
                ("bottom-right", blk.block(d, d, m - d, m - d)),
            ] {
                let nrm = off.norm();
                if nrm > b * (1.0 + slack) {
                    return Err(Error::Precondition(format!(
                        "block {j}: {name} norm {nrm} > B = {b}"
                    )));
                }
            }
        }
        Ok(GrowthHypothesis {
            lambda,
            b,
            d,
            m,
            blocks,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Outcome of the growth-lemma verification, in log scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthCheck {
    /// log (lambda - B)^{k n}.
    pub bound: f64,
    /// log m(wedge_k S_n) for the corner S_n of the block product.
    pub measured: f64,
    pub pass: bool,
    /// Largest ||T_j S_j^{-1}|| seen along the product (must stay < 1).
    pub max_step_ratio: f64,
}

/// Multiplies the blocks, extracts the corner of the product and checks
/// m(wedge_k S_n) >= (lambda - B)^{k n}, together with the per-step
/// invariant that the lower-left block stays dominated by the corner.
pub fn verify_growth(h: &GrowthHypothesis, k: usize) -> Result<GrowthCheck> {
    if !(1 <= k && k <= h.d) {
        return Err(Error::InvalidInput(format!(
            "compound order k={k} must satisfy 1 <= k <= d = {}",
            h.d
        )));
    }
    let n = h.len();
    let mut product = Matrix::identity(h.m);
    let mut log_scale = 0.0_f64;
    let mut max_step_ratio = 0.0_f64;
    for (j, blk) in h.blocks.iter().enumerate() {
        product = blk.mul(&product);
        let nrm = product.norm();
        if !(1e-100..=1e100).contains(&nrm) {
            log_scale += nrm.ln();
            product = product.scale(C64::new(1.0 / nrm, 0.0));
        }
        let corner = product.block(0, 0, h.d, h.d);
        let lower = product.block(h.d, 0, h.m - h.d, h.d);
        let inv = corner.try_inverse().ok_or_else(|| {
            Error::Precondition(format!("corner of the partial product {j} is singular"))
        })?;
        let ratio = lower.mul(&inv).norm();
        max_step_ratio = max_step_ratio.max(ratio);
        if ratio >= 1.0 {
            return Err(Error::Precondition(format!(
                "step invariant failed after block {j}: ||T S^-1|| = {ratio}"
            )));
        }
    }
    let corner = product.block(0, 0, h.d, h.d);
    let sv = singular_values(&corner)?;
    let values = sv.values();
    // m(wedge_k S) is the product of the k smallest singular values
    let measured: f64 = values[values.len() - k..]
        .iter()
        .map(|s| s.ln())
        .sum::<f64>()
        + k as f64 * log_scale;
    let bound = (k * n) as f64 * (h.lambda - h.b).ln();
    let pass = measured >= bound - 1e-9 * bound.abs();
    Ok(GrowthCheck {
        bound,
        measured,
        pass,
        max_step_ratio,
    })
}

/// Lower bound on the circle mean at radius 1 from the means gamma at
/// radius 1 + y0 and S at radius 1 + rho, using log-convexity:
/// (gamma - alpha S) / (1 - alpha) with alpha = log(1+y0)/log(1+rho).
pub fn subharmonic_lower_mean(gamma: f64, s: f64, y0: f64, rho: f64) -> Result<f64> {
    if !(0.0 <= y0 && y0 < rho) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= y0 < rho, got y0={y0}, rho={rho}"
        )));
    }
    if gamma > s {
        return Err(Error::InvalidInput(format!(
            "need gamma <= S, got gamma={gamma} > S={s}"
        )));
    }
    let alpha = (1.0 + y0).ln() / (1.0 + rho).ln();
    Ok((gamma - alpha * s) / (1.0 - alpha))
}

/// The largest delta the explicit constants allow for a given rho.
pub fn max_delta(rho: f64) -> f64 {
    ((1.0 + rho).sqrt() - 1.0) / 2.0
}

/// Default delta: strictly inside the admissible range with margin.
pub fn default_delta(rho: f64) -> f64 {
    0.4 * max_delta(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Uniform in E; constants aggregate two measurement pairs.
    BoundedE,
    /// Applies only to |E| > 2B.
    LargeE,
}

/// Explicit constants certifying lower bounds on the top d exponents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifiedBound {
    pub regime: Regime,
    pub b: f64,
    pub d: usize,
    pub rho: f64,
    pub delta: f64,
    /// Aggregated zero count and factored minimum.
    pub n: usize,
    pub beta: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// Couplings above this threshold activate the certified claim.
    pub lambda0: f64,
    /// Per-exponent constant: the claim is L^(k) >= base(lambda, E) - k * c_hat.
    pub c_hat: f64,
}

impl CertifiedBound {
    /// The certified lower bound on L^(k) at the given coupling and energy.
    pub fn claim(&self, k: usize, lambda: f64, e: f64) -> f64 {
        match self.regime {
            Regime::BoundedE => lambda.ln() - k as f64 * self.c_hat,
            Regime::LargeE => (lambda * e.abs()).ln() - k as f64 * self.c_hat,
        }
    }

    pub fn applies_to_energy(&self, e: f64) -> bool {
        match self.regime {
            Regime::BoundedE => true,
            Regime::LargeE => e.abs() > 2.0 * self.b,
        }
    }
}

/// Measurement pair feeding the bounded-energy constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundedEMeasurements {
    pub n1: usize,
    pub n2: usize,
    pub beta1: f64,
    pub beta2: f64,
}

/// Measurements feeding the large-energy constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LargeEMeasurements {
    pub n1: usize,
    pub beta1: f64,
}

fn check_threshold_params(b: f64, d: usize, rho: f64, delta: f64) -> Result<()> {
    if b <= 0.0 || d == 0 {
        return Err(Error::InvalidInput(format!(
            "need B > 0 and d >= 1, got B={b}, d={d}"
        )));
    }
    if !(0.0 < rho && rho < 1.0) {
        return Err(Error::InvalidInput(format!("rho={rho} must lie in (0,1)")));
    }
    if !(0.0 < delta && delta < max_delta(rho)) {
        return Err(Error::InvalidInput(format!(
            "delta={delta} must lie in (0, (sqrt(1+rho)-1)/2 = {})",
            max_delta(rho)
        )));
    }
    Ok(())
}

/// Constants for the bounded-energy regime. The two measurement pairs
/// compose as N = N1 + N2 and beta = beta1 * beta2 (conservatively), and
/// the claim reads L^(k) >= log lambda - k log(81 B^4 / (4 eps1^2)) for
/// every lambda > lambda0 = 3B / eps1 and every real E.
pub fn threshold_bounded_e(
    meas: BoundedEMeasurements,
    b: f64,
    d: usize,
    rho: f64,
    delta: f64,
) -> Result<CertifiedBound> {
    check_threshold_params(b, d, rho, delta)?;
    if meas.beta1 <= 0.0 || meas.beta2 <= 0.0 {
        return Err(Error::InvalidInput("measurements must have beta > 0".into()));
    }
    let n = meas.n1 + meas.n2;
    let beta = meas.beta1 * meas.beta2;
    let eps0 = epsilon0(rho, delta, n, beta)?;
    let eps1 = eps0 / (3.0 * b * b).powi(d as i32 - 1);
    let lambda0 = 3.0 * b / eps1;
    let c_hat = (81.0 * b.powi(4) / (4.0 * eps1 * eps1)).ln();
    Ok(CertifiedBound {
        regime: Regime::BoundedE,
        b,
        d,
        rho,
        delta,
        n,
        beta,
        eps0,
        eps1,
        lambda0,
        c_hat,
    })
}

/// Constants for the large-energy regime |E| > 2B: the claim reads
/// L^(k) >= log(lambda |E|) - k log(81 B^2 / (4 eps1^2)) for every
/// lambda > lambda0 = 3 / eps1.
pub fn threshold_large_e(
    meas: LargeEMeasurements,
    b: f64,
    d: usize,
    rho: f64,
    delta: f64,
) -> Result<CertifiedBound> {
    check_threshold_params(b, d, rho, delta)?;
    if meas.beta1 <= 0.0 {
        return Err(Error::InvalidInput("measurements must have beta > 0".into()));
    }
    let eps0 = epsilon0(rho, delta, meas.n1, meas.beta1)?;
    let eps1 = eps0 / b.powi(d as i32 - 1);
    let lambda0 = 3.0 / eps1;
    let c_hat = (81.0 * b * b / (4.0 * eps1 * eps1)).ln();
    Ok(CertifiedBound {
        regime: Regime::LargeE,
        b,
        d,
        rho,
        delta,
        n: meas.n1,
        beta: meas.beta1,
        eps0,
        eps1,
        lambda0,
        c_hat,
    })
}

/// Estimator configuration used when checking a bound empirically.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub z_modulus: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n: 10_000,
            samples: 8,
            seed: 0,
            z_modulus: 1.0,
        }
    }
}

/// One (E, k) row of a theorem verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub e: f64,
    pub k: usize,
    pub estimate: f64,
    pub spread: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub lambda: f64,
    pub rows: Vec<ReportRow>,
    pub all_pass: bool,
}

/// The standard energy grid: {0, +-B, +-2B} plus 33 uniform points across
/// [-2B(B+1), 2B(B+1)], covering both regimes.
pub fn default_energy_grid(b: f64) -> Vec<f64> {
    let mut es = vec![0.0, b, -b, 2.0 * b, -2.0 * b];
    let half_width = 2.0 * b * (b + 1.0);
    for i in 0..33 {
        es.push(-half_width + 2.0 * half_width * i as f64 / 32.0);
    }
    es.sort_by(|x, y| x.partial_cmp(y).unwrap());
    es.dedup_by(|x, y| (*x - *y).abs() < 1e-12 * b.max(1.0));
    es
}

/// Estimates the top d exponents of the family at every listed energy and
/// checks them against the certified claim, passing when
/// estimate + 3 * spread >= bound. Refuses couplings below the threshold.
pub fn verify_theorem<F>(
    family: F,
    bound: &CertifiedBound,
    lambda: f64,
    e_values: &[f64],
    cfg: EstimatorConfig,
) -> Result<TheoremReport>
where
    F: Fn(f64) -> Result<BlockCocycle>,
{
    if lambda <= bound.lambda0 {
        return Err(Error::Precondition(format!(
            "coupling lambda={lambda} does not exceed the threshold lambda0={}",
            bound.lambda0
        )));
    }
    let mut rows = Vec::new();
    let mut all_pass = true;
    for &e in e_values {
        if !bound.applies_to_energy(e) {
            continue;
        }
        let cocycle = family(e)?;
        let spectrum = spectrum_qr(&cocycle, cfg.z_modulus, cfg.n, cfg.samples, cfg.seed)?;
        for k in 1..=bound.d {
            let estimate = spectrum.exponents[k - 1];
            let spread = spectrum.spread[k - 1];
            let claim = bound.claim(k, lambda, e);
            let margin = estimate + 3.0 * spread - claim;
            let pass = margin >= 0.0;
            all_pass &= pass;
            rows.push(ReportRow {
                e,
                k,
                estimate,
                spread,
                bound: claim,
                margin,
                pass,
            });
        }
    }
    Ok(TheoremReport {
        lambda,
        rows,
        all_pass,
    })
}

/// Log-convexity residual of the circle means of the k-th compound growth
/// rate: (1-alpha) m(r1) + alpha m(r2) - m(r) with log r interpolating
/// between log r1 and log r2. Must be >= -(quadrature slack) for any
/// holomorphic cocycle.
pub fn circle_convexity_check(
    c: &BlockCocycle,
    k: usize,
    n: usize,
    radii: (f64, f64, f64),
    angle_samples: usize,
) -> Result<f64> {
    let (r1, r, r2) = radii;
    if !(r1 < r && r < r2) {
        return Err(Error::InvalidInput(format!(
            "need r1 < r < r2, got ({r1}, {r}, {r2})"
        )));
    }
    let alpha = (r.ln() - r1.ln()) / (r2.ln() - r1.ln());
    let m1 = circle_mean(c, k, r1, n, angle_samples)?;
    let m = circle_mean(c, k, r, n, angle_samples)?;
    let m2 = circle_mean(c, k, r2, n, angle_samples)?;
    Ok((1.0 - alpha) * m1 + alpha * m2 - m)
}

/// Random instance generator for growth-lemma property tests: corners are
/// scaled unitaries (exact minimum expansion), off-blocks norm-bounded.
pub fn random_growth_instance(
    lambda: f64,
    b: f64,
    d: usize,
    m: usize,
    n: usize,
    rng: &mut impl rand::Rng,
) -> Result<GrowthHypothesis> {
    use crate::matrix::qr_positive;
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..n {
        // random unitary corner times a diagonal with entries >= lambda
        let raw = Matrix::from_fn(d, d, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let (q, _) = qr_positive(&raw);
        let diag = Matrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(lambda * rng.gen_range(1.0..1.5), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let corner = q.mul(&diag);
        let mut off = |rows: usize, cols: usize| {
            let raw = Matrix::from_fn(rows, cols, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let nrm = raw.norm();
            let target = b * rng.gen_range(0.1..0.95);
            raw.scale(C64::new(target / nrm.max(1e-300), 0.0))
        };
        let blk = Matrix::from_blocks(
            &corner,
            &off(d, m - d),
            &off(m - d, d),
            &off(m - d, m - d),
        );
        blocks.push(blk);
    }
    GrowthHypothesis::new(lambda, b, d, m, blocks)
}
