//! End-to-end acceptance battery. Each test covers one criterion and
//! prints a single pass line; a failure panics with the offending values.

use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cocycle_core::bounds::{
    circle_convexity_check, default_delta, default_energy_grid, random_growth_instance,
    threshold_bounded_e, verify_growth, BoundedEMeasurements,
};
use cocycle_core::jets::{
    characteristic_eval, elementary_symmetric, has_no_constant_eigenvalues, GenericityCertificate,
};
use cocycle_core::laurent::{
    all_zeros, count_zeros_by_argument_principle, default_outer_radius, find_good_circle,
    measure_hat, measure_n_beta, LaurentMatrixFunction, LaurentScalar,
};
use cocycle_core::lyapunov::{decomposed_band_spectrum, scalar_log_mean, spectrum_qr};
use cocycle_core::matrix::{Matrix, C64};
use cocycle_core::models::{BlockCocycle, Rotation};

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn pass(id: u32, what: &str) {
    println!("criterion {id:02} ({what}): PASS");
}

#[test]
fn c01_constant_cocycle_spectrum() {
    let rot = Rotation::golden();
    let diag = BlockCocycle::from_constant_matrix(
        &Matrix::from_real_rows(2, 2, &[2.0, 0.0, 0.0, 0.5]),
        rot,
    )
    .unwrap();
    let s = spectrum_qr(&diag, 1.0, 10_000, 1, 0).unwrap();
    let l2 = 2.0_f64.ln();
    assert!(
        (s.exponents[0] - l2).abs() < 1e-4 && (s.exponents[1] + l2).abs() < 1e-4,
        "diag(2, 1/2): {:?}",
        s.exponents
    );
    // free Schrodinger at E = 3: eigenvalue moduli (3 +- sqrt 5)/2
    let free = BlockCocycle::from_constant_matrix(
        &Matrix::from_real_rows(2, 2, &[-3.0, -1.0, 1.0, 0.0]),
        rot,
    )
    .unwrap();
    let s = spectrum_qr(&free, 1.0, 10_000, 1, 0).unwrap();
    let exact = ((3.0 + 5.0_f64.sqrt()) / 2.0).ln();
    assert!(
        (s.exponents[0] - exact).abs() < 1e-4 && (s.exponents[1] + exact).abs() < 1e-4,
        "free Schrodinger: {:?} vs {exact}",
        s.exponents
    );
    pass(1, "constant-cocycle spectra match eigenvalue moduli");
}

#[test]
fn c02_large_coupling_cosine() {
    let rot = Rotation::golden();
    for lambda in [10.0, 100.0] {
        let c = BlockCocycle::build_schrodinger_1d(LaurentScalar::two_cos(), lambda, 0.0, rot);
        let s = spectrum_qr(&c, 1.0, 100_000, 8, 0).unwrap();
        assert!(
            s.exponents[0] >= lambda.ln() - 1e-2,
            "lambda={lambda}: L1 = {} < log lambda - 1e-2",
            s.exponents[0]
        );
    }
    pass(2, "cosine potential beats log lambda at large coupling");
}

/// Diagonal potential with two cosines at a phase offset; the standard
/// two-band example with constant off-diagonal coupling.
fn two_band_potential(rho: f64) -> LaurentMatrixFunction {
    let mut d = LaurentMatrixFunction::zero(2, 2, rho);
    *d.entry_mut(0, 0) = LaurentScalar::two_cos();
    let theta = 0.31_f64;
    let mut shifted = LaurentScalar::zero();
    shifted.set(1, C64::from_polar(1.0, TAU * theta));
    shifted.set(-1, C64::from_polar(1.0, -TAU * theta));
    *d.entry_mut(1, 1) = shifted;
    d
}

#[test]
fn c03_two_band_battery() {
    let rho = 0.5;
    let rot = Rotation::golden();
    let d = two_band_potential(rho);
    let lambda = 1e6_f64;
    let b = 1.0; // identity coupling, unit off-blocks
    let hat = measure_hat(&d, rho, default_outer_radius(rho), 201).unwrap();
    let bound = threshold_bounded_e(
        BoundedEMeasurements {
            n1: hat.n_hat,
            n2: hat.n_hat,
            beta1: hat.beta_hat,
            beta2: hat.beta_hat,
        },
        b,
        2,
        rho,
        default_delta(rho),
    )
    .unwrap();
    let w = LaurentMatrixFunction::identity(2, rho);
    let r = LaurentMatrixFunction::identity(2, rho);
    for e in default_energy_grid(b) {
        let c =
            BlockCocycle::build_band_jacobi(w.clone(), r.clone(), d.clone(), lambda, e, rot)
                .unwrap();
        let s = spectrum_qr(&c, 1.0, 2_000, 2, 11).unwrap();
        for k in 1..=2usize {
            let certified = lambda.ln() - k as f64 * bound.c_hat;
            assert!(
                s.exponents[k - 1] >= certified,
                "E={e}, k={k}: {} < certified {certified}",
                s.exponents[k - 1]
            );
            assert!(
                s.exponents[k - 1] >= lambda.ln() - 2.0,
                "E={e}, k={k}: {} < log lambda - 2",
                s.exponents[k - 1]
            );
        }
        // symplectic pairing of the four exponents
        for k in 0..2 {
            let sum = s.exponents[k] + s.exponents[3 - k];
            assert!(sum.abs() < 1e-2, "E={e}: pairing residual {sum}");
        }
    }
    pass(3, "two-band model beats the certified and empirical bounds");
}

#[test]
fn c04_growth_lemma_battery() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let d = rng.gen_range(1..=3usize);
        let m = rng.gen_range((d + 1).max(2)..=6usize);
        let h = random_growth_instance(10.0, 1.0, d, m, 20, &mut rng).unwrap();
        for k in 1..=d {
            let check = verify_growth(&h, k).unwrap();
            assert!(check.pass, "instance {i} (d={d}, m={m}, k={k}): {check:?}");
            assert!(check.max_step_ratio < 1.0);
        }
    }
    pass(4, "growth inequality on 1000 random instances");
}

/// Planted-root instance away from the annulus boundary circles, with the
/// zero count inside the closed annulus known by construction.
fn planted_polynomial(rng: &mut ChaCha8Rng, rho: f64) -> (LaurentScalar, usize) {
    let inside = rng.gen_range(0..=3usize);
    let outside = rng.gen_range(1..=3usize);
    let mut roots = Vec::new();
    for _ in 0..inside {
        // well inside the annulus, away from |z| = 1 -+ rho
        let r = if rng.gen() {
            rng.gen_range(1.0 - rho + 0.08..1.0 - 0.03)
        } else {
            rng.gen_range(1.0 + 0.03..1.0 + rho - 0.08)
        };
        roots.push(C64::from_polar(r, TAU * rng.gen_range(0.0..1.0)));
    }
    for _ in 0..outside {
        // beyond the factoring zone | |z| - 1 | < (rho + R)/2
        let r = if rng.gen_range(0..4) == 0 {
            rng.gen_range(0.05..0.35)
        } else {
            rng.gen_range(1.8..2.8)
        };
        roots.push(C64::from_polar(r, TAU * rng.gen_range(0.0..1.0)));
    }
    let f = LaurentScalar::from_roots(&roots);
    let scale = 1.0 / f.max_abs_coeff();
    (f.scale(C64::new(scale, 0.0)), inside)
}

/// Independent beta oracle: factor the near-circle zeros out exactly as
/// the measurement does, then brute-force the minimum over the two
/// boundary circles (the factored function is zero-free on the annulus,
/// so its minimum modulus sits there).
fn beta_brute_force(f: &LaurentScalar, rho: f64, r_outer: f64, points: usize) -> f64 {
    let divisor = all_zeros(f).unwrap();
    let divide_radius = (rho + r_outer) / 2.0;
    let near: Vec<(C64, usize)> = divisor
        .zeros
        .iter()
        .filter(|z| (z.location().norm() - 1.0).abs() < divide_radius)
        .map(|z| (z.location(), z.multiplicity))
        .collect();
    let normalization = 2.0 * (r_outer + 1.0);
    let per_circle = points / 2;
    let mut best = f64::INFINITY;
    for radius in [1.0 - rho, 1.0 + rho] {
        for j in 0..per_circle {
            let z = C64::from_polar(radius, TAU * (j as f64 + 0.5) / per_circle as f64);
            let mut v = f.evaluate(z).unwrap().norm();
            for &(zj, mult) in &near {
                v /= ((z - zj).norm() / normalization).powi(mult as i32);
            }
            best = best.min(v);
        }
    }
    best
}

#[test]
fn c05_annulus_measurements() {
    let rho = 0.3;
    let r_outer = default_outer_radius(rho);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..200 {
        let (f, planted) = planted_polynomial(&mut rng, rho);
        let m = measure_n_beta(&f, rho, r_outer).unwrap();
        assert_eq!(m.n, planted, "instance {i}: zero count");
        let oracle = beta_brute_force(&f, rho, r_outer, 100_000);
        assert!(
            (m.beta - oracle).abs() < 1e-6,
            "instance {i}: beta {} vs brute force {oracle}",
            m.beta
        );
        let winding = count_zeros_by_argument_principle(&f, 1.0 - rho, 1.0 + rho).unwrap();
        assert_eq!(winding, planted as i64, "instance {i}: winding count");
    }
    pass(5, "zero counts and beta agree with brute-force oracles");
}

#[test]
fn c06_good_circle_guarantee() {
    let rho = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..60 {
        let (f, _) = planted_polynomial(&mut rng, rho);
        let circle = find_good_circle(&f, 0.0, rho / 2.0, rho).unwrap();
        assert!(
            circle.min_modulus >= circle.guarantee,
            "instance {i}: min {} below guarantee {}",
            circle.min_modulus,
            circle.guarantee
        );
    }
    pass(6, "good-circle minimum always beats its guarantee");
}

#[test]
fn c07_circle_convexity() {
    let rot = Rotation::golden();
    let battery: Vec<BlockCocycle> = vec![
        BlockCocycle::from_constant_matrix(
            &Matrix::from_real_rows(2, 2, &[2.0, 1.0, 0.0, 0.5]),
            rot,
        )
        .unwrap(),
        BlockCocycle::build_schrodinger_1d(LaurentScalar::two_cos(), 2.0, 0.5, rot),
        BlockCocycle::build_schrodinger_1d(LaurentScalar::two_cos(), 10.0, 0.0, rot),
        BlockCocycle::build_band_jacobi(
            LaurentMatrixFunction::identity(2, 0.5),
            LaurentMatrixFunction::identity(2, 0.5),
            two_band_potential(0.5),
            3.0,
            0.2,
            rot,
        )
        .unwrap(),
    ];
    for (i, c) in battery.iter().enumerate() {
        let res = circle_convexity_check(c, 1, 400, (1.0, 1.05, 1.25), 1024).unwrap();
        assert!(res >= -1e-6, "battery {i}: residual {res}");
    }
    // closed form: log|z - 1| averages to log r on circles of radius r > 1,
    // so the convexity residual vanishes identically there
    let g = BlockCocycle::scalar(LaurentScalar::from_roots(&[C64::new(1.0, 0.0)]), rot, 0.5);
    let res = circle_convexity_check(&g, 1, 100, (1.02, 1.05, 1.25), 2048).unwrap();
    assert!(res.abs() < 1e-8, "closed-form residual {res}");
    pass(7, "circle means are log-convex across the battery");
}

#[test]
fn c08_scalar_log_means() {
    let two_cos = scalar_log_mean(&LaurentScalar::two_cos()).unwrap();
    assert!(two_cos.abs() < 1e-8, "mean log|2cos| = {two_cos}");
    let cos = scalar_log_mean(&LaurentScalar::cos()).unwrap();
    assert!((cos + 2.0_f64.ln()).abs() < 1e-8, "mean log|cos| = {cos}");
    pass(8, "scalar log means hit their closed forms");
}

#[test]
fn c09_weighted_band_decomposition() {
    let rho = 0.5;
    let rot = Rotation::golden();
    // W = 2 + cos(2 pi x), scalar band model
    let mut w_scalar = LaurentScalar::real_constant(2.0);
    w_scalar = w_scalar.add(&LaurentScalar::cos());
    let w = LaurentMatrixFunction::scalar(w_scalar, rho);
    let r = LaurentMatrixFunction::identity(1, rho);
    let d = LaurentMatrixFunction::scalar(LaurentScalar::two_cos(), rho);
    let (lambda, e) = (4.0, 0.3);
    let (decomposed, l_g) =
        decomposed_band_spectrum(&w, &r, &d, lambda, e, rot, 10_000, 4, 9).unwrap();
    assert!(
        (l_g - ((2.0 + 3.0_f64.sqrt()) / 2.0).ln()).abs() < 1e-6,
        "mean log det W = {l_g}"
    );
    let direct_cocycle =
        BlockCocycle::build_band_jacobi(w.clone(), r, d, lambda, e, rot).unwrap();
    let direct = spectrum_qr(&direct_cocycle, 1.0, 10_000, 4, 9).unwrap();
    assert!(
        (decomposed.exponents[0] - direct.exponents[0]).abs() < 1e-2,
        "decomposed {} vs direct {}",
        decomposed.exponents[0],
        direct.exponents[0]
    );
    pass(9, "regularized decomposition matches the direct exponent");
}

#[test]
fn c10_realification_pairs_exponents() {
    let rho = 0.5;
    let rot = Rotation::golden();
    let mut v = LaurentMatrixFunction::zero(2, 2, rho);
    v.entry_mut(0, 0).set(0, C64::new(0.0, 2.0));
    v.entry_mut(0, 0).set(1, C64::new(0.3, 0.0));
    v.entry_mut(0, 1).set(0, C64::new(0.1, 0.0));
    v.entry_mut(1, 0).set(-1, C64::new(0.0, 0.2));
    v.entry_mut(1, 1).set(0, C64::new(0.0, 0.5));
    let complex = BlockCocycle::from_matrix_function(v, rot).unwrap();
    let real = complex.clone().realified();
    let sc = spectrum_qr(&complex, 1.0, 20_000, 4, 7).unwrap();
    let sr = spectrum_qr(&real, 1.0, 20_000, 4, 7).unwrap();
    for i in 1..=2usize {
        for j in [2 * i - 1, 2 * i] {
            assert!(
                (sc.exponents[i - 1] - sr.exponents[j - 1]).abs() < 1e-3,
                "L^({i}) = {} vs realified L^({j}) = {}",
                sc.exponents[i - 1],
                sr.exponents[j - 1]
            );
        }
    }
    pass(10, "realified cocycle doubles every exponent");
}

#[test]
fn c11_genericity_certificates() {
    let cert = has_no_constant_eigenvalues(&two_band_potential(0.5), 64).unwrap();
    assert!(
        matches!(cert, GenericityCertificate::CertifiedYes { .. }),
        "two-band potential: {cert:?}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in 1..=3usize {
        let constant = Matrix::from_fn(d, d, |i, j| {
            if i <= j {
                C64::new(rng.gen_range(-1.0..1.0), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        // symmetrize
        let sym = constant.add(&constant.transpose()).scale(C64::new(0.5, 0.0));
        let v = LaurentMatrixFunction::constant(&sym, 0.5);
        let cert = has_no_constant_eigenvalues(&v, 64).unwrap();
        assert_eq!(cert, GenericityCertificate::Inconclusive, "constant d={d}");
    }
    // characteristic-polynomial identity on random matrices
    for i in 0..1000 {
        let d = rng.gen_range(1..=5usize);
        let a = Matrix::from_fn(d, d, |_, _| {
            C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
        });
        let e_k = elementary_symmetric(&a).unwrap();
        let energy = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let via_sum = characteristic_eval(&e_k, energy);
        let shifted = a.sub(&Matrix::identity(d).scale(energy));
        let direct = shifted.determinant();
        let scale = direct.norm().max(1.0);
        assert!(
            (via_sum - direct).norm() <= 1e-10 * scale,
            "instance {i} (d={d}): {via_sum} vs {direct}"
        );
    }
    pass(11, "jet certificates and the characteristic identity");
}

#[test]
fn c12_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_cocycle");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("model.json");
    std::fs::write(
        &config,
        r#"{
  "schema_version": 1,
  "kind": "schrodinger_1d",
  "lambda": 10.0,
  "e": 0.0,
  "blocks": {
    "V": { "rows": 1, "cols": 1, "rho": 0.5,
           "entries": [[{"k": -1, "re": 1.0, "im": 0.0}, {"k": 1, "re": 1.0, "im": 0.0}]] }
  },
  "sweep": { "variable": "e", "min": -2.0, "max": 2.0, "points": 5 }
}"#,
    )
    .unwrap();
    // same model without the sweep block, for the single-point JSON output
    let single = dir.path().join("single.json");
    let stripped: serde_json::Value = {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("sweep");
        v
    };
    std::fs::write(&single, serde_json::to_string(&stripped).unwrap()).unwrap();

    let run = |out: &std::path::Path| {
        for args in [
            vec!["lyapunov", "--n", "500", "--samples", "2", "--seed", "42", "--svg"],
            vec!["genericity"],
        ] {
            let mut cmd = Command::new(bin);
            cmd.arg(args[0])
                .args(&args[1..])
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(out);
            let status = cmd.status().unwrap();
            assert!(status.success(), "{args:?} failed");
        }
        let status = Command::new(bin)
            .args(["lyapunov", "--n", "500", "--samples", "2", "--seed", "42"])
            .arg("--config")
            .arg(&single)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run(&out1);
    run(&out2);
    for name in ["sweep.csv", "sweep.svg", "spectrum.json", "genericity.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        assert!(!a.is_empty());
    }
    pass(12, "seeded CLI runs are byte-identical");
}
