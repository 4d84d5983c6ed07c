//! Command-line front end: loads model configs, runs annulus
//! measurements, Lyapunov estimates and certified-bound verifications,
//! and writes CSV/JSON reports plus simple SVG plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cocycle_core::bounds::{
    circle_convexity_check, default_delta, default_energy_grid, random_growth_instance,
    threshold_bounded_e, verify_growth, BoundedEMeasurements, EstimatorConfig,
};
use cocycle_core::jets::has_no_constant_eigenvalues;
use cocycle_core::laurent::{
    all_zeros, default_outer_radius, find_good_circle, measure_hat, measure_n_beta,
    LaurentMatrixFunction, LaurentScalar,
};
use cocycle_core::lyapunov::spectrum_qr;
use cocycle_core::models::{BlockCocycle, Rotation};
use cocycle_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "cocycle", version, about = "Lyapunov spectra and certified bounds for analytic quasi-periodic cocycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Model configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Transfer length per orbit.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Number of sampled phases (or instances, for growth-test).
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// RNG seed for phase sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Annulus parameter overriding the config value.
    #[arg(long)]
    rho: Option<f64>,
    /// Good-circle / threshold width parameter.
    #[arg(long)]
    delta: Option<f64>,
    /// Also render SVG plots next to the CSV output.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Annulus measurements of det(V - E I): N, beta, worst case over E,
    /// zero divisor and a good circle.
    Measure(CommonArgs),
    /// Lyapunov spectrum at a single point or swept over E / lambda.
    Lyapunov(CommonArgs),
    /// Check the certified lower bounds against estimates on the energy grid.
    Verify(CommonArgs),
    /// Constant-eigenvalue certificate via jet non-degeneracy.
    Genericity(CommonArgs),
    /// Growth-lemma verification on random hypothesis-satisfying instances.
    GrowthTest(CommonArgs),
    /// Log-convexity residual of circle means for the configured model.
    ConvexityTest(CommonArgs),
}

// Exit codes: 0 ok, 1 verification failed, 2 config/IO error,
// 3 invalid parameters or precondition, 4 transversality violation,
// 5 numerical/domain error.
const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARAMS: u8 = 3;
const EXIT_TRANSVERSALITY: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

#[derive(Serialize)]
struct Diagnostic<'a> {
    error: &'a str,
    message: String,
}

struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            kind: "config",
            message: message.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let (code, kind) = match &e {
            CoreError::InvalidInput(_) | CoreError::Precondition(_) | CoreError::Dimension(_) => {
                (EXIT_PARAMS, "parameters")
            }
            CoreError::TransversalityViolation(_) => (EXIT_TRANSVERSALITY, "transversality"),
            _ => (EXIT_NUMERICAL, "numerical"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    variable: String, // "e" or "lambda"
    min: f64,
    max: f64,
    points: usize,
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    schema_version: u32,
    kind: String,
    #[serde(default)]
    d: Option<usize>,
    #[serde(default)]
    m: Option<usize>,
    #[serde(default = "one")]
    lambda: f64,
    #[serde(default)]
    e: f64,
    /// Rotation number; golden mean when omitted.
    #[serde(default)]
    omega: Option<f64>,
    #[serde(default)]
    rho: Option<f64>,
    /// Off-block norm bound for the certified constants; inferred from
    /// the blocks when omitted.
    #[serde(default)]
    b: Option<f64>,
    #[serde(default)]
    realified: bool,
    #[serde(default)]
    blocks: std::collections::BTreeMap<String, LaurentMatrixFunction>,
    #[serde(default)]
    sweep: Option<SweepConfig>,
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ModelConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("malformed config {}: {e}", path.display())))?;
        if cfg.schema_version != 1 {
            return Err(CliError::config(format!(
                "unsupported schema_version {} (expected 1)",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    fn rotation(&self) -> CliResult<Rotation> {
        match self.omega {
            Some(w) => Ok(Rotation::new(w)?),
            None => Ok(Rotation::golden()),
        }
    }

    fn block(&self, name: &str) -> CliResult<&LaurentMatrixFunction> {
        self.blocks.get(name).ok_or_else(|| {
            CliError::config(format!("config kind '{}' needs a '{name}' block", self.kind))
        })
    }

    fn scalar_block(&self, name: &str) -> CliResult<LaurentScalar> {
        let blk = self.block(name)?;
        if blk.rows() != 1 || blk.cols() != 1 {
            return Err(CliError::config(format!(
                "block '{name}' must be 1x1 for kind '{}'",
                self.kind
            )));
        }
        Ok(blk.entry(0, 0).clone())
    }

    /// The symmetric potential block the annulus measurements act on.
    fn potential(&self) -> CliResult<LaurentMatrixFunction> {
        match self.kind.as_str() {
            "schrodinger_1d" | "scalar" | "matrix" => Ok(self.block("V")?.clone()),
            "band_jacobi" | "adjugate_regularized" | "symplectic_weighted" => {
                Ok(self.block("D")?.clone())
            }
            "a_lambda" | "a_lambda_e" => Ok(self.block("V")?.clone()),
            other => Err(CliError::config(format!("unknown model kind '{other}'"))),
        }
    }

    fn rho_for(&self, common: &CommonArgs) -> f64 {
        common.rho.or(self.rho).unwrap_or(0.5)
    }

    fn build(&self, lambda: f64, e: f64) -> CliResult<BlockCocycle> {
        let rot = self.rotation()?;
        let cocycle = match self.kind.as_str() {
            "schrodinger_1d" => {
                BlockCocycle::build_schrodinger_1d(self.scalar_block("V")?, lambda, e, rot)
            }
            "scalar" => BlockCocycle::scalar(
                self.scalar_block("V")?,
                rot,
                self.rho.unwrap_or(0.5),
            ),
            "matrix" => BlockCocycle::from_matrix_function(self.block("V")?.clone(), rot)?,
            "band_jacobi" => BlockCocycle::build_band_jacobi(
                self.block("W")?.clone(),
                self.block("R")?.clone(),
                self.block("D")?.clone(),
                lambda,
                e,
                rot,
            )?,
            "adjugate_regularized" => BlockCocycle::build_adjugate_regularized(
                self.block("W")?.clone(),
                self.block("R")?.clone(),
                self.block("D")?.clone(),
                lambda,
                e,
                rot,
            )?,
            "symplectic_weighted" => BlockCocycle::build_symplectic_weighted(
                self.block("W")?.clone(),
                self.block("R")?.clone(),
                self.block("D")?.clone(),
                lambda,
                e,
                rot,
            )?,
            "a_lambda" => BlockCocycle::build_a_lambda(
                self.block("V")?.clone(),
                self.block("Wb")?.clone(),
                self.block("Ws")?.clone(),
                self.block("O")?.clone(),
                lambda,
                rot,
            )?,
            "a_lambda_e" => BlockCocycle::build_a_lambda_e(
                self.block("U")?.clone(),
                self.block("V")?.clone(),
                self.block("Wb")?.clone(),
                self.block("Ws")?.clone(),
                self.block("O")?.clone(),
                lambda,
                e,
                rot,
            )?,
            other => return Err(CliError::config(format!("unknown model kind '{other}'"))),
        };
        let cocycle = if self.realified {
            cocycle.realified()
        } else {
            cocycle
        };
        if let Some(d) = self.d {
            if d != cocycle.corner_dim() {
                return Err(CliError::config(format!(
                    "config d={d} disagrees with the blocks (corner dimension {})",
                    cocycle.corner_dim()
                )));
            }
        }
        if let Some(m) = self.m {
            if m != cocycle.ambient_dim() {
                return Err(CliError::config(format!(
                    "config m={m} disagrees with the blocks (ambient dimension {})",
                    cocycle.ambient_dim()
                )));
            }
        }
        Ok(cocycle)
    }

    /// Norm bound B on the off-corner data, for the certified constants.
    fn off_norm_bound(&self) -> CliResult<f64> {
        if let Some(b) = self.b {
            return Ok(b);
        }
        let mut b = 1.0_f64;
        for name in ["R", "Wb", "Ws", "O", "U"] {
            if let Some(blk) = self.blocks.get(name) {
                b = b.max(blk.norm_rho());
            }
        }
        Ok(b)
    }
}

fn write_output(out_dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

/// Minimal SVG polyline plot: one series per exponent index.
fn render_svg(title: &str, xs: &[f64], series: &[Vec<f64>]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = series
        .iter()
        .flatten()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let ymax = series
        .iter()
        .flatten()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let xspan = (xmax - xmin).max(1e-12);
    let yspan = (ymax - ymin).max(1e-12);
    let px = |x: f64| pad + (x - xmin) / xspan * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - ymin) / yspan * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{pad}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{xmin:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">{xmax:.3}</text>\n\
         <text x=\"4\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{ymin:.3}</text>\n\
         <text x=\"4\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{ymax:.3}</text>\n",
        w / 2.0,
        h - pad,
        w - pad,
        h - pad,
        h - pad,
        h - pad + 16.0,
        w - pad,
        h - pad + 16.0,
        h - pad,
        pad + 4.0,
    );
    for (i, ys) in series.iter().enumerate() {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            colors[i % colors.len()],
            pts.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Serialize)]
struct MeasureReport {
    e: f64,
    rho: f64,
    n: usize,
    beta: f64,
    n_hat: usize,
    beta_hat: f64,
    argmax_e: f64,
    argmin_e: f64,
    grid_certified_only: bool,
    zeros: Vec<[f64; 2]>,
    good_circle_y0: f64,
    good_circle_min_modulus: f64,
    good_circle_guarantee: f64,
}

fn cmd_measure(args: &CommonArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let v = cfg.potential()?;
    let rho = cfg.rho_for(args);
    let delta = args.delta.unwrap_or(rho / 4.0);
    if !(0.0 < delta && delta < rho) {
        return Err(CliError {
            code: EXIT_PARAMS,
            kind: "parameters",
            message: format!("delta={delta} must lie in (0, rho={rho})"),
        });
    }
    let r_outer = default_outer_radius(rho);
    let f = v.shift_by_energy(cfg.e).determinant()?;
    let m = measure_n_beta(&f, rho, r_outer)?;
    let hat = measure_hat(&v, rho, r_outer, 501)?;
    let divisor = all_zeros(&f)?;
    let circle = find_good_circle(&f, 0.0, delta, rho)?;
    let report = MeasureReport {
        e: cfg.e,
        rho,
        n: m.n,
        beta: m.beta,
        n_hat: hat.n_hat,
        beta_hat: hat.beta_hat,
        argmax_e: hat.argmax_e,
        argmin_e: hat.argmin_e,
        grid_certified_only: hat.grid_certified_only,
        zeros: divisor
            .zeros
            .iter()
            .map(|z| [z.location().re, z.location().im])
            .collect(),
        good_circle_y0: circle.y0,
        good_circle_min_modulus: circle.min_modulus,
        good_circle_guarantee: circle.guarantee,
    };
    let json = to_json(&report);
    write_output(&args.out, "measure.json", &json)?;
    let mut csv = String::from("quantity,value\n");
    csv.push_str(&format!("n,{}\n", report.n));
    csv.push_str(&format!("beta,{:.17e}\n", report.beta));
    csv.push_str(&format!("n_hat,{}\n", report.n_hat));
    csv.push_str(&format!("beta_hat,{:.17e}\n", report.beta_hat));
    csv.push_str(&format!("good_circle_y0,{:.17e}\n", report.good_circle_y0));
    write_output(&args.out, "measure.csv", &csv)?;
    print!("{json}");
    Ok(())
}

fn cmd_lyapunov(args: &CommonArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    match cfg.sweep.clone() {
        None => {
            let cocycle = cfg.build(cfg.lambda, cfg.e)?;
            let spectrum = spectrum_qr(&cocycle, 1.0, args.n, args.samples, args.seed)?;
            let json = to_json(&spectrum);
            write_output(&args.out, "spectrum.json", &json)?;
            print!("{json}");
            Ok(())
        }
        Some(sweep) => {
            if sweep.points < 2 || !(sweep.min < sweep.max) {
                return Err(CliError::config("sweep needs points >= 2 and min < max"));
            }
            let dim = cfg.build(cfg.lambda, cfg.e)?.ambient_dim();
            let mut xs = Vec::with_capacity(sweep.points);
            let mut series = vec![Vec::with_capacity(sweep.points); dim];
            let var = sweep.variable.as_str();
            let mut csv = String::from(match var {
                "e" => "e,k,exponent,spread\n",
                "lambda" => "lambda,k,exponent,spread\n",
                other => {
                    return Err(CliError::config(format!(
                        "sweep variable must be 'e' or 'lambda', got '{other}'"
                    )))
                }
            });
            for i in 0..sweep.points {
                let t = sweep.min
                    + (sweep.max - sweep.min) * i as f64 / (sweep.points - 1) as f64;
                let cocycle = match var {
                    "e" => cfg.build(cfg.lambda, t)?,
                    _ => cfg.build(t, cfg.e)?,
                };
                let spectrum = spectrum_qr(&cocycle, 1.0, args.n, args.samples, args.seed)?;
                xs.push(t);
                for (k, (&l, &s)) in spectrum
                    .exponents
                    .iter()
                    .zip(&spectrum.spread)
                    .enumerate()
                {
                    series[k].push(l);
                    csv.push_str(&format!("{t:.17e},{},{l:.17e},{s:.17e}\n", k + 1));
                }
            }
            let path = write_output(&args.out, "sweep.csv", &csv)?;
            if args.svg {
                let svg = render_svg(
                    &format!("exponents vs {var}"),
                    &xs,
                    &series,
                );
                write_output(&args.out, "sweep.svg", &svg)?;
            }
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn cmd_verify(args: &CommonArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let v = cfg.potential()?;
    let rho = cfg.rho_for(args);
    let delta = args.delta.unwrap_or_else(|| default_delta(rho));
    let b = cfg.off_norm_bound()?;
    let d = v.rows();
    let r_outer = default_outer_radius(rho);
    let hat = measure_hat(&v, rho, r_outer, 501)?;
    let meas = BoundedEMeasurements {
        n1: hat.n_hat,
        n2: hat.n_hat,
        beta1: hat.beta_hat,
        beta2: hat.beta_hat,
    };
    let bound = threshold_bounded_e(meas, b, d, rho, delta)?;
    let es = default_energy_grid(b);
    let est = EstimatorConfig {
        n: args.n,
        samples: args.samples,
        seed: args.seed,
        z_modulus: 1.0,
    };
    let report = cocycle_core::bounds::verify_theorem(
        |e| cfg.build(cfg.lambda, e).map_err(|c| CoreError::InvalidInput(c.message)),
        &bound,
        cfg.lambda,
        &es,
        est,
    )?;
    let json = to_json(&report);
    write_output(&args.out, "verify.json", &json)?;
    let mut csv = String::from("e,k,estimate,spread,bound,margin,pass\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
            row.e, row.k, row.estimate, row.spread, row.bound, row.margin, row.pass
        ));
    }
    write_output(&args.out, "verify.csv", &csv)?;
    print!("{json}");
    if report.all_pass {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_FAIL,
            kind: "verification",
            message: "at least one (E, k) pair fell below its certified bound".into(),
        })
    }
}

fn cmd_genericity(args: &CommonArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let v = cfg.potential()?;
    let cert = has_no_constant_eigenvalues(&v, 256)?;
    let json = to_json(&cert);
    write_output(&args.out, "genericity.json", &json)?;
    print!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct GrowthReport {
    instances: usize,
    all_pass: bool,
    worst_margin: f64,
    max_step_ratio: f64,
}

fn cmd_growth_test(args: &CommonArgs) -> CliResult<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let instances = args.samples.max(1);
    let mut all_pass = true;
    let mut worst_margin = f64::INFINITY;
    let mut max_step_ratio = 0.0_f64;
    for _ in 0..instances {
        let d = rng.gen_range(1..=3usize);
        let m = rng.gen_range((d + 1).max(2)..=6usize);
        let h = random_growth_instance(10.0, 1.0, d, m, 20, &mut rng)?;
        for k in 1..=d {
            let check = verify_growth(&h, k)?;
            all_pass &= check.pass;
            worst_margin = worst_margin.min(check.measured - check.bound);
            max_step_ratio = max_step_ratio.max(check.max_step_ratio);
        }
    }
    let report = GrowthReport {
        instances,
        all_pass,
        worst_margin,
        max_step_ratio,
    };
    let json = to_json(&report);
    write_output(&args.out, "growth.json", &json)?;
    print!("{json}");
    if all_pass {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_FAIL,
            kind: "verification",
            message: "growth inequality failed on some instance".into(),
        })
    }
}

#[derive(Serialize)]
struct ConvexityReport {
    radii: [f64; 3],
    residual: f64,
    pass: bool,
}

fn cmd_convexity_test(args: &CommonArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let cocycle = cfg.build(cfg.lambda, cfg.e)?;
    let rho = cfg.rho_for(args);
    let radii = (1.0, 1.0 + rho / 10.0, 1.0 + rho / 2.0);
    let residual = circle_convexity_check(&cocycle, 1, args.n.min(2000).max(50), radii, 512)?;
    let report = ConvexityReport {
        radii: [radii.0, radii.1, radii.2],
        residual,
        pass: residual >= -1e-6,
    };
    let json = to_json(&report);
    write_output(&args.out, "convexity.json", &json)?;
    print!("{json}");
    if report.pass {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_FAIL,
            kind: "verification",
            message: format!("convexity residual {residual} below tolerance"),
        })
    }
}

fn load_config(args: &CommonArgs) -> CliResult<ModelConfig> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config is required for this command"))?;
    ModelConfig::load(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Measure(a) => cmd_measure(a),
        Command::Lyapunov(a) => cmd_lyapunov(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Genericity(a) => cmd_genericity(a),
        Command::GrowthTest(a) => cmd_growth_test(a),
        Command::ConvexityTest(a) => cmd_convexity_test(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diag = Diagnostic {
                error: e.kind,
                message: e.message,
            };
            eprintln!("{}", serde_json::to_string(&diag).expect("diagnostic"));
            ExitCode::from(e.code)
        }
    }
}
