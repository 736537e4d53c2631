//! Command-line driver for tensor decomposition experiments.
//!
//! Subcommands: `decompose`, `certify`, `assumptions`, `sos`,
//! `phase-transition`, `oracle`. Every command takes `--seed`,
//! `--config <json>` and `--out <dir>`; instances are either read from
//! files (`t3d-json` / `fset-json`) or generated from the seed. Exit codes:
//! 0 success, 1 solver failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use polyad::admm::{decompose, AdmmConfig, Init};
use polyad::cert::{
    near_region_check, scalar_inequality_checks, solve_certificate_direct,
    solve_certificate_iterative, spectral_bound_checks, verify_certificate, Certificate,
    SolveMethod,
};
use polyad::factor::{
    align_and_error, assumption_report, random_factor_set, synthesize, AssumptionConstants,
    CoeffScheme,
};
use polyad::io;
use polyad::sos::{
    build_moment_sdp, moment_distance, moment_distance_mod_signs, sdp_solve, true_moment_vector,
    MomentVector, SdpConfig, SdpStatus,
};
use polyad::{Error, FactorSet, Tensor3};

use polyad_cli::emit::{grid_to_csv, grid_to_svg, write_text};
use polyad_cli::oracle::nuclear_norm_oracle;
use polyad_cli::phase::{run_phase_transition, PhaseTransitionConfig};

#[derive(Parser)]
#[command(name = "polyad", version, about = "Overcomplete tensor decomposition via convex optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed for all randomized steps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with command-specific parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a tensor with the ADMM nuclear-norm solver.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Tensor file (t3d-json); omit to generate a random instance.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build and verify the minimal-energy dual certificate of a factor set.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Factor-set file (fset-json); omit to generate a random instance.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Measure the incoherence / spectral-norm / Gram-isometry assumptions.
    Assumptions {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Solve the degree-2 moment relaxation.
    Sos {
        #[command(flatten)]
        common: Common,
        /// Tensor file (t3d-json); omit to generate a random instance.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the success-rate grid over (n, r).
    PhaseTransition {
        #[command(flatten)]
        common: Common,
    },
    /// Grid-restricted nuclear-norm LP for 2x2x2 tensors.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 720)]
        angular_steps: usize,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DecomposeParams {
    n: Option<usize>,
    r: Option<usize>,
    r_tilde: Option<usize>,
    rho: Option<f64>,
    max_iter: Option<usize>,
    primal_tol: Option<f64>,
    obj_tol: Option<f64>,
    init: Option<Init>,
    coeff_scheme: Option<CoeffScheme>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CertifyParams {
    n: Option<usize>,
    r: Option<usize>,
    method: Option<SolveMethod>,
    rho: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    samples: Option<usize>,
    ascent_restarts: Option<usize>,
    exclusion_radius: Option<f64>,
    /// Also run the near-region expansion check on this atom.
    near_region_atom: Option<usize>,
    near_region_trials: Option<usize>,
    theta_grid: Option<usize>,
    /// Also estimate the spectral/operator-norm bounds.
    spectral_bounds: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AssumptionParams {
    n: Option<usize>,
    r: Option<usize>,
    tau: Option<f64>,
    kappa: Option<f64>,
    c: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SosParams {
    n: Option<usize>,
    r: Option<usize>,
    rho: Option<f64>,
    max_iter: Option<usize>,
    primal_tol: Option<f64>,
    dual_tol: Option<f64>,
    /// Lift the n <= 8 cost guard.
    allow_large: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OracleParams {
    r: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Divergence { .. }
                | Error::InconsistentSystem { .. }
                | Error::EmptyDecomposition
                | Error::Unmatched { .. } => 1u8,
                _ => 2u8,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config<T: Default + for<'de> Deserialize<'de>>(path: &Option<PathBuf>) -> Result<T, Error> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Format {
                format: "config",
                path: p.display().to_string(),
                detail: e.to_string(),
            })
        }
    }
}

fn ensure_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn moment_vector_json(m: &MomentVector) -> String {
    let mut values = String::new();
    for (i, v) in m.values.iter().enumerate() {
        if i > 0 {
            values.push(',');
        }
        values.push_str(&io::format_f64(*v));
    }
    format!("{{\"n\":{},\"d\":{},\"values\":[{}]}}\n", m.n, m.d, values)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Decompose { common, input } => cmd_decompose(common, input),
        Command::Certify { common, input } => cmd_certify(common, input),
        Command::Assumptions { common, input } => cmd_assumptions(common, input),
        Command::Sos { common, input } => cmd_sos(common, input),
        Command::PhaseTransition { common } => cmd_phase(common),
        Command::Oracle {
            common,
            input,
            angular_steps,
        } => cmd_oracle(common, input, angular_steps),
    }
}

/// Tensor from file, or a planted random instance (returned with its truth).
fn tensor_instance(
    input: &Option<PathBuf>,
    n: Option<usize>,
    r: Option<usize>,
    scheme: CoeffScheme,
    seed: u64,
) -> Result<(Tensor3, Option<FactorSet>), Error> {
    match input {
        Some(path) => Ok((io::read_tensor(path)?, None)),
        None => {
            let (n, r) = match (n, r) {
                (Some(n), Some(r)) => (n, r),
                _ => {
                    return Err(Error::InvalidArgument(
                        "no --input given: config must set n and r".into(),
                    ))
                }
            };
            let fs = random_factor_set(n, r, seed, scheme);
            let t = synthesize(&fs);
            Ok((t, Some(fs)))
        }
    }
}

fn factor_instance(
    input: &Option<PathBuf>,
    n: Option<usize>,
    r: Option<usize>,
    seed: u64,
) -> Result<FactorSet, Error> {
    match input {
        Some(path) => io::read_factor_set(path),
        None => {
            let (n, r) = match (n, r) {
                (Some(n), Some(r)) => (n, r),
                _ => {
                    return Err(Error::InvalidArgument(
                        "no --input given: config must set n and r".into(),
                    ))
                }
            };
            Ok(random_factor_set(n, r, seed, CoeffScheme::Unit))
        }
    }
}

fn cmd_decompose(common: Common, input: Option<PathBuf>) -> Result<(), Error> {
    let params: DecomposeParams = load_config(&common.config)?;
    ensure_out(&common.out)?;
    let scheme = params.coeff_scheme.unwrap_or(CoeffScheme::HalfPlusChiSq);
    let (t, truth) = tensor_instance(&input, params.n, params.r, scheme, common.seed)?;
    let defaults = AdmmConfig::default();
    let cfg = AdmmConfig {
        rho: params.rho.unwrap_or(defaults.rho),
        max_iter: params.max_iter.unwrap_or(defaults.max_iter),
        primal_tol: params.primal_tol.unwrap_or(defaults.primal_tol),
        obj_tol: params.obj_tol.unwrap_or(defaults.obj_tol),
        seed: common.seed,
        init: params.init.unwrap_or(Init::Random),
    };
    let r_tilde = params
        .r_tilde
        .or(params.r)
        .or_else(|| truth.as_ref().map(|fs| fs.r()))
        .ok_or_else(|| Error::InvalidArgument("set r_tilde (or r) in the config".into()))?;
    let res = decompose(&t, r_tilde, &cfg)?;

    io::write_factor_set(&common.out.join("factors.json"), &res.factors)?;
    let mut summary = json!({
        "objective": res.objective,
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "r_tilde": r_tilde,
        "atoms_kept": res.factors.r(),
        "seed": common.seed,
    });
    if let Some(fs) = &truth {
        io::write_factor_set(&common.out.join("truth.json"), fs)?;
        match align_and_error(&res.factors, fs) {
            Ok(al) => {
                summary["alignment"] = json!({
                    "max_err": al.max_err,
                    "coeff_err": al.coeff_err,
                    "perm": al.perm,
                });
            }
            Err(e) => {
                summary["alignment"] = json!({ "failed": e.to_string() });
            }
        }
    }
    write_json(&common.out.join("decomposition.json"), &summary)?;
    println!(
        "decompose: objective {:.6}, residual {:.3e}, {} iterations, converged {}",
        res.objective, res.residual, res.iterations, res.converged
    );
    Ok(())
}

fn certificate_json(cert: &Certificate) -> serde_json::Value {
    let cols = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.ncols()).map(|p| m.column(p).iter().copied().collect()).collect()
    };
    json!({
        "method": match cert.method { SolveMethod::Direct => "direct", SolveMethod::Iterative => "iterative" },
        "solve_residual": cert.solve_residual,
        "iterations": cert.iterations,
        "converged": cert.converged,
        "A": cols(&cert.a),
        "B": cols(&cert.b),
        "C": cols(&cert.c),
    })
}

fn cmd_certify(common: Common, input: Option<PathBuf>) -> Result<(), Error> {
    let params: CertifyParams = load_config(&common.config)?;
    ensure_out(&common.out)?;
    let fs = factor_instance(&input, params.n, params.r, common.seed)?;
    let method = params.method.unwrap_or(SolveMethod::Direct);
    let cert = match method {
        SolveMethod::Direct => solve_certificate_direct(&fs)?,
        SolveMethod::Iterative => solve_certificate_iterative(
            &fs,
            params.rho.unwrap_or(0.5),
            params.max_iter.unwrap_or(50_000),
            params.tol.unwrap_or(1e-12),
        )?,
    };
    let report = verify_certificate(
        &cert,
        &fs,
        params.samples.unwrap_or(10_000),
        params.ascent_restarts.unwrap_or(50),
        common.seed,
        params.exclusion_radius.unwrap_or(1e-3),
    )?;
    let mut out = json!({
        "certificate": certificate_json(&cert),
        "report": serde_json::to_value(&report).expect("serializable"),
        "seed": common.seed,
        "n": fs.n(),
        "r": fs.r(),
    });
    if let Some(atom) = params.near_region_atom {
        let near = near_region_check(
            &cert,
            &fs,
            atom,
            params.near_region_trials.unwrap_or(10),
            params.theta_grid.unwrap_or(11),
            common.seed,
        )?;
        out["near_region"] = serde_json::to_value(&near).expect("serializable");
    }
    if params.spectral_bounds.unwrap_or(false) {
        let assumptions = assumption_report(&fs, None);
        let bounds = spectral_bound_checks(&fs, 0.125, assumptions.implied_tau, 20, common.seed)?;
        out["spectral_bounds"] = serde_json::to_value(&bounds).expect("serializable");
    }
    // The scalar inequalities are instance-independent; include them so a
    // certify run is a complete verification transcript.
    out["scalar_inequalities"] =
        serde_json::to_value(&scalar_inequality_checks(100_000)?).expect("serializable");
    write_json(&common.out.join("certificate_report.json"), &out)?;
    println!(
        "certify: interp_err {:.3e}, stationarity_err {:.3e}, boundedness_max {:.6} (ok: {})",
        report.interp_err, report.stationarity_err, report.boundedness_max, report.boundedness_ok
    );
    Ok(())
}

fn cmd_assumptions(common: Common, input: Option<PathBuf>) -> Result<(), Error> {
    let params: AssumptionParams = load_config(&common.config)?;
    ensure_out(&common.out)?;
    let fs = factor_instance(&input, params.n, params.r, common.seed)?;
    let constants = match (params.tau, params.kappa, params.c) {
        (Some(tau), Some(kappa), Some(c)) => Some(AssumptionConstants { tau, kappa, c }),
        (None, None, None) => None,
        _ => {
            return Err(Error::InvalidArgument(
                "supply all of tau, kappa, c or none".into(),
            ))
        }
    };
    let report = assumption_report(&fs, constants);
    let out = json!({
        "n": fs.n(),
        "r": fs.r(),
        "seed": common.seed,
        "report": serde_json::to_value(&report).expect("serializable"),
    });
    write_json(&common.out.join("assumptions.json"), &out)?;
    println!(
        "assumptions: delta {:.6}, gram_dev {:.6}, implied tau {:.4} kappa {:.4} c {:.4}",
        report.delta, report.gram_dev, report.implied_tau, report.implied_kappa, report.implied_c
    );
    Ok(())
}

fn cmd_sos(common: Common, input: Option<PathBuf>) -> Result<(), Error> {
    let params: SosParams = load_config(&common.config)?;
    ensure_out(&common.out)?;
    let (t, truth) = tensor_instance(&input, params.n, params.r, CoeffScheme::HalfPlusChiSq, common.seed)?;
    let (n1, n2, n3) = t.dims();
    if n1 != n2 || n2 != n3 {
        return Err(Error::DimMismatch("sos requires a cubic tensor".into()));
    }
    if n1 > polyad_cli::phase::SOS_MAX_N && !params.allow_large.unwrap_or(false) {
        return Err(Error::InvalidArgument(format!(
            "n = {n1} exceeds the n <= {} cost guard (set allow_large)",
            polyad_cli::phase::SOS_MAX_N
        )));
    }
    let defaults = SdpConfig::default();
    let cfg = SdpConfig {
        rho: params.rho.unwrap_or(defaults.rho),
        max_iter: params.max_iter.unwrap_or(defaults.max_iter),
        primal_tol: params.primal_tol.unwrap_or(defaults.primal_tol),
        dual_tol: params.dual_tol.unwrap_or(defaults.dual_tol),
    };
    let sdp = build_moment_sdp(&t, n1)?;
    let (m, info) = sdp_solve(&sdp, &cfg)?;
    write_text(&common.out.join("moments.json"), &moment_vector_json(&m))?;
    let mut out = json!({
        "info": serde_json::to_value(&info).expect("serializable"),
        "n": n1,
        "d": 2,
        "moment_matrix_dim": sdp.matrix_dim(),
        "constraints": sdp.rows.len(),
        "seed": common.seed,
    });
    if let Some(fs) = &truth {
        let mt = true_moment_vector(fs, 2);
        out["distance_to_true"] = json!(moment_distance(&m, &mt)?);
        out["distance_to_true_mod_signs"] = json!(moment_distance_mod_signs(&m, &mt)?);
        out["planted_mass"] = json!(fs.lambda().iter().sum::<f64>());
    }
    write_json(&common.out.join("sos_report.json"), &out)?;
    println!(
        "sos: status {:?}, objective {:.6}, {} iterations",
        info.status, info.objective, info.iterations
    );
    if info.status == SdpStatus::InfeasibleSuspected {
        return Err(Error::Divergence {
            iteration: info.iterations,
            detail: "moment SDP residuals stagnated; infeasibility suspected".into(),
        });
    }
    Ok(())
}

fn cmd_phase(common: Common) -> Result<(), Error> {
    let mut cfg: PhaseTransitionConfig = load_config(&common.config)?;
    cfg.master_seed = common.seed;
    ensure_out(&common.out)?;
    let grid = run_phase_transition(&cfg)?;
    write_text(&common.out.join("grid.csv"), &grid_to_csv(&grid))?;
    let json_value = serde_json::to_value(&grid).expect("serializable");
    write_json(&common.out.join("grid.json"), &json_value)?;
    for &method in &cfg.methods {
        let svg = grid_to_svg(&grid, method);
        let name = format!("heatmap_{}.svg", method.name().to_lowercase().replace('-', "_"));
        write_text(&common.out.join(name), &svg)?;
    }
    for cell in &grid.cells {
        println!(
            "{} n={} r={}: {}/{} ({:.0}%)",
            cell.method,
            cell.n,
            cell.r,
            cell.successes,
            cell.trials,
            100.0 * cell.rate
        );
    }
    Ok(())
}

fn cmd_oracle(common: Common, input: Option<PathBuf>, angular_steps: usize) -> Result<(), Error> {
    let params: OracleParams = load_config(&common.config)?;
    ensure_out(&common.out)?;
    let (t, truth) = tensor_instance(&input, Some(2), params.r, CoeffScheme::HalfPlusChiSq, common.seed)?;
    let res = nuclear_norm_oracle(&t, angular_steps)?;
    let mut out = serde_json::to_value(&res).expect("serializable");
    if let Some(fs) = &truth {
        out["planted_mass"] = json!(fs.lambda().iter().sum::<f64>());
    }
    write_json(&common.out.join("oracle.json"), &out)?;
    println!("oracle: value {:.8} with {} atoms", res.value, res.atoms.len());
    Ok(())
}
