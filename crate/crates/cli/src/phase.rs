//! Phase-transition experiment harness.
//!
//! For every (method, n, r) cell, a fixed number of random instances is
//! generated with the half-plus-chi-square weight scheme, decomposed, and
//! judged: ADMM variants succeed when the worst aligned factor error is
//! below `factor_tol`; the degree-2 moment relaxation succeeds when the
//! recovered moment vector is within `moment_tol` of the true one in the
//! sign-quotient metric. Trial seeds derive from the master seed and the
//! cell coordinates, so grids are reproducible across machines and thread
//! counts; trials run in parallel and are merged in a fixed order.

use polyad::admm::{decompose, AdmmConfig, Init};
use polyad::factor::{align_and_error, random_factor_set, synthesize, CoeffScheme};
use polyad::seed::trial_seed;
use polyad::sos::{build_moment_sdp, moment_distance_mod_signs, sdp_solve, true_moment_vector, SdpConfig};
use polyad::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest n the degree-2 relaxation solver accepts without an override;
/// the PSD projection is a dense eigendecomposition per sweep.
pub const SOS_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ADMM-G")]
    AdmmG,
    #[serde(rename = "ADMM-R")]
    AdmmR,
    #[serde(rename = "SOS-2")]
    Sos2,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::AdmmG => "ADMM-G",
            Method::AdmmR => "ADMM-R",
            Method::Sos2 => "SOS-2",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTransitionConfig {
    pub n_list: Vec<usize>,
    pub r_list: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub factor_tol: f64,
    pub moment_tol: f64,
    /// Extra atoms handed to ADMM beyond the planted rank.
    pub r_tilde_slack: usize,
    /// Lift the n ≤ 8 guard on the moment relaxation.
    pub allow_large_sos: bool,
    /// ADMM iteration cap per trial.
    pub admm_max_iter: usize,
    /// Moment-SDP iteration cap per trial.
    pub sos_max_iter: usize,
}

impl Default for PhaseTransitionConfig {
    fn default() -> Self {
        Self {
            n_list: vec![2, 4, 6, 8, 10],
            r_list: vec![1, 2, 4, 6, 8, 10, 12, 15],
            trials: 5,
            methods: vec![Method::AdmmG, Method::AdmmR],
            master_seed: 0,
            factor_tol: 1e-3,
            moment_tol: 1e-3,
            r_tilde_slack: 0,
            allow_large_sos: false,
            admm_max_iter: AdmmConfig::default().max_iter,
            sos_max_iter: SdpConfig::default().max_iter,
        }
    }
}

/// One decomposition attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: Method,
    pub n: usize,
    pub r: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    /// Relative fit residual (ADMM) or solver primal residual (SOS).
    pub residual: f64,
    /// Aligned factor error (ADMM) or sign-quotient moment distance (SOS);
    /// infinite when the method failed structurally.
    pub error: f64,
    pub seconds: f64,
}

/// Aggregated cell of the success-rate grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub n: usize,
    pub r: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub mean_residual: f64,
    pub mean_seconds: f64,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
}

fn run_trial(method: Method, n: usize, r: usize, trial: usize, cfg: &PhaseTransitionConfig) -> TrialRecord {
    let seed = trial_seed(cfg.master_seed, method.name(), n, r, trial);
    let start = std::time::Instant::now();
    let fs = random_factor_set(n, r, seed, CoeffScheme::HalfPlusChiSq);
    let t = synthesize(&fs);
    let (success, residual, error) = match method {
        Method::AdmmG | Method::AdmmR => {
            let init = if method == Method::AdmmG { Init::Power } else { Init::Random };
            let admm_cfg = AdmmConfig {
                seed,
                init,
                max_iter: cfg.admm_max_iter,
                ..AdmmConfig::default()
            };
            match decompose(&t, r + cfg.r_tilde_slack, &admm_cfg) {
                Ok(res) => match align_and_error(&res.factors, &fs) {
                    Ok(al) => (al.max_err < cfg.factor_tol, res.residual, al.max_err),
                    Err(_) => (false, res.residual, f64::INFINITY),
                },
                Err(_) => (false, f64::INFINITY, f64::INFINITY),
            }
        }
        Method::Sos2 => {
            let sdp_cfg = SdpConfig {
                max_iter: cfg.sos_max_iter,
                ..SdpConfig::default()
            };
            match build_moment_sdp(&t, n).and_then(|sdp| sdp_solve(&sdp, &sdp_cfg)) {
                Ok((m, info)) => {
                    let truth = true_moment_vector(&fs, 2);
                    match moment_distance_mod_signs(&m, &truth) {
                        Ok(d) => (d < cfg.moment_tol, info.primal_residual, d),
                        Err(_) => (false, info.primal_residual, f64::INFINITY),
                    }
                }
                Err(_) => (false, f64::INFINITY, f64::INFINITY),
            }
        }
    };
    TrialRecord {
        method,
        n,
        r,
        trial,
        seed,
        success,
        residual,
        error,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Run the full grid. Deterministic in `master_seed` except for wall times.
pub fn run_phase_transition(cfg: &PhaseTransitionConfig) -> Result<GridResult> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if !(cfg.factor_tol > 0.0) || !(cfg.moment_tol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    if !cfg.allow_large_sos && cfg.methods.contains(&Method::Sos2) {
        if let Some(&n) = cfg.n_list.iter().find(|&&n| n > SOS_MAX_N) {
            return Err(Error::InvalidArgument(format!(
                "SOS-2 at n = {n} exceeds the n <= {SOS_MAX_N} cost guard (allow_large_sos lifts it)"
            )));
        }
    }
    let mut jobs = Vec::new();
    for &method in &cfg.methods {
        for &n in &cfg.n_list {
            for &r in &cfg.r_list {
                for trial in 0..cfg.trials {
                    jobs.push((method, n, r, trial));
                }
            }
        }
    }
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(method, n, r, trial)| run_trial(method, n, r, trial, cfg))
        .collect();

    // Aggregate in the fixed (method, n, r) order.
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &n in &cfg.n_list {
            for &r in &cfg.r_list {
                let mut cell_records: Vec<TrialRecord> = records
                    .iter()
                    .filter(|t| t.method == method && t.n == n && t.r == r)
                    .cloned()
                    .collect();
                cell_records.sort_by_key(|t| t.trial);
                let successes = cell_records.iter().filter(|t| t.success).count();
                let finite_resid: Vec<f64> = cell_records
                    .iter()
                    .map(|t| t.residual)
                    .filter(|x| x.is_finite())
                    .collect();
                let mean_residual = if finite_resid.is_empty() {
                    f64::INFINITY
                } else {
                    finite_resid.iter().sum::<f64>() / finite_resid.len() as f64
                };
                let mean_seconds =
                    cell_records.iter().map(|t| t.seconds).sum::<f64>() / cell_records.len() as f64;
                cells.push(CellResult {
                    method,
                    n,
                    r,
                    trials: cfg.trials,
                    successes,
                    rate: successes as f64 / cfg.trials as f64,
                    mean_residual,
                    mean_seconds,
                    records: cell_records,
                });
            }
        }
    }
    Ok(GridResult { cells })
}
