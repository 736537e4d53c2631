//! Minimal-energy dual certificate: construction and numerical verification.
//!
//! The certificate tensor has the structured form
//!
//! `Q = Σ_p (α_p ⊗ v_p ⊗ w_p + u_p ⊗ β_p ⊗ w_p + u_p ⊗ v_p ⊗ γ_p)`
//!
//! with coefficient matrices `A = [α_1 … α_r]`, `B`, `C` chosen so that the
//! relaxed first-order conditions hold at every support atom:
//! `Q(I, v_p, w_p) = u_p`, `Q(u_p, I, w_p) = v_p`, `Q(u_p, v_p, I) = w_p`.
//! Those conditions are a symmetric positive semidefinite linear system in
//! the stacked coefficients (the normal equations of a least-norm problem);
//! its matrix has a known 2r-dimensional null space, so the solver must take
//! the pseudo-inverse branch.
//!
//! Everything downstream of the construction is verification: interpolation
//! and stationarity residuals, coefficient deviation from `(U/3, V/3, W/3)`,
//! sampled/ascended boundedness of the dual polynomial
//! `q(u,v,w) = ⟨Q, u ⊗ v ⊗ w⟩` off the support, the parameterized expansion
//! around a support atom, the far/near region constants, and the scalar
//! inequalities used by the region analysis.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{assumption_report, FactorSet};
use crate::seed::partition_seed;
use crate::tensor::{
    operator_2p_norm, random_unit, spectral_norm_estimate, Tensor3, PNorm, UNIT_NORM_TOL,
};

/// Relative eigenvalue cutoff for the pseudo-inverse in the direct solve.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Direct solves above this residual mean the interpolation constraints are
/// infeasible for the given factor set.
pub const CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Direct,
    Iterative,
}

/// Coefficient matrices of the structured certificate.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub method: SolveMethod,
    /// Frobenius norm of `operator(A,B,C) − (U,V,W)`.
    pub solve_residual: f64,
    /// Sweeps performed (iterative method; 0 for direct).
    pub iterations: usize,
    /// False when the iterative method hit `max_iter` or went non-finite.
    pub converged: bool,
}

/// Apply the normal-equation operator to coefficients without materializing Q.
///
/// Column `p` of the first output is `Q(I, v_p, w_p)`; in Gram form
/// `rhs₁ = A[(VᵀV)⊙(WᵀW)] + U[(BᵀV)⊙(WᵀW)] + U[(VᵀV)⊙(CᵀW)]`, and the other
/// two blocks are the symmetric analogues.
pub fn apply_gram_operator(
    fs: &FactorSet,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (n, r) = (fs.n(), fs.r());
    for (name, m) in [("A", a), ("B", b), ("C", c)] {
        if m.nrows() != n || m.ncols() != r {
            return Err(Error::DimMismatch(format!(
                "{name} is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                n,
                r
            )));
        }
    }
    let (u, v, w) = (fs.u(), fs.v(), fs.w());
    let guu = u.transpose() * u;
    let gvv = v.transpose() * v;
    let gww = w.transpose() * w;
    let gav = a.transpose() * u; // (AᵀU)
    let gbv = b.transpose() * v; // (BᵀV)
    let gcw = c.transpose() * w; // (CᵀW)

    let rhs1 = a * gvv.component_mul(&gww) + u * gbv.component_mul(&gww) + u * gvv.component_mul(&gcw);
    let rhs2 = v * gav.component_mul(&gww) + b * guu.component_mul(&gww) + v * guu.component_mul(&gcw);
    let rhs3 = w * gav.component_mul(&gvv) + w * guu.component_mul(&gbv) + c * guu.component_mul(&gvv);
    Ok((rhs1, rhs2, rhs3))
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DVector<f64> {
    let nr = a.nrows() * a.ncols();
    let mut out = DVector::zeros(3 * nr);
    for (i, x) in a.iter().chain(b.iter()).chain(c.iter()).enumerate() {
        out[i] = *x;
    }
    out
}

fn unstack(x: &DVector<f64>, n: usize, r: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let nr = n * r;
    let grab = |off: usize| DMatrix::from_fn(n, r, |i, p| x[off + p * n + i]);
    (grab(0), grab(nr), grab(2 * nr))
}

/// Assemble the dense `3nr x 3nr` symmetric matrix of [`apply_gram_operator`]
/// in stacked column-major coordinates `[vec(A); vec(B); vec(C)]`.
pub fn assemble_gram_matrix(fs: &FactorSet) -> DMatrix<f64> {
    let (n, r) = (fs.n(), fs.r());
    let (u, v, w) = (fs.u(), fs.v(), fs.w());
    let guu = u.transpose() * u;
    let gvv = v.transpose() * v;
    let gww = w.transpose() * w;
    let nr = n * r;
    let mut m = DMatrix::zeros(3 * nr, 3 * nr);

    // Diagonal blocks: Hadamard Gram ⊗ I_n.
    let diag = |m: &mut DMatrix<f64>, off: usize, g: &DMatrix<f64>| {
        for p in 0..r {
            for q in 0..r {
                let gpq = g[(p, q)];
                if gpq != 0.0 {
                    for i in 0..n {
                        m[(off + p * n + i, off + q * n + i)] += gpq;
                    }
                }
            }
        }
    };
    diag(&mut m, 0, &gvv.component_mul(&gww));
    diag(&mut m, nr, &guu.component_mul(&gww));
    diag(&mut m, 2 * nr, &guu.component_mul(&gvv));

    // Off-diagonal blocks, filled symmetrically.
    // (A ← B): rhs₁[i,q] += U_{ip} V_{jq} (WᵀW)_{pq} B_{jp}
    for q in 0..r {
        for p in 0..r {
            let s = gww[(p, q)];
            for i in 0..n {
                let uip = u[(i, p)] * s;
                for j in 0..n {
                    let val = uip * v[(j, q)];
                    m[(q * n + i, nr + p * n + j)] += val;
                    m[(nr + p * n + j, q * n + i)] += val;
                }
            }
        }
    }
    // (A ← C): rhs₁[i,q] += U_{ip} (VᵀV)_{pq} W_{jq} C_{jp}
    for q in 0..r {
        for p in 0..r {
            let s = gvv[(p, q)];
            for i in 0..n {
                let uip = u[(i, p)] * s;
                for j in 0..n {
                    let val = uip * w[(j, q)];
                    m[(q * n + i, 2 * nr + p * n + j)] += val;
                    m[(2 * nr + p * n + j, q * n + i)] += val;
                }
            }
        }
    }
    // (B ← C): rhs₂[j,q] += V_{jp} (UᵀU)_{pq} W_{kq} C_{kp}
    for q in 0..r {
        for p in 0..r {
            let s = guu[(p, q)];
            for j in 0..n {
                let vjp = v[(j, p)] * s;
                for k in 0..n {
                    let val = vjp * w[(k, q)];
                    m[(nr + q * n + j, 2 * nr + p * n + k)] += val;
                    m[(2 * nr + p * n + k, nr + q * n + j)] += val;
                }
            }
        }
    }
    m
}

/// The 2r-dimensional null space of the assembled operator: for each atom p,
/// `(u_p e_pᵀ, −v_p e_pᵀ, 0)/√2` and `(u_p e_pᵀ, v_p e_pᵀ, −2 w_p e_pᵀ)/√6`.
pub fn null_space_basis(fs: &FactorSet) -> Vec<DVector<f64>> {
    let (n, r) = (fs.n(), fs.r());
    let nr = n * r;
    let mut basis = Vec::with_capacity(2 * r);
    for p in 0..r {
        let mut v1 = DVector::zeros(3 * nr);
        let mut v2 = DVector::zeros(3 * nr);
        for i in 0..n {
            v1[p * n + i] = fs.u()[(i, p)] / 2.0f64.sqrt();
            v1[nr + p * n + i] = -fs.v()[(i, p)] / 2.0f64.sqrt();
            v2[p * n + i] = fs.u()[(i, p)] / 6.0f64.sqrt();
            v2[nr + p * n + i] = fs.v()[(i, p)] / 6.0f64.sqrt();
            v2[2 * nr + p * n + i] = -2.0 * fs.w()[(i, p)] / 6.0f64.sqrt();
        }
        basis.push(v1);
        basis.push(v2);
    }
    basis
}

/// Solve the normal equations by dense eigendecomposition with a relative
/// rank cutoff (min-norm pseudo-inverse solution).
///
/// Cost is O((3nr)³); intended for n·r up to a few thousand. The iterative
/// method is the scalable alternative.
pub fn solve_certificate_direct(fs: &FactorSet) -> Result<Certificate> {
    let (n, r) = (fs.n(), fs.r());
    let m = assemble_gram_matrix(fs);
    let s = stack(fs.u(), fs.v(), fs.w());
    let eig = m.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
    let cutoff = PINV_CUTOFF * max_abs;
    let proj = eig.eigenvectors.transpose() * &s;
    let mut coeffs = DVector::zeros(3 * n * r);
    for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev.abs() > cutoff {
            coeffs += eig.eigenvectors.column(idx) * (proj[idx] / ev);
        }
    }
    let residual = (&m * &coeffs - &s).norm();
    if !residual.is_finite() || residual > CONSISTENCY_TOL {
        return Err(Error::InconsistentSystem { residual });
    }
    let (a, b, c) = unstack(&coeffs, n, r);
    Ok(Certificate {
        a,
        b,
        c,
        method: SolveMethod::Direct,
        solve_residual: residual,
        iterations: 0,
        converged: true,
    })
}

/// Fixed-point iteration on the normal equations, initialized at
/// `(U/3, V/3, W/3)`.
///
/// All three blocks are updated simultaneously from the current iterate:
/// `A ← A − ρ(Q(I,v_p,w_p) − u_p)` and likewise for B and C. The update
/// direction is then the full residual of the symmetric operator, which lies
/// in its range, so every iterate stays orthogonal to the null space and the
/// limit is the same min-norm solution the direct method selects. Converges
/// geometrically whenever the Gram deviation is below one and
/// `ρ · λ_max < 2`.
pub fn solve_certificate_iterative(
    fs: &FactorSet,
    rho: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Certificate> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument("rho must lie in (0, 1]".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let mut a = fs.u() / 3.0;
    let mut b = fs.v() / 3.0;
    let mut c = fs.w() / 3.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_finite = (a.clone(), b.clone(), c.clone());
    for iter in 0..max_iter {
        iterations = iter + 1;
        let (rhs1, rhs2, rhs3) = apply_gram_operator(fs, &a, &b, &c)?;
        let d1 = rhs1 - fs.u();
        let d2 = rhs2 - fs.v();
        let d3 = rhs3 - fs.w();
        let change = [
            d1.amax(),
            d2.amax(),
            d3.amax(),
        ]
        .into_iter()
        .fold(0.0f64, f64::max)
            * rho;
        a -= rho * d1;
        b -= rho * d2;
        c -= rho * d3;
        if !change.is_finite() {
            // Diverged; hand back the last finite iterate, flagged.
            let (fa, fb, fc) = last_finite;
            let (r1, r2, r3) = apply_gram_operator(fs, &fa, &fb, &fc)?;
            let res = frob3(&(r1 - fs.u()), &(r2 - fs.v()), &(r3 - fs.w()));
            return Ok(Certificate {
                a: fa,
                b: fb,
                c: fc,
                method: SolveMethod::Iterative,
                solve_residual: res,
                iterations,
                converged: false,
            });
        }
        last_finite = (a.clone(), b.clone(), c.clone());
        if change < tol {
            converged = true;
            break;
        }
    }
    let (r1, r2, r3) = apply_gram_operator(fs, &a, &b, &c)?;
    let solve_residual = frob3(&(r1 - fs.u()), &(r2 - fs.v()), &(r3 - fs.w()));
    Ok(Certificate {
        a,
        b,
        c,
        method: SolveMethod::Iterative,
        solve_residual,
        iterations,
        converged,
    })
}

fn frob3(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    (a.norm_squared() + b.norm_squared() + c.norm_squared()).sqrt()
}

/// Materialize the certificate tensor `Q` (n³ storage).
pub fn build_q(cert: &Certificate, fs: &FactorSet) -> Tensor3 {
    let n = fs.n();
    let mut q = Tensor3::zeros(n, n, n);
    for p in 0..fs.r() {
        let up = fs.u().column(p).into_owned();
        let vp = fs.v().column(p).into_owned();
        let wp = fs.w().column(p).into_owned();
        q.add_scaled_outer3(1.0, &cert.a.column(p).into_owned(), &vp, &wp)
            .expect("dims");
        q.add_scaled_outer3(1.0, &up, &cert.b.column(p).into_owned(), &wp)
            .expect("dims");
        q.add_scaled_outer3(1.0, &up, &vp, &cert.c.column(p).into_owned())
            .expect("dims");
    }
    q
}

/// Evaluate the dual polynomial at a unit triple via the three-term Gram sum.
pub fn q_eval(
    cert: &Certificate,
    fs: &FactorSet,
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64> {
    for x in [u, v, w] {
        let dev = (x.norm() - 1.0).abs();
        if !(dev <= UNIT_NORM_TOL) {
            return Err(Error::NotUnitNorm(dev));
        }
    }
    Ok(q_eval_unchecked(cert, fs, u, v, w))
}

fn q_eval_unchecked(
    cert: &Certificate,
    fs: &FactorSet,
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> f64 {
    let au = cert.a.transpose() * u;
    let bu = cert.b.transpose() * v;
    let cu = cert.c.transpose() * w;
    let uu = fs.u().transpose() * u;
    let vv = fs.v().transpose() * v;
    let ww = fs.w().transpose() * w;
    let mut acc = 0.0;
    for p in 0..fs.r() {
        acc += au[p] * vv[p] * ww[p] + uu[p] * bu[p] * ww[p] + uu[p] * vv[p] * cu[p];
    }
    acc
}

/// Gradient of q with respect to the first argument (and cyclic analogues).
fn q_grad_u(cert: &Certificate, fs: &FactorSet, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let vv = fs.v().transpose() * v;
    let ww = fs.w().transpose() * w;
    let bv = cert.b.transpose() * v;
    let cw = cert.c.transpose() * w;
    &cert.a * vv.component_mul(&ww) + fs.u() * bv.component_mul(&ww) + fs.u() * vv.component_mul(&cw)
}

fn q_grad_v(cert: &Certificate, fs: &FactorSet, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let uu = fs.u().transpose() * u;
    let ww = fs.w().transpose() * w;
    let au = cert.a.transpose() * u;
    let cw = cert.c.transpose() * w;
    fs.v() * au.component_mul(&ww) + &cert.b * uu.component_mul(&ww) + fs.v() * uu.component_mul(&cw)
}

fn q_grad_w(cert: &Certificate, fs: &FactorSet, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let uu = fs.u().transpose() * u;
    let vv = fs.v().transpose() * v;
    let au = cert.a.transpose() * u;
    let bv = cert.b.transpose() * v;
    fs.w() * au.component_mul(&vv) + fs.w() * uu.component_mul(&bv) + &cert.c * uu.component_mul(&vv)
}

/// Far/near region constants of the boundedness analysis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegionParameters {
    pub r_c: f64,
    /// γ = 6·√τ̂.
    pub gamma: f64,
    /// Far-region correlation threshold d = γ·n^{−r_c/2} − 6κ̂(√r/n + ĉ·r·n^{−1.5}).
    pub d: f64,
    /// Near-region cap width δ = √((80/3)·τ̂)·n^{−r_c/2}.
    pub delta: f64,
    /// Rank cap n^{17/16}/(12 ĉ² √τ̂).
    pub rank_cap: f64,
    /// Far-region bound value [d + 6κ̂(√r/n + ĉ·r·n^{−1.5})]·(1 + ĉ√(r/n))².
    pub far_bound: f64,
    /// d ≤ 0: n too small for these constants, the regions do not cover 𝕂.
    pub degenerate: bool,
}

/// Evaluate the region constants for given measured/assumed values.
pub fn region_parameters(
    n: usize,
    r: usize,
    r_c: f64,
    tau_hat: f64,
    kappa_hat: f64,
    c_hat: f64,
) -> Result<RegionParameters> {
    if n == 0 || r == 0 {
        return Err(Error::InvalidArgument("n and r must be positive".into()));
    }
    if !(r_c > 0.0 && r_c < 1.0 / 6.0) {
        return Err(Error::InvalidArgument("r_c must lie in (0, 1/6)".into()));
    }
    if !(tau_hat > 0.0) || kappa_hat < 0.0 || c_hat < 0.0 {
        return Err(Error::InvalidArgument(
            "tau_hat must be positive, kappa_hat and c_hat nonnegative".into(),
        ));
    }
    let nf = n as f64;
    let rf = r as f64;
    let gamma = 6.0 * tau_hat.sqrt();
    let slack = 6.0 * kappa_hat * (rf.sqrt() / nf + c_hat * rf * nf.powf(-1.5));
    let d = gamma * nf.powf(-r_c / 2.0) - slack;
    let delta = (80.0 / 3.0 * tau_hat).sqrt() * nf.powf(-0.5 * r_c);
    let rank_cap = if c_hat > 0.0 {
        nf.powf(17.0 / 16.0) / (12.0 * c_hat * c_hat * tau_hat.sqrt())
    } else {
        f64::INFINITY
    };
    let far_bound = (d + slack) * (1.0 + c_hat * (rf / nf).sqrt()).powi(2);
    Ok(RegionParameters {
        r_c,
        gamma,
        d,
        delta,
        rank_cap,
        far_bound,
        degenerate: d <= 0.0,
    })
}

/// Verification summary for a constructed certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    /// max_p |q(u_p, v_p, w_p) − 1|.
    pub interp_err: f64,
    /// Max entrywise residual of the 3nr stationarity conditions.
    pub stationarity_err: f64,
    /// Spectral norms of (A − U/3, B − V/3, C − W/3).
    pub coeff_dev: (f64, f64, f64),
    /// 2κ̂(√r/n + ĉ·r/n^{1.5}) with implied constants.
    pub coeff_dev_bound: f64,
    /// Largest q found off the support orbit by sampling plus local ascent.
    pub boundedness_max: f64,
    pub boundedness_ok: bool,
    pub region: RegionParameters,
    pub samples: usize,
    pub excluded_samples: usize,
}

/// Check interpolation/stationarity exactly and probe boundedness by
/// uniform sampling plus alternating-ascent refinement.
///
/// Sampled triples are canonicalized to q ≥ 0 (an odd sign flip fixes the
/// sign without leaving 𝕂) and discarded when their even-sign-flip orbit
/// comes within `exclusion_radius` (per-mode ℓ₂) of a support atom, where
/// q = 1 is attained by construction. Sampling is partitioned into fixed
/// blocks with derived seeds, so results do not depend on thread count.
pub fn verify_certificate(
    cert: &Certificate,
    fs: &FactorSet,
    samples: usize,
    ascent_restarts: usize,
    seed: u64,
    exclusion_radius: f64,
) -> Result<CertificateReport> {
    let (n, r) = (fs.n(), fs.r());
    let (rhs1, rhs2, rhs3) = apply_gram_operator(fs, &cert.a, &cert.b, &cert.c)?;
    let mut interp_err = 0.0f64;
    for p in 0..r {
        let qp = rhs1.column(p).dot(&fs.u().column(p));
        interp_err = interp_err.max((qp - 1.0).abs());
    }
    let stationarity_err = [
        (&rhs1 - fs.u()).amax(),
        (&rhs2 - fs.v()).amax(),
        (&rhs3 - fs.w()).amax(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);

    let spec = |m: DMatrix<f64>| {
        m.svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0f64, f64::max)
    };
    let coeff_dev = (
        spec(&cert.a - fs.u() / 3.0),
        spec(&cert.b - fs.v() / 3.0),
        spec(&cert.c - fs.w() / 3.0),
    );

    let assumptions = assumption_report(fs, None);
    let nf = n as f64;
    let rf = r as f64;
    let coeff_dev_bound = 2.0
        * assumptions.implied_kappa
        * (rf.sqrt() / nf + assumptions.implied_c * rf * nf.powf(-1.5));
    let region = region_parameters(
        n,
        r,
        0.125,
        assumptions.implied_tau.max(f64::MIN_POSITIVE),
        assumptions.implied_kappa,
        assumptions.implied_c,
    )?;

    // Boundedness probe.
    const BLOCK: usize = 1024;
    let blocks = samples.div_ceil(BLOCK);
    let per_block: Vec<(f64, usize, Vec<Triple>)> = (0..blocks)
        .into_par_iter()
        .map(|bi| {
            let count = BLOCK.min(samples - bi * BLOCK);
            let mut rng = ChaCha8Rng::seed_from_u64(partition_seed(seed, bi));
            let mut block_max = f64::NEG_INFINITY;
            let mut excluded = 0usize;
            let mut top: Vec<Triple> = Vec::new();
            for _ in 0..count {
                let mut u = random_unit(n, &mut rng);
                let v = random_unit(n, &mut rng);
                let w = random_unit(n, &mut rng);
                let mut qv = q_eval_unchecked(cert, fs, &u, &v, &w);
                if qv < 0.0 {
                    u.neg_mut();
                    qv = -qv;
                }
                let t = Triple { q: qv, u, v, w };
                if near_support_orbit(fs, &t.u, &t.v, &t.w, exclusion_radius) {
                    excluded += 1;
                    continue;
                }
                if t.q > block_max {
                    block_max = t.q;
                }
                keep_top(&mut top, t, ascent_restarts.max(1));
            }
            (block_max, excluded, top)
        })
        .collect();

    let mut boundedness_max = f64::NEG_INFINITY;
    let mut excluded_samples = 0;
    let mut pool: Vec<Triple> = Vec::new();
    for (bm, ex, top) in per_block {
        boundedness_max = boundedness_max.max(bm);
        excluded_samples += ex;
        for t in top {
            keep_top(&mut pool, t, ascent_restarts.max(1));
        }
    }

    // Refine the best candidates by alternating ascent; the refined point is
    // counted only when it stays off the support orbit.
    let refined: Vec<Option<f64>> = pool
        .par_iter()
        .map(|t| {
            let (q, u, v, w) = ascend(cert, fs, t.u.clone(), t.v.clone(), t.w.clone());
            if near_support_orbit(fs, &u, &v, &w, exclusion_radius) {
                None
            } else {
                Some(q)
            }
        })
        .collect();
    for q in refined.into_iter().flatten() {
        boundedness_max = boundedness_max.max(q);
    }
    if !boundedness_max.is_finite() {
        // Every sample was excluded (tiny n or huge radius); fall back to 0.
        boundedness_max = 0.0;
    }

    Ok(CertificateReport {
        interp_err,
        stationarity_err,
        coeff_dev,
        coeff_dev_bound,
        boundedness_max,
        boundedness_ok: boundedness_max < 1.0,
        region,
        samples,
        excluded_samples,
    })
}

struct Triple {
    q: f64,
    u: DVector<f64>,
    v: DVector<f64>,
    w: DVector<f64>,
}

fn keep_top(top: &mut Vec<Triple>, t: Triple, k: usize) {
    top.push(t);
    top.sort_by(|a, b| b.q.partial_cmp(&a.q).unwrap_or(std::cmp::Ordering::Equal));
    top.truncate(k);
}

fn near_support_orbit(
    fs: &FactorSet,
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
    radius: f64,
) -> bool {
    const EVEN_FLIPS: [(f64, f64, f64); 4] = [
        (1.0, 1.0, 1.0),
        (1.0, -1.0, -1.0),
        (-1.0, 1.0, -1.0),
        (-1.0, -1.0, 1.0),
    ];
    for p in 0..fs.r() {
        let up = fs.u().column(p);
        let vp = fs.v().column(p);
        let wp = fs.w().column(p);
        for (s1, s2, s3) in EVEN_FLIPS {
            // ‖u − s1·u_p‖² = 2 − 2 s1⟨u, u_p⟩ for unit vectors.
            let du = (2.0 - 2.0 * s1 * u.dot(&up)).max(0.0).sqrt();
            if du > radius {
                continue;
            }
            let dv = (2.0 - 2.0 * s2 * v.dot(&vp)).max(0.0).sqrt();
            if dv > radius {
                continue;
            }
            let dw = (2.0 - 2.0 * s3 * w.dot(&wp)).max(0.0).sqrt();
            if dw <= radius {
                return true;
            }
        }
    }
    false
}

fn ascend(
    cert: &Certificate,
    fs: &FactorSet,
    mut u: DVector<f64>,
    mut v: DVector<f64>,
    mut w: DVector<f64>,
) -> (f64, DVector<f64>, DVector<f64>, DVector<f64>) {
    let mut value = q_eval_unchecked(cert, fs, &u, &v, &w);
    for _ in 0..200 {
        let gu = q_grad_u(cert, fs, &v, &w);
        let nu = gu.norm();
        if nu == 0.0 {
            break;
        }
        u = gu / nu;
        let gv = q_grad_v(cert, fs, &u, &w);
        let nv = gv.norm();
        if nv == 0.0 {
            break;
        }
        v = gv / nv;
        let gw = q_grad_w(cert, fs, &u, &v);
        let nw = gw.norm();
        if nw == 0.0 {
            break;
        }
        w = gw / nw;
        let new_value = q_eval_unchecked(cert, fs, &u, &v, &w);
        if (new_value - value).abs() < 1e-13 {
            value = new_value;
            break;
        }
        value = new_value;
    }
    (value, u, v, w)
}

/// Per-trial outcome of [`near_region_check`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearRegionTrial {
    /// Max deviation of the 8-term multilinear expansion from direct
    /// evaluation over the θ grid.
    pub expansion_dev: f64,
    /// Max |q| over the three single-sin cross terms, which stationarity
    /// forces to zero.
    pub cross_term_max: f64,
    /// Max over the grid of q − [cosθ₁cosθ₂cosθ₃ + sinθ₁sinθ₂sinθ₃ + 4τ̂n^{−r_c}]
    /// (≤ 0 when the parameterized bound holds).
    pub bound_slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearRegionReport {
    pub atom: usize,
    pub trials: Vec<NearRegionTrial>,
    pub max_expansion_dev: f64,
    pub max_cross_term: f64,
    pub max_bound_slack: f64,
}

/// Exercise the parameterized form of q around support atom `p` along random
/// orthogonal directions.
///
/// `u(θ₁) = u_p cosθ₁ + x sinθ₁` (and cyclic) with `x ⟂ u_p`, `y ⟂ v_p`,
/// `z ⟂ w_p`; multilinearity makes q an exact 8-term trigonometric
/// polynomial in (θ₁, θ₂, θ₃) whose coefficients are q at mixed
/// support/direction arguments.
pub fn near_region_check(
    cert: &Certificate,
    fs: &FactorSet,
    p: usize,
    trials: usize,
    theta_grid: usize,
    seed: u64,
) -> Result<NearRegionReport> {
    if p >= fs.r() {
        return Err(Error::InvalidArgument(format!("atom {p} out of range")));
    }
    if theta_grid < 2 {
        return Err(Error::InvalidArgument("theta_grid must be >= 2".into()));
    }
    let n = fs.n();
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2 for orthogonal directions".into()));
    }
    let assumptions = assumption_report(fs, None);
    let r_c = 0.125;
    let envelope = 4.0 * assumptions.implied_tau * (n as f64).powf(-r_c);
    let up = fs.u().column(p).into_owned();
    let vp = fs.v().column(p).into_owned();
    let wp = fs.w().column(p).into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orth = |base: &DVector<f64>| loop {
        let g = random_unit(n, &mut rng);
        let proj = &g - base * base.dot(&g);
        let norm = proj.norm();
        if norm > 1e-8 {
            return proj / norm;
        }
    };
    let thetas: Vec<f64> = (0..theta_grid)
        .map(|k| std::f64::consts::PI * k as f64 / (theta_grid - 1) as f64)
        .collect();

    let mut out = NearRegionReport {
        atom: p,
        trials: Vec::with_capacity(trials),
        max_expansion_dev: 0.0,
        max_cross_term: 0.0,
        max_bound_slack: f64::NEG_INFINITY,
    };
    for _ in 0..trials {
        let x = orth(&up);
        let y = orth(&vp);
        let z = orth(&wp);
        // Coefficients indexed by (a,b,c) ∈ {0,1}³: 0 picks the support
        // vector with cos, 1 picks the orthogonal direction with sin.
        let mut coeff = [[[0.0f64; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let cu = if a == 0 { &up } else { &x };
                    let cv = if b == 0 { &vp } else { &y };
                    let cw = if c == 0 { &wp } else { &z };
                    coeff[a][b][c] = q_eval_unchecked(cert, fs, cu, cv, cw);
                }
            }
        }
        let cross = coeff[0][0][1].abs().max(coeff[0][1][0].abs()).max(coeff[1][0][0].abs());
        let mut dev = 0.0f64;
        let mut slack = f64::NEG_INFINITY;
        for &t1 in &thetas {
            let (c1, s1) = (t1.cos(), t1.sin());
            for &t2 in &thetas {
                let (c2, s2) = (t2.cos(), t2.sin());
                for &t3 in &thetas {
                    let (c3, s3) = (t3.cos(), t3.sin());
                    let u = &up * c1 + &x * s1;
                    let v = &vp * c2 + &y * s2;
                    let w = &wp * c3 + &z * s3;
                    let direct = q_eval_unchecked(cert, fs, &u, &v, &w);
                    let f1 = [c1, s1];
                    let f2 = [c2, s2];
                    let f3 = [c3, s3];
                    let mut expansion = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            for c in 0..2 {
                                expansion += coeff[a][b][c] * f1[a] * f2[b] * f3[c];
                            }
                        }
                    }
                    dev = dev.max((expansion - direct).abs());
                    slack = slack.max(direct - (c1 * c2 * c3 + s1 * s2 * s3 + envelope));
                }
            }
        }
        out.max_expansion_dev = out.max_expansion_dev.max(dev);
        out.max_cross_term = out.max_cross_term.max(cross);
        out.max_bound_slack = out.max_bound_slack.max(slack);
        out.trials.push(NearRegionTrial {
            expansion_dev: dev,
            cross_term_max: cross,
            bound_slack: slack,
        });
    }
    Ok(out)
}

/// One scalar-inequality verification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityCheck {
    /// Largest LHS − RHS seen (≤ tolerance means the inequality holds).
    pub max_violation: f64,
    /// The argument attaining `max_violation`.
    pub argmax: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarInequalityReport {
    /// sin³x + cos³x ≤ 1 − 0.15x² on (0, π/4].
    pub trig_bound: InequalityCheck,
    /// 1 − (3/2)x² + x³ + (7/8)x⁴ ≤ 1 − 0.15x² on [0, x_root], with
    /// x_root = (√2290 − 20)/35 the positive root of 35x² + 40x = 54.
    pub quartic_bound: InequalityCheck,
    /// Strict failure of the quartic bound just beyond x_root ("exactly on").
    pub quartic_tight_beyond_root: bool,
    /// 9θ² + 6θ − 1 < 0 on [0, (√2 − 1)/3), zero at the endpoint.
    pub hessian_quadratic: InequalityCheck,
    /// |9θ₀² + 6θ₀ − 1| at θ₀ = (√2 − 1)/3.
    pub quadratic_root_residual: f64,
    pub all_ok: bool,
}

/// Endpoint of the quartic-bound interval: the positive root of
/// `(7/8)x² + x − 27/20 = 0`.
pub fn quartic_bound_root() -> f64 {
    (2290.0f64.sqrt() - 20.0) / 35.0
}

/// Verify the three scalar inequalities the near-region analysis relies on,
/// on uniform grids of the stated intervals.
pub fn scalar_inequality_checks(grid: usize) -> Result<ScalarInequalityReport> {
    if grid < 1000 {
        return Err(Error::InvalidArgument("grid must be >= 1000".into()));
    }
    let gf = grid as f64;

    // (i) on (0, π/4].
    let mut trig = InequalityCheck {
        max_violation: f64::NEG_INFINITY,
        argmax: 0.0,
        ok: true,
    };
    for k in 1..=grid {
        let x = std::f64::consts::FRAC_PI_4 * k as f64 / gf;
        let lhs = x.sin().powi(3) + x.cos().powi(3);
        let rhs = 1.0 - 0.15 * x * x;
        let v = lhs - rhs;
        if v > trig.max_violation {
            trig.max_violation = v;
            trig.argmax = x;
        }
    }
    trig.ok = trig.max_violation <= 0.0;

    // (ii) on [0, x_root]; equality holds at the endpoint, so allow epsilon.
    let root = quartic_bound_root();
    let mut quart = InequalityCheck {
        max_violation: f64::NEG_INFINITY,
        argmax: 0.0,
        ok: true,
    };
    let quartic_gap = |x: f64| (1.0 - 1.5 * x * x + x.powi(3) + 0.875 * x.powi(4)) - (1.0 - 0.15 * x * x);
    for k in 0..=grid {
        let x = root * k as f64 / gf;
        let v = quartic_gap(x);
        if v > quart.max_violation {
            quart.max_violation = v;
            quart.argmax = x;
        }
    }
    quart.ok = quart.max_violation <= 1e-12;
    let quartic_tight_beyond_root = quartic_gap(root * (1.0 + 1e-3)) > 0.0;

    // (iii) on [0, θ₀) plus the endpoint.
    let theta0 = (2.0f64.sqrt() - 1.0) / 3.0;
    let mut quad = InequalityCheck {
        max_violation: f64::NEG_INFINITY,
        argmax: 0.0,
        ok: true,
    };
    for k in 0..grid {
        let t = theta0 * k as f64 / gf;
        let v = 9.0 * t * t + 6.0 * t - 1.0;
        if v > quad.max_violation {
            quad.max_violation = v;
            quad.argmax = t;
        }
    }
    quad.ok = quad.max_violation < 0.0;
    let quadratic_root_residual = (9.0 * theta0 * theta0 + 6.0 * theta0 - 1.0).abs();

    let all_ok = trig.ok && quart.ok && quartic_tight_beyond_root && quad.ok
        && quadratic_root_residual <= 1e-12;
    Ok(ScalarInequalityReport {
        trig_bound: trig,
        quartic_bound: quart,
        quartic_tight_beyond_root,
        hessian_quadratic: quad,
        quadratic_root_residual,
        all_ok,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralBoundReport {
    /// Estimated ‖Σ_p u_p ⊗ v_p ⊗ w_p‖ (unit weights).
    pub tensor_spectral: f64,
    /// RHS 1 + 2τ̂·n^{−r_c}.
    pub tensor_spectral_rhs: f64,
    pub tensor_spectral_ok: bool,
    /// (2→3, 2→4) norm estimates per mode (U, V, W).
    pub two_to_three: (f64, f64, f64),
    pub two_to_four: (f64, f64, f64),
    /// RHS 1 + (1/3)τ̂·n^{−r_c}.
    pub operator_rhs: f64,
    pub operator_ok: bool,
    /// ‖Σ u⊗v⊗w‖ ≤ ‖Uᵀ‖₂→₃·‖Vᵀ‖₂→₃·‖Wᵀ‖₂→₃ on the estimates (1e-6 slack).
    pub chain_ok: bool,
    pub chain_lhs: f64,
    pub chain_rhs: f64,
}

/// Estimate the unit-weight spectral norm and the 2→p operator norms and
/// compare them with the τ̂-based right-hand sides. Report-only; all
/// quantities are empirical estimates.
pub fn spectral_bound_checks(
    fs: &FactorSet,
    r_c: f64,
    tau_hat: f64,
    restarts: usize,
    seed: u64,
) -> Result<SpectralBoundReport> {
    let n = fs.n();
    let mut t = Tensor3::zeros(n, n, n);
    for p in 0..fs.r() {
        t.add_scaled_outer3(
            1.0,
            &fs.u().column(p).into_owned(),
            &fs.v().column(p).into_owned(),
            &fs.w().column(p).into_owned(),
        )?;
    }
    let est = spectral_norm_estimate(&t, restarts.max(1), 500, 1e-12, seed)?;
    let nf = n as f64;
    let tensor_rhs = 1.0 + 2.0 * tau_hat * nf.powf(-r_c);
    let op_rhs = 1.0 + tau_hat / 3.0 * nf.powf(-r_c);

    let norms = |p: PNorm, salt: u64| -> Result<(f64, f64, f64)> {
        Ok((
            operator_2p_norm(fs.u(), p, 50, seed ^ salt)?.value,
            operator_2p_norm(fs.v(), p, 50, seed ^ (salt + 1))?.value,
            operator_2p_norm(fs.w(), p, 50, seed ^ (salt + 2))?.value,
        ))
    };
    let p3 = norms(PNorm::Three, 0x10)?;
    let p4 = norms(PNorm::Four, 0x20)?;
    let op_max = [p3.0, p3.1, p3.2, p4.0, p4.1, p4.2]
        .into_iter()
        .fold(0.0f64, f64::max);
    let chain_rhs = p3.0 * p3.1 * p3.2;
    Ok(SpectralBoundReport {
        tensor_spectral: est.value,
        tensor_spectral_rhs: tensor_rhs,
        tensor_spectral_ok: est.value <= tensor_rhs,
        two_to_three: p3,
        two_to_four: p4,
        operator_rhs: op_rhs,
        operator_ok: op_max <= op_rhs,
        chain_ok: est.value <= chain_rhs + 1e-6,
        chain_lhs: est.value,
        chain_rhs,
    })
}
