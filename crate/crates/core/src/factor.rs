//! Factor sets: the rank-one atoms `(u_p, v_p, w_p)` with positive weights
//! `λ_p`, random instance generation, tensor synthesis, measurement of the
//! three structural assumptions (incoherence, bounded spectral norm, Gram
//! isometry), and alignment of an estimated decomposition against a
//! reference one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tensor3, UNIT_NORM_TOL};

/// Estimated atoms with weight below this are discarded before alignment;
/// an over-allocated solver returns near-zero padded atoms.
pub const SURPLUS_PRUNE_TOL: f64 = 1e-6;

/// A rank-`r` set of unit-norm factors with positive weights.
///
/// `u`, `v`, `w` are `n x r` with unit-norm columns; `lambda[p] > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl FactorSet {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>, w: DMatrix<f64>, lambda: DVector<f64>) -> Result<Self> {
        let (n, r) = (u.nrows(), u.ncols());
        if n == 0 || r == 0 {
            return Err(Error::InvalidArgument("need n >= 1 and r >= 1".into()));
        }
        if v.nrows() != n || w.nrows() != n || v.ncols() != r || w.ncols() != r {
            return Err(Error::DimMismatch(format!(
                "U {}x{}, V {}x{}, W {}x{}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols(),
                w.nrows(),
                w.ncols()
            )));
        }
        if lambda.len() != r {
            return Err(Error::DimMismatch(format!("lambda length {} vs r {}", lambda.len(), r)));
        }
        for (name, m) in [("U", &u), ("V", &v), ("W", &w)] {
            for p in 0..r {
                let norm = m.column(p).norm();
                if !norm.is_finite() {
                    return Err(Error::NonFinite(format!("{name} column {p}")));
                }
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::NotUnitNorm((norm - 1.0).abs()));
                }
            }
        }
        if let Some(p) = lambda.iter().position(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda[{p}] must be positive and finite")));
        }
        Ok(Self { u, v, w, lambda })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// Factor matrix for the given mode (0, 1, 2).
    pub fn mode(&self, mode: usize) -> &DMatrix<f64> {
        match mode {
            0 => &self.u,
            1 => &self.v,
            2 => &self.w,
            _ => panic!("mode out of range"),
        }
    }
}

/// How the weights of a random instance are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffScheme {
    /// `λ_p = (1 + ε_p²)/2` with ε_p standard normal, so every weight is at
    /// least 1/2.
    HalfPlusChiSq,
    /// All weights equal to one.
    Unit,
}

/// Draw factors i.i.d. uniform on the unit spheres (normalized Gaussians)
/// and weights per `scheme`. Identical seeds give bitwise-identical output.
pub fn random_factor_set(n: usize, r: usize, seed: u64, scheme: CoeffScheme) -> FactorSet {
    assert!(n >= 1 && r >= 1, "need n >= 1 and r >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sphere_matrix = |rows: usize, cols: usize| {
        let mut m = DMatrix::<f64>::zeros(rows, cols);
        for p in 0..cols {
            loop {
                for i in 0..rows {
                    m[(i, p)] = rng.sample::<f64, _>(StandardNormal);
                }
                let norm = m.column(p).norm();
                if norm > 1e-12 {
                    let inv = 1.0 / norm;
                    for i in 0..rows {
                        m[(i, p)] *= inv;
                    }
                    break;
                }
            }
        }
        m
    };
    let u = sphere_matrix(n, r);
    let v = sphere_matrix(n, r);
    let w = sphere_matrix(n, r);
    let lambda = match scheme {
        CoeffScheme::Unit => DVector::from_element(r, 1.0),
        CoeffScheme::HalfPlusChiSq => DVector::from_fn(r, |_, _| {
            let eps: f64 = rng.sample(StandardNormal);
            (1.0 + eps * eps) / 2.0
        }),
    };
    FactorSet::new(u, v, w, lambda).expect("construction is valid by design")
}

/// `T = Σ_p λ_p u_p ⊗ v_p ⊗ w_p`.
pub fn synthesize(fs: &FactorSet) -> Tensor3 {
    let n = fs.n();
    let mut t = Tensor3::zeros(n, n, n);
    for p in 0..fs.r() {
        t.add_scaled_outer3(
            fs.lambda[p],
            &fs.u.column(p).into_owned(),
            &fs.v.column(p).into_owned(),
            &fs.w.column(p).into_owned(),
        )
        .expect("dims match");
    }
    t
}

/// User-supplied constants to test the assumptions against: the evaluated
/// polynomial values `τ(log n)`, `κ(log n)` and the constant `c`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub tau: f64,
    pub kappa: f64,
    pub c: f64,
}

/// Pass/fail of each assumption against supplied constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssumptionPass {
    pub incoherence: bool,
    pub spectral: bool,
    pub gram: bool,
    pub rank: bool,
}

/// Measured assumption quantities plus implied constants.
///
/// The polynomials `τ(·)`, `κ(·)` are never instantiated in closed form, so
/// the report exposes the constants that make each assumption hold with
/// equality; supplied constants (if any) drive the pass flags instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Incoherence Δ: max absolute pairwise inner product across modes.
    pub delta: f64,
    /// Largest singular values of (U, V, W).
    pub spec_norms: (f64, f64, f64),
    /// Max over mode pairs of ‖(XᵀX)⊙(YᵀY) − I_r‖.
    pub gram_dev: f64,
    /// τ with Assumption I at equality: Δ·√n.
    pub implied_tau: f64,
    /// κ with Assumption III at equality: gram_dev·n/√r.
    pub implied_kappa: f64,
    /// c with Assumption II at equality: max(0, max spec norm − 1)·√(n/r).
    pub implied_c: f64,
    /// n^{17/16} / (12 c² √τ), with supplied or implied constants.
    pub rank_bound: f64,
    /// Present when constants were supplied.
    pub pass: Option<AssumptionPass>,
}

/// Measure Δ, the spectral norms, and the Gram deviation exactly.
pub fn assumption_report(fs: &FactorSet, constants: Option<AssumptionConstants>) -> AssumptionReport {
    let n = fs.n() as f64;
    let r = fs.r() as f64;
    let delta = incoherence(fs);
    let spec = |m: &DMatrix<f64>| {
        m.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0f64, f64::max)
    };
    let spec_norms = (spec(&fs.u), spec(&fs.v), spec(&fs.w));
    let gram_dev = [
        (&fs.u, &fs.v),
        (&fs.u, &fs.w),
        (&fs.v, &fs.w),
    ]
    .into_iter()
    .map(|(x, y)| {
        let gx = x.transpose() * x;
        let gy = y.transpose() * y;
        let mut dev = gx.component_mul(&gy);
        for p in 0..fs.r() {
            dev[(p, p)] -= 1.0;
        }
        dev.symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|e| e.abs())
            .fold(0.0f64, f64::max)
    })
    .fold(0.0f64, f64::max);

    let implied_tau = delta * n.sqrt();
    let implied_kappa = gram_dev * n / r.sqrt();
    let max_spec = spec_norms.0.max(spec_norms.1).max(spec_norms.2);
    let implied_c = (max_spec - 1.0).max(0.0) * (n / r).sqrt();

    let (tau, c) = match constants {
        Some(k) => (k.tau, k.c),
        None => (implied_tau, implied_c),
    };
    let rank_bound = n.powf(17.0 / 16.0) / (12.0 * c * c * tau.sqrt());
    let pass = constants.map(|k| AssumptionPass {
        incoherence: delta <= k.tau / n.sqrt(),
        spectral: max_spec <= 1.0 + k.c * (r / n).sqrt(),
        gram: gram_dev <= k.kappa * r.sqrt() / n,
        rank: r <= rank_bound,
    });

    AssumptionReport {
        delta,
        spec_norms,
        gram_dev,
        implied_tau,
        implied_kappa,
        implied_c,
        rank_bound,
        pass,
    }
}

/// Exact incoherence Δ = max_{p≠q} over modes of |⟨x_p, x_q⟩| (0 when r = 1).
pub fn incoherence(fs: &FactorSet) -> f64 {
    let r = fs.r();
    if r < 2 {
        return 0.0;
    }
    let mut delta = 0.0f64;
    for m in [&fs.u, &fs.v, &fs.w] {
        for p in 0..r {
            for q in (p + 1)..r {
                delta = delta.max(m.column(p).dot(&m.column(q)).abs());
            }
        }
    }
    delta
}

/// Result of matching an estimated factor set against a reference.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// `perm[q]` is the index of the estimated atom matched to reference atom `q`,
    /// counted in the pruned estimate.
    pub perm: Vec<usize>,
    /// Sign triple applied to the estimated atom of each match; the product
    /// of each triple is +1.
    pub signs: Vec<(f64, f64, f64)>,
    /// Max over matches and modes of ‖s·x_est − x_true‖₂.
    pub max_err: f64,
    /// Max over matches of |λ_est − λ_true|.
    pub coeff_err: f64,
}

/// Greedily match estimated atoms to reference atoms and measure the worst
/// column error modulo even sign flips.
///
/// Estimated atoms with λ below [`SURPLUS_PRUNE_TOL`] are discarded first;
/// if fewer atoms than the reference remain, the decomposition failed
/// structurally and an error is returned.
pub fn align_and_error(est: &FactorSet, truth: &FactorSet) -> Result<Alignment> {
    if est.n() != truth.n() {
        return Err(Error::DimMismatch(format!("n {} vs {}", est.n(), truth.n())));
    }
    let keep: Vec<usize> = (0..est.r())
        .filter(|&p| est.lambda[p] >= SURPLUS_PRUNE_TOL)
        .collect();
    if keep.len() < truth.r() {
        return Err(Error::Unmatched {
            est: keep.len(),
            truth: truth.r(),
        });
    }

    // Product-correlation score |⟨u_e,u_t⟩⟨v_e,v_t⟩⟨w_e,w_t⟩| for all pairs,
    // sorted descending with ties broken by lowest (est, truth) index.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(keep.len() * truth.r());
    for (ei, &e) in keep.iter().enumerate() {
        for t in 0..truth.r() {
            let s = est.u.column(e).dot(&truth.u.column(t))
                * est.v.column(e).dot(&truth.v.column(t))
                * est.w.column(e).dot(&truth.w.column(t));
            pairs.push((s.abs(), ei, t));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut est_used = vec![false; keep.len()];
    let mut perm = vec![usize::MAX; truth.r()];
    let mut matched = 0;
    for &(_, ei, t) in &pairs {
        if est_used[ei] || perm[t] != usize::MAX {
            continue;
        }
        est_used[ei] = true;
        perm[t] = ei;
        matched += 1;
        if matched == truth.r() {
            break;
        }
    }

    const EVEN_FLIPS: [(f64, f64, f64); 4] = [
        (1.0, 1.0, 1.0),
        (1.0, -1.0, -1.0),
        (-1.0, 1.0, -1.0),
        (-1.0, -1.0, 1.0),
    ];
    let mut signs = Vec::with_capacity(truth.r());
    let mut max_err = 0.0f64;
    let mut coeff_err = 0.0f64;
    for t in 0..truth.r() {
        let e = keep[perm[t]];
        let mut best = (f64::INFINITY, EVEN_FLIPS[0]);
        for flip in EVEN_FLIPS {
            let eu = (est.u.column(e) * flip.0 - truth.u.column(t)).norm();
            let ev = (est.v.column(e) * flip.1 - truth.v.column(t)).norm();
            let ew = (est.w.column(e) * flip.2 - truth.w.column(t)).norm();
            let m = eu.max(ev).max(ew);
            if m < best.0 {
                best = (m, flip);
            }
        }
        signs.push(best.1);
        max_err = max_err.max(best.0);
        coeff_err = coeff_err.max((est.lambda[e] - truth.lambda[t]).abs());
    }

    Ok(Alignment {
        perm,
        signs,
        max_err,
        coeff_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_factor_set_basics() {
        let fs = random_factor_set(5, 3, 7, CoeffScheme::Unit);
        assert_eq!(fs.n(), 5);
        assert_eq!(fs.r(), 3);
        for p in 0..3 {
            assert!((fs.u().column(p).norm() - 1.0).abs() < 1e-12);
            assert_eq!(fs.lambda()[p], 1.0);
        }
    }

    #[test]
    fn half_plus_chisq_weights_at_least_half() {
        for seed in 0..20 {
            let fs = random_factor_set(6, 8, seed, CoeffScheme::HalfPlusChiSq);
            assert!(fs.lambda().iter().all(|&l| l >= 0.5));
        }
    }

    #[test]
    fn equal_seeds_bitwise_identical() {
        let a = random_factor_set(7, 4, 99, CoeffScheme::HalfPlusChiSq);
        let b = random_factor_set(7, 4, 99, CoeffScheme::HalfPlusChiSq);
        assert_eq!(a.u(), b.u());
        assert_eq!(a.v(), b.v());
        assert_eq!(a.w(), b.w());
        assert_eq!(a.lambda(), b.lambda());
        let c = random_factor_set(7, 4, 100, CoeffScheme::HalfPlusChiSq);
        assert_ne!(a.u(), c.u());
    }

    #[test]
    fn synthesize_rank_one() {
        let mut u = DMatrix::zeros(3, 1);
        u[(0, 0)] = 1.0;
        let fs = FactorSet::new(u.clone(), u.clone(), u, DVector::from_vec(vec![2.0])).unwrap();
        let t = synthesize(&fs);
        assert_eq!(t.get(0, 0, 0), 2.0);
        assert_eq!(t.frobenius_norm(), 2.0);
    }

    #[test]
    fn synthesize_frobenius_identity() {
        // ‖T‖_F² = λᵀ[(UᵀU)⊙(VᵀV)⊙(WᵀW)]λ, against direct elementwise summation.
        let fs = random_factor_set(4, 3, 5, CoeffScheme::HalfPlusChiSq);
        let t = synthesize(&fs);
        let direct = t.frobenius_norm();
        let gu = fs.u().transpose() * fs.u();
        let gv = fs.v().transpose() * fs.v();
        let gw = fs.w().transpose() * fs.w();
        let g = gu.component_mul(&gv).component_mul(&gw);
        let formula = (fs.lambda().transpose() * g * fs.lambda())[(0, 0)].sqrt();
        assert!((direct - formula).abs() < 1e-10);
    }

    #[test]
    fn synthesize_orthonormal_frobenius_is_lambda_norm() {
        let fs = orthonormal_fs(6, 4, &[1.5, 0.5, 2.0, 1.0]);
        let t = synthesize(&fs);
        let expect = fs.lambda().norm();
        assert!((t.frobenius_norm() - expect).abs() < 1e-10);
    }

    #[test]
    fn synthesize_invariant_under_even_sign_flip() {
        let fs = random_factor_set(4, 2, 12, CoeffScheme::Unit);
        let mut u = fs.u().clone();
        let mut v = fs.v().clone();
        for i in 0..4 {
            u[(i, 0)] = -u[(i, 0)];
            v[(i, 0)] = -v[(i, 0)];
        }
        let flipped = FactorSet::new(u, v, fs.w().clone(), fs.lambda().clone()).unwrap();
        let (a, b) = (synthesize(&fs), synthesize(&flipped));
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    fn orthonormal_fs(n: usize, r: usize, lambda: &[f64]) -> FactorSet {
        let mut m = DMatrix::zeros(n, r);
        for p in 0..r {
            m[(p, p)] = 1.0;
        }
        FactorSet::new(m.clone(), m.clone(), m, DVector::from_vec(lambda.to_vec())).unwrap()
    }

    #[test]
    fn assumption_report_orthonormal() {
        let fs = orthonormal_fs(6, 3, &[1.0, 1.0, 1.0]);
        let rep = assumption_report(&fs, None);
        assert_eq!(rep.delta, 0.0);
        assert!(rep.gram_dev < 1e-12);
        assert!((rep.spec_norms.0 - 1.0).abs() < 1e-12);
        assert!((rep.spec_norms.1 - 1.0).abs() < 1e-12);
        assert!((rep.spec_norms.2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assumption_report_duplicate_column_delta_one() {
        let mut u = DMatrix::zeros(4, 2);
        u[(0, 0)] = 1.0;
        u[(0, 1)] = 1.0;
        let mut v = DMatrix::zeros(4, 2);
        v[(0, 0)] = 1.0;
        v[(1, 1)] = 1.0;
        let fs = FactorSet::new(u, v.clone(), v, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let rep = assumption_report(&fs, None);
        assert!((rep.delta - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_matches_pairwise_loop() {
        let fs = random_factor_set(100, 50, 1, CoeffScheme::Unit);
        let rep = assumption_report(&fs, None);
        let mut brute = 0.0f64;
        for m in [fs.u(), fs.v(), fs.w()] {
            for p in 0..fs.r() {
                for q in 0..fs.r() {
                    if p != q {
                        brute = brute.max(m.column(p).dot(&m.column(q)).abs());
                    }
                }
            }
        }
        assert_eq!(rep.delta, brute);
    }

    #[test]
    fn align_identity() {
        let fs = random_factor_set(5, 3, 2, CoeffScheme::HalfPlusChiSq);
        let al = align_and_error(&fs, &fs).unwrap();
        assert_eq!(al.perm, vec![0, 1, 2]);
        assert!(al.max_err < 1e-14);
        assert!(al.coeff_err < 1e-14);
        assert!(al.signs.iter().all(|&s| s == (1.0, 1.0, 1.0)));
    }

    #[test]
    fn align_even_sign_flip_is_exact() {
        let fs = random_factor_set(5, 3, 3, CoeffScheme::Unit);
        let mut u = fs.u().clone();
        let mut v = fs.v().clone();
        for i in 0..5 {
            u[(i, 1)] = -u[(i, 1)];
            v[(i, 1)] = -v[(i, 1)];
        }
        let est = FactorSet::new(u, v, fs.w().clone(), fs.lambda().clone()).unwrap();
        let al = align_and_error(&est, &fs).unwrap();
        assert!(al.max_err < 1e-14);
        assert_eq!(al.signs[1], (-1.0, -1.0, 1.0));
    }

    #[test]
    fn align_recovers_permutation() {
        let fs = random_factor_set(6, 4, 8, CoeffScheme::HalfPlusChiSq);
        let perm = [2usize, 0, 3, 1];
        let mut u = DMatrix::zeros(6, 4);
        let mut v = DMatrix::zeros(6, 4);
        let mut w = DMatrix::zeros(6, 4);
        let mut lam = DVector::zeros(4);
        for (dst, &src) in perm.iter().enumerate() {
            u.set_column(dst, &fs.u().column(src));
            v.set_column(dst, &fs.v().column(src));
            w.set_column(dst, &fs.w().column(src));
            lam[dst] = fs.lambda()[src];
        }
        let est = FactorSet::new(u, v, w, lam).unwrap();
        let al = align_and_error(&est, &fs).unwrap();
        assert!(al.max_err < 1e-14);
        // perm[t] is the estimate index holding truth atom t.
        for (t, &e) in al.perm.iter().enumerate() {
            assert_eq!(perm[e], t);
        }
    }

    #[test]
    fn align_prunes_surplus_atoms() {
        let fs = random_factor_set(5, 2, 4, CoeffScheme::Unit);
        let mut u = DMatrix::zeros(5, 3);
        let mut v = DMatrix::zeros(5, 3);
        let mut w = DMatrix::zeros(5, 3);
        let mut lam = DVector::zeros(3);
        for p in 0..2 {
            u.set_column(p, &fs.u().column(p));
            v.set_column(p, &fs.v().column(p));
            w.set_column(p, &fs.w().column(p));
            lam[p] = fs.lambda()[p];
        }
        u[(0, 2)] = 1.0;
        v[(1, 2)] = 1.0;
        w[(2, 2)] = 1.0;
        lam[2] = 1e-9; // below the prune threshold
        let est = FactorSet::new(u, v, w, lam).unwrap();
        let al = align_and_error(&est, &fs).unwrap();
        assert!(al.max_err < 1e-14);
    }

    #[test]
    fn align_unmatched_error() {
        let truth = random_factor_set(5, 3, 4, CoeffScheme::Unit);
        let est = random_factor_set(5, 2, 5, CoeffScheme::Unit);
        assert!(matches!(
            align_and_error(&est, &truth),
            Err(Error::Unmatched { est: 2, truth: 3 })
        ));
    }
}
