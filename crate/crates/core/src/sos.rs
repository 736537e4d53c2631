//! Degree-2 moment (Lasserre) relaxation of the total-mass minimization.
//!
//! The measure optimization over the product of spheres is relaxed to a
//! semidefinite program over truncated moment vectors `m = [m_α]`,
//! `|α| ≤ 2d`, of the combined variable `ξ = [uᵀ vᵀ wᵀ]ᵀ ∈ ℝ^{3n}`:
//!
//! - the moment matrix `M(m)`, indexed by monomials of degree ≤ d, is PSD;
//! - the degree-3 mixed moments equal the observed tensor entries;
//! - support on the spheres ties `Σ_{i∈block} m_{β+2e_i} = m_β` for every
//!   monomial β of degree ≤ 2d−2;
//! - the objective is the total mass `m_0`.
//!
//! `d` is fixed at 2 for solving (enumeration is generic); the ADMM solver
//! projects onto the PSD cone by dense eigendecomposition each sweep, which
//! bounds practical `n` to single digits.
//!
//! Rank-one atoms are invariant under even sign flips, so the relaxation
//! cannot distinguish measures that redistribute mass within a sign orbit;
//! the optimal face is a single point only in the flip-invariant moments
//! (those whose block degrees share one parity). [`moment_distance_mod_signs`]
//! measures recovery in that quotient; [`moment_distance`] is the plain
//! Euclidean distance.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorSet;
use crate::tensor::Tensor3;

/// A monomial in 3n variables: exponent vector plus cached degree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonomialIndex {
    pub exponents: Vec<u8>,
    pub degree: u8,
}

/// All monomials of degree ≤ `max_degree` in `3n` variables, in graded
/// lexicographic order (by total degree, then lexicographic with earlier
/// variables ranked higher).
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    pub n: usize,
    pub max_degree: usize,
    monomials: Vec<MonomialIndex>,
    lookup: HashMap<Vec<u8>, usize>,
}

impl MonomialBasis {
    pub fn new(n: usize, max_degree: usize) -> Self {
        let nv = 3 * n;
        let mut monomials = Vec::new();
        let mut current = vec![0u8; nv];
        for degree in 0..=max_degree {
            enumerate_compositions(&mut current, 0, degree as u8, &mut monomials);
        }
        let lookup = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.exponents.clone(), i))
            .collect();
        Self {
            n,
            max_degree,
            monomials,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, idx: usize) -> &MonomialIndex {
        &self.monomials[idx]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MonomialIndex> {
        self.monomials.iter()
    }

    /// Block-degree parities (|α_u|, |α_v|, |α_w|) mod 2 of monomial `idx`.
    pub fn block_parities(&self, idx: usize) -> (u8, u8, u8) {
        let e = &self.monomials[idx].exponents;
        let n = self.n;
        let s = |range: std::ops::Range<usize>| e[range].iter().map(|&x| x as usize).sum::<usize>() as u8 % 2;
        (s(0..n), s(n..2 * n), s(2 * n..3 * n))
    }

    /// Whether the monomial is invariant under every even sign flip of an
    /// atom: all three block parities equal.
    pub fn is_flip_invariant(&self, idx: usize) -> bool {
        let (a, b, c) = self.block_parities(idx);
        a == b && b == c
    }
}

fn enumerate_compositions(current: &mut Vec<u8>, pos: usize, remaining: u8, out: &mut Vec<MonomialIndex>) {
    let nv = current.len();
    if pos == nv - 1 {
        current[pos] = remaining;
        let degree = current.iter().map(|&x| x as usize).sum::<usize>() as u8;
        out.push(MonomialIndex {
            exponents: current.clone(),
            degree,
        });
        current[pos] = 0;
        return;
    }
    // Lex order with earlier variables ranked higher: largest exponent first.
    for k in (0..=remaining).rev() {
        current[pos] = k;
        enumerate_compositions(current, pos + 1, remaining - k, out);
    }
    current[pos] = 0;
}

/// Truncated moment sequence for the 3n combined variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentVector {
    pub n: usize,
    pub d: usize,
    /// Indexed by the graded-lex basis of degree ≤ 2d.
    pub values: DVector<f64>,
}

/// Moments of the atomic measure `Σ_p λ_p δ_{(u_p, v_p, w_p)}`:
/// `m_α = Σ_p λ_p ξ_p^α` with `ξ_p = [u_p; v_p; w_p]`.
pub fn true_moment_vector(fs: &FactorSet, d: usize) -> MomentVector {
    let n = fs.n();
    let basis = MonomialBasis::new(n, 2 * d);
    let mut values = DVector::zeros(basis.len());
    for p in 0..fs.r() {
        let mut xi = Vec::with_capacity(3 * n);
        xi.extend(fs.u().column(p).iter().copied());
        xi.extend(fs.v().column(p).iter().copied());
        xi.extend(fs.w().column(p).iter().copied());
        for (idx, mono) in basis.iter().enumerate() {
            let mut term = fs.lambda()[p];
            for (var, &e) in mono.exponents.iter().enumerate() {
                for _ in 0..e {
                    term *= xi[var];
                }
            }
            values[idx] += term;
        }
    }
    MomentVector { n, d, values }
}

/// Euclidean distance over the full truncated vector.
pub fn moment_distance(m1: &MomentVector, m2: &MomentVector) -> Result<f64> {
    if m1.n != m2.n || m1.d != m2.d || m1.values.len() != m2.values.len() {
        return Err(Error::DimMismatch(format!(
            "moment vectors (n={}, d={}, len={}) vs (n={}, d={}, len={})",
            m1.n,
            m1.d,
            m1.values.len(),
            m2.n,
            m2.d,
            m2.values.len()
        )));
    }
    Ok((&m1.values - &m2.values).norm())
}

/// Euclidean distance restricted to the even-sign-flip-invariant moments.
///
/// Equivalent to symmetrizing both measures over each atom's sign orbit
/// before comparing; the non-invariant moments of any symmetric solver's
/// output are zero, so this is the meaningful recovery metric.
pub fn moment_distance_mod_signs(m1: &MomentVector, m2: &MomentVector) -> Result<f64> {
    if m1.n != m2.n || m1.d != m2.d || m1.values.len() != m2.values.len() {
        return Err(Error::DimMismatch("moment vectors differ in shape".into()));
    }
    let basis = MonomialBasis::new(m1.n, 2 * m1.d);
    let mut acc = 0.0;
    for idx in 0..basis.len() {
        if basis.is_flip_invariant(idx) {
            let diff = m1.values[idx] - m2.values[idx];
            acc += diff * diff;
        }
    }
    Ok(acc.sqrt())
}

/// One sparse equality row over the moment vector.
#[derive(Debug, Clone)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
}

/// The degree-2 moment SDP for a given observed tensor.
#[derive(Debug)]
pub struct MomentSdp {
    pub n: usize,
    pub d: usize,
    /// Basis of all moments (degree ≤ 2d).
    pub basis: MonomialBasis,
    /// Basis of the moment-matrix rows/columns (degree ≤ d).
    pub matrix_basis: MonomialBasis,
    /// Row-major K×K map from matrix position to flat moment index (α+β).
    pub matrix_index: Vec<usize>,
    /// Equality constraints `rows · m = rhs`.
    pub rows: Vec<SparseRow>,
    pub rhs: Vec<f64>,
    /// How many tensor-entry constraints lead the row list.
    pub tensor_rows: usize,
}

impl MomentSdp {
    pub fn matrix_dim(&self) -> usize {
        self.matrix_basis.len()
    }

    /// Assemble the moment matrix of a vector.
    pub fn moment_matrix(&self, m: &MomentVector) -> DMatrix<f64> {
        let k = self.matrix_dim();
        DMatrix::from_fn(k, k, |i, j| m.values[self.matrix_index[i * k + j]])
    }

    /// Max absolute equality-constraint residual.
    pub fn constraint_residual(&self, m: &MomentVector) -> f64 {
        self.rows
            .iter()
            .zip(self.rhs.iter())
            .map(|(row, &b)| {
                (row.entries.iter().map(|&(i, c)| c * m.values[i]).sum::<f64>() - b).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Build the degree-2 relaxation: PSD moment matrix, third-moment equalities
/// pinning the tensor entries, and the sphere-support ties for each block.
pub fn build_moment_sdp(t: &Tensor3, n: usize) -> Result<MomentSdp> {
    let d = 2usize;
    if t.dims() != (n, n, n) {
        return Err(Error::DimMismatch(format!("tensor {:?} vs n = {n}", t.dims())));
    }
    let basis = MonomialBasis::new(n, 2 * d);
    let matrix_basis = MonomialBasis::new(n, d);
    let k = matrix_basis.len();
    let mut matrix_index = vec![0usize; k * k];
    for i in 0..k {
        for j in 0..k {
            let sum: Vec<u8> = matrix_basis
                .monomial(i)
                .exponents
                .iter()
                .zip(matrix_basis.monomial(j).exponents.iter())
                .map(|(a, b)| a + b)
                .collect();
            matrix_index[i * k + j] = basis
                .index_of(&sum)
                .expect("product of degree-d monomials has degree <= 2d");
        }
    }

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    // Tensor entries are the degree-3 mixed moments u_i v_j w_k.
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                let mut e = vec![0u8; 3 * n];
                e[i] += 1;
                e[n + j] += 1;
                e[2 * n + kk] += 1;
                let idx = basis.index_of(&e).expect("degree 3 <= 2d");
                rows.push(SparseRow {
                    entries: vec![(idx, 1.0)],
                });
                rhs.push(t.get(i, j, kk));
            }
        }
    }
    let tensor_rows = rows.len();
    // Sphere support: Σ_{i∈block} m_{β+2e_i} = m_β for every |β| ≤ 2d−2.
    for block in 0..3 {
        for bi in 0..basis.len() {
            let beta = basis.monomial(bi);
            if beta.degree as usize > 2 * d - 2 {
                continue;
            }
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
            for i in 0..n {
                let mut e = beta.exponents.clone();
                e[block * n + i] += 2;
                let idx = basis.index_of(&e).expect("degree bumps by 2 only");
                entries.push((idx, 1.0));
            }
            entries.push((bi, -1.0));
            // Merge duplicate indices (β already containing the bumped
            // variable never collides across distinct i, but keep it tidy).
            entries.sort_by_key(|&(i, _)| i);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (i, c) in entries {
                match merged.last_mut() {
                    Some((li, lc)) if *li == i => *lc += c,
                    _ => merged.push((i, c)),
                }
            }
            merged.retain(|&(_, c)| c != 0.0);
            rows.push(SparseRow { entries: merged });
            rhs.push(0.0);
        }
    }

    Ok(MomentSdp {
        n,
        d,
        basis,
        matrix_basis,
        matrix_index,
        rows,
        rhs,
        tensor_rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpConfig {
    pub rho: f64,
    pub max_iter: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 20_000,
            primal_tol: 1e-7,
            dual_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Solved,
    MaxIter,
    InfeasibleSuspected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolveInfo {
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

/// ADMM for the moment SDP.
///
/// Splitting: moments `m` (kept exactly feasible for the equalities via a
/// KKT solve each sweep) and a PSD matrix `S` coupled by `S = M(m)`, with
/// scaled dual `Y`. The m-update least squares has the diagonal normal
/// matrix `D = diag(multiplicity of each moment in M)`, so only the small
/// Schur system `E D⁻¹ Eᵀ` is factorized, once, by eigendecomposition
/// (the sphere rows contain one exact linear dependence, so a pseudo-inverse
/// is required).
pub fn sdp_solve(sdp: &MomentSdp, cfg: &SdpConfig) -> Result<(MomentVector, SdpSolveInfo)> {
    if !(cfg.rho > 0.0) {
        return Err(Error::InvalidArgument("rho must be positive".into()));
    }
    let l = sdp.basis.len();
    let k = sdp.matrix_dim();
    let rho = cfg.rho;

    // Multiplicities of each moment in the matrix.
    let mut counts = vec![0.0f64; l];
    for &idx in &sdp.matrix_index {
        counts[idx] += 1.0;
    }
    // Every moment of degree ≤ 2d splits into two halves of degree ≤ d.
    debug_assert!(counts.iter().all(|&c| c > 0.0));

    // Schur complement G = E D⁻¹ Eᵀ via per-moment accumulation.
    let m_rows = sdp.rows.len();
    let mut touching: Vec<Vec<(usize, f64)>> = vec![Vec::new(); l];
    for (ri, row) in sdp.rows.iter().enumerate() {
        for &(idx, c) in &row.entries {
            touching[idx].push((ri, c));
        }
    }
    let mut g = DMatrix::<f64>::zeros(m_rows, m_rows);
    for idx in 0..l {
        let dinv = 1.0 / counts[idx];
        let list = &touching[idx];
        for &(r1, c1) in list {
            for &(r2, c2) in list {
                g[(r1, r2)] += c1 * c2 * dinv;
            }
        }
    }
    let geig = g.symmetric_eigen();
    let gmax = geig.eigenvalues.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    let gcut = 1e-12 * gmax.max(1.0);
    let g_pinv_apply = |x: &DVector<f64>| -> DVector<f64> {
        let proj = geig.eigenvectors.transpose() * x;
        let mut out = DVector::zeros(m_rows);
        for (i, &ev) in geig.eigenvalues.iter().enumerate() {
            if ev.abs() > gcut {
                out += geig.eigenvectors.column(i) * (proj[i] / ev);
            }
        }
        out
    };

    let b = DVector::from_vec(sdp.rhs.clone());
    let e_apply = |m: &DVector<f64>| -> DVector<f64> {
        DVector::from_fn(m_rows, |ri, _| {
            sdp.rows[ri].entries.iter().map(|&(i, c)| c * m[i]).sum()
        })
    };
    let e_t_apply = |nu: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(l);
        for (ri, row) in sdp.rows.iter().enumerate() {
            let s = nu[ri];
            if s != 0.0 {
                for &(i, c) in &row.entries {
                    out[i] += c * s;
                }
            }
        }
        out
    };
    let m_apply = |m: &DVector<f64>| -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| m[sdp.matrix_index[i * k + j]])
    };
    let m_star = |x: &DMatrix<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(l);
        for i in 0..k {
            for j in 0..k {
                out[sdp.matrix_index[i * k + j]] += x[(i, j)];
            }
        }
        out
    };

    let mut c_vec = DVector::zeros(l);
    c_vec[0] = 1.0; // objective: minimize the total mass m_0

    let mut m = DVector::<f64>::zeros(l);
    let mut s = DMatrix::<f64>::zeros(k, k);
    let mut y = DMatrix::<f64>::zeros(k, k);
    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;
    let mut best_primal = f64::INFINITY;
    let mut since_best = 0usize;

    for iter in 0..cfg.max_iter {
        iterations = iter + 1;
        // m-update: argmin c·m + (ρ/2)‖M(m) − (S − Y/ρ)‖² s.t. Em = b.
        let z = &s - &y / rho;
        let t_vec = rho * m_star(&z) - &c_vec;
        let mut td = t_vec.clone();
        for i in 0..l {
            td[i] /= counts[i];
        }
        let nu = g_pinv_apply(&(e_apply(&td) - rho * &b));
        let correction = e_t_apply(&nu);
        for i in 0..l {
            m[i] = (t_vec[i] - correction[i]) / (rho * counts[i]);
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence {
                iteration: iter,
                detail: "non-finite moment iterate".into(),
            });
        }

        // S-update: project M(m) + Y/ρ onto the PSD cone.
        let mm = m_apply(&m);
        let mut a = &mm + &y / rho;
        // Symmetrize against accumulated rounding.
        a = (&a + a.transpose()) * 0.5;
        let eig = a.symmetric_eigen();
        let mut s_new = DMatrix::zeros(k, k);
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev > 0.0 {
                let col = eig.eigenvectors.column(i);
                s_new += (col * col.transpose()) * ev;
            }
        }

        primal_residual = (&mm - &s_new).norm() / mm.norm().max(1.0);
        dual_residual = rho * m_star(&(&s_new - &s)).norm() / m_star(&y).norm().max(1.0);
        s = s_new;
        y += rho * (&mm - &s);

        if primal_residual < cfg.primal_tol && dual_residual < cfg.dual_tol {
            status = SdpStatus::Solved;
            break;
        }
        // Stagnation heuristic: no meaningful progress for a long stretch
        // while far above tolerance.
        if primal_residual < best_primal * 0.99 {
            best_primal = primal_residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 2000 && primal_residual > 100.0 * cfg.primal_tol {
                status = SdpStatus::InfeasibleSuspected;
                break;
            }
        }
    }

    let objective = m[0];
    Ok((
        MomentVector {
            n: sdp.n,
            d: sdp.d,
            values: m,
        },
        SdpSolveInfo {
            status,
            iterations,
            primal_residual,
            dual_residual,
            objective,
        },
    ))
}
