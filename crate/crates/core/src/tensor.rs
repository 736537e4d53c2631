//! Dense third-order tensors and the multilinear kernels used by every
//! other module: outer products, inner products, mode contractions, and
//! heuristic norm estimation.
//!
//! Storage is row-major: entry `(i, j, k)` of an `n1 x n2 x n3` tensor
//! lives at `((i * n2) + j) * n3 + k`. Tensors are immutable in spirit:
//! every operation here is a pure function of its inputs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Constructor tolerance on `|‖x‖₂ − 1|` for [`UnitVector`] and for the
/// unit-norm preconditions of polynomial evaluation.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// A dense real `n1 x n2 x n3` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    /// All-zero tensor.
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: (n1, n2, n3),
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    /// Build from row-major data. Rejects length mismatches and non-finite entries.
    pub fn from_data(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (n1, n2, n3) = dims;
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(Error::InvalidArgument("tensor dims must be positive".into()));
        }
        if data.len() != n1 * n2 * n3 {
            return Err(Error::DimMismatch(format!(
                "data length {} does not equal {}*{}*{}",
                data.len(),
                n1,
                n2,
                n3
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry at flat index {pos}")));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims.1 + j) * self.dims.2 + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.dims.1 + j) * self.dims.2 + k] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// `self += alpha * other`, in place.
    pub fn add_scaled(&mut self, alpha: f64, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// `self += alpha * u ⊗ v ⊗ w`, without materializing the rank-one tensor.
    pub fn add_scaled_outer3(
        &mut self,
        alpha: f64,
        u: &DVector<f64>,
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<()> {
        let (n1, n2, n3) = self.dims;
        if u.len() != n1 || v.len() != n2 || w.len() != n3 {
            return Err(Error::DimMismatch(format!(
                "vectors ({}, {}, {}) vs tensor {:?}",
                u.len(),
                v.len(),
                w.len(),
                self.dims
            )));
        }
        let mut idx = 0;
        for i in 0..n1 {
            let au = alpha * u[i];
            for j in 0..n2 {
                let auv = au * v[j];
                for k in 0..n3 {
                    self.data[idx] += auv * w[k];
                    idx += 1;
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for x in &mut self.data {
            *x *= alpha;
        }
    }
}

/// A vector constrained to the unit sphere at construction
/// (`|‖x‖₂ − 1| ≤ 1e-9`).
#[derive(Debug, Clone)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let dev = (v.norm() - 1.0).abs();
        if !dev.is_finite() || dev > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm(dev));
        }
        Ok(Self(v))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

/// The pair of modes a contraction sums over (1-based, matching the usual
/// tensor-vector product notation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePair {
    /// Sum over modes 2 and 3; the result lives in mode 1.
    Modes23,
    /// Sum over modes 1 and 3; the result lives in mode 2.
    Modes13,
    /// Sum over modes 1 and 2; the result lives in mode 3.
    Modes12,
}

/// Rank-one tensor `u ⊗ v ⊗ w`, entry `(i,j,k) = u_i v_j w_k`.
pub fn outer3(u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Tensor3 {
    let mut t = Tensor3::zeros(u.len(), v.len(), w.len());
    t.add_scaled_outer3(1.0, u, v, w)
        .expect("dims match by construction");
    t
}

/// Tensor inner product `⟨Q, T⟩ = Σ_{ijk} Q_{ijk} T_{ijk}`.
pub fn inner(q: &Tensor3, t: &Tensor3) -> Result<f64> {
    if q.dims != t.dims {
        return Err(Error::DimMismatch(format!("{:?} vs {:?}", q.dims, t.dims)));
    }
    Ok(q.data.iter().zip(t.data.iter()).map(|(a, b)| a * b).sum())
}

/// Contract two modes of `q` against vectors `a` and `b`.
///
/// For `Modes23` this is `out[i] = Σ_{j,k} Q_{ijk} a_j b_k` (i.e.
/// `Q ×̄₂ a ×̄₃ b`); the other pairs are analogous, with `a` always the
/// lower-numbered contracted mode.
pub fn contract(q: &Tensor3, pair: ModePair, a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (n1, n2, n3) = q.dims;
    let check = |la: usize, lb: usize| -> Result<()> {
        if a.len() != la || b.len() != lb {
            return Err(Error::DimMismatch(format!(
                "contraction vectors ({}, {}) vs modes ({}, {})",
                a.len(),
                b.len(),
                la,
                lb
            )));
        }
        Ok(())
    };
    match pair {
        ModePair::Modes23 => {
            check(n2, n3)?;
            let mut out = DVector::zeros(n1);
            let mut idx = 0;
            for i in 0..n1 {
                let mut acc = 0.0;
                for j in 0..n2 {
                    let aj = a[j];
                    let mut inner_acc = 0.0;
                    for k in 0..n3 {
                        inner_acc += q.data[idx] * b[k];
                        idx += 1;
                    }
                    acc += aj * inner_acc;
                }
                out[i] = acc;
            }
            Ok(out)
        }
        ModePair::Modes13 => {
            check(n1, n3)?;
            let mut out = DVector::zeros(n2);
            let mut idx = 0;
            for i in 0..n1 {
                let ai = a[i];
                for j in 0..n2 {
                    let mut inner_acc = 0.0;
                    for k in 0..n3 {
                        inner_acc += q.data[idx] * b[k];
                        idx += 1;
                    }
                    out[j] += ai * inner_acc;
                }
            }
            Ok(out)
        }
        ModePair::Modes12 => {
            check(n1, n2)?;
            let mut out = DVector::zeros(n3);
            let mut idx = 0;
            for i in 0..n1 {
                let ai = a[i];
                for j in 0..n2 {
                    let aij = ai * b[j];
                    for k in 0..n3 {
                        out[k] += aij * q.data[idx];
                        idx += 1;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Result of [`spectral_norm_estimate`].
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    /// Best value found; a certified lower bound on the tensor spectral norm,
    /// attained by `argmax`.
    pub value: f64,
    pub argmax: (DVector<f64>, DVector<f64>, DVector<f64>),
    /// Set when the input tensor is identically zero.
    pub degenerate: bool,
}

/// Multi-restart alternating maximization of `⟨Q, u ⊗ v ⊗ w⟩` over the
/// product of unit spheres.
///
/// The returned value is attained by the returned triple, so it is a lower
/// bound on the true spectral norm; as with any local ascent it needn't be
/// the global maximum.
pub fn spectral_norm_estimate(
    q: &Tensor3,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<SpectralEstimate> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    let (n1, n2, n3) = q.dims;
    if q.is_zero() {
        let e = |n: usize| {
            let mut v = DVector::zeros(n);
            v[0] = 1.0;
            v
        };
        return Ok(SpectralEstimate {
            value: 0.0,
            argmax: (e(n1), e(n2), e(n3)),
            degenerate: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<SpectralEstimate> = None;
    for _ in 0..restarts {
        let mut u = random_unit(n1, &mut rng);
        let mut v = random_unit(n2, &mut rng);
        let mut w = random_unit(n3, &mut rng);
        let mut value = inner(q, &outer3(&u, &v, &w))?;
        for _ in 0..max_iter {
            let gu = contract(q, ModePair::Modes23, &v, &w)?;
            let nu = gu.norm();
            if nu == 0.0 {
                break;
            }
            u = gu / nu;
            let gv = contract(q, ModePair::Modes13, &u, &w)?;
            let nv = gv.norm();
            if nv == 0.0 {
                break;
            }
            v = gv / nv;
            let gw = contract(q, ModePair::Modes12, &u, &v)?;
            let new_value = gw.norm();
            if new_value == 0.0 {
                break;
            }
            w = gw / new_value;
            if (new_value - value).abs() < tol {
                break;
            }
            value = new_value;
        }
        // Re-evaluate so the reported value is exactly what the triple attains.
        let mut val = inner(q, &outer3(&u, &v, &w))?;
        if val < 0.0 {
            u.neg_mut();
            val = -val;
        }
        if best.as_ref().map_or(true, |b| val > b.value) {
            best = Some(SpectralEstimate {
                value: val,
                argmax: (u, v, w),
                degenerate: false,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Target exponent for [`operator_2p_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PNorm {
    Two,
    Three,
    Four,
}

impl PNorm {
    fn exponent(self) -> f64 {
        match self {
            PNorm::Two => 2.0,
            PNorm::Three => 3.0,
            PNorm::Four => 4.0,
        }
    }
}

/// Result of [`operator_2p_norm`]: the value and the unit vector attaining it.
#[derive(Debug, Clone)]
pub struct OperatorNormEstimate {
    pub value: f64,
    pub argmax: DVector<f64>,
}

/// Estimate `sup_{‖x‖₂=1} ‖Mᵀ x‖_p` for `p ∈ {2, 3, 4}`.
///
/// `p = 2` is the largest singular value (exact up to the eigensolver).
/// For `p ∈ {3, 4}` this runs multi-restart projected gradient ascent with
/// backtracking; the value is attained by the returned maximizer and is
/// treated downstream as an empirical measurement, not a certified bound.
pub fn operator_2p_norm(
    m: &DMatrix<f64>,
    p: PNorm,
    restarts: usize,
    seed: u64,
) -> Result<OperatorNormEstimate> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if let PNorm::Two = p {
        let svd = m.clone().svd(true, false);
        let (value, imax) = svd
            .singular_values
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .fold((f64::NEG_INFINITY, 0), |acc, (s, i)| if s > acc.0 { (s, i) } else { acc });
        let u = svd.u.expect("requested");
        return Ok(OperatorNormEstimate {
            value,
            argmax: u.column(imax).into_owned(),
        });
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    let pe = p.exponent();
    let n = m.nrows();
    let eval = |x: &DVector<f64>| -> f64 {
        let y = m.transpose() * x;
        y.iter().map(|t| t.abs().powf(pe)).sum::<f64>().powf(1.0 / pe)
    };
    let grad = |x: &DVector<f64>| -> DVector<f64> {
        // Gradient of ‖Mᵀx‖_p^p (same maximizer on the sphere, smoother).
        let y = m.transpose() * x;
        let g = y.map(|t| pe * t.abs().powf(pe - 1.0) * t.signum());
        m * g
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_x = DVector::zeros(n);
    for _ in 0..restarts {
        let mut x = random_unit(n, &mut rng);
        let mut fx = eval(&x);
        let mut step = 1.0;
        for _ in 0..200 {
            let g = grad(&x);
            let mut improved = false;
            // Backtracking line search on the sphere.
            let mut s = step;
            for _ in 0..40 {
                let cand = &x + &g * s;
                let norm = cand.norm();
                if norm > 0.0 {
                    let cand = cand / norm;
                    let fc = eval(&cand);
                    if fc > fx {
                        x = cand;
                        if (fc - fx).abs() < 1e-13 {
                            fx = fc;
                            improved = false;
                            break;
                        }
                        fx = fc;
                        improved = true;
                        step = s * 1.5;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if fx > best_val {
            best_val = fx;
            best_x = x;
        }
    }
    Ok(OperatorNormEstimate {
        value: best_val,
        argmax: best_x,
    })
}

/// Uniform random point on the unit sphere of dimension `n`.
pub fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}
