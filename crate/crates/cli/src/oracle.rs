//! Grid-restricted nuclear-norm oracle for 2×2×2 tensors.
//!
//! Each sphere is a circle, so rank-one atoms are parameterized by three
//! angles. Restricting the angles to a uniform grid turns the atomic-norm
//! program into a finite LP
//!
//! `min Σ λ  s.t.  Σ λ·atom(θa, θb, θc) = T,  λ ≥ 0`
//!
//! with 8 equality rows and `steps³` columns, solved exactly by a revised
//! simplex with column generation: the pricing step maximizes `⟨y, atom⟩`
//! over the whole grid in closed form per (θa, θb) pair, since the best
//! third angle for a fixed pair is a grid neighbor of `atan2(g₂, g₁)`.
//! The ratio test is lexicographic, so degenerate bases cannot cycle.
//!
//! When the step count is a multiple of 4 the grid contains the signed
//! coordinate atoms, whose columns are the ±unit vectors; they form an
//! immediately feasible starting basis. Otherwise a phase-1 round with
//! artificial columns runs first.
//!
//! The value is an upper bound on the true nuclear norm and is
//! non-increasing under grid refinement (doubling the step count keeps all
//! old atoms available).

use nalgebra::{DMatrix, DVector};
use polyad::{Error, Result, Tensor3};
use serde::Serialize;

const PRICE_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;
/// Degenerate pivots tolerated without objective progress before the current
/// basic solution is accepted as optimal (guards against dual-noise stalls
/// on massively degenerate optimal faces).
const STALL_LIMIT: usize = 512;

/// An active atom of the oracle solution.
#[derive(Debug, Clone, Serialize)]
pub struct OracleAtom {
    pub theta: (f64, f64, f64),
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub angular_steps: usize,
    pub atoms: Vec<OracleAtom>,
    pub pivots: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColumnId {
    Artificial(usize),
    Atom { ia: usize, ib: usize, ic: usize },
}

struct Grid {
    steps: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Grid {
    fn new(steps: usize) -> Self {
        let cos = (0..steps)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / steps as f64).cos())
            .collect();
        let sin = (0..steps)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / steps as f64).sin())
            .collect();
        Self { steps, cos, sin }
    }

    fn angle(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * i as f64 / self.steps as f64
    }

    /// Constraint column of an atom, tensor entries in row-major order.
    fn column(&self, ia: usize, ib: usize, ic: usize) -> DVector<f64> {
        let u = [self.cos[ia], self.sin[ia]];
        let v = [self.cos[ib], self.sin[ib]];
        let w = [self.cos[ic], self.sin[ic]];
        let mut col = DVector::zeros(8);
        let mut idx = 0;
        for ui in u {
            for vj in v {
                for wk in w {
                    col[idx] = ui * vj * wk;
                    idx += 1;
                }
            }
        }
        col
    }

    /// Maximize ⟨y, atom(·)⟩ over the whole grid.
    fn price(&self, y: &DVector<f64>) -> (f64, usize, usize, usize) {
        let mut best = (f64::NEG_INFINITY, 0usize, 0usize, 0usize);
        let h = 2.0 * std::f64::consts::PI / self.steps as f64;
        for ia in 0..self.steps {
            let (ca, sa) = (self.cos[ia], self.sin[ia]);
            // m[j][k] = Σ_i y_{ijk} u_i with y row-major.
            let m = [
                [ca * y[0] + sa * y[4], ca * y[1] + sa * y[5]],
                [ca * y[2] + sa * y[6], ca * y[3] + sa * y[7]],
            ];
            for ib in 0..self.steps {
                let (cb, sb) = (self.cos[ib], self.sin[ib]);
                let g = [cb * m[0][0] + sb * m[1][0], cb * m[0][1] + sb * m[1][1]];
                let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
                if gn <= best.0 {
                    // The continuous optimum over the third angle is ‖g‖;
                    // this pair cannot beat the incumbent.
                    continue;
                }
                let phi = g[1].atan2(g[0]);
                let base = (phi / h).floor();
                for cand in [base, base + 1.0] {
                    let ic = cand.rem_euclid(self.steps as f64) as usize % self.steps;
                    let val = g[0] * self.cos[ic] + g[1] * self.sin[ic];
                    if val > best.0 {
                        best = (val, ia, ib, ic);
                    }
                }
            }
        }
        best
    }
}

struct Simplex {
    grid: Grid,
    b: DVector<f64>,
    ids: Vec<ColumnId>,
    cols: Vec<DVector<f64>>,
    pivots: usize,
}

impl Simplex {
    fn basis_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(8, 8);
        for (j, c) in self.cols.iter().enumerate() {
            m.set_column(j, c);
        }
        m
    }

    fn basis_inverse(&self) -> Result<DMatrix<f64>> {
        self.basis_matrix()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular LP basis".into()))
    }

    fn cost_vector(&self, phase1: bool) -> DVector<f64> {
        DVector::from_fn(8, |i, _| match self.ids[i] {
            ColumnId::Artificial(_) => {
                if phase1 {
                    1.0
                } else {
                    // Zero-level artificials may survive phase 1 on degenerate
                    // bases; a large cost keeps them from carrying weight.
                    1e9
                }
            }
            ColumnId::Atom { .. } => {
                if phase1 {
                    0.0
                } else {
                    1.0
                }
            }
        })
    }

    /// Lexicographic ratio test: among rows with d_i > tol, minimize
    /// (x_i/d_i, row_i(B⁻¹)/d_i) lexicographically. No basis can repeat.
    fn leaving_row(&self, x: &DVector<f64>, d: &DVector<f64>, binv: &DMatrix<f64>) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..8 {
            if d[i] <= PIVOT_TOL {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(j) => {
                    let mut cmp = (x[i] / d[i]).partial_cmp(&(x[j] / d[j])).unwrap();
                    if cmp == std::cmp::Ordering::Equal {
                        for k in 0..8 {
                            cmp = (binv[(i, k)] / d[i])
                                .partial_cmp(&(binv[(j, k)] / d[j]))
                                .unwrap();
                            if cmp != std::cmp::Ordering::Equal {
                                break;
                            }
                        }
                    }
                    if cmp == std::cmp::Ordering::Less {
                        best = Some(i);
                    }
                }
            }
        }
        best
    }

    /// Run simplex until the pricing step finds no improving atom.
    fn optimize(&mut self, phase1: bool) -> Result<()> {
        let mut prev_obj = f64::INFINITY;
        let mut stalled = 0usize;
        loop {
            let binv = self.basis_inverse()?;
            let mut x = &binv * &self.b;
            for xi in x.iter_mut() {
                // Basic levels are nonnegative up to rounding.
                if *xi < 0.0 {
                    *xi = 0.0;
                }
            }
            let cb = self.cost_vector(phase1);
            let y = binv.transpose() * &cb;
            let obj = cb.dot(&x);
            if obj < prev_obj - 1e-12 {
                prev_obj = obj;
                stalled = 0;
            } else {
                stalled += 1;
            }

            if phase1 {
                let art: f64 = (0..8)
                    .filter(|&i| matches!(self.ids[i], ColumnId::Artificial(_)))
                    .map(|i| x[i])
                    .sum();
                if art.abs() < 1e-10 {
                    return Ok(());
                }
            }

            let (val, ia, ib, ic) = self.grid.price(&y);
            let reduced = if phase1 { -val } else { 1.0 - val };
            if reduced >= -PRICE_TOL || (!phase1 && stalled > STALL_LIMIT) {
                if phase1 {
                    return Err(Error::InvalidArgument(
                        "grid LP infeasible; the angular grid does not span the tensor space".into(),
                    ));
                }
                return Ok(());
            }
            let a = self.grid.column(ia, ib, ic);
            let d = &binv * &a;
            let Some(li) = self.leaving_row(&x, &d, &binv) else {
                return Err(Error::InvalidArgument("grid LP unbounded".into()));
            };
            self.ids[li] = ColumnId::Atom { ia, ib, ic };
            self.cols[li] = a;
            self.pivots += 1;
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Divergence {
                    iteration: self.pivots,
                    detail: "simplex pivot limit exceeded".into(),
                });
            }
        }
    }
}

/// Solve the grid-restricted atomic-norm LP for a 2×2×2 tensor.
pub fn nuclear_norm_oracle(t: &Tensor3, angular_steps: usize) -> Result<OracleResult> {
    if t.dims() != (2, 2, 2) {
        return Err(Error::DimMismatch(format!(
            "oracle requires a 2x2x2 tensor, got {:?}",
            t.dims()
        )));
    }
    if angular_steps < 180 {
        return Err(Error::InvalidArgument("angular_steps must be >= 180".into()));
    }
    let grid = Grid::new(angular_steps);
    let b = DVector::from_column_slice(t.data());

    let mut simplex = if angular_steps % 4 == 0 {
        // The grid contains u(0) = e₁, u(q) = e₂ and their negations at
        // +steps/2, so the signed coordinate atoms form a feasible basis:
        // column (i,j,k) is ±e_{(i,j,k)} with the sign of b.
        let q = angular_steps / 4;
        let half = angular_steps / 2;
        let mut ids = Vec::with_capacity(8);
        let mut cols = Vec::with_capacity(8);
        let mut row = 0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut ia = i * q;
                    if b[row] < 0.0 {
                        ia = (ia + half) % angular_steps;
                    }
                    let id = ColumnId::Atom {
                        ia,
                        ib: j * q,
                        ic: k * q,
                    };
                    cols.push(grid.column(ia, j * q, k * q));
                    ids.push(id);
                    row += 1;
                }
            }
        }
        Simplex {
            grid,
            b,
            ids,
            cols,
            pivots: 0,
        }
    } else {
        let ids = (0..8).map(ColumnId::Artificial).collect();
        let cols = (0..8)
            .map(|i| {
                let mut c = DVector::zeros(8);
                c[i] = if b[i] >= 0.0 { 1.0 } else { -1.0 };
                c
            })
            .collect();
        let mut s = Simplex {
            grid,
            b,
            ids,
            cols,
            pivots: 0,
        };
        s.optimize(true)?;
        s
    };
    simplex.optimize(false)?;

    let binv = simplex.basis_inverse()?;
    let x = &binv * &simplex.b;
    let mut value = 0.0;
    let mut atoms = Vec::new();
    for i in 0..8 {
        match simplex.ids[i] {
            ColumnId::Atom { ia, ib, ic } if x[i] > 1e-12 => {
                value += x[i];
                atoms.push(OracleAtom {
                    theta: (
                        simplex.grid.angle(ia),
                        simplex.grid.angle(ib),
                        simplex.grid.angle(ic),
                    ),
                    weight: x[i],
                });
            }
            ColumnId::Artificial(_) if x[i].abs() > 1e-8 => {
                return Err(Error::InvalidArgument(
                    "artificial variable stuck in the optimal basis".into(),
                ));
            }
            _ => {}
        }
    }
    atoms.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap_or(std::cmp::Ordering::Equal));
    Ok(OracleResult {
        value,
        angular_steps: simplex.grid.steps,
        atoms,
        pivots: simplex.pivots,
    })
}
