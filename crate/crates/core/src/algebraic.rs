//! Kernel-based constructions: assemble the linear operators on coefficient
//! vectors and read a basis off their SVD null spaces.
//!
//! Coefficient vectors are numbered by degree `k` first, then by component,
//! then by `ℓ` (see [`BasisNumbering`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coeff::AcousticParams;
use crate::error::{Error, Result};
use crate::linalg::{self, Kernel};
use crate::poly2d::{deriv_factor, GradedPoly2, QTFunction, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgebraicMethod {
    /// Kernel of the first-order operator `Q^F_d`.
    Coupled,
    /// Kernel of the second-order operator `Q^S_d`, velocities through `G_d`.
    Decoupled,
}

/// Numbering of `φ^k_{ℓ,i}`: grouped by `k`, then component `i`, then `ℓ`.
///
/// Component `i` is present at level `k` when `k ≤ max_degree[i]`; a scalar
/// space is the one-component case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BasisNumbering {
    pub max_degree: Vec<Option<usize>>,
    offsets: Vec<Vec<Option<usize>>>,
    len: usize,
}

impl BasisNumbering {
    pub fn new(max_degree: Vec<Option<usize>>) -> Self {
        let top = max_degree.iter().flatten().copied().max();
        let mut offsets = Vec::new();
        let mut len = 0;
        if let Some(top) = top {
            for k in 0..=top {
                let row = max_degree
                    .iter()
                    .map(|m| {
                        m.filter(|&m| k <= m).map(|_| {
                            let at = len;
                            len += k + 1;
                            at
                        })
                    })
                    .collect();
                offsets.push(row);
            }
        }
        Self {
            max_degree,
            offsets,
            len,
        }
    }

    pub fn scalar(max_degree: usize) -> Self {
        Self::new(vec![Some(max_degree)])
    }

    /// `(p, vx, vy)` with degrees `(d, d−1, d−1)`.
    pub fn qt_unknowns(d: usize) -> Self {
        Self::new(vec![Some(d), Some(d - 1), Some(d - 1)])
    }

    /// `(S3, S1, S2)` with degrees `(d−2, d−1, d−1)`.
    pub fn qt_residuals(d: usize) -> Self {
        Self::new(vec![Some(d - 2), Some(d - 1), Some(d - 1)])
    }

    /// `(vx, vy)` with degrees `(d−1, d−1)`.
    pub fn velocity(d: usize) -> Self {
        Self::new(vec![Some(d - 1), Some(d - 1)])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, k: usize, i: usize, l: usize) -> Option<usize> {
        if l > k {
            return None;
        }
        self.offsets.get(k)?.get(i).copied().flatten().map(|o| o + l)
    }

    /// `(k, i, ℓ)` in numbering order.
    pub fn entries(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.len);
        for (k, row) in self.offsets.iter().enumerate() {
            for (i, o) in row.iter().enumerate() {
                if o.is_some() {
                    out.extend((0..=k).map(|l| (k, i, l)));
                }
            }
        }
        out
    }

    /// Packs one polynomial per component.
    pub fn pack(&self, polys: &[&GradedPoly2]) -> DVector<C64> {
        let mut v = DVector::zeros(self.len);
        for (k, i, l) in self.entries() {
            v[self.index(k, i, l).unwrap()] = polys[i].coeff(k, l);
        }
        v
    }

    pub fn unpack(&self, v: &DVector<C64>, center: [f64; 2]) -> Vec<GradedPoly2> {
        self.max_degree
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let deg = m.map_or(-1, |m| m as i64);
                GradedPoly2::from_fn(center, deg, |k, l| v[self.index(k, i, l).unwrap()])
            })
            .collect()
    }
}

/// A sparse operator between numbered coefficient spaces.
#[derive(Clone, Debug)]
pub struct OpMatrix {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col, value)`; repeated positions add up.
    pub triplets: Vec<(usize, usize, C64)>,
    pub row_numbering: BasisNumbering,
    pub col_numbering: BasisNumbering,
}

impl OpMatrix {
    fn new(row_numbering: BasisNumbering, col_numbering: BasisNumbering) -> Self {
        Self {
            rows: row_numbering.len(),
            cols: col_numbering.len(),
            triplets: Vec::new(),
            row_numbering,
            col_numbering,
        }
    }

    fn push(&mut self, row: (usize, usize, usize), col: usize, value: C64) {
        let (k, i, l) = row;
        let r = self
            .row_numbering
            .index(k, i, l)
            .expect("stencil row outside the codomain numbering");
        self.triplets.push((r, col, value));
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.triplets {
            m[(r, c)] += v;
        }
        m
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.rows);
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    /// Text dump, one `row col re im` line per stored entry.
    pub fn triplet_text(&self) -> String {
        let mut s = format!("# {} x {}\n", self.rows, self.cols);
        for &(r, c, v) in &self.triplets {
            s.push_str(&format!("{r} {c} {:e} {:e}\n", v.re, v.im));
        }
        s
    }

    /// Sparsity pattern as a plain PBM image (1 = nonzero).
    pub fn sparsity_pbm(&self) -> String {
        let dense = self.to_dense();
        let mut s = format!("P1\n{} {}\n", self.cols, self.rows);
        for r in 0..self.rows {
            let line: Vec<&str> = (0..self.cols)
                .map(|c| if dense[(r, c)] != ZERO { "1" } else { "0" })
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

fn check_degree(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidDegree {
            degree: d as i64,
            reason: "quasi-Trefftz spaces need d >= 2",
        });
    }
    Ok(())
}

fn kappa_comps(kappa: &GradedPoly2, d: usize) -> Result<&[Vec<C64>]> {
    let comps = kappa.components();
    if comps.len() < d - 1 {
        return Err(Error::InvalidDegree {
            degree: kappa.degree(),
            reason: "coefficient series must reach order d-2",
        });
    }
    Ok(&comps[..d - 1])
}

/// `Q^F_d`: `(p, vx, vy) ↦ (T_{d−2} S3, S1, S2)` on coefficients.
pub fn assemble_qf(d: usize, kappa: &GradedPoly2, params: &AcousticParams) -> Result<OpMatrix> {
    check_degree(d)?;
    let kap = kappa_comps(kappa, d)?;
    let mut op = OpMatrix::new(BasisNumbering::qt_residuals(d), BasisNumbering::qt_unknowns(d));
    let src = -params.i_omega_over_rho();
    let diag = -params.i_omega_rho();
    for (col, (k, i, l)) in op.col_numbering.entries().into_iter().enumerate() {
        match i {
            0 => {
                if k + 2 <= d {
                    for (m, km) in kap.iter().enumerate().take(d - 1 - k) {
                        for (j, kj) in km.iter().enumerate() {
                            op.push((m + k, 0, j + l), col, src * kj);
                        }
                    }
                }
                if k > 0 && l > 0 {
                    op.push((k - 1, 1, l - 1), col, C64::new(l as f64, 0.0));
                }
                if k > l {
                    op.push((k - 1, 2, l), col, C64::new((k - l) as f64, 0.0));
                }
            }
            1 => {
                op.push((k, 1, l), col, diag);
                if l > 0 {
                    op.push((k - 1, 0, l - 1), col, C64::new(l as f64, 0.0));
                }
            }
            _ => {
                op.push((k, 2, l), col, diag);
                if k > l {
                    op.push((k - 1, 0, l), col, C64::new((k - l) as f64, 0.0));
                }
            }
        }
    }
    Ok(op)
}

/// `Q^S_d`: `p ↦ T_{d−2}(Δp + ω² κ p)` on coefficients.
pub fn assemble_qs(d: usize, kappa: &GradedPoly2, params: &AcousticParams) -> Result<OpMatrix> {
    check_degree(d)?;
    let kap = kappa_comps(kappa, d)?;
    let mut op = OpMatrix::new(BasisNumbering::scalar(d - 2), BasisNumbering::scalar(d));
    let w2 = params.omega_sq();
    for (col, (k, _, l)) in op.col_numbering.entries().into_iter().enumerate() {
        if k >= 2 && l >= 2 {
            op.push((k - 2, 0, l - 2), col, C64::new((l * (l - 1)) as f64, 0.0));
        }
        if k >= l + 2 {
            op.push((k - 2, 0, l), col, C64::new(((k - l) * (k - l - 1)) as f64, 0.0));
        }
        if k + 2 <= d {
            for (m, km) in kap.iter().enumerate().take(d - 1 - k) {
                for (j, kj) in km.iter().enumerate() {
                    op.push((m + k, 0, j + l), col, w2 * kj);
                }
            }
        }
    }
    Ok(op)
}

/// `G_d`: `p ↦ ∇p / (iωρ)`, stacked `(vx, vy)` coefficients.
pub fn assemble_g(d: usize, params: &AcousticParams) -> Result<OpMatrix> {
    check_degree(d)?;
    let mut op = OpMatrix::new(BasisNumbering::velocity(d), BasisNumbering::scalar(d));
    let inv = params.inv_i_omega_rho();
    for (col, (k, _, l)) in op.col_numbering.entries().into_iter().enumerate() {
        if l > 0 {
            op.push((k - 1, 0, l - 1), col, deriv_factor(l, inv));
        }
        if k > l {
            op.push((k - 1, 1, l), col, deriv_factor(k - l, inv));
        }
    }
    Ok(op)
}

/// Kernel of an assembled operator through a dense SVD.
pub fn kernel_basis(m: &OpMatrix, rank_tol: f64) -> Kernel {
    linalg::kernel(&m.to_dense(), rank_tol)
}

/// Default rank tolerance for an operator's shape.
pub fn default_rank_tol(m: &OpMatrix) -> f64 {
    linalg::default_rank_tol(m.rows, m.cols)
}

/// Coefficient vector of a function in the `(p, vx, vy)` numbering.
pub fn pack_qt(f: &QTFunction) -> DVector<C64> {
    BasisNumbering::qt_unknowns(f.d).pack(&[&f.p, &f.vx, &f.vy])
}

pub fn unpack_qt(d: usize, v: &DVector<C64>, center: [f64; 2]) -> Result<QTFunction> {
    let mut polys = BasisNumbering::qt_unknowns(d).unpack(v, center).into_iter();
    let (p, vx, vy) = (polys.next().unwrap(), polys.next().unwrap(), polys.next().unwrap());
    QTFunction::new(d, p, vx, vy)
}

/// Basis plus the spectrum of the operator whose kernel produced it.
#[derive(Clone, Debug)]
pub struct AlgebraicBasis {
    pub functions: Vec<QTFunction>,
    pub kernel_dim: usize,
    pub rank: usize,
    pub sigma_max: f64,
    pub sigma_min_nonzero: f64,
}

/// Builds all `2d+1` basis functions at once from an SVD kernel.
///
/// `rank_tol` of `None` selects [`default_rank_tol`].
pub fn construct_basis_algebraic(
    method: AlgebraicMethod,
    d: usize,
    kappa: &GradedPoly2,
    params: &AcousticParams,
    rank_tol: Option<f64>,
) -> Result<AlgebraicBasis> {
    let center = kappa.center();
    let (op, name) = match method {
        AlgebraicMethod::Coupled => (assemble_qf(d, kappa, params)?, "Q^F"),
        AlgebraicMethod::Decoupled => (assemble_qs(d, kappa, params)?, "Q^S"),
    };
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(&op));
    let ker = kernel_basis(&op, tol);
    if ker.dim() != 2 * d + 1 {
        return Err(Error::RankDeficiency {
            operator: name,
            degree: d,
            expected: 2 * d + 1,
            found: ker.dim(),
        });
    }
    let functions = match method {
        AlgebraicMethod::Coupled => ker
            .vectors
            .iter()
            .map(|v| unpack_qt(d, v, center))
            .collect::<Result<Vec<_>>>()?,
        AlgebraicMethod::Decoupled => {
            let g = assemble_g(d, params)?;
            let pn = &op.col_numbering;
            ker.vectors
                .iter()
                .map(|v| {
                    let p = pn.unpack(v, center).pop().unwrap();
                    let mut vel = g.row_numbering.unpack(&g.apply(v), center).into_iter();
                    QTFunction::new(d, p, vel.next().unwrap(), vel.next().unwrap())
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(AlgebraicBasis {
        functions,
        kernel_dim: ker.dim(),
        rank: ker.rank,
        sigma_max: ker.singular_values[0],
        sigma_min_nonzero: ker.sigma_min_nonzero(),
    })
}

/// Kernel dimensions of `Q^F_d` and `Q^S_d` at one point.
pub fn kernel_dims(d: usize, kappa: &GradedPoly2, params: &AcousticParams) -> Result<(usize, usize)> {
    let qf = assemble_qf(d, kappa, params)?;
    let qs = assemble_qs(d, kappa, params)?;
    let kf = kernel_basis(&qf, default_rank_tol(&qf)).dim();
    let ks = kernel_basis(&qs, default_rank_tol(&qs)).dim();
    Ok((kf, ks))
}

/// `(T_{d−2} S3, S1, S2)` of `f`, evaluated with polynomial arithmetic and
/// packed in the residual numbering. Reference for `Q^F_d`.
pub fn qf_direct(f: &QTFunction, kappa: &GradedPoly2, params: &AcousticParams) -> Result<DVector<C64>> {
    let d = f.d;
    let div = GradedPoly2::divergence(&f.vx, &f.vy)?;
    let s3 = kappa
        .truncate(d as i64 - 2)
        .mul(&f.p)
        .scale(-params.i_omega_over_rho())
        .add(&div)
        .truncate(d as i64 - 2);
    let (gx, gy) = f.p.grad();
    let s1 = gx.sub(&f.vx.scale(params.i_omega_rho()));
    let s2 = gy.sub(&f.vy.scale(params.i_omega_rho()));
    Ok(BasisNumbering::qt_residuals(d).pack(&[&s3, &s1, &s2]))
}
