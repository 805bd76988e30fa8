//! Dense complex linear algebra on top of nalgebra: SVD kernels, QR least
//! squares and subspace projections.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly2d::C64;

/// Kernel of a matrix from its SVD, with the spectrum that decided the rank.
#[derive(Clone, Debug)]
pub struct Kernel {
    /// Orthonormal kernel vectors (columns `r+1..n` of `V`).
    pub vectors: Vec<DVector<C64>>,
    /// Singular values in decreasing order, padded with zeros to `n`.
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl Kernel {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Smallest singular value counted in the rank (0 if the rank is 0).
    pub fn sigma_min_nonzero(&self) -> f64 {
        self.rank.checked_sub(1).map_or(0.0, |i| self.singular_values[i])
    }
}

/// `max(rows, cols) · ε · 64`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * 64.0
}

/// Kernel of `m`: the rank counts singular values above `rank_tol · σ_1`.
///
/// Matrices whose entries are each purely real or purely imaginary, in a
/// pattern that factors as `D_r M D_c` with unit diagonal phases, are reduced
/// to the real matrix `M` (the phases are powers of `i`, so this is exact).
/// Wide matrices of full row rank go through a QR of `mᴴ`: the kernel is
/// spanned by the trailing columns of its full `Q`, and only the small
/// triangular factor needs an SVD. Everything else takes a full SVD.
pub fn kernel(m: &DMatrix<C64>, rank_tol: f64) -> Kernel {
    if m.ncols() == 0 {
        return Kernel {
            vectors: Vec::new(),
            singular_values: Vec::new(),
            rank: 0,
        };
    }
    match phase_split(m) {
        Some((real, col_phase)) => {
            let (vectors, singular_values, rank) = kernel_any(&real, rank_tol);
            let vectors = vectors
                .into_iter()
                .map(|v| DVector::from_fn(v.len(), |j, _| C64::new(v[j], 0.0) * col_phase[j].conj()))
                .collect();
            Kernel {
                vectors,
                singular_values,
                rank,
            }
        }
        None => {
            let (vectors, singular_values, rank) = kernel_any(m, rank_tol);
            Kernel {
                vectors,
                singular_values,
                rank,
            }
        }
    }
}

/// Writes `m = D_r M D_c` with `M` real and `D_r`, `D_c` diagonal powers of
/// `i`; returns `M` and the diagonal of `D_c`.
fn phase_split(m: &DMatrix<C64>) -> Option<(DMatrix<f64>, Vec<C64>)> {
    let (rows, cols) = m.shape();
    // Parities: a node's phase is i^parity; entry (r, c) needs
    // parity(r) + parity(c) ≡ [entry is imaginary] (mod 2).
    let mut parity: Vec<Option<u8>> = vec![None; rows + cols];
    let mut adj: Vec<Vec<(usize, u8)>> = vec![Vec::new(); rows + cols];
    for c in 0..cols {
        for r in 0..rows {
            let z = m[(r, c)];
            let odd = match (z.re != 0.0, z.im != 0.0) {
                (false, false) => continue,
                (true, false) => 0,
                (false, true) => 1,
                (true, true) => return None,
            };
            adj[r].push((rows + c, odd));
            adj[rows + c].push((r, odd));
        }
    }
    let mut stack = Vec::new();
    for start in 0..rows + cols {
        if parity[start].is_some() {
            continue;
        }
        parity[start] = Some(0);
        stack.push(start);
        while let Some(u) = stack.pop() {
            let pu = parity[u].unwrap();
            for &(w, odd) in &adj[u] {
                let want = pu ^ odd;
                match parity[w] {
                    None => {
                        parity[w] = Some(want);
                        stack.push(w);
                    }
                    Some(p) if p != want => return None,
                    Some(_) => {}
                }
            }
        }
    }
    let phase = |k: usize| if parity[k] == Some(1) { C64::i() } else { C64::new(1.0, 0.0) };
    let col_phase: Vec<C64> = (0..cols).map(|c| phase(rows + c)).collect();
    let real = DMatrix::from_fn(rows, cols, |r, c| (m[(r, c)] / (phase(r) * col_phase[c])).re);
    Some((real, col_phase))
}

type KernelParts<T> = (Vec<DVector<T>>, Vec<f64>, usize);

fn kernel_any<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, rank_tol: f64) -> KernelParts<T> {
    let (rows, n) = m.shape();
    if rows > 0 && rows < n {
        if let Some(k) = kernel_full_row_rank(m, rank_tol) {
            return k;
        }
    }
    kernel_svd(m, rank_tol)
}

fn sorted_singular_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn kernel_full_row_rank<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, rank_tol: f64) -> Option<KernelParts<T>> {
    let (rows, n) = m.shape();
    let qr = m.adjoint().qr();
    let mut singular_values = sorted_singular_values(&qr.r());
    let s1 = singular_values[0];
    if s1 == 0.0 || singular_values.iter().any(|&s| s <= rank_tol * s1) {
        return None;
    }
    // q_tr_mul turns the identity into Qᴴ; its rows past `rows` are the
    // conjugated kernel vectors.
    let mut qh = DMatrix::<T>::identity(n, n);
    qr.q_tr_mul(&mut qh);
    let vectors = (rows..n).map(|i| qh.row(i).adjoint()).collect();
    singular_values.resize(n, 0.0);
    Some((vectors, singular_values, rows))
}

fn kernel_svd<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, rank_tol: f64) -> KernelParts<T> {
    let (rows, n) = m.shape();
    // nalgebra only returns the thin factor, so wide matrices get zero rows
    // appended to expose all n right singular vectors.
    let square = if rows < n {
        let mut s = DMatrix::zeros(n, n);
        s.rows_mut(0, rows).copy_from(m);
        s
    } else {
        m.clone()
    };
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut singular_values: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    singular_values.resize(n, 0.0);
    let s1 = singular_values[0];
    let rank = if s1 == 0.0 {
        0
    } else {
        singular_values.iter().filter(|&&s| s > rank_tol * s1).count()
    };
    let vectors = if rank == 0 {
        (0..n)
            .map(|j| {
                let mut e = DVector::zeros(n);
                e[j] = T::one();
                e
            })
            .collect()
    } else {
        order[rank..].iter().map(|&i| v_t.row(i).adjoint()).collect()
    };
    (vectors, singular_values, rank)
}

/// Singular values of `m`, decreasing.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    sorted_singular_values(m)
}

/// Least-squares solution of `a x ≈ b` by Householder QR.
///
/// Fails with a conditioning error when `σ_min / σ_max` of `a` drops below
/// `cond_tol`.
pub fn lstsq(a: &DMatrix<C64>, b: &DVector<C64>, cond_tol: f64) -> Result<DVector<C64>> {
    let s = singular_values(a);
    let (smax, smin) = (s[0], *s.last().unwrap_or(&0.0));
    if a.nrows() < a.ncols() || smax == 0.0 || smin < cond_tol * smax {
        return Err(Error::Conditioning {
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    let qr = a.clone().qr();
    let rhs = qr.q().adjoint() * b;
    qr.r().solve_upper_triangular(&rhs).ok_or(Error::Conditioning {
        sigma_min: smin,
        sigma_max: smax,
    })
}

/// Largest relative residual of projecting each column of `b` onto the
/// column span of `a`: `max_j ‖(I − P_a) b_j‖ / ‖b_j‖`.
pub fn projection_residual(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let q = a.clone().qr().q();
    let mut worst: f64 = 0.0;
    for col in b.column_iter() {
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let r = &col - &q * (q.adjoint() * &col);
        worst = worst.max(r.norm() / norm);
    }
    worst
}
