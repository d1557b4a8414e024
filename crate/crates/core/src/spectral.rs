//! Dense symmetric eigen-solvers and matrix functions.
//!
//! Everything here is a pure function of its input. Eigenpairs are returned in
//! non-increasing eigenvalue order, and each eigenvector is sign-normalized so
//! that its largest-magnitude entry is positive (first such entry on ties).
//! Inside a cluster of equal eigenvalues the basis is whatever the underlying
//! QR iteration produced; callers that care only about subspaces should
//! compare projectors.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{MmmlError, Result};

/// Relative tolerance on `max |A - Aᵀ|` accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues at or below `SPD_FLOOR * λ_max` are rejected by [`matrix_log_spd`].
pub const SPD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    /// Non-increasing.
    pub eigenvalues: DVector<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let fl = f(lambda);
            scaled.column_mut(j).scale_mut(fl);
        }
        symmetrize(&(scaled * v.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(|l| l)
    }
}

/// Largest absolute entry of `A - Aᵀ`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)]) * 0.5)
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(MmmlError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(MmmlError::NonFinite);
    }
    let scale = a.amax();
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(MmmlError::NotSymmetric {
            max_asymmetry: asym,
            tolerance: SYMMETRY_TOLERANCE * scale,
        });
    }
    Ok(())
}

/// Flip columns so that the largest-magnitude entry of each is positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEigen> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEigen {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let raw = SymmetricEigen::new(symmetrize(a));

    // Stable sort keeps the solver's order inside tied clusters.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw.eigenvalues[j].total_cmp(&raw.eigenvalues[i]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| raw.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &raw.eigenvectors.column(src));
    }
    normalize_signs(&mut eigenvectors);
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Principal matrix logarithm of an SPD matrix.
pub fn matrix_log_spd(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(c)?;
    if eig.eigenvalues.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let largest = eig.eigenvalues[0];
    let smallest = eig.eigenvalues[eig.eigenvalues.len() - 1];
    let floor = SPD_FLOOR * largest.max(0.0);
    if largest <= 0.0 || smallest <= floor {
        return Err(MmmlError::NotPositiveDefinite {
            eigenvalue: smallest,
            floor,
        });
    }
    Ok(eig.reconstruct_with(f64::ln))
}

/// Matrix exponential of a symmetric matrix.
pub fn matrix_exp_sym(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(sym_eig(a)?.reconstruct_with(f64::exp))
}

/// Orthonormal basis of the invariant subspace of the `q` largest eigenvalues.
pub fn top_q_eigvecs(c: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    let d = c.nrows();
    if q == 0 || q > d {
        return Err(MmmlError::InvalidDimension(format!(
            "subspace dimension q={q} must lie in 1..={d}"
        )));
    }
    let eig = sym_eig(c)?;
    Ok(eig.eigenvectors.columns(0, q).into_owned())
}

#[derive(Debug, Clone)]
pub struct GenEigen {
    /// `N × k`, columns satisfy `eᵀ W e = 1`.
    pub vectors: DMatrix<f64>,
    /// Non-increasing.
    pub values: DVector<f64>,
}

/// Leading `k` eigenpairs of the symmetric-definite pencil `B e = λ W e`.
///
/// Solved as the standard problem on `L⁻¹ B L⁻ᵀ` with `W = L Lᵀ`, then mapped
/// back by `e = L⁻ᵀ v`.
pub fn solve_gen_eig(b: &DMatrix<f64>, w: &DMatrix<f64>, k: usize) -> Result<GenEigen> {
    check_symmetric(b)?;
    check_symmetric(w)?;
    let n = b.nrows();
    if w.nrows() != n {
        return Err(MmmlError::DimensionMismatch {
            context: "generalized eigenproblem",
            expected: n,
            found: w.nrows(),
        });
    }
    if k == 0 || k > n {
        return Err(MmmlError::InvalidDimension(format!(
            "requested {k} generalized eigenpairs from a {n}x{n} pencil"
        )));
    }
    let chol = Cholesky::new(symmetrize(w)).ok_or(MmmlError::NeedsRegularization)?;
    let l = chol.l();
    let lower_solve = |m: &DMatrix<f64>| {
        l.solve_lower_triangular(m)
            .ok_or_else(|| MmmlError::Numerical("singular Cholesky factor".into()))
    };
    // L⁻¹ (L⁻¹ B)ᵀ = L⁻¹ B L⁻ᵀ since B is symmetric.
    let half = lower_solve(&symmetrize(b))?;
    let reduced = symmetrize(&lower_solve(&half.transpose())?);
    let eig = sym_eig(&reduced)?;

    let lt = l.transpose();
    let top = eig.eigenvectors.columns(0, k).into_owned();
    let mut vectors = lt
        .solve_upper_triangular(&top)
        .ok_or_else(|| MmmlError::Numerical("singular Cholesky factor".into()))?;
    normalize_signs(&mut vectors);
    let values = DVector::from_iterator(k, eig.eigenvalues.iter().take(k).copied());
    Ok(GenEigen { vectors, values })
}
