//! Riemannian distances and kernels on the SPD and Grassmann manifolds, and
//! Gram-matrix assembly.
//!
//! Both kernels are evaluated so that `k(a, b)` and `k(b, a)` are bitwise
//! equal. A probe kernel vector for a gallery member therefore reproduces the
//! corresponding Gram column exactly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{MmmlError, Result};
use crate::set_model::{GrassmannPoint, SpdPoint};
use crate::spectral::{sym_eig, symmetrize};

/// Allowed negative spectrum of a Gram matrix, relative to its largest eigenvalue.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// `tr(log C_i · log C_j)` on SPD points.
    LogEuclidean,
    /// `‖Y_iᵀ Y_j‖_F²` on Grassmann points.
    Projection,
}

impl KernelKind {
    pub fn code(self) -> u64 {
        match self {
            KernelKind::LogEuclidean => 0,
            KernelKind::Projection => 1,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(KernelKind::LogEuclidean),
            1 => Some(KernelKind::Projection),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::LogEuclidean => "log_euclidean",
            KernelKind::Projection => "projection",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = MmmlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_euclidean" | "log" | "spd" => Ok(KernelKind::LogEuclidean),
            "projection" | "grassmann" => Ok(KernelKind::Projection),
            _ => Err(MmmlError::Config(format!("unknown kernel '{s}'"))),
        }
    }
}

/// A manifold point with a positive-definite kernel.
pub trait KernelPoint: Sync {
    const KIND: KernelKind;

    fn kernel(&self, other: &Self) -> Result<f64>;
}

impl KernelPoint for SpdPoint {
    const KIND: KernelKind = KernelKind::LogEuclidean;

    fn kernel(&self, other: &Self) -> Result<f64> {
        log_euclidean_kernel(self, other)
    }
}

impl KernelPoint for GrassmannPoint {
    const KIND: KernelKind = KernelKind::Projection;

    fn kernel(&self, other: &Self) -> Result<f64> {
        projection_kernel(self, other)
    }
}

fn same_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(MmmlError::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_grassmann_pair(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<()> {
    same_dim("grassmann ambient dimension", a.dim(), b.dim())?;
    same_dim("grassmann subspace dimension", a.q(), b.q())
}

/// Log-Euclidean distance `‖log A − log B‖_F`.
pub fn led_distance(a: &SpdPoint, b: &SpdPoint) -> Result<f64> {
    same_dim("spd dimension", a.dim(), b.dim())?;
    Ok(a.log_c()
        .iter()
        .zip(b.log_c().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// `tr(log A · log B)`, evaluated as the elementwise inner product of the two
/// symmetric logs.
pub fn log_euclidean_kernel(a: &SpdPoint, b: &SpdPoint) -> Result<f64> {
    same_dim("spd dimension", a.dim(), b.dim())?;
    Ok(a.log_c()
        .iter()
        .zip(b.log_c().iter())
        .map(|(x, y)| x * y)
        .sum())
}

/// Sum of squares of a square matrix, accumulated in an order that is
/// invariant under transposition.
fn transpose_invariant_sq_norm(m: &DMatrix<f64>) -> f64 {
    let q = m.nrows();
    let mut total = 0.0;
    for i in 0..q {
        total += m[(i, i)] * m[(i, i)];
        for j in (i + 1)..q {
            total += m[(i, j)] * m[(i, j)] + m[(j, i)] * m[(j, i)];
        }
    }
    total
}

/// `‖(I − Y_a Y_aᵀ) Y_b‖_F²`.
fn residual_sq(a: &GrassmannPoint, b: &GrassmannPoint) -> f64 {
    let overlap = a.basis().transpose() * b.basis();
    (b.basis() - a.basis() * overlap).norm_squared()
}

/// Projection metric `2^{-1/2} ‖Y_a Y_aᵀ − Y_b Y_bᵀ‖_F`.
///
/// Evaluated as `‖(I − P_a) Y_b‖_F`, which equals `√(q − ‖Y_aᵀ Y_b‖_F²)` for
/// orthonormal bases without the cancellation that form suffers near zero.
/// Both directions are averaged so the result is exactly symmetric.
pub fn projection_distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    check_grassmann_pair(a, b)?;
    let sq = 0.5 * (residual_sq(a, b) + residual_sq(b, a));
    Ok(sq.max(0.0).sqrt())
}

/// Projection kernel `‖Y_aᵀ Y_b‖_F²`.
pub fn projection_kernel(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    check_grassmann_pair(a, b)?;
    Ok(transpose_invariant_sq_norm(
        &(a.basis().transpose() * b.basis()),
    ))
}

/// Fails unless `min eig ≥ −PSD_TOLERANCE · max eig`.
pub fn check_psd(k: &DMatrix<f64>) -> Result<()> {
    let eig = sym_eig(k)?;
    if eig.eigenvalues.is_empty() {
        return Ok(());
    }
    let largest = eig.eigenvalues[0];
    let smallest = eig.eigenvalues[eig.eigenvalues.len() - 1];
    if smallest < -PSD_TOLERANCE * largest.max(0.0) {
        return Err(MmmlError::Numerical(format!(
            "Gram matrix is not PSD: smallest eigenvalue {smallest:e}, largest {largest:e}"
        )));
    }
    Ok(())
}

/// Pairwise kernel matrix over `points`, symmetrized and checked PSD.
pub fn gram_matrix<P: KernelPoint>(points: &[P]) -> Result<DMatrix<f64>> {
    let n = points.len();
    let entries: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (j, i) = (idx / n, idx % n);
            points[i].kernel(&points[j])
        })
        .collect::<Result<_>>()?;
    let k = symmetrize(&DMatrix::from_vec(n, n, entries));
    check_psd(&k)?;
    Ok(k)
}

/// Kernel values between one probe and every gallery point.
pub fn kernel_vector<P: KernelPoint>(probe: &P, gallery: &[P]) -> Result<DVector<f64>> {
    let values: Vec<f64> = gallery
        .par_iter()
        .map(|g| probe.kernel(g))
        .collect::<Result<_>>()?;
    Ok(DVector::from_vec(values))
}

/// The per-model training Gram matrices over a shared gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStack {
    grams: Vec<DMatrix<f64>>,
    kinds: Vec<KernelKind>,
    set_ids: Vec<String>,
}

impl KernelStack {
    pub fn new(
        grams: Vec<DMatrix<f64>>,
        kinds: Vec<KernelKind>,
        set_ids: Vec<String>,
    ) -> Result<Self> {
        if grams.is_empty() {
            return Err(MmmlError::Config(
                "kernel stack needs at least one Gram".into(),
            ));
        }
        same_dim("kernel kinds", grams.len(), kinds.len())?;
        let n = set_ids.len();
        let mut checked = Vec::with_capacity(grams.len());
        for g in grams {
            if g.nrows() != g.ncols() {
                return Err(MmmlError::NotSquare {
                    rows: g.nrows(),
                    cols: g.ncols(),
                });
            }
            same_dim("gram size", n, g.nrows())?;
            let g = symmetrize(&g);
            check_psd(&g)?;
            checked.push(g);
        }
        Ok(KernelStack {
            grams: checked,
            kinds,
            set_ids,
        })
    }

    /// Builds the two-model stack (log-Euclidean on SPD, projection on
    /// Grassmann) over a gallery.
    pub fn from_points(
        spd: &[SpdPoint],
        grassmann: &[GrassmannPoint],
        kinds: &[KernelKind],
        set_ids: Vec<String>,
    ) -> Result<Self> {
        let grams = kinds
            .iter()
            .map(|kind| match kind {
                KernelKind::LogEuclidean => gram_matrix(spd),
                KernelKind::Projection => gram_matrix(grassmann),
            })
            .collect::<Result<Vec<_>>>()?;
        KernelStack::new(grams, kinds.to_vec(), set_ids)
    }

    pub fn grams(&self) -> &[DMatrix<f64>] {
        &self.grams
    }

    pub fn kinds(&self) -> &[KernelKind] {
        &self.kinds
    }

    pub fn set_ids(&self) -> &[String] {
        &self.set_ids
    }

    /// Number of gallery sets `N`.
    pub fn len(&self) -> usize {
        self.set_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set_ids.is_empty()
    }

    /// Number of models `Q`.
    pub fn models(&self) -> usize {
        self.grams.len()
    }

    /// Mean diagonal of each Gram, the divisor used by [`Self::trace_normalized`].
    pub fn trace_scales(&self) -> Vec<f64> {
        self.grams
            .iter()
            .map(|g| {
                let s = g.trace() / g.nrows() as f64;
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Copy with every Gram divided by its mean diagonal; also returns the divisors.
    pub fn trace_normalized(&self) -> (KernelStack, Vec<f64>) {
        let scales = self.trace_scales();
        let grams = self
            .grams
            .iter()
            .zip(&scales)
            .map(|(g, s)| g / *s)
            .collect();
        (
            KernelStack {
                grams,
                kinds: self.kinds.clone(),
                set_ids: self.set_ids.clone(),
            },
            scales,
        )
    }
}
