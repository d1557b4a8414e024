//! Image-set modeling: every set becomes a regularized covariance (a point on
//! the SPD manifold) and the span of its leading eigenvectors (a point on the
//! Grassmann manifold).

use nalgebra::{DMatrix, DVector};

use crate::error::{MmmlError, Result};
use crate::spectral::{matrix_log_spd, top_q_eigvecs};

/// Default covariance regularization ratio; the ridge is `tr(C) / alpha`.
pub const DEFAULT_ALPHA: f64 = 1e3;
/// Default subspace dimension.
pub const DEFAULT_Q: usize = 10;

/// Tolerance on `YᵀY = I` accepted by [`GrassmannPoint::new`].
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

/// One labeled set of vectorized images, stored as a `d × n` matrix with one
/// image per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    samples: DMatrix<f64>,
    label: String,
    set_id: String,
}

impl ImageSet {
    pub fn new(
        samples: DMatrix<f64>,
        label: impl Into<String>,
        set_id: impl Into<String>,
    ) -> Result<Self> {
        let set_id = set_id.into();
        if samples.nrows() == 0 {
            return Err(MmmlError::DegenerateSet {
                set_id,
                reason: "feature dimension is zero".into(),
            });
        }
        if samples.ncols() < 2 {
            return Err(MmmlError::DegenerateSet {
                set_id,
                reason: format!("{} image(s); at least 2 are required", samples.ncols()),
            });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(MmmlError::DegenerateSet {
                set_id,
                reason: "non-finite pixel value".into(),
            });
        }
        Ok(ImageSet {
            samples,
            label: label.into(),
            set_id,
        })
    }

    /// Builds a set from row-major image vectors (one image per row).
    pub fn from_rows(
        rows: &[Vec<f64>],
        label: impl Into<String>,
        set_id: impl Into<String>,
    ) -> Result<Self> {
        let set_id = set_id.into();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(MmmlError::DimensionMismatch {
                context: "image row",
                expected: d,
                found: rows[bad].len(),
            });
        }
        let samples = DMatrix::from_fn(d, rows.len(), |i, j| rows[j][i]);
        ImageSet::new(samples, label, set_id)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_id(&self) -> &str {
        &self.set_id
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    /// Number of images `n`.
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }
}

/// Regularized covariance together with its matrix logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdPoint {
    c_star: DMatrix<f64>,
    log_c: DMatrix<f64>,
}

impl SpdPoint {
    pub fn new(c_star: DMatrix<f64>) -> Result<Self> {
        let log_c = matrix_log_spd(&c_star)?;
        Ok(SpdPoint { c_star, log_c })
    }

    /// Reassembles a point from a stored matrix and its logarithm.
    pub(crate) fn from_parts(c_star: DMatrix<f64>, log_c: DMatrix<f64>) -> Result<Self> {
        if !c_star.is_square() || c_star.shape() != log_c.shape() {
            return Err(MmmlError::DimensionMismatch {
                context: "spd point parts",
                expected: c_star.nrows(),
                found: log_c.nrows(),
            });
        }
        Ok(SpdPoint { c_star, log_c })
    }

    pub fn c_star(&self) -> &DMatrix<f64> {
        &self.c_star
    }

    pub fn log_c(&self) -> &DMatrix<f64> {
        &self.log_c
    }

    pub fn dim(&self) -> usize {
        self.c_star.nrows()
    }
}

/// A `q`-dimensional subspace of `R^d`, held as an orthonormal `d × q` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    basis: DMatrix<f64>,
}

impl GrassmannPoint {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let (d, q) = basis.shape();
        if q == 0 || q > d {
            return Err(MmmlError::InvalidDimension(format!(
                "basis of shape {d}x{q} does not describe a subspace"
            )));
        }
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::<f64>::identity(q, q)).amax();
        if err.is_nan() || err > ORTHONORMAL_TOLERANCE {
            return Err(MmmlError::Numerical(format!(
                "basis is not orthonormal (max |YᵀY - I| = {err:e})"
            )));
        }
        Ok(GrassmannPoint { basis })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Subspace dimension `q`.
    pub fn q(&self) -> usize {
        self.basis.ncols()
    }

    /// `Y Yᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Column mean, accumulated as offsets from the first column so a set of
/// identical images has exactly that image as its mean.
pub fn mean_vector(set: &ImageSet) -> DVector<f64> {
    let first = set.samples.column(0).into_owned();
    let mut offset = DVector::zeros(set.dim());
    for col in set.samples.column_iter().skip(1) {
        offset += col - &first;
    }
    first + offset / set.len() as f64
}

/// Unbiased sample covariance, normalized by `n - 1`.
pub fn covariance(set: &ImageSet) -> Result<DMatrix<f64>> {
    let n = set.len();
    if n < 2 {
        return Err(MmmlError::DegenerateSet {
            set_id: set.set_id.clone(),
            reason: format!("{n} image(s); covariance needs at least 2"),
        });
    }
    let mean = mean_vector(set);
    let mut centered = set.samples.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let c = &centered * centered.transpose() / (n as f64 - 1.0);
    Ok(crate::spectral::symmetrize(&c))
}

/// `C + tr(C)/alpha · I`.
pub fn regularize_spd(c: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MmmlError::Config(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if c.nrows() != c.ncols() {
        return Err(MmmlError::NotSquare {
            rows: c.nrows(),
            cols: c.ncols(),
        });
    }
    let trace = c.trace();
    if !(trace > 0.0 && trace.is_finite()) {
        return Err(MmmlError::DegenerateSet {
            set_id: String::new(),
            reason: format!("covariance trace is {trace}; the set has no variation"),
        });
    }
    let shift = trace / alpha;
    let mut out = c.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += shift;
    }
    Ok(out)
}

pub fn grassmann_basis(c_star: &DMatrix<f64>, q: usize) -> Result<GrassmannPoint> {
    GrassmannPoint::new(top_q_eigvecs(c_star, q)?)
}

/// Covariance, regularization, log and subspace extraction for one set.
pub fn model_set(set: &ImageSet, q: usize, alpha: f64) -> Result<(SpdPoint, GrassmannPoint)> {
    let tag = |e: MmmlError| match e {
        MmmlError::DegenerateSet { reason, .. } => MmmlError::DegenerateSet {
            set_id: set.set_id.clone(),
            reason,
        },
        other => other,
    };
    let limit = set.dim().min(set.len() - 1);
    if q == 0 || q > limit {
        return Err(MmmlError::InvalidDimension(format!(
            "set '{}' (d={}, n={}) supports subspace dimension 1..={limit}, got q={q}",
            set.set_id,
            set.dim(),
            set.len()
        )));
    }
    let c = covariance(set).map_err(tag)?;
    let c_star = regularize_spd(&c, alpha).map_err(tag)?;
    let grass = grassmann_basis(&c_star, q)?;
    let spd = SpdPoint::new(c_star)?;
    Ok((spd, grass))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(cols: &[&[f64]]) -> ImageSet {
        let rows: Vec<Vec<f64>> = cols.iter().map(|c| c.to_vec()).collect();
        ImageSet::from_rows(&rows, "a", "s").unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            mean_vector(&set(&[&[1.0, 2.0], &[3.0, 4.0]])).as_slice(),
            &[2.0, 3.0]
        );
        assert_eq!(
            mean_vector(&set(&[&[5.0, -1.0], &[5.0, -1.0]])).as_slice(),
            &[5.0, -1.0]
        );
        assert_eq!(
            mean_vector(&set(&[&[1.0, 0.0], &[-1.0, 0.0]])).as_slice(),
            &[0.0, 0.0]
        );
    }

    #[test]
    fn covariance_examples() {
        let c = covariance(&set(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
        let c = covariance(&set(&[&[7.0, 7.0], &[7.0, 7.0], &[7.0, 7.0]])).unwrap();
        assert_eq!(c, DMatrix::zeros(2, 2));
        let c = covariance(&set(&[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn single_image_is_degenerate() {
        let err = ImageSet::from_rows(&[vec![1.0, 2.0]], "a", "lonely").unwrap_err();
        assert!(matches!(err, MmmlError::DegenerateSet { ref set_id, .. } if set_id == "lonely"));
    }

    #[test]
    fn regularize_examples() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]);
        let r = regularize_spd(&c, 1e3).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[2.004, 2.0, 2.0, 2.004]));
        let r = regularize_spd(&DMatrix::identity(2, 2), 2.0).unwrap();
        assert_eq!(r, DMatrix::identity(2, 2) * 2.0);
        assert!(matches!(
            regularize_spd(&DMatrix::zeros(2, 2), 1e3),
            Err(MmmlError::DegenerateSet { .. })
        ));
    }

    #[test]
    fn grassmann_examples() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.001, 2.001, 1.001]));
        let p = grassmann_basis(&c, 2).unwrap().projector();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert!((p - expected).amax() < 1e-14);

        let c = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        let p = grassmann_basis(&c, 3).unwrap().projector();
        assert!((p - DMatrix::identity(3, 3)).amax() < 1e-12);

        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let p = grassmann_basis(&c, 1).unwrap().projector();
        assert!((p - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-14);

        assert!(matches!(
            grassmann_basis(&c, 3),
            Err(MmmlError::InvalidDimension(_))
        ));
    }

    #[test]
    fn model_two_column_set() {
        let (spd, grass) = model_set(&set(&[&[1.0, 2.0], &[3.0, 4.0]]), 1, 1e3).unwrap();
        assert_eq!(
            spd.c_star(),
            &DMatrix::from_row_slice(2, 2, &[2.004, 2.0, 2.0, 2.004])
        );
        assert!((grass.projector() - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-12);
        assert!((matrix_log_spd(spd.c_star()).unwrap() - spd.log_c()).amax() == 0.0);
    }

    #[test]
    fn model_identical_images_fails() {
        let s = set(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]);
        let err = model_set(&s, 1, 1e3).unwrap_err();
        assert!(matches!(err, MmmlError::DegenerateSet { ref set_id, .. } if set_id == "s"));
    }

    #[test]
    fn model_rejects_q_beyond_rank() {
        let s = set(&[&[1.0, 2.0, 0.0], &[3.0, 4.0, 1.0]]);
        assert!(matches!(
            model_set(&s, 2, 1e3),
            Err(MmmlError::InvalidDimension(_))
        ));
    }

    #[test]
    fn model_eth80_geometry() {
        // 20x20 images, 41 views.
        let d = 400;
        let n = 41;
        let samples = DMatrix::from_fn(d, n, |i, j| {
            let x = (i * 31 + j * 17) % 97;
            (x as f64 * 0.37 + (i as f64 * 0.01).sin() * j as f64).rem_euclid(1.0)
        });
        let s = ImageSet::new(samples, "cup", "cup1").unwrap();
        let (spd, grass) = model_set(&s, 10, DEFAULT_ALPHA).unwrap();
        assert_eq!(spd.c_star().shape(), (400, 400));
        assert_eq!(grass.basis().shape(), (400, 10));
    }

    #[test]
    fn grassmann_point_rejects_non_orthonormal() {
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(GrassmannPoint::new(b).is_err());
    }
}
