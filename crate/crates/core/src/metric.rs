//! Discriminant metric learning over several kernel spaces, and
//! nearest-neighbor classification under the learned distance.
//!
//! A single coefficient matrix `E` (N × d_z) is shared by every model. The
//! embedding of a set with per-model kernel vectors `k_q` is the
//! concatenation of the blocks `u_q · Eᵀ k_q`, so squared Euclidean distance
//! between embeddings is `Σ_q u_q² ‖Eᵀ (k_q,a − k_q,b)‖²`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{MmmlError, Result};
use crate::kernels::{kernel_vector, KernelKind, KernelStack};
use crate::set_model::{model_set, GrassmannPoint, ImageSet, SpdPoint, DEFAULT_ALPHA, DEFAULT_Q};
use crate::spectral::{solve_gen_eig, symmetrize};

pub const DEFAULT_U: [f64; 2] = [0.8, 0.2];
pub const DEFAULT_DZ: usize = 10;
pub const DEFAULT_EPS: f64 = 1e-4;

/// Within- and between-class scatter in coefficient space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub r_w: DMatrix<f64>,
    pub r_b: DMatrix<f64>,
    /// Ordered same-class pairs, self-pairs excluded.
    pub m_w: usize,
    /// Ordered different-class pairs.
    pub m_b: usize,
}

fn check_weights(u: &[f64], models: usize) -> Result<()> {
    if u.len() != models {
        return Err(MmmlError::DimensionMismatch {
            context: "model weights",
            expected: models,
            found: u.len(),
        });
    }
    if u.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || u.iter().all(|w| *w == 0.0) {
        return Err(MmmlError::Config(format!(
            "model weights must be non-negative and not all zero, got {u:?}"
        )));
    }
    Ok(())
}

/// Graph Laplacian `D − A` of the pair graph selected by `same_class`.
fn pair_laplacian(labels: &[String], same_class: bool) -> (DMatrix<f64>, usize) {
    let n = labels.len();
    let mut lap = DMatrix::zeros(n, n);
    let mut pairs = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j && (labels[i] == labels[j]) == same_class {
                lap[(i, j)] -= 1.0;
                lap[(i, i)] += 1.0;
                pairs += 1;
            }
        }
    }
    (lap, pairs)
}

/// Weighted pairwise scatter of Gram columns.
///
/// Summing `(K_i − K_j)(K_i − K_j)ᵀ` over the ordered pairs of a symmetric
/// pair graph equals `2 K L K` with `L` its Laplacian.
pub fn scatter_matrices(stack: &KernelStack, labels: &[String], u: &[f64]) -> Result<ScatterPair> {
    let n = stack.len();
    if labels.len() != n {
        return Err(MmmlError::DimensionMismatch {
            context: "gallery labels",
            expected: n,
            found: labels.len(),
        });
    }
    check_weights(u, stack.models())?;
    let (lap_w, m_w) = pair_laplacian(labels, true);
    let (lap_b, m_b) = pair_laplacian(labels, false);
    if m_w == 0 {
        return Err(MmmlError::Protocol(
            "no two gallery sets share a class; within-class scatter is undefined".into(),
        ));
    }
    if m_b == 0 {
        return Err(MmmlError::Protocol(
            "gallery holds a single class; between-class scatter is undefined".into(),
        ));
    }
    let mut r_w = DMatrix::zeros(n, n);
    let mut r_b = DMatrix::zeros(n, n);
    for (k, &weight) in stack.grams().iter().zip(u) {
        let w2 = weight * weight;
        r_w += (k * &lap_w * k) * (2.0 * w2);
        r_b += (k * &lap_b * k) * (2.0 * w2);
    }
    Ok(ScatterPair {
        r_w: symmetrize(&(r_w / m_w as f64)),
        r_b: symmetrize(&(r_b / m_b as f64)),
        m_w,
        m_b,
    })
}

/// `r_w + eps · (tr(r_w)/N) · I`.
pub fn regularize_within(r_w: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let n = r_w.nrows();
    let shift = eps * r_w.trace() / n as f64;
    let mut out = r_w.clone();
    for i in 0..n {
        out[(i, i)] += shift;
    }
    out
}

/// Trace ratio `tr(Eᵀ R_b E) / tr(Eᵀ R_w E)`.
pub fn objective_value(e_mat: &DMatrix<f64>, scatter: &ScatterPair) -> Result<f64> {
    if e_mat.nrows() != scatter.r_w.nrows() {
        return Err(MmmlError::DimensionMismatch {
            context: "coefficient matrix rows",
            expected: scatter.r_w.nrows(),
            found: e_mat.nrows(),
        });
    }
    let num = (e_mat.transpose() * &scatter.r_b * e_mat).trace();
    let den = (e_mat.transpose() * &scatter.r_w * e_mat).trace();
    if den.is_nan() || den <= 0.0 {
        return Err(MmmlError::Numerical(format!(
            "within-class trace {den:e} is not positive; objective undefined"
        )));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub d_z: usize,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d_z: DEFAULT_DZ,
            eps: DEFAULT_EPS,
        }
    }
}

/// The learned projection `E` with the model weights it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedMetric {
    e_mat: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    u: Vec<f64>,
    kernel_scales: Vec<f64>,
}

impl LearnedMetric {
    pub fn from_parts(
        e_mat: DMatrix<f64>,
        eigenvalues: DVector<f64>,
        u: Vec<f64>,
        kernel_scales: Vec<f64>,
    ) -> Result<Self> {
        check_weights(&u, kernel_scales.len())?;
        if eigenvalues.len() != e_mat.ncols() {
            return Err(MmmlError::DimensionMismatch {
                context: "eigenvalue count",
                expected: e_mat.ncols(),
                found: eigenvalues.len(),
            });
        }
        if kernel_scales.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(MmmlError::Config("kernel scales must be positive".into()));
        }
        Ok(LearnedMetric {
            e_mat,
            eigenvalues,
            u,
            kernel_scales,
        })
    }

    pub fn e_mat(&self) -> &DMatrix<f64> {
        &self.e_mat
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn kernel_scales(&self) -> &[f64] {
        &self.kernel_scales
    }

    pub fn d_z(&self) -> usize {
        self.e_mat.ncols()
    }

    /// Gallery size `N`.
    pub fn n(&self) -> usize {
        self.e_mat.nrows()
    }

    pub fn models(&self) -> usize {
        self.u.len()
    }

    /// Concatenated per-model blocks `u_q · Eᵀ (k_q / s_q)`, length `Q · d_z`.
    pub fn embed(&self, kvecs: &[DVector<f64>]) -> Result<DVector<f64>> {
        if kvecs.len() != self.models() {
            return Err(MmmlError::DimensionMismatch {
                context: "kernel vector count",
                expected: self.models(),
                found: kvecs.len(),
            });
        }
        let d_z = self.d_z();
        let mut out = DVector::zeros(self.models() * d_z);
        for (q, kv) in kvecs.iter().enumerate() {
            if kv.len() != self.n() {
                return Err(MmmlError::DimensionMismatch {
                    context: "kernel vector length",
                    expected: self.n(),
                    found: kv.len(),
                });
            }
            let scaled = kv / self.kernel_scales[q];
            let block = self.e_mat.tr_mul(&scaled) * self.u[q];
            out.rows_mut(q * d_z, d_z).copy_from(&block);
        }
        Ok(out)
    }

    /// Squared Euclidean distance between the two embeddings.
    pub fn learned_distance(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
        Ok(squared_distance(&self.embed(a)?, &self.embed(b)?))
    }
}

fn squared_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Result of [`train`]: the metric plus the regularized scatter it optimizes.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metric: LearnedMetric,
    /// `r_w` already carries the `eps` ridge.
    pub scatter: ScatterPair,
}

/// Solves the ratio-of-trace problem: the top `d_z` generalized eigenvectors
/// of `(R_b, R_w + ridge)`.
pub fn train(
    stack: &KernelStack,
    labels: &[String],
    u: &[f64],
    config: TrainConfig,
) -> Result<TrainOutcome> {
    let n = stack.len();
    if config.d_z == 0 || config.d_z > n {
        return Err(MmmlError::InvalidDimension(format!(
            "embedding dimension d_z={} must lie in 1..={n}",
            config.d_z
        )));
    }
    if !(config.eps >= 0.0 && config.eps.is_finite()) {
        return Err(MmmlError::Config(format!(
            "eps must be non-negative, got {}",
            config.eps
        )));
    }
    let mut scatter = scatter_matrices(stack, labels, u)?;
    scatter.r_w = regularize_within(&scatter.r_w, config.eps);
    let sol = solve_gen_eig(&scatter.r_b, &scatter.r_w, config.d_z).map_err(|e| match e {
        MmmlError::NeedsRegularization => MmmlError::Numerical(format!(
            "within-class scatter is singular (trace {:e}, eps {:e}); increase eps",
            scatter.r_w.trace(),
            config.eps
        )),
        other => other,
    })?;
    let metric = LearnedMetric {
        e_mat: sol.vectors,
        eigenvalues: sol.values,
        u: u.to_vec(),
        kernel_scales: vec![1.0; stack.models()],
    };
    Ok(TrainOutcome { metric, scatter })
}

/// Which manifold models take part in learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSelection {
    Both,
    SpdOnly,
    GrassmannOnly,
}

impl ModelSelection {
    pub fn kinds(self) -> Vec<KernelKind> {
        match self {
            ModelSelection::Both => vec![KernelKind::LogEuclidean, KernelKind::Projection],
            ModelSelection::SpdOnly => vec![KernelKind::LogEuclidean],
            ModelSelection::GrassmannOnly => vec![KernelKind::Projection],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelSelection::Both => "both",
            ModelSelection::SpdOnly => "spd",
            ModelSelection::GrassmannOnly => "grassmann",
        }
    }
}

impl fmt::Display for ModelSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelSelection {
    type Err = MmmlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(ModelSelection::Both),
            "spd" => Ok(ModelSelection::SpdOnly),
            "grassmann" => Ok(ModelSelection::GrassmannOnly),
            _ => Err(MmmlError::Config(format!(
                "unknown model selection '{s}' (expected both, spd or grassmann)"
            ))),
        }
    }
}

/// Everything that shapes a trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub q: usize,
    pub alpha: f64,
    /// Weight of the log-Euclidean (SPD) model.
    pub u1: f64,
    /// Weight of the projection (Grassmann) model.
    pub u2: f64,
    pub d_z: usize,
    pub eps: f64,
    pub models: ModelSelection,
    /// Divide each Gram (and probe kernel vector) by the Gram's mean diagonal.
    pub normalize_kernels: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            q: DEFAULT_Q,
            alpha: DEFAULT_ALPHA,
            u1: DEFAULT_U[0],
            u2: DEFAULT_U[1],
            d_z: DEFAULT_DZ,
            eps: DEFAULT_EPS,
            models: ModelSelection::Both,
            normalize_kernels: false,
        }
    }
}

impl Hyperparams {
    pub fn kinds(&self) -> Vec<KernelKind> {
        self.models.kinds()
    }

    /// Weights aligned with [`Self::kinds`].
    pub fn weights(&self) -> Vec<f64> {
        self.kinds()
            .iter()
            .map(|k| match k {
                KernelKind::LogEuclidean => self.u1,
                KernelKind::Projection => self.u2,
            })
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            d_z: self.d_z,
            eps: self.eps,
        }
    }
}

/// An image set after modeling, ready to join a gallery or act as a probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeledSet {
    pub label: String,
    pub set_id: String,
    pub spd: SpdPoint,
    pub grassmann: GrassmannPoint,
}

impl ModeledSet {
    pub fn from_set(set: &ImageSet, q: usize, alpha: f64) -> Result<Self> {
        let (spd, grassmann) = model_set(set, q, alpha)?;
        Ok(ModeledSet {
            label: set.label().to_string(),
            set_id: set.set_id().to_string(),
            spd,
            grassmann,
        })
    }
}

/// Models many sets in parallel, preserving order.
pub fn model_sets(sets: &[ImageSet], q: usize, alpha: f64) -> Result<Vec<ModeledSet>> {
    sets.par_iter()
        .map(|s| ModeledSet::from_set(s, q, alpha))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub label: String,
    pub set_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: String,
    /// Gallery members by ascending distance, ties by gallery index.
    pub neighbors: Vec<Neighbor>,
}

/// A trained classifier: the learned metric together with the gallery it
/// was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    metric: LearnedMetric,
    kinds: Vec<KernelKind>,
    gallery_labels: Vec<String>,
    set_ids: Vec<String>,
    spd_anchors: Vec<SpdPoint>,
    grassmann_anchors: Vec<GrassmannPoint>,
    gallery_embeddings: Vec<DVector<f64>>,
    dim: usize,
    q: usize,
    alpha: f64,
    eps: f64,
}

/// Everything [`EmbeddingModel::from_parts`] needs.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub metric: LearnedMetric,
    pub kinds: Vec<KernelKind>,
    pub gallery_labels: Vec<String>,
    pub set_ids: Vec<String>,
    pub spd_anchors: Vec<SpdPoint>,
    pub grassmann_anchors: Vec<GrassmannPoint>,
    pub gallery_embeddings: Vec<DVector<f64>>,
    pub q: usize,
    pub alpha: f64,
    pub eps: f64,
}

impl EmbeddingModel {
    /// Builds the Gram stack over `gallery`, learns `E` and embeds the gallery.
    pub fn fit(gallery: &[ModeledSet], hyper: &Hyperparams) -> Result<Self> {
        Ok(Self::fit_with_outcome(gallery, hyper)?.0)
    }

    /// As [`Self::fit`], also returning the training scatter.
    pub fn fit_with_outcome(
        gallery: &[ModeledSet],
        hyper: &Hyperparams,
    ) -> Result<(Self, ScatterPair)> {
        let first = gallery
            .first()
            .ok_or_else(|| MmmlError::Protocol("empty gallery".into()))?;
        let dim = first.spd.dim();
        for m in gallery {
            if m.spd.dim() != dim || m.grassmann.dim() != dim {
                return Err(MmmlError::DimensionMismatch {
                    context: "gallery feature dimension",
                    expected: dim,
                    found: m.spd.dim(),
                });
            }
            if m.grassmann.q() != hyper.q {
                return Err(MmmlError::DimensionMismatch {
                    context: "gallery subspace dimension",
                    expected: hyper.q,
                    found: m.grassmann.q(),
                });
            }
        }
        let kinds = hyper.kinds();
        let u = hyper.weights();
        let labels: Vec<String> = gallery.iter().map(|m| m.label.clone()).collect();
        let set_ids: Vec<String> = gallery.iter().map(|m| m.set_id.clone()).collect();
        let spd_anchors: Vec<SpdPoint> = gallery.iter().map(|m| m.spd.clone()).collect();
        let grassmann_anchors: Vec<GrassmannPoint> =
            gallery.iter().map(|m| m.grassmann.clone()).collect();

        let raw =
            KernelStack::from_points(&spd_anchors, &grassmann_anchors, &kinds, set_ids.clone())?;
        let (stack, scales) = if hyper.normalize_kernels {
            raw.trace_normalized()
        } else {
            let ones = vec![1.0; raw.models()];
            (raw.clone(), ones)
        };
        let outcome = train(&stack, &labels, &u, hyper.train_config())?;
        let metric = LearnedMetric {
            kernel_scales: scales,
            ..outcome.metric
        };
        let gallery_embeddings = (0..gallery.len())
            .map(|i| {
                let cols: Vec<DVector<f64>> = raw
                    .grams()
                    .iter()
                    .map(|g| g.column(i).into_owned())
                    .collect();
                metric.embed(&cols)
            })
            .collect::<Result<Vec<_>>>()?;
        let model = EmbeddingModel {
            metric,
            kinds,
            gallery_labels: labels,
            set_ids,
            spd_anchors,
            grassmann_anchors,
            gallery_embeddings,
            dim,
            q: hyper.q,
            alpha: hyper.alpha,
            eps: hyper.eps,
        };
        Ok((model, outcome.scatter))
    }

    /// Models raw image sets and fits on them.
    pub fn fit_sets(sets: &[ImageSet], hyper: &Hyperparams) -> Result<Self> {
        let modeled = model_sets(sets, hyper.q, hyper.alpha)?;
        Self::fit(&modeled, hyper)
    }

    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let n = parts.gallery_labels.len();
        let check = |context: &'static str, found: usize| {
            if found != n {
                Err(MmmlError::DimensionMismatch {
                    context,
                    expected: n,
                    found,
                })
            } else {
                Ok(())
            }
        };
        check("set ids", parts.set_ids.len())?;
        check("spd anchors", parts.spd_anchors.len())?;
        check("grassmann anchors", parts.grassmann_anchors.len())?;
        check("gallery embeddings", parts.gallery_embeddings.len())?;
        check("coefficient rows", parts.metric.n())?;
        if parts.kinds.len() != parts.metric.models() {
            return Err(MmmlError::DimensionMismatch {
                context: "kernel kinds",
                expected: parts.metric.models(),
                found: parts.kinds.len(),
            });
        }
        let dim = parts
            .spd_anchors
            .first()
            .map(SpdPoint::dim)
            .ok_or_else(|| MmmlError::Protocol("empty gallery".into()))?;
        Ok(EmbeddingModel {
            metric: parts.metric,
            kinds: parts.kinds,
            gallery_labels: parts.gallery_labels,
            set_ids: parts.set_ids,
            spd_anchors: parts.spd_anchors,
            grassmann_anchors: parts.grassmann_anchors,
            gallery_embeddings: parts.gallery_embeddings,
            dim,
            q: parts.q,
            alpha: parts.alpha,
            eps: parts.eps,
        })
    }

    pub fn metric(&self) -> &LearnedMetric {
        &self.metric
    }

    pub fn kinds(&self) -> &[KernelKind] {
        &self.kinds
    }

    pub fn gallery_labels(&self) -> &[String] {
        &self.gallery_labels
    }

    pub fn set_ids(&self) -> &[String] {
        &self.set_ids
    }

    pub fn spd_anchors(&self) -> &[SpdPoint] {
        &self.spd_anchors
    }

    pub fn grassmann_anchors(&self) -> &[GrassmannPoint] {
        &self.grassmann_anchors
    }

    pub fn gallery_embeddings(&self) -> &[DVector<f64>] {
        &self.gallery_embeddings
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn d_z(&self) -> usize {
        self.metric.d_z()
    }

    /// Per-model kernel vectors of a probe against the gallery anchors.
    pub fn kernel_vectors(
        &self,
        probe_spd: &SpdPoint,
        probe_grass: &GrassmannPoint,
    ) -> Result<Vec<DVector<f64>>> {
        if probe_spd.dim() != self.dim || probe_grass.dim() != self.dim {
            return Err(MmmlError::DimensionMismatch {
                context: "probe feature dimension",
                expected: self.dim,
                found: probe_spd.dim(),
            });
        }
        if probe_grass.q() != self.q {
            return Err(MmmlError::DimensionMismatch {
                context: "probe subspace dimension",
                expected: self.q,
                found: probe_grass.q(),
            });
        }
        self.kinds
            .iter()
            .map(|kind| match kind {
                KernelKind::LogEuclidean => kernel_vector(probe_spd, &self.spd_anchors),
                KernelKind::Projection => kernel_vector(probe_grass, &self.grassmann_anchors),
            })
            .collect()
    }

    pub fn embed_probe(
        &self,
        probe_spd: &SpdPoint,
        probe_grass: &GrassmannPoint,
    ) -> Result<DVector<f64>> {
        self.metric
            .embed(&self.kernel_vectors(probe_spd, probe_grass)?)
    }

    /// Nearest gallery member under the learned distance.
    pub fn classify(
        &self,
        probe_spd: &SpdPoint,
        probe_grass: &GrassmannPoint,
    ) -> Result<Classification> {
        let z = self.embed_probe(probe_spd, probe_grass)?;
        Ok(self.classify_embedding(&z))
    }

    pub fn classify_embedding(&self, z: &DVector<f64>) -> Classification {
        let mut neighbors: Vec<Neighbor> = self
            .gallery_embeddings
            .iter()
            .enumerate()
            .map(|(index, g)| Neighbor {
                index,
                label: self.gallery_labels[index].clone(),
                set_id: self.set_ids[index].clone(),
                distance: squared_distance(z, g),
            })
            .collect();
        neighbors.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.index.cmp(&b.index))
        });
        Classification {
            label: neighbors[0].label.clone(),
            neighbors,
        }
    }

    pub fn classify_set(&self, set: &ImageSet) -> Result<Classification> {
        let m = ModeledSet::from_set(set, self.q, self.alpha)?;
        self.classify(&m.spd, &m.grassmann)
    }
}
