//! Image-set classification with a metric learned over two set models.
//!
//! Each image set is summarized twice: as a regularized covariance matrix on
//! the SPD manifold and as the span of its leading eigenvectors on the
//! Grassmann manifold. The log-Euclidean and projection kernels map both
//! into Hilbert spaces, a shared discriminant projection is learned from the
//! kernel Gram matrices by a generalized eigenproblem, and probes are
//! labeled by their nearest gallery set in the learned space.
//!
//! ```no_run
//! use mmml::harness::{run_experiment, synth_generate, SplitConfig, SynthConfig};
//! use mmml::Hyperparams;
//!
//! let sets = synth_generate(&SynthConfig::default()).unwrap();
//! let hyper = Hyperparams { q: 3, ..Hyperparams::default() };
//! let report = run_experiment(&sets, &SplitConfig::default(), &hyper).unwrap();
//! print!("{}", report.render());
//! ```

pub mod error;
pub mod harness;
pub mod kernels;
pub mod metric;
pub mod set_model;
pub mod spectral;

pub use error::{MmmlError, Result};
pub use kernels::{
    gram_matrix, kernel_vector, led_distance, log_euclidean_kernel, projection_distance,
    projection_kernel, KernelKind, KernelPoint, KernelStack,
};
pub use metric::{
    objective_value, scatter_matrices, train, Classification, EmbeddingModel, Hyperparams,
    LearnedMetric, ModelSelection, ModeledSet, Neighbor, ScatterPair, TrainConfig, TrainOutcome,
};
pub use set_model::{
    covariance, grassmann_basis, mean_vector, model_set, regularize_spd, GrassmannPoint, ImageSet,
    SpdPoint,
};
pub use spectral::{matrix_log_spd, solve_gen_eig, sym_eig, top_q_eigvecs, SymEigen};
