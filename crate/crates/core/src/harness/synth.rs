//! Seeded synthetic image-set generator.
//!
//! Two presets are provided.
//!
//! * [`SynthPreset::Separated`]: every class has a random mean and a random
//!   covariance factor `F_c = F_0 + 0.1 · separation · G_c / √d` around a
//!   shared `F_0`; each set perturbs its class factor and mean slightly. At
//!   `separation = 0` all classes share one distribution.
//!
//! * [`SynthPreset::Mixed`]: the first half of the classes ("shape" classes)
//!   share one orientation `U_0` and differ only in their eigenvalue
//!   profile. The remaining ("orientation") classes share a spectral range
//!   but tilt the leading `signal_dim` directions of `U_0` away by a
//!   class-specific random perturbation, and every set draws its own
//!   spectrum. Shape classes are invisible to a subspace model, while the
//!   per-set spectral jitter blurs orientation classes for a covariance model.
//!
//! Images are drawn as `x = μ + U diag(√λ) z` (or `μ + F z`), `z ~ N(0, I)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{MmmlError, Result};
use crate::set_model::ImageSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthPreset {
    Separated,
    Mixed,
}

impl std::str::FromStr for SynthPreset {
    type Err = MmmlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separated" => Ok(SynthPreset::Separated),
            "mixed" => Ok(SynthPreset::Mixed),
            _ => Err(MmmlError::Config(format!(
                "unknown synth preset '{s}' (expected separated or mixed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub sets_per_class: usize,
    pub images_per_set: usize,
    pub d: usize,
    pub separation: f64,
    pub seed: u64,
    pub preset: SynthPreset,
    /// Number of leading directions carrying the orientation signal (mixed preset).
    pub signal_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 5,
            sets_per_class: 10,
            images_per_set: 30,
            d: 10,
            separation: 10.0,
            seed: 0,
            preset: SynthPreset::Separated,
            signal_dim: 3,
        }
    }
}

// Per-set perturbation of the class factor and mean (separated preset).
const SET_JITTER: f64 = 0.1;
// Leading/trailing eigenvalue levels of the mixed preset.
const LEAD_LEVEL: f64 = 10.0;
const TAIL_LEVEL: f64 = 0.5;
// log2 half-width of per-set spectral jitter for orientation classes.
const ORIENTATION_SPECTRAL_JITTER: f64 = 1.0;
// log2 half-width of per-set spectral jitter for shape classes.
const SHAPE_SPECTRAL_JITTER: f64 = 0.15;
// Magnitude of the orientation tilt at separation 10.
const ORIENTATION_TILT: f64 = 0.6;

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix the sign ambiguity of QR so the result is a function of `m`.
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn sample_set(
    rng: &mut ChaCha8Rng,
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    n: usize,
    label: String,
    set_id: String,
) -> Result<ImageSet> {
    let z = gaussian_matrix(rng, factor.ncols(), n);
    let mut samples = factor * z;
    for mut col in samples.column_iter_mut() {
        col += mean;
    }
    ImageSet::new(samples, label, set_id)
}

fn uniform_sym(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    half_width * rng.random_range(-1.0..=1.0)
}

fn spectrum(rng: &mut ChaCha8Rng, d: usize, lead: usize, amplitude: f64) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let level = if k < lead { LEAD_LEVEL } else { TAIL_LEVEL };
            level * 2f64.powf(uniform_sym(rng, amplitude))
        })
        .collect()
}

fn spectral_factor(basis: &DMatrix<f64>, lambdas: &[f64]) -> DMatrix<f64> {
    let mut f = basis.clone();
    for (j, l) in lambdas.iter().enumerate() {
        f.column_mut(j).scale_mut(l.sqrt());
    }
    f
}

/// Generates `classes × sets_per_class` labeled sets. Labels are `c0, c1, …`
/// and set ids `c<k>_s<j>`.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<ImageSet>> {
    let SynthConfig {
        classes,
        sets_per_class,
        images_per_set,
        d,
        separation,
        seed,
        preset,
        signal_dim,
    } = *config;
    if classes == 0 || sets_per_class == 0 || d == 0 {
        return Err(MmmlError::Config(
            "classes, sets_per_class and d must be positive".into(),
        ));
    }
    if images_per_set < 2 {
        return Err(MmmlError::Config(
            "images_per_set must be at least 2".into(),
        ));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(MmmlError::Config(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    if preset == SynthPreset::Mixed && (signal_dim == 0 || signal_dim >= d) {
        return Err(MmmlError::Config(format!(
            "signal_dim must lie in 1..{d} for the mixed preset, got {signal_dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_d = (d as f64).sqrt();
    let mut sets = Vec::with_capacity(classes * sets_per_class);

    match preset {
        SynthPreset::Separated => {
            let base = gaussian_matrix(&mut rng, d, d) / sqrt_d;
            for c in 0..classes {
                let mean = gaussian_vector(&mut rng, d) * (separation / sqrt_d);
                let factor = &base + gaussian_matrix(&mut rng, d, d) * (0.1 * separation / sqrt_d);
                for s in 0..sets_per_class {
                    let set_factor =
                        &factor + gaussian_matrix(&mut rng, d, d) * (SET_JITTER / sqrt_d);
                    let set_mean = &mean + gaussian_vector(&mut rng, d) * SET_JITTER;
                    sets.push(sample_set(
                        &mut rng,
                        &set_mean,
                        &set_factor,
                        images_per_set,
                        format!("c{c}"),
                        format!("c{c}_s{s}"),
                    )?);
                }
            }
        }
        SynthPreset::Mixed => {
            let strength = separation / 10.0;
            let u0 = orthonormalize(gaussian_matrix(&mut rng, d, d));
            let shape_classes = classes.div_ceil(2);
            for c in 0..classes {
                let mean = gaussian_vector(&mut rng, d) * (separation / sqrt_d);
                let is_shape = c < shape_classes;
                let (basis, class_spectrum) = if is_shape {
                    (u0.clone(), spectrum(&mut rng, d, signal_dim, strength))
                } else {
                    let tilt =
                        gaussian_matrix(&mut rng, d, d) * (ORIENTATION_TILT * strength / sqrt_d);
                    (orthonormalize(&u0 + tilt), vec![])
                };
                for s in 0..sets_per_class {
                    let lambdas: Vec<f64> = if is_shape {
                        class_spectrum
                            .iter()
                            .map(|l| l * 2f64.powf(uniform_sym(&mut rng, SHAPE_SPECTRAL_JITTER)))
                            .collect()
                    } else {
                        spectrum(&mut rng, d, signal_dim, ORIENTATION_SPECTRAL_JITTER)
                    };
                    let factor = spectral_factor(&basis, &lambdas);
                    let set_mean = &mean + gaussian_vector(&mut rng, d) * SET_JITTER;
                    sets.push(sample_set(
                        &mut rng,
                        &set_mean,
                        &factor,
                        images_per_set,
                        format!("c{c}"),
                        format!("c{c}_s{s}"),
                    )?);
                }
            }
        }
    }
    Ok(sets)
}
