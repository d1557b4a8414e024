#![allow(dead_code)]

use mmml::{GrassmannPoint, SpdPoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = gaussian(rng, d, d);
    let c = &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
    (&c + c.transpose()) * 0.5
}

pub fn random_spd_point(rng: &mut ChaCha8Rng, d: usize) -> SpdPoint {
    SpdPoint::new(random_spd(rng, d)).unwrap()
}

pub fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize, q: usize) -> DMatrix<f64> {
    gaussian(rng, d, q).qr().q()
}

pub fn random_grassmann(rng: &mut ChaCha8Rng, d: usize, q: usize) -> GrassmannPoint {
    GrassmannPoint::new(random_orthonormal(rng, d, q)).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Cyclic Jacobi eigenvalue iteration; independent of the library's solver.
/// Returns eigenvalues in descending order with matching eigenvector columns.
pub fn jacobi_eig(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * m.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    (values, vectors)
}

/// Random Gram matrix `AᵀA` of an `N`-point gallery with `rank` features.
pub fn random_gram(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let a = gaussian(rng, rank, n);
    let g = a.transpose() * a;
    (&g + g.transpose()) * 0.5
}

/// Labels with every class holding at least two members.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let classes = rng.random_range(2..=(n / 2).max(2));
    (0..n).map(|i| format!("k{}", i % classes)).collect()
}
