//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use mmml::harness::{
    ingest_manifest, run_experiment, synth_generate, IngestOptions, ProbeCount, SplitConfig,
    SynthConfig, SynthPreset,
};
use mmml::metric::model_sets;
use mmml::{
    gram_matrix, led_distance, log_euclidean_kernel, objective_value, projection_distance,
    projection_kernel, train, GrassmannPoint, Hyperparams, KernelStack, ModelSelection, SpdPoint,
    TrainOutcome,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn metric_axioms() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1001);
    let mut worst_asym = 0.0f64;
    let mut worst_tri = f64::NEG_INFINITY;
    for i in 0..200 {
        let d = 1 + i % 20;
        let [x, y, z] = [0; 3].map(|_| random_spd_point(&mut r, d));
        let dist = |a: &SpdPoint, b: &SpdPoint| led_distance(a, b).unwrap();
        worst_asym = worst_asym.max((dist(&x, &y) - dist(&y, &x)).abs());
        ensure(dist(&x, &y) > 0.0 && dist(&x, &z) >= 0.0, || {
            format!("spd {i}: non-positive distance")
        })?;
        ensure(dist(&x, &x) == 0.0, || {
            format!("spd {i}: d(x,x) = {}", dist(&x, &x))
        })?;
        worst_tri = worst_tri.max(dist(&x, &y) - dist(&x, &z) - dist(&z, &y));

        let d = 2 + i % 19;
        let q = 1 + i % (d - 1).min(5);
        let [x, y, z] = [0; 3].map(|_| random_grassmann(&mut r, d, q));
        let dist = |a: &GrassmannPoint, b: &GrassmannPoint| projection_distance(a, b).unwrap();
        worst_asym = worst_asym.max((dist(&x, &y) - dist(&y, &x)).abs());
        ensure(dist(&x, &y) > 0.0 && dist(&x, &z) >= 0.0, || {
            format!("grassmann {i}: non-positive distance")
        })?;
        ensure(dist(&x, &x) <= 1e-12, || {
            format!("grassmann {i}: d(x,x) = {}", dist(&x, &x))
        })?;
        // Same subspace under a different basis is the same point.
        let rot = random_orthonormal(&mut r, q, q);
        let xr = GrassmannPoint::new(x.basis() * rot).unwrap();
        ensure(dist(&x, &xr) <= 1e-7, || {
            format!("grassmann {i}: rotated basis at {}", dist(&x, &xr))
        })?;
        worst_tri = worst_tri.max(dist(&x, &y) - dist(&x, &z) - dist(&z, &y));
    }
    ensure(worst_asym <= 1e-12, || format!("asymmetry {worst_asym:e}"))?;
    ensure(worst_tri <= 1e-9, || {
        format!("triangle violated by {worst_tri:e}")
    })?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "400 triples, max asymmetry {worst_asym:e}, max triangle excess {worst_tri:.3e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn min_max_eig(m: &DMatrix<f64>) -> (f64, f64) {
    let (vals, _) = jacobi_eig(m);
    (vals[vals.len() - 1], vals[0])
}

fn kernel_consistency() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1002);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let d = 1 + i % 20;
        let (x, y) = (random_spd_point(&mut r, d), random_spd_point(&mut r, d));
        let k = |a: &SpdPoint, b: &SpdPoint| log_euclidean_kernel(a, b).unwrap();
        let lhs = led_distance(&x, &y).unwrap().powi(2);
        worst = worst.max(rel_err(lhs, k(&x, &x) + k(&y, &y) - 2.0 * k(&x, &y)));

        let d = 2 + i % 19;
        let q = 1 + i % (d - 1).min(5);
        let (a, b) = (
            random_grassmann(&mut r, d, q),
            random_grassmann(&mut r, d, q),
        );
        let lhs = projection_distance(&a, &b).unwrap().powi(2);
        worst = worst.max(rel_err(lhs, q as f64 - projection_kernel(&a, &b).unwrap()));
    }
    ensure(worst <= 1e-8, || format!("identity error {worst:e}"))?;
    let mut worst_ratio = f64::INFINITY;
    for g in 0..50 {
        let n = 1 + g % 30;
        let d = 2 + g % 10;
        let spd: Vec<SpdPoint> = (0..n).map(|_| random_spd_point(&mut r, d)).collect();
        let gr: Vec<GrassmannPoint> = (0..n)
            .map(|_| random_grassmann(&mut r, d, 1 + g % (d - 1).min(5)))
            .collect();
        for gram in [gram_matrix(&spd), gram_matrix(&gr)] {
            let gram = gram.map_err(|e| format!("gallery {g}: {e}"))?;
            let (lo, hi) = min_max_eig(&gram);
            ensure(lo >= -1e-8 * hi, || {
                format!("gallery {g}: min eig {lo:e}, max {hi:e}")
            })?;
            worst_ratio = worst_ratio.min(lo / hi);
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "200 pairs, max relative error {worst:e}; 50 galleries, min eig/max eig ≥ {worst_ratio:.3e}; {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

/// A trained instance on a small synthetic gallery.
struct Instance {
    grams: Vec<DMatrix<f64>>,
    u: Vec<f64>,
    outcome: TrainOutcome,
}

fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let classes = r.random_range(2..=4);
    let sets = r.random_range(2..=20 / classes);
    let q = r.random_range(1..=3);
    let data = synth_generate(&SynthConfig {
        classes,
        sets_per_class: sets,
        images_per_set: r.random_range(8..=25),
        d: r.random_range(4..=10),
        separation: r.random_range(0.5..10.0),
        seed,
        preset: if seed.is_multiple_of(2) {
            SynthPreset::Separated
        } else {
            SynthPreset::Mixed
        },
        signal_dim: 2,
    })
    .unwrap();
    let modeled = model_sets(&data, q, 1000.0).unwrap();
    let n = modeled.len();
    let hyper = Hyperparams {
        q,
        u1: r.random_range(0.1..1.0),
        u2: r.random_range(0.1..1.0),
        d_z: r.random_range(1..=5.min(n)),
        ..Hyperparams::default()
    };
    let spd: Vec<SpdPoint> = modeled.iter().map(|m| m.spd.clone()).collect();
    let gr: Vec<GrassmannPoint> = modeled.iter().map(|m| m.grassmann.clone()).collect();
    let ids = modeled.iter().map(|m| m.set_id.clone()).collect();
    let stack = KernelStack::from_points(&spd, &gr, &hyper.kinds(), ids).unwrap();
    let labels: Vec<String> = modeled.iter().map(|m| m.label.clone()).collect();
    let outcome = train(&stack, &labels, &hyper.weights(), hyper.train_config()).unwrap();
    Instance {
        grams: stack.grams().to_vec(),
        u: hyper.weights(),
        outcome,
    }
}

fn trace_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for s in 0..20 {
        let inst = random_instance(2000 + s);
        let e = inst.outcome.metric.e_mat();
        let n = e.nrows();
        let col = |i: usize| -> Vec<DVector<f64>> {
            inst.grams
                .iter()
                .map(|g| g.column(i).into_owned())
                .collect()
        };
        for i in 0..n {
            for j in 0..n {
                let lib = inst
                    .outcome
                    .metric
                    .learned_distance(&col(i), &col(j))
                    .unwrap();
                let mut s_mat = DMatrix::zeros(n, n);
                for (g, uq) in inst.grams.iter().zip(&inst.u) {
                    let diff = g.column(i) - g.column(j);
                    s_mat += &diff * diff.transpose() * (uq * uq);
                }
                let oracle = (e.transpose() * s_mat * e).trace();
                worst = worst.max(rel_err(lib, oracle));
                pairs += 1;
            }
        }
    }
    ensure(worst <= 1e-8, || format!("max relative error {worst:e}"))?;
    Ok(format!(
        "20 instances, {pairs} gallery pairs, max relative error {worst:.3e}"
    ))
}

fn eigen_quality() -> Outcome {
    let mut worst_res = 0.0f64;
    let mut min_margin = f64::INFINITY;
    for s in 0..20 {
        let inst = random_instance(3000 + s);
        let sc = &inst.outcome.scatter;
        let e_mat = inst.outcome.metric.e_mat();
        let vals = inst.outcome.metric.eigenvalues();
        for j in 0..e_mat.ncols() {
            let e = e_mat.column(j);
            let res = (&sc.r_b * e - &sc.r_w * e * vals[j]).norm();
            let bound = 1e-6 * sc.r_b.norm() * e.norm();
            worst_res = worst_res.max(res / (sc.r_b.norm() * e.norm()));
            ensure(res <= bound, || {
                format!("instance {s} pair {j}: residual {res:e} > {bound:e}")
            })?;
        }
        let best = objective_value(e_mat, sc).unwrap();
        let (n, d_z) = (e_mat.nrows(), e_mat.ncols());
        let mut r = rng(s);
        for t in 0..100 {
            let g = gaussian(&mut r, n, d_z);
            let l = (g.transpose() * &sc.r_w * &g).cholesky().unwrap().l();
            let e_rand = &g * l.transpose().try_inverse().unwrap();
            let v = objective_value(&e_rand, sc).unwrap();
            ensure(v < best, || {
                format!("instance {s} draw {t}: random {v} ≥ trained {best}")
            })?;
            min_margin = min_margin.min((best - v) / best);
        }
    }
    Ok(format!(
        "20 instances, max scaled residual {worst_res:.3e}, 2000 random W-normalized draws, min relative margin {min_margin:.3e}"
    ))
}

fn protocol(gallery: usize, probe: ProbeCount) -> SplitConfig {
    SplitConfig {
        gallery_per_class: gallery,
        probe_per_class: probe,
        folds: 10,
        seed: 0,
    }
}

fn ablation_dominance() -> Outcome {
    let start = Instant::now();
    let data = synth_generate(&SynthConfig {
        classes: 6,
        sets_per_class: 10,
        images_per_set: 40,
        d: 12,
        separation: 10.0,
        seed: 1,
        preset: SynthPreset::Mixed,
        signal_dim: 3,
    })
    .unwrap();
    let split = protocol(5, ProbeCount::Count(5));
    let mean = |models| -> Result<f64, String> {
        let h = Hyperparams {
            q: 3,
            models,
            ..Hyperparams::default()
        };
        run_experiment(&data, &split, &h)
            .map(|r| r.mean)
            .map_err(|e| e.to_string())
    };
    let both = mean(ModelSelection::Both)?;
    let spd = mean(ModelSelection::SpdOnly)?;
    let grass = mean(ModelSelection::GrassmannOnly)?;
    let detail = format!("both {both:.4}, spd-only {spd:.4}, grassmann-only {grass:.4}");
    ensure(both >= spd.max(grass) - 0.01, || {
        format!("{detail}: below best ablation - 1pp")
    })?;
    ensure(both > spd.min(grass), || {
        format!("{detail}: not above weaker ablation")
    })?;
    within(start.elapsed(), 120.0)?;
    Ok(format!("{detail}; {:.2} s", start.elapsed().as_secs_f64()))
}

fn separable_accuracy() -> Outcome {
    let start = Instant::now();
    let data = synth_generate(&SynthConfig::default()).unwrap();
    let report = run_experiment(
        &data,
        &protocol(5, ProbeCount::Rest),
        &Hyperparams::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(report.mean >= 0.90, || {
        format!("mean accuracy {}", report.mean)
    })?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "mean accuracy {:.4} ± {:.4} over 10 folds; {:.2} s",
        report.mean,
        report.std,
        start.elapsed().as_secs_f64()
    ))
}

fn determinism() -> Outcome {
    let data = synth_generate(&SynthConfig {
        preset: SynthPreset::Mixed,
        classes: 4,
        seed: 7,
        ..SynthConfig::default()
    })
    .unwrap();
    let split = protocol(5, ProbeCount::Rest);
    let hyper = Hyperparams {
        q: 3,
        ..Hyperparams::default()
    };
    let render_with = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| run_experiment(&data, &split, &hyper))
            .map(|r| r.render())
            .map_err(|e| e.to_string())
    };
    let a = render_with(1)?;
    let b = render_with(1)?;
    let c = render_with(8)?;
    ensure(a == b, || "repeated single-thread runs differ".into())?;
    ensure(a == c, || "1-thread and 8-thread reports differ".into())?;
    Ok(format!(
        "{} byte report identical across 3 runs (1, 1, 8 threads)",
        a.len()
    ))
}

fn eth80() -> Option<Outcome> {
    let manifest = PathBuf::from(std::env::var_os("MMML_ETH80_MANIFEST")?);
    let run = || -> Outcome {
        let data =
            ingest_manifest(&manifest, &IngestOptions::default()).map_err(|e| e.to_string())?;
        let report = run_experiment(
            &data,
            &protocol(5, ProbeCount::Count(5)),
            &Hyperparams::default(),
        )
        .map_err(|e| e.to_string())?;
        let pct = report.mean * 100.0;
        ensure((pct - 95.0).abs() <= 3.0, || {
            format!("mean accuracy {pct:.2}%, target 95.00 ± 3")
        })?;
        Ok(format!(
            "mean accuracy {pct:.2}% ± {:.2}",
            report.std * 100.0
        ))
    };
    Some(run())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("metric_axioms", metric_axioms),
        ("kernel_consistency", kernel_consistency),
        ("trace_oracle_equivalence", trace_oracle),
        ("eigen_solution_quality", eigen_quality),
        ("ablation_dominance_mixed", ablation_dominance),
        ("separable_synthetic_accuracy", separable_accuracy),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    match eth80() {
        None => println!("SKIP eth80_accuracy: set MMML_ETH80_MANIFEST to run"),
        Some(Ok(detail)) => println!("PASS eth80_accuracy: {detail}"),
        Some(Err(detail)) => {
            failed += 1;
            println!("FAIL eth80_accuracy: {detail}");
        }
    }
    println!("acceptance: {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
