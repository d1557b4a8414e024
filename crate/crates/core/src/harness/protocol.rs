//! Random gallery/probe evaluation, reports and hyperparameter sweeps.
//!
//! Fold `f` of an experiment with seed `s` draws its partition from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `f`. Classes are visited
//! in sorted label order; each class's set indices are shuffled and the first
//! `gallery_per_class` go to the gallery, the next `probe_per_class` (or all
//! remaining) to the probes.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{MmmlError, Result};
use crate::metric::{model_sets, EmbeddingModel, Hyperparams, ModeledSet};
use crate::set_model::ImageSet;

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeCount {
    Count(usize),
    Rest,
}

impl FromStr for ProbeCount {
    type Err = MmmlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rest" => Ok(ProbeCount::Rest),
            _ => s
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .map(ProbeCount::Count)
                .ok_or_else(|| {
                    MmmlError::Config(format!("probe count must be positive or 'rest', got '{s}'"))
                }),
        }
    }
}

impl fmt::Display for ProbeCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeCount::Count(n) => write!(f, "{n}"),
            ProbeCount::Rest => f.write_str("rest"),
        }
    }
}

/// Parses a gallery size; `one` is accepted for a single set per class.
pub fn parse_gallery_count(s: &str) -> Result<usize> {
    match s {
        "one" => Ok(1),
        _ => s.parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| {
            MmmlError::Config(format!(
                "gallery count must be positive or 'one', got '{s}'"
            ))
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitConfig {
    pub gallery_per_class: usize,
    pub probe_per_class: ProbeCount,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            gallery_per_class: 5,
            probe_per_class: ProbeCount::Rest,
            folds: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

/// Indices into the dataset, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    pub gallery: Vec<usize>,
    pub probes: Vec<usize>,
}

fn class_index(labels: &[&str]) -> BTreeMap<String, Vec<usize>> {
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.to_string()).or_default().push(i);
    }
    by_class
}

/// Checks that every class can supply the requested gallery and probe sets.
pub fn check_split(labels: &[&str], split: &SplitConfig) -> Result<()> {
    if split.folds == 0 {
        return Err(MmmlError::Config("folds must be positive".into()));
    }
    if split.gallery_per_class == 0 {
        return Err(MmmlError::Config(
            "gallery_per_class must be positive".into(),
        ));
    }
    let by_class = class_index(labels);
    if by_class.len() < 2 {
        return Err(MmmlError::Protocol(format!(
            "dataset needs at least 2 classes, found {}",
            by_class.len()
        )));
    }
    for (class, members) in &by_class {
        let needed = split.gallery_per_class
            + match split.probe_per_class {
                ProbeCount::Count(p) => p,
                ProbeCount::Rest => 1,
            };
        if members.len() < needed {
            return Err(MmmlError::Protocol(format!(
                "infeasible split: class '{class}' has {} sets, needs {needed} \
                 ({} gallery + {} probe)",
                members.len(),
                split.gallery_per_class,
                split.probe_per_class
            )));
        }
    }
    Ok(())
}

/// The gallery/probe partition of one fold.
pub fn fold_partition(labels: &[&str], split: &SplitConfig, fold: usize) -> Result<FoldPartition> {
    check_split(labels, split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    rng.set_stream(fold as u64);
    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    for members in class_index(labels).values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let (g, rest) = shuffled.split_at(split.gallery_per_class);
        gallery.extend_from_slice(g);
        match split.probe_per_class {
            ProbeCount::Count(p) => probes.extend_from_slice(&rest[..p]),
            ProbeCount::Rest => probes.extend_from_slice(rest),
        }
    }
    gallery.sort_unstable();
    probes.sort_unstable();
    Ok(FoldPartition { gallery, probes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub correct: usize,
    pub total: usize,
    /// (true label, predicted label) per probe.
    pub predictions: Vec<(String, String)>,
}

impl FoldOutcome {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

fn run_fold(
    modeled: &[ModeledSet],
    labels: &[&str],
    split: &SplitConfig,
    hyper: &Hyperparams,
    fold: usize,
) -> Result<FoldOutcome> {
    let part = fold_partition(labels, split, fold)?;
    let gallery: Vec<ModeledSet> = part.gallery.iter().map(|&i| modeled[i].clone()).collect();
    let model = EmbeddingModel::fit(&gallery, hyper)?;
    let predictions = part
        .probes
        .iter()
        .map(|&i| {
            let probe = &modeled[i];
            let c = model.classify(&probe.spd, &probe.grassmann)?;
            Ok((probe.label.clone(), c.label))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = predictions.iter().filter(|(t, p)| t == p).count();
    Ok(FoldOutcome {
        correct,
        total: predictions.len(),
        predictions,
    })
}

/// Per-fold accuracies and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub per_fold_accuracy: Vec<f64>,
    pub per_fold_counts: Vec<(usize, usize)>,
    pub mean: f64,
    /// Sample standard deviation over folds; 0 for a single fold.
    pub std: f64,
    pub config_echo: Vec<(String, String)>,
    pub classes: Vec<String>,
    /// `confusion[t][p]`: probes of class `t` predicted as `p`, summed over folds.
    pub confusion: Vec<Vec<usize>>,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

fn config_echo(split: &SplitConfig, hyper: &Hyperparams) -> Vec<(String, String)> {
    let pairs: [(&str, String); 13] = [
        ("q", hyper.q.to_string()),
        ("alpha", hyper.alpha.to_string()),
        ("u1", hyper.u1.to_string()),
        ("u2", hyper.u2.to_string()),
        ("dz", hyper.d_z.to_string()),
        ("eps", hyper.eps.to_string()),
        ("models", hyper.models.to_string()),
        ("normalize_kernels", hyper.normalize_kernels.to_string()),
        ("gallery_per_class", split.gallery_per_class.to_string()),
        ("probe_per_class", split.probe_per_class.to_string()),
        ("folds", split.folds.to_string()),
        ("seed", split.seed.to_string()),
        ("accuracy", "micro".to_string()),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl ExperimentReport {
    fn from_folds(
        outcomes: &[FoldOutcome],
        classes: Vec<String>,
        echo: Vec<(String, String)>,
    ) -> Self {
        let per_fold_accuracy: Vec<f64> = outcomes.iter().map(FoldOutcome::accuracy).collect();
        let (mean, std) = mean_std(&per_fold_accuracy);
        let pos: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut confusion = vec![vec![0; classes.len()]; classes.len()];
        for o in outcomes {
            for (t, p) in &o.predictions {
                confusion[pos[t.as_str()]][pos[p.as_str()]] += 1;
            }
        }
        ExperimentReport {
            per_fold_counts: outcomes.iter().map(|o| (o.correct, o.total)).collect(),
            per_fold_accuracy,
            mean,
            std,
            config_echo: echo,
            classes,
            confusion,
        }
    }

    /// Recomputes mean and std from the fold accuracies and compares exactly.
    pub fn verify(&self) -> bool {
        let (mean, std) = mean_std(&self.per_fold_accuracy);
        mean.to_bits() == self.mean.to_bits() && std.to_bits() == self.std.to_bits()
    }

    /// Line-oriented text: `key=value` lines and tagged CSV records.
    pub fn render(&self) -> String {
        let mut out = String::from("# mmml experiment report\nformat=mmml-report/1\n");
        for (k, v) in &self.config_echo {
            let _ = writeln!(out, "config.{k}={v}");
        }
        out.push_str("fold,index,correct,total,accuracy\n");
        for (i, (acc, (c, t))) in self
            .per_fold_accuracy
            .iter()
            .zip(&self.per_fold_counts)
            .enumerate()
        {
            let _ = writeln!(out, "fold,{i},{c},{t},{acc}");
        }
        let _ = writeln!(out, "summary.folds={}", self.per_fold_accuracy.len());
        let _ = writeln!(out, "summary.mean={}", self.mean);
        let _ = writeln!(out, "summary.std={}", self.std);
        let _ = writeln!(out, "confusion,true\\predicted,{}", self.classes.join(","));
        for (class, row) in self.classes.iter().zip(&self.confusion) {
            let counts: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "confusion,{class},{}", counts.join(","));
        }
        out
    }
}

/// Runs every fold on already-modeled sets.
pub fn run_experiment_modeled(
    modeled: &[ModeledSet],
    split: &SplitConfig,
    hyper: &Hyperparams,
) -> Result<ExperimentReport> {
    let labels: Vec<&str> = modeled.iter().map(|m| m.label.as_str()).collect();
    check_split(&labels, split)?;
    let outcomes = (0..split.folds)
        .into_par_iter()
        .map(|fold| run_fold(modeled, &labels, split, hyper, fold).map_err(|e| e.in_fold(fold)))
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<String> = class_index(&labels).into_keys().collect();
    Ok(ExperimentReport::from_folds(
        &outcomes,
        classes,
        config_echo(split, hyper),
    ))
}

/// Models the sets, then evaluates the random gallery/probe protocol.
pub fn run_experiment(
    data: &[ImageSet],
    split: &SplitConfig,
    hyper: &Hyperparams,
) -> Result<ExperimentReport> {
    let labels: Vec<&str> = data.iter().map(ImageSet::label).collect();
    check_split(&labels, split)?;
    let modeled = model_sets(data, hyper.q, hyper.alpha)?;
    run_experiment_modeled(&modeled, split, hyper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Vary `u2` with `u1` held at its configured value.
    U2GivenU1,
    /// Vary `u1` with `u2` held at its configured value.
    U1GivenU2,
    DZ,
    Q,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::U2GivenU1 => "u2_given_u1",
            SweepAxis::U1GivenU2 => "u1_given_u2",
            SweepAxis::DZ => "d_z",
            SweepAxis::Q => "q",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = MmmlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u2_given_u1" | "u2" => Ok(SweepAxis::U2GivenU1),
            "u1_given_u2" | "u1" => Ok(SweepAxis::U1GivenU2),
            "d_z" | "dz" => Ok(SweepAxis::DZ),
            "q" => Ok(SweepAxis::Q),
            _ => Err(MmmlError::Config(format!(
                "unknown sweep axis '{s}' (expected u2_given_u1, u1_given_u2, d_z or q)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn render(&self) -> String {
        let mut out = format!("# mmml sweep\naxis={}\nvalue,mean,std\n", self.axis.name());
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.value, r.mean, r.std);
        }
        out
    }
}

fn as_count(axis: SweepAxis, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value <= usize::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(MmmlError::Config(format!(
            "{} grid values must be positive integers, got {value}",
            axis.name()
        )))
    }
}

/// One experiment per grid value, all sharing the split's fold seeds.
pub fn sweep(
    data: &[ImageSet],
    split: &SplitConfig,
    hyper: &Hyperparams,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(MmmlError::Config("sweep grid is empty".into()));
    }
    let modeled = if axis == SweepAxis::Q {
        None
    } else {
        Some(model_sets(data, hyper.q, hyper.alpha)?)
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut h = *hyper;
        match axis {
            SweepAxis::U2GivenU1 => h.u2 = value,
            SweepAxis::U1GivenU2 => h.u1 = value,
            SweepAxis::DZ => h.d_z = as_count(axis, value)?,
            SweepAxis::Q => h.q = as_count(axis, value)?,
        }
        let report = match &modeled {
            Some(m) => run_experiment_modeled(m, split, &h)?,
            None => run_experiment(data, split, &h)?,
        };
        rows.push(SweepRow {
            value,
            mean: report.mean,
            std: report.std,
        });
    }
    Ok(SweepTable { axis, rows })
}
