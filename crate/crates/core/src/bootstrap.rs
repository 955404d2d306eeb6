//! Replicate-based variance estimation that can be released with sample A.
//!
//! Replicate `k` pairs a set of rescaled design weights for A with a refit of
//! the mean model on a with-replacement resample of B; the replicate
//! imputations `m(x_i; beta^(k))` sit next to the weights so that
//!
//! ```text
//! theta^(k) = N^-1 sum_{i in A} w_i^(k) yhat_i^(k),   V_b = L^-1 sum_k (theta^(k) - theta)^2
//! ```
//!
//! can be computed from the augmented A file alone. Weights follow the Rao-Wu
//! rescaling bootstrap with `n_A - 1` draws per replicate. Every replicate's
//! random stream is addressed by `(seed, purpose, k)`, so results do not depend
//! on how replicates are scheduled across threads.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Design, DesignMatrix, DesignSpec, SurveySample};
use crate::error::{Error, Result};
use crate::model::{fit_counts, means_at, predict_all, FittedModel, ModelFamily, SolverConfig};
use crate::rng::{purpose, SeedTree};

/// Redraws allowed per replicate when the refit fails.
pub const MAX_REFIT_ATTEMPTS: usize = 10;

/// Replicate weights and imputations for sample A.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    /// `n_A x L`; column `k` holds `w_i^(k)`.
    pub replicate_weights: DMatrix<f64>,
    /// `n_A x L`; column `k` holds `m(x_i; beta^(k))`.
    pub replicate_imputations: DMatrix<f64>,
    pub base_imputations: Vec<f64>,
    pub replicate_betas: Vec<Vec<f64>>,
    pub master_seed: u64,
}

impl ReplicateSet {
    /// A set with `L = 0`, for writing imputations alone.
    pub fn without_replicates(base_imputations: Vec<f64>) -> Self {
        let n = base_imputations.len();
        ReplicateSet {
            replicate_weights: DMatrix::zeros(n, 0),
            replicate_imputations: DMatrix::zeros(n, 0),
            base_imputations,
            replicate_betas: Vec::new(),
            master_seed: 0,
        }
    }

    pub fn replicates(&self) -> usize {
        self.replicate_weights.ncols()
    }

    /// `theta^(k) = N^-1 sum_A w_i^(k) yhat_i^(k)` for every replicate.
    pub fn replicate_estimates(&self, population_size: f64) -> Vec<f64> {
        replicate_estimates(&self.replicate_weights, &self.replicate_imputations, population_size)
    }
}

fn replicate_estimates(weights: &DMatrix<f64>, imputations: &DMatrix<f64>, population_size: f64) -> Vec<f64> {
    weights
        .column_iter()
        .zip(imputations.column_iter())
        .map(|(w, y)| w.dot(&y) / population_size)
        .collect()
}

fn check_replicates(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::InvalidArgument("number of replicates must be at least 1".into()));
    }
    Ok(())
}

/// Rao-Wu rescaled weights for a single replicate:
/// `w_i^(k) = w_i * n/(n-1) * m_i`, with `m_i` the count of unit `i` among
/// `n - 1` draws with replacement.
fn rao_wu_column<R: Rng>(weights: &[f64], rng: &mut R) -> Vec<f64> {
    let n = weights.len();
    let mut counts = vec![0u32; n];
    for _ in 0..n - 1 {
        counts[rng.random_range(0..n)] += 1;
    }
    let scale = n as f64 / (n as f64 - 1.0);
    weights
        .iter()
        .zip(&counts)
        .map(|(w, c)| w * scale * f64::from(*c))
        .collect()
}

/// Replicate weights for sample A, `n_A x L`.
pub fn replicate_weights(sample_a: &SurveySample, design: &DesignSpec, l: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_replicates(l)?;
    let w = sample_a.require_weights()?;
    match design.design {
        Design::SrsWithoutReplacement { .. } | Design::PpsWithReplacement => {}
        Design::JointProbabilities(_) => {
            return Err(Error::UnsupportedDesign(
                "replicate weights are available for SRS and PPS-with-replacement designs".into(),
            ))
        }
    }
    let n = w.len();
    if n < 2 {
        return Err(Error::UnsupportedDesign("rescaling bootstrap needs n_A >= 2".into()));
    }
    let root = SeedTree::new(seed).child(purpose::REPLICATE_WEIGHTS);
    let columns: Vec<Vec<f64>> = (0..l)
        .into_par_iter()
        .map(|k| rao_wu_column(w, &mut root.child(k as u64).rng()))
        .collect();
    Ok(DMatrix::from_fn(n, l, |i, k| columns[k][i]))
}

fn refit_one(
    family: ModelFamily,
    y: &[f64],
    design_b: &DesignMatrix,
    config: &SolverConfig,
    tree: SeedTree,
    k: usize,
) -> Result<DVector<f64>> {
    let n = y.len();
    let mut last = None;
    for attempt in 0..MAX_REFIT_ATTEMPTS {
        let mut rng = tree.child(k as u64).child(attempt as u64).rng();
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        match fit_counts(family, y, design_b, &counts, config) {
            Ok(beta) => return Ok(beta),
            Err(
                e @ (Error::RankDeficient { .. }
                | Error::Separation { .. }
                | Error::NoConvergence { .. }
                | Error::SingularSystem),
            ) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::BootstrapFailed {
        replicate: k + 1,
        attempts: MAX_REFIT_ATTEMPTS,
        last: Box::new(last.expect("at least one attempt")),
    })
}

/// `beta^(k)` from `L` with-replacement resamples of B of size `n_B`.
pub fn bootstrap_refit(
    family: ModelFamily,
    sample_b: &SurveySample,
    design_b: &DesignMatrix,
    config: &SolverConfig,
    l: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_replicates(l)?;
    let y = sample_b.require_response()?;
    if y.len() != design_b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design_b.nrows(),
            found: y.len(),
        });
    }
    let tree = SeedTree::new(seed).child(purpose::REPLICATE_REFIT);
    (0..l)
        .into_par_iter()
        .map(|k| refit_one(family, y, design_b, config, tree, k).map(|b| b.iter().copied().collect()))
        .collect()
}

/// Full replicate set: weights, refits and the paired imputations.
#[allow(clippy::too_many_arguments)]
pub fn build_replicates(
    model: &FittedModel,
    sample_a: &SurveySample,
    design_a: &DesignMatrix,
    sample_b: &SurveySample,
    design_b: &DesignMatrix,
    design: &DesignSpec,
    config: &SolverConfig,
    l: usize,
    seed: u64,
) -> Result<ReplicateSet> {
    check_replicates(l)?;
    let base_imputations = predict_all(model, design_a)?;
    // Column checks on B happen through the model.
    model.means(design_b)?;
    let replicate_weights = replicate_weights(sample_a, design, l, seed)?;
    let replicate_betas = bootstrap_refit(model.family, sample_b, design_b, config, l, seed)?;
    let n_a = design_a.nrows();
    let mut replicate_imputations = DMatrix::<f64>::zeros(n_a, l);
    for (k, beta) in replicate_betas.iter().enumerate() {
        let yhat = means_at(model.family, design_a.values(), &DVector::from_column_slice(beta));
        replicate_imputations.set_column(k, &DVector::from_vec(yhat));
    }
    Ok(ReplicateSet {
        replicate_weights,
        replicate_imputations,
        base_imputations,
        replicate_betas,
        master_seed: seed,
    })
}

/// `L^-1 sum_k (theta^(k) - theta_hat)^2`, centred at the full-sample estimate.
pub fn bootstrap_variance(theta_hat: f64, replicate_estimates: &[f64]) -> Result<f64> {
    if replicate_estimates.is_empty() {
        return Err(Error::InvalidArgument("no replicate estimates".into()));
    }
    let ss: f64 = replicate_estimates.iter().map(|t| (t - theta_hat).powi(2)).sum();
    Ok(ss / replicate_estimates.len() as f64)
}

pub const YHAT_COLUMN: &str = "yhat";

pub fn replicate_weight_column(k: usize) -> String {
    format!("w_rep_{k}")
}

pub fn replicate_yhat_column(k: usize) -> String {
    format!("yhat_rep_{k}")
}

/// Sidecar manifest of an augmented release file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedManifest {
    pub tool_version: String,
    pub replicates: usize,
    pub seed: u64,
    pub family: ModelFamily,
    pub covariate_names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub weight_column: String,
    pub population_size: Option<f64>,
    pub n_a: usize,
    pub replicate_method: String,
}

impl AugmentedManifest {
    pub fn new(model: &FittedModel, sample_a: &SurveySample, set: &ReplicateSet, population_size: Option<f64>) -> Self {
        AugmentedManifest {
            tool_version: crate::VERSION.to_owned(),
            replicates: set.replicates(),
            seed: set.master_seed,
            family: model.family,
            covariate_names: model.covariate_names.clone(),
            beta_hat: model.beta_hat.clone(),
            weight_column: sample_a.weight_name().unwrap_or("w").to_owned(),
            population_size,
            n_a: sample_a.len(),
            replicate_method: "rao-wu rescaling, n_A - 1 draws; sample B resampled with replacement".into(),
        }
    }
}

/// `<file>.manifest.json` next to the data file.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Write sample A's columns, `yhat`, then `(w_rep_k, yhat_rep_k)` for
/// `k = 1..L`, plus the JSON manifest next to it.
pub fn write_augmented_dataset<M: Serialize>(
    sample_a: &SurveySample,
    set: &ReplicateSet,
    manifest: &M,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let n = sample_a.len();
    if set.base_imputations.len() != n || set.replicate_weights.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: set.base_imputations.len(),
        });
    }
    let l = set.replicates();
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = sample_a.column_names();
    header.push(YHAT_COLUMN.to_owned());
    for k in 1..=l {
        header.push(replicate_weight_column(k));
        header.push(replicate_yhat_column(k));
    }
    wtr.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..n {
        record.clear();
        record.extend(sample_a.row_values(i).iter().map(f64::to_string));
        record.push(set.base_imputations[i].to_string());
        for k in 0..l {
            record.push(set.replicate_weights[(i, k)].to_string());
            record.push(set.replicate_imputations[(i, k)].to_string());
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    write_json(manifest, manifest_path(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<M: Serialize>(value: &M, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Read the sidecar manifest of an augmented file.
pub fn read_manifest<M: DeserializeOwned>(data_path: impl AsRef<Path>) -> Result<M> {
    let file = File::open(manifest_path(data_path.as_ref()))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// The columns of an augmented file needed to recompute the estimate and its
/// bootstrap variance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedData {
    pub weights: Vec<f64>,
    pub yhat: Vec<f64>,
    pub replicate_weights: DMatrix<f64>,
    pub replicate_imputations: DMatrix<f64>,
}

impl AugmentedData {
    pub fn replicates(&self) -> usize {
        self.replicate_weights.ncols()
    }

    /// Weight total, the population size used when none is given.
    pub fn estimated_population_size(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn theta_hat(&self, population_size: f64) -> f64 {
        self.weights.iter().zip(&self.yhat).map(|(w, y)| w * y).sum::<f64>() / population_size
    }

    pub fn replicate_estimates(&self, population_size: f64) -> Vec<f64> {
        replicate_estimates(&self.replicate_weights, &self.replicate_imputations, population_size)
    }

    pub fn bootstrap_variance(&self, population_size: f64) -> Result<f64> {
        bootstrap_variance(
            self.theta_hat(population_size),
            &self.replicate_estimates(population_size),
        )
    }
}

/// Read the weight, `yhat` and replicate columns of an augmented file. A file
/// with no replicate columns is accepted (`L = 0`).
pub fn read_augmented_dataset(path: impl AsRef<Path>, weight_column: &str) -> Result<AugmentedData> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let w_idx = col(weight_column)?;
    let y_idx = col(YHAT_COLUMN)?;
    let mut rep_idx = Vec::new();
    for k in 1.. {
        match (col(&replicate_weight_column(k)), col(&replicate_yhat_column(k))) {
            (Ok(a), Ok(b)) => rep_idx.push((a, b)),
            (Err(_), Err(_)) => break,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    let parse = |rec: &csv::StringRecord, idx: usize, row: usize| -> Result<f64> {
        let raw = rec.get(idx).unwrap_or("");
        raw.trim().parse::<f64>().map_err(|_| Error::NonNumericValue {
            column: headers[idx].to_owned(),
            row,
            value: raw.to_owned(),
        })
    };
    let mut weights = Vec::new();
    let mut yhat = Vec::new();
    let mut reps: Vec<f64> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        weights.push(parse(&rec, w_idx, i + 1)?);
        yhat.push(parse(&rec, y_idx, i + 1)?);
        for &(a, b) in &rep_idx {
            reps.push(parse(&rec, a, i + 1)?);
            reps.push(parse(&rec, b, i + 1)?);
        }
    }
    if weights.is_empty() {
        return Err(Error::EmptyFile);
    }
    let (n, l) = (weights.len(), rep_idx.len());
    let replicate_weights = DMatrix::from_fn(n, l, |i, k| reps[i * 2 * l + 2 * k]);
    let replicate_imputations = DMatrix::from_fn(n, l, |i, k| reps[i * 2 * l + 2 * k + 1]);
    Ok(AugmentedData {
        weights,
        yhat,
        replicate_weights,
        replicate_imputations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_design_matrix;
    use crate::model::fit_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn a_sample(n: usize, w: f64) -> SurveySample {
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64 * 0.37).sin() * 3.0);
        SurveySample::probability(vec!["x".into()], x, "w", vec![w; n]).unwrap()
    }

    #[test]
    fn single_unit_is_unsupported() {
        let a = SurveySample::probability(vec![], DMatrix::zeros(1, 0), "w", vec![5.0]).unwrap();
        assert!(matches!(
            replicate_weights(&a, &DesignSpec::srs(5), 10, 1),
            Err(Error::UnsupportedDesign(_))
        ));
        assert!(matches!(
            replicate_weights(&a_sample(4, 2.0), &DesignSpec::srs(8), 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn weights_nonnegative_with_positive_totals() {
        let w = replicate_weights(&a_sample(30, 7.0), &DesignSpec::ppswr(), 200, 3).unwrap();
        assert!(w.iter().all(|v| *v >= 0.0));
        assert!(w.column_iter().all(|c| c.sum() > 0.0));
    }

    // E[m_i] = (n-1)/n, so each unit's replicate weight averages to w_i.
    #[test]
    fn replicate_weights_average_to_design_weights() {
        let n = 12;
        let a =
            SurveySample::probability(vec![], DMatrix::zeros(n, 0), "w", (1..=n).map(|i| i as f64).collect()).unwrap();
        let l = 5000;
        let w = replicate_weights(&a, &DesignSpec::ppswr(), l, 99).unwrap();
        let nf = n as f64;
        for i in 0..n {
            let wi = (i + 1) as f64;
            let row = w.row(i);
            let mean = row.sum() / l as f64;
            // m_i ~ Binomial(n-1, 1/n).
            let sd = wi * nf / (nf - 1.0) * ((nf - 1.0) * (1.0 / nf) * (1.0 - 1.0 / nf)).sqrt();
            let se = sd / (l as f64).sqrt();
            assert!((mean - wi).abs() <= 3.0 * se, "unit {i}: {mean} vs {wi} (se {se})");
        }
    }

    // Bootstrap of an HT mean under equal weights approximates s^2 / n.
    #[test]
    fn equal_weight_bootstrap_matches_mean_variance() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let big_n = 1_000_000.0;
        let a = SurveySample::probability(vec![], DMatrix::zeros(n, 0), "w", vec![big_n / n as f64; n]).unwrap();
        let l = 4000;
        let w = replicate_weights(&a, &DesignSpec::srs(1_000_000), l, 12).unwrap();
        let yv = DVector::from_column_slice(&y);
        let theta = y.iter().sum::<f64>() / n as f64;
        let reps: Vec<f64> = w.column_iter().map(|c| c.dot(&yv) / big_n).collect();
        let vb = bootstrap_variance(theta, &reps).unwrap();
        let s2 = y.iter().map(|v| (v - theta).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let target = s2 / n as f64;
        assert!((vb / target - 1.0).abs() < 0.10, "{vb} vs {target}");
    }

    #[test]
    fn bootstrap_variance_examples() {
        assert_eq!(bootstrap_variance(2.0, &[2.0, 2.0]).unwrap(), 0.0);
        assert!((bootstrap_variance(2.0, &[1.0, 2.0, 3.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(bootstrap_variance(1.0, &[]).is_err());
    }

    #[test]
    fn identical_rows_give_identical_refits() {
        let n = 10;
        let b = SurveySample::nonprobability(vec![], DMatrix::zeros(n, 0), "y", vec![3.25; n]).unwrap();
        let db = crate::data::full_design_matrix(&b, true).unwrap();
        let fit = fit_model(ModelFamily::Linear, &b, &db, &SolverConfig::default()).unwrap();
        let betas = bootstrap_refit(ModelFamily::Linear, &b, &db, &SolverConfig::default(), 20, 8).unwrap();
        for beta in betas {
            assert!((beta[0] - fit.beta_hat[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn refits_are_seed_deterministic() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.0..3.0));
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v + rng.random_range(-0.5..0.5)).collect();
        let b = SurveySample::nonprobability(vec!["x".into()], x, "y", y).unwrap();
        let db = build_design_matrix(&b, &["x"], true).unwrap();
        let cfg = SolverConfig::default();
        let one = bootstrap_refit(ModelFamily::Linear, &b, &db, &cfg, 25, 77).unwrap();
        let two = bootstrap_refit(ModelFamily::Linear, &b, &db, &cfg, 25, 77).unwrap();
        assert_eq!(one, two);
        let other = bootstrap_refit(ModelFamily::Linear, &b, &db, &cfg, 25, 78).unwrap();
        assert_ne!(one, other);
    }

    #[test]
    fn exhausted_retries_report_failure() {
        // All-zero responses: every resample is separated.
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let b = SurveySample::nonprobability(vec!["x".into()], x, "y", vec![0.0; 4]).unwrap();
        let db = build_design_matrix(&b, &["x"], true).unwrap();
        let res = bootstrap_refit(ModelFamily::Logistic, &b, &db, &SolverConfig::default(), 3, 5);
        assert!(
            matches!(
                res,
                Err(Error::BootstrapFailed {
                    attempts: MAX_REFIT_ATTEMPTS,
                    ..
                })
            ),
            "{res:?}"
        );
    }
}
