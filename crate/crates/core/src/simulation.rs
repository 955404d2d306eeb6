//! Monte Carlo harness: a fixed finite population, repeated SRS draws of A
//! and stratified draws of B, and summaries of the point and variance
//! estimators across reps.
//!
//! Populations have `x ~ N(2, 1)` and `e ~ N(0, 1)` and one of
//!
//! ```text
//! I:   y = 1 + 2x + e
//! II:  y = 3 + x + 2e
//! III: y = 2.5 + 0.5 x^2 + e
//! ```
//!
//! Sample B takes 70% of its units from `x <= 2` and the rest from `x > 2`,
//! which makes its unweighted mean biased for the population mean. The mean
//! model is always linear in `(1, x)`, so Model III is misspecified.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) driven
//! by ChaCha8 streams addressed through [`SeedTree`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_variance, build_replicates};
use crate::data::{build_design_matrix, DesignSpec, SurveySample};
use crate::error::{Error, Result};
use crate::estimators::{fit_propensity, ht_mean, ipw_estimate, mass_imputation_estimate, propensity_solver};
use crate::model::{fit_model, ModelFamily, SolverConfig};
use crate::rng::{purpose, SeedTree};
use crate::variance::linearized_variance;

/// Stratum boundary for sample B: stratum 1 is `x <= 2`.
pub const STRATUM_CUT: f64 = 2.0;
/// Share of sample B drawn from stratum 1.
pub const STRATUM_ONE_SHARE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PopulationModel {
    I,
    II,
    III,
}

impl PopulationModel {
    pub fn response(self, x: f64, e: f64) -> f64 {
        match self {
            PopulationModel::I => 1.0 + 2.0 * x + e,
            PopulationModel::II => 3.0 + x + 2.0 * e,
            PopulationModel::III => 2.5 + 0.5 * x * x + e,
        }
    }
}

impl fmt::Display for PopulationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PopulationModel::I => "I",
            PopulationModel::II => "II",
            PopulationModel::III => "III",
        })
    }
}

impl FromStr for PopulationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "1" => Ok(PopulationModel::I),
            "II" | "ii" | "2" => Ok(PopulationModel::II),
            "III" | "iii" | "3" => Ok(PopulationModel::III),
            other => Err(Error::InvalidArgument(format!("unknown population model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub model: PopulationModel,
    pub population_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub model: PopulationModel,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.len() as f64
    }

    fn covariates(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_iterator(rows.len(), 1, rows.iter().map(|&i| self.x[i]))
    }

    fn responses(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.y[i]).collect()
    }
}

pub fn generate_population(spec: &PopulationSpec) -> Population {
    let mut rng = SeedTree::new(spec.seed).child(purpose::POPULATION).rng();
    let n = spec.population_size;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = 2.0 + rng.sample::<f64, _>(StandardNormal);
        let ei: f64 = rng.sample(StandardNormal);
        x.push(xi);
        y.push(spec.model.response(xi, ei));
    }
    Population {
        model: spec.model,
        x,
        y,
    }
}

/// Sorted indices of a uniform without-replacement draw of `n` from `0..len`.
fn srs_indices<R: Rng>(rng: &mut R, len: usize, n: usize) -> Vec<usize> {
    let mut rows = index::sample(rng, len, n).into_vec();
    rows.sort_unstable();
    rows
}

/// Simple random sample without replacement with weights `N/n`. The
/// response is attached so the sample also yields the gold-standard mean.
pub fn draw_srs(population: &Population, n: usize, seed: u64) -> Result<SurveySample> {
    let big_n = population.len();
    if n > big_n {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: big_n,
        });
    }
    let rows = srs_indices(&mut SeedTree::new(seed).rng(), big_n, n);
    let w = big_n as f64 / n as f64;
    SurveySample::probability(vec!["x".into()], population.covariates(&rows), "w", vec![w; n])?
        .with_response("y", population.responses(&rows))
}

/// `(n_1, n_2)` with `n_1 = round_half_even(0.7 n_B)`.
pub fn stratum_sizes(n_b: usize) -> (usize, usize) {
    let n1 = (STRATUM_ONE_SHARE * n_b as f64).round_ties_even() as usize;
    (n1, n_b - n1)
}

/// Row indices of both strata, computed once per population.
#[derive(Debug, Clone)]
pub struct Strata {
    lower: Vec<usize>,
    upper: Vec<usize>,
}

impl Strata {
    pub fn new(population: &Population) -> Self {
        let (lower, upper): (Vec<usize>, Vec<usize>) =
            (0..population.len()).partition(|&i| population.x[i] <= STRATUM_CUT);
        Strata { lower, upper }
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.lower.len(), self.upper.len())
    }
}

fn draw_stratified_rows(strata: &Strata, n_b: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let (n1, n2) = stratum_sizes(n_b);
    let mut rng = SeedTree::new(seed).rng();
    let mut pick = |pool: &[usize], k: usize, stratum: usize| -> Result<Vec<usize>> {
        if k > pool.len() {
            return Err(Error::StratumExhausted {
                stratum,
                requested: k,
                available: pool.len(),
            });
        }
        Ok(srs_indices(&mut rng, pool.len(), k)
            .into_iter()
            .map(|j| pool[j])
            .collect())
    };
    let first = pick(&strata.lower, n1, 1)?;
    let second = pick(&strata.upper, n2, 2)?;
    Ok((first, second))
}

/// Stratified draw of sample B; stratum labels are not kept.
pub fn draw_stratified_b(population: &Population, n_b: usize, seed: u64) -> Result<SurveySample> {
    draw_stratified_b_with(population, &Strata::new(population), n_b, seed)
}

pub fn draw_stratified_b_with(population: &Population, strata: &Strata, n_b: usize, seed: u64) -> Result<SurveySample> {
    let (first, second) = draw_stratified_rows(strata, n_b, seed)?;
    let mut rows = first;
    rows.extend(second);
    rows.sort_unstable();
    SurveySample::nonprobability(
        vec!["x".into()],
        population.covariates(&rows),
        "y",
        population.responses(&rows),
    )
}

fn default_population_size() -> usize {
    100_000
}
fn default_n_a() -> usize {
    500
}
fn default_reps() -> usize {
    1000
}
fn default_bootstrap_l() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: PopulationModel,
    #[serde(default = "default_population_size")]
    pub population_size: usize,
    #[serde(default = "default_n_a")]
    pub n_a: usize,
    pub n_b: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Bootstrap replicates per rep; 0 skips the bootstrap.
    #[serde(default = "default_bootstrap_l")]
    pub bootstrap_l: usize,
    pub master_seed: u64,
}

impl SimConfig {
    pub fn new(model: PopulationModel, n_b: usize, master_seed: u64) -> Self {
        SimConfig {
            model,
            population_size: default_population_size(),
            n_a: default_n_a(),
            n_b,
            reps: default_reps(),
            bootstrap_l: default_bootstrap_l(),
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n_a < 2 || self.n_b < 2 {
            return Err(Error::InvalidArgument("n_a and n_b must be at least 2".into()));
        }
        if self.n_a + self.n_b > self.population_size {
            return Err(Error::SampleTooLarge {
                requested: self.n_a + self.n_b,
                available: self.population_size,
            });
        }
        Ok(())
    }
}

/// Estimates from one rep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_i: f64,
    pub theta_ipw: f64,
    pub v_a: f64,
    pub v_b: f64,
    pub v_lin: f64,
    /// `NaN` when the bootstrap is disabled.
    pub v_boot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub mean: f64,
    pub bias: f64,
    pub mc_variance: f64,
    pub mse: f64,
    /// `100 * MSE / MSE(theta_A)`.
    pub remse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummaries {
    pub theta_a: EstimatorSummary,
    pub theta_b: EstimatorSummary,
    pub theta_i: EstimatorSummary,
    pub theta_ipw: EstimatorSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub mean: f64,
    /// `mean(V) / MC variance of theta_I - 1`.
    pub relative_bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummaries {
    pub linearization: VarianceSummary,
    pub mean_v_a: f64,
    pub mean_v_b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<VarianceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub tool_version: String,
    pub config: SimConfig,
    pub population_mean: f64,
    pub reps_completed: usize,
    pub failures: Vec<RepFailure>,
    pub estimators: EstimatorSummaries,
    pub variance: VarianceSummaries,
}

fn rep_tree(master_seed: u64, rep: usize) -> SeedTree {
    SeedTree::new(master_seed).child(purpose::REP).child(rep as u64)
}

/// All estimators for one rep.
pub fn run_rep(config: &SimConfig, population: &Population, strata: &Strata, rep: usize) -> Result<RepRecord> {
    let tree = rep_tree(config.master_seed, rep);
    let big_n = population.len();
    let nf = big_n as f64;
    let sample_a = draw_srs(population, config.n_a, tree.child(purpose::SAMPLE_A).seed())?;
    let sample_b = draw_stratified_b_with(population, strata, config.n_b, tree.child(purpose::SAMPLE_B).seed())?;
    let design = DesignSpec::srs(big_n);
    let design_a = build_design_matrix(&sample_a, &["x"], true)?;
    let design_b = build_design_matrix(&sample_b, &["x"], true)?;

    let theta_a = ht_mean(sample_a.require_response()?, sample_a.require_weights()?, nf)?;
    let y_b = sample_b.require_response()?;
    let theta_b = y_b.iter().sum::<f64>() / y_b.len() as f64;

    let solver = SolverConfig::default();
    let model = fit_model(ModelFamily::Linear, &sample_b, &design_b, &solver)?;
    let theta_i = mass_imputation_estimate(&model, &sample_a, &design_a, Some(nf))?.theta_hat;
    let lin = linearized_variance(
        &model,
        &sample_a,
        &design_a,
        &sample_b,
        &design_b,
        &design,
        None,
        Some(nf),
    )?;

    let propensity = fit_propensity(&sample_a, &design_a, &design_b, &propensity_solver())?;
    let theta_ipw = ipw_estimate(&propensity, &sample_b, &design_b, nf)?.theta_hat;

    let v_boot = if config.bootstrap_l > 0 {
        let set = build_replicates(
            &model,
            &sample_a,
            &design_a,
            &sample_b,
            &design_b,
            &design,
            &solver,
            config.bootstrap_l,
            tree.child(purpose::BOOTSTRAP).seed(),
        )?;
        bootstrap_variance(theta_i, &set.replicate_estimates(nf))?
    } else {
        f64::NAN
    };

    Ok(RepRecord {
        rep,
        theta_a,
        theta_b,
        theta_i,
        theta_ipw,
        v_a: lin.v_a,
        v_b: lin.v_b,
        v_lin: lin.v_total,
        v_boot,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(values: &[f64], truth: f64, mse_a: f64) -> EstimatorSummary {
    let m = mean(values);
    let r = values.len() as f64;
    let mc_variance = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / r;
    let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / r;
    EstimatorSummary {
        mean: m,
        bias: m - truth,
        mc_variance,
        mse,
        remse: 100.0 * mse / mse_a,
    }
}

/// Aggregate per-rep records (in rep order) into a report.
pub fn summarize_reps(
    config: &SimConfig,
    population_mean: f64,
    records: &[RepRecord],
    failures: Vec<RepFailure>,
) -> Result<SimReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("every Monte Carlo rep failed".into()));
    }
    let col = |f: fn(&RepRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let theta_a = col(|r| r.theta_a);
    let mse_a = theta_a.iter().map(|v| (v - population_mean).powi(2)).sum::<f64>() / theta_a.len() as f64;
    let theta_i = summarize(&col(|r| r.theta_i), population_mean, mse_a);
    let variance_summary = |values: Vec<f64>| {
        let m = mean(&values);
        VarianceSummary {
            mean: m,
            relative_bias: m / theta_i.mc_variance - 1.0,
        }
    };
    Ok(SimReport {
        tool_version: crate::VERSION.to_owned(),
        config: config.clone(),
        population_mean,
        reps_completed: records.len(),
        failures,
        estimators: EstimatorSummaries {
            theta_a: summarize(&theta_a, population_mean, mse_a),
            theta_b: summarize(&col(|r| r.theta_b), population_mean, mse_a),
            theta_i,
            theta_ipw: summarize(&col(|r| r.theta_ipw), population_mean, mse_a),
        },
        variance: VarianceSummaries {
            linearization: variance_summary(col(|r| r.v_lin)),
            mean_v_a: mean(&col(|r| r.v_a)),
            mean_v_b: mean(&col(|r| r.v_b)),
            bootstrap: (config.bootstrap_l > 0).then(|| variance_summary(col(|r| r.v_boot))),
        },
    })
}

/// Report plus the per-rep records it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub report: SimReport,
    pub records: Vec<RepRecord>,
}

/// Run the study on the current rayon pool. Reps are computed in parallel and
/// reduced in rep order, so the output does not depend on the pool size.
pub fn run_monte_carlo_detailed(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let population = generate_population(&PopulationSpec {
        model: config.model,
        population_size: config.population_size,
        seed: config.master_seed,
    });
    let strata = Strata::new(&population);
    let outcomes: Vec<Result<RepRecord>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, &population, &strata, rep))
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => records.push(r),
            // Configuration-level problems are not per-rep failures.
            Err(e @ (Error::StratumExhausted { .. } | Error::SampleTooLarge { .. })) => return Err(e),
            Err(e) => failures.push(RepFailure {
                rep,
                error: e.code().to_owned(),
                message: e.to_string(),
            }),
        }
    }
    let report = summarize_reps(config, population.mean_y(), &records, failures)?;
    Ok(SimOutput { report, records })
}

/// Run the study on a dedicated pool of `threads` workers (`None` uses the
/// global pool).
pub fn run_monte_carlo(config: &SimConfig, threads: Option<usize>) -> Result<SimReport> {
    run_monte_carlo_with_threads(config, threads).map(|o| o.report)
}

pub fn run_monte_carlo_with_threads(config: &SimConfig, threads: Option<usize>) -> Result<SimOutput> {
    match threads {
        None => run_monte_carlo_detailed(config),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| run_monte_carlo_detailed(config))
        }
    }
}

/// Write per-rep records as CSV.
pub fn write_rep_records<W: std::io::Write>(records: &[RepRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
